use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{bind_params, build_graph, target_matrix, update_running_stats, Arch, Mode, ModelSpec, ParamSet};
use crate::preprocess::WindowSample;
use crate::tensor::{BatchStats, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub optimizer: OptimizerKind,
    /// Proximal coefficient; 0 disables the term.
    pub prox_mu: f64,
    /// Let the proximal term cover batch-norm affine parameters too.
    pub prox_include_bn: bool,
    pub bn_momentum: f64,
}

impl TrainConfig {
    pub fn for_arch(arch: Arch) -> Self {
        TrainConfig {
            learning_rate: arch.default_learning_rate(),
            batch_size: 32,
            local_epochs: arch.default_local_epochs(),
            optimizer: OptimizerKind::Adam,
            prox_mu: 0.0,
            prox_include_bn: false,
            bn_momentum: 0.1,
        }
    }

    pub fn validate(&self, problems: &mut Vec<String>) {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push("train.learning_rate must be positive".into());
        }
        if self.batch_size == 0 {
            problems.push("train.batch_size must be at least 1".into());
        }
        if !(self.prox_mu >= 0.0 && self.prox_mu.is_finite()) {
            problems.push("train.prox_mu must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            problems.push("train.bn_momentum must lie in [0, 1]".into());
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamSet,
    /// Mean MSE over the final epoch's mini-batches, proximal term excluded.
    pub loss: f64,
    pub steps: usize,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Train on the client's windows. With `prox_mu > 0` the objective gains
/// `(μ/2)‖w − anchor‖²` over the non-batch-norm trainable parameters.
pub fn local_train(
    spec: &ModelSpec,
    params: &ParamSet,
    train: &[WindowSample],
    cfg: &TrainConfig,
    anchor: Option<&ParamSet>,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut problems = Vec::new();
    cfg.validate(&mut problems);
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    if train.is_empty() {
        return Err(Error::Empty("no training windows".into()));
    }
    let anchor = match (cfg.prox_mu > 0.0, anchor) {
        (true, None) => return Err(Error::InvalidArgument("proximal term needs an anchor".into())),
        (true, Some(a)) => {
            params.check_compatible(a)?;
            Some(a)
        }
        (false, _) => None,
    };

    let mut params = params.clone();
    let trainable: Vec<usize> = (0..params.len()).filter(|&i| params.entries()[i].trainable).collect();
    let mut adam = Adam {
        m: trainable
            .iter()
            .map(|&i| vec![0.0; params.entries()[i].tensor.len()])
            .collect(),
        v: trainable
            .iter()
            .map(|&i| vec![0.0; params.entries()[i].tensor.len()])
            .collect(),
        t: 0,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut last_loss = f64::NAN;
    let mut steps = 0;
    for epoch in 0..cfg.local_epochs {
        let mut rng = crate::rng::substream(seed, "shuffle", &[epoch as u64]);
        order.shuffle(&mut rng);
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &train[i]).collect();
            let step = objective_step(spec, &params, &batch, cfg, anchor)?;
            if !step.mse.is_finite() || !step.objective.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epoch}, step {steps}"
                )));
            }
            apply_update(&mut params, &trainable, &step.grads, cfg, &mut adam);
            update_running_stats(&mut params, &step.stats, cfg.bn_momentum)?;
            if !params.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite parameters at epoch {epoch}, step {steps}"
                )));
            }
            total += step.mse * batch.len() as f64;
            count += batch.len();
            steps += 1;
        }
        last_loss = total / count as f64;
    }
    Ok(TrainOutcome {
        params,
        loss: last_loss,
        steps,
    })
}

struct Step {
    mse: f64,
    objective: f64,
    grads: Vec<Tensor>,
    stats: Vec<(String, BatchStats)>,
}

fn objective_step(
    spec: &ModelSpec,
    params: &ParamSet,
    batch: &[&WindowSample],
    cfg: &TrainConfig,
    anchor: Option<&ParamSet>,
) -> Result<Step> {
    let mut tape = Tape::new();
    let vars = bind_params(&mut tape, params);
    let out = build_graph(spec, &mut tape, params, &vars, batch, Mode::Train)?;
    let target = tape.constant(target_matrix(spec, batch)?);
    let mse = tape.mse(out.output, target)?;
    let mut objective = mse;
    if let (Some(anchor), true) = (anchor, cfg.prox_mu > 0.0) {
        if let Some(prox) = proximal_term(&mut tape, params, &vars, anchor, cfg)? {
            objective = tape.add(mse, prox)?;
        }
    }
    tape.backward(objective)?;
    let grads = vars
        .iter()
        .flatten()
        .map(|&v| tape.grad(v))
        .collect::<Result<Vec<_>>>()?;
    Ok(Step {
        mse: tape.value(mse).data()[0],
        objective: tape.value(objective).data()[0],
        grads,
        stats: out.stats,
    })
}

fn proximal_term(
    tape: &mut Tape,
    params: &ParamSet,
    vars: &[Option<Var>],
    anchor: &ParamSet,
    cfg: &TrainConfig,
) -> Result<Option<Var>> {
    let mut acc: Option<Var> = None;
    for ((entry, var), a) in params.iter().zip(vars).zip(anchor.iter()) {
        let Some(var) = *var else { continue };
        if entry.is_batchnorm && !cfg.prox_include_bn {
            continue;
        }
        let a = tape.constant(a.tensor.clone());
        let d = tape.sub(var, a)?;
        let sq = tape.mul(d, d)?;
        let s = tape.sum(sq);
        acc = Some(match acc {
            Some(prev) => tape.add(prev, s)?,
            None => s,
        });
    }
    Ok(acc.map(|s| tape.scale(s, cfg.prox_mu / 2.0)))
}

/// Objective value and gradients of the trainable entries, in order, on one
/// training-mode batch. Running statistics are not touched.
pub fn objective_gradients(
    spec: &ModelSpec,
    params: &ParamSet,
    batch: &[WindowSample],
    cfg: &TrainConfig,
    anchor: Option<&ParamSet>,
) -> Result<(f64, Vec<Tensor>)> {
    let refs: Vec<&WindowSample> = batch.iter().collect();
    let step = objective_step(spec, params, &refs, cfg, anchor)?;
    Ok((step.objective, step.grads))
}

fn apply_update(params: &mut ParamSet, trainable: &[usize], grads: &[Tensor], cfg: &TrainConfig, adam: &mut Adam) {
    let lr = cfg.learning_rate;
    adam.t += 1;
    let (c1, c2) = (1.0 - BETA1.powi(adam.t), 1.0 - BETA2.powi(adam.t));
    for (k, (&i, g)) in trainable.iter().zip(grads).enumerate() {
        let w = params.entries_mut()[i].tensor.data_mut();
        match cfg.optimizer {
            OptimizerKind::Sgd => {
                for (w, g) in w.iter_mut().zip(g.data()) {
                    *w -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let (m, v) = (&mut adam.m[k], &mut adam.v[k]);
                for j in 0..w.len() {
                    let gj = g.data()[j];
                    m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
                    v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
                    w[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

const EVAL_BATCH: usize = 256;

/// Eval-mode forecast for every window, in order.
pub fn forecast_windows(spec: &ModelSpec, params: &ParamSet, windows: &[WindowSample]) -> Result<Vec<Vec<f64>>> {
    if windows.is_empty() {
        return Err(Error::Empty("no windows to forecast".into()));
    }
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_BATCH) {
        let pred = super::forward(spec, params, chunk)?;
        out.extend(pred.data().chunks(spec.horizon).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// Forecast blocks stitched into one series.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    /// Trace index of `values[0]`.
    pub start: usize,
    pub values: Vec<f64>,
}

/// Stitch forecasts of windows spaced exactly `horizon` apart.
pub fn predict_trace(spec: &ModelSpec, params: &ParamSet, windows: &[WindowSample]) -> Result<Forecast> {
    if windows.windows(2).any(|w| w[1].anchor != w[0].anchor + spec.horizon) {
        return Err(Error::InvalidArgument(format!(
            "windows must advance by the horizon ({})",
            spec.horizon
        )));
    }
    let blocks = forecast_windows(spec, params, windows)?;
    Ok(Forecast {
        start: windows[0].anchor + 1,
        values: blocks.concat(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_model;
    use crate::preprocess::windows_from_columns;

    fn linear_windows(spec: &ModelSpec, n: usize) -> Vec<WindowSample> {
        let tput: Vec<f64> = (0..n).map(|i| 0.5 + 0.3 * (i as f64 * 0.3).sin()).collect();
        let feats: Vec<Vec<f64>> = (0..spec.num_features)
            .map(|f| tput.iter().map(|y| y * (f as f64 + 1.0)).collect())
            .collect();
        windows_from_columns(&feats, &tput, spec.history, spec.horizon, 1).unwrap()
    }

    #[test]
    fn proximal_gradient_vanishes_at_anchor() {
        let spec = ModelSpec::new(Arch::Cnn, 2, 4, 1);
        let p = init_model(&spec, 1).unwrap();
        let batch = linear_windows(&spec, 12);
        let plain = TrainConfig::for_arch(spec.arch);
        let prox = TrainConfig {
            prox_mu: 0.7,
            ..plain.clone()
        };
        let (l0, g0) = objective_gradients(&spec, &p, &batch, &plain, None).unwrap();
        let (l1, g1) = objective_gradients(&spec, &p, &batch, &prox, Some(&p)).unwrap();
        assert_eq!(l0, l1);
        assert_eq!(g0, g1);
    }

    #[test]
    fn prox_needs_anchor() {
        let spec = ModelSpec::new(Arch::Lstm, 1, 3, 1);
        let p = init_model(&spec, 1).unwrap();
        let cfg = TrainConfig {
            prox_mu: 1.0,
            ..TrainConfig::for_arch(spec.arch)
        };
        assert!(local_train(&spec, &p, &linear_windows(&spec, 10), &cfg, None, 0).is_err());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let spec = ModelSpec::new(Arch::Lstm, 1, 4, 1);
        let p = init_model(&spec, 2).unwrap();
        let data = linear_windows(&spec, 80);
        let mut cfg = TrainConfig::for_arch(spec.arch);
        cfg.learning_rate = 0.01;
        cfg.local_epochs = 1;
        let first = local_train(&spec, &p, &data, &cfg, None, 5).unwrap();
        let again = local_train(&spec, &p, &data, &cfg, None, 5).unwrap();
        assert_eq!(first.params, again.params);
        cfg.local_epochs = 15;
        let longer = local_train(&spec, &p, &data, &cfg, None, 5).unwrap();
        assert!(longer.loss < first.loss, "{} vs {}", longer.loss, first.loss);
    }

    #[test]
    fn running_stats_move_during_training() {
        let spec = ModelSpec::new(Arch::Transformer, 1, 3, 1);
        let p = init_model(&spec, 2).unwrap();
        let cfg = TrainConfig::for_arch(spec.arch);
        let out = local_train(&spec, &p, &linear_windows(&spec, 20), &cfg, None, 0).unwrap();
        let before = p.tensor("block0.bn.running_mean").unwrap();
        let after = out.params.tensor("block0.bn.running_mean").unwrap();
        assert_ne!(before, after);
    }

    #[test]
    fn predict_trace_tiles_blocks() {
        let spec = ModelSpec::new(Arch::Cnn, 1, 3, 3);
        let p = init_model(&spec, 0).unwrap();
        let tput: Vec<f64> = (0..30).map(f64::from).collect();
        let w = windows_from_columns(std::slice::from_ref(&tput), &tput, 3, 3, 3).unwrap();
        let f = predict_trace(&spec, &p, &w).unwrap();
        assert_eq!(f.start, 4);
        assert_eq!(f.values.len(), 3 * w.len());
        let dense = windows_from_columns(std::slice::from_ref(&tput), &tput, 3, 3, 1).unwrap();
        assert!(predict_trace(&spec, &p, &dense).is_err());
    }

    #[test]
    fn twenty_anchor_alignment() {
        let spec = ModelSpec::new(Arch::Lstm, 1, 3, 1);
        let p = init_model(&spec, 0).unwrap();
        let tput: Vec<f64> = (0..24).map(f64::from).collect();
        let w = windows_from_columns(std::slice::from_ref(&tput), &tput, 3, 1, 1).unwrap();
        assert_eq!(w.len(), 20);
        let f = predict_trace(&spec, &p, &w).unwrap();
        assert_eq!(f.values.len(), 20);
        assert_eq!(f.start, 4);
    }
}
