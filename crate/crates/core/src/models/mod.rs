//! The four throughput forecasters: a 2-D CNN, a stacked LSTM, an LSTM
//! followed by a temporal convolution, and a small Transformer encoder.
//!
//! Every model reads a window as `history + 1` tokens of `num_features + 1`
//! values (the network features followed by throughput) and emits `horizon`
//! forecasts. Each architecture owns at least one batch-norm layer; its
//! parameters and running statistics are tagged so that federated strategies
//! can treat them separately.

mod cnn;
mod hybrid;
mod lstm;
mod params;
mod train;
mod transformer;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::preprocess::WindowSample;
use crate::tensor::{BatchStats, Tape, Tensor, Var};
use crate::{Error, Result};

pub use params::{ParamEntry, ParamSet};
pub use train::{
    forecast_windows, local_train, objective_gradients, predict_trace, Forecast, OptimizerKind, TrainConfig,
    TrainOutcome,
};
pub use transformer::positional_encoding;

pub const BN_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Cnn,
    Lstm,
    LstmCnn,
    Transformer,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Cnn, Arch::Lstm, Arch::LstmCnn, Arch::Transformer];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Cnn => "cnn",
            Arch::Lstm => "lstm",
            Arch::LstmCnn => "lstm_cnn",
            Arch::Transformer => "transformer",
        }
    }

    /// Adam learning rate per architecture.
    pub fn default_learning_rate(self) -> f64 {
        match self {
            Arch::Cnn => 0.001,
            Arch::Lstm => 0.0003,
            Arch::LstmCnn => 0.003,
            Arch::Transformer => 0.001,
        }
    }

    pub fn default_local_epochs(self) -> usize {
        match self {
            Arch::Cnn | Arch::LstmCnn => 2,
            Arch::Lstm | Arch::Transformer => 3,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown architecture `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub arch: Arch,
    /// Network features per step, throughput excluded.
    pub num_features: usize,
    pub history: usize,
    pub horizon: usize,
    /// Conv channels, LSTM hidden size or model width.
    pub hidden: usize,
    /// LSTM layers or encoder blocks.
    pub layers: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    /// Width of the dense head.
    pub dense: usize,
    pub use_batchnorm: bool,
    pub positional_encoding: bool,
}

impl ModelSpec {
    pub fn new(arch: Arch, num_features: usize, history: usize, horizon: usize) -> Self {
        let (hidden, layers) = match arch {
            Arch::Cnn => (8, 2),
            Arch::Lstm => (16, 1),
            Arch::LstmCnn => (16, 1),
            Arch::Transformer => (16, 2),
        };
        ModelSpec {
            arch,
            num_features,
            history,
            horizon,
            hidden,
            layers,
            heads: 2,
            ff_hidden: 2 * hidden,
            dense: 32,
            use_batchnorm: true,
            positional_encoding: true,
        }
    }

    /// Values per token, throughput included.
    pub fn input_dim(&self) -> usize {
        self.num_features + 1
    }

    pub fn steps(&self) -> usize {
        self.history + 1
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.history == 0 {
            p.push("history must be at least 1".to_string());
        }
        if self.horizon == 0 {
            p.push("horizon must be at least 1".to_string());
        }
        if self.hidden == 0 || self.dense == 0 {
            p.push("hidden and dense widths must be at least 1".to_string());
        }
        match self.arch {
            Arch::Lstm if !(1..=2).contains(&self.layers) => {
                p.push("lstm supports 1 or 2 layers".to_string());
            }
            Arch::Transformer => {
                if self.layers == 0 {
                    p.push("transformer needs at least one encoder block".to_string());
                }
                if self.heads == 0 || self.hidden % self.heads != 0 {
                    p.push(format!("{} heads do not divide width {}", self.heads, self.hidden));
                }
                if self.ff_hidden == 0 {
                    p.push("ff_hidden must be at least 1".to_string());
                }
            }
            _ => {}
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    /// `# key = value` lines written at the top of checkpoints.
    pub fn header(&self) -> String {
        let body = toml::to_string(self).expect("model spec serializes");
        body.lines().map(|l| format!("# {l}\n")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are collected for update.
    Train,
    /// Running statistics.
    Eval,
}

pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ParamSet> {
    spec.validate()?;
    let mut init = Init {
        rng: crate::rng::substream(seed, "init", &[]),
        set: ParamSet::new(),
        bn: spec.use_batchnorm,
    };
    match spec.arch {
        Arch::Cnn => cnn::init(spec, &mut init)?,
        Arch::Lstm => lstm::init(spec, &mut init)?,
        Arch::LstmCnn => hybrid::init(spec, &mut init)?,
        Arch::Transformer => transformer::init(spec, &mut init)?,
    }
    Ok(init.set)
}

pub(crate) struct Init {
    rng: ChaCha8Rng,
    set: ParamSet,
    bn: bool,
}

impl Init {
    fn uniform(&mut self, name: &str, shape: Vec<usize>, fan_in: usize) -> Result<()> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.set.push(name, Tensor::new(shape, data)?, false, true)
    }

    fn dense(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Result<()> {
        self.uniform(&format!("{prefix}.weight"), vec![fan_in, fan_out], fan_in)?;
        self.uniform(&format!("{prefix}.bias"), vec![fan_out], fan_in)
    }

    fn batch_norm(&mut self, prefix: &str, width: usize) -> Result<()> {
        if !self.bn {
            return Ok(());
        }
        self.set
            .push(format!("{prefix}.gamma"), Tensor::full(vec![width], 1.0), true, true)?;
        self.set
            .push(format!("{prefix}.beta"), Tensor::zeros(vec![width]), true, true)?;
        self.set.push(
            format!("{prefix}.running_mean"),
            Tensor::zeros(vec![width]),
            true,
            false,
        )?;
        self.set.push(
            format!("{prefix}.running_var"),
            Tensor::full(vec![width], 1.0),
            true,
            false,
        )
    }
}

/// Parameters bound to tape variables for one forward pass.
pub(crate) struct Ctx<'a> {
    params: &'a ParamSet,
    vars: &'a [Option<Var>],
    mode: Mode,
    bn: bool,
    stats: Vec<(String, BatchStats)>,
}

impl<'a> Ctx<'a> {
    fn var(&self, name: &str) -> Result<Var> {
        let i = self
            .params
            .index_of(name)
            .ok_or_else(|| Error::Structure(format!("no parameter `{name}`")))?;
        self.vars[i].ok_or_else(|| Error::Structure(format!("parameter `{name}` is not bound")))
    }

    fn dense(&self, tape: &mut Tape, x: Var, prefix: &str) -> Result<Var> {
        let w = self.var(&format!("{prefix}.weight"))?;
        let b = self.var(&format!("{prefix}.bias"))?;
        tape.affine(x, w, b)
    }

    fn batch_norm(&mut self, tape: &mut Tape, x: Var, prefix: &str) -> Result<Var> {
        if !self.bn {
            return Ok(x);
        }
        let gamma = self.var(&format!("{prefix}.gamma"))?;
        let beta = self.var(&format!("{prefix}.beta"))?;
        match self.mode {
            Mode::Train => {
                let (y, stats) = tape.batch_norm_train(x, gamma, beta, BN_EPS)?;
                self.stats.push((prefix.to_string(), stats));
                Ok(y)
            }
            Mode::Eval => {
                let rm = self.params.tensor(&format!("{prefix}.running_mean"))?.data();
                let rv = self.params.tensor(&format!("{prefix}.running_var"))?.data();
                tape.batch_norm_eval(x, gamma, beta, rm, rv, BN_EPS)
            }
        }
    }
}

/// Put every trainable entry on the tape; non-trainable slots are `None`.
pub fn bind_params(tape: &mut Tape, params: &ParamSet) -> Vec<Option<Var>> {
    params
        .iter()
        .map(|e| e.trainable.then(|| tape.param(e.tensor.clone())))
        .collect()
}

/// Tensors of the trainable entries, in order.
pub fn trainable_tensors(params: &ParamSet) -> Vec<Tensor> {
    params
        .iter()
        .filter(|e| e.trainable)
        .map(|e| e.tensor.clone())
        .collect()
}

/// Spread vars for the trainable entries back over the full entry list.
pub fn expand_vars(params: &ParamSet, trainable: &[Var]) -> Vec<Option<Var>> {
    let mut it = trainable.iter();
    params
        .iter()
        .map(|e| if e.trainable { it.next().copied() } else { None })
        .collect()
}

pub struct GraphOut {
    /// `batch × horizon` predictions.
    pub output: Var,
    /// Batch statistics per batch-norm layer (training mode only).
    pub stats: Vec<(String, BatchStats)>,
}

/// Record the model on `tape` for the given batch.
pub fn build_graph(
    spec: &ModelSpec,
    tape: &mut Tape,
    params: &ParamSet,
    vars: &[Option<Var>],
    batch: &[&WindowSample],
    mode: Mode,
) -> Result<GraphOut> {
    if vars.len() != params.len() {
        return Err(Error::Structure("vars do not match parameters".into()));
    }
    let tokens = token_matrix(spec, batch)?;
    let x = tape.constant(tokens);
    let mut ctx = Ctx {
        params,
        vars,
        mode,
        bn: spec.use_batchnorm,
        stats: Vec::new(),
    };
    let b = batch.len();
    let output = match spec.arch {
        Arch::Cnn => cnn::forward(spec, tape, &mut ctx, x, b)?,
        Arch::Lstm => lstm::forward(spec, tape, &mut ctx, x, b)?,
        Arch::LstmCnn => hybrid::forward(spec, tape, &mut ctx, x, b)?,
        Arch::Transformer => transformer::forward(spec, tape, &mut ctx, x, b)?,
    };
    Ok(GraphOut {
        output,
        stats: ctx.stats,
    })
}

/// Eval-mode predictions, `batch × horizon`.
pub fn forward(spec: &ModelSpec, params: &ParamSet, batch: &[WindowSample]) -> Result<Tensor> {
    let refs: Vec<&WindowSample> = batch.iter().collect();
    let mut tape = Tape::new();
    let vars = bind_params(&mut tape, params);
    let out = build_graph(spec, &mut tape, params, &vars, &refs, Mode::Eval)?;
    let value = tape.value(out.output).clone();
    if !value.is_finite() {
        return Err(Error::NonFinite("model output".into()));
    }
    Ok(value)
}

/// Tokens laid out batch-major: row `b·T + t` holds the features at step `t`
/// followed by throughput.
pub fn token_matrix(spec: &ModelSpec, batch: &[&WindowSample]) -> Result<Tensor> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let (t_len, d) = (spec.steps(), spec.input_dim());
    let mut data = Vec::with_capacity(batch.len() * t_len * d);
    for s in batch {
        if s.num_features != spec.num_features || s.steps() != t_len {
            return Err(Error::Shape(format!(
                "window has {} features over {} steps, model expects {} over {t_len}",
                s.num_features,
                s.steps(),
                spec.num_features
            )));
        }
        for t in 0..t_len {
            for f in 0..s.num_features {
                data.push(s.feature(f, t));
            }
            data.push(s.thpt_history[t]);
        }
    }
    Tensor::matrix(batch.len() * t_len, d, data)
}

pub fn target_matrix(spec: &ModelSpec, batch: &[&WindowSample]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(batch.len() * spec.horizon);
    for s in batch {
        if s.horizon() != spec.horizon {
            return Err(Error::Shape(format!(
                "window horizon {} vs model horizon {}",
                s.horizon(),
                spec.horizon
            )));
        }
        data.extend_from_slice(&s.target);
    }
    Tensor::matrix(batch.len(), spec.horizon, data)
}

/// Fold batch statistics into the running estimates with the given momentum.
pub fn update_running_stats(params: &mut ParamSet, stats: &[(String, BatchStats)], momentum: f64) -> Result<()> {
    for (prefix, s) in stats {
        let unbias = if s.count > 1 {
            s.count as f64 / (s.count - 1) as f64
        } else {
            1.0
        };
        let rm = params.tensor_mut(&format!("{prefix}.running_mean"))?;
        for (r, m) in rm.data_mut().iter_mut().zip(&s.mean) {
            *r = (1.0 - momentum) * *r + momentum * m;
        }
        let rv = params.tensor_mut(&format!("{prefix}.running_var"))?;
        for (r, v) in rv.data_mut().iter_mut().zip(&s.var) {
            *r = (1.0 - momentum) * *r + momentum * v * unbias;
        }
    }
    Ok(())
}

/// Write a checkpoint: spec header then the parameter text.
pub fn checkpoint_text(spec: &ModelSpec, params: &ParamSet) -> String {
    format!("{}{}", spec.header(), params.to_text())
}

pub fn parse_checkpoint(text: &str) -> Result<(ModelSpec, ParamSet)> {
    let mut header = String::new();
    let mut body = String::new();
    for line in text.lines() {
        match line.strip_prefix("# ") {
            Some(h) => {
                header.push_str(h);
                header.push('\n');
            }
            None => {
                body.push_str(line);
                body.push('\n');
            }
        }
    }
    let spec: ModelSpec = toml::from_str(&header).map_err(|e| Error::Parse(format!("checkpoint header: {e}")))?;
    let params = ParamSet::from_text(&body)?;
    let expected = init_model(&spec, 0)?;
    expected.check_compatible(&params)?;
    Ok((spec, params))
}
