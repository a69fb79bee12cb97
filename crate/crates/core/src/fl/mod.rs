//! Federated orchestration: client sampling, parallel local training,
//! aggregation and per-round evaluation of every client.

mod aggregate;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::io::{csv_string, fmt_f64};
use crate::models::{local_train, predict_trace, ModelSpec, ParamSet, TrainConfig};
use crate::preprocess::PreparedClient;
use crate::rng::derive_seed;
use crate::{Error, Result};

pub use aggregate::{aggregate_fedavg, aggregate_fedbn, personalize, FedBnAggregate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    FedAvg,
    FedProx { mu: f64 },
    FedBn,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::FedAvg => "fedavg",
            StrategyKind::FedProx { .. } => "fedprox",
            StrategyKind::FedBn => "fedbn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub total_rounds: usize,
    pub participation: f64,
    pub strategy: StrategyKind,
    pub seed: u64,
    /// Average batch-norm running statistics under FedAvg/FedProx; otherwise
    /// the global model keeps its previous running statistics.
    pub aggregate_running_stats: bool,
}

impl RoundConfig {
    pub fn new(strategy: StrategyKind, seed: u64) -> Self {
        RoundConfig {
            total_rounds: 100,
            participation: 0.85,
            strategy,
            seed,
            aggregate_running_stats: true,
        }
    }

    pub fn validate(&self, problems: &mut Vec<String>) {
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            problems.push("federation.participation must lie in (0, 1]".into());
        }
        if let StrategyKind::FedProx { mu } = self.strategy {
            if !(mu > 0.0 && mu.is_finite()) {
                problems.push("fedprox needs a positive finite mu".into());
            }
        }
    }
}

/// Draw `⌈fraction·K⌉` distinct client indices, returned in ascending order.
pub fn sample_clients<R: Rng + ?Sized>(count: usize, fraction: f64, rng: &mut R) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::Empty("no clients to sample".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "participation {fraction} outside (0, 1]"
        )));
    }
    // Guard against 0.85 * 20 = 17.000000000000004 rounding up to 18.
    let k = ((fraction * count as f64) - 1e-9).ceil().clamp(1.0, count as f64) as usize;
    let mut picked = index::sample(rng, count, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone)]
pub struct ClientHandle {
    pub data: PreparedClient,
    /// Under FedBN the shared block plus this client's batch-norm entries;
    /// otherwise the latest broadcast.
    pub params: ParamSet,
}

impl ClientHandle {
    pub fn id(&self) -> &str {
        &self.data.client_id
    }

    pub fn sample_count(&self) -> usize {
        self.data.train.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientEval {
    pub client_id: String,
    /// NaN when undefined (constant ground truth).
    pub r2: f64,
    pub mse: f64,
    pub participated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub participants: Vec<String>,
    /// `(client_id, reason)` for participants whose update was discarded.
    pub failed: Vec<(String, String)>,
    pub clients: Vec<ClientEval>,
    pub mean_r2: f64,
    pub var_r2: f64,
}

impl RoundReport {
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.clients
            .iter()
            .map(|c| {
                vec![
                    self.round.to_string(),
                    c.client_id.clone(),
                    fmt_f64(c.r2),
                    fmt_f64(c.mse),
                    u8::from(c.participated).to_string(),
                ]
            })
            .collect()
    }
}

pub const REPORT_HEADER: [&str; 5] = ["round", "client_id", "r2", "mse", "participated"];

pub fn reports_csv(reports: &[RoundReport]) -> Result<String> {
    csv_string(&REPORT_HEADER, reports.iter().flat_map(RoundReport::csv_rows))
}

/// Mean and population variance of the finite values.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var)
}

/// R² and MSE of the client's test forecasts in Mbps.
pub fn evaluate_client(spec: &ModelSpec, params: &ParamSet, data: &PreparedClient) -> Result<(f64, f64)> {
    let fc = predict_trace(spec, params, &data.test)?;
    let pred: Vec<f64> = fc.values.iter().map(|&y| data.scaler.inverse_throughput(y)).collect();
    let end = fc.start + pred.len();
    let usable = end.min(data.throughput.len());
    let truth = &data.throughput[fc.start..usable];
    let pred = &pred[..truth.len()];
    let r2 = analysis::r2_score(truth, pred).unwrap_or(f64::NAN);
    let mse = analysis::mse(truth, pred)?;
    Ok((r2, mse))
}

/// Server state across rounds.
#[derive(Debug, Clone)]
pub struct Federation {
    pub spec: ModelSpec,
    pub clients: Vec<ClientHandle>,
    pub global: ParamSet,
    pub rc: RoundConfig,
    pub tc: TrainConfig,
}

/// Local training results of one round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub report: RoundReport,
    /// `(client index, trained params, n_k)` for every accepted update.
    pub updates: Vec<(usize, ParamSet, usize)>,
}

impl Federation {
    pub fn new(
        spec: ModelSpec,
        data: Vec<PreparedClient>,
        global: ParamSet,
        rc: RoundConfig,
        tc: TrainConfig,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        rc.validate(&mut problems);
        tc.validate(&mut problems);
        if data.is_empty() {
            problems.push("at least one client is required".into());
        }
        for d in &data {
            if d.train.is_empty() {
                problems.push(format!("client {} has no training windows", d.client_id));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        crate::models::init_model(&spec, 0)?.check_compatible(&global)?;
        let clients = data
            .into_iter()
            .map(|d| ClientHandle {
                data: d,
                params: global.clone(),
            })
            .collect();
        Ok(Federation {
            spec,
            clients,
            global,
            rc,
            tc,
        })
    }

    fn train_config(&self) -> TrainConfig {
        let mut tc = self.tc.clone();
        tc.prox_mu = match self.rc.strategy {
            StrategyKind::FedProx { mu } => mu,
            _ => 0.0,
        };
        tc
    }

    /// One round: sample, train participants in parallel, aggregate, then
    /// evaluate every client.
    pub fn run_round(&mut self, round: usize) -> Result<RoundOutcome> {
        let mut rng = crate::rng::substream(self.rc.seed, "sampling", &[round as u64]);
        let picked = sample_clients(self.clients.len(), self.rc.participation, &mut rng)?;
        let tc = self.train_config();
        let fedbn = self.rc.strategy == StrategyKind::FedBn;
        let prox = matches!(self.rc.strategy, StrategyKind::FedProx { .. });

        let results: Vec<(usize, Result<ParamSet>)> = picked
            .par_iter()
            .map(|&k| {
                let client = &self.clients[k];
                let start = if fedbn { &client.params } else { &self.global };
                let anchor = prox.then_some(start);
                let seed = derive_seed(self.rc.seed, "train", &[round as u64, k as u64]);
                let out = local_train(&self.spec, start, &client.data.train, &tc, anchor, seed);
                (k, out.map(|o| o.params))
            })
            .collect();

        let mut updates = Vec::new();
        let mut failed = Vec::new();
        for (k, r) in results {
            match r {
                Ok(p) => updates.push((k, p, self.clients[k].sample_count())),
                Err(e) => failed.push((self.clients[k].id().to_string(), e.to_string())),
            }
        }

        if !updates.is_empty() {
            let refs: Vec<(&ParamSet, usize)> = updates.iter().map(|(_, p, n)| (p, *n)).collect();
            if fedbn {
                let agg = aggregate_fedbn(&refs)?;
                let mut own: Vec<Option<ParamSet>> = vec![None; self.clients.len()];
                for ((k, _, _), p) in updates.iter().zip(agg.clients) {
                    own[*k] = Some(p);
                }
                for (client, mine) in self.clients.iter_mut().zip(own) {
                    client.params = match mine {
                        Some(p) => p,
                        None => personalize(&agg.shared, &client.params)?,
                    };
                }
                self.global = agg.shared;
            } else {
                let mut g = aggregate_fedavg(&refs)?;
                if !self.rc.aggregate_running_stats {
                    g.overwrite_from(&self.global, |e| e.is_batchnorm && !e.trainable)?;
                }
                self.global = g;
                for c in &mut self.clients {
                    c.params = self.global.clone();
                }
            }
        }

        let report = self.evaluate(round, &picked, failed)?;
        Ok(RoundOutcome { report, updates })
    }

    /// Evaluate every client with the model it would deploy.
    pub fn evaluate(&self, round: usize, picked: &[usize], failed: Vec<(String, String)>) -> Result<RoundReport> {
        let evals: Vec<Result<ClientEval>> = self
            .clients
            .par_iter()
            .enumerate()
            .map(|(k, c)| {
                let (r2, mse) = evaluate_client(&self.spec, &c.params, &c.data)?;
                Ok(ClientEval {
                    client_id: c.id().to_string(),
                    r2,
                    mse,
                    participated: picked.binary_search(&k).is_ok(),
                })
            })
            .collect();
        let clients = evals.into_iter().collect::<Result<Vec<_>>>()?;
        let (mean_r2, var_r2) = mean_var(&clients.iter().map(|c| c.r2).collect::<Vec<_>>());
        Ok(RoundReport {
            round,
            participants: picked.iter().map(|&k| self.clients[k].id().to_string()).collect(),
            failed,
            clients,
            mean_r2,
            var_r2,
        })
    }

    /// Run `total_rounds` rounds, handing each report to `sink` as it lands.
    pub fn run_experiment(&mut self, mut sink: impl FnMut(&RoundReport) -> Result<()>) -> Result<Vec<RoundReport>> {
        let mut reports = Vec::with_capacity(self.rc.total_rounds);
        for round in 1..=self.rc.total_rounds {
            let out = self.run_round(round)?;
            sink(&out.report)?;
            reports.push(out.report);
        }
        Ok(reports)
    }

    /// Parameters each client evaluates with.
    pub fn deployed_params(&self, k: usize) -> &ParamSet {
        if self.rc.strategy == StrategyKind::FedBn {
            &self.clients[k].params
        } else {
            &self.global
        }
    }
}
