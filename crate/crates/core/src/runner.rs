//! Config-driven stages: `federate`, `analyze`, `stream` and `all`.
//!
//! Output layout under the run directory:
//!
//! ```text
//! config.toml               config echo (seed included)
//! rounds.csv                round, client_id, r2, mse, participated
//! summary.json              federation summary
//! checkpoints/global.ckpt   final global model
//! checkpoints/clients/*.ckpt  model each client deploys
//! correlation.csv, kde.csv  exploratory statistics
//! sessions/*_events.csv     streaming event logs
//! qoe.json                  per-session QoE breakdowns
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::analysis::{kde_csv, CorrelationTable};
use crate::config::{ExperimentConfig, PredictorName};
use crate::fl::{reports_csv, Federation, RoundReport};
use crate::io::write_atomic_str;
use crate::models::{checkpoint_text, forecast_windows, init_model, parse_checkpoint};
use crate::preprocess::{prepare_clients, PreparedClient};
use crate::rng::derive_seed;
use crate::stream::{
    events_csv, simulate_session, ConstantPredictor, HarmonicMeanPredictor, ModelPredictor, OraclePredictor, Predictor,
    QoEBreakdown, SessionTotals,
};
use crate::synthetic::generate_synthetic;
use crate::trace::{clean_and_resample, load_trace, ClientTrace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Federate,
    Analyze,
    Stream,
    All,
}

/// Run `stage`, writing everything under `out`. `workers` caps the thread
/// pool; results do not depend on it.
pub fn run(cfg: &ExperimentConfig, stage: Stage, out: &Path, workers: Option<usize>) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::InvalidArgument("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| {
        write_config_echo(cfg, out)?;
        match stage {
            Stage::Federate => federate(cfg, out).map(drop),
            Stage::Analyze => analyze(cfg, out),
            Stage::Stream => stream(cfg, out).map(drop),
            Stage::All => {
                federate(cfg, out)?;
                analyze(cfg, out)?;
                stream(cfg, out).map(drop)
            }
        }
    })
}

/// The echo leaves out the output directory so replays can write anywhere.
pub fn write_config_echo(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut echo = cfg.clone();
    echo.output.dir = PathBuf::from(".");
    write_atomic_str(&out.join("config.toml"), &echo.to_toml()?)
}

/// Cleaned, 1 Hz client traces from the configured source.
pub fn load_traces(cfg: &ExperimentConfig) -> Result<Vec<ClientTrace>> {
    let raw = if let Some(s) = &cfg.data.synthetic {
        generate_synthetic(&s.spec(), cfg.seed)?
    } else {
        let mut traces = Vec::with_capacity(cfg.data.files.len());
        for f in &cfg.data.files {
            let mapping = cfg
                .mapping(&f.mapping)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown mapping `{}`", f.mapping)))?;
            let mut t = load_trace(&f.path, &mapping)?.trace;
            if let Some(id) = &f.client_id {
                t.client_id = id.clone();
            }
            traces.push(t);
        }
        traces
    };
    raw.iter().map(clean_and_resample).collect()
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Vec<PreparedClient>> {
    prepare_clients(&load_traces(cfg)?, &cfg.preprocess, &cfg.window)
}

#[derive(Debug, Clone)]
pub struct FederateSummary {
    /// Evaluation of the initial model (round 0).
    pub initial: RoundReport,
    pub reports: Vec<RoundReport>,
}

impl FederateSummary {
    pub fn last(&self) -> &RoundReport {
        self.reports.last().unwrap_or(&self.initial)
    }
}

fn client_checkpoint(out: &Path, client_id: &str) -> PathBuf {
    out.join("checkpoints")
        .join("clients")
        .join(format!("{client_id}.ckpt"))
}

pub fn federate(cfg: &ExperimentConfig, out: &Path) -> Result<FederateSummary> {
    let data = prepare(cfg)?;
    let spec = cfg.model_spec();
    let global = init_model(&spec, derive_seed(cfg.seed, "init", &[]))?;
    let mut fed = Federation::new(spec.clone(), data, global, cfg.round_config(), cfg.train_config())?;
    let initial = fed.evaluate(0, &[], Vec::new())?;

    let rounds_path = out.join("rounds.csv");
    write_atomic_str(&rounds_path, &reports_csv(&[])?)?;
    let mut so_far: Vec<RoundReport> = Vec::new();
    let reports = fed.run_experiment(|r| {
        so_far.push(r.clone());
        write_atomic_str(&rounds_path, &reports_csv(&so_far)?)
    })?;

    write_atomic_str(
        &out.join("checkpoints").join("global.ckpt"),
        &checkpoint_text(&spec, &fed.global),
    )?;
    for (k, c) in fed.clients.iter().enumerate() {
        write_atomic_str(
            &client_checkpoint(out, c.id()),
            &checkpoint_text(&spec, fed.deployed_params(k)),
        )?;
    }

    let summary = FederateSummary { initial, reports };
    let last = summary.last();
    let doc = json!({
        "seed": cfg.seed,
        "strategy": cfg.strategy().name(),
        "arch": spec.arch.name(),
        "rounds": cfg.federation.rounds,
        "clients": fed.clients.iter().map(|c| json!({
            "client_id": c.id(),
            "train_windows": c.data.train.len(),
            "test_windows": c.data.test.len(),
        })).collect::<Vec<_>>(),
        "initial": { "mean_r2": summary.initial.mean_r2, "var_r2": summary.initial.var_r2 },
        "final": {
            "round": last.round,
            "mean_r2": last.mean_r2,
            "var_r2": last.var_r2,
            "clients": last.clients,
        },
        "mean_r2_by_round": summary.reports.iter().map(|r| r.mean_r2).collect::<Vec<_>>(),
        "failed": summary.reports.iter().flat_map(|r| r.failed.iter().map(move |(id, why)| json!({
            "round": r.round, "client_id": id, "reason": why,
        }))).collect::<Vec<_>>(),
    });
    write_json(&out.join("summary.json"), &doc)?;
    Ok(summary)
}

pub fn analyze(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let traces = load_traces(cfg)?;
    let a = &cfg.analysis;
    let table = CorrelationTable::compute(&traces, &a.features, &a.horizons);
    write_atomic_str(&out.join("correlation.csv"), &table.to_csv()?)?;
    write_atomic_str(&out.join("kde.csv"), &kde_csv(&traces, a.kde_bandwidth, a.kde_points)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub client_id: String,
    pub predictor: String,
    /// Trace second at which the session starts.
    pub start: usize,
    pub breakdown: QoEBreakdown,
    pub totals: SessionTotals,
}

#[derive(Debug, Clone, Serialize)]
pub struct StreamSummary {
    pub sessions: Vec<SessionSummary>,
    /// `(client_id, reason)` for clients without a session.
    pub skipped: Vec<(String, String)>,
}

impl StreamSummary {
    pub fn mean_qoe(&self, predictor: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .sessions
            .iter()
            .filter(|s| s.predictor == predictor)
            .map(|s| s.breakdown.qoe_per_segment)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

struct Job<'a> {
    client: &'a PreparedClient,
    predictor: PredictorName,
    start: usize,
    forecasts: &'a [Option<Vec<f64>>],
}

/// Replay each client's test region through the simulator with every
/// configured predictor, using the checkpoints written by `federate`.
pub fn stream(cfg: &ExperimentConfig, out: &Path) -> Result<StreamSummary> {
    let data = prepare(cfg)?;
    let spec = cfg.model_spec();
    let sim = &cfg.stream.sim;
    let len = sim.session_len.ceil() as usize;

    let mut skipped = Vec::new();
    let mut plans = Vec::new();
    for c in &data {
        let n = c.throughput.len();
        if n < len {
            skipped.push((c.client_id.clone(), format!("{n} s trace for a {len} s session")));
            continue;
        }
        let start = c.test_start.min(n - len);
        let forecasts = if cfg.stream.predictors.contains(&PredictorName::Model) {
            let path = client_checkpoint(out, &c.client_id);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let (ck_spec, params) = parse_checkpoint(&text)?;
            if ck_spec != spec {
                return Err(Error::Structure(format!(
                    "checkpoint {} was trained with a different model spec",
                    path.display()
                )));
            }
            session_forecasts(c, &forecast_windows(&spec, &params, &c.all)?, start, len)
        } else {
            Vec::new()
        };
        plans.push((c, start, forecasts));
    }

    let jobs: Vec<Job> = plans
        .iter()
        .flat_map(|(c, start, fc)| {
            cfg.stream.predictors.iter().map(move |&p| Job {
                client: c,
                predictor: p,
                start: *start,
                forecasts: fc,
            })
        })
        .collect();

    let results: Vec<Result<(SessionSummary, String)>> = jobs
        .par_iter()
        .map(|j| {
            let series = &j.client.throughput[j.start..j.start + len];
            let mut predictor: Box<dyn Predictor> = match j.predictor {
                PredictorName::Model => Box::new(ModelPredictor::new("model", j.forecasts.to_vec())),
                PredictorName::HarmonicMean => Box::new(HarmonicMeanPredictor::default()),
                PredictorName::Oracle => Box::new(OraclePredictor),
                PredictorName::ConstantMin => Box::new(ConstantPredictor {
                    value: sim.ladder[0] / 1000.0,
                }),
            };
            let r = simulate_session(series, predictor.as_mut(), sim, &cfg.qoe)?;
            let events = events_csv(&r.events)?;
            let summary = SessionSummary {
                client_id: j.client.client_id.clone(),
                predictor: j.predictor.name().to_string(),
                start: j.start,
                breakdown: r.breakdown,
                totals: r.totals,
            };
            Ok((summary, events))
        })
        .collect();

    let mut sessions = Vec::with_capacity(results.len());
    for r in results {
        let (s, events) = r?;
        let name = format!("{}_{}_events.csv", s.client_id, s.predictor);
        write_atomic_str(&out.join("sessions").join(name), &events)?;
        sessions.push(s);
    }
    let summary = StreamSummary { sessions, skipped };
    let means: serde_json::Map<String, serde_json::Value> = cfg
        .stream
        .predictors
        .iter()
        .map(|p| (p.name().to_string(), json!(summary.mean_qoe(p.name()))))
        .collect();
    let doc = json!({
        "strategy": cfg.strategy().name(),
        "mean_qoe_per_segment": means,
        "sessions": summary.sessions,
        "skipped": summary.skipped,
    });
    write_json(&out.join("qoe.json"), &doc)?;
    Ok(summary)
}

/// Forecasts indexed by session second: entry `a` is the model's forecast
/// after observing trace second `start + a`, in Mbps.
fn session_forecasts(c: &PreparedClient, scaled: &[Vec<f64>], start: usize, len: usize) -> Vec<Option<Vec<f64>>> {
    let first = c.all.first().map_or(usize::MAX, |w| w.anchor);
    (0..len)
        .map(|a| {
            let g = start + a;
            let i = g.checked_sub(first)?;
            scaled
                .get(i)
                .map(|f| f.iter().map(|&y| c.scaler.inverse_throughput(y).max(0.0)).collect())
        })
        .collect()
}

fn write_json(path: &Path, doc: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| Error::Parse(format!("json: {e}")))?;
    text.push('\n');
    write_atomic_str(path, &text)
}
