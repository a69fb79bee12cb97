//! Noise filtering, feature scaling and sliding-window sample construction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::trace::ClientTrace;
use crate::{Error, Result};

pub const THROUGHPUT: &str = "throughput";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    #[default]
    Minmax,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalingScope {
    #[default]
    PerClient,
    PerDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub filter_window: usize,
    pub scaler: ScalerKind,
    pub scope: ScalingScope,
    /// Network features fed to the models; throughput is always appended.
    pub features: Vec<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            filter_window: 3,
            scaler: ScalerKind::Minmax,
            scope: ScalingScope::PerClient,
            features: ["latitude", "longitude", "speed", "rsrp", "sinr"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self, problems: &mut Vec<String>) {
        if self.filter_window == 0 {
            problems.push("preprocess.filter_window must be at least 1".into());
        }
        if self.features.iter().any(|f| f == THROUGHPUT) {
            problems.push("preprocess.features must not list throughput".into());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub history: usize,
    pub horizon: usize,
    /// Defaults to `horizon`.
    pub eval_stride: Option<usize>,
    pub train_stride: usize,
    pub train_ratio: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            history: 15,
            horizon: 1,
            eval_stride: None,
            train_stride: 1,
            train_ratio: 0.8,
        }
    }
}

impl WindowConfig {
    pub fn new(history: usize, horizon: usize) -> Self {
        WindowConfig {
            history,
            horizon,
            ..Self::default()
        }
    }

    pub fn eval_stride(&self) -> usize {
        self.eval_stride.unwrap_or(self.horizon)
    }

    /// Shortest trace that yields one window.
    pub fn min_len(&self) -> usize {
        self.history + self.horizon + 1
    }

    pub fn validate(&self, problems: &mut Vec<String>) {
        if self.history == 0 {
            problems.push("window.history must be at least 1".into());
        }
        if self.horizon == 0 {
            problems.push("window.horizon must be at least 1".into());
        }
        if self.train_stride == 0 || self.eval_stride == Some(0) {
            problems.push("window strides must be at least 1".into());
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            problems.push("window.train_ratio must lie in (0, 1)".into());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Row-major `num_features × (history + 1)`; column `j` is time `anchor − history + j`.
    pub features: Vec<f64>,
    pub num_features: usize,
    /// Throughput at `anchor − history ..= anchor`.
    pub thpt_history: Vec<f64>,
    /// Throughput at `anchor + 1 ..= anchor + horizon`.
    pub target: Vec<f64>,
    pub anchor: usize,
}

impl WindowSample {
    pub fn steps(&self) -> usize {
        self.thpt_history.len()
    }

    pub fn horizon(&self) -> usize {
        self.target.len()
    }

    pub fn feature(&self, f: usize, j: usize) -> f64 {
        self.features[f * self.steps() + j]
    }
}

/// Trailing mean over at most `w` points.
pub fn moving_average(series: &[f64], w: usize) -> Result<Vec<f64>> {
    if w == 0 {
        return Err(Error::InvalidArgument(
            "moving-average window must be at least 1".into(),
        ));
    }
    if series.is_empty() {
        return Err(Error::Empty("moving-average input".into()));
    }
    Ok((0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let win = &series[lo..=i];
            win.iter().sum::<f64>() / win.len() as f64
        })
        .collect())
}

/// Apply [`moving_average`] to every continuous column, extras included.
pub fn filter_trace(trace: &ClientTrace, w: usize) -> Result<ClientTrace> {
    let mut out = trace.clone();
    for name in trace.continuous_features() {
        let Some(col) = trace.column(&name) else { continue };
        let smooth = moving_average(&col, w)?;
        for (r, v) in out.records.iter_mut().zip(smooth) {
            r.set(&name, v)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    /// min (minmax) or mean (standard)
    pub a: f64,
    /// max (minmax) or population stddev (standard)
    pub b: f64,
    /// Degenerate range; values pass through unscaled.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub kind: ScalerKind,
    pub columns: Vec<ColumnScale>,
}

impl ScalerState {
    pub fn column(&self, name: &str) -> Option<&ColumnScale> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn forward(&self, col: &ColumnScale, x: f64) -> f64 {
        if col.constant {
            return x;
        }
        match self.kind {
            ScalerKind::Minmax => (x - col.a) / (col.b - col.a),
            ScalerKind::Standard => (x - col.a) / col.b,
        }
    }

    pub fn inverse(&self, col: &ColumnScale, y: f64) -> f64 {
        if col.constant {
            return y;
        }
        match self.kind {
            ScalerKind::Minmax => col.a + y * (col.b - col.a),
            ScalerKind::Standard => col.a + y * col.b,
        }
    }

    /// Map a scaled throughput value back to Mbps.
    pub fn inverse_throughput(&self, y: f64) -> f64 {
        match self.column(THROUGHPUT) {
            Some(c) => self.inverse(c, y),
            None => y,
        }
    }
}

/// Fit on the given traces jointly. Scaled columns are `features` plus throughput.
pub fn fit_scaler(traces: &[&ClientTrace], features: &[String], kind: ScalerKind) -> Result<ScalerState> {
    if traces.is_empty() || traces.iter().all(|t| t.is_empty()) {
        return Err(Error::Empty("no records to fit a scaler on".into()));
    }
    let mut columns = Vec::new();
    for name in features.iter().map(String::as_str).chain([THROUGHPUT]) {
        let mut values = Vec::new();
        for t in traces {
            let col = t
                .column(name)
                .ok_or_else(|| Error::MissingColumn(format!("{name} in client {}", t.client_id)))?;
            values.extend(col);
        }
        let n = values.len() as f64;
        let (a, b) = match kind {
            ScalerKind::Minmax => values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            }),
            ScalerKind::Standard => {
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            }
        };
        let constant = match kind {
            ScalerKind::Minmax => b - a <= 1e-12 * a.abs().max(1.0),
            ScalerKind::Standard => b <= 1e-12 * a.abs().max(1.0),
        };
        columns.push(ColumnScale {
            name: name.to_string(),
            a,
            b,
            constant,
        });
    }
    Ok(ScalerState { kind, columns })
}

pub fn apply_scaler(trace: &ClientTrace, s: &ScalerState) -> Result<ClientTrace> {
    let mut out = trace.clone();
    for col in &s.columns {
        for r in &mut out.records {
            let x = r.get(&col.name).ok_or_else(|| {
                Error::MissingColumn(format!(
                    "scaler column `{}` not in client {}",
                    col.name, trace.client_id
                ))
            })?;
            r.set(&col.name, s.forward(col, x))?;
        }
    }
    Ok(out)
}

/// Windows over column-major inputs. `features[f][t]`, `throughput[t]`.
pub fn windows_from_columns(
    features: &[Vec<f64>],
    throughput: &[f64],
    history: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    if history == 0 || horizon == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "history, horizon and stride must be at least 1".into(),
        ));
    }
    let n = throughput.len();
    if features.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("feature columns differ in length from throughput".into()));
    }
    if n < history + horizon + 1 {
        return Err(Error::TooShort(format!(
            "{n} steps, need at least {} for history {history} and horizon {horizon}",
            history + horizon + 1
        )));
    }
    let steps = history + 1;
    let mut out = Vec::new();
    let mut anchor = history;
    while anchor + horizon < n {
        let lo = anchor - history;
        let mut feats = Vec::with_capacity(features.len() * steps);
        for col in features {
            feats.extend_from_slice(&col[lo..=anchor]);
        }
        out.push(WindowSample {
            features: feats,
            num_features: features.len(),
            thpt_history: throughput[lo..=anchor].to_vec(),
            target: throughput[anchor + 1..=anchor + horizon].to_vec(),
            anchor,
        });
        anchor += stride;
    }
    Ok(out)
}

/// Number of windows [`build_windows`] yields.
pub fn window_count(len: usize, history: usize, horizon: usize, stride: usize) -> usize {
    if len < history + horizon + 1 || stride == 0 {
        0
    } else {
        (len - history - horizon - 1) / stride + 1
    }
}

pub fn build_windows(
    trace: &ClientTrace,
    features: &[String],
    wc: &WindowConfig,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    let cols = features
        .iter()
        .map(|f| {
            trace
                .column(f)
                .ok_or_else(|| Error::MissingColumn(format!("{f} in client {}", trace.client_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    windows_from_columns(&cols, &trace.throughput(), wc.history, wc.horizon, stride)
}

/// Chronological split: the first `⌊ratio·N⌋` items train.
pub fn split_train_test<T: Clone>(samples: &[T], ratio: f64) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {ratio} outside (0, 1)")));
    }
    if samples.len() < 2 {
        return Err(Error::TooShort(format!("{} samples, need at least 2", samples.len())));
    }
    let cut = split_index(samples.len(), ratio);
    Ok((samples[..cut].to_vec(), samples[cut..].to_vec()))
}

pub fn split_index(n: usize, ratio: f64) -> usize {
    (ratio * n as f64).floor() as usize
}

/// One client's model-ready data.
#[derive(Debug, Clone)]
pub struct PreparedClient {
    pub client_id: String,
    pub dataset_tag: String,
    pub train: Vec<WindowSample>,
    /// Test windows thinned to the evaluation stride.
    pub test: Vec<WindowSample>,
    /// Stride-1 windows over the whole scaled trace; `all[i].anchor = history + i`.
    pub all: Vec<WindowSample>,
    pub scaler: ScalerState,
    /// Filtered, unscaled throughput (Mbps) aligned with window anchors.
    pub throughput: Vec<f64>,
    /// First step of the test region (first target of the first test window).
    pub test_start: usize,
}

/// Filter, scale (fit on each training region only) and window every trace.
pub fn prepare_clients(
    traces: &[ClientTrace],
    pc: &PreprocessConfig,
    wc: &WindowConfig,
) -> Result<Vec<PreparedClient>> {
    let filtered: Vec<ClientTrace> = traces
        .iter()
        .map(|t| filter_trace(t, pc.filter_window))
        .collect::<Result<_>>()?;

    // Training region: every step a training window reads, targets included.
    let mut train_regions = Vec::with_capacity(filtered.len());
    for t in &filtered {
        let total = window_count(t.len(), wc.history, wc.horizon, wc.train_stride);
        if total < 2 {
            return Err(Error::TooShort(format!(
                "client {}: {} steps give {total} windows, need at least 2",
                t.client_id,
                t.len()
            )));
        }
        let n_train = split_index(total, wc.train_ratio);
        if n_train == 0 || n_train == total {
            return Err(Error::TooShort(format!(
                "client {}: split leaves an empty partition",
                t.client_id
            )));
        }
        let last_anchor = wc.history + (n_train - 1) * wc.train_stride;
        let mut region = t.clone();
        region.records.truncate(last_anchor + wc.horizon + 1);
        train_regions.push(region);
    }

    let scalers: Vec<ScalerState> = match pc.scope {
        ScalingScope::PerClient => train_regions
            .iter()
            .map(|r| fit_scaler(&[r], &pc.features, pc.scaler))
            .collect::<Result<_>>()?,
        ScalingScope::PerDataset => {
            let mut by_tag: BTreeMap<&str, Vec<&ClientTrace>> = BTreeMap::new();
            for r in &train_regions {
                by_tag.entry(r.dataset_tag.as_str()).or_default().push(r);
            }
            let mut fitted = BTreeMap::new();
            for (tag, group) in by_tag {
                fitted.insert(tag, fit_scaler(&group, &pc.features, pc.scaler)?);
            }
            train_regions
                .iter()
                .map(|r| fitted[r.dataset_tag.as_str()].clone())
                .collect()
        }
    };

    filtered
        .iter()
        .zip(scalers)
        .map(|(t, scaler)| {
            let scaled = apply_scaler(t, &scaler)?;
            let windows = build_windows(&scaled, &pc.features, wc, wc.train_stride)?;
            let (train, rest) = split_train_test(&windows, wc.train_ratio)?;
            let all = if wc.train_stride == 1 {
                windows
            } else {
                build_windows(&scaled, &pc.features, wc, 1)?
            };
            let stride = wc.eval_stride();
            let first = rest[0].anchor;
            let test: Vec<WindowSample> = rest.into_iter().filter(|s| (s.anchor - first) % stride == 0).collect();
            Ok(PreparedClient {
                client_id: t.client_id.clone(),
                dataset_tag: t.dataset_tag.clone(),
                train,
                test_start: first + 1,
                test,
                all,
                scaler,
                throughput: t.throughput(),
            })
        })
        .collect()
}
