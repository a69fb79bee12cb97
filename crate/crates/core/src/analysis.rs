//! Forecast metrics and exploratory statistics: R², MSE, Pearson correlation
//! between present features and future throughput, and Gaussian KDE.

use crate::io::{csv_string, fmt_f64};
use crate::trace::ClientTrace;
use crate::{Error, Result};

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Shape(format!(
            "{} targets vs {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::TooShort("need at least 2 aligned values".into()));
    }
    if !y.iter().chain(yhat).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("metric input".into()));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2_score(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let m = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::InvalidArgument("constant ground truth".into()));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidArgument("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation of `feature[n]` with `throughput[n + horizon]`.
pub fn horizon_correlation(trace: &ClientTrace, feature: &str, horizon: usize) -> Result<f64> {
    let x = trace
        .column(feature)
        .ok_or_else(|| Error::MissingColumn(feature.to_string()))?;
    series_horizon_correlation(&x, &trace.throughput(), horizon)
}

pub fn series_horizon_correlation(feature: &[f64], throughput: &[f64], horizon: usize) -> Result<f64> {
    let n = throughput.len();
    if feature.len() != n {
        return Err(Error::Shape("feature and throughput lengths differ".into()));
    }
    if n <= horizon + 2 {
        return Err(Error::TooShort(format!("{n} steps for horizon {horizon}")));
    }
    pearson(&feature[..n - horizon], &throughput[horizon..])
}

/// Gaussian kernel density `(1/(N h √(2π))) Σ exp(−(x − v)² / 2h²)` on `grid`.
pub fn gaussian_kde(values: &[f64], bandwidth: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("kde input".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument("bandwidth must be positive".into()));
    }
    if !values.iter().chain(grid).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("kde input".into()));
    }
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|x| {
            norm * values
                .iter()
                .map(|v| (-(x - v).powi(2) / (2.0 * bandwidth * bandwidth)).exp())
                .sum::<f64>()
        })
        .collect())
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Min-max to [0, 1]; a constant series maps to zeros.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Per-client ρ for every (feature, horizon); undefined cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    pub features: Vec<String>,
    pub horizons: Vec<usize>,
    /// `(client_id, rho[feature][horizon])`
    pub rows: Vec<(String, Vec<Vec<f64>>)>,
}

impl CorrelationTable {
    pub fn compute(traces: &[ClientTrace], features: &[String], horizons: &[usize]) -> Self {
        let rows = traces
            .iter()
            .map(|t| {
                let rho = features
                    .iter()
                    .map(|f| {
                        horizons
                            .iter()
                            .map(|&h| horizon_correlation(t, f, h).unwrap_or(f64::NAN))
                            .collect()
                    })
                    .collect();
                (t.client_id.clone(), rho)
            })
            .collect();
        CorrelationTable {
            features: features.to_vec(),
            horizons: horizons.to_vec(),
            rows,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut rows = Vec::new();
        for (client, rho) in &self.rows {
            for (f, per_h) in self.features.iter().zip(rho) {
                for (h, r) in self.horizons.iter().zip(per_h) {
                    rows.push(vec![client.clone(), f.clone(), h.to_string(), fmt_f64(*r)]);
                }
            }
        }
        csv_string(&["client_id", "feature", "horizon", "rho"], rows)
    }
}

/// KDE of each client's min-max normalized throughput on a shared [0, 1] grid.
pub fn kde_csv(traces: &[ClientTrace], bandwidth: f64, points: usize) -> Result<String> {
    let grid = linspace(0.0, 1.0, points);
    let mut curves = Vec::with_capacity(traces.len());
    for t in traces {
        curves.push(gaussian_kde(&minmax_normalize(&t.throughput()), bandwidth, &grid)?);
    }
    let mut header = vec!["x".to_string()];
    header.extend(traces.iter().map(|t| t.client_id.clone()));
    let rows: Vec<Vec<String>> = grid
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut row = vec![fmt_f64(*x)];
            row.extend(curves.iter().map(|c| fmt_f64(c[i])));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_string(&header, rows)
}
