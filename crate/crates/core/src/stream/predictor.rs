/// Throughput forecaster consulted before each bitrate decision.
///
/// `series` is the session's 1 Hz throughput in Mbps. At second `now` only
/// `series[..now]` has been observed; implementations other than the oracle
/// must not read further. Returns `horizon` non-negative values for seconds
/// `now .. now + horizon`.
pub trait Predictor: Send {
    fn name(&self) -> &str;
    fn predict(&mut self, series: &[f64], now: usize, horizon: usize) -> Vec<f64>;
}

/// Reads the future from the trace.
#[derive(Debug, Clone, Default)]
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&mut self, series: &[f64], now: usize, horizon: usize) -> Vec<f64> {
        (now..now + horizon)
            .map(|i| series.get(i).copied().unwrap_or(0.0).max(0.0))
            .collect()
    }
}

/// Harmonic mean of the last `window` observed seconds.
#[derive(Debug, Clone)]
pub struct HarmonicMeanPredictor {
    pub window: usize,
}

impl Default for HarmonicMeanPredictor {
    fn default() -> Self {
        HarmonicMeanPredictor { window: 5 }
    }
}

impl HarmonicMeanPredictor {
    pub fn estimate(&self, observed: &[f64]) -> f64 {
        let lo = observed.len().saturating_sub(self.window);
        let recent = &observed[lo..];
        if recent.is_empty() || recent.iter().any(|&v| v <= 0.0) {
            return 0.0;
        }
        recent.len() as f64 / recent.iter().map(|v| 1.0 / v).sum::<f64>()
    }
}

impl Predictor for HarmonicMeanPredictor {
    fn name(&self) -> &str {
        "harmonic_mean"
    }

    fn predict(&mut self, series: &[f64], now: usize, horizon: usize) -> Vec<f64> {
        let v = self.estimate(&series[..now.min(series.len())]);
        vec![v; horizon]
    }
}

#[derive(Debug, Clone)]
pub struct ConstantPredictor {
    pub value: f64,
}

impl Predictor for ConstantPredictor {
    fn name(&self) -> &str {
        "constant"
    }

    fn predict(&mut self, _series: &[f64], _now: usize, horizon: usize) -> Vec<f64> {
        vec![self.value.max(0.0); horizon]
    }
}

/// Precomputed model forecasts. `forecasts[a]` holds the forecast made after
/// observing second `a`, covering seconds `a + 1 ..`. Seconds without one
/// fall back to the harmonic mean.
#[derive(Debug, Clone)]
pub struct ModelPredictor {
    pub label: String,
    pub forecasts: Vec<Option<Vec<f64>>>,
    pub fallback: HarmonicMeanPredictor,
}

impl ModelPredictor {
    pub fn new(label: impl Into<String>, forecasts: Vec<Option<Vec<f64>>>) -> Self {
        ModelPredictor {
            label: label.into(),
            forecasts,
            fallback: HarmonicMeanPredictor::default(),
        }
    }
}

impl Predictor for ModelPredictor {
    fn name(&self) -> &str {
        &self.label
    }

    fn predict(&mut self, series: &[f64], now: usize, horizon: usize) -> Vec<f64> {
        let fc = now
            .checked_sub(1)
            .and_then(|a| self.forecasts.get(a))
            .and_then(|f| f.as_ref())
            .filter(|f| !f.is_empty());
        match fc {
            Some(f) => (0..horizon).map(|k| f[k.min(f.len() - 1)].max(0.0)).collect(),
            None => self.fallback.predict(series, now, horizon),
        }
    }
}
