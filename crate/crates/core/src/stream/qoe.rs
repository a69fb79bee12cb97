use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QoECoefficients {
    /// quality
    pub mu1: f64,
    /// stall seconds
    pub mu2: f64,
    /// quality switches
    pub mu3: f64,
    /// latency penalty
    pub mu4: f64,
    /// skipped seconds
    pub mu5: f64,
    /// Latency sensitivity: midpoint of the logistic penalty, seconds.
    pub omega: f64,
    /// Lowest ladder rate, Kbps.
    pub r_min: f64,
}

impl Default for QoECoefficients {
    fn default() -> Self {
        QoECoefficients {
            mu1: 0.2,
            mu2: 6.0,
            mu3: 1.0,
            mu4: 0.8,
            mu5: 1.2,
            omega: 4.0,
            r_min: 300.0,
        }
    }
}

impl QoECoefficients {
    pub fn validate(&self, problems: &mut Vec<String>) {
        for (name, v) in [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("mu3", self.mu3),
            ("mu4", self.mu4),
            ("mu5", self.mu5),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("qoe.{name} must be non-negative"));
            }
        }
        if !(self.r_min > 0.0) {
            problems.push("qoe.r_min must be positive".into());
        }
        if !self.omega.is_finite() {
            problems.push("qoe.omega must be finite".into());
        }
    }
}

/// `ln(r / R_min)`.
pub fn perceptible_quality(rate: f64, r_min: f64) -> Result<f64> {
    if !(r_min > 0.0) || !(rate >= r_min) {
        return Err(Error::InvalidArgument(format!("rate {rate} below minimum {r_min}")));
    }
    Ok((rate / r_min).ln())
}

/// Logistic latency penalty `1/(1+e^(ω−l)) − 1/(1+e^ω)`; zero at `l = 0`.
pub fn latency_penalty(latency: f64, omega: f64) -> f64 {
    logistic(latency - omega) - logistic(-omega)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Playback outcome attributed to one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SegmentRecord {
    pub index: usize,
    /// Rates of the segment's downloaded chunks in order, Kbps.
    pub chunk_rates: Vec<f64>,
    pub stall: f64,
    /// Mean live latency at the segment's chunk completions.
    pub latency: f64,
    /// Skipped media seconds landing in this segment.
    pub skip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QoEBreakdown {
    pub segments: usize,
    /// Σ mean chunk quality per segment.
    pub quality: f64,
    pub stall: f64,
    /// Σ |ΔQ| between consecutive chunks.
    pub switch: f64,
    /// Σ ψ(l_i)
    pub latency: f64,
    pub skip: f64,
    /// `μ1·quality − μ2·stall − μ3·switch − μ4·latency − μ5·skip`
    pub qoe: f64,
    /// `qoe / segments`
    pub qoe_per_segment: f64,
}

pub fn compute_qoe(records: &[SegmentRecord], c: &QoECoefficients) -> Result<QoEBreakdown> {
    if records.is_empty() {
        return Err(Error::Empty("no segments to score".into()));
    }
    let (mut quality, mut stall, mut switch, mut latency, mut skip) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut prev_q: Option<f64> = None;
    for r in records {
        if !r.chunk_rates.is_empty() {
            let mut q_sum = 0.0;
            for &rate in &r.chunk_rates {
                let q = perceptible_quality(rate, c.r_min)?;
                q_sum += q;
                if let Some(p) = prev_q {
                    switch += (q - p).abs();
                }
                prev_q = Some(q);
            }
            quality += q_sum / r.chunk_rates.len() as f64;
        }
        stall += r.stall;
        latency += latency_penalty(r.latency, c.omega);
        skip += r.skip;
    }
    let qoe = c.mu1 * quality - c.mu2 * stall - c.mu3 * switch - c.mu4 * latency - c.mu5 * skip;
    Ok(QoEBreakdown {
        segments: records.len(),
        quality,
        stall,
        switch,
        latency,
        skip,
        qoe,
        qoe_per_segment: qoe / records.len() as f64,
    })
}
