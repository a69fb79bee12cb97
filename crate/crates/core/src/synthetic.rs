//! Synthetic non-IID client traces: a per-client offset and sinusoid plus
//! AR(1) noise, with radio features that track throughput noisily.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::trace::{ClientTrace, RadioType, TraceRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticClient {
    /// Mean throughput, Mbps.
    pub offset: f64,
    pub amplitude: f64,
    /// Sinusoid period, seconds.
    pub period: f64,
    pub ar: f64,
    /// Innovation stddev of the AR(1) noise, Mbps.
    pub noise: f64,
    /// Per-second probability of entering a deep fade.
    #[serde(default)]
    pub outage_rate: f64,
    /// dB of RSRP per unit of `ln(1 + throughput)`.
    #[serde(default = "default_radio_gain")]
    pub radio_gain: f64,
    /// Stddev of the radio measurement noise, dB.
    #[serde(default = "default_radio_noise")]
    pub radio_noise: f64,
}

fn default_radio_gain() -> f64 {
    12.0
}

fn default_radio_noise() -> f64 {
    1.5
}

/// Throughput multiplier during a fade and its length range, seconds.
const FADE_DEPTH: f64 = 0.1;
const FADE_LEN: (u32, u32) = (2, 6);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Samples per client at 1 Hz.
    pub length: usize,
    pub clients: Vec<SyntheticClient>,
}

impl SyntheticSpec {
    /// `count` clients whose offsets span `lo..=hi` Mbps, with amplitude,
    /// period, AR coefficient and noise varied per client.
    pub fn spread(count: usize, length: usize, lo: f64, hi: f64) -> Self {
        let clients = (0..count)
            .map(|k| {
                let u = if count > 1 { k as f64 / (count - 1) as f64 } else { 0.0 };
                let offset = lo + (hi - lo) * u;
                // A second, scrambled coordinate so parameters do not all rise together.
                let v = ((k * 5 + 2) % count.max(1)) as f64 / count.max(1) as f64;
                SyntheticClient {
                    offset,
                    amplitude: offset * (0.25 + 0.2 * v),
                    period: 40.0 + 80.0 * v,
                    ar: 0.6 + 0.3 * (1.0 - v),
                    noise: offset * (0.04 + 0.04 * u),
                    outage_rate: 0.0,
                    radio_gain: 6.0 + 12.0 * v,
                    radio_noise: 1.0 + 3.0 * (1.0 - u),
                }
            })
            .collect();
        SyntheticSpec { length, clients }
    }

    pub fn validate(&self, problems: &mut Vec<String>) {
        if self.length < 2 {
            problems.push("synthetic.length must be at least 2".into());
        }
        if self.clients.is_empty() {
            problems.push("synthetic spec needs at least one client".into());
        }
        for (k, c) in self.clients.iter().enumerate() {
            if !(c.ar > -1.0 && c.ar < 1.0) {
                problems.push(format!("synthetic client {k}: AR coefficient {} outside (-1, 1)", c.ar));
            }
            if !(c.period > 0.0) {
                problems.push(format!("synthetic client {k}: period must be positive"));
            }
            if !(c.noise >= 0.0) || !(c.amplitude >= 0.0) || !c.offset.is_finite() {
                problems.push(format!(
                    "synthetic client {k}: noise and amplitude must be non-negative"
                ));
            }
            if !(0.0..=1.0).contains(&c.outage_rate) {
                problems.push(format!("synthetic client {k}: outage_rate must lie in [0, 1]"));
            }
            if !(c.radio_noise >= 0.0) || !c.radio_gain.is_finite() {
                problems.push(format!("synthetic client {k}: radio_noise must be non-negative"));
            }
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<ClientTrace>> {
    let mut problems = Vec::new();
    spec.validate(&mut problems);
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    spec.clients
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut rng = crate::rng::substream(seed, "generator", &[k as u64]);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let (mut lat, mut lon) = (
                44.97 + rng.random_range(-0.05..0.05),
                -93.26 + rng.random_range(-0.05..0.05),
            );
            let mut speed: f64 = rng.random_range(0.0..15.0);
            let mut e = 0.0;
            let mut fade = 0u32;
            let mut records = Vec::with_capacity(spec.length);
            for t in 0..spec.length {
                e = c.ar * e + c.noise * std.sample(&mut rng);
                let wave = c.amplitude * (std::f64::consts::TAU * t as f64 / c.period + phase).sin();
                if fade == 0 && c.outage_rate > 0.0 && rng.random_bool(c.outage_rate) {
                    fade = rng.random_range(FADE_LEN.0..=FADE_LEN.1);
                }
                let depth = if fade > 0 {
                    fade -= 1;
                    FADE_DEPTH
                } else {
                    1.0
                };
                let tput = ((c.offset + wave + e) * depth).max(0.0);
                speed = (speed + 0.5 * std.sample(&mut rng)).clamp(0.0, 35.0);
                lat += 1e-5 * speed * std.sample(&mut rng);
                lon += 1e-5 * speed * std.sample(&mut rng);
                let level = (1.0 + tput).ln();
                let mut r = TraceRecord::new(t as f64, tput);
                r.latitude = lat;
                r.longitude = lon;
                r.speed = speed;
                r.rsrp = -120.0 + c.radio_gain * level + c.radio_noise * std.sample(&mut rng);
                r.sinr = -5.0 + 6.0 * level + 1.0 * std.sample(&mut rng);
                r.radio_type = RadioType::NrNsa;
                records.push(r);
            }
            Ok(ClientTrace {
                client_id: format!("syn{k:02}"),
                dataset_tag: "synthetic".into(),
                records,
                sample_period: 1.0,
            })
        })
        .collect()
}
