use super::qoe::{latency_penalty, perceptible_quality, QoECoefficients};
use super::{SessionState, StreamConfig};
use crate::{Error, Result};

/// Floor for predicted throughput so download times stay finite.
const MIN_THROUGHPUT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MpcDecision {
    /// Ladder index for the next chunk.
    pub rung: usize,
    /// Planned score of the best sequence.
    pub score: f64,
}

/// Enumerate every ladder sequence over the next `mpc_horizon` chunks,
/// simulate each against `predicted` (Mbps per chunk) and return the first
/// rate of the best one. Ties go to the lower rate.
///
/// After the horizon the last rate of a sequence is assumed held for
/// `terminal_chunks` more chunks and scored in closed form, so that a switch
/// is weighed against more than one segment of quality.
pub fn mpc_select_bitrate(
    state: &SessionState,
    predicted: &[f64],
    cfg: &StreamConfig,
    coeffs: &QoECoefficients,
    prev_rung: Option<usize>,
) -> Result<MpcDecision> {
    if cfg.ladder.is_empty() {
        return Err(Error::InvalidArgument("empty bitrate ladder".into()));
    }
    if predicted.len() < cfg.mpc_horizon {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for a horizon of {}",
            predicted.len(),
            cfg.mpc_horizon
        )));
    }
    let quality: Vec<f64> = cfg
        .ladder
        .iter()
        .map(|&r| perceptible_quality(r, coeffs.r_min))
        .collect::<Result<_>>()?;
    let search = Search {
        cfg,
        coeffs,
        quality: &quality,
        predicted: &predicted[..cfg.mpc_horizon],
    };
    let mut best = MpcDecision {
        rung: 0,
        score: f64::NEG_INFINITY,
    };
    for first in 0..cfg.ladder.len() {
        let mut s = *state;
        let gain = search.step(&mut s, 0, first, prev_rung.map(|p| quality[p]));
        let score = search.best_from(&s, 1, first, gain);
        if score > best.score + 1e-12 {
            best = MpcDecision { rung: first, score };
        }
    }
    Ok(best)
}

struct Search<'a> {
    cfg: &'a StreamConfig,
    coeffs: &'a QoECoefficients,
    quality: &'a [f64],
    predicted: &'a [f64],
}

impl Search<'_> {
    /// Planned QoE of downloading one chunk at `rung` as the `k`-th decision.
    fn step(&self, s: &mut SessionState, k: usize, rung: usize, prev_q: Option<f64>) -> f64 {
        let (cfg, c) = (self.cfg, self.coeffs);
        let share = cfg.chunk_len() / cfg.segment_len;
        let avail = SessionState::available_at(cfg, s.next_chunk);
        let mut stall = 0.0;
        if s.t < avail {
            stall += s.advance_to(avail).stall;
        }
        let tput = self.predicted[k].max(MIN_THROUGHPUT);
        let delta = cfg.chunk_megabits(cfg.ladder[rung]) / tput + cfg.rtt_overhead;
        stall += s.advance_to(s.t + delta).stall;
        s.complete_chunk(cfg);
        let latency = s.latency(cfg);
        let skip = s.maybe_skip(cfg).unwrap_or(0.0);
        let q = self.quality[rung];
        let switch = prev_q.map_or(0.0, |p| (q - p).abs());
        c.mu1 * share * q
            - c.mu3 * switch
            - c.mu2 * stall
            - c.mu4 * share * latency_penalty(latency, c.omega)
            - c.mu5 * skip
    }

    fn best_from(&self, s: &SessionState, k: usize, last: usize, acc: f64) -> f64 {
        if k == self.predicted.len() {
            return acc + self.terminal(s, last);
        }
        let mut best = f64::NEG_INFINITY;
        for rung in 0..self.cfg.ladder.len() {
            let mut next = *s;
            let gain = self.step(&mut next, k, rung, Some(self.quality[last]));
            best = best.max(self.best_from(&next, k + 1, rung, acc + gain));
        }
        best
    }

    /// Closed-form score of holding `rung` for `terminal_chunks` more chunks
    /// at the last predicted throughput. Before playback starts, latency
    /// accumulated until start-up is charged as the skip it will trigger.
    fn terminal(&self, s: &SessionState, rung: usize) -> f64 {
        let (cfg, c) = (self.cfg, self.coeffs);
        let mut n = cfg.terminal_chunks as f64;
        if n == 0.0 {
            return 0.0;
        }
        let d = cfg.chunk_len();
        let share = d / cfg.segment_len;
        let tput = self.predicted[self.predicted.len() - 1].max(MIN_THROUGHPUT);
        let delta = cfg.chunk_megabits(cfg.ladder[rung]) / tput + cfg.rtt_overhead;
        let q = self.quality[rung];
        let mut latency = s.latency(cfg);
        let mut buffer = s.buffer().max(0.0);
        let mut score = 0.0;

        if !s.started {
            let need = ((cfg.start_after as f64 * cfg.segment_len - buffer) / d - 1e-9)
                .ceil()
                .max(0.0);
            let k = need.min(n);
            let start_latency = latency + k * delta;
            score += k * share * (c.mu1 * q - c.mu4 * latency_penalty(0.5 * (latency + start_latency), c.omega));
            latency = start_latency;
            buffer += k * d;
            n -= k;
            if k < need {
                return score;
            }
            if latency > cfg.max_latency {
                let skip = latency - cfg.playback_threshold;
                score -= c.mu5 * skip;
                buffer = (buffer - skip).max(0.0);
                latency = cfg.playback_threshold;
            }
        }

        let stall = (n * (delta - d) - buffer).max(0.0);
        let end = latency + stall;
        let (skip, mean_latency) = if end > cfg.max_latency {
            (end - cfg.playback_threshold, 0.5 * (latency + cfg.max_latency))
        } else {
            (0.0, 0.5 * (latency + end))
        };
        score + n * share * (c.mu1 * q - c.mu4 * latency_penalty(mean_latency, c.omega)) - c.mu2 * stall - c.mu5 * skip
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn playing(buffer: f64) -> SessionState {
        SessionState {
            t: 20.0,
            pos: 22.0 - 2.0,
            downloaded: 20.0 + buffer,
            started: true,
            next_chunk: ((20.0 + buffer) / 0.2f64).round() as usize,
        }
    }

    #[test]
    fn ample_throughput_keeps_top_rate() {
        let cfg = StreamConfig::default();
        let c = QoECoefficients::default();
        let d = mpc_select_bitrate(&playing(2.0), &[12.0; 5], &cfg, &c, Some(5)).unwrap();
        assert_eq!(d.rung, 5);
    }

    #[test]
    fn starved_link_picks_lowest() {
        let cfg = StreamConfig::default();
        let c = QoECoefficients::default();
        for prev in [None, Some(0), Some(3), Some(5)] {
            let d = mpc_select_bitrate(&playing(1.0), &[0.2; 5], &cfg, &c, prev).unwrap();
            assert_eq!(d.rung, 0, "prev {prev:?}");
        }
    }

    #[test]
    fn short_prediction_rejected() {
        let cfg = StreamConfig::default();
        let c = QoECoefficients::default();
        assert!(mpc_select_bitrate(&playing(1.0), &[1.0; 3], &cfg, &c, None).is_err());
        let empty = StreamConfig { ladder: vec![], ..cfg };
        assert!(mpc_select_bitrate(&playing(1.0), &[1.0; 5], &empty, &c, None).is_err());
    }
}
