//! Live-streaming session simulator with chunk-level model-predictive bitrate
//! control.
//!
//! The encoder produces chunks in real time; a chunk can be requested only
//! once it is fully encoded. The client downloads chunks sequentially over a
//! 1 Hz throughput trace, starts playback once enough media is buffered,
//! stalls when the buffer runs dry and jumps forward when it falls too far
//! behind the live edge. Sessions are scored with the live QoE objective in
//! [`qoe`].

mod mpc;
mod predictor;
mod qoe;
mod sim;

use serde::{Deserialize, Serialize};

pub use mpc::{mpc_select_bitrate, MpcDecision};
pub use predictor::{ConstantPredictor, HarmonicMeanPredictor, ModelPredictor, OraclePredictor, Predictor};
pub use qoe::{compute_qoe, latency_penalty, perceptible_quality, QoEBreakdown, QoECoefficients, SegmentRecord};
pub use sim::{events_csv, simulate_session, Event, EventKind, SessionResult, SessionTotals};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    /// Bitrate ladder, Kbps, strictly increasing.
    pub ladder: Vec<f64>,
    /// Seconds.
    pub segment_len: f64,
    pub chunks_per_segment: usize,
    /// Target live latency after a skip, seconds.
    pub playback_threshold: f64,
    /// Latency above which playback skips forward, seconds.
    pub max_latency: f64,
    /// Segments a joining client may request from the encoder backlog.
    pub join_prefetch_max: usize,
    /// Segments buffered before playback starts.
    pub start_after: usize,
    /// Segments already encoded when the client joins.
    pub join_backlog_segments: usize,
    /// Idle time per chunk request, seconds.
    pub rtt_overhead: f64,
    /// Chunks enumerated by the controller.
    pub mpc_horizon: usize,
    /// Chunks the controller's terminal estimate holds the last rate for.
    pub terminal_chunks: usize,
    /// Seconds.
    pub session_len: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            ladder: vec![300.0, 500.0, 1000.0, 2000.0, 3000.0, 6000.0],
            segment_len: 1.0,
            chunks_per_segment: 5,
            playback_threshold: 2.0,
            max_latency: 5.0,
            join_prefetch_max: 3,
            start_after: 2,
            join_backlog_segments: 2,
            rtt_overhead: 0.08,
            mpc_horizon: 5,
            terminal_chunks: 25,
            session_len: 110.0,
        }
    }
}

impl StreamConfig {
    pub fn chunk_len(&self) -> f64 {
        self.segment_len / self.chunks_per_segment as f64
    }

    /// Megabits in one chunk at `rate` Kbps.
    pub fn chunk_megabits(&self, rate: f64) -> f64 {
        rate * self.chunk_len() / 1000.0
    }

    pub fn validate(&self, problems: &mut Vec<String>) {
        if self.ladder.is_empty() {
            problems.push("stream.ladder must not be empty".into());
        }
        if self.ladder.iter().any(|r| !(*r > 0.0)) || self.ladder.windows(2).any(|w| w[1] <= w[0]) {
            problems.push("stream.ladder must be positive and strictly increasing".into());
        }
        if !(self.segment_len > 0.0) || self.chunks_per_segment == 0 {
            problems.push("stream.segment_len and chunks_per_segment must be positive".into());
        }
        if !(self.playback_threshold >= 0.0 && self.max_latency > self.playback_threshold) {
            problems.push("stream.max_latency must exceed playback_threshold".into());
        }
        if self.start_after == 0 || self.start_after > self.join_prefetch_max {
            problems.push("stream.start_after must lie in 1..=join_prefetch_max".into());
        }
        if self.join_backlog_segments > self.join_prefetch_max {
            problems.push("stream.join_backlog_segments must not exceed join_prefetch_max".into());
        }
        if !(self.rtt_overhead >= 0.0) {
            problems.push("stream.rtt_overhead must be non-negative".into());
        }
        if !(1..=8).contains(&self.mpc_horizon) {
            problems.push("stream.mpc_horizon must lie in 1..=8".into());
        }
        if !(self.session_len > 0.0) {
            problems.push("stream.session_len must be positive".into());
        }
    }
}

/// Player state shared by the simulator and the controller's rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionState {
    /// Wall clock, seconds since join.
    pub t: f64,
    /// Playback position, media seconds.
    pub pos: f64,
    /// End of the downloaded media, media seconds.
    pub downloaded: f64,
    pub started: bool,
    /// Next chunk to request.
    pub next_chunk: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Advance {
    pub played: f64,
    pub stall: f64,
    /// Wall time at which the buffer ran dry, if it did.
    pub dry_at: Option<f64>,
}

impl SessionState {
    pub fn new() -> Self {
        SessionState {
            t: 0.0,
            pos: 0.0,
            downloaded: 0.0,
            started: false,
            next_chunk: 0,
        }
    }

    /// Encoded media seconds at the current time.
    pub fn live_edge(&self, cfg: &StreamConfig) -> f64 {
        self.t + cfg.join_backlog_segments as f64 * cfg.segment_len
    }

    pub fn latency(&self, cfg: &StreamConfig) -> f64 {
        self.live_edge(cfg) - self.pos
    }

    pub fn buffer(&self) -> f64 {
        self.downloaded - self.pos
    }

    /// Wall time at which chunk `c` is fully encoded.
    pub fn available_at(cfg: &StreamConfig, c: usize) -> f64 {
        (c + 1) as f64 * cfg.chunk_len() - cfg.join_backlog_segments as f64 * cfg.segment_len
    }

    /// Move the clock to `t1`, playing from the buffer once started.
    pub(crate) fn advance_to(&mut self, t1: f64) -> Advance {
        let dt = (t1 - self.t).max(0.0);
        let t0 = self.t;
        self.t = t1.max(self.t);
        if !self.started || dt == 0.0 {
            return Advance::default();
        }
        let b = self.buffer().max(0.0);
        if b >= dt {
            self.pos += dt;
            Advance {
                played: dt,
                stall: 0.0,
                dry_at: None,
            }
        } else {
            self.pos = self.downloaded;
            Advance {
                played: b,
                stall: dt - b,
                dry_at: Some(t0 + b),
            }
        }
    }

    /// Record the download of the next chunk; true when playback starts now.
    pub(crate) fn complete_chunk(&mut self, cfg: &StreamConfig) -> bool {
        self.downloaded += cfg.chunk_len();
        self.next_chunk += 1;
        if !self.started && self.buffer() >= cfg.start_after as f64 * cfg.segment_len - 1e-9 {
            self.started = true;
            return true;
        }
        false
    }

    /// Jump forward to the first chunk boundary at which latency is back
    /// under the playback threshold. Returns the skipped media seconds.
    pub(crate) fn maybe_skip(&mut self, cfg: &StreamConfig) -> Option<f64> {
        if !self.started || self.latency(cfg) <= cfg.max_latency {
            return None;
        }
        let d = cfg.chunk_len();
        let target = ((self.live_edge(cfg) - cfg.playback_threshold) / d - 1e-9).ceil() * d;
        if target <= self.pos {
            return None;
        }
        let skipped = target - self.pos;
        self.pos = target;
        if self.downloaded < target {
            self.downloaded = target;
            self.next_chunk = (target / d).round() as usize;
        }
        Some(skipped)
    }
}

impl Default for SessionState {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let mut p = Vec::new();
        StreamConfig::default().validate(&mut p);
        assert!(p.is_empty(), "{p:?}");
        assert!((StreamConfig::default().chunk_len() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn bad_ladder_rejected() {
        let cfg = StreamConfig {
            ladder: vec![500.0, 300.0],
            ..Default::default()
        };
        let mut p = Vec::new();
        cfg.validate(&mut p);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn skip_restores_threshold() {
        let cfg = StreamConfig::default();
        let mut s = SessionState {
            t: 10.0,
            pos: 5.9,
            downloaded: 6.0,
            started: true,
            next_chunk: 30,
        };
        assert!((s.latency(&cfg) - 6.1).abs() < 1e-12);
        let skipped = s.maybe_skip(&cfg).unwrap();
        assert!((s.pos - 10.0).abs() < 1e-9);
        assert!((skipped - 4.1).abs() < 1e-9);
        assert_eq!(s.next_chunk, 50);
        assert!(s.latency(&cfg) <= cfg.playback_threshold + 1e-9);
    }
}
