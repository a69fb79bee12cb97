use std::collections::BTreeMap;

use serde::Serialize;

use super::mpc::mpc_select_bitrate;
use super::predictor::Predictor;
use super::qoe::{compute_qoe, QoEBreakdown, QoECoefficients, SegmentRecord};
use super::{Advance, SessionState, StreamConfig};
use crate::io::{csv_string, fmt_f64};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RateSelect,
    DownloadStart,
    DownloadDone,
    PlaybackStart,
    StallBegin,
    StallEnd,
    Skip,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::RateSelect => "rate_select",
            EventKind::DownloadStart => "download_start",
            EventKind::DownloadDone => "download_done",
            EventKind::PlaybackStart => "playback_start",
            EventKind::StallBegin => "stall_begin",
            EventKind::StallEnd => "stall_end",
            EventKind::Skip => "skip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub chunk: usize,
    /// Kbps
    pub rate: f64,
    pub buffer: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SessionTotals {
    /// Wall time at which playback began, if it did.
    pub startup_time: Option<f64>,
    pub end_time: f64,
    pub played: f64,
    pub stall: f64,
    pub skipped: f64,
    pub final_position: f64,
    pub chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionResult {
    pub predictor: String,
    pub breakdown: QoEBreakdown,
    pub segments: Vec<SegmentRecord>,
    #[serde(skip)]
    pub events: Vec<Event>,
    pub totals: SessionTotals,
    /// Ladder rates chosen per downloaded chunk, Kbps.
    #[serde(skip)]
    pub chunk_rates: Vec<f64>,
}

#[derive(Default)]
struct SegAcc {
    rates: Vec<f64>,
    lat_sum: f64,
    lat_n: usize,
    stall: f64,
    skip: f64,
}

struct Recorder<'a> {
    cfg: &'a StreamConfig,
    events: Vec<Event>,
    segs: BTreeMap<usize, SegAcc>,
    totals: SessionTotals,
    stalling: bool,
}

impl Recorder<'_> {
    fn log(&mut self, s: &SessionState, kind: EventKind, chunk: usize, rate: f64) {
        self.events.push(Event {
            time: s.t,
            kind,
            chunk,
            rate,
            buffer: s.buffer().max(0.0),
            latency: s.latency(self.cfg),
        });
    }

    fn seg(&mut self, chunk: usize) -> &mut SegAcc {
        self.segs.entry(chunk / self.cfg.chunks_per_segment).or_default()
    }

    /// Advance the clock, attributing stall to the segment being waited for.
    fn advance(&mut self, s: &mut SessionState, t1: f64) {
        let waiting_for = s.next_chunk;
        let a: Advance = s.advance_to(t1);
        self.totals.played += a.played;
        if a.stall > 0.0 {
            self.totals.stall += a.stall;
            self.seg(waiting_for).stall += a.stall;
            if !self.stalling {
                self.stalling = true;
                let dry = a.dry_at.unwrap_or(s.t);
                self.events.push(Event {
                    time: dry,
                    kind: EventKind::StallBegin,
                    chunk: waiting_for,
                    rate: 0.0,
                    buffer: 0.0,
                    latency: s.live_edge(self.cfg) - (t1 - dry) - s.pos,
                });
            }
        }
    }
}

/// Seconds at which `megabits` finish downloading when the request is issued
/// at `start`; `None` if the trace cannot deliver them before `limit`.
fn download_finish(trace: &[f64], start: f64, megabits: f64, rtt: f64, limit: f64) -> Option<f64> {
    let mut t = start + rtt;
    let mut left = megabits;
    loop {
        if t >= limit {
            return None;
        }
        let sec = t.floor() as usize;
        let rate = trace.get(sec).copied()?.max(0.0);
        let edge = (sec + 1) as f64;
        let cap = rate * (edge - t);
        if rate > 0.0 && cap >= left {
            return Some(t + left / rate);
        }
        left -= cap;
        t = edge;
    }
}

/// Play one live session over `trace` (Mbps per second) and score it.
pub fn simulate_session(
    trace: &[f64],
    predictor: &mut dyn Predictor,
    cfg: &StreamConfig,
    coeffs: &QoECoefficients,
) -> Result<SessionResult> {
    let mut problems = Vec::new();
    cfg.validate(&mut problems);
    coeffs.validate(&mut problems);
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    if (trace.len() as f64) < cfg.session_len {
        return Err(Error::TooShort(format!(
            "trace of {} s for a {} s session",
            trace.len(),
            cfg.session_len
        )));
    }
    if trace.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite(
            "throughput trace must be finite and non-negative".into(),
        ));
    }
    let d = cfg.chunk_len();
    let end = cfg.session_len;
    let mut s = SessionState::new();
    let mut rec = Recorder {
        cfg,
        events: Vec::new(),
        segs: BTreeMap::new(),
        totals: SessionTotals::default(),
        stalling: false,
    };
    let mut prev: Option<usize> = None;
    let mut chunk_rates = Vec::new();

    while s.t < end {
        let c = s.next_chunk;
        let avail = SessionState::available_at(cfg, c);
        if s.t < avail {
            rec.advance(&mut s, avail.min(end));
            if s.t >= end {
                break;
            }
        }

        let now = s.t.floor() as usize;
        let need = (s.t + cfg.mpc_horizon as f64 * d).floor() as usize - now + 1;
        let secs = predictor.predict(trace, now, need);
        let per_chunk: Vec<f64> = (0..cfg.mpc_horizon)
            .map(|k| {
                let i = ((s.t + k as f64 * d).floor() as usize - now).min(secs.len().saturating_sub(1));
                secs.get(i).copied().unwrap_or(0.0).max(0.0)
            })
            .collect();
        let rung = mpc_select_bitrate(&s, &per_chunk, cfg, coeffs, prev)?.rung;
        let rate = cfg.ladder[rung];
        rec.log(&s, EventKind::RateSelect, c, rate);
        rec.log(&s, EventKind::DownloadStart, c, rate);

        let Some(done) = download_finish(trace, s.t, cfg.chunk_megabits(rate), cfg.rtt_overhead, end) else {
            rec.advance(&mut s, end);
            break;
        };
        if done > end {
            rec.advance(&mut s, end);
            break;
        }
        rec.advance(&mut s, done);
        let started_now = s.complete_chunk(cfg);
        rec.totals.chunks += 1;
        chunk_rates.push(rate);
        prev = Some(rung);
        let latency = s.latency(cfg);
        {
            let acc = rec.seg(c);
            acc.rates.push(rate);
            acc.lat_sum += latency;
            acc.lat_n += 1;
        }
        rec.log(&s, EventKind::DownloadDone, c, rate);
        if started_now {
            rec.totals.startup_time = Some(s.t);
            rec.log(&s, EventKind::PlaybackStart, c, rate);
        }
        if rec.stalling && s.buffer() > 0.0 {
            rec.stalling = false;
            rec.log(&s, EventKind::StallEnd, c, rate);
        }
        if let Some(skipped) = s.maybe_skip(cfg) {
            rec.totals.skipped += skipped;
            let landing = (s.pos / d).round() as usize;
            rec.seg(landing).skip += skipped;
            rec.log(&s, EventKind::Skip, landing, rate);
        }
    }
    if s.t < end {
        rec.advance(&mut s, end);
    }
    rec.totals.end_time = s.t;
    rec.totals.final_position = s.pos;

    let final_latency = s.latency(cfg);
    let segments: Vec<SegmentRecord> = rec
        .segs
        .into_iter()
        .map(|(index, a)| SegmentRecord {
            index,
            latency: if a.lat_n > 0 {
                a.lat_sum / a.lat_n as f64
            } else {
                final_latency
            },
            chunk_rates: a.rates,
            stall: a.stall,
            skip: a.skip,
        })
        .collect();
    let breakdown = compute_qoe(&segments, coeffs)?;
    Ok(SessionResult {
        predictor: predictor.name().to_string(),
        breakdown,
        segments,
        events: rec.events,
        totals: rec.totals,
        chunk_rates,
    })
}

pub fn events_csv(events: &[Event]) -> Result<String> {
    csv_string(
        &["time", "kind", "chunk", "rate", "buffer", "latency"],
        events.iter().map(|e| {
            vec![
                fmt_f64(e.time),
                e.kind.name().to_string(),
                e.chunk.to_string(),
                fmt_f64(e.rate),
                fmt_f64(e.buffer),
                fmt_f64(e.latency),
            ]
        }),
    )
}
