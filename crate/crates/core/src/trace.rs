//! Canonical throughput traces and the adapters that produce them.
//!
//! Public 5G datasets disagree on column names, units and timestamp formats.
//! A [`ColumnMapping`] describes one dataset's layout; [`load_trace`] turns a
//! delimited file into a [`ClientTrace`] with throughput in Mbps and
//! timestamps rebased to zero, and [`clean_and_resample`] puts it on a
//! regular 1 Hz grid.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::io::fmt_f64;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RadioType {
    Lte,
    NrNsa,
    NrSa,
    Unknown,
}

impl RadioType {
    pub fn as_str(self) -> &'static str {
        match self {
            RadioType::Lte => "LTE",
            RadioType::NrNsa => "NR-NSA",
            RadioType::NrSa => "NR-SA",
            RadioType::Unknown => "UNKNOWN",
        }
    }

    /// Lenient tag parser covering the spellings used by common datasets.
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_uppercase().replace(['_', ' '], "-").as_str() {
            "LTE" | "4G" | "LTE-A" => RadioType::Lte,
            "NR-NSA" | "NSA" | "5G-NSA" | "NR" | "5G" => RadioType::NrNsa,
            "NR-SA" | "SA" | "5G-SA" => RadioType::NrSa,
            _ => RadioType::Unknown,
        }
    }
}

impl fmt::Display for RadioType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Canonical fields shared by every supported dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Timestamp,
    Latitude,
    Longitude,
    Speed,
    Rsrp,
    Sinr,
    Throughput,
    RadioType,
}

impl Field {
    /// Export column order.
    pub const ALL: [Field; 8] = [
        Field::Timestamp,
        Field::Latitude,
        Field::Longitude,
        Field::Speed,
        Field::Rsrp,
        Field::Sinr,
        Field::Throughput,
        Field::RadioType,
    ];

    pub const MANDATORY: [Field; 2] = [Field::Timestamp, Field::Throughput];

    pub fn name(self) -> &'static str {
        match self {
            Field::Timestamp => "timestamp",
            Field::Latitude => "latitude",
            Field::Longitude => "longitude",
            Field::Speed => "speed",
            Field::Rsrp => "rsrp",
            Field::Sinr => "sinr",
            Field::Throughput => "throughput",
            Field::RadioType => "radio_type",
        }
    }

    pub fn is_mandatory(self) -> bool {
        Self::MANDATORY.contains(&self)
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown canonical field `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Seconds since trace start.
    pub timestamp: f64,
    pub latitude: f64,
    pub longitude: f64,
    /// m/s
    pub speed: f64,
    /// dBm
    pub rsrp: f64,
    /// dB
    pub sinr: f64,
    /// Mbps, non-negative.
    pub throughput: f64,
    pub radio_type: RadioType,
    pub extras: BTreeMap<String, f64>,
}

impl TraceRecord {
    pub fn new(timestamp: f64, throughput: f64) -> Self {
        TraceRecord {
            timestamp,
            latitude: 0.0,
            longitude: 0.0,
            speed: 0.0,
            rsrp: 0.0,
            sinr: 0.0,
            throughput,
            radio_type: RadioType::Unknown,
            extras: BTreeMap::new(),
        }
    }

    /// Value of a numeric canonical field or an extra.
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "timestamp" => Some(self.timestamp),
            "latitude" => Some(self.latitude),
            "longitude" => Some(self.longitude),
            "speed" => Some(self.speed),
            "rsrp" => Some(self.rsrp),
            "sinr" => Some(self.sinr),
            "throughput" => Some(self.throughput),
            other => self.extras.get(other).copied(),
        }
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "timestamp" => self.timestamp = value,
            "latitude" => self.latitude = value,
            "longitude" => self.longitude = value,
            "speed" => self.speed = value,
            "rsrp" => self.rsrp = value,
            "sinr" => self.sinr = value,
            "throughput" => self.throughput = value,
            other => match self.extras.get_mut(other) {
                Some(v) => *v = value,
                None => return Err(Error::InvalidArgument(format!("record has no feature `{other}`"))),
            },
        }
        Ok(())
    }
}

const CONTINUOUS: [&str; 6] = ["latitude", "longitude", "speed", "rsrp", "sinr", "throughput"];

#[derive(Debug, Clone, PartialEq)]
pub struct ClientTrace {
    pub client_id: String,
    pub dataset_tag: String,
    pub records: Vec<TraceRecord>,
    /// Seconds between samples.
    pub sample_period: f64,
}

impl ClientTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn throughput(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.throughput).collect()
    }

    /// Column of a numeric feature; `None` if any record lacks it.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.get(name)).collect()
    }

    /// Names of every continuous feature: the canonical ones plus extras.
    pub fn continuous_features(&self) -> Vec<String> {
        let mut names: Vec<String> = CONTINUOUS.iter().map(|s| s.to_string()).collect();
        if let Some(first) = self.records.first() {
            names.extend(first.extras.keys().cloned());
        }
        names
    }
}

/// How one dataset's columns map onto the canonical schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    /// canonical field name → source column name
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
    /// canonical field name → multiplicative unit conversion (e.g. 1e-3 for Kbps)
    #[serde(default)]
    pub scale: BTreeMap<String, f64>,
    /// Cell values treated as missing.
    #[serde(default = "default_sentinels")]
    pub sentinels: Vec<String>,
    /// Extra source columns kept as named numeric features.
    #[serde(default)]
    pub extras: Vec<String>,
    /// chrono format for non-numeric timestamps, e.g. `%Y.%m.%d_%H.%M.%S`.
    #[serde(default)]
    pub timestamp_format: Option<String>,
    #[serde(default)]
    pub dataset_tag: String,
}

fn default_sentinels() -> Vec<String> {
    ["", "-", "NA", "N/A", "NaN", "nan", "null", "None"]
        .into_iter()
        .map(String::from)
        .collect()
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            columns: BTreeMap::new(),
            scale: BTreeMap::new(),
            sentinels: default_sentinels(),
            extras: Vec::new(),
            timestamp_format: None,
            dataset_tag: String::new(),
        }
    }
}

impl ColumnMapping {
    /// Every canonical field read from the column of the same name.
    pub fn canonical() -> Self {
        let mut m = Self::default();
        for f in Field::ALL {
            m.columns.insert(f.name().into(), f.name().into());
        }
        m
    }

    pub fn with_column(mut self, field: Field, source: &str) -> Self {
        self.columns.insert(field.name().into(), source.into());
        self
    }

    pub fn with_scale(mut self, field: Field, factor: f64) -> Self {
        self.scale.insert(field.name().into(), factor);
        self
    }

    pub fn with_extra(mut self, source: &str) -> Self {
        self.extras.push(source.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for key in self.columns.keys().chain(self.scale.keys()) {
            if key.parse::<Field>().is_err() {
                problems.push(format!("`{key}` is not a canonical field"));
            }
        }
        for f in Field::MANDATORY {
            if !self.columns.contains_key(f.name()) {
                problems.push(format!("mandatory field `{}` is not mapped", f.name()));
            }
        }
        let mut seen = BTreeMap::new();
        for (field, src) in &self.columns {
            if let Some(other) = seen.insert(src, field) {
                problems.push(format!("source column `{src}` mapped to both `{other}` and `{field}`"));
            }
        }
        for (field, k) in &self.scale {
            if !k.is_finite() || *k <= 0.0 {
                problems.push(format!("scale for `{field}` must be positive"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    fn source(&self, f: Field) -> Option<&str> {
        self.columns.get(f.name()).map(String::as_str)
    }

    fn factor(&self, f: Field) -> f64 {
        self.scale.get(f.name()).copied().unwrap_or(1.0)
    }

    fn is_sentinel(&self, s: &str) -> bool {
        self.sentinels.iter().any(|x| x == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTrace {
    pub trace: ClientTrace,
    /// Rows dropped for a missing or invalid mandatory value.
    pub dropped: usize,
}

enum Cell {
    Value(f64),
    Missing,
}

/// Read a delimited (comma or tab) file with a header row.
pub fn load_trace(path: &Path, mapping: &ColumnMapping) -> Result<LoadedTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let client_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("client")
        .to_string();
    parse_trace(&text, client_id, mapping)
}

/// As [`load_trace`], from in-memory text.
pub fn parse_trace(text: &str, client_id: String, mapping: &ColumnMapping) -> Result<LoadedTrace> {
    mapping.validate()?;
    let header_line = text.lines().find(|l| !l.trim().is_empty());
    let Some(header_line) = header_line else {
        return Err(Error::Empty(format!("{client_id}: no header row")));
    };
    let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let mut numeric: Vec<(Field, usize)> = Vec::new();
    let mut radio_col = None;
    for f in Field::ALL {
        let Some(src) = mapping.source(f) else { continue };
        let idx = col(src).ok_or_else(|| {
            if f.is_mandatory() {
                Error::MissingColumn(src.to_string())
            } else {
                Error::MissingColumn(format!("{src} (mapped to {})", f.name()))
            }
        })?;
        if f == Field::RadioType {
            radio_col = Some(idx);
        } else {
            numeric.push((f, idx));
        }
    }
    let extra_cols: Vec<(String, usize)> = mapping
        .extras
        .iter()
        .map(|e| {
            col(e)
                .map(|i| (e.clone(), i))
                .ok_or_else(|| Error::MissingColumn(e.clone()))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut dropped = 0;
    let mut optional_missing: Vec<(usize, String)> = Vec::new();
    for (row_no, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = row_no + 2;
        let mut rec = TraceRecord::new(0.0, 0.0);
        let mut drop = false;
        for &(f, idx) in &numeric {
            let raw = row.get(idx).unwrap_or("");
            let cell = if f == Field::Timestamp {
                parse_timestamp(raw, mapping, row_no)?
            } else {
                parse_cell(raw, mapping, f.name(), row_no)?
            };
            match cell {
                Cell::Value(v) => {
                    let v = v * mapping.factor(f);
                    if f == Field::Throughput && v < 0.0 {
                        drop = true;
                    }
                    rec.set(f.name(), v)?;
                }
                Cell::Missing if f.is_mandatory() => drop = true,
                Cell::Missing => optional_missing.push((records.len(), f.name().to_string())),
            }
        }
        for (name, idx) in &extra_cols {
            match parse_cell(row.get(*idx).unwrap_or(""), mapping, name, row_no)? {
                Cell::Value(v) => {
                    rec.extras.insert(name.clone(), v);
                }
                Cell::Missing => {
                    rec.extras.insert(name.clone(), f64::NAN);
                    optional_missing.push((records.len(), name.clone()));
                }
            }
        }
        if let Some(idx) = radio_col {
            rec.radio_type = RadioType::parse(row.get(idx).unwrap_or(""));
        }
        if drop {
            dropped += 1;
            optional_missing.retain(|(i, _)| *i != records.len());
        } else {
            records.push(rec);
        }
    }
    if records.is_empty() {
        return Err(Error::Empty(format!("{client_id}: no usable rows")));
    }
    fill_optional(&mut records, &optional_missing);

    records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let t0 = records[0].timestamp;
    for r in &mut records {
        r.timestamp -= t0;
    }
    let sample_period = median_step(&records);
    Ok(LoadedTrace {
        trace: ClientTrace {
            client_id,
            dataset_tag: mapping.dataset_tag.clone(),
            records,
            sample_period,
        },
        dropped,
    })
}

fn parse_cell(raw: &str, mapping: &ColumnMapping, column: &str, row: usize) -> Result<Cell> {
    if mapping.is_sentinel(raw) {
        return Ok(Cell::Missing);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Cell::Value(v)),
        Ok(_) => Ok(Cell::Missing),
        Err(_) => Err(Error::NonNumeric {
            column: column.to_string(),
            value: raw.to_string(),
            row,
        }),
    }
}

fn parse_timestamp(raw: &str, mapping: &ColumnMapping, row: usize) -> Result<Cell> {
    if let Some(fmt) = &mapping.timestamp_format {
        if mapping.is_sentinel(raw) {
            return Ok(Cell::Missing);
        }
        let dt = chrono::NaiveDateTime::parse_from_str(raw, fmt).map_err(|_| Error::NonNumeric {
            column: "timestamp".into(),
            value: raw.to_string(),
            row,
        })?;
        let t = dt.and_utc();
        return Ok(Cell::Value(
            t.timestamp() as f64 + f64::from(t.timestamp_subsec_millis()) / 1e3,
        ));
    }
    parse_cell(raw, mapping, "timestamp", row)
}

/// Missing optional values take the previous valid value in the column, or
/// the next one at the head; a column with no valid value becomes 0.
fn fill_optional(records: &mut [TraceRecord], missing: &[(usize, String)]) {
    let mut names: Vec<&String> = missing.iter().map(|(_, n)| n).collect();
    names.sort();
    names.dedup();
    for name in names {
        let holes: Vec<usize> = missing.iter().filter(|(_, n)| n == name).map(|(i, _)| *i).collect();
        let is_hole = |i: usize| holes.binary_search(&i).is_ok();
        let first_valid = (0..records.len()).find(|&i| !is_hole(i)).map(|i| records[i].get(name));
        let mut last = first_valid.flatten().unwrap_or(0.0);
        for i in 0..records.len() {
            if is_hole(i) {
                let _ = records[i].set(name, last);
            } else if let Some(v) = records[i].get(name) {
                last = v;
            }
        }
    }
}

fn median_step(records: &[TraceRecord]) -> f64 {
    let mut steps: Vec<f64> = records
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .filter(|d| *d > 0.0)
        .collect();
    if steps.is_empty() {
        return 1.0;
    }
    steps.sort_by(f64::total_cmp);
    steps[steps.len() / 2]
}

/// Canonical delimited export: the fixed columns, then extras by name.
pub fn export_trace(trace: &ClientTrace) -> String {
    let extras: Vec<String> = trace
        .records
        .first()
        .map(|r| r.extras.keys().cloned().collect())
        .unwrap_or_default();
    let mut out = Field::ALL.map(Field::name).join(",");
    for e in &extras {
        out.push(',');
        out.push_str(e);
    }
    out.push('\n');
    for r in &trace.records {
        let mut cells: Vec<String> = [
            r.timestamp,
            r.latitude,
            r.longitude,
            r.speed,
            r.rsrp,
            r.sinr,
            r.throughput,
        ]
        .iter()
        .map(|v| fmt_f64(*v))
        .collect();
        cells.push(r.radio_type.as_str().to_string());
        cells.extend(
            extras
                .iter()
                .map(|e| fmt_f64(r.extras.get(e).copied().unwrap_or(f64::NAN))),
        );
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Mapping that reloads an [`export_trace`] file, extras included.
pub fn export_mapping(text: &str, dataset_tag: &str) -> ColumnMapping {
    let mut m = ColumnMapping::canonical();
    m.dataset_tag = dataset_tag.to_string();
    if let Some(header) = text.lines().next() {
        for name in header.split(',') {
            if name.parse::<Field>().is_err() {
                m.extras.push(name.to_string());
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleConfig {
    pub period: f64,
    /// Longest run of missing samples that is interpolated; longer gaps split
    /// the trace.
    pub max_gap: usize,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            period: 1.0,
            max_gap: 3,
        }
    }
}

/// [`clean_and_resample_with`] at 1 Hz, interpolating gaps of up to 3 samples.
pub fn clean_and_resample(trace: &ClientTrace) -> Result<ClientTrace> {
    clean_and_resample_with(trace, ResampleConfig::default())
}

/// Snap records to the sampling grid, average duplicates, interpolate short
/// gaps and keep the longest contiguous run.
pub fn clean_and_resample_with(trace: &ClientTrace, cfg: ResampleConfig) -> Result<ClientTrace> {
    if trace.records.is_empty() {
        return Err(Error::Empty(format!("{}: empty trace", trace.client_id)));
    }
    if !(cfg.period > 0.0) {
        return Err(Error::InvalidArgument("resample period must be positive".into()));
    }
    let mut sorted: Vec<&TraceRecord> = trace.records.iter().collect();
    sorted.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let t0 = sorted[0].timestamp;

    // slot -> averaged record
    let mut slots: Vec<(i64, TraceRecord)> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for r in sorted {
        let slot = ((r.timestamp - t0) / cfg.period).round() as i64;
        match slots.last_mut() {
            Some((s, acc)) if *s == slot => {
                let n = counts.last_mut().unwrap();
                accumulate(acc, r);
                *n += 1;
            }
            _ => {
                if let (Some((_, acc)), Some(n)) = (slots.last_mut(), counts.last()) {
                    finish_mean(acc, *n);
                }
                slots.push((slot, r.clone()));
                counts.push(1);
            }
        }
    }
    if let (Some((_, acc)), Some(n)) = (slots.last_mut(), counts.last()) {
        finish_mean(acc, *n);
    }

    let mut runs: Vec<Vec<TraceRecord>> = vec![vec![slots[0].1.clone()]];
    for w in slots.windows(2) {
        let (s0, a) = (&w[0].0, &w[0].1);
        let (s1, b) = (&w[1].0, &w[1].1);
        let gap = (s1 - s0 - 1) as usize;
        let run = runs.last_mut().unwrap();
        if gap == 0 {
            run.push(b.clone());
        } else if gap <= cfg.max_gap {
            for k in 1..=gap {
                let frac = k as f64 / (gap + 1) as f64;
                run.push(interpolate(a, b, frac));
            }
            run.push(b.clone());
        } else {
            runs.push(vec![b.clone()]);
        }
    }
    let mut best = runs
        .into_iter()
        .rev()
        .max_by_key(|r| r.len())
        .expect("at least one run");
    if best.len() < 2 {
        return Err(Error::TooShort(format!(
            "{}: fewer than 2 records after cleaning",
            trace.client_id
        )));
    }
    for (k, r) in best.iter_mut().enumerate() {
        r.timestamp = k as f64 * cfg.period;
        if !r.throughput.is_finite() || r.throughput < 0.0 {
            return Err(Error::NonFinite(format!("{}: throughput at step {k}", trace.client_id)));
        }
    }
    Ok(ClientTrace {
        client_id: trace.client_id.clone(),
        dataset_tag: trace.dataset_tag.clone(),
        records: best,
        sample_period: cfg.period,
    })
}

fn numeric_names(r: &TraceRecord) -> Vec<String> {
    let mut names: Vec<String> = CONTINUOUS.iter().map(|s| s.to_string()).collect();
    names.extend(r.extras.keys().cloned());
    names
}

fn accumulate(acc: &mut TraceRecord, r: &TraceRecord) {
    for name in numeric_names(acc) {
        if let (Some(a), Some(b)) = (acc.get(&name), r.get(&name)) {
            let _ = acc.set(&name, a + b);
        }
    }
}

fn finish_mean(acc: &mut TraceRecord, n: usize) {
    if n > 1 {
        for name in numeric_names(acc) {
            if let Some(a) = acc.get(&name) {
                let _ = acc.set(&name, a / n as f64);
            }
        }
    }
}

fn interpolate(a: &TraceRecord, b: &TraceRecord, frac: f64) -> TraceRecord {
    let mut out = a.clone();
    for name in numeric_names(a) {
        if let (Some(x), Some(y)) = (a.get(&name), b.get(&name)) {
            let _ = out.set(&name, x + (y - x) * frac);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts_tput() -> ColumnMapping {
        ColumnMapping::default()
            .with_column(Field::Timestamp, "ts")
            .with_column(Field::Throughput, "tput")
    }

    fn trace_from(points: &[(f64, f64)]) -> ClientTrace {
        ClientTrace {
            client_id: "c".into(),
            dataset_tag: String::new(),
            records: points.iter().map(|&(t, y)| TraceRecord::new(t, y)).collect(),
            sample_period: 1.0,
        }
    }

    #[test]
    fn identity_mapping_preserves_throughput() {
        let text = "ts,tput\n0,1.5\n1,2.5\n2,3.5\n";
        let loaded = parse_trace(text, "a".into(), &ts_tput()).unwrap();
        assert_eq!(loaded.trace.len(), 3);
        assert_eq!(loaded.trace.throughput(), vec![1.5, 2.5, 3.5]);
        assert_eq!(loaded.dropped, 0);
    }

    #[test]
    fn sentinel_row_is_dropped() {
        let text = "ts,tput\n0,1\n1,-\n2,3\n";
        let loaded = parse_trace(text, "a".into(), &ts_tput()).unwrap();
        assert_eq!(loaded.dropped, 1);
        assert_eq!(loaded.trace.throughput(), vec![1.0, 3.0]);
    }

    #[test]
    fn synthetic_one_hertz_file() {
        let mut text = String::from("ts\ttput\n");
        for i in 0..120 {
            text.push_str(&format!("{}\t{}\n", 1000 + i, (i % 7) as f64 * 0.5));
        }
        let t = parse_trace(&text, "a".into(), &ts_tput()).unwrap().trace;
        assert_eq!(t.sample_period, 1.0);
        for (i, r) in t.records.iter().enumerate() {
            assert_eq!(r.timestamp, i as f64);
            assert_eq!(r.throughput, (i % 7) as f64 * 0.5);
        }
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            parse_trace("ts,x\n0,1\n", "a".into(), &ts_tput()),
            Err(Error::MissingColumn(_))
        ));
        assert!(matches!(parse_trace("", "a".into(), &ts_tput()), Err(Error::Empty(_))));
        assert!(matches!(
            parse_trace("ts,tput\n0,abc\n", "a".into(), &ts_tput()),
            Err(Error::NonNumeric { .. })
        ));
    }

    #[test]
    fn unit_scale_applied() {
        let m = ts_tput().with_scale(Field::Throughput, 1e-3);
        let t = parse_trace("ts,tput\n0,2000\n1,500\n", "a".into(), &m).unwrap().trace;
        assert_eq!(t.throughput(), vec![2.0, 0.5]);
    }

    #[test]
    fn mapping_validation_lists_problems() {
        let mut m = ColumnMapping::default().with_column(Field::Latitude, "x");
        m.columns.insert("bogus".into(), "y".into());
        match m.validate() {
            Err(Error::Validation(p)) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_timestamps_average() {
        let t = trace_from(&[(4.0, 1.0), (5.0, 4.0), (5.0, 6.0), (6.0, 1.0)]);
        let c = clean_and_resample(&t).unwrap();
        assert_eq!(c.throughput(), vec![1.0, 5.0, 1.0]);
    }

    #[test]
    fn short_gap_interpolated() {
        let t = trace_from(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (6.0, 6.0)]);
        let c = clean_and_resample(&t).unwrap();
        assert_eq!(c.throughput(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let ts: Vec<f64> = c.records.iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn long_gap_keeps_longest_run() {
        // 0..40 present, 41..50 missing (10 samples), 51..99 present.
        let points: Vec<(f64, f64)> = (0..100)
            .filter(|i| !(41..=50).contains(i))
            .map(|i| (i as f64, i as f64))
            .collect();
        let c = clean_and_resample(&trace_from(&points)).unwrap();
        // brute force: longest stretch of consecutive present indices
        let present: Vec<bool> = (0..100).map(|i| !(41..=50).contains(&i)).collect();
        let (mut best, mut cur) = (0, 0);
        for p in present {
            cur = if p { cur + 1 } else { 0 };
            best = usize::max(best, cur);
        }
        assert_eq!(c.len(), best);
        assert!(c.len() >= 45);
        assert_eq!(c.records[0].throughput, 51.0);
    }

    #[test]
    fn too_short_after_cleaning() {
        let t = trace_from(&[(0.0, 1.0), (0.2, 2.0)]);
        assert!(matches!(clean_and_resample(&t), Err(Error::TooShort(_))));
    }

    #[test]
    fn radio_tags() {
        assert_eq!(RadioType::parse("lte"), RadioType::Lte);
        assert_eq!(RadioType::parse("5G"), RadioType::NrNsa);
        assert_eq!(RadioType::parse("NR_SA"), RadioType::NrSa);
        assert_eq!(RadioType::parse("wifi"), RadioType::Unknown);
    }
}
