//! Network-flow records and their 50-feature encoding.
//!
//! Flow files are comma-separated text with a header row naming the columns
//! in [`FLOW_COLUMNS`]; payload columns carry base64. Categorical fields are
//! one-hot encoded through a [`Codebook`], payloads become 10-bin byte
//! histograms, and the last feature counts distinct source/destination IP
//! pairs in a trailing window of flows.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HifError, Result};

pub const FEATURE_COUNT: usize = 50;
pub const PAYLOAD_BINS: usize = 10;
pub const PROTOCOL_SLOTS: usize = 6;
pub const DIRECTION_SLOTS: usize = 4;
pub const DEFAULT_WINDOW_SIZE: usize = 100;

/// Canonical flow-file header. `label` is optional; the rest are mandatory.
pub const FLOW_COLUMNS: [&str; 17] = [
    "app_layer",
    "protocol_name",
    "direction",
    "source_ip",
    "dest_ip",
    "source_port",
    "dest_port",
    "source_tcp_flags",
    "dest_tcp_flags",
    "source_payload",
    "dest_payload",
    "duration",
    "total_source_bytes",
    "total_dest_bytes",
    "total_source_packets",
    "total_dest_packets",
    "label",
];

/// TCP flag letters in encoding order.
pub const TCP_FLAG_LETTERS: [char; 6] = ['F', 'S', 'R', 'P', 'A', 'U'];

/// Six TCP flags, ordered as [`TCP_FLAG_LETTERS`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpFlags(pub [bool; 6]);

impl TcpFlags {
    /// Parse letters such as `"SA"` or `"S;P;A"`. Empty or `N/A` means none set.
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let mut flags = [false; 6];
        let trimmed = s.trim();
        if trimmed.eq_ignore_ascii_case("n/a") {
            return Ok(TcpFlags(flags));
        }
        for c in trimmed.chars() {
            if matches!(c, ';' | ',' | '|' | ' ') {
                continue;
            }
            let upper = c.to_ascii_uppercase();
            let i = TCP_FLAG_LETTERS
                .iter()
                .position(|&l| l == upper)
                .ok_or_else(|| format!("unknown TCP flag `{c}`"))?;
            flags[i] = true;
        }
        Ok(TcpFlags(flags))
    }
}

impl std::fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (set, letter) in self.0.iter().zip(TCP_FLAG_LETTERS) {
            if *set {
                write!(f, "{letter}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowLabel {
    Normal,
    Attack,
}

impl FlowLabel {
    pub fn parse(s: &str) -> std::result::Result<Option<Self>, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" => Ok(None),
            "normal" => Ok(Some(FlowLabel::Normal)),
            "attack" => Ok(Some(FlowLabel::Attack)),
            other => Err(format!("unknown label `{other}`")),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlowLabel::Normal => "normal",
            FlowLabel::Attack => "attack",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub app_layer: String,
    pub protocol_name: String,
    pub direction: String,
    pub source_ip: String,
    pub dest_ip: String,
    pub source_port: u16,
    pub dest_port: u16,
    pub source_tcp_flags: TcpFlags,
    pub dest_tcp_flags: TcpFlags,
    pub source_payload: Vec<u8>,
    pub dest_payload: Vec<u8>,
    /// Seconds.
    pub duration: f64,
    pub total_source_bytes: u64,
    pub total_dest_bytes: u64,
    pub total_source_packets: u64,
    pub total_dest_packets: u64,
    pub label: Option<FlowLabel>,
}

/// Outcome of [`parse_flows`]: accepted records and, in lenient mode, the
/// skipped lines with their error messages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedFlows {
    pub records: Vec<FlowRecord>,
    pub skipped: Vec<(u64, String)>,
}

struct ColumnIndex([Option<usize>; 17]);

impl ColumnIndex {
    fn new(headers: &csv::StringRecord) -> Result<Self> {
        let mut idx = [None; 17];
        for (slot, name) in idx.iter_mut().zip(FLOW_COLUMNS) {
            *slot = headers.iter().position(|h| h.trim() == name);
            if slot.is_none() && name != "label" {
                return Err(HifError::MissingColumn(name.to_owned()));
            }
        }
        Ok(ColumnIndex(idx))
    }

    fn get<'r>(
        &self,
        row: &'r csv::StringRecord,
        col: usize,
    ) -> std::result::Result<&'r str, String> {
        match self.0[col] {
            Some(i) => row
                .get(i)
                .ok_or_else(|| format!("missing value for `{}`", FLOW_COLUMNS[col])),
            None => Ok(""),
        }
    }
}

fn parse_num<T: std::str::FromStr>(name: &str, s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse().map_err(|e| format!("{name} `{s}`: {e}"))
}

fn parse_port(name: &str, s: &str) -> std::result::Result<u16, String> {
    let v: i64 = parse_num(name, s)?;
    u16::try_from(v).map_err(|_| format!("{name} {v} out of range [0, 65535]"))
}

fn parse_row(
    cols: &ColumnIndex,
    row: &csv::StringRecord,
) -> std::result::Result<FlowRecord, String> {
    let get = |i: usize| cols.get(row, i);
    let payload = |i: usize| -> std::result::Result<Vec<u8>, String> {
        BASE64
            .decode(get(i)?.trim())
            .map_err(|e| format!("{}: undecodable base64: {e}", FLOW_COLUMNS[i]))
    };
    let duration: f64 = parse_num("duration", get(11)?)?;
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(format!(
            "duration {duration} must be finite and non-negative"
        ));
    }
    Ok(FlowRecord {
        app_layer: get(0)?.trim().to_owned(),
        protocol_name: get(1)?.trim().to_owned(),
        direction: get(2)?.trim().to_owned(),
        source_ip: get(3)?.trim().to_owned(),
        dest_ip: get(4)?.trim().to_owned(),
        source_port: parse_port("source_port", get(5)?)?,
        dest_port: parse_port("dest_port", get(6)?)?,
        source_tcp_flags: TcpFlags::parse(get(7)?)?,
        dest_tcp_flags: TcpFlags::parse(get(8)?)?,
        source_payload: payload(9)?,
        dest_payload: payload(10)?,
        duration,
        total_source_bytes: parse_num("total_source_bytes", get(12)?)?,
        total_dest_bytes: parse_num("total_dest_bytes", get(13)?)?,
        total_source_packets: parse_num("total_source_packets", get(14)?)?,
        total_dest_packets: parse_num("total_dest_packets", get(15)?)?,
        label: FlowLabel::parse(get(16)?)?,
    })
}

/// Read a flow file. With `strict`, the first malformed line aborts;
/// otherwise it is skipped and reported in [`ParsedFlows::skipped`].
pub fn parse_flows<R: Read>(input: R, strict: bool) -> Result<ParsedFlows> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(input);
    let cols = ColumnIndex::new(reader.headers()?)?;
    let mut out = ParsedFlows::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&cols, &row) {
            Ok(rec) => out.records.push(rec),
            Err(message) if strict => return Err(HifError::Parse { line, message }),
            Err(message) => out.skipped.push((line, message)),
        }
    }
    Ok(out)
}

pub fn write_flows<W: Write>(records: &[FlowRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FLOW_COLUMNS)?;
    for r in records {
        w.write_record([
            r.app_layer.clone(),
            r.protocol_name.clone(),
            r.direction.clone(),
            r.source_ip.clone(),
            r.dest_ip.clone(),
            r.source_port.to_string(),
            r.dest_port.to_string(),
            r.source_tcp_flags.to_string(),
            r.dest_tcp_flags.to_string(),
            BASE64.encode(&r.source_payload),
            BASE64.encode(&r.dest_payload),
            r.duration.to_string(),
            r.total_source_bytes.to_string(),
            r.total_dest_bytes.to_string(),
            r.total_source_packets.to_string(),
            r.total_dest_packets.to_string(),
            r.label.map_or("", FlowLabel::as_str).to_owned(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Byte-value histogram with 10 equal-width bins over `[0, 256)`, divided by
/// the payload length. An empty payload gives all zeros.
pub fn payload_histogram(payload: &[u8]) -> [f64; PAYLOAD_BINS] {
    let mut hist = [0.0; PAYLOAD_BINS];
    if payload.is_empty() {
        return hist;
    }
    for &b in payload {
        // floor(b / 25.6) without floating point
        hist[b as usize * PAYLOAD_BINS / 256] += 1.0;
    }
    let n = payload.len() as f64;
    hist.iter_mut().for_each(|h| *h /= n);
    hist
}

/// Distinct `(source_ip, dest_ip)` pairs among the `window` flows ending at
/// `index` (fewer near the start).
pub fn count_ip_pairs(records: &[FlowRecord], window: usize, index: usize) -> usize {
    let start = (index + 1).saturating_sub(window.max(1));
    records[start..=index]
        .iter()
        .map(|r| (r.source_ip.as_str(), r.dest_ip.as_str()))
        .collect::<HashSet<_>>()
        .len()
}

/// [`count_ip_pairs`] at every index, in one sliding pass.
pub fn pair_counts(records: &[FlowRecord], window: usize) -> Vec<usize> {
    let window = window.max(1);
    let mut live: HashMap<(&str, &str), usize> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        *live.entry((&r.source_ip, &r.dest_ip)).or_default() += 1;
        if i >= window {
            let old = &records[i - window];
            let key = (old.source_ip.as_str(), old.dest_ip.as_str());
            let n = live.get_mut(&key).expect("pair entered the window earlier");
            *n -= 1;
            if *n == 0 {
                live.remove(&key);
            }
        }
        out.push(live.len());
    }
    out
}

/// Partition by application layer, keeping the input order inside each layer.
pub fn split_by_app_layer(records: Vec<FlowRecord>) -> BTreeMap<String, Vec<FlowRecord>> {
    let mut layers: BTreeMap<String, Vec<FlowRecord>> = BTreeMap::new();
    for r in records {
        layers.entry(r.app_layer.clone()).or_default().push(r);
    }
    layers
}

/// Feature names in encoding order.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    names.extend((0..PAYLOAD_BINS).map(|i| format!("dest_payload{i}")));
    names.push("dest_port".into());
    names.extend((0..6).map(|i| format!("dest_tcp_flag{i}")));
    names.extend((0..DIRECTION_SLOTS).map(|i| format!("direction{i}")));
    names.extend((0..PROTOCOL_SLOTS).map(|i| format!("protocol_name{i}")));
    names.extend((0..PAYLOAD_BINS).map(|i| format!("source_payload{i}")));
    names.push("source_port".into());
    names.extend((0..6).map(|i| format!("source_tcp_flag{i}")));
    names.extend(
        [
            "duration",
            "total_dest_bytes",
            "total_dest_packets",
            "total_source_bytes",
            "total_source_packets",
            "ip_pairs",
        ]
        .map(String::from),
    );
    names
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

/// Category slots and normalization ranges for one feature space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub protocols: Vec<String>,
    pub directions: Vec<String>,
    pub window_size: usize,
    /// Per-feature ranges; empty until [`Codebook::fit_minmax`].
    #[serde(default)]
    pub ranges: Vec<MinMax>,
    /// A frozen codebook no longer learns categories.
    #[serde(default)]
    pub frozen: bool,
}

impl Default for Codebook {
    fn default() -> Self {
        Codebook::new(DEFAULT_WINDOW_SIZE)
    }
}

fn slot_of(
    slots: &mut Vec<String>,
    capacity: usize,
    field: &'static str,
    value: &str,
    learn: bool,
) -> Result<usize> {
    if let Some(i) = slots.iter().position(|s| s == value) {
        return Ok(i);
    }
    if !learn {
        return Err(HifError::UnknownCategory {
            field,
            value: value.to_owned(),
        });
    }
    if slots.len() >= capacity {
        return Err(HifError::CodebookFull {
            field,
            capacity,
            value: value.to_owned(),
        });
    }
    slots.push(value.to_owned());
    Ok(slots.len() - 1)
}

impl Codebook {
    pub fn new(window_size: usize) -> Self {
        Codebook {
            protocols: Vec::new(),
            directions: Vec::new(),
            window_size: window_size.max(1),
            ranges: Vec::new(),
            frozen: false,
        }
    }

    /// Assign slots to unseen categories, in order of first appearance.
    pub fn learn_categories(&mut self, records: &[FlowRecord]) -> Result<()> {
        let learn = !self.frozen;
        for r in records {
            slot_of(
                &mut self.protocols,
                PROTOCOL_SLOTS,
                "protocol_name",
                &r.protocol_name,
                learn,
            )?;
            slot_of(
                &mut self.directions,
                DIRECTION_SLOTS,
                "direction",
                &r.direction,
                learn,
            )?;
        }
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    fn protocol_slot(&self, value: &str) -> Result<usize> {
        self.protocols
            .iter()
            .position(|s| s == value)
            .ok_or_else(|| HifError::UnknownCategory {
                field: "protocol_name",
                value: value.to_owned(),
            })
    }

    fn direction_slot(&self, value: &str) -> Result<usize> {
        self.directions
            .iter()
            .position(|s| s == value)
            .ok_or_else(|| HifError::UnknownCategory {
                field: "direction",
                value: value.to_owned(),
            })
    }

    /// Record per-feature min and max over `vectors`.
    pub fn fit_minmax(&mut self, vectors: &[FeatureVector]) -> Result<()> {
        if vectors.is_empty() {
            return Err(HifError::EmptyDataset);
        }
        self.ranges = (0..FEATURE_COUNT)
            .map(|j| {
                let (min, max) = vectors
                    .iter()
                    .map(|v| v.0[j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x), hi.max(x))
                    });
                MinMax { min, max }
            })
            .collect();
        Ok(())
    }

    /// Map each feature to `[0, 1]` with the fitted ranges, clamping values
    /// outside them. Constant features map to 0.
    pub fn apply_minmax(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if self.ranges.len() != FEATURE_COUNT {
            return Err(HifError::InvalidParameter(
                "codebook has no fitted normalization ranges".into(),
            ));
        }
        let mut out = [0.0; FEATURE_COUNT];
        for ((o, x), r) in out.iter_mut().zip(v.0).zip(&self.ranges) {
            *o = if r.max > r.min {
                ((x - r.min) / (r.max - r.min)).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        Ok(FeatureVector(out))
    }
}

/// Encode one flow. `pair_count` is the record's IP-pair window count.
pub fn encode(
    record: &FlowRecord,
    codebook: &Codebook,
    pair_count: usize,
) -> Result<FeatureVector> {
    let mut v = [0.0; FEATURE_COUNT];
    let mut at = 0;
    let mut put = |values: &[f64]| {
        v[at..at + values.len()].copy_from_slice(values);
        at += values.len();
    };
    let flags = |f: TcpFlags| f.0.map(|b| if b { 1.0 } else { 0.0 });
    let one_hot = |slot: usize, width: usize| {
        let mut h = vec![0.0; width];
        h[slot] = 1.0;
        h
    };

    put(&payload_histogram(&record.dest_payload));
    put(&[record.dest_port as f64]);
    put(&flags(record.dest_tcp_flags));
    put(&one_hot(
        codebook.direction_slot(&record.direction)?,
        DIRECTION_SLOTS,
    ));
    put(&one_hot(
        codebook.protocol_slot(&record.protocol_name)?,
        PROTOCOL_SLOTS,
    ));
    put(&payload_histogram(&record.source_payload));
    put(&[record.source_port as f64]);
    put(&flags(record.source_tcp_flags));
    put(&[
        record.duration,
        record.total_dest_bytes as f64,
        record.total_dest_packets as f64,
        record.total_source_bytes as f64,
        record.total_source_packets as f64,
        pair_count as f64,
    ]);
    debug_assert_eq!(at, FEATURE_COUNT);
    Ok(FeatureVector(v))
}

/// Encode an ordered run of flows from one application layer, counting IP
/// pairs over the codebook's window.
pub fn encode_all(records: &[FlowRecord], codebook: &Codebook) -> Result<Vec<FeatureVector>> {
    pair_counts(records, codebook.window_size)
        .into_iter()
        .zip(records)
        .map(|(pairs, r)| encode(r, codebook, pairs))
        .collect()
}

/// Feature rows as CSV, with a trailing `label` column when `labels` is given.
pub fn write_features<W: Write>(
    vectors: &[FeatureVector],
    labels: Option<&[Option<FlowLabel>]>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = feature_names();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, v) in vectors.iter().enumerate() {
        let mut row: Vec<String> = v.0.iter().map(|x| x.to_string()).collect();
        if let Some(labels) = labels {
            row.push(labels[i].map_or("", FlowLabel::as_str).to_owned());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Random flows that satisfy the schema, for fixtures and smoke tests.
pub fn random_flows<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<FlowRecord> {
    const LAYERS: [&str; 4] = ["HTTPWeb", "SSH", "DNS", "SMTP"];
    const PROTOCOLS: [&str; 6] = ["tcp_ip", "udp_ip", "icmp_ip", "igmp", "ip", "ipv6icmp"];
    const DIRECTIONS: [&str; 4] = ["L2L", "L2R", "R2L", "R2R"];
    let payload = |rng: &mut R| -> Vec<u8> {
        let len = if rng.random_bool(0.2) {
            0
        } else {
            rng.random_range(1..200)
        };
        (0..len).map(|_| rng.random()).collect()
    };
    let flags = |rng: &mut R| TcpFlags(std::array::from_fn(|_| rng.random_bool(0.4)));
    (0..n)
        .map(|_| FlowRecord {
            app_layer: LAYERS[rng.random_range(0..LAYERS.len())].into(),
            protocol_name: PROTOCOLS[rng.random_range(0..PROTOCOLS.len())].into(),
            direction: DIRECTIONS[rng.random_range(0..DIRECTIONS.len())].into(),
            source_ip: format!(
                "192.168.{}.{}",
                rng.random_range(0..3),
                rng.random_range(1..6)
            ),
            dest_ip: format!("10.0.0.{}", rng.random_range(1..8)),
            source_port: rng.random(),
            dest_port: rng.random(),
            source_tcp_flags: flags(rng),
            dest_tcp_flags: flags(rng),
            source_payload: payload(rng),
            dest_payload: payload(rng),
            duration: rng.random_range(0.0..300.0),
            total_source_bytes: rng.random_range(0..1_000_000),
            total_dest_bytes: rng.random_range(0..1_000_000),
            total_source_packets: rng.random_range(0..5000),
            total_dest_packets: rng.random_range(0..5000),
            label: match rng.random_range(0..3) {
                0 => None,
                1 => Some(FlowLabel::Normal),
                _ => Some(FlowLabel::Attack),
            },
        })
        .collect()
}
