//! Comma-separated file formats: cohort count tables, division event logs,
//! and the aggregation of event logs into count series.
//!
//! Counts tables have the header `subject_id,t,stem_count,diff_count`. Two
//! optional trailing columns, `viable_stem_count,nonviable_stem_count`, carry
//! the hidden split of simulated cohorts so they survive a round trip.
//!
//! Event logs have the header
//! `cell_id,generation,time_first_observed,time_last_observed,outcome` with
//! outcomes `SYM_RENEW`, `ASYM_RENEW`, `DIFF` or `NONE`, and an optional
//! `lineage` column (`MEP`, `MKP`, `ERP`). Rows of other lineages are ignored
//! by the aggregation.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::{Cohort, EventRecord, HiddenTruth, Observation, Subject};

pub const COUNTS_HEADER: [&str; 4] = ["subject_id", "t", "stem_count", "diff_count"];
pub const TRUTH_COLUMNS: [&str; 2] = ["viable_stem_count", "nonviable_stem_count"];
pub const EVENT_LOG_HEADER: [&str; 5] = [
    "cell_id",
    "generation",
    "time_first_observed",
    "time_last_observed",
    "outcome",
];
/// Subject id given to a subsampled series.
pub const SERIES_SUBJECT: &str = "series_1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("MEP count would go negative at t = {t} (cell {cell_id})")]
    NegativeCount { t: f64, cell_id: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn csv_error(e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IoError::Io(io),
        kind => IoError::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Column index by name, or a schema error listing everything missing.
fn column_map(headers: &csv::StringRecord, required: &[&str]) -> Result<HashMap<String, usize>, IoError> {
    let map: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    let missing: Vec<&str> = required.iter().copied().filter(|c| !map.contains_key(*c)).collect();
    if !missing.is_empty() {
        return Err(IoError::Schema(format!("missing columns: {}", missing.join(", "))));
    }
    Ok(map)
}

fn field<'a>(rec: &'a csv::StringRecord, cols: &HashMap<String, usize>, name: &str, line: u64) -> Result<&'a str, IoError> {
    rec.get(cols[name]).map(str::trim).ok_or_else(|| IoError::Parse {
        line,
        message: format!("missing value for {name}"),
    })
}

fn parse<T: std::str::FromStr>(s: &str, name: &str, line: u64) -> Result<T, IoError> {
    s.parse().map_err(|_| IoError::Parse {
        line,
        message: format!("cannot parse {name} from {s:?}"),
    })
}

fn parse_time(s: &str, name: &str, line: u64) -> Result<f64, IoError> {
    let t: f64 = parse(s, name, line)?;
    if !t.is_finite() || t < 0.0 {
        return Err(IoError::Parse {
            line,
            message: format!("{name} must be finite and non-negative, got {s}"),
        });
    }
    Ok(t)
}

/// Reads a counts table. Subjects appear in order of first appearance and
/// their observations are sorted by time.
pub fn read_counts_from(reader: impl Read) -> Result<Cohort, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let cols = column_map(&headers, &COUNTS_HEADER)?;
    let with_truth = TRUTH_COLUMNS.iter().all(|c| cols.contains_key(*c));

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(Observation, Option<HiddenTruth>)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = field(&rec, &cols, "subject_id", line)?.to_string();
        let obs = Observation {
            t: parse_time(field(&rec, &cols, "t", line)?, "t", line)?,
            s_star: parse(field(&rec, &cols, "stem_count", line)?, "stem_count", line)?,
            f: parse(field(&rec, &cols, "diff_count", line)?, "diff_count", line)?,
        };
        let truth = if with_truth {
            Some(HiddenTruth {
                s: parse(field(&rec, &cols, TRUTH_COLUMNS[0], line)?, TRUTH_COLUMNS[0], line)?,
                d: parse(field(&rec, &cols, TRUTH_COLUMNS[1], line)?, TRUTH_COLUMNS[1], line)?,
            })
        } else {
            None
        };
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        if entry.iter().any(|(o, _)| o.t == obs.t) {
            return Err(IoError::Schema(format!(
                "duplicate row for subject {id} at t = {} (line {line})",
                obs.t
            )));
        }
        entry.push((obs, truth));
    }

    let subjects = order
        .into_iter()
        .map(|id| {
            let mut obs = rows.remove(&id).unwrap_or_default();
            obs.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));
            Subject {
                truth: with_truth.then(|| obs.iter().filter_map(|(_, h)| *h).collect()),
                observations: obs.into_iter().map(|(o, _)| o).collect(),
                id,
            }
        })
        .collect();
    Ok(Cohort { subjects })
}

pub fn read_counts(path: impl AsRef<Path>) -> Result<Cohort, IoError> {
    read_counts_from(File::open(path)?)
}

/// Writes a counts table; truth columns are added when every subject has
/// truth for every observation.
pub fn write_counts_to(cohort: &Cohort, writer: impl Write) -> Result<(), IoError> {
    let with_truth = !cohort.subjects.is_empty()
        && cohort
            .subjects
            .iter()
            .all(|s| s.truth.as_ref().is_some_and(|t| t.len() == s.observations.len()));
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = COUNTS_HEADER.to_vec();
    if with_truth {
        header.extend(TRUTH_COLUMNS);
    }
    w.write_record(&header).map_err(csv_error)?;
    for s in &cohort.subjects {
        for (i, o) in s.observations.iter().enumerate() {
            let mut rec = vec![s.id.clone(), o.t.to_string(), o.s_star.to_string(), o.f.to_string()];
            if let (true, Some(truth)) = (with_truth, &s.truth) {
                rec.push(truth[i].s.to_string());
                rec.push(truth[i].d.to_string());
            }
            w.write_record(&rec).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_counts(cohort: &Cohort, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_counts_to(cohort, File::create(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "SYM_RENEW")]
    SymmetricSelfRenewal,
    #[serde(rename = "ASYM_RENEW")]
    AsymmetricSelfRenewal,
    #[serde(rename = "DIFF")]
    Differentiation,
    #[serde(rename = "NONE")]
    None,
}

impl Outcome {
    pub fn tag(self) -> &'static str {
        match self {
            Outcome::SymmetricSelfRenewal => "SYM_RENEW",
            Outcome::AsymmetricSelfRenewal => "ASYM_RENEW",
            Outcome::Differentiation => "DIFF",
            Outcome::None => "NONE",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "SYM_RENEW" => Some(Outcome::SymmetricSelfRenewal),
            "ASYM_RENEW" => Some(Outcome::AsymmetricSelfRenewal),
            "DIFF" => Some(Outcome::Differentiation),
            "NONE" => Some(Outcome::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Lineage {
    Mep,
    Mkp,
    Erp,
}

impl Lineage {
    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag.to_ascii_uppercase().as_str() {
            "MEP" => Some(Lineage::Mep),
            "MKP" => Some(Lineage::Mkp),
            "ERP" => Some(Lineage::Erp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogRow {
    pub cell_id: String,
    pub generation: u32,
    pub time_first_observed: f64,
    pub time_last_observed: f64,
    pub outcome: Outcome,
    /// `None` means the row is taken to be a MEP.
    pub lineage: Option<Lineage>,
}

impl EventLogRow {
    pub fn is_mep(&self) -> bool {
        matches!(self.lineage, None | Some(Lineage::Mep))
    }
}

pub fn read_event_log_from(reader: impl Read) -> Result<Vec<EventLogRow>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let cols = column_map(&headers, &EVENT_LOG_HEADER)?;
    let has_lineage = cols.contains_key("lineage");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let generation: u32 = parse(field(&rec, &cols, "generation", line)?, "generation", line)?;
        if generation < 1 {
            return Err(IoError::Parse {
                line,
                message: "generation must be at least 1".into(),
            });
        }
        let first = parse_time(field(&rec, &cols, "time_first_observed", line)?, "time_first_observed", line)?;
        let last = parse_time(field(&rec, &cols, "time_last_observed", line)?, "time_last_observed", line)?;
        if last < first {
            return Err(IoError::Parse {
                line,
                message: format!("time_last_observed {last} precedes time_first_observed {first}"),
            });
        }
        let tag = field(&rec, &cols, "outcome", line)?;
        let outcome = Outcome::from_tag(tag).ok_or_else(|| IoError::Parse {
            line,
            message: format!("unknown outcome {tag:?}"),
        })?;
        let lineage = if has_lineage {
            match field(&rec, &cols, "lineage", line)? {
                "" => None,
                tag => Some(Lineage::from_tag(tag).ok_or_else(|| IoError::Parse {
                    line,
                    message: format!("unknown lineage {tag:?}"),
                })?),
            }
        } else {
            None
        };
        out.push(EventLogRow {
            cell_id: field(&rec, &cols, "cell_id", line)?.to_string(),
            generation,
            time_first_observed: first,
            time_last_observed: last,
            outcome,
            lineage,
        });
    }
    Ok(out)
}

pub fn read_event_log(path: impl AsRef<Path>) -> Result<Vec<EventLogRow>, IoError> {
    read_event_log_from(File::open(path)?)
}

pub fn write_event_log_to(rows: &[EventLogRow], writer: impl Write) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = EVENT_LOG_HEADER.to_vec();
    header.push("lineage");
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        let lineage = match r.lineage {
            None => "",
            Some(Lineage::Mep) => "MEP",
            Some(Lineage::Mkp) => "MKP",
            Some(Lineage::Erp) => "ERP",
        };
        w.write_record([
            r.cell_id.as_str(),
            &r.generation.to_string(),
            &r.time_first_observed.to_string(),
            &r.time_last_observed.to_string(),
            r.outcome.tag(),
            lineage,
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Number of distinct generation-1 MEP cells.
pub fn starting_cells(log: &[EventLogRow]) -> usize {
    let mut ids: Vec<&str> = log
        .iter()
        .filter(|r| r.generation == 1 && r.is_mep())
        .map(|r| r.cell_id.as_str())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

/// Instant at which a division is placed within its observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventTiming {
    #[default]
    LastObserved,
    WindowMidpoint,
}

impl EventTiming {
    fn time(self, row: &EventLogRow) -> f64 {
        match self {
            EventTiming::LastObserved => row.time_last_observed,
            EventTiming::WindowMidpoint => 0.5 * (row.time_first_observed + row.time_last_observed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountPoint {
    pub t: f64,
    pub stem: u64,
    pub diff: u64,
}

/// Event-ordered counts from a division log: starts at `(0, start_count, 0)`
/// and applies, per MEP division, `SYM_RENEW`: +1 MEP; `ASYM_RENEW`: +1
/// differentiated; `DIFF`: -1 MEP, +2 differentiated. Ties keep file order.
pub fn aggregate_events(
    log: &[EventLogRow],
    start_count: u64,
    timing: EventTiming,
) -> Result<Vec<CountPoint>, IoError> {
    if start_count < 1 {
        return Err(IoError::InvalidArgument("start count must be at least 1".into()));
    }
    let mut events: Vec<(f64, &EventLogRow)> = log
        .iter()
        .filter(|r| r.is_mep() && r.outcome != Outcome::None)
        .map(|r| (timing.time(r), r))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut current = CountPoint {
        t: 0.0,
        stem: start_count,
        diff: 0,
    };
    let mut out = vec![current];
    for (t, row) in events {
        current.t = t;
        match row.outcome {
            Outcome::SymmetricSelfRenewal => current.stem += 1,
            Outcome::AsymmetricSelfRenewal => current.diff += 1,
            Outcome::Differentiation => {
                current.stem = current.stem.checked_sub(1).ok_or_else(|| IoError::NegativeCount {
                    t,
                    cell_id: row.cell_id.clone(),
                })?;
                current.diff += 2;
            }
            Outcome::None => unreachable!("filtered above"),
        }
        out.push(current);
    }
    Ok(out)
}

/// State at `interval, 2 interval, ...` over the span of `series`, the last
/// point clipped to the span's end, as a one-subject cohort. A series
/// shorter than `interval` gives a single point at its end.
pub fn subsample(series: &[CountPoint], interval: f64) -> Result<Cohort, IoError> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(IoError::InvalidArgument(format!("interval must be positive, got {interval}")));
    }
    let Some(first) = series.first() else {
        return Ok(Cohort::default());
    };
    let span = series.iter().map(|p| p.t).fold(first.t, f64::max);
    let count = ((span / interval) - 1e-9).ceil().max(1.0) as usize;
    let mut observations = Vec::with_capacity(count);
    let mut idx = 0;
    for k in 1..=count {
        let t = (k as f64 * interval).min(span);
        while idx + 1 < series.len() && series[idx + 1].t <= t {
            idx += 1;
        }
        let p = series[idx];
        observations.push(Observation {
            t,
            s_star: p.stem,
            f: p.diff,
        });
    }
    Ok(Cohort {
        subjects: vec![Subject {
            id: SERIES_SUBJECT.to_string(),
            observations,
            truth: None,
        }],
    })
}

/// Converts a one-subject cohort back to a count series.
pub fn series_of(subject: &Subject) -> Vec<CountPoint> {
    subject
        .observations
        .iter()
        .map(|o| CountPoint {
            t: o.t,
            stem: o.s_star,
            diff: o.f,
        })
        .collect()
}

pub fn write_series_to(series: &[CountPoint], writer: impl Write) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "stem_count", "diff_count"]).map_err(csv_error)?;
    for p in series {
        w.write_record([p.t.to_string(), p.stem.to_string(), p.diff.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Simulator events as a diagnostics table.
pub fn write_events_to(events: &[EventRecord], writer: impl Write) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "kind", "viable_stem_count", "nonviable_stem_count", "diff_count"])
        .map_err(csv_error)?;
    for e in events {
        w.write_record([
            e.t.to_string(),
            format!("{:?}", e.kind),
            e.state_after.s.to_string(),
            e.state_after.d.to_string(),
            e.state_after.f.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
