//! Iteration traces and their on-disk formats.
//!
//! CSV has a mandatory header `iter,epoch,phase,sample_index,loss,err_fro,wallclock_ns`,
//! one row per record, with absent optional fields left empty. JSON is a
//! single object `{"meta": {...}, "records": [...]}`. Floats are written in
//! shortest round-trip form in both formats, so parsing an emitted file
//! reproduces the trace exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "iter",
    "epoch",
    "phase",
    "sample_index",
    "loss",
    "err_fro",
    "wallclock_ns",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warm,
    Adaptive,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Warm => "warm",
            Phase::Adaptive => "adaptive",
        })
    }
}

/// State of a solve after `iter` updates.
///
/// For SGD, `epoch` counts completed epochs, so a record whose epoch is
/// larger than its predecessor's is the end of an epoch, and
/// `sample_index` is the column used by the update that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub epoch: Option<u64>,
    pub phase: Option<Phase>,
    pub sample_index: Option<u64>,
    pub loss: f64,
    pub err_fro: Option<f64>,
    pub wallclock_ns: u64,
}

impl TraceRecord {
    pub fn new(iter: u64, loss: f64) -> Self {
        TraceRecord {
            iter,
            epoch: None,
            phase: None,
            sample_index: None,
            loss,
            err_fro: None,
            wallclock_ns: 0,
        }
    }
}

pub type Meta = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trace {
    pub meta: Meta,
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    /// Appends a record, enforcing strictly increasing `iter` and finite,
    /// non-negative `loss` / `err_fro`.
    pub fn push(&mut self, record: TraceRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.iter <= last.iter {
                return Err(Error::TraceFormat(format!(
                    "iter {} does not increase past {}",
                    record.iter, last.iter
                )));
            }
        }
        if !(record.loss.is_finite() && record.loss >= 0.0) {
            return Err(Error::TraceFormat(format!(
                "iter {}: loss {} is not a finite non-negative value",
                record.iter, record.loss
            )));
        }
        if let Some(e) = record.err_fro {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::TraceFormat(format!(
                    "iter {}: err_fro {e} is not a finite non-negative value",
                    record.iter
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// `err_fro` of every record, or `None` if any record lacks it.
    pub fn errors(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.err_fro).collect()
    }

    /// The initial record and every record that completes an epoch.
    pub fn epoch_ends(&self) -> Vec<&TraceRecord> {
        let mut out = Vec::new();
        let mut prev_epoch = None;
        for (i, r) in self.records.iter().enumerate() {
            if i == 0 || (r.epoch.is_some() && r.epoch != prev_epoch) {
                out.push(r);
            }
            prev_epoch = r.epoch;
        }
        out
    }

    /// Indices of records whose phase differs from the previous record's.
    pub fn phase_switches(&self) -> Vec<usize> {
        self.records
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].phase != w[1].phase)
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub(crate) fn retain_last(&mut self, record: TraceRecord) -> Result<()> {
        match self.records.last() {
            Some(last) if last.iter == record.iter => Ok(()),
            _ => self.push(record),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Csv,
    Json,
}

impl TraceFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Json => "json",
        }
    }
}

impl FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "json" => Ok(TraceFormat::Json),
            _ => Err(Error::invalid(format!("unknown trace format `{s}`"))),
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::TraceFormat(e.to_string())
}

pub fn write_csv<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    wtr.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &trace.records {
        wtr.serialize(r).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses CSV trace bytes; the header must match [`CSV_HEADER`] exactly.
pub fn read_csv<R: Read>(input: R) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::TraceFormat(format!(
            "unexpected CSV header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut trace = Trace::new();
    for row in rdr.deserialize::<TraceRecord>() {
        trace.push(row.map_err(csv_err)?)?;
    }
    Ok(trace)
}

pub fn write_json<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, trace).map_err(|e| Error::TraceFormat(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    meta: Meta,
    records: Vec<TraceRecord>,
}

pub fn read_json<R: Read>(input: R) -> Result<Trace> {
    let raw: RawTrace =
        serde_json::from_reader(input).map_err(|e| Error::TraceFormat(e.to_string()))?;
    let mut trace = Trace {
        meta: raw.meta,
        records: Vec::with_capacity(raw.records.len()),
    };
    for r in raw.records {
        trace.push(r)?;
    }
    Ok(trace)
}

pub fn to_bytes(trace: &Trace, format: TraceFormat) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        TraceFormat::Csv => write_csv(trace, &mut buf)?,
        TraceFormat::Json => write_json(trace, &mut buf)?,
    }
    Ok(buf)
}

pub fn from_bytes(bytes: &[u8], format: TraceFormat) -> Result<Trace> {
    match format {
        TraceFormat::Csv => read_csv(bytes),
        TraceFormat::Json => read_json(bytes),
    }
}

pub fn save(trace: &Trace, path: &Path, format: TraceFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        TraceFormat::Csv => write_csv(trace, &mut out)?,
        TraceFormat::Json => write_json(trace, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

/// Loads a trace, picking the format from the file extension.
pub fn load(path: &Path) -> Result<Trace> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => TraceFormat::Json,
        _ => TraceFormat::Csv,
    };
    from_bytes(&std::fs::read(path)?, format)
}
