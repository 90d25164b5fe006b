use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::ExperimentId;
use crate::error::{Error, Result};
use crate::sqp::SqpStatus;

/// Which objective a run minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// `Tr(M⁻¹)`.
    Unpreconditioned,
    /// `−Tr(M⁻¹)⁻²`.
    Preconditioned,
}

impl Variant {
    pub fn code(self) -> &'static str {
        match self {
            Variant::Unpreconditioned => "u",
            Variant::Preconditioned => "p",
        }
    }

    pub fn is_preconditioned(self) -> bool {
        self == Variant::Preconditioned
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u" => Ok(Variant::Unpreconditioned),
            "p" => Ok(Variant::Preconditioned),
            other => Err(Error::InvalidInput(format!("unknown variant {other:?}"))),
        }
    }
}

/// One solved instance (exp1 rows combine the two starting guesses).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub experiment: ExperimentId,
    pub trial: usize,
    pub alpha: Option<f64>,
    pub size: Option<usize>,
    pub variant: Variant,
    /// SQP major iterations.
    pub iterations: usize,
    /// Total QP inner iterations.
    pub qp_iterations: usize,
    pub status: SqpStatus,
    /// A-criterion `Tr(M⁻¹)` at the returned design, for either variant.
    pub objective: f64,
    /// Max-norm distance between the solutions from the two starts (exp1).
    pub distance: Option<f64>,
    /// `k_u / k_p` of the pair this row belongs to.
    pub speedup: Option<f64>,
    /// Hash of the instance data and starting point; equal within a pair.
    pub content_hash: String,
}

pub const CSV_HEADER: [&str; 12] = [
    "experiment",
    "trial",
    "alpha",
    "n",
    "variant",
    "iterations",
    "qp_iterations",
    "status",
    "objective",
    "distance",
    "speedup",
    "content_hash",
];

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn parse_opt<T: FromStr>(field: &str, name: &str) -> Result<Option<T>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::InvalidInput(format!("bad {name} field {field:?}")))
}

fn parse_req<T: FromStr>(field: &str, name: &str) -> Result<T> {
    parse_opt(field, name)?.ok_or_else(|| Error::InvalidInput(format!("missing {name}")))
}

impl TrialRecord {
    fn to_fields(&self) -> [String; 12] {
        [
            self.experiment.to_string(),
            self.trial.to_string(),
            opt_float(self.alpha),
            self.size.map(|n| n.to_string()).unwrap_or_default(),
            self.variant.to_string(),
            self.iterations.to_string(),
            self.qp_iterations.to_string(),
            self.status.as_str().to_string(),
            format_float(self.objective),
            opt_float(self.distance),
            opt_float(self.speedup),
            self.content_hash.clone(),
        ]
    }

    fn from_fields(r: &csv::StringRecord) -> Result<Self> {
        if r.len() != CSV_HEADER.len() {
            return Err(Error::InvalidInput(format!(
                "expected 12 fields, got {}",
                r.len()
            )));
        }
        Ok(Self {
            experiment: r[0].parse()?,
            trial: parse_req(&r[1], "trial")?,
            alpha: parse_opt(&r[2], "alpha")?,
            size: parse_opt(&r[3], "n")?,
            variant: r[4].parse()?,
            iterations: parse_req(&r[5], "iterations")?,
            qp_iterations: parse_req(&r[6], "qp_iterations")?,
            status: r[7].parse()?,
            objective: parse_req(&r[8], "objective")?,
            distance: parse_opt(&r[9], "distance")?,
            speedup: parse_opt(&r[10], "speedup")?,
            content_hash: r[11].to_string(),
        })
    }
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for rec in records {
        w.write_record(rec.to_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidInput("unexpected CSV header".into()));
    }
    r.records()
        .map(|row| TrialRecord::from_fields(&row?))
        .collect()
}

/// Incremental content hash over floats and labels.
pub(crate) struct ContentHash(Sha256);

impl ContentHash {
    pub fn new(label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(label.as_bytes());
        Self(h)
    }

    pub fn floats(mut self, values: &[f64]) -> Self {
        for v in values {
            self.0.update(v.to_le_bytes());
        }
        self
    }

    /// First 16 hex digits of the digest.
    pub fn finish(self) -> String {
        self.0.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
