//! Dataset manifest ingestion and per-label statistics.
//!
//! A manifest is a CSV with header `id,label,source` where `source` is
//! `real` or `synthetic`. Records reference images by id only; no pixel
//! data is ever read.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance of a record: produced by a camera/scanner or by a synthesizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Synthetic,
}

impl Source {
    pub fn parse(s: &str) -> Option<Source> {
        match s {
            "real" => Some(Source::Real),
            "synthetic" => Some(Source::Synthetic),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Real => "real",
            Source::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One dataset record: an opaque id, its label, and its provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    pub label: String,
    pub source: Source,
}

/// An ordered collection of records plus the distinct labels in
/// first-appearance order. Every downstream table iterates labels in
/// this order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<ManifestRecord>,
    label_set: Vec<String>,
}

impl Manifest {
    /// Builds a manifest from records, validating id uniqueness and
    /// non-empty fields. `line_of` maps a record index to the file line
    /// it came from so errors can name their row; use `|i| i as u64 + 2`
    /// for a headered CSV.
    pub fn from_records(
        records: Vec<ManifestRecord>,
        line_of: impl Fn(usize) -> u64,
    ) -> Result<Manifest> {
        let mut label_set: Vec<String> = Vec::new();
        let mut seen: HashMap<&str, u64> = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            let line = line_of(i);
            if rec.id.is_empty() {
                return Err(Error::parse(line, "missing id"));
            }
            if rec.label.is_empty() {
                return Err(Error::parse(line, "missing label"));
            }
            if let Some(first) = seen.insert(rec.id.as_str(), line) {
                return Err(Error::parse(
                    line,
                    format!("duplicate id `{}` (first seen at line {first})", rec.id),
                ));
            }
            if !label_set.iter().any(|l| l == &rec.label) {
                label_set.push(rec.label.clone());
            }
        }
        // `seen` borrows `records`; drop it before moving them.
        drop(seen);
        Ok(Manifest { records, label_set })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    /// Distinct labels in first-appearance order.
    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Per-label frequencies and ratios over a (possibly source-filtered)
/// manifest. Ratios are kept at full precision; rounding is a display
/// concern.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelStats {
    labels: Vec<String>,
    counts: Vec<u64>,
    total: u64,
}

impl LabelStats {
    pub fn new(labels: Vec<String>, counts: Vec<u64>) -> Result<LabelStats> {
        if labels.len() != counts.len() {
            return Err(Error::config("labels and counts must have equal length"));
        }
        let total = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyPopulation);
        }
        Ok(LabelStats {
            labels,
            counts,
            total,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count_of(&self, label: &str) -> Option<u64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.counts[i])
    }

    /// ratio_label = n_label / N, in label-set order.
    pub fn ratios(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&n| n as f64 / self.total as f64)
            .collect()
    }
}

/// Parses manifest CSV text. Header must be exactly `id,label,source`.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    let mut lines = Vec::new();
    {
        let headers = match reader.headers() {
            Ok(h) => h.clone(),
            Err(e) => return Err(Error::parse(1, e.to_string())),
        };
        if !text.is_empty() {
            expect_header(&headers, &["id", "label", "source"])?;
        }
    }
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(Error::parse(line, e.to_string()));
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(Error::parse(
                line,
                format!("expected 3 fields, found {}", row.len()),
            ));
        }
        let source = Source::parse(&row[2])
            .ok_or_else(|| Error::parse(line, format!("unknown source `{}`", &row[2])))?;
        records.push(ManifestRecord {
            id: row[0].to_string(),
            label: row[1].to_string(),
            source,
        });
        lines.push(line);
    }
    Manifest::from_records(records, |i| lines[i])
}

/// Loads a manifest CSV from disk.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text)
}

/// Counts records per label, optionally restricted to one source.
/// Labels keep manifest order; labels filtered down to zero records stay
/// in the table with a zero count.
pub fn compute_label_stats(manifest: &Manifest, source_filter: Option<Source>) -> Result<LabelStats> {
    let mut counts = vec![0u64; manifest.label_set().len()];
    for rec in manifest.records() {
        if source_filter.is_none_or(|s| rec.source == s) {
            let idx = manifest
                .label_set()
                .iter()
                .position(|l| l == &rec.label)
                .expect("record label is always in the label set");
            counts[idx] += 1;
        }
    }
    LabelStats::new(manifest.label_set().to_vec(), counts)
}

pub(crate) fn expect_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
    if got.len() < expected.len() || &got[..expected.len()] != expected {
        return Err(Error::parse(
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    if got.len() > expected.len() {
        return Err(Error::parse(
            1,
            format!("unexpected extra columns: `{}`", got[expected.len()..].join(",")),
        ));
    }
    Ok(())
}
