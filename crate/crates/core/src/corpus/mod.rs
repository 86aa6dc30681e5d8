//! Corpus ingestion: markup parsing, normalization and metadata resolution.

mod date;
mod leiden;
mod normalize;
mod places;

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use date::{
    add_years, check_year, from_astronomical, resolve_date, to_astronomical, years_between,
    DateInterval,
};
pub use leiden::{parse_leiden, render, segments, LeidenText, Segment, LONG_GAP_HYPHENS};
pub use normalize::{normalize_greek, normalize_greek_counted};
pub use places::PlaceTable;

use crate::report::ReportEntry;
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Inscription,
    Papyrus,
}

impl CorpusKind {
    /// How the object is referred to in prompts.
    pub fn noun(self) -> &'static str {
        match self {
            CorpusKind::Inscription => "inscription",
            CorpusKind::Papyrus => "papyrus fragment",
        }
    }
}

impl std::str::FromStr for CorpusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inscription" | "inscriptions" | "inscr" => Ok(CorpusKind::Inscription),
            "papyrus" | "papyri" | "pap" => Ok(CorpusKind::Papyrus),
            other => Err(Error::InvalidArgument(format!("unknown corpus kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextVersion {
    Edited,
    Diplomatic,
}

/// A record as read from the input file, before any processing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    #[serde(rename = "kind")]
    pub corpus_kind: CorpusKind,
    #[serde(rename = "text")]
    pub leiden_text: String,
    #[serde(default)]
    pub date_post: Option<i32>,
    #[serde(default)]
    pub date_ante: Option<i32>,
    #[serde(default)]
    pub place: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub corpus_kind: CorpusKind,
    pub text_edited: String,
    pub text_diplomatic: String,
    pub date: Option<DateInterval>,
    pub place: Option<String>,
    /// Synthetic text produced by an augmentation model.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub augmented: bool,
}

impl TextRecord {
    pub fn text(&self, version: TextVersion) -> &str {
        match version {
            TextVersion::Edited => &self.text_edited,
            TextVersion::Diplomatic => &self.text_diplomatic,
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct IngestOutput {
    pub records: Vec<TextRecord>,
    pub errors: Vec<ReportEntry>,
}

/// Processes one raw record into a normalized [`TextRecord`].
pub fn process_record(raw: &RawRecord, places: &PlaceTable) -> Result<TextRecord> {
    if raw.id.trim().is_empty() {
        return Err(Error::Metadata("empty id".into()));
    }
    let leiden = parse_leiden(&raw.leiden_text)?;
    let (text_edited, dropped_e) = normalize_greek_counted(&leiden.edited);
    let (text_diplomatic, dropped_d) = normalize_greek_counted(&leiden.diplomatic);
    if dropped_e + dropped_d > 0 {
        log::warn!(
            "{}: dropped {} unknown symbol(s) during normalization",
            raw.id,
            dropped_e.max(dropped_d)
        );
    }
    let date = resolve_date(raw.date_post, raw.date_ante)?;
    let place = match raw.place.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(label) => {
            let canonical = places.canonical(label);
            if canonical.is_none() {
                log::warn!("{}: place `{label}` not in place table, dropped", raw.id);
            }
            canonical
        }
    };
    Ok(TextRecord {
        id: raw.id.clone(),
        corpus_kind: raw.corpus_kind,
        text_edited,
        text_diplomatic,
        date,
        place,
        augmented: false,
    })
}

/// Processes a batch; failures are reported per record and never abort it.
pub fn ingest(records: &[RawRecord], places: &PlaceTable) -> IngestOutput {
    let results = par::map(records, |r| process_record(r, places));
    let mut out = IngestOutput::default();
    for (raw, res) in records.iter().zip(results) {
        match res {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.errors.push(ReportEntry::from_error(&raw.id, "ingest", &e)),
        }
    }
    out
}

/// One raw line that could not be decoded, not yet tied to a record id.
#[derive(Debug, Clone)]
pub struct ReadFailure {
    pub line: usize,
    pub message: String,
}

/// Reads raw records from a TSV (`.tsv`, `.tab`) or JSONL (`.jsonl`,
/// `.ndjson`) file.
///
/// Unreadable files are fatal. Rows that fail to decode are returned as
/// failures so the rest of the batch can proceed.
pub fn read_raw_records(path: &Path) -> Result<(Vec<RawRecord>, Vec<ReportEntry>)> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match ext.as_str() {
        "tsv" | "tab" => read_tsv(file),
        "jsonl" | "ndjson" => read_jsonl(BufReader::new(file), path),
        other => Err(Error::Format(format!(
            "{}: cannot infer record format from extension `{other}`",
            path.display()
        ))),
    }
}

#[derive(Deserialize)]
struct TsvRow {
    id: String,
    kind: String,
    text: String,
    #[serde(default)]
    date_post: Option<String>,
    #[serde(default)]
    date_ante: Option<String>,
    #[serde(default)]
    place: Option<String>,
}

fn opt_year(field: Option<String>, name: &str) -> Result<Option<i32>> {
    match field.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Metadata(format!("{name} `{v}` is not an integer year"))),
    }
}

pub fn read_tsv<R: std::io::Read>(reader: R) -> Result<(Vec<RawRecord>, Vec<ReportEntry>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (n, row) in rdr.deserialize::<TsvRow>().enumerate() {
        let line = n + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(ReportEntry::new(format!("line:{line}"), "read", e.to_string()));
                continue;
            }
        };
        let id = row.id.clone();
        let parsed = (|| -> Result<RawRecord> {
            Ok(RawRecord {
                id: row.id,
                corpus_kind: row.kind.parse()?,
                leiden_text: row.text,
                date_post: opt_year(row.date_post, "date_post")?,
                date_ante: opt_year(row.date_ante, "date_ante")?,
                place: row.place.filter(|p| !p.trim().is_empty()),
            })
        })();
        match parsed {
            Ok(r) => records.push(r),
            Err(e) => errors.push(ReportEntry::from_error(&id, "read", &e)),
        }
    }
    Ok((records, errors))
}

pub fn read_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<(Vec<RawRecord>, Vec<ReportEntry>)> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(&line) {
            Ok(mut r) => {
                if r.place.as_deref().is_some_and(|p| p.trim().is_empty()) {
                    r.place = None;
                }
                records.push(r)
            }
            Err(e) => errors.push(ReportEntry::new(format!("line:{}", n + 1), "read", e.to_string())),
        }
    }
    Ok((records, errors))
}

/// Reads a full ingestion pipeline: raw file, places, processing.
pub fn ingest_file(path: &Path, places: &PlaceTable) -> Result<IngestOutput> {
    let (raw, mut read_errors) = read_raw_records(path)?;
    let mut out = ingest(&raw, places);
    read_errors.append(&mut out.errors);
    out.errors = read_errors;
    Ok(out)
}

pub fn write_records(path: &Path, records: &[TextRecord]) -> Result<()> {
    crate::jsonl::write(path, records)
}

pub fn read_records(path: &Path) -> Result<Vec<TextRecord>> {
    crate::jsonl::read(path)
}
