use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::{Error, Result};

/// Raw place label to canonical label mapping, read from a two-column TSV.
///
/// Lookups try the exact label first, then a case-insensitive match on the
/// trimmed label. An identity table canonicalizes by trimming and
/// lowercasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlaceTable {
    exact: BTreeMap<String, String>,
    folded: HashMap<String, String>,
    identity: bool,
}

fn fold(label: &str) -> String {
    label.trim().to_lowercase()
}

impl PlaceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn identity() -> Self {
        PlaceTable {
            identity: true,
            ..Self::default()
        }
    }

    pub fn insert(&mut self, raw: impl Into<String>, canonical: impl Into<String>) {
        let raw = raw.into();
        let canonical = canonical.into();
        self.folded.insert(fold(&raw), canonical.clone());
        self.exact.insert(raw, canonical);
    }

    pub fn len(&self) -> usize {
        self.exact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty()
    }

    pub fn canonical(&self, raw: &str) -> Option<String> {
        if let Some(c) = self.exact.get(raw) {
            return Some(c.clone());
        }
        if let Some(c) = self.folded.get(&fold(raw)) {
            return Some(c.clone());
        }
        if self.identity {
            let f = fold(raw);
            return (!f.is_empty()).then_some(f);
        }
        None
    }

    pub fn parse_tsv(content: &str) -> Result<Self> {
        let mut table = PlaceTable::new();
        for (n, line) in content.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(2, '\t');
            let raw = cols.next().unwrap_or_default();
            let canonical = cols.next().ok_or_else(|| {
                Error::Format(format!("place table line {}: expected raw<TAB>canonical", n + 1))
            })?;
            table.insert(raw, canonical.trim());
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&content)
    }
}
