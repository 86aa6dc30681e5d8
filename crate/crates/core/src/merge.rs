//! TIES merging (trim, elect sign, disjoint mean) on flat parameter vectors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{par, Error, Result};

pub const DEFAULT_DENSITY: f64 = 0.5;
pub const DEFAULT_LAMBDA: f64 = 1.0;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub name: String,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        ParamVector { name: name.into(), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::InvalidArgument(format!("{}: non-finite value at index {i}", self.name))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeOutput {
    pub merged: ParamVector,
    /// Coordinates whose kept deltas summed to zero; these elect `+`.
    pub zero_sum_coordinates: Vec<usize>,
}

/// Number of entries kept per task vector. The product is nudged down
/// slightly so that e.g. 0.7 * 10 keeps 7 rather than 8.
pub fn kept_count(density: f64, n: usize) -> usize {
    ((density * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Zeroes all but the `k` largest-magnitude entries; equal magnitudes
/// favour the lower index.
pub fn trim(delta: &[f64], k: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..delta.len()).collect();
    idx.sort_by(|&a, &b| delta[b].abs().total_cmp(&delta[a].abs()).then(a.cmp(&b)));
    let mut out = vec![0.0; delta.len()];
    for &i in idx.iter().take(k) {
        out[i] = delta[i];
    }
    out
}

fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

pub fn ties_merge(base: &ParamVector, tuned: &[ParamVector], density: f64, lambda: f64) -> Result<MergeOutput> {
    if tuned.is_empty() {
        return Err(Error::InvalidArgument("at least one tuned vector is required".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("density {density} not in (0, 1]")));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument("lambda must be finite".into()));
    }
    base.check_finite()?;
    for t in tuned {
        if t.len() != base.len() {
            return Err(Error::InvalidArgument(format!(
                "{} has {} entries, base {} has {}",
                t.name,
                t.len(),
                base.name,
                base.len()
            )));
        }
        t.check_finite()?;
    }
    let n = base.len();
    let k = kept_count(density, n);
    let trimmed: Vec<Vec<f64>> = par::map(tuned, |t| {
        let delta: Vec<f64> = t.values.iter().zip(&base.values).map(|(a, b)| a - b).collect();
        trim(&delta, k)
    });

    let chunks: Vec<(usize, usize)> = (0..n).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(n))).collect();
    let parts = par::map(&chunks, |&(start, end)| {
        let mut values = Vec::with_capacity(end - start);
        let mut zero_sum = Vec::new();
        let mut column = Vec::with_capacity(trimmed.len());
        for j in start..end {
            column.clear();
            column.extend(trimmed.iter().map(|t| t[j]));
            let total = sorted_sum(&mut column);
            if total == 0.0 {
                zero_sum.push(j);
            }
            let positive = total >= 0.0;
            let mut agree: Vec<f64> = column
                .iter()
                .copied()
                .filter(|&v| if positive { v > 0.0 } else { v < 0.0 })
                .collect();
            let merged = if agree.is_empty() { 0.0 } else { sorted_sum(&mut agree) / agree.len() as f64 };
            values.push(base.values[j] + lambda * merged);
        }
        (values, zero_sum)
    });
    let mut values = Vec::with_capacity(n);
    let mut zero_sum_coordinates = Vec::new();
    for (v, z) in parts {
        values.extend(v);
        zero_sum_coordinates.extend(z);
    }
    Ok(MergeOutput {
        merged: ParamVector::new("ties-merged", values),
        zero_sum_coordinates,
    })
}

/// Reads a single-column CSV of numbers. A non-numeric first line is taken
/// as a header; blank lines are skipped.
pub fn read_vector(path: &Path) -> Result<ParamVector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_vector(&name, &text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn parse_vector(name: &str, text: &str) -> Result<ParamVector> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(format!("{name} line {}", i + 1), e))?;
        if rec.len() != 1 {
            return Err(Error::Format(format!("line {}: expected one column, found {}", i + 1, rec.len())));
        }
        let field = &rec[0];
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => {}
            Err(_) => return Err(Error::Format(format!("line {}: `{field}` is not a number", i + 1))),
        }
    }
    let v = ParamVector::new(name, values);
    v.check_finite()?;
    Ok(v)
}

pub fn vector_to_csv(v: &ParamVector) -> String {
    let mut s = String::with_capacity(v.len() * 8);
    for x in &v.values {
        s.push_str(&format!("{x}\n"));
    }
    s
}

pub fn write_vector(path: &Path, v: &ParamVector) -> Result<()> {
    std::fs::write(path, vector_to_csv(v)).map_err(|e| Error::io(path, e))
}
