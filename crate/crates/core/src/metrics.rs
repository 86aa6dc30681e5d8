//! Evaluation protocol: normalization, CER, top-k accuracy, attribution
//! accuracy and date deviation.
//!
//! Scoring produces [`Partial`] tallies that merge associatively and
//! commutatively; [`aggregate`] turns any number of them into an
//! [`EvalReport`]. Floating point sums are taken over sorted values so that
//! reports do not depend on sample order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{years_between, DateInterval};
use crate::dataset::{ChatExample, Task};
use crate::text::{self, is_letter};
use crate::{Error, Result};

/// Restoration entries whose full source text is shorter than this are not
/// scored.
pub const MIN_SOURCE_CHARS: usize = 90;
/// Gold lengths (in letters) that enter the headline CER and top-k figures.
pub const HEADLINE_MAX_LETTERS: usize = 10;
pub const TOP_K_RESTORE: usize = 20;
pub const TOP_K_PLACE: usize = 3;

/// Strips everything but letters and folds final sigma.
pub fn eval_normalize(text: &str) -> String {
    text.chars()
        .filter(|&c| is_letter(c))
        .map(|c| if c == 'ς' { 'σ' } else { c })
        .collect()
}

/// Unit-cost edit distance over chars.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut curr = vec![0; a.len() + 1];
    for (j, cb) in b.iter().enumerate() {
        curr[0] = j + 1;
        for (i, ca) in a.iter().enumerate() {
            let sub = prev[i] + usize::from(ca != cb);
            curr[i + 1] = sub.min(prev[i + 1] + 1).min(curr[i] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[a.len()]
}

/// Character error rate of `pred` against `gold`.
///
/// An empty gold scores 0 against an empty prediction and the prediction's
/// length otherwise.
pub fn cer(pred: &str, gold: &str) -> f64 {
    let p: Vec<char> = pred.chars().collect();
    let g: Vec<char> = gold.chars().collect();
    if g.is_empty() {
        return p.len() as f64;
    }
    levenshtein(&p, &g) as f64 / g.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateFlag {
    LengthMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<CandidateFlag>,
}

impl Candidate {
    pub fn new(text: impl Into<String>, score: Option<f64>) -> Self {
        Candidate {
            text: text.into(),
            score,
            flags: Vec::new(),
        }
    }
}

/// Ranked outputs of one model for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub sample_id: String,
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub produced_by: String,
}

impl CandidateList {
    pub fn new(sample_id: impl Into<String>, produced_by: impl Into<String>, candidates: Vec<Candidate>) -> Self {
        CandidateList {
            sample_id: sample_id.into(),
            candidates,
            produced_by: produced_by.into(),
        }
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.text.as_str())
    }

    /// Sorts by descending score (ties by text) when every candidate has a
    /// score; otherwise keeps the given rank order.
    pub fn sort_by_score(&mut self) {
        if self.candidates.iter().all(|c| c.score.is_some()) {
            self.candidates.sort_by(|a, b| {
                b.score
                    .unwrap_or_default()
                    .total_cmp(&a.score.unwrap_or_default())
                    .then_with(|| a.text.cmp(&b.text))
            });
        }
    }

    /// Keeps the first candidate of every group whose texts agree after
    /// `key`, then truncates to `limit`.
    pub fn dedup_by_key(&mut self, limit: usize, key: impl Fn(&str) -> String) {
        let mut seen = BTreeSet::new();
        self.candidates.retain(|c| seen.insert(key(&c.text)));
        self.candidates.truncate(limit);
    }
}

/// The gold side of one restoration sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestorationGold {
    pub id: String,
    pub gold: String,
    pub letter_count: usize,
    /// Length of the unmasked source text in chars.
    pub source_chars: usize,
}

impl RestorationGold {
    pub fn from_example(ex: &ChatExample) -> Option<Self> {
        if ex.task() != Task::Restore {
            return None;
        }
        let ph = text::find_placeholder(&ex.user)?;
        let source_chars = ex.user.chars().count() - (ph.char_end - ph.char_start) + ex.assistant.chars().count();
        Some(RestorationGold {
            id: ex.id.clone(),
            gold: ex.assistant.clone(),
            letter_count: ex.meta.gold_letter_count.unwrap_or(ph.letters),
            source_chars,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Bucket {
    n: usize,
    top1: usize,
    top20: usize,
    cers: Vec<f64>,
}

impl Bucket {
    fn merge(&mut self, other: Bucket) {
        self.n += other.n;
        self.top1 += other.top1;
        self.top20 += other.top20;
        self.cers.extend(other.cers);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct PlaceTally {
    n: usize,
    top1: usize,
    top3: usize,
}

/// Per-sample line of the evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    pub task: Task,
    pub rank_of_gold: Option<usize>,
    pub cer: Option<f64>,
    pub deviation: Option<i64>,
}

/// Mergeable scoring tallies for any mix of tasks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partial {
    buckets: BTreeMap<usize, Bucket>,
    excluded_short: usize,
    place: PlaceTally,
    deviations: Vec<i64>,
    flagged: BTreeMap<&'static str, Vec<String>>,
    rows: Vec<SampleRow>,
}

impl Partial {
    pub fn merge(mut self, other: Partial) -> Partial {
        for (k, b) in other.buckets {
            self.buckets.entry(k).or_default().merge(b);
        }
        self.excluded_short += other.excluded_short;
        self.place.n += other.place.n;
        self.place.top1 += other.place.top1;
        self.place.top3 += other.place.top3;
        self.deviations.extend(other.deviations);
        for (k, v) in other.flagged {
            self.flagged.entry(k).or_default().extend(v);
        }
        self.rows.extend(other.rows);
        self
    }

    fn flag(&mut self, kind: &'static str, id: &str) {
        self.flagged.entry(kind).or_default().push(id.to_string());
    }

    /// Per-sample rows sorted by task then id.
    pub fn rows(&self) -> Vec<SampleRow> {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| (a.task, &a.id).cmp(&(b.task, &b.id)));
        rows
    }
}

fn rank_of(candidates: &[&str], gold: &str, key: impl Fn(&str) -> String) -> Option<usize> {
    let g = key(gold);
    candidates.iter().position(|c| key(c) == g).map(|p| p + 1)
}

/// Scores restoration samples against their candidate lists.
///
/// Missing or empty candidate lists count as misses with CER 1 and are
/// flagged.
pub fn score_restoration(golds: &[RestorationGold], candidates: &HashMap<String, CandidateList>) -> Partial {
    let mut p = Partial::default();
    for g in golds {
        if g.source_chars < MIN_SOURCE_CHARS {
            p.excluded_short += 1;
            continue;
        }
        let texts: Vec<&str> = candidates
            .get(&g.id)
            .map(|c| c.texts().collect())
            .unwrap_or_default();
        let gold_norm = eval_normalize(&g.gold);
        let (rank, cer_top1) = if texts.is_empty() {
            p.flag("restore_empty", &g.id);
            (None, 1.0)
        } else {
            (rank_of(&texts, &g.gold, eval_normalize), cer(&eval_normalize(texts[0]), &gold_norm))
        };
        let b = p.buckets.entry(g.letter_count).or_default();
        b.n += 1;
        b.top1 += usize::from(rank == Some(1));
        b.top20 += usize::from(rank.is_some_and(|r| r <= TOP_K_RESTORE));
        b.cers.push(cer_top1);
        p.rows.push(SampleRow {
            id: g.id.clone(),
            task: Task::Restore,
            rank_of_gold: rank,
            cer: Some(cer_top1),
            deviation: None,
        });
    }
    p
}

/// Scores place predictions; gold labels outside `known` are flagged and
/// skipped.
pub fn score_place(
    golds: &[(String, String)],
    predictions: &HashMap<String, Vec<String>>,
    known: Option<&BTreeSet<String>>,
) -> Partial {
    let mut p = Partial::default();
    for (id, label) in golds {
        if known.is_some_and(|k| !k.contains(label)) {
            p.flag("place_unknown_label", id);
            continue;
        }
        let ranked: Vec<&str> = predictions
            .get(id)
            .map(|v| v.iter().map(String::as_str).collect())
            .unwrap_or_default();
        let rank = rank_of(&ranked, label, |s| s.trim().to_lowercase());
        p.place.n += 1;
        p.place.top1 += usize::from(rank == Some(1));
        p.place.top3 += usize::from(rank.is_some_and(|r| r <= TOP_K_PLACE));
        p.rows.push(SampleRow {
            id: id.clone(),
            task: Task::Place,
            rank_of_gold: rank,
            cer: None,
            deviation: None,
        });
    }
    p
}

/// Years between a prediction and the nearest end of the gold interval; 0
/// inside it.
pub fn date_deviation(predicted: i32, interval: &DateInterval) -> i64 {
    if interval.contains(predicted) {
        0
    } else {
        years_between(predicted, interval.post)
            .abs()
            .min(years_between(predicted, interval.ante).abs())
    }
}

/// Scores date predictions; samples without a usable prediction are flagged.
pub fn score_date(golds: &[(String, DateInterval)], predictions: &HashMap<String, Option<i32>>) -> Partial {
    let mut p = Partial::default();
    for (id, interval) in golds {
        match predictions.get(id).copied().flatten() {
            Some(year) => {
                let d = date_deviation(year, interval);
                p.deviations.push(d);
                p.rows.push(SampleRow {
                    id: id.clone(),
                    task: Task::Date,
                    rank_of_gold: None,
                    cer: None,
                    deviation: Some(d),
                });
            }
            None => p.flag("date_no_prediction", id),
        }
    }
    p
}

fn sorted_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn fraction(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthTally {
    pub n: usize,
    pub top1: Option<f64>,
    pub top20: Option<f64>,
    pub cer_micro: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub restore: usize,
    pub place: usize,
    pub date: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cer_by_length: BTreeMap<usize, f64>,
    /// Mean of the per-length CERs (each length weighted equally).
    pub cer_avg: Option<f64>,
    /// Mean CER over all samples of length 1..=10.
    pub cer_micro: Option<f64>,
    pub top1: Option<f64>,
    pub top20: Option<f64>,
    /// Restoration tally over every gold length, including > 10.
    pub all_lengths: LengthTally,
    pub place_top1: Option<f64>,
    pub place_top3: Option<f64>,
    pub date_mean_dev: Option<f64>,
    pub date_median_dev: Option<f64>,
    pub n_samples: SampleCounts,
    pub excluded_short: usize,
    pub flagged: BTreeMap<String, Vec<String>>,
}

/// Merges tallies into a final report.
pub fn aggregate(partials: impl IntoIterator<Item = Partial>) -> EvalReport {
    let p = partials.into_iter().fold(Partial::default(), Partial::merge);
    let mut cer_by_length = BTreeMap::new();
    let mut headline = Bucket::default();
    let mut all = Bucket::default();
    for (&len, b) in &p.buckets {
        if (1..=HEADLINE_MAX_LETTERS).contains(&len) && b.n > 0 {
            cer_by_length.insert(len, sorted_sum(&b.cers) / b.n as f64);
            headline.merge(b.clone());
        }
        all.merge(b.clone());
    }
    let cer_avg = (!cer_by_length.is_empty())
        .then(|| sorted_sum(&cer_by_length.values().copied().collect::<Vec<_>>()) / cer_by_length.len() as f64);
    let mut devs = p.deviations.clone();
    devs.sort_unstable();
    let date_mean_dev = (!devs.is_empty()).then(|| devs.iter().sum::<i64>() as f64 / devs.len() as f64);
    let date_median_dev = (!devs.is_empty()).then(|| {
        let m = devs.len() / 2;
        if devs.len() % 2 == 1 {
            devs[m] as f64
        } else {
            (devs[m - 1] + devs[m]) as f64 / 2.0
        }
    });
    let flagged = p
        .flagged
        .iter()
        .map(|(k, v)| {
            let mut v = v.clone();
            v.sort();
            (k.to_string(), v)
        })
        .collect();
    EvalReport {
        cer_by_length,
        cer_avg,
        cer_micro: (headline.n > 0).then(|| sorted_sum(&headline.cers) / headline.n as f64),
        top1: fraction(headline.top1, headline.n),
        top20: fraction(headline.top20, headline.n),
        all_lengths: LengthTally {
            n: all.n,
            top1: fraction(all.top1, all.n),
            top20: fraction(all.top20, all.n),
            cer_micro: (all.n > 0).then(|| sorted_sum(&all.cers) / all.n as f64),
        },
        place_top1: fraction(p.place.top1, p.place.n),
        place_top3: fraction(p.place.top3, p.place.n),
        date_mean_dev,
        date_median_dev,
        n_samples: SampleCounts {
            restore: headline.n,
            place: p.place.n,
            date: devs.len(),
        },
        excluded_short: p.excluded_short,
        flagged,
    }
}

pub fn write_samples_csv(path: &Path, rows: &[SampleRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path.display().to_string(), e))?;
    w.write_record(["id", "task", "rank_of_gold", "cer", "deviation"])
        .map_err(|e| Error::csv(path.display().to_string(), e))?;
    for r in rows {
        w.write_record([
            r.id.clone(),
            r.task.as_str().to_string(),
            r.rank_of_gold.map(|x| x.to_string()).unwrap_or_default(),
            r.cer.map(|x| x.to_string()).unwrap_or_default(),
            r.deviation.map(|x| x.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| Error::csv(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a date candidate as a signed year.
pub fn parse_year(s: &str) -> Option<i32> {
    s.trim().parse::<i32>().ok().filter(|&y| y != 0)
}

/// Scores a mixed evaluation set (any tasks) against candidate lists keyed
/// by sample id.
pub fn evaluate_examples(examples: &[ChatExample], candidates: &HashMap<String, CandidateList>) -> Partial {
    let mut restore = Vec::new();
    let mut place = Vec::new();
    let mut place_preds = HashMap::new();
    let mut date = Vec::new();
    let mut date_preds = HashMap::new();
    for ex in examples {
        match ex.task() {
            Task::Restore => restore.extend(RestorationGold::from_example(ex)),
            Task::Place => {
                place.push((ex.id.clone(), ex.assistant.clone()));
                if let Some(c) = candidates.get(&ex.id) {
                    place_preds.insert(ex.id.clone(), c.texts().map(str::to_string).collect());
                }
            }
            Task::Date => {
                let interval = ex.meta.date.unwrap_or_else(|| {
                    let y = parse_year(&ex.assistant).unwrap_or(1);
                    DateInterval { post: y, ante: y, midpoint: y }
                });
                date.push((ex.id.clone(), interval));
                let pred = candidates
                    .get(&ex.id)
                    .and_then(|c| c.texts().find_map(parse_year));
                date_preds.insert(ex.id.clone(), pred);
            }
        }
    }
    score_restoration(&restore, candidates)
        .merge(score_place(&place, &place_preds, None))
        .merge(score_date(&date, &date_preds))
}
