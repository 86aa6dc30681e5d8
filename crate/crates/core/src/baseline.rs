//! Character n-gram baseline: gap filling by letter-constrained beam search,
//! plus per-class models for place and date attribution.
//!
//! Probabilities use stupid backoff renormalized at every level, bottoming
//! out in an add-half unigram, so each conditional distribution over the
//! vocabulary is proper and strictly positive.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{from_astronomical, to_astronomical, CorpusKind, TextRecord};
use crate::dataset::ChatExample;
use crate::metrics::{eval_normalize, Candidate, CandidateList};
use crate::text::{self, is_letter, BOS, HIGH_DOT};
use crate::{par, Error, Result};

pub const DEFAULT_ORDER: usize = 6;
pub const DEFAULT_BACKOFF: f64 = 0.4;
pub const UNIGRAM_ADD: f64 = 0.5;
pub const FORMAT_VERSION: u32 = 1;

pub const DATE_BIN_YEARS: i32 = 50;
/// Astronomical bounds of the date bins.
pub const DATE_MIN: i32 = -800;
pub const DATE_MAX: i32 = 800;

#[derive(Debug, Clone, PartialEq)]
struct ContextCounts {
    total: u64,
    /// Sorted by vocabulary index.
    next: Vec<(u16, u64)>,
}

/// Character n-gram language model.
#[derive(Debug, Clone, PartialEq)]
pub struct CharLM {
    order: usize,
    backoff_factor: f64,
    vocab: Vec<char>,
    index: HashMap<char, u16>,
    unigram: Vec<u64>,
    unigram_total: u64,
    contexts: HashMap<Box<[char]>, ContextCounts>,
}

impl CharLM {
    /// Trains on `texts` with a vocabulary of every char they contain.
    pub fn train<S: AsRef<str>>(texts: &[S], order: usize) -> Result<Self> {
        let vocab: BTreeSet<char> = texts.iter().flat_map(|t| t.as_ref().chars()).collect();
        Self::train_with_vocab(texts, order, DEFAULT_BACKOFF, &vocab)
    }

    /// Trains over a fixed vocabulary; chars of `texts` outside it are
    /// treated as unseen context.
    pub fn train_with_vocab<S: AsRef<str>>(
        texts: &[S],
        order: usize,
        backoff_factor: f64,
        vocab: &BTreeSet<char>,
    ) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidArgument(format!("order must be at least 2, got {order}")));
        }
        if !(backoff_factor > 0.0 && backoff_factor < 1.0) {
            return Err(Error::InvalidArgument(format!("backoff factor {backoff_factor} not in (0,1)")));
        }
        let vocab: Vec<char> = vocab.iter().copied().filter(|&c| c != BOS).collect();
        if vocab.is_empty() || vocab.len() > u16::MAX as usize {
            return Err(Error::EmptyCorpus);
        }
        let index: HashMap<char, u16> = vocab.iter().enumerate().map(|(i, &c)| (c, i as u16)).collect();
        let mut unigram = vec![0u64; vocab.len()];
        let mut raw: HashMap<Box<[char]>, BTreeMap<u16, u64>> = HashMap::new();
        let mut padded = Vec::new();
        for t in texts {
            padded.clear();
            padded.extend(std::iter::repeat_n(BOS, order - 1));
            padded.extend(t.as_ref().chars());
            for p in order - 1..padded.len() {
                let Some(&ci) = index.get(&padded[p]) else {
                    continue;
                };
                unigram[ci as usize] += 1;
                for k in 1..order {
                    *raw.entry(padded[p - k..p].into()).or_default().entry(ci).or_default() += 1;
                }
            }
        }
        let unigram_total: u64 = unigram.iter().sum();
        if unigram_total == 0 {
            return Err(Error::EmptyCorpus);
        }
        let contexts = raw
            .into_iter()
            .map(|(ctx, next)| {
                let total = next.values().sum();
                (ctx, ContextCounts { total, next: next.into_iter().collect() })
            })
            .collect();
        Ok(CharLM { order, backoff_factor, vocab, index, unigram, unigram_total, contexts })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn backoff_factor(&self) -> f64 {
        self.backoff_factor
    }

    pub fn vocab(&self) -> &[char] {
        &self.vocab
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    /// Next-char distribution, indexed like [`CharLM::vocab`]. Only the last
    /// `order - 1` chars of `context` matter; pad with [`BOS`] to mark the
    /// start of a text.
    pub fn distribution(&self, context: &[char]) -> Vec<f64> {
        let denom = self.unigram_total as f64 + UNIGRAM_ADD * self.vocab.len() as f64;
        let mut dist: Vec<f64> = self.unigram.iter().map(|&n| (n as f64 + UNIGRAM_ADD) / denom).collect();
        let max_k = (self.order - 1).min(context.len());
        for k in 1..=max_k {
            let Some(cc) = self.contexts.get(&context[context.len() - k..]) else {
                break;
            };
            let total = cc.total as f64;
            for p in dist.iter_mut() {
                *p *= self.backoff_factor;
            }
            for &(i, n) in &cc.next {
                dist[i as usize] = n as f64 / total;
            }
            let sum: f64 = dist.iter().sum();
            for p in dist.iter_mut() {
                *p /= sum;
            }
        }
        dist
    }

    /// `ln P(c | context)`, or `None` for chars outside the vocabulary.
    pub fn log_prob(&self, context: &[char], c: char) -> Option<f64> {
        let i = *self.index.get(&c)?;
        Some(self.distribution(context)[i as usize].ln())
    }

    /// Log-likelihood of a whole text from its start, skipping chars outside
    /// the vocabulary. Returns the sum and the number of chars scored.
    pub fn score_text(&self, text: &str) -> (f64, usize) {
        let mut ctx: Vec<char> = std::iter::repeat_n(BOS, self.order - 1).collect();
        let mut ll = 0.0;
        let mut scored = 0;
        for c in text.chars() {
            if let Some(lp) = self.log_prob(&ctx, c) {
                ll += lp;
                scored += 1;
            }
            ctx.push(c);
        }
        (ll, scored)
    }
}

#[derive(Serialize)]
struct LmFileRef<'a> {
    order: usize,
    backoff_factor: f64,
    vocab: String,
    unigram: &'a [u64],
    contexts: Vec<(String, &'a [(u16, u64)])>,
}

#[derive(Deserialize)]
struct LmFile {
    order: usize,
    backoff_factor: f64,
    vocab: String,
    unigram: Vec<u64>,
    contexts: Vec<(String, Vec<(u16, u64)>)>,
}

impl Serialize for CharLM {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut contexts: Vec<(String, &[(u16, u64)])> = self
            .contexts
            .iter()
            .map(|(k, v)| (k.iter().collect(), v.next.as_slice()))
            .collect();
        contexts.sort_by(|a, b| a.0.cmp(&b.0));
        LmFileRef {
            order: self.order,
            backoff_factor: self.backoff_factor,
            vocab: self.vocab.iter().collect(),
            unigram: &self.unigram,
            contexts,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CharLM {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = LmFile::deserialize(d)?;
        let vocab: Vec<char> = f.vocab.chars().collect();
        if f.order < 2 || f.unigram.len() != vocab.len() {
            return Err(D::Error::custom("inconsistent language model table"));
        }
        let index = vocab.iter().enumerate().map(|(i, &c)| (c, i as u16)).collect();
        let mut contexts = HashMap::with_capacity(f.contexts.len());
        for (k, next) in f.contexts {
            if next.iter().any(|&(i, _)| i as usize >= vocab.len()) {
                return Err(D::Error::custom("context entry outside the vocabulary"));
            }
            let total = next.iter().map(|&(_, n)| n).sum();
            let key: Box<[char]> = k.chars().collect();
            contexts.insert(key, ContextCounts { total, next });
        }
        Ok(CharLM {
            order: f.order,
            backoff_factor: f.backoff_factor,
            unigram_total: f.unigram.iter().sum(),
            unigram: f.unigram,
            vocab,
            index,
            contexts,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestoreOptions {
    pub beam_width: usize,
    pub top_n: usize,
}

impl Default for RestoreOptions {
    fn default() -> Self {
        RestoreOptions { beam_width: 60, top_n: 20 }
    }
}

#[derive(Debug, Clone)]
struct Beam {
    filled: Vec<char>,
    letters_done: usize,
    score: f64,
}

fn by_score_then_text(a: &(f64, Vec<char>), b: &(f64, Vec<char>)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}

/// Separators the search may insert between letters.
fn is_separator(c: char) -> bool {
    c == ' ' || c == HIGH_DOT
}

/// Fills a gap of exactly `letters` letters between `left` and `right`.
///
/// Separators may be generated between letters but never at either end or
/// twice in a row. Every finished string also pays for the first
/// `order - 1` chars of `right` given what it generated.
pub fn restore(lm: &CharLM, left: &str, right: &str, letters: usize, opts: RestoreOptions) -> Result<Vec<Candidate>> {
    if !(1..=crate::masking::MAX_GAP_LETTERS).contains(&letters) {
        return Err(Error::InvalidArgument(format!("gap of {letters} letters outside 1..=20")));
    }
    if opts.beam_width == 0 || opts.top_n == 0 {
        return Err(Error::InvalidArgument("beam width and top_n must be positive".into()));
    }
    let symbols: Vec<(usize, char)> = lm
        .vocab()
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, c)| is_letter(c) || is_separator(c))
        .collect();
    if !symbols.iter().any(|&(_, c)| is_letter(c)) {
        return Err(Error::Untrained("language model has no letters".into()));
    }
    let mut prefix: Vec<char> = std::iter::repeat_n(BOS, lm.order() - 1).collect();
    prefix.extend(left.chars());
    let right: Vec<char> = right.chars().take(lm.order() - 1).collect();
    let max_len = 2 * letters + 2;

    let mut ctx = prefix.clone();
    let mut beams = vec![Beam { filled: Vec::new(), letters_done: 0, score: 0.0 }];
    let mut done: Vec<(f64, Vec<char>)> = Vec::new();
    while !beams.is_empty() {
        let mut next: Vec<(f64, Vec<char>, usize)> = Vec::new();
        for beam in &beams {
            ctx.truncate(prefix.len());
            ctx.extend_from_slice(&beam.filled);
            let dist = lm.distribution(&ctx);
            let last_sep = beam.filled.last().is_none_or(|&c| !is_letter(c));
            for &(i, c) in &symbols {
                let letter = is_letter(c);
                if !letter && last_sep {
                    continue;
                }
                if beam.filled.len() + 1 > max_len {
                    continue;
                }
                let mut filled = beam.filled.clone();
                filled.push(c);
                let score = beam.score + dist[i].ln();
                let letters_done = beam.letters_done + usize::from(letter);
                if letters_done == letters {
                    ctx.truncate(prefix.len());
                    ctx.extend_from_slice(&filled);
                    let mut total = score;
                    for &r in &right {
                        if let Some(lp) = lm.log_prob(&ctx, r) {
                            total += lp;
                        }
                        ctx.push(r);
                    }
                    done.push((total, filled));
                } else {
                    next.push((score, filled, letters_done));
                }
            }
        }
        next.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        next.truncate(opts.beam_width);
        beams = next
            .into_iter()
            .map(|(score, filled, letters_done)| Beam { filled, letters_done, score })
            .collect();
    }
    done.sort_by(by_score_then_text);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (score, filled) in done {
        let text: String = filled.into_iter().collect();
        if seen.insert(eval_normalize(&text)) {
            out.push(Candidate::new(text, Some(score)));
            if out.len() == opts.top_n {
                break;
            }
        }
    }
    Ok(out)
}

/// Restores the first placeholder in `text`.
pub fn restore_placeholder(lm: &CharLM, text: &str, opts: RestoreOptions) -> Result<Vec<Candidate>> {
    let ph = text::find_placeholder(text)
        .ok_or_else(|| Error::InvalidArgument("text contains no `[N letters missing]` placeholder".into()))?;
    restore(lm, &text[..ph.byte_range.start], &text[ph.byte_range.end..], ph.letters, opts)
}

/// Candidate lists for a batch of restoration examples, in input order.
/// Examples without a placeholder get an empty list.
pub fn restore_batch(lm: &CharLM, examples: &[ChatExample], opts: RestoreOptions) -> Vec<CandidateList> {
    let produced_by = format!("baseline:char-{}gram", lm.order());
    par::map(examples, |ex| {
        let candidates = restore_placeholder(lm, &ex.user, opts).unwrap_or_default();
        CandidateList::new(&ex.id, &produced_by, candidates)
    })
}

/// One class model inside a [`ClassifierSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelModel<L> {
    pub label: L,
    pub prior: f64,
    pub lm: CharLM,
}

/// Per-label language models scored as `ln prior + ll / letters`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSet<L> {
    pub order: usize,
    /// Sorted by label.
    pub labels: Vec<LabelModel<L>>,
}

impl<L: Ord + Clone> ClassifierSet<L> {
    /// Trains one model per distinct label over a vocabulary shared by all.
    pub fn train<S: AsRef<str>>(examples: &[(L, S)], order: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let vocab: BTreeSet<char> = examples.iter().flat_map(|(_, t)| t.as_ref().chars()).collect();
        let mut groups: BTreeMap<L, Vec<&str>> = BTreeMap::new();
        for (label, t) in examples {
            groups.entry(label.clone()).or_default().push(t.as_ref());
        }
        let n = examples.len() as f64;
        let labels = groups
            .into_iter()
            .map(|(label, texts)| {
                let lm = CharLM::train_with_vocab(&texts, order, DEFAULT_BACKOFF, &vocab)?;
                Ok(LabelModel { label, prior: texts.len() as f64 / n, lm })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClassifierSet { order, labels })
    }

    /// Every label with its score, best first; equal scores rank by label.
    pub fn score(&self, text: &str) -> Result<Vec<(L, f64)>> {
        if self.labels.is_empty() {
            return Err(Error::Untrained("classifier has no labels".into()));
        }
        let letters = text::letter_count(text);
        if letters == 0 {
            return Err(Error::InvalidArgument("text has no letters to classify".into()));
        }
        let mut out: Vec<(L, f64)> = self
            .labels
            .iter()
            .map(|m| {
                let (ll, _) = m.lm.score_text(text);
                (m.label.clone(), m.prior.ln() + ll / letters as f64)
            })
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }
}

/// Ranked place labels for `text`.
pub fn classify_place(set: &ClassifierSet<String>, text: &str) -> Result<Vec<(String, f64)>> {
    set.score(text)
}

/// A 50-year bin `[start, start + 50)` on the astronomical timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DateBin {
    pub start: i32,
}

impl DateBin {
    /// Bin holding the astronomical year `y`, clamped into the covered range.
    pub fn containing(y: i32) -> Self {
        let y = y.clamp(DATE_MIN, DATE_MAX - 1);
        DateBin { start: DATE_MIN + (y - DATE_MIN).div_euclid(DATE_BIN_YEARS) * DATE_BIN_YEARS }
    }

    pub fn end(self) -> i32 {
        self.start + DATE_BIN_YEARS
    }

    /// Astronomical midpoint.
    pub fn midpoint(self) -> i32 {
        self.start + DATE_BIN_YEARS / 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinProbability {
    /// Historical years, no year 0; `end` is exclusive.
    pub start: i32,
    pub end: i32,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateEstimate {
    /// Historical year.
    pub year: i32,
    pub distribution: Vec<BinProbability>,
}

impl DateEstimate {
    /// Softmax over bin scores, then the expected bin midpoint.
    pub fn from_scores(scores: &[(DateBin, f64)]) -> Self {
        let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s.1 - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        let mut pairs: Vec<(DateBin, f64)> = scores.iter().zip(&weights).map(|(s, w)| (s.0, w / z)).collect();
        pairs.sort_by_key(|p| p.0);
        Self::from_distribution(&pairs)
    }

    pub fn from_distribution(pairs: &[(DateBin, f64)]) -> Self {
        let expected: f64 = pairs.iter().map(|(b, p)| p * b.midpoint() as f64).sum();
        DateEstimate {
            year: from_astronomical(expected.round() as i64),
            distribution: pairs
                .iter()
                .map(|(b, p)| BinProbability {
                    start: from_astronomical(b.start as i64),
                    end: from_astronomical(b.end() as i64),
                    p: *p,
                })
                .collect(),
        }
    }
}

pub fn estimate_date(set: &ClassifierSet<DateBin>, text: &str) -> Result<DateEstimate> {
    Ok(DateEstimate::from_scores(&set.score(text)?))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub records: usize,
    pub inscriptions: usize,
    pub papyri: usize,
    pub dated: usize,
    pub placed: usize,
    pub letters: usize,
    pub places: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn from_records(records: &[TextRecord]) -> Self {
        let mut s = CorpusStats { records: records.len(), ..Default::default() };
        for r in records {
            match r.corpus_kind {
                CorpusKind::Inscription => s.inscriptions += 1,
                CorpusKind::Papyrus => s.papyri += 1,
            }
            s.dated += usize::from(r.date.is_some());
            if let Some(p) = &r.place {
                s.placed += 1;
                *s.places.entry(p.clone()).or_default() += 1;
            }
            s.letters += text::letter_count(&r.text_edited);
        }
        s
    }
}

/// Everything `train-baseline` produces, persisted as one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub format_version: u32,
    pub order: usize,
    pub backoff_factor: f64,
    pub restore: CharLM,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place: Option<ClassifierSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<ClassifierSet<DateBin>>,
    pub stats: CorpusStats,
}

impl BaselineModel {
    /// Restoration model on edited texts; place and date models on
    /// diplomatic texts of the records carrying those labels.
    pub fn train(records: &[TextRecord], order: usize) -> Result<Self> {
        let texts: Vec<&str> = records.iter().map(|r| r.text_edited.as_str()).collect();
        let restore = CharLM::train(&texts, order)?;
        let places: Vec<(String, &str)> = records
            .iter()
            .filter_map(|r| Some((r.place.clone()?, r.text_diplomatic.as_str())))
            .collect();
        let dates: Vec<(DateBin, &str)> = records
            .iter()
            .filter_map(|r| Some((DateBin::containing(to_astronomical(r.date?.midpoint) as i32), r.text_diplomatic.as_str())))
            .collect();
        Ok(BaselineModel {
            format_version: FORMAT_VERSION,
            order,
            backoff_factor: restore.backoff_factor(),
            restore,
            place: if places.is_empty() { None } else { Some(ClassifierSet::train(&places, order)?) },
            date: if dates.is_empty() { None } else { Some(ClassifierSet::train(&dates, order)?) },
            stats: CorpusStats::from_records(records),
        })
    }

    pub fn place_model(&self) -> Result<&ClassifierSet<String>> {
        self.place.as_ref().ok_or_else(|| Error::Untrained("no place labels in the training corpus".into()))
    }

    pub fn date_model(&self) -> Result<&ClassifierSet<DateBin>> {
        self.date.as_ref().ok_or_else(|| Error::Untrained("no dated records in the training corpus".into()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: BaselineModel = serde_json::from_str(s).map_err(|e| Error::json("baseline model", e))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "baseline model format {} (expected {FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
