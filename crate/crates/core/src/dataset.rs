//! Chat-style examples for the restore, place and date tasks; filters,
//! splits and JSONL emission.

use std::collections::HashSet;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_greek, CorpusKind, DateInterval, TextRecord, TextVersion};
use crate::masking::{self, LetterRange, NoiseLevel};
use crate::report::ReportEntry;
use crate::text::derive_seed;
use crate::{jsonl, par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Restore,
    Place,
    Date,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Restore => "restore",
            Task::Place => "place",
            Task::Date => "date",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn system_prompt(task: Task, kind: CorpusKind) -> String {
    let noun = kind.noun();
    match task {
        Task::Date => format!("Date this {noun} to an exact year!"),
        Task::Place => format!("Assign this {noun} to an exact place!"),
        Task::Restore => format!("Reconstruct the missing letters in this {noun}!"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub corpus_kind: CorpusKind,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_letter_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_version: Option<TextVersion>,
    /// Gold interval for date examples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<DateInterval>,
    pub split_tag: String,
    /// Hint for trainers: compute the loss on the assistant turn only.
    pub train_on_assistant_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "WireExample", try_from = "WireExample")]
pub struct ChatExample {
    pub system: String,
    pub user: String,
    pub assistant: String,
    pub id: String,
    pub meta: ExampleMeta,
}

impl ChatExample {
    pub fn task(&self) -> Task {
        self.meta.task
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Serialize, Deserialize)]
struct WireExample {
    messages: Vec<Message>,
    id: String,
    meta: ExampleMeta,
}

impl From<ChatExample> for WireExample {
    fn from(ex: ChatExample) -> Self {
        WireExample {
            messages: vec![
                Message { role: Role::System, content: ex.system },
                Message { role: Role::User, content: ex.user },
                Message { role: Role::Assistant, content: ex.assistant },
            ],
            id: ex.id,
            meta: ex.meta,
        }
    }
}

impl TryFrom<WireExample> for ChatExample {
    type Error = String;

    fn try_from(w: WireExample) -> std::result::Result<Self, String> {
        let mut system = None;
        let mut user = None;
        let mut assistant = None;
        for m in w.messages {
            let slot = match m.role {
                Role::System => &mut system,
                Role::User => &mut user,
                Role::Assistant => &mut assistant,
            };
            if slot.replace(m.content).is_some() {
                return Err(format!("{}: repeated {:?} message", w.id, m.role));
            }
        }
        Ok(ChatExample {
            system: system.ok_or_else(|| format!("{}: missing system message", w.id))?,
            user: user.ok_or_else(|| format!("{}: missing user message", w.id))?,
            assistant: assistant.unwrap_or_default(),
            id: w.id,
            meta: w.meta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VersionChoice {
    Edited,
    Diplomatic,
    Both,
}

impl VersionChoice {
    fn versions(self) -> &'static [TextVersion] {
        match self {
            VersionChoice::Edited => &[TextVersion::Edited],
            VersionChoice::Diplomatic => &[TextVersion::Diplomatic],
            VersionChoice::Both => &[TextVersion::Edited, TextVersion::Diplomatic],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleOptions {
    pub versions: VersionChoice,
    pub letters: LetterRange,
    pub noise: Option<NoiseLevel>,
    pub shuffle: bool,
    /// `(min_chars, max_chars)` window applied to the user text.
    pub truncate: Option<(usize, usize)>,
    pub split_tag: String,
}

impl Default for ExampleOptions {
    fn default() -> Self {
        ExampleOptions {
            versions: VersionChoice::Both,
            letters: LetterRange::default(),
            noise: None,
            shuffle: false,
            truncate: None,
            split_tag: "train".into(),
        }
    }
}

fn meta(record: &TextRecord, task: Task, opts: &ExampleOptions) -> ExampleMeta {
    ExampleMeta {
        corpus_kind: record.corpus_kind,
        task,
        gold_letter_count: None,
        source_version: None,
        date: None,
        split_tag: opts.split_tag.clone(),
        train_on_assistant_only: true,
    }
}

fn augment<R: Rng + ?Sized>(text: String, opts: &ExampleOptions, rng: &mut R) -> Option<String> {
    let mut text = text;
    if opts.shuffle {
        text = masking::shuffle_sentences(&text, rng);
    }
    if let Some(level) = opts.noise {
        text = masking::add_noise(&text, level, rng);
    }
    if let Some((lo, hi)) = opts.truncate {
        text = masking::truncate(&text, lo, hi, rng)?;
    }
    Some(text)
}

/// Builds the examples one record contributes to `task`.
///
/// Restore examples come from the requested text versions; place and date
/// examples always use the diplomatic text. A record that cannot contribute
/// is reported instead.
pub fn build_examples<R: Rng + ?Sized>(
    record: &TextRecord,
    task: Task,
    opts: &ExampleOptions,
    rng: &mut R,
) -> std::result::Result<Vec<ChatExample>, ReportEntry> {
    let system = system_prompt(task, record.corpus_kind);
    let skip = |msg: &str| ReportEntry::new(&record.id, format!("build:{task}"), msg);
    match task {
        Task::Restore => {
            let mut out = Vec::new();
            for &version in opts.versions.versions() {
                let Some(sample) = masking::sample_mask(record, version, opts.letters, rng) else {
                    continue;
                };
                let Some(user) = augment(sample.prompt_text, opts, rng) else {
                    continue;
                };
                let mut m = meta(record, task, opts);
                m.gold_letter_count = Some(sample.gold_letter_count);
                m.source_version = Some(version);
                out.push(ChatExample {
                    system: system.clone(),
                    user,
                    assistant: sample.gold,
                    id: format!("{}/restore/{}", record.id, version_str(version)),
                    meta: m,
                });
            }
            if out.is_empty() {
                return Err(skip("no intact span can hold a gap of the requested size"));
            }
            Ok(out)
        }
        Task::Place => {
            let place = record.place.clone().ok_or_else(|| skip("record has no place"))?;
            let user = augment(record.text_diplomatic.clone(), opts, rng).ok_or_else(|| skip("text too short"))?;
            Ok(vec![ChatExample {
                system,
                user,
                assistant: place,
                id: format!("{}/place", record.id),
                meta: meta(record, task, opts),
            }])
        }
        Task::Date => {
            let date = record.date.ok_or_else(|| skip("record has no date"))?;
            let user = augment(record.text_diplomatic.clone(), opts, rng).ok_or_else(|| skip("text too short"))?;
            let mut m = meta(record, task, opts);
            m.date = Some(date);
            Ok(vec![ChatExample {
                system,
                user,
                assistant: date.midpoint.to_string(),
                id: format!("{}/date", record.id),
                meta: m,
            }])
        }
    }
}

fn version_str(v: TextVersion) -> &'static str {
    match v {
        TextVersion::Edited => "edited",
        TextVersion::Diplomatic => "diplomatic",
    }
}

/// Builds a whole dataset; each record draws from its own generator stream
/// derived from `seed` and its id, so results do not depend on scheduling.
pub fn build_dataset(
    records: &[TextRecord],
    task: Task,
    opts: &ExampleOptions,
    seed: u64,
) -> (Vec<ChatExample>, Vec<ReportEntry>) {
    let results = par::map(records, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &r.id));
        build_examples(r, task, opts, &mut rng)
    });
    let mut examples = Vec::new();
    let mut report = Vec::new();
    for r in results {
        match r {
            Ok(mut ex) => examples.append(&mut ex),
            Err(e) => report.push(e),
        }
    }
    (examples, report)
}

/// Restoration evaluation set with up to `per_length` samples for every
/// gold length in `lengths`, drawn from records of at least `min_chars`
/// characters.
pub fn build_restoration_eval_set(
    records: &[TextRecord],
    version: TextVersion,
    lengths: RangeInclusive<usize>,
    per_length: usize,
    min_chars: usize,
    seed: u64,
) -> Result<Vec<ChatExample>> {
    let pool: Vec<&TextRecord> = records
        .iter()
        .filter(|r| r.text(version).chars().count() >= min_chars)
        .collect();
    let mut out = Vec::new();
    if pool.is_empty() {
        return Ok(out);
    }
    for letters in lengths {
        let range = LetterRange::exact(letters)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("eval-length-{letters}")));
        let mut made = 0;
        let mut attempts = 0;
        while made < per_length && attempts < per_length * 20 {
            attempts += 1;
            let rec = pool[rng.gen_range(0..pool.len())];
            let Some(sample) = masking::sample_mask(rec, version, range, &mut rng) else {
                continue;
            };
            out.push(ChatExample {
                system: system_prompt(Task::Restore, rec.corpus_kind),
                user: sample.prompt_text,
                assistant: sample.gold,
                id: format!("{}/restore/{}/L{letters}/{made}", rec.id, version_str(version)),
                meta: ExampleMeta {
                    corpus_kind: rec.corpus_kind,
                    task: Task::Restore,
                    gold_letter_count: Some(letters),
                    source_version: Some(version),
                    date: None,
                    split_tag: "test".into(),
                    train_on_assistant_only: true,
                },
            });
            made += 1;
        }
    }
    Ok(out)
}

pub const MIN_TOKENS: usize = 75;
pub const MAX_TOKENS: usize = 847;

pub trait TokenCounter: Sync {
    fn count(&self, text: &str) -> usize;
}

impl<F: Fn(&str) -> usize + Sync> TokenCounter for F {
    fn count(&self, text: &str) -> usize {
        self(text)
    }
}

/// Tokenizer-free estimate: `ceil(chars / chars_per_token)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharProxyCounter {
    pub chars_per_token: f64,
}

impl Default for CharProxyCounter {
    fn default() -> Self {
        CharProxyCounter { chars_per_token: 2.5 }
    }
}

impl TokenCounter for CharProxyCounter {
    fn count(&self, text: &str) -> usize {
        (text.chars().count() as f64 / self.chars_per_token).ceil() as usize
    }
}

/// True when the user turn's token count lies in `[min, max]`.
pub fn length_filter(example: &ChatExample, counter: &dyn TokenCounter, min: usize, max: usize) -> bool {
    let n = counter.count(&example.user);
    min <= n && n <= max
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    Train95Test5,
    Train80Val10Test10,
    PhiShared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub scheme: SplitScheme,
    pub seed: u64,
    pub train: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<Vec<String>>,
    pub test: Vec<String>,
    /// Ids kept out of training without being tested on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<Vec<String>>,
}

impl SplitManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Partitions record ids according to `plan`.
///
/// The proportional schemes shuffle with the plan's seed and cut; the shared
/// PHI scheme tests on ids ending in `3` and trains on ids ending in neither
/// `3` nor `4`.
pub fn make_splits(ids: &[String], plan: SplitPlan) -> Result<SplitManifest> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    let mut manifest = SplitManifest {
        scheme: plan.scheme,
        seed: plan.seed,
        train: Vec::new(),
        val: None,
        test: Vec::new(),
        excluded: None,
    };
    match plan.scheme {
        SplitScheme::PhiShared => {
            let mut excluded = Vec::new();
            for id in ids {
                match id.chars().last() {
                    Some('3') => {
                        manifest.test.push(id.clone());
                        excluded.push(id.clone());
                    }
                    Some('4') => excluded.push(id.clone()),
                    _ => manifest.train.push(id.clone()),
                }
            }
            manifest.excluded = Some(excluded);
        }
        SplitScheme::Train95Test5 | SplitScheme::Train80Val10Test10 => {
            let mut shuffled = ids.to_vec();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
            let n = shuffled.len();
            let cut = |f: f64| (f * n as f64).round() as usize;
            if plan.scheme == SplitScheme::Train95Test5 {
                let test = cut(0.05);
                manifest.test = shuffled.split_off(n - test);
            } else {
                let (val, test) = (cut(0.10), cut(0.10));
                manifest.test = shuffled.split_off(n - test);
                manifest.val = Some(shuffled.split_off(n - test - val));
            }
            manifest.train = shuffled;
        }
    }
    Ok(manifest)
}

pub fn emit_jsonl(examples: &[ChatExample], path: &Path) -> Result<()> {
    jsonl::write(path, examples)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ChatExample>> {
    jsonl::read(path)
}

pub const AUGMENTATION_VARIANTS: usize = 10;

const AUGMENTATION_PROMPTS: &str = include_str!("../data/augmentation_prompts.txt");

pub fn augmentation_prompt(variant: usize) -> Result<&'static str> {
    AUGMENTATION_PROMPTS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .nth(variant)
        .filter(|_| variant < AUGMENTATION_VARIANTS)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "augmentation variant {variant} out of range 0..{AUGMENTATION_VARIANTS}"
            ))
        })
}

/// A request asking a generative model for a paraphrased copy of a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationRequest {
    pub record_id: String,
    pub variant: usize,
    pub system: String,
    pub user: String,
}

impl AugmentationRequest {
    pub fn messages(&self) -> Vec<Message> {
        vec![
            Message { role: Role::System, content: self.system.clone() },
            Message { role: Role::User, content: self.user.clone() },
        ]
    }
}

pub fn build_augmentation_request(record: &TextRecord, variant: usize) -> Result<AugmentationRequest> {
    let system = augmentation_prompt(variant)?;
    if record.corpus_kind != CorpusKind::Inscription {
        return Err(Error::InvalidArgument(format!(
            "{}: augmentation prompts are written for inscriptions",
            record.id
        )));
    }
    Ok(AugmentationRequest {
        record_id: record.id.clone(),
        variant,
        system: system.to_string(),
        user: record.text_edited.clone(),
    })
}

/// Turns a model's paraphrase back into a synthetic record.
pub fn augmented_record(original: &TextRecord, variant: usize, response: &str) -> TextRecord {
    let text = normalize_greek(response);
    TextRecord {
        id: format!("{}~aug{variant}", original.id),
        corpus_kind: original.corpus_kind,
        text_edited: text.clone(),
        text_diplomatic: text,
        date: original.date,
        place: original.place.clone(),
        augmented: true,
    }
}
