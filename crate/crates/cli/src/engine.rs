//! Query execution shared by the CLI and the HTTP service.

use std::path::Path;

use lacuna::baseline::{self, BaselineModel, BinProbability, RestoreOptions};
use lacuna::corpus::{normalize_greek, CorpusKind};
use lacuna::dataset::{system_prompt, ChatExample, ExampleMeta, Task};
use lacuna::inference::Client;
use lacuna::metrics::{parse_year, Candidate, CandidateFlag};
use lacuna::text::{derive_seed, letter_count};
use lacuna::Result;
use serde::Serialize;

use crate::input::GapQuery;

/// A baseline model with a content-derived identifier.
#[derive(Debug)]
pub struct LoadedBaseline {
    pub id: String,
    pub model: BaselineModel,
}

impl LoadedBaseline {
    pub fn new(model: BaselineModel) -> Self {
        let id = format!("baseline:char-{}gram:{:016x}", model.order, derive_seed(0, &model.to_json()));
        LoadedBaseline { id, model }
    }

    pub fn load(path: &Path) -> Result<Self> {
        BaselineModel::load(path).map(Self::new)
    }
}

pub enum Backend<'a> {
    Baseline(&'a LoadedBaseline),
    Remote(&'a Client),
}

impl Backend<'_> {
    pub fn id(&self) -> String {
        match self {
            Backend::Baseline(b) => b.id.clone(),
            Backend::Remote(c) => c.produced_by(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateView {
    pub text: String,
    pub score: Option<f64>,
    pub letters: usize,
    pub flags: Vec<CandidateFlag>,
}

impl CandidateView {
    fn new(c: Candidate, expected: usize) -> Self {
        let letters = letter_count(&c.text);
        let mut flags = c.flags;
        if letters != expected && !flags.contains(&CandidateFlag::LengthMismatch) {
            flags.push(CandidateFlag::LengthMismatch);
        }
        CandidateView { text: c.text, score: c.score, letters, flags }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestoreResult {
    pub query: GapQuery,
    pub candidates: Vec<CandidateView>,
    pub produced_by: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelScore {
    pub label: String,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceResult {
    pub text: String,
    pub labels: Vec<LabelScore>,
    pub produced_by: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DateResult {
    pub text: String,
    pub year: i32,
    /// Per-bin probabilities; empty for remote models.
    pub distribution: Vec<BinProbability>,
    pub produced_by: String,
}

/// A one-off example for a remote model.
pub fn query_example(task: Task, kind: CorpusKind, user: String, letters: Option<usize>) -> ChatExample {
    ChatExample {
        system: system_prompt(task, kind),
        user,
        assistant: String::new(),
        id: format!("query/{task}"),
        meta: ExampleMeta {
            corpus_kind: kind,
            task,
            gold_letter_count: letters,
            source_version: None,
            date: None,
            split_tag: "query".into(),
            train_on_assistant_only: true,
        },
    }
}

pub fn restore(backend: &Backend, query: &GapQuery, kind: CorpusKind, opts: RestoreOptions) -> Result<RestoreResult> {
    let candidates = match backend {
        Backend::Baseline(b) => baseline::restore(&b.model.restore, &query.left, &query.right, query.letters, opts)?,
        Backend::Remote(c) => {
            let ex = query_example(Task::Restore, kind, query.prompt(), Some(query.letters));
            let mut list = c.request_candidates(&ex)?.list.candidates;
            list.truncate(opts.top_n);
            list
        }
    };
    Ok(RestoreResult {
        query: query.clone(),
        candidates: candidates.into_iter().map(|c| CandidateView::new(c, query.letters)).collect(),
        produced_by: backend.id(),
    })
}

pub fn attribute_place(backend: &Backend, text: &str, kind: CorpusKind, top: usize) -> Result<PlaceResult> {
    let text = normalize_greek(text);
    let labels = match backend {
        Backend::Baseline(b) => baseline::classify_place(b.model.place_model()?, &text)?
            .into_iter()
            .map(|(label, s)| LabelScore { label, score: Some(s) })
            .collect(),
        Backend::Remote(c) => {
            check_letters(&text)?;
            let ex = query_example(Task::Place, kind, text.clone(), None);
            c.request_candidates(&ex)?
                .list
                .candidates
                .into_iter()
                .map(|c| LabelScore { label: c.text, score: c.score })
                .collect()
        }
    };
    let mut labels: Vec<LabelScore> = labels;
    labels.truncate(top);
    Ok(PlaceResult { text, labels, produced_by: backend.id() })
}

pub fn attribute_date(backend: &Backend, text: &str, kind: CorpusKind) -> Result<DateResult> {
    let text = normalize_greek(text);
    let (year, distribution) = match backend {
        Backend::Baseline(b) => {
            let est = baseline::estimate_date(b.model.date_model()?, &text)?;
            (est.year, est.distribution)
        }
        Backend::Remote(c) => {
            check_letters(&text)?;
            let ex = query_example(Task::Date, kind, text.clone(), None);
            let out = c.request_candidates(&ex)?;
            let year = out
                .list
                .texts()
                .find_map(parse_year)
                .ok_or_else(|| lacuna::Error::Protocol("endpoint returned no usable year".into()))?;
            (year, Vec::new())
        }
    };
    Ok(DateResult { text, year, distribution, produced_by: backend.id() })
}

fn check_letters(text: &str) -> Result<()> {
    if letter_count(text) == 0 {
        return Err(lacuna::Error::InvalidArgument("text has no letters to classify".into()));
    }
    Ok(())
}
