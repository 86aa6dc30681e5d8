//! Client for remote chat-completion endpoints and the candidate cache.
//!
//! Requests carry the system and user turns of a [`ChatExample`] plus any
//! pass-through decoding options. Scores in responses are whatever the
//! endpoint reports; without them the response order is the ranking.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::normalize_greek;
use crate::dataset::{ChatExample, Message, Role, Task};
use crate::metrics::{eval_normalize, parse_year, Candidate, CandidateFlag, CandidateList, TOP_K_RESTORE};
use crate::text::letter_count;
use crate::{jsonl, par, Error, Result};

pub const TOKEN_ENV: &str = "LACUNA_AUTH_TOKEN";
/// Retries after the first attempt.
pub const MAX_RETRIES: u32 = 3;
const RESERVED_KEYS: [&str; 3] = ["model", "messages", "n"];

/// A credential that never prints.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Secret(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn from_env() -> Option<Self> {
        Self::from_env_var(TOKEN_ENV)
    }

    pub fn from_env_var(name: &str) -> Option<Self> {
        std::env::var(name).ok().filter(|s| !s.is_empty()).map(Secret)
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

#[derive(Clone)]
pub struct EndpointConfig {
    /// Everything before `/chat/completions`.
    pub base_url: String,
    pub model_name: String,
    pub auth_token: Option<Secret>,
    pub timeout: Duration,
    pub max_parallel: usize,
    pub n_best: usize,
    pub decode_options: BTreeMap<String, Value>,
    /// First retry delay; doubled on every further retry.
    pub retry_backoff: Duration,
}

/// `url` with any `user:password@` part removed.
pub fn strip_userinfo(url: &str) -> String {
    match url.split_once("://") {
        Some((scheme, rest)) => {
            let end = rest.find('/').unwrap_or(rest.len());
            let host = rest[..end].rsplit_once('@').map_or(&rest[..end], |(_, h)| h);
            format!("{scheme}://{host}{}", &rest[end..])
        }
        None => url.to_string(),
    }
}

impl fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &strip_userinfo(&self.base_url))
            .field("model_name", &self.model_name)
            .field("auth_token", &self.auth_token)
            .field("timeout", &self.timeout)
            .field("max_parallel", &self.max_parallel)
            .field("n_best", &self.n_best)
            .field("decode_options", &self.decode_options)
            .field("retry_backoff", &self.retry_backoff)
            .finish()
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            auth_token: None,
            timeout: Duration::from_secs(60),
            max_parallel: 4,
            n_best: 60,
            decode_options: BTreeMap::new(),
            retry_backoff: Duration::from_millis(250),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_parallel == 0 {
            return Err(Error::InvalidArgument("max_parallel must be at least 1".into()));
        }
        if self.n_best == 0 {
            return Err(Error::InvalidArgument("n_best must be at least 1".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(Error::InvalidArgument(format!("endpoint `{}` is not an http(s) URL", self.base_url)));
        }
        if let Some(k) = self.decode_options.keys().find(|k| RESERVED_KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!("decode option `{k}` would override the request")));
        }
        Ok(())
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// JSON body for one example; object keys come out sorted.
pub fn request_body(cfg: &EndpointConfig, example: &ChatExample) -> Value {
    let messages = [
        Message { role: Role::System, content: example.system.clone() },
        Message { role: Role::User, content: example.user.clone() },
    ];
    let mut body = json!({
        "model": cfg.model_name,
        "messages": messages,
        "n": cfg.n_best,
    });
    let obj = body.as_object_mut().expect("object literal");
    for (k, v) in &cfg.decode_options {
        obj.insert(k.clone(), v.clone());
    }
    body
}

/// Cleans one raw completion for `task`. Restore outputs whose letter count
/// differs from `expected_letters` are kept with a flag; dates that are not
/// integer years are rejected with a reason.
pub fn parse_assistant(raw: &str, task: Task, expected_letters: Option<usize>) -> std::result::Result<Candidate, String> {
    let trimmed = raw.trim();
    match task {
        Task::Restore => {
            let mut c = Candidate::new(normalize_greek(trimmed), None);
            if expected_letters.is_some_and(|n| n != letter_count(&c.text)) {
                c.flags.push(CandidateFlag::LengthMismatch);
            }
            Ok(c)
        }
        Task::Date => parse_year(trimmed)
            .map(|y| Candidate::new(y.to_string(), None))
            .ok_or_else(|| format!("`{trimmed}` is not a year")),
        Task::Place => Ok(Candidate::new(trimmed.to_lowercase(), None)),
    }
}

/// Candidates for one sample plus the completions that failed to parse.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestOutcome {
    pub list: CandidateList,
    pub dropped: Vec<String>,
}

impl RequestOutcome {
    pub fn is_empty(&self) -> bool {
        self.list.candidates.is_empty()
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    score: Option<f64>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Turns a response body into a ranked, deduplicated candidate list.
pub fn parse_response(body: &str, example: &ChatExample, produced_by: &str) -> Result<RequestOutcome> {
    let parsed: Completion =
        serde_json::from_str(body).map_err(|e| Error::Protocol(format!("malformed completion response: {e}")))?;
    let task = example.task();
    let mut candidates = Vec::new();
    let mut dropped = Vec::new();
    for choice in parsed.choices {
        let raw = choice.message.content.unwrap_or_default();
        match parse_assistant(&raw, task, example.meta.gold_letter_count) {
            Ok(mut c) => {
                c.score = choice.score;
                candidates.push(c);
            }
            Err(reason) => dropped.push(reason),
        }
    }
    let mut list = CandidateList::new(&example.id, produced_by, candidates);
    list.sort_by_score();
    match task {
        Task::Restore => list.dedup_by_key(TOP_K_RESTORE, eval_normalize),
        _ => list.dedup_by_key(TOP_K_RESTORE, str::to_string),
    }
    Ok(RequestOutcome { list, dropped })
}

pub struct Client {
    cfg: EndpointConfig,
    agent: ureq::Agent,
}

impl fmt::Debug for Client {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Client").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

enum Attempt {
    Done(String),
    Retry(Error),
    Fail(Error),
}

impl Client {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(Client { cfg, agent })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn scrub(&self, msg: String) -> String {
        match &self.cfg.auth_token {
            Some(t) if !t.expose().is_empty() => msg.replace(t.expose(), "<redacted>"),
            _ => msg,
        }
    }

    /// The request URL without any userinfo, for messages.
    fn display_url(&self) -> String {
        self.scrub(strip_userinfo(&self.cfg.url()))
    }

    fn attempt(&self, url: &str, body: &[u8]) -> Attempt {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(t) = &self.cfg.auth_token {
            req = req.header("Authorization", format!("Bearer {}", t.expose()));
        }
        match req.send(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                if (200..300).contains(&status) {
                    match resp.body_mut().read_to_string() {
                        Ok(s) => Attempt::Done(s),
                        Err(e) => Attempt::Retry(Error::Transport(self.scrub(e.to_string()))),
                    }
                } else if status == 429 || status >= 500 {
                    Attempt::Retry(Error::Endpoint { status })
                } else {
                    Attempt::Fail(Error::Endpoint { status })
                }
            }
            Err(e) => Attempt::Retry(Error::Transport(self.scrub(e.to_string()))),
        }
    }

    /// POSTs `body`, retrying transport failures, 429 and 5xx.
    pub fn post(&self, body: &Value) -> Result<String> {
        let url = self.cfg.url();
        let bytes = serde_json::to_vec(body).expect("json value serializes");
        let mut delay = self.cfg.retry_backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(&url, &bytes) {
                Attempt::Done(s) => return Ok(s),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt >= MAX_RETRIES => return Err(e),
                Attempt::Retry(e) => {
                    log::warn!("request to {} failed ({e}); retrying in {delay:?}", self.display_url());
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }

    pub fn produced_by(&self) -> String {
        format!("endpoint:{}", self.cfg.model_name)
    }

    pub fn request_candidates(&self, example: &ChatExample) -> Result<RequestOutcome> {
        let body = self.post(&request_body(&self.cfg, example))?;
        let out = parse_response(&body, example, &self.produced_by()).map_err(|e| match e {
            Error::Protocol(m) => Error::Protocol(self.scrub(m)),
            e => e,
        })?;
        if out.is_empty() {
            log::warn!("{}: endpoint returned no usable candidates", example.id);
        }
        Ok(out)
    }

    /// Runs up to `max_parallel` requests at a time; results follow input
    /// order.
    pub fn request_batch(&self, examples: &[ChatExample]) -> Vec<Result<RequestOutcome>> {
        par::map_bounded(examples, self.cfg.max_parallel, |ex| self.request_candidates(ex))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CachedCandidate {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// One line of the candidate cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheEntry {
    pub sample_id: String,
    pub candidates: Vec<CachedCandidate>,
}

impl From<&CandidateList> for CacheEntry {
    fn from(l: &CandidateList) -> Self {
        CacheEntry {
            sample_id: l.sample_id.clone(),
            candidates: l
                .candidates
                .iter()
                .map(|c| CachedCandidate { text: c.text.clone(), score: c.score })
                .collect(),
        }
    }
}

impl CacheEntry {
    pub fn into_list(self) -> CandidateList {
        let candidates = self.candidates.into_iter().map(|c| Candidate::new(c.text, c.score)).collect();
        CandidateList::new(self.sample_id, "cache", candidates)
    }
}

/// Writes the cache through a temporary sibling file and a rename, so an
/// interrupted run never leaves a truncated cache behind.
pub fn write_cache(path: &Path, lists: &[CandidateList]) -> Result<()> {
    let entries: Vec<CacheEntry> = lists.iter().map(CacheEntry::from).collect();
    let body = jsonl::to_string(&entries)?;
    let tmp = path.with_extension("jsonl.partial");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(body.as_bytes()).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<HashMap<String, CandidateList>> {
    let entries: Vec<CacheEntry> = jsonl::read(path)?;
    let mut out = HashMap::with_capacity(entries.len());
    for e in entries {
        let id = e.sample_id.clone();
        if out.insert(id.clone(), e.into_list()).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }
    Ok(out)
}
