//! Provenance records attached to everything the CLI writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use lacuna::inference::strip_userinfo;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{runtime, CliResult};

pub const TOOL: &str = "lacuna";
pub const SIDECAR_SUFFIX: &str = ".provenance.json";

/// Enough to re-run the producing command: the argument vector as given,
/// the effective seed and the fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: Value,
}

impl Provenance {
    /// `argv` excludes the program name. URLs lose any userinfo.
    pub fn new(command: &str, argv: &[String], seed: u64, config: Value) -> Self {
        let mut full = vec![TOOL.to_string()];
        full.extend(argv.iter().map(|a| sanitize(a)));
        Provenance {
            tool: TOOL.into(),
            version: lacuna::VERSION.into(),
            command: command.into(),
            argv: full,
            seed,
            config: scrub_value(config),
        }
    }

    /// The command line, shell-quoted where needed.
    pub fn command_line(&self) -> String {
        self.argv
            .iter()
            .map(|a| {
                if !a.is_empty() && a.chars().all(|c| c.is_ascii_alphanumeric() || "-_./=:,@".contains(c)) {
                    a.clone()
                } else {
                    format!("'{}'", a.replace('\'', r"'\''"))
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn sanitize(s: &str) -> String {
    if s.contains("://") {
        strip_userinfo(s)
    } else {
        s.to_string()
    }
}

fn scrub_value(v: Value) -> Value {
    match v {
        Value::String(s) => Value::String(sanitize(&s)),
        Value::Array(a) => Value::Array(a.into_iter().map(scrub_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, scrub_value(v))).collect()),
        v => v,
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(SIDECAR_SUFFIX);
    PathBuf::from(s)
}

pub fn to_pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Writes `<path>.provenance.json` next to a JSONL or CSV artifact.
pub fn write_sidecar(path: &Path, prov: &Provenance) -> CliResult<()> {
    write_file(&sidecar_path(path), &to_pretty(prov))
}

/// `value` (an object) with a top-level `provenance` member.
pub fn embed(value: impl Serialize, prov: &Provenance) -> Value {
    let mut v = serde_json::to_value(value).expect("json serializes");
    if let Value::Object(map) = &mut v {
        map.insert("provenance".into(), serde_json::to_value(prov).expect("json serializes"));
    }
    v
}

/// Pretty JSON to `path`, or to stdout when no path is given.
pub fn emit_json(path: Option<&Path>, value: &Value) -> CliResult<()> {
    let text = to_pretty(value);
    match path {
        Some(p) => write_file(p, &text),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| runtime(format!("stdout: {e}"))),
    }
}
