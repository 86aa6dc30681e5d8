//! One function per subcommand.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use lacuna::baseline::{self, BaselineModel, RestoreOptions};
use lacuna::corpus::{self, CorpusKind, PlaceTable, TextVersion};
use lacuna::dataset::{self, ChatExample, ExampleOptions, SplitManifest, SplitPlan, SplitScheme, Task, VersionChoice};
use lacuna::inference::{self, Client, EndpointConfig, Secret};
use lacuna::masking::{LetterRange, NoiseLevel};
use lacuna::metrics::{self, Candidate, CandidateList};
use lacuna::{jsonl, merge};
use serde_json::{json, Value};

use crate::args::*;
use crate::engine::{self, Backend, LoadedBaseline};
use crate::error::{invalid, runtime, CliError, CliResult};
use crate::input::{FieldError, GapQuery};
use crate::provenance::{embed, emit_json, write_file, write_sidecar, Provenance};
use crate::service;

/// Validated run context shared by all subcommands.
pub struct Ctx {
    pub seed: u64,
    pub prov: Provenance,
}

/// Runs a parsed command line. `argv` excludes the program name.
pub fn run(cli: Cli, argv: &[String]) -> CliResult<()> {
    let mut config = serde_json::to_value(&cli.command).expect("flags serialize");
    if let Value::Object(m) = &mut config {
        if let Some(inner) = m.remove(cli.command.name()) {
            config = inner;
        }
    }
    let ctx = Ctx { seed: cli.seed, prov: Provenance::new(cli.command.name(), argv, cli.seed, config) };
    match &cli.command {
        Command::Ingest(a) => ingest(a, &ctx),
        Command::BuildDataset(a) => build_dataset(a, &ctx),
        Command::Split(a) => split(a, &ctx),
        Command::TrainBaseline(a) => train_baseline(a, &ctx),
        Command::Restore(a) => restore(a, &ctx),
        Command::Attribute(a) => attribute(a, &ctx),
        Command::Date(a) => date(a, &ctx),
        Command::Evaluate(a) => evaluate(a, &ctx),
        Command::MergeDemo(a) => merge_demo(a, &ctx),
        Command::Serve(a) => serve(a, &ctx),
    }
}

fn need_file(path: &Path, flag: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{flag}: {} is not a readable file", path.display())))
    }
}

fn field_error(e: FieldError) -> CliError {
    invalid(format!("--{}: {}", e.field, e.message))
}

/// `records.jsonl` -> `records.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn write_jsonl_artifact<T: serde::Serialize>(path: &Path, items: &[T], ctx: &Ctx) -> CliResult<()> {
    jsonl::write(path, items)?;
    write_sidecar(path, &ctx.prov)
}

fn ingest(a: &IngestArgs, ctx: &Ctx) -> CliResult<()> {
    need_file(&a.input, "--input")?;
    if let Some(p) = &a.places {
        need_file(p, "--places")?;
    }
    let places = match &a.places {
        Some(p) => PlaceTable::load(p)?,
        None => PlaceTable::identity(),
    };
    let out = corpus::ingest_file(&a.input, &places)?;
    write_jsonl_artifact(&a.output, &out.records, ctx)?;
    let errors = a.errors.clone().unwrap_or_else(|| sibling(&a.output, "errors.jsonl"));
    write_jsonl_artifact(&errors, &out.errors, ctx)?;
    eprintln!(
        "ingested {} records ({} errors, see {})",
        out.records.len(),
        out.errors.len(),
        errors.display()
    );
    Ok(())
}

fn read_manifest(path: &Path) -> CliResult<SplitManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| runtime(format!("{}: not a split manifest: {e}", path.display())))
}

fn manifest_part(m: &SplitManifest, part: PartArg) -> HashSet<String> {
    let ids = match part {
        PartArg::Train => Some(&m.train),
        PartArg::Val => m.val.as_ref(),
        PartArg::Test => Some(&m.test),
    };
    ids.into_iter().flatten().cloned().collect()
}

fn task_of(t: TaskArg) -> Task {
    match t {
        TaskArg::Restore => Task::Restore,
        TaskArg::Place => Task::Place,
        TaskArg::Date => Task::Date,
    }
}

fn kind_of(k: KindArg) -> CorpusKind {
    match k {
        KindArg::Inscription => CorpusKind::Inscription,
        KindArg::Papyrus => CorpusKind::Papyrus,
    }
}

fn build_dataset(a: &BuildDatasetArgs, ctx: &Ctx) -> CliResult<()> {
    need_file(&a.records, "--records")?;
    if let Some(m) = &a.manifest {
        need_file(m, "--manifest")?;
    }
    let letters = LetterRange::new(a.letters_min, a.letters_max)?;
    let noise = a.noise.map(NoiseLevel::try_from).transpose()?;
    let truncate = match (a.truncate_min, a.truncate_max) {
        (Some(lo), Some(hi)) if lo == 0 || lo > hi => {
            return Err(invalid(format!("--truncate-min {lo} / --truncate-max {hi}: need 1 <= min <= max")))
        }
        (Some(lo), Some(hi)) => Some((lo, hi)),
        _ => None,
    };
    let task = task_of(a.task);
    if a.eval_per_length.is_some() && task != Task::Restore {
        return Err(invalid("--eval-per-length only applies to --task restore"));
    }
    if a.eval_per_length == Some(0) {
        return Err(invalid("--eval-per-length must be at least 1"));
    }

    let mut records = corpus::read_records(&a.records)?;
    if let (Some(m), Some(part)) = (&a.manifest, a.part) {
        let keep = manifest_part(&read_manifest(m)?, part);
        records.retain(|r| keep.contains(&r.id));
    }
    let versions = match a.versions {
        VersionArg::Edited => VersionChoice::Edited,
        VersionArg::Diplomatic => VersionChoice::Diplomatic,
        VersionArg::Both => VersionChoice::Both,
    };
    let (mut examples, report) = match a.eval_per_length {
        Some(per_length) => {
            let mut out = Vec::new();
            let which: &[TextVersion] = match versions {
                VersionChoice::Edited => &[TextVersion::Edited],
                VersionChoice::Diplomatic => &[TextVersion::Diplomatic],
                VersionChoice::Both => &[TextVersion::Edited, TextVersion::Diplomatic],
            };
            for &v in which {
                out.extend(dataset::build_restoration_eval_set(
                    &records,
                    v,
                    letters.min()..=letters.max(),
                    per_length,
                    a.min_chars,
                    ctx.seed,
                )?);
            }
            (out, Vec::new())
        }
        None => {
            let opts = ExampleOptions { versions, letters, noise, shuffle: a.shuffle, truncate, split_tag: a.split_tag.clone() };
            dataset::build_dataset(&records, task, &opts, ctx.seed)
        }
    };
    if a.filter_tokens {
        let counter = dataset::CharProxyCounter::default();
        examples.retain(|ex| dataset::length_filter(ex, &counter, dataset::MIN_TOKENS, dataset::MAX_TOKENS));
    }
    write_jsonl_artifact(&a.output, &examples, ctx)?;
    let report_path = sibling(&a.output, "report.jsonl");
    write_jsonl_artifact(&report_path, &report, ctx)?;
    eprintln!(
        "{} examples from {} records ({} skipped, see {})",
        examples.len(),
        records.len(),
        report.len(),
        report_path.display()
    );
    Ok(())
}

fn read_ids(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn split(a: &SplitArgs, ctx: &Ctx) -> CliResult<()> {
    let ids = match (&a.ids, &a.records) {
        (Some(p), _) => {
            need_file(p, "--ids")?;
            read_ids(p)?
        }
        (None, Some(p)) => {
            need_file(p, "--records")?;
            corpus::read_records(p)?.into_iter().map(|r| r.id).collect()
        }
        (None, None) => return Err(invalid("one of --ids or --records is required")),
    };
    let scheme = match a.scheme {
        SchemeArg::PhiShared => SplitScheme::PhiShared,
        SchemeArg::Train95Test5 => SplitScheme::Train95Test5,
        SchemeArg::Train80Val10Test10 => SplitScheme::Train80Val10Test10,
    };
    let manifest = dataset::make_splits(&ids, SplitPlan { scheme, seed: ctx.seed })?;
    emit_json(a.output.as_deref(), &embed(&manifest, &ctx.prov))
}

fn train_baseline(a: &TrainArgs, ctx: &Ctx) -> CliResult<()> {
    need_file(&a.records, "--records")?;
    if let Some(m) = &a.manifest {
        need_file(m, "--manifest")?;
    }
    if a.order == 0 {
        return Err(invalid("--order must be at least 1"));
    }
    let mut records = corpus::read_records(&a.records)?;
    if let Some(m) = &a.manifest {
        let keep = manifest_part(&read_manifest(m)?, PartArg::Train);
        records.retain(|r| keep.contains(&r.id));
    }
    let model = BaselineModel::train(&records, a.order)?;
    let loaded = LoadedBaseline::new(model);
    let mut body = serde_json::to_string(&embed(&loaded.model, &ctx.prov)).expect("model serializes");
    body.push('\n');
    write_file(&a.output, &body)?;
    eprintln!("trained {} on {} records -> {}", loaded.id, records.len(), a.output.display());
    Ok(())
}

fn endpoint_config(remote: &EndpointArgs, model_name: &str) -> CliResult<EndpointConfig> {
    let url = remote.endpoint.as_deref().ok_or_else(|| invalid("--endpoint is required"))?;
    let mut cfg = EndpointConfig::new(url, model_name);
    cfg.auth_token = Secret::from_env();
    cfg.n_best = remote.n_best;
    cfg.max_parallel = remote.max_parallel;
    cfg.timeout = Duration::from_secs(remote.timeout_secs);
    for kv in &remote.decode {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| invalid(format!("--decode `{kv}`: expected KEY=VALUE")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        cfg.decode_options.insert(k.trim().to_string(), value);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A loaded model: baseline file, or a client when `--endpoint` is given.
enum Loaded {
    Baseline(LoadedBaseline),
    Remote(Client),
}

impl Loaded {
    fn open(model: &str, remote: &EndpointArgs) -> CliResult<Self> {
        if remote.endpoint.is_some() {
            return Ok(Loaded::Remote(Client::new(endpoint_config(remote, model)?)?));
        }
        let path = Path::new(model);
        need_file(path, "--model")?;
        Ok(Loaded::Baseline(LoadedBaseline::load(path)?))
    }

    fn backend(&self) -> Backend<'_> {
        match self {
            Loaded::Baseline(b) => Backend::Baseline(b),
            Loaded::Remote(c) => Backend::Remote(c),
        }
    }
}

fn read_task_examples(path: &Path, task: Task) -> CliResult<Vec<ChatExample>> {
    need_file(path, "--examples")?;
    let all = dataset::read_jsonl(path)?;
    let n = all.len();
    let out: Vec<ChatExample> = all.into_iter().filter(|e| e.task() == task).collect();
    if out.len() < n {
        log::warn!("{}: skipped {} examples of other tasks", path.display(), n - out.len());
    }
    Ok(out)
}

/// Writes a candidate cache, plus a failure report when some samples could
/// not be answered; those make the command fail after the cache is safe.
fn finish_batch(output: &Path, lists: Vec<CandidateList>, failures: Vec<lacuna::report::ReportEntry>, ctx: &Ctx) -> CliResult<()> {
    inference::write_cache(output, &lists)?;
    write_sidecar(output, &ctx.prov)?;
    eprintln!("wrote {} candidate lists to {}", lists.len(), output.display());
    if failures.is_empty() {
        return Ok(());
    }
    let report = sibling(output, "errors.jsonl");
    write_jsonl_artifact(&report, &failures, ctx)?;
    Err(runtime(format!("{} samples failed; see {}", failures.len(), report.display())))
}

fn remote_batch(client: &Client, examples: &[ChatExample]) -> (Vec<CandidateList>, Vec<lacuna::report::ReportEntry>) {
    let mut lists = Vec::new();
    let mut failures = Vec::new();
    for (ex, res) in examples.iter().zip(client.request_batch(examples)) {
        match res {
            Ok(out) => lists.push(out.list),
            Err(e) => failures.push(lacuna::report::ReportEntry::from_error(&ex.id, "request", &e)),
        }
    }
    (lists, failures)
}

fn restore(a: &RestoreArgs, ctx: &Ctx) -> CliResult<()> {
    if a.top_n == 0 || a.beam_width == 0 {
        return Err(invalid("--top-n and --beam-width must be at least 1"));
    }
    let opts = RestoreOptions { beam_width: a.beam_width, top_n: a.top_n };
    let query = match (&a.text, a.start, a.letters) {
        (Some(t), Some(start), Some(letters)) => Some(GapQuery::from_span(t, start, letters).map_err(field_error)?),
        (Some(t), _, _) => Some(GapQuery::from_placeholder(t).map_err(field_error)?),
        (None, _, _) if a.examples.is_none() => return Err(invalid("one of --text or --examples is required")),
        (None, _, _) => None,
    };
    let loaded = Loaded::open(&a.model, &a.remote)?;
    if let Some(q) = query {
        let res = engine::restore(&loaded.backend(), &q, kind_of(a.kind), opts)?;
        return emit_json(a.output.as_deref(), &embed(&res, &ctx.prov));
    }
    let examples = read_task_examples(a.examples.as_deref().expect("checked above"), Task::Restore)?;
    let output = a.output.as_deref().expect("clap requires --output");
    let (lists, failures) = match &loaded {
        Loaded::Baseline(b) => (baseline::restore_batch(&b.model.restore, &examples, opts), Vec::new()),
        Loaded::Remote(c) => remote_batch(c, &examples),
    };
    finish_batch(output, lists, failures, ctx)
}

fn classify_batch(
    loaded: &Loaded,
    examples: &[ChatExample],
    f: impl Fn(&LoadedBaseline, &ChatExample) -> lacuna::Result<Vec<Candidate>> + Sync,
) -> (Vec<CandidateList>, Vec<lacuna::report::ReportEntry>) {
    match loaded {
        Loaded::Remote(c) => remote_batch(c, examples),
        Loaded::Baseline(b) => {
            let results = lacuna::par::map(examples, |ex| f(b, ex));
            let mut lists = Vec::new();
            let mut failures = Vec::new();
            for (ex, r) in examples.iter().zip(results) {
                match r {
                    Ok(c) => lists.push(CandidateList::new(&ex.id, &b.id, c)),
                    Err(e) => failures.push(lacuna::report::ReportEntry::from_error(&ex.id, "classify", &e)),
                }
            }
            (lists, failures)
        }
    }
}

fn attribute(a: &AttributeArgs, ctx: &Ctx) -> CliResult<()> {
    if a.top == 0 {
        return Err(invalid("--top must be at least 1"));
    }
    let loaded = Loaded::open(&a.model, &a.remote)?;
    if let Some(text) = &a.text {
        let res = engine::attribute_place(&loaded.backend(), text, kind_of(a.kind), a.top)?;
        return emit_json(a.output.as_deref(), &embed(&res, &ctx.prov));
    }
    let examples = read_task_examples(a.examples.as_deref().expect("clap requires one"), Task::Place)?;
    if let Loaded::Baseline(b) = &loaded {
        b.model.place_model()?;
    }
    let (lists, failures) = classify_batch(&loaded, &examples, |b, ex| {
        let scores = baseline::classify_place(b.model.place_model()?, &ex.user)?;
        Ok(scores.into_iter().take(a.top).map(|(l, s)| Candidate::new(l, Some(s))).collect())
    });
    finish_batch(a.output.as_deref().expect("clap requires --output"), lists, failures, ctx)
}

fn date(a: &DateArgs, ctx: &Ctx) -> CliResult<()> {
    let loaded = Loaded::open(&a.model, &a.remote)?;
    if let Some(text) = &a.text {
        let res = engine::attribute_date(&loaded.backend(), text, kind_of(a.kind))?;
        return emit_json(a.output.as_deref(), &embed(&res, &ctx.prov));
    }
    let examples = read_task_examples(a.examples.as_deref().expect("clap requires one"), Task::Date)?;
    if let Loaded::Baseline(b) = &loaded {
        b.model.date_model()?;
    }
    let (lists, failures) = classify_batch(&loaded, &examples, |b, ex| {
        let est = baseline::estimate_date(b.model.date_model()?, &ex.user)?;
        Ok(vec![Candidate::new(est.year.to_string(), None)])
    });
    finish_batch(a.output.as_deref().expect("clap requires --output"), lists, failures, ctx)
}

fn evaluate(a: &EvaluateArgs, ctx: &Ctx) -> CliResult<()> {
    need_file(&a.gold, "--gold")?;
    for c in &a.candidates {
        need_file(c, "--candidates")?;
    }
    let gold = dataset::read_jsonl(&a.gold)?;
    let mut candidates: HashMap<String, CandidateList> = HashMap::new();
    for path in &a.candidates {
        for (id, list) in inference::read_cache(path)? {
            if candidates.insert(id.clone(), list).is_some() {
                return Err(runtime(format!("{}: sample `{id}` already given by an earlier cache", path.display())));
            }
        }
    }
    let partial = metrics::evaluate_examples(&gold, &candidates);
    let rows = partial.rows();
    let report = metrics::aggregate([partial]);
    if let Some(p) = &a.samples {
        metrics::write_samples_csv(p, &rows)?;
        write_sidecar(p, &ctx.prov)?;
    }
    emit_json(a.output.as_deref(), &embed(&report, &ctx.prov))
}

fn merge_demo(a: &MergeArgs, ctx: &Ctx) -> CliResult<()> {
    need_file(&a.base, "--base")?;
    for t in &a.tuned {
        need_file(t, "--tuned")?;
    }
    if !(a.density > 0.0 && a.density <= 1.0) {
        return Err(invalid(format!("--density {} not in (0, 1]", a.density)));
    }
    let base = merge::read_vector(&a.base)?;
    let tuned = a.tuned.iter().map(|p| merge::read_vector(p)).collect::<lacuna::Result<Vec<_>>>()?;
    let out = merge::ties_merge(&base, &tuned, a.density, a.lambda)?;
    merge::write_vector(&a.output, &out.merged)?;
    write_sidecar(&a.output, &ctx.prov)?;
    emit_json(
        None,
        &json!({
            "entries": out.merged.len(),
            "kept_per_vector": merge::kept_count(a.density, base.len()),
            "zero_sum_coordinates": out.zero_sum_coordinates,
        }),
    )
}

fn serve(a: &ServeArgs, ctx: &Ctx) -> CliResult<()> {
    let addr: std::net::SocketAddr = a
        .bind
        .parse()
        .map_err(|e| invalid(format!("--bind `{}`: {e}", a.bind)))?;
    if a.model.is_none() && a.remote.endpoint.is_none() {
        return Err(invalid("serve needs --model, --endpoint, or both"));
    }
    if a.beam_width == 0 || a.workers == Some(0) {
        return Err(invalid("--beam-width and --workers must be at least 1"));
    }
    let baseline = match &a.model {
        Some(p) => {
            need_file(p, "--model")?;
            Some(LoadedBaseline::load(p)?)
        }
        None => None,
    };
    let remote = match &a.remote.endpoint {
        Some(_) => {
            let name = a.endpoint_model.as_deref().ok_or_else(|| invalid("--endpoint needs --endpoint-model"))?;
            Some(Client::new(endpoint_config(&a.remote, name)?)?)
        }
        None => None,
    };
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let state = service::AppState::new(service::ServiceConfig {
        baseline,
        remote,
        workers,
        seed: ctx.seed,
        beam_width: a.beam_width,
        bearer: Secret::from_env_var(service::SERVE_TOKEN_ENV),
    });
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| runtime(format!("cannot start runtime: {e}")))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| runtime(format!("cannot bind {addr}: {e}")))?;
        eprintln!("serving /v1 on http://{addr} ({workers} workers)");
        axum::serve(listener, service::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| runtime(format!("server error: {e}")))
    })
}
