//! Acceptance checks. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use lacuna::baseline::{restore, restore_batch, BaselineModel, CharLM, RestoreOptions};
use lacuna::corpus::{self, resolve_date, CorpusKind, DateInterval, PlaceTable, TextRecord, TextVersion};
use lacuna::dataset::{self, make_splits, ExampleOptions, SplitPlan, SplitScheme, Task};
use lacuna::inference::{Client, EndpointConfig, Secret};
use lacuna::masking::{self, find_intact_spans, LetterRange};
use lacuna::merge::{ties_merge, ParamVector};
use lacuna::metrics::{self, cer, date_deviation, eval_normalize};
use lacuna::text::{find_placeholder, is_letter, letter_count, BOS};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

// Tolerances and budgets.
const CER_ORACLE_MAX_LEN: usize = 6;
const CER_ORACLE_BUDGET: Duration = Duration::from_secs(60);
const MASK_DRAWS: usize = 100_000;
const MASK_FREQ_TOL: f64 = 0.01;
const MASK_BUDGET: Duration = Duration::from_secs(60);
const DATE_RANDOM_CASES: usize = 1_000;
const SPLIT_IDS: usize = 10_000;
const BEAM_CASES: usize = 200;
const TIES_PASS_THROUGH_TOL: f64 = 1e-12;
const SMOKE_BUDGET: Duration = Duration::from_secs(300);
const SANITY_TEXTS: usize = 500;
const SANITY_SAMPLES: usize = 1_000;
const SANITY_FACTOR: f64 = 5.0;

const WORKED_EXAMPLE: &str = "και ο λογος ην προς τον θεον";

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, fail: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(fail.into())
    }
}

/// Full-table edit distance, written independently of the library's
/// two-row version.
fn oracle_distance(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let strings = all_strings(&['α', 'β', 'γ'], CER_ORACLE_MAX_LEN);
    let chars: Vec<Vec<char>> = strings.iter().map(|s| s.chars().collect()).collect();
    let mut pairs = 0usize;
    for (p, pc) in strings.iter().zip(&chars) {
        for (g, gc) in strings.iter().zip(&chars) {
            let want = if gc.is_empty() {
                pc.len() as f64
            } else {
                oracle_distance(pc, gc) as f64 / gc.len() as f64
            };
            let got = cer(p, g);
            if got != want {
                return Err(format!("cer({p:?}, {g:?}) = {got}, oracle {want}"));
            }
            pairs += 1;
        }
    }
    let t = start.elapsed();
    check(
        t < CER_ORACLE_BUDGET,
        format!("{pairs} pairs identical to the oracle in {t:.1?}"),
        format!("took {t:.1?}"),
    )
}

fn worked_example() -> Outcome {
    let sample = masking::mask_letters("fixture", WORKED_EXAMPLE, TextVersion::Edited, 7, 6).map_err(|e| e.to_string())?;
    if sample.gold != "ος ην πρ" || sample.prompt_text != "και ο λογ[6 letters missing]ος τον θεον" {
        return Err(format!("masked to {:?} / {:?}", sample.prompt_text, sample.gold));
    }
    let places = PlaceTable::identity();
    let ingested = corpus::ingest_file(&fixture("worked_example.tsv"), &places).map_err(|e| e.to_string())?;
    let model = BaselineModel::train(&ingested.records, 6).map_err(|e| e.to_string())?;
    let ranked = lacuna::baseline::restore_placeholder(&model.restore, &sample.prompt_text, RestoreOptions::default())
        .map_err(|e| e.to_string())?;
    let top = &ranked.first().ok_or("no candidates")?.text;
    let c = cer(&eval_normalize(top), &eval_normalize(&sample.gold));
    check(
        top == "ος ην πρ" && c == 0.0,
        format!("gold {:?}, top-1 {top:?}, CER {c}", sample.gold),
        format!("top-1 {top:?}, CER {c}"),
    )
}

fn masking_distribution() -> Outcome {
    let start = Instant::now();
    // Spans of 10 and 20 letters separated by a counted loss.
    let text = "αβγδε ζηθικ --- λμνξο πρστυ φχψωα βγδεζ";
    let spans = find_intact_spans(text);
    let lens: Vec<usize> = spans.iter().map(|s| s.length_letters).collect();
    if lens != [10, 20] {
        return Err(format!("fixture spans {lens:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20240229);
    let mut hits = [0usize; 2];
    for _ in 0..MASK_DRAWS {
        let s = masking::sample_mask_text("two-span", text, TextVersion::Edited, LetterRange::default(), &mut rng)
            .ok_or("no sample drawn")?;
        let which = spans.iter().position(|sp| sp.start <= s.gap_start && s.gap_start < sp.end()).ok_or("gap outside spans")?;
        hits[which] += 1;
        if s.gold_letter_count > spans[which].length_letters / 2 {
            return Err(format!("gap of {} letters in a {}-letter span", s.gold_letter_count, lens[which]));
        }
        let ph = find_placeholder(&s.prompt_text).ok_or("no placeholder")?;
        if ph.letters != s.gold_letter_count || letter_count(&s.gold) != s.gold_letter_count {
            return Err(format!("placeholder {} vs gold {:?}", ph.letters, s.gold));
        }
    }
    let f = [hits[0] as f64 / MASK_DRAWS as f64, hits[1] as f64 / MASK_DRAWS as f64];
    let t = start.elapsed();
    check(
        (f[0] - 0.2).abs() <= MASK_FREQ_TOL && (f[1] - 0.8).abs() <= MASK_FREQ_TOL && t < MASK_BUDGET,
        format!("frequencies {:.4}/{:.4} over {MASK_DRAWS} draws in {t:.1?}", f[0], f[1]),
        format!("frequencies {:.4}/{:.4} in {t:.1?}", f[0], f[1]),
    )
}

/// Distance on a timeline listed year by year with no year 0.
fn timeline_deviation(y: i32, post: i32, ante: i32) -> i64 {
    let pos = |year: i32| -> i64 {
        let mut i = 0i64;
        let mut v = -3000;
        while v != year {
            v += 1;
            if v != 0 {
                i += 1;
            }
        }
        i
    };
    let (p, a, q) = (pos(post), pos(ante), pos(y));
    if p <= q && q <= a {
        0
    } else {
        (q - p).abs().min((q - a).abs())
    }
}

fn random_year(rng: &mut impl Rng) -> i32 {
    loop {
        let y = rng.gen_range(-1000..=1000);
        if y != 0 {
            return y;
        }
    }
}

fn date_rules() -> Outcome {
    let d = resolve_date(Some(292), None).map_err(|e| e.to_string())?.ok_or("no interval")?;
    if d.midpoint != 317 {
        return Err(format!("post-only 292 gave midpoint {}", d.midpoint));
    }
    let point = DateInterval { post: 292, ante: 292, midpoint: 292 };
    let dev = date_deviation(304, &point);
    if dev != 12 {
        return Err(format!("deviation(304, [292,292]) = {dev}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..DATE_RANDOM_CASES {
        let (a, b) = (random_year(&mut rng), random_year(&mut rng));
        let (post, ante) = (a.min(b), a.max(b));
        let y = random_year(&mut rng);
        let iv = resolve_date(Some(post), Some(ante)).map_err(|e| e.to_string())?.ok_or("no interval")?;
        let got = date_deviation(y, &iv);
        let want = timeline_deviation(y, post, ante);
        if got != want {
            return Err(format!("deviation({y}, [{post},{ante}]) = {got}, oracle {want}"));
        }
    }
    Ok(format!("midpoint 317, deviation 12, {DATE_RANDOM_CASES} random cases agree"))
}

fn split_fidelity() -> Outcome {
    let ids: Vec<String> = (0..SPLIT_IDS).map(|i| format!("{}", 100_000 + i * 7)).collect();
    let m = make_splits(&ids, SplitPlan { scheme: SplitScheme::PhiShared, seed: 0 }).map_err(|e| e.to_string())?;
    let want_test: Vec<&String> = ids.iter().filter(|i| i.ends_with('3')).collect();
    let want_train: Vec<&String> = ids.iter().filter(|i| !i.ends_with('3') && !i.ends_with('4')).collect();
    if m.test.iter().collect::<Vec<_>>() != want_test || m.train.iter().collect::<Vec<_>>() != want_train {
        return Err("phi_shared partition differs from the digit rule".into());
    }
    for scheme in [SplitScheme::Train95Test5, SplitScheme::Train80Val10Test10] {
        let plan = SplitPlan { scheme, seed: 77 };
        let a = make_splits(&ids, plan).map_err(|e| e.to_string())?.to_json();
        let b = make_splits(&ids, plan).map_err(|e| e.to_string())?.to_json();
        if a != b {
            return Err(format!("{scheme:?} manifests differ between runs"));
        }
    }
    Ok(format!(
        "{} test / {} train of {SPLIT_IDS}; proportional manifests byte-identical",
        m.test.len(),
        m.train.len()
    ))
}

/// Exhaustive fill search: every string of allowed symbols with `letters`
/// letters, no separator at either end or twice in a row.
fn exhaustive(lm: &CharLM, left: &str, right: &str, letters: usize) -> (usize, f64, String) {
    let symbols: Vec<char> = lm.vocab().iter().copied().filter(|&c| is_letter(c) || c == ' ' || c == '·').collect();
    let mut complete = Vec::new();
    let mut stack = vec![String::new()];
    while let Some(s) = stack.pop() {
        if letter_count(&s) == letters {
            complete.push(s);
            continue;
        }
        let last_letter = s.chars().last().is_some_and(is_letter);
        for &c in &symbols {
            if is_letter(c) || last_letter {
                let mut t = s.clone();
                t.push(c);
                stack.push(t);
            }
        }
    }
    let mut best: Option<(f64, String)> = None;
    for s in &complete {
        let mut ctx: Vec<char> = std::iter::repeat_n(BOS, lm.order() - 1).collect();
        ctx.extend(left.chars());
        let mut score = 0.0;
        for c in s.chars() {
            score += lm.log_prob(&ctx, c).unwrap();
            ctx.push(c);
        }
        for c in right.chars().take(lm.order() - 1) {
            if let Some(lp) = lm.log_prob(&ctx, c) {
                score += lp;
            }
            ctx.push(c);
        }
        let better = match &best {
            None => true,
            Some((b, t)) => score > *b || (score == *b && s < t),
        };
        if better {
            best = Some((score, s.clone()));
        }
    }
    let (score, text) = best.unwrap();
    (complete.len(), score, text)
}

fn beam_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let pool = ['α', 'β', 'γ', 'δ'];
    let mut agree = 0;
    for case in 0..BEAM_CASES {
        let n_symbols = rng.gen_range(2..=4);
        let with_space = n_symbols >= 3 && rng.gen_bool(0.5);
        let n_letters = if with_space { n_symbols - 1 } else { n_symbols };
        let mut symbols: Vec<char> = pool[..n_letters].to_vec();
        if with_space {
            symbols.push(' ');
        }
        let texts: Vec<String> = (0..rng.gen_range(1..5))
            .map(|_| {
                let mut s: String = (0..rng.gen_range(3..20)).map(|_| *symbols.choose(&mut rng).unwrap()).collect();
                s.insert(0, pool[0]);
                s
            })
            .collect();
        let order = rng.gen_range(2..=4);
        let lm = CharLM::train(&texts, order).map_err(|e| e.to_string())?;
        let word = |rng: &mut ChaCha8Rng| -> String { (0..rng.gen_range(0..5)).map(|_| pool[rng.gen_range(0..n_letters)]).collect() };
        let (left, right) = (word(&mut rng), word(&mut rng));
        let letters = rng.gen_range(1..=3);
        let (space, score, text) = exhaustive(&lm, &left, &right, letters);
        let got = restore(&lm, &left, &right, letters, RestoreOptions { beam_width: space, top_n: 20 }).map_err(|e| e.to_string())?;
        let top = got.first().ok_or("no candidates")?;
        if top.text != text || top.score != Some(score) {
            return Err(format!("case {case}: beam {:?} {:?} vs exhaustive {text:?} {score}", top.text, top.score));
        }
        agree += 1;
    }
    Ok(format!("{agree}/{BEAM_CASES} cases equal the exhaustive argmax"))
}

/// Plain-loop TIES: trim, elect, disjoint mean.
fn ties_brute(base: &[f64], tuned: &[Vec<f64>], density: f64, lambda: f64) -> Vec<f64> {
    let n = base.len();
    let k = ((density * n as f64) - 1e-9).ceil() as usize;
    let mut kept = Vec::new();
    for t in tuned {
        let delta: Vec<f64> = (0..n).map(|j| t[j] - base[j]).collect();
        let mut order: Vec<usize> = (0..n).collect();
        for a in 0..n {
            for b in a + 1..n {
                let (x, y) = (order[a], order[b]);
                if delta[y].abs() > delta[x].abs() || (delta[y].abs() == delta[x].abs() && y < x) {
                    order.swap(a, b);
                }
            }
        }
        let mut v = vec![0.0; n];
        for &j in &order[..k] {
            v[j] = delta[j];
        }
        kept.push(v);
    }
    (0..n)
        .map(|j| {
            let sum: f64 = kept.iter().map(|v| v[j]).sum();
            let agreeing: Vec<f64> = kept
                .iter()
                .map(|v| v[j])
                .filter(|&x| if sum >= 0.0 { x > 0.0 } else { x < 0.0 })
                .collect();
            let mean = if agreeing.is_empty() { 0.0 } else { agreeing.iter().sum::<f64>() / agreeing.len() as f64 };
            base[j] + lambda * mean
        })
        .collect()
}

fn ties_reference() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = rng.gen_range(1..50);
        let base: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let tuned: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let out = ties_merge(&ParamVector::new("b", base), &[ParamVector::new("t", tuned.clone())], 1.0, 1.0)
            .map_err(|e| e.to_string())?;
        if let Some(j) = (0..n).find(|&j| (out.merged.values[j] - tuned[j]).abs() > TIES_PASS_THROUGH_TOL) {
            return Err(format!("pass-through off at {j}: {} vs {}", out.merged.values[j], tuned[j]));
        }
    }
    let base = [0.0, 0.0];
    let tuned = vec![vec![2.0, -1.0], vec![2.0, 1.0]];
    let brute = ties_brute(&base, &tuned, 1.0, 1.0);
    let got = ties_merge(
        &ParamVector::new("base", base.to_vec()),
        &tuned.iter().map(|t| ParamVector::new("t", t.clone())).collect::<Vec<_>>(),
        1.0,
        1.0,
    )
    .map_err(|e| e.to_string())?;
    check(
        got.merged.values == brute && brute == [2.0, 1.0],
        format!("pass-through within {TIES_PASS_THROUGH_TOL:e}; hand example {:?}", got.merged.values),
        format!("hand example {:?}, brute force {brute:?}", got.merged.values),
    )
}

fn smoke_run(seed: u64) -> Result<String, String> {
    let places = PlaceTable::load(&fixture("places.tsv")).map_err(|e| e.to_string())?;
    let ingested = corpus::ingest_file(&fixture("appendix.tsv"), &places).map_err(|e| e.to_string())?;
    if ingested.records.len() != 8 || !ingested.errors.is_empty() {
        return Err(format!("ingested {} records, {} errors", ingested.records.len(), ingested.errors.len()));
    }
    let (examples, _) = dataset::build_dataset(&ingested.records, Task::Restore, &ExampleOptions::default(), seed);
    let model = BaselineModel::train(&ingested.records, 6).map_err(|e| e.to_string())?;
    let lists = restore_batch(&model.restore, &examples, RestoreOptions::default());
    let by_id: HashMap<String, _> = lists.into_iter().map(|l| (l.sample_id.clone(), l)).collect();
    let report = metrics::aggregate([metrics::evaluate_examples(&examples, &by_id)]);
    serde_json::to_string_pretty(&report).map_err(|e| e.to_string())
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let a = smoke_run(2024)?;
    let b = smoke_run(2024)?;
    let t = start.elapsed();
    let v: serde_json::Value = serde_json::from_str(&a).map_err(|e| e.to_string())?;
    check(
        a == b && t < SMOKE_BUDGET,
        format!(
            "reports byte-identical ({} bytes, {} restore samples, top-20 {}) in {t:.1?}",
            a.len(),
            v["n_samples"]["restore"],
            v["top20"]
        ),
        format!("identical: {}, time {t:.1?}", a == b),
    )
}

const NAMES: [&str; 10] = [
    "αυρηλιος", "διονυσιος", "απολλωνιος", "ηρακλειδης", "σαραπιων", "θεων", "πτολεμαιος", "ισιδωρος", "ωριγενης", "παυσιριων",
];
const FATHERS: [&str; 8] = ["ηρωνος", "διδυμου", "φιλωνος", "ανουβιωνος", "καστορος", "ερμιου", "θεωνος", "πασιωνος"];
const VERBS: [&str; 6] = ["ομολογει", "απεχει", "μεμισθωκεν", "πεπρακεν", "δεδανεικεν", "παραδεδωκεν"];
const OBJECTS: [&str; 7] = [
    "αρουρας πεντε", "οικιαν και αυλην", "αργυριου δραχμας εκατον", "πυρου αρταβας δεκα", "ονον θηλειαν", "ελαιωνα", "μεριδα αμπελωνος",
];
const TOWNS: [&str; 6] = ["οξυρυγχων πολει", "αρσινοιτων πολει", "ερμουπολει", "θεαδελφεια", "καρανιδι", "φιλαδελφεια"];

fn templated_corpus(n: usize, rng: &mut ChaCha8Rng) -> Vec<TextRecord> {
    (0..n)
        .map(|i| {
            let t = format!(
                "{} {} του {} {} {} εν {} ετους {} τω {} {}·",
                VERBS.choose(rng).unwrap(),
                NAMES.choose(rng).unwrap(),
                NAMES.choose(rng).unwrap(),
                FATHERS.choose(rng).unwrap(),
                OBJECTS.choose(rng).unwrap(),
                TOWNS.choose(rng).unwrap(),
                ["πρωτου", "δευτερου", "τριτου", "τεταρτου"].choose(rng).unwrap(),
                NAMES.choose(rng).unwrap(),
                VERBS.choose(rng).unwrap(),
            );
            TextRecord {
                id: format!("synthetic-{i:03}"),
                corpus_kind: CorpusKind::Papyrus,
                text_edited: t.clone(),
                text_diplomatic: t,
                date: None,
                place: None,
                augmented: false,
            }
        })
        .collect()
}

fn baseline_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let records = templated_corpus(SANITY_TEXTS, &mut rng);
    let (train, held_out) = records.split_at(SANITY_TEXTS * 4 / 5);
    let model = BaselineModel::train(train, 6).map_err(|e| e.to_string())?;
    // Gaps of 3 to 10 letters: at one or two letters a uniform filler with
    // twenty guesses already covers most of the alphabet.
    let range = LetterRange::new(3, 10).map_err(|e| e.to_string())?;
    let mut samples = Vec::new();
    while samples.len() < SANITY_SAMPLES {
        let rec = held_out.choose(&mut rng).unwrap();
        if let Some(s) = masking::sample_mask(rec, TextVersion::Edited, range, &mut rng) {
            samples.push(s);
        }
    }
    let alphabet: Vec<char> = train
        .iter()
        .flat_map(|r| r.text_edited.chars())
        .filter(|&c| is_letter(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let results = lacuna::par::map(&samples, |s| {
        let ph = find_placeholder(&s.prompt_text).unwrap();
        let left = &s.prompt_text[..ph.byte_range.start];
        let right = &s.prompt_text[ph.byte_range.end..];
        restore(&model.restore, left, right, s.gold_letter_count, RestoreOptions::default()).unwrap()
    });
    let mut baseline_hits = 0;
    let mut random_hits = 0;
    let mut random_expected = 0.0;
    for (s, cands) in samples.iter().zip(&results) {
        let gold = eval_normalize(&s.gold);
        if cands.iter().take(20).any(|c| eval_normalize(&c.text) == gold) {
            baseline_hits += 1;
        }
        let guesses: Vec<String> = (0..20)
            .map(|_| (0..s.gold_letter_count).map(|_| *alphabet.choose(&mut rng).unwrap()).collect())
            .collect();
        if guesses.iter().any(|g| eval_normalize(g) == gold) {
            random_hits += 1;
        }
        random_expected += 1.0 - (1.0 - (alphabet.len() as f64).powi(-(s.gold_letter_count as i32))).powi(20);
    }
    let b = baseline_hits as f64 / SANITY_SAMPLES as f64;
    let r = random_hits as f64 / SANITY_SAMPLES as f64;
    let r_expected = random_expected / SANITY_SAMPLES as f64;
    check(
        b > 0.0 && b >= SANITY_FACTOR * r && b >= SANITY_FACTOR * r_expected,
        format!("top-20 baseline {b:.3} vs uniform filler {r:.3} (expected {r_expected:.2e})"),
        format!("top-20 baseline {b:.3} vs uniform filler {r:.3} (expected {r_expected:.2e})"),
    )
}

fn inference_contract() -> Outcome {
    use common::{completion, MockServer, Reply};
    let secret = "sk-acceptance-51c0";
    let read = |n: &str| std::fs::read_to_string(format!("{}/tests/fixtures/inference/{n}", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let example = dataset::ChatExample {
        system: dataset::system_prompt(Task::Restore, CorpusKind::Papyrus),
        user: "και ο λογ[6 letters missing]ος τον θεον".into(),
        assistant: String::new(),
        id: "fixture/restore".into(),
        meta: dataset::ExampleMeta {
            corpus_kind: CorpusKind::Papyrus,
            task: Task::Restore,
            gold_letter_count: Some(6),
            source_version: None,
            date: None,
            split_tag: "test".into(),
            train_on_assistant_only: true,
        },
    };
    let cfg = |url: &str| {
        let mut c = EndpointConfig::new(url, "lacuna-restorer");
        c.auth_token = Some(Secret::new(secret));
        c.retry_backoff = Duration::from_millis(2);
        c.decode_options.insert("max_tokens".into(), serde_json::json!(32));
        c.decode_options.insert("temperature".into(), serde_json::json!(1.0));
        c
    };

    // Golden pair, reached after two server errors.
    let server = MockServer::scripted(vec![
        Reply::Json(500, "{}".into()),
        Reply::Json(500, "{}".into()),
        Reply::Json(200, read("response_restore.json")),
    ]);
    let out = Client::new(cfg(&server.url)).unwrap().request_candidates(&example).map_err(|e| e.to_string())?;
    let reqs = server.requests();
    let sent: serde_json::Value = serde_json::from_str(&reqs[0].body).unwrap();
    let golden_req: serde_json::Value = serde_json::from_str(&read("request_restore.json")).unwrap();
    let golden_out: metrics::CandidateList = serde_json::from_str(&read("candidates_restore.json")).unwrap();
    if reqs.len() != 3 || sent != golden_req || out.list != golden_out {
        return Err(format!("golden/retry mismatch: {} requests", reqs.len()));
    }

    // Sixty completions with thirty normalization duplicates.
    let texts: Vec<String> = (0..60).map(|i| format!("{}{}", ["ος ", "ος"][i % 2], "αβγδεζηθικλμνξοπρστυφχψωαβγδεζ".chars().nth(i / 2).unwrap())).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let server = MockServer::scripted(vec![Reply::Json(200, completion(&refs))]);
    let out = Client::new(cfg(&server.url)).unwrap().request_candidates(&example).map_err(|e| e.to_string())?;
    if out.list.candidates.len() != 20 {
        return Err(format!("{} candidates after dedup", out.list.candidates.len()));
    }

    // Secret scrubbing on a dead endpoint addressed with the token inline.
    let mut dead = cfg(&format!("http://{secret}@127.0.0.1:9"));
    dead.retry_backoff = Duration::from_millis(1);
    let err = Client::new(dead.clone()).unwrap().request_candidates(&example).unwrap_err();
    let leaked = err.to_string().contains(secret) || format!("{err:?}").contains(secret) || format!("{dead:?}").contains(secret);
    check(
        !leaked,
        "golden pair, retry after 2x500, 60 -> 20 dedup, no secret in errors or debug output",
        "secret found in error or debug output",
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("metric oracle equivalence", metric_oracle),
        ("worked-example fidelity", worked_example),
        ("masking distribution", masking_distribution),
        ("date rules", date_rules),
        ("split fidelity", split_fidelity),
        ("beam-search oracle", beam_oracle),
        ("TIES reference", ties_reference),
        ("end-to-end smoke", end_to_end),
        ("baseline sanity", baseline_sanity),
        ("inference adapter contract", inference_contract),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{t:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{t:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
