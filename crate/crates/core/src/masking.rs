//! Gap sampling and training-time augmentation.
//!
//! Gaps are sized in letters: spaces, `·` and digits inside a gap are part of
//! the gold answer but never part of its count. A gap is drawn from one
//! maximal intact (hyphen-free) span, chosen with probability proportional to
//! the square of its letter count, and never covers more than half of that
//! span's letters.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TextRecord, TextVersion};
use crate::text::{self, is_letter, HIGH_DOT, LOSS};
use crate::{Error, Result};

pub const MAX_GAP_LETTERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntactSpan {
    pub start: usize,
    pub length_chars: usize,
    pub length_letters: usize,
}

impl IntactSpan {
    pub fn end(&self) -> usize {
        self.start + self.length_chars
    }

    /// Largest gap allowed inside this span.
    pub fn letter_cap(&self) -> usize {
        self.length_letters / 2
    }
}

/// Maximal hyphen-free runs of `text` that contain at least one letter.
pub fn find_intact_spans(text: &str) -> Vec<IntactSpan> {
    let mut spans = Vec::new();
    let mut current: Option<IntactSpan> = None;
    for (i, c) in text.chars().enumerate() {
        if c == LOSS {
            if let Some(s) = current.take() {
                spans.push(s);
            }
            continue;
        }
        let s = current.get_or_insert(IntactSpan {
            start: i,
            length_chars: 0,
            length_letters: 0,
        });
        s.length_chars += 1;
        if is_letter(c) {
            s.length_letters += 1;
        }
    }
    spans.extend(current);
    spans.retain(|s| s.length_letters > 0);
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LetterRange {
    min: usize,
    max: usize,
}

impl LetterRange {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min == 0 || min > max || max > MAX_GAP_LETTERS {
            return Err(Error::InvalidArgument(format!(
                "letter range [{min}, {max}] must satisfy 1 <= min <= max <= {MAX_GAP_LETTERS}"
            )));
        }
        Ok(LetterRange { min, max })
    }

    pub fn exact(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn min(&self) -> usize {
        self.min
    }

    pub fn max(&self) -> usize {
        self.max
    }
}

impl Default for LetterRange {
    fn default() -> Self {
        LetterRange { min: 1, max: MAX_GAP_LETTERS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSample {
    pub id: String,
    pub prompt_text: String,
    pub placeholder: String,
    pub gold: String,
    pub gold_letter_count: usize,
    pub source_version: TextVersion,
    /// Char offset of the gap in the source text.
    pub gap_start: usize,
}

impl MaskedSample {
    /// The source text, with the gold sequence put back in place.
    pub fn splice(&self) -> String {
        self.prompt_text.replacen(&self.placeholder, &self.gold, 1)
    }
}

fn build_sample(
    id: &str,
    chars: &[char],
    version: TextVersion,
    from: usize,
    to: usize,
    letters: usize,
) -> MaskedSample {
    let placeholder = text::placeholder(letters);
    let mut prompt: String = chars[..from].iter().collect();
    prompt.push_str(&placeholder);
    prompt.extend(&chars[to..]);
    MaskedSample {
        id: id.to_string(),
        prompt_text: prompt,
        placeholder,
        gold: chars[from..to].iter().collect(),
        gold_letter_count: letters,
        source_version: version,
        gap_start: from,
    }
}

/// Picks a span index among `spans` eligible for `range`, weighted by the
/// square of the letter count.
pub fn select_span<R: Rng + ?Sized>(spans: &[IntactSpan], range: LetterRange, rng: &mut R) -> Option<usize> {
    let eligible: Vec<usize> = (0..spans.len())
        .filter(|&i| spans[i].letter_cap() >= range.min)
        .collect();
    if eligible.is_empty() {
        return None;
    }
    let weights = eligible.iter().map(|&i| {
        let n = spans[i].length_letters as u64;
        n * n
    });
    let dist = WeightedIndex::new(weights).ok()?;
    Some(eligible[dist.sample(rng)])
}

/// Samples one gap from `text`; `None` when no span can hold `range.min`
/// letters under the half-span cap.
pub fn sample_mask_text<R: Rng + ?Sized>(
    id: &str,
    text: &str,
    version: TextVersion,
    range: LetterRange,
    rng: &mut R,
) -> Option<MaskedSample> {
    let chars: Vec<char> = text.chars().collect();
    let spans = find_intact_spans(text);
    let span = spans[select_span(&spans, range, rng)?];
    let cap = range.max.min(span.letter_cap());
    let letters = rng.gen_range(range.min..=cap);
    let positions: Vec<usize> = (span.start..span.end()).filter(|&i| is_letter(chars[i])).collect();
    let first = rng.gen_range(0..=positions.len() - letters);
    let from = positions[first];
    let to = positions[first + letters - 1] + 1;
    Some(build_sample(id, &chars, version, from, to, letters))
}

pub fn sample_mask<R: Rng + ?Sized>(
    record: &TextRecord,
    version: TextVersion,
    range: LetterRange,
    rng: &mut R,
) -> Option<MaskedSample> {
    sample_mask_text(&record.id, record.text(version), version, range, rng)
}

/// Masks a fixed gap: `letters` letters starting at the letter with index
/// `first_letter` (0-based, counted over the whole text).
pub fn mask_letters(
    id: &str,
    text: &str,
    version: TextVersion,
    first_letter: usize,
    letters: usize,
) -> Result<MaskedSample> {
    if letters == 0 || letters > MAX_GAP_LETTERS {
        return Err(Error::InvalidArgument(format!("gap of {letters} letters out of range")));
    }
    let chars: Vec<char> = text.chars().collect();
    let positions: Vec<usize> = (0..chars.len()).filter(|&i| is_letter(chars[i])).collect();
    let last = first_letter + letters - 1;
    if last >= positions.len() {
        return Err(Error::InvalidArgument(format!(
            "gap ends at letter {last} but text has {} letters",
            positions.len()
        )));
    }
    let (from, to) = (positions[first_letter], positions[last] + 1);
    if chars[from..to].contains(&LOSS) {
        return Err(Error::InvalidArgument("gap crosses lost text".into()));
    }
    Ok(build_sample(id, &chars, version, from, to, letters))
}

/// Fraction of preserved letters turned into `-` as noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseLevel {
    P5,
    P10,
    P15,
    P20,
    P25,
}

impl NoiseLevel {
    pub const ALL: [NoiseLevel; 5] = [
        NoiseLevel::P5,
        NoiseLevel::P10,
        NoiseLevel::P15,
        NoiseLevel::P20,
        NoiseLevel::P25,
    ];

    pub fn fraction(self) -> f64 {
        match self {
            NoiseLevel::P5 => 0.05,
            NoiseLevel::P10 => 0.10,
            NoiseLevel::P15 => 0.15,
            NoiseLevel::P20 => 0.20,
            NoiseLevel::P25 => 0.25,
        }
    }
}

impl TryFrom<f64> for NoiseLevel {
    type Error = Error;

    fn try_from(f: f64) -> Result<Self> {
        NoiseLevel::ALL
            .into_iter()
            .find(|l| (l.fraction() - f).abs() < 1e-9)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("noise fraction {f} not one of 0.05, 0.10, 0.15, 0.20, 0.25"))
            })
    }
}

/// Replaces `round(fraction * n)` of the `n` preserved letters with `-`.
///
/// Placeholders are left untouched, as are spaces, punctuation and digits.
pub fn add_noise<R: Rng + ?Sized>(text: &str, level: NoiseLevel, rng: &mut R) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let mut exempt = vec![false; chars.len()];
    for m in text::placeholder_regex().find_iter(text) {
        let start = text[..m.start()].chars().count();
        let len = m.as_str().chars().count();
        exempt[start..start + len].iter_mut().for_each(|e| *e = true);
    }
    let candidates: Vec<usize> = (0..chars.len())
        .filter(|&i| !exempt[i] && is_letter(chars[i]))
        .collect();
    let k = (level.fraction() * candidates.len() as f64).round() as usize;
    for i in rand::seq::index::sample(rng, candidates.len(), k) {
        chars[candidates[i]] = LOSS;
    }
    chars.into_iter().collect()
}

/// Permutes the `·`-delimited sentences of `text` uniformly.
pub fn shuffle_sentences<R: Rng + ?Sized>(text: &str, rng: &mut R) -> String {
    let trimmed = text.trim_end();
    let trailing = trimmed.ends_with(HIGH_DOT);
    let body = if trailing {
        &trimmed[..trimmed.len() - HIGH_DOT.len_utf8()]
    } else {
        trimmed
    };
    let mut parts: Vec<&str> = body.split(HIGH_DOT).map(str::trim).collect();
    if parts.len() < 2 {
        return text.to_string();
    }
    parts.shuffle(rng);
    let joiner = if text.contains("· ") { "· " } else { "·" };
    let mut out = parts.join(joiner);
    if trailing {
        out.push(HIGH_DOT);
    }
    out
}

/// Cuts `text` to at most `max_chars`, keeping any placeholder whole.
///
/// Texts shorter than `min_chars` are rejected. Longer texts are cut to a
/// window of exactly `max_chars` characters whose start is uniform among the
/// windows that contain the placeholder (or all windows, if there is none).
pub fn truncate<R: Rng + ?Sized>(text: &str, min_chars: usize, max_chars: usize, rng: &mut R) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    if n < min_chars || max_chars < min_chars {
        return None;
    }
    if n <= max_chars {
        return Some(text.to_string());
    }
    let (lo, hi) = match text::find_placeholder(text) {
        Some(m) => {
            if m.char_end - m.char_start > max_chars {
                return None;
            }
            (m.char_end.saturating_sub(max_chars), m.char_start.min(n - max_chars))
        }
        None => (0, n - max_chars),
    };
    let start = rng.gen_range(lo..=hi);
    Some(chars[start..start + max_chars].iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn spans() {
        let s = find_intact_spans("αβγ---δε");
        assert_eq!(
            s,
            vec![
                IntactSpan { start: 0, length_chars: 3, length_letters: 3 },
                IntactSpan { start: 6, length_chars: 2, length_letters: 2 },
            ]
        );
        assert!(find_intact_spans("-----").is_empty());
        let s = find_intact_spans("αβ γ·δ");
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].length_chars, s[0].length_letters), (6, 4));
        // runs without letters are not spans
        assert_eq!(find_intact_spans("α- -β").len(), 2);
    }

    #[test]
    fn worked_example() {
        let text = "και ο λογος ην προς τον θεον";
        let m = mask_letters("jn1", text, TextVersion::Edited, 7, 6).unwrap();
        assert_eq!(m.prompt_text, "και ο λογ[6 letters missing]ος τον θεον");
        assert_eq!(m.gold, "ος ην πρ");
        assert_eq!(m.gold_letter_count, 6);
        assert_eq!(m.splice(), text);
    }

    #[test]
    fn fixed_gap_errors() {
        assert!(mask_letters("x", "αβ--γδ", TextVersion::Diplomatic, 1, 2).is_err());
        assert!(mask_letters("x", "αβγ", TextVersion::Edited, 2, 2).is_err());
        assert!(mask_letters("x", "αβγ", TextVersion::Edited, 0, 0).is_err());
    }

    #[test]
    fn too_short_for_minimum() {
        let r = LetterRange::new(3, 20).unwrap();
        assert_eq!(sample_mask_text("x", "αβγδ", TextVersion::Edited, r, &mut rng(1)), None);
    }

    #[test]
    fn letter_range_validation() {
        assert!(LetterRange::new(0, 3).is_err());
        assert!(LetterRange::new(4, 3).is_err());
        assert!(LetterRange::new(1, 21).is_err());
        assert!(LetterRange::new(1, 20).is_ok());
    }

    #[test]
    fn span_weights() {
        let spans = find_intact_spans(&format!("{}---{}", "α".repeat(10), "β".repeat(20)));
        let r = LetterRange::new(3, 20).unwrap();
        let mut g = rng(9);
        let n = 20_000;
        let second = (0..n).filter(|_| select_span(&spans, r, &mut g) == Some(1)).count();
        let p = second as f64 / n as f64;
        assert!((p - 0.8).abs() < 0.02, "{p}");
    }

    #[test]
    fn singular_placeholder() {
        let r = LetterRange::exact(1).unwrap();
        let m = sample_mask_text("x", "αβγδ", TextVersion::Edited, r, &mut rng(3)).unwrap();
        assert_eq!(m.placeholder, "[1 letter missing]");
        assert_eq!(m.gold.chars().count(), 1);
    }

    #[test]
    fn noise_counts() {
        let out = add_noise("αβγδεζηθικ", NoiseLevel::P10, &mut rng(0));
        assert_eq!(out.chars().filter(|&c| c == '-').count(), 1);
        assert!(NoiseLevel::try_from(0.0).is_err());
        assert_eq!(NoiseLevel::try_from(0.15).unwrap(), NoiseLevel::P15);
    }

    #[test]
    fn noise_outcomes_enumerated() {
        let allowed: BTreeSet<&str> = ["αβ--", "-β-γ", "α--γ"].into_iter().collect();
        let mut seen = BTreeSet::new();
        for seed in 0..300 {
            let out = add_noise("αβ-γ", NoiseLevel::P25, &mut rng(seed));
            assert!(allowed.contains(out.as_str()), "{out}");
            seen.insert(out);
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn noise_skips_placeholder_and_non_letters() {
        let text = "αβ γδ· 12 εζ[6 letters missing]ηθ";
        for seed in 0..50 {
            let out = add_noise(text, NoiseLevel::P25, &mut rng(seed));
            assert!(out.contains("[6 letters missing]"));
            assert_eq!(out.chars().filter(|&c| c == '-').count(), 2);
            assert!(out.contains(" ") && out.contains("12") && out.contains('·'));
        }
    }

    #[test]
    fn shuffle_cases() {
        assert_eq!(shuffle_sentences("αβγ", &mut rng(0)), "αβγ");
        assert_eq!(shuffle_sentences("αβγ·", &mut rng(0)), "αβγ·");
        let mut counts = std::collections::BTreeMap::new();
        for seed in 0..2000 {
            *counts.entry(shuffle_sentences("α·β·", &mut rng(seed))).or_insert(0) += 1;
        }
        assert_eq!(counts.keys().cloned().collect::<Vec<_>>(), ["α·β·", "β·α·"]);
        let p = counts["α·β·"] as f64 / 2000.0;
        assert!((p - 0.5).abs() < 0.05, "{p}");
        let out = shuffle_sentences("α·β·γ·", &mut rng(5));
        let mut parts: Vec<&str> = out.trim_end_matches('·').split('·').collect();
        parts.sort();
        assert_eq!(parts, ["α", "β", "γ"]);
        assert!(out.ends_with('·'));
    }

    #[test]
    fn truncate_cases() {
        let mut g = rng(0);
        assert_eq!(truncate(&"α".repeat(40), 50, 750, &mut g), None);
        let t600 = "α".repeat(600);
        assert_eq!(truncate(&t600, 50, 750, &mut g).as_deref(), Some(t600.as_str()));
        let ph = "[6 letters missing]";
        let body = "β".repeat(800 - ph.chars().count());
        for at in [0usize, 100, 400, 780 - ph.chars().count()] {
            let text: String = format!("{}{}{}", &body[..at * 2], ph, &body[at * 2..]);
            assert_eq!(text.chars().count(), 800);
            for seed in 0..20 {
                let out = truncate(&text, 50, 750, &mut rng(seed)).unwrap();
                assert_eq!(out.chars().count(), 750);
                assert!(out.contains(ph));
            }
        }
        let plain = "γ".repeat(800);
        assert_eq!(truncate(&plain, 50, 750, &mut g).unwrap().chars().count(), 750);
    }

    fn corpus_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                6 => proptest::sample::select(vec!['α', 'β', 'γ', 'δ', 'ε', 'ς']),
                2 => Just(' '),
                1 => Just('·'),
                1 => Just('-'),
                1 => Just('7'),
            ],
            0..120,
        )
        .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn sampled_masks_are_consistent(text in corpus_text(), seed in any::<u64>(), lo in 1usize..6, extra in 0usize..15) {
            let range = LetterRange::new(lo, (lo + extra).min(20)).unwrap();
            if let Some(m) = sample_mask_text("p", &text, TextVersion::Edited, range, &mut rng(seed)) {
                prop_assert_eq!(m.splice(), text.clone());
                prop_assert_eq!(text::letter_count(&m.gold), m.gold_letter_count);
                prop_assert_eq!(m.placeholder.clone(), text::placeholder(m.gold_letter_count));
                let first = m.gold.chars().next().unwrap();
                let last = m.gold.chars().last().unwrap();
                prop_assert!(is_letter(first) && is_letter(last));
                prop_assert!(!m.gold.contains('-'));
                prop_assert!(m.gold_letter_count >= range.min() && m.gold_letter_count <= range.max());
                let span = find_intact_spans(&text).into_iter()
                    .find(|s| s.start <= m.gap_start && m.gap_start < s.end()).unwrap();
                prop_assert!(2 * m.gold_letter_count <= span.length_letters);
            }
        }

        #[test]
        fn noise_never_touches_gold(text in corpus_text(), seed in any::<u64>(), lvl in 0usize..5) {
            let range = LetterRange::new(1, 20).unwrap();
            if let Some(m) = sample_mask_text("p", &text, TextVersion::Edited, range, &mut rng(seed)) {
                let noisy = add_noise(&m.prompt_text, NoiseLevel::ALL[lvl], &mut rng(seed ^ 1));
                prop_assert!(noisy.contains(&m.placeholder));
                prop_assert_eq!(noisy.chars().count(), m.prompt_text.chars().count());
            }
        }
    }
}
