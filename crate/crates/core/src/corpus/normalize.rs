use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::text::{HIGH_DOT, LOSS};

enum Class {
    Keep(char),
    Space,
    Delete,
    Unknown,
}

fn classify(c: char) -> Class {
    match c {
        'α'..='ω' | 'ϛ' | 'ϙ' | 'ϡ' => Class::Keep(c),
        '0'..='9' | LOSS => Class::Keep(c),
        // letter variants folded to the base alphabet
        'ϲ' => Class::Keep('σ'),
        'ϐ' => Class::Keep('β'),
        'ϑ' => Class::Keep('θ'),
        'ϕ' => Class::Keep('φ'),
        'ϖ' => Class::Keep('π'),
        'ϱ' => Class::Keep('ρ'),
        'ϵ' => Class::Keep('ε'),
        'ϟ' => Class::Keep('ϙ'),
        ',' => Class::Delete,
        '.' | ';' | ':' | '?' | '!' | HIGH_DOT | '\u{0387}' | '\u{037E}' | '\u{2E31}'
        | '\u{2027}' | '\u{22C5}' | '\u{2219}' => Class::Keep(HIGH_DOT),
        c if c.is_whitespace() => Class::Space,
        _ => Class::Unknown,
    }
}

/// Cleans Greek text down to the normalized alphabet.
///
/// Diacritics are removed via canonical decomposition, text is lowercased,
/// commas are deleted and all other sentence punctuation becomes `·`.
/// Whitespace collapses to single spaces and is trimmed. Final sigma is kept
/// as written. The function is idempotent.
pub fn normalize_greek(text: &str) -> String {
    normalize_greek_counted(text).0
}

/// [`normalize_greek`], also returning how many unknown symbols were dropped.
pub fn normalize_greek_counted(text: &str) -> (String, usize) {
    let mut out = String::with_capacity(text.len());
    let mut dropped = 0;
    let mut pending_space = false;
    for d in text.nfd() {
        if is_combining_mark(d) {
            continue;
        }
        for c in d.to_lowercase() {
            match classify(c) {
                Class::Keep(k) => {
                    if pending_space && !out.is_empty() {
                        out.push(' ');
                    }
                    pending_space = false;
                    out.push(k);
                }
                Class::Space => pending_space = true,
                Class::Delete => {}
                Class::Unknown => dropped += 1,
            }
        }
    }
    (out, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_diacritics_and_commas() {
        assert_eq!(normalize_greek("καὶ ὁ λόγος,"), "και ο λογος");
        assert_eq!(normalize_greek("αβγ"), "αβγ");
        assert_eq!(normalize_greek(""), "");
    }

    #[test]
    fn punctuation_becomes_high_dot_and_sigma_is_kept() {
        assert_eq!(normalize_greek("νόμους; ἐὰν"), "νομους· εαν");
        assert_eq!(normalize_greek("νομουσ· εαν"), "νομουσ· εαν");
        assert_eq!(normalize_greek("α. β: γ? δ\u{0387} ε\u{037E}"), "α· β· γ· δ· ε·");
    }

    #[test]
    fn uppercase_and_variants() {
        assert_eq!(normalize_greek("ΚΑΙ Ὁ ΛΌΓΟΣ"), "και ο λογοσ");
        assert_eq!(normalize_greek("ϲωϲ"), "σωσ");
        assert_eq!(normalize_greek("ᾳ ῥ"), "α ρ");
    }

    #[test]
    fn whitespace_and_unknown_symbols() {
        assert_eq!(normalize_greek("  α \t\n β  "), "α β");
        let (s, n) = normalize_greek_counted("απ’ αυτου @ x");
        assert_eq!(s, "απ αυτου");
        assert_eq!(n, 3);
        assert_eq!(normalize_greek("δραχμας 0 - -"), "δραχμας 0 - -");
    }

    fn greekish() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                proptest::char::range('\u{0370}', '\u{03FF}'),
                proptest::char::range('\u{1F00}', '\u{1FFF}'),
                proptest::sample::select(vec![' ', ',', '.', ';', '-', '·', '\t', '1', '[', '’', '\u{0301}']),
            ],
            0..40,
        )
        .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn idempotent(s in greekish()) {
            let once = normalize_greek(&s);
            prop_assert_eq!(normalize_greek(&once), once.clone());
        }

        #[test]
        fn output_alphabet(s in greekish()) {
            let re = regex::Regex::new("^[α-ωϛϙϡς0-9 ·-]*$").unwrap();
            prop_assert!(re.is_match(&normalize_greek(&s)));
        }
    }
}
