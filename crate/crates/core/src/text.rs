//! Character classes shared by the masking, baseline and metrics code.
//!
//! Normalized text uses a small alphabet: lowercase unaccented Greek letters,
//! digits, a single space, the high dot `·` and the loss marker `-`. A
//! "letter" is anything alphabetic; spaces, punctuation, digits and hyphens
//! never count toward a gap size.

use std::sync::OnceLock;

use regex::Regex;

pub const HIGH_DOT: char = '·';
pub const LOSS: char = '-';

/// Context sentinel marking the beginning of a text in n-gram histories.
pub const BOS: char = '^';

#[inline]
pub fn is_letter(c: char) -> bool {
    c.is_alphabetic()
}

pub fn letter_count(s: &str) -> usize {
    s.chars().filter(|&c| is_letter(c)).count()
}

/// Placeholder shown in place of a masked gap.
pub fn placeholder(letters: usize) -> String {
    if letters == 1 {
        "[1 letter missing]".to_string()
    } else {
        format!("[{letters} letters missing]")
    }
}

pub fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(\d+) letters? missing\]").expect("static regex"))
}

/// Locates the first placeholder, returning its char range and letter count.
pub fn find_placeholder(s: &str) -> Option<PlaceholderMatch> {
    let caps = placeholder_regex().captures(s)?;
    let whole = caps.get(0)?;
    let letters = caps[1].parse().ok()?;
    let start = s[..whole.start()].chars().count();
    let len = whole.as_str().chars().count();
    Some(PlaceholderMatch {
        byte_range: whole.range(),
        char_start: start,
        char_end: start + len,
        letters,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceholderMatch {
    pub byte_range: std::ops::Range<usize>,
    pub char_start: usize,
    pub char_end: usize,
    pub letters: usize,
}

/// Stable 64-bit seed derived from a master seed and a string key.
///
/// FNV-1a over the key, mixed with the master seed through SplitMix64, so
/// per-record generator streams do not depend on iteration order.
pub fn derive_seed(master: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
