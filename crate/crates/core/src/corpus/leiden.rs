//! Leiden-lite markup.
//!
//! Three constructs are understood:
//!
//! * `[abc]` - letters restored by the editor,
//! * `[---]` - a lost stretch of unknown extent,
//! * runs of `.` or `-` outside brackets - that many lost letters. Markers
//!   may be separated by single spaces (`- - -` is three lost letters).
//!
//! A lone `.` directly after a letter and followed by whitespace (or the end
//! of the text) is read as a full stop, not as a lost letter.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::text::LOSS;
use crate::{Error, Result};

/// Hyphens emitted for a `[---]` gap.
pub const LONG_GAP_HYPHENS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Restored(String),
    Lost(usize),
    LongGap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeidenText {
    pub edited: String,
    pub diplomatic: String,
}

pub fn parse_leiden(input: &str) -> Result<LeidenText> {
    let segments = segments(input)?;
    Ok(render(&segments))
}

fn is_marker(c: char) -> bool {
    c == '.' || c == LOSS
}

/// Splits markup into segments, reporting byte offsets on errors.
pub fn segments(input: &str) -> Result<Vec<Segment>> {
    let chars: Vec<(usize, char)> = input.char_indices().collect();
    let mut out: Vec<Segment> = Vec::new();
    let mut text = String::new();
    let mut i = 0;

    let flush = |text: &mut String, out: &mut Vec<Segment>| {
        if !text.is_empty() {
            out.push(Segment::Text(std::mem::take(text)));
        }
    };

    while i < chars.len() {
        let (offset, c) = chars[i];
        match c {
            '[' => {
                let close = chars[i + 1..]
                    .iter()
                    .position(|&(_, c)| c == '[' || c == ']')
                    .map(|p| p + i + 1);
                match close.map(|j| chars[j]) {
                    Some((_, ']')) => {
                        let j = close.unwrap_or_default();
                        flush(&mut text, &mut out);
                        let inner: String = chars[i + 1..j].iter().map(|&(_, c)| c).collect();
                        bracket(&inner, &mut out);
                        i = j + 1;
                    }
                    Some((nested, _)) => {
                        return Err(Error::Leiden {
                            offset: nested,
                            message: "nested bracket".into(),
                        })
                    }
                    None => {
                        return Err(Error::Leiden {
                            offset,
                            message: "unclosed bracket".into(),
                        })
                    }
                }
            }
            ']' => {
                return Err(Error::Leiden {
                    offset,
                    message: "closing bracket without opening bracket".into(),
                })
            }
            c if is_marker(c) => {
                let (count, next) = marker_run(&chars, i);
                let after_letter = i > 0 && chars[i - 1].1.is_alphabetic();
                let before_space = chars.get(next).is_none_or(|&(_, c)| c.is_whitespace());
                if count == 1 && c == '.' && after_letter && before_space {
                    text.push('.');
                } else {
                    flush(&mut text, &mut out);
                    out.push(Segment::Lost(count));
                }
                i = next;
            }
            c => {
                text.push(c);
                i += 1;
            }
        }
    }
    flush(&mut text, &mut out);
    Ok(out)
}

/// Counts a run of loss markers starting at `start`, returning the count and
/// the index just past the run.
fn marker_run(chars: &[(usize, char)], start: usize) -> (usize, usize) {
    let mut i = start;
    let mut count = 0;
    loop {
        if i < chars.len() && is_marker(chars[i].1) {
            count += 1;
            i += 1;
        } else if i + 1 < chars.len() && chars[i].1 == ' ' && is_marker(chars[i + 1].1) {
            i += 1;
        } else {
            break;
        }
    }
    (count, i)
}

fn bracket(inner: &str, out: &mut Vec<Segment>) {
    if inner.chars().filter(|c| !c.is_whitespace()).eq("---".chars()) {
        out.push(Segment::LongGap);
        return;
    }
    let mut restored = String::new();
    for c in inner.chars() {
        if is_marker(c) {
            if !restored.is_empty() {
                out.push(Segment::Restored(std::mem::take(&mut restored)));
            }
            match out.last_mut() {
                Some(Segment::Lost(n)) => *n += 1,
                _ => out.push(Segment::Lost(1)),
            }
        } else {
            restored.push(c);
        }
    }
    if !restored.is_empty() {
        out.push(Segment::Restored(restored));
    }
}

/// Letters of a restoration, counted after stripping diacritics.
fn restored_letters(s: &str) -> usize {
    s.nfd()
        .filter(|&c| !is_combining_mark(c) && c.is_alphabetic())
        .count()
}

pub fn render(segments: &[Segment]) -> LeidenText {
    let mut edited = String::new();
    let mut diplomatic = String::new();
    for seg in segments {
        match seg {
            Segment::Text(t) => {
                edited.push_str(t);
                diplomatic.push_str(t);
            }
            Segment::Restored(r) => {
                edited.push_str(r);
                for _ in 0..restored_letters(r) {
                    diplomatic.push(LOSS);
                }
            }
            Segment::Lost(n) => {
                for _ in 0..*n {
                    edited.push(LOSS);
                    diplomatic.push(LOSS);
                }
            }
            Segment::LongGap => {
                for _ in 0..LONG_GAP_HYPHENS {
                    edited.push(LOSS);
                    diplomatic.push(LOSS);
                }
            }
        }
    }
    LeidenText { edited, diplomatic }
}
