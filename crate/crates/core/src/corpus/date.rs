//! Historical years on a timeline without a year zero.
//!
//! Negative years are BCE. Arithmetic goes through the astronomical
//! numbering (1 BCE = 0, 2 BCE = -1) so that -1 and 1 are adjacent.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Width of the interval assumed when only one terminus is known.
pub const ONE_SIDED_SPAN: i64 = 50;
/// Offset of the date point from a lone terminus.
pub const ONE_SIDED_OFFSET: i64 = 25;

pub fn to_astronomical(year: i32) -> i64 {
    let y = i64::from(year);
    if y < 0 {
        y + 1
    } else {
        y
    }
}

pub fn from_astronomical(a: i64) -> i32 {
    let y = if a <= 0 { a - 1 } else { a };
    y as i32
}

pub fn add_years(year: i32, delta: i64) -> i32 {
    from_astronomical(to_astronomical(year) + delta)
}

/// Signed number of years from `a` to `b`.
pub fn years_between(a: i32, b: i32) -> i64 {
    to_astronomical(b) - to_astronomical(a)
}

pub fn check_year(year: i32) -> Result<()> {
    if year == 0 {
        Err(Error::Metadata("year 0 does not exist".into()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateInterval {
    pub post: i32,
    pub ante: i32,
    pub midpoint: i32,
}

impl DateInterval {
    pub fn contains(&self, year: i32) -> bool {
        self.post <= year && year <= self.ante
    }
}

/// Turns optional termini into a date interval with a single date point.
///
/// Both termini give their midpoint, rounded toward `ante` on half years. A
/// lone terminus post quem yields `[post, post+50]` dated `post+25`; a lone
/// terminus ante quem yields `[ante-50, ante]` dated `ante-25`.
pub fn resolve_date(post: Option<i32>, ante: Option<i32>) -> Result<Option<DateInterval>> {
    if let Some(p) = post {
        check_year(p)?;
    }
    if let Some(a) = ante {
        check_year(a)?;
    }
    let interval = match (post, ante) {
        (Some(p), Some(a)) => {
            if p > a {
                return Err(Error::Metadata(format!(
                    "terminus post quem {p} is later than terminus ante quem {a}"
                )));
            }
            let sum = to_astronomical(p) + to_astronomical(a);
            DateInterval {
                post: p,
                ante: a,
                midpoint: from_astronomical((sum + 1).div_euclid(2)),
            }
        }
        (Some(p), None) => DateInterval {
            post: p,
            ante: add_years(p, ONE_SIDED_SPAN),
            midpoint: add_years(p, ONE_SIDED_OFFSET),
        },
        (None, Some(a)) => DateInterval {
            post: add_years(a, -ONE_SIDED_SPAN),
            ante: a,
            midpoint: add_years(a, -ONE_SIDED_OFFSET),
        },
        (None, None) => return Ok(None),
    };
    Ok(Some(interval))
}
