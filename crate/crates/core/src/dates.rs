//! Date helpers shared across the crate.
//!
//! Stay periods are closed intervals of calendar days: a record admitted and
//! discharged on the same day occupies one day. All "number of days" values
//! in this crate follow from that convention.

use chrono::{Datelike, NaiveDate};

use crate::{Error, Result};

/// Strict `YYYY-MM-DD` parse. Rejects anything chrono's lenient parsers
/// would wave through (missing zero padding, trailing garbage).
pub fn parse_iso(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    fn num(d: &[u8]) -> Option<u32> {
        let mut v = 0u32;
        for &c in d {
            if !c.is_ascii_digit() {
                return None;
            }
            v = v * 10 + (c - b'0') as u32;
        }
        Some(v)
    }
    let y = num(&b[0..4])?;
    let m = num(&b[5..7])?;
    let d = num(&b[8..10])?;
    NaiveDate::from_ymd_opt(y as i32, m, d)
}

/// Writes `YYYY-MM-DD` without going through chrono's format machinery
/// (this sits on the hot path of every serializer).
pub fn push_iso(out: &mut String, d: NaiveDate) {
    let (y, m, day) = (d.year(), d.month(), d.day());
    debug_assert!((0..=9999).contains(&y));
    out.push((b'0' + (y / 1000) as u8) as char);
    out.push((b'0' + (y / 100 % 10) as u8) as char);
    out.push((b'0' + (y / 10 % 10) as u8) as char);
    out.push((b'0' + (y % 10) as u8) as char);
    out.push('-');
    out.push((b'0' + (m / 10) as u8) as char);
    out.push((b'0' + (m % 10) as u8) as char);
    out.push('-');
    out.push((b'0' + (day / 10) as u8) as char);
    out.push((b'0' + (day % 10) as u8) as char);
}

pub fn iso(d: NaiveDate) -> String {
    let mut s = String::with_capacity(10);
    push_iso(&mut s, d);
    s
}

/// Number of calendar days in the closed interval `[a, b]`; 0 if `b < a`.
pub fn days_inclusive(a: NaiveDate, b: NaiveDate) -> i64 {
    ((b - a).num_days() + 1).max(0)
}

/// Closed observation window `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DayRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<DayRange> {
        if end < start {
            return Err(Error::Config(format!(
                "window end {} precedes start {}",
                iso(end),
                iso(start)
            )));
        }
        Ok(DayRange { start, end })
    }

    pub fn len_days(&self) -> i64 {
        days_inclusive(self.start, self.end)
    }

    /// Index of `d` inside the window, 0-based. Contract: `d` lies inside.
    pub fn day_index(&self, d: NaiveDate) -> usize {
        debug_assert!(d >= self.start && d <= self.end);
        (d - self.start).num_days() as usize
    }

    /// Intersection of `[a, b]` with the window, `None` when disjoint.
    pub fn clip(&self, a: NaiveDate, b: NaiveDate) -> Option<(NaiveDate, NaiveDate)> {
        let lo = a.max(self.start);
        let hi = b.min(self.end);
        if lo <= hi {
            Some((lo, hi))
        } else {
            None
        }
    }
}
