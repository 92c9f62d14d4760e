//! Stays of one patient whose date ranges intersect.
//!
//! Anonymized claims can report a patient in two places at once: double
//! entries, day-clinic episodes inside a main stay, or the two halves of a
//! transfer both billing the handover day. Records are grouped into maximal
//! connected components of the pairwise-intersection graph and each group is
//! classified.
//!
//! Two-record groups get the full taxonomy below plus a four-digit agreement
//! code; groups of three or more records in at most two facilities are only
//! ever "unknown multiple entries"; groups spanning more than two facilities
//! are excluded from the taxonomy tables altogether (they are too rare to
//! interpret and would distort the counts).

use chrono::NaiveDate;

use crate::dates::days_inclusive;
use crate::records::{PatientGroup, StayRecord};
use crate::states::State;

/// Classification of a non-excluded overlap group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OverlapClass {
    /// One-day intersection where the first stay ends on the day the second
    /// begins: the ordinary handover pattern.
    StandardTransfer,
    /// One-day intersection on the shared first day (one record is a
    /// same-day entry on the other's admission day).
    FirstDayTransfer,
    /// One-day intersection on the shared last day.
    LastDayTransfer,
    /// Second stay lies strictly inside the first, different facilities.
    TemporaryTransfer,
    /// Same facility, anything but identical dates.
    TwoEntriesSingleInstitution,
    /// Same facility, identical admission and discharge.
    SimultaneousSingleInstitution,
    /// Different facilities, identical admission and discharge.
    SimultaneousTwoInstitutions,
    /// Different facilities, none of the patterns above.
    UnknownTwoInstitutions,
    /// Three or more records in at most two facilities.
    UnknownMultipleEntries,
}

impl OverlapClass {
    /// Column order used by the taxonomy tables.
    pub const ALL: [OverlapClass; 9] = [
        OverlapClass::StandardTransfer,
        OverlapClass::FirstDayTransfer,
        OverlapClass::LastDayTransfer,
        OverlapClass::TemporaryTransfer,
        OverlapClass::TwoEntriesSingleInstitution,
        OverlapClass::SimultaneousSingleInstitution,
        OverlapClass::SimultaneousTwoInstitutions,
        OverlapClass::UnknownTwoInstitutions,
        OverlapClass::UnknownMultipleEntries,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OverlapClass::StandardTransfer => "standard_transfer",
            OverlapClass::FirstDayTransfer => "first_day_transfer",
            OverlapClass::LastDayTransfer => "last_day_transfer",
            OverlapClass::TemporaryTransfer => "temporary_transfer",
            OverlapClass::TwoEntriesSingleInstitution => "two_entries_single_institution",
            OverlapClass::SimultaneousSingleInstitution => "simultaneous_single_institution",
            OverlapClass::SimultaneousTwoInstitutions => "simultaneous_two_institutions",
            OverlapClass::UnknownTwoInstitutions => "unknown_two_institutions",
            OverlapClass::UnknownMultipleEntries => "unknown_multiple_entries",
        }
    }

    pub fn parse(s: &str) -> Option<OverlapClass> {
        OverlapClass::ALL.into_iter().find(|c| c.label() == s)
    }

    pub fn index(self) -> usize {
        OverlapClass::ALL.iter().position(|c| *c == self).unwrap()
    }

    /// The three one-day patterns that behave like direct transfers and can
    /// optionally be merged into direct-transfer totals in reports.
    pub fn is_transfer_like(self) -> bool {
        matches!(
            self,
            OverlapClass::StandardTransfer | OverlapClass::FirstDayTransfer | OverlapClass::LastDayTransfer
        )
    }
}

/// Agreement pattern of a two-record group, one digit per field in the order
/// facility, diagnosis, admission, discharge; 1 = equal. "1100" therefore
/// reads: same facility and diagnosis, different admission and discharge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FourDigitCode(u8);

impl FourDigitCode {
    pub fn of(a: &StayRecord, b: &StayRecord) -> FourDigitCode {
        let mut bits = 0u8;
        if a.facility == b.facility {
            bits |= 0b1000;
        }
        // Full diagnosis string; subcodes count, so I21.0 vs I21.1 differ.
        if a.diagnosis == b.diagnosis {
            bits |= 0b0100;
        }
        if a.admission == b.admission {
            bits |= 0b0010;
        }
        if a.discharge == b.discharge {
            bits |= 0b0001;
        }
        FourDigitCode(bits)
    }

    pub fn from_index(i: usize) -> FourDigitCode {
        debug_assert!(i < 16);
        FourDigitCode(i as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> String {
        format!("{}{}{}{}", (self.0 >> 3) & 1, (self.0 >> 2) & 1, (self.0 >> 1) & 1, self.0 & 1)
    }
}

fn intersection(a: &StayRecord, b: &StayRecord) -> Option<(NaiveDate, NaiveDate)> {
    let lo = a.admission.max(b.admission);
    let hi = a.discharge.min(b.discharge);
    if lo <= hi {
        Some((lo, hi))
    } else {
        None
    }
}

fn intersection_days(a: &StayRecord, b: &StayRecord) -> i64 {
    intersection(a, b).map_or(0, |(lo, hi)| days_inclusive(lo, hi))
}

/// Classifies a two-record group. Contract: `a` sorts before `b` in the
/// patient order and the two stay periods intersect.
///
/// The predicates are mutually exclusive, so the outcome does not depend on
/// evaluation order; the order below mirrors how the cases are usually
/// described (same-institution first, then the one-day transfer shapes).
pub fn classify_pair(a: &StayRecord, b: &StayRecord) -> OverlapClass {
    debug_assert!(a.cmp_within_patient(b) != std::cmp::Ordering::Greater);
    debug_assert!(intersection(a, b).is_some());

    let same_admission = a.admission == b.admission;
    let same_discharge = a.discharge == b.discharge;
    if a.facility == b.facility {
        return if same_admission && same_discharge {
            OverlapClass::SimultaneousSingleInstitution
        } else {
            OverlapClass::TwoEntriesSingleInstitution
        };
    }
    if same_admission && same_discharge {
        return OverlapClass::SimultaneousTwoInstitutions;
    }
    if a.admission < b.admission && b.discharge < a.discharge {
        return OverlapClass::TemporaryTransfer;
    }
    if intersection_days(a, b) == 1 {
        // Exactly one of the three shapes can hold here: a shared admission
        // or discharge day forces the one-day record onto that same day,
        // which contradicts the strict chain of the standard shape.
        if a.discharge == b.admission && !same_admission && !same_discharge {
            return OverlapClass::StandardTransfer;
        }
        if same_admission {
            return OverlapClass::FirstDayTransfer;
        }
        if same_discharge {
            return OverlapClass::LastDayTransfer;
        }
    }
    OverlapClass::UnknownTwoInstitutions
}

/// Group classification, with the excluded bucket kept separate from the
/// nine-class taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupClass {
    Class(OverlapClass),
    /// More than two facilities involved; left out of taxonomy tables.
    Excluded,
}

impl GroupClass {
    pub fn label(self) -> &'static str {
        match self {
            GroupClass::Class(c) => c.label(),
            GroupClass::Excluded => "excluded",
        }
    }
}

/// A maximal set of pairwise-connected overlapping stays of one patient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapGroup {
    pub patient: String,
    pub records: Vec<StayRecord>,
    pub n_facilities: usize,
    pub class: GroupClass,
    /// Agreement code; two-record groups only.
    pub code: Option<FourDigitCode>,
    /// Days covered by the union of the pairwise intersection intervals:
    /// "how long was the patient double-booked", not the span of the group.
    pub duration_days: i64,
    /// Distinct states touched, in the fixed state order.
    pub states: Vec<State>,
}

impl OverlapGroup {
    /// State shared by all records, if there is a single one.
    pub fn uniform_state(&self) -> Option<State> {
        let first = self.records[0].state;
        if self.records.iter().all(|r| r.state == first) {
            Some(first)
        } else {
            None
        }
    }

    pub const HEADER: &'static str = "patient\tclass\tcode\tfacilities\tduration_days\tstates";

    pub fn push_tsv(&self, out: &mut String) {
        out.push_str(&self.patient);
        out.push('\t');
        out.push_str(self.class.label());
        out.push('\t');
        match self.code {
            Some(c) => out.push_str(&c.label()),
            None => out.push('-'),
        }
        out.push('\t');
        out.push_str(&self.n_facilities.to_string());
        out.push('\t');
        out.push_str(&self.duration_days.to_string());
        out.push('\t');
        for (i, s) in self.states.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(s.abbrev());
        }
    }
}

fn build_group(patient: &str, records: Vec<StayRecord>) -> OverlapGroup {
    debug_assert!(records.len() >= 2);
    let mut facilities: Vec<&str> = records.iter().map(|r| r.facility.as_str()).collect();
    facilities.sort_unstable();
    facilities.dedup();
    let n_facilities = facilities.len();

    let class = if n_facilities > 2 {
        GroupClass::Excluded
    } else if records.len() == 2 {
        GroupClass::Class(classify_pair(&records[0], &records[1]))
    } else {
        GroupClass::Class(OverlapClass::UnknownMultipleEntries)
    };
    let code = if records.len() == 2 { Some(FourDigitCode::of(&records[0], &records[1])) } else { None };

    // Union of pairwise intersections. Components are tiny (the grouping is
    // what scales), so the quadratic pass here is fine.
    let mut pieces: Vec<(NaiveDate, NaiveDate)> = Vec::new();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            if let Some(iv) = intersection(&records[i], &records[j]) {
                pieces.push(iv);
            }
        }
    }
    pieces.sort_unstable();
    let mut duration_days = 0i64;
    let mut cur: Option<(NaiveDate, NaiveDate)> = None;
    for (lo, hi) in pieces {
        match &mut cur {
            Some((_, ce)) if lo <= *ce => *ce = (*ce).max(hi),
            _ => {
                if let Some((cs, ce)) = cur.take() {
                    duration_days += days_inclusive(cs, ce);
                }
                cur = Some((lo, hi));
            }
        }
    }
    if let Some((cs, ce)) = cur {
        duration_days += days_inclusive(cs, ce);
    }

    let mut states: Vec<State> = records.iter().map(|r| r.state).collect();
    states.sort_unstable();
    states.dedup();

    OverlapGroup { patient: patient.to_string(), records, n_facilities, class, code, duration_days, states }
}

/// Finds all overlap groups of one patient.
///
/// Sweep over the chronologically sorted stays: a record joins the current
/// component while its admission does not pass the running maximum
/// discharge. For closed day intervals this connectivity is exactly the
/// transitive closure of pairwise intersection. Single-record components are
/// not overlaps and are dropped.
pub fn detect_overlap_groups(group: &PatientGroup) -> Vec<OverlapGroup> {
    let recs = &group.records;
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut max_discharge = match recs.first() {
        Some(r) => r.discharge,
        None => return out,
    };
    for i in 1..=recs.len() {
        if i < recs.len() && recs[i].admission <= max_discharge {
            max_discharge = max_discharge.max(recs[i].discharge);
            continue;
        }
        if i - start >= 2 {
            out.push(build_group(&group.patient, recs[start..i].to_vec()));
        }
        if i < recs.len() {
            start = i;
            max_discharge = recs[i].discharge;
        }
    }
    out
}
