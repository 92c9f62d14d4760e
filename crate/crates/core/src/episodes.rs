//! Transfers between consecutive stays of one patient.
//!
//! With a patient's stays in chronological order, each consecutive pair
//! either overlaps in time (handled by the [`crate::overlaps`] module) or is
//! separated by a gap:
//!
//! * gap of exactly one day: the patient entered the next facility the day
//!   after discharge, a **direct** transfer;
//! * gap of two or more days back to the *same* facility: an **indirect
//!   auto** transfer (readmission);
//! * gap of two or more days to a *different* facility: an **indirect**
//!   transfer.
//!
//! The day counts come straight from the closed-interval convention: gap =
//! admission(next) - discharge(prev) in days, so gap 1 means "no day at
//! home" and gap 0 or less means the stay periods share at least one day.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::records::{PatientGroup, Sex, StayRecord};
use crate::states::{State, N_STATES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransferKind {
    Direct,
    IndirectAuto,
    IndirectOther,
}

impl TransferKind {
    pub fn label(self) -> &'static str {
        match self {
            TransferKind::Direct => "direct",
            TransferKind::IndirectAuto => "indirect_auto",
            TransferKind::IndirectOther => "indirect_other",
        }
    }
}

/// Outcome of looking at one consecutive pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairOutcome {
    /// Stay periods intersect; no transfer event is emitted for the pair.
    Overlapping,
    Transfer(TransferKind),
}

/// Classifies the gap between two consecutive stays of the same patient.
///
/// Contract: `prev` does not sort after `next` within the patient. Records
/// of different patients are a caller bug and produce an error.
pub fn classify_gap(prev: &StayRecord, next: &StayRecord) -> Result<PairOutcome> {
    if prev.patient != next.patient {
        return Err(Error::Contract(format!(
            "classify_gap across patients '{}' and '{}'",
            prev.patient, next.patient
        )));
    }
    debug_assert!(prev.cmp_within_patient(next) != std::cmp::Ordering::Greater);
    let gap = (next.admission - prev.discharge).num_days();
    Ok(if gap <= 0 {
        PairOutcome::Overlapping
    } else if gap == 1 {
        PairOutcome::Transfer(TransferKind::Direct)
    } else if prev.facility == next.facility {
        PairOutcome::Transfer(TransferKind::IndirectAuto)
    } else {
        PairOutcome::Transfer(TransferKind::IndirectOther)
    })
}

/// One patient movement between facilities (or back into the same one).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferEvent {
    pub patient: String,
    pub from: String,
    pub to: String,
    pub from_state: State,
    pub to_state: State,
    pub discharge: NaiveDate,
    pub admission: NaiveDate,
    pub gap_days: i64,
    pub kind: TransferKind,
}

impl TransferEvent {
    pub const HEADER: &'static str = "patient\tfrom\tto\tfrom_state\tto_state\tdischarge\tadmission\tgap\tkind";

    pub fn push_tsv(&self, out: &mut String) {
        out.push_str(&self.patient);
        out.push('\t');
        out.push_str(&self.from);
        out.push('\t');
        out.push_str(&self.to);
        out.push('\t');
        out.push_str(self.from_state.abbrev());
        out.push('\t');
        out.push_str(self.to_state.abbrev());
        out.push('\t');
        crate::dates::push_iso(out, self.discharge);
        out.push('\t');
        crate::dates::push_iso(out, self.admission);
        out.push('\t');
        out.push_str(&self.gap_days.to_string());
        out.push('\t');
        out.push_str(self.kind.label());
    }
}

/// Walks one patient's consecutive stay pairs: exactly one event per
/// non-overlapping pair, in chronological order.
pub fn transfers_in_group(group: &PatientGroup) -> Vec<TransferEvent> {
    let mut out = Vec::new();
    for pair in group.records.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        match classify_gap(prev, next).expect("group holds a single patient") {
            PairOutcome::Overlapping => {}
            PairOutcome::Transfer(kind) => out.push(TransferEvent {
                patient: prev.patient.clone(),
                from: prev.facility.clone(),
                to: next.facility.clone(),
                from_state: prev.state,
                to_state: next.state,
                discharge: prev.discharge,
                admission: next.admission,
                gap_days: (next.admission - prev.discharge).num_days(),
                kind,
            }),
        }
    }
    out
}

/// Stream adapter over patient groups.
pub fn detect_transfers<I>(groups: I) -> impl Iterator<Item = Result<TransferEvent>>
where
    I: IntoIterator<Item = Result<PatientGroup>>,
{
    groups.into_iter().flat_map(|g| match g {
        Ok(g) => transfers_in_group(&g).into_iter().map(Ok).collect::<Vec<_>>(),
        Err(e) => vec![Err(e)],
    })
}

/// A patient's stays per facility after merging time-intersecting entries,
/// plus the transfer events. Merged intervals never overlap within one
/// facility and are chronologically ordered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeTimeline {
    pub merged_stays: Vec<(String, NaiveDate, NaiveDate)>,
    pub transfers: Vec<TransferEvent>,
}

pub fn build_timeline(group: &PatientGroup) -> EpisodeTimeline {
    let mut per_facility: BTreeMap<&str, Vec<(NaiveDate, NaiveDate)>> = BTreeMap::new();
    for r in &group.records {
        per_facility.entry(&r.facility).or_default().push((r.admission, r.discharge));
    }
    let mut merged = Vec::new();
    for (fac, mut ivs) in per_facility {
        ivs.sort_unstable();
        let mut cur: Option<(NaiveDate, NaiveDate)> = None;
        for (a, b) in ivs {
            match &mut cur {
                Some((_, ce)) if a <= *ce => *ce = (*ce).max(b),
                _ => {
                    if let Some((cs, ce)) = cur.take() {
                        merged.push((fac.to_string(), cs, ce));
                    }
                    cur = Some((a, b));
                }
            }
        }
        if let Some((cs, ce)) = cur {
            merged.push((fac.to_string(), cs, ce));
        }
    }
    merged.sort_unstable_by(|x, y| (x.1, x.2, &x.0).cmp(&(y.1, y.2, &y.0)));
    EpisodeTimeline { merged_stays: merged, transfers: transfers_in_group(group) }
}

fn sex_idx(s: Sex) -> usize {
    match s {
        Sex::Female => 0,
        Sex::Male => 1,
        Sex::Unknown => 2,
    }
}

/// Frequency table of "stays per patient" values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StayTally {
    freq: BTreeMap<u64, u64>,
}

impl StayTally {
    pub fn add(&mut self, stays: u64) {
        *self.freq.entry(stays).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &StayTally) {
        for (&k, &v) in &other.freq {
            *self.freq.entry(k).or_insert(0) += v;
        }
    }

    pub fn n_patients(&self) -> u64 {
        self.freq.values().sum()
    }

    pub fn min(&self) -> Option<u64> {
        self.freq.keys().next().copied()
    }

    pub fn max(&self) -> Option<u64> {
        self.freq.keys().next_back().copied()
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.n_patients();
        if n == 0 {
            return None;
        }
        let total: u64 = self.freq.iter().map(|(k, v)| k * v).sum();
        Some(total as f64 / n as f64)
    }

    /// Median over the expanded multiset; halfway between the two middle
    /// values for even counts, so always an integer or integer + 0.5.
    pub fn median(&self) -> Option<f64> {
        let n = self.n_patients();
        if n == 0 {
            return None;
        }
        let lo_rank = (n - 1) / 2; // 0-based
        let hi_rank = n / 2;
        let mut seen = 0u64;
        let mut lo = None;
        let mut hi = None;
        for (&value, &count) in &self.freq {
            let end = seen + count;
            if lo.is_none() && lo_rank < end {
                lo = Some(value);
            }
            if hi_rank < end {
                hi = Some(value);
                break;
            }
            seen = end;
        }
        Some((lo? as f64 + hi? as f64) / 2.0)
    }
}

/// Stays-per-patient tallies, by state and sex. A patient contributes one
/// sample to every state they have records in (the count of their stays in
/// that state); sex is read off the patient's first record.
#[derive(Debug, Clone, Default)]
pub struct HospitalizationStats {
    tallies: Vec<[StayTally; 3]>,
}

impl HospitalizationStats {
    pub fn new() -> Self {
        HospitalizationStats { tallies: vec![Default::default(); N_STATES] }
    }

    pub fn record_group(&mut self, group: &PatientGroup) {
        debug_assert!(!group.records.is_empty());
        let sex = sex_idx(group.records[0].sex);
        let mut per_state = [0u64; N_STATES];
        for r in &group.records {
            per_state[r.state.index()] += 1;
        }
        for (i, &n) in per_state.iter().enumerate() {
            if n > 0 {
                self.tallies[i][sex].add(n);
            }
        }
    }

    pub fn merge(&mut self, other: &HospitalizationStats) {
        for (mine, theirs) in self.tallies.iter_mut().zip(&other.tallies) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                a.merge(b);
            }
        }
    }

    pub fn by_sex(&self, state: State, sex: Sex) -> &StayTally {
        &self.tallies[state.index()][sex_idx(sex)]
    }

    /// Combined tally over all sexes for one state.
    pub fn combined(&self, state: State) -> StayTally {
        let mut all = StayTally::default();
        for t in &self.tallies[state.index()] {
            all.merge(t);
        }
        all
    }
}

/// Builds the per-state/per-sex tallies from a patient stream.
pub fn count_hospitalization_stats<I>(groups: I) -> Result<HospitalizationStats>
where
    I: IntoIterator<Item = Result<PatientGroup>>,
{
    let mut stats = HospitalizationStats::new();
    for g in groups {
        stats.record_group(&g?);
    }
    Ok(stats)
}
