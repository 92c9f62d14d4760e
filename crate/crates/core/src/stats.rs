//! Descriptive statistics: per-state summaries, histograms, 16x16 state
//! matrices and occupancy estimates.
//!
//! Two day-count conventions coexist on purpose and are used consistently:
//!
//! * **occupancy** counts calendar days covered by a stay, closed interval,
//!   so a same-day stay occupies one day and Jan 1 - Jan 5 occupies five;
//! * **length of stay** is discharge minus admission in days with a floor of
//!   one, so the same Jan 1 - Jan 5 stay has LOS 4. Time at home between two
//!   admissions is likewise next admission minus previous discharge.
//!
//! Daily censuses divide occupied days by the window length; length-of-stay
//! averages divide LOS sums by stay counts.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::dates::{days_inclusive, DayRange};
use crate::episodes::{
    transfers_in_group, HospitalizationStats, TransferEvent, TransferKind,
};
use crate::overlaps::{detect_overlap_groups, FourDigitCode, GroupClass, OverlapClass, OverlapGroup};
use crate::records::{Interner, PatientGroup, StayRecord};
use crate::states::{State, ALL_STATES, N_STATES};
use crate::{icd, Error, Result};

/// Length of stay in days: discharge minus admission, floored at one day.
pub fn length_of_stay(r: &StayRecord) -> i64 {
    (r.discharge - r.admission).num_days().max(1)
}

/// Sums occupied days per key over interval streams (closed intervals,
/// clipped to the window). Exact integer arithmetic; divide by
/// `window.len_days()` for the average daily census.
pub fn census_day_sums<K: Ord, I>(intervals: I, window: &DayRange) -> BTreeMap<K, u64>
where
    I: IntoIterator<Item = (K, NaiveDate, NaiveDate)>,
{
    let mut sums = BTreeMap::new();
    for (key, a, b) in intervals {
        if let Some((lo, hi)) = window.clip(a, b) {
            *sums.entry(key).or_insert(0) += days_inclusive(lo, hi) as u64;
        }
    }
    sums
}

/// Average number of concurrent stays per day over the window.
pub fn avg_daily_census<K: Ord, I>(intervals: I, window: &DayRange) -> Result<BTreeMap<K, f64>>
where
    I: IntoIterator<Item = (K, NaiveDate, NaiveDate)>,
{
    let len = window.len_days();
    if len <= 0 {
        return Err(Error::Contract("census over an empty window".into()));
    }
    Ok(census_day_sums(intervals, window)
        .into_iter()
        .map(|(k, days)| (k, days as f64 / len as f64))
        .collect())
}

pub const LOG_DECADE_LABELS: [&str; 6] =
    ["1-9", "10-99", "100-999", "1000-9999", "10000-99999", ">=100000"];

/// Binning for count histograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinSpec {
    /// Six decade bins, 1-9 up to >= 100000 (facility size distributions).
    LogDecade,
    /// One bin per integer value (durations in days).
    UnitDays,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub spec: BinSpec,
    /// (lower bound of bin, count); for `LogDecade` the six powers of ten,
    /// for `UnitDays` each observed value.
    pub bins: Vec<(i64, u64)>,
    pub total: u64,
}

impl Histogram {
    pub fn build<I: IntoIterator<Item = i64>>(values: I, spec: BinSpec) -> Result<Histogram> {
        let mut map: BTreeMap<i64, u64> = BTreeMap::new();
        let mut total = 0u64;
        for v in values {
            if v < 1 {
                return Err(Error::Contract(format!("histogram value {v} below the smallest bin")));
            }
            let bin = match spec {
                BinSpec::UnitDays => v,
                BinSpec::LogDecade => {
                    let mut lo = 1i64;
                    while lo <= 10_000 && v >= lo * 10 {
                        lo *= 10;
                    }
                    lo
                }
            };
            *map.entry(bin).or_insert(0) += 1;
            total += 1;
        }
        Ok(Histogram { spec, bins: map.into_iter().collect(), total })
    }

    pub fn label(&self, lower: i64) -> String {
        match self.spec {
            BinSpec::UnitDays => lower.to_string(),
            BinSpec::LogDecade => {
                let idx = (lower as f64).log10() as usize;
                LOG_DECADE_LABELS[idx.min(5)].to_string()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// Patients with records in both states; symmetric, diagonal = patients
    /// with any record in the state.
    SharedPatients,
    DirectTransfers,
    IndirectTransfers,
    /// Two-record overlaps: earlier record's state to later record's state.
    OverlapOriginDestination,
}

/// Dense 16x16 counter matrix in the fixed state order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMatrix {
    pub kind: MatrixKind,
    pub cells: [[u64; N_STATES]; N_STATES],
}

impl StateMatrix {
    pub fn new(kind: MatrixKind) -> StateMatrix {
        StateMatrix { kind, cells: [[0; N_STATES]; N_STATES] }
    }

    pub fn add(&mut self, from: State, to: State, n: u64) {
        self.cells[from.index()][to.index()] += n;
    }

    pub fn get(&self, from: State, to: State) -> u64 {
        self.cells[from.index()][to.index()]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..N_STATES).all(|i| (0..N_STATES).all(|j| self.cells[i][j] == self.cells[j][i]))
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }
}

/// Integer percentages of transfers leaving each state, `None` for states
/// without outgoing transfers. `counts[i][j]` = transfers from state i to j.
pub fn interstate_percentages(counts: &[[u64; N_STATES]; N_STATES]) -> [Option<i64>; N_STATES] {
    let mut out = [None; N_STATES];
    for (i, row) in counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total > 0 {
            let leaving = total - row[i];
            out[i] = Some((100.0 * leaving as f64 / total as f64).round() as i64);
        }
    }
    out
}

/// Transfer counts for one row of the per-state transfer table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransferCounts {
    pub all: u64,
    pub direct: u64,
    pub indirect_all: u64,
    pub indirect_auto: u64,
    pub indirect_other: u64,
}

impl TransferCounts {
    fn add_kind(&mut self, kind: TransferKind) {
        self.all += 1;
        match kind {
            TransferKind::Direct => self.direct += 1,
            TransferKind::IndirectAuto => {
                self.indirect_all += 1;
                self.indirect_auto += 1;
            }
            TransferKind::IndirectOther => {
                self.indirect_all += 1;
                self.indirect_other += 1;
            }
        }
    }
}

/// Row index for tables that keep intra-state rows plus one "between states"
/// row: 0..16 the states, 16 the between row.
pub const BETWEEN: usize = N_STATES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsOptions {
    /// Merge one-day-overlap transfer shapes (standard, first day, last day)
    /// into the direct-transfer totals of the transfer table.
    pub count_overlap_transfers_as_direct: bool,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions { count_overlap_transfers_as_direct: true }
    }
}

/// Everything the descriptive tables need, accumulated in one pass over the
/// patient stream. All counters are integers, so merge order and worker
/// counts cannot change any output.
#[derive(Debug)]
pub struct StatsAccumulator {
    pub window: DayRange,
    pub options: StatsOptions,

    pub facilities: Interner,
    fac_state: Vec<State>,
    fac_admissions: Vec<u64>,
    fac_patients: Vec<u64>,
    fac_census_days: Vec<u64>,
    soc_census_days: Vec<u64>,

    pub state_admissions: [u64; N_STATES],
    state_los_sum: [u64; N_STATES],
    state_los_n: [u64; N_STATES],
    state_gap_sum: [u64; N_STATES],
    state_gap_n: [u64; N_STATES],

    pub hosp_stats: HospitalizationStats,
    /// (birth year or None, sex) patient counts.
    pub population: BTreeMap<Option<i16>, [u64; 3]>,
    /// Number of distinct states a patient appears in -> patients.
    pub states_per_patient: BTreeMap<u64, u64>,

    pub shared_patients: StateMatrix,
    pub direct_transfers: StateMatrix,
    pub indirect_transfers: StateMatrix,
    pub overlap_matrix: StateMatrix,
    pub all_transfers: [[u64; N_STATES]; N_STATES],

    /// 16 intra-state rows + the between-states row.
    pub transfer_table: [TransferCounts; N_STATES + 1],

    /// LOS in days -> stays, per state.
    pub los_hist: Vec<BTreeMap<i64, u64>>,
    /// Home-gap days -> pairs, per state (intra-state indirect pairs).
    pub gap_hist: Vec<BTreeMap<i64, u64>>,
    /// Overlap duration days -> groups, per state row + between.
    pub overlap_duration_hist: Vec<BTreeMap<i64, u64>>,

    /// class counts per state row + between (non-excluded groups).
    pub taxonomy: Vec<[u64; 9]>,
    /// four-digit code counts per state row + between (two-record groups).
    pub code_table: Vec<[u64; 16]>,
    pub code_totals: [u64; 16],
    /// (code index, chapter pair (lo, hi)) -> two-record groups.
    pub code_chapter_pairs: BTreeMap<(usize, u8, u8), u64>,

    pub n_overlap_groups: u64,
    pub n_excluded_groups: u64,
    pub n_records: u64,
    pub n_patients: u64,
}

impl StatsAccumulator {
    pub fn new(window: DayRange, options: StatsOptions) -> StatsAccumulator {
        StatsAccumulator {
            window,
            options,
            facilities: Interner::new(),
            fac_state: Vec::new(),
            fac_admissions: Vec::new(),
            fac_patients: Vec::new(),
            fac_census_days: Vec::new(),
            soc_census_days: Vec::new(),
            state_admissions: [0; N_STATES],
            state_los_sum: [0; N_STATES],
            state_los_n: [0; N_STATES],
            state_gap_sum: [0; N_STATES],
            state_gap_n: [0; N_STATES],
            hosp_stats: HospitalizationStats::new(),
            population: BTreeMap::new(),
            states_per_patient: BTreeMap::new(),
            shared_patients: StateMatrix::new(MatrixKind::SharedPatients),
            direct_transfers: StateMatrix::new(MatrixKind::DirectTransfers),
            indirect_transfers: StateMatrix::new(MatrixKind::IndirectTransfers),
            overlap_matrix: StateMatrix::new(MatrixKind::OverlapOriginDestination),
            all_transfers: [[0; N_STATES]; N_STATES],
            transfer_table: [TransferCounts::default(); N_STATES + 1],
            los_hist: vec![BTreeMap::new(); N_STATES],
            gap_hist: vec![BTreeMap::new(); N_STATES],
            overlap_duration_hist: vec![BTreeMap::new(); N_STATES + 1],
            taxonomy: vec![[0; 9]; N_STATES + 1],
            code_table: vec![[0; 16]; N_STATES + 1],
            code_totals: [0; 16],
            code_chapter_pairs: BTreeMap::new(),
            n_overlap_groups: 0,
            n_excluded_groups: 0,
            n_records: 0,
            n_patients: 0,
        }
    }

    fn fac_handle(&mut self, r: &StayRecord) -> usize {
        let h = self.facilities.intern(&r.facility) as usize;
        if h == self.fac_state.len() {
            self.fac_state.push(r.state);
            self.fac_admissions.push(0);
            self.fac_patients.push(0);
            self.fac_census_days.push(0);
            self.soc_census_days.push(0);
        }
        h
    }

    /// Feeds one patient: their records plus the events and overlap groups
    /// already derived from them.
    pub fn add_group(&mut self, group: &PatientGroup, events: &[TransferEvent], ogroups: &[OverlapGroup]) {
        self.n_patients += 1;
        self.hosp_stats.record_group(group);

        // Patient-level attributes come from the first record.
        let sex = group.records[0].sex;
        let sex_i = match sex {
            crate::records::Sex::Female => 0,
            crate::records::Sex::Male => 1,
            crate::records::Sex::Unknown => 2,
        };
        self.population.entry(group.records[0].birth_year).or_insert([0; 3])[sex_i] += 1;

        let mut patient_states: Vec<State> = Vec::new();
        let mut patient_facs: Vec<usize> = Vec::new();
        for r in &group.records {
            self.n_records += 1;
            let h = self.fac_handle(r);
            self.fac_admissions[h] += 1;
            if let Some((lo, hi)) = self.window.clip(r.admission, r.discharge) {
                self.fac_census_days[h] += days_inclusive(lo, hi) as u64;
            }
            let s = r.state.index();
            self.state_admissions[s] += 1;
            let los = length_of_stay(r);
            self.state_los_sum[s] += los as u64;
            self.state_los_n[s] += 1;
            *self.los_hist[s].entry(los).or_insert(0) += 1;
            if !patient_states.contains(&r.state) {
                patient_states.push(r.state);
            }
            if !patient_facs.contains(&h) {
                patient_facs.push(h);
            }
        }
        for &h in &patient_facs {
            self.fac_patients[h] += 1;
        }
        patient_states.sort_unstable();
        *self.states_per_patient.entry(patient_states.len() as u64).or_insert(0) += 1;
        for (i, &a) in patient_states.iter().enumerate() {
            self.shared_patients.add(a, a, 1);
            for &b in &patient_states[i + 1..] {
                self.shared_patients.add(a, b, 1);
                self.shared_patients.add(b, a, 1);
            }
        }

        for ev in events {
            self.all_transfers[ev.from_state.index()][ev.to_state.index()] += 1;
            let row =
                if ev.from_state == ev.to_state { ev.from_state.index() } else { BETWEEN };
            self.transfer_table[row].add_kind(ev.kind);
            match ev.kind {
                TransferKind::Direct => self.direct_transfers.add(ev.from_state, ev.to_state, 1),
                TransferKind::IndirectAuto | TransferKind::IndirectOther => {
                    self.indirect_transfers.add(ev.from_state, ev.to_state, 1);
                    // Time at home: the days strictly between the stays go
                    // to the community of the discharging facility.
                    let home_from = ev.discharge + chrono::Days::new(1);
                    let home_to = ev.admission - chrono::Days::new(1);
                    // The discharging facility was interned while walking
                    // this group's records above.
                    if let Some(h) = self.facilities.get(&ev.from) {
                        if let Some((lo, hi)) = self.window.clip(home_from, home_to) {
                            self.soc_census_days[h as usize] += days_inclusive(lo, hi) as u64;
                        }
                    }
                    if ev.from_state == ev.to_state {
                        let s = ev.from_state.index();
                        self.state_gap_sum[s] += ev.gap_days as u64;
                        self.state_gap_n[s] += 1;
                        *self.gap_hist[s].entry(ev.gap_days).or_insert(0) += 1;
                    }
                }
            }
        }

        for og in ogroups {
            self.n_overlap_groups += 1;
            let class = match og.class {
                GroupClass::Excluded => {
                    self.n_excluded_groups += 1;
                    continue;
                }
                GroupClass::Class(c) => c,
            };
            let row = match og.uniform_state() {
                Some(s) => s.index(),
                None => BETWEEN,
            };
            self.taxonomy[row][class.index()] += 1;
            *self.overlap_duration_hist[row].entry(og.duration_days).or_insert(0) += 1;

            if og.records.len() == 2 {
                let code = og.code.expect("two-record groups carry a code");
                self.code_table[row][code.index()] += 1;
                self.code_totals[code.index()] += 1;
                let (a, b) = (&og.records[0], &og.records[1]);
                let mut pair = (icd::icd_chapter(&a.diagnosis), icd::icd_chapter(&b.diagnosis));
                if pair.0 > pair.1 {
                    pair = (pair.1, pair.0);
                }
                *self.code_chapter_pairs.entry((code.index(), pair.0, pair.1)).or_insert(0) += 1;

                if a.state != b.state {
                    self.overlap_matrix.add(a.state, b.state, 1);
                }
                if self.options.count_overlap_transfers_as_direct && class.is_transfer_like() {
                    let row = if a.state == b.state { a.state.index() } else { BETWEEN };
                    self.transfer_table[row].all += 1;
                    self.transfer_table[row].direct += 1;
                }
            }
        }
    }

    /// Admissions per facility within one state, for size histograms.
    pub fn facility_admission_counts(&self, state: State) -> Vec<i64> {
        self.per_facility(state, &self.fac_admissions)
    }

    pub fn facility_patient_counts(&self, state: State) -> Vec<i64> {
        self.per_facility(state, &self.fac_patients)
    }

    fn per_facility(&self, state: State, values: &[u64]) -> Vec<i64> {
        let mut out: Vec<i64> = Vec::new();
        for (h, &st) in self.fac_state.iter().enumerate() {
            if st == state {
                out.push(values[h] as i64);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn interstate_percentages(&self) -> [Option<i64>; N_STATES] {
        interstate_percentages(&self.all_transfers)
    }

    /// Transfer events seen (before any optional overlap merging).
    pub fn transfer_events_total(&self) -> u64 {
        self.all_transfers.iter().flatten().sum()
    }

    pub fn state_summaries(&self) -> Vec<StateSummary> {
        let window_len = self.window.len_days() as f64;
        ALL_STATES
            .iter()
            .map(|&state| {
                let s = state.index();
                let mut n_facilities = 0u64;
                let mut fac_days = 0u64;
                let mut soc_days = 0u64;
                for (h, &st) in self.fac_state.iter().enumerate() {
                    if st == state {
                        n_facilities += 1;
                        fac_days += self.fac_census_days[h];
                        soc_days += self.soc_census_days[h];
                    }
                }
                StateSummary {
                    state,
                    n_admissions: self.state_admissions[s],
                    n_facilities,
                    patients_female: self.hosp_stats.by_sex(state, crate::records::Sex::Female).n_patients(),
                    patients_male: self.hosp_stats.by_sex(state, crate::records::Sex::Male).n_patients(),
                    avg_census_facilities: fac_days as f64 / window_len,
                    avg_census_societies: soc_days as f64 / window_len,
                    avg_los_facility: ratio(self.state_los_sum[s], self.state_los_n[s]),
                    avg_los_society: ratio(self.state_gap_sum[s], self.state_gap_n[s]),
                }
            })
            .collect()
    }
}

fn ratio(sum: u64, n: u64) -> Option<f64> {
    if n == 0 {
        None
    } else {
        Some(sum as f64 / n as f64)
    }
}

/// Per-state roll-up (admissions, facilities, patients, censuses, averages).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSummary {
    pub state: State,
    pub n_admissions: u64,
    pub n_facilities: u64,
    pub patients_female: u64,
    pub patients_male: u64,
    /// Average daily number of concurrent stays in the state's facilities.
    pub avg_census_facilities: f64,
    /// Average daily number of patients at home between two stays,
    /// attributed to the discharging facility's community.
    pub avg_census_societies: f64,
    pub avg_los_facility: Option<f64>,
    pub avg_los_society: Option<f64>,
}

/// One-call wrapper: walks a patient stream and produces the per-state
/// summaries with default options.
pub fn summarize_states<I>(groups: I, window: DayRange) -> Result<Vec<StateSummary>>
where
    I: IntoIterator<Item = Result<PatientGroup>>,
{
    let mut acc = StatsAccumulator::new(window, StatsOptions::default());
    for g in groups {
        let g = g?;
        let events = transfers_in_group(&g);
        let ogroups = detect_overlap_groups(&g);
        acc.add_group(&g, &events, &ogroups);
    }
    Ok(acc.state_summaries())
}

/// Formats an average with one decimal place.
pub fn fmt1(x: f64) -> String {
    format!("{x:.1}")
}

/// Formats a median: integers without decimals, halves as ".5".
pub fn fmt_median(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.1}")
    }
}

/// Renders an optional statistic, "-" when undefined.
pub fn fmt_opt(x: Option<String>) -> String {
    x.unwrap_or_else(|| "-".to_string())
}

pub fn code_label(index: usize) -> String {
    FourDigitCode::from_index(index).label()
}

pub fn class_label(index: usize) -> &'static str {
    OverlapClass::ALL[index].label()
}
