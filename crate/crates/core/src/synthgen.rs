//! Synthetic cohort generator.
//!
//! Produces stay tables with the same shape as real claims extracts: an
//! alternating stay/home renewal process per patient, occasional direct
//! transfer chains, and optionally injected overlapping record groups of
//! every taxonomy class. Injections are written to a manifest
//! (`patient_id<TAB>class`) so detectors can be checked against a known
//! ground truth.
//!
//! Determinism contract: the same config produces byte-identical output.
//! Every patient draws from an independent substream keyed by (seed, patient
//! index), so output does not depend on scheduling and a cohort can be
//! regenerated piecewise.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dates::DayRange;
use crate::overlaps::OverlapClass;
use crate::records::{Sex, StayRecord, HEADER};
use crate::states::{State, ALL_STATES, N_STATES};
use crate::{Error, Result};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic generator: ChaCha8 keyed by a 64-bit seed. Not for
/// cryptography; chosen for speed, quality and a stable cross-platform
/// stream.
pub struct Prng {
    inner: ChaCha8Rng,
}

impl Prng {
    pub fn seed(seed: u64) -> Prng {
        Prng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream for substream `index` of `seed`. Mixing both
    /// through splitmix64 keeps nearby indices uncorrelated.
    pub fn substream(seed: u64, index: u64) -> Prng {
        Prng::seed(splitmix64(seed ^ splitmix64(index.wrapping_add(1))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from 0..n via multiply-shift. The bias of at most
    /// n / 2^64 is irrelevant at our ranges.
    pub fn range(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.f64() < p
    }

    /// Exponential with the given mean.
    pub fn exp(&mut self, mean: f64) -> f64 {
        -mean * (1.0 - self.f64()).ln()
    }

    /// Failures before the first success at probability `p`.
    pub fn geometric(&mut self, p: f64) -> u64 {
        if p >= 1.0 {
            return 0;
        }
        let u = self.f64();
        ((1.0 - u).ln() / (1.0 - p).ln()).floor() as u64
    }
}

/// Injection rates per 1000 generated stays, indexed like
/// `OverlapClass::ALL`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapRates(pub [f64; 9]);

impl Default for OverlapRates {
    fn default() -> Self {
        // Heavily tilted towards one-day handovers, like real extracts.
        OverlapRates([18.0, 0.6, 0.6, 6.0, 3.0, 1.5, 1.0, 3.0, 1.5])
    }
}

impl OverlapRates {
    pub fn rate(&self, class: OverlapClass) -> f64 {
        self.0[class.index()]
    }
}

pub const DEFAULT_FACILITIES_PER_STATE: [u32; N_STATES] =
    [72, 52, 44, 32, 25, 17, 16, 15, 12, 10, 9, 9, 7, 7, 4, 3];

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_patients: u64,
    /// Facilities per state in the fixed state order; also the patient
    /// weight of each state.
    pub facilities_per_state: [u32; N_STATES],
    pub window: DayRange,
    /// Mean length of stay in days (discharge minus admission).
    pub mean_los_days: f64,
    /// Mean days between discharge and the next admission. Drawn from a
    /// two-component exponential mixture (means 60 and 400), weighted to hit
    /// this value, so short readmissions and long quiet phases both occur.
    pub mean_home_gap_days: f64,
    /// Probability that a discharge continues as a next-day admission.
    pub p_direct_transfer: f64,
    /// Probability that a readmission after a home phase returns to the same
    /// facility.
    pub p_auto_readmission: f64,
    /// Probability that a transfer or readmission crosses a state border.
    pub interstate_rate: f64,
    pub overlap_per_1000: OverlapRates,
}

const GAP_MIX_SHORT: f64 = 60.0;
const GAP_MIX_LONG: f64 = 400.0;
const MAX_LOS_DAYS: u64 = 400;

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 42,
            n_patients: 10_000,
            facilities_per_state: DEFAULT_FACILITIES_PER_STATE,
            window: DayRange::new(
                NaiveDate::from_ymd_opt(2013, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2018, 8, 31).unwrap(),
            )
            .unwrap(),
            mean_los_days: 8.7,
            mean_home_gap_days: 270.0,
            p_direct_transfer: 0.08,
            p_auto_readmission: 0.5,
            interstate_rate: 0.09,
            overlap_per_1000: OverlapRates::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let check_p = |name: &str, p: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
            Ok(())
        };
        check_p("p_direct_transfer", self.p_direct_transfer)?;
        check_p("p_auto_readmission", self.p_auto_readmission)?;
        check_p("interstate_rate", self.interstate_rate)?;
        if !(self.mean_los_days >= 1.0) {
            return Err(Error::Config(format!(
                "mean_los_days must be at least 1, got {}",
                self.mean_los_days
            )));
        }
        if !(GAP_MIX_SHORT..=GAP_MIX_LONG).contains(&self.mean_home_gap_days) {
            return Err(Error::Config(format!(
                "mean_home_gap_days must lie in [{GAP_MIX_SHORT}, {GAP_MIX_LONG}], got {}",
                self.mean_home_gap_days
            )));
        }
        for (i, &r) in self.overlap_per_1000.0.iter().enumerate() {
            if !(0.0..=1000.0).contains(&r) {
                return Err(Error::Config(format!(
                    "overlap_per_1000.{} must lie in [0, 1000], got {r}",
                    OverlapClass::ALL[i].label()
                )));
            }
        }
        if self.n_patients > 0 && self.total_facilities() == 0 {
            return Err(Error::Config("cannot place patients without facilities".into()));
        }
        Ok(())
    }

    pub fn total_facilities(&self) -> u64 {
        self.facilities_per_state.iter().map(|&c| c as u64).sum()
    }

    /// First global facility index of each state.
    fn state_bases(&self) -> [u32; N_STATES] {
        let mut bases = [0u32; N_STATES];
        let mut acc = 0;
        for (i, &c) in self.facilities_per_state.iter().enumerate() {
            bases[i] = acc;
            acc += c;
        }
        bases
    }

    pub fn facility_name(global_index: u32) -> String {
        format!("f{global_index:04}")
    }

    /// Applies `key=value` lines (# starts a comment) on top of the
    /// defaults. Unknown keys are rejected rather than ignored.
    pub fn from_kv_text(text: &str) -> Result<GeneratorConfig> {
        let mut cfg = GeneratorConfig::default();
        let mut window_start = cfg.window.start;
        let mut window_end = cfg.window.end;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Config(format!("line {}: bad {what}: {value:?}", lineno + 1));
            match key {
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                "n_patients" => cfg.n_patients = value.parse().map_err(|_| bad("integer"))?,
                "facilities_per_state" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != N_STATES {
                        return Err(bad("16-entry facility list"));
                    }
                    for (i, p) in parts.iter().enumerate() {
                        cfg.facilities_per_state[i] = p.parse().map_err(|_| bad("integer list"))?;
                    }
                }
                "window_start" => {
                    window_start = crate::dates::parse_iso(value).ok_or_else(|| bad("date"))?
                }
                "window_end" => {
                    window_end = crate::dates::parse_iso(value).ok_or_else(|| bad("date"))?
                }
                "mean_los_days" => cfg.mean_los_days = value.parse().map_err(|_| bad("number"))?,
                "mean_home_gap_days" => {
                    cfg.mean_home_gap_days = value.parse().map_err(|_| bad("number"))?
                }
                "p_direct_transfer" => {
                    cfg.p_direct_transfer = value.parse().map_err(|_| bad("number"))?
                }
                "p_auto_readmission" => {
                    cfg.p_auto_readmission = value.parse().map_err(|_| bad("number"))?
                }
                "interstate_rate" => {
                    cfg.interstate_rate = value.parse().map_err(|_| bad("number"))?
                }
                _ => {
                    if let Some(label) = key.strip_prefix("overlap_per_1000.") {
                        let class = OverlapClass::parse(label).ok_or_else(|| {
                            Error::Config(format!("line {}: unknown overlap class {label:?}", lineno + 1))
                        })?;
                        cfg.overlap_per_1000.0[class.index()] =
                            value.parse().map_err(|_| bad("number"))?;
                    } else {
                        return Err(Error::Config(format!(
                            "line {}: unknown key {key:?}",
                            lineno + 1
                        )));
                    }
                }
            }
        }
        cfg.window = DayRange::new(window_start, window_end)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<GeneratorConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GeneratorConfig::from_kv_text(&text)
    }

    /// Round-trippable serialization with a fixed key order; also the input
    /// to config fingerprints.
    pub fn canonical_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "n_patients={}", self.n_patients);
        let list: Vec<String> =
            self.facilities_per_state.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "facilities_per_state={}", list.join(","));
        let _ = writeln!(s, "window_start={}", crate::dates::iso(self.window.start));
        let _ = writeln!(s, "window_end={}", crate::dates::iso(self.window.end));
        let _ = writeln!(s, "mean_los_days={}", self.mean_los_days);
        let _ = writeln!(s, "mean_home_gap_days={}", self.mean_home_gap_days);
        let _ = writeln!(s, "p_direct_transfer={}", self.p_direct_transfer);
        let _ = writeln!(s, "p_auto_readmission={}", self.p_auto_readmission);
        let _ = writeln!(s, "interstate_rate={}", self.interstate_rate);
        for (i, class) in OverlapClass::ALL.iter().enumerate() {
            let _ = writeln!(s, "overlap_per_1000.{}={}", class.label(), self.overlap_per_1000.0[i]);
        }
        s
    }
}

const DIAGNOSES: [&str; 30] = [
    "A09", "A41.9", "B34.9", "C34.1", "C50.9", "D50.0", "E11.9", "F10.2", "F32.1", "G40.9",
    "H25.1", "I21.0", "I50.1", "I63.5", "J18.9", "J44.1", "K35.8", "K80.2", "L03.1", "M16.1",
    "N39.0", "O80", "P07.1", "Q21.0", "R55", "S72.0", "T84.0", "U07.1", "Z38.0", "M54.5",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenSummary {
    pub n_patients: u64,
    pub n_records: u64,
    pub n_injected: u64,
    pub injected_per_class: [u64; 9],
}

struct Cohort<'a> {
    cfg: &'a GeneratorConfig,
    bases: [u32; N_STATES],
    /// States with at least one facility.
    peopled: Vec<State>,
}

impl<'a> Cohort<'a> {
    fn new(cfg: &'a GeneratorConfig) -> Cohort<'a> {
        let peopled = ALL_STATES
            .iter()
            .copied()
            .filter(|s| cfg.facilities_per_state[s.index()] > 0)
            .collect();
        Cohort { cfg, bases: cfg.state_bases(), peopled }
    }

    fn random_state(&self, rng: &mut Prng) -> State {
        // Weight states by facility count.
        let mut pick = rng.range(self.cfg.total_facilities());
        for s in &self.peopled {
            let c = self.cfg.facilities_per_state[s.index()] as u64;
            if pick < c {
                return *s;
            }
            pick -= c;
        }
        unreachable!("weights sum to total_facilities");
    }

    fn random_facility_in(&self, rng: &mut Prng, state: State) -> u32 {
        let s = state.index();
        self.bases[s] + rng.range(self.cfg.facilities_per_state[s] as u64) as u32
    }

    fn state_of(&self, facility: u32) -> State {
        for s in (0..N_STATES).rev() {
            if facility >= self.bases[s] && self.cfg.facilities_per_state[s] > 0 {
                if facility < self.bases[s] + self.cfg.facilities_per_state[s] {
                    return State::from_index(s).unwrap();
                }
            }
        }
        unreachable!("facility index out of range")
    }

    /// Next destination from `from`, crossing a border with the configured
    /// rate when another state is available.
    fn destination(&self, rng: &mut Prng, from: u32, force_other_facility: bool) -> Option<u32> {
        let home = self.state_of(from);
        let others: Vec<State> = self.peopled.iter().copied().filter(|&s| s != home).collect();
        let state = if !others.is_empty() && rng.bernoulli(self.cfg.interstate_rate) {
            others[rng.range(others.len() as u64) as usize]
        } else {
            home
        };
        if !force_other_facility || state != home {
            return Some(self.random_facility_in(rng, state));
        }
        // Need a facility other than `from` in the home state; fall back to
        // any other facility at all.
        let n_home = self.cfg.facilities_per_state[home.index()] as u64;
        if n_home > 1 {
            let mut f = self.random_facility_in(rng, home);
            while f == from {
                f = self.random_facility_in(rng, home);
            }
            return Some(f);
        }
        let total = self.cfg.total_facilities();
        if total > 1 {
            let mut g = rng.range(total) as u32;
            while g == from {
                g = rng.range(total) as u32;
            }
            return Some(g);
        }
        None
    }

    fn los(&self, rng: &mut Prng) -> u64 {
        (1 + rng.geometric(1.0 / self.cfg.mean_los_days)).min(MAX_LOS_DAYS)
    }

    fn home_gap(&self, rng: &mut Prng) -> u64 {
        let w = (self.cfg.mean_home_gap_days - GAP_MIX_SHORT) / (GAP_MIX_LONG - GAP_MIX_SHORT);
        let mean = if rng.bernoulli(w) { GAP_MIX_LONG } else { GAP_MIX_SHORT };
        (rng.exp(mean).round() as i64).max(2) as u64
    }

    fn record(
        &self,
        rng: &mut Prng,
        patient: &str,
        facility: u32,
        admission: NaiveDate,
        discharge: NaiveDate,
        sex: Sex,
        birth_year: Option<i16>,
    ) -> StayRecord {
        StayRecord {
            patient: patient.to_string(),
            facility: GeneratorConfig::facility_name(facility),
            state: self.state_of(facility),
            admission,
            discharge,
            diagnosis: DIAGNOSES[rng.range(DIAGNOSES.len() as u64) as usize].to_string(),
            sex,
            birth_year,
        }
    }

    /// Base renewal process: stays inside the window, direct chains with
    /// next-day admissions, home phases of at least two days otherwise.
    /// Returned stays never overlap, so every overlap in the final table
    /// comes from an injection.
    fn base_stays(&self, rng: &mut Prng, patient: &str) -> Vec<StayRecord> {
        let w = &self.cfg.window;
        let sex = match rng.f64() {
            x if x < 0.52 => Sex::Female,
            x if x < 0.99 => Sex::Male,
            _ => Sex::Unknown,
        };
        let birth_year =
            if rng.bernoulli(0.02) { None } else { Some(1925 + rng.range(88) as i16) };

        let mut stays = Vec::new();
        let home_state = self.random_state(rng);
        let mut facility = self.random_facility_in(rng, home_state);
        let mut admission = w.start + Days::new(rng.range(w.len_days() as u64));
        loop {
            let discharge = (admission + Days::new(self.los(rng))).min(w.end);
            stays.push(self.record(rng, patient, facility, admission, discharge, sex, birth_year));
            let (gap, force_other, same_ok) = if rng.bernoulli(self.cfg.p_direct_transfer) {
                (1, true, false)
            } else if rng.bernoulli(self.cfg.p_auto_readmission) {
                (self.home_gap(rng), false, true)
            } else {
                (self.home_gap(rng), true, false)
            };
            admission = discharge + Days::new(gap);
            if admission > w.end {
                break;
            }
            facility = if same_ok {
                facility
            } else {
                match self.destination(rng, facility, force_other) {
                    Some(f) => f,
                    None => break,
                }
            };
        }
        stays
    }

    /// A facility other than `not`, preferring the same state.
    fn partner_facility(&self, rng: &mut Prng, not: u32) -> Option<u32> {
        self.destination(rng, not, true)
    }

    /// Injects at most one overlap group per base stay. Partner records stay
    /// clear of the neighbouring stays, so the detector must recover exactly
    /// one group per manifest line.
    fn inject(
        &self,
        rng: &mut Prng,
        stays: &[StayRecord],
        out: &mut Vec<StayRecord>,
        classes: &mut Vec<OverlapClass>,
    ) {
        for (i, host) in stays.iter().enumerate() {
            out.push(host.clone());
            let class = match OverlapClass::ALL
                .iter()
                .find(|c| rng.bernoulli(self.cfg.overlap_per_1000.rate(**c) / 1000.0))
            {
                Some(&c) => c,
                None => continue,
            };
            // Partners may extend at most to the day before the next
            // admission (or the window end), keeping components apart.
            let room_end = match stays.get(i + 1) {
                Some(next) => next.admission - Days::new(1),
                None => self.cfg.window.end,
            };
            let host_idx = host.facility[1..].parse::<u32>().expect("generated name");
            let los = (host.discharge - host.admission).num_days();

            let partners: Vec<(u32, NaiveDate, NaiveDate)> = match class {
                OverlapClass::StandardTransfer => match self.partner_facility(rng, host_idx) {
                    Some(f) if host.discharge < room_end => {
                        let span = (room_end - host.discharge).num_days() as u64;
                        let dis = host.discharge + Days::new(1 + rng.range(span.min(5)));
                        vec![(f, host.discharge, dis)]
                    }
                    _ => vec![],
                },
                // The three shapes below need a host of at least two days;
                // stays clipped to one day by the window end would collapse
                // them into simultaneous (or inverted) intervals.
                OverlapClass::FirstDayTransfer => match self.partner_facility(rng, host_idx) {
                    Some(f) if los >= 1 => vec![(f, host.admission, host.admission)],
                    _ => vec![],
                },
                OverlapClass::LastDayTransfer => match self.partner_facility(rng, host_idx) {
                    Some(f) if los >= 1 => vec![(f, host.discharge, host.discharge)],
                    _ => vec![],
                },
                OverlapClass::TemporaryTransfer => match self.partner_facility(rng, host_idx) {
                    Some(f) if los >= 2 => {
                        let a = 1 + rng.range((los - 1) as u64) as i64;
                        let b = a + rng.range((los - a) as u64) as i64;
                        vec![(f, host.admission + Days::new(a as u64), host.admission + Days::new(b as u64))]
                    }
                    _ => vec![],
                },
                OverlapClass::TwoEntriesSingleInstitution if los >= 1 => {
                    vec![(host_idx, host.admission + Days::new(1), host.discharge)]
                }
                OverlapClass::TwoEntriesSingleInstitution => vec![],
                OverlapClass::SimultaneousSingleInstitution => {
                    vec![(host_idx, host.admission, host.discharge)]
                }
                OverlapClass::SimultaneousTwoInstitutions => {
                    match self.partner_facility(rng, host_idx) {
                        Some(f) => vec![(f, host.admission, host.discharge)],
                        None => vec![],
                    }
                }
                OverlapClass::UnknownTwoInstitutions => match self.partner_facility(rng, host_idx) {
                    // Staggered multi-day overlap sticking out past the host.
                    Some(f) if los >= 2 && host.discharge < room_end => {
                        let span = (room_end - host.discharge).num_days() as u64;
                        let dis = host.discharge + Days::new(1 + rng.range(span.min(3)));
                        vec![(f, host.admission + Days::new(1), dis)]
                    }
                    _ => vec![],
                },
                OverlapClass::UnknownMultipleEntries => {
                    match self.partner_facility(rng, host_idx) {
                        Some(f) => vec![
                            (f, host.admission, host.discharge),
                            (f, host.admission, host.discharge),
                        ],
                        None => vec![],
                    }
                }
            };
            if partners.is_empty() {
                continue;
            }
            for (fac, adm, dis) in partners {
                out.push(self.record(rng, &host.patient, fac, adm, dis, host.sex, host.birth_year));
            }
            classes.push(class);
        }
    }

    fn patient(&self, index: u64) -> (Vec<StayRecord>, Vec<OverlapClass>) {
        let mut rng = Prng::substream(self.cfg.seed, index);
        let patient = format!("p{index:07}");
        let base = self.base_stays(&mut rng, &patient);
        let mut rows = Vec::with_capacity(base.len());
        let mut classes = Vec::new();
        self.inject(&mut rng, &base, &mut rows, &mut classes);
        (rows, classes)
    }
}

/// Streams the cohort as TSV (header first) and optionally the injection
/// manifest. Memory stays bounded by a single patient's records.
pub fn generate<W: Write>(
    cfg: &GeneratorConfig,
    records_out: &mut W,
    mut manifest_out: Option<&mut dyn Write>,
) -> Result<GenSummary> {
    cfg.validate()?;
    let cohort = Cohort::new(cfg);
    let mut summary = GenSummary::default();
    let to_io = |e: io::Error| Error::Format(format!("write failed: {e}"));

    records_out.write_all(HEADER.as_bytes()).map_err(to_io)?;
    records_out.write_all(b"\n").map_err(to_io)?;
    let mut line = String::new();
    for index in 0..cfg.n_patients {
        let (rows, classes) = cohort.patient(index);
        summary.n_patients += 1;
        summary.n_records += rows.len() as u64;
        for r in &rows {
            line.clear();
            r.push_tsv(&mut line);
            line.push('\n');
            records_out.write_all(line.as_bytes()).map_err(to_io)?;
        }
        for class in classes {
            summary.n_injected += 1;
            summary.injected_per_class[class.index()] += 1;
            if let Some(m) = manifest_out.as_mut() {
                line.clear();
                let _ = writeln!(line, "p{index:07}\t{}", class.label());
                m.write_all(line.as_bytes()).map_err(to_io)?;
            }
        }
    }
    Ok(summary)
}

/// In-memory convenience wrapper; returns the records plus the manifest as
/// (patient id, class) pairs.
pub fn generate_cohort(cfg: &GeneratorConfig) -> Result<(Vec<StayRecord>, Vec<(String, OverlapClass)>)> {
    cfg.validate()?;
    let cohort = Cohort::new(cfg);
    let mut records = Vec::new();
    let mut manifest = Vec::new();
    for index in 0..cfg.n_patients {
        let (rows, classes) = cohort.patient(index);
        records.extend(rows);
        for class in classes {
            manifest.push((format!("p{index:07}"), class));
        }
    }
    Ok((records, manifest))
}
