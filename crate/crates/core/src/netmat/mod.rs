//! Transfer probability matrix over hospital and community nodes.
//!
//! Nodes: hospitals come first in lexicographic facility order as rows
//! 0..n-1, each paired with a community node at n + its index (exported
//! files are 1-indexed). A hospital's community holds the patients at home
//! between a discharge there and their next admission anywhere.
//!
//! Row i encodes one day of a patient in node i: stay with probability
//! 1 - 1/L_i (L_i = mean length of stay in days), otherwise depart, with
//! destinations weighted by observed departure counts. Direct transfers go
//! hospital to hospital, everything indirect goes through the discharging
//! hospital's community, so community columns have exactly one off-diagonal
//! inflow and community-to-community entries cannot exist.
//!
//! Facilities are excluded before derivation when their community never
//! occurs (every departure direct) or when they pause for more than the
//! configured number of consecutive days. Exclusion drops the facility's
//! records, which re-chains other patients' stay pairs; the caller iterates
//! until no new zero-community facilities appear, so every surviving
//! hospital keeps at least one society discharge and the column invariant
//! holds structurally.

pub mod graph;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::dates::DayRange;
use crate::episodes::{classify_gap, PairOutcome, TransferKind};
use crate::records::{Interner, StayRecord};
use crate::states::{State, ALL_STATES};
use crate::stats::length_of_stay;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExclusionReason {
    /// No patient was ever observed at home after a discharge here.
    ZeroCommunity,
    /// A zero-activity streak longer than the policy allows.
    InactiveGap,
}

impl ExclusionReason {
    pub fn label(self) -> &'static str {
        match self {
            ExclusionReason::ZeroCommunity => "zero_community",
            ExclusionReason::InactiveGap => "inactive_gap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InactivityMode {
    /// Days with at least one patient in a bed count as active.
    Occupancy,
    /// Only admission days count as active (stricter).
    Admissions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExclusionPolicy {
    /// Longest tolerated run of inactive days, window edges included.
    pub inactivity_days: i64,
    pub mode: InactivityMode,
}

impl Default for ExclusionPolicy {
    fn default() -> Self {
        ExclusionPolicy { inactivity_days: 90, mode: InactivityMode::Occupancy }
    }
}

/// Per-facility activity bitmaps over the analysis window, the ingredients
/// of the inactivity exclusion.
#[derive(Debug)]
pub struct NodeInputs {
    pub window: DayRange,
    pub facilities: Interner,
    pub states: Vec<State>,
    words: usize,
    occupancy: Vec<Vec<u64>>,
    admissions: Vec<Vec<u64>>,
}

impl NodeInputs {
    pub fn new(window: DayRange) -> NodeInputs {
        let words = (window.len_days() as usize).div_ceil(64);
        NodeInputs {
            window,
            facilities: Interner::new(),
            states: Vec::new(),
            words,
            occupancy: Vec::new(),
            admissions: Vec::new(),
        }
    }

    pub fn add_record(&mut self, r: &StayRecord) {
        let h = self.facilities.intern(&r.facility) as usize;
        if h == self.states.len() {
            self.states.push(r.state);
            self.occupancy.push(vec![0; self.words]);
            self.admissions.push(vec![0; self.words]);
        }
        if let Some((lo, hi)) = self.window.clip(r.admission, r.discharge) {
            let (a, b) = (self.window.day_index(lo), self.window.day_index(hi));
            for day in a..=b {
                self.occupancy[h][day as usize / 64] |= 1 << (day % 64);
            }
        }
        if r.admission >= self.window.start && r.admission <= self.window.end {
            let day = self.window.day_index(r.admission);
            self.admissions[h][day as usize / 64] |= 1 << (day % 64);
        }
    }

    /// Longest run of inactive days, counting runs that touch the window
    /// edges, so a facility that only appears late is inactive from day one.
    fn longest_idle_run(&self, bits: &[u64]) -> i64 {
        let days = self.window.len_days();
        let mut longest = 0i64;
        let mut run = 0i64;
        for day in 0..days {
            if bits[day as usize / 64] >> (day % 64) & 1 == 0 {
                run += 1;
                longest = longest.max(run);
            } else {
                run = 0;
            }
        }
        longest
    }

    /// Facility names that violate the inactivity policy, sorted.
    pub fn inactive(&self, policy: &ExclusionPolicy) -> Vec<String> {
        let maps = match policy.mode {
            InactivityMode::Occupancy => &self.occupancy,
            InactivityMode::Admissions => &self.admissions,
        };
        let mut out: Vec<String> = maps
            .iter()
            .enumerate()
            .filter(|(_, bits)| self.longest_idle_run(bits) > policy.inactivity_days)
            .map(|(h, _)| self.facilities.name(h as u32).to_string())
            .collect();
        out.sort_unstable();
        out
    }

    /// (name, state) of every facility seen, sorted by name.
    pub fn all_facilities(&self) -> Vec<(String, State)> {
        let mut out: Vec<(String, State)> = (0..self.facilities.len())
            .map(|h| (self.facilities.name(h as u32).to_string(), self.states[h]))
            .collect();
        out.sort_unstable();
        out
    }
}

/// Departure flow between two nodes; the gap sum feeds community mean LOS.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairFlow {
    pub count: u64,
    pub gap_sum: u64,
}

/// Observed departures and stay lengths over the surviving facilities,
/// accumulated from one walk over (already filtered) patient records.
#[derive(Debug)]
pub struct MatrixInputs {
    pub hospitals: Vec<String>,
    pub states: Vec<State>,
    index: HashMap<String, u32>,
    pub los_sum: Vec<u64>,
    pub los_n: Vec<u64>,
    /// Hospital -> hospital next-day admissions.
    pub direct: BTreeMap<(u32, u32), u64>,
    /// Discharging hospital -> readmission hospital, through the community.
    pub indirect: BTreeMap<(u32, u32), PairFlow>,
    pub n_events: u64,
}

impl MatrixInputs {
    /// `hospitals`: the surviving (name, state) set; order does not matter.
    pub fn new(mut hospitals: Vec<(String, State)>) -> MatrixInputs {
        hospitals.sort_unstable();
        let index =
            hospitals.iter().enumerate().map(|(i, (n, _))| (n.clone(), i as u32)).collect();
        let states = hospitals.iter().map(|(_, s)| *s).collect();
        let n = hospitals.len();
        MatrixInputs {
            hospitals: hospitals.into_iter().map(|(n, _)| n).collect(),
            states,
            index,
            los_sum: vec![0; n],
            los_n: vec![0; n],
            direct: BTreeMap::new(),
            indirect: BTreeMap::new(),
            n_events: 0,
        }
    }

    pub fn node(&self, facility: &str) -> Option<u32> {
        self.index.get(facility).copied()
    }

    /// Walks one patient's surviving records (sorted, non-empty subset of a
    /// patient group). Records at unknown facilities are a caller bug.
    pub fn add_records(&mut self, records: &[&StayRecord]) -> Result<()> {
        let mut prev: Option<(&StayRecord, u32)> = None;
        for r in records {
            let h = self.node(&r.facility).ok_or_else(|| {
                Error::Contract(format!("facility {} is not a matrix node", r.facility))
            })?;
            self.los_sum[h as usize] += length_of_stay(r) as u64;
            self.los_n[h as usize] += 1;
            if let Some((p, ph)) = prev {
                match classify_gap(p, r)? {
                    PairOutcome::Overlapping => {
                        // Keep the earlier-discharge record as the chain
                        // head? No: the walk mirrors detect_transfers, which
                        // steps pairwise, so the new record becomes prev.
                    }
                    PairOutcome::Transfer(kind) => {
                        self.n_events += 1;
                        match kind {
                            TransferKind::Direct => {
                                *self.direct.entry((ph, h)).or_insert(0) += 1;
                            }
                            TransferKind::IndirectAuto | TransferKind::IndirectOther => {
                                let gap = (r.admission - p.discharge).num_days() as u64;
                                let f = self.indirect.entry((ph, h)).or_default();
                                f.count += 1;
                                f.gap_sum += gap;
                            }
                        }
                    }
                }
            }
            prev = Some((r, h));
        }
        Ok(())
    }

    /// Hospitals with no society discharge at all; candidates for the next
    /// zero-community exclusion round.
    pub fn zero_society_hospitals(&self) -> Vec<String> {
        let mut has = vec![false; self.hospitals.len()];
        for (&(from, _), flow) in &self.indirect {
            if flow.count > 0 {
                has[from as usize] = true;
            }
        }
        let mut out: Vec<String> = has
            .iter()
            .enumerate()
            .filter(|&(_, ok)| !ok)
            .map(|(h, _)| self.hospitals[h].clone())
            .collect();
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Global,
    State(State),
}

impl Scope {
    pub fn label(self) -> String {
        match self {
            Scope::Global => "global".to_string(),
            Scope::State(s) => s.abbrev().to_ascii_lowercase(),
        }
    }
}

/// Row-stochastic transfer matrix; see the module doc for the node layout.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub scope: Scope,
    pub hospitals: Vec<String>,
    /// Mean stay length per node (hospitals then communities), in days.
    /// Infinite for absorbing rows, which derivation normally prevents.
    pub mean_los: Vec<f64>,
    /// (row, col, probability), 0-indexed, sorted, diagonal included.
    pub entries: Vec<(u32, u32, f64)>,
    /// Departure events the matrix represents.
    pub n_events: u64,
    /// In-scope events dropped by the scope's own zero-community pruning.
    pub n_dropped_scope: u64,
}

impl TransferMatrix {
    pub fn n_hospitals(&self) -> usize {
        self.hospitals.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.hospitals.len()
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        SparseMatrix { dim: self.dim(), entries: self.entries.clone() }
    }

    /// Off-diagonal entries as graph edges.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        self.entries.iter().filter(|(r, c, _)| r != c).map(|&(r, c, _)| (r, c)).collect()
    }

    pub fn metrics(&self) -> graph::GraphMetrics {
        graph::compute_metrics(self.dim(), &self.edges())
    }
}

/// Derives the matrix for one scope. Scoped derivation keeps only events
/// with both endpoints inside the scope, then prunes hospitals whose
/// in-scope society discharges drop to zero (and repeats, since pruning
/// removes inflows of others); what remains supports every structural
/// invariant. The global scope never prunes when the caller already
/// iterated record-level exclusions to a fixpoint.
pub fn derive_matrix(inputs: &MatrixInputs, scope: Scope) -> Result<TransferMatrix> {
    let in_scope = |h: u32| match scope {
        Scope::Global => true,
        Scope::State(s) => inputs.states[h as usize] == s,
    };
    let mut alive: Vec<bool> = (0..inputs.hospitals.len() as u32).map(in_scope).collect();
    let scope_events: u64 = inputs
        .direct
        .iter()
        .map(|(&(a, b), &c)| if in_scope(a) && in_scope(b) { c } else { 0 })
        .chain(
            inputs
                .indirect
                .iter()
                .map(|(&(a, b), f)| if in_scope(a) && in_scope(b) { f.count } else { 0 }),
        )
        .sum();

    loop {
        let mut soc = vec![0u64; inputs.hospitals.len()];
        for (&(from, to), flow) in &inputs.indirect {
            if alive[from as usize] && alive[to as usize] {
                soc[from as usize] += flow.count;
            }
        }
        let mut changed = false;
        for (h, alive_h) in alive.iter_mut().enumerate() {
            if *alive_h && soc[h] == 0 {
                *alive_h = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let survivors: Vec<u32> =
        (0..inputs.hospitals.len() as u32).filter(|&h| alive[h as usize]).collect();
    let n = survivors.len();
    let mut new_idx = vec![u32::MAX; inputs.hospitals.len()];
    for (i, &h) in survivors.iter().enumerate() {
        new_idx[h as usize] = i as u32;
    }

    // Per-row departure tallies in the new indexing.
    let mut direct_out: Vec<Vec<(u32, u64)>> = vec![Vec::new(); n];
    let mut soc_out = vec![0u64; n];
    let mut gap_sum = vec![0u64; n];
    let mut indirect_out: Vec<Vec<(u32, u64)>> = vec![Vec::new(); n];
    let mut n_events = 0u64;
    for (&(from, to), &count) in &inputs.direct {
        if alive[from as usize] && alive[to as usize] {
            direct_out[new_idx[from as usize] as usize].push((new_idx[to as usize], count));
            n_events += count;
        }
    }
    for (&(from, to), flow) in &inputs.indirect {
        if alive[from as usize] && alive[to as usize] {
            let f = new_idx[from as usize] as usize;
            soc_out[f] += flow.count;
            gap_sum[f] += flow.gap_sum;
            indirect_out[f].push((new_idx[to as usize], flow.count));
            n_events += flow.count;
        }
    }

    let mut mean_los = vec![f64::INFINITY; 2 * n];
    let mut entries: Vec<(u32, u32, f64)> = Vec::new();
    let mut row: Vec<(u32, f64)> = Vec::new();
    for i in 0..n {
        let h = survivors[i] as usize;

        // Hospital row: direct targets plus its own community.
        debug_assert!(inputs.los_n[h] > 0, "nodes stem from records");
        let l = inputs.los_sum[h] as f64 / inputs.los_n[h] as f64;
        mean_los[i] = l;
        let inv_l = inputs.los_n[h] as f64 / inputs.los_sum[h] as f64;
        let total = direct_out[i].iter().map(|&(_, c)| c).sum::<u64>() + soc_out[i];
        row.clear();
        if total == 0 {
            entries.push((i as u32, i as u32, 1.0));
        } else {
            entries.push((i as u32, i as u32, 1.0 - inv_l));
            for &(j, c) in &direct_out[i] {
                row.push((j, inv_l * c as f64 / total as f64));
            }
            row.push((n as u32 + i as u32, inv_l * soc_out[i] as f64 / total as f64));
            row.sort_unstable_by_key(|&(c, _)| c);
            entries.extend(row.iter().map(|&(c, p)| (i as u32, c, p)));
        }
    }
    for i in 0..n {
        // Community row: readmission hospitals only.
        let r = (n + i) as u32;
        if soc_out[i] == 0 {
            entries.push((r, r, 1.0));
            continue;
        }
        let lc = gap_sum[i] as f64 / soc_out[i] as f64;
        mean_los[n + i] = lc;
        let inv_lc = soc_out[i] as f64 / gap_sum[i] as f64;
        entries.push((r, r, 1.0 - inv_lc));
        row.clear();
        for &(j, c) in &indirect_out[i] {
            row.push((j, inv_lc * c as f64 / soc_out[i] as f64));
        }
        row.sort_unstable_by_key(|&(c, _)| c);
        entries.extend(row.iter().map(|&(c, p)| (r, c, p)));
    }
    entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

    Ok(TransferMatrix {
        scope,
        hospitals: survivors.iter().map(|&h| inputs.hospitals[h as usize].clone()).collect(),
        mean_los,
        entries,
        n_events,
        n_dropped_scope: scope_events - n_events,
    })
}

/// Per-state matrices plus the event bookkeeping that shows nothing was
/// silently lost: in-scope kept + interstate dropped + scope-pruned =
/// total events.
#[derive(Debug)]
pub struct StateSplit {
    pub matrices: Vec<TransferMatrix>,
    pub interstate_dropped: u64,
    pub scope_dropped: u64,
}

pub fn split_by_state(inputs: &MatrixInputs) -> Result<StateSplit> {
    let mut intra = 0u64;
    for (&(a, b), &c) in &inputs.direct {
        if inputs.states[a as usize] == inputs.states[b as usize] {
            intra += c;
        }
    }
    for (&(a, b), f) in &inputs.indirect {
        if inputs.states[a as usize] == inputs.states[b as usize] {
            intra += f.count;
        }
    }

    let mut matrices = Vec::with_capacity(ALL_STATES.len());
    let mut scope_dropped = 0;
    for &s in &ALL_STATES {
        let m = derive_matrix(inputs, Scope::State(s))?;
        scope_dropped += m.n_dropped_scope;
        matrices.push(m);
    }
    Ok(StateSplit { matrices, interstate_dropped: inputs.n_events - intra, scope_dropped })
}

/// Plain coordinate-format matrix, the exported shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub dim: usize,
    pub entries: Vec<(u32, u32, f64)>,
}

/// Header `dimension nnz`, then 1-indexed `row col value` lines with 12
/// significant digits. Writing, reading back and writing again is
/// byte-stable.
pub fn write_sparse<W: Write>(m: &SparseMatrix, out: &mut W) -> Result<()> {
    let mut buf = String::with_capacity(64);
    use std::fmt::Write as _;
    let io_err = |e: std::io::Error| Error::Format(format!("matrix write failed: {e}"));
    writeln!(buf, "{} {}", m.dim, m.entries.len()).unwrap();
    out.write_all(buf.as_bytes()).map_err(io_err)?;
    for &(r, c, v) in &m.entries {
        buf.clear();
        writeln!(buf, "{} {} {:.11e}", r + 1, c + 1, v).unwrap();
        out.write_all(buf.as_bytes()).map_err(io_err)?;
    }
    Ok(())
}

/// Inverse of [`write_sparse`]; skips blank lines and `#` comments so that
/// stamped export files read back cleanly.
pub fn read_sparse<R: BufRead>(input: R) -> Result<SparseMatrix> {
    let mut lines = input.lines();
    let header = loop {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format("empty matrix file".into()))?
            .map_err(|e| Error::Format(format!("matrix read failed: {e}")))?;
        if !line.is_empty() && !line.starts_with('#') {
            break line;
        }
    };
    let mut parts = header.split_whitespace();
    let bad_header = || Error::Format(format!("bad matrix header: {header:?}"));
    let dim: usize = parts.next().ok_or_else(bad_header)?.parse().map_err(|_| bad_header())?;
    let nnz: usize = parts.next().ok_or_else(bad_header)?.parse().map_err(|_| bad_header())?;
    if parts.next().is_some() {
        return Err(bad_header());
    }

    let mut entries = Vec::with_capacity(nnz);
    for (no, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Format(format!("matrix read failed: {e}")))?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Format(format!("bad matrix entry on line {}: {line:?}", no + 2));
        let mut f = line.split_whitespace();
        let r: u32 = f.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let c: u32 = f.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let v: f64 = f.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if f.next().is_some() || r == 0 || c == 0 || r as usize > dim || c as usize > dim {
            return Err(bad());
        }
        entries.push((r - 1, c - 1, v));
    }
    if entries.len() != nnz {
        return Err(Error::Format(format!(
            "matrix header promises {nnz} entries, file has {}",
            entries.len()
        )));
    }
    Ok(SparseMatrix { dim, entries })
}

/// Structural checks on an even-dimensional matrix: entry range, row sums,
/// block shape and the community-column rule. Returns human-readable
/// violations; empty means valid.
pub fn validate_sparse(m: &SparseMatrix) -> Vec<String> {
    let mut bad = Vec::new();
    if m.dim % 2 != 0 {
        bad.push(format!("dimension {} is odd", m.dim));
        return bad;
    }
    let n = m.dim / 2;
    let mut row_sum = vec![0.0f64; m.dim];
    let mut community_inflow = vec![0u64; n];
    let mut last: Option<(u32, u32)> = None;
    for &(r, c, v) in &m.entries {
        if !(0.0..=1.0).contains(&v) {
            bad.push(format!("entry ({}, {}) = {v} outside [0, 1]", r + 1, c + 1));
        }
        if last >= Some((r, c)) {
            bad.push(format!("entries not strictly sorted at ({}, {})", r + 1, c + 1));
        }
        last = Some((r, c));
        row_sum[r as usize] += v;
        if r == c || v == 0.0 {
            continue;
        }
        let (r, c) = (r as usize, c as usize);
        if r < n {
            // Hospital row: hospitals or its own community.
            if c >= n && c != n + r {
                bad.push(format!("hospital row {} reaches foreign community {}", r + 1, c + 1));
            }
        } else {
            // Community row: hospitals only.
            if c >= n {
                bad.push(format!("community row {} reaches community {}", r + 1, c + 1));
            }
        }
        if c >= n {
            community_inflow[c - n] += 1;
        }
    }
    for (r, sum) in row_sum.iter().enumerate() {
        if (sum - 1.0).abs() > 1e-12 {
            bad.push(format!("row {} sums to {sum:.15}", r + 1));
        }
    }
    for (i, &count) in community_inflow.iter().enumerate() {
        if count != 1 {
            bad.push(format!("community column {} has {count} inflows, want 1", n + i + 1));
        }
    }
    bad
}

/// Full validation of a derived matrix: structure plus the diagonal formula
/// diag(i) = 1 - 1/L_i.
pub fn validate_matrix(m: &TransferMatrix) -> Vec<String> {
    let mut bad = validate_sparse(&m.to_sparse());
    let mut diag = vec![0.0f64; m.dim()];
    for &(r, c, v) in &m.entries {
        if r == c {
            diag[r as usize] = v;
        }
    }
    for (i, &l) in m.mean_los.iter().enumerate() {
        let want = if l.is_finite() { 1.0 - 1.0 / l } else { 1.0 };
        if (diag[i] - want).abs() > 1e-12 {
            bad.push(format!("diagonal {} is {} but mean stay {} demands {want}", i + 1, diag[i], l));
        }
    }
    bad
}

/// Nonzero fractions of the two dense blocks people actually look at:
/// hospital-to-hospital (direct) and community-to-hospital (indirect).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSummary {
    pub n_hospitals: usize,
    pub direct_nnz: u64,
    pub indirect_nnz: u64,
}

impl BlockSummary {
    pub fn of(m: &TransferMatrix) -> BlockSummary {
        let n = m.n_hospitals() as u32;
        let mut direct_nnz = 0;
        let mut indirect_nnz = 0;
        for &(r, c, v) in &m.entries {
            if r == c || v == 0.0 || c >= n {
                continue;
            }
            if r < n {
                direct_nnz += 1;
            } else {
                indirect_nnz += 1;
            }
        }
        BlockSummary { n_hospitals: n as usize, direct_nnz, indirect_nnz }
    }

    /// Off-diagonal fill of the hospital-to-hospital block.
    pub fn direct_fill(&self) -> f64 {
        let n = self.n_hospitals as f64;
        if self.n_hospitals < 2 {
            return 0.0;
        }
        self.direct_nnz as f64 / (n * (n - 1.0))
    }

    /// Fill of the community-to-hospital block.
    pub fn indirect_fill(&self) -> f64 {
        let n = self.n_hospitals as f64;
        if self.n_hospitals == 0 {
            return 0.0;
        }
        self.indirect_nnz as f64 / (n * n)
    }
}
