//! End-to-end orchestration with bounded memory: validate and sort the raw
//! table once, then run streaming passes over the sorted copy.
//!
//! The analysis window defaults to the extent of the accepted data and can
//! be overridden. It scales census denominators and the inactivity scan;
//! the event walk itself always covers all accepted records.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use crate::dates::DayRange;
use crate::episodes::transfers_in_group;
use crate::netmat::{
    derive_matrix, ExclusionPolicy, ExclusionReason, MatrixInputs, NodeInputs, Scope,
    TransferMatrix,
};
use crate::overlaps::detect_overlap_groups;
use crate::records::{sort_to_file, GroupConfig, PatientStream, RecordReader, StayRecord, ValidationReport};
use crate::stats::{StatsAccumulator, StatsOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct PrepareOptions {
    pub sort: GroupConfig,
    pub window_start: Option<NaiveDate>,
    pub window_end: Option<NaiveDate>,
    /// Keep the sorted table at this path instead of a temp dir.
    pub sorted_to: Option<PathBuf>,
}

/// Sorted, validated input plus everything later passes stamp into outputs.
pub struct PreparedInput {
    pub sorted_path: PathBuf,
    _keepalive: Option<tempfile::TempDir>,
    pub report: ValidationReport,
    /// Analysis window; `None` when nothing was accepted and no override
    /// pinned it.
    pub window: Option<DayRange>,
    /// Admission/discharge extent of the accepted records.
    pub extent: Option<(NaiveDate, NaiveDate)>,
    /// Hex SHA-256 of the raw input bytes.
    pub input_sha256: String,
}

impl PreparedInput {
    pub fn window(&self) -> Result<DayRange> {
        self.window.ok_or_else(|| {
            Error::Empty("no accepted records and no explicit analysis window".into())
        })
    }
}

struct HashingReader<R> {
    inner: R,
    hasher: Rc<RefCell<Sha256>>,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.borrow_mut().update(&buf[..n]);
        Ok(n)
    }
}

/// Validates, hashes and sorts the raw table in one streaming read.
pub fn prepare(input: &Path, opts: &PrepareOptions) -> Result<PreparedInput> {
    let hasher = Rc::new(RefCell::new(Sha256::new()));
    let file = File::open(input).map_err(|e| Error::io(input, e))?;
    let reader = BufReader::with_capacity(
        1 << 20,
        HashingReader { inner: file, hasher: Rc::clone(&hasher) },
    );
    let mut records = RecordReader::new(reader, &input.display().to_string())?;

    let (sorted_path, keepalive) = match &opts.sorted_to {
        Some(p) => (p.clone(), None),
        None => {
            let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
            (dir.path().join("sorted.tsv"), Some(dir))
        }
    };

    let mut extent: Option<(NaiveDate, NaiveDate)> = None;
    sort_to_file(
        (&mut records).map(|r| {
            if let Ok(rec) = &r {
                extent = Some(match extent {
                    None => (rec.admission, rec.discharge),
                    Some((lo, hi)) => (lo.min(rec.admission), hi.max(rec.discharge)),
                });
            }
            r
        }),
        &sorted_path,
        &opts.sort,
    )?;

    let window = match (
        opts.window_start.or(extent.map(|e| e.0)),
        opts.window_end.or(extent.map(|e| e.1)),
    ) {
        (Some(a), Some(b)) => Some(DayRange::new(a, b)?),
        _ => None,
    };

    let report = records.report().clone();
    drop(records);
    let digest = Rc::try_unwrap(hasher).expect("sole owner after read").into_inner().finalize();
    let mut hex = String::with_capacity(64);
    use std::fmt::Write as _;
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }

    Ok(PreparedInput {
        sorted_path,
        _keepalive: keepalive,
        report,
        window,
        extent,
        input_sha256: hex,
    })
}

/// Optional row sinks for the event and overlap streams; headers are
/// written before the first row.
#[derive(Default)]
pub struct AnalysisSinks<'a> {
    pub transfers: Option<&'a mut dyn Write>,
    pub overlaps: Option<&'a mut dyn Write>,
}

pub struct Analysis {
    pub stats: StatsAccumulator,
    pub nodes: NodeInputs,
    pub n_patients: u64,
    pub n_transfers: u64,
    pub n_overlap_groups: u64,
}

/// One pass over the sorted table: transfer events, overlap groups, the
/// stats accumulator and the per-facility activity maps.
pub fn run_analysis(
    prep: &PreparedInput,
    opts: StatsOptions,
    mut sinks: AnalysisSinks,
) -> Result<Analysis> {
    let window = prep.window()?;
    let mut stats = StatsAccumulator::new(window, opts);
    let mut nodes = NodeInputs::new(window);
    let mut n_patients = 0u64;
    let mut n_transfers = 0u64;
    let mut n_groups = 0u64;

    let io_err = |e: std::io::Error| Error::Format(format!("output write failed: {e}"));
    if let Some(w) = sinks.transfers.as_mut() {
        w.write_all(crate::episodes::TransferEvent::HEADER.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    if let Some(w) = sinks.overlaps.as_mut() {
        w.write_all(crate::overlaps::OverlapGroup::HEADER.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }

    let mut line = String::new();
    for group in PatientStream::open(&prep.sorted_path)? {
        let group = group?;
        n_patients += 1;
        let events = transfers_in_group(&group);
        let ogroups = detect_overlap_groups(&group);
        n_transfers += events.len() as u64;
        n_groups += ogroups.len() as u64;

        for r in &group.records {
            nodes.add_record(r);
        }
        if let Some(w) = sinks.transfers.as_mut() {
            for ev in &events {
                line.clear();
                ev.push_tsv(&mut line);
                line.push('\n');
                w.write_all(line.as_bytes()).map_err(io_err)?;
            }
        }
        if let Some(w) = sinks.overlaps.as_mut() {
            for og in &ogroups {
                line.clear();
                og.push_tsv(&mut line);
                line.push('\n');
                w.write_all(line.as_bytes()).map_err(io_err)?;
            }
        }
        stats.add_group(&group, &events, &ogroups);
    }

    Ok(Analysis { stats, nodes, n_patients, n_transfers, n_overlap_groups: n_groups })
}

/// Matrix inputs after iterating exclusions to a fixpoint: inactivity is
/// decided once on the full data, zero-community facilities are re-checked
/// after every cascade because dropping records re-chains stay pairs and
/// can orphan further communities.
pub struct MatrixBuild {
    pub inputs: MatrixInputs,
    pub exclusions: BTreeMap<String, ExclusionReason>,
    /// Streaming passes it took to stabilize (at least one).
    pub passes: u32,
}

pub fn build_matrix_inputs(
    prep: &PreparedInput,
    nodes: &NodeInputs,
    policy: &ExclusionPolicy,
) -> Result<MatrixBuild> {
    let mut exclusions: BTreeMap<String, ExclusionReason> = nodes
        .inactive(policy)
        .into_iter()
        .map(|f| (f, ExclusionReason::InactiveGap))
        .collect();

    let mut passes = 0u32;
    loop {
        let survivors: Vec<(String, crate::State)> = nodes
            .all_facilities()
            .into_iter()
            .filter(|(name, _)| !exclusions.contains_key(name))
            .collect();
        let mut inputs = MatrixInputs::new(survivors);
        for group in PatientStream::open(&prep.sorted_path)? {
            let group = group?;
            let kept: Vec<&StayRecord> = group
                .records
                .iter()
                .filter(|r| !exclusions.contains_key(&r.facility))
                .collect();
            if !kept.is_empty() {
                inputs.add_records(&kept)?;
            }
        }
        passes += 1;
        let zeros = inputs.zero_society_hospitals();
        if zeros.is_empty() {
            return Ok(MatrixBuild { inputs, exclusions, passes });
        }
        for z in zeros {
            exclusions.insert(z, ExclusionReason::ZeroCommunity);
        }
    }
}

/// Global matrix; refuses to produce an empty one so callers can map this
/// to a clean "no usable data" outcome.
pub fn derive_global(build: &MatrixBuild) -> Result<TransferMatrix> {
    if build.inputs.hospitals.is_empty() {
        return Err(Error::Empty(
            "every facility was excluded; no transfer matrix nodes remain".into(),
        ));
    }
    let m = derive_matrix(&build.inputs, Scope::Global)?;
    debug_assert_eq!(m.n_dropped_scope, 0, "record-level fixpoint precedes derivation");
    Ok(m)
}
