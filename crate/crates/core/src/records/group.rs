//! Regrouping the record stream by patient without holding it in memory.
//!
//! Claims extracts arrive in arbitrary order, so the stream is externally
//! sorted by (patient, admission, discharge, facility, ...): records are
//! buffered up to a memory budget, each full buffer is sorted and spilled to
//! a temp file, and the spill files are merged into one sorted table. Memory
//! use is bounded by the budget plus one patient's records on the read side,
//! whatever the input size.
//!
//! The sorted table is an ordinary record TSV (header included), so analysis
//! passes can re-read it any number of times and [`PatientStream`] only has
//! to stitch consecutive rows of equal patient id back together.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{RecordReader, StayRecord, HEADER};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct GroupConfig {
    /// Approximate cap on buffered record bytes before a chunk is spilled.
    pub memory_bytes: usize,
    /// Where spill chunks go; defaults to the system temp dir.
    pub spill_dir: Option<PathBuf>,
    /// Threads used to sort buffered chunks. Any value produces the same
    /// output; this is purely a speed knob.
    pub workers: usize,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig { memory_bytes: 512 << 20, spill_dir: None, workers: 1 }
    }
}

/// All records of one patient, sorted by `cmp_within_patient`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientGroup {
    pub patient: String,
    pub records: Vec<StayRecord>,
}

fn sort_chunk(buf: &mut [StayRecord], workers: usize) {
    if workers > 1 {
        // The comparator is a total order over whole records, so an unstable
        // parallel sort cannot introduce nondeterminism.
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build();
        match pool {
            Ok(pool) => pool.install(|| {
                use rayon::slice::ParallelSliceMut;
                buf.par_sort_unstable_by(StayRecord::cmp_full);
            }),
            Err(_) => buf.sort_unstable_by(StayRecord::cmp_full),
        }
    } else {
        buf.sort_unstable_by(StayRecord::cmp_full);
    }
}

fn write_chunk(dir: &Path, idx: usize, buf: &[StayRecord]) -> Result<PathBuf> {
    let path = dir.join(format!("chunk-{idx:04}.tsv"));
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let mut line = String::with_capacity(96);
    for rec in buf {
        line.clear();
        rec.push_tsv(&mut line);
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

struct ChunkCursor {
    reader: BufReader<File>,
    path: PathBuf,
    buf: String,
}

impl ChunkCursor {
    fn next(&mut self) -> Result<Option<StayRecord>> {
        self.buf.clear();
        let n = self.reader.read_line(&mut self.buf).map_err(|e| Error::io(&self.path, e))?;
        if n == 0 {
            return Ok(None);
        }
        while self.buf.ends_with('\n') || self.buf.ends_with('\r') {
            self.buf.pop();
        }
        parse_sorted_line(&self.buf).map(Some)
    }
}

/// Parses a line previously written by `StayRecord::push_tsv`. The file is
/// ours, so any failure means corruption, not bad input data.
fn parse_sorted_line(line: &str) -> Result<StayRecord> {
    static CANONICAL: std::sync::OnceLock<super::Schema> = std::sync::OnceLock::new();
    let schema = CANONICAL.get_or_init(|| super::Schema::from_header(HEADER).expect("canonical header"));
    super::parse_row(line, schema).map_err(|_| Error::Format(format!("corrupted sorted row: {line:?}")))
}

struct HeapEntry {
    rec: StayRecord,
    chunk: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert to pop the smallest record first.
        self.rec.cmp_full(&other.rec).then(self.chunk.cmp(&other.chunk)).reverse()
    }
}

/// Externally sorts `records` into `out` (a record TSV ordered by patient).
/// Returns the number of records written.
pub fn sort_to_file<I>(records: I, out: &Path, cfg: &GroupConfig) -> Result<u64>
where
    I: IntoIterator<Item = Result<StayRecord>>,
{
    let budget = cfg.memory_bytes.max(1);
    let spill = match &cfg.spill_dir {
        Some(dir) => tempfile::tempdir_in(dir),
        None => tempfile::tempdir(),
    }
    .map_err(|e| Error::io(cfg.spill_dir.clone().unwrap_or_else(std::env::temp_dir), e))?;

    let mut buf: Vec<StayRecord> = Vec::new();
    let mut buf_bytes = 0usize;
    let mut chunks: Vec<PathBuf> = Vec::new();

    for rec in records {
        let rec = rec?;
        buf_bytes += rec.approx_mem();
        buf.push(rec);
        if buf_bytes >= budget {
            sort_chunk(&mut buf, cfg.workers);
            chunks.push(write_chunk(spill.path(), chunks.len(), &buf)?);
            buf.clear();
            buf.shrink_to(0);
            buf_bytes = 0;
        }
    }

    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    w.write_all(HEADER.as_bytes()).map_err(|e| Error::io(out, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(out, e))?;
    let mut written = 0u64;
    let mut line = String::with_capacity(96);
    let mut emit = |rec: &StayRecord, w: &mut BufWriter<File>| -> Result<()> {
        line.clear();
        rec.push_tsv(&mut line);
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(out, e))
    };

    if chunks.is_empty() {
        // Everything fit in the budget; skip the merge.
        sort_chunk(&mut buf, cfg.workers);
        for rec in &buf {
            emit(rec, &mut w)?;
            written += 1;
        }
    } else {
        sort_chunk(&mut buf, cfg.workers);
        chunks.push(write_chunk(spill.path(), chunks.len(), &buf)?);
        drop(buf);

        let mut cursors: Vec<ChunkCursor> = Vec::with_capacity(chunks.len());
        for path in &chunks {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            cursors.push(ChunkCursor { reader: BufReader::with_capacity(1 << 20, file), path: path.clone(), buf: String::new() });
        }
        let mut heap = BinaryHeap::with_capacity(cursors.len());
        for (i, c) in cursors.iter_mut().enumerate() {
            if let Some(rec) = c.next()? {
                heap.push(HeapEntry { rec, chunk: i });
            }
        }
        while let Some(top) = heap.pop() {
            emit(&top.rec, &mut w)?;
            written += 1;
            if let Some(rec) = cursors[top.chunk].next()? {
                heap.push(HeapEntry { rec, chunk: top.chunk });
            }
        }
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(written)
}

/// Iterator over patient groups read from a sorted record table.
///
/// Contract: the underlying file is ordered by patient (as produced by
/// [`sort_to_file`]); each patient then appears exactly once in the stream,
/// with stays sorted chronologically.
pub struct PatientStream<R: BufRead> {
    src: RecordReader<R>,
    pending: Option<StayRecord>,
    done: bool,
}

impl PatientStream<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        PatientStream::from_reader(BufReader::with_capacity(1 << 20, file), &path.display().to_string())
    }
}

impl<R: BufRead> PatientStream<R> {
    pub fn from_reader(reader: R, context: &str) -> Result<Self> {
        let src = RecordReader::new(reader, context)?;
        Ok(PatientStream { src, pending: None, done: false })
    }

    fn next_group(&mut self) -> Result<Option<PatientGroup>> {
        if self.done {
            return Ok(None);
        }
        let first = match self.pending.take() {
            Some(r) => r,
            None => match self.src.next_record()? {
                Some(r) => r,
                None => {
                    self.done = true;
                    return Ok(None);
                }
            },
        };
        let mut group = PatientGroup { patient: first.patient.clone(), records: vec![first] };
        loop {
            match self.src.next_record()? {
                Some(rec) if rec.patient == group.patient => group.records.push(rec),
                Some(rec) => {
                    self.pending = Some(rec);
                    break;
                }
                None => {
                    self.done = true;
                    break;
                }
            }
        }
        Ok(Some(group))
    }
}

impl<R: BufRead> Iterator for PatientStream<R> {
    type Item = Result<PatientGroup>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_group().transpose()
    }
}

/// In-memory variant for small inputs and tests: sorts and splits directly.
pub fn group_records(mut records: Vec<StayRecord>) -> Vec<PatientGroup> {
    records.sort_unstable_by(StayRecord::cmp_full);
    let mut out: Vec<PatientGroup> = Vec::new();
    for rec in records {
        match out.last_mut() {
            Some(g) if g.patient == rec.patient => g.records.push(rec),
            _ => out.push(PatientGroup { patient: rec.patient.clone(), records: vec![rec] }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::Sex;
    use crate::State;
    use chrono::NaiveDate;

    fn rec(patient: &str, facility: &str, adm: &str, dis: &str) -> StayRecord {
        StayRecord {
            patient: patient.into(),
            facility: facility.into(),
            state: State::Bavaria,
            admission: crate::dates::parse_iso(adm).unwrap(),
            discharge: crate::dates::parse_iso(dis).unwrap(),
            diagnosis: "I21".into(),
            sex: Sex::Female,
            birth_year: Some(1950),
        }
    }

    fn shuffled_fixture() -> Vec<StayRecord> {
        // Deliberately interleaved patients, duplicate rows included.
        vec![
            rec("p2", "f1", "2013-05-01", "2013-05-04"),
            rec("p1", "f2", "2013-02-01", "2013-02-03"),
            rec("p1", "f1", "2013-01-01", "2013-01-10"),
            rec("p3", "f1", "2013-01-01", "2013-01-01"),
            rec("p1", "f1", "2013-01-01", "2013-01-10"), // duplicate of the one above
            rec("p2", "f3", "2013-04-01", "2013-04-02"),
            rec("p1", "f1", "2013-01-01", "2013-01-05"),
        ]
    }

    #[test]
    fn in_memory_grouping_sorts_and_keeps_duplicates() {
        let groups = group_records(shuffled_fixture());
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[0].patient, "p1");
        assert_eq!(groups[0].records.len(), 4);
        // (admission, discharge, facility): the short stay sorts before the
        // two identical long ones.
        assert_eq!(groups[0].records[0].discharge, crate::dates::parse_iso("2013-01-05").unwrap());
        assert_eq!(groups[0].records[1], groups[0].records[2]);
        assert_eq!(groups[1].records[0].facility, "f3");
    }

    #[test]
    fn external_sort_matches_in_memory_grouping() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sorted.tsv");
        // A one-byte budget spills a chunk per record, exercising the merge.
        let cfg = GroupConfig { memory_bytes: 1, spill_dir: None, workers: 1 };
        let mut input = Vec::new();
        for i in 0..200u32 {
            let p = format!("p{:03}", i % 37);
            let f = format!("f{}", i % 11);
            let day = 1 + (i * 7 % 27) as u32;
            let adm = NaiveDate::from_ymd_opt(2013, 1 + (i % 12), day.min(28)).unwrap();
            let mut r = rec(&p, &f, "2013-01-01", "2013-01-01");
            r.admission = adm;
            r.discharge = adm + chrono::Days::new((i % 9) as u64);
            input.push(r);
        }
        input.extend(shuffled_fixture());

        let n = sort_to_file(input.iter().cloned().map(Ok), &out, &cfg).unwrap();
        assert_eq!(n as usize, input.len());

        let streamed: Vec<PatientGroup> = PatientStream::open(&out).unwrap().map(|g| g.unwrap()).collect();
        let expected = group_records(input);
        assert_eq!(streamed, expected);
    }

    #[test]
    fn external_sort_is_deterministic_across_runs_and_workers() {
        let input = shuffled_fixture();
        let mut outputs = Vec::new();
        for workers in [1usize, 4] {
            let dir = tempfile::tempdir().unwrap();
            let out = dir.path().join("sorted.tsv");
            let cfg = GroupConfig { memory_bytes: 1, spill_dir: None, workers };
            sort_to_file(input.iter().cloned().map(Ok), &out, &cfg).unwrap();
            outputs.push(std::fs::read(&out).unwrap());
        }
        assert_eq!(outputs[0], outputs[1]);
    }

    #[test]
    fn empty_input_yields_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sorted.tsv");
        sort_to_file(Vec::new(), &out, &GroupConfig::default()).unwrap();
        let mut s = PatientStream::open(&out).unwrap();
        assert!(s.next().is_none());
    }
}
