//! Input model: one row per hospital stay.
//!
//! The expected table is tab-separated with a header row naming the columns
//!
//! ```text
//! patient_id  facility_id  state  admission  discharge  diagnosis  sex  birth_year
//! ```
//!
//! Column order is free; the header decides. Parsing is strict but
//! per-row: a bad row lands in exactly one rejection counter of the
//! [`ValidationReport`] and the stream continues. Only structural problems
//! (unreadable input, missing header columns) abort.
//!
//! Identifiers are opaque tokens. They are kept as strings on the record and
//! interned to integer handles ([`Interner`]) where downstream code wants
//! array indexing; nothing is ever derived from their spelling. Duplicate
//! rows are kept: the overlap taxonomy depends on seeing both entries.

mod group;

pub use group::{group_records, sort_to_file, GroupConfig, PatientGroup, PatientStream};

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::BufRead;

use chrono::NaiveDate;

use crate::dates::{parse_iso, push_iso};
use crate::{Error, Result, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sex {
    Female,
    Male,
    Unknown,
}

impl Sex {
    pub fn letter(self) -> char {
        match self {
            Sex::Female => 'f',
            Sex::Male => 'm',
            Sex::Unknown => 'u',
        }
    }

    pub fn parse(s: &str) -> Option<Sex> {
        match s {
            "f" => Some(Sex::Female),
            "m" => Some(Sex::Male),
            "u" => Some(Sex::Unknown),
            _ => None,
        }
    }
}

/// One hospital stay, the atom every other module works on.
///
/// `admission..=discharge` is a closed interval of calendar days;
/// `admission == discharge` is a legal one-day stay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StayRecord {
    pub patient: String,
    pub facility: String,
    pub state: State,
    pub admission: NaiveDate,
    pub discharge: NaiveDate,
    pub diagnosis: String,
    pub sex: Sex,
    pub birth_year: Option<i16>,
}

impl StayRecord {
    /// Order of a patient's stays: chronological, ties broken by facility id
    /// and then by the remaining fields so that equal keys imply equal
    /// records. Sorting is therefore deterministic even with unstable sorts.
    pub fn cmp_within_patient(&self, other: &StayRecord) -> Ordering {
        (self.admission, self.discharge, &self.facility, &self.diagnosis, self.sex, self.birth_year).cmp(&(
            other.admission,
            other.discharge,
            &other.facility,
            &other.diagnosis,
            other.sex,
            other.birth_year,
        ))
    }

    /// Global sort order used by the by-patient regrouping.
    pub fn cmp_full(&self, other: &StayRecord) -> Ordering {
        self.patient.cmp(&other.patient).then_with(|| self.cmp_within_patient(other))
    }

    /// Appends the record as one TSV line (canonical column order, no
    /// newline). Re-parsing the line yields the record back.
    pub fn push_tsv(&self, out: &mut String) {
        out.push_str(&self.patient);
        out.push('\t');
        out.push_str(&self.facility);
        out.push('\t');
        out.push_str(self.state.name());
        out.push('\t');
        push_iso(out, self.admission);
        out.push('\t');
        push_iso(out, self.discharge);
        out.push('\t');
        out.push_str(&self.diagnosis);
        out.push('\t');
        out.push(self.sex.letter());
        out.push('\t');
        if let Some(y) = self.birth_year {
            out.push_str(&y.to_string());
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::with_capacity(64);
        self.push_tsv(&mut s);
        s
    }

    /// Rough heap footprint, used for the external-sort memory budget.
    pub(crate) fn approx_mem(&self) -> usize {
        std::mem::size_of::<StayRecord>()
            + self.patient.capacity()
            + self.facility.capacity()
            + self.diagnosis.capacity()
            + 48
    }
}

/// Canonical header line for the record table.
pub const HEADER: &str = "patient_id\tfacility_id\tstate\tadmission\tdischarge\tdiagnosis\tsex\tbirth_year";

const COLUMNS: [&str; 8] =
    ["patient_id", "facility_id", "state", "admission", "discharge", "diagnosis", "sex", "birth_year"];

/// Maps the eight required column names to their positions in the header.
#[derive(Debug, Clone)]
pub struct Schema {
    pos: [usize; 8],
    n_columns: usize,
}

impl Schema {
    pub fn from_header(line: &str) -> Result<Schema> {
        let names: Vec<&str> = line.split('\t').collect();
        let mut pos = [usize::MAX; 8];
        for (want_idx, want) in COLUMNS.iter().enumerate() {
            match names.iter().position(|n| n == want) {
                Some(i) => pos[want_idx] = i,
                None => {
                    return Err(Error::Format(format!("header is missing required column '{want}'")));
                }
            }
        }
        Ok(Schema { pos, n_columns: names.len() })
    }
}

/// Why a row was rejected. Exactly one reason per row; the checks run in the
/// order of the enum below, so e.g. a row with no diagnosis *and* a bad date
/// counts as missing_diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    MissingDiagnosis,
    MissingState,
    Malformed,
    InvertedInterval,
}

/// Row counters. `total_rows` is always the sum of `accepted` and the four
/// rejection buckets; data rows only, the header is not counted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub total_rows: u64,
    pub accepted: u64,
    pub rejected_missing_diagnosis: u64,
    pub rejected_missing_state: u64,
    pub rejected_malformed: u64,
    pub rejected_inverted_interval: u64,
}

impl ValidationReport {
    fn count(&mut self, r: Rejection) {
        self.total_rows += 1;
        match r {
            Rejection::MissingDiagnosis => self.rejected_missing_diagnosis += 1,
            Rejection::MissingState => self.rejected_missing_state += 1,
            Rejection::Malformed => self.rejected_malformed += 1,
            Rejection::InvertedInterval => self.rejected_inverted_interval += 1,
        }
    }

    pub fn rejected(&self) -> u64 {
        self.rejected_missing_diagnosis
            + self.rejected_missing_state
            + self.rejected_malformed
            + self.rejected_inverted_interval
    }

    pub fn is_consistent(&self) -> bool {
        self.total_rows == self.accepted + self.rejected()
    }

    /// Two-column TSV rendering (counter, value).
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        s.push_str("counter\tvalue\n");
        for (name, v) in [
            ("total_rows", self.total_rows),
            ("accepted", self.accepted),
            ("rejected_missing_diagnosis", self.rejected_missing_diagnosis),
            ("rejected_missing_state", self.rejected_missing_state),
            ("rejected_malformed", self.rejected_malformed),
            ("rejected_inverted_interval", self.rejected_inverted_interval),
        ] {
            s.push_str(name);
            s.push('\t');
            s.push_str(&v.to_string());
            s.push('\n');
        }
        s
    }
}

/// Diagnosis syntax accepted by the validator: one ASCII letter followed by
/// at least one digit; anything after the leading letter+digit (subcodes,
/// dots) passes through untouched.
fn diagnosis_ok(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() >= 2 && b[0].is_ascii_alphabetic() && b[1].is_ascii_digit()
}

fn parse_row(line: &str, schema: &Schema) -> std::result::Result<StayRecord, Rejection> {
    let mut fields: [&str; 16] = [""; 16];
    let mut n = 0;
    for f in line.split('\t') {
        if n == schema.n_columns || n == fields.len() {
            return Err(Rejection::Malformed);
        }
        fields[n] = f;
        n += 1;
    }
    if n != schema.n_columns {
        return Err(Rejection::Malformed);
    }
    let get = |i: usize| fields[schema.pos[i]];

    let diagnosis = get(5);
    if diagnosis.is_empty() {
        return Err(Rejection::MissingDiagnosis);
    }
    let state = match State::parse(get(2)) {
        Some(s) => s,
        None => return Err(Rejection::MissingState),
    };
    if !diagnosis_ok(diagnosis) {
        return Err(Rejection::Malformed);
    }
    let patient = get(0);
    let facility = get(1);
    if patient.is_empty() || facility.is_empty() {
        return Err(Rejection::Malformed);
    }
    let admission = parse_iso(get(3)).ok_or(Rejection::Malformed)?;
    let discharge = parse_iso(get(4)).ok_or(Rejection::Malformed)?;
    let sex = Sex::parse(get(6)).ok_or(Rejection::Malformed)?;
    let birth_year = match get(7) {
        "" => None,
        y => Some(y.parse::<i16>().map_err(|_| Rejection::Malformed)?),
    };
    if discharge < admission {
        return Err(Rejection::InvertedInterval);
    }
    Ok(StayRecord {
        patient: patient.to_string(),
        facility: facility.to_string(),
        state,
        admission,
        discharge,
        diagnosis: diagnosis.to_string(),
        sex,
        birth_year,
    })
}

/// Streaming reader over a record table: yields accepted records one at a
/// time and tallies everything into a [`ValidationReport`].
pub struct RecordReader<R: BufRead> {
    src: R,
    schema: Schema,
    report: ValidationReport,
    buf: String,
    context: String,
}

impl<R: BufRead> RecordReader<R> {
    /// Reads the header row and fixes the schema. `context` only decorates
    /// I/O error messages.
    pub fn new(mut src: R, context: &str) -> Result<RecordReader<R>> {
        let mut header = String::new();
        let n = src.read_line(&mut header).map_err(|e| Error::io(context, e))?;
        if n == 0 {
            return Err(Error::Format(format!("{context}: empty input, expected a header row")));
        }
        trim_eol(&mut header);
        let schema = Schema::from_header(&header)?;
        Ok(RecordReader { src, schema, report: ValidationReport::default(), buf: String::new(), context: context.to_string() })
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    /// Next accepted record; `Ok(None)` at end of input.
    pub fn next_record(&mut self) -> Result<Option<StayRecord>> {
        loop {
            self.buf.clear();
            let n = self.src.read_line(&mut self.buf).map_err(|e| Error::io(&*self.context, e))?;
            if n == 0 {
                return Ok(None);
            }
            trim_eol(&mut self.buf);
            if self.buf.is_empty() {
                continue; // blank line, typically the trailing newline
            }
            match parse_row(&self.buf, &self.schema) {
                Ok(rec) => {
                    self.report.total_rows += 1;
                    self.report.accepted += 1;
                    return Ok(Some(rec));
                }
                Err(rej) => self.report.count(rej),
            }
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<StayRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

fn trim_eol(s: &mut String) {
    while s.ends_with('\n') || s.ends_with('\r') {
        s.pop();
    }
}

/// String-to-handle table. Handles are dense and assigned in first-seen
/// order; they carry no meaning beyond indexing.
#[derive(Debug, Default)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Interner {
        Interner::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&h) = self.index.get(name) {
            return h;
        }
        let h = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), h);
        h
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, h: u32) -> &str {
        &self.names[h as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}
