//! Reconstruction of patient movement between hospitals from anonymized
//! claims-style stay records.
//!
//! The input is a flat table of hospital stays (patient, facility, state,
//! admission, discharge, diagnosis, sex, birth year). Everything else is
//! derived from it:
//!
//! * [`records`] parses and validates the table and regroups it by patient
//!   with bounded memory (external sort),
//! * [`episodes`] classifies the gaps between a patient's consecutive stays
//!   into direct and indirect transfers,
//! * [`overlaps`] groups stays with intersecting date ranges and classifies
//!   each group (double entries, temporary transfers, one-day transfers, ...),
//! * [`stats`] produces descriptive per-state tables, histograms and
//!   state-by-state matrices,
//! * [`netmat`] turns the transfer counts into a row-stochastic matrix over
//!   hospital and community nodes and computes graph metrics on it,
//! * [`synthgen`] generates deterministic synthetic cohorts so every piece
//!   above can be exercised without access to real claims data.
//!
//! [`pipeline`] wires the modules together for the command line frontend.

pub mod dates;
pub mod episodes;
mod error;
pub mod icd;
pub mod netmat;
pub mod overlaps;
pub mod pipeline;
pub mod records;
pub mod states;
pub mod stats;
pub mod synthgen;
pub mod tables;

pub use error::Error;
pub use states::State;

pub type Result<T> = std::result::Result<T, Error>;
