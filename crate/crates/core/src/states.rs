//! The sixteen German federal states.
//!
//! All per-state tables and matrices in this crate use one fixed ordering:
//! descending resident population. Keeping the order in a single place means
//! every output lines up without re-sorting.

use std::fmt;

/// Federal state, ordered by population (largest first).
///
/// The discriminant doubles as the row/column index in 16x16 state matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum State {
    NorthRhineWestphalia = 0,
    Bavaria = 1,
    BadenWuerttemberg = 2,
    LowerSaxony = 3,
    Hesse = 4,
    RhinelandPalatinate = 5,
    Saxony = 6,
    Berlin = 7,
    SchleswigHolstein = 8,
    Brandenburg = 9,
    SaxonyAnhalt = 10,
    Thuringia = 11,
    Hamburg = 12,
    MecklenburgWesternPomerania = 13,
    Saarland = 14,
    Bremen = 15,
}

pub const N_STATES: usize = 16;

/// All states in population order. Index i holds the state with `index() == i`.
pub const ALL_STATES: [State; N_STATES] = [
    State::NorthRhineWestphalia,
    State::Bavaria,
    State::BadenWuerttemberg,
    State::LowerSaxony,
    State::Hesse,
    State::RhinelandPalatinate,
    State::Saxony,
    State::Berlin,
    State::SchleswigHolstein,
    State::Brandenburg,
    State::SaxonyAnhalt,
    State::Thuringia,
    State::Hamburg,
    State::MecklenburgWesternPomerania,
    State::Saarland,
    State::Bremen,
];

impl State {
    /// Position in the fixed population ordering, 0..16.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<State> {
        ALL_STATES.get(i).copied()
    }

    /// Full English name, the canonical serialized form.
    pub fn name(self) -> &'static str {
        match self {
            State::NorthRhineWestphalia => "North Rhine-Westphalia",
            State::Bavaria => "Bavaria",
            State::BadenWuerttemberg => "Baden-Wuerttemberg",
            State::LowerSaxony => "Lower Saxony",
            State::Hesse => "Hesse",
            State::RhinelandPalatinate => "Rhineland-Palatinate",
            State::Saxony => "Saxony",
            State::Berlin => "Berlin",
            State::SchleswigHolstein => "Schleswig-Holstein",
            State::Brandenburg => "Brandenburg",
            State::SaxonyAnhalt => "Saxony-Anhalt",
            State::Thuringia => "Thuringia",
            State::Hamburg => "Hamburg",
            State::MecklenburgWesternPomerania => "Mecklenburg-Western Pomerania",
            State::Saarland => "Saarland",
            State::Bremen => "Bremen",
        }
    }

    /// Short label used in compact table headers.
    pub fn abbrev(self) -> &'static str {
        match self {
            State::NorthRhineWestphalia => "NRW",
            State::Bavaria => "BY",
            State::BadenWuerttemberg => "BW",
            State::LowerSaxony => "NI",
            State::Hesse => "HE",
            State::RhinelandPalatinate => "RP",
            State::Saxony => "SN",
            State::Berlin => "BE",
            State::SchleswigHolstein => "SH",
            State::Brandenburg => "BB",
            State::SaxonyAnhalt => "ST",
            State::Thuringia => "TH",
            State::Hamburg => "HH",
            State::MecklenburgWesternPomerania => "MV",
            State::Saarland => "SL",
            State::Bremen => "HB",
        }
    }

    /// Accepts the full name, the short label, or the common ae/oe/ue
    /// spelling of Baden-Wuerttemberg. Returns `None` for anything else;
    /// the caller decides whether that is a rejection or a fatal error.
    pub fn parse(s: &str) -> Option<State> {
        for st in ALL_STATES {
            if s == st.name() || s == st.abbrev() {
                return Some(st);
            }
        }
        if s == "Baden-Württemberg" {
            return Some(State::BadenWuerttemberg);
        }
        None
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
