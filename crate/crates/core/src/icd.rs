//! Grouping of ICD-10 codes into the 22 chapters.
//!
//! Only the leading letter and (for the split letters D and H) the two-digit
//! number decide the chapter; subcodes after that are ignored. Codes that
//! fall into none of the ranges (including the D49 and D90+ holes and H96+)
//! map to chapter 0, rendered "00" and counted separately from real chapters.

/// Chapter number 1..=22, or 0 for unmappable codes.
pub fn icd_chapter(code: &str) -> u8 {
    let b = code.as_bytes();
    let letter = match b.first() {
        Some(c) if c.is_ascii_alphabetic() => c.to_ascii_uppercase(),
        _ => return 0,
    };
    // Leading number after the letter: one or two digits.
    let num = {
        let d1 = b.get(1).filter(|c| c.is_ascii_digit()).map(|c| (c - b'0') as u8);
        let d2 = b.get(2).filter(|c| c.is_ascii_digit()).map(|c| (c - b'0') as u8);
        match (d1, d2) {
            (Some(a), Some(b)) => Some(a * 10 + b),
            (Some(a), None) => Some(a),
            _ => None,
        }
    };
    match letter {
        b'A' | b'B' => 1,
        b'C' => 2,
        b'D' => match num {
            Some(n) if n <= 48 => 2,
            Some(n) if (50..=89).contains(&n) => 3,
            _ => 0,
        },
        b'E' => 4,
        b'F' => 5,
        b'G' => 6,
        b'H' => match num {
            Some(n) if n <= 59 => 7,
            Some(n) if (60..=95).contains(&n) => 8,
            _ => 0,
        },
        b'I' => 9,
        b'J' => 10,
        b'K' => 11,
        b'L' => 12,
        b'M' => 13,
        b'N' => 14,
        b'O' => 15,
        b'P' => 16,
        b'Q' => 17,
        b'R' => 18,
        b'S' | b'T' => 19,
        b'U' => 22,
        b'V' | b'W' | b'X' | b'Y' => 20,
        b'Z' => 21,
        _ => 0,
    }
}

/// Two-digit chapter label ("00" for unmappable).
pub fn chapter_label(chapter: u8) -> String {
    format!("{chapter:02}")
}
