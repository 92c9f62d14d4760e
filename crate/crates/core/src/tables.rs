//! TSV renderings of every report table. Each function returns the full
//! table text including its header row; the CLI prepends provenance
//! comments and writes them to files.
//!
//! Formatting conventions: averages with one decimal, medians as integer or
//! .5, percentages as integers, probabilities and fill fractions with six
//! decimals, undefined values as "-".

use std::fmt::Write;

use crate::netmat::{graph::GraphMetrics, BlockSummary, ExclusionReason, StateSplit, TransferMatrix};
use crate::records::{Sex, ValidationReport};
use crate::states::{State, ALL_STATES, N_STATES};
use crate::stats::{
    class_label, code_label, fmt1, fmt_median, fmt_opt, StatsAccumulator, BETWEEN,
};

fn opt1(x: Option<f64>) -> String {
    fmt_opt(x.map(fmt1))
}

fn row_label(row: usize) -> &'static str {
    if row == BETWEEN {
        "between"
    } else {
        State::from_index(row).unwrap().name()
    }
}

/// Headline counters of one run.
pub fn overview(acc: &StatsAccumulator, report: &ValidationReport) -> String {
    let mut s = String::from("counter\tvalue\n");
    let rows: [(&str, u64); 9] = [
        ("rows_total", report.total_rows),
        ("rows_accepted", report.accepted),
        ("rows_rejected", report.rejected()),
        ("patients", acc.n_patients),
        ("records", acc.n_records),
        ("facilities", acc.facilities.len() as u64),
        ("transfer_events", acc.transfer_events_total()),
        ("overlap_groups", acc.n_overlap_groups),
        ("overlap_groups_excluded", acc.n_excluded_groups),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k}\t{v}");
    }
    let _ = writeln!(s, "window_start\t{}", crate::dates::iso(acc.window.start));
    let _ = writeln!(s, "window_end\t{}", crate::dates::iso(acc.window.end));
    s
}

/// Admissions, facilities, patient counts, censuses and mean stay lengths
/// per state.
pub fn state_summary(acc: &StatsAccumulator) -> String {
    let mut s = String::from(
        "state\tadmissions\tfacilities\tpatients_female\tpatients_male\t\
         census_facilities\tcensus_societies\tavg_los_facility\tavg_los_society\n",
    );
    for row in acc.state_summaries() {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.state.name(),
            row.n_admissions,
            row.n_facilities,
            row.patients_female,
            row.patients_male,
            fmt1(row.avg_census_facilities),
            fmt1(row.avg_census_societies),
            opt1(row.avg_los_facility),
            opt1(row.avg_los_society),
        );
    }
    s
}

/// Stays-per-patient distribution summary per state and sex.
pub fn hospitalizations(acc: &StatsAccumulator) -> String {
    let mut s = String::from("state\tsex\tpatients\tmin\tmax\tmean\tmedian\n");
    for &state in &ALL_STATES {
        let mut emit = |sex: &str, t: &crate::episodes::StayTally| {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                state.name(),
                sex,
                t.n_patients(),
                fmt_opt(t.min().map(|v| v.to_string())),
                fmt_opt(t.max().map(|v| v.to_string())),
                opt1(t.mean()),
                fmt_opt(t.median().map(fmt_median)),
            );
        };
        emit("f", acc.hosp_stats.by_sex(state, Sex::Female));
        emit("m", acc.hosp_stats.by_sex(state, Sex::Male));
        emit("all", &acc.hosp_stats.combined(state));
    }
    s
}

/// Patients by birth year and sex.
pub fn population(acc: &StatsAccumulator) -> String {
    let mut s = String::from("birth_year\tfemale\tmale\tunknown\n");
    for (year, counts) in &acc.population {
        let label = year.map(|y| y.to_string()).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "{label}\t{}\t{}\t{}", counts[0], counts[1], counts[2]);
    }
    s
}

/// How many distinct states patients appear in.
pub fn states_per_patient(acc: &StatsAccumulator) -> String {
    let mut s = String::from("states\tpatients\n");
    for (k, v) in &acc.states_per_patient {
        let _ = writeln!(s, "{k}\t{v}");
    }
    s
}

/// Transfer totals per state plus the between-states row.
pub fn transfers(acc: &StatsAccumulator) -> String {
    let mut s =
        String::from("state\tall\tdirect\tindirect_all\tindirect_auto\tindirect_other\n");
    let mut total = crate::stats::TransferCounts::default();
    for row in 0..=N_STATES {
        let c = &acc.transfer_table[row];
        total.all += c.all;
        total.direct += c.direct;
        total.indirect_all += c.indirect_all;
        total.indirect_auto += c.indirect_auto;
        total.indirect_other += c.indirect_other;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            row_label(row),
            c.all,
            c.direct,
            c.indirect_all,
            c.indirect_auto,
            c.indirect_other
        );
    }
    let _ = writeln!(
        s,
        "total\t{}\t{}\t{}\t{}\t{}",
        total.all, total.direct, total.indirect_all, total.indirect_auto, total.indirect_other
    );
    s
}

/// Integer percentage of transfers leaving each state.
pub fn interstate(acc: &StatsAccumulator) -> String {
    let mut s = String::from("state\tpercent_leaving\n");
    for (i, pct) in acc.interstate_percentages().iter().enumerate() {
        let _ = writeln!(
            s,
            "{}\t{}",
            ALL_STATES[i].name(),
            fmt_opt(pct.map(|p| p.to_string()))
        );
    }
    s
}

/// Facility size distributions (log-decade bins) per state; `admissions`
/// selects stays per facility, otherwise distinct patients per facility.
pub fn facility_sizes(acc: &StatsAccumulator, admissions: bool) -> String {
    let mut s = String::from("state\tbin\tfacilities\n");
    for &state in &ALL_STATES {
        let values = if admissions {
            acc.facility_admission_counts(state)
        } else {
            acc.facility_patient_counts(state)
        };
        let values: Vec<i64> = values.into_iter().filter(|&v| v > 0).collect();
        if values.is_empty() {
            continue;
        }
        let h = crate::stats::Histogram::build(values, crate::stats::BinSpec::LogDecade)
            .expect("counts are positive");
        for &(lo, n) in &h.bins {
            let _ = writeln!(s, "{}\t{}\t{}", state.name(), h.label(lo), n);
        }
    }
    s
}

fn day_histogram(head: &str, maps: &[std::collections::BTreeMap<i64, u64>], with_between: bool) -> String {
    let mut s = String::from(head);
    let rows = if with_between { N_STATES + 1 } else { N_STATES };
    for row in 0..rows {
        for (&days, &n) in &maps[row] {
            let _ = writeln!(s, "{}\t{days}\t{n}", row_label(row));
        }
    }
    s
}

/// Length-of-stay distribution per state, one row per observed value.
pub fn los_histogram(acc: &StatsAccumulator) -> String {
    day_histogram("state\tdays\tstays\n", &acc.los_hist, false)
}

/// Days at home between two stays (intra-state pairs).
pub fn gap_histogram(acc: &StatsAccumulator) -> String {
    day_histogram("state\tdays\tpairs\n", &acc.gap_hist, false)
}

/// Overlap durations per state row.
pub fn overlap_durations(acc: &StatsAccumulator) -> String {
    day_histogram("state\tdays\tgroups\n", &acc.overlap_duration_hist, true)
}

/// Dense 16x16 counter matrix with state abbreviations on both axes.
pub fn state_matrix(m: &crate::stats::StateMatrix) -> String {
    let mut s = String::from("from");
    for &to in &ALL_STATES {
        let _ = write!(s, "\t{}", to.abbrev());
    }
    s.push('\n');
    for &from in &ALL_STATES {
        let _ = write!(s, "{}", from.abbrev());
        for &to in &ALL_STATES {
            let _ = write!(s, "\t{}", m.get(from, to));
        }
        s.push('\n');
    }
    s
}

/// Overlap classes per state row.
pub fn taxonomy(acc: &StatsAccumulator) -> String {
    let mut s = String::from("state");
    for i in 0..9 {
        let _ = write!(s, "\t{}", class_label(i));
    }
    s.push_str("\ttotal\n");
    for row in 0..=N_STATES {
        let counts = &acc.taxonomy[row];
        let _ = write!(s, "{}", row_label(row));
        for c in counts {
            let _ = write!(s, "\t{c}");
        }
        let _ = writeln!(s, "\t{}", counts.iter().sum::<u64>());
    }
    s
}

/// Four-digit agreement codes of two-record overlaps per state row.
pub fn code_matrix(acc: &StatsAccumulator) -> String {
    let mut s = String::from("state");
    for i in 0..16 {
        let _ = write!(s, "\t{}", code_label(i));
    }
    s.push_str("\ttotal\n");
    for row in 0..=N_STATES {
        let counts = &acc.code_table[row];
        let _ = write!(s, "{}", row_label(row));
        for c in counts {
            let _ = write!(s, "\t{c}");
        }
        let _ = writeln!(s, "\t{}", counts.iter().sum::<u64>());
    }
    let _ = write!(s, "total");
    for c in &acc.code_totals {
        let _ = write!(s, "\t{c}");
    }
    let _ = writeln!(s, "\t{}", acc.code_totals.iter().sum::<u64>());
    s
}

/// Diagnosis chapter pairs of two-record overlaps, by code.
pub fn code_chapters(acc: &StatsAccumulator) -> String {
    let mut s = String::from("code\tchapter_a\tchapter_b\tgroups\n");
    for (&(code, a, b), &n) in &acc.code_chapter_pairs {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{n}",
            code_label(code),
            crate::icd::chapter_label(a),
            crate::icd::chapter_label(b)
        );
    }
    s
}

/// One row of graph/matrix statistics per scope.
pub fn matrix_summary(rows: &[(String, &TransferMatrix, &GraphMetrics)]) -> String {
    let mut s = String::from(
        "scope\thospitals\tnodes\tevents\tdropped_in_scope\tedges\tdensity\t\
         avg_degree\tlargest_scc\tdiameter\tradius\tdirect_fill\tindirect_fill\n",
    );
    for (label, m, g) in rows {
        let b = BlockSummary::of(m);
        let _ = writeln!(
            s,
            "{label}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.n_hospitals(),
            g.n_nodes,
            m.n_events,
            m.n_dropped_scope,
            g.n_edges,
            fmt_opt(g.density.map(|d| format!("{d:.6}"))),
            fmt_opt(g.avg_degree.map(|d| format!("{d:.2}"))),
            g.largest_scc,
            fmt_opt(g.diameter.map(|d| d.to_string())),
            fmt_opt(g.radius.map(|d| d.to_string())),
            format!("{:.6}", b.direct_fill()),
            format!("{:.6}", b.indirect_fill()),
        );
    }
    s
}

/// Dense-block fill of each derived matrix plus the event bookkeeping that
/// shows nothing was silently lost: the per-state `events` column, the
/// `dropped_in_scope` column and the `interstate` row sum to the global
/// event count.
pub fn matrix_blocks(global: &TransferMatrix, split: &StateSplit) -> String {
    let mut s = String::from(
        "scope\thospitals\tevents\tdropped_in_scope\tdirect_nnz\tdirect_fill\t\
         indirect_nnz\tindirect_fill\n",
    );
    let mut row = |label: &str, m: &TransferMatrix| {
        let b = BlockSummary::of(m);
        let _ = writeln!(
            s,
            "{label}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t{:.6}",
            m.n_hospitals(),
            m.n_events,
            m.n_dropped_scope,
            b.direct_nnz,
            b.direct_fill(),
            b.indirect_nnz,
            b.indirect_fill(),
        );
    };
    row("global", global);
    for m in &split.matrices {
        row(&m.scope.label(), m);
    }
    let _ = writeln!(s, "interstate\t-\t{}\t-\t-\t-\t-\t-", split.interstate_dropped);
    s
}

/// In/out-degree distribution of one transfer graph.
pub fn degree_histogram(g: &GraphMetrics) -> String {
    let mut s = String::from("degree\tin_nodes\tout_nodes\n");
    let mut degrees: Vec<u64> =
        g.in_degree_hist.keys().chain(g.out_degree_hist.keys()).copied().collect();
    degrees.sort_unstable();
    degrees.dedup();
    for d in degrees {
        let _ = writeln!(
            s,
            "{d}\t{}\t{}",
            g.in_degree_hist.get(&d).copied().unwrap_or(0),
            g.out_degree_hist.get(&d).copied().unwrap_or(0)
        );
    }
    s
}

/// Facilities left out of the matrix and why.
pub fn exclusions(map: &std::collections::BTreeMap<String, ExclusionReason>) -> String {
    let mut s = String::from("facility\treason\n");
    for (name, reason) in map {
        let _ = writeln!(s, "{name}\t{}", reason.label());
    }
    s
}

/// Mean stay length per matrix node, hospitals then communities.
pub fn node_stays(m: &TransferMatrix) -> String {
    let mut s = String::from("node\tkind\tname\tmean_days\n");
    let n = m.n_hospitals();
    for (i, name) in m.hospitals.iter().enumerate() {
        let _ = writeln!(s, "{}\thospital\t{name}\t{}", i + 1, fmt1(m.mean_los[i]));
    }
    for (i, name) in m.hospitals.iter().enumerate() {
        let v = m.mean_los[n + i];
        let shown = if v.is_finite() { fmt1(v) } else { "-".to_string() };
        let _ = writeln!(s, "{}\tcommunity\tc({name})\t{shown}", n + i + 1);
    }
    s
}
