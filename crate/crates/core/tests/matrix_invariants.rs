//! End-to-end matrix properties on generated cohorts: the global and all
//! sixteen per-state matrices must validate structurally (row sums, the
//! diagonal/length-of-stay relation, block shape, single community inflow),
//! events must be conserved across the split, and the sparse text round
//! trip must be byte-stable.

use std::io::Write;
use std::path::PathBuf;

use chrono::NaiveDate;

use patientflow::dates::DayRange;
use patientflow::netmat::{
    read_sparse, split_by_state, validate_matrix, validate_sparse, write_sparse, ExclusionPolicy,
};
use patientflow::pipeline::{
    build_matrix_inputs, derive_global, prepare, run_analysis, AnalysisSinks, PrepareOptions,
};
use patientflow::stats::StatsOptions;
use patientflow::synthgen::{generate, GeneratorConfig};

fn dense_config(seed: u64) -> GeneratorConfig {
    // Few facilities over one year so the inactivity gate leaves survivors.
    let mut facilities = [1u32; 16];
    facilities[0] = 3;
    facilities[1] = 2;
    GeneratorConfig {
        seed,
        n_patients: 1500,
        facilities_per_state: facilities,
        window: DayRange::new(
            NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2015, 12, 31).unwrap(),
        )
        .unwrap(),
        ..GeneratorConfig::default()
    }
}

fn prepared(dir: &std::path::Path, cfg: &GeneratorConfig) -> patientflow::pipeline::PreparedInput {
    let path: PathBuf = dir.join("cohort.tsv");
    let mut buf = Vec::new();
    generate(cfg, &mut buf, None).unwrap();
    std::fs::write(&path, buf).unwrap();
    prepare(&path, &PrepareOptions::default()).unwrap()
}

#[test]
fn every_derived_matrix_validates_and_events_are_conserved() {
    for seed in [5u64, 6, 7] {
        let dir = tempfile::tempdir().unwrap();
        let prep = prepared(dir.path(), &dense_config(seed));
        let analysis =
            run_analysis(&prep, StatsOptions::default(), AnalysisSinks::default()).unwrap();
        let build =
            build_matrix_inputs(&prep, &analysis.nodes, &ExclusionPolicy::default()).unwrap();
        let global = derive_global(&build).unwrap();
        assert!(global.n_hospitals() >= 10, "seed {seed}: cohort too sparse to be a real check");

        assert_eq!(validate_matrix(&global), Vec::<String>::new(), "seed {seed} global");
        assert_eq!(validate_sparse(&global.to_sparse()), Vec::<String>::new());

        let split = split_by_state(&build.inputs).unwrap();
        assert_eq!(split.matrices.len(), 16);
        let mut kept = 0u64;
        for m in &split.matrices {
            let bad = validate_matrix(m);
            assert_eq!(bad, Vec::<String>::new(), "seed {seed} scope {}", m.scope.label());
            kept += m.n_events;
        }
        assert_eq!(
            kept + split.interstate_dropped + split.scope_dropped,
            global.n_events,
            "seed {seed}: events lost or invented by the split"
        );
        assert!(split.interstate_dropped > 0, "interstate traffic expected at these settings");
    }
}

#[test]
fn sparse_export_round_trips_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), &dense_config(9));
    let analysis = run_analysis(&prep, StatsOptions::default(), AnalysisSinks::default()).unwrap();
    let build = build_matrix_inputs(&prep, &analysis.nodes, &ExclusionPolicy::default()).unwrap();
    let global = derive_global(&build).unwrap();

    let mut first = Vec::new();
    write_sparse(&global.to_sparse(), &mut first).unwrap();
    let reread = read_sparse(&first[..]).unwrap();
    let mut second = Vec::new();
    write_sparse(&reread, &mut second).unwrap();
    assert_eq!(first, second);

    // Comment and blank lines must not poison a reread.
    let mut stamped = Vec::new();
    writeln!(stamped, "# tool x.y").unwrap();
    writeln!(stamped).unwrap();
    stamped.extend_from_slice(&first);
    assert_eq!(read_sparse(&stamped[..]).unwrap(), reread);
}

#[test]
fn inactivity_knob_changes_the_exclusion_set() {
    let dir = tempfile::tempdir().unwrap();
    // The default spread-out config idles most facilities for months.
    let cfg = GeneratorConfig { seed: 13, n_patients: 500, ..GeneratorConfig::default() };
    let prep = prepared(dir.path(), &cfg);
    let analysis = run_analysis(&prep, StatsOptions::default(), AnalysisSinks::default()).unwrap();

    let strict = build_matrix_inputs(&prep, &analysis.nodes, &ExclusionPolicy::default()).unwrap();
    let lax_policy = ExclusionPolicy { inactivity_days: 100_000, ..ExclusionPolicy::default() };
    let lax = build_matrix_inputs(&prep, &analysis.nodes, &lax_policy).unwrap();
    assert!(strict.exclusions.len() > lax.exclusions.len());
    assert!(lax.inputs.hospitals.len() > strict.inputs.hospitals.len());
    let m = derive_global(&lax).unwrap();
    assert_eq!(validate_matrix(&m), Vec::<String>::new());
}
