//! Reruns of `all` on the same input must write byte-identical output
//! directories, whatever the worker count or sort budget. Compared by
//! checksum so a diff names the offending file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};

fn checksums(dir: &Path) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            let digest = Sha256::digest(fs::read(entry.path()).unwrap());
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            map.insert(entry.file_name().into_string().unwrap(), hex);
        }
    }
    map
}

fn patientflow(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_patientflow"))
        .args(args)
        .output()
        .expect("spawn patientflow");
    assert!(
        out.status.success(),
        "patientflow {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_all(input: &Path, out: &Path, workers: &str, memory_mb: &str) -> BTreeMap<String, String> {
    patientflow(&[
        "all",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        workers,
        "--memory-mb",
        memory_mb,
    ]);
    checksums(out)
}

#[test]
fn rerun_directories_are_byte_identical_at_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("gen.cfg");
    // Dense enough that the matrix stage has survivors and every output
    // file is non-trivial; small sort budget forces spill merges.
    fs::write(
        &cfg_path,
        "seed=11\nn_patients=2000\nfacilities_per_state=2,2,1,1,1,1,1,1,1,1,1,1,1,1,1,1\n\
         window_start=2014-01-01\nwindow_end=2014-12-31\n",
    )
    .unwrap();
    let gen_dir = dir.path().join("gen");
    patientflow(&["gen", "--out", gen_dir.to_str().unwrap(), "--config", cfg_path.to_str().unwrap()]);
    let input = gen_dir.join("cohort.tsv");

    let mut seen: Option<(PathBuf, BTreeMap<String, String>)> = None;
    for (i, (workers, memory_mb)) in
        [("1", "512"), ("1", "512"), ("4", "512"), ("4", "2"), ("8", "8")].iter().enumerate()
    {
        let out = dir.path().join(format!("out{i}"));
        let sums = run_all(&input, &out, workers, memory_mb);
        assert!(sums.len() > 40, "unexpectedly few outputs: {}", sums.len());
        if let Some((first, want)) = &seen {
            assert_eq!(
                &sums, want,
                "workers={workers} memory={memory_mb} diverges from {}",
                first.display()
            );
        } else {
            seen = Some((out, sums));
        }
    }
}
