//! Command line frontend. Validates and sorts the stay table once, then
//! runs the requested analyses and writes TSV files into an output
//! directory. Progress goes to standard error; every report file starts
//! with provenance comments (tool version, config hash, input checksum) so
//! results can be traced back to the exact run that produced them.
//!
//! Exit codes: 0 success, 1 usage or configuration or I/O error, 2 no
//! usable data (zero accepted records, or every facility excluded).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use patientflow::dates::parse_iso;
use patientflow::netmat::{
    split_by_state, write_sparse, ExclusionPolicy, StateSplit, TransferMatrix,
};
use patientflow::pipeline::{
    build_matrix_inputs, derive_global, prepare, run_analysis, Analysis, AnalysisSinks,
    PrepareOptions, PreparedInput,
};
use patientflow::records::GroupConfig;
use patientflow::stats::StatsOptions;
use patientflow::synthgen::{generate, GeneratorConfig};
use patientflow::tables;
use patientflow::{Error, Result};

#[derive(Parser)]
#[command(name = "patientflow", version, about = "Patient movement analysis on hospital stay tables")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the input table and write the rejection report.
    Validate(RunArgs),
    /// Generate a synthetic cohort with a known overlap manifest.
    Gen(GenArgs),
    /// Write the per-patient transfer event stream.
    Transfers(RunArgs),
    /// Write the overlapping-stay group stream.
    Overlaps(RunArgs),
    /// Write the descriptive statistics tables.
    Stats(RunArgs),
    /// Derive and export the transfer matrices (global and per state).
    Matrix(RunArgs),
    /// Graph metrics of the derived matrices.
    Metrics(RunArgs),
    /// Everything above in a single pass over the input.
    All(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Input stay table (TSV with a header row).
    #[arg(long)]
    input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Start of the observation window (YYYY-MM-DD). Default: data extent.
    #[arg(long)]
    window_start: Option<String>,
    /// End of the observation window (YYYY-MM-DD). Default: data extent.
    #[arg(long)]
    window_end: Option<String>,
    /// Sort threads. A speed knob only: output bytes never depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Approximate sort buffer budget in MiB. Also output-neutral.
    #[arg(long, default_value_t = 512)]
    memory_mb: usize,
    /// Facilities idle for longer than this many consecutive days are
    /// excluded from the transfer matrix.
    #[arg(long, default_value_t = 90)]
    inactivity_days: i64,
    /// Count one-day overlap transfers (standard/first day/last day shapes)
    /// in the direct transfer totals.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    count_overlap_transfers_as_direct: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Output directory for cohort.tsv, manifest.tsv and gen_config.txt.
    #[arg(long)]
    out: PathBuf,
    /// Generator settings as a key=value file; defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of patients.
    #[arg(long)]
    patients: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let result = match &cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Validate(args) => cmd_analysis(Task::Validate, args),
        Cmd::Transfers(args) => cmd_analysis(Task::Transfers, args),
        Cmd::Overlaps(args) => cmd_analysis(Task::Overlaps, args),
        Cmd::Stats(args) => cmd_analysis(Task::Stats, args),
        Cmd::Matrix(args) => cmd_analysis(Task::Matrix, args),
        Cmd::Metrics(args) => cmd_analysis(Task::Metrics, args),
        Cmd::All(args) => cmd_analysis(Task::All, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("patientflow: {e}");
            match e {
                Error::Empty(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Task {
    Validate,
    Transfers,
    Overlaps,
    Stats,
    Matrix,
    Metrics,
    All,
}

impl Task {
    /// Whether this run produces the output set of `part`.
    fn wants(self, part: Task) -> bool {
        self == part || self == Task::All
    }
}

/// Provenance lines prepended to every report file.
struct Stamp {
    config_hash: String,
    input_sha256: String,
}

impl Stamp {
    fn new(config_text: &str, input_sha256: &str) -> Stamp {
        let digest = Sha256::digest(config_text.as_bytes());
        let mut hash = String::with_capacity(16);
        use std::fmt::Write as _;
        for b in &digest[..8] {
            let _ = write!(hash, "{b:02x}");
        }
        Stamp { config_hash: hash, input_sha256: input_sha256.to_string() }
    }

    fn write_to(&self, w: &mut dyn Write) -> Result<()> {
        let text = format!(
            "# patientflow {}\n# config {}\n# input sha256:{}\n",
            env!("CARGO_PKG_VERSION"),
            self.config_hash,
            self.input_sha256
        );
        w.write_all(text.as_bytes()).map_err(|e| Error::Format(format!("write failed: {e}")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_report(dir: &Path, name: &str, stamp: &Stamp, body: &str) -> Result<()> {
    let path = dir.join(name);
    let mut w = create(&path)?;
    stamp.write_to(&mut w)?;
    w.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => GeneratorConfig::from_file(path)?,
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.patients {
        cfg.n_patients = n;
    }
    cfg.validate()?;

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let cohort_path = args.out.join("cohort.tsv");
    let manifest_path = args.out.join("manifest.tsv");
    let mut cohort = create(&cohort_path)?;
    let mut manifest = create(&manifest_path)?;

    let t0 = Instant::now();
    let summary = generate(&cfg, &mut cohort, Some(&mut manifest))?;
    cohort.flush().map_err(|e| Error::io(&cohort_path, e))?;
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))?;
    // The effective settings, in canonical form, so a cohort can always be
    // regenerated bit for bit.
    let cfg_path = args.out.join("gen_config.txt");
    fs::write(&cfg_path, cfg.canonical_kv()).map_err(|e| Error::io(&cfg_path, e))?;

    eprintln!(
        "generated {} records for {} patients, {} injected overlap groups, in {:.1}s -> {}",
        summary.n_records,
        summary.n_patients,
        summary.n_injected,
        t0.elapsed().as_secs_f64(),
        cohort_path.display()
    );
    Ok(())
}

fn parse_window_flag(name: &str, value: &Option<String>) -> Result<Option<chrono::NaiveDate>> {
    match value {
        None => Ok(None),
        Some(s) => parse_iso(s)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("--{name} expects YYYY-MM-DD, got {s:?}"))),
    }
}

fn cmd_analysis(task: Task, args: &RunArgs) -> Result<()> {
    let t0 = Instant::now();
    let window_start = parse_window_flag("window-start", &args.window_start)?;
    let window_end = parse_window_flag("window-end", &args.window_end)?;
    if args.inactivity_days < 1 {
        return Err(Error::Config("--inactivity-days must be at least 1".into()));
    }
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    // Only settings that can change output bytes go into the stamped hash;
    // --workers and --memory-mb are deliberately absent.
    let config_text = format!(
        "count_overlap_transfers_as_direct={}\ninactivity_days={}\nwindow_end={}\nwindow_start={}\n",
        args.count_overlap_transfers_as_direct,
        args.inactivity_days,
        args.window_end.as_deref().unwrap_or("-"),
        args.window_start.as_deref().unwrap_or("-"),
    );

    let prep_opts = PrepareOptions {
        sort: GroupConfig {
            memory_bytes: args.memory_mb.max(1) << 20,
            spill_dir: None,
            workers: args.workers.max(1),
        },
        window_start,
        window_end,
        sorted_to: None,
    };
    let prep = prepare(&args.input, &prep_opts)?;
    let stamp = Stamp::new(&config_text, &prep.input_sha256);
    eprintln!(
        "read {} rows: {} accepted, {} rejected ({:.1}s)",
        prep.report.total_rows,
        prep.report.accepted,
        prep.report.rejected(),
        t0.elapsed().as_secs_f64()
    );

    if task.wants(Task::Validate) {
        write_report(&args.out, "validation.tsv", &stamp, &prep.report.to_tsv())?;
    }
    if prep.report.accepted == 0 {
        return Err(Error::Empty(format!(
            "{} contains no usable records",
            args.input.display()
        )));
    }
    if task == Task::Validate {
        return Ok(());
    }

    let opts = StatsOptions {
        count_overlap_transfers_as_direct: args.count_overlap_transfers_as_direct,
    };
    let analysis = run_streams(task, args, &prep, &stamp, opts)?;
    eprintln!(
        "analyzed {} patients: {} transfer events, {} overlap groups",
        analysis.n_patients, analysis.n_transfers, analysis.n_overlap_groups
    );

    if task.wants(Task::Stats) {
        write_stats_tables(&args.out, &stamp, &analysis, &prep)?;
    }

    if task.wants(Task::Matrix) || task.wants(Task::Metrics) {
        run_matrices(task, args, &prep, &stamp, &analysis)?;
    }

    eprintln!("done in {:.1}s -> {}", t0.elapsed().as_secs_f64(), args.out.display());
    Ok(())
}

/// The single streaming pass: transfer/overlap row sinks are only attached
/// when the run actually produces those files.
fn run_streams(
    task: Task,
    args: &RunArgs,
    prep: &PreparedInput,
    stamp: &Stamp,
    opts: StatsOptions,
) -> Result<Analysis> {
    let transfers_path = args.out.join("transfers.tsv");
    let overlaps_path = args.out.join("overlaps.tsv");
    let mut transfers_file = if task.wants(Task::Transfers) {
        let mut w = create(&transfers_path)?;
        stamp.write_to(&mut w)?;
        Some(w)
    } else {
        None
    };
    let mut overlaps_file = if task.wants(Task::Overlaps) {
        let mut w = create(&overlaps_path)?;
        stamp.write_to(&mut w)?;
        Some(w)
    } else {
        None
    };

    let analysis = run_analysis(
        prep,
        opts,
        AnalysisSinks {
            transfers: transfers_file.as_mut().map(|w| w as &mut dyn Write),
            overlaps: overlaps_file.as_mut().map(|w| w as &mut dyn Write),
        },
    )?;
    if let Some(mut w) = transfers_file {
        w.flush().map_err(|e| Error::io(&transfers_path, e))?;
    }
    if let Some(mut w) = overlaps_file {
        w.flush().map_err(|e| Error::io(&overlaps_path, e))?;
    }
    Ok(analysis)
}

fn write_stats_tables(
    dir: &Path,
    stamp: &Stamp,
    analysis: &Analysis,
    prep: &PreparedInput,
) -> Result<()> {
    let acc = &analysis.stats;
    let files: Vec<(&str, String)> = vec![
        ("overview.tsv", tables::overview(acc, &prep.report)),
        ("state_summary.tsv", tables::state_summary(acc)),
        ("hospitalizations.tsv", tables::hospitalizations(acc)),
        ("population.tsv", tables::population(acc)),
        ("states_per_patient.tsv", tables::states_per_patient(acc)),
        ("transfer_counts.tsv", tables::transfers(acc)),
        ("interstate_share.tsv", tables::interstate(acc)),
        ("facility_admissions.tsv", tables::facility_sizes(acc, true)),
        ("facility_patients.tsv", tables::facility_sizes(acc, false)),
        ("los_histogram.tsv", tables::los_histogram(acc)),
        ("gap_histogram.tsv", tables::gap_histogram(acc)),
        ("overlap_durations.tsv", tables::overlap_durations(acc)),
        ("shared_patients_states.tsv", tables::state_matrix(&acc.shared_patients)),
        ("direct_transfers_states.tsv", tables::state_matrix(&acc.direct_transfers)),
        ("indirect_transfers_states.tsv", tables::state_matrix(&acc.indirect_transfers)),
        ("overlap_states.tsv", tables::state_matrix(&acc.overlap_matrix)),
        ("overlap_taxonomy.tsv", tables::taxonomy(acc)),
        ("overlap_codes.tsv", tables::code_matrix(acc)),
        ("overlap_code_chapters.tsv", tables::code_chapters(acc)),
    ];
    for (name, body) in files {
        write_report(dir, name, stamp, &body)?;
    }
    Ok(())
}

fn run_matrices(
    task: Task,
    args: &RunArgs,
    prep: &PreparedInput,
    stamp: &Stamp,
    analysis: &Analysis,
) -> Result<()> {
    let policy = ExclusionPolicy { inactivity_days: args.inactivity_days, ..Default::default() };
    let build = build_matrix_inputs(prep, &analysis.nodes, &policy)?;
    eprintln!(
        "matrix inputs: {} hospitals, {} excluded, {} streaming passes",
        build.inputs.hospitals.len(),
        build.exclusions.len(),
        build.passes
    );
    if task.wants(Task::Matrix) {
        write_report(&args.out, "exclusions.tsv", stamp, &tables::exclusions(&build.exclusions))?;
    }
    // Failing here (all facilities excluded) still leaves the exclusion
    // report behind so the exit code 2 is explainable.
    let global = derive_global(&build)?;
    let split = split_by_state(&build.inputs)?;

    if task.wants(Task::Matrix) {
        write_matrix_file(&args.out, "matrix_global.tsv", stamp, &global)?;
        for m in &split.matrices {
            let name = format!("matrix_{}.tsv", m.scope.label());
            write_matrix_file(&args.out, &name, stamp, m)?;
        }
        write_report(&args.out, "node_stays.tsv", stamp, &tables::node_stays(&global))?;
        write_report(&args.out, "matrix_blocks.tsv", stamp, &tables::matrix_blocks(&global, &split))?;
    }

    if task.wants(Task::Metrics) {
        write_metrics(&args.out, stamp, &global, &split)?;
    }
    Ok(())
}

fn write_matrix_file(dir: &Path, name: &str, stamp: &Stamp, m: &TransferMatrix) -> Result<()> {
    let path = dir.join(name);
    let mut w = create(&path)?;
    stamp.write_to(&mut w)?;
    write_sparse(&m.to_sparse(), &mut w)?;
    w.flush().map_err(|e| Error::io(&path, e))
}

fn write_metrics(
    dir: &Path,
    stamp: &Stamp,
    global: &TransferMatrix,
    split: &StateSplit,
) -> Result<()> {
    let gm = global.metrics();
    let mut rows = vec![("global".to_string(), global, gm.clone())];
    for m in &split.matrices {
        rows.push((m.scope.label(), m, m.metrics()));
    }
    let borrowed: Vec<(String, &TransferMatrix, &patientflow::netmat::graph::GraphMetrics)> =
        rows.iter().map(|(l, m, g)| (l.clone(), *m, g)).collect();
    write_report(dir, "network_metrics.tsv", stamp, &tables::matrix_summary(&borrowed))?;
    write_report(dir, "degree_global.tsv", stamp, &tables::degree_histogram(&gm))
}
