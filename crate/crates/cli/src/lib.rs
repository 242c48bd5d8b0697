//! The `sivo` command line: simulate, evaluate and sweep.
//!
//! Exit codes: 0 success, 1 configuration, input or I/O error, 2 estimator
//! divergence (or, for `sweep`, any failed cell).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sivo_core::io_eval::{
    count_map_points, kitti_errors, parse_kitti_poses, parse_selection_report, write_kitti_poses,
    write_selection_report, ErrorReport, TrajectoryRecord,
};
use sivo_core::scenario::Scenario;
use sivo_core::selection::{SelectionConfig, Strategy};
use sivo_core::sim::SequenceResult;
use sivo_core::SivoError;

pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const REPORT_FILE: &str = "selection_report.csv";
pub const ERROR_REPORT_FILE: &str = "error_report.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const SUMMARY_HEADER: &str = "scenario,baseline_translation_error_percent,baseline_rotation_error_deg_per_m,translation_error_percent,rotation_error_deg_per_m,baseline_map_points,map_points,map_reduction_percent,config,status";

#[derive(Parser, Debug)]
#[command(name = "sivo", version, about = "Semantically informed feature selection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run every configured strategy on a scenario and write trajectories and reports.
    Simulate(SimulateArgs),
    /// Compare an estimated trajectory with ground truth.
    Evaluate(EvaluateArgs),
    /// Run a threshold by sample-count grid against the select-all baseline.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Replaces the scenario's strategy list: all, mi, sivo-batch or sivo-greedy.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub threshold_bits: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Replaces the scenario's noise seed. The world keeps its own seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "sivo-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvaluateArgs {
    /// Ground-truth poses, KITTI format.
    #[arg(long)]
    pub gt: PathBuf,
    /// Estimated poses, KITTI format.
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long, requires = "test_report")]
    pub baseline_report: Option<PathBuf>,
    #[arg(long, requires = "baseline_report")]
    pub test_report: Option<PathBuf>,
    /// Frames between subsequence starts.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Where to write the JSON error report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub threshold_bits: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub mc_samples: Vec<usize>,
    #[arg(long, default_value = "sivo-batch")]
    pub strategy: Strategy,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "sivo-sweep")]
    pub out: PathBuf,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Diverged(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Diverged(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Diverged(m) => m,
        }
    }
}

impl From<SivoError> for Failure {
    fn from(e: SivoError) -> Self {
        match e {
            SivoError::EstimatorDiverged { .. } | SivoError::DivergedUpdate { .. } => {
                Failure::Diverged(e.to_string())
            }
            other => Failure::Config(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run_from_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                1
            } else {
                0
            }
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    arguments: &'a A,
    scenario: &'a Scenario,
    outputs: Vec<String>,
    status: &'static str,
    error: Option<String>,
    started_unix_ms: u128,
    wall_clock_seconds: Option<f64>,
    run_seconds: BTreeMap<String, f64>,
}

struct ManifestWriter<'a, A: Serialize> {
    path: PathBuf,
    started: Instant,
    manifest: RunManifest<'a, A>,
}

impl<'a, A: Serialize> ManifestWriter<'a, A> {
    fn begin(out: &Path, command: &'static str, arguments: &'a A, scenario: &'a Scenario) -> Result<Self, Failure> {
        let started_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        let writer = ManifestWriter {
            path: out.join(MANIFEST_FILE),
            started: Instant::now(),
            manifest: RunManifest {
                tool: "sivo",
                version: env!("CARGO_PKG_VERSION"),
                command,
                arguments,
                scenario,
                outputs: Vec::new(),
                status: "running",
                error: None,
                started_unix_ms,
                wall_clock_seconds: None,
                run_seconds: BTreeMap::new(),
            },
        };
        writer.flush()?;
        Ok(writer)
    }

    fn flush(&self) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        write_file(&self.path, &text)
    }

    fn finish(mut self, result: &Result<i32, Failure>) -> Result<(), Failure> {
        self.manifest.wall_clock_seconds = Some(self.started.elapsed().as_secs_f64());
        match result {
            Ok(0) => self.manifest.status = "complete",
            Ok(_) => self.manifest.status = "partial",
            Err(f) => {
                self.manifest.status = "failed";
                self.manifest.error = Some(f.message().to_string());
            }
        }
        self.flush()
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    if !path.is_file() {
        return Err(Failure::Config(format!("{}: scenario file not found", path.display())));
    }
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

/// What a finished run left on disk.
struct RunOutput {
    label: String,
    map_points: usize,
    errors: ErrorReport,
}

fn write_run(
    out: &Path,
    gt: &TrajectoryRecord,
    result: &SequenceResult,
    files: &mut Vec<String>,
) -> Result<RunOutput, Failure> {
    let dir = out.join(&result.label);
    create_dir(&dir)?;
    let est = TrajectoryRecord::from_camera_from_world(&result.estimated());
    let traj_path = dir.join(TRAJECTORY_FILE);
    write_file(&traj_path, &write_kitti_poses(&est))?;
    let report_path = dir.join(REPORT_FILE);
    write_file(&report_path, &write_selection_report(&result.reports))?;
    files.push(traj_path.display().to_string());
    files.push(report_path.display().to_string());
    Ok(RunOutput {
        label: result.label.clone(),
        map_points: result.map_points(),
        errors: kitti_errors(gt, &est, 1)?,
    })
}

fn write_error_report(out: &Path, run: &RunOutput, baseline: Option<usize>, files: &mut Vec<String>) -> Result<ErrorReport, Failure> {
    let report = match baseline {
        Some(b) => run.errors.clone().with_map_points(b, run.map_points)?,
        None => run.errors.clone(),
    };
    let path = out.join(&run.label).join(ERROR_REPORT_FILE);
    write_file(&path, &report.to_json())?;
    files.push(path.display().to_string());
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32, Failure> {
    let mut scenario = load_scenario(&args.scenario, args.seed)?;
    if let Some(s) = args.strategy {
        scenario.selection.strategies = vec![s];
    }
    if let Some(h) = args.threshold_bits {
        scenario.selection.threshold_bits = h;
    }
    if let Some(n) = args.mc_samples {
        scenario.selection.mc_samples = n;
    }
    scenario.validate()?;
    create_dir(&args.out)?;

    let mut manifest = ManifestWriter::begin(&args.out, "simulate", args, &scenario)?;
    let result = simulate_into(&scenario, &args.out, &mut manifest.manifest);
    manifest.finish(&result)?;
    result
}

fn simulate_into<A: Serialize>(scenario: &Scenario, out: &Path, manifest: &mut RunManifest<'_, A>) -> Result<i32, Failure> {
    let scenario_path = out.join(SCENARIO_FILE);
    write_file(&scenario_path, &scenario.to_toml())?;
    manifest.outputs.push(scenario_path.display().to_string());

    let world = scenario.build_world()?;
    let trajectory = scenario.build_trajectory()?;
    let gt = TrajectoryRecord::from_camera_from_world(&trajectory);
    let gt_path = out.join(GROUND_TRUTH_FILE);
    write_file(&gt_path, &write_kitti_poses(&gt))?;
    manifest.outputs.push(gt_path.display().to_string());

    let configs: Vec<SelectionConfig> = scenario
        .selection
        .strategies
        .iter()
        .map(|&s| scenario.selection.config_for(s))
        .collect();
    let results: Vec<(f64, Result<SequenceResult, SivoError>)> = configs
        .par_iter()
        .map(|cfg| {
            let t = Instant::now();
            let r = scenario.run(&world, &trajectory, cfg);
            (t.elapsed().as_secs_f64(), r)
        })
        .collect();

    let mut runs = Vec::new();
    for (cfg, (secs, r)) in configs.iter().zip(results) {
        manifest.run_seconds.insert(cfg.label(), secs);
        runs.push(write_run(out, &gt, &r?, &mut manifest.outputs)?);
    }
    let baseline = runs.iter().find(|r| r.label == "ALL").map(|r| r.map_points);
    for run in &runs {
        let report = write_error_report(out, run, baseline, &mut manifest.outputs)?;
        let mut line = format!(
            "{:<16} map_points={:<6} trans_err={}% rot_err={} deg/m",
            run.label,
            run.map_points,
            fmt_opt(report.translation_error_percent),
            fmt_opt(report.rotation_error_deg_per_m)
        );
        if let (Some(red), true) = (report.map_reduction_percent, run.label != "ALL") {
            write!(line, " reduction={red:.2}%").expect("write to string");
        }
        println!("{line}");
    }
    Ok(0)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32, Failure> {
    let gt = parse_kitti_poses(&read_file(&args.gt)?)?;
    let est = parse_kitti_poses(&read_file(&args.est)?)?;
    for (name, rec) in [("gt", &gt), ("est", &est)] {
        if !rec.reorthonormalized.is_empty() {
            eprintln!(
                "warning: {name}: {} rotation blocks re-orthonormalized",
                rec.reorthonormalized.len()
            );
        }
    }
    let mut report = kitti_errors(&gt, &est, args.stride)?;
    if let (Some(b), Some(t)) = (&args.baseline_report, &args.test_report) {
        let baseline = count_map_points(&parse_selection_report(&read_file(b)?)?);
        let test = count_map_points(&parse_selection_report(&read_file(t)?)?);
        report = report.with_map_points(baseline, test)?;
    }
    if !report.missing_lengths_m.is_empty() {
        eprintln!(
            "warning: trajectory too short for subsequences of {:?} m",
            report.missing_lengths_m
        );
    }
    println!("translation_error_percent: {}", fmt_opt(report.translation_error_percent));
    println!("rotation_error_deg_per_m: {}", fmt_opt(report.rotation_error_deg_per_m));
    for l in &report.per_length {
        println!(
            "  {:>4} m: {:.6}% {:.6} deg/m ({} subsequences)",
            l.length_m, l.translation_error_percent, l.rotation_error_deg_per_m, l.subsequences
        );
    }
    if let (Some(b), Some(t), Some(r)) = (
        report.map_points_baseline,
        report.map_points_test,
        report.map_reduction_percent,
    ) {
        println!("map_points: {b} -> {t} ({r:.2}% reduction)");
    }
    if let Some(out) = &args.out {
        write_file(out, &report.to_json())?;
    }
    Ok(0)
}

/// One row of the sweep summary.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub config: String,
    pub translation_error_percent: Option<f64>,
    pub rotation_error_deg_per_m: Option<f64>,
    pub map_points: Option<usize>,
    pub map_reduction_percent: Option<f64>,
    pub status: String,
}

fn csv_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32, Failure> {
    if args.threshold_bits.is_empty() || args.mc_samples.is_empty() {
        return Err(Failure::Config("threshold and sample lists must be non-empty".into()));
    }
    let scenario = load_scenario(&args.scenario, args.seed)?;
    let mut cells = Vec::new();
    for &n in &args.mc_samples {
        for &h in &args.threshold_bits {
            let cfg = SelectionConfig {
                threshold_bits: h,
                strategy: args.strategy,
                mc_samples: n,
                max_selected: scenario.selection.max_selected,
            };
            cfg.validate()?;
            cells.push(cfg);
        }
    }
    create_dir(&args.out)?;
    let mut manifest = ManifestWriter::begin(&args.out, "sweep", args, &scenario)?;
    let result = sweep_into(&scenario, &args.scenario, &cells, &args.out, &mut manifest.manifest);
    manifest.finish(&result)?;
    result
}

fn sweep_into<A: Serialize>(
    scenario: &Scenario,
    scenario_path: &Path,
    cells: &[SelectionConfig],
    out: &Path,
    manifest: &mut RunManifest<'_, A>,
) -> Result<i32, Failure> {
    let resolved = out.join(SCENARIO_FILE);
    write_file(&resolved, &scenario.to_toml())?;
    manifest.outputs.push(resolved.display().to_string());
    let world = scenario.build_world()?;
    let trajectory = scenario.build_trajectory()?;
    let gt = TrajectoryRecord::from_camera_from_world(&trajectory);
    let gt_path = out.join(GROUND_TRUTH_FILE);
    write_file(&gt_path, &write_kitti_poses(&gt))?;
    manifest.outputs.push(gt_path.display().to_string());

    let baseline_cfg = scenario.selection.config_for(Strategy::AllFeatures);
    let mut jobs = vec![baseline_cfg];
    jobs.extend_from_slice(cells);
    let results: Vec<(f64, Result<SequenceResult, SivoError>)> = jobs
        .par_iter()
        .map(|cfg| {
            let t = Instant::now();
            let r = scenario.run(&world, &trajectory, cfg);
            (t.elapsed().as_secs_f64(), r)
        })
        .collect();
    let mut results = jobs.iter().zip(results);

    let (_, (secs, baseline)) = results.next().expect("baseline job");
    manifest.run_seconds.insert(baseline_cfg.label(), secs);
    let baseline = write_run(out, &gt, &baseline?, &mut manifest.outputs)?;
    write_error_report(out, &baseline, Some(baseline.map_points), &mut manifest.outputs)?;

    let mut rows = Vec::new();
    for (cfg, (secs, r)) in results {
        manifest.run_seconds.insert(cfg.label(), secs);
        let row = match r.map_err(Failure::from).and_then(|r| {
            let run = write_run(out, &gt, &r, &mut manifest.outputs)?;
            let report = write_error_report(out, &run, Some(baseline.map_points), &mut manifest.outputs)?;
            Ok((run, report))
        }) {
            Ok((run, report)) => SweepRow {
                config: run.label,
                translation_error_percent: report.translation_error_percent,
                rotation_error_deg_per_m: report.rotation_error_deg_per_m,
                map_points: Some(run.map_points),
                map_reduction_percent: report.map_reduction_percent,
                status: "ok".into(),
            },
            Err(f) => SweepRow {
                config: cfg.label(),
                translation_error_percent: None,
                rotation_error_deg_per_m: None,
                map_points: None,
                map_reduction_percent: None,
                status: format!("failed: {}", f.message()).replace([',', '\n'], ";"),
            },
        };
        rows.push(row);
    }

    let name = scenario_path
        .file_stem()
        .map_or_else(|| "scenario".to_string(), |s| s.to_string_lossy().into_owned());
    let mut csv = String::from(SUMMARY_HEADER);
    csv.push('\n');
    for row in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            name,
            csv_opt(baseline.errors.translation_error_percent),
            csv_opt(baseline.errors.rotation_error_deg_per_m),
            csv_opt(row.translation_error_percent),
            csv_opt(row.rotation_error_deg_per_m),
            baseline.map_points,
            csv_opt(row.map_points),
            csv_opt(row.map_reduction_percent),
            row.config,
            row.status
        )
        .expect("write to string");
    }
    let summary = out.join(SUMMARY_FILE);
    write_file(&summary, &csv)?;
    manifest.outputs.push(summary.display().to_string());

    println!(
        "{:<16} {:>12} {:>14} {:>10} {:>10}  status",
        "config", "trans_err_%", "rot_err_deg/m", "map_pts", "reduct_%"
    );
    println!(
        "{:<16} {:>12} {:>14} {:>10} {:>10}  baseline",
        baseline.label,
        fmt_opt(baseline.errors.translation_error_percent),
        fmt_opt(baseline.errors.rotation_error_deg_per_m),
        baseline.map_points,
        "-"
    );
    for row in &rows {
        println!(
            "{:<16} {:>12} {:>14} {:>10} {:>10}  {}",
            row.config,
            fmt_opt(row.translation_error_percent),
            fmt_opt(row.rotation_error_deg_per_m),
            csv_opt(row.map_points),
            row.map_reduction_percent.map_or_else(|| "-".into(), |r| format!("{r:.2}")),
            row.status
        );
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!("error: {failed} of {} sweep cells failed", rows.len());
        return Ok(2);
    }
    Ok(0)
}
