use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use advsysid::certificate::{certify, CertificateReport, CertifyMode};
use advsysid::dynamics::{attack_stats, random_system, simulate, AttackStats, SystemSpec, Trajectory};
use advsysid::estimators::{fit, Method};
use advsysid::experiments::{sweep, RecoverySummary, SweepCell};
use advsysid::linalg::frobenius_distance;
use advsysid::seed::{derive_seed, stream_seed, Stream};
use serde::Serialize;

use crate::config::{self, RunConfig};
use crate::svg::{error_plot, Series};
use crate::{runtime, CliError, RunManifest, MANIFEST_FILE};

/// Exact certification is limited to this dimension; beyond it the net
/// would need `(1 + 2/ε)^d` directions.
pub const MAX_EXACT_DIM: usize = 3;

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub threads: usize,
}

impl Invocation {
    fn start(&self, subcommand: &str) -> Result<(RunConfig, RunManifest), CliError> {
        if self.threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        let config = config::load(&self.config_path, self.seed)?;
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| runtime(format!("cannot create output directory {}: {e}", self.out_dir.display())))?;
        let manifest = RunManifest::new(subcommand, &config, &self.config_path, &self.out_dir, self.threads);
        Ok((config, manifest))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::Usage(format!("cannot open trajectory {}: {e}", path.display())))?;
    Trajectory::read_csv(file).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// The system of trial 0; `simulate` output matches trial 0 of `experiment`.
fn system_for(config: &RunConfig) -> Result<SystemSpec, CliError> {
    match &config.system {
        Some(s) => s.to_spec().map_err(|e| CliError::Usage(format!("system: {e}"))),
        None => {
            let seed = stream_seed(derive_seed(config.seed, 0), Stream::System);
            random_system(config.d, config.target_norm, seed).map_err(|e| runtime(e.to_string()))
        }
    }
}

pub fn cmd_simulate(inv: &Invocation) -> Result<(), CliError> {
    let (config, mut manifest) = inv.start("simulate")?;
    let spec = system_for(&config)?;
    manifest.system = Some(spec.clone());
    write_json(&inv.path(MANIFEST_FILE), &manifest)?;

    let seed = stream_seed(derive_seed(config.seed, 0), Stream::Trajectory);
    let traj = simulate(&spec, &config.model, config.horizon, seed).map_err(|e| runtime(e.to_string()))?;
    let path = inv.path("trajectory.csv");
    let mut w = create(&path)?;
    traj.write_csv(&mut w).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    w.flush().map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let stats = attack_stats(&traj);
    println!(
        "wrote {} (d = {}, T = {}, attacked steps {}, quiet-after-attack steps {})",
        path.display(),
        traj.dim(),
        traj.horizon(),
        stats.k_t_size,
        stats.n_t
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct FitOutput {
    method: Method,
    d: usize,
    horizon: usize,
    a_hat: Vec<Vec<f64>>,
    objective: f64,
    iterations: usize,
    converged: bool,
    tol: f64,
    non_unique: bool,
    /// `‖Â − A*‖_F` when the ground truth is known.
    frobenius_error: Option<f64>,
}

/// Ground truth from the config, or from the manifest `simulate` left next
/// to the trajectory.
fn known_system(config: &RunConfig, trajectory: &Path) -> Option<SystemSpec> {
    if let Some(s) = &config.system {
        return s.to_spec().ok();
    }
    let manifest = trajectory.parent().unwrap_or(Path::new(".")).join(MANIFEST_FILE);
    RunManifest::read(&manifest).ok()?.system
}

pub fn cmd_fit(inv: &Invocation, trajectory: &Path) -> Result<(), CliError> {
    let (config, mut manifest) = inv.start("fit")?;
    manifest.trajectory = Some(trajectory.to_path_buf());
    let traj = read_trajectory(trajectory)?;
    let truth = known_system(&config, trajectory).filter(|s| s.dim() == traj.dim());
    write_json(&inv.path(MANIFEST_FILE), &manifest)?;

    let mut failures = Vec::new();
    for &method in &config.estimators {
        let result = match fit(method, &traj.states) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {method} fit failed: {e}");
                failures.push(method.name());
                continue;
            }
        };
        let frobenius_error = truth.as_ref().and_then(|s| frobenius_distance(&result.a_hat, &s.a_star).ok());
        let out = FitOutput {
            method,
            d: traj.dim(),
            horizon: traj.horizon(),
            a_hat: result.a_hat.to_rows(),
            objective: result.objective,
            iterations: result.iterations,
            converged: result.converged,
            tol: result.tol,
            non_unique: result.non_unique,
            frobenius_error,
        };
        write_json(&inv.path(&format!("fit_{}.json", method.name())), &out)?;
        let err = frobenius_error.map_or("unknown".into(), |e| format!("{e:.3e}"));
        println!(
            "{:<7} objective {:.6e}  error {err}  converged {}",
            method.name(),
            result.objective,
            result.converged
        );
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!("fits failed: {}", failures.join(", "))))
    }
}

pub fn cmd_certify(inv: &Invocation, trajectory: &Path, sampled: Option<usize>) -> Result<(), CliError> {
    let (config, mut manifest) = inv.start("certify")?;
    manifest.trajectory = Some(trajectory.to_path_buf());
    manifest.sampled = sampled;
    let traj = read_trajectory(trajectory)?;
    let d = traj.dim();
    let mode = match sampled {
        Some(0) => return Err(CliError::Usage("--sampled needs at least one direction".into())),
        Some(n) => CertifyMode::Sampled { n, seed: stream_seed(config.seed, Stream::Audit) },
        None if d > MAX_EXACT_DIM => {
            return Err(CliError::Usage(format!(
                "exact certification covers the unit sphere with an epsilon-net of up to (1 + 2/epsilon)^d \
                 directions, capped at 1e7; it is supported for d <= {MAX_EXACT_DIM} and this trajectory has \
                 d = {d}. Pass --sampled N to collect sampled evidence instead (never certifies)."
            )))
        }
        None => CertifyMode::Exact,
    };
    write_json(&inv.path(MANIFEST_FILE), &manifest)?;

    let report: CertificateReport = certify(&traj, config.epsilon, mode).map_err(|e| match e {
        advsysid::Error::NetTooLarge { .. } | advsysid::Error::InvalidInput(_) => CliError::Usage(e.to_string()),
        other => runtime(other.to_string()),
    })?;
    write_json(&inv.path("certificate.json"), &report)?;
    println!(
        "certified {}  margin {:.6e}  min z-sum {:?}  directions {}",
        report.certified, report.margin, report.per_coordinate_min, report.directions
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct CellReport<'a> {
    p: f64,
    d: usize,
    trials: usize,
    confidence_delta: f64,
    summary: &'a BTreeMap<Method, RecoverySummary>,
    recovery_times: BTreeMap<Method, Vec<Option<usize>>>,
    l1_never_recovers: bool,
    trial_failures: &'a [(usize, String)],
    fit_failures: usize,
    attack_stats: Vec<AttackStats>,
    certificates: Vec<Option<&'a CertificateReport>>,
    trace_csv: String,
    plot_svg: String,
}

#[derive(Debug, Serialize)]
struct ExperimentReport<'a> {
    config: &'a RunConfig,
    warnings: usize,
    cells: Vec<CellReport<'a>>,
}

fn cell_stem(p: f64, d: usize) -> String {
    format!("p{p}_d{d}")
}

fn write_trace_csv(path: &Path, cell: &SweepCell) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| runtime(format!("{}: {e}", path.display()));
    w.write_record(["trial", "estimator", "T", "frobenius_error"]).map_err(err)?;
    for trial in &cell.report.trials {
        for (method, points) in &trial.traces {
            for p in points {
                let e = p.error.map_or(String::new(), |v| format!("{v:e}"));
                w.write_record([trial.trial.to_string(), method.name().into(), p.t.to_string(), e]).map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Median over successful trials of the error at each checkpoint.
fn median_series(cell: &SweepCell, method: Method, checkpoints: &[usize]) -> Series {
    let points = checkpoints
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut errs: Vec<f64> = cell
                .report
                .trials
                .iter()
                .filter_map(|tr| tr.traces.get(&method).and_then(|pts| pts.get(k)).and_then(|p| p.error))
                .collect();
            errs.sort_by(f64::total_cmp);
            let n = errs.len();
            let median = match n {
                0 => None,
                _ if n % 2 == 1 => Some(errs[n / 2]),
                _ => Some(0.5 * (errs[n / 2 - 1] + errs[n / 2])),
            };
            (t, median)
        })
        .collect();
    Series { name: method.name().into(), points }
}

pub fn cmd_experiment(inv: &Invocation) -> Result<(), CliError> {
    let (config, manifest) = inv.start("experiment")?;
    write_json(&inv.path(MANIFEST_FILE), &manifest)?;

    let (p0, d0) = config.cells()[0];
    let base = config.experiment(p0, d0)?;
    let table = sweep(&base, &config.grid.p, &config.grid.d, inv.threads).map_err(|e| runtime(e.to_string()))?;

    let mut sweep_csv = csv::Writer::from_writer(create(&inv.path("sweep.csv"))?);
    let sweep_err = |e: csv::Error| runtime(format!("sweep.csv: {e}"));
    sweep_csv.write_record(["p", "d", "estimator", "trial", "recovery_time_or_blank"]).map_err(sweep_err)?;

    let mut warnings = 0;
    let mut cells = Vec::new();
    for cell in &table.cells {
        let stem = cell_stem(cell.p, cell.d);
        let trace_csv = format!("trace_{stem}.csv");
        let plot_svg = format!("plot_{stem}.svg");
        write_trace_csv(&inv.path(&trace_csv), cell)?;
        let series: Vec<Series> =
            config.estimators.iter().map(|&m| median_series(cell, m, &config.checkpoints)).collect();
        let title = format!("p = {}, d = {} (median of {} trials)", cell.p, cell.d, cell.report.trials.len());
        write_text(&inv.path(&plot_svg), &error_plot(&title, &series))?;

        let mut recovery_times: BTreeMap<Method, Vec<Option<usize>>> = BTreeMap::new();
        for trial in &cell.report.trials {
            for (&m, &rt) in &trial.recovery_time {
                recovery_times.entry(m).or_default().push(rt);
                let rt = rt.map_or(String::new(), |v| v.to_string());
                sweep_csv
                    .write_record([
                        cell.p.to_string(),
                        cell.d.to_string(),
                        m.name().into(),
                        trial.trial.to_string(),
                        rt,
                    ])
                    .map_err(sweep_err)?;
            }
        }
        warnings += cell.report.trial_failures.len() + cell.report.fit_failures;
        cells.push(CellReport {
            p: cell.p,
            d: cell.d,
            trials: cell.report.config.trials,
            confidence_delta: cell.report.config.confidence_delta,
            summary: &cell.report.summary,
            recovery_times,
            l1_never_recovers: cell.l1_never_recovers,
            trial_failures: &cell.report.trial_failures,
            fit_failures: cell.report.fit_failures,
            attack_stats: cell.report.trials.iter().map(|t| t.attack_stats).collect(),
            certificates: cell.report.trials.iter().map(|t| t.certificate.as_ref()).collect(),
            trace_csv,
            plot_svg,
        });
        let l1 = cell.report.summary.get(&Method::L1Norm);
        println!(
            "p = {}, d = {}: l1 recovered in {}/{} trials, median recovery T {}",
            cell.p,
            cell.d,
            l1.map_or(0, |s| s.recovered),
            cell.report.config.trials,
            l1.and_then(|s| s.median).map_or("never".into(), |m| m.to_string())
        );
    }
    sweep_csv.flush().map_err(|e| runtime(format!("sweep.csv: {e}")))?;
    write_json(&inv.path("report.json"), &ExperimentReport { config: &config, warnings, cells })?;
    if warnings > 0 {
        eprintln!("warning: {warnings} failed trials or fits; see report.json");
    }
    Ok(())
}
