//! Monte-Carlo harness: error traces against sample size, first-recovery
//! times, and sweeps over the attack probability and the dimension.
//!
//! A trial draws a fresh system and one trajectory long enough for the last
//! checkpoint, then fits every selected estimator on each prefix. All
//! randomness flows from `master_seed` through [`derive_seed`], so a config
//! reproduces bit for bit regardless of thread count.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::certificate::{certify, CertificateReport, CertifyMode};
use crate::disturbances::DisturbanceModel;
use crate::dynamics::{attack_stats, random_system, simulate, AttackStats};
use crate::error::{invalid, Result};
use crate::estimators::{fit_l1_states, fit_l2norm_states, fit_ols_states, Method, L2_DEFAULT_TOL, LAD_DEFAULT_TOL};
use crate::linalg::frobenius_distance;
use crate::seed::{derive_seed, stream_seed, Stream};

pub const DEFAULT_RECOVERY_TOL: f64 = 1e-6;
pub const DEFAULT_CHECKPOINTS: [usize; 6] = [125, 250, 500, 1000, 2000, 4000];
pub const DEFAULT_TRIALS: usize = 10;

fn default_recovery_tol() -> f64 {
    DEFAULT_RECOVERY_TOL
}
fn default_checkpoints() -> Vec<usize> {
    DEFAULT_CHECKPOINTS.to_vec()
}
fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_delta() -> f64 {
    0.1
}
fn default_estimators() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_certify() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub target_norm: f64,
    pub model: DisturbanceModel,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_recovery_tol")]
    pub recovery_tol: f64,
    #[serde(default = "default_delta")]
    pub confidence_delta: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Method>,
    /// Attach a certificate at the final checkpoint when `d <= 3`.
    #[serde(default = "default_certify")]
    pub certify: bool,
}

impl ExperimentConfig {
    pub fn new(d: usize, target_norm: f64, model: DisturbanceModel) -> Self {
        Self {
            d,
            target_norm,
            model,
            checkpoints: default_checkpoints(),
            trials: DEFAULT_TRIALS,
            recovery_tol: DEFAULT_RECOVERY_TOL,
            confidence_delta: default_delta(),
            master_seed: 0,
            estimators: default_estimators(),
            certify: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d: must be positive"));
        }
        if !(self.target_norm > 0.0 && self.target_norm < 1.0) {
            return Err(invalid(format!("target_norm: {} outside (0, 1)", self.target_norm)));
        }
        self.model.validate().map_err(|e| invalid(format!("model: {e}")))?;
        self.model.check_dimension(self.d).map_err(|e| invalid(format!("model: {e}")))?;
        if self.checkpoints.is_empty() {
            return Err(invalid("checkpoints: at least one required"));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("checkpoints: must be strictly increasing"));
        }
        if self.checkpoints[0] < self.d {
            return Err(invalid(format!("checkpoints: first checkpoint must be >= d = {}", self.d)));
        }
        if self.trials == 0 {
            return Err(invalid("trials: must be at least 1"));
        }
        if !(self.recovery_tol > 0.0) {
            return Err(invalid("recovery_tol: must be positive"));
        }
        if !(self.confidence_delta > 0.0 && self.confidence_delta <= 1.0) {
            return Err(invalid("confidence_delta: must lie in (0, 1]"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("estimators: at least one estimator required"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        *self.checkpoints.last().expect("validated")
    }

    fn with_cell(&self, p: f64, d: usize) -> Result<Self> {
        let mut c = self.clone();
        c.model = c.model.with_p(p)?;
        c.d = d;
        c.validate()?;
        Ok(c)
    }
}

/// Frobenius error of one estimator at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: usize,
    /// `None` when the fit failed; see `failure`.
    pub error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default)]
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub trial: usize,
    pub seed: u64,
    pub traces: BTreeMap<Method, Vec<TracePoint>>,
    pub recovery_time: BTreeMap<Method, Option<usize>>,
    pub attack_stats: AttackStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateReport>,
}

impl TrialTrace {
    pub fn final_error(&self, method: Method) -> Option<f64> {
        self.traces.get(&method)?.last()?.error
    }
}

/// Smallest checkpoint from which the error stays below `recovery_tol`
/// through the last checkpoint. Failed fits never count as recovered.
pub fn recovery_time(trace: &[TracePoint], recovery_tol: f64) -> Option<usize> {
    let mut first = None;
    for p in trace.iter().rev() {
        match p.error {
            Some(e) if e < recovery_tol => first = Some(p.t),
            _ => break,
        }
    }
    first
}

/// Runs trial `trial_index` of `config`.
pub fn error_trace(config: &ExperimentConfig, trial_index: usize) -> Result<TrialTrace> {
    config.validate()?;
    let seed = derive_seed(config.master_seed, trial_index as u64);
    let spec = random_system(config.d, config.target_norm, stream_seed(seed, Stream::System))?;
    let traj = simulate(&spec, &config.model, config.horizon(), stream_seed(seed, Stream::Trajectory))?;

    let mut traces: BTreeMap<Method, Vec<TracePoint>> = BTreeMap::new();
    let mut warm: Option<Vec<Vec<usize>>> = None;
    for &t in &config.checkpoints {
        let states = &traj.states[..=t];
        for &method in &config.estimators {
            let fitted = match method {
                Method::Ols => fit_ols_states(states),
                Method::L2Norm => fit_l2norm_states(states, L2_DEFAULT_TOL),
                Method::L1Norm => fit_l1_states(states, LAD_DEFAULT_TOL, warm.as_deref()).map(|(r, b)| {
                    warm = Some(b);
                    r
                }),
            };
            let point = match fitted.and_then(|r| Ok((frobenius_distance(&r.a_hat, &spec.a_star)?, r.converged))) {
                Ok((err, converged)) => TracePoint { t, error: Some(err), failure: None, converged },
                Err(e) => TracePoint { t, error: None, failure: Some(e.to_string()), converged: false },
            };
            traces.entry(method).or_default().push(point);
        }
    }
    let recovery = traces.iter().map(|(m, tr)| (*m, recovery_time(tr, config.recovery_tol))).collect();
    let certificate =
        if config.certify && config.d <= 3 { certify(&traj, None, CertifyMode::Exact).ok() } else { None };
    Ok(TrialTrace {
        trial: trial_index,
        seed,
        traces,
        recovery_time: recovery,
        attack_stats: attack_stats(&traj),
        certificate,
    })
}

/// Maps `f` over `0..n` on up to `threads` workers; output is index-ordered.
pub fn parallel_map<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                slots.lock().expect("poisoned")[i] = Some(v);
            });
        }
    });
    slots.into_inner().expect("poisoned").into_iter().map(|v| v.expect("filled")).collect()
}

/// Median and quartiles; `None` stands for "never recovered" and sorts last.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub recovered: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

fn quantile(sorted: &[Option<usize>], q: f64) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    match (sorted[lo], sorted[hi]) {
        (Some(a), Some(b)) => Some(a as f64 + frac * (b as f64 - a as f64)),
        (Some(a), None) if frac == 0.0 => Some(a as f64),
        _ => None,
    }
}

pub fn summarize(times: &[Option<usize>]) -> RecoverySummary {
    let mut sorted = times.to_vec();
    sorted.sort_by_key(|t| t.unwrap_or(usize::MAX));
    let recovered = times.iter().filter(|t| t.is_some()).count();
    RecoverySummary {
        recovered,
        trials: times.len(),
        success_rate: if times.is_empty() { 0.0 } else { recovered as f64 / times.len() as f64 },
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialTrace>,
    pub summary: BTreeMap<Method, RecoverySummary>,
    /// Trials whose system or trajectory could not be generated.
    pub trial_failures: Vec<(usize, String)>,
    /// Checkpoint fits that failed, over all trials and estimators.
    pub fit_failures: usize,
}

pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> Result<RecoveryReport> {
    config.validate()?;
    let outcomes = parallel_map(config.trials, threads, |i| error_trace(config, i));
    let mut trials = Vec::new();
    let mut trial_failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(t) => trials.push(t),
            Err(e) => trial_failures.push((i, e.to_string())),
        }
    }
    let mut summary = BTreeMap::new();
    for &m in &config.estimators {
        let mut times: Vec<Option<usize>> = trials.iter().map(|t| t.recovery_time[&m]).collect();
        times.extend(trial_failures.iter().map(|_| None));
        summary.insert(m, summarize(&times));
    }
    let fit_failures = trials.iter().flat_map(|t| t.traces.values()).flatten().filter(|p| p.error.is_none()).count();
    Ok(RecoveryReport { config: config.clone(), trials, summary, trial_failures, fit_failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub p: f64,
    pub d: usize,
    pub report: RecoveryReport,
    /// The l1 estimator recovered in no trial of this cell.
    pub l1_never_recovers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, p: f64, d: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.p == p && c.d == d)
    }
}

/// Runs `base` over every `(p, d)` pair, `p` varying fastest.
pub fn sweep(base: &ExperimentConfig, p_values: &[f64], d_values: &[usize], threads: usize) -> Result<SweepTable> {
    if p_values.is_empty() || d_values.is_empty() {
        return Err(invalid("sweep grids must be nonempty"));
    }
    let cells: Vec<(f64, usize)> = d_values.iter().flat_map(|&d| p_values.iter().map(move |&p| (p, d))).collect();
    let configs = cells.iter().map(|&(p, d)| base.with_cell(p, d)).collect::<Result<Vec<_>>>()?;
    // Parallelize over (cell, trial) pairs so small grids still fill the pool.
    let units: Vec<(usize, usize)> =
        configs.iter().enumerate().flat_map(|(c, cfg)| (0..cfg.trials).map(move |t| (c, t))).collect();
    let outcomes = parallel_map(units.len(), threads, |u| {
        let (c, t) = units[u];
        error_trace(&configs[c], t)
    });
    let mut per_cell: Vec<Vec<(usize, Result<TrialTrace>)>> = (0..configs.len()).map(|_| Vec::new()).collect();
    for (&(c, t), o) in units.iter().zip(outcomes) {
        per_cell[c].push((t, o));
    }
    let mut out = Vec::with_capacity(configs.len());
    for ((cfg, &(p, d)), results) in configs.iter().zip(&cells).zip(per_cell) {
        let mut trials = Vec::new();
        let mut trial_failures = Vec::new();
        for (t, r) in results {
            match r {
                Ok(tr) => trials.push(tr),
                Err(e) => trial_failures.push((t, e.to_string())),
            }
        }
        let mut summary = BTreeMap::new();
        for &m in &cfg.estimators {
            let mut times: Vec<Option<usize>> = trials.iter().map(|t| t.recovery_time[&m]).collect();
            times.extend(trial_failures.iter().map(|_| None));
            summary.insert(m, summarize(&times));
        }
        let fit_failures =
            trials.iter().flat_map(|t| t.traces.values()).flatten().filter(|p| p.error.is_none()).count();
        let l1_never_recovers = summary.get(&Method::L1Norm).is_some_and(|s| s.recovered == 0);
        out.push(SweepCell {
            p,
            d,
            report: RecoveryReport { config: cfg.clone(), trials, summary, trial_failures, fit_failures },
            l1_never_recovers,
        });
    }
    Ok(SweepTable { cells: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturbances::{example1_model, zero_model};

    fn pts(errors: &[f64], ts: &[usize]) -> Vec<TracePoint> {
        errors
            .iter()
            .zip(ts)
            .map(|(e, t)| TracePoint { t: *t, error: Some(*e), failure: None, converged: true })
            .collect()
    }

    #[test]
    fn recovery_time_examples() {
        let ts = [100, 200, 300];
        assert_eq!(recovery_time(&pts(&[0.5, 1e-9, 1e-9], &ts), 1e-6), Some(200));
        assert_eq!(recovery_time(&pts(&[1e-9, 0.5, 1e-9], &ts), 1e-6), Some(300));
        assert_eq!(recovery_time(&pts(&[0.5, 0.4, 0.3], &ts), 1e-6), None);
        let mut failed = pts(&[0.5, 1e-9, 1e-9], &ts);
        failed[1].error = None;
        assert_eq!(recovery_time(&failed, 1e-6), Some(300));
    }

    #[test]
    fn summary_treats_missing_as_infinite() {
        let s = summarize(&[Some(100), None, Some(300), Some(200)]);
        assert_eq!(s.recovered, 3);
        assert_eq!(s.median, Some(250.0));
        let s = summarize(&[Some(100), None, None]);
        assert_eq!(s.median, None);
        assert_eq!(s.q3, None);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::new(3, 0.6, example1_model(0.7).unwrap());
        assert!(c.validate().is_ok());
        c.estimators.clear();
        assert!(c.validate().unwrap_err().to_string().contains("estimators"));
        let mut c = ExperimentConfig::new(3, 0.6, zero_model());
        c.checkpoints = vec![10, 10];
        assert!(c.validate().is_err());
        c.checkpoints = vec![2, 10];
        assert!(c.validate().is_err());
    }

    #[test]
    fn noise_free_trace_is_exact() {
        let mut c = ExperimentConfig::new(3, 0.6, zero_model());
        c.checkpoints = vec![10, 20];
        c.trials = 1;
        let tr = error_trace(&c, 0).unwrap();
        for p in &tr.traces[&Method::Ols] {
            assert!(p.error.unwrap() <= 1e-9);
        }
        assert_eq!(tr.recovery_time[&Method::Ols], Some(10));
    }

    #[test]
    fn parallel_map_preserves_order() {
        let v = parallel_map(37, 4, |i| i * i);
        assert_eq!(v, (0..37).map(|i| i * i).collect::<Vec<_>>());
    }
}
