//! Disturbance models and the empirical audits that check what they claim.
//!
//! Every model follows the same two-stage recipe: one Bernoulli(`p`) draw
//! decides whether step `t` is attacked at all; if so, the whole vector `w_t`
//! is drawn from a kind-specific distribution that may depend on the current
//! state. Quiet steps have `w_t` identically zero.

use std::fmt;
use std::sync::Arc;

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{min_eig_sym, Matrix, Vector};
use crate::seed::{rng_from_seed, Rng};

/// Sign with the convention `sgn(0) = +1`.
#[inline]
pub fn sgn(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// One uniform component `U[low, high]` of a mixture, picked with `weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformComponent {
    pub weight: f64,
    pub low: f64,
    pub high: f64,
}

/// User-supplied attack rule: `(x_t, rng) -> w_t`.
#[derive(Clone)]
pub struct CustomRule {
    pub name: String,
    #[allow(clippy::type_complexity)]
    pub rule: Arc<dyn Fn(&[f64], &mut dyn RngCore) -> Vector + Send + Sync>,
}

impl fmt::Debug for CustomRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomRule({})", self.name)
    }
}

impl PartialEq for CustomRule {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.rule, &other.rule)
    }
}

/// Deterministic or user-defined adversaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AdversaryRule {
    /// `w = -magnitude · sgn(x)`, scalar systems only.
    OpposeSign { magnitude: f64 },
    /// `w = -x`: lands the next state on the origin.
    CancelState,
    #[serde(skip)]
    Custom(CustomRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceKind {
    Zero,
    /// Independent `N(mean, variance)` per coordinate.
    IidGaussian {
        mean: f64,
        variance: f64,
    },
    /// `w^i = -sgn(x^i) · γ` with `γ` drawn from a uniform mixture.
    ///
    /// Writing `γ = sgn(γ)·|γ|` gives the `α ∘ β` form: `α^i = -sgn(x^i) sgn(γ)`
    /// carries the sign and `β^i = |γ|` the magnitude. With `shared_gamma` one
    /// `γ` is drawn per step and reused across coordinates.
    SignRestricted {
        components: Vec<UniformComponent>,
        #[serde(default)]
        shared_gamma: bool,
    },
    /// `w^i ~ N(scale · (sgn(x^i) + offset), variance)`.
    ArbitraryNoncentral {
        scale: f64,
        offset: f64,
        variance: f64,
    },
    Scripted(AdversaryRule),
}

/// Attack probability plus the attack distribution, with the bounds the
/// model declares about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceModel {
    #[serde(flatten)]
    pub kind: DisturbanceKind,
    pub p: f64,
    pub declared_sigma_w: f64,
    #[serde(default)]
    pub declared_lambda: f64,
    #[serde(default)]
    pub beta_bound: Option<f64>,
}

/// One draw from a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub w: Vector,
    pub is_attack: bool,
}

impl DisturbanceModel {
    pub fn new(kind: DisturbanceKind, p: f64, declared_sigma_w: f64) -> Result<Self> {
        let beta_bound = match &kind {
            DisturbanceKind::SignRestricted { components, .. } => {
                Some(components.iter().flat_map(|c| [c.low.abs(), c.high.abs()]).fold(0.0, f64::max))
            }
            _ => None,
        };
        let m = Self { kind, p, declared_sigma_w, declared_lambda: 0.0, beta_bound };
        m.validate()?;
        Ok(m)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.declared_lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn with_p(mut self, p: f64) -> Result<Self> {
        self.p = p;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid(format!("attack probability p = {} outside [0, 1]", self.p)));
        }
        if !(self.declared_sigma_w > 0.0) || !self.declared_sigma_w.is_finite() {
            return Err(invalid("declared_sigma_w must be positive and finite"));
        }
        if !(self.declared_lambda >= 0.0) {
            return Err(invalid("declared_lambda must be non-negative"));
        }
        match &self.kind {
            DisturbanceKind::Zero | DisturbanceKind::Scripted(_) => {}
            DisturbanceKind::IidGaussian { mean, variance } => {
                if !mean.is_finite() || !(*variance >= 0.0) || !variance.is_finite() {
                    return Err(invalid("iid_gaussian needs a finite mean and variance >= 0"));
                }
            }
            DisturbanceKind::SignRestricted { components, .. } => {
                if components.is_empty() {
                    return Err(invalid("sign_restricted needs at least one component"));
                }
                for c in components {
                    if !(c.weight > 0.0) || !(c.low <= c.high) || !c.low.is_finite() || !c.high.is_finite() {
                        return Err(invalid(format!("bad mixture component {c:?}")));
                    }
                    if c.low < 0.0 && c.high > 0.0 || c.low == 0.0 && c.high == 0.0 {
                        return Err(invalid(format!(
                            "component {c:?} straddles zero; each component must have a fixed sign"
                        )));
                    }
                }
                match self.beta_bound {
                    Some(b) if b > 0.0 => {}
                    _ => return Err(invalid("sign_restricted needs beta_bound > 0")),
                }
            }
            DisturbanceKind::ArbitraryNoncentral { scale, offset, variance } => {
                if !scale.is_finite() || !offset.is_finite() || !(*variance >= 0.0) {
                    return Err(invalid("arbitrary_noncentral needs finite parameters"));
                }
            }
        }
        Ok(())
    }

    /// Dimension restriction, if the kind has one.
    pub fn check_dimension(&self, d: usize) -> Result<()> {
        if let DisturbanceKind::Scripted(AdversaryRule::OpposeSign { .. }) = self.kind {
            if d != 1 {
                return Err(invalid(format!("oppose-sign adversary needs d = 1, got d = {d}")));
            }
        }
        Ok(())
    }

    /// Draws `w_t` given the current state.
    pub fn sample<R: RngCore>(&self, x: &[f64], rng: &mut R) -> Result<Sample> {
        self.check_dimension(x.len())?;
        let attack = rng.random::<f64>() < self.p;
        if !attack {
            return Ok(Sample { w: vec![0.0; x.len()], is_attack: false });
        }
        Ok(Sample { w: self.sample_attack(x, rng)?, is_attack: true })
    }

    /// Draws from the attack distribution only (conditioned on an attack).
    pub fn sample_attack<R: RngCore>(&self, x: &[f64], rng: &mut R) -> Result<Vector> {
        self.check_dimension(x.len())?;
        let d = x.len();
        let w = match &self.kind {
            DisturbanceKind::Zero => vec![0.0; d],
            DisturbanceKind::IidGaussian { mean, variance } => {
                let n = Normal::new(*mean, variance.sqrt()).map_err(|e| invalid(e.to_string()))?;
                (0..d).map(|_| n.sample(rng)).collect()
            }
            DisturbanceKind::SignRestricted { components, shared_gamma } => {
                if *shared_gamma {
                    let g = draw_mixture(components, rng);
                    x.iter().map(|&xi| -sgn(xi) * g).collect()
                } else {
                    x.iter().map(|&xi| -sgn(xi) * draw_mixture(components, rng)).collect()
                }
            }
            DisturbanceKind::ArbitraryNoncentral { scale, offset, variance } => {
                let sd = variance.sqrt();
                x.iter()
                    .map(|&xi| {
                        let n = Normal::new(scale * (sgn(xi) + offset), sd).map_err(|e| invalid(e.to_string()))?;
                        Ok(n.sample(rng))
                    })
                    .collect::<Result<Vector>>()?
            }
            DisturbanceKind::Scripted(rule) => match rule {
                AdversaryRule::OpposeSign { magnitude } => x.iter().map(|&xi| -magnitude * sgn(xi)).collect(),
                AdversaryRule::CancelState => x.iter().map(|v| -v).collect(),
                AdversaryRule::Custom(c) => {
                    let w = (c.rule)(x, rng);
                    if w.len() != d {
                        return Err(invalid(format!(
                            "custom rule {} returned {} coordinates, expected {d}",
                            c.name,
                            w.len()
                        )));
                    }
                    w
                }
            },
        };
        Ok(w)
    }
}

fn draw_mixture<R: RngCore>(components: &[UniformComponent], rng: &mut R) -> f64 {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    let mut u = rng.random::<f64>() * total;
    let mut chosen = components[components.len() - 1];
    for c in components {
        if u < c.weight {
            chosen = *c;
            break;
        }
        u -= c.weight;
    }
    chosen.low + (chosen.high - chosen.low) * rng.random::<f64>()
}

/// Mixture for `γ`: `U[-3,-1]` or `U[10,20]`, each with probability one half.
pub fn example1_components() -> Vec<UniformComponent> {
    vec![
        UniformComponent { weight: 0.5, low: -3.0, high: -1.0 },
        UniformComponent { weight: 0.5, low: 10.0, high: 20.0 },
    ]
}

/// Sign-symmetric noncentral attacks: `w^i = -sgn(x^i) γ`.
pub fn example1_model(p: f64) -> Result<DisturbanceModel> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("example1 needs 0 < p < 1, got {p}")));
    }
    DisturbanceModel::new(
        DisturbanceKind::SignRestricted { components: example1_components(), shared_gamma: false },
        p,
        20.0,
    )
}

/// Arbitrary positive-biased attacks: `w^i ~ N(100 (sgn(x^i) + 2), 5)`.
pub fn example2_model(p: f64) -> Result<DisturbanceModel> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("example2 needs 0 < p < 1, got {p}")));
    }
    DisturbanceModel::new(DisturbanceKind::ArbitraryNoncentral { scale: 100.0, offset: 2.0, variance: 5.0 }, p, 310.0)?
        .with_lambda(5f64.sqrt())
}

/// Scalar deception: attack every step with `w = -sgn(x)`.
pub fn remark1_model() -> DisturbanceModel {
    DisturbanceModel {
        kind: DisturbanceKind::Scripted(AdversaryRule::OpposeSign { magnitude: 1.0 }),
        p: 1.0,
        declared_sigma_w: 1.0,
        declared_lambda: 0.0,
        beta_bound: None,
    }
}

/// Always-attacking i.i.d. Gaussian noise, the classical OLS setting.
pub fn gaussian_model(p: f64, variance: f64) -> Result<DisturbanceModel> {
    DisturbanceModel::new(DisturbanceKind::IidGaussian { mean: 0.0, variance }, p, variance.sqrt().max(1e-12))?
        .with_lambda(variance.sqrt())
}

pub fn zero_model() -> DisturbanceModel {
    DisturbanceModel {
        kind: DisturbanceKind::Zero,
        p: 0.0,
        declared_sigma_w: 1.0,
        declared_lambda: 0.0,
        beta_bound: None,
    }
}

/// Empirical sign frequencies of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignFrequencies {
    pub freq_pos: f64,
    pub freq_neg: f64,
    pub freq_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryAudit {
    /// `per_probe[k][i]`: coordinate `i` at probe state `k`.
    pub per_probe: Vec<Vec<SignFrequencies>>,
    /// `max |freq_pos - freq_neg|` over probes and coordinates.
    pub max_deviation: f64,
    pub samples: usize,
}

/// Sign frequencies of attack-conditioned `w^i` at each probe state.
pub fn symmetry_audit(model: &DisturbanceModel, probe_states: &[Vector], n: usize, seed: u64) -> Result<SymmetryAudit> {
    if n < 1000 {
        return Err(invalid(format!("symmetry audit needs n >= 1000, got {n}")));
    }
    let mut rng: Rng = rng_from_seed(seed);
    let mut per_probe = Vec::with_capacity(probe_states.len());
    let mut max_deviation: f64 = 0.0;
    for x in probe_states {
        let d = x.len();
        let mut counts = vec![[0usize; 3]; d];
        for _ in 0..n {
            let w = model.sample_attack(x, &mut rng)?;
            for (c, wi) in counts.iter_mut().zip(&w) {
                let slot = if *wi > 0.0 {
                    0
                } else if *wi < 0.0 {
                    1
                } else {
                    2
                };
                c[slot] += 1;
            }
        }
        let freqs: Vec<SignFrequencies> = counts
            .iter()
            .map(|c| SignFrequencies {
                freq_pos: c[0] as f64 / n as f64,
                freq_neg: c[1] as f64 / n as f64,
                freq_zero: c[2] as f64 / n as f64,
            })
            .collect();
        for f in &freqs {
            max_deviation = max_deviation.max((f.freq_pos - f.freq_neg).abs());
        }
        per_probe.push(freqs);
    }
    Ok(SymmetryAudit { per_probe, max_deviation, samples: n })
}

/// Estimate of `λ²`: minimum over probe states of the smallest eigenvalue of
/// the empirical second moment of `x + w` under attack.
pub fn nondegeneracy_probe(model: &DisturbanceModel, probe_states: &[Vector], n: usize, seed: u64) -> Result<f64> {
    if n < 1000 {
        return Err(invalid(format!("nondegeneracy probe needs n >= 1000, got {n}")));
    }
    if probe_states.is_empty() {
        return Err(invalid("no probe states"));
    }
    let mut rng: Rng = rng_from_seed(seed);
    let mut best = f64::INFINITY;
    for x in probe_states {
        let d = x.len();
        let mut m = Matrix::zeros(d, d);
        for _ in 0..n {
            let w = model.sample_attack(x, &mut rng)?;
            let v: Vector = x.iter().zip(&w).map(|(a, b)| a + b).collect();
            for r in 0..d {
                for c in r..d {
                    m[(r, c)] += v[r] * v[c];
                }
            }
        }
        for r in 0..d {
            for c in r..d {
                let val = m[(r, c)] / n as f64;
                m[(r, c)] = val;
                m[(c, r)] = val;
            }
        }
        best = best.min(min_eig_sym(&m)?);
    }
    Ok(best)
}

/// Fraction of attacked steps over `n` draws at state `x`.
pub fn attack_frequency(model: &DisturbanceModel, x: &[f64], n: usize, seed: u64) -> Result<f64> {
    let mut rng: Rng = rng_from_seed(seed);
    let mut hits = 0usize;
    for _ in 0..n {
        if model.sample(x, &mut rng)?.is_attack {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}
