//! Ground-truth systems and trajectory simulation for `x_{t+1} = A* x_t + w_t`.

use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::disturbances::DisturbanceModel;
use crate::error::{invalid, Error, Result};
use crate::linalg::{norm2, spectral_norm, Matrix, Vector};
use crate::seed::{rng_from_seed, Rng};

/// State norm past which a simulation is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e150;

/// The system being identified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub a_star: Matrix,
    pub x0: Vector,
}

impl SystemSpec {
    /// Checks shapes, finiteness and `‖A*‖₂ < 1`.
    pub fn new(a_star: Matrix, x0: Vector) -> Result<Self> {
        if !a_star.is_square() || a_star.rows() == 0 {
            return Err(invalid("A* must be a non-empty square matrix"));
        }
        if x0.len() != a_star.rows() {
            return Err(Error::ShapeMismatch {
                expected: format!("x0 of length {}", a_star.rows()),
                got: format!("length {}", x0.len()),
            });
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("x0 must be finite"));
        }
        let norm = spectral_norm(&a_star, 1e-10)?;
        if norm >= 1.0 {
            return Err(invalid(format!("spectral norm of A* is {norm}, must be < 1")));
        }
        Ok(Self { a_star, x0 })
    }

    pub fn dim(&self) -> usize {
        self.a_star.rows()
    }
}

/// Gaussian `A*` rescaled to spectral norm `target_norm`, Gaussian `x0`.
pub fn random_system(d: usize, target_norm: f64, seed: u64) -> Result<SystemSpec> {
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if !(target_norm > 0.0 && target_norm < 1.0) {
        return Err(invalid(format!("target norm {target_norm} outside (0, 1)")));
    }
    let mut rng: Rng = rng_from_seed(seed);
    let raw: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x0: Vector = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let m = Matrix::from_vec(d, d, raw)?;
    let s = spectral_norm(&m, 1e-12)?;
    if s == 0.0 {
        return Err(invalid("degenerate random draw"));
    }
    let a_star = m.scaled(target_norm / s);
    Ok(SystemSpec { a_star, x0 })
}

/// States `x_0..x_T`, disturbances `w_0..w_{T-1}` and attack flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub disturbances: Vec<Vector>,
    pub attack_flags: Vec<bool>,
}

impl Trajectory {
    /// Checks counts, dimensions and that quiet steps carry zero disturbance.
    pub fn new(states: Vec<Vector>, disturbances: Vec<Vector>, attack_flags: Vec<bool>) -> Result<Self> {
        let t = Self { states, disturbances, attack_flags };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.disturbances.len() + 1 {
            return Err(invalid("states.len() must equal disturbances.len() + 1"));
        }
        if self.attack_flags.len() != self.disturbances.len() {
            return Err(invalid("one attack flag per disturbance required"));
        }
        let d = self.dim();
        if d == 0 {
            return Err(invalid("zero-dimensional trajectory"));
        }
        for v in self.states.iter().chain(&self.disturbances) {
            if v.len() != d {
                return Err(invalid("inconsistent vector dimensions"));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid("non-finite trajectory entry"));
            }
        }
        for (t, (w, &flag)) in self.disturbances.iter().zip(&self.attack_flags).enumerate() {
            if !flag && w.iter().any(|v| *v != 0.0) {
                return Err(invalid(format!("step {t} is flagged quiet but has nonzero disturbance")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Number of transitions `T`.
    pub fn horizon(&self) -> usize {
        self.disturbances.len()
    }

    /// The first `t` transitions.
    pub fn prefix(&self, t: usize) -> Trajectory {
        let t = t.min(self.horizon());
        Trajectory {
            states: self.states[..=t].to_vec(),
            disturbances: self.disturbances[..t].to_vec(),
            attack_flags: self.attack_flags[..t].to_vec(),
        }
    }

    /// Largest `|x_{t+1} - A x_t - w_t|` entry; zero for a faithful record.
    pub fn recurrence_defect(&self, a: &Matrix) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.horizon() {
            let ax = a.mul_vec(&self.states[t]);
            for i in 0..self.dim() {
                let next = ax[i] + self.disturbances[t][i];
                worst = worst.max((self.states[t + 1][i] - next).abs());
            }
        }
        worst
    }

    /// Writes `t, x_1..x_d, w_1..w_d, attack_flag`; the final state row
    /// leaves the disturbance and flag columns empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.dim();
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.extend((1..=d).map(|i| format!("w_{i}")));
        header.push("attack_flag".into());
        wtr.write_record(&header)?;
        for (t, x) in self.states.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            if t < self.horizon() {
                rec.extend(self.disturbances[t].iter().map(|v| v.to_string()));
                rec.push(if self.attack_flags[t] { "1" } else { "0" }.into());
            } else {
                rec.extend(std::iter::repeat_n(String::new(), d + 1));
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }

    /// Inverse of [`Trajectory::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Trajectory> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let cols = header.len();
        if cols < 4 || (cols - 2) % 2 != 0 {
            return Err(Error::Csv(format!("unexpected column count {cols}")));
        }
        let d = (cols - 2) / 2;
        let mut expected = vec!["t".to_string()];
        expected.extend((1..=d).map(|i| format!("x_{i}")));
        expected.extend((1..=d).map(|i| format!("w_{i}")));
        expected.push("attack_flag".into());
        for (got, want) in header.iter().zip(&expected) {
            if got.trim() != want {
                return Err(Error::Csv(format!("expected column '{want}', found '{got}'")));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?);
        }
        if rows.len() < 2 {
            return Err(Error::Csv("trajectory needs at least two rows".into()));
        }
        let parse = |s: &str, col: &str, row: usize| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Csv(format!("column '{col}', row {row}: cannot parse '{s}'")))
        };
        let last = rows.len() - 1;
        let mut states = Vec::with_capacity(rows.len());
        let mut disturbances = Vec::with_capacity(last);
        let mut flags = Vec::with_capacity(last);
        for (r, rec) in rows.iter().enumerate() {
            let t = parse(&rec[0], "t", r)?;
            if t != r as f64 {
                return Err(Error::Csv(format!("column 't', row {r}: expected {r}, found {t}")));
            }
            let x = (0..d).map(|i| parse(&rec[1 + i], &expected[1 + i], r)).collect::<Result<Vector>>()?;
            states.push(x);
            if r < last {
                let w = (0..d).map(|i| parse(&rec[1 + d + i], &expected[1 + d + i], r)).collect::<Result<Vector>>()?;
                disturbances.push(w);
                let flag = match rec[cols - 1].trim() {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    other => {
                        return Err(Error::Csv(format!("column 'attack_flag', row {r}: expected 0/1, found '{other}'")))
                    }
                };
                flags.push(flag);
            }
        }
        Trajectory::new(states, disturbances, flags)
    }
}

/// Rolls the system forward `horizon` steps under `model`.
pub fn simulate(spec: &SystemSpec, model: &DisturbanceModel, horizon: usize, seed: u64) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    let d = spec.dim();
    model.check_dimension(d)?;
    let mut rng: Rng = rng_from_seed(seed);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut disturbances = Vec::with_capacity(horizon);
    let mut attack_flags = Vec::with_capacity(horizon);
    states.push(spec.x0.clone());
    for t in 0..horizon {
        let x = &states[t];
        let draw = model.sample(x, &mut rng)?;
        let mut next = spec.a_star.mul_vec(x);
        for (n, w) in next.iter_mut().zip(&draw.w) {
            *n += w;
        }
        let norm = norm2(&next);
        if !(norm <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { step: t + 1, norm });
        }
        states.push(next);
        disturbances.push(draw.w);
        attack_flags.push(draw.is_attack);
    }
    Ok(Trajectory { states, disturbances, attack_flags })
}

/// `K_T` size and `N_T` (quiet steps right after an attack).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackStats {
    pub k_t_size: usize,
    pub n_t: usize,
}

pub fn attack_stats(traj: &Trajectory) -> AttackStats {
    attack_stats_from_flags(&traj.attack_flags)
}

pub fn attack_stats_from_flags(flags: &[bool]) -> AttackStats {
    let k_t_size = flags.iter().filter(|f| **f).count();
    let n_t = flags.windows(2).filter(|w| w[0] && !w[1]).count();
    AttackStats { k_t_size, n_t }
}
