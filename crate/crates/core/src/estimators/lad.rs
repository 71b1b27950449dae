//! Exact least-absolute-deviations regression.
//!
//! `min_a Σ_t |y_t - x_tᵀ a|` is a linear program whose optimum is attained
//! at a vertex: a coefficient vector interpolating `d` of the observations
//! (the basis). The solver walks from vertex to vertex along edges of the
//! LP polytope. At each vertex it prices the `2d` edges obtained by releasing
//! one basic observation in either direction, takes the steepest descending
//! edge, and moves along it to the exact minimizer of the objective on that
//! line (a weighted median of the residual breakpoints), which makes a new
//! observation basic. This is the bounded-variable simplex method on the LP
//! dual, with long steps across breakpoints.
//!
//! Vertices with more than `d` zero residuals are degenerate. Each nonbasic
//! zero residual is assigned a side (the sign it is treated as having), and
//! pricing uses those sides; a descending edge that pushes a zero residual to
//! the other side stops at length 0 and swaps it into the basis. Bland's rule
//! after such pivots prevents cycling.

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm2, Lu, Matrix, Vector};
use crate::seed::mix64;

use super::{check_states, EstimatorResult, Method};

pub const LAD_DEFAULT_TOL: f64 = 1e-9;

/// Target perturbation of the first pass, relative to the RMS target.
const PERTURBATION: f64 = 1e-7;

/// Solution of one LAD problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadFit {
    pub coef: Vector,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Some edge out of the optimal vertex is flat: the argmin is a face.
    pub non_unique: bool,
    /// Indices of the interpolated observations at the optimal vertex.
    pub basis: Vec<usize>,
}

/// Minimizes `Σ_t |targets[t] - regressors[t]ᵀ a|`.
pub fn lad_row(regressors: &[Vector], targets: &[f64], tol: f64) -> Result<LadFit> {
    lad_row_warm(regressors, targets, tol, None)
}

/// [`lad_row`] started from the vertex interpolating the observations in
/// `basis_hint`, when that basis is valid; otherwise from a cold start.
pub fn lad_row_warm(regressors: &[Vector], targets: &[f64], tol: f64, basis_hint: Option<&[usize]>) -> Result<LadFit> {
    let solver = Solver::new(regressors, targets, tol)?;
    solver.solve(basis_hint)
}

pub fn fit_l1(traj: &Trajectory, tol: f64) -> Result<EstimatorResult> {
    fit_l1_states(&traj.states, tol, None).map(|(r, _)| r)
}

/// Row-decoupled l1 fit. Returns the optimal bases too, so a longer prefix
/// of the same trajectory can be warm-started from them.
pub fn fit_l1_states(
    states: &[Vector],
    tol: f64,
    warm: Option<&[Vec<usize>]>,
) -> Result<(EstimatorResult, Vec<Vec<usize>>)> {
    let d = check_states(states)?;
    let horizon = states.len() - 1;
    let regressors = &states[..horizon];
    let mut a_hat = Matrix::zeros(d, d);
    let mut objective = 0.0;
    let mut iterations = 0;
    let mut converged = true;
    let mut non_unique = false;
    let mut bases = Vec::with_capacity(d);
    for i in 0..d {
        let targets: Vec<f64> = states[1..].iter().map(|x| x[i]).collect();
        let hint = warm.and_then(|w| w.get(i)).map(Vec::as_slice);
        let fit =
            lad_row_warm(regressors, &targets, tol, hint).map_err(|e| Error::Row { row: i, source: Box::new(e) })?;
        a_hat.row_mut(i).copy_from_slice(&fit.coef);
        objective += fit.objective;
        iterations += fit.iterations;
        converged &= fit.converged;
        non_unique |= fit.non_unique;
        bases.push(fit.basis);
    }
    Ok((EstimatorResult { a_hat, objective, method: Method::L1Norm, iterations, converged, tol, non_unique }, bases))
}

#[derive(Clone, Copy)]
struct Solver<'a> {
    x: &'a [Vector],
    y: &'a [f64],
    d: usize,
    n: usize,
    tol: f64,
    /// Residuals below this multiple of their magnitude scale count as zero.
    zero_rel: f64,
    sum_norms: f64,
}

struct Vertex {
    lu: Lu,
    coef: Vector,
    residuals: Vector,
    zero: Vec<bool>,
}

impl<'a> Solver<'a> {
    fn new(x: &'a [Vector], y: &'a [f64], tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        if x.len() != y.len() {
            return Err(invalid(format!("{} regressors but {} targets", x.len(), y.len())));
        }
        let d = x.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(invalid("empty regression problem"));
        }
        if x.len() < d {
            return Err(invalid(format!("need at least d = {d} observations, have {}", x.len())));
        }
        if x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) || y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("regressors must be finite vectors of equal length"));
        }
        let sum_norms = x.iter().map(|r| norm2(r)).sum();
        Ok(Self { x, y, d, n: x.len(), tol, zero_rel: (0.1 * tol).min(1e-10), sum_norms })
    }

    /// Solves a copy with slightly perturbed targets first. That copy has no
    /// degenerate vertices, so every pivot descends; its optimal basis and
    /// residual signs then start the exact run on the original targets,
    /// which usually only has to confirm optimality.
    fn solve(&self, hint: Option<&[usize]>) -> Result<LadFit> {
        let basis = match hint.filter(|h| self.valid_basis(h)) {
            Some(h) => h.to_vec(),
            None => self.initial_basis()?,
        };
        let perturbed = self.perturbed_targets();
        // Rounding-level residuals only; the perturbation is far above this.
        let shadow = Solver { y: &perturbed, zero_rel: 1e-13, ..*self };
        let first = shadow.run(basis, vec![0.0; self.n], true)?;
        let side = first.vertex.residuals.iter().map(|r| if *r < 0.0 { -1.0 } else { 1.0 }).collect();
        let exact = self.run(first.basis, side, false)?;

        let non_unique = self.has_flat_edge(&exact.vertex, &exact.in_basis);
        let objective = exact.vertex.residuals.iter().map(|r| r.abs()).sum();
        Ok(LadFit {
            coef: exact.vertex.coef,
            objective,
            iterations: first.iterations + exact.iterations,
            converged: exact.converged,
            non_unique,
            basis: exact.basis,
        })
    }

    fn perturbed_targets(&self) -> Vector {
        let ms = self.y.iter().map(|v| v * v).sum::<f64>() / self.n as f64;
        let scale = PERTURBATION * if ms > 0.0 { ms.sqrt() } else { 1.0 };
        self.y
            .iter()
            .enumerate()
            .map(|(t, v)| {
                let h = mix64(t as u64);
                let mag = 0.5 + 0.5 * (h >> 11) as f64 / (1u64 << 53) as f64;
                let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
                v + sign * mag * scale
            })
            .collect()
    }

    /// Simplex iterations from `basis`. `side` holds the assumed sign of
    /// each observation, consulted only where the residual is zero. With
    /// `stop_on_stall`, a pivot that fails to lower the objective ends the run.
    fn run(&self, mut basis: Vec<usize>, mut side: Vec<f64>, stop_on_stall: bool) -> Result<Run> {
        let mut in_basis = vec![false; self.n];
        for &b in &basis {
            in_basis[b] = true;
        }
        let max_iterations = 50 * self.n + 1000;
        let mut iterations = 0;
        let mut converged = true;
        let mut degenerate = false;
        let mut last_objective = f64::INFINITY;

        let vertex = loop {
            let v = self.vertex(&basis)?;
            if stop_on_stall {
                let objective: f64 = v.residuals.iter().map(|r| r.abs()).sum();
                if objective >= last_objective {
                    break v;
                }
                last_objective = objective;
            }
            for t in 0..self.n {
                if !v.zero[t] {
                    side[t] = 0.0;
                } else if side[t] == 0.0 {
                    side[t] = if v.residuals[t] < 0.0 { -1.0 } else { 1.0 };
                }
            }

            let Some((j, sign, slope)) = self.price(&v, &in_basis, &side, &basis, degenerate) else {
                break v;
            };
            if iterations >= max_iterations {
                converged = false;
                break v;
            }
            iterations += 1;

            let mut dir = v.lu.solve(&unit(self.d, j));
            dir.iter_mut().for_each(|c| *c *= sign);
            let leaving = basis[j];
            let step = self.line_search(&v, &in_basis, &side, &dir, slope)?;
            degenerate = step.length == 0.0;
            for &(t, c) in &step.crossed {
                side[t] = -c.signum();
            }
            let entering = step.entering;
            in_basis[leaving] = false;
            in_basis[entering] = true;
            basis[j] = entering;
            side[leaving] = -sign;
            side[entering] = 0.0;
        };
        Ok(Run { vertex, basis, in_basis, iterations, converged })
    }

    fn valid_basis(&self, h: &[usize]) -> bool {
        if h.len() != self.d || h.iter().any(|&i| i >= self.n) {
            return false;
        }
        let mut sorted = h.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        sorted.len() == self.d && Lu::new(&self.basis_matrix(h), 1e-12).is_some()
    }

    fn basis_matrix(&self, basis: &[usize]) -> Matrix {
        let rows: Vec<Vector> = basis.iter().map(|&b| self.x[b].clone()).collect();
        Matrix::from_rows(&rows).expect("finite regressors")
    }

    fn is_zero(&self, t: usize, r: f64, coef: &[f64]) -> bool {
        let scale = self.y[t].abs() + self.x[t].iter().zip(coef).map(|(x, a)| (x * a).abs()).sum::<f64>();
        r.abs() <= self.zero_rel * scale
    }

    fn vertex(&self, basis: &[usize]) -> Result<Vertex> {
        let lu =
            Lu::new(&self.basis_matrix(basis), 1e-14).ok_or_else(|| Error::Lp(format!("singular basis {basis:?}")))?;
        let yb: Vector = basis.iter().map(|&b| self.y[b]).collect();
        let coef = lu.solve(&yb);
        let mut residuals = Vec::with_capacity(self.n);
        let mut zero = Vec::with_capacity(self.n);
        for t in 0..self.n {
            let r = self.y[t] - dot(&self.x[t], &coef);
            zero.push(self.is_zero(t, r, &coef));
            residuals.push(r);
        }
        for &b in basis {
            residuals[b] = 0.0;
            zero[b] = true;
        }
        Ok(Vertex { lu, coef, residuals, zero })
    }

    /// Picks a descending edge, or `None` at an optimal vertex. Edge `(j, ±1)`
    /// releases basic observation `j` to the side `∓1`; its slope counts each
    /// nonbasic zero residual on its assigned side, so "no descending edge"
    /// is a genuine optimality certificate even at degenerate vertices.
    /// After a degenerate pivot the lowest-index observation leaves (Bland).
    fn price(
        &self,
        v: &Vertex,
        in_basis: &[bool],
        side: &[f64],
        basis: &[usize],
        bland: bool,
    ) -> Option<(usize, f64, f64)> {
        let d = self.d;
        let mut g = vec![0.0; d];
        for t in 0..self.n {
            if in_basis[t] {
                continue;
            }
            let s = if v.zero[t] { side[t] } else { v.residuals[t].signum() };
            for (gk, xk) in g.iter_mut().zip(&self.x[t]) {
                *gk += s * xk;
            }
        }
        let u = v.lu.solve_transpose(&g);
        let inv = v.lu.inverse();

        let mut entering: Option<(usize, f64, f64)> = None;
        let mut best = f64::INFINITY;
        for j in 0..d {
            let col_norm = (0..d).map(|r| inv[(r, j)] * inv[(r, j)]).sum::<f64>().sqrt();
            let threshold = self.tol * (1.0 + col_norm * self.sum_norms);
            for sign in [1.0, -1.0] {
                let slope = 1.0 - sign * u[j];
                if slope >= -threshold {
                    continue;
                }
                let key = if bland { basis[j] as f64 } else { slope / col_norm };
                if key < best {
                    best = key;
                    entering = Some((j, sign, slope));
                }
            }
        }
        entering
    }

    /// Whether some edge out of `v` leaves the objective unchanged to first
    /// order, counting zero residuals by their true kink `|x_tᵀδ|`.
    fn has_flat_edge(&self, v: &Vertex, in_basis: &[bool]) -> bool {
        let d = self.d;
        let mut g = vec![0.0; d];
        let mut kink = vec![0.0; d];
        for t in 0..self.n {
            if in_basis[t] {
                continue;
            }
            if v.zero[t] {
                let c = v.lu.solve_transpose(&self.x[t]);
                for (k, cj) in kink.iter_mut().zip(&c) {
                    *k += cj.abs();
                }
            } else {
                let s = v.residuals[t].signum();
                for (gk, xk) in g.iter_mut().zip(&self.x[t]) {
                    *gk += s * xk;
                }
            }
        }
        let u = v.lu.solve_transpose(&g);
        let inv = v.lu.inverse();
        (0..d).any(|j| {
            let col_norm = (0..d).map(|r| inv[(r, j)] * inv[(r, j)]).sum::<f64>().sqrt();
            let threshold = self.tol * (1.0 + col_norm * self.sum_norms);
            [1.0, -1.0].iter().any(|sign| 1.0 - sign * u[j] + kink[j] <= threshold)
        })
    }

    /// Exact minimizer of the objective along `dir`. The slope starts at
    /// `slope` and jumps by `2|x_tᵀdir|` at each breakpoint; nonbasic zero
    /// residuals assigned to the side `dir` moves away from break at 0.
    fn line_search(&self, v: &Vertex, in_basis: &[bool], side: &[f64], dir: &[f64], slope: f64) -> Result<Step> {
        let mut breaks: Vec<(f64, f64, usize)> = Vec::new();
        for t in 0..self.n {
            if in_basis[t] {
                continue;
            }
            let c = dot(&self.x[t], dir);
            if c == 0.0 {
                continue;
            }
            if v.zero[t] {
                // The residual moves to the side -sgn(c).
                if side[t] * c > 0.0 {
                    breaks.push((0.0, c, t));
                }
                continue;
            }
            let b = v.residuals[t] / c;
            if b > 0.0 {
                breaks.push((b, c, t));
            }
        }
        breaks.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let mut deriv = slope;
        let mut crossed = Vec::new();
        for (b, c, t) in breaks {
            deriv += 2.0 * c.abs();
            if deriv >= 0.0 {
                return Ok(Step { entering: t, length: b, crossed });
            }
            if b == 0.0 {
                crossed.push((t, c));
            }
        }
        Err(Error::Lp(format!("objective unbounded below along {dir:?}")))
    }

    /// Reaches a first vertex from `a = 0` by `d` exact line searches, each
    /// restricted to directions that keep earlier interpolations intact.
    fn initial_basis(&self) -> Result<Vec<usize>> {
        let d = self.d;
        let mut coef = vec![0.0; d];
        let mut active = vec![false; self.n];
        let mut basis = Vec::with_capacity(d);
        let mut ortho: Vec<Vector> = Vec::with_capacity(d);
        for _ in 0..d {
            let residuals: Vector = (0..self.n).map(|t| self.y[t] - dot(&self.x[t], &coef)).collect();
            let mut g = vec![0.0; d];
            for t in 0..self.n {
                if active[t] || residuals[t] == 0.0 {
                    continue;
                }
                let s = residuals[t].signum();
                for (gk, xk) in g.iter_mut().zip(&self.x[t]) {
                    *gk += s * xk;
                }
            }
            let mut dir = project_out(&g, &ortho);
            if norm2(&dir) <= 1e-10 * norm2(&g) || norm2(&dir) == 0.0 {
                dir = (0..d)
                    .map(|m| project_out(&unit(d, m), &ortho))
                    .max_by(|a, b| norm2(a).total_cmp(&norm2(b)))
                    .expect("d >= 1");
            }
            let dn = norm2(&dir);
            let mut cands: Vec<(f64, f64, usize)> = Vec::new();
            for t in 0..self.n {
                if active[t] {
                    continue;
                }
                let c = dot(&self.x[t], &dir);
                if c.abs() > 1e-12 * norm2(&self.x[t]) * dn {
                    cands.push((residuals[t] / c, c.abs(), t));
                }
            }
            if cands.is_empty() {
                return Err(Error::InsufficientExcitation(format!("regressors span fewer than d = {d} directions")));
            }
            cands.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
            let total: f64 = cands.iter().map(|c| c.1).sum();
            let mut acc = 0.0;
            let mut pick = cands[cands.len() - 1];
            for c in &cands {
                acc += c.1;
                if 2.0 * acc >= total {
                    pick = *c;
                    break;
                }
            }
            let (step, _, t) = pick;
            for (a, dk) in coef.iter_mut().zip(&dir) {
                *a += step * dk;
            }
            active[t] = true;
            basis.push(t);
            let mut q = project_out(&project_out(&self.x[t], &ortho), &ortho);
            let qn = norm2(&q);
            q.iter_mut().for_each(|v| *v /= qn);
            ortho.push(q);
        }
        if Lu::new(&self.basis_matrix(&basis), 1e-14).is_none() {
            return Err(Error::InsufficientExcitation("initial basis is singular".into()));
        }
        Ok(basis)
    }
}

struct Run {
    vertex: Vertex,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    iterations: usize,
    converged: bool,
}

struct Step {
    entering: usize,
    length: f64,
    /// Zero residuals passed at length 0, with their `x_tᵀdir`.
    crossed: Vec<(usize, f64)>,
}

fn unit(d: usize, j: usize) -> Vector {
    let mut e = vec![0.0; d];
    e[j] = 1.0;
    e
}

fn project_out(v: &[f64], ortho: &[Vector]) -> Vector {
    let mut out = v.to_vec();
    for q in ortho {
        let c = dot(&out, q);
        for (o, qk) in out.iter_mut().zip(q) {
            *o -= c * qk;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(xs: &[f64]) -> Vec<Vector> {
        xs.iter().map(|v| vec![*v]).collect()
    }

    #[test]
    fn scalar_outlier_is_rejected() {
        let fit = lad_row(&col(&[1.0, 0.5, 0.25]), &[0.5, 0.25, 10.25], LAD_DEFAULT_TOL).unwrap();
        assert!((fit.coef[0] - 0.5).abs() < 1e-12);
        assert!((fit.objective - (10.25 - 0.125)).abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn larger_outliers_change_nothing() {
        for big in [10.25, 11.0, 100.0, 1e6] {
            let fit = lad_row(&col(&[1.0, 0.5, 0.25]), &[0.5, 0.25, big], LAD_DEFAULT_TOL).unwrap();
            assert!((fit.coef[0] - 0.5).abs() < 1e-12, "outlier {big}");
        }
    }

    #[test]
    fn interpolation_when_square() {
        let x = vec![vec![1.0, 2.0], vec![3.0, -1.0]];
        let fit = lad_row(&x, &[5.0, 1.0], LAD_DEFAULT_TOL).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-12 && (fit.coef[1] - 2.0).abs() < 1e-12);
        assert!(fit.objective < 1e-12);
        assert!(!fit.non_unique);
    }

    #[test]
    fn flat_optimum_is_flagged() {
        // Σ|y - a| over y = {0, 1}: every a in [0, 1] is optimal.
        let fit = lad_row(&col(&[1.0, 1.0]), &[0.0, 1.0], LAD_DEFAULT_TOL).unwrap();
        assert!((fit.objective - 1.0).abs() < 1e-12);
        assert!(fit.non_unique);
    }

    #[test]
    fn rank_deficient_regressors() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![-1.0, -2.0]];
        assert!(matches!(lad_row(&x, &[1.0, 2.0, 3.0], LAD_DEFAULT_TOL), Err(Error::InsufficientExcitation(_))));
    }

    #[test]
    fn input_validation() {
        assert!(lad_row(&col(&[1.0]), &[1.0, 2.0], LAD_DEFAULT_TOL).is_err());
        assert!(lad_row(&[vec![1.0, 0.0]], &[1.0], LAD_DEFAULT_TOL).is_err());
        assert!(lad_row(&col(&[1.0, 2.0]), &[1.0, f64::NAN], LAD_DEFAULT_TOL).is_err());
        assert!(lad_row(&col(&[1.0, 2.0]), &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn bad_hint_falls_back_to_cold_start() {
        let x = col(&[1.0, 0.5, 0.25]);
        let y = [0.5, 0.25, 10.25];
        for hint in [vec![7], vec![0, 1], vec![]] {
            let fit = lad_row_warm(&x, &y, LAD_DEFAULT_TOL, Some(&hint)).unwrap();
            assert!((fit.coef[0] - 0.5).abs() < 1e-12);
        }
    }
}
