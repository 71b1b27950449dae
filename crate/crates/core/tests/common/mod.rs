//! Brute-force references shared by the oracle and acceptance targets.
#![allow(dead_code)]

use advsysid::linalg::Vector;

pub fn scalar_lad_objective(x: &[f64], y: &[f64], a: f64) -> f64 {
    x.iter().zip(y).map(|(xi, yi)| (yi - a * xi).abs()).sum()
}

/// The minimizer of `Σ |y_t - a x_t|` is the median of the breakpoints
/// `y_t / x_t` weighted by `|x_t|`.
pub fn weighted_median(x: &[f64], y: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(xi, _)| **xi != 0.0).map(|(xi, yi)| (yi / xi, xi.abs())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = pts.iter().map(|p| p.1).sum::<f64>() / 2.0;
    let mut acc = 0.0;
    for (b, w) in pts {
        acc += w;
        if acc >= half {
            return b;
        }
    }
    unreachable!()
}

/// Every vertex of a 2-dimensional LAD problem interpolates two observations.
pub fn enumerate_vertices(regs: &[Vector], y: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..regs.len() {
        for j in i + 1..regs.len() {
            let (a, b, c, d) = (regs[i][0], regs[i][1], regs[j][0], regs[j][1]);
            let det = a * d - b * c;
            if det.abs() < 1e-12 {
                continue;
            }
            let coef = [(d * y[i] - b * y[j]) / det, (a * y[j] - c * y[i]) / det];
            let obj: f64 = regs.iter().zip(y).map(|(r, yt)| (yt - r[0] * coef[0] - r[1] * coef[1]).abs()).sum();
            best = best.min(obj);
        }
    }
    best
}
