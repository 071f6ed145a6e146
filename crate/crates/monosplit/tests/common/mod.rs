//! Shared oracles for the integration tests.
//!
//! Everything here deliberately avoids the code paths it is used to check:
//! proximal points are found by derivative-free 1-D minimization (coordinate
//! sweeps for coupled objectives), and linear systems are solved by a
//! textbook Gaussian elimination rather than the crate's factorizations.

#![allow(dead_code)]

use monosplit::linalg::DenseVector;
use monosplit::splitting::ConvergenceTrace;

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    assert!(lo <= hi);
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Proximal point of `gamma * lambda * |.|` at `x`, by 1-D minimization of
/// the defining objective.
pub fn oracle_prox_abs(gamma: f64, lambda: f64, x: f64) -> f64 {
    let radius = x.abs() + gamma * lambda + 1.0;
    golden_section(
        |y| gamma * lambda * y.abs() + 0.5 * (y - x) * (y - x),
        x - radius,
        x + radius,
        1e-10,
    )
}

/// Nearest point of `[lo, hi]` to `x`, by 1-D minimization over the interval.
pub fn oracle_project_interval(lo: f64, hi: f64, x: f64) -> f64 {
    golden_section(|y| 0.5 * (y - x) * (y - x), lo, hi, 1e-10)
}

/// Minimizer of `gamma(½yᵀQy + cᵀy) + ½‖y − x‖²` by cyclic coordinate-wise
/// golden-section descent. Works for any symmetric positive semidefinite `Q`
/// without touching a linear solver.
pub fn oracle_prox_quadratic(
    q: &[Vec<f64>],
    c: &[f64],
    gamma: f64,
    x: &[f64],
    sweeps: usize,
) -> Vec<f64> {
    let n = x.len();
    let objective = |y: &[f64]| {
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += y[i] * q[i][j] * y[j];
            }
        }
        let mut lin = 0.0;
        let mut dist = 0.0;
        for i in 0..n {
            lin += c[i] * y[i];
            let d = y[i] - x[i];
            dist += d * d;
        }
        gamma * (0.5 * quad + lin) + 0.5 * dist
    };
    let radius: f64 = 10.0
        + x.iter().map(|v| v.abs()).fold(0.0, f64::max)
        + c.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut y = x.to_vec();
    for _ in 0..sweeps {
        let mut moved = 0.0_f64;
        for i in 0..n {
            let yi_old = y[i];
            let mut trial = y.clone();
            let best = golden_section(
                |t| {
                    trial[i] = t;
                    objective(&trial)
                },
                yi_old - radius,
                yi_old + radius,
                1e-12,
            );
            y[i] = best;
            moved = moved.max((best - yi_old).abs());
        }
        if moved < 1e-12 {
            break;
        }
    }
    y
}

/// Solves `A z = b` by Gaussian elimination with partial pivoting.
pub fn oracle_solve_linear(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| row.clone()).collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        assert!(m[col][col].abs() > 1e-14, "singular oracle system");
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut z = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * z[k];
        }
        z[row] = acc / m[row][row];
    }
    z
}

/// Bitwise equality of two traces over everything derived from the iterates.
pub fn traces_bit_identical(a: &ConvergenceTrace, b: &ConvergenceTrace) -> bool {
    if a.records.len() != b.records.len() || a.converged != b.converged {
        return false;
    }
    if a.final_x.dim() != b.final_x.dim() {
        return false;
    }
    for (x, y) in a.final_x.iter().zip(b.final_x.iter()) {
        if x.to_bits() != y.to_bits() {
            return false;
        }
    }
    a.records.iter().zip(&b.records).all(|(r, s)| {
        r.iter == s.iter
            && r.step_norm.to_bits() == s.step_norm.to_bits()
            && r.natural_residual.to_bits() == s.natural_residual.to_bits()
    })
}

/// Largest absolute coordinate difference.
pub fn max_coord_diff(a: &DenseVector, b: &DenseVector) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
