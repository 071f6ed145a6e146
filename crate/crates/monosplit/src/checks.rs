//! Sampling-based validity checks for operators.
//!
//! Monotonicity, Lipschitz continuity, cocoercivity and firm nonexpansiveness
//! are not decidable from a black-box map, so these checks probe random pairs
//! from a seeded generator and report the worst violation seen. They are
//! debug assertions, not proofs.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linalg::{axpy, DenseVector};
use crate::operators::{moreau_inverse_resolvent, ForwardOp, LinearMap, ResolventOp};

/// Outcome of one sampled property check.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub samples: usize,
    /// Worst signed violation observed; at most `tol` for a pass.
    pub max_violation: f64,
    pub tol: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(name: impl Into<String>, samples: usize, max_violation: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            samples,
            max_violation,
            tol,
            passed: max_violation <= tol,
        }
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<40} {:>5} samples  worst {: >12.3e}  tol {:.1e}  {}",
            self.name,
            self.samples,
            self.max_violation,
            self.tol,
            if self.passed { "ok" } else { "FAIL" }
        )
    }
}

fn sample_vector(rng: &mut ChaCha8Rng, dim: usize, range: &Uniform<f64>) -> DenseVector {
    DenseVector::new((0..dim).map(|_| range.sample(rng)).collect())
        .expect("samples are finite and non-empty")
}

/// Firm nonexpansiveness of a resolvent on sampled pairs:
/// `‖Jx − Jy‖² ≤ ⟨x − y, Jx − Jy⟩ + tol` for each stepsize in `gammas`.
pub fn check_firmly_nonexpansive(
    op: &ResolventOp,
    gammas: &[f64],
    pairs: usize,
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = Uniform::new(-5.0, 5.0);
    let mut worst = f64::NEG_INFINITY;
    for &gamma in gammas {
        for _ in 0..pairs {
            let x = sample_vector(&mut rng, op.domain_dim(), &range);
            let y = sample_vector(&mut rng, op.domain_dim(), &range);
            let jx = op.resolve(gamma, &x)?;
            let jy = op.resolve(gamma, &y)?;
            let dj = axpy(-1.0, &jy, &jx)?;
            let dx = axpy(-1.0, &y, &x)?;
            let violation = dj.norm().powi(2) - dx.inner(&dj)?;
            worst = worst.max(violation);
        }
    }
    Ok(CheckReport::new(
        format!("firm nonexpansiveness [{}]", op.label()),
        pairs * gammas.len(),
        worst,
        tol,
    ))
}

/// Resolvent self-consistency: with `u = (x − Jx)/γ`, resolving again at
/// `Jx + γu` must reproduce `Jx`.
pub fn check_resolvent_certificate(
    op: &ResolventOp,
    gammas: &[f64],
    pairs: usize,
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = Uniform::new(-5.0, 5.0);
    let mut worst = f64::NEG_INFINITY;
    for &gamma in gammas {
        for _ in 0..pairs {
            let x = sample_vector(&mut rng, op.domain_dim(), &range);
            let jx = op.resolve(gamma, &x)?;
            let u = axpy(-1.0, &jx, &x)?.map(|c| c / gamma);
            let probe = axpy(gamma, &u, &jx)?;
            let again = op.resolve(gamma, &probe)?;
            worst = worst.max(again.distance(&jx)?);
        }
    }
    Ok(CheckReport::new(
        format!("resolvent certificate [{}]", op.label()),
        pairs * gammas.len(),
        worst,
        tol,
    ))
}

/// Monotonicity on sampled pairs: `⟨Bx − By, x − y⟩ ≥ −tol`.
pub fn check_monotone(op: &ForwardOp, pairs: usize, tol: f64, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = Uniform::new(-5.0, 5.0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let x = sample_vector(&mut rng, op.domain_dim(), &range);
        let y = sample_vector(&mut rng, op.domain_dim(), &range);
        let db = axpy(-1.0, &op.apply(&y)?, &op.apply(&x)?)?;
        let dx = axpy(-1.0, &y, &x)?;
        worst = worst.max(-db.inner(&dx)?);
    }
    Ok(CheckReport::new(
        format!("monotonicity [{}]", op.label()),
        pairs,
        worst,
        tol,
    ))
}

/// Lipschitz continuity against the declared constant:
/// `‖Bx − By‖ ≤ μ‖x − y‖(1 + tol)`, reported as a relative violation.
pub fn check_lipschitz(op: &ForwardOp, pairs: usize, tol: f64, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = Uniform::new(-5.0, 5.0);
    let mu = op.lipschitz_mu();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let x = sample_vector(&mut rng, op.domain_dim(), &range);
        let y = sample_vector(&mut rng, op.domain_dim(), &range);
        let db = axpy(-1.0, &op.apply(&y)?, &op.apply(&x)?)?;
        let dx = axpy(-1.0, &y, &x)?;
        let bound = mu * dx.norm();
        let violation = if bound == 0.0 {
            db.norm()
        } else {
            db.norm() / bound - 1.0
        };
        worst = worst.max(violation);
    }
    Ok(CheckReport::new(
        format!("lipschitz bound [{}]", op.label()),
        pairs,
        worst,
        tol,
    ))
}

/// Cocoercivity against the declared constant:
/// `⟨x − y, Bx − By⟩ ≥ β‖Bx − By‖² − tol`. Skipped (trivially passing) when
/// no constant is declared.
pub fn check_cocoercive(op: &ForwardOp, pairs: usize, tol: f64, seed: u64) -> Result<CheckReport> {
    let Some(beta) = op.cocoercive_beta() else {
        return Ok(CheckReport::new(
            format!("cocoercivity (undeclared) [{}]", op.label()),
            0,
            f64::NEG_INFINITY,
            tol,
        ));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = Uniform::new(-5.0, 5.0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let x = sample_vector(&mut rng, op.domain_dim(), &range);
        let y = sample_vector(&mut rng, op.domain_dim(), &range);
        let db = axpy(-1.0, &op.apply(&y)?, &op.apply(&x)?)?;
        let dx = axpy(-1.0, &y, &x)?;
        let coco = if beta.is_infinite() {
            // zero-operator sentinel: the displacement itself must vanish
            db.norm()
        } else {
            beta * db.norm().powi(2) - dx.inner(&db)?
        };
        worst = worst.max(coco);
    }
    Ok(CheckReport::new(
        format!("cocoercivity [{}]", op.label()),
        pairs,
        worst,
        tol,
    ))
}

/// Adjoint correctness of a linear map: `⟨Lx, y⟩ = ⟨x, L*y⟩`.
pub fn check_adjoint(l: &LinearMap, pairs: usize, tol: f64, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = Uniform::new(-5.0, 5.0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let x = sample_vector(&mut rng, l.domain_dim(), &range);
        let y = sample_vector(&mut rng, l.codomain_dim(), &range);
        let lhs = l.apply(&x)?.inner(&y)?;
        let rhs = x.inner(&l.apply_adjoint(&y)?)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(CheckReport::new(
        format!("adjoint [{}]", l.label()),
        pairs,
        worst,
        tol,
    ))
}

/// Inversion-identity reconstruction: `J_{γA}x + γ·J_{γ⁻¹A⁻¹}(x/γ) = x`.
pub fn check_moreau_identity(
    op: &ResolventOp,
    gammas: &[f64],
    pairs: usize,
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = Uniform::new(-5.0, 5.0);
    let mut worst = f64::NEG_INFINITY;
    for &gamma in gammas {
        for _ in 0..pairs {
            let x = sample_vector(&mut rng, op.domain_dim(), &range);
            let direct = op.resolve(gamma, &x)?;
            let dual_arg = x.map(|c| c / gamma);
            let dual = moreau_inverse_resolvent(op, 1.0 / gamma, &dual_arg)?;
            let recon = axpy(gamma, &dual, &direct)?;
            worst = worst.max(recon.distance(&x)?);
        }
    }
    Ok(CheckReport::new(
        format!("inversion identity [{}]", op.label()),
        pairs * gammas.len(),
        worst,
        tol,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{identity_forward, prox_l1, proj_box, prox_zero};

    #[test]
    fn catalog_resolvents_are_firm() {
        let gammas = [0.1, 1.0, 10.0];
        let lo = DenseVector::new(vec![-1.0, -0.5]).unwrap();
        let hi = DenseVector::new(vec![1.0, 2.0]).unwrap();
        for op in [prox_zero(2), prox_l1(2, 0.7).unwrap(), proj_box(&lo, &hi).unwrap()] {
            let report = check_firmly_nonexpansive(&op, &gammas, 100, 1e-10, 7).unwrap();
            assert!(report.passed, "{report}");
            let report = check_resolvent_certificate(&op, &gammas, 50, 1e-10, 8).unwrap();
            assert!(report.passed, "{report}");
            let report = check_moreau_identity(&op, &gammas, 50, 1e-12, 9).unwrap();
            assert!(report.passed, "{report}");
        }
    }

    #[test]
    fn identity_is_monotone_lipschitz_cocoercive() {
        let id = identity_forward(3);
        assert!(check_monotone(&id, 200, 1e-10, 1).unwrap().passed);
        assert!(check_lipschitz(&id, 200, 1e-6, 2).unwrap().passed);
        assert!(check_cocoercive(&id, 200, 1e-10, 3).unwrap().passed);
    }

    #[test]
    fn non_monotone_map_is_flagged() {
        let flip = ForwardOp::from_fn("-x", 2, 1.0, |x| x.map(|c| -c)).unwrap();
        assert!(!check_monotone(&flip, 50, 1e-10, 4).unwrap().passed);
    }
}
