//! The operator zoo: resolvents of maximally monotone operators, single-valued
//! monotone forward operators with declared Lipschitz/cocoercivity constants,
//! and bounded linear maps with their adjoints.
//!
//! Set-valued operators never appear directly — every algorithm in this crate
//! touches them only through their resolvent `J_{γA} = (Id + γA)⁻¹`, so that
//! map is the whole representation. Forward operators carry an evaluation
//! counter so the per-iteration cost of each splitting scheme can be audited.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::DenseVector;

type ResolventFn = dyn Fn(f64, &DenseVector) -> DenseVector + Send + Sync;
type ForwardFn = dyn Fn(&DenseVector) -> DenseVector + Send + Sync;

/// A maximally monotone operator represented by its resolvent map
/// `(γ, x) ↦ J_{γA} x`. Immutable and cheap to clone.
#[derive(Clone)]
pub struct ResolventOp {
    resolve: Arc<ResolventFn>,
    domain_dim: usize,
    label: String,
}

impl ResolventOp {
    /// Wraps an arbitrary resolvent map. The closure must be defined for all
    /// `γ > 0` and all vectors of the declared dimension.
    pub fn from_fn(
        label: impl Into<String>,
        domain_dim: usize,
        resolve: impl Fn(f64, &DenseVector) -> DenseVector + Send + Sync + 'static,
    ) -> Self {
        assert!(domain_dim >= 1, "operator domain must have dimension >= 1");
        Self {
            resolve: Arc::new(resolve),
            domain_dim,
            label: label.into(),
        }
    }

    /// Evaluates `J_{γA} x`.
    pub fn resolve(&self, gamma: f64, x: &DenseVector) -> Result<DenseVector> {
        check_gamma(gamma)?;
        self.check_dim(x)?;
        Ok((self.resolve)(gamma, x))
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn check_dim(&self, x: &DenseVector) -> Result<()> {
        if x.dim() != self.domain_dim {
            return Err(Error::ShapeMismatch {
                expected: self.domain_dim,
                got: x.dim(),
            });
        }
        Ok(())
    }
}

impl std::fmt::Debug for ResolventOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResolventOp")
            .field("label", &self.label)
            .field("domain_dim", &self.domain_dim)
            .finish()
    }
}

/// A single-valued monotone operator with a declared Lipschitz constant and,
/// when it has one, a cocoercivity constant. Every call through [`apply`]
/// bumps a shared counter; clones share the same counter.
///
/// [`apply`]: ForwardOp::apply
#[derive(Clone)]
pub struct ForwardOp {
    apply: Arc<ForwardFn>,
    lipschitz_mu: f64,
    cocoercive_beta: Option<f64>,
    domain_dim: usize,
    label: String,
    calls: Arc<AtomicU64>,
}

impl ForwardOp {
    /// Wraps a forward map with a declared Lipschitz constant `mu >= 0`.
    /// The zero operator is the one legitimate case of `mu = 0`.
    pub fn from_fn(
        label: impl Into<String>,
        domain_dim: usize,
        lipschitz_mu: f64,
        apply: impl Fn(&DenseVector) -> DenseVector + Send + Sync + 'static,
    ) -> Result<Self> {
        assert!(domain_dim >= 1, "operator domain must have dimension >= 1");
        if !lipschitz_mu.is_finite() || lipschitz_mu < 0.0 {
            return Err(Error::InvalidConstant(format!(
                "Lipschitz constant must be finite and >= 0, got {lipschitz_mu}"
            )));
        }
        Ok(Self {
            apply: Arc::new(apply),
            lipschitz_mu,
            cocoercive_beta: None,
            domain_dim,
            label: label.into(),
            calls: Arc::new(AtomicU64::new(0)),
        })
    }

    /// Declares the operator `beta`-cocoercive. `+∞` is accepted as the
    /// sentinel for the zero operator.
    pub fn with_cocoercivity(mut self, beta: f64) -> Result<Self> {
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::InvalidConstant(format!(
                "cocoercivity constant must be > 0, got {beta}"
            )));
        }
        self.cocoercive_beta = Some(beta);
        Ok(self)
    }

    /// Evaluates the operator and counts the call.
    pub fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        if x.dim() != self.domain_dim {
            return Err(Error::ShapeMismatch {
                expected: self.domain_dim,
                got: x.dim(),
            });
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok((self.apply)(x))
    }

    pub fn lipschitz_mu(&self) -> f64 {
        self.lipschitz_mu
    }

    pub fn cocoercive_beta(&self) -> Option<f64> {
        self.cocoercive_beta
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of evaluations since construction (or the last reset).
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_call_count(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl std::fmt::Debug for ForwardOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardOp")
            .field("label", &self.label)
            .field("domain_dim", &self.domain_dim)
            .field("lipschitz_mu", &self.lipschitz_mu)
            .field("cocoercive_beta", &self.cocoercive_beta)
            .finish()
    }
}

/// A dense linear map together with its adjoint (the transpose).
#[derive(Clone, Debug)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    label: String,
}

impl LinearMap {
    /// Builds a map from row-major data. Rows are codomain coordinates.
    pub fn from_rows(label: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidOperator(
                "linear map needs at least one row and one column".into(),
            ));
        }
        let ncols = rows[0].len();
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidOperator("ragged matrix rows".into()));
        }
        if rows.iter().flatten().any(|e| !e.is_finite()) {
            return Err(Error::InvalidOperator("matrix entries must be finite".into()));
        }
        let matrix = DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten());
        Ok(Self {
            matrix,
            label: label.into(),
        })
    }

    pub fn domain_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn codomain_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&e| e == 0.0)
    }

    pub fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        if x.dim() != self.domain_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.domain_dim(),
                got: x.dim(),
            });
        }
        let y = &self.matrix * DVector::from_column_slice(x.as_slice());
        Ok(DenseVector::from_raw(y.data.into()))
    }

    /// Applies the adjoint `L*`, i.e. the transpose.
    pub fn apply_adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        if y.dim() != self.codomain_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.codomain_dim(),
                got: y.dim(),
            });
        }
        let x = self.matrix.tr_mul(&DVector::from_column_slice(y.as_slice()));
        Ok(DenseVector::from_raw(x.data.into()))
    }

    pub(crate) fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub(crate) fn from_matrix(label: impl Into<String>, matrix: DMatrix<f64>) -> Self {
        Self {
            matrix,
            label: label.into(),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidConstant(format!(
            "stepsize must be finite and > 0, got {gamma}"
        )));
    }
    Ok(())
}

/// Resolvent of the zero operator: the identity for every `γ`.
pub fn prox_zero(dim: usize) -> ResolventOp {
    ResolventOp::from_fn("zero", dim, |_gamma, x| x.clone())
}

/// Resolvent of `λ‖·‖₁`: coordinatewise soft thresholding at level `γλ`.
pub fn prox_l1(dim: usize, lambda: f64) -> Result<ResolventOp> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidConstant(format!(
            "l1 weight must be finite and > 0, got {lambda}"
        )));
    }
    Ok(ResolventOp::from_fn(
        format!("l1(lambda={lambda})"),
        dim,
        move |gamma, x| {
            let t = gamma * lambda;
            x.map(|c| c.signum() * (c.abs() - t).max(0.0))
        },
    ))
}

/// Resolvent of the normal cone of a box: the coordinatewise clamp onto
/// `[lo, hi]`. Normal-cone resolvents do not depend on `γ`, so it is ignored.
pub fn proj_box(lo: &DenseVector, hi: &DenseVector) -> Result<ResolventOp> {
    if lo.dim() != hi.dim() {
        return Err(Error::ShapeMismatch {
            expected: lo.dim(),
            got: hi.dim(),
        });
    }
    for i in 0..lo.dim() {
        if lo[i] > hi[i] {
            return Err(Error::InvalidSet(format!(
                "box bound lo[{i}] = {} exceeds hi[{i}] = {}",
                lo[i], hi[i]
            )));
        }
    }
    let (lo, hi) = (lo.clone(), hi.clone());
    Ok(ResolventOp::from_fn(
        "box-projection",
        lo.dim(),
        move |_gamma, x| {
            let coords = x
                .iter()
                .enumerate()
                .map(|(i, &c)| c.clamp(lo[i], hi[i]))
                .collect();
            DenseVector::from_raw(coords)
        },
    ))
}

/// Resolvent of the gradient of `y ↦ ½⟨y, Qy⟩ + ⟨c, y⟩` for a symmetric
/// positive semidefinite `Q`: the solution of `(I + γQ) y = x − γc`.
///
/// A Cholesky factor of `I + γQ` is prepared for each stepsize in
/// `cache_gammas` at construction; calls with other stepsizes factorize on
/// the fly, which is pure but slower.
pub fn prox_quadratic(
    q: &LinearMap,
    c: &DenseVector,
    cache_gammas: &[f64],
) -> Result<ResolventOp> {
    let n = q.domain_dim();
    if q.codomain_dim() != n {
        return Err(Error::InvalidOperator(
            "quadratic form matrix must be square".into(),
        ));
    }
    if c.dim() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: c.dim(),
        });
    }
    let m = q.matrix();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs() + b.abs()) {
                return Err(Error::InvalidOperator(format!(
                    "quadratic form matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let eigen = m.clone().symmetric_eigen();
    if eigen.eigenvalues.iter().any(|&l| l < -1e-10) {
        return Err(Error::InvalidOperator(
            "quadratic form matrix is not positive semidefinite".into(),
        ));
    }

    let factor_for = {
        let m = m.clone();
        move |gamma: f64| {
            let shifted = DMatrix::identity(n, n) + &m * gamma;
            shifted
                .cholesky()
                .expect("I + gamma*Q is positive definite for validated PSD Q")
        }
    };
    let mut cache = HashMap::new();
    for &g in cache_gammas {
        check_gamma(g)?;
        cache.insert(g.to_bits(), factor_for(g));
    }
    let c = DVector::from_column_slice(c.as_slice());
    Ok(ResolventOp::from_fn(
        format!("quadratic({})", q.label()),
        n,
        move |gamma, x| {
            let rhs = DVector::from_column_slice(x.as_slice()) - &c * gamma;
            let y = match cache.get(&gamma.to_bits()) {
                Some(f) => f.solve(&rhs),
                None => factor_for(gamma).solve(&rhs),
            };
            DenseVector::from_raw(y.data.into())
        },
    ))
}

/// Evaluates `J_{γA⁻¹} x` from the resolvent of `A` through the identity
/// `J_{γA⁻¹}(x) = x − γ · J_{γ⁻¹A}(x/γ)`.
pub fn moreau_inverse_resolvent(
    inner: &ResolventOp,
    gamma: f64,
    x: &DenseVector,
) -> Result<DenseVector> {
    check_gamma(gamma)?;
    let scaled = x.map(|c| c / gamma);
    let j = inner.resolve(1.0 / gamma, &scaled)?;
    let coords = x
        .iter()
        .zip(j.iter())
        .map(|(xi, ji)| xi - gamma * ji)
        .collect();
    Ok(DenseVector::from_raw(coords))
}

/// Packages [`moreau_inverse_resolvent`] as a resolvent operator for `A⁻¹`.
pub fn inverse_via_moreau(inner: ResolventOp) -> ResolventOp {
    let dim = inner.domain_dim();
    let label = format!("inverse({})", inner.label());
    ResolventOp::from_fn(label, dim, move |gamma, x| {
        moreau_inverse_resolvent(&inner, gamma, x)
            .expect("dimension and stepsize already validated by the outer resolve")
    })
}

/// Largest singular value of `L`, estimated by power iteration on `L*L`.
///
/// The seed is the normalized all-ones vector so repeated runs agree bit for
/// bit; if that seed happens to lie in the kernel, fixed fallback seeds
/// (alternating signs, then the first basis vector) are tried in order.
pub fn power_method_norm(l: &LinearMap, iters: usize, tol: f64) -> Result<f64> {
    if iters < 1 {
        return Err(Error::InvalidConstant(
            "power iteration needs at least one step".into(),
        ));
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidConstant(format!(
            "power iteration tolerance must be > 0, got {tol}"
        )));
    }
    if l.is_zero() {
        return Ok(0.0);
    }
    let n = l.domain_dim();
    let seeds: [Box<dyn Fn(usize) -> f64>; 3] = [
        Box::new(|_| 1.0),
        Box::new(|i| if i % 2 == 0 { 1.0 } else { -1.0 }),
        Box::new(|i| if i == 0 { 1.0 } else { 0.0 }),
    ];
    let mut v = None;
    for seed in &seeds {
        let raw = DenseVector::from_raw((0..n).map(seed).collect());
        let image = l.apply(&raw)?;
        if image.norm() > 0.0 {
            let nrm = raw.norm();
            v = Some(raw.map(|c| c / nrm));
            break;
        }
    }
    let Some(mut v) = v else {
        // Every fixed seed lies in the kernel; treat as numerically zero.
        return Ok(0.0);
    };

    let mut sigma = 0.0_f64;
    for _ in 0..iters {
        let w = l.apply(&v)?;
        let u = l.apply_adjoint(&w)?; // u = L*L v
        let rayleigh = v.inner(&u)?; // sigma^2 estimate since ||v|| = 1
        let estimate = rayleigh.max(0.0).sqrt();
        let u_norm = u.norm();
        if u_norm == 0.0 {
            return Ok(0.0);
        }
        v = u.map(|c| c / u_norm);
        if (estimate - sigma).abs() <= tol * estimate.max(f64::MIN_POSITIVE) {
            return Ok(estimate);
        }
        sigma = estimate;
    }
    Ok(sigma)
}

/// The monotone skew operator `(x, v) ↦ (L*v, −Lx)` on the product of the
/// domain and codomain of `L`, with its Lipschitz constant `‖L‖` estimated by
/// [`power_method_norm`]. Satisfies `⟨Bz, z⟩ = 0` for every `z`.
pub fn make_skew_pair(l: &LinearMap) -> Result<ForwardOp> {
    let mu = power_method_norm(l, 10_000, 1e-8)?;
    let (ncols, nrows) = (l.domain_dim(), l.codomain_dim());
    let l = l.clone();
    ForwardOp::from_fn(
        format!("skew({})", l.label()),
        ncols + nrows,
        mu,
        move |z| {
            let x = DenseVector::from_raw(z.as_slice()[..ncols].to_vec());
            let v = DenseVector::from_raw(z.as_slice()[ncols..].to_vec());
            let top = l.apply_adjoint(&v).expect("dimension fixed at construction");
            let bottom = l.apply(&x).expect("dimension fixed at construction");
            let mut coords = Vec::with_capacity(ncols + nrows);
            coords.extend_from_slice(top.as_slice());
            coords.extend(bottom.iter().map(|c| -c));
            DenseVector::from_raw(coords)
        },
    )
}

/// The zero forward operator: Lipschitz constant 0 and, vacuously, cocoercive
/// for every constant (declared as `+∞`).
pub fn zero_forward(dim: usize) -> ForwardOp {
    ForwardOp::from_fn("zero", dim, 0.0, |x| x.map(|_| 0.0))
        .and_then(|op| op.with_cocoercivity(f64::INFINITY))
        .expect("constants are valid")
}

/// The identity as a forward operator (1-Lipschitz, 1-cocoercive).
pub fn identity_forward(dim: usize) -> ForwardOp {
    ForwardOp::from_fn("identity", dim, 1.0, |x| x.clone())
        .and_then(|op| op.with_cocoercivity(1.0))
        .expect("constants are valid")
}

/// A monotone linear forward operator `x ↦ Mx` with `μ = ‖M‖` estimated by
/// power iteration. Monotonicity of `M` is the caller's responsibility and is
/// checked only by the sampling validators.
pub fn linear_forward(label: impl Into<String>, m: &LinearMap) -> Result<ForwardOp> {
    if m.domain_dim() != m.codomain_dim() {
        return Err(Error::InvalidOperator(
            "forward operator matrix must be square".into(),
        ));
    }
    let mu = power_method_norm(m, 10_000, 1e-8)?;
    let m = m.clone();
    ForwardOp::from_fn(label, m.domain_dim(), mu, move |x| {
        m.apply(x).expect("dimension fixed at construction")
    })
}

/// The gradient `x ↦ Qx + c` of the quadratic `½⟨x, Qx⟩ + ⟨c, x⟩` for a
/// symmetric positive semidefinite `Q`. Lipschitz with `μ = λ_max(Q)` and
/// cocoercive with `β = 1/μ` (as every gradient of a smooth convex function).
pub fn quadratic_gradient(
    label: impl Into<String>,
    q: &LinearMap,
    c: &DenseVector,
) -> Result<ForwardOp> {
    let n = q.domain_dim();
    if q.codomain_dim() != n {
        return Err(Error::InvalidOperator(
            "quadratic gradient matrix must be square".into(),
        ));
    }
    if c.dim() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: c.dim(),
        });
    }
    let m = q.matrix();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs() + b.abs()) {
                return Err(Error::InvalidOperator(
                    "quadratic gradient matrix must be symmetric".into(),
                ));
            }
        }
    }
    let eigen = m.clone().symmetric_eigen();
    if eigen.eigenvalues.iter().any(|&l| l < -1e-10) {
        return Err(Error::InvalidOperator(
            "quadratic gradient matrix must be positive semidefinite".into(),
        ));
    }
    let mu = power_method_norm(q, 10_000, 1e-10)?;
    let beta = if mu > 0.0 { 1.0 / mu } else { f64::INFINITY };
    let q = q.clone();
    let c = c.clone();
    ForwardOp::from_fn(label, n, mu, move |x| {
        let qx = q.apply(x).expect("dimension fixed at construction");
        DenseVector::from_raw(
            qx.iter()
                .zip(c.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    })?
    .with_cocoercivity(beta)
}
