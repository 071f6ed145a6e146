//! Primal-dual solver for composite inclusions with linearly coupled blocks.
//!
//! The problem couples a maximally monotone `A` and a Lipschitz monotone `B`
//! on the primal space with `m` dual blocks `(A_i, B_i, L_i)`: find `x̄` with
//!
//! ```text
//! 0 ∈ Ax̄ + Σᵢ Lᵢ*(Aᵢ □ Bᵢ)Lᵢx̄ + Bx̄
//! ```
//!
//! where `□` is the parallel sum. The parallel sum is never materialized:
//! the problem is lifted to the direct sum `ℋ ⊕ 𝒢₁ ⊕ … ⊕ 𝒢_m`, where the
//! blockwise operators
//!
//! ```text
//! 𝑩(x, v₁, …) = (Bx + Σᵢ Lᵢ*vᵢ,  −L₁x + B₁⁻¹v₁,  …)
//! 𝑨(x, v₁, …) = Ax × A₁⁻¹v₁ × …
//! ```
//!
//! turn it into a plain two-operator inclusion `0 ∈ 𝑨z + 𝑩z`, and a zero of
//! that sum certifies a primal-dual solution pair. The explicit iteration
//! ([`step_pridu`]) updates the primal and dual blocks directly; it coincides
//! coordinate for coordinate with the reflected forward-backward scheme
//! applied to the lifted operators, which the tests exploit as a cross-check.
//!
//! Dual resolvents `J_{γAᵢ⁻¹}` are derived from the supplied resolvent of
//! `Aᵢ` through the inversion identity, unless a block carries an explicit
//! override.

use crate::error::{Error, Result};
use crate::linalg::{axpy, reflect, BlockVector, DenseVector};
use crate::operators::{
    inverse_via_moreau, power_method_norm, ForwardOp, LinearMap, ResolventOp,
};
use crate::splitting::{
    lyapunov_e, natural_residual, stepsize_rfbs_lipschitz, ConvergenceTrace, IterationRecord,
    RunConfig, StopRule,
};

/// One dual block: the resolvent of `A_i`, the single-valued `B_i⁻¹` with its
/// Lipschitz constant, and the coupling map `L_i`.
#[derive(Clone, Debug)]
pub struct CompositeBlock {
    pub prox: ResolventOp,
    pub dual_forward: ForwardOp,
    pub coupling: LinearMap,
    /// Direct resolvent of `A_i⁻¹`, for operators whose inverse resolvent is
    /// cheaper than the inversion identity.
    pub dual_prox_override: Option<ResolventOp>,
}

impl CompositeBlock {
    pub fn new(prox: ResolventOp, dual_forward: ForwardOp, coupling: LinearMap) -> Self {
        Self {
            prox,
            dual_forward,
            coupling,
            dual_prox_override: None,
        }
    }
}

/// The full composite problem. Immutable after construction; the coupling
/// norms `‖L_i‖` are estimated once, eagerly, by power iteration
/// (10 000 iterations, tolerance 1e-8).
#[derive(Clone, Debug)]
pub struct CompositeProblem {
    resolvent: ResolventOp,
    forward: ForwardOp,
    blocks: Vec<CompositeBlock>,
    coupling_norms: Vec<f64>,
    dual_resolvents: Vec<ResolventOp>,
}

impl CompositeProblem {
    pub fn new(
        resolvent: ResolventOp,
        forward: ForwardOp,
        blocks: Vec<CompositeBlock>,
    ) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidProblem(
                "composite problem needs at least one dual block".into(),
            ));
        }
        let primal_dim = resolvent.domain_dim();
        if forward.domain_dim() != primal_dim {
            return Err(Error::ShapeMismatch {
                expected: primal_dim,
                got: forward.domain_dim(),
            });
        }
        for (i, block) in blocks.iter().enumerate() {
            let dual_dim = block.prox.domain_dim();
            if block.dual_forward.domain_dim() != dual_dim {
                return Err(Error::ShapeMismatch {
                    expected: dual_dim,
                    got: block.dual_forward.domain_dim(),
                });
            }
            if block.coupling.codomain_dim() != dual_dim || block.coupling.domain_dim() != primal_dim
            {
                return Err(Error::InvalidProblem(format!(
                    "coupling map of block {i} must send the primal space to the block space"
                )));
            }
            if let Some(ov) = &block.dual_prox_override {
                if ov.domain_dim() != dual_dim {
                    return Err(Error::ShapeMismatch {
                        expected: dual_dim,
                        got: ov.domain_dim(),
                    });
                }
            }
        }
        if blocks.iter().all(|b| b.coupling.is_zero()) {
            return Err(Error::InvalidProblem(
                "at least one coupling map must be nonzero".into(),
            ));
        }
        let coupling_norms = blocks
            .iter()
            .map(|b| power_method_norm(&b.coupling, 10_000, 1e-8))
            .collect::<Result<Vec<_>>>()?;
        let dual_resolvents = blocks
            .iter()
            .map(|b| match &b.dual_prox_override {
                Some(ov) => ov.clone(),
                None => inverse_via_moreau(b.prox.clone()),
            })
            .collect();
        Ok(Self {
            resolvent,
            forward,
            blocks,
            coupling_norms,
            dual_resolvents,
        })
    }

    pub fn primal_dim(&self) -> usize {
        self.resolvent.domain_dim()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.prox.domain_dim()).collect()
    }

    /// Dimensions of the lifted space: primal first, then each block.
    pub fn stacked_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.primal_dim()];
        dims.extend(self.block_dims());
        dims
    }

    pub fn total_dim(&self) -> usize {
        self.stacked_dims().iter().sum()
    }

    pub fn blocks(&self) -> &[CompositeBlock] {
        &self.blocks
    }

    pub fn resolvent(&self) -> &ResolventOp {
        &self.resolvent
    }

    pub fn forward(&self) -> &ForwardOp {
        &self.forward
    }

    pub fn coupling_norms(&self) -> &[f64] {
        &self.coupling_norms
    }

    /// The resolvent of `A_i⁻¹` used for block `i`.
    pub fn dual_resolvent(&self, i: usize) -> &ResolventOp {
        &self.dual_resolvents[i]
    }
}

/// Lipschitz constant of the lifted forward operator:
/// `μ = max{μ₀, …, μ_m} + sqrt(Σᵢ ‖Lᵢ‖²)`.
pub fn aggregate_mu(problem: &CompositeProblem) -> f64 {
    let mut mu = problem.forward.lipschitz_mu();
    for block in &problem.blocks {
        mu = mu.max(block.dual_forward.lipschitz_mu());
    }
    let mut sum_sq = 0.0;
    for n in &problem.coupling_norms {
        sum_sq += n * n;
    }
    mu + sum_sq.sqrt()
}

/// The default stepsize for the lifted problem: `0.99 · (√2 − 1)/μ`. The
/// coupling norms are power-iteration estimates, hence the safety factor.
pub fn default_composite_gamma(problem: &CompositeProblem) -> f64 {
    0.99 * (2.0_f64.sqrt() - 1.0) / aggregate_mu(problem)
}

fn split(problem: &CompositeProblem, z: &DenseVector) -> Result<(DenseVector, Vec<DenseVector>)> {
    let stacked = BlockVector::from_flat(z, &problem.stacked_dims())?;
    let mut blocks = stacked.blocks().to_vec();
    let primal = blocks.remove(0);
    Ok((primal, blocks))
}

fn concat(primal: &DenseVector, duals: &[DenseVector]) -> DenseVector {
    let mut blocks = Vec::with_capacity(1 + duals.len());
    blocks.push(primal.clone());
    blocks.extend(duals.iter().cloned());
    BlockVector::new(blocks).expect("at least the primal block").flatten()
}

/// The lifted forward operator `𝑩` acting on flattened product-space vectors,
/// with Lipschitz constant [`aggregate_mu`]. Monotone whenever `B` and every
/// `B_i⁻¹` are; the coupling terms cancel exactly in `⟨𝑩z, z⟩`.
pub fn build_product_forward(problem: &CompositeProblem) -> Result<ForwardOp> {
    let problem = problem.clone();
    let mu = aggregate_mu(&problem);
    let dim = problem.total_dim();
    ForwardOp::from_fn("product-forward", dim, mu, move |z| {
        let (x, vs) = split(&problem, z).expect("dimension fixed at construction");
        let mut fx = problem
            .forward
            .apply(&x)
            .expect("dimension fixed at construction");
        for (block, v) in problem.blocks.iter().zip(&vs) {
            let ltv = block
                .coupling
                .apply_adjoint(v)
                .expect("dimension fixed at construction");
            fx = axpy(1.0, &ltv, &fx).expect("dimension fixed at construction");
        }
        let mut out = Vec::with_capacity(dim);
        out.extend_from_slice(fx.as_slice());
        for (block, v) in problem.blocks.iter().zip(&vs) {
            let lx = block
                .coupling
                .apply(&x)
                .expect("dimension fixed at construction");
            let bv = block
                .dual_forward
                .apply(v)
                .expect("dimension fixed at construction");
            out.extend(lx.iter().zip(bv.iter()).map(|(l, b)| -l + b));
        }
        DenseVector::from_raw(out)
    })
}

/// The lifted resolvent `J_{γ𝑨}`: the resolvent of `A` on the primal block
/// and the resolvent of `A_i⁻¹` on each dual block.
pub fn build_product_resolvent(problem: &CompositeProblem) -> Result<ResolventOp> {
    let problem = problem.clone();
    let dim = problem.total_dim();
    Ok(ResolventOp::from_fn(
        "product-resolvent",
        dim,
        move |gamma, z| {
            let (x, vs) = split(&problem, z).expect("dimension fixed at construction");
            let jx = problem
                .resolvent
                .resolve(gamma, &x)
                .expect("stepsize and dimension validated by the outer resolve");
            let mut out = Vec::with_capacity(dim);
            out.extend_from_slice(jx.as_slice());
            for (i, v) in vs.iter().enumerate() {
                let jv = problem
                    .dual_resolvent(i)
                    .resolve(gamma, v)
                    .expect("stepsize and dimension validated by the outer resolve");
                out.extend_from_slice(jv.as_slice());
            }
            DenseVector::from_raw(out)
        },
    ))
}

/// Primal and dual iterates with their one-step memory.
#[derive(Clone, Debug)]
pub struct PrimalDualState {
    pub x_cur: DenseVector,
    pub x_prev: DenseVector,
    pub v_cur: Vec<DenseVector>,
    pub v_prev: Vec<DenseVector>,
}

impl PrimalDualState {
    /// Starts from `(x₀, v₀)` with the previous iterates equal to them.
    pub fn from_start(x0: DenseVector, v0: Vec<DenseVector>) -> Self {
        Self {
            x_prev: x0.clone(),
            x_cur: x0,
            v_prev: v0.clone(),
            v_cur: v0,
        }
    }

    /// The zero state of the problem's shape.
    pub fn zeros(problem: &CompositeProblem) -> Self {
        Self::from_start(
            DenseVector::zeros(problem.primal_dim()),
            problem
                .block_dims()
                .iter()
                .map(|&d| DenseVector::zeros(d))
                .collect(),
        )
    }

    fn check_shape(&self, problem: &CompositeProblem) -> Result<()> {
        let fail = |expected, got| Err(Error::ShapeMismatch { expected, got });
        if self.x_cur.dim() != problem.primal_dim() {
            return fail(problem.primal_dim(), self.x_cur.dim());
        }
        if self.x_prev.dim() != self.x_cur.dim() {
            return fail(self.x_cur.dim(), self.x_prev.dim());
        }
        let dims = problem.block_dims();
        if self.v_cur.len() != dims.len() || self.v_prev.len() != dims.len() {
            return Err(Error::InvalidProblem(format!(
                "state has {} dual blocks, problem has {}",
                self.v_cur.len(),
                dims.len()
            )));
        }
        for ((cur, prev), &d) in self.v_cur.iter().zip(&self.v_prev).zip(&dims) {
            if cur.dim() != d {
                return fail(d, cur.dim());
            }
            if prev.dim() != d {
                return fail(d, prev.dim());
            }
        }
        Ok(())
    }

    /// The current iterate flattened into the product space.
    pub fn flatten(&self) -> DenseVector {
        concat(&self.x_cur, &self.v_cur)
    }
}

/// One explicit primal-dual step:
///
/// ```text
/// x⁺   = J_{γA}( x − γB(2x − x⁻) − γ Σᵢ Lᵢ*(2vᵢ − vᵢ⁻) )
/// vᵢ⁺  = J_{γAᵢ⁻¹}( vᵢ − γBᵢ⁻¹(2vᵢ − vᵢ⁻) + γLᵢ(2x − x⁻) )
/// ```
///
/// Each reflected point is computed once and reused; one evaluation of `B`,
/// of every `Bᵢ⁻¹` and of every `Lᵢ`/`Lᵢ*` per step.
pub fn step_pridu(
    state: PrimalDualState,
    problem: &CompositeProblem,
    gamma: f64,
) -> Result<PrimalDualState> {
    state.check_shape(problem)?;
    let y_x = reflect(&state.x_cur, &state.x_prev)?;
    let y_v: Vec<DenseVector> = state
        .v_cur
        .iter()
        .zip(&state.v_prev)
        .map(|(c, p)| reflect(c, p))
        .collect::<Result<_>>()?;

    let b_yx = problem.forward.apply(&y_x)?;
    let mut arg = axpy(-gamma, &b_yx, &state.x_cur)?;
    for (block, yv) in problem.blocks.iter().zip(&y_v) {
        let ltv = block.coupling.apply_adjoint(yv)?;
        arg = axpy(-gamma, &ltv, &arg)?;
    }
    let x_next = problem.resolvent.resolve(gamma, &arg)?;

    let mut v_next = Vec::with_capacity(problem.blocks.len());
    for (i, (block, yv)) in problem.blocks.iter().zip(&y_v).enumerate() {
        let bv = block.dual_forward.apply(yv)?;
        let lyx = block.coupling.apply(&y_x)?;
        let partial = axpy(-gamma, &bv, &state.v_cur[i])?;
        let dual_arg = axpy(gamma, &lyx, &partial)?;
        v_next.push(problem.dual_resolvent(i).resolve(gamma, &dual_arg)?);
    }

    Ok(PrimalDualState {
        x_prev: state.x_cur,
        x_cur: x_next,
        v_prev: state.v_cur,
        v_cur: v_next,
    })
}

/// Result of [`solve_composite`]: the product-space trace plus the final
/// primal and dual iterates.
#[derive(Clone, Debug)]
pub struct CompositeSolution {
    pub trace: ConvergenceTrace,
    pub primal: DenseVector,
    pub duals: Vec<DenseVector>,
}

/// Drives [`step_pridu`] until the product-space stopping metric drops below
/// the tolerance. The stepsize must satisfy `γ < (√2 − 1)/μ` for the
/// aggregated constant unless the unsafe override is set.
pub fn solve_composite(
    problem: &CompositeProblem,
    init: &PrimalDualState,
    config: &RunConfig,
) -> Result<CompositeSolution> {
    init.check_shape(problem)?;
    if !config.allow_unsafe_gamma {
        let bound = stepsize_rfbs_lipschitz(aggregate_mu(problem))?;
        if !bound.admits(config.gamma) {
            return Err(Error::StepsizeRejected {
                gamma: config.gamma,
                sup: bound.sup,
                inclusive: bound.inclusive,
            });
        }
    }
    let gamma = config.gamma;
    let product_forward = build_product_forward(problem)?;
    let product_resolvent = build_product_resolvent(problem)?;
    if let Some(x_star) = &config.record_lyapunov {
        if x_star.dim() != problem.total_dim() {
            return Err(Error::ShapeMismatch {
                expected: problem.total_dim(),
                got: x_star.dim(),
            });
        }
    }

    let mut state = init.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut step_calls: u64 = 0;
    let count_forwards = |p: &CompositeProblem| {
        p.forward.call_count()
            + p.blocks
                .iter()
                .map(|b| b.dual_forward.call_count())
                .sum::<u64>()
    };

    for iter in 1..=config.max_iter {
        let flat_old = state.flatten();
        let flat_prev_old = concat(&state.x_prev, &state.v_prev);

        let before = count_forwards(problem);
        state = step_pridu(state, problem, gamma)?;
        step_calls += count_forwards(problem) - before;

        let flat = state.flatten();
        if !flat.is_finite() {
            return Err(Error::Diverged {
                iter,
                trace: Box::new(ConvergenceTrace {
                    records,
                    final_x: flat_old,
                    converged: false,
                    forward_calls_b: step_calls,
                    forward_calls_c: 0,
                }),
            });
        }
        let step_norm = flat.distance(&flat_old)?;
        let residual =
            natural_residual(&flat, &product_resolvent, Some(&product_forward), None, gamma)?;

        let lyap_e = match &config.record_lyapunov {
            Some(x_star) => {
                let y_prev = reflect(&flat_old, &flat_prev_old)?;
                Some(lyapunov_e(
                    &flat,
                    &flat_old,
                    &y_prev,
                    &product_forward,
                    gamma,
                    x_star,
                )?)
            }
            None => None,
        };

        records.push(IterationRecord {
            iter,
            step_norm,
            natural_residual: residual,
            lyapunov_e: lyap_e,
            lyapunov_alpha: None,
        });

        let metric = match config.stop_rule {
            StopRule::NaturalResidual => residual,
            StopRule::StepNorm => step_norm,
        };
        if metric < config.tol {
            converged = true;
            break;
        }
    }

    Ok(CompositeSolution {
        trace: ConvergenceTrace {
            final_x: state.flatten(),
            records,
            converged,
            forward_calls_b: step_calls,
            forward_calls_c: 0,
        },
        primal: state.x_cur.clone(),
        duals: state.v_cur.clone(),
    })
}

/// Certifies a candidate primal-dual pair: true when the product-space
/// fixed-point residual of the lifted inclusion at `(x̄, v̄)` is at most
/// `tol`, measured with the default stepsize.
pub fn verify_inclusion(
    problem: &CompositeProblem,
    x_bar: &DenseVector,
    v_bar: &[DenseVector],
    tol: f64,
) -> Result<bool> {
    if v_bar.len() != problem.blocks.len() {
        return Err(Error::InvalidProblem(format!(
            "candidate has {} dual blocks, problem has {}",
            v_bar.len(),
            problem.blocks.len()
        )));
    }
    let flat = concat(x_bar, v_bar);
    let gamma = default_composite_gamma(problem);
    let product_forward = build_product_forward(problem)?;
    let product_resolvent = build_product_resolvent(problem)?;
    let residual = natural_residual(&flat, &product_resolvent, Some(&product_forward), None, gamma)?;
    Ok(residual <= tol)
}
