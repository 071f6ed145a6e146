//! Iteration schemes for monotone inclusions `0 ∈ Ax + Bx (+ Cx)`, their
//! admissible stepsize ranges, a run loop with stopping rules, and the
//! descent diagnostics the convergence tests monitor.
//!
//! Five schemes are provided. With `A` maximally monotone (given through its
//! resolvent), `B` monotone and `μ`-Lipschitz, and `C` `β`-cocoercive:
//!
//! * `fbs`  — forward-backward: `x⁺ = J_{γA}(x − γCx)`.
//! * `fbfs` — forward-backward-forward: the two-evaluation correction scheme.
//! * `frbs` — forward-reflected-backward: reuses the previous evaluation,
//!   `x⁺ = J_{γA}(x − 2γBx + γBx⁻)`.
//! * `rfbs` — reflected forward-backward: one evaluation at the extrapolated
//!   point, `x⁺ = J_{γA}(x − γB(2x − x⁻))`.
//! * `srfb` — semi-reflected forward-backward for three operators:
//!   `x⁺ = J_{γA}(x − γB(2x − x⁻) − γCx)`.

use crate::error::{Error, Result};
use crate::linalg::{axpy, reflect, DenseVector};
use crate::operators::{ForwardOp, ResolventOp};

/// The iteration schemes the run loop can drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Fbs,
    Fbfs,
    Frbs,
    Rfbs,
    Srfb,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Fbs,
        Method::Fbfs,
        Method::Frbs,
        Method::Rfbs,
        Method::Srfb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fbs => "fbs",
            Method::Fbfs => "fbfs",
            Method::Frbs => "frbs",
            Method::Rfbs => "rfbs",
            Method::Srfb => "srfb",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbs" => Ok(Method::Fbs),
            "fbfs" => Ok(Method::Fbfs),
            "frbs" => Ok(Method::Frbs),
            "rfbs" => Ok(Method::Rfbs),
            "srfb" => Ok(Method::Srfb),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// Which admissibility rule produced a [`StepsizeBound`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepsizeRegime {
    Fbfs,
    Frbs,
    RfbsLipschitz,
    RfbsCocoercive,
    Srfb,
}

/// The supremum of the admissible stepsize interval `]0, sup[` (or `]0, sup]`
/// when `inclusive`).
#[derive(Clone, Copy, Debug)]
pub struct StepsizeBound {
    pub sup: f64,
    pub inclusive: bool,
    pub regime: StepsizeRegime,
}

impl StepsizeBound {
    /// Whether `gamma` lies inside the admissible interval.
    pub fn admits(&self, gamma: f64) -> bool {
        gamma.is_finite() && gamma > 0.0 && (gamma < self.sup || (self.inclusive && gamma == self.sup))
    }
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::InvalidConstant(format!(
            "{name} must be finite and > 0, got {value}"
        )));
    }
    Ok(())
}

/// Stepsize range of the forward-backward-forward scheme: `γ ∈ ]0, 1/μ[`.
pub fn stepsize_fbfs(mu: f64) -> Result<StepsizeBound> {
    require_positive("Lipschitz constant", mu)?;
    Ok(StepsizeBound {
        sup: 1.0 / mu,
        inclusive: false,
        regime: StepsizeRegime::Fbfs,
    })
}

/// Stepsize range of the forward-reflected-backward scheme: `γ ∈ ]0, 1/(2μ)[`.
pub fn stepsize_frbs(mu: f64) -> Result<StepsizeBound> {
    require_positive("Lipschitz constant", mu)?;
    Ok(StepsizeBound {
        sup: 1.0 / (2.0 * mu),
        inclusive: false,
        regime: StepsizeRegime::Frbs,
    })
}

/// Stepsize range of the reflected scheme for a `μ`-Lipschitz operator:
/// `γ ∈ ]0, (√2 − 1)/μ[`.
pub fn stepsize_rfbs_lipschitz(mu: f64) -> Result<StepsizeBound> {
    require_positive("Lipschitz constant", mu)?;
    Ok(StepsizeBound {
        sup: (2.0_f64.sqrt() - 1.0) / mu,
        inclusive: false,
        regime: StepsizeRegime::RfbsLipschitz,
    })
}

/// Stepsize range of the reflected scheme when the forward operator is
/// `β`-cocoercive: `γ ∈ ]0, β(1 − ε)/2]` for a slack `ε ∈ ]0, 1[`. Note the
/// closed right endpoint.
pub fn stepsize_rfbs_cocoercive(beta: f64, epsilon: f64) -> Result<StepsizeBound> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::InvalidConstant(format!(
            "cocoercivity constant must be > 0, got {beta}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidConstant(format!(
            "slack must lie in ]0, 1[, got {epsilon}"
        )));
    }
    Ok(StepsizeBound {
        sup: beta * (1.0 - epsilon) / 2.0,
        inclusive: true,
        regime: StepsizeRegime::RfbsCocoercive,
    })
}

/// Stepsize range of the semi-reflected three-operator scheme: the minimum of
/// four conditions parameterized by `ζ ∈ ]0, 1/2[` and `ξ > 0`:
///
/// ```text
/// γ < (1 − ζ)/μ
/// γ < 4βζ/(1 + ξ)
/// γ < (√2 − 1)/μ
/// γ < (1 − 2ζ)/(μ(√2 + 1) + 2/(βξ))
/// ```
///
/// `μ = 0` (zero Lipschitz part) and `β = +∞` (zero cocoercive part) are
/// accepted as degenerate sentinels; the corresponding conditions drop out.
pub fn stepsize_srfb(mu: f64, beta: f64, zeta: f64, xi: f64) -> Result<StepsizeBound> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::InvalidConstant(format!(
            "Lipschitz constant must be finite and >= 0, got {mu}"
        )));
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::InvalidConstant(format!(
            "cocoercivity constant must be > 0, got {beta}"
        )));
    }
    if !(zeta > 0.0 && zeta < 0.5) {
        return Err(Error::InvalidConstant(format!(
            "balance parameter must lie in ]0, 1/2[, got {zeta}"
        )));
    }
    require_positive("splitting parameter", xi)?;
    let sqrt2 = 2.0_f64.sqrt();
    let bounds = [
        (1.0 - zeta) / mu,
        4.0 * beta * zeta / (1.0 + xi),
        (sqrt2 - 1.0) / mu,
        (1.0 - 2.0 * zeta) / (mu * (sqrt2 + 1.0) + 2.0 / (beta * xi)),
    ];
    let sup = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    if !sup.is_finite() {
        return Err(Error::InvalidConstant(
            "both operator constants are degenerate; no finite stepsize bound".into(),
        ));
    }
    Ok(StepsizeBound {
        sup,
        inclusive: false,
        regime: StepsizeRegime::Srfb,
    })
}

/// The two-point memory every scheme carries: the current iterate, the
/// previous one, and optional scheme-specific storage (`frbs` keeps the
/// forward evaluation at the previous iterate there).
#[derive(Clone, Debug)]
pub struct IterateState {
    pub x_cur: DenseVector,
    pub x_prev: DenseVector,
    pub aux: Option<DenseVector>,
}

impl IterateState {
    /// Starts from the pair `(x_0, x_{−1})`.
    pub fn from_pair(x_cur: DenseVector, x_prev: DenseVector) -> Result<Self> {
        if x_cur.dim() != x_prev.dim() {
            return Err(Error::ShapeMismatch {
                expected: x_cur.dim(),
                got: x_prev.dim(),
            });
        }
        Ok(Self {
            x_cur,
            x_prev,
            aux: None,
        })
    }

    /// Starts from `x_0` with `x_{−1} = x_0`, so the first extrapolated point
    /// coincides with `x_0`.
    pub fn from_start(x0: DenseVector) -> Self {
        Self {
            x_prev: x0.clone(),
            x_cur: x0,
            aux: None,
        }
    }
}

/// One forward-backward step `x⁺ = J_{γA}(x − γCx)`.
pub fn step_fbs(
    state: IterateState,
    a: &ResolventOp,
    c: &ForwardOp,
    gamma: f64,
) -> Result<IterateState> {
    let cx = c.apply(&state.x_cur)?;
    let arg = axpy(-gamma, &cx, &state.x_cur)?;
    let x_next = a.resolve(gamma, &arg)?;
    Ok(IterateState {
        x_prev: state.x_cur,
        x_cur: x_next,
        aux: None,
    })
}

/// One forward-backward-forward step:
///
/// ```text
/// y = x − γBx
/// z = J_{γA} y
/// r = z − γBz
/// x⁺ = x + r − y
/// ```
///
/// Exactly two evaluations of `B`.
pub fn step_fbfs(
    state: IterateState,
    a: &ResolventOp,
    b: &ForwardOp,
    gamma: f64,
) -> Result<IterateState> {
    let bx = b.apply(&state.x_cur)?;
    let y = axpy(-gamma, &bx, &state.x_cur)?;
    let z = a.resolve(gamma, &y)?;
    let bz = b.apply(&z)?;
    let r = axpy(-gamma, &bz, &z)?;
    let coords = state
        .x_cur
        .iter()
        .zip(r.iter().zip(y.iter()))
        .map(|(x, (ri, yi))| x + ri - yi)
        .collect::<Vec<_>>();
    // bypass the finiteness check so the run loop can diagnose divergence
    let x_cur = DenseVector::from_raw(coords);
    Ok(IterateState {
        x_prev: state.x_cur,
        x_cur,
        aux: None,
    })
}

/// One forward-reflected-backward step
/// `x⁺ = J_{γA}(x − 2γBx + γBx⁻)`, with `Bx⁻` carried in `state.aux`.
///
/// One fresh evaluation of `B` per step; a cold start (empty `aux`) costs one
/// extra evaluation to initialize the memory with `Bx₀`.
pub fn step_frbs(
    state: IterateState,
    a: &ResolventOp,
    b: &ForwardOp,
    gamma: f64,
) -> Result<IterateState> {
    let aux = match &state.aux {
        Some(prev) => prev.clone(),
        None => b.apply(&state.x_cur)?,
    };
    let bx = b.apply(&state.x_cur)?;
    let partial = axpy(-2.0 * gamma, &bx, &state.x_cur)?;
    let arg = axpy(gamma, &aux, &partial)?;
    let x_next = a.resolve(gamma, &arg)?;
    Ok(IterateState {
        x_prev: state.x_cur,
        x_cur: x_next,
        aux: Some(bx),
    })
}

/// One reflected forward-backward step `x⁺ = J_{γA}(x − γB(2x − x⁻))`.
/// One evaluation of `B` per step.
pub fn step_rfbs(
    state: IterateState,
    a: &ResolventOp,
    b: &ForwardOp,
    gamma: f64,
) -> Result<IterateState> {
    let y = reflect(&state.x_cur, &state.x_prev)?;
    let by = b.apply(&y)?;
    let arg = axpy(-gamma, &by, &state.x_cur)?;
    let x_next = a.resolve(gamma, &arg)?;
    Ok(IterateState {
        x_prev: state.x_cur,
        x_cur: x_next,
        aux: None,
    })
}

/// One semi-reflected step `x⁺ = J_{γA}(x − γB(2x − x⁻) − γCx)`.
/// One evaluation of `B` and one of `C`.
///
/// The argument is accumulated in the same order as [`step_rfbs`] and
/// [`step_fbs`], so a zero `C` (or zero `B`) reproduces those schemes bit for
/// bit.
pub fn step_srfb(
    state: IterateState,
    a: &ResolventOp,
    b: &ForwardOp,
    c: &ForwardOp,
    gamma: f64,
) -> Result<IterateState> {
    let y = reflect(&state.x_cur, &state.x_prev)?;
    let by = b.apply(&y)?;
    let cx = c.apply(&state.x_cur)?;
    let partial = axpy(-gamma, &by, &state.x_cur)?;
    let arg = axpy(-gamma, &cx, &partial)?;
    let x_next = a.resolve(gamma, &arg)?;
    Ok(IterateState {
        x_prev: state.x_cur,
        x_cur: x_next,
        aux: None,
    })
}

/// The fixed-point residual `‖x − J_{γA}(x − γBx − γCx)‖`. Zero exactly at
/// the zeros of the operator sum, which makes it the default stopping metric.
pub fn natural_residual(
    x: &DenseVector,
    a: &ResolventOp,
    b: Option<&ForwardOp>,
    c: Option<&ForwardOp>,
    gamma: f64,
) -> Result<f64> {
    let mut arg = x.clone();
    if let Some(b) = b {
        let bx = b.apply(x)?;
        arg = axpy(-gamma, &bx, &arg)?;
    }
    if let Some(c) = c {
        let cx = c.apply(x)?;
        arg = axpy(-gamma, &cx, &arg)?;
    }
    let resolved = a.resolve(gamma, &arg)?;
    x.distance(&resolved)
}

/// The descent energy of the reflected scheme around a known zero `x_star`:
///
/// ```text
/// E = ‖x − x̄‖² + ‖x⁻ − x‖² + ‖p + γBx̄‖² + μγ‖x − y⁻‖² − γ²‖By⁻ − Bx̄‖²
/// ```
///
/// with `p = x⁻ − γBy⁻ − x` the resolvent certificate of the step that
/// produced `x` from `(x⁻, y⁻)`. Nonincreasing and nonnegative along the
/// iterates whenever `γ < (√2 − 1)/μ`.
pub fn lyapunov_e(
    x_cur: &DenseVector,
    x_prev: &DenseVector,
    y_prev: &DenseVector,
    b: &ForwardOp,
    gamma: f64,
    x_star: &DenseVector,
) -> Result<f64> {
    let by_prev = b.apply(y_prev)?;
    let b_star = b.apply(x_star)?;
    let p = axpy(-1.0, x_cur, &axpy(-gamma, &by_prev, x_prev)?)?;
    let p_shifted = axpy(gamma, &b_star, &p)?;
    let drift = x_cur.distance(y_prev)?;
    let forward_gap = by_prev.distance(&b_star)?;
    let mu = b.lipschitz_mu();
    Ok(x_cur.distance(x_star)?.powi(2)
        + x_prev.distance(x_cur)?.powi(2)
        + p_shifted.norm().powi(2)
        + mu * gamma * drift * drift
        - gamma * gamma * forward_gap * forward_gap)
}

/// The descent quantity of the semi-reflected scheme around a known zero:
///
/// ```text
/// α = ‖x − x̄‖² + t + γμ‖x − y⁻‖²
/// t = 2(1 − ζ)‖x⁻ − x‖² + 2γ⟨By⁻ − Bx̄, x − x⁻⟩
/// ```
///
/// Nonincreasing along the iterates for stepsizes inside [`stepsize_srfb`].
pub fn lyapunov_alpha(
    x_cur: &DenseVector,
    x_prev: &DenseVector,
    y_prev: &DenseVector,
    b: &ForwardOp,
    gamma: f64,
    zeta: f64,
    x_star: &DenseVector,
) -> Result<f64> {
    if !(zeta > 0.0 && zeta < 0.5) {
        return Err(Error::InvalidConstant(format!(
            "balance parameter must lie in ]0, 1/2[, got {zeta}"
        )));
    }
    let by_prev = b.apply(y_prev)?;
    let b_star = b.apply(x_star)?;
    let forward_gap = axpy(-1.0, &b_star, &by_prev)?;
    let step = axpy(-1.0, x_prev, x_cur)?;
    let t = 2.0 * (1.0 - zeta) * step.norm().powi(2) + 2.0 * gamma * forward_gap.inner(&step)?;
    let drift = x_cur.distance(y_prev)?;
    Ok(x_cur.distance(x_star)?.powi(2) + t + gamma * b.lipschitz_mu() * drift * drift)
}

/// The decreasing quantity of the reflected scheme in the cocoercive regime:
///
/// ```text
/// V = ‖x − x̄‖² + ‖p + γBx̄‖² + γ²(1 + ε)/(1 − ε)·‖By⁻ − Bx̄‖²
/// ```
///
/// Nonincreasing along the iterates whenever `γ ≤ β(1 − ε)/2`.
pub fn cocoercive_descent(
    x_cur: &DenseVector,
    x_prev: &DenseVector,
    y_prev: &DenseVector,
    b: &ForwardOp,
    gamma: f64,
    epsilon: f64,
    x_star: &DenseVector,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidConstant(format!(
            "slack must lie in ]0, 1[, got {epsilon}"
        )));
    }
    let by_prev = b.apply(y_prev)?;
    let b_star = b.apply(x_star)?;
    let p = axpy(-1.0, x_cur, &axpy(-gamma, &by_prev, x_prev)?)?;
    let p_shifted = axpy(gamma, &b_star, &p)?;
    let forward_gap = by_prev.distance(&b_star)?;
    Ok(x_cur.distance(x_star)?.powi(2)
        + p_shifted.norm().powi(2)
        + gamma * gamma * (1.0 + epsilon) / (1.0 - epsilon) * forward_gap * forward_gap)
}

/// How the run loop decides it is done.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopRule {
    /// Stop when [`natural_residual`] drops below the tolerance.
    NaturalResidual,
    /// Stop when `‖x⁺ − x‖` drops below the tolerance.
    StepNorm,
}

/// Settings for a solver run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub gamma: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub stop_rule: StopRule,
    /// A known zero of the operator sum; when present, the run records the
    /// matching descent diagnostic each iteration (`rfbs` records the energy
    /// `E`, `srfb` records `α`).
    pub record_lyapunov: Option<DenseVector>,
    /// Slack of the cocoercive stepsize rule used when validating `rfbs`
    /// stepsizes against a declared cocoercivity constant.
    pub epsilon: f64,
    /// Balance parameter of the `srfb` stepsize system (also used for the
    /// recorded `α` diagnostic).
    pub zeta: f64,
    /// Splitting parameter of the `srfb` stepsize system.
    pub xi: f64,
    /// Skip stepsize admissibility checks. Runs outside the guaranteed range
    /// are allowed to diverge; that is sometimes the point.
    pub allow_unsafe_gamma: bool,
}

impl RunConfig {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            max_iter: 100_000,
            tol: 1e-8,
            stop_rule: StopRule::NaturalResidual,
            record_lyapunov: None,
            epsilon: 0.01,
            zeta: 0.25,
            xi: 1.0,
            allow_unsafe_gamma: false,
        }
    }

    fn validate(&self) -> Result<()> {
        require_positive("stepsize", self.gamma)?;
        require_positive("tolerance", self.tol)?;
        if self.max_iter == 0 {
            return Err(Error::InvalidConstant(
                "iteration budget must be at least 1".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidConstant(format!(
                "slack must lie in ]0, 1[, got {}",
                self.epsilon
            )));
        }
        if !(self.zeta > 0.0 && self.zeta < 0.5) {
            return Err(Error::InvalidConstant(format!(
                "balance parameter must lie in ]0, 1/2[, got {}",
                self.zeta
            )));
        }
        require_positive("splitting parameter", self.xi)?;
        Ok(())
    }
}

/// Everything measured during one iteration of a run.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iter: usize,
    pub step_norm: f64,
    pub natural_residual: f64,
    pub lyapunov_e: Option<f64>,
    pub lyapunov_alpha: Option<f64>,
}

/// The full record of a run.
#[derive(Clone, Debug)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
    pub final_x: DenseVector,
    pub converged: bool,
    /// Forward evaluations of `B` consumed by the iteration updates
    /// themselves (including the one-time `frbs` memory initialization).
    /// Stopping-rule and diagnostic evaluations are not attributed here.
    pub forward_calls_b: u64,
    /// Forward evaluations of `C` consumed by the iteration updates.
    pub forward_calls_c: u64,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.records.last().map(|r| r.natural_residual)
    }
}

/// A problem `0 ∈ Ax + Bx + Cx` bundled for the run loop: the resolvent of
/// `A`, an optional Lipschitz forward part `B`, and an optional cocoercive
/// part `C`.
#[derive(Clone, Debug)]
pub struct MonotoneInclusion {
    resolvent: ResolventOp,
    lipschitz: Option<ForwardOp>,
    cocoercive: Option<ForwardOp>,
}

impl MonotoneInclusion {
    pub fn new(
        resolvent: ResolventOp,
        lipschitz: Option<ForwardOp>,
        cocoercive: Option<ForwardOp>,
    ) -> Result<Self> {
        let dim = resolvent.domain_dim();
        for op in lipschitz.iter().chain(cocoercive.iter()) {
            if op.domain_dim() != dim {
                return Err(Error::ShapeMismatch {
                    expected: dim,
                    got: op.domain_dim(),
                });
            }
        }
        Ok(Self {
            resolvent,
            lipschitz,
            cocoercive,
        })
    }

    pub fn two_op(resolvent: ResolventOp, lipschitz: ForwardOp) -> Result<Self> {
        Self::new(resolvent, Some(lipschitz), None)
    }

    pub fn three_op(
        resolvent: ResolventOp,
        lipschitz: ForwardOp,
        cocoercive: ForwardOp,
    ) -> Result<Self> {
        Self::new(resolvent, Some(lipschitz), Some(cocoercive))
    }

    /// A problem with only a cocoercive forward part, as `fbs` expects.
    pub fn forward_backward(resolvent: ResolventOp, cocoercive: ForwardOp) -> Result<Self> {
        Self::new(resolvent, None, Some(cocoercive))
    }

    pub fn dim(&self) -> usize {
        self.resolvent.domain_dim()
    }

    pub fn resolvent(&self) -> &ResolventOp {
        &self.resolvent
    }

    pub fn lipschitz(&self) -> Option<&ForwardOp> {
        self.lipschitz.as_ref()
    }

    pub fn cocoercive(&self) -> Option<&ForwardOp> {
        self.cocoercive.as_ref()
    }

    /// The residual of the full operator sum at `x`.
    pub fn residual(&self, x: &DenseVector, gamma: f64) -> Result<f64> {
        natural_residual(
            x,
            &self.resolvent,
            self.lipschitz.as_ref(),
            self.cocoercive.as_ref(),
            gamma,
        )
    }
}

/// The admissible stepsize bound a method uses on a given problem, derived
/// from the declared operator constants. For `rfbs` with a cocoercive forward
/// part this is the larger of the two admissible ranges.
pub fn method_stepsize_bound(
    method: Method,
    problem: &MonotoneInclusion,
    config: &RunConfig,
) -> Result<StepsizeBound> {
    let require_b = || {
        problem.lipschitz().ok_or_else(|| {
            Error::InvalidProblem(format!("method {method} needs a Lipschitz forward operator"))
        })
    };
    match method {
        Method::Fbs => {
            let c = problem.cocoercive().ok_or_else(|| {
                Error::InvalidProblem("fbs needs a cocoercive forward operator".into())
            })?;
            let beta = c.cocoercive_beta().ok_or_else(|| {
                Error::InvalidConstant(format!(
                    "operator '{}' has no declared cocoercivity constant",
                    c.label()
                ))
            })?;
            // classical forward-backward range
            Ok(StepsizeBound {
                sup: 2.0 * beta,
                inclusive: false,
                regime: StepsizeRegime::RfbsCocoercive,
            })
        }
        Method::Fbfs => stepsize_fbfs(require_b()?.lipschitz_mu()),
        Method::Frbs => stepsize_frbs(require_b()?.lipschitz_mu()),
        Method::Rfbs => {
            let b = require_b()?;
            let lip = stepsize_rfbs_lipschitz(b.lipschitz_mu())?;
            if let Some(beta) = b.cocoercive_beta() {
                let coco = stepsize_rfbs_cocoercive(beta, config.epsilon)?;
                if coco.sup >= lip.sup {
                    return Ok(coco);
                }
            }
            Ok(lip)
        }
        Method::Srfb => {
            let b = require_b()?;
            let c = problem.cocoercive().ok_or_else(|| {
                Error::InvalidProblem("srfb needs a cocoercive forward operator".into())
            })?;
            let beta = c.cocoercive_beta().ok_or_else(|| {
                Error::InvalidConstant(format!(
                    "operator '{}' has no declared cocoercivity constant",
                    c.label()
                ))
            })?;
            stepsize_srfb(b.lipschitz_mu(), beta, config.zeta, config.xi)
        }
    }
}

/// `0.9 ×` the method's stepsize bound: the default "safe" stepsize.
pub fn default_gamma(
    method: Method,
    problem: &MonotoneInclusion,
    config: &RunConfig,
) -> Result<f64> {
    let bound = method_stepsize_bound(method, problem, config)?;
    if !bound.sup.is_finite() {
        return Err(Error::InvalidConstant(
            "operator constants give no finite stepsize bound".into(),
        ));
    }
    Ok(0.9 * bound.sup)
}

fn structural_check(method: Method, problem: &MonotoneInclusion) -> Result<()> {
    let need = |cond: bool, msg: &str| {
        if cond {
            Ok(())
        } else {
            Err(Error::InvalidProblem(msg.into()))
        }
    };
    match method {
        Method::Fbs => {
            need(problem.cocoercive().is_some(), "fbs needs a forward operator in the cocoercive slot")?;
            need(
                problem.lipschitz().is_none(),
                "fbs addresses a two-operator sum; fold any extra forward part into the cocoercive slot first",
            )
        }
        Method::Fbfs | Method::Frbs | Method::Rfbs => {
            need(problem.lipschitz().is_some(), "this method needs a Lipschitz forward operator")?;
            need(
                problem.cocoercive().is_none(),
                "this method addresses a two-operator sum; compose the cocoercive part into the Lipschitz operator first",
            )
        }
        Method::Srfb => {
            need(problem.lipschitz().is_some(), "srfb needs a Lipschitz forward operator")?;
            need(problem.cocoercive().is_some(), "srfb needs a cocoercive forward operator")
        }
    }
}

/// Drives one scheme from `(x_0, x_{−1})` until the stopping metric drops
/// below the tolerance or the iteration budget is exhausted.
///
/// The stepsize must lie inside the method's admissible range unless
/// `allow_unsafe_gamma` is set (runs meant to exhibit divergence do that).
/// A non-finite iterate aborts with [`Error::Diverged`], carrying the trace
/// collected so far.
pub fn run(
    method: Method,
    problem: &MonotoneInclusion,
    init: (DenseVector, DenseVector),
    config: &RunConfig,
) -> Result<ConvergenceTrace> {
    config.validate()?;
    structural_check(method, problem)?;
    if !config.allow_unsafe_gamma {
        let bound = method_stepsize_bound(method, problem, config)?;
        if !bound.admits(config.gamma) {
            return Err(Error::StepsizeRejected {
                gamma: config.gamma,
                sup: bound.sup,
                inclusive: bound.inclusive,
            });
        }
    }
    if let Some(x_star) = &config.record_lyapunov {
        if x_star.dim() != problem.dim() {
            return Err(Error::ShapeMismatch {
                expected: problem.dim(),
                got: x_star.dim(),
            });
        }
    }

    let gamma = config.gamma;
    let a = problem.resolvent();
    let b = problem.lipschitz();
    let c = problem.cocoercive();
    let mut state = IterateState::from_pair(init.0, init.1)?;
    if state.x_cur.dim() != problem.dim() {
        return Err(Error::ShapeMismatch {
            expected: problem.dim(),
            got: state.x_cur.dim(),
        });
    }

    let mut records: Vec<IterationRecord> = Vec::new();
    let mut step_calls_b: u64 = 0;
    let mut step_calls_c: u64 = 0;
    let mut converged = false;

    for iter in 1..=config.max_iter {
        let x_old = state.x_cur.clone();
        let x_prev_old = state.x_prev.clone();

        let before_b = b.map(|op| op.call_count()).unwrap_or(0);
        let before_c = c.map(|op| op.call_count()).unwrap_or(0);
        state = match method {
            Method::Fbs => step_fbs(state, a, c.expect("checked"), gamma)?,
            Method::Fbfs => step_fbfs(state, a, b.expect("checked"), gamma)?,
            Method::Frbs => step_frbs(state, a, b.expect("checked"), gamma)?,
            Method::Rfbs => step_rfbs(state, a, b.expect("checked"), gamma)?,
            Method::Srfb => step_srfb(state, a, b.expect("checked"), c.expect("checked"), gamma)?,
        };
        step_calls_b += b.map(|op| op.call_count()).unwrap_or(0) - before_b;
        step_calls_c += c.map(|op| op.call_count()).unwrap_or(0) - before_c;

        let diverged = |records: Vec<IterationRecord>, final_x: DenseVector| Error::Diverged {
            iter,
            trace: Box::new(ConvergenceTrace {
                records,
                final_x,
                converged: false,
                forward_calls_b: step_calls_b,
                forward_calls_c: step_calls_c,
            }),
        };
        if !state.x_cur.is_finite() {
            return Err(diverged(records, x_old));
        }

        let step_norm = state.x_cur.distance(&x_old)?;
        let residual = problem.residual(&state.x_cur, gamma)?;
        if !step_norm.is_finite() || !residual.is_finite() {
            return Err(diverged(records, state.x_cur.clone()));
        }

        let (mut lyap_e, mut lyap_alpha) = (None, None);
        if let Some(x_star) = &config.record_lyapunov {
            match method {
                Method::Rfbs => {
                    let y_prev = reflect(&x_old, &x_prev_old)?;
                    lyap_e = Some(lyapunov_e(
                        &state.x_cur,
                        &x_old,
                        &y_prev,
                        b.expect("checked"),
                        gamma,
                        x_star,
                    )?);
                }
                Method::Srfb => {
                    let y_prev = reflect(&x_old, &x_prev_old)?;
                    lyap_alpha = Some(lyapunov_alpha(
                        &state.x_cur,
                        &x_old,
                        &y_prev,
                        b.expect("checked"),
                        gamma,
                        config.zeta,
                        x_star,
                    )?);
                }
                _ => {}
            }
        }

        records.push(IterationRecord {
            iter,
            step_norm,
            natural_residual: residual,
            lyapunov_e: lyap_e,
            lyapunov_alpha: lyap_alpha,
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

    Ok(ConvergenceTrace {
        final_x: state.x_cur,
        records,
        converged,
        forward_calls_b: step_calls_b,
        forward_calls_c: step_calls_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{
        identity_forward, linear_forward, prox_zero, proj_box, zero_forward, ForwardOp, LinearMap,
    };

    fn v(coords: &[f64]) -> DenseVector {
        DenseVector::new(coords.to_vec()).unwrap()
    }

    fn rotation2() -> ForwardOp {
        let m = LinearMap::from_rows("rot", vec![vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        linear_forward("rotation", &m).unwrap()
    }

    #[test]
    fn stepsize_closed_forms() {
        let s2 = 2.0_f64.sqrt();
        assert_eq!(stepsize_fbfs(1.0).unwrap().sup, 1.0);
        assert_eq!(stepsize_fbfs(2.0).unwrap().sup, 0.5);
        assert_eq!(stepsize_fbfs(0.5).unwrap().sup, 2.0);
        assert!(!stepsize_fbfs(1.0).unwrap().inclusive);

        assert_eq!(stepsize_frbs(1.0).unwrap().sup, 0.5);
        assert_eq!(stepsize_frbs(0.5).unwrap().sup, 1.0);
        assert!((stepsize_frbs(10.0).unwrap().sup - 0.05).abs() < 1e-15);

        assert!((stepsize_rfbs_lipschitz(1.0).unwrap().sup - (s2 - 1.0)).abs() < 1e-15);
        assert!((stepsize_rfbs_lipschitz(s2 - 1.0).unwrap().sup - 1.0).abs() < 1e-12);
        assert!((stepsize_rfbs_lipschitz(2.0).unwrap().sup - (s2 - 1.0) / 2.0).abs() < 1e-15);

        let coco = stepsize_rfbs_cocoercive(1.0, 0.5).unwrap();
        assert_eq!(coco.sup, 0.25);
        assert!(coco.inclusive);
        assert!((stepsize_rfbs_cocoercive(2.0, 0.01).unwrap().sup - 0.99).abs() < 1e-15);
        assert!((stepsize_rfbs_cocoercive(1.0, 0.999).unwrap().sup - 0.0005).abs() < 1e-15);

        // min of the four srfb conditions
        let b = stepsize_srfb(1.0, 1.0, 0.25, 1.0).unwrap();
        let expected = (0.5_f64 / (s2 + 3.0)).min(0.75).min(0.5).min(s2 - 1.0);
        assert!((b.sup - expected).abs() < 1e-15);
        let b = stepsize_srfb(2.0, 0.5, 0.4, 2.0).unwrap();
        let expected = (0.3_f64)
            .min(0.8 / 3.0)
            .min((s2 - 1.0) / 2.0)
            .min(0.2 / (2.0 * (s2 + 1.0) + 2.0));
        assert!((b.sup - expected).abs() < 1e-15);
        assert!((b.sup - 0.2 / (2.0 * (s2 + 1.0) + 2.0)).abs() < 1e-15);

        // zero cocoercive part: the bound degenerates to the reflected one
        let b = stepsize_srfb(1.0, f64::INFINITY, 1e-9, 1.0).unwrap();
        assert!((b.sup - (s2 - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn stepsize_rejects_bad_constants() {
        assert!(stepsize_fbfs(0.0).is_err());
        assert!(stepsize_fbfs(-1.0).is_err());
        assert!(stepsize_rfbs_cocoercive(1.0, 0.0).is_err());
        assert!(stepsize_rfbs_cocoercive(1.0, 1.0).is_err());
        assert!(stepsize_srfb(1.0, 1.0, 0.5, 1.0).is_err());
        assert!(stepsize_srfb(1.0, 1.0, 0.25, 0.0).is_err());
        assert!(stepsize_srfb(0.0, f64::INFINITY, 0.25, 1.0).is_err());
    }

    #[test]
    fn bound_endpoint_semantics() {
        let excl = stepsize_rfbs_lipschitz(1.0).unwrap();
        assert!(!excl.admits(excl.sup));
        assert!(excl.admits(excl.sup * 0.999));
        let incl = stepsize_rfbs_cocoercive(1.0, 0.5).unwrap();
        assert!(incl.admits(incl.sup));
        assert!(!incl.admits(incl.sup * 1.001));
        assert!(!incl.admits(0.0));
    }

    #[test]
    fn fbs_step_values() {
        let state = IterateState::from_start(v(&[2.0]));
        let next = step_fbs(state, &prox_zero(1), &identity_forward(1), 0.5).unwrap();
        assert_eq!(next.x_cur, v(&[1.0]));

        // fixed point stays put
        let zero_c = zero_forward(1);
        let state = IterateState::from_start(v(&[3.0]));
        let next = step_fbs(state, &prox_zero(1), &zero_c, 0.5).unwrap();
        assert_eq!(next.x_cur, v(&[3.0]));

        let clamp = proj_box(&v(&[0.0]), &v(&[1.0])).unwrap();
        let state = IterateState::from_start(v(&[0.5]));
        let next = step_fbs(state, &clamp, &identity_forward(1), 1.0).unwrap();
        assert_eq!(next.x_cur, v(&[0.0]));
    }

    #[test]
    fn fbfs_step_values() {
        // stationary at a zero
        let state = IterateState::from_start(v(&[0.0]));
        let next = step_fbfs(state, &prox_zero(1), &identity_forward(1), 0.3).unwrap();
        assert_eq!(next.x_cur, v(&[0.0]));

        // hand evaluation: y=0.5, z=0.5, r=0.25, x+ = 1 + 0.25 - 0.5
        let state = IterateState::from_start(v(&[1.0]));
        let next = step_fbfs(state, &prox_zero(1), &identity_forward(1), 0.5).unwrap();
        assert_eq!(next.x_cur, v(&[0.75]));

        // hand evaluation on the rotation field
        let state = IterateState::from_start(v(&[1.0, 0.0]));
        let next = step_fbfs(state, &prox_zero(2), &rotation2(), 0.1).unwrap();
        assert!((next.x_cur[0] - 0.99).abs() < 1e-15);
        assert!((next.x_cur[1] - 0.10).abs() < 1e-15);
    }

    #[test]
    fn frbs_step_values_and_memory() {
        let b = identity_forward(1);
        let state = IterateState::from_start(v(&[1.0]));
        // cold start: memory self-initializes to Bx0
        let next = step_frbs(state, &prox_zero(1), &b, 0.25).unwrap();
        assert_eq!(next.x_cur, v(&[0.75]));
        assert_eq!(next.aux.as_ref().unwrap(), &v(&[1.0]));
        let next2 = step_frbs(next, &prox_zero(1), &b, 0.25).unwrap();
        // 0.75 - 0.5*0.75 + 0.25*1
        assert_eq!(next2.x_cur, v(&[0.625]));
    }

    #[test]
    fn rfbs_step_values() {
        let b = identity_forward(1);
        let state = IterateState::from_start(v(&[1.0]));
        let next = step_rfbs(state, &prox_zero(1), &b, 0.25).unwrap();
        assert_eq!(next.x_cur, v(&[0.75]));
        // y = 2*0.75 - 1 = 0.5, x+ = 0.75 - 0.25*0.5
        let next2 = step_rfbs(next, &prox_zero(1), &b, 0.25).unwrap();
        assert_eq!(next2.x_cur, v(&[0.625]));
    }

    #[test]
    fn srfb_reductions_are_bitwise() {
        let a = prox_zero(2);
        let b = rotation2();
        let c = identity_forward(2);
        let gamma = 0.05;
        let start = v(&[0.4, -0.7]);

        // zero C: srfb == rfbs step for step
        let mut s1 = IterateState::from_start(start.clone());
        let mut s2 = IterateState::from_start(start.clone());
        let zc = zero_forward(2);
        for _ in 0..50 {
            s1 = step_rfbs(s1, &a, &b, gamma).unwrap();
            s2 = step_srfb(s2, &a, &b, &zc, gamma).unwrap();
            assert_eq!(s1.x_cur, s2.x_cur);
        }

        // zero B: srfb == fbs
        let mut s1 = IterateState::from_start(start.clone());
        let mut s2 = IterateState::from_start(start);
        let zb = zero_forward(2);
        for _ in 0..50 {
            s1 = step_fbs(s1, &a, &c, gamma).unwrap();
            s2 = step_srfb(s2, &a, &zb, &c, gamma).unwrap();
            assert_eq!(s1.x_cur, s2.x_cur);
        }

        // plain hand value
        let state = IterateState::from_start(v(&[2.0, 0.0]));
        let next = step_srfb(state, &a, &zero_forward(2), &c, 0.5).unwrap();
        assert_eq!(next.x_cur, v(&[1.0, 0.0]));
    }

    #[test]
    fn natural_residual_values() {
        let b = identity_forward(1);
        assert_eq!(
            natural_residual(&v(&[3.0]), &prox_zero(1), Some(&b), None, 1.0).unwrap(),
            3.0
        );
        // solution of the shifted problem inside the box
        let clamp = proj_box(&v(&[0.0]), &v(&[1.0])).unwrap();
        let shifted = ForwardOp::from_fn("x-2", 1, 1.0, |x| x.map(|c| c - 2.0)).unwrap();
        let r = natural_residual(&v(&[1.0]), &clamp, Some(&shifted), None, 1.0).unwrap();
        assert_eq!(r, 0.0);
        // residual vanishes at a zero
        let r = natural_residual(&v(&[0.0]), &prox_zero(1), Some(&b), None, 0.7).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn lyapunov_e_hand_value() {
        let b = identity_forward(1);
        // history x_{-1} = x_0 = 1, one reflected step with gamma 1/4 gives 0.75
        let e = lyapunov_e(&v(&[0.75]), &v(&[1.0]), &v(&[1.0]), &b, 0.25, &v(&[0.0])).unwrap();
        assert!((e - 0.578125).abs() < 1e-15);
        // everything at the zero
        let e0 = lyapunov_e(&v(&[0.0]), &v(&[0.0]), &v(&[0.0]), &b, 0.25, &v(&[0.0])).unwrap();
        assert_eq!(e0, 0.0);
    }

    #[test]
    fn lyapunov_alpha_hand_value() {
        let b = identity_forward(1);
        // x_0 = x_{-1} = 1, gamma = 0.1: x_1 = 0.9, y_0 = 1
        // t_1 = 2(1-zeta)(0.1)^2 + 2*0.1*(1)(-0.1) = 0.015 - 0.02
        // alpha_1 = 0.81 - 0.005 + 0.1*1*(0.01) = 0.806
        let alpha =
            lyapunov_alpha(&v(&[0.9]), &v(&[1.0]), &v(&[1.0]), &b, 0.1, 0.25, &v(&[0.0])).unwrap();
        assert!((alpha - 0.806).abs() < 1e-12);
        let alpha0 =
            lyapunov_alpha(&v(&[0.0]), &v(&[0.0]), &v(&[0.0]), &b, 0.1, 0.25, &v(&[0.0])).unwrap();
        assert_eq!(alpha0, 0.0);
        assert!(lyapunov_alpha(&v(&[0.9]), &v(&[1.0]), &v(&[1.0]), &b, 0.1, 0.6, &v(&[0.0])).is_err());
    }

    #[test]
    fn run_contracts_to_zero() {
        let problem =
            MonotoneInclusion::two_op(prox_zero(1), identity_forward(1)).unwrap();
        let config = RunConfig::new(0.25);
        let trace = run(
            Method::Rfbs,
            &problem,
            (v(&[1.0]), v(&[1.0])),
            &config,
        )
        .unwrap();
        assert!(trace.converged);
        // residual tolerance 1e-8 with unit slope: the iterate is within tol/gamma
        assert!(trace.final_x[0].abs() < 4.0e-8);

        let mut tight = RunConfig::new(0.25);
        tight.tol = 2.5e-9;
        let trace = run(Method::Rfbs, &problem, (v(&[1.0]), v(&[1.0])), &tight).unwrap();
        assert!(trace.final_x[0].abs() < 1.0e-8);
    }

    #[test]
    fn run_at_solution_stops_immediately() {
        let problem =
            MonotoneInclusion::two_op(prox_zero(2), rotation2()).unwrap();
        let config = RunConfig::new(0.3);
        let trace = run(
            Method::Rfbs,
            &problem,
            (v(&[0.0, 0.0]), v(&[0.0, 0.0])),
            &config,
        )
        .unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 1);
    }

    #[test]
    fn run_rejects_inadmissible_gamma() {
        let problem =
            MonotoneInclusion::two_op(prox_zero(2), rotation2()).unwrap();
        let config = RunConfig::new(2.0);
        let err = run(
            Method::Rfbs,
            &problem,
            (v(&[1.0, 0.0]), v(&[1.0, 0.0])),
            &config,
        )
        .unwrap_err();
        assert!(matches!(err, Error::StepsizeRejected { .. }));
    }

    #[test]
    fn explicit_steps_on_rotation_blow_up() {
        // forward-backward with an explicit step on a pure rotation expands
        // every iterate by sqrt(1 + gamma^2)
        let problem = MonotoneInclusion::forward_backward(prox_zero(2), rotation2()).unwrap();
        let mut config = RunConfig::new(0.3);
        config.allow_unsafe_gamma = true;
        config.max_iter = 50;
        let trace = run(
            Method::Fbs,
            &problem,
            (v(&[1.0, 0.0]), v(&[1.0, 0.0])),
            &config,
        )
        .unwrap();
        assert!(!trace.converged);
        for pair in trace.records.windows(2) {
            assert!(pair[1].natural_residual > pair[0].natural_residual);
        }
    }

    #[test]
    fn run_detects_divergence() {
        // deliberately non-monotone expanding map
        let blowup = ForwardOp::from_fn("expand", 1, 1e160, |x| x.map(|c| -1e160 * c)).unwrap();
        let problem = MonotoneInclusion::forward_backward(prox_zero(1), blowup).unwrap();
        let mut config = RunConfig::new(1.0);
        config.allow_unsafe_gamma = true;
        config.max_iter = 10;
        let err = run(
            Method::Fbs,
            &problem,
            (v(&[1.0]), v(&[1.0])),
            &config,
        )
        .unwrap_err();
        match err {
            Error::Diverged { iter, trace } => {
                assert!(iter <= 3);
                assert!(!trace.converged);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn run_validates_structure() {
        let problem =
            MonotoneInclusion::two_op(prox_zero(2), rotation2()).unwrap();
        let config = RunConfig::new(0.1);
        assert!(matches!(
            run(Method::Fbs, &problem, (v(&[0.0, 0.0]), v(&[0.0, 0.0])), &config),
            Err(Error::InvalidProblem(_))
        ));
        assert!(matches!(
            run(Method::Srfb, &problem, (v(&[0.0, 0.0]), v(&[0.0, 0.0])), &config),
            Err(Error::InvalidProblem(_))
        ));
    }

    #[test]
    fn forward_call_economy() {
        let a = prox_zero(2);
        let b = rotation2();
        let n = 100;

        b.reset_call_count();
        let mut state = IterateState::from_start(v(&[1.0, 0.0]));
        for _ in 0..n {
            state = step_fbfs(state, &a, &b, 0.3).unwrap();
        }
        assert_eq!(b.call_count(), 2 * n);

        b.reset_call_count();
        let mut state = IterateState::from_start(v(&[1.0, 0.0]));
        for _ in 0..n {
            state = step_rfbs(state, &a, &b, 0.3).unwrap();
        }
        assert_eq!(b.call_count(), n);

        b.reset_call_count();
        let mut state = IterateState::from_start(v(&[1.0, 0.0]));
        for _ in 0..n {
            state = step_frbs(state, &a, &b, 0.2).unwrap();
        }
        assert_eq!(b.call_count(), n + 1);
    }
}
