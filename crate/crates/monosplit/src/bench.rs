//! Benchmark harness: a registry of named problems described by a declarative
//! schema, a method-by-problem run matrix, and CSV emission for traces and
//! reports.
//!
//! Problem data is either written out literally in the schema or generated
//! from a named seed, so repeated invocations produce byte-identical trace
//! and report CSVs. Wall-clock timings appear only in the human-readable
//! table, never in the machine-readable files.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composite::{
    aggregate_mu, build_product_forward, build_product_resolvent, CompositeBlock,
    CompositeProblem,
};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::operators::{
    linear_forward, make_skew_pair, prox_l1, prox_quadratic, prox_zero, proj_box,
    quadratic_gradient, zero_forward, ForwardOp, LinearMap, ResolventOp,
};
use crate::splitting::{
    default_gamma, run, stepsize_rfbs_lipschitz, ConvergenceTrace, Method, MonotoneInclusion,
    RunConfig,
};

/// Named seed for the randomized regression data.
pub const LASSO_SEED: u64 = 0x6d6f6e6f; // "mono"

/// Broad shape of a problem: how many forward operators it declares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    TwoOp,
    ThreeOp,
    Composite,
}

/// Declarative description of a resolvent from the operator catalog.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "type")]
pub enum ResolventSpec {
    Zero { dim: usize },
    L1 { dim: usize, lambda: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Quadratic { q: Vec<Vec<f64>>, c: Vec<f64> },
}

/// Declarative description of a forward operator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "type")]
pub enum ForwardSpec {
    Zero {
        dim: usize,
    },
    Identity {
        dim: usize,
    },
    /// A monotone linear map `x ↦ Mx` (Lipschitz constant estimated).
    Linear {
        matrix: Vec<Vec<f64>>,
    },
    /// The skew coupling `(x, v) ↦ (L*v, −Lx)` built from `L`.
    SkewPair {
        coupling: Vec<Vec<f64>>,
    },
    /// The gradient `x ↦ Qx + c` of a convex quadratic (cocoercive).
    QuadraticGradient {
        q: Vec<Vec<f64>>,
        c: Vec<f64>,
    },
    /// The gradient of `½‖Mx − b‖²` with `M` and `b` drawn from `seed`.
    LeastSquaresGradient {
        rows: usize,
        cols: usize,
        seed: u64,
    },
}

/// One dual block of a composite problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub resolvent: ResolventSpec,
    pub dual_forward: ForwardSpec,
    pub coupling: Vec<Vec<f64>>,
}

/// A named benchmark problem in declarative form. Mirrors the JSON config
/// schema accepted by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub kind: ProblemKind,
    pub resolvent: ResolventSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cocoercive: Option<ForwardSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<BlockSpec>,
    /// For composite problems this is the flattened product-space solution
    /// `(x̄, v̄₁, …, v̄_m)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_solution: Option<Vec<f64>>,
    /// Seed recorded in reports for problems with generated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Starting point for solver runs; zeros when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

/// The ready-to-run form of a [`ProblemSpec`].
#[derive(Clone, Debug)]
pub enum MaterializedForm {
    Inclusion(MonotoneInclusion),
    Composite(CompositeProblem),
}

#[derive(Clone, Debug)]
pub struct Materialized {
    pub name: String,
    pub kind: ProblemKind,
    pub form: MaterializedForm,
    pub known_solution: Option<DenseVector>,
    pub seed: Option<u64>,
    pub start: Option<DenseVector>,
}

fn to_linear_map(label: &str, rows: &[Vec<f64>]) -> Result<LinearMap> {
    LinearMap::from_rows(label, rows.to_vec())
}

fn to_vector(coords: &[f64]) -> Result<DenseVector> {
    DenseVector::new(coords.to_vec())
}

/// The regression data behind `LeastSquaresGradient`: a design matrix with
/// standard normal entries scaled by `1/√rows` and observations from a sparse
/// planted signal plus noise, all drawn from the given seed.
pub fn least_squares_data(rows: usize, cols: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (rows as f64).sqrt();
    let m = DMatrix::from_fn(rows, cols, |_, _| {
        let s: f64 = StandardNormal.sample(&mut rng);
        s * scale
    });
    let mut signal = DVector::zeros(cols);
    for i in 0..cols.min(4) {
        signal[i] = if i % 2 == 0 { 1.0 } else { -1.0 };
    }
    let noise = DVector::from_fn(rows, |_, _| {
        let s: f64 = StandardNormal.sample(&mut rng);
        0.05 * s
    });
    let b = &m * signal + noise;
    (m, b)
}

fn build_resolvent(spec: &ResolventSpec, cache_gammas: &[f64]) -> Result<ResolventOp> {
    match spec {
        ResolventSpec::Zero { dim } => Ok(prox_zero(*dim)),
        ResolventSpec::L1 { dim, lambda } => prox_l1(*dim, *lambda),
        ResolventSpec::Box { lo, hi } => proj_box(&to_vector(lo)?, &to_vector(hi)?),
        ResolventSpec::Quadratic { q, c } => {
            prox_quadratic(&to_linear_map("Q", q)?, &to_vector(c)?, cache_gammas)
        }
    }
}

fn build_forward(spec: &ForwardSpec) -> Result<ForwardOp> {
    match spec {
        ForwardSpec::Zero { dim } => Ok(zero_forward(*dim)),
        ForwardSpec::Identity { dim } => Ok(crate::operators::identity_forward(*dim)),
        ForwardSpec::Linear { matrix } => linear_forward("linear", &to_linear_map("M", matrix)?),
        ForwardSpec::SkewPair { coupling } => make_skew_pair(&to_linear_map("L", coupling)?),
        ForwardSpec::QuadraticGradient { q, c } => {
            quadratic_gradient("gradient", &to_linear_map("Q", q)?, &to_vector(c)?)
        }
        ForwardSpec::LeastSquaresGradient { rows, cols, seed } => {
            let (m, b) = least_squares_data(*rows, *cols, *seed);
            let gram = LinearMap::from_matrix("MtM", m.tr_mul(&m));
            let rhs = m.tr_mul(&b);
            let c = DenseVector::new((-rhs).data.into())?;
            quadratic_gradient("least-squares gradient", &gram, &c)
        }
    }
}

/// Turns a declarative spec into runnable operators. Stepsizes expected at
/// run time can be passed so quadratic resolvents prepare their factors
/// eagerly; other stepsizes still work through the pure fallback path.
pub fn materialize(spec: &ProblemSpec, cache_gammas: &[f64]) -> Result<Materialized> {
    // dual resolvents go through the inversion identity at 1/gamma
    let mut gammas = cache_gammas.to_vec();
    gammas.extend(cache_gammas.iter().filter(|g| **g > 0.0).map(|g| 1.0 / g));
    let resolvent = build_resolvent(&spec.resolvent, &gammas)?;
    let form = match spec.kind {
        ProblemKind::TwoOp | ProblemKind::ThreeOp => {
            let forward = spec.forward.as_ref().map(build_forward).transpose()?;
            let cocoercive = spec.cocoercive.as_ref().map(build_forward).transpose()?;
            if matches!(spec.kind, ProblemKind::ThreeOp) && cocoercive.is_none() {
                return Err(Error::Config(format!(
                    "problem '{}' is declared three-operator but has no cocoercive part",
                    spec.name
                )));
            }
            MaterializedForm::Inclusion(MonotoneInclusion::new(resolvent, forward, cocoercive)?)
        }
        ProblemKind::Composite => {
            let forward = match &spec.forward {
                Some(f) => build_forward(f)?,
                None => zero_forward(resolvent.domain_dim()),
            };
            let blocks = spec
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    Ok(CompositeBlock::new(
                        build_resolvent(&b.resolvent, &gammas)?,
                        build_forward(&b.dual_forward)?,
                        to_linear_map(&format!("L{}", i + 1), &b.coupling)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            MaterializedForm::Composite(CompositeProblem::new(resolvent, forward, blocks)?)
        }
    };
    Ok(Materialized {
        name: spec.name.clone(),
        kind: spec.kind,
        form,
        known_solution: spec.known_solution.as_deref().map(to_vector).transpose()?,
        seed: spec.seed,
        start: spec.start.as_deref().map(to_vector).transpose()?,
    })
}

/// The built-in problems:
///
/// * `lasso` — sparse regression `min λ‖x‖₁ + ½‖Mx − b‖²` on 20 variables
///   with seeded data; the smooth gradient is cocoercive.
/// * `skew-box` — a bilinear saddle problem on the box `[−1,1]²`: normal cone
///   plus a rotation field. Solved exactly by the origin.
/// * `three-op` — the box and rotation of `skew-box` plus a strongly convex
///   quadratic gradient; the solution `(0.3, −0.2)` is interior and the field
///   vanishes there.
/// * `composite-1` — a two-block composite problem with affine operators
///   whose lifted stationarity system is linear; the recorded solution solves
///   that system.
pub fn registry() -> Vec<ProblemSpec> {
    let rotation_coupling = vec![vec![1.0]];
    vec![
        ProblemSpec {
            name: "lasso".into(),
            kind: ProblemKind::TwoOp,
            resolvent: ResolventSpec::L1 {
                dim: 20,
                lambda: 0.05,
            },
            forward: Some(ForwardSpec::LeastSquaresGradient {
                rows: 40,
                cols: 20,
                seed: LASSO_SEED,
            }),
            cocoercive: None,
            blocks: vec![],
            known_solution: None,
            seed: Some(LASSO_SEED),
            start: None,
        },
        ProblemSpec {
            name: "skew-box".into(),
            kind: ProblemKind::TwoOp,
            resolvent: ResolventSpec::Box {
                lo: vec![-1.0, -1.0],
                hi: vec![1.0, 1.0],
            },
            forward: Some(ForwardSpec::SkewPair {
                coupling: rotation_coupling.clone(),
            }),
            cocoercive: None,
            blocks: vec![],
            known_solution: Some(vec![0.0, 0.0]),
            seed: None,
            start: Some(vec![0.9, -0.7]),
        },
        ProblemSpec {
            name: "three-op".into(),
            kind: ProblemKind::ThreeOp,
            resolvent: ResolventSpec::Box {
                lo: vec![-1.0, -1.0],
                hi: vec![1.0, 1.0],
            },
            forward: Some(ForwardSpec::SkewPair {
                coupling: rotation_coupling,
            }),
            cocoercive: Some(ForwardSpec::QuadraticGradient {
                q: vec![vec![2.0, 0.0], vec![0.0, 1.0]],
                c: vec![-0.4, 0.5],
            }),
            blocks: vec![],
            known_solution: Some(vec![0.3, -0.2]),
            seed: None,
            start: Some(vec![0.9, -0.7]),
        },
        ProblemSpec {
            name: "composite-1".into(),
            kind: ProblemKind::Composite,
            resolvent: ResolventSpec::Quadratic {
                q: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
                c: vec![0.5, -1.0],
            },
            forward: Some(ForwardSpec::Linear {
                matrix: vec![vec![0.0, 0.5], vec![-0.5, 0.0]],
            }),
            cocoercive: None,
            blocks: vec![
                BlockSpec {
                    resolvent: ResolventSpec::Quadratic {
                        q: vec![vec![2.0, 0.0], vec![0.0, 1.0]],
                        c: vec![0.0, 0.0],
                    },
                    dual_forward: ForwardSpec::QuadraticGradient {
                        q: vec![vec![0.5, 0.0], vec![0.0, 0.5]],
                        c: vec![0.1, 0.0],
                    },
                    coupling: vec![vec![1.0, 0.3], vec![-0.2, 0.8]],
                },
                BlockSpec {
                    resolvent: ResolventSpec::Quadratic {
                        q: vec![vec![3.0]],
                        c: vec![0.0],
                    },
                    dual_forward: ForwardSpec::QuadraticGradient {
                        q: vec![vec![0.25]],
                        c: vec![0.2],
                    },
                    coupling: vec![vec![0.7, -0.4]],
                },
            ],
            // solution of the lifted affine stationarity system, flattened as
            // (x, v1, v2)
            known_solution: Some(vec![
                -0.07798549139673867,
                0.2979300406436764,
                -0.0886064792036357,
                0.16929408719619254,
                -0.6407346175460362,
            ]),
            seed: None,
            start: None,
        },
    ]
}

/// Looks a problem up in the registry by name.
pub fn registry_problem(name: &str) -> Result<ProblemSpec> {
    registry()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownProblem(name.to_string()))
}

fn fuse_forwards(b: &ForwardOp, c: &ForwardOp) -> Result<ForwardOp> {
    let (b2, c2) = (b.clone(), c.clone());
    // a valid (if conservative) Lipschitz constant for the sum
    ForwardOp::from_fn(
        format!("{}+{}", b.label(), c.label()),
        b.domain_dim(),
        b.lipschitz_mu() + c.lipschitz_mu(),
        move |x| {
            let bx = b2.apply(x).expect("dimension fixed at construction");
            let cx = c2.apply(x).expect("dimension fixed at construction");
            DenseVector::from_raw(bx.iter().zip(cx.iter()).map(|(u, v)| u + v).collect())
        },
    )
}

/// Adapts a materialized problem to the operator layout a method expects:
///
/// * `fbs` takes the cocoercive slot only; a cocoercive two-operator forward
///   part is moved there.
/// * `fbfs`/`frbs`/`rfbs` take the Lipschitz slot only; a third operator is
///   folded into it (summing the constants).
/// * `srfb` takes both; a missing cocoercive part becomes the zero operator.
/// * composite problems are lifted to their product-space operators.
pub fn assemble(method: Method, mat: &Materialized) -> Result<MonotoneInclusion> {
    let (a, b, c) = match &mat.form {
        MaterializedForm::Inclusion(p) => (
            p.resolvent().clone(),
            p.lipschitz().cloned(),
            p.cocoercive().cloned(),
        ),
        MaterializedForm::Composite(p) => (
            build_product_resolvent(p)?,
            Some(build_product_forward(p)?),
            None,
        ),
    };
    let dim = a.domain_dim();
    match method {
        Method::Fbs => match (b, c) {
            (None, Some(c)) => MonotoneInclusion::forward_backward(a, c),
            (Some(b), None) if b.cocoercive_beta().is_some() => {
                MonotoneInclusion::forward_backward(a, b)
            }
            (Some(b), None) => Err(Error::InvalidProblem(format!(
                "operator '{}' is not declared cocoercive; fbs does not apply",
                b.label()
            ))),
            (Some(_), Some(_)) => Err(Error::InvalidProblem(
                "fbs cannot absorb a separate Lipschitz part".into(),
            )),
            (None, None) => Err(Error::InvalidProblem("no forward operator".into())),
        },
        Method::Fbfs | Method::Frbs | Method::Rfbs => match (b, c) {
            (Some(b), None) => MonotoneInclusion::two_op(a, b),
            (None, Some(c)) => MonotoneInclusion::two_op(a, c),
            (Some(b), Some(c)) => MonotoneInclusion::two_op(a, fuse_forwards(&b, &c)?),
            (None, None) => Err(Error::InvalidProblem("no forward operator".into())),
        },
        Method::Srfb => match (b, c) {
            (Some(b), Some(c)) => MonotoneInclusion::three_op(a, b, c),
            (Some(b), None) => MonotoneInclusion::three_op(a, b, zero_forward(dim)),
            (None, Some(c)) => MonotoneInclusion::three_op(a, zero_forward(dim), c),
            (None, None) => Err(Error::InvalidProblem("no forward operator".into())),
        },
    }
}

/// The starting point used for benchmark runs of a problem.
pub fn start_point(mat: &Materialized, dim: usize) -> DenseVector {
    match &mat.start {
        Some(s) if s.dim() == dim => s.clone(),
        // composite starts cover the primal block; pad duals with zeros
        Some(s) if s.dim() < dim => {
            let mut coords = s.as_slice().to_vec();
            coords.resize(dim, 0.0);
            DenseVector::new(coords).expect("finite")
        }
        _ => DenseVector::zeros(dim),
    }
}

/// What happened in one cell of the method-by-problem matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellStatus {
    Converged,
    MaxIter,
    Diverged,
    Skipped,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Converged => "converged",
            CellStatus::MaxIter => "max-iter",
            CellStatus::Diverged => "diverged",
            CellStatus::Skipped => "skipped",
        }
    }
}

/// One cell of a [`BenchmarkReport`].
#[derive(Clone, Debug)]
pub struct CellResult {
    pub method: Method,
    pub problem: String,
    pub status: CellStatus,
    pub gamma: Option<f64>,
    pub iterations: usize,
    pub final_residual: Option<f64>,
    pub forward_calls_b: u64,
    pub forward_calls_c: u64,
    /// Distance of the final iterate to the recorded solution, when one exists.
    pub solution_error: Option<f64>,
    pub seed: Option<u64>,
    pub wall_time: Duration,
    pub note: String,
}

/// Results for every requested (method, problem) cell, in method-major order.
#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub cells: Vec<CellResult>,
}

/// Optional knobs for [`run_matrix`].
#[derive(Clone, Debug, Default)]
pub struct MatrixOverrides {
    /// Fixed stepsize for every cell instead of the per-cell default.
    pub gamma: Option<f64>,
    /// Run type-incompatible cells anyway (with stepsize checks off) so the
    /// divergence behaviour can be demonstrated, instead of skipping them.
    pub divergence_demo: bool,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
}

fn fmt_float(v: f64) -> String {
    // shortest round-trip formatting; locale-independent
    format!("{v}")
}

fn fmt_opt_float(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn run_cell(method: Method, spec: &ProblemSpec, overrides: &MatrixOverrides) -> Result<CellResult> {
    let started = Instant::now();
    let skipped = |note: String, elapsed: Duration| CellResult {
        method,
        problem: spec.name.clone(),
        status: CellStatus::Skipped,
        gamma: None,
        iterations: 0,
        final_residual: None,
        forward_calls_b: 0,
        forward_calls_c: 0,
        solution_error: None,
        seed: spec.seed,
        wall_time: elapsed,
        note,
    };

    // materialize once to derive the default stepsize, then again with the
    // factorization caches primed for it
    let probe = materialize(spec, &[])?;
    let mut config = RunConfig::new(1.0);
    config.max_iter = overrides.max_iter.unwrap_or(100_000);
    config.tol = overrides.tol.unwrap_or(1e-8);

    let forced_pairing = |mat: &Materialized| -> Result<MonotoneInclusion> {
        // the divergence demo pushes whatever forward operator exists into
        // the slot the method reads, cocoercive or not
        match (&mat.form, method) {
            (MaterializedForm::Inclusion(p), Method::Fbs) => {
                let op = p
                    .lipschitz()
                    .or(p.cocoercive())
                    .ok_or_else(|| Error::InvalidProblem("no forward operator".into()))?;
                MonotoneInclusion::forward_backward(p.resolvent().clone(), op.clone())
            }
            _ => Err(Error::InvalidProblem(
                "no forced pairing for this method".into(),
            )),
        }
    };

    let assembled = match assemble(method, &probe) {
        Ok(p) => p,
        Err(err) if overrides.divergence_demo => match forced_pairing(&probe) {
            Ok(p) => p,
            Err(_) => return Ok(skipped(err.to_string(), started.elapsed())),
        },
        Err(err) => return Ok(skipped(err.to_string(), started.elapsed())),
    };

    let gamma = match overrides.gamma {
        Some(g) => g,
        None => match default_gamma(method, &assembled, &config) {
            Ok(g) => g,
            Err(_) if overrides.divergence_demo => {
                // no valid bound exists for a forced pairing; borrow the
                // reflected-method range for the demonstration
                let mu = assembled
                    .cocoercive()
                    .or(assembled.lipschitz())
                    .map(|op| op.lipschitz_mu())
                    .filter(|mu| *mu > 0.0)
                    .unwrap_or(1.0);
                0.9 * stepsize_rfbs_lipschitz(mu)?.sup
            }
            Err(err) => return Ok(skipped(err.to_string(), started.elapsed())),
        },
    };
    config.gamma = gamma;
    config.allow_unsafe_gamma = overrides.divergence_demo;

    // rebuild with factor caches primed for the chosen stepsize
    let mat = materialize(spec, &[gamma])?;
    let problem = match assemble(method, &mat) {
        Ok(p) => p,
        Err(_) if overrides.divergence_demo => forced_pairing(&mat).unwrap_or(assembled),
        Err(err) => return Ok(skipped(err.to_string(), started.elapsed())),
    };

    let start = start_point(&mat, problem.dim());
    let outcome = run(method, &problem, (start.clone(), start), &config);
    let wall_time = started.elapsed();
    let cell = match outcome {
        Ok(trace) => {
            let solution_error = match &mat.known_solution {
                Some(sol) if sol.dim() == trace.final_x.dim() => Some(trace.final_x.distance(sol)?),
                _ => None,
            };
            CellResult {
                method,
                problem: spec.name.clone(),
                status: if trace.converged {
                    CellStatus::Converged
                } else {
                    CellStatus::MaxIter
                },
                gamma: Some(gamma),
                iterations: trace.iterations(),
                final_residual: trace.final_residual(),
                forward_calls_b: trace.forward_calls_b,
                forward_calls_c: trace.forward_calls_c,
                solution_error,
                seed: spec.seed,
                wall_time,
                note: String::new(),
            }
        }
        Err(Error::Diverged { iter, trace }) => CellResult {
            method,
            problem: spec.name.clone(),
            status: CellStatus::Diverged,
            gamma: Some(gamma),
            iterations: iter,
            final_residual: trace.final_residual(),
            forward_calls_b: trace.forward_calls_b,
            forward_calls_c: trace.forward_calls_c,
            solution_error: None,
            seed: spec.seed,
            wall_time,
            note: "iterates left the representable range".into(),
        },
        Err(err) => skipped(err.to_string(), wall_time),
    };
    Ok(cell)
}

/// Runs every (method, problem) pair in a worker pool and assembles the
/// report in method-major order regardless of completion order.
pub fn run_matrix(
    methods: &[Method],
    problems: &[ProblemSpec],
    overrides: &MatrixOverrides,
) -> Result<BenchmarkReport> {
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    if problems.is_empty() {
        return Err(Error::Config("no problems requested".into()));
    }
    let cells: Vec<(usize, Result<CellResult>)> = methods
        .iter()
        .flat_map(|m| problems.iter().map(move |p| (*m, p)))
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(idx, (method, spec))| (idx, run_cell(method, spec, overrides)))
        .collect();
    let mut ordered: Vec<(usize, CellResult)> = cells
        .into_iter()
        .map(|(idx, r)| r.map(|c| (idx, c)))
        .collect::<Result<Vec<_>>>()?;
    ordered.sort_by_key(|(idx, _)| *idx);
    Ok(BenchmarkReport {
        cells: ordered.into_iter().map(|(_, c)| c).collect(),
    })
}

impl BenchmarkReport {
    /// Machine-readable CSV. Deterministic: repeated runs with the same
    /// configuration produce byte-identical output (timings are excluded).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,problem,status,gamma,iterations,final_residual,forward_calls_b,forward_calls_c,solution_error,seed,note\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                c.method,
                c.problem,
                c.status.as_str(),
                fmt_opt_float(c.gamma),
                c.iterations,
                fmt_opt_float(c.final_residual),
                c.forward_calls_b,
                c.forward_calls_c,
                fmt_opt_float(c.solution_error),
                c.seed.map(|s| s.to_string()).unwrap_or_default(),
                c.note.replace(',', ";"),
            ));
        }
        out
    }

    /// Human-readable aligned table (includes wall-clock timings).
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:<12} {:<10} {:>12} {:>9} {:>13} {:>8} {:>8} {:>12} {:>9}\n",
            "method",
            "problem",
            "status",
            "gamma",
            "iters",
            "residual",
            "B-calls",
            "C-calls",
            "sol-error",
            "time"
        ));
        for c in &self.cells {
            out.push_str(&format!(
                "{:<6} {:<12} {:<10} {:>12} {:>9} {:>13} {:>8} {:>8} {:>12} {:>9}{}\n",
                c.method.to_string(),
                c.problem,
                c.status.as_str(),
                c.gamma.map(|g| format!("{g:.6}")).unwrap_or_default(),
                c.iterations,
                c.final_residual
                    .map(|r| format!("{r:.3e}"))
                    .unwrap_or_default(),
                c.forward_calls_b,
                c.forward_calls_c,
                c.solution_error
                    .map(|e| format!("{e:.3e}"))
                    .unwrap_or_default(),
                format!("{:.1?}", c.wall_time),
                if c.note.is_empty() {
                    String::new()
                } else {
                    format!("  [{}]", c.note)
                }
            ));
        }
        out
    }
}

/// Writes a per-iteration trace as CSV with the fixed header
/// `iter,step_norm,natural_residual,lyapunov_E,lyapunov_alpha`. Unrecorded
/// diagnostics become empty fields. Byte-identical across repeated runs.
pub fn emit_trace_csv(trace: &ConvergenceTrace, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let mut out = String::from("iter,step_norm,natural_residual,lyapunov_E,lyapunov_alpha\n");
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter,
            fmt_float(r.step_norm),
            fmt_float(r.natural_residual),
            fmt_opt_float(r.lyapunov_e),
            fmt_opt_float(r.lyapunov_alpha),
        ));
    }
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Writes the machine-readable report CSV.
pub fn emit_report(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(report.to_csv().as_bytes())?;
    Ok(())
}

/// Runs the sampling validators appropriate for each operator of a problem
/// and returns one report per check.
pub fn validate_problem(mat: &Materialized) -> Result<Vec<crate::checks::CheckReport>> {
    use crate::checks::*;
    let gammas = [0.1, 1.0, 10.0];
    let pairs = 100;
    let seed = 0xC0FFEE;
    let mut reports = Vec::new();

    fn resolvent_suite(
        op: &ResolventOp,
        gammas: &[f64],
        pairs: usize,
        seed: u64,
        reports: &mut Vec<CheckReport>,
    ) -> Result<()> {
        reports.push(check_firmly_nonexpansive(op, gammas, pairs, 1e-10, seed)?);
        reports.push(check_resolvent_certificate(
            op,
            gammas,
            pairs,
            1e-10,
            seed + 1,
        )?);
        reports.push(check_moreau_identity(op, gammas, pairs, 1e-12, seed + 2)?);
        Ok(())
    }
    fn forward_suite(
        op: &ForwardOp,
        pairs: usize,
        seed: u64,
        reports: &mut Vec<CheckReport>,
    ) -> Result<()> {
        reports.push(check_monotone(op, pairs, 1e-10, seed + 3)?);
        reports.push(check_lipschitz(op, pairs, 1e-6, seed + 4)?);
        reports.push(check_cocoercive(op, pairs, 1e-10, seed + 5)?);
        Ok(())
    }

    match &mat.form {
        MaterializedForm::Inclusion(p) => {
            resolvent_suite(p.resolvent(), &gammas, pairs, seed, &mut reports)?;
            for op in [p.lipschitz(), p.cocoercive()].into_iter().flatten() {
                forward_suite(op, pairs, seed, &mut reports)?;
            }
        }
        MaterializedForm::Composite(p) => {
            resolvent_suite(p.resolvent(), &gammas, pairs, seed, &mut reports)?;
            forward_suite(p.forward(), pairs, seed, &mut reports)?;
            for (i, block) in p.blocks().iter().enumerate() {
                resolvent_suite(&block.prox, &gammas, pairs, seed, &mut reports)?;
                resolvent_suite(p.dual_resolvent(i), &gammas, pairs, seed, &mut reports)?;
                forward_suite(&block.dual_forward, pairs, seed, &mut reports)?;
                reports.push(check_adjoint(&block.coupling, pairs, 1e-12, seed + 6)?);
            }
            let lifted_forward = build_product_forward(p)?;
            let lifted_resolvent = build_product_resolvent(p)?;
            resolvent_suite(&lifted_resolvent, &gammas, pairs, seed, &mut reports)?;
            forward_suite(&lifted_forward, pairs, seed, &mut reports)?;
            debug_assert!((lifted_forward.lipschitz_mu() - aggregate_mu(p)).abs() < 1e-12);
        }
    }
    Ok(reports)
}
