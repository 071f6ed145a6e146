//! Operator-splitting solvers for monotone inclusions.
//!
//! The crate finds zeros of sums of monotone operators `0 ∈ Ax + Bx (+ Cx)`,
//! with `A` maximally monotone (accessed through its resolvent), `B` monotone
//! and Lipschitz, and `C` cocoercive. The centerpiece is the reflected
//! forward-backward scheme — a single forward evaluation per iteration at the
//! extrapolated point `2xₙ − xₙ₋₁` — together with its three-operator
//! extension, the classical baselines it is measured against
//! (forward-backward, forward-backward-forward, forward-reflected-backward),
//! and a primal-dual solver for composite inclusions with linear couplings.
//!
//! Each convergence proof comes with a computable descent quantity; those are
//! exposed as diagnostics ([`splitting::lyapunov_e`],
//! [`splitting::lyapunov_alpha`], [`splitting::cocoercive_descent`]) so runs
//! can be checked against the theory, not just eyeballed.
//!
//! # Example
//!
//! Solve `0 ∈ N_[−1,1]²(x) + Rx` for a rotation field `R` — a bilinear saddle
//! problem on a box, where plain forward-backward steps spiral outwards but
//! the reflected scheme converges:
//!
//! ```
//! use monosplit::linalg::DenseVector;
//! use monosplit::operators::{make_skew_pair, proj_box, LinearMap};
//! use monosplit::splitting::{run, Method, MonotoneInclusion, RunConfig};
//!
//! let lo = DenseVector::new(vec![-1.0, -1.0])?;
//! let hi = DenseVector::new(vec![1.0, 1.0])?;
//! let coupling = LinearMap::from_rows("L", vec![vec![1.0]])?;
//! let problem = MonotoneInclusion::two_op(proj_box(&lo, &hi)?, make_skew_pair(&coupling)?)?;
//!
//! let gamma = 0.9 * (2.0_f64.sqrt() - 1.0); // inside ]0, (sqrt(2)-1)/mu[ with mu = 1
//! let start = DenseVector::new(vec![0.9, -0.7])?;
//! let trace = run(
//!     Method::Rfbs,
//!     &problem,
//!     (start.clone(), start),
//!     &RunConfig::new(gamma),
//! )?;
//! assert!(trace.converged);
//! assert!(trace.final_x.norm() < 1e-6);
//! # Ok::<(), monosplit::Error>(())
//! ```
//!
//! The `examples/` directory walks through each capability; the `monosplit`
//! binary wraps the benchmark harness ([`bench`]) for the command line.

pub mod bench;
pub mod cli;
pub mod checks;
pub mod composite;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod splitting;

pub use error::{Error, Result};
