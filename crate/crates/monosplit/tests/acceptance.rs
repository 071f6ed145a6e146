//! Acceptance suite: every convergence guarantee the library claims, run at
//! its stated tolerance. One PASS/FAIL line per criterion
//! (`cargo test --test acceptance -- --nocapture` to see them all).

mod common;

use std::time::Instant;

use monosplit::bench::{assemble, materialize, registry_problem, MaterializedForm};
use monosplit::composite::{
    build_product_forward, build_product_resolvent, default_composite_gamma,
    solve_composite, step_pridu, verify_inclusion, PrimalDualState,
};
use monosplit::linalg::{reflect, DenseVector};
use monosplit::operators::{
    make_skew_pair, moreau_inverse_resolvent, prox_l1, prox_quadratic, prox_zero, proj_box,
    zero_forward, LinearMap,
};
use monosplit::splitting::{
    cocoercive_descent, lyapunov_alpha, method_stepsize_bound, run, step_frbs, step_rfbs,
    stepsize_fbfs,
    stepsize_frbs, stepsize_rfbs_cocoercive, stepsize_rfbs_lipschitz, stepsize_srfb, IterateState,
    Method, MonotoneInclusion, RunConfig,
};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn verdict(name: &str, pass: bool) {
    println!(
        "acceptance {name}: {}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn forced_iterations(gamma: f64, iters: usize) -> RunConfig {
    // a tolerance no finite residual reaches, so the loop runs to the budget
    let mut config = RunConfig::new(gamma);
    config.max_iter = iters;
    config.tol = f64::MIN_POSITIVE;
    config
}

/// 1. Reflected-scheme energy descent on the bilinear saddle problem:
///    E is nonincreasing (to 1e-10) and nonnegative (to -1e-10) for 1000
///    iterations at gamma = 0.9(sqrt(2)-1), and the run takes under 1 s.
#[test]
fn criterion_1_lyapunov_descent() {
    let started = Instant::now();
    let mat = materialize(&registry_problem("skew-box").unwrap(), &[]).unwrap();
    let problem = assemble(Method::Rfbs, &mat).unwrap();
    let gamma = 0.9 * (2.0_f64.sqrt() - 1.0);
    let mut config = forced_iterations(gamma, 1000);
    config.record_lyapunov = Some(DenseVector::zeros(2));
    let start = DenseVector::new(vec![0.9, -0.7]).unwrap();
    let trace = run(Method::Rfbs, &problem, (start.clone(), start), &config).unwrap();

    let energies: Vec<f64> = trace
        .records
        .iter()
        .map(|r| r.lyapunov_e.expect("recorded"))
        .collect();
    let monotone = energies.windows(2).all(|w| w[1] <= w[0] + 1e-10);
    let nonnegative = energies.iter().all(|&e| e >= -1e-10);
    let timely = started.elapsed().as_secs_f64() < 1.0;
    let pass = energies.len() == 1000 && monotone && nonnegative && timely;
    verdict("1 (energy descent, Lipschitz regime)", pass);
    assert!(monotone, "energy increased somewhere");
    assert!(nonnegative, "energy went negative");
    assert_eq!(energies.len(), 1000);
    assert!(timely, "took {:?}", started.elapsed());
}

/// 2. Cocoercive regime on the sparse-regression problem: at
///    gamma = beta(1-eps)/2 with eps = 0.1 the proof's distance-like quantity
///    is nonincreasing for 2000 iterations, the residual reaches 1e-8 within
///    50 000 iterations, the solution matches a long forward-backward run to
///    1e-6, and everything takes under 5 s.
#[test]
fn criterion_2_cocoercive_descent() {
    let started = Instant::now();
    let mat = materialize(&registry_problem("lasso").unwrap(), &[]).unwrap();
    let reflected = assemble(Method::Rfbs, &mat).unwrap();
    let b = reflected.lipschitz().unwrap().clone();
    let beta = b.cocoercive_beta().expect("gradient is cocoercive");
    let epsilon = 0.1;
    let gamma = beta * (1.0 - epsilon) / 2.0;

    // independent oracle: a long plain forward-backward run
    let fb = assemble(Method::Fbs, &mat).unwrap();
    let mut oracle_config = RunConfig::new(beta);
    oracle_config.tol = 1e-12;
    oracle_config.max_iter = 500_000;
    let zeros = DenseVector::zeros(20);
    let oracle = run(Method::Fbs, &fb, (zeros.clone(), zeros.clone()), &oracle_config).unwrap();
    assert!(oracle.converged, "oracle run did not converge");
    let x_star = oracle.final_x.clone();

    // descent of the decreasing quantity along 2000 reflected iterations
    let mut state = IterateState::from_start(zeros.clone());
    let mut values = Vec::with_capacity(2000);
    for _ in 0..2000 {
        let x_old = state.x_cur.clone();
        let y_prev = reflect(&state.x_cur, &state.x_prev).unwrap();
        state = step_rfbs(state, reflected.resolvent(), &b, gamma).unwrap();
        values.push(
            cocoercive_descent(&state.x_cur, &x_old, &y_prev, &b, gamma, epsilon, &x_star)
                .unwrap(),
        );
    }
    let monotone = values.windows(2).all(|w| w[1] <= w[0] + 1e-10);

    // full run to tolerance
    let mut config = RunConfig::new(gamma);
    config.epsilon = epsilon;
    config.tol = 1e-8;
    config.max_iter = 50_000;
    let trace = run(Method::Rfbs, &reflected, (zeros.clone(), zeros), &config).unwrap();
    let converged = trace.converged && trace.final_residual().unwrap() <= 1e-8;
    let matches_oracle = trace.final_x.distance(&x_star).unwrap() <= 1e-6;
    let timely = started.elapsed().as_secs_f64() < 5.0;

    let pass = monotone && converged && matches_oracle && timely;
    verdict("2 (cocoercive-regime descent and oracle match)", pass);
    assert!(monotone, "decreasing quantity increased somewhere");
    assert!(converged, "residual did not reach 1e-8 in 50k iterations");
    assert!(
        matches_oracle,
        "distance to oracle {}",
        trace.final_x.distance(&x_star).unwrap()
    );
    assert!(timely, "took {:?}", started.elapsed());
}

/// 3. Three-operator descent: alpha is nonincreasing (to 1e-10) for 1000
///    iterations at a stepsize strictly inside the admissible system with
///    zeta = 0.25, xi = 1, and the iterates converge to the certified zero
///    within 1e-6.
#[test]
fn criterion_3_srfb_descent() {
    let mat = materialize(&registry_problem("three-op").unwrap(), &[]).unwrap();
    let problem = assemble(Method::Srfb, &mat).unwrap();
    let mu = problem.lipschitz().unwrap().lipschitz_mu();
    let beta = problem.cocoercive().unwrap().cocoercive_beta().unwrap();
    let bound = stepsize_srfb(mu, beta, 0.25, 1.0).unwrap();
    let gamma = 0.9 * bound.sup;
    let solution = mat.known_solution.clone().unwrap();

    // the recorded solution really is a zero of the operator sum
    let certified = problem.residual(&solution, gamma).unwrap() <= 1e-10;

    // drive exactly 1000 steps (the iterate may freeze at an exact
    // floating-point fixed point long before that; alpha just stays put)
    let b = problem.lipschitz().unwrap();
    let c = problem.cocoercive().unwrap();
    let start = DenseVector::new(vec![0.9, -0.7]).unwrap();
    let mut state = IterateState::from_start(start.clone());
    let mut alphas = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let x_old = state.x_cur.clone();
        let y_prev = reflect(&state.x_cur, &state.x_prev).unwrap();
        state = monosplit::splitting::step_srfb(state, problem.resolvent(), b, c, gamma).unwrap();
        alphas.push(
            lyapunov_alpha(&state.x_cur, &x_old, &y_prev, b, gamma, 0.25, &solution).unwrap(),
        );
    }
    let monotone = alphas.windows(2).all(|w| w[1] <= w[0] + 1e-10);

    let mut solve_config = RunConfig::new(gamma);
    solve_config.tol = 1e-9;
    let solved = run(Method::Srfb, &problem, (start.clone(), start), &solve_config).unwrap();
    let close = solved.final_x.distance(&solution).unwrap() <= 1e-6;

    let pass = certified && alphas.len() == 1000 && monotone && close;
    verdict("3 (three-operator descent)", pass);
    assert!(certified, "registry solution fails the residual check");
    assert!(monotone, "alpha increased somewhere");
    assert!(close, "final iterate missed the zero");
}

/// 4. Reduction identities: with a zero cocoercive part the semi-reflected
///    scheme reproduces the reflected trace bit for bit; with a zero
///    Lipschitz part it reproduces the forward-backward trace bit for bit.
#[test]
fn criterion_4_reduction_identities() {
    let mut all = true;

    // zero C: srfb == rfbs on every problem with a Lipschitz forward part
    for name in ["lasso", "skew-box", "three-op", "composite-1"] {
        let mat = materialize(&registry_problem(name).unwrap(), &[]).unwrap();
        let reflected = assemble(Method::Rfbs, &mat).unwrap();
        let dim = reflected.dim();
        let semi = MonotoneInclusion::three_op(
            reflected.resolvent().clone(),
            reflected.lipschitz().unwrap().clone(),
            zero_forward(dim),
        )
        .unwrap();
        let config = RunConfig::new(1.0);
        let gamma = 0.9 * method_stepsize_bound(Method::Srfb, &semi, &config).unwrap().sup;
        let mut config = RunConfig::new(gamma);
        config.max_iter = 2_000;
        let start = DenseVector::new(vec![0.37; dim]).unwrap();
        let a = run(Method::Rfbs, &reflected, (start.clone(), start.clone()), &config).unwrap();
        let b = run(Method::Srfb, &semi, (start.clone(), start), &config).unwrap();
        let same = common::traces_bit_identical(&a, &b);
        all &= same;
        assert!(same, "zero-C reduction differs on {name}");
    }

    // zero B: srfb == fbs wherever a cocoercive operator is available
    for name in ["lasso", "three-op"] {
        let mat = materialize(&registry_problem(name).unwrap(), &[]).unwrap();
        let MaterializedForm::Inclusion(p) = &mat.form else {
            panic!("expected inclusion")
        };
        let coco = p
            .cocoercive()
            .or(p.lipschitz().filter(|op| op.cocoercive_beta().is_some()))
            .expect("cocoercive operator available")
            .clone();
        let a_op = p.resolvent().clone();
        let dim = a_op.domain_dim();
        let forward = MonotoneInclusion::forward_backward(a_op.clone(), coco.clone()).unwrap();
        let semi =
            MonotoneInclusion::three_op(a_op, zero_forward(dim), coco).unwrap();
        let config = RunConfig::new(1.0);
        let gamma = 0.9 * method_stepsize_bound(Method::Srfb, &semi, &config).unwrap().sup;
        let mut config = RunConfig::new(gamma);
        config.max_iter = 2_000;
        let start = DenseVector::new(vec![0.37; dim]).unwrap();
        let a = run(Method::Fbs, &forward, (start.clone(), start.clone()), &config).unwrap();
        let b = run(Method::Srfb, &semi, (start.clone(), start), &config).unwrap();
        let same = common::traces_bit_identical(&a, &b);
        all &= same;
        assert!(same, "zero-B reduction differs on {name}");
    }

    verdict("4 (reduction identities, bitwise)", all);
    assert!(all);
}

/// 5. Product-space equivalence: the explicit primal-dual iteration and the
///    reflected scheme on the lifted operators agree to 1e-10 per coordinate
///    over 200 iterations, the limit certifies the inclusion at 1e-7, and an
///    independent linear solve confirms the recorded solution.
#[test]
fn criterion_5_product_space_equivalence() {
    let mat = materialize(&registry_problem("composite-1").unwrap(), &[]).unwrap();
    let MaterializedForm::Composite(p) = &mat.form else {
        panic!("expected composite")
    };
    let gamma = default_composite_gamma(p);

    let lifted_a = build_product_resolvent(p).unwrap();
    let lifted_b = build_product_forward(p).unwrap();

    let mut pd = PrimalDualState::zeros(p);
    let mut flat = IterateState::from_start(DenseVector::zeros(p.total_dim()));
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        pd = step_pridu(pd, p, gamma).unwrap();
        flat = step_rfbs(flat, &lifted_a, &lifted_b, gamma).unwrap();
        worst = worst.max(common::max_coord_diff(&pd.flatten(), &flat.x_cur));
    }
    let equivalent = worst <= 1e-10;

    let mut config = RunConfig::new(gamma);
    config.tol = 1e-8;
    let sol = solve_composite(p, &PrimalDualState::zeros(p), &config).unwrap();
    let certified = sol.trace.converged
        && verify_inclusion(p, &sol.primal, &sol.duals, 1e-7).unwrap();

    // independent oracle: assemble and solve the lifted stationarity system
    // of the affine problem by Gaussian elimination
    let t = vec![
        vec![1.0, 0.5, 1.0, -0.2, 0.7],
        vec![-0.5, 2.0, 0.3, 0.8, -0.4],
        vec![-1.0, -0.3, 1.0, 0.0, 0.0],
        vec![0.2, -0.8, 0.0, 1.5, 0.0],
        vec![-0.7, 0.4, 0.0, 0.0, 1.0 / 3.0 + 0.25],
    ];
    let rhs = vec![-0.5, 1.0, -0.1, 0.0, -0.2];
    let oracle = common::oracle_solve_linear(&t, &rhs);
    let frozen = mat.known_solution.clone().unwrap();
    let frozen_ok = frozen
        .iter()
        .zip(&oracle)
        .all(|(a, b)| (a - b).abs() <= 1e-12);
    let oracle_match = sol
        .trace
        .final_x
        .iter()
        .zip(&oracle)
        .all(|(a, b)| (a - b).abs() <= 1e-6);

    let pass = equivalent && certified && frozen_ok && oracle_match;
    verdict("5 (product-space equivalence)", pass);
    assert!(equivalent, "worst coordinate gap {worst}");
    assert!(certified, "limit failed the inclusion certificate");
    assert!(frozen_ok, "recorded solution disagrees with the oracle solve");
    assert!(oracle_match, "solver limit disagrees with the oracle solve");
}

/// 6. Stepsize validators reproduce their closed forms to 1e-12, with the
///    stated open/closed endpoint semantics.
#[test]
fn criterion_6_stepsize_validators() {
    let s2 = 2.0_f64.sqrt();
    let tol = 1e-12;
    let mut pass = true;
    let mut check = |actual: f64, expected: f64| {
        pass &= (actual - expected).abs() <= tol;
        assert!(
            (actual - expected).abs() <= tol,
            "stepsize bound {actual} != {expected}"
        );
    };

    check(stepsize_fbfs(1.0).unwrap().sup, 1.0);
    check(stepsize_fbfs(2.0).unwrap().sup, 0.5);
    check(stepsize_fbfs(0.5).unwrap().sup, 2.0);

    check(stepsize_frbs(1.0).unwrap().sup, 0.5);
    check(stepsize_frbs(0.5).unwrap().sup, 1.0);
    check(stepsize_frbs(10.0).unwrap().sup, 0.05);

    check(stepsize_rfbs_lipschitz(1.0).unwrap().sup, s2 - 1.0);
    check(stepsize_rfbs_lipschitz(s2 - 1.0).unwrap().sup, 1.0);
    check(stepsize_rfbs_lipschitz(2.0).unwrap().sup, (s2 - 1.0) / 2.0);

    check(stepsize_rfbs_cocoercive(1.0, 0.5).unwrap().sup, 0.25);
    check(stepsize_rfbs_cocoercive(2.0, 0.01).unwrap().sup, 0.99);
    check(stepsize_rfbs_cocoercive(1.0, 0.999).unwrap().sup, 0.0005);

    check(
        stepsize_srfb(1.0, 1.0, 0.25, 1.0).unwrap().sup,
        (0.75_f64).min(0.5).min(s2 - 1.0).min(0.5 / (s2 + 3.0)),
    );
    check(
        stepsize_srfb(2.0, 0.5, 0.4, 2.0).unwrap().sup,
        (0.3_f64)
            .min(0.8 / 3.0)
            .min((s2 - 1.0) / 2.0)
            .min(0.2 / (2.0 * (s2 + 1.0) + 2.0)),
    );

    // endpoint semantics: open for the Lipschitz families, closed for the
    // cocoercive rule
    let open = stepsize_rfbs_lipschitz(1.0).unwrap();
    let closed = stepsize_rfbs_cocoercive(1.0, 0.5).unwrap();
    pass &= !open.admits(open.sup) && open.admits(open.sup * (1.0 - 1e-12));
    pass &= closed.admits(closed.sup) && !closed.admits(closed.sup + 1e-12);
    pass &= !stepsize_fbfs(1.0).unwrap().admits(1.0);
    pass &= !stepsize_frbs(1.0).unwrap().admits(0.5);

    verdict("6 (stepsize validators)", pass);
    assert!(pass);
}

/// 7. Proximal maps match an independent derivative-free minimization oracle
///    to 1e-6 on 100 random inputs each, and the inversion identity
///    reconstructs inputs to 1e-12.
#[test]
fn criterion_7_prox_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240__417);
    let coords = Uniform::new(-4.0, 4.0);
    let gammas = [0.3, 1.0, 2.5];
    let mut pass = true;

    // soft thresholding vs 1-D minimization, coordinatewise
    let lambda = 0.8;
    let soft = prox_l1(3, lambda).unwrap();
    for i in 0..100 {
        let gamma = gammas[i % gammas.len()];
        let x = DenseVector::new((0..3).map(|_| coords.sample(&mut rng)).collect()).unwrap();
        let got = soft.resolve(gamma, &x).unwrap();
        for j in 0..3 {
            let want = common::oracle_prox_abs(gamma, lambda, x[j]);
            pass &= (got[j] - want).abs() <= 1e-6;
        }
    }

    // box projection vs interval minimization
    let lo = DenseVector::new(vec![-1.5, 0.0]).unwrap();
    let hi = DenseVector::new(vec![0.5, 2.0]).unwrap();
    let clamp = proj_box(&lo, &hi).unwrap();
    for i in 0..100 {
        let gamma = gammas[i % gammas.len()];
        let x = DenseVector::new((0..2).map(|_| coords.sample(&mut rng)).collect()).unwrap();
        let got = clamp.resolve(gamma, &x).unwrap();
        for j in 0..2 {
            let want = common::oracle_project_interval(lo[j], hi[j], x[j]);
            pass &= (got[j] - want).abs() <= 1e-6;
        }
    }

    // coupled quadratic vs cyclic coordinate descent
    let q_rows = vec![vec![2.0, 0.5], vec![0.5, 1.0]];
    let q = LinearMap::from_rows("Q", q_rows.clone()).unwrap();
    let c = DenseVector::new(vec![0.3, -0.7]).unwrap();
    let quad = prox_quadratic(&q, &c, &gammas).unwrap();
    for i in 0..100 {
        let gamma = gammas[i % gammas.len()];
        let x = DenseVector::new((0..2).map(|_| coords.sample(&mut rng)).collect()).unwrap();
        let got = quad.resolve(gamma, &x).unwrap();
        let want = common::oracle_prox_quadratic(&q_rows, c.as_slice(), gamma, x.as_slice(), 400);
        for j in 0..2 {
            pass &= (got[j] - want[j]).abs() <= 1e-6;
        }
    }

    // inversion identity reconstructs the input across the catalog
    let catalog = [
        prox_zero(2),
        prox_l1(2, 0.8).unwrap(),
        proj_box(&lo, &hi).unwrap(),
        prox_quadratic(&q, &c, &[]).unwrap(),
    ];
    for op in &catalog {
        for i in 0..100 {
            let gamma = gammas[i % gammas.len()];
            let x = DenseVector::new((0..2).map(|_| coords.sample(&mut rng)).collect()).unwrap();
            let direct = op.resolve(gamma, &x).unwrap();
            let dual_arg = DenseVector::new(x.iter().map(|v| v / gamma).collect()).unwrap();
            let dual = moreau_inverse_resolvent(op, 1.0 / gamma, &dual_arg).unwrap();
            for j in 0..2 {
                let recon = direct[j] + gamma * dual[j];
                pass &= (recon - x[j]).abs() <= 1e-12;
            }
        }
    }

    verdict("7 (prox oracle equivalence)", pass);
    assert!(pass);
}

/// 8. The counterexample that motivates reflection: explicit forward steps
///    on a pure rotation expand every iterate by exactly sqrt(1 + gamma^2),
///    while the reflected scheme at the same stepsize converges below 1e-8.
#[test]
fn criterion_8_rotation_counterexample() {
    let coupling = LinearMap::from_rows("L", vec![vec![1.0]]).unwrap();
    let rotation = make_skew_pair(&coupling).unwrap();
    let gamma = 0.9 * (2.0_f64.sqrt() - 1.0);
    let start = DenseVector::new(vec![1.0, 0.0]).unwrap();

    // explicit steps blow up at the exact geometric rate
    let explicit =
        MonotoneInclusion::forward_backward(prox_zero(2), rotation.clone()).unwrap();
    let mut config = forced_iterations(gamma, 400);
    config.allow_unsafe_gamma = true;
    let diverging = run(
        Method::Fbs,
        &explicit,
        (start.clone(), start.clone()),
        &config,
    )
    .unwrap();
    let growth = (1.0 + gamma * gamma).sqrt();
    let mut expanding = !diverging.converged;
    for pair in diverging.records.windows(2) {
        let ratio = pair[1].natural_residual / pair[0].natural_residual;
        expanding &= pair[1].natural_residual > pair[0].natural_residual;
        expanding &= (ratio - growth).abs() <= 1e-9 * growth;
    }

    // the reflected scheme converges at the same stepsize
    let reflected = MonotoneInclusion::two_op(prox_zero(2), rotation).unwrap();
    let mut config = RunConfig::new(gamma);
    config.tol = 1e-8;
    let converging = run(Method::Rfbs, &reflected, (start.clone(), start), &config).unwrap();
    let converged = converging.converged && converging.final_residual().unwrap() <= 1e-8;

    let pass = expanding && converged;
    verdict("8 (rotation counterexample)", pass);
    assert!(expanding, "explicit steps did not expand at the exact rate");
    assert!(converged, "reflected run failed to converge");
}

/// 9. Forward-call economy: N correction-scheme steps cost exactly 2N
///    evaluations; N reflected or forward-reflected steps cost exactly N
///    (plus the one-time memory initialization for the latter).
#[test]
fn criterion_9_forward_call_economy() {
    let mat = materialize(&registry_problem("skew-box").unwrap(), &[]).unwrap();
    let problem = assemble(Method::Rfbs, &mat).unwrap();
    let a = problem.resolvent();
    let b = problem.lipschitz().unwrap();
    let n = 500;
    let start = DenseVector::new(vec![0.9, -0.7]).unwrap();
    let mut pass = true;

    // raw stepping
    b.reset_call_count();
    let mut state = IterateState::from_start(start.clone());
    for _ in 0..n {
        state = monosplit::splitting::step_fbfs(state, a, b, 0.3).unwrap();
    }
    pass &= b.call_count() == 2 * n;
    assert_eq!(b.call_count(), 2 * n);

    b.reset_call_count();
    let mut state = IterateState::from_start(start.clone());
    for _ in 0..n {
        state = step_rfbs(state, a, b, 0.3).unwrap();
    }
    pass &= b.call_count() == n;
    assert_eq!(b.call_count(), n);

    b.reset_call_count();
    let mut state = IterateState::from_start(start.clone());
    for _ in 0..n {
        state = step_frbs(state, a, b, 0.2).unwrap();
    }
    pass &= b.call_count() == n + 1;
    assert_eq!(b.call_count(), n + 1);

    // the run loop attributes the same counts to the stepping scheme, with
    // stopping-rule diagnostics booked separately
    for (method, expected) in [
        (Method::Fbfs, 2 * n),
        (Method::Rfbs, n),
        (Method::Frbs, n + 1),
    ] {
        let config = forced_iterations(0.2, n as usize);
        let trace = run(method, &problem, (start.clone(), start.clone()), &config).unwrap();
        pass &= trace.forward_calls_b == expected;
        assert_eq!(trace.forward_calls_b, expected, "{method}");
    }

    verdict("9 (forward-call economy)", pass);
    assert!(pass);
}
