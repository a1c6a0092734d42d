use genbound::bounds::{expectation_bound, ExpectationInput, MgfMode};
use genbound::info::{BallSearchConfig, Channel, Pmf};
use genbound::learning::{gibbs_4x4, Constant, Gibbs};
use genbound::matrix::Matrix;
use genbound::validation::*;

fn gibbs() -> Gibbs {
    Gibbs {
        prior: Pmf::uniform(4),
        beta: 1.0,
    }
}

#[test]
fn trivial_bound_functions() {
    let prob = gibbs_4x4();
    let alg = gibbs();
    let r = mc_tail_validate(&prob, &alg, |_, _, _| Ok(f64::INFINITY), 5, 0.1, 500, 1).unwrap();
    assert_eq!(r.violations, 0);
    assert!(r.pass);
    let r = mc_tail_validate(&prob, &alg, |_, _, _| Ok(f64::NEG_INFINITY), 5, 0.1, 500, 1).unwrap();
    assert_eq!(r.violations, 500);
    assert!(!r.pass);
    assert!(mc_tail_validate(&prob, &alg, |_, _, _| Ok(0.0), 5, 0.1, 99, 1).is_err());
}

#[test]
fn counts_do_not_depend_on_thread_count() {
    let prob = gibbs_4x4();
    let alg = gibbs();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_tail_validate(&prob, &alg, |_, _, _| Ok(0.05), 10, 0.1, 2000, 42).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn constant_algorithm_is_unbiased() {
    let prob = gibbs_4x4();
    let alg = Constant(Pmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap());
    let r = mc_expectation_validate(&prob, &alg, f64::INFINITY, 8, 5000, 3).unwrap();
    assert!(r.pass);
    assert!(r.mc_mean.abs() <= 3.0 * r.ci_halfwidth, "{r:?}");
}

#[test]
fn gibbs_expectation_bound_passes() {
    let prob = gibbs_4x4();
    let alg = gibbs();
    let n = 4;
    let induced = prob.induced_joint(&alg, n).unwrap();
    let marginal = Channel::constant(induced.joint.rows(), &induced.joint.col_marginal());
    let input = ExpectationInput {
        p: &induced.joint,
        p_hat: &induced.posterior,
        q_hat: &marginal,
        f: &induced.gen,
        g: &induced.gen,
        epsilon: 0.0,
    };
    let bound = expectation_bound(&input, 5.0, MgfMode::Exact).unwrap();
    let r = mc_expectation_validate(&prob, &alg, bound.bound_value, n, 5000, 4).unwrap();
    assert!(r.pass, "{r:?}");
    assert!((r.mc_mean - induced.expected_gen()).abs() <= 4.0 * r.ci_halfwidth);
}

#[test]
fn pac_bayes_rate_tail_guarantee_small() {
    let prob = gibbs_4x4();
    let alg = gibbs();
    let (n, delta) = (10, 0.1);
    let sigma = prob.subgaussian_sigma().unwrap();
    let prior = alg.prior.clone();
    let r = mc_tail_validate(
        &prob,
        &alg,
        |_, post, w| {
            let rate = disintegrated_rate(post, &prior, w);
            Ok(genbound::bounds::variable_size_bound(rate, sigma, n, delta, 0.0)?.bound_value)
        },
        n,
        delta,
        2000,
        5,
    )
    .unwrap();
    assert!(r.pass, "{r:?}");
}

/// Exact failure probability for the two-symbol instance: a block with `k`
/// matches is covered by a uniform codeword with `j` matches iff
/// `j >= k - 0.2 m`.
fn exact_failure(m: usize, rate: f64) -> f64 {
    fn binom(m: usize, k: usize, p: f64) -> f64 {
        let mut c = 1.0;
        for i in 0..k {
            c = c * (m - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((m - k) as i32)
    }
    let n_book = (m as f64 * rate).exp().floor() as i32;
    (0..=m)
        .map(|k| {
            let need = (k as f64 - 0.2 * m as f64).ceil().max(0.0) as usize;
            let hit: f64 = (need..=m).map(|j| binom(m, j, 0.5)).sum();
            binom(m, k, 0.9) * (1.0 - hit).powi(n_book)
        })
        .sum()
}

#[test]
fn covering_matches_exact_failure_probability() {
    let inst = covering_2x2();
    let trials = 20_000;
    let rows = covering_failure_estimate(&inst, COVERING_2X2_EPSILON, &[4, 8, 12], trials, 8).unwrap();
    for row in rows {
        let p = exact_failure(row.m, COVERING_2X2_RATE);
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((row.failure_prob - p).abs() <= 4.0 * se, "{row:?} exact {p}");
    }
}

#[test]
fn covering_rates_meet_requirement() {
    let inst = covering_2x2();
    let req = covering_rate_requirement(
        &inst,
        COVERING_2X2_EPSILON,
        COVERING_2X2_DELTA,
        BallSearchConfig::default(),
    )
    .unwrap();
    assert!(req.sup_estimate >= req.baseline);
    assert!(COVERING_2X2_RATE >= req.sup_estimate, "{req:?}");
}

#[test]
fn covering_edge_cases() {
    let inst = covering_2x2();
    let rows = covering_failure_estimate(&inst, 10.0, &[2, 4], 500, 1).unwrap();
    for row in &rows {
        assert!(row.censored);
        assert_eq!(row.exponent, f64::INFINITY);
        assert!((row.failure_upper - 3.0 / 500.0).abs() < 1e-15);
    }
    let zero = inst.with_rates(Matrix::filled(2, 2, 0.0)).unwrap();
    let rows = covering_failure_estimate(&zero, -1.0, &[2, 4], 500, 1).unwrap();
    for row in &rows {
        assert_eq!(row.failures, 500);
        assert_eq!(row.exponent, 0.0);
    }
}

#[test]
fn covering_exponent_monotone_in_rates() {
    let inst = covering_2x2();
    let mut last: Option<Vec<usize>> = None;
    for r in [0.1, 0.2, 0.3, 0.417, 0.5] {
        let more = inst.with_rates(Matrix::filled(2, 2, r)).unwrap();
        let rows = covering_failure_estimate(&more, COVERING_2X2_EPSILON, &[4, 8], 3000, 21).unwrap();
        let fails: Vec<usize> = rows.iter().map(|r| r.failures).collect();
        if let Some(prev) = &last {
            for (a, b) in prev.iter().zip(&fails) {
                assert!(b <= a, "{prev:?} -> {fails:?}");
            }
        }
        last = Some(fails);
    }
}
