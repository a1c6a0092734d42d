//! Monte Carlo checks of the probabilistic guarantees and the random-coding
//! covering simulator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::info::{gdelta_sup, kl_slices, BallSearch, BallSearchConfig, Joint, Pmf};
use crate::learning::{Algorithm, Dataset, FiniteLearningProblem};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, stream};

/// Smallest accepted number of Monte Carlo trials.
pub const MIN_TRIALS: usize = 100;

/// Outcome of a tail-guarantee experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trials: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub target_delta: f64,
    /// Binomial standard error at the target rate, `sqrt(delta (1 - delta) / trials)`.
    pub binomial_se: f64,
    pub pass: bool,
}

impl ValidationReport {
    pub fn new(trials: usize, violations: usize, target_delta: f64) -> Self {
        let t = trials.max(1) as f64;
        let d = target_delta.clamp(0.0, 1.0);
        let violation_rate = violations as f64 / t;
        let binomial_se = (d * (1.0 - d) / t).sqrt();
        Self {
            trials,
            violations,
            violation_rate,
            target_delta,
            binomial_se,
            pass: violation_rate <= target_delta + 3.0 * binomial_se,
        }
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(invalid("trials", format!("{trials} < {MIN_TRIALS}")));
    }
    Ok(())
}

/// Draws `trials` datasets of size `n`, one hypothesis per dataset from the
/// algorithm, and counts `gen(S, W) > bound_fn(S, W)`.
///
/// Trial `i` uses stream `i` of `seed`, so counts do not depend on thread
/// count or scheduling.
pub fn mc_tail_validate<F>(
    prob: &FiniteLearningProblem,
    alg: &dyn Algorithm,
    bound_fn: F,
    n: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<ValidationReport>
where
    F: Fn(&Dataset, &Pmf, usize) -> Result<f64> + Sync,
{
    check_trials(trials)?;
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let outcomes: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let mut rng = stream(seed, i as u64);
            let s = prob.sample_dataset_with(n, &mut rng)?;
            let post = alg.posterior(prob, &s)?;
            let w = post.sample(&mut rng);
            let gen = prob.gen_error(&s, w)?;
            Ok(gen > bound_fn(&s, &post, w)?)
        })
        .collect::<Result<_>>()?;
    let violations = outcomes.iter().filter(|v| **v).count();
    Ok(ValidationReport::new(trials, violations, delta))
}

/// `max(0, log(posterior(w) / prior(w)))`, the disintegrated PAC-Bayes rate.
pub fn disintegrated_rate(posterior: &Pmf, prior: &Pmf, w: usize) -> f64 {
    let (p, q) = (posterior.get(w), prior.get(w));
    if p <= 0.0 {
        return 0.0;
    }
    if q <= 0.0 {
        return f64::INFINITY;
    }
    (p / q).ln().max(0.0)
}

/// Outcome of an in-expectation check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCheck {
    pub mc_mean: f64,
    /// Standard error of `mc_mean`.
    pub ci_halfwidth: f64,
    pub bound_value: f64,
    /// `mc_mean - 3 ci_halfwidth <= bound_value`.
    pub pass: bool,
}

/// Monte Carlo estimate of `E[gen(S, W)]` compared with `bound_value`.
pub fn mc_expectation_validate(
    prob: &FiniteLearningProblem,
    alg: &dyn Algorithm,
    bound_value: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<ExpectationCheck> {
    check_trials(trials)?;
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let gens: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = stream(seed, i as u64);
            let s = prob.sample_dataset_with(n, &mut rng)?;
            let w = alg.posterior(prob, &s)?.sample(&mut rng);
            prob.gen_error(&s, w)
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_and_se(&gens);
    Ok(ExpectationCheck {
        mc_mean: mean,
        ci_halfwidth: se,
        bound_value,
        pass: mean - 3.0 * se <= bound_value,
    })
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Default cap on the largest effective book size.
pub const DEFAULT_BOOK_CAP: u64 = 1 << 20;

/// Random hypothesis book with entries drawn i.i.d. from `q^m`.
///
/// Entries are generated on demand from the book seed, so entry `j` is the
/// same whether or not earlier entries were ever looked at.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisBook {
    q: Pmf,
    m: usize,
    rates: Matrix,
    seed: u64,
    cap: u64,
}

impl HypothesisBook {
    /// Book for blocks of length `m` with per-symbol rates `rates[s][w]`.
    pub fn new(q_hat: &Pmf, m: usize, rates: &Matrix, seed: u64, cap: u64) -> Result<Self> {
        if m == 0 {
            return Err(invalid("m", "must be at least 1"));
        }
        if let Some(r) = rates.as_slice().iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(invalid("rates", format!("{r} is not a finite non-negative rate")));
        }
        let largest = (m as f64 * rates.max()).exp().floor();
        if largest > cap as f64 {
            return Err(Error::EnumerationCap {
                states: largest.min(u128::MAX as f64) as u128,
                cap: cap as u128,
            });
        }
        Ok(Self {
            q: q_hat.clone(),
            m,
            rates: rates.clone(),
            seed,
            cap,
        })
    }

    pub fn block_len(&self) -> usize {
        self.m
    }

    /// Entry `j` (a vector of `m` reproduction symbols).
    pub fn entry(&self, j: u64) -> Vec<usize> {
        let mut rng = stream(self.seed, j);
        (0..self.m).map(|_| self.q.sample(&mut rng)).collect()
    }

    /// First `count` entries.
    pub fn entries(&self, count: u64) -> Vec<Vec<usize>> {
        (0..count).map(|j| self.entry(j)).collect()
    }

    /// Searchable prefix `floor(exp(sum_i R[s_i][w_i]))` for a block.
    pub fn effective_size(&self, s: &[usize], w: &[usize]) -> u64 {
        let total: f64 = s.iter().zip(w).map(|(&a, &b)| self.rates.get(a, b)).sum();
        // Guard against exp(log k) landing just below k.
        ((total.exp() * (1.0 + 1e-12)).floor() as u64).clamp(1, self.cap)
    }
}

/// Joint law, generalization-error table and book ingredients for the
/// covering simulator. Reproductions share the hypothesis alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveringInstance {
    pub joint: Joint,
    /// `gen(s, w)`.
    pub gen: Matrix,
    /// Codeword law over reproductions.
    pub q_hat: Pmf,
    /// Per-symbol rates `R[s][w]`.
    pub rates: Matrix,
}

impl CoveringInstance {
    pub fn new(joint: Joint, gen: Matrix, q_hat: Pmf, rates: Matrix) -> Result<Self> {
        gen.expect_shape(joint.rows(), joint.cols(), "gen")?;
        rates.expect_shape(joint.rows(), joint.cols(), "rates")?;
        if q_hat.len() != joint.cols() {
            return Err(Error::AlphabetMismatch {
                expected: joint.cols(),
                found: q_hat.len(),
            });
        }
        Ok(Self {
            joint,
            gen,
            q_hat,
            rates,
        })
    }

    /// Same instance with every rate replaced.
    pub fn with_rates(&self, rates: Matrix) -> Result<Self> {
        Self::new(self.joint.clone(), self.gen.clone(), self.q_hat.clone(), rates)
    }

    /// Block distortion `(1/m) sum_i gen(s_i, w_i)^2 - gen(s_i, w_hat_i)^2`.
    pub fn block_distortion(&self, s: &[usize], w: &[usize], w_hat: &[usize]) -> f64 {
        let m = s.len() as f64;
        s.iter()
            .zip(w)
            .zip(w_hat)
            .map(|((&a, &b), &c)| self.gen.get(a, b).powi(2) - self.gen.get(a, c).powi(2))
            .sum::<f64>()
            / m
    }
}

/// Parameters of the two-symbol covering instance.
pub const COVERING_2X2_EPSILON: f64 = 0.05;
pub const COVERING_2X2_DELTA: f64 = 0.7;
pub const COVERING_2X2_RATE: f64 = 0.417;

/// Two-symbol instance: `S` uniform, `W = S` with probability 0.9,
/// `gen(s, w) = 0.5` when `w = s` and 0 otherwise, uniform codewords and a
/// constant rate of [`COVERING_2X2_RATE`] nats per symbol.
pub fn covering_2x2() -> CoveringInstance {
    let joint = Joint::new(vec![vec![0.45, 0.05], vec![0.05, 0.45]]).expect("static joint");
    let gen = Matrix::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).expect("static table");
    CoveringInstance::new(
        joint,
        gen,
        Pmf::uniform(2),
        Matrix::filled(2, 2, COVERING_2X2_RATE),
    )
    .expect("static instance")
}

/// Heuristic `sup_{nu in G^delta} [RD_nu(epsilon) - KL(nu || P_{W|S} nu_S)]`
/// for the squared-gap distortion; a constant rate at or above this value
/// satisfies the covering condition on the searched candidates.
pub fn covering_rate_requirement(
    inst: &CoveringInstance,
    epsilon: f64,
    delta: f64,
    config: BallSearchConfig,
) -> Result<BallSearch> {
    let (rows, cols) = (inst.joint.rows(), inst.joint.cols());
    let gen_sq = inst.gen.map(|g| g * g);
    let p_cond = inst.joint.conditional();
    let objective = |nu: &[f64]| -> f64 {
        let Ok(j) = Joint::from_flat(rows, cols, nu.to_vec()) else {
            return f64::NEG_INFINITY;
        };
        let rate = match crate::rd::rd_gen(&j, &gen_sq, epsilon) {
            Ok(sol) => sol.rate_nats,
            Err(Error::Infeasible { .. }) => return f64::INFINITY,
            Err(_) => return f64::NEG_INFINITY,
        };
        let Ok(reference) = p_cond.joint(&j.row_marginal()) else {
            return f64::NEG_INFINITY;
        };
        rate - kl_slices(nu, reference.as_slice())
    };
    gdelta_sup(inst.joint.as_slice(), delta, objective, config)
}

/// One row of the covering table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringRow {
    pub m: usize,
    pub trials: usize,
    pub failures: usize,
    pub failure_prob: f64,
    /// `3 / trials` when censored, `failure_prob` otherwise.
    pub failure_upper: f64,
    /// `-(1/m) log failure_prob`; `+inf` when censored.
    pub exponent: f64,
    /// `-(1/m) log failure_upper`.
    pub exponent_lower: f64,
    /// No failures observed.
    pub censored: bool,
}

/// Estimates the excess-distortion probability of a freshly drawn book for
/// each block length in `m_grid`.
///
/// Trial `t` at block length `m` draws `(S, W)^m` and the book seed from
/// stream `t` of `derive_seed(seed, m)`, so two runs with the same seed but
/// different rate tables see identical blocks and books.
pub fn covering_failure_estimate(
    inst: &CoveringInstance,
    epsilon: f64,
    m_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<CoveringRow>> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if m_grid.is_empty() {
        return Err(Error::Empty("m grid"));
    }
    let joint_pmf = inst.joint.as_pmf();
    let cols = inst.joint.cols();
    m_grid
        .iter()
        .map(|&m| {
            let m_seed = derive_seed(seed, m as u64);
            HypothesisBook::new(&inst.q_hat, m, &inst.rates, 0, DEFAULT_BOOK_CAP)?;
            let failures = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream(m_seed, t as u64);
                    let mut s = Vec::with_capacity(m);
                    let mut w = Vec::with_capacity(m);
                    for _ in 0..m {
                        let k = joint_pmf.sample(&mut rng);
                        s.push(k / cols);
                        w.push(k % cols);
                    }
                    let book_seed = rand::Rng::random::<u64>(&mut rng);
                    let book = HypothesisBook::new(&inst.q_hat, m, &inst.rates, book_seed, DEFAULT_BOOK_CAP)
                        .expect("validated above");
                    let size = book.effective_size(&s, &w);
                    let covered =
                        (0..size).any(|j| inst.block_distortion(&s, &w, &book.entry(j)) <= epsilon + 1e-12);
                    usize::from(!covered)
                })
                .sum::<usize>();
            Ok(covering_row(m, trials, failures))
        })
        .collect()
}

fn covering_row(m: usize, trials: usize, failures: usize) -> CoveringRow {
    let t = trials as f64;
    let mf = m as f64;
    let failure_prob = failures as f64 / t;
    let censored = failures == 0;
    let failure_upper = if censored { (3.0 / t).min(1.0) } else { failure_prob };
    CoveringRow {
        m,
        trials,
        failures,
        failure_prob,
        failure_upper,
        exponent: if censored {
            f64::INFINITY
        } else {
            -failure_prob.ln() / mf
        },
        exponent_lower: -failure_upper.ln() / mf,
        censored,
    }
}


/// Slack below `log(1/delta)` allowed for the exponent at the largest block
/// length.
pub const COVERING_EXPONENT_SLACK: f64 = 0.2;

/// Finite-blocklength check of a covering table: exponents non-decreasing in
/// `m` and at least `log(1/delta) - 0.2` at the largest `m`. Censored rows
/// contribute their rule-of-three lower exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringSummary {
    pub delta: f64,
    pub target: f64,
    /// Exponent used for each row (`exponent_lower` when censored).
    pub effective_exponents: Vec<f64>,
    pub monotone: bool,
    pub final_ok: bool,
    pub pass: bool,
}

impl CoveringSummary {
    pub fn of(rows: &[CoveringRow], delta: f64) -> Self {
        let effective_exponents: Vec<f64> = rows
            .iter()
            .map(|r| if r.censored { r.exponent_lower } else { r.exponent })
            .collect();
        let target = (1.0 / delta).ln() - COVERING_EXPONENT_SLACK;
        let monotone = effective_exponents.windows(2).all(|w| w[1] >= w[0]);
        let final_ok = effective_exponents.last().is_some_and(|e| *e >= target);
        Self {
            delta,
            target,
            effective_exponents,
            monotone,
            final_ok,
            pass: monotone && final_ok,
        }
    }
}
