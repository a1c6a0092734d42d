//! Closed-form generalization bounds and condition checks.
//!
//! Every bound returns a [`BoundReport`] whose `bound_value` can be rebuilt
//! from its `terms` and `params` by [`BoundReport::reconstruct`]. Infinite
//! divergences give an infinite bound rather than an error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::info::{divergence_of_order, kl_slices, BallSearchConfig, Channel, Joint, Pmf};
use crate::learning::{Algorithm, FiniteLearningProblem};
use crate::matrix::Matrix;

/// Slack used when checking distortion constraints.
pub const DISTORTION_SLACK: f64 = 1e-9;

/// Which formula a report follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `sqrt(4 s^2 (R + log(sqrt(2n)/delta)) / (2n - 1) + eps)`.
    VariableSize,
    /// `sqrt(2 s^2 (R + log(1/delta)) / n) + eps`.
    FixedSize,
    /// Fixed-size form with the rate replaced by a KL-ball supremum of the
    /// generalization-gap rate-distortion function.
    RdTail,
    /// `sqrt(L_hat C / n) + C / n`, `C = 4 s^2 (I + log(2 sqrt(n) / delta))`.
    FastRate,
    /// `KL(pi || q) + log E[e^f] + log(1/delta)`.
    PacBayes,
    /// Lossy PAC-Bayes with a quantized posterior.
    LossyPacBayes,
    /// Disintegrated lossy PAC-Bayes through a kernel on hypotheses.
    LossyDisintegrated,
    /// Gaussian-quantizer toy example.
    ToyGaussian,
    /// `(E KL(p || q) + log E[e^{lambda g}]) / lambda + eps`.
    Expectation,
    /// `exp((D_alpha + log E[f^lambda]) / lambda)` bounding `E[f]`.
    ExpectationRenyi,
    /// `sqrt((RD_sup + log(1/delta)) / (2n)) + eps`.
    TrajectorySup,
    /// `sqrt((RD_s + log M + log(sqrt(2n)/delta)) / (2n - 1) + 4 L eps)`.
    TrajectoryData,
    /// Counter-example in-expectation bound.
    CounterexampleExpectation,
    /// Counter-example high-probability bound.
    CounterexampleTail,
}

impl BoundKind {
    pub const ALL: [BoundKind; 14] = [
        BoundKind::VariableSize,
        BoundKind::FixedSize,
        BoundKind::RdTail,
        BoundKind::FastRate,
        BoundKind::PacBayes,
        BoundKind::LossyPacBayes,
        BoundKind::LossyDisintegrated,
        BoundKind::ToyGaussian,
        BoundKind::Expectation,
        BoundKind::ExpectationRenyi,
        BoundKind::TrajectorySup,
        BoundKind::TrajectoryData,
        BoundKind::CounterexampleExpectation,
        BoundKind::CounterexampleTail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::VariableSize => "variable_size",
            BoundKind::FixedSize => "fixed_size",
            BoundKind::RdTail => "rd_tail",
            BoundKind::FastRate => "fast_rate",
            BoundKind::PacBayes => "pac_bayes",
            BoundKind::LossyPacBayes => "lossy_pac_bayes",
            BoundKind::LossyDisintegrated => "lossy_disintegrated",
            BoundKind::ToyGaussian => "toy_gaussian",
            BoundKind::Expectation => "expectation",
            BoundKind::ExpectationRenyi => "expectation_renyi",
            BoundKind::TrajectorySup => "trajectory_sup",
            BoundKind::TrajectoryData => "trajectory_data",
            BoundKind::CounterexampleExpectation => "counterexample_expectation",
            BoundKind::CounterexampleTail => "counterexample_tail",
        }
    }
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid("kind", format!("unknown bound kind `{s}`")))
    }
}

/// Inputs recorded with a report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// A bound value with its additive pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub bound_value: f64,
    pub terms: BTreeMap<String, f64>,
    pub params: BoundParams,
    /// Side information (baselines, flags, exact expectations) that does not
    /// enter the formula.
    pub diagnostics: BTreeMap<String, f64>,
}

impl BoundReport {
    fn new(kind: BoundKind, params: BoundParams) -> Self {
        Self {
            kind,
            bound_value: f64::NAN,
            terms: BTreeMap::new(),
            params,
            diagnostics: BTreeMap::new(),
        }
    }

    fn term(mut self, name: &str, v: f64) -> Self {
        self.terms.insert(name.to_string(), v);
        self
    }

    fn finish(mut self) -> Self {
        self.bound_value = self.reconstruct();
        self
    }

    pub fn is_infinite(&self) -> bool {
        self.bound_value.is_infinite()
    }

    fn t(&self, name: &str) -> f64 {
        self.terms.get(name).copied().unwrap_or(0.0)
    }

    /// Recomputes the bound from `terms` and `params`.
    pub fn reconstruct(&self) -> f64 {
        let rate = self.t("rate_term");
        let conf = self.t("confidence_term");
        let eps = self.t("epsilon_term");
        let mgf = self.t("mgf_term");
        let n = self.params.n.unwrap_or(1) as f64;
        let lambda = self.params.lambda.unwrap_or(1.0);
        let value = match self.kind {
            BoundKind::VariableSize => (self.t("scale") * (rate + conf) + eps).sqrt(),
            BoundKind::FixedSize | BoundKind::RdTail | BoundKind::ToyGaussian => {
                (self.t("scale") * (rate + conf)).sqrt() + eps
            }
            BoundKind::FastRate => {
                let c = self.t("scale") * (rate + conf);
                (self.t("empirical_risk") * c / n).sqrt() + c / n
            }
            BoundKind::PacBayes | BoundKind::LossyPacBayes | BoundKind::LossyDisintegrated => {
                rate + mgf + conf + eps
            }
            BoundKind::Expectation
            | BoundKind::CounterexampleExpectation
            | BoundKind::CounterexampleTail => (rate + mgf + conf) / lambda + eps,
            BoundKind::ExpectationRenyi => ((rate + mgf) / lambda).exp(),
            BoundKind::TrajectorySup => ((rate + conf) / (2.0 * n)).sqrt() + eps,
            BoundKind::TrajectoryData => {
                ((rate + self.t("coupling_term") + conf) / (2.0 * n - 1.0)
                    + 4.0 * self.t("lipschitz") * eps)
                    .sqrt()
            }
        };
        if value.is_nan() && (rate.is_infinite() || mgf.is_infinite()) {
            f64::INFINITY
        } else {
            value
        }
    }
}

fn check_n(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    Ok(n as f64)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid("delta", format!("{delta} is not a positive confidence level")));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("{sigma} is not a finite non-negative scale")));
    }
    Ok(())
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(invalid(name, format!("{v} is not finite")));
    }
    Ok(())
}

fn check_rate(name: &'static str, v: f64) -> Result<()> {
    if v.is_nan() || v < 0.0 {
        return Err(invalid(name, format!("{v} is not a non-negative rate")));
    }
    Ok(())
}

fn radicand_guard(report: BoundReport, radicand: f64, context: &'static str) -> Result<BoundReport> {
    if radicand < 0.0 {
        return Err(Error::NegativeRadicand {
            value: radicand,
            context,
        });
    }
    Ok(report.finish())
}

/// Variable-size compressibility tail bound.
pub fn variable_size_bound(
    rate: f64,
    sigma: f64,
    n: usize,
    delta: f64,
    epsilon: f64,
) -> Result<BoundReport> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_sigma(sigma)?;
    check_rate("rate", rate)?;
    check_finite("epsilon", epsilon)?;
    let scale = 4.0 * sigma * sigma / (2.0 * nf - 1.0);
    let conf = ((2.0 * nf).sqrt() / delta).ln();
    let report = BoundReport::new(
        BoundKind::VariableSize,
        BoundParams {
            n: Some(n),
            sigma: Some(sigma),
            delta: Some(delta),
            epsilon,
            ..Default::default()
        },
    )
    .term("rate_term", rate)
    .term("confidence_term", conf)
    .term("epsilon_term", epsilon)
    .term("mgf_term", 0.0)
    .term("scale", scale);
    radicand_guard(report, scale * (rate + conf) + epsilon, "variable-size bound")
}

/// Fixed-size compressibility tail bound.
pub fn fixed_size_bound(
    rate: f64,
    sigma: f64,
    n: usize,
    delta: f64,
    epsilon: f64,
) -> Result<BoundReport> {
    fixed_size_like(BoundKind::FixedSize, rate, sigma, n, delta, epsilon)
}

fn fixed_size_like(
    kind: BoundKind,
    rate: f64,
    sigma: f64,
    n: usize,
    delta: f64,
    epsilon: f64,
) -> Result<BoundReport> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_sigma(sigma)?;
    check_rate("rate", rate)?;
    check_finite("epsilon", epsilon)?;
    let scale = 2.0 * sigma * sigma / nf;
    let conf = (1.0 / delta).ln();
    let report = BoundReport::new(
        kind,
        BoundParams {
            n: Some(n),
            sigma: Some(sigma),
            delta: Some(delta),
            epsilon,
            ..Default::default()
        },
    )
    .term("rate_term", rate)
    .term("confidence_term", conf)
    .term("epsilon_term", epsilon)
    .term("mgf_term", 0.0)
    .term("scale", scale);
    radicand_guard(report, scale * (rate + conf), "fixed-size bound")
}

/// Rate-distortion tail bound for an exactly enumerable problem.
///
/// The rate is the supremum of the generalization-gap RD function over the
/// KL ball of radius `log(1/delta)` around the induced joint, estimated by
/// [`crate::info::gdelta_sup`]. The `nu = P` baseline is kept in the
/// diagnostics (`baseline_rate`, `baseline_bound`).
pub fn rd_tail_bound(
    prob: &FiniteLearningProblem,
    alg: &dyn Algorithm,
    n: usize,
    sigma: f64,
    delta: f64,
    epsilon: f64,
    search: BallSearchConfig,
) -> Result<BoundReport> {
    check_delta(delta)?;
    if delta > 1.0 {
        return Err(invalid("delta", "the KL ball needs delta in (0, 1]"));
    }
    let induced = prob.induced_joint(alg, n)?;
    let rows = induced.joint.rows();
    let cols = induced.joint.cols();
    let gen = induced.gen.clone();
    let objective = |nu: &[f64]| -> f64 {
        let Ok(j) = Joint::from_flat(rows, cols, nu.to_vec()) else {
            return f64::NEG_INFINITY;
        };
        match crate::rd::rd_gen(&j, &gen, epsilon) {
            Ok(sol) => sol.rate_nats,
            Err(Error::Infeasible { .. }) => f64::INFINITY,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let found = crate::info::gdelta_sup(induced.joint.as_slice(), delta, objective, search)?;
    let mut report = fixed_size_like(BoundKind::RdTail, found.sup_estimate, sigma, n, delta, epsilon)?;
    let baseline = fixed_size_like(BoundKind::RdTail, found.baseline, sigma, n, delta, epsilon)?;
    report.diagnostics.insert("baseline_rate".into(), found.baseline);
    report
        .diagnostics
        .insert("baseline_bound".into(), baseline.bound_value);
    report.diagnostics.insert("sup_kl".into(), found.argmax_kl);
    report
        .diagnostics
        .insert("evaluations".into(), found.evaluations as f64);
    report
        .diagnostics
        .insert("expected_gen".into(), induced.expected_gen());
    Ok(report)
}

/// Fast-rate bound from the binary-KL inversion.
pub fn fast_rate_bound(
    emp_risk: f64,
    sup_mi: f64,
    sigma: f64,
    n: usize,
    delta: f64,
) -> Result<BoundReport> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_sigma(sigma)?;
    check_rate("sup_mi", sup_mi)?;
    if !(emp_risk >= 0.0) || !emp_risk.is_finite() {
        return Err(invalid("emp_risk", format!("{emp_risk} is not a non-negative risk")));
    }
    let scale = 4.0 * sigma * sigma;
    let conf = (2.0 * nf.sqrt() / delta).ln();
    let c = scale * (sup_mi + conf);
    if c < 0.0 {
        return Err(Error::NegativeRadicand {
            value: c,
            context: "fast-rate complexity",
        });
    }
    let mut report = BoundReport::new(
        BoundKind::FastRate,
        BoundParams {
            n: Some(n),
            sigma: Some(sigma),
            delta: Some(delta),
            ..Default::default()
        },
    )
    .term("rate_term", sup_mi)
    .term("confidence_term", conf)
    .term("epsilon_term", 0.0)
    .term("mgf_term", 0.0)
    .term("scale", scale)
    .term("empirical_risk", emp_risk)
    .finish();
    report.diagnostics.insert("complexity".into(), c);
    Ok(report)
}

/// `log sum_s P_S(s) sum_w q(w|s) exp(scale * g(s, w))`, computed stably.
pub fn log_mgf(p_s: &Pmf, q: &Channel, g: &Matrix, scale: f64) -> Result<f64> {
    g.expect_shape(q.inputs(), q.outputs(), "g")?;
    if p_s.len() != q.inputs() {
        return Err(Error::AlphabetMismatch {
            expected: q.inputs(),
            found: p_s.len(),
        });
    }
    let mut terms = Vec::new();
    for s in 0..q.inputs() {
        let ps = p_s.get(s);
        if ps <= 0.0 {
            continue;
        }
        for w in 0..q.outputs() {
            let qw = q.get(s, w);
            if qw > 0.0 {
                terms.push(ps.ln() + qw.ln() + scale * g.get(s, w));
            }
        }
    }
    Ok(log_sum_exp(&terms))
}

/// `log E_{P_S q}[f^lambda]` for positive `f`.
pub fn log_moment(p_s: &Pmf, q: &Channel, f: &Matrix, lambda: f64) -> Result<f64> {
    if let Some(v) = f.as_slice().iter().find(|v| !(**v > 0.0)) {
        return Err(invalid("f", format!("entry {v} is not positive")));
    }
    log_mgf(p_s, q, &f.map(f64::ln), lambda)
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// PAC-Bayes bound `KL(pi || q) + logmgf + log(1/delta)` on `E_pi[f]`.
pub fn pac_bayes_bound(pi: &Pmf, q: &Pmf, logmgf: f64, delta: f64) -> Result<BoundReport> {
    check_delta(delta)?;
    if logmgf.is_nan() {
        return Err(invalid("logmgf", "is NaN"));
    }
    let kl = crate::info::kl_divergence(pi, q)?;
    Ok(BoundReport::new(
        BoundKind::PacBayes,
        BoundParams {
            delta: Some(delta),
            lambda: Some(1.0),
            ..Default::default()
        },
    )
    .term("rate_term", kl)
    .term("mgf_term", logmgf)
    .term("confidence_term", (1.0 / delta).ln())
    .term("epsilon_term", 0.0)
    .finish())
}

/// Inputs of the lossy PAC-Bayes bound at the realized dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LossyPosterior<'a> {
    /// Posterior `pi` over `W`.
    pub pi: &'a Pmf,
    /// `f(S, w)` at the realized `S`.
    pub f: &'a [f64],
    /// Quantized law `p(w_hat | S, pi)`.
    pub p_hat: &'a Pmf,
    /// Prior `q(w_hat | S)`.
    pub q_hat: &'a Pmf,
    /// `g(S, w_hat)` at the realized `S`.
    pub g: &'a [f64],
}

/// Lossy PAC-Bayes bound on `E_pi[f(S, W)]`.
///
/// Fails with [`Error::DistortionViolated`] unless
/// `E_pi[f] - E_p[g] <= epsilon`.
pub fn lossy_pac_bayes_bound(
    input: LossyPosterior<'_>,
    logmgf: f64,
    delta: f64,
    epsilon: f64,
) -> Result<BoundReport> {
    check_delta(delta)?;
    check_finite("epsilon", epsilon)?;
    if input.f.len() != input.pi.len() {
        return Err(Error::AlphabetMismatch {
            expected: input.pi.len(),
            found: input.f.len(),
        });
    }
    if input.g.len() != input.p_hat.len() {
        return Err(Error::AlphabetMismatch {
            expected: input.p_hat.len(),
            found: input.g.len(),
        });
    }
    let achieved = input.pi.expect(input.f) - input.p_hat.expect(input.g);
    if achieved > epsilon + DISTORTION_SLACK {
        return Err(Error::DistortionViolated { achieved, epsilon });
    }
    let kl = crate::info::kl_divergence(input.p_hat, input.q_hat)?;
    let mut report = BoundReport::new(
        BoundKind::LossyPacBayes,
        BoundParams {
            delta: Some(delta),
            epsilon,
            lambda: Some(1.0),
            ..Default::default()
        },
    )
    .term("rate_term", kl)
    .term("mgf_term", logmgf)
    .term("confidence_term", (1.0 / delta).ln())
    .term("epsilon_term", epsilon)
    .finish();
    report.diagnostics.insert("achieved_distortion".into(), achieved);
    Ok(report)
}

/// Disintegrated lossy bound on `f(S, W)` at a realized hypothesis `w`.
///
/// `p*(w_hat | S) = sum_w P(w | S) kernel(w_hat | w)`; the rate term is
/// `E_{kernel(.|w)} log(p* / q)`.
pub fn lossy_disintegrated_bound(
    posterior: &Pmf,
    kernel: &Channel,
    q_hat: &Pmf,
    w: usize,
    logmgf: f64,
    delta: f64,
    epsilon: f64,
) -> Result<BoundReport> {
    check_delta(delta)?;
    check_finite("epsilon", epsilon)?;
    if kernel.inputs() != posterior.len() {
        return Err(Error::AlphabetMismatch {
            expected: posterior.len(),
            found: kernel.inputs(),
        });
    }
    if kernel.outputs() != q_hat.len() {
        return Err(Error::AlphabetMismatch {
            expected: q_hat.len(),
            found: kernel.outputs(),
        });
    }
    if w >= posterior.len() {
        return Err(Error::IndexOutOfRange {
            index: w,
            size: posterior.len(),
        });
    }
    let p_star = kernel.output_marginal(posterior)?;
    let mut rate = 0.0;
    for (k, &pk) in kernel.row(w).iter().enumerate() {
        if pk <= 0.0 {
            continue;
        }
        let (a, b) = (p_star.get(k), q_hat.get(k));
        if b <= 0.0 {
            rate = f64::INFINITY;
            break;
        }
        rate += pk * (a / b).ln();
    }
    Ok(BoundReport::new(
        BoundKind::LossyDisintegrated,
        BoundParams {
            delta: Some(delta),
            epsilon,
            lambda: Some(1.0),
            ..Default::default()
        },
    )
    .term("rate_term", rate)
    .term("mgf_term", logmgf)
    .term("confidence_term", (1.0 / delta).ln())
    .term("epsilon_term", epsilon)
    .finish())
}

/// Toy Gaussian-quantizer bound.
pub fn toy_example_bound(
    sample_means_sq_sum: f64,
    lipschitz: f64,
    d: usize,
    sigma: f64,
    n: usize,
    delta: f64,
) -> Result<BoundReport> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_sigma(sigma)?;
    check_rate("sample_means_sq_sum", sample_means_sq_sum)?;
    check_rate("lipschitz_L", lipschitz)?;
    let rate = 2.0 * (lipschitz * d as f64 * sample_means_sq_sum).sqrt();
    let conf = (1.0 / delta).ln();
    let scale = 2.0 * sigma * sigma / nf;
    let report = BoundReport::new(
        BoundKind::ToyGaussian,
        BoundParams {
            n: Some(n),
            sigma: Some(sigma),
            delta: Some(delta),
            ..Default::default()
        },
    )
    .term("rate_term", rate)
    .term("confidence_term", conf)
    .term("epsilon_term", 0.0)
    .term("mgf_term", 0.0)
    .term("scale", scale);
    radicand_guard(report, scale * (rate + conf), "toy bound")
}

fn check_channel_pair(nu_s: &Pmf, p: &Channel, q: &Channel) -> Result<()> {
    if p.inputs() != nu_s.len() || q.inputs() != nu_s.len() {
        return Err(Error::AlphabetMismatch {
            expected: nu_s.len(),
            found: p.inputs().min(q.inputs()),
        });
    }
    if p.outputs() != q.outputs() {
        return Err(Error::AlphabetMismatch {
            expected: p.outputs(),
            found: q.outputs(),
        });
    }
    Ok(())
}

/// `E_{nu_S}[D_alpha(p(.|S) || q(.|S))]`; `alpha = 1` is KL.
pub fn expected_divergence(nu_s: &Pmf, p: &Channel, q: &Channel, alpha: f64) -> Result<f64> {
    check_channel_pair(nu_s, p, q)?;
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(invalid("alpha", format!("{alpha} is not a finite order >= 1")));
    }
    let mut total = 0.0;
    for s in 0..nu_s.len() {
        let w = nu_s.get(s);
        if w > 0.0 {
            total += w * divergence_of_order(p.row(s), q.row(s), alpha);
        }
    }
    Ok(total)
}

/// `E_{nu_S}[D_alpha(p || q)] + log E_{P_S q}[e^g]`.
pub fn t_functional(
    nu_s: &Pmf,
    p_hat: &Channel,
    q_hat: &Channel,
    g: &Matrix,
    alpha: f64,
    p_s: &Pmf,
) -> Result<f64> {
    let div = expected_divergence(nu_s, p_hat, q_hat, alpha)?;
    let mgf = log_mgf(p_s, q_hat, g, 1.0)?;
    Ok(div + mgf)
}

/// Outcome of evaluating a tail condition at one `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub lhs: f64,
    pub log_delta: f64,
    /// `lhs <= log(delta)`.
    pub satisfied: bool,
    /// Distortion constraint holds (always true for the Rényi variant).
    pub distortion_ok: bool,
    /// `nu` lies in the KL ball of radius `log(1/delta)`.
    pub in_ball: bool,
    /// `nu` is supported where `f > Delta`.
    pub in_violation_set: bool,
}

/// Which of the two conditions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    /// KL form with a lossy channel `p_hat` and distortion level `epsilon`.
    Lossy,
    /// Rényi form of order `alpha > 1` (lossless, `lambda >= alpha/(alpha-1)`).
    Renyi { alpha: f64 },
}

/// Inputs for the per-hypothesis tail condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCondition<'a> {
    /// Candidate `nu_{S,W}`.
    pub nu: &'a Joint,
    /// `p(w_hat | s)` (ignored by the Rényi variant).
    pub p_hat: &'a Channel,
    /// `q(w_hat | s)`; for the Rényi variant a channel `S -> W`.
    pub q_hat: &'a Channel,
    pub lambda: f64,
    pub f: &'a Matrix,
    /// `g(s, w_hat)` (ignored by the Rényi variant).
    pub g: &'a Matrix,
    /// Candidate bound `Delta(s, w)`.
    pub big_delta: &'a Matrix,
    pub epsilon: f64,
    /// Reference `P_{S,W}`.
    pub p: &'a Joint,
    pub delta: f64,
}

/// `E_{nu_S} KL(nu_{W|S} || P_{W|S})`.
fn conditional_kl(nu: &Joint, p: &Joint) -> f64 {
    let nu_s = nu.row_marginal();
    let pc = p.conditional();
    let nc = nu.conditional();
    let mut total = 0.0;
    for s in 0..nu.rows() {
        let w = nu_s.get(s);
        if w > 0.0 {
            total += w * kl_slices(nc.row(s), pc.row(s));
        }
    }
    total
}

/// Evaluates the per-hypothesis tail condition at one `nu`.
pub fn check_tail_condition(variant: Variant, c: &TailCondition<'_>) -> Result<ConditionCheck> {
    let (rows, cols) = (c.p.rows(), c.p.cols());
    c.nu.matrix().expect_shape(rows, cols, "nu")?;
    c.f.expect_shape(rows, cols, "f")?;
    c.big_delta.expect_shape(rows, cols, "Delta")?;
    check_delta(c.delta)?;
    if !(c.lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    let p_s = c.p.row_marginal();
    let nu_s = c.nu.row_marginal();
    let log_delta = c.delta.ln();
    let in_ball = kl_slices(c.nu.as_slice(), c.p.as_slice())
        <= (1.0 / c.delta).ln() + crate::info::BALL_MEMBERSHIP_SLACK;
    let in_violation_set = (0..rows).all(|s| {
        (0..cols).all(|w| c.nu.get(s, w) <= 0.0 || c.f.get(s, w) > c.big_delta.get(s, w))
    });
    let kl_nu = conditional_kl(c.nu, c.p);

    let (lhs, distortion_ok) = match variant {
        Variant::Lossy => {
            check_channel_pair(&nu_s, c.p_hat, c.q_hat)?;
            c.g.expect_shape(rows, c.p_hat.outputs(), "g")?;
            let div = expected_divergence(&nu_s, c.p_hat, c.q_hat, 1.0)?;
            let mgf = log_mgf(&p_s, c.q_hat, c.g, c.lambda)?;
            let e_delta = c.nu.expect(c.big_delta);
            let e_g: f64 = (0..rows)
                .map(|s| nu_s.get(s) * c.p_hat.row_pmf(s).expect(c.g.row(s)))
                .sum();
            let lhs = if kl_nu.is_infinite() {
                f64::NEG_INFINITY
            } else {
                div + mgf - kl_nu - c.lambda * (e_delta - c.epsilon)
            };
            (lhs, e_delta - e_g <= c.epsilon + DISTORTION_SLACK)
        }
        Variant::Renyi { alpha } => {
            if !(alpha > 1.0) {
                return Err(invalid("alpha", "the Rényi variant needs alpha > 1"));
            }
            if c.lambda < alpha / (alpha - 1.0) {
                return Err(invalid("lambda", "must be at least alpha/(alpha-1)"));
            }
            if c.q_hat.inputs() != rows || c.q_hat.outputs() != cols {
                return Err(Error::ShapeMismatch("q must be a channel S -> W".into()));
            }
            let nu_w = c.nu.conditional();
            let div = expected_divergence(&nu_s, &nu_w, c.q_hat, alpha)?;
            let mom = log_moment(&p_s, c.q_hat, c.f, c.lambda)?;
            let mut log_e_delta = 0.0;
            for s in 0..rows {
                let w = nu_s.get(s);
                if w > 0.0 {
                    log_e_delta += w * nu_w.row_pmf(s).expect(c.big_delta.row(s)).ln();
                }
            }
            let lhs = if kl_nu.is_infinite() {
                f64::NEG_INFINITY
            } else {
                div + mom - kl_nu - c.lambda * log_e_delta
            };
            (lhs, true)
        }
    };
    Ok(ConditionCheck {
        lhs,
        log_delta,
        satisfied: lhs <= log_delta,
        distortion_ok,
        in_ball,
        in_violation_set,
    })
}

/// Lossless specialization of the lossy tail condition, evaluated directly:
/// `E_nu[log(P_{W|S} / q) + log E_{P_S q}[e^{lambda f}] - lambda Delta]`.
pub fn lossless_tail_lhs(
    nu: &Joint,
    q: &Channel,
    lambda: f64,
    f: &Matrix,
    big_delta: &Matrix,
    p: &Joint,
) -> Result<f64> {
    let pc = p.conditional();
    let mgf = log_mgf(&p.row_marginal(), q, f, lambda)?;
    let mut total = 0.0;
    for s in 0..nu.rows() {
        for w in 0..nu.cols() {
            let m = nu.get(s, w);
            if m > 0.0 {
                total += m * ((pc.get(s, w) / q.get(s, w)).ln() + mgf - lambda * big_delta.get(s, w));
            }
        }
    }
    Ok(total)
}

/// Inputs for the tail condition on `E_{pi_S}[f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailExpectationCondition<'a> {
    pub nu_s: &'a Pmf,
    /// `pi_s` over `W`, one row per dataset.
    pub pi_s: &'a Channel,
    /// `p(w_hat | s)` (ignored by the Rényi variant).
    pub p_hat: &'a Channel,
    /// `q(w_hat | s)`; for the Rényi variant a channel `S -> W`.
    pub q_hat: &'a Channel,
    pub lambda: f64,
    pub f: &'a Matrix,
    /// `g(s, w_hat)` (ignored by the Rényi variant).
    pub g: &'a Matrix,
    /// `Delta(s, pi_s)`, one value per dataset.
    pub big_delta: &'a [f64],
    pub epsilon: f64,
    pub p_s: &'a Pmf,
    pub delta: f64,
}

/// Evaluates the tail-on-expectation condition at one `nu_S`.
pub fn check_tail_expectation_condition(
    variant: Variant,
    c: &TailExpectationCondition<'_>,
) -> Result<ConditionCheck> {
    let rows = c.p_s.len();
    if c.nu_s.len() != rows || c.big_delta.len() != rows || c.pi_s.inputs() != rows {
        return Err(Error::AlphabetMismatch {
            expected: rows,
            found: c.nu_s.len(),
        });
    }
    c.f.expect_shape(rows, c.pi_s.outputs(), "f")?;
    check_delta(c.delta)?;
    if !(c.lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    let log_delta = c.delta.ln();
    let in_ball = kl_slices(c.nu_s.probs(), c.p_s.probs())
        <= (1.0 / c.delta).ln() + crate::info::BALL_MEMBERSHIP_SLACK;
    let in_violation_set = (0..rows)
        .all(|s| c.nu_s.get(s) <= 0.0 || c.pi_s.row_pmf(s).expect(c.f.row(s)) > c.big_delta[s]);
    let e_delta = c.nu_s.expect(c.big_delta);

    let (lhs, distortion_ok) = match variant {
        Variant::Lossy => {
            check_channel_pair(c.nu_s, c.p_hat, c.q_hat)?;
            c.g.expect_shape(rows, c.p_hat.outputs(), "g")?;
            let div = expected_divergence(c.nu_s, c.p_hat, c.q_hat, 1.0)?;
            let mgf = log_mgf(c.p_s, c.q_hat, c.g, c.lambda)?;
            let e_g: f64 = (0..rows)
                .map(|s| c.nu_s.get(s) * c.p_hat.row_pmf(s).expect(c.g.row(s)))
                .sum();
            (
                div + mgf - c.lambda * (e_delta - c.epsilon),
                e_delta - e_g <= c.epsilon + DISTORTION_SLACK,
            )
        }
        Variant::Renyi { alpha } => {
            if !(alpha > 1.0) {
                return Err(invalid("alpha", "the Rényi variant needs alpha > 1"));
            }
            if c.lambda < alpha / (alpha - 1.0) {
                return Err(invalid("lambda", "must be at least alpha/(alpha-1)"));
            }
            let div = expected_divergence(c.nu_s, c.pi_s, c.q_hat, alpha)?;
            let mom = log_moment(c.p_s, c.q_hat, c.f, c.lambda)?;
            let log_e: f64 = (0..rows)
                .filter(|&s| c.nu_s.get(s) > 0.0)
                .map(|s| c.nu_s.get(s) * c.big_delta[s].ln())
                .sum();
            (div + mom - c.lambda * log_e, true)
        }
    };
    Ok(ConditionCheck {
        lhs,
        log_delta,
        satisfied: lhs <= log_delta,
        distortion_ok,
        in_ball,
        in_violation_set,
    })
}

/// How the log-MGF term is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MgfMode {
    /// Exact finite sum.
    Exact,
    /// `lambda E[g] + lambda^2 sigma^2 / 2` for a `sigma`-subgaussian `g`.
    Subgaussian { sigma: f64 },
}

/// Inputs for the in-expectation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationInput<'a> {
    /// `P_{S,W}`.
    pub p: &'a Joint,
    pub p_hat: &'a Channel,
    pub q_hat: &'a Channel,
    pub f: &'a Matrix,
    pub g: &'a Matrix,
    pub epsilon: f64,
}

/// In-expectation bound `(E KL(p || q) + log E[e^{lambda g}]) / lambda + eps`
/// on `E[f(S, W)]`.
///
/// The exact `E[f]` is reported as diagnostic `true_expectation`.
pub fn expectation_bound(
    input: &ExpectationInput<'_>,
    lambda: f64,
    mgf: MgfMode,
) -> Result<BoundReport> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", format!("{lambda} is not positive and finite")));
    }
    let p_s = input.p.row_marginal();
    check_channel_pair(&p_s, input.p_hat, input.q_hat)?;
    input.f.expect_shape(input.p.rows(), input.p.cols(), "f")?;
    input.g.expect_shape(input.p.rows(), input.p_hat.outputs(), "g")?;
    check_finite("epsilon", input.epsilon)?;
    let e_f = input.p.expect(input.f);
    let e_g: f64 = (0..p_s.len())
        .map(|s| p_s.get(s) * input.p_hat.row_pmf(s).expect(input.g.row(s)))
        .sum();
    if e_f - e_g > input.epsilon + DISTORTION_SLACK {
        return Err(Error::DistortionViolated {
            achieved: e_f - e_g,
            epsilon: input.epsilon,
        });
    }
    let rate = expected_divergence(&p_s, input.p_hat, input.q_hat, 1.0)?;
    let (mgf_term, sigma) = match mgf {
        MgfMode::Exact => (log_mgf(&p_s, input.q_hat, input.g, lambda)?, None),
        MgfMode::Subgaussian { sigma } => {
            check_sigma(sigma)?;
            let mean: f64 = (0..p_s.len())
                .map(|s| p_s.get(s) * input.q_hat.row_pmf(s).expect(input.g.row(s)))
                .sum();
            (lambda * mean + lambda * lambda * sigma * sigma / 2.0, Some(sigma))
        }
    };
    let mut report = BoundReport::new(
        BoundKind::Expectation,
        BoundParams {
            sigma,
            epsilon: input.epsilon,
            lambda: Some(lambda),
            ..Default::default()
        },
    )
    .term("rate_term", rate)
    .term("mgf_term", mgf_term)
    .term("confidence_term", 0.0)
    .term("epsilon_term", input.epsilon)
    .finish();
    report.diagnostics.insert("true_expectation".into(), e_f);
    report
        .diagnostics
        .insert("achieved_distortion".into(), e_f - e_g);
    Ok(report)
}

/// [`expectation_bound`] minimized over `lambda` in `[lo, hi]`.
pub fn expectation_bound_opt(
    input: &ExpectationInput<'_>,
    mgf: MgfMode,
    lo: f64,
    hi: f64,
) -> Result<BoundReport> {
    let lambda = optimize_lambda(
        |l| {
            expectation_bound(input, l, mgf)
                .map(|r| r.bound_value)
                .unwrap_or(f64::INFINITY)
        },
        lo,
        hi,
    )?;
    expectation_bound(input, lambda, mgf)
}

/// Rényi in-expectation bound on `E[f]` for positive `f`:
/// `exp((D_alpha(P_{S,W} || q P_S) + log E_{P_S q}[f^lambda]) / lambda)`.
pub fn expectation_renyi_bound(
    p: &Joint,
    q: &Channel,
    f: &Matrix,
    lambda: f64,
    alpha: f64,
) -> Result<BoundReport> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(invalid("alpha", "must be finite and > 1"));
    }
    if !(lambda >= alpha / (alpha - 1.0)) || !lambda.is_finite() {
        return Err(invalid("lambda", "must be finite and at least alpha/(alpha-1)"));
    }
    f.expect_shape(p.rows(), p.cols(), "f")?;
    if q.inputs() != p.rows() || q.outputs() != p.cols() {
        return Err(Error::ShapeMismatch("q must be a channel S -> W".into()));
    }
    let p_s = p.row_marginal();
    let qp = q.joint(&p_s)?;
    let rate = divergence_of_order(p.as_slice(), qp.as_slice(), alpha);
    let mom = log_moment(&p_s, q, f, lambda)?;
    let mut report = BoundReport::new(
        BoundKind::ExpectationRenyi,
        BoundParams {
            lambda: Some(lambda),
            alpha: Some(alpha),
            ..Default::default()
        },
    )
    .term("rate_term", rate)
    .term("mgf_term", mom)
    .term("confidence_term", 0.0)
    .term("epsilon_term", 0.0)
    .finish();
    report
        .diagnostics
        .insert("true_expectation".into(), p.expect(f));
    Ok(report)
}

/// Trajectory bound with a KL-ball supremum rate.
pub fn trajectory_sup_bound(rd_sup: f64, delta: f64, n: usize, epsilon: f64) -> Result<BoundReport> {
    check_n(n)?;
    check_delta(delta)?;
    check_rate("rd_sup", rd_sup)?;
    check_finite("epsilon", epsilon)?;
    let conf = (1.0 / delta).ln();
    let report = BoundReport::new(
        BoundKind::TrajectorySup,
        BoundParams {
            n: Some(n),
            delta: Some(delta),
            epsilon,
            ..Default::default()
        },
    )
    .term("rate_term", rd_sup)
    .term("confidence_term", conf)
    .term("epsilon_term", epsilon)
    .term("mgf_term", 0.0);
    radicand_guard(report, rd_sup + conf, "trajectory sup bound")
}

/// Data-dependent trajectory bound with coupling coefficient `log_m`.
pub fn trajectory_data_bound(
    rd_s: f64,
    log_m: f64,
    lipschitz: f64,
    delta: f64,
    n: usize,
    epsilon: f64,
) -> Result<BoundReport> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_rate("rd_s", rd_s)?;
    check_rate("log_M", log_m)?;
    check_rate("lipschitz_L", lipschitz)?;
    check_finite("epsilon", epsilon)?;
    let conf = ((2.0 * nf).sqrt() / delta).ln();
    let report = BoundReport::new(
        BoundKind::TrajectoryData,
        BoundParams {
            n: Some(n),
            delta: Some(delta),
            epsilon,
            ..Default::default()
        },
    )
    .term("rate_term", rd_s)
    .term("coupling_term", log_m)
    .term("confidence_term", conf)
    .term("epsilon_term", epsilon)
    .term("mgf_term", 0.0)
    .term("lipschitz", lipschitz);
    let radicand = (rd_s + log_m + conf) / (2.0 * nf - 1.0) + 4.0 * lipschitz * epsilon;
    radicand_guard(report, radicand, "trajectory data bound")
}

/// Assembles a `(rate + mgf + confidence) / lambda + epsilon` report.
pub(crate) fn lambda_scaled_report(
    kind: BoundKind,
    params: BoundParams,
    rate: f64,
    mgf: f64,
    confidence: f64,
) -> BoundReport {
    let eps = params.epsilon;
    BoundReport::new(kind, params)
        .term("rate_term", rate)
        .term("mgf_term", mgf)
        .term("confidence_term", confidence)
        .term("epsilon_term", eps)
        .finish()
}

const GRID_POINTS: usize = 64;

/// Minimizes `objective` over `[lo, hi]` (both positive): log-spaced grid of
/// 64 points, then golden-section refinement around the best grid point.
pub fn optimize_lambda(objective: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(invalid("lambda range", format!("[{lo}, {hi}] is not a positive interval")));
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let step = (lhi - llo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| llo + step * i as f64).collect();
    let values: Vec<f64> = grid.iter().map(|x| objective(x.exp())).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID_POINTS - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (objective(c.exp()), objective(d.exp()));
    for _ in 0..100 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = objective(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = objective(d.exp());
        }
    }
    let refined = 0.5 * (a + b);
    Ok(if objective(refined.exp()) <= values[best] {
        refined.exp()
    } else {
        grid[best].exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn assert_rebuilds(r: &BoundReport) {
        assert!(
            (r.reconstruct() - r.bound_value).abs() <= 1e-12,
            "{:?}",
            r
        );
    }

    #[test]
    fn variable_size_examples() {
        let r = variable_size_bound(2.0, 1.0, 50, 0.05, 0.0).unwrap();
        let direct = (4.0 * (2.0 + (100f64.sqrt() / 0.05).ln()) / 99.0).sqrt();
        assert!(close(r.bound_value, direct, 1e-12), "{} {}", r.bound_value, direct);
        assert!(close(r.bound_value, 0.54303, 1e-4));
        assert_rebuilds(&r);
        let zero = variable_size_bound(0.0, 1.0, 50, 10.0, 0.0).unwrap();
        assert!(zero.bound_value.abs() < 1e-7);
        let a = variable_size_bound(2.0, 1.0, 50, 0.05, 0.0).unwrap().bound_value;
        let b = variable_size_bound(2.0, 1.0, 100, 0.05, 0.0).unwrap().bound_value;
        assert!((0.6..0.8).contains(&(b / a)), "{}", b / a);
        assert!(matches!(
            variable_size_bound(0.0, 1.0, 50, 0.05, -1.0),
            Err(Error::NegativeRadicand { .. })
        ));
        assert!(variable_size_bound(f64::INFINITY, 1.0, 5, 0.1, 0.0)
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn fixed_size_examples() {
        let r = fixed_size_bound(1.0, 1.0, 100, 0.1, 0.01).unwrap();
        assert!(close(r.bound_value, 0.26700, 1e-4));
        assert_rebuilds(&r);
        assert_eq!(fixed_size_bound(0.0, 1.0, 100, 1.0, 0.0).unwrap().bound_value, 0.0);
        for &n in &[10usize, 50, 200] {
            for &rate in &[0.5, 1.0, 3.0] {
                for &delta in &[0.01, 0.05, 0.1] {
                    let a = fixed_size_bound(rate, 1.0, n, delta, 0.0).unwrap().bound_value;
                    let b = variable_size_bound(rate, 1.0, n, delta, 0.0).unwrap().bound_value;
                    assert!(a <= 2.0 * b && b <= 2.0 * a, "{n} {rate} {delta}: {a} {b}");
                }
            }
        }
    }

    #[test]
    fn fast_rate_examples() {
        let r = fast_rate_bound(0.0, 0.5, 0.5, 100, 0.1).unwrap();
        let c = r.diagnostics["complexity"];
        assert!(close(r.bound_value, c / 100.0, 1e-15));
        let r = fast_rate_bound(0.2, 0.5, 0.5, 100, 0.1).unwrap();
        let c = 0.5 + 200f64.ln();
        assert!(close(r.diagnostics["complexity"], c, 1e-12));
        assert!(close(r.bound_value, (0.2 * c / 100.0).sqrt() + c / 100.0, 1e-12));
        assert!(close(r.bound_value, 0.165671, 1e-5));
        assert_rebuilds(&r);
        let a = fast_rate_bound(0.0, 0.5, 0.5, 100, 0.1).unwrap().bound_value;
        let b = fast_rate_bound(0.0, 0.5, 0.5, 400, 0.1).unwrap().bound_value;
        assert!((0.2..0.35).contains(&(b / a)), "{}", b / a);
    }

    #[test]
    fn pac_bayes_examples() {
        let q = Pmf::new(vec![0.2, 0.3, 0.5]).unwrap();
        let r = pac_bayes_bound(&q, &q, 0.0, 0.1).unwrap();
        assert!(close(r.bound_value, 10f64.ln(), 1e-15));
        let q2 = Pmf::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert!(pac_bayes_bound(&Pmf::point_mass(3, 2), &q2, 0.0, 0.1)
            .unwrap()
            .is_infinite());
        let pi = Pmf::new(vec![0.6, 0.3, 0.1]).unwrap();
        let gen = [0.05, -0.02, 0.1];
        let lambda = 3.0;
        let prior = Channel::constant(1, &q);
        let f = Matrix::from_fn(1, 3, |_, w| lambda * gen[w] * gen[w]);
        let mgf = log_mgf(&Pmf::uniform(1), &prior, &f, 1.0).unwrap();
        let r = pac_bayes_bound(&pi, &q, mgf, 0.05).unwrap();
        let kl: f64 = (0..3).map(|i| pi.get(i) * (pi.get(i) / q.get(i)).ln()).sum();
        let m: f64 = (0..3).map(|i| q.get(i) * (lambda * gen[i] * gen[i]).exp()).sum::<f64>().ln();
        assert!(close(r.bound_value, kl + m + 20f64.ln(), 1e-12));
        assert_rebuilds(&r);
    }

    #[test]
    fn lossy_identity_matches_pac_bayes() {
        let pi = Pmf::new(vec![0.6, 0.3, 0.1]).unwrap();
        let q = Pmf::new(vec![0.2, 0.3, 0.5]).unwrap();
        let f = [0.4, -0.1, 0.2];
        let r = lossy_pac_bayes_bound(
            LossyPosterior {
                pi: &pi,
                f: &f,
                p_hat: &pi,
                q_hat: &q,
                g: &f,
            },
            0.7,
            0.1,
            0.0,
        )
        .unwrap();
        let base = pac_bayes_bound(&pi, &q, 0.7, 0.1).unwrap();
        assert!(close(r.bound_value, base.bound_value, 1e-12));
        let bad = lossy_pac_bayes_bound(
            LossyPosterior {
                pi: &pi,
                f: &f,
                p_hat: &Pmf::point_mass(3, 1),
                q_hat: &q,
                g: &f,
            },
            0.7,
            0.1,
            0.0,
        );
        assert!(matches!(bad, Err(Error::DistortionViolated { .. })));
    }

    #[test]
    fn disintegrated_examples() {
        let post = Pmf::new(vec![0.7, 0.3]).unwrap();
        let q = Pmf::new(vec![0.4, 0.6]).unwrap();
        let r = lossy_disintegrated_bound(&post, &Channel::identity(2), &q, 0, 0.2, 0.1, 0.0).unwrap();
        assert!(close(r.terms["rate_term"], (0.7f64 / 0.4).ln(), 1e-15));
        let kernel = Channel::new(vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let r = lossy_disintegrated_bound(&post, &kernel, &q, 1, 0.2, 0.1, 0.05).unwrap();
        let p0 = 0.7 * 0.8 + 0.3 * 0.3;
        let p1 = 1.0 - p0;
        let brute = 0.3 * (p0 / 0.4f64).ln() + 0.7 * (p1 / 0.6f64).ln();
        assert!(close(r.terms["rate_term"], brute, 1e-12));
        assert_rebuilds(&r);
    }

    #[test]
    fn toy_examples() {
        let r = toy_example_bound(0.0, 1.0, 2, 1.0, 100, 0.1).unwrap();
        assert!(close(r.bound_value, (2.0 * 10f64.ln() / 100.0).sqrt(), 1e-15));
        let r = toy_example_bound(0.5, 1.0, 2, 1.0, 100, 0.1).unwrap();
        assert!(close(r.bound_value, 0.29335, 1e-4));
        let mut last = 0.0;
        for k in 0..20 {
            let v = toy_example_bound(k as f64 * 0.1, 1.0, 2, 1.0, 100, 0.1).unwrap().bound_value;
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn t_functional_examples() {
        let nu = Pmf::new(vec![0.3, 0.7]).unwrap();
        let p = Channel::new(vec![vec![0.2, 0.8], vec![0.5, 0.5]]).unwrap();
        let zero = Matrix::filled(2, 2, 0.0);
        assert!(t_functional(&nu, &p, &p, &zero, 1.0, &nu).unwrap().abs() < 1e-15);
        let c = Matrix::filled(2, 2, 1.7);
        assert!(close(t_functional(&nu, &p, &p, &c, 1.0, &nu).unwrap(), 1.7, 1e-14));
    }

    #[test]
    fn trajectory_examples() {
        let r = trajectory_sup_bound(0.0, 0.1, 50, 0.0).unwrap();
        assert!(close(r.bound_value, (10f64.ln() / 100.0).sqrt(), 1e-15));
        assert!(close(trajectory_sup_bound(0.0, 1.0, 50, 0.05).unwrap().bound_value, 0.05, 1e-15));
        let r = trajectory_sup_bound(1.2, 0.05, 200, 0.02).unwrap();
        assert!(close(r.bound_value, 0.12240, 1e-4));
        let r = trajectory_data_bound(0.0, 0.0, 1.0, 0.1, 100, 0.0).unwrap();
        assert!(close(r.bound_value, ((200f64.sqrt() / 0.1).ln() / 199.0).sqrt(), 1e-15));
        let r = trajectory_data_bound(0.8, 0.3, 1.0, 0.1, 100, 0.01).unwrap();
        assert!(close(r.bound_value, 0.26498, 1e-3));
        assert_rebuilds(&r);
        let r = trajectory_data_bound(0.0, 0.0, 2.0, 0.1, 100, 0.5).unwrap();
        assert!(r.bound_value >= 2.0 * (2.0f64 * 0.5).sqrt());
    }

    #[test]
    fn optimize_lambda_quadratic() {
        let l = optimize_lambda(|x| (x.ln() - 2.0).powi(2), 1e-3, 1e3).unwrap();
        assert!(close(l, 2f64.exp(), 1e-5));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in BoundKind::ALL {
            assert_eq!(k.name().parse::<BoundKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
    }
}
