//! Stochastic convex optimization instance on which full gradient descent
//! generalizes at rate `O(1/sqrt n)` while mutual-information bounds stay
//! `Omega(1)`, with lossy-compression bounds of order `1/n`.
//!
//! Data are `d`-bit vectors with i.i.d. Bernoulli(1/2) entries and
//! `loss(z, w) = sum_j z_j w_j^2 + lam <w, z> + max(max_j w_j, 0)` on the unit
//! ball. A coordinate is *bad* when it is zero in every sample.
//!
//! Everything the bounds need depends on a dataset only through the histogram
//! of per-coordinate counts, so expectations over datasets reduce to sums over
//! the number of bad coordinates and are evaluated exactly here.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{lambda_scaled_report, BoundKind, BoundParams, BoundReport};
use crate::error::{invalid, Error, Result};
use crate::rd::ls_slope;
use crate::rng::{derive_seed, stream};

/// Largest `n` accepted; `d` grows like `n^2 2^n`.
pub const MAX_N: usize = 20;
/// Largest dimension materialized as a dense vector.
pub const MAX_DENSE_DIM: usize = 1 << 22;
/// Slack on the unit-ball constraint.
pub const BALL_SLACK: f64 = 1e-9;

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Constants of the instance, all derived from `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoInstance {
    pub n: usize,
    /// Number of gradient steps, `2 n^2`.
    pub t: usize,
    /// Step size `1 / (n sqrt(5n))`.
    pub eta: f64,
    /// Dimension `(3/4) T 2^n`.
    pub d: usize,
    /// Linear-term weight `1 / (n sqrt d)`.
    pub lambda: f64,
}

impl ScoInstance {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_N {
            return Err(invalid("n", format!("{n} is outside 1..={MAX_N}")));
        }
        let t = 2 * n * n;
        let d = 3 * t * (1usize << n) / 4;
        let nf = n as f64;
        Ok(Self {
            n,
            t,
            eta: 1.0 / (nf * (5.0 * nf).sqrt()),
            d,
            lambda: 1.0 / (nf * (d as f64).sqrt()),
        })
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Probability that a coordinate is bad.
    pub fn p_bad(&self) -> f64 {
        0.5f64.powi(self.n as i32)
    }

    /// `T/2 <= count <= T`.
    pub fn event_ok(&self, bad_count: usize) -> bool {
        2 * bad_count >= self.t && bad_count <= self.t
    }

    /// Half-width of the loss range of quantized hypotheses:
    /// `2 sigma = 2/(5n) + 1/(4n^2)`.
    pub fn sigma(&self) -> f64 {
        let n = self.nf();
        (2.0 / (5.0 * n) + 1.0 / (4.0 * n * n)) / 2.0
    }

    /// Quantized value of every coordinate that is not flipped.
    pub fn v0(&self) -> f64 {
        0.5 * self.lambda * (-1.0 + (1.0 - self.eta).powi(self.t as i32))
    }

    /// Quantized value of a flipped bad coordinate.
    pub fn v1(&self) -> f64 {
        -self.eta
    }

    /// Final iterate of a good coordinate with count `k >= 1`.
    pub fn good_final(&self, k: usize) -> f64 {
        let mu = k as f64 / self.nf();
        0.5 * self.lambda * (-1.0 + (1.0 - 2.0 * self.eta * mu).powi(self.t as i32))
    }

    /// Final iterate of coordinate 0 when it also receives the max-term
    /// subgradient at step 0 (only when there are no bad coordinates).
    fn kicked_final(&self, k: usize) -> f64 {
        let mu = k as f64 / self.nf();
        let w1 = -self.eta * (self.lambda * mu + 1.0);
        let fixed = -0.5 * self.lambda;
        fixed + (1.0 - 2.0 * self.eta * mu).powi(self.t as i32 - 1) * (w1 - fixed)
    }

    /// `w^2 + lam w`: per-coordinate loss of `w` when `z_j = 1` and the max
    /// term vanishes.
    fn c(&self, w: f64) -> f64 {
        w * w + self.lambda * w
    }

    /// Contribution of one coordinate with count `k` and value `w` to
    /// `gen(S, w) = L(w) - L_hat(S, w)`; the max terms cancel.
    fn gen_part(&self, k: usize, w: f64) -> f64 {
        (0.5 - k as f64 / self.nf()) * self.c(w)
    }

    /// `Binomial(n, 1/2)` probabilities of a coordinate count.
    fn count_pmf(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n + 1];
        let mut c = 1.0;
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = c * self.p_bad();
            c = c * (n - k) as f64 / (k + 1) as f64;
        }
        out
    }
}

/// Dataset of `n` bit vectors of length `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoDataset {
    rows: Vec<Vec<bool>>,
}

impl ScoDataset {
    pub fn new(rows: Vec<Vec<bool>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Empty("dataset"));
        };
        if rows.iter().any(|r| r.len() != first.len()) {
            return Err(Error::ShapeMismatch("samples must share one dimension".into()));
        }
        Ok(Self { rows })
    }

    /// Draws `inst.n` samples with i.i.d. fair bits.
    pub fn sample<R: Rng + ?Sized>(inst: &ScoInstance, rng: &mut R) -> Result<Self> {
        if inst.d > MAX_DENSE_DIM {
            return Err(invalid("d", format!("{} exceeds the dense cap {MAX_DENSE_DIM}", inst.d)));
        }
        let rows = (0..inst.n)
            .map(|_| {
                let mut row = Vec::with_capacity(inst.d);
                while row.len() < inst.d {
                    let bits: u64 = rng.random();
                    let take = (inst.d - row.len()).min(64);
                    row.extend((0..take).map(|b| bits >> b & 1 == 1));
                }
                row
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    /// Number of samples with bit `j` set, per coordinate.
    pub fn counts(&self) -> Vec<usize> {
        let mut out = vec![0usize; self.dim()];
        for row in &self.rows {
            for (c, &b) in out.iter_mut().zip(row) {
                *c += b as usize;
            }
        }
        out
    }

    /// Count histogram with the identity of coordinate 0 kept when it matters.
    pub fn profile(&self) -> CountProfile {
        let counts = self.counts();
        let mut hist = vec![0usize; self.n() + 1];
        for &c in &counts {
            hist[c] += 1;
        }
        CountProfile {
            kicked: (hist[0] == 0).then(|| counts[0]),
            hist,
        }
    }
}

/// Bad-coordinate indicator of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadCoords {
    pub mask: Vec<bool>,
    pub count: usize,
    pub event_ok: bool,
}

impl BadCoords {
    pub fn of(inst: &ScoInstance, s: &ScoDataset) -> Self {
        let mask: Vec<bool> = s.counts().iter().map(|&c| c == 0).collect();
        let count = mask.iter().filter(|&&b| b).count();
        Self {
            event_ok: inst.event_ok(count),
            mask,
            count,
        }
    }
}

fn check_dims(inst: &ScoInstance, len: usize) -> Result<()> {
    if len != inst.d {
        return Err(Error::AlphabetMismatch {
            expected: inst.d,
            found: len,
        });
    }
    Ok(())
}

/// `loss(z, w)` for `||w|| <= 1`.
pub fn sco_loss(inst: &ScoInstance, z: &[bool], w: &[f64]) -> Result<f64> {
    check_dims(inst, z.len())?;
    check_dims(inst, w.len())?;
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 + BALL_SLACK {
        return Err(invalid("w", format!("norm {norm} is outside the unit ball")));
    }
    let mut quad = 0.0;
    let mut lin = 0.0;
    for (&zj, &wj) in z.iter().zip(w) {
        if zj {
            quad += wj * wj;
            lin += wj;
        }
    }
    let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    Ok(quad + inst.lambda * lin + top)
}

/// Population risk under fair bits:
/// `sum_j w_j^2 / 2 + (lam / 2) sum_j w_j + max(max_j w_j, 0)`.
pub fn sco_population_risk(inst: &ScoInstance, w: &[f64]) -> Result<f64> {
    check_dims(inst, w.len())?;
    let sq: f64 = w.iter().map(|x| x * x).sum();
    let sum: f64 = w.iter().sum();
    let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    Ok(0.5 * sq + 0.5 * inst.lambda * sum + top)
}

/// Empirical risk of `w` on `s`.
pub fn sco_empirical_risk(inst: &ScoInstance, s: &ScoDataset, w: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for z in s.rows() {
        total += sco_loss(inst, z, w)?;
    }
    Ok(total / s.n() as f64)
}

/// How [`run_gd`] obtains the final iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdMode {
    /// `T` projected subgradient steps from 0.
    Iterative,
    /// Per-coordinate closed form valid under the bad-count event.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOutput {
    pub w: Vec<f64>,
    pub bad: BadCoords,
    /// Whether the projection onto the unit ball ever changed an iterate.
    pub projected: bool,
}

/// Full-batch projected gradient descent on `s`.
///
/// Subgradient of `max(max_j w_j, 0)`: when the maximum is attained with
/// `max_j w_j >= 0`, the unit vector of one maximizing coordinate, preferring
/// bad coordinates and then the lowest index; zero otherwise.
pub fn run_gd(inst: &ScoInstance, s: &ScoDataset, mode: GdMode) -> Result<GdOutput> {
    check_dims(inst, s.dim())?;
    if s.n() != inst.n {
        return Err(Error::AlphabetMismatch {
            expected: inst.n,
            found: s.n(),
        });
    }
    let bad = BadCoords::of(inst, s);
    let counts = s.counts();
    match mode {
        GdMode::ClosedForm => {
            let w = counts
                .iter()
                .map(|&k| if k == 0 { inst.v1() } else { inst.good_final(k) })
                .collect();
            Ok(GdOutput {
                w,
                bad,
                projected: false,
            })
        }
        GdMode::Iterative => {
            let mu: Vec<f64> = counts.iter().map(|&k| k as f64 / inst.nf()).collect();
            let mut w = vec![0.0; inst.d];
            let mut projected = false;
            for _ in 0..inst.t {
                let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let pick = if top >= 0.0 {
                    let mut ties = (0..inst.d).filter(|&j| w[j] == top);
                    let first = ties.clone().next();
                    ties.find(|&j| counts[j] == 0).or(first)
                } else {
                    None
                };
                for j in 0..inst.d {
                    let mut g = 2.0 * mu[j] * w[j] + inst.lambda * mu[j];
                    if pick == Some(j) {
                        g += 1.0;
                    }
                    w[j] -= inst.eta * g;
                }
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1.0 {
                    projected = true;
                    w.iter_mut().for_each(|x| *x /= norm);
                }
            }
            Ok(GdOutput { w, bad, projected })
        }
    }
}

/// Samples the quantized hypothesis given the training set.
///
/// Under the event, good coordinates map to `v0` and each bad coordinate to
/// `v0` with probability `r`, else `v1`; outside the event the output is 0.
pub fn quantize_w(inst: &ScoInstance, s: &ScoDataset, r: f64, seed: u64) -> Result<Vec<f64>> {
    check_r(inst, r)?;
    check_dims(inst, s.dim())?;
    let bad = BadCoords::of(inst, s);
    if !bad.event_ok {
        return Ok(vec![0.0; inst.d]);
    }
    let mut rng = crate::rng::from_seed(seed);
    Ok(bad
        .mask
        .iter()
        .map(|&is_bad| {
            if is_bad && rng.random::<f64>() >= r {
                inst.v1()
            } else {
                inst.v0()
            }
        })
        .collect())
}

fn check_r(inst: &ScoInstance, r: f64) -> Result<()> {
    let lo = 1.0 - 1.0 / (inst.nf() * inst.nf());
    if !(lo..=1.0).contains(&r) {
        return Err(invalid("r", format!("{r} is outside [{lo}, 1]")));
    }
    Ok(())
}

/// Dataset summary sufficient for every quantity below: `hist[k]` coordinates
/// have count `k`. When there is no bad coordinate, coordinate 0 takes the
/// max-term step at initialization and `kicked` holds its count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountProfile {
    pub hist: Vec<usize>,
    pub kicked: Option<usize>,
}

impl CountProfile {
    /// Exact draw of the histogram of a fresh dataset.
    pub fn sample<R: Rng + ?Sized>(inst: &ScoInstance, rng: &mut R) -> Self {
        let pmf = inst.count_pmf();
        let mut hist = vec![0usize; inst.n + 1];
        let mut left = inst.d as u64;
        let mut mass = 1.0;
        for k in 0..=inst.n {
            if left == 0 {
                break;
            }
            let take = if k == inst.n {
                left
            } else {
                let p = (pmf[k] / mass).clamp(0.0, 1.0);
                Binomial::new(left, p).expect("valid binomial").sample(rng)
            };
            hist[k] = take as usize;
            left -= take;
            mass -= pmf[k];
        }
        let kicked = (hist[0] == 0 && inst.d > 0).then(|| {
            let mut u = rng.random_range(0..inst.d);
            let mut k = 0;
            while u >= hist[k] {
                u -= hist[k];
                k += 1;
            }
            k
        });
        Self { hist, kicked }
    }

    pub fn bad_count(&self) -> usize {
        self.hist[0]
    }
}

/// `gen(S, W^T)` of the gradient-descent output.
pub fn gen_of_gd(inst: &ScoInstance, p: &CountProfile) -> f64 {
    let b = p.bad_count();
    let mut total = 0.5 * b.min(inst.t) as f64 * inst.c(-inst.eta);
    for k in 1..=inst.n {
        total += p.hist[k] as f64 * inst.gen_part(k, inst.good_final(k));
    }
    if let Some(k) = p.kicked {
        total += inst.gen_part(k, inst.kicked_final(k)) - inst.gen_part(k, inst.good_final(k));
    }
    total
}

/// `E[gen(S, W_hat) | S]` over the quantizer.
pub fn gen_of_quantized(inst: &ScoInstance, p: &CountProfile, r: f64) -> f64 {
    if !inst.event_ok(p.bad_count()) {
        return 0.0;
    }
    let c0 = inst.c(inst.v0());
    let mut total = 0.5 * p.bad_count() as f64 * (r * c0 + (1.0 - r) * inst.c(inst.v1()));
    for k in 1..=inst.n {
        total += p.hist[k] as f64 * inst.gen_part(k, inst.v0());
    }
    total
}

/// Exact dataset expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactMoments {
    /// `P(T/2 <= ||B||_0 <= T)`.
    pub p_event: f64,
    /// `E[gen(S, W^T)]`.
    pub expected_gen: f64,
    /// `E[gen(S, W^T) - gen(S, W_hat)]`.
    pub expected_distortion: f64,
    /// `E[distortion | event]`.
    pub distortion_given_event: f64,
    /// `E[||B||_0 | event]`.
    pub bad_given_event: f64,
}

/// Log-pmf of `Binomial(d, p)` over the range carrying its mass, as
/// `(b, pmf)` pairs.
fn bad_count_law(inst: &ScoInstance) -> Vec<(usize, f64)> {
    let d = inst.d;
    if d == 0 {
        return vec![(0, 1.0)];
    }
    let p = inst.p_bad();
    let mean = d as f64 * p;
    let hi = ((mean + 60.0 * mean.sqrt() + 60.0) as usize).max(inst.t + 1).min(d);
    let ratio = (p / (1.0 - p)).ln();
    let mut lp = d as f64 * (1.0 - p).ln();
    let mut out = Vec::with_capacity(hi + 1);
    for b in 0..=hi {
        out.push((b, lp.exp()));
        lp += ((d - b) as f64 / (b + 1) as f64).ln() + ratio;
    }
    out
}

/// Means over good-coordinate counts `K ~ Binomial(n, 1/2) | K >= 1`.
fn good_mean(inst: &ScoInstance, f: impl Fn(usize) -> f64) -> f64 {
    let pmf = inst.count_pmf();
    let good = 1.0 - pmf[0];
    (1..=inst.n).map(|k| pmf[k] * f(k)).sum::<f64>() / good
}

pub fn exact_moments(inst: &ScoInstance, r: f64) -> Result<ExactMoments> {
    check_r(inst, r)?;
    let d = inst.d as f64;
    let gen_good = good_mean(inst, |k| inst.gen_part(k, inst.good_final(k)));
    let kick_shift = good_mean(inst, |k| {
        inst.gen_part(k, inst.kicked_final(k)) - inst.gen_part(k, inst.good_final(k))
    });
    let dist_good = good_mean(inst, |k| {
        inst.gen_part(k, inst.good_final(k)) - inst.gen_part(k, inst.v0())
    });
    let bad_dist = 0.5 * r * (inst.c(-inst.eta) - inst.c(inst.v0()));
    let bad_gen = 0.5 * inst.c(-inst.eta);

    let mut m = ExactMoments {
        p_event: 0.0,
        expected_gen: 0.0,
        expected_distortion: 0.0,
        distortion_given_event: 0.0,
        bad_given_event: 0.0,
    };
    for (b, pb) in bad_count_law(inst) {
        if pb == 0.0 {
            continue;
        }
        let bf = b as f64;
        let mut gen = (d - bf) * gen_good + b.min(inst.t) as f64 * bad_gen;
        if b == 0 {
            gen += kick_shift;
        }
        m.expected_gen += pb * gen;
        if inst.event_ok(b) {
            let dist = (d - bf) * dist_good + bf * bad_dist;
            m.p_event += pb;
            m.expected_distortion += pb * dist;
            m.distortion_given_event += pb * dist;
            m.bad_given_event += pb * bf;
        } else {
            m.expected_distortion += pb * gen;
        }
    }
    if m.p_event > 0.0 {
        m.distortion_given_event /= m.p_event;
        m.bad_given_event /= m.p_event;
    }
    Ok(m)
}

/// Exact `log E_{P_S x q}[exp(lam_b gen(S, W_hat))]` with `q` the marginal of
/// the quantizer output.
///
/// For a fixed `w_hat <= 0`, `gen(S, w_hat) = sum_j c_j (1/2 - mu_hat_j)`, so
/// the dataset expectation factorizes into `prod_j cosh(lam_b c_j / (2n))^n`.
pub fn exact_log_mgf(inst: &ScoInstance, r: f64, lam_b: f64) -> Result<f64> {
    check_r(inst, r)?;
    let n = inst.nf();
    let lc = |w: f64| n * (lam_b * inst.c(w) / (2.0 * n)).cosh().ln();
    let (l0, l1) = (lc(inst.v0()), lc(inst.v1()));
    let d = inst.d as f64;
    let mut terms = Vec::new();
    let mut p_fail = 0.0;
    for (b, pb) in bad_count_law(inst) {
        if !inst.event_ok(b) {
            p_fail += pb;
            continue;
        }
        if pb == 0.0 {
            continue;
        }
        // m flipped coordinates among b, m ~ Binomial(b, 1 - r).
        for m in 0..=b {
            let lm = log_binom_pmf(b, m, 1.0 - r);
            if lm == f64::NEG_INFINITY {
                continue;
            }
            let mf = m as f64;
            terms.push(pb.ln() + lm + (d - mf) * l0 + mf * l1);
        }
    }
    terms.push(p_fail.ln());
    Ok(crate::bounds::log_sum_exp(&terms))
}

fn log_binom_pmf(n: usize, k: usize, p: f64) -> f64 {
    if p <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let mut lc = 0.0;
    for i in 0..k {
        lc += ((n - i) as f64 / (i + 1) as f64).ln();
    }
    lc + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
}

/// `x log2 x`-free part `(1 - r)(n + 1 - log2(1 - r))`, zero at `r = 1`.
fn flip_entropy_factor(n: f64, r: f64) -> f64 {
    let f = 1.0 - r;
    if f <= 0.0 {
        0.0
    } else {
        f * (n + 1.0 - f.log2())
    }
}

/// In-expectation bound with `lam_b = n^2`.
///
/// Rate: `(1/18) T log2(e) e^{-T/36} + (3/4)(1 - r) T (n + 1 - log2(1 - r))`,
/// an upper bound on `I(S; W_hat)`. MGF: `lam_b^2 / (10 n^3)`. Distortion:
/// the exact expectation.
pub fn counterexample_expectation_bound(inst: &ScoInstance, r: f64) -> Result<BoundReport> {
    let moments = exact_moments(inst, r)?;
    let n = inst.nf();
    let t = inst.t as f64;
    let lam_b = n * n;
    let rate = t * LOG2_E * (-t / 36.0).exp() / 18.0 + 0.75 * t * flip_entropy_factor(n, r);
    let mgf = lam_b * lam_b / (10.0 * n.powi(3));
    let params = BoundParams {
        n: Some(inst.n),
        sigma: Some(inst.sigma()),
        epsilon: moments.expected_distortion,
        lambda: Some(lam_b),
        ..BoundParams::default()
    };
    let mut report = lambda_scaled_report(BoundKind::CounterexampleExpectation, params, rate, mgf, 0.0);
    let sigma = inst.sigma();
    let diag = &mut report.diagnostics;
    diag.insert("expected_gen".into(), moments.expected_gen);
    diag.insert("p_event".into(), moments.p_event);
    diag.insert("exact_log_mgf".into(), exact_log_mgf(inst, r, lam_b)?);
    diag.insert("subgaussian_log_mgf".into(), lam_b * lam_b * sigma * sigma / (2.0 * n));
    diag.insert("epsilon_chain".into(), distortion_chain(inst));
    Ok(report)
}

/// Loose `O(1/n)` upper bound on the distortion obtained by bounding each
/// coordinate's contribution separately, at `||B||_0 = E||B||_0`.
pub fn distortion_chain(inst: &ScoInstance) -> f64 {
    let n = inst.nf();
    let t = inst.t as f64;
    let d = inst.d as f64;
    let b = d * inst.p_bad();
    let core = inst.eta * inst.lambda * inst.lambda * (t + 1.0) * (d - b) / n.sqrt();
    let tail = (4.0 + 2.0 / n) * (-t / 36.0).exp();
    core / 4.0 + 0.5 * inst.eta * inst.eta * b + core / 2.0 + 2.0 * tail
}

/// Dataset statistics entering the high-probability bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailSample {
    /// `||B||_0` (fractional values are accepted for typical-case reports).
    pub bad_count: f64,
    /// `gen(S, W^T) - E[gen(S, W_hat) | S]`.
    pub distortion: f64,
    pub event_ok: bool,
}

impl TailSample {
    pub fn of(inst: &ScoInstance, p: &CountProfile, r: f64) -> Self {
        Self {
            bad_count: p.bad_count() as f64,
            distortion: gen_of_gd(inst, p) - gen_of_quantized(inst, p, r),
            event_ok: inst.event_ok(p.bad_count()),
        }
    }

    /// Expected bad count and conditional mean distortion under the event.
    pub fn typical(inst: &ScoInstance, r: f64) -> Result<Self> {
        let m = exact_moments(inst, r)?;
        Ok(Self {
            bad_count: m.bad_given_event,
            distortion: m.distortion_given_event,
            event_ok: true,
        })
    }
}

/// High-probability bound with `lam_b = n^2 / 60`.
///
/// Rate: `KL(p_{W_hat|S} || q)` for the product prior putting mass
/// `q = (1 - r) 2^{-n}` on `v1`. MGF: `log(e^{lam_b^2 sigma^2 / (2n)} +
/// 2 e^{lam_b (2 + 1/n) - T/36})`. Outside the event the bound is infinite.
pub fn counterexample_tail_bound(
    inst: &ScoInstance,
    r: f64,
    delta: f64,
    sample: TailSample,
) -> Result<BoundReport> {
    check_r(inst, r)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("{delta} is outside (0, 1)")));
    }
    let n = inst.nf();
    let t = inst.t as f64;
    let d = inst.d as f64;
    let lam_b = n * n / 60.0;
    let sigma = inst.sigma();
    let rate = if sample.event_ok {
        let q = (1.0 - r) * inst.p_bad();
        let b = sample.bad_count;
        let good = -(-q).ln_1p();
        let mut bad = r * (r.ln() + good);
        if r < 1.0 {
            bad += (1.0 - r) * ((1.0 - r) / q).ln();
        }
        (d - b) * good + b * bad
    } else {
        f64::INFINITY
    };
    let mgf = crate::bounds::log_sum_exp(&[
        lam_b * lam_b * sigma * sigma / (2.0 * n),
        2f64.ln() + lam_b * (2.0 + 1.0 / n) - t / 36.0,
    ]);
    let params = BoundParams {
        n: Some(inst.n),
        sigma: Some(sigma),
        delta: Some(delta),
        epsilon: if sample.event_ok { sample.distortion } else { 0.0 },
        lambda: Some(lam_b),
        alpha: None,
    };
    let mut report =
        lambda_scaled_report(BoundKind::CounterexampleTail, params, rate, mgf, (1.0 / delta).ln());
    report.diagnostics.insert("bad_count".into(), sample.bad_count);
    Ok(report)
}

/// Empirical bad-count statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BadCoordStats {
    pub trials: usize,
    pub event_rate: f64,
    pub event_se: f64,
    /// `1 - 2 e^{-T/36}`.
    pub event_floor: f64,
    pub mean_count: f64,
    pub count_se: f64,
    /// `d 2^{-n}`.
    pub expected_count: f64,
    /// Event rate at least the floor and mean count within 3 SE of `d 2^{-n}`.
    pub pass: bool,
}

pub fn bad_coord_stats(inst: &ScoInstance, trials: usize, seed: u64) -> Result<BadCoordStats> {
    if trials < crate::validation::MIN_TRIALS {
        return Err(invalid("trials", format!("need at least {}", crate::validation::MIN_TRIALS)));
    }
    let counts: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|i| CountProfile::sample(inst, &mut stream(seed, i as u64)).bad_count())
        .collect();
    let tf = trials as f64;
    let hits = counts.iter().filter(|&&b| inst.event_ok(b)).count() as f64;
    let event_rate = hits / tf;
    let event_se = (event_rate * (1.0 - event_rate) / tf).sqrt();
    let mean = counts.iter().sum::<usize>() as f64 / tf;
    let var = counts.iter().map(|&b| (b as f64 - mean).powi(2)).sum::<f64>() / (tf - 1.0);
    let count_se = (var / tf).sqrt();
    let expected = inst.d as f64 * inst.p_bad();
    let floor = 1.0 - 2.0 * (-(inst.t as f64) / 36.0).exp();
    Ok(BadCoordStats {
        trials,
        event_rate,
        event_se,
        event_floor: floor,
        mean_count: mean,
        count_se,
        expected_count: expected,
        pass: event_rate >= floor - 3.0 * event_se && (mean - expected).abs() <= 3.0 * count_se.max(1e-12),
    })
}

/// Choice of `r` per `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RRule {
    /// `r = 1 - 1/n^2`.
    Min,
    /// `r = 1`.
    One,
}

impl RRule {
    pub fn r(self, n: usize) -> f64 {
        match self {
            RRule::Min => 1.0 - 1.0 / (n * n) as f64,
            RRule::One => 1.0,
        }
    }
}

impl std::str::FromStr for RRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(RRule::Min),
            "one" => Ok(RRule::One),
            _ => Err(invalid("r_rule", format!("unknown rule `{s}` (min|one)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub r: f64,
    pub trials: usize,
    /// NaN when `trials == 0`.
    pub mc_mean_gen: f64,
    pub mc_se: f64,
    pub exact_mean_gen: f64,
    pub bound_expectation: f64,
    /// Tail bound at the typical dataset.
    pub bound_tail: f64,
    pub event_rate: f64,
    pub event_floor: f64,
    /// Fraction of trials with `gen(S, W^T)` above the per-dataset tail bound.
    pub tail_violation_rate: f64,
    /// `mc_mean_gen <= bound_expectation + 3 SE` (true when no trials).
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    pub delta: f64,
    /// Log-log slope of `bound_expectation` against `n`.
    pub bound_slope: f64,
    /// Log-log slope of `mc_mean_gen`; `None` without trials or with a
    /// non-positive mean.
    pub gen_slope: Option<f64>,
    pub bound_tail_slope: f64,
}

impl ScalingStudy {
    /// Every row dominated.
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.dominated)
    }

    pub fn to_csv(&self) -> String {
        use crate::report::fmt_f64 as f;
        let mut out = String::from(
            "n,mc_mean_gen,bound_expectation,bound_tail,slope_fit,mc_se,exact_mean_gen,event_rate,tail_violation_rate\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.n,
                f(r.mc_mean_gen),
                f(r.bound_expectation),
                f(r.bound_tail),
                f(self.bound_slope),
                f(r.mc_se),
                f(r.exact_mean_gen),
                f(r.event_rate),
                f(r.tail_violation_rate)
            ));
        }
        out
    }
}

/// Bounds, exact and Monte Carlo generalization error for each `n`.
///
/// Trial `i` at size `n` uses stream `i` of `derive_seed(seed, n)`.
pub fn scaling_study(
    n_list: &[usize],
    trials: usize,
    r_rule: RRule,
    delta: f64,
    seed: u64,
) -> Result<ScalingStudy> {
    if n_list.is_empty() {
        return Err(Error::Empty("n list"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("n_list", "must be strictly increasing"));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let inst = ScoInstance::new(n)?;
        let r = r_rule.r(n);
        let exp_bound = counterexample_expectation_bound(&inst, r)?;
        let tail_bound = counterexample_tail_bound(&inst, r, delta, TailSample::typical(&inst, r)?)?;
        let root = derive_seed(seed, n as u64);
        let draws: Vec<(f64, bool, bool)> = (0..trials)
            .into_par_iter()
            .map(|i| -> Result<(f64, bool, bool)> {
                let p = CountProfile::sample(&inst, &mut stream(root, i as u64));
                let gen = gen_of_gd(&inst, &p);
                let tail = counterexample_tail_bound(&inst, r, delta, TailSample::of(&inst, &p, r))?;
                Ok((gen, inst.event_ok(p.bad_count()), gen > tail.bound_value))
            })
            .collect::<Result<_>>()?;
        let tf = trials as f64;
        let (mean, se) = if trials == 0 {
            (f64::NAN, f64::NAN)
        } else {
            crate::validation::mean_and_se(&draws.iter().map(|d| d.0).collect::<Vec<_>>())
        };
        let rate = |pick: fn(&(f64, bool, bool)) -> bool| {
            if trials == 0 {
                f64::NAN
            } else {
                draws.iter().filter(|d| pick(d)).count() as f64 / tf
            }
        };
        rows.push(ScalingRow {
            n,
            r,
            trials,
            mc_mean_gen: mean,
            mc_se: se,
            exact_mean_gen: exp_bound.diagnostics["expected_gen"],
            bound_expectation: exp_bound.bound_value,
            bound_tail: tail_bound.bound_value,
            event_rate: rate(|d| d.1),
            event_floor: 1.0 - 2.0 * (-(inst.t as f64) / 36.0).exp(),
            tail_violation_rate: rate(|d| d.2),
            dominated: trials == 0 || mean <= exp_bound.bound_value + 3.0 * se,
        });
    }
    let logn: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let slope = |ys: Vec<f64>| -> Option<f64> {
        if rows.len() < 2 || ys.iter().any(|y| !(*y > 0.0) || !y.is_finite()) {
            None
        } else {
            Some(ls_slope(&logn, &ys.iter().map(|y| y.ln()).collect::<Vec<_>>()))
        }
    };
    Ok(ScalingStudy {
        delta,
        bound_slope: slope(rows.iter().map(|r| r.bound_expectation).collect()).unwrap_or(f64::NAN),
        gen_slope: slope(rows.iter().map(|r| r.mc_mean_gen).collect()),
        bound_tail_slope: slope(rows.iter().map(|r| r.bound_tail).collect()).unwrap_or(f64::NAN),
        rows,
    })
}
