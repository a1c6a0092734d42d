//! Rate-distortion functions on finite alphabets.
//!
//! The solver is Blahut–Arimoto for the Lagrangian `I(X; X_hat) + lambda E d`,
//! wrapped in a search over `lambda` that lands on a target distortion.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::info::{entropy, Channel, Joint, Pmf};
use crate::matrix::Matrix;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Distortion table `d(source, reproduction)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distortion {
    matrix: Matrix,
}

impl Distortion {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(invalid("distortion", "entries must be finite"));
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn hamming(k: usize) -> Self {
        Self {
            matrix: Matrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { 1.0 }),
        }
    }

    /// `|x_i - x_j|` on the given points.
    pub fn absolute(points: &[f64]) -> Self {
        let k = points.len();
        Self {
            matrix: Matrix::from_fn(k, k, |i, j| (points[i] - points[j]).abs()),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.matrix.get(x, y)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn sources(&self) -> usize {
        self.matrix.rows()
    }

    pub fn reproductions(&self) -> usize {
        self.matrix.cols()
    }

    /// `min_y E_p d(X, y)`: distortion of the best constant reproduction.
    pub fn max_useful(&self, p: &Pmf) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for y in 0..self.reproductions() {
            let v: f64 = (0..self.sources()).map(|x| p.get(x) * self.get(x, y)).sum();
            if v < best.0 {
                best = (v, y);
            }
        }
        best
    }

    /// `E_p min_y d(X, y)`: smallest achievable distortion.
    pub fn min_achievable(&self, p: &Pmf) -> f64 {
        (0..self.sources())
            .filter(|&x| p.get(x) > 0.0)
            .map(|x| p.get(x) * row_min(self.matrix.row(x)))
            .sum()
    }
}

fn row_min(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::INFINITY, f64::min)
}

/// A point on (or achieving) the rate-distortion curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdSolution {
    pub rate_nats: f64,
    pub achieved_distortion: f64,
    /// Test channel `P(x_hat | x)`.
    pub channel: Channel,
    pub lagrange_lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for BaConfig {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

struct Kernel {
    /// `exp(-lambda (d - row_min))`, zero on excluded entries.
    a: Matrix,
    /// `a * d`.
    ad: Matrix,
    /// `lambda * row_min` per source symbol.
    shift: Vec<f64>,
}

impl Kernel {
    fn tilted(d: &Distortion, lambda: f64) -> Self {
        let (rows, cols) = (d.sources(), d.reproductions());
        let mut shift = Vec::with_capacity(rows);
        let mut a = Matrix::filled(rows, cols, 0.0);
        let mut ad = Matrix::filled(rows, cols, 0.0);
        for x in 0..rows {
            let m = row_min(d.matrix.row(x));
            shift.push(lambda * m);
            for y in 0..cols {
                let mut v = (-lambda * (d.get(x, y) - m)).exp();
                if v < 1e-250 {
                    v = 0.0;
                }
                a.set(x, y, v);
                ad.set(x, y, v * d.get(x, y));
            }
        }
        Self { a, ad, shift }
    }

    /// Unit weight on each row's minimizers, zero elsewhere.
    fn lossless(d: &Distortion) -> Self {
        let (rows, cols) = (d.sources(), d.reproductions());
        let mut a = Matrix::filled(rows, cols, 0.0);
        let mut ad = Matrix::filled(rows, cols, 0.0);
        for x in 0..rows {
            let m = row_min(d.matrix.row(x));
            for y in 0..cols {
                if d.get(x, y) <= m {
                    a.set(x, y, 1.0);
                    ad.set(x, y, d.get(x, y));
                }
            }
        }
        Self {
            a,
            ad,
            shift: vec![0.0; rows],
        }
    }
}

/// Result of one Blahut–Arimoto run.
struct BaRun {
    q: Vec<f64>,
    rate: f64,
    distortion: f64,
    channel: Channel,
    iterations: usize,
    converged: bool,
}

fn ba_run(
    p: &Pmf,
    k: &Kernel,
    lambda: f64,
    q0: Option<&[f64]>,
    config: BaConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> BaRun {
    let rows = k.a.rows();
    let cols = k.a.cols();
    let mut q: Vec<f64> = match q0 {
        Some(init) => {
            let u = 1.0 / cols as f64;
            init.iter().map(|v| (1.0 - 1e-6) * v + 1e-6 * u).collect()
        }
        None => vec![1.0 / cols as f64; cols],
    };
    let mut z = vec![0.0; rows];
    let mut c = vec![0.0; cols];
    let mut e = vec![0.0; cols];
    let mut prev_rate = f64::NAN;
    let mut prev_f = f64::INFINITY;
    let mut rate = 0.0;
    let mut distortion = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut q_used = q.clone();

    while iterations < config.max_iter.max(1) {
        iterations += 1;
        for x in 0..rows {
            z[x] = if p.get(x) > 0.0 {
                k.a.row(x).iter().zip(&q).map(|(a, qv)| a * qv).sum()
            } else {
                0.0
            };
        }
        c.iter_mut().for_each(|v| *v = 0.0);
        e.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..rows {
            let px = p.get(x);
            if px <= 0.0 {
                continue;
            }
            let w = px / z[x];
            for (y, (a, ad)) in k.a.row(x).iter().zip(k.ad.row(x)).enumerate() {
                c[y] += w * a;
                e[y] += w * ad;
            }
        }
        distortion = q.iter().zip(&e).map(|(qv, ev)| qv * ev).sum();
        q_used.copy_from_slice(&q);
        let mut log_c_term = 0.0;
        for y in 0..cols {
            let mut next = q[y] * c[y];
            // Flush dying outputs before they turn subnormal.
            if next < 1e-250 {
                next = 0.0;
            }
            if next > 0.0 {
                log_c_term += next * c[y].ln();
            }
            q[y] = next;
        }
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        let log_z: f64 = (0..rows)
            .filter(|&x| p.get(x) > 0.0)
            .map(|x| p.get(x) * (z[x].ln() - k.shift[x]))
            .sum();
        // I + lambda D at the channel built from the previous output law.
        let f = -log_z - log_c_term;
        rate = (f - lambda * distortion).max(0.0);
        if let Some(t) = trace.as_deref_mut() {
            t.push(f);
        }
        let settled = (rate - prev_rate).abs() < config.tol && (prev_f - f).abs() < config.tol;
        prev_rate = rate;
        prev_f = f;
        if settled {
            converged = true;
            break;
        }
    }

    let mut table = Matrix::filled(rows, cols, 0.0);
    for x in 0..rows {
        let zx: f64 = k.a.row(x).iter().zip(&q_used).map(|(a, qv)| a * qv).sum();
        for y in 0..cols {
            let v = if zx > 0.0 {
                q_used[y] * k.a.get(x, y) / zx
            } else {
                q_used[y]
            };
            table.set(x, y, v);
        }
    }
    let channel = Channel::from_matrix(table).expect("rows normalized by construction");
    BaRun {
        q,
        rate,
        distortion,
        channel,
        iterations,
        converged,
    }
}

fn check_shapes(source: &Pmf, d: &Distortion) -> Result<()> {
    if d.sources() != source.len() {
        return Err(Error::AlphabetMismatch {
            expected: d.sources(),
            found: source.len(),
        });
    }
    Ok(())
}

fn solution(run: BaRun, lambda: f64) -> RdSolution {
    RdSolution {
        rate_nats: run.rate,
        achieved_distortion: run.distortion,
        channel: run.channel,
        lagrange_lambda: lambda,
        iterations: run.iterations,
        converged: run.converged,
    }
}

/// Blahut–Arimoto at a fixed multiplier: minimizes `I + lambda E d`.
///
/// `lambda = 0` returns a rate-zero constant channel.
pub fn blahut_arimoto(
    source: &Pmf,
    d: &Distortion,
    lambda: f64,
    config: BaConfig,
) -> Result<RdSolution> {
    check_shapes(source, d)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", format!("{lambda} is not finite and non-negative")));
    }
    if lambda == 0.0 {
        return Ok(rate_zero(source, d));
    }
    let k = Kernel::tilted(d, lambda);
    Ok(solution(ba_run(source, &k, lambda, None, config, None), lambda))
}

/// As [`blahut_arimoto`], also returning the Lagrangian after every iteration.
pub fn blahut_arimoto_traced(
    source: &Pmf,
    d: &Distortion,
    lambda: f64,
    config: BaConfig,
) -> Result<(RdSolution, Vec<f64>)> {
    check_shapes(source, d)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", format!("{lambda} is not finite and positive")));
    }
    let k = Kernel::tilted(d, lambda);
    let mut trace = Vec::new();
    let run = ba_run(source, &k, lambda, None, config, Some(&mut trace));
    Ok((solution(run, lambda), trace))
}

fn rate_zero(source: &Pmf, d: &Distortion) -> RdSolution {
    let (dist, y) = d.max_useful(source);
    RdSolution {
        rate_nats: 0.0,
        achieved_distortion: dist,
        channel: Channel::constant(source.len(), &Pmf::point_mass(d.reproductions(), y)),
        lagrange_lambda: 0.0,
        iterations: 0,
        converged: true,
    }
}

/// Distortion tolerance used when landing on a target.
fn distortion_tol(d: &Distortion) -> f64 {
    1e-9 * (d.matrix.max() - d.matrix.min()).max(1.0)
}

/// `R(epsilon) = min I(X; X_hat)` subject to `E d(X, X_hat) <= epsilon`.
pub fn rd_curve(source: &Pmf, d: &Distortion, epsilon: f64) -> Result<RdSolution> {
    rd_curve_with(source, d, epsilon, BaConfig::default())
}

pub fn rd_curve_with(
    source: &Pmf,
    d: &Distortion,
    epsilon: f64,
    config: BaConfig,
) -> Result<RdSolution> {
    check_shapes(source, d)?;
    if !epsilon.is_finite() {
        return Err(invalid("epsilon", "must be finite"));
    }
    let tol = distortion_tol(d);
    let (d_max, _) = d.max_useful(source);
    if epsilon >= d_max - tol {
        return Ok(rate_zero(source, d));
    }
    let d_min = d.min_achievable(source);
    if epsilon < d_min - tol {
        return Err(Error::Infeasible {
            epsilon,
            min_achievable: d_min,
        });
    }
    if epsilon <= d_min + tol {
        let run = ba_run(source, &Kernel::lossless(d), 0.0, None, config, None);
        return Ok(solution(run, f64::INFINITY));
    }

    let scale = (d.matrix.max() - d.matrix.min()).max(f64::MIN_POSITIVE);
    let mut warm: Option<Vec<f64>> = None;
    let solve = |lambda: f64, warm: &mut Option<Vec<f64>>| -> (BaRun, f64) {
        let k = Kernel::tilted(d, lambda);
        let run = ba_run(source, &k, lambda, warm.as_deref(), config, None);
        *warm = Some(run.q.clone());
        (run, lambda)
    };

    // Bracket: `lo` has distortion above epsilon, `hi` at or below.
    let mut lo: Option<(BaRun, f64)> = None;
    let mut hi: Option<(BaRun, f64)> = None;
    let mut lambda = 1.0 / scale;
    for _ in 0..200 {
        let (run, l) = solve(lambda, &mut warm);
        if (epsilon - tol..=epsilon).contains(&run.distortion) {
            return Ok(solution(run, l));
        }
        if run.distortion > epsilon {
            lo = Some((run, l));
            if hi.is_some() {
                break;
            }
            lambda *= 4.0;
        } else {
            hi = Some((run, l));
            if lo.is_some() {
                break;
            }
            lambda /= 4.0;
            if lambda < 1e-12 / scale {
                break;
            }
        }
    }
    let Some(mut hi) = hi else {
        // Even huge multipliers miss: fall back to the lossless channel.
        let run = ba_run(source, &Kernel::lossless(d), 0.0, None, config, None);
        return Ok(solution(run, f64::INFINITY));
    };
    let mut lo = match lo {
        Some(lo) => lo,
        None => return Ok(solution(hi.0, hi.1)),
    };

    // Illinois false position on (log lambda, distortion).
    let mut side = 0i8;
    let (mut wl, mut wh) = (1.0, 1.0);
    for _ in 0..100 {
        if hi.1 / lo.1 < 1.0 + 1e-9 {
            break;
        }
        let (xl, xh) = (lo.1.ln(), hi.1.ln());
        let fl = (lo.0.distortion - epsilon) * wl;
        let fh = (hi.0.distortion - epsilon) * wh;
        let mut x = xl + (xh - xl) * fl / (fl - fh);
        if !x.is_finite() || x <= xl || x >= xh {
            x = 0.5 * (xl + xh);
        }
        let (run, l) = solve(x.exp(), &mut warm);
        if (epsilon - tol..=epsilon).contains(&run.distortion) {
            return Ok(solution(run, l));
        }
        if run.distortion > epsilon {
            lo = (run, l);
            wl = 1.0;
            if side == -1 {
                wh *= 0.5;
            }
            side = -1;
        } else {
            hi = (run, l);
            wh = 1.0;
            if side == 1 {
                wl *= 0.5;
            }
            side = 1;
        }
    }
    Ok(time_share(source, d, epsilon, lo, hi))
}

/// Mixes the two bracketing channels so the distortion is exactly `epsilon`.
fn time_share(
    source: &Pmf,
    d: &Distortion,
    epsilon: f64,
    lo: (BaRun, f64),
    hi: (BaRun, f64),
) -> RdSolution {
    let (dl, dh) = (lo.0.distortion, hi.0.distortion);
    let theta = ((epsilon - dh) / (dl - dh)).clamp(0.0, 1.0);
    let table = Matrix::from_fn(source.len(), d.reproductions(), |x, y| {
        theta * lo.0.channel.get(x, y) + (1.0 - theta) * hi.0.channel.get(x, y)
    });
    let channel = Channel::from_matrix(table).expect("convex combination of channels");
    let (rate, distortion) = evaluate_channel(source, d, &channel);
    RdSolution {
        rate_nats: rate,
        achieved_distortion: distortion,
        channel,
        lagrange_lambda: hi.1,
        iterations: lo.0.iterations + hi.0.iterations,
        converged: lo.0.converged && hi.0.converged,
    }
}

/// `(I(X; X_hat), E d)` for an explicit test channel.
pub fn evaluate_channel(source: &Pmf, d: &Distortion, channel: &Channel) -> (f64, f64) {
    let j = channel.joint(source).expect("shapes checked by caller");
    (crate::info::mutual_information(&j), j.expect(d.matrix()))
}

/// `R(epsilon)` at every point of `eps_grid`, solved in parallel.
pub fn rd_curve_grid(source: &Pmf, d: &Distortion, eps_grid: &[f64]) -> Result<Vec<RdSolution>> {
    eps_grid
        .par_iter()
        .map(|&e| rd_curve(source, d, e))
        .collect()
}

/// Rate-distortion function for the generalization-gap distortion.
///
/// The constraint `E[gen(S,W) - gen(S,W_hat)] <= epsilon` only involves
/// `W_hat` through `-gen(S, W_hat)`; the `W` term is a constant under the
/// joint. So it is an ordinary RD problem on the dataset marginal with
/// `d(s, w_hat) = -gen(s, w_hat)` and target `epsilon - E[gen(S, W)]`.
pub fn rd_gen(joint: &Joint, gen: &Matrix, epsilon: f64) -> Result<RdSolution> {
    gen.expect_shape(joint.rows(), joint.cols(), "gen table")?;
    let source = joint.row_marginal();
    let d = Distortion::new(gen.map(|g| -g))?;
    rd_curve(&source, &d, epsilon - joint.expect(gen))
}

/// RD of a trajectory law under a per-trajectory distortion (already averaged
/// over the window).
pub fn rd_trajectory(traj_dist: &Pmf, rho: &Distortion, epsilon: f64) -> Result<RdSolution> {
    rd_curve(traj_dist, rho, epsilon)
}

/// Rate-distortion dimension estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdDimension {
    pub epsilons: Vec<f64>,
    pub rates: Vec<f64>,
    /// `R(eps) / log(1/eps)` per grid point.
    pub ratios: Vec<f64>,
    /// Least-squares slope of `R(eps)` against `log(1/eps)`.
    pub dim_estimate: f64,
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Solver settings for [`rd_dimension`]; only the slope is needed, so the
/// inner iteration is capped lower than for single curve points.
pub const RD_DIMENSION_CONFIG: BaConfig = BaConfig {
    max_iter: 2_000,
    tol: 1e-9,
};

pub fn rd_dimension(source: &Pmf, rho: &Distortion, eps_grid: &[f64]) -> Result<RdDimension> {
    rd_dimension_with(source, rho, eps_grid, RD_DIMENSION_CONFIG)
}

pub fn rd_dimension_with(
    source: &Pmf,
    rho: &Distortion,
    eps_grid: &[f64],
    config: BaConfig,
) -> Result<RdDimension> {
    if eps_grid.len() < 3 {
        return Err(invalid("eps_grid", "needs at least 3 points"));
    }
    if eps_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(invalid("eps_grid", "points must lie in (0, 1)"));
    }
    let sols: Vec<RdSolution> = eps_grid
        .par_iter()
        .map(|&e| rd_curve_with(source, rho, e, config))
        .collect::<Result<_>>()?;
    let rates: Vec<f64> = sols.iter().map(|s| s.rate_nats).collect();
    let logs: Vec<f64> = eps_grid.iter().map(|e| (1.0 / e).ln()).collect();
    Ok(RdDimension {
        epsilons: eps_grid.to_vec(),
        ratios: rates.iter().zip(&logs).map(|(r, l)| r / l).collect(),
        dim_estimate: ls_slope(&logs, &rates),
        rates,
    })
}

/// Uniform pmf on `k` grid points of `[0, 1]` with absolute-difference
/// distortion.
pub fn uniform_grid_source(k: usize) -> (Pmf, Distortion) {
    let pts: Vec<f64> = (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect();
    (Pmf::uniform(k), Distortion::absolute(&pts))
}

/// Entropy cap check helper: `R <= H(X)`.
pub fn lossless_cap(source: &Pmf) -> f64 {
    entropy(source.probs())
}
