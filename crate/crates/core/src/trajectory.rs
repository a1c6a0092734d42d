//! Quantized optimization trajectories on small parametric problems.
//!
//! Iterates live in `R^dim`, are rounded onto a uniform grid, and the
//! trajectory over the window `[t1, t2)` is summarized by its per-iterate
//! state distribution for rate-distortion purposes.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{trajectory_data_bound, trajectory_sup_bound, BoundReport};
use crate::error::{invalid, Error, Result};
use crate::info::{gdelta_sup, kl_slices, BallSearchConfig, Channel, Joint, Pmf};
use crate::learning::{enumerate_datasets, Dataset, ENUMERATION_CAP};
use crate::matrix::Matrix;
use crate::rd::{rd_curve_grid, rd_gen, rd_trajectory, Distortion};
use crate::rng::{derive_seed, stream};

/// Pointwise loss family. Both map into `[0, 1]` on the grid box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `1 / (1 + exp(y <w, x>))`.
    Logistic,
    /// `||w - x||^2 / (4 dim range^2)`.
    Quadratic,
}

/// Problem, optimizer and quantizer for trajectory experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Feature vector of each data symbol.
    pub features: Vec<Vec<f64>>,
    /// Label in `{-1, +1}` of each data symbol (ignored by the quadratic loss).
    #[serde(default)]
    pub labels: Vec<f64>,
    /// Data law over symbols.
    pub mu: Vec<f64>,
    pub loss: LossKind,
    /// Training-set size.
    pub n: usize,
    pub steps: usize,
    /// Minibatch size; `batch >= n` means full-batch gradient descent.
    pub batch: usize,
    pub init: Vec<f64>,
    /// L2 penalty added to the optimizer's gradient only; the reported loss
    /// and generalization error are unpenalized.
    #[serde(default)]
    pub weight_decay: f64,
    /// Grid points per coordinate.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// The grid covers `[-range, range]` per coordinate.
    pub range: f64,
    /// `[t1, t2)` over iterate indices; defaults to the last half of training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[usize; 2]>,
}

fn default_bins() -> usize {
    8
}

impl TrajectorySpec {
    /// Two-dimensional non-separable logistic toy problem.
    pub fn toy_logistic() -> Self {
        Self {
            features: vec![
                vec![1.0, 0.2],
                vec![0.8, -0.6],
                vec![-0.5, 1.0],
                vec![-1.0, -0.3],
                vec![0.3, 0.9],
                vec![0.9, 0.1],
            ],
            labels: vec![1.0, 1.0, -1.0, -1.0, 1.0, -1.0],
            mu: vec![0.25, 0.15, 0.2, 0.2, 0.1, 0.1],
            loss: LossKind::Logistic,
            n: 20,
            steps: 200,
            batch: 4,
            init: vec![0.0, 0.0],
            weight_decay: 0.1,
            bins: 33,
            range: 4.0,
            window: None,
        }
    }

    /// Learning rates used by the default sweep.
    pub fn toy_lr_grid() -> Vec<f64> {
        vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 || self.features.is_empty() {
            return Err(Error::Empty("features"));
        }
        if self.features.iter().any(|f| f.len() != dim) {
            return Err(Error::ShapeMismatch("features must share one dimension".into()));
        }
        if self.mu.len() != self.features.len() {
            return Err(Error::AlphabetMismatch {
                expected: self.features.len(),
                found: self.mu.len(),
            });
        }
        Pmf::new(self.mu.clone())?;
        if self.loss == LossKind::Logistic && self.labels.len() != self.features.len() {
            return Err(Error::AlphabetMismatch {
                expected: self.features.len(),
                found: self.labels.len(),
            });
        }
        if self.init.len() != dim {
            return Err(Error::AlphabetMismatch {
                expected: dim,
                found: self.init.len(),
            });
        }
        if self.n == 0 || self.batch == 0 {
            return Err(invalid("n/batch", "must be at least 1"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(invalid("weight_decay", "must be finite and non-negative"));
        }
        if self.steps < 2 {
            return Err(invalid("steps", "need at least 2 steps"));
        }
        if self.bins < 2 {
            return Err(invalid("bins", "need at least 2 grid points"));
        }
        if !(self.range > 0.0) || !self.range.is_finite() {
            return Err(invalid("range", "must be positive and finite"));
        }
        if self.loss == LossKind::Quadratic
            && self.features.iter().flatten().any(|x| x.abs() > self.range)
        {
            return Err(invalid("features", "quadratic targets must lie inside the grid box"));
        }
        let [t1, t2] = self.window();
        if t2 <= t1 || t2 > self.steps + 1 {
            return Err(invalid("window", format!("[{t1}, {t2}) is not inside 0..={}", self.steps)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.init.len()
    }

    pub fn z_size(&self) -> usize {
        self.features.len()
    }

    pub fn mu_pmf(&self) -> Pmf {
        Pmf::new(self.mu.clone()).expect("validated")
    }

    /// Window `[t1, t2)` over iterate indices `0..=steps`.
    pub fn window(&self) -> [usize; 2] {
        self.window.unwrap_or([self.steps / 2, self.steps + 1])
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn quad_scale(&self) -> f64 {
        4.0 * self.dim() as f64 * self.range * self.range
    }

    /// `loss(z, w)`.
    pub fn loss(&self, z: usize, w: &[f64]) -> f64 {
        let x = &self.features[z];
        match self.loss {
            LossKind::Logistic => {
                let m = self.labels[z] * Self::dot(w, x);
                1.0 / (1.0 + m.exp())
            }
            LossKind::Quadratic => {
                x.iter().zip(w).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / self.quad_scale()
            }
        }
    }

    fn add_grad(&self, z: usize, w: &[f64], scale: f64, out: &mut [f64]) {
        let x = &self.features[z];
        match self.loss {
            LossKind::Logistic => {
                let y = self.labels[z];
                let s = 1.0 / (1.0 + (y * Self::dot(w, x)).exp());
                let c = -s * (1.0 - s) * y * scale;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += c * xi;
                }
            }
            LossKind::Quadratic => {
                let c = 2.0 * scale / self.quad_scale();
                for ((o, wi), xi) in out.iter_mut().zip(w).zip(x) {
                    *o += c * (wi - xi);
                }
            }
        }
    }

    /// Lipschitz constant of the loss in `w` with respect to Euclidean distance
    /// on the grid box.
    pub fn lipschitz(&self) -> f64 {
        match self.loss {
            LossKind::Logistic => {
                self.features
                    .iter()
                    .map(|x| Self::dot(x, x).sqrt())
                    .fold(0.0, f64::max)
                    / 4.0
            }
            LossKind::Quadratic => 1.0 / (self.range * (self.dim() as f64).sqrt()),
        }
    }

    pub fn population_risk(&self, w: &[f64]) -> f64 {
        self.mu
            .iter()
            .enumerate()
            .map(|(z, p)| p * self.loss(z, w))
            .sum()
    }

    pub fn empirical_risk(&self, s: &Dataset, w: &[f64]) -> f64 {
        s.samples().iter().map(|&z| self.loss(z, w)).sum::<f64>() / s.len() as f64
    }

    pub fn gen_error(&self, s: &Dataset, w: &[f64]) -> f64 {
        self.population_risk(w) - self.empirical_risk(s, w)
    }

    /// Grid coordinate values.
    pub fn grid_values(&self) -> Vec<f64> {
        let step = 2.0 * self.range / (self.bins - 1) as f64;
        (0..self.bins).map(|i| -self.range + step * i as f64).collect()
    }

    /// Largest Euclidean distance between grid points.
    pub fn distortion_range(&self) -> f64 {
        2.0 * self.range * (self.dim() as f64).sqrt()
    }

    fn quantize(&self, w: &[f64], step: usize) -> Result<Vec<usize>> {
        let width = 2.0 * self.range / (self.bins - 1) as f64;
        w.iter()
            .enumerate()
            .map(|(c, &v)| {
                if !v.is_finite() || v.abs() > self.range + 0.5 * width {
                    return Err(Error::TrajectoryOverflow {
                        step,
                        coordinate: c,
                        value: v,
                    });
                }
                let i = ((v + self.range) / width).round();
                Ok((i.max(0.0) as usize).min(self.bins - 1))
            })
            .collect()
    }

    /// Flat grid index of per-coordinate bin indices.
    fn flat_index(&self, bins: &[usize]) -> usize {
        bins.iter().fold(0, |acc, &b| acc * self.bins + b)
    }
}

/// Quantized iterates `w^0, ..., w^steps` with the analysis window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryProcess {
    pub t1: usize,
    pub t2: usize,
    /// Quantized iterate values, one per step including the initialization.
    pub states: Vec<Vec<f64>>,
    /// Flat grid index of each state.
    pub cells: Vec<usize>,
}

impl TrajectoryProcess {
    pub fn window_len(&self) -> usize {
        self.t2 - self.t1
    }

    pub fn window_states(&self) -> &[Vec<f64>] {
        &self.states[self.t1..self.t2]
    }

    pub fn window_cells(&self) -> &[usize] {
        &self.cells[self.t1..self.t2]
    }
}

/// Runs (minibatch) gradient descent on `s` and quantizes every iterate.
///
/// Gradients are taken at the unquantized iterate; only the record is
/// quantized. Minibatches are drawn with replacement from `s` using `seed`.
pub fn simulate_trajectory(
    spec: &TrajectorySpec,
    s: &Dataset,
    lr: f64,
    seed: u64,
) -> Result<TrajectoryProcess> {
    spec.validate()?;
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(invalid("lr", format!("{lr} is not a finite non-negative step size")));
    }
    if let Some(&z) = s.samples().iter().find(|&&z| z >= spec.z_size()) {
        return Err(Error::IndexOutOfRange {
            index: z,
            size: spec.z_size(),
        });
    }
    let grid = spec.grid_values();
    let mut rng = crate::rng::from_seed(seed);
    let mut w = spec.init.clone();
    let mut states = Vec::with_capacity(spec.steps + 1);
    let mut cells = Vec::with_capacity(spec.steps + 1);
    let mut grad = vec![0.0; spec.dim()];
    let full = spec.batch >= s.len();
    for t in 0..=spec.steps {
        let q = spec.quantize(&w, t)?;
        cells.push(spec.flat_index(&q));
        states.push(q.iter().map(|&i| grid[i]).collect());
        if t == spec.steps {
            break;
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        if full {
            let scale = 1.0 / s.len() as f64;
            for &z in s.samples() {
                spec.add_grad(z, &w, scale, &mut grad);
            }
        } else {
            let scale = 1.0 / spec.batch as f64;
            for _ in 0..spec.batch {
                let z = s.samples()[rng.random_range(0..s.len())];
                spec.add_grad(z, &w, scale, &mut grad);
            }
        }
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= lr * (gi + spec.weight_decay * *wi);
        }
    }
    let [t1, t2] = spec.window();
    Ok(TrajectoryProcess {
        t1,
        t2,
        states,
        cells,
    })
}

/// Average generalization error over the window.
pub fn gen_trajectory(spec: &TrajectorySpec, s: &Dataset, traj: &TrajectoryProcess) -> f64 {
    traj.window_states()
        .iter()
        .map(|w| spec.gen_error(s, w))
        .sum::<f64>()
        / traj.window_len() as f64
}

/// Per-iterate state law over the window of one or more trajectories, as a
/// pmf over the distinct grid cells visited, with the cell coordinates.
pub fn state_distribution(trajs: &[&TrajectoryProcess]) -> Result<(Pmf, Vec<Vec<f64>>)> {
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut points = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for traj in trajs {
        for (cell, state) in traj.window_cells().iter().zip(traj.window_states()) {
            let k = *index.entry(*cell).or_insert_with(|| {
                points.push(state.clone());
                counts.push(0.0);
                points.len() - 1
            });
            counts[k] += 1.0;
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("trajectory window"));
    }
    Ok((Pmf::from_weights(counts)?, points))
}

/// Euclidean distortion between grid points.
pub fn euclidean_distortion(points: &[Vec<f64>]) -> Distortion {
    let m = Matrix::from_fn(points.len(), points.len(), |i, j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    });
    Distortion::new(m).expect("non-empty point set")
}

/// Per-iterate rate-distortion of the window state law at `epsilon`.
pub fn trajectory_rd(trajs: &[&TrajectoryProcess], epsilon: f64) -> Result<f64> {
    let (source, points) = state_distribution(trajs)?;
    Ok(rd_trajectory(&source, &euclidean_distortion(&points), epsilon)?.rate_nats)
}

/// How a coupling estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMethod {
    PlugIn,
    TiltSup,
}

/// `log M` with its plug-in (`nu_S = P_S`) value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEstimate {
    pub log_m: f64,
    pub plug_in: f64,
    pub method: CouplingMethod,
}

/// Coupling coefficient at the realized dataset `s`:
/// `sup_{nu_S} KL(pi_s || sum_s' nu_S(s') pi_s')` over the KL ball around `p_s`.
pub fn estimate_m(
    pi_s: &Channel,
    p_s: &Pmf,
    s: usize,
    delta: f64,
    config: BallSearchConfig,
) -> Result<CouplingEstimate> {
    if p_s.len() != pi_s.inputs() {
        return Err(Error::AlphabetMismatch {
            expected: pi_s.inputs(),
            found: p_s.len(),
        });
    }
    if s >= pi_s.inputs() {
        return Err(Error::IndexOutOfRange {
            index: s,
            size: pi_s.inputs(),
        });
    }
    let row = pi_s.row(s);
    let objective = |nu: &[f64]| -> f64 {
        let mut mix = vec![0.0; pi_s.outputs()];
        for (k, &v) in nu.iter().enumerate() {
            if v > 0.0 {
                for (m, p) in mix.iter_mut().zip(pi_s.row(k)) {
                    *m += v * p;
                }
            }
        }
        kl_slices(row, &mix)
    };
    let found = gdelta_sup(p_s.probs(), delta, objective, config)?;
    Ok(CouplingEstimate {
        log_m: found.sup_estimate.max(0.0),
        plug_in: found.baseline.max(0.0),
        method: CouplingMethod::TiltSup,
    })
}

/// Spearman rank correlation (average ranks on ties); `None` when undefined.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Status of a sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFlag {
    Ok,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lr: f64,
    /// Mean window-averaged generalization error (exact population risk).
    pub mean_gen: f64,
    /// Mean per-trial trajectory RD at `epsilon`.
    pub rd_nats: f64,
    pub flag: SweepFlag,
    /// `R(eps)` of the pooled window state law on the sweep's epsilon grid.
    pub rd_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub epsilon: f64,
    pub eps_grid: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Spearman correlation of `mean_gen` and `rd_nats` over `Ok` rows.
    pub spearman: Option<f64>,
}

impl SweepTable {
    /// CSV with columns `lr, mean_gen, rd_nats, flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lr,mean_gen,rd_nats,flag\n");
        for r in &self.rows {
            let flag = match r.flag {
                SweepFlag::Ok => "ok",
                SweepFlag::Diverged => "diverged",
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                crate::report::fmt_f64(r.lr),
                crate::report::fmt_f64(r.mean_gen),
                crate::report::fmt_f64(r.rd_nats),
                flag
            ));
        }
        out
    }
}

fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
            best = best.max(d);
        }
    }
    best.sqrt()
}

/// Number of points on the sweep's RD-curve grid.
pub const SWEEP_CURVE_POINTS: usize = 8;

/// For each learning rate, trains on `trials` fresh datasets and records the
/// mean trajectory generalization error and trajectory RD.
///
/// Trial `t` uses the same dataset and minibatch stream for every learning
/// rate. The distortion span is the largest distance between window states
/// visited anywhere in the sweep; `epsilon` defaults to 10% of it and the RD
/// curves cover up to a fifth of it.
pub fn lr_sweep(
    spec: &TrajectorySpec,
    lr_grid: &[f64],
    trials: usize,
    epsilon: Option<f64>,
    seed: u64,
) -> Result<SweepTable> {
    spec.validate()?;
    if lr_grid.is_empty() {
        return Err(Error::Empty("learning-rate grid"));
    }
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let mu = spec.mu_pmf();
    let datasets: Vec<(Dataset, u64)> = (0..trials)
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let samples = (0..spec.n).map(|_| mu.sample(&mut rng)).collect();
            (Dataset::new(samples).expect("n >= 1"), rng.random())
        })
        .collect();

    let mut runs: Vec<Option<Vec<TrajectoryProcess>>> = Vec::with_capacity(lr_grid.len());
    for &lr in lr_grid {
        let out: Vec<Result<TrajectoryProcess>> = datasets
            .par_iter()
            .map(|(s, sgd_seed)| simulate_trajectory(spec, s, lr, *sgd_seed))
            .collect();
        if out.iter().any(|r| matches!(r, Err(Error::TrajectoryOverflow { .. }))) {
            runs.push(None);
        } else {
            runs.push(Some(out.into_iter().collect::<Result<_>>()?));
        }
    }
    let pooled: Vec<Option<(Pmf, Vec<Vec<f64>>)>> = runs
        .iter()
        .map(|r| {
            r.as_ref()
                .map(|trajs| state_distribution(&trajs.iter().collect::<Vec<_>>()))
                .transpose()
        })
        .collect::<Result<_>>()?;
    let span = pooled
        .iter()
        .flatten()
        .map(|(_, points)| diameter(points))
        .fold(0.0, f64::max);
    let epsilon = epsilon.unwrap_or(0.1 * span);
    let eps_grid: Vec<f64> = (1..=SWEEP_CURVE_POINTS)
        .map(|i| 0.2 * span * i as f64 / SWEEP_CURVE_POINTS as f64)
        .collect();

    let mut rows = Vec::with_capacity(lr_grid.len());
    for ((&lr, run), pool) in lr_grid.iter().zip(&runs).zip(&pooled) {
        let (Some(trajs), Some((source, points))) = (run, pool) else {
            rows.push(SweepRow {
                lr,
                mean_gen: f64::NAN,
                rd_nats: f64::NAN,
                flag: SweepFlag::Diverged,
                rd_curve: Vec::new(),
            });
            continue;
        };
        let stats: Vec<(f64, f64)> = trajs
            .par_iter()
            .zip(&datasets)
            .map(|(traj, (s, _))| -> Result<(f64, f64)> {
                Ok((gen_trajectory(spec, s, traj), trajectory_rd(&[traj], epsilon)?))
            })
            .collect::<Result<_>>()?;
        let t = trials as f64;
        let curve = rd_curve_grid(source, &euclidean_distortion(points), &eps_grid)?
            .into_iter()
            .map(|sol| sol.rate_nats)
            .collect();
        rows.push(SweepRow {
            lr,
            mean_gen: stats.iter().map(|s| s.0).sum::<f64>() / t,
            rd_nats: stats.iter().map(|s| s.1).sum::<f64>() / t,
            flag: SweepFlag::Ok,
            rd_curve: curve,
        });
    }
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.flag == SweepFlag::Ok).collect();
    let gens: Vec<f64> = ok.iter().map(|r| r.mean_gen).collect();
    let rds: Vec<f64> = ok.iter().map(|r| r.rd_nats).collect();
    Ok(SweepTable {
        epsilon,
        eps_grid,
        spearman: spearman(&gens, &rds),
        rows,
    })
}

/// Bounds for one dataset of an exactly enumerated full-batch problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryAnalysis {
    /// `E_{pi_s}[gen(s, W^T)]` at the analysed dataset.
    pub gen: f64,
    pub rd_sup: f64,
    pub rd_sup_baseline: f64,
    pub sup_bound: BoundReport,
    pub rd_s: f64,
    pub coupling: CouplingEstimate,
    pub data_bound: BoundReport,
}

/// Enumerates every dataset of size `spec.n`, runs full-batch gradient
/// descent on each (so `pi_s` is a point mass), and evaluates both trajectory
/// bounds at dataset `s_index`.
///
/// `epsilon_gen` is the distortion level of the generalization-gap RD and
/// `epsilon_rho` that of the per-iterate trajectory RD.
pub fn exact_analysis(
    spec: &TrajectorySpec,
    lr: f64,
    s_index: usize,
    epsilon_gen: f64,
    epsilon_rho: f64,
    delta: f64,
    config: BallSearchConfig,
) -> Result<TrajectoryAnalysis> {
    let full = TrajectorySpec {
        batch: spec.n,
        ..spec.clone()
    };
    let datasets = enumerate_datasets(&full.mu_pmf(), full.n, ENUMERATION_CAP)?;
    if s_index >= datasets.len() {
        return Err(Error::IndexOutOfRange {
            index: s_index,
            size: datasets.len(),
        });
    }
    let trajs: Vec<TrajectoryProcess> = datasets
        .par_iter()
        .map(|(s, _)| simulate_trajectory(&full, s, lr, 0))
        .collect::<Result<_>>()?;
    let mut ids: HashMap<&[usize], usize> = HashMap::new();
    let mut distinct: Vec<&TrajectoryProcess> = Vec::new();
    let assign: Vec<usize> = trajs
        .iter()
        .map(|t| {
            *ids.entry(t.window_cells()).or_insert_with(|| {
                distinct.push(t);
                distinct.len() - 1
            })
        })
        .collect();
    let rows = datasets.len();
    let cols = distinct.len();
    let p_s = Pmf::new(datasets.iter().map(|(_, p)| *p).collect())?;
    let pi = Channel::from_matrix(Matrix::from_fn(rows, cols, |i, k| {
        if assign[i] == k {
            1.0
        } else {
            0.0
        }
    }))?;
    let gen = Matrix::from_fn(rows, cols, |i, k| gen_trajectory(&full, &datasets[i].0, distinct[k]));

    let objective = |nu: &[f64]| -> f64 {
        let Ok(nu_s) = Pmf::new(nu.to_vec()) else {
            return f64::NEG_INFINITY;
        };
        let Ok(joint) = pi.joint(&nu_s) else {
            return f64::NEG_INFINITY;
        };
        match rd_gen(&joint, &gen, epsilon_gen) {
            Ok(sol) => sol.rate_nats,
            Err(Error::Infeasible { .. }) => f64::INFINITY,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let found = gdelta_sup(p_s.probs(), delta, objective, config)?;
    let n = full.n;
    let sup_bound = trajectory_sup_bound(found.sup_estimate, delta, n, epsilon_gen)?;
    let coupling = estimate_m(&pi, &p_s, s_index, delta, config)?;
    let rd_s = trajectory_rd(&[&trajs[s_index]], epsilon_rho)?;
    let data_bound =
        trajectory_data_bound(rd_s, coupling.log_m, full.lipschitz(), delta, n, epsilon_rho)?;
    Ok(TrajectoryAnalysis {
        gen: gen_trajectory(&full, &datasets[s_index].0, &trajs[s_index]),
        rd_sup: found.sup_estimate,
        rd_sup_baseline: found.baseline,
        sup_bound,
        rd_s,
        coupling,
        data_bound,
    })
}

/// Exact joint of datasets and window trajectories for full-batch descent.
pub fn exact_joint(spec: &TrajectorySpec, lr: f64) -> Result<(Joint, Matrix)> {
    let full = TrajectorySpec {
        batch: spec.n,
        ..spec.clone()
    };
    let datasets = enumerate_datasets(&full.mu_pmf(), full.n, ENUMERATION_CAP)?;
    let trajs: Vec<TrajectoryProcess> = datasets
        .par_iter()
        .map(|(s, _)| simulate_trajectory(&full, s, lr, 0))
        .collect::<Result<_>>()?;
    let mut ids: HashMap<&[usize], usize> = HashMap::new();
    let mut distinct: Vec<&TrajectoryProcess> = Vec::new();
    let assign: Vec<usize> = trajs
        .iter()
        .map(|t| {
            *ids.entry(t.window_cells()).or_insert_with(|| {
                distinct.push(t);
                distinct.len() - 1
            })
        })
        .collect();
    let (rows, cols) = (datasets.len(), distinct.len());
    let joint = Joint::from_matrix(Matrix::from_fn(rows, cols, |i, k| {
        if assign[i] == k {
            datasets[i].1
        } else {
            0.0
        }
    }))?;
    let gen = Matrix::from_fn(rows, cols, |i, k| gen_trajectory(&full, &datasets[i].0, distinct[k]));
    Ok((joint, gen))
}

/// Same stream for every learning rate at trial `t`.
pub fn trial_seed(root: u64, t: usize) -> u64 {
    derive_seed(root, t as u64)
}
