//! Finite learning problems with exact risks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::info::{Channel, Joint, Pmf};
use crate::matrix::Matrix;

/// Default cap on the number of enumerated ordered datasets.
pub const ENUMERATION_CAP: u128 = 1 << 22;

/// Data alphabet `Z`, hypothesis alphabet `W`, loss table `loss[z][w]` and
/// data law `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteLearningProblem {
    loss: Matrix,
    mu: Pmf,
    bound: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    z_alphabet: usize,
    w_alphabet: usize,
    loss: Vec<Vec<f64>>,
    mu: Vec<f64>,
    #[serde(default, rename = "B")]
    bound: Option<f64>,
}

impl FiniteLearningProblem {
    pub fn new(loss: Matrix, mu: Pmf) -> Result<Self> {
        if loss.rows() != mu.len() {
            return Err(Error::AlphabetMismatch {
                expected: loss.rows(),
                found: mu.len(),
            });
        }
        if loss.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(invalid("loss", "entries must be finite"));
        }
        Ok(Self {
            loss,
            mu,
            bound: None,
        })
    }

    /// Declares the loss bounded in `[0, b]` and checks it.
    pub fn with_bound(mut self, b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid("B", format!("{b} is not a positive bound")));
        }
        if let Some(v) = self
            .loss
            .as_slice()
            .iter()
            .find(|v| **v < 0.0 || **v > b)
        {
            return Err(invalid("loss", format!("entry {v} is outside [0, {b}]")));
        }
        self.bound = Some(b);
        Ok(self)
    }

    /// Parses the JSON problem format
    /// `{"z_alphabet", "w_alphabet", "loss", "mu", "B"?}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ProblemFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let loss = Matrix::from_rows(file.loss)?;
        loss.expect_shape(file.z_alphabet, file.w_alphabet, "loss")?;
        let p = Self::new(loss, Pmf::new(file.mu)?)?;
        match file.bound {
            Some(b) => p.with_bound(b),
            None => Ok(p),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "z_alphabet": self.z_size(),
            "w_alphabet": self.w_size(),
            "loss": self.loss.to_rows(),
            "mu": self.mu.probs(),
        });
        if let Some(b) = self.bound {
            v["B"] = serde_json::json!(b);
        }
        v
    }

    #[inline]
    pub fn z_size(&self) -> usize {
        self.loss.rows()
    }

    #[inline]
    pub fn w_size(&self) -> usize {
        self.loss.cols()
    }

    #[inline]
    pub fn loss(&self, z: usize, w: usize) -> f64 {
        self.loss.get(z, w)
    }

    pub fn loss_table(&self) -> &Matrix {
        &self.loss
    }

    pub fn mu(&self) -> &Pmf {
        &self.mu
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    /// Hoeffding scale `B/2` for a loss bounded in `[0, B]`.
    pub fn subgaussian_sigma(&self) -> Option<f64> {
        self.bound.map(|b| b / 2.0)
    }

    fn check_w(&self, w: usize) -> Result<()> {
        if w >= self.w_size() {
            return Err(Error::IndexOutOfRange {
                index: w,
                size: self.w_size(),
            });
        }
        Ok(())
    }

    fn check_dataset(&self, s: &Dataset) -> Result<()> {
        if let Some(&z) = s.samples.iter().find(|&&z| z >= self.z_size()) {
            return Err(Error::IndexOutOfRange {
                index: z,
                size: self.z_size(),
            });
        }
        Ok(())
    }

    /// `sum_z mu(z) loss(z, w)`.
    pub fn population_risk(&self, w: usize) -> Result<f64> {
        self.check_w(w)?;
        Ok((0..self.z_size())
            .map(|z| self.mu.get(z) * self.loss(z, w))
            .sum())
    }

    pub fn population_risks(&self) -> Vec<f64> {
        (0..self.w_size())
            .map(|w| self.population_risk(w).expect("index in range"))
            .collect()
    }

    pub fn empirical_risk(&self, s: &Dataset, w: usize) -> Result<f64> {
        self.check_w(w)?;
        self.check_dataset(s)?;
        Ok(s.samples.iter().map(|&z| self.loss(z, w)).sum::<f64>() / s.len() as f64)
    }

    /// Population risk minus empirical risk.
    pub fn gen_error(&self, s: &Dataset, w: usize) -> Result<f64> {
        Ok(self.population_risk(w)? - self.empirical_risk(s, w)?)
    }

    /// `gen_error(s, w)` for every hypothesis.
    pub fn gen_errors(&self, s: &Dataset) -> Result<Vec<f64>> {
        self.check_dataset(s)?;
        let counts = s.counts(self.z_size());
        let n = s.len() as f64;
        Ok((0..self.w_size())
            .map(|w| {
                (0..self.z_size())
                    .map(|z| (self.mu.get(z) - counts[z] as f64 / n) * self.loss(z, w))
                    .sum()
            })
            .collect())
    }

    /// Posterior proportional to `prior(w) exp(-beta n L_hat(s, w))`.
    pub fn gibbs_posterior(&self, prior: &Pmf, beta: f64, s: &Dataset) -> Result<Pmf> {
        if prior.len() != self.w_size() {
            return Err(Error::AlphabetMismatch {
                expected: self.w_size(),
                found: prior.len(),
            });
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(invalid("beta", format!("{beta} is not a finite non-negative temperature")));
        }
        self.check_dataset(s)?;
        let n = s.len() as f64;
        let logs: Vec<f64> = (0..self.w_size())
            .map(|w| {
                let p = prior.get(w);
                if p > 0.0 {
                    let l = self.empirical_risk(s, w).expect("validated");
                    p.ln() - beta * n * l
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        Pmf::from_log_weights(&logs)
    }

    /// `n` iid draws from `mu`, deterministic in `seed`.
    pub fn sample_dataset(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rng = crate::rng::from_seed(seed);
        self.sample_dataset_with(n, &mut rng)
    }

    pub fn sample_dataset_with<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        if n == 0 {
            return Err(invalid("n", "dataset size must be at least 1"));
        }
        Ok(Dataset {
            samples: (0..n).map(|_| self.mu.sample(rng)).collect(),
        })
    }

    /// All `|Z|^n` ordered datasets with their probabilities under `mu^n`.
    pub fn enumerate_datasets(&self, n: usize, cap: u128) -> Result<Vec<(Dataset, f64)>> {
        enumerate_datasets(&self.mu, n, cap)
    }

    /// Exact `P_{S,W}` over ordered datasets (rows, in [`Self::enumerate_datasets`]
    /// order) and hypotheses.
    pub fn induced_joint(&self, alg: &dyn Algorithm, n: usize) -> Result<InducedJoint> {
        self.induced_joint_capped(alg, n, ENUMERATION_CAP)
    }

    pub fn induced_joint_capped(
        &self,
        alg: &dyn Algorithm,
        n: usize,
        cap: u128,
    ) -> Result<InducedJoint> {
        let datasets = self.enumerate_datasets(n, cap)?;
        let k = self.w_size();
        let mut flat = Vec::with_capacity(datasets.len() * k);
        let mut rows = Vec::with_capacity(datasets.len());
        for (s, p) in &datasets {
            let post = alg.posterior(self, s)?;
            if post.len() != k {
                return Err(Error::AlphabetMismatch {
                    expected: k,
                    found: post.len(),
                });
            }
            flat.extend(post.probs().iter().map(|q| p * q));
            rows.push(post);
        }
        let joint = Joint::from_flat(datasets.len(), k, flat)?;
        let source = Pmf::new(datasets.iter().map(|(_, p)| *p).collect())?;
        let gen = Matrix::from_fn(datasets.len(), k, |i, w| {
            self.gen_errors(&datasets[i].0).expect("enumerated dataset")[w]
        });
        Ok(InducedJoint {
            datasets: datasets.into_iter().map(|(s, _)| s).collect(),
            source,
            posterior: Channel::from_pmfs(&rows)?,
            joint,
            gen,
        })
    }
}

/// All ordered datasets of size `n` over the support of `mu`'s alphabet, in
/// lexicographic order, with their probabilities under `mu^n`.
pub fn enumerate_datasets(mu: &Pmf, n: usize, cap: u128) -> Result<Vec<(Dataset, f64)>> {
    if n == 0 {
        return Err(invalid("n", "dataset size must be at least 1"));
    }
    let k = mu.len();
    let states = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if states > cap {
        return Err(Error::EnumerationCap { states, cap });
    }
    let mut out = Vec::with_capacity(states as usize);
    let mut idx = vec![0usize; n];
    loop {
        let p: f64 = idx.iter().map(|&z| mu.get(z)).product();
        out.push((
            Dataset {
                samples: idx.clone(),
            },
            p,
        ));
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < k {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Exactly enumerated `P_{S,W}` with the generalization-error table.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedJoint {
    pub datasets: Vec<Dataset>,
    /// `mu^n` over the enumerated datasets.
    pub source: Pmf,
    /// `P_{W|S}`.
    pub posterior: Channel,
    pub joint: Joint,
    /// `gen(s, w)` for each enumerated dataset `s`.
    pub gen: Matrix,
}

impl InducedJoint {
    /// Exact `E[gen(S, W)]`.
    pub fn expected_gen(&self) -> f64 {
        self.joint.expect(&self.gen)
    }
}

/// Ordered training sample of data-alphabet indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dataset {
    samples: Vec<usize>,
}

impl Dataset {
    pub fn new(samples: Vec<usize>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Occurrence count of each symbol.
    pub fn counts(&self, z_size: usize) -> Vec<usize> {
        let mut c = vec![0; z_size];
        for &z in &self.samples {
            c[z] += 1;
        }
        c
    }
}

/// Learning algorithm given by its posterior `P_{W|S=s}`.
pub trait Algorithm: Sync {
    fn posterior(&self, prob: &FiniteLearningProblem, s: &Dataset) -> Result<Pmf>;
}

/// Gibbs posterior with a fixed prior and inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct Gibbs {
    pub prior: Pmf,
    pub beta: f64,
}

impl Algorithm for Gibbs {
    fn posterior(&self, prob: &FiniteLearningProblem, s: &Dataset) -> Result<Pmf> {
        prob.gibbs_posterior(&self.prior, self.beta, s)
    }
}

/// Data-independent output law.
#[derive(Debug, Clone, PartialEq)]
pub struct Constant(pub Pmf);

impl Algorithm for Constant {
    fn posterior(&self, _: &FiniteLearningProblem, _: &Dataset) -> Result<Pmf> {
        Ok(self.0.clone())
    }
}

/// Deterministic empirical risk minimizer (lowest index on ties).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Erm;

impl Algorithm for Erm {
    fn posterior(&self, prob: &FiniteLearningProblem, s: &Dataset) -> Result<Pmf> {
        let mut best = 0;
        let mut best_risk = f64::INFINITY;
        for w in 0..prob.w_size() {
            let r = prob.empirical_risk(s, w)?;
            if r < best_risk {
                best_risk = r;
                best = w;
            }
        }
        Ok(Pmf::point_mass(prob.w_size(), best))
    }
}

/// Outputs the first training sample as the hypothesis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FirstSample;

impl Algorithm for FirstSample {
    fn posterior(&self, prob: &FiniteLearningProblem, s: &Dataset) -> Result<Pmf> {
        let z = s.samples()[0];
        if z >= prob.w_size() {
            return Err(Error::IndexOutOfRange {
                index: z,
                size: prob.w_size(),
            });
        }
        Ok(Pmf::point_mass(prob.w_size(), z))
    }
}

/// The 4-symbol, 4-hypothesis instance used by the tail validation: loss in
/// `[0, 1]`, non-uniform data law.
pub fn gibbs_4x4() -> FiniteLearningProblem {
    let loss = Matrix::from_rows(vec![
        vec![0.0, 1.0, 0.6, 0.3],
        vec![1.0, 0.0, 0.4, 0.7],
        vec![0.2, 0.9, 0.0, 0.5],
        vec![0.8, 0.1, 1.0, 0.0],
    ])
    .expect("static table");
    let mu = Pmf::new(vec![0.4, 0.3, 0.2, 0.1]).expect("static pmf");
    FiniteLearningProblem::new(loss, mu)
        .and_then(|p| p.with_bound(1.0))
        .expect("static problem")
}

/// Two-symbol, two-hypothesis instance with 0-1 loss and a biased data law.
pub fn gibbs_2x2() -> FiniteLearningProblem {
    let loss = Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).expect("static table");
    let mu = Pmf::new(vec![0.7, 0.3]).expect("static pmf");
    FiniteLearningProblem::new(loss, mu)
        .and_then(|p| p.with_bound(1.0))
        .expect("static problem")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_problem(seed: u64, z: usize, w: usize) -> FiniteLearningProblem {
        let mut rng = crate::rng::from_seed(seed);
        let vals: Vec<f64> = (0..z * w).map(|_| rng.random::<f64>()).collect();
        let loss = Matrix::from_flat(z, w, vals).unwrap();
        let mut rng = crate::rng::from_seed(seed + 1);
        let mu = Pmf::from_weights((0..z).map(|_| rng.random::<f64>() + 0.05).collect()).unwrap();
        FiniteLearningProblem::new(loss, mu).unwrap()
    }

    #[test]
    fn population_risk_examples() {
        let zero = FiniteLearningProblem::new(Matrix::filled(2, 3, 0.0), Pmf::uniform(2)).unwrap();
        assert_eq!(zero.population_risk(1).unwrap(), 0.0);
        let lz = FiniteLearningProblem::new(
            Matrix::from_fn(2, 3, |z, _| z as f64),
            Pmf::uniform(2),
        )
        .unwrap();
        for w in 0..3 {
            assert_eq!(lz.population_risk(w).unwrap(), 0.5);
        }
        assert!(lz.population_risk(3).is_err());
        let p = random_problem(3, 4, 3);
        for w in 0..3 {
            let mut brute = 0.0;
            for z in 0..4 {
                brute += p.mu().probs()[z] * p.loss_table().get(z, w);
            }
            assert!((p.population_risk(w).unwrap() - brute).abs() <= 1e-12);
        }
    }

    #[test]
    fn gen_error_examples() {
        let p = FiniteLearningProblem::new(
            Matrix::from_rows(vec![vec![0.1, 0.9], vec![0.7, 0.2]]).unwrap(),
            Pmf::uniform(2),
        )
        .unwrap();
        let s = Dataset::new(vec![0, 1, 1, 0]).unwrap();
        for w in 0..2 {
            assert!(p.gen_error(&s, w).unwrap().abs() < 1e-15);
        }
        let p = random_problem(9, 4, 3);
        let s = p.sample_dataset(7, 5).unwrap();
        let gens = p.gen_errors(&s).unwrap();
        for w in 0..3 {
            let pop: f64 = (0..4).map(|z| p.mu().get(z) * p.loss(z, w)).sum();
            let emp: f64 = s.samples().iter().map(|&z| p.loss(z, w)).sum::<f64>() / 7.0;
            assert!((p.gen_error(&s, w).unwrap() - (pop - emp)).abs() <= 1e-12);
            assert!((gens[w] - (pop - emp)).abs() <= 1e-12);
        }
    }

    #[test]
    fn gibbs_examples() {
        let p = gibbs_4x4();
        let prior = Pmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = Dataset::new(vec![0, 0, 2]).unwrap();
        let flat = p.gibbs_posterior(&prior, 0.0, &s).unwrap();
        assert!(flat.total_variation(&prior) <= 1e-15);
        let sharp = p.gibbs_posterior(&prior, 1e4, &s).unwrap();
        assert!(sharp.get(0) > 1.0 - 1e-12);

        let two = FiniteLearningProblem::new(
            Matrix::from_rows(vec![vec![0.2, 0.6], vec![0.8, 0.1]]).unwrap(),
            Pmf::uniform(2),
        )
        .unwrap();
        let s = Dataset::new(vec![0, 1]).unwrap();
        let prior = Pmf::new(vec![0.3, 0.7]).unwrap();
        let post = two.gibbs_posterior(&prior, 1.0, &s).unwrap();
        let a = 0.3 * (-(0.2f64 + 0.8)).exp();
        let b = 0.7 * (-(0.6f64 + 0.1)).exp();
        assert!((post.get(0) - a / (a + b)).abs() <= 1e-12);
        assert!(p
            .gibbs_posterior(&Pmf::uniform(3), 1.0, &Dataset::new(vec![0]).unwrap())
            .is_err());
    }

    #[test]
    fn sample_dataset_examples() {
        let p = FiniteLearningProblem::new(Matrix::filled(3, 1, 0.0), Pmf::point_mass(3, 2)).unwrap();
        assert!(p.sample_dataset(20, 1).unwrap().samples().iter().all(|&z| z == 2));
        let q = random_problem(4, 3, 2);
        assert_eq!(q.sample_dataset(50, 77).unwrap(), q.sample_dataset(50, 77).unwrap());
        assert!(q.sample_dataset(0, 1).is_err());
        let b = FiniteLearningProblem::new(Matrix::filled(2, 1, 0.0), Pmf::new(vec![0.3, 0.7]).unwrap())
            .unwrap();
        let s = b.sample_dataset(100_000, 11).unwrap();
        let f = s.counts(2)[0] as f64 / 1e5;
        assert!((f - 0.3).abs() < 0.01, "{f}");
    }

    #[test]
    fn induced_joint_examples() {
        let mu = Pmf::new(vec![0.2, 0.5, 0.3]).unwrap();
        let p = FiniteLearningProblem::new(Matrix::filled(3, 3, 0.5), mu.clone()).unwrap();
        let j = p.induced_joint(&FirstSample, 1).unwrap();
        assert_eq!(j.joint, Joint::diagonal(&mu));
        let j = p.induced_joint(&Erm, 2).unwrap();
        for i in 0..j.posterior.inputs() {
            assert_eq!(j.posterior.row(i).iter().filter(|v| **v > 0.0).count(), 1);
        }
        let big = random_problem(1, 4, 2);
        assert!(matches!(
            big.induced_joint(&Erm, 12),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn constant_algorithm_is_unbiased() {
        let p = random_problem(21, 3, 4);
        let alg = Constant(Pmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap());
        let j = p.induced_joint(&alg, 4).unwrap();
        assert!(j.expected_gen().abs() <= 1e-12);
    }

    #[test]
    fn problem_json() {
        let text = r#"{"z_alphabet":2,"w_alphabet":2,"loss":[[0,1],[1,0]],"mu":[0.5,0.5],"B":1}"#;
        let p = FiniteLearningProblem::from_json(text).unwrap();
        assert_eq!(p.subgaussian_sigma(), Some(0.5));
        let back = FiniteLearningProblem::from_json(&p.to_json_value().to_string()).unwrap();
        assert_eq!(back, p);
        let err = FiniteLearningProblem::from_json(r#"{"z_alphabet":2,"w_alphabet":2,"loss":[[0,1],[1,0]],"mu":[0.5,0.5],"extra":1}"#);
        assert!(matches!(err, Err(Error::Config { .. })));
        let err = FiniteLearningProblem::from_json(r#"{"z_alphabet":2,"w_alphabet":2,"loss":[[0,1],[1,0]],"mu":[0.5,"x"]}"#)
            .unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path.starts_with("mu")), "{err}");
        let bad = r#"{"z_alphabet":2,"w_alphabet":2,"loss":[[0,2],[1,0]],"mu":[0.5,0.5],"B":1}"#;
        assert!(FiniteLearningProblem::from_json(bad).is_err());
    }
}
