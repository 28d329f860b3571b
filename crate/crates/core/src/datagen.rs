//! Synthetic sparse linear scenarios.
//!
//! Rows are drawn i.i.d. from `N_p(mu_x * 1, I_p)`. A support of `s0` indices is
//! drawn without replacement and the coefficients on it from `N(mu_beta, 1)`.
//! Regression noise is scaled so that the empirical variance of `X beta` over
//! the noise variance equals the requested SNR exactly. Classification labels
//! are Bernoulli draws of the logistic function of the centered linear
//! predictor.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{mean, sample_variance, Dataset, Task};
use crate::error::{Error, Result};
use crate::rng::RandomSource;

fn default_partitions() -> usize {
    10
}

fn default_snr() -> f64 {
    1.0
}

/// One row of a scenario table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub p: usize,
    pub n_train: usize,
    pub n_sub: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub s0: usize,
    #[serde(default = "default_snr")]
    pub snr: f64,
    pub mu_beta: f64,
    pub mu_x: f64,
    /// Subsamples per stability selection run.
    #[serde(rename = "B", alias = "b")]
    pub b: usize,
    /// Independent repetitions of the scenario.
    #[serde(rename = "V", alias = "v")]
    pub v: usize,
    #[serde(default)]
    pub task: Task,
    #[serde(default = "default_partitions")]
    pub n_partitions: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn n_total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("p", self.p),
            ("n_train", self.n_train),
            ("n_sub", self.n_sub),
            ("n_val", self.n_val),
            ("n_test", self.n_test),
            ("B", self.b),
            ("V", self.v),
            ("n_partitions", self.n_partitions),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.n_sub >= self.n_train {
            return Err(Error::Config(format!(
                "n_sub ({}) must be smaller than n_train ({})",
                self.n_sub, self.n_train
            )));
        }
        if self.s0 > self.p {
            return Err(Error::Config(format!("s0 ({}) exceeds p ({})", self.s0, self.p)));
        }
        if self.task == Task::Regression && !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::Config(format!("snr must be positive, got {}", self.snr)));
        }
        if !self.mu_beta.is_finite() || !self.mu_x.is_finite() {
            return Err(Error::Config("mu_beta and mu_x must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Sorted, 0-based.
    pub support: Vec<usize>,
    pub beta: DVector<f64>,
    /// Zero for classification.
    pub sigma_noise: f64,
}

/// Train/validation/test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Partition {
    /// Training and validation rows together, sorted.
    pub fn train_val(&self) -> Vec<usize> {
        let mut all = [self.train.as_slice(), self.val.as_slice()].concat();
        all.sort_unstable();
        all
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    pub truth: GroundTruth,
    /// `1 / NSR`, classification only.
    pub inverse_nsr: Option<f64>,
}

pub fn generate(cfg: &ScenarioConfig, rng: &mut RandomSource) -> Result<Generated> {
    match cfg.task {
        Task::Regression => {
            let (data, truth) = generate_regression(cfg, rng)?;
            Ok(Generated { data, truth, inverse_nsr: None })
        }
        Task::Classification => {
            let (data, truth, inv) = generate_classification(cfg, rng)?;
            Ok(Generated { data, truth, inverse_nsr: Some(inv) })
        }
    }
}

fn design_and_coefficients(cfg: &ScenarioConfig, rng: &mut RandomSource) -> (DMatrix<f64>, Vec<usize>, DVector<f64>) {
    let n = cfg.n_total();
    let mut x = DMatrix::zeros(n, cfg.p);
    for i in 0..n {
        for j in 0..cfg.p {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = cfg.mu_x + z;
        }
    }
    let mut support = index::sample(rng, cfg.p, cfg.s0).into_vec();
    support.sort_unstable();
    let mut beta = DVector::zeros(cfg.p);
    for &j in &support {
        let z: f64 = rng.sample(StandardNormal);
        beta[j] = cfg.mu_beta + z;
    }
    (x, support, beta)
}

/// Noise standard deviation giving `var(signal) / sigma^2 = snr`, with the
/// sample variance of the realized signal.
pub fn noise_scale_for_snr(signal: &[f64], snr: f64) -> Result<f64> {
    let var = sample_variance(signal);
    if !(var > 0.0) {
        return Err(Error::ZeroSignalVariance);
    }
    Ok((var / snr).sqrt())
}

pub fn generate_regression(cfg: &ScenarioConfig, rng: &mut RandomSource) -> Result<(Dataset, GroundTruth)> {
    if cfg.task != Task::Regression {
        return Err(Error::Config("generate_regression needs task = regression".into()));
    }
    cfg.validate()?;
    let (x, support, beta) = design_and_coefficients(cfg, rng);
    let signal = &x * &beta;
    let sigma = noise_scale_for_snr(signal.as_slice(), cfg.snr)?;
    let y = DVector::from_fn(signal.len(), |i, _| {
        let e: f64 = rng.sample(StandardNormal);
        signal[i] + sigma * e
    });
    let data = Dataset::new(x, y, Task::Regression)?;
    Ok((data, GroundTruth { support, beta, sigma_noise: sigma }))
}

/// Returns the dataset, the truth and the realized inverse noise-to-signal
/// ratio `var(X beta) / var(Y)`.
pub fn generate_classification(
    cfg: &ScenarioConfig,
    rng: &mut RandomSource,
) -> Result<(Dataset, GroundTruth, f64)> {
    if cfg.task != Task::Classification {
        return Err(Error::Config("generate_classification needs task = classification".into()));
    }
    cfg.validate()?;
    let (x, support, beta) = design_and_coefficients(cfg, rng);
    let signal = &x * &beta;
    let signal_var = sample_variance(signal.as_slice());
    if !(signal_var > 0.0) {
        return Err(Error::ZeroSignalVariance);
    }
    let centered = centered_predictor(signal.as_slice());
    let y = DVector::from_fn(centered.len(), |i, _| {
        let eta = sigmoid(centered[i]);
        let u: f64 = rng.random();
        if u < eta {
            1.0
        } else {
            0.0
        }
    });
    let label_var = sample_variance(y.as_slice());
    let inverse_nsr = signal_var / label_var;
    let data = Dataset::new(x, y, Task::Classification)?;
    Ok((data, GroundTruth { support, beta, sigma_noise: 0.0 }, inverse_nsr))
}

pub fn centered_predictor(signal: &[f64]) -> Vec<f64> {
    let m = mean(signal.iter().copied());
    signal.iter().map(|s| s - m).collect()
}

pub(crate) fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// `cfg.n_partitions` independent uniformly random splits of `0..n`.
pub fn make_partitions(n: usize, cfg: &ScenarioConfig, rng: &mut RandomSource) -> Result<Vec<Partition>> {
    if n != cfg.n_total() {
        return Err(Error::SizeMismatch(format!(
            "{n} rows but n_train + n_val + n_test = {}",
            cfg.n_total()
        )));
    }
    Ok((0..cfg.n_partitions)
        .map(|_| split(n, cfg.n_train, cfg.n_val, rng))
        .collect())
}

pub(crate) fn split(n: usize, n_train: usize, n_val: usize, rng: &mut RandomSource) -> Partition {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Partition {
        train: sorted(&perm[..n_train]),
        val: sorted(&perm[n_train..n_train + n_val]),
        test: sorted(&perm[n_train + n_val..]),
    }
}

/// Uniform draw of `n_sub` members of `train` without replacement, sorted.
pub fn draw_subsample(train: &[usize], n_sub: usize, rng: &mut RandomSource) -> Result<Vec<usize>> {
    if n_sub > train.len() {
        return Err(Error::SubsampleTooLarge { n_sub, available: train.len() });
    }
    let mut out: Vec<usize> = index::sample(rng, train.len(), n_sub)
        .into_iter()
        .map(|k| train[k])
        .collect();
    out.sort_unstable();
    Ok(out)
}
