//! Componentwise linear functional gradient boosting.
//!
//! Each iteration evaluates the negative gradient of the loss at the current
//! fit, regresses it on every standardized predictor separately, keeps the
//! single predictor with the smallest residual sum of squares and moves the
//! fit by `kappa` times that simple regression. With squared loss this is
//! L2-Boosting, with binomial deviance on the log-odds scale it is LogitBoost.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{mean, Dataset};
use crate::datagen::sigmoid;
use crate::error::{Error, Result};

/// Log-odds offset used when every training label is identical.
pub const LOGIT_OFFSET_CLIP: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// `(y - f)^2`.
    Squared,
    /// Binomial deviance `log(1 + e^f) - y f` with `y` in {0, 1} and `f` the log-odds.
    Logistic,
}

impl Loss {
    pub fn for_task(task: crate::Task) -> Self {
        match task {
            crate::Task::Regression => Loss::Squared,
            crate::Task::Classification => Loss::Logistic,
        }
    }

    pub fn evaluate(self, y: f64, f: f64) -> f64 {
        match self {
            Loss::Squared => (y - f) * (y - f),
            Loss::Logistic => (softplus(f) - y * f).max(0.0),
        }
    }

    /// Negative gradient in `f`. For squared loss the conventional factor 2 is
    /// absorbed into the step size, so this is the plain residual `y - f`.
    pub fn negative_gradient(self, y: f64, f: f64) -> f64 {
        match self {
            Loss::Squared => y - f,
            Loss::Logistic => y - sigmoid(f),
        }
    }

    /// Constant minimizing the mean loss over `y`.
    pub fn offset(self, y: &[f64]) -> f64 {
        let m = mean(y.iter().copied());
        match self {
            Loss::Squared => m,
            Loss::Logistic => {
                if m <= 0.0 {
                    -LOGIT_OFFSET_CLIP
                } else if m >= 1.0 {
                    LOGIT_OFFSET_CLIP
                } else {
                    (m / (1.0 - m)).ln().clamp(-LOGIT_OFFSET_CLIP, LOGIT_OFFSET_CLIP)
                }
            }
        }
    }

    pub fn mean_loss(self, y: &[f64], f: &[f64]) -> f64 {
        mean(y.iter().zip(f).map(|(&yi, &fi)| self.evaluate(yi, fi)))
    }
}

fn softplus(f: f64) -> f64 {
    if f > 0.0 {
        f + (-f).exp().ln_1p()
    } else {
        f.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostConfig {
    pub m_iter: usize,
    pub kappa: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self { m_iter: 100, kappa: 0.1 }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_iter == 0 {
            return Err(Error::Config("m_iter must be at least 1".into()));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::Config(format!("kappa must lie in (0, 1], got {}", self.kappa)));
        }
        Ok(())
    }
}

/// One boosting iteration: the chosen column and the increment added to its
/// standardized-scale coefficient. `column` is `None` when no column can
/// reduce the residual sum of squares (zero gradient or no usable column).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostStep {
    pub column: Option<usize>,
    pub update: f64,
}

#[derive(Debug, Clone)]
pub struct BoostModel {
    pub offset: f64,
    /// Intercept on the original predictor scale.
    pub intercept: f64,
    /// Dense coefficients on the original predictor scale.
    pub coef: Vec<f64>,
    /// Columns that received at least one update, ascending.
    pub selected: Vec<usize>,
    pub center: Vec<f64>,
    /// Population standard deviation per column; 0 for constant columns.
    pub scale: Vec<f64>,
    pub trace: Vec<BoostStep>,
    /// Mean in-sample loss before the first and after every iteration.
    pub train_loss: Vec<f64>,
}

impl BoostModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut f = DVector::from_element(x.nrows(), self.intercept);
        for &j in &self.selected {
            f.axpy(self.coef[j], &x.column(j), 1.0);
        }
        f
    }
}

pub fn selected_set(model: &BoostModel) -> Vec<usize> {
    model.selected.clone()
}

struct Standardized {
    z: DMatrix<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
    sq_norm: Vec<f64>,
    usable: Vec<bool>,
}

fn standardize(x: &DMatrix<f64>) -> Standardized {
    let (n, p) = x.shape();
    let mut z = DMatrix::zeros(n, p);
    let mut center = vec![0.0; p];
    let mut scale = vec![0.0; p];
    let mut sq_norm = vec![0.0; p];
    let mut usable = vec![false; p];
    for j in 0..p {
        let col = x.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            center[j] = first;
            continue;
        }
        let m = mean(col.iter().copied());
        let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
        let s = (ss / n as f64).sqrt();
        if !(s > 0.0) {
            center[j] = m;
            continue;
        }
        let mut zz = 0.0;
        for i in 0..n {
            let v = (col[i] - m) / s;
            z[(i, j)] = v;
            zz += v * v;
        }
        center[j] = m;
        scale[j] = s;
        sq_norm[j] = zz;
        usable[j] = true;
    }
    Standardized { z, center, scale, sq_norm, usable }
}

pub fn fit_boost(data: &Dataset, loss: Loss, cfg: &BoostConfig) -> Result<BoostModel> {
    cfg.validate()?;
    let (n, p) = data.x.shape();
    if n < 2 || p == 0 {
        return Err(Error::Config(format!("boosting needs at least 2 rows and 1 column, got {n}x{p}")));
    }
    let y = data.y.as_slice();
    if loss == Loss::Logistic && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Config("logistic loss needs 0/1 responses".into()));
    }

    let st = standardize(&data.x);
    let offset = loss.offset(y);
    let mut f = vec![offset; n];
    let mut u = vec![0.0; n];
    let mut acc = vec![0.0; p];
    let mut touched = vec![false; p];
    let mut trace = Vec::with_capacity(cfg.m_iter);
    let mut train_loss = Vec::with_capacity(cfg.m_iter + 1);
    train_loss.push(loss.mean_loss(y, &f));

    let ybar = mean(y.iter().copied());
    let degenerate = loss == Loss::Logistic && (ybar <= 0.0 || ybar >= 1.0);

    if !degenerate {
        // A step removing less than eps times the initial squared gradient
        // norm cannot change the loss at this scale; such iterations are
        // recorded as no-ops rather than picking a column by rounding noise.
        let mut floor = 0.0;
        for k in 0..cfg.m_iter {
            for i in 0..n {
                u[i] = loss.negative_gradient(y[i], f[i]);
            }
            if k == 0 {
                floor = f64::EPSILON * u.iter().map(|v| v * v).sum::<f64>();
            }
            let step = best_column(&st, &u, floor);
            match step {
                Some((j, slope)) => {
                    let upd = cfg.kappa * slope;
                    let zj = st.z.column(j);
                    for i in 0..n {
                        f[i] += upd * zj[i];
                    }
                    acc[j] += upd;
                    touched[j] = true;
                    trace.push(BoostStep { column: Some(j), update: upd });
                }
                None => trace.push(BoostStep { column: None, update: 0.0 }),
            }
            train_loss.push(loss.mean_loss(y, &f));
        }
    }

    let mut coef = vec![0.0; p];
    let mut intercept = offset;
    let mut selected = Vec::new();
    for j in 0..p {
        if touched[j] {
            coef[j] = acc[j] / st.scale[j];
            intercept -= coef[j] * st.center[j];
            selected.push(j);
        }
    }
    Ok(BoostModel {
        offset,
        intercept,
        coef,
        selected,
        center: st.center,
        scale: st.scale,
        trace,
        train_loss,
    })
}

/// Column with the largest residual-sum-of-squares reduction `(z_j'u)^2 / z_j'z_j`,
/// lowest index on ties, together with its least squares slope. Reductions
/// not above `floor` are unresolvable and never picked.
fn best_column(st: &Standardized, u: &[f64], floor: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for j in 0..st.z.ncols() {
        if !st.usable[j] {
            continue;
        }
        let zu = st.z.column(j).iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        let gain = zu * zu / st.sq_norm[j];
        if gain > floor && best.is_none_or(|(_, g, _)| gain > g) {
            best = Some((j, gain, zu / st.sq_norm[j]));
        }
    }
    best.map(|(j, _, slope)| (j, slope))
}
