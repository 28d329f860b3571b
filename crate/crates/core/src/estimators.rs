//! Unpenalized refits on a reduced predictor set and out-of-sample losses.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::boosting::{fit_boost, BoostConfig, Loss};
use crate::data::{mean, Dataset};
use crate::datagen::sigmoid;
use crate::error::{Error, Result};

pub const LOGISTIC_MAX_ITER: usize = 100;
pub const LOGISTIC_GRAD_TOL: f64 = 1e-8;
/// Coefficient sup-norm beyond which a logistic fit is treated as diverging
/// (quasi-separated data).
pub const LOGISTIC_DIVERGENCE: f64 = 1e4;
/// Relative size of the smallest R diagonal entry below which the reduced
/// design counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedSubmodel {
    /// 0-based column indices, ascending.
    pub support: Vec<usize>,
    pub intercept: f64,
    pub coef: Vec<f64>,
    /// Always true for least squares.
    pub converged: bool,
}

impl FittedSubmodel {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut f = DVector::from_element(x.nrows(), self.intercept);
        for (&j, &c) in self.support.iter().zip(&self.coef) {
            f.axpy(c, &x.column(j), 1.0);
        }
        f
    }
}

/// Centered copy of the selected columns plus the column means.
fn centered_design(x: &DMatrix<f64>, support: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let n = x.nrows();
    let means: Vec<f64> = support.iter().map(|&j| mean(x.column(j).iter().copied())).collect();
    let a = DMatrix::from_fn(n, support.len(), |i, k| x[(i, support[k])] - means[k]);
    (a, means)
}

fn full_rank(r: &DMatrix<f64>) -> bool {
    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    max > 0.0 && diag.iter().all(|&d| d > RANK_TOL * max)
}

/// Minimizer of the mean loss over an intercept plus the `support` columns.
///
/// An empty support gives the intercept-only model. Designs with at least as
/// many predictors as rows, or with linearly dependent centered columns, are
/// rejected with [`Error::Underdetermined`].
pub fn fit_reduced(data: &Dataset, support: &[usize], loss: Loss) -> Result<FittedSubmodel> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::Underdetermined { support: support.len(), rows: 0 });
    }
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    if support.is_empty() {
        return Ok(FittedSubmodel {
            support,
            intercept: loss.offset(data.y.as_slice()),
            coef: Vec::new(),
            converged: true,
        });
    }
    let underdetermined = Error::Underdetermined { support: support.len(), rows: n };
    if support.len() >= n {
        return Err(underdetermined);
    }
    let (a, means) = centered_design(&data.x, &support);
    let qr = a.clone().qr();
    let r = qr.r();
    if !full_rank(&r) {
        return Err(underdetermined);
    }
    match loss {
        Loss::Squared => {
            let ybar = mean(data.y.iter().copied());
            let yc = data.y.map(|v| v - ybar);
            let qty = qr.q().transpose() * yc;
            let coef = r.solve_upper_triangular(&qty).ok_or(underdetermined)?;
            let intercept = ybar - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
            Ok(FittedSubmodel { support, intercept, coef: coef.as_slice().to_vec(), converged: true })
        }
        Loss::Logistic => {
            let (b0, coef, converged) = newton_logistic(&a, data.y.as_slice(), loss.offset(data.y.as_slice()))
                .ok_or(underdetermined)?;
            let intercept = b0 - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
            Ok(FittedSubmodel { support, intercept, coef, converged })
        }
    }
}

fn logistic_state(a: &DMatrix<f64>, y: &[f64], b0: f64, b: &DVector<f64>) -> (f64, DVector<f64>) {
    let eta = a * b;
    let n = y.len();
    let mut dev = 0.0;
    let mut resid = DVector::zeros(n);
    for i in 0..n {
        let f = b0 + eta[i];
        dev += Loss::Logistic.evaluate(y[i], f);
        resid[i] = sigmoid(f) - y[i];
    }
    (dev / n as f64, resid)
}

/// Damped Newton on the mean binomial deviance of `b0 + a b` with `a`
/// centered. Returns `None` only when the very first Hessian is singular.
fn newton_logistic(a: &DMatrix<f64>, y: &[f64], start: f64) -> Option<(f64, Vec<f64>, bool)> {
    let (n, k) = a.shape();
    let nf = n as f64;
    let mut b0 = start;
    let mut b = DVector::zeros(k);
    let (mut dev, mut resid) = logistic_state(a, y, b0, &b);
    let mut converged = false;

    for iter in 0..LOGISTIC_MAX_ITER {
        let g0 = resid.sum() / nf;
        let g = a.tr_mul(&resid) / nf;
        let gmax = g.iter().fold(g0.abs(), |m, v| m.max(v.abs()));
        if gmax <= LOGISTIC_GRAD_TOL {
            converged = true;
            break;
        }
        // Hessian of [b0, b] with weights w = mu (1 - mu).
        let mut h = DMatrix::zeros(k + 1, k + 1);
        let mut aw = a.clone();
        let mut wsum = 0.0;
        for i in 0..n {
            let mu = resid[i] + y[i];
            let w = mu * (1.0 - mu);
            wsum += w;
            for c in 0..k {
                aw[(i, c)] *= w;
            }
        }
        h[(0, 0)] = wsum / nf;
        let cross = aw.row_sum() / nf;
        for c in 0..k {
            h[(0, c + 1)] = cross[c];
            h[(c + 1, 0)] = cross[c];
        }
        let inner = a.tr_mul(&aw) / nf;
        h.view_mut((1, 1), (k, k)).copy_from(&inner);
        let mut grad = DVector::zeros(k + 1);
        grad[0] = g0;
        grad.rows_mut(1, k).copy_from(&g);

        let step = match h.cholesky() {
            Some(ch) => ch.solve(&grad),
            None if iter == 0 => return None,
            None => break,
        };

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let nb0 = b0 - t * step[0];
            let nb = &b - step.rows(1, k) * t;
            let (ndev, nres) = logistic_state(a, y, nb0, &nb);
            if ndev <= dev {
                b0 = nb0;
                b = nb;
                dev = ndev;
                resid = nres;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No descent possible at floating point resolution.
            let g0 = resid.sum() / nf;
            let g = a.tr_mul(&resid) / nf;
            converged = g.iter().fold(g0.abs(), |m, v| m.max(v.abs())) <= LOGISTIC_GRAD_TOL;
            break;
        }
        if b0.abs().max(b.amax()) > LOGISTIC_DIVERGENCE {
            break;
        }
    }
    Some((b0, b.as_slice().to_vec(), converged))
}

/// [`fit_reduced`], falling back to boosting on the reduced columns when the
/// support is underdetermined and refitting on whatever boosting selects.
pub fn fit_reduced_with_fallback(
    data: &Dataset,
    support: &[usize],
    loss: Loss,
    boost: &BoostConfig,
) -> Result<FittedSubmodel> {
    match fit_reduced(data, support, loss) {
        Err(Error::Underdetermined { .. }) if !support.is_empty() && data.n_rows() >= 2 => {
            let reduced_x = data.x.select_columns(support.iter());
            let reduced = Dataset { x: reduced_x, y: data.y.clone(), task: data.task };
            let model = fit_boost(&reduced, loss, boost)?;
            let chosen: Vec<usize> = model.selected.iter().map(|&k| support[k]).collect();
            fit_reduced(data, &chosen, loss)
        }
        other => other,
    }
}

/// Mean per-row loss of `model` on `data`.
pub fn evaluate_loss(model: &FittedSubmodel, data: &Dataset, loss: Loss) -> f64 {
    let f = model.predict(&data.x);
    loss.mean_loss(data.y.as_slice(), f.as_slice())
}
