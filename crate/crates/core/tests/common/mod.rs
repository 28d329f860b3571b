//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use stabsel::estimators::{evaluate_loss, fit_reduced};
use stabsel::rng::{RandomSource, SeedTree};
use stabsel::selection::{stable_by_rank, stable_by_threshold, GridSpec, SelectionProfile};
use stabsel::{Dataset, Error, Loss, Task};

pub fn sigmoid(f: f64) -> f64 {
    1.0 / (1.0 + (-f).exp())
}

/// Plain functional gradient descent with a componentwise linear learner,
/// written directly from the algorithm: fit every column to the residuals
/// and keep the one whose fit removes the most squared error. The removed
/// error is summed per observation, `u_i^2 - (u_i - s z_i)^2 = s z_i (2 u_i -
/// s z_i)`, because differencing two full residual sums cannot resolve the
/// tiny improvements left late in a run. Removals up to eps times the first
/// iteration's squared gradient norm do not count as improvements.
pub fn naive_boost_trace(x: &DMatrix<f64>, y: &[f64], loss: Loss, m_iter: usize, kappa: f64) -> Vec<(Option<usize>, f64)> {
    let (n, p) = x.shape();
    let mut z: Vec<Option<Vec<f64>>> = Vec::new();
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
        if col.iter().all(|&v| v == col[0]) {
            z.push(None);
            continue;
        }
        let mut sum = 0.0;
        for v in &col {
            sum += v;
        }
        let m = sum / n as f64;
        let mut ss = 0.0;
        for v in &col {
            ss += (v - m) * (v - m);
        }
        let s = (ss / n as f64).sqrt();
        z.push(Some(col.iter().map(|v| (v - m) / s).collect()));
    }

    let ybar = y.iter().sum::<f64>() / n as f64;
    let offset = match loss {
        Loss::Squared => ybar,
        Loss::Logistic => (ybar / (1.0 - ybar)).ln(),
    };
    let mut f = vec![offset; n];
    let mut trace = Vec::new();
    let mut resolution = None;
    for _ in 0..m_iter {
        let u: Vec<f64> = (0..n)
            .map(|i| match loss {
                Loss::Squared => y[i] - f[i],
                Loss::Logistic => y[i] - sigmoid(f[i]),
            })
            .collect();
        let resolution = *resolution.get_or_insert_with(|| f64::EPSILON * u.iter().map(|v| v * v).sum::<f64>());
        let mut best: Option<(usize, f64, f64)> = None;
        for (j, zj) in z.iter().enumerate() {
            let Some(zj) = zj else { continue };
            let mut zu = 0.0;
            let mut zz = 0.0;
            for i in 0..n {
                zu += zj[i] * u[i];
                zz += zj[i] * zj[i];
            }
            let slope = zu / zz;
            let removed: f64 = (0..n).map(|i| slope * zj[i] * (2.0 * u[i] - slope * zj[i])).sum();
            if best.map_or(true, |(_, r, _)| removed > r) {
                best = Some((j, removed, slope));
            }
        }
        match best {
            Some((j, removed, slope)) if removed > resolution => {
                let upd = kappa * slope;
                let zj = z[j].as_ref().unwrap();
                for i in 0..n {
                    f[i] += upd * zj[i];
                }
                trace.push((Some(j), upd));
            }
            _ => trace.push((None, 0.0)),
        }
    }
    trace
}

pub fn in_sample_loss(train: &Dataset, subset: &[usize], loss: Loss) -> Option<f64> {
    fit_reduced(train, subset, loss).ok().map(|m| evaluate_loss(&m, train, loss))
}

pub fn val_loss(train: &Dataset, val: &Dataset, subset: &[usize], loss: Loss) -> Option<f64> {
    fit_reduced(train, subset, loss).ok().map(|m| evaluate_loss(&m, val, loss))
}

/// Power-set double loop: in-sample best per size, then validation argmin
/// (smaller size on ties).
pub fn naive_pss_exhaustive(meta: &[usize], train: &Dataset, val: &Dataset, loss: Loss) -> (Vec<usize>, f64) {
    let m = meta.len();
    let mut champ: Vec<Option<(f64, Vec<usize>)>> = vec![None; m + 1];
    for mask in 0u32..(1 << m) {
        let subset: Vec<usize> = (0..m).filter(|k| mask >> k & 1 == 1).map(|k| meta[k]).collect();
        let Some(l) = in_sample_loss(train, &subset, loss) else { continue };
        let c = subset.len();
        let replace = match &champ[c] {
            None => true,
            Some((bl, bs)) => l < *bl || (l == *bl && subset < *bs),
        };
        if replace {
            champ[c] = Some((l, subset));
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (_, subset) in champ.into_iter().flatten() {
        let Some(l) = val_loss(train, val, &subset, loss) else { continue };
        if best.as_ref().map_or(true, |(bl, _)| l < *bl) {
            best = Some((l, subset));
        }
    }
    let (l, s) = best.expect("some subset is fittable");
    (s, l)
}

/// Greedy forward search on validation loss.
pub fn naive_forward(meta: &[usize], train: &Dataset, val: &Dataset, loss: Loss) -> (Vec<usize>, f64) {
    let mut current: Vec<usize> = Vec::new();
    let mut cur = val_loss(train, val, &current, loss).unwrap();
    loop {
        let mut best: Option<(f64, usize)> = None;
        for &j in meta {
            if current.contains(&j) {
                continue;
            }
            let mut s = current.clone();
            s.push(j);
            s.sort();
            if let Some(l) = val_loss(train, val, &s, loss) {
                if best.map_or(true, |(bl, _)| l < bl) {
                    best = Some((l, j));
                }
            }
        }
        match best {
            Some((l, j)) if l < cur => {
                current.push(j);
                current.sort();
                cur = l;
            }
            _ => return (current, cur),
        }
    }
}

/// `k` largest frequencies by sorting, ties kept.
pub fn top_by_sort(freq: &[f64], q: usize) -> Vec<usize> {
    let mut sorted = freq.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let cut = sorted[q - 1];
    (0..freq.len()).filter(|&j| freq[j] >= cut).collect()
}

/// Random selection sets over `p` predictors. Inclusion probabilities vary by
/// column so frequencies spread out and tie.
pub fn random_sets(rng: &mut RandomSource, p: usize, b: usize) -> Vec<Vec<usize>> {
    let probs: Vec<f64> = (0..p).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() }).collect();
    (0..b).map(|_| (0..p).filter(|&j| rng.random_bool(probs[j])).collect()).collect()
}

/// Frequency bounds, threshold and rank monotonicity, rank/threshold
/// duality and q-grid non-emptiness on one profile. `sets` is the batch the
/// profile was built from; frequencies are recounted from it.
pub fn check_selection_rules(
    sets: &[Vec<usize>],
    profile: &SelectionProfile,
    (pi_a, pi_b): (f64, f64),
    (q_a, q_b): (usize, usize),
) -> Result<(), String> {
    let p = profile.p();
    let b = sets.len();
    for j in 0..p {
        let count = sets.iter().filter(|s| s.contains(&j)).count();
        let f = profile.frequencies()[j];
        if !(0.0..=1.0).contains(&f) {
            return Err(format!("frequency {f} of column {j} outside [0, 1]"));
        }
        if profile.counts()[j] != count as u64 || f != count as f64 / b as f64 {
            return Err(format!("column {j}: frequency {f} but recount {count}/{b}"));
        }
    }

    let subset = |small: &[usize], big: &[usize]| small.iter().all(|j| big.contains(j));
    let (lo, hi) = if pi_a <= pi_b { (pi_a, pi_b) } else { (pi_b, pi_a) };
    let at_lo = stable_by_threshold(profile, lo).map_err(|e| e.to_string())?;
    let at_hi = stable_by_threshold(profile, hi).map_err(|e| e.to_string())?;
    if !subset(&at_hi, &at_lo) {
        return Err(format!("threshold {hi} kept {at_hi:?}, not inside {at_lo:?} at {lo}"));
    }
    let (qs, ql) = if q_a <= q_b { (q_a, q_b) } else { (q_b, q_a) };
    let rank_s = stable_by_rank(profile, qs).map_err(|e| e.to_string())?;
    let rank_l = stable_by_rank(profile, ql).map_err(|e| e.to_string())?;
    if !subset(&rank_s, &rank_l) {
        return Err(format!("rank {qs} kept {rank_s:?}, not inside {rank_l:?} at {ql}"));
    }

    for q in [qs, ql] {
        let rank = stable_by_rank(profile, q).map_err(|e| e.to_string())?;
        if rank.len() < q {
            return Err(format!("rank {q} kept only {} columns", rank.len()));
        }
        let mut freq = profile.frequencies();
        freq.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let t = freq[q - 1];
        if t > 0.0 {
            let thr = stable_by_threshold(profile, t).map_err(|e| e.to_string())?;
            if thr != rank {
                return Err(format!("rank {q} gave {rank:?} but threshold {t} gave {thr:?}"));
            }
        } else if rank.len() != p {
            return Err(format!("rank {q} at a zero cut kept {} of {p} columns", rank.len()));
        }
    }

    let grid: Vec<usize> = (1..=p + 3).collect();
    match GridSpec::clipped_q_values(&grid, profile) {
        Err(Error::EmptyFrequencySupport) if profile.n_selected_ever() == 0 => {}
        Err(e) => return Err(format!("q-grid rejected: {e}")),
        Ok(_) if profile.n_selected_ever() == 0 => return Err("q-grid accepted with no selections".into()),
        Ok(qs) => {
            for q in qs {
                if q == 0 || q > profile.n_selected_ever() {
                    return Err(format!("clipped q {q} outside 1..={}", profile.n_selected_ever()));
                }
                let set = stable_by_rank(profile, q).map_err(|e| e.to_string())?;
                if set.is_empty() || set.iter().all(|&j| profile.counts()[j] == 0) {
                    return Err(format!("q = {q} gives a model without selected columns"));
                }
            }
        }
    }
    Ok(())
}

pub fn gaussian_design(rng: &mut RandomSource, n: usize, p: usize, mean: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| mean + rng.sample::<f64, _>(StandardNormal))
}

/// Linear regression data with `truth` carrying coefficient `coef`.
pub fn linear_data(seed: u64, n: usize, p: usize, truth: &[usize], coef: f64, noise: f64) -> Dataset {
    let mut rng = SeedTree::new(seed).rng();
    let x = gaussian_design(&mut rng, n, p, 0.0);
    let y = DVector::from_fn(n, |i, _| {
        truth.iter().map(|&j| coef * x[(i, j)]).sum::<f64>() + noise * rng.sample::<f64, _>(StandardNormal)
    });
    Dataset::new(x, y, Task::Regression).unwrap()
}

pub fn split_rows(d: &Dataset, n_train: usize) -> (Dataset, Dataset) {
    let n = d.n_rows();
    (d.rows(&(0..n_train).collect::<Vec<_>>()), d.rows(&(n_train..n).collect::<Vec<_>>()))
}

/// 50-row logistic sample and its maximum likelihood estimate
/// (intercept, x1, x2) from two external optimizers (BFGS on the mean
/// deviance and a Newton-type GLM fit), which agree to 1e-11.
pub const LOGIT_X0: [f64; 50] = [1.719323, 2.493432, -0.222591, -0.0981, -1.479235, -1.136356, 1.892239, 0.638739, 1.043359, 1.20705, 1.13956, -0.258654, 0.963896, 1.30689, -0.038185, 1.730698, 3.569174, -1.510344, -0.126957, -1.128275, -0.879607, 0.083425, -1.901767, 0.040056, 1.659548, -0.635546, -0.495972, -1.211812, -2.318215, 0.157843, -0.075464, -0.535017, 0.574325, -1.036252, 2.397708, 1.094074, -1.655777, 0.358179, 1.232131, 0.349072, -0.995324, 0.82476, -2.581735, 0.791959, 2.206473, 1.278137, 0.211069, 0.229115, -0.378877, -0.604689];
pub const LOGIT_X1: [f64; 50] = [0.19431, 0.576372, 0.565148, 0.046391, 1.353512, -0.721326, -0.757797, -0.078699, -0.581317, -0.180412, -1.52108, 0.401578, 1.920672, -1.436663, -0.722854, 0.688389, -0.308875, 1.277384, -0.111485, 0.359146, -0.547454, 0.711607, 2.040233, -0.373879, -1.825612, 1.079436, 0.438018, 0.685881, -0.02451, -1.161276, -0.72443, 0.434837, 0.134416, -0.052873, 0.451059, -0.625318, -1.0472, 0.249074, -0.297029, 0.051651, -1.622427, 0.489564, -0.356888, -1.336251, -0.332343, 0.544496, -0.370495, 1.255516, -0.436207, 0.097559];
pub const LOGIT_Y: [u8; 50] = [1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 1, 0, 0, 1, 1, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 1, 0, 0, 1];
pub const LOGIT_MLE: [f64; 3] = [0.40936812898, 1.60088593733, -0.80172155090];

pub fn logit_sample() -> Dataset {
    let x = DMatrix::from_fn(50, 2, |i, j| if j == 0 { LOGIT_X0[i] } else { LOGIT_X1[i] });
    let y = DVector::from_iterator(50, LOGIT_Y.iter().map(|&v| v as f64));
    Dataset::new(x, y, Task::Classification).unwrap()
}
