//! Post-stability subset search over a small meta-stable candidate set.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{BoostConfig, Loss};
use crate::data::{mean, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{evaluate_loss, fit_reduced, fit_reduced_with_fallback};

use super::lss::argmin_sparsest;
use super::{Chosen, SelectionProfile, StableModel};

/// Largest meta-stable set the exhaustive search will enumerate.
pub const EXHAUSTIVE_CAP: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PssStrategy {
    Exhaustive,
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PssConfig {
    pub pi_thr: f64,
    pub q0: usize,
    pub strategy: PssStrategy,
}

impl PssConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q0 == 0 {
            return Err(Error::Config("q0 must be at least 1".into()));
        }
        if !(self.pi_thr > 0.0 && self.pi_thr <= 1.0) {
            return Err(Error::Config(format!("pi_thr must lie in (0, 1], got {}", self.pi_thr)));
        }
        if self.strategy == PssStrategy::Exhaustive && self.q0 > EXHAUSTIVE_CAP {
            return Err(Error::MetaStableTooLarge { size: self.q0, cap: EXHAUSTIVE_CAP });
        }
        Ok(())
    }
}

/// Predictors with frequency at least `pi_thr`, cut down to the `q0` most
/// frequent ones (lowest index first among equal frequencies).
pub fn pss_meta_stable(profile: &SelectionProfile, cfg: &PssConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let mut meta = super::stable_by_threshold(profile, cfg.pi_thr)?;
    if meta.len() > cfg.q0 {
        let counts = profile.counts();
        meta.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        meta.truncate(cfg.q0);
        meta.sort_unstable();
    }
    Ok(meta)
}

/// Best in-sample subset of one cardinality.
#[derive(Debug, Clone, PartialEq)]
struct Champion {
    subset: Vec<usize>,
    train_loss: f64,
}

fn better(candidate: (f64, &[usize]), incumbent: &Option<Champion>) -> bool {
    match incumbent {
        None => true,
        Some(c) => candidate.0 < c.train_loss || (candidate.0 == c.train_loss && candidate.1 < c.subset.as_slice()),
    }
}

fn members(meta: &[usize], mask: u32) -> Vec<usize> {
    meta.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &j)| j).collect()
}

/// Cross products of the centered meta columns, for least squares residual
/// sums of squares on arbitrary subsets without refactoring the data.
struct Gram {
    g: DMatrix<f64>,
    c: Vec<f64>,
    yy: f64,
    n: usize,
}

impl Gram {
    fn new(train: &Dataset, meta: &[usize]) -> Self {
        let n = train.n_rows();
        let ybar = mean(train.y.iter().copied());
        let yc = train.y.map(|v| v - ybar);
        let a = DMatrix::from_fn(n, meta.len(), |i, k| train.x[(i, meta[k])]);
        let a = DMatrix::from_fn(n, meta.len(), |i, k| a[(i, k)] - mean(a.column(k).iter().copied()));
        Gram { g: a.tr_mul(&a), c: a.tr_mul(&yc).as_slice().to_vec(), yy: yc.norm_squared(), n }
    }

    /// Mean squared in-sample residual of the least squares fit on the
    /// positions in `mask`, or `None` if that design is underdetermined.
    fn train_loss(&self, mask: u32) -> Option<f64> {
        let idx: Vec<usize> = (0..self.c.len()).filter(|k| mask >> k & 1 == 1).collect();
        let k = idx.len();
        if k >= self.n {
            return None;
        }
        // In-place Cholesky of G[idx, idx], then forward substitution for c.
        let mut l = vec![0.0; k * k];
        for r in 0..k {
            for s in 0..=r {
                let mut v = self.g[(idx[r], idx[s])];
                for t in 0..s {
                    v -= l[r * k + t] * l[s * k + t];
                }
                if r == s {
                    let d = self.g[(idx[r], idx[r])];
                    if !(v > 1e-20 * d) {
                        return None;
                    }
                    l[r * k + r] = v.sqrt();
                } else {
                    l[r * k + s] = v / l[s * k + s];
                }
            }
        }
        let mut z = vec![0.0; k];
        for r in 0..k {
            let mut v = self.c[idx[r]];
            for t in 0..r {
                v -= l[r * k + t] * z[t];
            }
            z[r] = v / l[r * k + r];
        }
        let explained: f64 = z.iter().map(|v| v * v).sum();
        Some(((self.yy - explained) / self.n as f64).max(0.0))
    }
}

fn champions(meta: &[usize], train: &Dataset, loss: Loss) -> Vec<Option<Champion>> {
    let m = meta.len();
    let gram = (loss == Loss::Squared).then(|| Gram::new(train, meta));
    let score = |mask: u32| -> Option<f64> {
        match &gram {
            Some(g) => g.train_loss(mask),
            None => fit_reduced(train, &members(meta, mask), loss)
                .ok()
                .map(|fit| evaluate_loss(&fit, train, loss))
                .filter(|l| !l.is_nan()),
        }
    };
    let fold = |mut acc: Vec<Option<Champion>>, mask: u32| {
        if let Some(l) = score(mask) {
            let c = mask.count_ones() as usize;
            let subset = members(meta, mask);
            if better((l, &subset), &acc[c]) {
                acc[c] = Some(Champion { subset, train_loss: l });
            }
        }
        acc
    };
    let merge = |mut a: Vec<Option<Champion>>, b: Vec<Option<Champion>>| {
        for (slot, other) in a.iter_mut().zip(b) {
            if let Some(o) = other {
                if better((o.train_loss, &o.subset), slot) {
                    *slot = Some(o);
                }
            }
        }
        a
    };
    // The merge keeps the strictly better entry or the lexicographically
    // smaller one on ties, so the result does not depend on the split.
    (0..1u32 << m)
        .into_par_iter()
        .fold(|| vec![None; m + 1], fold)
        .reduce(|| vec![None; m + 1], merge)
}

fn finish(
    support: &[usize],
    val_loss: f64,
    size: usize,
    strategy: PssStrategy,
    full: &Dataset,
    loss: Loss,
    boost: &BoostConfig,
) -> Result<StableModel> {
    let submodel = fit_reduced_with_fallback(full, support, loss, boost)?;
    Ok(StableModel {
        support: submodel.support.clone(),
        submodel,
        chosen: Chosen::Subset { strategy, size },
        val_loss,
        pfer_bound: None,
        pfer_applicable: false,
    })
}

fn val_score(subset: &[usize], train: &Dataset, val: &Dataset, loss: Loss) -> Option<f64> {
    fit_reduced(train, subset, loss)
        .ok()
        .map(|m| evaluate_loss(&m, val, loss))
        .filter(|l| !l.is_nan())
}

/// Exhaustive search: the in-sample best subset of every cardinality, then
/// the one of those with the smallest validation loss.
pub fn pss_exhaustive(
    meta: &[usize],
    train: &Dataset,
    val: &Dataset,
    full: &Dataset,
    loss: Loss,
    boost: &BoostConfig,
) -> Result<StableModel> {
    if meta.len() > EXHAUSTIVE_CAP {
        return Err(Error::MetaStableTooLarge { size: meta.len(), cap: EXHAUSTIVE_CAP });
    }
    let mut meta = meta.to_vec();
    meta.sort_unstable();
    let champs = champions(&meta, train, loss);
    let scored: Vec<(Option<f64>, Vec<usize>)> = champs
        .into_iter()
        .map(|c| match c {
            Some(c) => (val_score(&c.subset, train, val, loss), c.subset),
            None => (None, Vec::new()),
        })
        .collect();
    let k = argmin_sparsest(scored.iter().map(|(l, s)| (*l, s.len()))).ok_or(Error::NoFittableCandidate)?;
    let (l, subset) = &scored[k];
    finish(subset, l.expect("scored"), subset.len(), PssStrategy::Exhaustive, full, loss, boost)
}

/// Greedy search on validation loss. Forward starts empty and adds, backward
/// starts from `meta` and removes; each stops when no single move improves.
pub fn pss_stepwise(
    meta: &[usize],
    direction: Direction,
    train: &Dataset,
    val: &Dataset,
    full: &Dataset,
    loss: Loss,
    boost: &BoostConfig,
) -> Result<StableModel> {
    let mut meta = meta.to_vec();
    meta.sort_unstable();
    let mut current: Vec<usize> = match direction {
        Direction::Forward => Vec::new(),
        Direction::Backward => meta.clone(),
    };
    let mut current_loss = val_score(&current, train, val, loss).unwrap_or(f64::INFINITY);
    loop {
        let moves: Vec<Vec<usize>> = match direction {
            Direction::Forward => meta
                .iter()
                .filter(|j| !current.contains(j))
                .map(|&j| {
                    let mut s = current.clone();
                    s.push(j);
                    s.sort_unstable();
                    s
                })
                .collect(),
            Direction::Backward => (0..current.len())
                .map(|k| {
                    let mut s = current.clone();
                    s.remove(k);
                    s
                })
                .collect(),
        };
        let scores: Vec<Option<f64>> = moves.par_iter().map(|s| val_score(s, train, val, loss)).collect();
        let mut best: Option<(usize, f64)> = None;
        for (k, l) in scores.iter().enumerate() {
            if let Some(l) = *l {
                if best.is_none_or(|(_, bl)| l < bl) {
                    best = Some((k, l));
                }
            }
        }
        match best {
            Some((k, l)) if l < current_loss => {
                current = moves[k].clone();
                current_loss = l;
            }
            _ => break,
        }
    }
    if !current_loss.is_finite() {
        return Err(Error::NoFittableCandidate);
    }
    let strategy = match direction {
        Direction::Forward => PssStrategy::Forward,
        Direction::Backward => PssStrategy::Backward,
    };
    finish(&current, current_loss, current.len(), strategy, full, loss, boost)
}
