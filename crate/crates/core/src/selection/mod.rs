//! Stability selection: frequency aggregation, candidate stable sets and the
//! loss-guided choice among them.
//!
//! Index sets are 0-based and sorted ascending everywhere in the library; the
//! JSON forms produced by [`SelectionProfile::to_json`] and
//! [`StableModel::to_json`] use 1-based indices.

mod lss;
mod pss;
mod run;

pub use lss::{loss_guided_select, score_grid, CandidateScore};
pub use pss::{pss_exhaustive, pss_meta_stable, pss_stepwise, Direction, PssConfig, PssStrategy, EXHAUSTIVE_CAP};
pub use run::{build_profile, run_stability_selection, select, Execution, Method, StabilityConfig};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::estimators::FittedSubmodel;

/// Exact rational `num / den`, used for selection frequencies and grid
/// thresholds so the error bound can be evaluated without rounding in the
/// `2 pi - 1` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        Self { num, den }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Fraction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Aggregated selection frequencies over `b` subsample models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionProfile {
    b: u64,
    counts: Vec<u64>,
    total_size: u64,
    sets: Option<Vec<Vec<usize>>>,
}

impl SelectionProfile {
    /// Empty accumulator over `p` predictors. `keep_sets` retains the
    /// individual sets for diagnostics.
    pub fn new(p: usize, keep_sets: bool) -> Self {
        Self {
            b: 0,
            counts: vec![0; p],
            total_size: 0,
            sets: keep_sets.then(Vec::new),
        }
    }

    /// Adds one subsample model.
    pub fn push(&mut self, set: &[usize]) -> Result<()> {
        let p = self.counts.len();
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(&j) = sorted.iter().find(|&&j| j >= p) {
            return Err(Error::Config(format!("index {j} out of range for {p} predictors")));
        }
        for &j in &sorted {
            self.counts[j] += 1;
        }
        self.total_size += sorted.len() as u64;
        self.b += 1;
        if let Some(sets) = self.sets.as_mut() {
            sets.push(sorted);
        }
        Ok(())
    }

    pub fn b(&self) -> u64 {
        self.b
    }

    pub fn p(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sets(&self) -> Option<&[Vec<usize>]> {
        self.sets.as_deref()
    }

    pub fn frequency(&self, j: usize) -> Fraction {
        Fraction::new(self.counts[j], self.b.max(1))
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.p()).map(|j| self.frequency(j).value()).collect()
    }

    /// Mean subsample model size.
    pub fn mean_set_size(&self) -> f64 {
        self.total_size as f64 / self.b.max(1) as f64
    }

    /// Number of predictors selected at least once.
    pub fn n_selected_ever(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Count of the `k`-th largest frequency (1-based), if `k <= p`.
    pub fn kth_largest_count(&self, k: usize) -> Option<u64> {
        if k == 0 || k > self.p() {
            return None;
        }
        let mut sorted = self.counts.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        Some(sorted[k - 1])
    }

    pub fn to_json(&self) -> Value {
        json!({
            "B": self.b,
            "p": self.p(),
            "mean_set_size": self.mean_set_size(),
            "frequencies": (0..self.p()).map(|j| self.frequency(j).to_string()).collect::<Vec<_>>(),
            "sets": self.sets.as_ref().map(|s| s.iter().map(|set| one_based(set)).collect::<Vec<_>>()),
        })
    }
}

pub(crate) fn one_based(set: &[usize]) -> Vec<usize> {
    set.iter().map(|j| j + 1).collect()
}

/// Batch form of [`SelectionProfile::push`].
pub fn aggregate<S: AsRef<[usize]>>(sets: &[S], p: usize) -> Result<SelectionProfile> {
    let mut profile = SelectionProfile::new(p, true);
    for s in sets {
        profile.push(s.as_ref())?;
    }
    Ok(profile)
}

/// `{j : freq_j >= pi}`.
pub fn stable_by_threshold(profile: &SelectionProfile, pi: f64) -> Result<Vec<usize>> {
    if !(pi > 0.0 && pi <= 1.0) {
        return Err(Error::Grid(format!("threshold must lie in (0, 1], got {pi}")));
    }
    Ok((0..profile.p()).filter(|&j| profile.frequency(j).value() >= pi).collect())
}

/// `{j : freq_j >= q-th largest frequency}`. Ties at the cut are all kept, so
/// the result can hold more than `q` indices.
pub fn stable_by_rank(profile: &SelectionProfile, q: usize) -> Result<Vec<usize>> {
    let cut = profile
        .kth_largest_count(q)
        .ok_or_else(|| Error::Grid(format!("q must lie in 1..={}, got {q}", profile.p())))?;
    Ok((0..profile.p()).filter(|&j| profile.counts[j] >= cut).collect())
}

/// Ex-post bound `q_bar^2 / ((2 floor - 1) p)` on the expected number of
/// false positives, defined only for `floor > 1/2`.
pub fn pfer_bound(profile: &SelectionProfile, floor: Fraction, p: usize) -> Option<f64> {
    if 2 * floor.num <= floor.den || p == 0 {
        return None;
    }
    let b = profile.b.max(1) as f64;
    let s = profile.total_size as f64;
    // (s / b)^2 * den / ((2 num - den) p), arranged as a single division.
    Some((s * s * floor.den as f64) / (b * b * (2 * floor.num - floor.den) as f64 * p as f64))
}

/// Candidate grid for the loss-guided search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// Stable-set sizes, strictly ascending and positive.
    QGrid { q_values: Vec<usize> },
    /// Thresholds `{delta, 2 delta, ..., 1}`.
    PiGrid { delta: f64 },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::QGrid { q_values: (1..=10).collect() }
    }
}

pub const DEFAULT_PI_DELTA: f64 = 0.05;

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            GridSpec::QGrid { q_values } => {
                if q_values.is_empty() || q_values[0] == 0 || q_values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Grid(format!(
                        "q_values must be positive and strictly ascending, got {q_values:?}"
                    )));
                }
            }
            GridSpec::PiGrid { delta } => {
                if !(*delta > 0.0 && *delta < 1.0) {
                    return Err(Error::Grid(format!("delta must lie in (0, 1), got {delta}")));
                }
            }
        }
        Ok(())
    }

    /// Threshold values of a pi-grid as exact fractions `k / m`.
    pub fn pi_values(delta: f64) -> Vec<Fraction> {
        let inv = 1.0 / delta;
        let m = inv.round();
        if (inv - m).abs() < 1e-9 {
            let m = m as u64;
            (1..=m).map(|k| Fraction::new(k, m)).collect()
        } else {
            // Irregular mesh: scale to a fine common denominator.
            const DEN: u64 = 1_000_000_000;
            let step = (delta * DEN as f64).round() as u64;
            let mut v: Vec<Fraction> = (1..).map(|k| k * step).take_while(|&s| s < DEN).map(|s| Fraction::new(s, DEN)).collect();
            v.push(Fraction::new(DEN, DEN));
            v
        }
    }

    /// q-grid restricted to `1..=#{j : freq_j > 0}`; values above the limit
    /// collapse onto it.
    pub fn clipped_q_values(q_values: &[usize], profile: &SelectionProfile) -> Result<Vec<usize>> {
        let limit = profile.n_selected_ever();
        if limit == 0 {
            return Err(Error::EmptyFrequencySupport);
        }
        let mut v: Vec<usize> = q_values.iter().map(|&q| q.min(limit)).collect();
        v.dedup();
        Ok(v)
    }
}

/// Which grid element or subset search produced a stable model.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chosen {
    Q { q: usize },
    Pi { pi: f64 },
    Subset { strategy: PssStrategy, size: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableModel {
    pub support: Vec<usize>,
    /// Refit on the full (train plus validation) data.
    pub submodel: FittedSubmodel,
    pub chosen: Chosen,
    pub val_loss: f64,
    pub pfer_bound: Option<f64>,
    pub pfer_applicable: bool,
}

impl StableModel {
    pub fn to_json(&self) -> Value {
        json!({
            "support": one_based(&self.support),
            "intercept": self.submodel.intercept,
            "coef": self.submodel.coef,
            "converged": self.submodel.converged,
            "chosen": self.chosen,
            "val_loss": self.val_loss,
            "expected_false_positive_bound": self.pfer_bound,
            "pfer_applicable": self.pfer_applicable,
        })
    }
}
