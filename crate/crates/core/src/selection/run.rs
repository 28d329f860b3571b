use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{fit_boost, BoostConfig, Loss};
use crate::data::Dataset;
use crate::datagen::draw_subsample;
use crate::error::Result;
use crate::rng::SeedTree;

use super::pss::{pss_exhaustive, pss_meta_stable, pss_stepwise, Direction, PssConfig, PssStrategy};
use super::{loss_guided_select, GridSpec, SelectionProfile, StableModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    /// Runs on the current rayon pool.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConfig {
    pub b: usize,
    pub n_sub: usize,
    pub boost: BoostConfig,
    pub loss: Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Lss(GridSpec),
    Pss(PssConfig),
}

/// Boosting on `cfg.b` subsamples of the training rows, aggregated. Subsample
/// `b` draws from `seeds.child(b)`, so serial and parallel runs agree.
pub fn build_profile(
    train: &Dataset,
    cfg: &StabilityConfig,
    seeds: SeedTree,
    exec: Execution,
    keep_sets: bool,
) -> Result<SelectionProfile> {
    let rows: Vec<usize> = (0..train.n_rows()).collect();
    let fit_one = |b: usize| -> Result<Vec<usize>> {
        let sub = draw_subsample(&rows, cfg.n_sub, &mut seeds.child(b as u64).rng())?;
        let model = fit_boost(&train.rows(&sub), cfg.loss, &cfg.boost)?;
        Ok(model.selected)
    };
    let sets: Vec<Vec<usize>> = match exec {
        Execution::Serial => (0..cfg.b).map(fit_one).collect::<Result<_>>()?,
        Execution::Parallel => (0..cfg.b).into_par_iter().map(fit_one).collect::<Result<_>>()?,
    };
    let mut profile = SelectionProfile::new(train.n_cols(), keep_sets);
    for s in &sets {
        profile.push(s)?;
    }
    Ok(profile)
}

/// Applies a selection method to an existing profile.
pub fn select(
    profile: &SelectionProfile,
    method: &Method,
    train: &Dataset,
    val: &Dataset,
    full: &Dataset,
    loss: Loss,
    boost: &BoostConfig,
) -> Result<StableModel> {
    match method {
        Method::Lss(grid) => loss_guided_select(profile, grid, train, val, full, loss, boost),
        Method::Pss(cfg) => {
            let meta = pss_meta_stable(profile, cfg)?;
            match cfg.strategy {
                PssStrategy::Exhaustive => pss_exhaustive(&meta, train, val, full, loss, boost),
                PssStrategy::Forward => pss_stepwise(&meta, Direction::Forward, train, val, full, loss, boost),
                PssStrategy::Backward => pss_stepwise(&meta, Direction::Backward, train, val, full, loss, boost),
            }
        }
    }
}

pub fn run_stability_selection(
    train: &Dataset,
    val: &Dataset,
    full: &Dataset,
    cfg: &StabilityConfig,
    method: &Method,
    seeds: SeedTree,
    exec: Execution,
) -> Result<(StableModel, SelectionProfile)> {
    cfg.boost.validate()?;
    let profile = build_profile(train, cfg, seeds, exec, false)?;
    let model = select(&profile, method, train, val, full, cfg.loss, &cfg.boost)?;
    Ok((model, profile))
}
