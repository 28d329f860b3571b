use crate::boosting::{BoostConfig, Loss};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{evaluate_loss, fit_reduced, fit_reduced_with_fallback};

use super::{pfer_bound, stable_by_rank, Chosen, Fraction, GridSpec, SelectionProfile, StableModel};

/// Validation score of one grid element. `val_loss` is `None` when the
/// candidate could not be fitted on the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub chosen: Chosen,
    pub support: Vec<usize>,
    pub val_loss: Option<f64>,
    floor: Option<Fraction>,
}

fn stable_by_fraction(profile: &SelectionProfile, pi: Fraction) -> Vec<usize> {
    let b = profile.b().max(1);
    (0..profile.p())
        .filter(|&j| profile.counts()[j] as u128 * pi.den as u128 >= pi.num as u128 * b as u128)
        .collect()
}

fn candidates(profile: &SelectionProfile, grid: &GridSpec) -> Result<Vec<(Chosen, Vec<usize>, Option<Fraction>)>> {
    grid.validate()?;
    let b = profile.b().max(1);
    match grid {
        GridSpec::QGrid { q_values } => GridSpec::clipped_q_values(q_values, profile)?
            .into_iter()
            .map(|q| {
                let set = stable_by_rank(profile, q)?;
                // Frequency just below the cut: the (q + 1)-th largest.
                let floor = profile.kth_largest_count(q + 1).map(|c| Fraction::new(c, b));
                Ok((Chosen::Q { q }, set, floor))
            })
            .collect(),
        GridSpec::PiGrid { delta } => Ok(GridSpec::pi_values(*delta)
            .into_iter()
            .map(|pi| (Chosen::Pi { pi: pi.value() }, stable_by_fraction(profile, pi), Some(pi)))
            .collect()),
    }
}

/// Scores every grid candidate on the validation rows.
pub fn score_grid(
    profile: &SelectionProfile,
    grid: &GridSpec,
    train: &Dataset,
    val: &Dataset,
    loss: Loss,
) -> Result<Vec<CandidateScore>> {
    Ok(candidates(profile, grid)?
        .into_iter()
        .map(|(chosen, support, floor)| {
            let val_loss = fit_reduced(train, &support, loss)
                .ok()
                .map(|m| evaluate_loss(&m, val, loss))
                .filter(|l| !l.is_nan());
            CandidateScore { chosen, support, val_loss, floor }
        })
        .collect())
}

/// Index of the minimal validation loss; ties go to the smaller support and
/// then to the earlier grid element.
pub(crate) fn argmin_sparsest(scores: impl Iterator<Item = (Option<f64>, usize)>) -> Option<usize> {
    let mut best: Option<(usize, f64, usize)> = None;
    for (k, (loss, size)) in scores.enumerate() {
        let Some(l) = loss else { continue };
        let better = match best {
            None => true,
            Some((_, bl, bs)) => l < bl || (l == bl && size < bs),
        };
        if better {
            best = Some((k, l, size));
        }
    }
    best.map(|(k, _, _)| k)
}

/// Loss-guided choice of the stable model over a grid of candidate stable
/// sets, refit on `full`.
pub fn loss_guided_select(
    profile: &SelectionProfile,
    grid: &GridSpec,
    train: &Dataset,
    val: &Dataset,
    full: &Dataset,
    loss: Loss,
    boost: &BoostConfig,
) -> Result<StableModel> {
    let scores = score_grid(profile, grid, train, val, loss)?;
    let k = argmin_sparsest(scores.iter().map(|s| (s.val_loss, s.support.len()))).ok_or(Error::NoFittableCandidate)?;
    let winner = &scores[k];
    let submodel = fit_reduced_with_fallback(full, &winner.support, loss, boost)?;
    let pfer = winner.floor.and_then(|f| pfer_bound(profile, f, profile.p()));
    Ok(StableModel {
        support: submodel.support.clone(),
        submodel,
        chosen: winner.chosen.clone(),
        val_loss: winner.val_loss.expect("winner has a loss"),
        pfer_bound: pfer,
        pfer_applicable: pfer.is_some(),
    })
}
