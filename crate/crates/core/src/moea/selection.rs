use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::crowding::crowding_distance;
use super::dominance::sort_with_counts;
use super::hypervolume::{
    hv_contributions, hv_subset_select, HypervolumeError, ReferencePoint, SubsetMode,
};
use crate::domain::{FitnessPoint, Individual};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("need at least {mu} candidates, got {have}")]
    TooFewCandidates { have: usize, mu: usize },
    #[error("survivor count must be positive")]
    ZeroMu,
    #[error(transparent)]
    Hypervolume(#[from] HypervolumeError),
}

/// Survivor selection scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selector {
    #[serde(rename = "nsga2")]
    Nsga2,
    #[serde(rename = "sms-emoa")]
    SmsEmoa,
}

impl Selector {
    pub fn name(self) -> &'static str {
        match self {
            Selector::Nsga2 => "nsga2",
            Selector::SmsEmoa => "sms-emoa",
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "nsga2" | "nsga-ii" => Ok(Selector::Nsga2),
            "sms-emoa" | "smsemoa" => Ok(Selector::SmsEmoa),
            other => Err(format!(
                "unknown selector `{other}` (expected nsga2 or sms-emoa)"
            )),
        }
    }
}

/// Per-candidate score used to order members of the same front.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostics {
    Crowding(Vec<f64>),
    /// Exclusive hypervolume within the candidate's own front.
    Contribution(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    /// Ascending candidate indices, exactly μ of them.
    pub selected: Vec<usize>,
    pub ranks: Vec<usize>,
    pub diagnostics: Diagnostics,
}

impl SelectionOutcome {
    /// Splits `candidates` into survivors (in candidate order) after writing
    /// rank and crowding/contribution onto every candidate.
    pub fn apply(&self, candidates: &mut [Individual]) -> Vec<Individual> {
        for (i, c) in candidates.iter_mut().enumerate() {
            c.rank = Some(self.ranks[i]);
            match &self.diagnostics {
                Diagnostics::Crowding(d) => {
                    c.crowding = Some(d[i]);
                    c.contribution = None;
                }
                Diagnostics::Contribution(d) => {
                    c.contribution = Some(d[i]);
                    c.crowding = None;
                }
            }
        }
        self.selected
            .iter()
            .map(|&i| candidates[i].clone())
            .collect()
    }
}

fn check_sizes(n: usize, mu: usize) -> Result<(), SelectionError> {
    if mu == 0 {
        return Err(SelectionError::ZeroMu);
    }
    if n < mu {
        return Err(SelectionError::TooFewCandidates { have: n, mu });
    }
    Ok(())
}

fn points_of(candidates: &[Individual]) -> Vec<FitnessPoint> {
    candidates.iter().map(|c| c.fitness).collect()
}

pub fn nsga2_select(
    candidates: &[Individual],
    mu: usize,
) -> Result<SelectionOutcome, SelectionError> {
    nsga2_select_points(&points_of(candidates), mu)
}

/// Fills whole fronts in rank order and cuts the first overflowing front by
/// descending crowding distance; ties go to the lower index.
pub fn nsga2_select_points(
    points: &[FitnessPoint],
    mu: usize,
) -> Result<SelectionOutcome, SelectionError> {
    check_sizes(points.len(), mu)?;
    let sorting = sort_with_counts(points);

    let mut crowding = vec![0.0; points.len()];
    for front in &sorting.fronts {
        let members: Vec<FitnessPoint> = front.indices.iter().map(|&i| points[i]).collect();
        for (&i, d) in front.indices.iter().zip(crowding_distance(&members)) {
            crowding[i] = d;
        }
    }

    let mut selected = Vec::with_capacity(mu);
    for front in &sorting.fronts {
        let room = mu - selected.len();
        if room == 0 {
            break;
        }
        if front.indices.len() <= room {
            selected.extend_from_slice(&front.indices);
        } else {
            let mut order = front.indices.clone();
            order.sort_by(|&a, &b| crowding[b].total_cmp(&crowding[a]).then(a.cmp(&b)));
            selected.extend_from_slice(&order[..room]);
        }
    }
    selected.sort_unstable();

    Ok(SelectionOutcome {
        selected,
        ranks: sorting.ranks,
        diagnostics: Diagnostics::Crowding(crowding),
    })
}

pub fn sms_emoa_select(
    candidates: &[Individual],
    mu: usize,
    reference: ReferencePoint,
    mode: SubsetMode,
) -> Result<SelectionOutcome, SelectionError> {
    sms_emoa_select_points(&points_of(candidates), mu, reference, mode)
}

/// Hypervolume-based survivor selection.
///
/// If the first front alone exceeds μ, the μ-subset of it with the largest
/// hypervolume is kept. Otherwise fronts are taken whole in rank order and
/// the overflowing front is ordered by how many candidates dominate each
/// member (fewest first), then by exclusive hypervolume within the front
/// (largest first), then by index.
pub fn sms_emoa_select_points(
    points: &[FitnessPoint],
    mu: usize,
    reference: ReferencePoint,
    mode: SubsetMode,
) -> Result<SelectionOutcome, SelectionError> {
    check_sizes(points.len(), mu)?;
    let sorting = sort_with_counts(points);

    let mut contribution = vec![0.0; points.len()];
    for front in &sorting.fronts {
        let members: Vec<FitnessPoint> = front.indices.iter().map(|&i| points[i]).collect();
        for (&i, c) in front
            .indices
            .iter()
            .zip(hv_contributions(&members, reference)?)
        {
            contribution[i] = c;
        }
    }

    let first = &sorting.fronts[0].indices;
    let mut selected = if first.len() > mu {
        let members: Vec<FitnessPoint> = first.iter().map(|&i| points[i]).collect();
        hv_subset_select(&members, mu, reference, mode)?
            .into_iter()
            .map(|j| first[j])
            .collect()
    } else {
        let mut selected = Vec::with_capacity(mu);
        for front in &sorting.fronts {
            let room = mu - selected.len();
            if room == 0 {
                break;
            }
            if front.indices.len() <= room {
                selected.extend_from_slice(&front.indices);
            } else {
                let counts = &sorting.domination_counts;
                let mut order = front.indices.clone();
                order.sort_by(|&a, &b| {
                    counts[a]
                        .cmp(&counts[b])
                        .then(contribution[b].total_cmp(&contribution[a]))
                        .then(a.cmp(&b))
                });
                selected.extend_from_slice(&order[..room]);
            }
        }
        selected
    };
    selected.sort_unstable();

    Ok(SelectionOutcome {
        selected,
        ranks: sorting.ranks,
        diagnostics: Diagnostics::Contribution(contribution),
    })
}
