use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::FitnessPoint;

/// Lower-left corner of the dominated region under maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub r1: f64,
    pub r2: f64,
}

impl ReferencePoint {
    pub const ORIGIN: ReferencePoint = ReferencePoint { r1: 0.0, r2: 0.0 };
}

impl Default for ReferencePoint {
    fn default() -> Self {
        Self::ORIGIN
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypervolumeError {
    #[error("point {index} ({f1}, {f2}) lies below the reference point ({r1}, {r2})")]
    BelowReference {
        index: usize,
        f1: f64,
        f2: f64,
        r1: f64,
        r2: f64,
    },
    #[error("cannot select {k} of {n} points")]
    InvalidSubsetSize { k: usize, n: usize },
}

/// How hypervolume subset selection is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetMode {
    /// Repeatedly discard the point with the smallest exclusive contribution.
    #[default]
    Greedy,
    /// Optimal subset via dynamic programming over the sorted front.
    Exact,
}

impl FromStr for SubsetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "greedy" => Ok(SubsetMode::Greedy),
            "exact" => Ok(SubsetMode::Exact),
            other => Err(format!(
                "unknown subset mode `{other}` (expected greedy or exact)"
            )),
        }
    }
}

impl fmt::Display for SubsetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubsetMode::Greedy => "greedy",
            SubsetMode::Exact => "exact",
        })
    }
}

fn check_reference(points: &[FitnessPoint], r: ReferencePoint) -> Result<(), HypervolumeError> {
    match points.iter().position(|p| p.f1 < r.r1 || p.f2 < r.r2) {
        Some(index) => Err(HypervolumeError::BelowReference {
            index,
            f1: points[index].f1,
            f2: points[index].f2,
            r1: r.r1,
            r2: r.r2,
        }),
        None => Ok(()),
    }
}

/// Indices ordered by f1 descending, then f2 descending, then index.
/// Exact duplicates end up adjacent with the lowest index first.
fn sweep_order(points: &[FitnessPoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .f1
            .total_cmp(&points[a].f1)
            .then(points[b].f2.total_cmp(&points[a].f2))
            .then(a.cmp(&b))
    });
    order
}

/// Indices of the non-dominated staircase in sweep order: f1 strictly
/// decreasing, f2 strictly increasing. Of a group of duplicates only the
/// lowest index is kept.
fn staircase(points: &[FitnessPoint], order: &[usize]) -> Vec<usize> {
    let mut best_f2 = f64::NEG_INFINITY;
    let mut steps = Vec::new();
    for &i in order {
        if points[i].f2 > best_f2 {
            best_f2 = points[i].f2;
            steps.push(i);
        }
    }
    steps
}

fn sweep_area(points: &[FitnessPoint], steps: &[usize], r: ReferencePoint) -> f64 {
    let mut area = 0.0;
    let mut floor = r.r2;
    for &i in steps {
        let p = points[i];
        if p.f2 > floor {
            area += (p.f1 - r.r1) * (p.f2 - floor);
            floor = p.f2;
        }
    }
    area
}

/// Exact area of the union of boxes `[r1, f1] × [r2, f2]`.
pub fn hypervolume_2d(points: &[FitnessPoint], r: ReferencePoint) -> Result<f64, HypervolumeError> {
    check_reference(points, r)?;
    let order = sweep_order(points);
    let steps = staircase(points, &order);
    Ok(sweep_area(points, &steps, r))
}

/// Exclusive hypervolume of every point: the loss when only that point is
/// removed. Dominated points and duplicates contribute zero.
pub fn hv_contributions(
    points: &[FitnessPoint],
    r: ReferencePoint,
) -> Result<Vec<f64>, HypervolumeError> {
    check_reference(points, r)?;
    let n = points.len();
    let order = sweep_order(points);
    let steps = staircase(points, &order);
    let m = steps.len();
    let mut contributions = vec![0.0; n];
    if m == 0 {
        return Ok(contributions);
    }

    // Each off-staircase point whose box pokes into exactly one step's
    // exclusive rectangle is filed under that step.
    let mut on_step = vec![false; n];
    for &s in &steps {
        on_step[s] = true;
    }
    let mut shadowed: Vec<Vec<FitnessPoint>> = vec![Vec::new(); m];
    for i in 0..n {
        if on_step[i] {
            continue;
        }
        let p = points[i];
        // last step with f1 >= p.f1 (steps have f1 strictly decreasing)
        let j = steps.partition_point(|&s| points[s].f1 >= p.f1);
        if j == 0 {
            continue;
        }
        let j = j - 1;
        let below = if j == 0 {
            r.r2
        } else {
            points[steps[j - 1]].f2
        };
        if p.f2 > below {
            shadowed[j].push(p);
        }
    }

    for (j, &s) in steps.iter().enumerate() {
        let p = points[s];
        let left = if j + 1 < m {
            points[steps[j + 1]].f1
        } else {
            r.r1
        };
        let below = if j == 0 {
            r.r2
        } else {
            points[steps[j - 1]].f2
        };
        let rect = (p.f1 - left) * (p.f2 - below);
        let covered = if shadowed[j].is_empty() {
            0.0
        } else {
            let local = ReferencePoint {
                r1: left,
                r2: below,
            };
            let pts = &shadowed[j];
            let o = sweep_order(pts);
            sweep_area(pts, &staircase(pts, &o), local)
        };
        contributions[s] = (rect - covered).max(0.0);
    }
    Ok(contributions)
}

/// Chooses `k` of `points` maximizing hypervolume. Returned indices are
/// ascending.
pub fn hv_subset_select(
    points: &[FitnessPoint],
    k: usize,
    r: ReferencePoint,
    mode: SubsetMode,
) -> Result<Vec<usize>, HypervolumeError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(HypervolumeError::InvalidSubsetSize { k, n });
    }
    check_reference(points, r)?;
    if k == n {
        return Ok((0..n).collect());
    }
    let mut chosen = match mode {
        SubsetMode::Greedy => greedy_subset(points, k, r)?,
        SubsetMode::Exact => exact_subset(points, k, r),
    };
    chosen.sort_unstable();
    Ok(chosen)
}

fn greedy_subset(
    points: &[FitnessPoint],
    k: usize,
    r: ReferencePoint,
) -> Result<Vec<usize>, HypervolumeError> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    while remaining.len() > k {
        let pts: Vec<FitnessPoint> = remaining.iter().map(|&i| points[i]).collect();
        let contrib = hv_contributions(&pts, r)?;
        // smallest contribution goes; among ties the highest index goes so
        // lower indices are kept
        let victim = (0..remaining.len())
            .min_by(|&a, &b| {
                contrib[a]
                    .total_cmp(&contrib[b])
                    .then(remaining[b].cmp(&remaining[a]))
            })
            .expect("remaining is non-empty");
        remaining.remove(victim);
    }
    Ok(remaining)
}

#[allow(clippy::needless_range_loop)]
fn exact_subset(points: &[FitnessPoint], k: usize, r: ReferencePoint) -> Vec<usize> {
    let order = sweep_order(points);
    let mut steps = staircase(points, &order);

    if steps.len() <= k {
        // every distinct non-dominated point fits; pad with the lowest
        // remaining indices (they add no area)
        let mut taken = vec![false; points.len()];
        for &s in &steps {
            taken[s] = true;
        }
        let mut chosen = steps;
        chosen.extend(
            (0..points.len())
                .filter(|&i| !taken[i])
                .take(k - chosen.len()),
        );
        return chosen;
    }

    // f1 ascending, f2 descending from here on.
    steps.reverse();
    let m = steps.len();
    let x = |i: usize| points[steps[i]].f1;
    let y = |i: usize| points[steps[i]].f2 - r.r2;

    // best[c][i]: max area using c+1 points whose rightmost is i
    let mut best = vec![vec![f64::NEG_INFINITY; m]; k];
    let mut parent = vec![vec![usize::MAX; m]; k];
    for i in 0..m {
        best[0][i] = (x(i) - r.r1) * y(i);
    }
    for c in 1..k {
        for i in c..m {
            let mut top = f64::NEG_INFINITY;
            let mut arg = usize::MAX;
            for p in (c - 1)..i {
                let v = best[c - 1][p] + (x(i) - x(p)) * y(i);
                if v.total_cmp(&top) == Ordering::Greater {
                    top = v;
                    arg = p;
                }
            }
            best[c][i] = top;
            parent[c][i] = arg;
        }
    }

    let mut last = usize::MAX;
    let mut top = f64::NEG_INFINITY;
    for i in (k - 1)..m {
        if best[k - 1][i].total_cmp(&top) == Ordering::Greater {
            top = best[k - 1][i];
            last = i;
        }
    }

    let mut chosen = Vec::with_capacity(k);
    let mut c = k - 1;
    loop {
        chosen.push(steps[last]);
        if c == 0 {
            break;
        }
        last = parent[c][last];
        c -= 1;
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(f1: f64, f2: f64) -> FitnessPoint {
        FitnessPoint::new(f1, f2).unwrap()
    }

    const O: ReferencePoint = ReferencePoint::ORIGIN;

    #[test]
    fn diagonal_is_four_ninths() {
        let pts: Vec<_> = (0..10)
            .map(|k| p(k as f64 / 9.0, 1.0 - k as f64 / 9.0))
            .collect();
        let hv = hypervolume_2d(&pts, O).unwrap();
        assert!((hv - 4.0 / 9.0).abs() < 1e-12, "{hv}");
    }

    #[test]
    fn small_cases() {
        let hv = hypervolume_2d(&[p(1.0, 0.0), p(0.0, 1.0), p(0.5, 0.5)], O).unwrap();
        assert!((hv - 0.25).abs() < 1e-15);
        assert!((hypervolume_2d(&[p(0.8, 0.5)], O).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(hypervolume_2d(&[], O).unwrap(), 0.0);
    }

    #[test]
    fn below_reference_is_an_error() {
        let r = ReferencePoint { r1: 0.1, r2: 0.0 };
        let err = hypervolume_2d(&[p(0.5, 0.5), p(0.05, 0.9)], r).unwrap_err();
        assert!(matches!(
            err,
            HypervolumeError::BelowReference { index: 1, .. }
        ));
        assert!(hv_contributions(&[p(0.05, 0.9)], r).is_err());
    }

    #[test]
    fn contribution_examples() {
        let c = hv_contributions(&[p(1.0, 0.0), p(0.5, 0.5), p(0.0, 1.0)], O).unwrap();
        assert_eq!(c, vec![0.0, 0.25, 0.0]);
        let c = hv_contributions(&[p(0.8, 0.5)], O).unwrap();
        assert!((c[0] - 0.4).abs() < 1e-15);
        let c = hv_contributions(&[p(0.3, 0.6), p(0.3, 0.6), p(0.6, 0.2)], O).unwrap();
        assert_eq!(c[0], 0.0);
        assert_eq!(c[1], 0.0);
        assert!(c[2] > 0.0);
    }

    #[test]
    fn contribution_accounts_for_dominated_points() {
        // removing (1,1) exposes (0.9,0.9)
        let c = hv_contributions(&[p(1.0, 1.0), p(0.9, 0.9)], O).unwrap();
        assert!((c[0] - (1.0 - 0.81)).abs() < 1e-12);
        assert_eq!(c[1], 0.0);
    }

    #[test]
    fn exact_four_point_fixture() {
        let pts = [p(1.0, 0.0), p(0.5, 0.5), p(0.0, 1.0), p(0.4, 0.4)];
        // (1,0) and (0,1) span no area, so any subset holding (0.5,0.5)
        // reaches the optimum 0.25; the DP keeps the staircase points
        let sel = hv_subset_select(&pts, 3, O, SubsetMode::Exact).unwrap();
        assert_eq!(sel, vec![0, 1, 2]);
    }

    #[test]
    fn subset_bounds() {
        let pts = [p(0.2, 0.3), p(0.3, 0.2)];
        assert!(hv_subset_select(&pts, 0, O, SubsetMode::Greedy).is_err());
        assert!(hv_subset_select(&pts, 3, O, SubsetMode::Exact).is_err());
        for mode in [SubsetMode::Greedy, SubsetMode::Exact] {
            assert_eq!(hv_subset_select(&pts, 2, O, mode).unwrap(), vec![0, 1]);
        }
    }

    #[test]
    fn greedy_drops_duplicates_first() {
        let pts = [p(0.3, 0.6), p(0.6, 0.3), p(0.3, 0.6), p(0.45, 0.45)];
        let sel = hv_subset_select(&pts, 3, O, SubsetMode::Greedy).unwrap();
        assert_eq!(sel, vec![0, 1, 3]);
    }

    #[test]
    fn exact_pads_with_dominated_points() {
        let pts = [p(0.1, 0.1), p(0.5, 0.5), p(0.2, 0.2), p(0.5, 0.5)];
        let sel = hv_subset_select(&pts, 2, O, SubsetMode::Exact).unwrap();
        assert_eq!(sel, vec![0, 1]);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Exact".parse::<SubsetMode>().unwrap(), SubsetMode::Exact);
        assert!("best".parse::<SubsetMode>().is_err());
    }
}
