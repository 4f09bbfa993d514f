//! Brute-force reference implementations used to check the fast paths.
//! Nothing in here calls into the library's moea module.
#![allow(dead_code)]

pub mod stub;

use emo_prompts::domain::FitnessPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<FitnessPoint> {
    (0..n)
        .map(|_| FitnessPoint::new(rng.random::<f64>(), rng.random::<f64>()).unwrap())
        .collect()
}

pub fn pt(f1: f64, f2: f64) -> FitnessPoint {
    FitnessPoint::new(f1, f2).unwrap()
}

fn dominates(a: FitnessPoint, b: FitnessPoint) -> bool {
    (a.f1 >= b.f1 && a.f2 >= b.f2) && (a.f1 != b.f1 || a.f2 != b.f2)
}

/// Area of the union of boxes via coordinate compression: every grid cell
/// is covered iff some point reaches its upper-right corner.
pub fn rectangle_union_area(points: &[FitnessPoint], r1: f64, r2: f64) -> f64 {
    let mut xs: Vec<f64> = points.iter().map(|p| p.f1).chain([r1]).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p.f2).chain([r2]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut area = 0.0;
    for a in 0..xs.len().saturating_sub(1) {
        for b in 0..ys.len().saturating_sub(1) {
            let (x_hi, y_hi) = (xs[a + 1], ys[b + 1]);
            if points.iter().any(|p| p.f1 >= x_hi && p.f2 >= y_hi) {
                area += (x_hi - xs[a]) * (y_hi - ys[b]);
            }
        }
    }
    area
}

pub fn area(points: &[FitnessPoint]) -> f64 {
    rectangle_union_area(points, 0.0, 0.0)
}

/// Fronts by repeated peeling with a full dominance matrix. Each front is an
/// ascending index list.
pub fn peel_fronts(points: &[FitnessPoint]) -> Vec<Vec<usize>> {
    let n = points.len();
    let matrix: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| dominates(points[i], points[j])).collect())
        .collect();
    let mut left: Vec<usize> = (0..n).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&j| !left.iter().any(|&i| matrix[i][j]))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Largest hypervolume over every size-k subset.
pub fn best_subset_area(points: &[FitnessPoint], k: usize) -> f64 {
    combinations(points.len(), k)
        .into_iter()
        .map(|c| area(&c.iter().map(|&i| points[i]).collect::<Vec<_>>()))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn subset_area(points: &[FitnessPoint], idx: &[usize]) -> f64 {
    area(&idx.iter().map(|&i| points[i]).collect::<Vec<_>>())
}

/// Leave-one-out contributions.
pub fn loo_contributions(points: &[FitnessPoint]) -> Vec<f64> {
    let total = area(points);
    (0..points.len())
        .map(|i| {
            let rest: Vec<_> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| *p)
                .collect();
            total - area(&rest)
        })
        .collect()
}

/// Textbook NSGA-II truncation written independently of the library.
pub fn reference_nsga2(points: &[FitnessPoint], mu: usize) -> Vec<usize> {
    let mut chosen = Vec::new();
    for front in peel_fronts(points) {
        if chosen.len() + front.len() <= mu {
            chosen.extend(front);
            continue;
        }
        let n = front.len();
        let mut dist = vec![0.0f64; n];
        for obj in 0..2 {
            let val = |i: usize| {
                if obj == 0 {
                    points[front[i]].f1
                } else {
                    points[front[i]].f2
                }
            };
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| val(a).partial_cmp(&val(b)).unwrap().then(a.cmp(&b)));
            dist[order[0]] = f64::INFINITY;
            dist[order[n - 1]] = f64::INFINITY;
            let span = val(order[n - 1]) - val(order[0]);
            if span > 0.0 {
                for w in 1..n - 1 {
                    dist[order[w]] += (val(order[w + 1]) - val(order[w - 1])) / span;
                }
            }
        }
        let mut pos: Vec<usize> = (0..n).collect();
        pos.sort_by(|&a, &b| {
            dist[b]
                .partial_cmp(&dist[a])
                .unwrap()
                .then(front[a].cmp(&front[b]))
        });
        chosen.extend(pos.into_iter().take(mu - chosen.len()).map(|i| front[i]));
        break;
    }
    chosen.sort_unstable();
    chosen
}
