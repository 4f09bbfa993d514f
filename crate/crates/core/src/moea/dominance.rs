use crate::domain::FitnessPoint;

/// `a` dominates `b` under maximization: no worse in both objectives and
/// strictly better in at least one.
#[inline]
pub fn dominates(a: &FitnessPoint, b: &FitnessPoint) -> bool {
    a.f1 >= b.f1 && a.f2 >= b.f2 && (a.f1 > b.f1 || a.f2 > b.f2)
}

/// A set of mutually non-dominated candidates. `indices` are ascending
/// positions into the sorted input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Front {
    pub rank: usize,
    pub indices: Vec<usize>,
}

/// Full output of the fast non-dominated sort.
#[derive(Debug, Clone)]
pub struct Sorting {
    pub fronts: Vec<Front>,
    /// Front index of every input point.
    pub ranks: Vec<usize>,
    /// How many input points dominate each point.
    pub domination_counts: Vec<usize>,
}

pub fn nondominated_sort(points: &[FitnessPoint]) -> Vec<Front> {
    sort_with_counts(points).fronts
}

/// Deb's fast non-dominated sort, O(n²) comparisons.
pub fn sort_with_counts(points: &[FitnessPoint]) -> Sorting {
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&points[i], &points[j]) {
                dominated_by_me[i].push(j);
                counts[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominated_by_me[j].push(i);
                counts[i] += 1;
            }
        }
    }

    let domination_counts = counts.clone();
    let mut ranks = vec![0usize; n];
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let rank = fronts.len();
        let mut next = Vec::new();
        for &i in &current {
            ranks[i] = rank;
            for &j in &dominated_by_me[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(Front {
            rank,
            indices: current,
        });
        current = next;
    }

    Sorting {
        fronts,
        ranks,
        domination_counts,
    }
}
