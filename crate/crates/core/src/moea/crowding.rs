use crate::domain::FitnessPoint;

/// NSGA-II crowding distance for the members of one front, aligned with the
/// input order. Boundary members of either objective get `+∞`. An objective
/// whose range over the front is zero adds nothing to interior members.
pub fn crowding_distance(front: &[FitnessPoint]) -> Vec<f64> {
    let n = front.len();
    let mut distance = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }

    let objectives: [fn(&FitnessPoint) -> f64; 2] = [|p| p.f1, |p| p.f2];
    for value in objectives {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            value(&front[a])
                .total_cmp(&value(&front[b]))
                .then(a.cmp(&b))
        });
        let lo = value(&front[order[0]]);
        let hi = value(&front[order[n - 1]]);
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            let gap = value(&front[w[2]]) - value(&front[w[0]]);
            distance[w[1]] += gap / range;
        }
    }
    distance
}
