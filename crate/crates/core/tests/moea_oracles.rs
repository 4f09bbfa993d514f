mod common;

use common::*;
use emo_prompts::domain::FitnessPoint;
use emo_prompts::moea::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const O: ReferencePoint = ReferencePoint::ORIGIN;

fn arb_points(max: usize) -> impl Strategy<Value = Vec<FitnessPoint>> {
    // a coarse grid makes ties and duplicates common
    let coord = prop_oneof![0.0f64..=1.0, (0u8..=10).prop_map(|v| v as f64 / 10.0)];
    proptest::collection::vec((coord.clone(), coord), 0..=max)
        .prop_map(|v| v.into_iter().map(|(a, b)| pt(a, b)).collect())
}

#[test]
fn twenty_random_points_sort_like_the_oracle() {
    let mut r = rng(7);
    let pts = random_points(&mut r, 20);
    let got: Vec<Vec<usize>> = nondominated_sort(&pts)
        .into_iter()
        .map(|f| f.indices)
        .collect();
    assert_eq!(got, peel_fronts(&pts));
}

#[test]
fn diagonal_strip_sum() {
    // Σ_k (1/9)(1 − k/9) for k = 1..9
    let strip: f64 = (1..=9).map(|k| (1.0 / 9.0) * (1.0 - k as f64 / 9.0)).sum();
    assert!((strip - 4.0 / 9.0).abs() < 1e-15);
    let pts: Vec<_> = (0..10)
        .map(|k| pt(k as f64 / 9.0, 1.0 - k as f64 / 9.0))
        .collect();
    assert!((hypervolume_2d(&pts, O).unwrap() - strip).abs() < 1e-12);
    assert!((rectangle_union_area(&pts, 0.0, 0.0) - strip).abs() < 1e-12);
}

#[test]
fn three_point_hypervolume_matches_brute_force() {
    let pts = [pt(1.0, 0.0), pt(0.0, 1.0), pt(0.5, 0.5)];
    assert!((area(&pts) - 0.25).abs() < 1e-15);
    assert!((hypervolume_2d(&pts, O).unwrap() - area(&pts)).abs() < 1e-15);
}

#[test]
fn contributions_of_the_three_point_front() {
    let pts = [pt(1.0, 0.0), pt(0.5, 0.5), pt(0.0, 1.0)];
    let loo = loo_contributions(&pts);
    let got = hv_contributions(&pts, O).unwrap();
    for (a, b) in got.iter().zip(&loo) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(got, vec![0.0, 0.25, 0.0]);
}

#[test]
fn exact_subset_on_the_four_point_fixture() {
    let pts = [pt(1.0, 0.0), pt(0.5, 0.5), pt(0.0, 1.0), pt(0.4, 0.4)];
    let best = best_subset_area(&pts, 3);
    let sel = hv_subset_select(&pts, 3, O, SubsetMode::Exact).unwrap();
    assert_eq!(sel, vec![0, 1, 2]);
    assert!((subset_area(&pts, &sel) - best).abs() < 1e-15);
}

#[test]
fn twelve_random_points_k6() {
    let mut r = rng(12);
    let pts = random_points(&mut r, 12);
    let best = best_subset_area(&pts, 6);
    let exact = hv_subset_select(&pts, 6, O, SubsetMode::Exact).unwrap();
    let greedy = hv_subset_select(&pts, 6, O, SubsetMode::Greedy).unwrap();
    assert!((subset_area(&pts, &exact) - best).abs() < 1e-12);
    assert!(subset_area(&pts, &exact) >= subset_area(&pts, &greedy) - 1e-15);
}

/// Stacks three staircases: each upper point is the corner of a group of
/// consecutive lower points, so every lower point is dominated.
fn layered_fixture(groups_mid: &[usize], groups_top: &[usize]) -> Vec<FitnessPoint> {
    let bottom: Vec<FitnessPoint> = (0..16)
        .map(|i| pt(0.05 + 0.05 * i as f64, 0.8 - 0.045 * i as f64))
        .collect();
    let lift = |pts: &[FitnessPoint], sizes: &[usize]| {
        let mut out = Vec::new();
        let mut at = 0;
        for &s in sizes {
            let g = &pts[at..at + s];
            let x = g.iter().map(|p| p.f1).fold(0.0, f64::max) + 0.01;
            let y = g.iter().map(|p| p.f2).fold(0.0, f64::max) + 0.01;
            out.push(pt(x, y));
            at += s;
        }
        assert_eq!(at, pts.len());
        out
    };
    let mid = lift(&bottom, groups_mid);
    let top = lift(&mid, groups_top);
    top.into_iter().chain(mid).chain(bottom).collect()
}

#[test]
fn nsga2_fixture_fronts_4_10_16() {
    let mut pts = layered_fixture(&[2, 1, 2, 2, 1, 2, 1, 2, 2, 1], &[3, 3, 2, 2]);
    pts.shuffle(&mut rng(3));
    let fronts = peel_fronts(&pts);
    assert_eq!(
        fronts.iter().map(Vec::len).collect::<Vec<_>>(),
        vec![4, 10, 16]
    );

    let out = nsga2_select_points(&pts, 10).unwrap();
    assert_eq!(out.selected, reference_nsga2(&pts, 10));
    assert!(fronts[0].iter().all(|i| out.selected.contains(i)));
    let from_mid = out
        .selected
        .iter()
        .filter(|i| fronts[1].contains(i))
        .count();
    assert_eq!(from_mid, 6);
}

#[test]
fn sms_emoa_large_first_front_exact() {
    let mut r = rng(14);
    let mut xs: Vec<f64> = (0..14).map(|_| r.random_range(0.02..0.98)).collect();
    xs.sort_by(f64::total_cmp);
    let mut pts: Vec<FitnessPoint> = xs
        .iter()
        .map(|&x| pt(x, (1.0 - x * x).sqrt() * r.random_range(0.9..1.0)))
        .collect();
    // keep the curve strictly decreasing so all 14 are mutually non-dominated
    for i in 1..pts.len() {
        if pts[i].f2 >= pts[i - 1].f2 {
            pts[i] = pt(pts[i].f1, pts[i - 1].f2 * 0.99);
        }
    }
    let front0 = pts.clone();
    for _ in 0..6 {
        let q = front0[r.random_range(0..14)];
        pts.push(pt(q.f1 * 0.8, q.f2 * 0.8));
    }
    pts.shuffle(&mut r);
    assert_eq!(peel_fronts(&pts)[0].len(), 14);

    let out = sms_emoa_select_points(&pts, 10, O, SubsetMode::Exact).unwrap();
    assert_eq!(out.selected.len(), 10);
    let best = best_subset_area(&front0, 10);
    assert!((subset_area(&pts, &out.selected) - best).abs() < 1e-12);
}

#[test]
fn crowding_reference_value() {
    let d = crowding_distance(&[pt(0.0, 1.0), pt(0.5, 0.5), pt(1.0, 0.0)]);
    assert_eq!(d, vec![f64::INFINITY, 2.0, f64::INFINITY]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dominance_is_a_strict_order(a in (0.0f64..=1.0, 0.0f64..=1.0), b in (0.0f64..=1.0, 0.0f64..=1.0)) {
        let (a, b) = (pt(a.0, a.1), pt(b.0, b.1));
        prop_assert!(!dominates(&a, &a));
        prop_assert!(!(dominates(&a, &b) && dominates(&b, &a)));
    }

    #[test]
    fn sort_matches_peeling(pts in arb_points(200)) {
        let got: Vec<Vec<usize>> = nondominated_sort(&pts).into_iter().map(|f| f.indices).collect();
        prop_assert_eq!(got, peel_fronts(&pts));
    }

    #[test]
    fn hypervolume_matches_rectangle_union(pts in arb_points(50)) {
        let hv = hypervolume_2d(&pts, O).unwrap();
        prop_assert!((hv - area(&pts)).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_is_monotone_and_order_free(pts in arb_points(30), extra in (0.0f64..=1.0, 0.0f64..=1.0), seed in any::<u64>()) {
        let hv = hypervolume_2d(&pts, O).unwrap();
        let mut more = pts.clone();
        more.push(pt(extra.0, extra.1));
        prop_assert!(hypervolume_2d(&more, O).unwrap() >= hv);
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut rng(seed));
        prop_assert!((hypervolume_2d(&shuffled, O).unwrap() - hv).abs() < 1e-15);
        // a dominated addition changes nothing
        if let Some(p) = pts.first() {
            let mut with_dominated = pts.clone();
            with_dominated.push(pt(p.f1 * 0.5, p.f2 * 0.5));
            prop_assert_eq!(hypervolume_2d(&with_dominated, O).unwrap(), hv);
        }
    }

    #[test]
    fn contributions_match_leave_one_out(pts in arb_points(25)) {
        let got = hv_contributions(&pts, O).unwrap();
        let loo = loo_contributions(&pts);
        for (a, b) in got.iter().zip(&loo) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
        let total: f64 = got.iter().sum();
        prop_assert!(total <= hypervolume_2d(&pts, O).unwrap() + 1e-12);
    }

    #[test]
    fn exact_subset_is_optimal(pts in arb_points(12).prop_filter("non-empty", |p| !p.is_empty()), k in 1usize..=6) {
        let k = k.min(pts.len());
        let exact = hv_subset_select(&pts, k, O, SubsetMode::Exact).unwrap();
        let greedy = hv_subset_select(&pts, k, O, SubsetMode::Greedy).unwrap();
        prop_assert_eq!(exact.len(), k);
        prop_assert_eq!(greedy.len(), k);
        let best = best_subset_area(&pts, k);
        prop_assert!((subset_area(&pts, &exact) - best).abs() < 1e-12);
        prop_assert!(subset_area(&pts, &exact) >= subset_area(&pts, &greedy) - 1e-12);
    }

    #[test]
    fn halving_preserves_structure(pts in arb_points(14).prop_filter("non-empty", |p| !p.is_empty()), k in 1usize..=6) {
        let k = k.min(pts.len());
        let half: Vec<FitnessPoint> = pts.iter().map(|p| pt(p.f1 * 0.5, p.f2 * 0.5)).collect();
        prop_assert_eq!(nondominated_sort(&pts), nondominated_sort(&half));
        for mode in [SubsetMode::Greedy, SubsetMode::Exact] {
            prop_assert_eq!(
                hv_subset_select(&pts, k, O, mode).unwrap(),
                hv_subset_select(&half, k, O, mode).unwrap()
            );
        }
        let hv = hypervolume_2d(&pts, O).unwrap();
        prop_assert!((hypervolume_2d(&half, O).unwrap() - hv / 4.0).abs() < 1e-12);
    }

    #[test]
    fn selectors_keep_small_first_front(pts in arb_points(30).prop_filter("enough", |p| p.len() >= 10), mu in 1usize..=10) {
        let first = nondominated_sort(&pts)[0].indices.clone();
        let outs = [
            nsga2_select_points(&pts, mu).unwrap(),
            sms_emoa_select_points(&pts, mu, O, SubsetMode::Greedy).unwrap(),
            sms_emoa_select_points(&pts, mu, O, SubsetMode::Exact).unwrap(),
        ];
        for out in outs {
            prop_assert_eq!(out.selected.len(), mu);
            let mut uniq = out.selected.clone();
            uniq.dedup();
            prop_assert_eq!(uniq.len(), mu);
            if first.len() <= mu {
                prop_assert!(first.iter().all(|i| out.selected.contains(i)));
            }
        }
    }
}
