//! Property tests against brute-force references.

use cheapseg::crf::{alpha_expansion, max_flow, max_flow_edmonds_karp, CrfProblem, FlowNetwork};
use cheapseg::dstf::{
    class_cooccurrence, class_correlation, cluster_classes, correlation_distance, gather_budget,
    gather_training_sets, ClusterAssignment, Linkage,
};
use cheapseg::eval::{recalls, ConfusionMatrix};
use cheapseg::ilp::score_split;
use cheapseg::image::{LabelImage, Labeling, VOID};
use cheapseg::matrix::Matrix;
use proptest::prelude::*;

fn observations() -> impl Strategy<Value = Matrix> {
    (2usize..8, 3usize..40).prop_flat_map(|(c, t)| {
        prop::collection::vec(0.0f64..1.0, c * t).prop_map(move |v| Matrix::from_vec(c, t, v))
    })
}

fn presence_rows() -> impl Strategy<Value = (Vec<Vec<bool>>, Vec<bool>)> {
    (2usize..24, 1usize..6).prop_flat_map(|(n, c)| {
        (
            prop::collection::vec(prop::collection::vec(any::<bool>(), c), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

fn split(data: &[Vec<bool>], side: &[bool]) -> Option<(Vec<Vec<bool>>, Vec<Vec<bool>>)> {
    let l: Vec<_> = data
        .iter()
        .zip(side)
        .filter(|(_, &s)| s)
        .map(|(v, _)| v.clone())
        .collect();
    let r: Vec<_> = data
        .iter()
        .zip(side)
        .filter(|(_, &s)| !s)
        .map(|(v, _)| v.clone())
        .collect();
    (!l.is_empty() && !r.is_empty()).then_some((l, r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlation_is_bounded_and_symmetric(obs in observations()) {
        let omega = class_correlation(&obs).unwrap().omega;
        let c = omega.rows();
        for i in 0..c {
            prop_assert_eq!(omega.get(i, i), 1.0);
            for j in 0..c {
                prop_assert!((-1.0..=1.0).contains(&omega.get(i, j)));
                prop_assert!((omega.get(i, j) - omega.get(j, i)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn distance_is_non_negative_with_zero_diagonal(obs in observations()) {
        let d = correlation_distance(&class_correlation(&obs).unwrap().omega);
        for i in 0..d.rows() {
            prop_assert_eq!(d.get(i, i), 0.0);
            for j in 0..d.cols() {
                prop_assert!(d.get(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn clusters_respect_min_members(obs in observations(), m in 1usize..4) {
        let d = correlation_distance(&class_correlation(&obs).unwrap().omega);
        let a = cluster_classes(&d, m, Linkage::Average);
        prop_assert!(a.k == 1 || (0..a.k).all(|k| a.members(k).len() >= m));
        prop_assert_eq!(a.cluster_of.len(), d.rows());
    }

    #[test]
    fn split_score_ignores_order_within_sides((data, side) in presence_rows()) {
        if let Some((mut l, mut r)) = split(&data, &side) {
            let a = score_split(&data, &l, &r).unwrap();
            l.reverse();
            r.rotate_left(1);
            let mut p = data.clone();
            p.reverse();
            let b = score_split(&p, &l, &r).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn identical_rows_never_score_positive(row in prop::collection::vec(any::<bool>(), 1..6), n in 2usize..12, cut in 1usize..11) {
        let data = vec![row; n];
        let cut = cut.min(n - 1);
        let s = score_split(&data, &data[..cut], &data[cut..]).unwrap();
        prop_assert!(s <= 0.0);
    }

    #[test]
    fn solvers_agree_on_random_networks(n in 2usize..9, arcs in prop::collection::vec((0usize..8, 0usize..8, 0u8..=10), 0..40)) {
        let mut net = FlowNetwork::new(n, 0, n - 1).unwrap();
        for (u, v, c) in arcs {
            if u < n && v < n {
                net.add_arc(u, v, c as f64).unwrap();
            }
        }
        let a = max_flow(&net);
        let b = max_flow_edmonds_karp(&net);
        prop_assert_eq!(a.flow, b.flow);
        prop_assert_eq!(net.cut_capacity(&a.source_side), a.flow);
    }

    #[test]
    fn expansion_never_increases_energy(
        (w, h, c) in (1usize..5, 1usize..5, 2usize..4),
        seed in prop::collection::vec(0.0f64..5.0, 64),
        lambda in 0.0f64..4.0,
    ) {
        let unary: Vec<f64> = (0..w * h * c).map(|i| seed[i % seed.len()] + (i % 7) as f64 * 0.13).collect();
        let p = CrfProblem::new(w, h, c, unary, lambda).unwrap();
        let init = Labeling::uniform(w, h, c - 1);
        let e0 = p.energy(&init).unwrap();
        let out = alpha_expansion(&p, &init, 20).unwrap();
        prop_assert!(out.energy <= e0 + 1e-9);
        prop_assert!(out.history.windows(2).all(|s| s[1] <= s[0] + 1e-9));
        prop_assert!((p.energy(&out.labeling).unwrap() - out.energy).abs() <= 1e-9);
    }

    #[test]
    fn recall_is_invariant_to_pixel_order(pairs in prop::collection::vec((0usize..4, 0u8..5), 1..80), shift in 0usize..80) {
        let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<u8> = pairs.iter().map(|p| if p.1 == 4 { VOID } else { p.1 }).collect();
        if truth.iter().all(|&t| t == VOID) {
            return Ok(());
        }
        let n = pred.len();
        let score = |pred: Vec<usize>, truth: Vec<u8>| {
            let mut conf = ConfusionMatrix::new(4);
            conf.accumulate(&Labeling::new(n, 1, pred).unwrap(), &LabelImage::new(n, 1, truth).unwrap()).unwrap();
            recalls(&conf).unwrap()
        };
        let a = score(pred.clone(), truth.clone());
        let (mut p2, mut t2) = (pred, truth);
        p2.rotate_left(shift % n);
        t2.rotate_left(shift % n);
        let b = score(p2, t2);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn gathered_sets_are_bounded_and_distinct(
        labels in prop::collection::vec(prop::collection::vec(0u8..6, 16), 4..40),
        cap in 0.05f64..1.0,
    ) {
        let images: Vec<LabelImage> = labels.into_iter().map(|l| LabelImage::new(4, 4, l).unwrap()).collect();
        let refs: Vec<&LabelImage> = images.iter().collect();
        let co = class_cooccurrence(&refs, 6);
        let a = ClusterAssignment::from_groups(6, &[vec![0, 2, 4], vec![1, 3, 5]]);
        let sets = gather_training_sets(&a, &co.psi, &refs, cap).unwrap();
        let budget = gather_budget(cap, refs.len());
        for s in &sets {
            prop_assert!(s.len() <= budget);
            let mut u = s.clone();
            u.sort_unstable();
            u.dedup();
            prop_assert_eq!(u.len(), s.len());
            prop_assert!(s.iter().all(|&i| i < refs.len()));
        }
    }
}
