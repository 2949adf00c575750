//! Randomized invariants across module boundaries.

use aud_core::eval::{bitrate, cluster_quality};
use aud_core::frontend::FeatureSequence;
use aud_core::graph::{build_mutual_knn_graph, connected_components, dtw_distance, DistanceMatrix};
use aud_core::hmm::{
    log_emission, score_alignment, viterbi_align, viterbi_decode, GaussianMixture, Grammar, HmmUnit, UnitInventory,
    UnitKind, UnitLabel,
};
use aud_core::pipeline::Transcription;
use proptest::prelude::*;

fn sequence(max_len: usize, dim: usize) -> impl Strategy<Value = FeatureSequence> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), 1..=max_len)
        .prop_map(|frames| FeatureSequence::from_frames(&frames, 0.01, 0.025))
}

fn inventory(dim: usize, units: usize, states: usize) -> impl Strategy<Value = UnitInventory> {
    let state = (prop::collection::vec(-3.0f64..3.0, dim), prop::collection::vec(0.2f64..3.0, dim), 0.05f64..0.95);
    prop::collection::vec(prop::collection::vec(state, states), units).prop_map(move |spec| {
        let mut inv = UnitInventory::new(dim, vec![1e-3; dim]);
        for (i, unit) in spec.into_iter().enumerate() {
            inv.insert(HmmUnit {
                label: UnitLabel::new(UnitKind::Generic, i),
                states: unit.iter().map(|(m, v, _)| GaussianMixture::single(m.clone(), v.clone())).collect(),
                transitions: unit.iter().map(|(_, _, s)| [*s, 1.0 - *s]).collect(),
                occupancy: vec![1.0; unit.len()],
            });
        }
        inv
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dtw_is_symmetric_and_zero_on_the_diagonal(a in sequence(12, 2), b in sequence(12, 2)) {
        let (ab, ba) = (dtw_distance(&a, &b).unwrap(), dtw_distance(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn components_do_not_depend_on_node_order(points in prop::collection::vec(0.0f64..50.0, 1..30), k in 0usize..5) {
        let n = points.len();
        let c = connected_components(&build_mutual_knn_graph(&DistanceMatrix::from_points(&points), k));
        let reversed: Vec<f64> = points.iter().rev().copied().collect();
        let r = connected_components(&build_mutual_knn_graph(&DistanceMatrix::from_points(&reversed), k));
        // Same partition after mapping node i to n - 1 - i; ties in kNN may
        // break differently, so only compare when all distances are distinct.
        let distinct_gaps = {
            let mut all = Vec::new();
            for i in 0..n { for j in i + 1..n { all.push((points[i] - points[j]).abs()); } }
            all.sort_by(f64::total_cmp);
            all.windows(2).all(|w| w[0] != w[1])
        };
        prop_assume!(distinct_gaps);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(c.assignment[i] == c.assignment[j], r.assignment[n - 1 - i] == r.assignment[n - 1 - j]);
            }
        }
    }

    #[test]
    fn forced_alignment_tiles_and_rescores(inv in inventory(2, 3, 3), f in sequence(30, 2), pick in prop::collection::vec(0usize..3, 1..4)) {
        let transcript: Vec<UnitLabel> = pick.iter().map(|&i| UnitLabel::new(UnitKind::Generic, i)).collect();
        match viterbi_align(&inv, &f, &transcript) {
            Ok(a) => {
                prop_assert!(a.tiles(f.num_frames()));
                prop_assert_eq!(a.unit_spans().iter().map(|s| s.label).collect::<Vec<_>>(), transcript);
                let s = score_alignment(&inv, &f, &a, None).unwrap();
                prop_assert!((s - a.total_log_likelihood).abs() <= 1e-9 * s.abs().max(1.0));
            }
            Err(_) => prop_assert!(f.num_frames() < 3 * transcript.len()),
        }
    }

    #[test]
    fn decoded_transcriptions_tile(inv in inventory(2, 3, 2), f in sequence(30, 2), pen in -4.0f64..0.0) {
        prop_assume!(f.num_frames() >= 2);
        let a = viterbi_decode(&inv, &f, &Grammar::unit_loop(inv.labels(), pen)).unwrap();
        let t = Transcription::from_alignment("u", &a, 0.01, f.num_frames() as f64 * 0.01);
        prop_assert!(t.tiles());
        let s = score_alignment(&inv, &f, &a, Some(pen)).unwrap();
        prop_assert!((s - a.total_log_likelihood).abs() <= 1e-9 * s.abs().max(1.0));
    }

    #[test]
    fn emissions_are_finite_for_floored_variances(
        mean in prop::collection::vec(-1e3f64..1e3, 3),
        x in prop::collection::vec(-1e6f64..1e6, 3),
        v in 1e-6f64..1e3,
    ) {
        let g = GaussianMixture::single(mean, vec![v; 3]);
        let l = log_emission(&g, &x).unwrap();
        prop_assert!(l.is_finite());
    }

    #[test]
    fn metrics_ignore_label_names(labels in prop::collection::vec(0u8..6, 1..80), dur in 0.5f64..20.0) {
        let renamed: Vec<String> = labels.iter().map(|l| format!("unit-{}", 10 - l)).collect();
        let (b1, b2) = (bitrate([labels.as_slice()], dur).unwrap(), bitrate([renamed.as_slice()], dur).unwrap());
        prop_assert!((b1.bits_per_second - b2.bits_per_second).abs() <= 1e-9);
        let (p, n) = cluster_quality(&labels, &renamed).unwrap();
        prop_assert!((p - 1.0).abs() < 1e-12 && (n - 1.0).abs() < 1e-9);
    }
}
