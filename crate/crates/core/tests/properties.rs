mod common;

use dashlab::attribution::{shap_local_tree, AttributionMatrix, BackgroundSet};
use dashlab::dash::{aggregate, Aggregator};
use dashlab::stability::{empirical_flip_rate, z_test};
use ndarray::Array2;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(0.0f64..100.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_shap_matches_enumeration(seed in any::<u64>(), p in 1usize..6, depth in 1usize..5, b in 1usize..8) {
        let mut rng = common::rng(seed);
        let tree = common::random_tree(&mut rng, p, depth);
        let bg_rows = common::normal_matrix(&mut rng, b, p);
        let bg = BackgroundSet::new(bg_rows.clone()).unwrap();
        let x = common::normal_matrix(&mut rng, 1, p);
        let ours = shap_local_tree(&tree, x.row(0), &bg, p);
        let oracle = common::brute_force_shapley(
            &|v: &[f64]| tree.predict(ndarray::ArrayView1::from(v)),
            x.row(0),
            bg_rows.view(),
        );
        for (a, o) in ours.iter().zip(&oracle) {
            prop_assert!((a - o).abs() < 1e-9, "{a} vs {o}");
        }
        let mean_bg: f64 = bg_rows.rows().into_iter().map(|z| tree.predict(z)).sum::<f64>() / b as f64;
        let total: f64 = ours.iter().sum();
        prop_assert!((total - (tree.predict(x.row(0)) - mean_bg)).abs() < 1e-9);
    }

    #[test]
    fn aggregates_lie_within_column_range(m in matrix(7, 3)) {
        let attr = AttributionMatrix::from_values(m.clone()).unwrap();
        for method in [Aggregator::Mean, Aggregator::Median, Aggregator::Trimmed(0.2)] {
            let agg = aggregate(&attr, method).unwrap();
            for (j, v) in agg.iter().enumerate() {
                let col = m.column(j);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn aggregates_are_row_order_invariant(m in matrix(6, 4), shift in 1usize..6) {
        let a = AttributionMatrix::from_values(m.clone()).unwrap();
        let rows: Vec<usize> = (0..6).map(|i| (i + shift) % 6).collect();
        let b = a.select_rows(&rows);
        for method in [Aggregator::Mean, Aggregator::Median, Aggregator::Trimmed(0.2)] {
            let x = aggregate(&a, method).unwrap();
            let y = aggregate(&b, method).unwrap();
            for (u, v) in x.iter().zip(&y) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn median_ignores_a_single_outlier(m in matrix(5, 2), big in 1e6f64..1e9) {
        let mut spiked = m.clone();
        let base = aggregate(&AttributionMatrix::from_values(m.clone()).unwrap(), Aggregator::Median).unwrap();
        spiked[[0, 0]] = big;
        let after = aggregate(&AttributionMatrix::from_values(spiked).unwrap(), Aggregator::Median).unwrap();
        let col: Vec<f64> = m.column(0).to_vec();
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(after[0] <= hi + 1e-9);
        prop_assert!((after[1] - base[1]).abs() < 1e-12);
    }

    #[test]
    fn z_test_is_symmetric_in_the_pair(m in matrix(8, 2)) {
        let attr = AttributionMatrix::from_values(m).unwrap();
        let a = z_test(&attr, 0, 1).unwrap();
        let b = z_test(&attr, 1, 0).unwrap();
        prop_assert!(a.z == b.z || (a.z - b.z).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&empirical_flip_rate(&attr, 0, 1)));
    }
}
