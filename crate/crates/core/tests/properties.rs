//! Randomized invariants: CSV round trips, threshold operator identities,
//! and exact behavior of scale-free stages under power-of-two scaling.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rpca_synth::{
    from_csv_str, kmeans, rmspe, silhouette, singular_value_threshold, soft_threshold, Layout,
    PanelTable,
};

/// Labels that stress CSV quoting. Inner whitespace survives, but the
/// readers trim field edges, so no fragment starts or ends with a space.
const LABEL_FRAGMENTS: &[&str] = &["alpha", "b,c", "d\"e", "f g", "h,\"i\"", "NA", "0.5"];

fn finite_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => -1e6f64..1e6,
        1 => (-50i32..50).prop_map(f64::from),
        1 => Just(0.0),
    ]
}

fn table_strategy() -> impl Strategy<Value = PanelTable> {
    (1usize..=5, 2usize..=6).prop_flat_map(|(m, t)| {
        let labels = prop::collection::vec(prop::sample::select(LABEL_FRAGMENTS), m)
            .prop_map(|frags| {
                frags
                    .into_iter()
                    .enumerate()
                    .map(|(i, f)| format!("{f}{i}"))
                    .collect::<Vec<String>>()
            });
        let times = (-5.0f64..5.0, prop::collection::vec(0.25f64..3.0, t)).prop_map(
            |(start, steps)| {
                let mut label = start;
                steps
                    .into_iter()
                    .map(|s| {
                        label += s;
                        label
                    })
                    .collect::<Vec<f64>>()
            },
        );
        let values = prop::collection::vec(finite_value(), m * t);
        let mask = prop::collection::vec(prop::bool::weighted(0.7), m * t);
        (labels, times, values, mask).prop_map(move |(unit_labels, time_labels, v, mut b)| {
            // The long layout drops unobserved cells, so a unit or period
            // with no observations would vanish. Pin one cell per row and
            // per column to keep both layouts lossless.
            for i in 0..m {
                b[i * t + i % t] = true;
            }
            for j in 0..t {
                b[(j % m) * t + j] = true;
            }
            PanelTable {
                values: DMatrix::from_fn(m, t, |i, j| v[i * t + j]),
                mask: DMatrix::from_fn(m, t, |i, j| b[i * t + j]),
                unit_labels,
                time_labels,
            }
        })
    })
}

fn assert_tables_match(original: &PanelTable, parsed: &PanelTable) {
    assert_eq!(parsed.unit_labels, original.unit_labels);
    assert_eq!(parsed.time_labels, original.time_labels);
    assert_eq!(parsed.mask, original.mask);
    for i in 0..original.values.nrows() {
        for j in 0..original.values.ncols() {
            if original.mask[(i, j)] {
                assert_eq!(parsed.values[(i, j)], original.values[(i, j)]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trips_are_lossless(table in table_strategy()) {
        let wide = from_csv_str(&table.to_wide_csv(), Layout::Wide).unwrap();
        assert_tables_match(&table, &wide);
        let long = from_csv_str(&table.to_long_csv(), Layout::Long).unwrap();
        assert_tables_match(&table, &long);
    }
}

proptest! {
    #[test]
    fn soft_threshold_shrinks_toward_zero(
        cells in prop::collection::vec(-10.0f64..10.0, 1..24),
        tau in 0.0f64..3.0,
    ) {
        let x = DMatrix::from_vec(cells.len(), 1, cells);
        let z = soft_threshold(&x, tau).unwrap();
        for i in 0..x.nrows() {
            let (v, s) = (x[(i, 0)], z[(i, 0)]);
            prop_assert!((s - v).abs() <= tau + 1e-15);
            if v.abs() <= tau {
                prop_assert_eq!(s, 0.0);
            } else {
                prop_assert_eq!(s.signum(), v.signum());
                prop_assert!(s.abs() < v.abs());
            }
        }
    }

    #[test]
    fn singular_value_threshold_shaves_the_spectrum(
        cells in prop::collection::vec(-5.0f64..5.0, 1..25),
        rows in 1usize..=5,
        tau in 0.0f64..4.0,
    ) {
        let rows = rows.min(cells.len());
        let cols = cells.len() / rows;
        let x = DMatrix::from_fn(rows, cols, |i, j| cells[i * cols + j]);
        let z = singular_value_threshold(&x, tau).unwrap();
        let before = x.svd(false, false).singular_values;
        let after = z.svd(false, false).singular_values;
        for i in 0..after.len() {
            prop_assert!((after[i] - (before[i] - tau).max(0.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn rmspe_is_positively_homogeneous(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..20),
        c in prop_oneof![-8.0f64..-0.5, 0.5f64..8.0],
    ) {
        let (actual, predicted): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let scaled_a: Vec<f64> = actual.iter().map(|v| c * v).collect();
        let scaled_p: Vec<f64> = predicted.iter().map(|v| c * v).collect();
        let base = rmspe(&actual, &predicted, 0..actual.len()).unwrap();
        let scaled = rmspe(&scaled_a, &scaled_p, 0..actual.len()).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + scaled));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Multiplying by a power of two commutes with every rounding step, so
    /// the Lloyd trajectory is bitwise identical and the summaries scale
    /// exactly.
    #[test]
    fn kmeans_is_exact_under_power_of_two_scaling(
        cells in prop::collection::vec(-100.0f64..100.0, 12..60),
        k in 2usize..=4,
        seed in 0u64..50,
    ) {
        let d = 3;
        let m = cells.len() / d;
        prop_assume!(m > k);
        let mut points = DMatrix::from_fn(m, d, |i, j| cells[i * d + j]);
        for i in 0..m {
            // Guarantee distinct rows even after proptest shrinks the cells
            // toward equal values.
            points[(i, 0)] += i as f64;
        }
        let scaled = &points * 4.0;
        let one = kmeans(&points, k, 3, seed).unwrap();
        let two = kmeans(&scaled, k, 3, seed).unwrap();
        prop_assert_eq!(&one.assignment, &two.assignment);
        prop_assert_eq!(16.0 * one.wss, two.wss);
        prop_assert_eq!(one.silhouette.to_bits(), two.silhouette.to_bits());
        prop_assert_eq!(silhouette(&points, &one).unwrap(), one.silhouette);
        prop_assert!(one.silhouette >= -1.0 - 1e-12 && one.silhouette <= 1.0 + 1e-12);
    }
}
