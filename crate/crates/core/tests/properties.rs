//! Randomized property checks for the tensor, operator and SVD layers.

use lrtc_core::linalg::{exact_svd, hard_threshold_rank};
use lrtc_core::operators::{MeasurementOperator, SamplingOperator};
use lrtc_core::problems::make_instance;
use lrtc_core::tensor::{fold, frobenius_norm, inner, unfold, DenseMatrix, DenseTensor, NRank};
use proptest::prelude::*;

/// Shape of order 2 to 5 with small modes, plus matching data.
fn tensor_strategy() -> impl Strategy<Value = DenseTensor> {
    prop::collection::vec(2usize..5, 2..=5).prop_flat_map(|shape| {
        let len: usize = shape.iter().product();
        prop::collection::vec(-10.0f64..10.0, len)
            .prop_map(move |data| DenseTensor::from_vec(shape.clone(), data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn fold_unfold_round_trip_is_exact(t in tensor_strategy(), mode_pick in 0usize..5) {
        let mode = mode_pick % t.order();
        let back = fold(&unfold(&t, mode).unwrap(), mode, t.shape()).unwrap();
        prop_assert_eq!(back, t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 60, ..ProptestConfig::default() })]

    #[test]
    fn unfolding_is_an_isometry(t in tensor_strategy(), mode_pick in 0usize..5) {
        let mode = mode_pick % t.order();
        let m = unfold(&t, mode).unwrap();
        prop_assert!((m.frobenius_norm() - frobenius_norm(&t)).abs() <= 1e-12 * frobenius_norm(&t).max(1.0));
    }

    #[test]
    fn unfold_and_fold_are_adjoint(t in tensor_strategy(), mode_pick in 0usize..5, salt in 0u64..1000) {
        let mode = mode_pick % t.order();
        let unfolded = unfold(&t, mode).unwrap();
        let mut state = salt.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(3);
        let m = DenseMatrix::from_fn(unfolded.rows(), unfolded.cols(), |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        let lhs: f64 = unfolded.data().iter().zip(m.data()).map(|(a, b)| a * b).sum();
        let rhs = inner(&t, &fold(&m, mode, t.shape()).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn sampling_adjoint_identity(t in tensor_strategy(), density in 0.1f64..0.9, seed in 0u64..500) {
        let total: usize = t.shape().iter().product();
        let mut state = seed.wrapping_add(11);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let positions: Vec<usize> = (0..total).filter(|_| next() < density).collect();
        let op = SamplingOperator::from_flat_positions(t.shape().to_vec(), positions).unwrap();
        let v: Vec<f64> = (0..op.len()).map(|_| next() - 0.5).collect();
        let lhs: f64 = op.apply(&t).unwrap().iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs = inner(&t, &op.adjoint(&v).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));

        // the adjoint-then-apply round trip reproduces measurements exactly
        let round = op.apply(&op.adjoint(&v).unwrap()).unwrap();
        prop_assert_eq!(round, v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 20, ..ProptestConfig::default() })]

    #[test]
    fn hard_threshold_dominates_random_competitors(
        rows in 4usize..9,
        cols in 4usize..9,
        r in 1usize..3,
        salt in 0u64..10_000,
    ) {
        let mut state = salt.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(7);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let m = DenseMatrix::from_fn(rows, cols, |_, _| next());
        let best = hard_threshold_rank(&m, r).unwrap();
        let best_err = best.subtract(&m).unwrap().frobenius_norm();
        for _ in 0..100 {
            let a = DenseMatrix::from_fn(rows, r, |_, _| next());
            let b = DenseMatrix::from_fn(r, cols, |_, _| next());
            let competitor = a.matmul(&b).unwrap();
            let err = competitor.subtract(&m).unwrap().frobenius_norm();
            prop_assert!(best_err <= err * (1.0 + 1e-12));
        }
    }

    #[test]
    fn thresholded_output_stays_within_rank(
        rows in 5usize..10,
        cols in 5usize..10,
        r in 1usize..4,
        salt in 0u64..10_000,
    ) {
        let mut state = salt.wrapping_add(31);
        let m = DenseMatrix::from_fn(rows, cols, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        let out = hard_threshold_rank(&m, r).unwrap();
        let sigma = exact_svd(&out).unwrap().singular_values;
        let lead = sigma[0].max(1e-300);
        for &s in sigma.iter().skip(r) {
            prop_assert!(s <= 1e-9 * lead);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, ..ProptestConfig::default() })]

    #[test]
    fn instances_are_pure_functions_of_their_seed(seed in 0u64..1000) {
        let shape = [6, 5, 4];
        let ranks = NRank::new(vec![2, 2, 2]);
        let a = make_instance(&shape, &ranks, 0.5, 0.01, seed).unwrap();
        let b = make_instance(&shape, &ranks, 0.5, 0.01, seed).unwrap();
        prop_assert_eq!(a.ground_truth, b.ground_truth);
        prop_assert_eq!(a.observed, b.observed);
        prop_assert_eq!(a.operator, b.operator);
        prop_assert_eq!(a.b, b.b);
    }

    #[test]
    fn tensor_serialization_round_trips(t in tensor_strategy()) {
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = DenseTensor::read_from(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back, t);
    }
}
