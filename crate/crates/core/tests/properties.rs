//! Property tests for invariants that hold for arbitrary inputs.

mod common;

use std::io::Cursor;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use swsindy::bases::{DegreePolicy, FourierTestBasis, MonomialBasis};
use swsindy::codec::{StreamReader, StreamWriter};
use swsindy::pod::init_from_window;
use swsindy::quadrature::{QuadratureRule, StreamIntegrator};
use swsindy::regression::{stlsq, FitConfig, FitStatus};
use swsindy::wsindy::WeakAccumulator;

use common::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn samples(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stlsq_keeps_only_coefficients_above_threshold(
        g in matrix(30, 8),
        b in prop::collection::vec(-1.0f64..1.0, 30),
        threshold in 0.0f64..0.5,
        lambda in prop::sample::select(vec![0.0, 1e-6, 1e-2]),
    ) {
        let b = DVector::from_vec(b);
        let fit = stlsq(&g, &b, &FitConfig::new(threshold, lambda).unwrap()).unwrap();
        prop_assert_eq!(fit.len(), 8);
        for (j, v) in fit.values().iter().enumerate() {
            if fit.support().contains(&j) {
                prop_assert!(v.abs() >= threshold);
            } else {
                prop_assert_eq!(*v, 0.0);
            }
        }
        if fit.status() == FitStatus::EmptySupport {
            prop_assert!(fit.support().is_empty());
        }
    }

    #[test]
    fn stlsq_without_threshold_is_least_squares(g in matrix(25, 5), b in prop::collection::vec(-1.0f64..1.0, 25)) {
        let b = DVector::from_vec(b);
        let fit = stlsq(&g, &b, &FitConfig::new(0.0, 0.0).unwrap()).unwrap();
        let normal = g.tr_mul(&(&g * fit.values() - &b));
        prop_assert!(normal.amax() <= 1e-9);
    }

    #[test]
    fn trapezoid_stream_matches_offline_weights(values in samples(1..300), dt in 1e-3f64..1.0) {
        let mut q = StreamIntegrator::new(QuadratureRule::trapezoid(dt).unwrap(), &0.0);
        for v in &values {
            q.push(v).unwrap();
        }
        let streamed = *q.finalize().unwrap();
        let w = trapezoid_weights(values.len(), dt);
        let batch: f64 = values.iter().zip(&w).map(|(v, w)| v * w).sum();
        let scale = values.iter().map(|v| v.abs()).sum::<f64>() * dt + 1.0;
        prop_assert!((streamed - batch).abs() <= 1e-12 * scale);
    }

    #[test]
    fn quadrature_is_linear(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..200),
        a in -3.0f64..3.0,
        nodes in 2usize..=5,
    ) {
        let rule = QuadratureRule::newton_cotes(nodes, 0.1).unwrap();
        let integrate = |f: &dyn Fn(&(f64, f64)) -> f64| {
            let mut q = StreamIntegrator::new(rule.clone(), &0.0);
            for p in &pairs {
                q.push(&f(p)).unwrap();
            }
            *q.finalize().unwrap()
        };
        let combined = integrate(&|p| a * p.0 + p.1);
        let separate = a * integrate(&|p| p.0) + integrate(&|p| p.1);
        prop_assert!((combined - separate).abs() <= 1e-10 * (1.0 + separate.abs()));
    }

    #[test]
    fn weak_accumulator_matches_batch_system(
        data in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 2..80),
        half_count in 1usize..6,
    ) {
        let dt = 0.05;
        let data: Vec<DVector<f64>> = data.into_iter().map(DVector::from_vec).collect();
        let horizon = dt * (data.len() - 1) as f64;
        let projection = MonomialBasis::new(2, DegreePolicy::Total(2)).unwrap();
        let test = FourierTestBasis::new(half_count, horizon).unwrap();
        let mut acc = WeakAccumulator::new(projection.clone(), test, 2, dt).unwrap();
        for (i, u) in data.iter().enumerate() {
            acc.push(i as f64 * dt, u).unwrap();
        }
        acc.finish().unwrap();
        let (b, g) = acc.into_parts();
        let (b_ref, g_ref) = batch_weak_system(&data, 0.0, dt, half_count, horizon, projection.exponents());
        prop_assert!((&g - &g_ref).amax() <= 1e-10 * (1.0 + g_ref.amax()));
        prop_assert!((&b - &b_ref).amax() <= 1e-10 * (1.0 + b_ref.amax()));
    }

    #[test]
    fn projection_and_residual_split_the_norm(window in matrix(20, 6), v in prop::collection::vec(-1.0f64..1.0, 20)) {
        let v = DVector::from_vec(v);
        prop_assume!(v.norm() > 1e-3);
        let svd = init_from_window(&window, 1e-3, 0.1, true, 5).unwrap();
        let basis = svd.basis;
        let coeff = basis.temporal_coefficient(&v).unwrap();
        let r = basis.residual(&v).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
        let split = coeff.norm_squared() / v.norm_squared() + r * r;
        prop_assert!((split - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn added_mode_absorbs_its_trigger(window in matrix(15, 4), v in prop::collection::vec(-1.0f64..1.0, 15)) {
        let v = DVector::from_vec(v);
        prop_assume!(v.norm() > 1e-3);
        let mut basis = init_from_window(&window, 1e-3, 0.05, true, 3).unwrap().basis;
        prop_assume!(basis.residual(&v).unwrap() > 1e-4);
        let before = basis.len();
        let added = basis.maybe_add_mode(&v, 10).unwrap();
        if added {
            prop_assert_eq!(basis.len(), before + 1);
            prop_assert!(basis.residual(&v).unwrap() <= 1e-10);
            prop_assert_eq!(*basis.births().last().unwrap(), 10);
        }
        prop_assert!(basis.orthonormality_error() <= 1e-10);
    }

    #[test]
    fn snapshot_stream_round_trips(frames in prop::collection::vec(prop::collection::vec(any::<f64>(), 3), 0..40)) {
        let mut w = StreamWriter::new(Vec::new(), 3, 0.5).unwrap();
        for f in &frames {
            w.write_frame(&DVector::from_column_slice(f)).unwrap();
        }
        let bytes = w.finish().unwrap();
        let back: Vec<DVector<f64>> = StreamReader::new(Cursor::new(bytes)).unwrap().map(Result::unwrap).collect();
        prop_assert_eq!(back.len(), frames.len());
        for (a, b) in frames.iter().zip(&back) {
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
