//! Acceptance suite, run without the libtest harness so every criterion
//! prints one PASS/FAIL line. Exits nonzero if any criterion fails.

mod common;

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swsindy::archive::fit_run;
use swsindy::bases::{DegreePolicy, FourierTestBasis, MonomialBasis};
use swsindy::codec::{OfflineReport, OnlineReport};
use swsindy::config::CompressConfig;
use swsindy::datagen::{
    drifting_field, lorenz, synthetic_field, DriftSpec, FieldSpec, LORENZ_DEFAULT_DT,
    LORENZ_DEFAULT_INITIAL,
};
use swsindy::pipeline::{build, process_stream};
use swsindy::pod::{init_from_window, PodEvent, PodSettings, ReinitPolicy, StreamingPod};
use swsindy::quadrature::{QuadratureRule, StreamIntegrator};
use swsindy::reconstruct::{error_metrics, pod_projection, Decompressor, ResetPolicy};
use swsindy::regression::{stlsq, FitConfig};
use swsindy::wsindy::WeakAccumulator;

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lorenz_data(n: usize) -> Vec<DVector<f64>> {
    collect(lorenz(n, LORENZ_DEFAULT_DT, LORENZ_DEFAULT_INITIAL).unwrap())
}

fn fit_columns(b: &DMatrix<f64>, g: &DMatrix<f64>, cfg: &FitConfig) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(g.ncols(), b.ncols());
    for s in 0..b.ncols() {
        let fit = stlsq(g, &b.column(s).into_owned(), cfg).unwrap();
        c.set_column(s, fit.values());
    }
    c
}

fn streaming_equivalence() -> Outcome {
    let start = Instant::now();
    let n = 10_001;
    let dt = LORENZ_DEFAULT_DT;
    let horizon = dt * (n - 1) as f64;
    let data = lorenz_data(n);
    let projection = MonomialBasis::new(3, DegreePolicy::Max(1)).unwrap();
    let test = FourierTestBasis::new(20, horizon).unwrap();
    let mut acc = WeakAccumulator::new(projection.clone(), test, 3, dt).unwrap();
    for (i, u) in data.iter().enumerate() {
        acc.push(i as f64 * dt, u).unwrap();
    }
    acc.finish().unwrap();
    let (b_s, g_s) = acc.into_parts();
    let cfg = FitConfig::new(0.1, 0.0).unwrap();
    let c_s = fit_columns(&b_s, &g_s, &cfg);
    let elapsed = start.elapsed().as_secs_f64();

    let exps = projection.exponents().to_vec();
    let (b_b, g_b) = batch_weak_system(&data, 0.0, dt, 20, horizon, &exps);
    let eg = relative_frobenius(&g_s, &g_b);
    let eb = relative_frobenius(&b_s, &b_b);
    let c_b = fit_columns(&b_b, &g_b, &cfg);

    let y0 = data[0].clone();
    let x_s = rk4_grid(polynomial_rhs(c_s, exps.clone()), &y0, dt, n, 1);
    let x_b = rk4_grid(polynomial_rhs(c_b, exps), &y0, dt, n, 1);
    let num: f64 = x_s.iter().zip(&x_b).map(|(a, b)| (a - b).lp_norm(1)).sum();
    let den: f64 = x_b.iter().map(|b| b.lp_norm(1)).sum();
    let l1 = num / den;
    check(
        g_s.shape() == (41, 8) && eg <= 1e-10 && eb <= 1e-10 && l1 < 0.01 && elapsed < 30.0,
        format!("G rel {eg:.2e}, b rel {eb:.2e}, trajectory L1 {l1:.2e}, streaming {elapsed:.2} s"),
    )
}

fn coefficient_recovery() -> Outcome {
    let n = 10_001;
    let cfg = CompressConfig::lorenz_default(LORENZ_DEFAULT_DT, n);
    let run = process_stream(
        lorenz(n, LORENZ_DEFAULT_DT, LORENZ_DEFAULT_INITIAL).unwrap(),
        &cfg,
    )
    .unwrap();
    let arc = fit_run(&run, &cfg).unwrap();
    let epoch = &arc.epochs[0];
    let col = |e: [u32; 3]| epoch.projection.index_of(&e).unwrap();
    let expected: [Vec<([u32; 3], f64)>; 3] = [
        vec![([1, 0, 0], -10.0), ([0, 1, 0], 10.0)],
        vec![([1, 0, 0], 28.0), ([0, 1, 0], -1.0), ([1, 0, 1], -1.0)],
        vec![([0, 0, 1], -8.0 / 3.0), ([1, 1, 0], 1.0)],
    ];
    let mut worst = 0.0f64;
    let mut supports_ok = true;
    for (s, terms) in expected.iter().enumerate() {
        let c = &epoch.coefficients[s];
        let mut want: Vec<usize> = terms.iter().map(|(e, _)| col(*e)).collect();
        want.sort_unstable();
        supports_ok &= c.support() == want.as_slice();
        for (e, v) in terms {
            worst = worst.max(((c.values()[col(*e)] - v) / v).abs());
        }
    }
    check(
        supports_ok && worst <= 0.01,
        format!("supports match: {supports_ok}, worst relative coefficient error {worst:.2e}"),
    )
}

fn storage_accounting() -> Outcome {
    let n = 10_001;
    let cfg = CompressConfig::lorenz_default(LORENZ_DEFAULT_DT, n);
    let run = process_stream(
        lorenz(n, LORENZ_DEFAULT_DT, LORENZ_DEFAULT_INITIAL).unwrap(),
        &cfg,
    )
    .unwrap();
    let online = OnlineReport::of(&run);
    let offline = OfflineReport::of(&fit_run(&run, &cfg).unwrap()).unwrap();
    check(
        online.feature_entries == 41 * 8
            && online.target_entries == 41 * 3
            && offline.dense_coefficient_entries == 8 * 3
            && online.stream_entries == 3 * 10_001,
        format!(
            "online {} + {}, offline {}, data {}",
            online.feature_entries,
            online.target_entries,
            offline.dense_coefficient_entries,
            online.stream_entries
        ),
    )
}

/// Free-run errors of a model trained on `n` samples of the same interval `[0, 10]`.
fn sup_norm_errors(n: usize) -> [f64; 3] {
    let dt = 10.0 / (n - 1) as f64;
    let cfg = CompressConfig::lorenz_default(dt, n);
    let data = collect(lorenz(n, dt, LORENZ_DEFAULT_INITIAL).unwrap());
    let run = process_stream(data.iter().cloned().map(Ok), &cfg).unwrap();
    let arc = fit_run(&run, &cfg).unwrap();
    let approx = collect(
        Decompressor::field(&arc)
            .unwrap()
            .with_policy(ResetPolicy::BirthsOnly),
    );
    let mut out = [0.0; 3];
    for (s, o) in out.iter_mut().enumerate() {
        let err = data
            .iter()
            .zip(&approx)
            .map(|(u, a)| (u[s] - a[s]).abs())
            .fold(0.0, f64::max);
        let scale = data.iter().map(|u| u[s].abs()).fold(0.0, f64::max);
        *o = 100.0 * err / scale;
    }
    out
}

fn error_trend() -> Outcome {
    let short = sup_norm_errors(2_000);
    let long = sup_norm_errors(10_000);
    check(
        short.iter().zip(&long).all(|(s, l)| l < s),
        format!("sup-norm % error N=2000 {short:.3?}, N=10000 {long:.3?}"),
    )
}

fn problem_set_sizes() -> Outcome {
    let spec = FieldSpec::late_onset(16, 24, 1_000, 0.01, 14, &[400, 700]);
    let mut cfg = CompressConfig::lorenz_default(spec.dt, spec.steps);
    cfg.test_basis.half_count = 99;
    cfg.projection = DegreePolicy::Total(2);
    cfg.pod = Some(PodSettings {
        init_window: 100,
        spectral_threshold: 1e-8,
        residual_threshold: 0.1,
        normalize_spectrum: true,
        reinit: None,
    });
    let run = process_stream(synthetic_field(&spec).unwrap(), &cfg).unwrap();
    let problems = &run.epochs[0].problems;
    let shapes = build(problems).unwrap().block_shapes();
    let want = vec![
        (199, 120),
        (199, 120),
        (199, 120),
        (199, 16),
        (199, 16),
        (199, 17),
    ];
    let targets = problems.target_entries();
    let total = problems.stored_entries();
    check(
        run.epochs.len() == 1
            && shapes == want
            && targets == 199 * (14 * 3) + 199 * 3
            && total == 90_346
            && problems.closed_form_entries() == total,
        format!("blocks {shapes:?}, targets {targets}, total {total}"),
    )
}

fn truncation_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let spectrum = DVector::from_fn(50, |i, _| 10f64.powf(-(i as f64) / 10.0));
        let a = DMatrix::from_fn(200, 50, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        let b = DMatrix::from_fn(50, 50, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        let d = &a * DMatrix::from_diagonal(&spectrum) * b.transpose()
            + DMatrix::from_fn(200, 50, |_, _| 1e-6 * rng.random_range(-1.0..1.0));
        let threshold = rng.random_range(0.01..0.3);
        let svd = init_from_window(&d, threshold, 0.1, true, 49).unwrap();
        let p = svd.basis.modes();
        let lhs = (&d - p * p.tr_mul(&d)).norm_squared();
        let mut eig = SymmetricEigen::new(d.tr_mul(&d))
            .eigenvalues
            .as_slice()
            .to_vec();
        eig.sort_by(|x, y| y.total_cmp(x));
        let rhs: f64 = eig[p.ncols()..].iter().sum();
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    check(
        worst <= 1e-8,
        format!("worst relative gap {worst:.2e} over 10 windows"),
    )
}

fn pod_trigger() -> Outcome {
    let p0 = 100;
    let onset = p0 + 50;
    let spec = FieldSpec::late_onset(40, 80, 400, 0.01, 7, &[onset]);
    let mut pod = StreamingPod::new(PodSettings {
        init_window: p0,
        spectral_threshold: 1e-6,
        residual_threshold: 0.1,
        normalize_spectrum: false,
        reinit: None,
    })
    .unwrap();
    let mut births = Vec::new();
    let mut post_residual = 0.0f64;
    let mut drift = 0.0f64;
    for (i, u) in synthetic_field(&spec).unwrap().enumerate() {
        let u = u.unwrap();
        if let PodEvent::Projected { added: true, .. } = pod.observe(i, &u).unwrap() {
            births.push(i);
            post_residual = post_residual.max(pod.basis().unwrap().residual(&u).unwrap());
        }
        if let Some(b) = pod.basis() {
            drift = drift.max(b.orthonormality_error());
        }
    }
    check(
        births.len() == 1 && births[0] >= onset && births[0] <= onset + 5 && post_residual <= 1e-10 && drift <= 1e-10,
        format!("additions at {births:?} (onset {onset}), residual after {post_residual:.2e}, orthonormality {drift:.2e}"),
    )
}

fn end_to_end() -> Outcome {
    let spec = FieldSpec::late_onset(40, 80, 2_000, 0.01, 7, &[700]);
    let mut cfg = CompressConfig::lorenz_default(spec.dt, spec.steps);
    cfg.test_basis.half_count = 30;
    cfg.projection = DegreePolicy::Total(2);
    cfg.restart_stride = 200;
    cfg.pod = Some(PodSettings {
        init_window: 100,
        spectral_threshold: 1e-6,
        residual_threshold: 0.1,
        normalize_spectrum: false,
        reinit: None,
    });
    cfg.fit = FitConfig::new(0.05, 1e-6).unwrap();
    let run = process_stream(synthetic_field(&spec).unwrap(), &cfg).unwrap();
    let arc = fit_run(&run, &cfg).unwrap();
    let truth = collect(synthetic_field(&spec).unwrap());
    let projected: Vec<_> = truth
        .iter()
        .enumerate()
        .map(|(i, u)| pod_projection(&arc, i, u))
        .collect();
    let metrics = error_metrics(
        truth.iter().cloned().map(Ok),
        Decompressor::field(&arc).unwrap(),
        projected,
    )
    .unwrap();
    let within = metrics
        .iter()
        .filter(|m| match (m.overall, m.truncation) {
            (Some(e), Some(t)) => e <= t + 2.0,
            _ => false,
        })
        .count();
    let fraction = within as f64 / metrics.len() as f64;
    let ratio = OfflineReport::of(&arc).unwrap().ratio();
    check(
        fraction >= 0.95 && ratio <= 0.10,
        format!(
            "{:.1}% of snapshots within truncation + 2 pp, archive {:.3}% of stream",
            100.0 * fraction,
            100.0 * ratio
        ),
    )
}

fn quadrature_properties() -> Outcome {
    let mut worst_exact = 0.0f64;
    for nodes in 2..=QuadratureRule::MAX_NODES {
        let panels = 7;
        let n = panels * (nodes - 1) + 1;
        let dt = 0.37;
        let rule = QuadratureRule::newton_cotes(nodes, dt).unwrap();
        for degree in 0..=rule.exact_degree() {
            let mut q = StreamIntegrator::new(rule.clone(), &0.0);
            for i in 0..n {
                q.push(&(i as f64 * dt).powi(degree as i32)).unwrap();
            }
            let got = *q.finalize().unwrap();
            let t = (n - 1) as f64 * dt;
            let exact = t.powi(degree as i32 + 1) / (degree + 1) as f64;
            worst_exact = worst_exact.max((got - exact).abs() / exact);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dt = 1e-3;
    let samples: Vec<DVector<f64>> = (0..5_000)
        .map(|_| DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0)))
        .collect();
    let mut q = StreamIntegrator::new(QuadratureRule::trapezoid(dt).unwrap(), &DVector::zeros(4));
    for s in &samples {
        q.push(s).unwrap();
    }
    let streamed = q.finalize().unwrap().clone();
    let w = trapezoid_weights(samples.len(), dt);
    let batch = samples
        .iter()
        .zip(&w)
        .fold(DVector::zeros(4), |acc, (s, w)| acc + s * *w);
    let stream_gap = (&streamed - &batch).norm() / batch.norm();

    let footprint = |n: usize| {
        let projection = MonomialBasis::new(3, DegreePolicy::Total(2)).unwrap();
        let test = FourierTestBasis::new(10, (n - 1) as f64 * dt).unwrap();
        let mut acc = WeakAccumulator::new(projection, test, 3, dt).unwrap();
        let before = acc.heap_bytes();
        for (i, u) in samples.iter().take(n).enumerate() {
            acc.push(i as f64 * dt, &u.rows(0, 3).into_owned()).unwrap();
        }
        acc.finish().unwrap();
        (before, acc.heap_bytes())
    };
    let (small_before, small_after) = footprint(10);
    let (_, large_after) = footprint(5_000);
    check(
        worst_exact <= 1e-12 && stream_gap <= 1e-12 && small_before == small_after && small_after == large_after,
        format!(
            "polynomial exactness {worst_exact:.2e}, streaming vs batch {stream_gap:.2e}, footprint {small_after} B at N=10 and N=5000"
        ),
    )
}

fn max_modes(settings: PodSettings) -> (usize, usize) {
    let mut pod = StreamingPod::new(settings).unwrap();
    let mut most = 0;
    for (i, u) in drifting_field(&DriftSpec::default()).unwrap().enumerate() {
        pod.observe(i, &u.unwrap()).unwrap();
        most = most.max(pod.mode_count());
    }
    (most, pod.reinitializations())
}

fn reinit_remedy() -> Outcome {
    let base = PodSettings {
        init_window: 50,
        spectral_threshold: 0.1,
        residual_threshold: 0.1,
        normalize_spectrum: false,
        reinit: None,
    };
    let (grown, _) = max_modes(base);
    let (capped, reinits) = max_modes(PodSettings {
        reinit: Some(ReinitPolicy {
            mode_cap: 9,
            relaxed_residual_threshold: Some(0.15),
        }),
        ..base
    });
    check(
        grown > 30 && capped < 10,
        format!("without reinit {grown} modes; with reinit at most {capped} modes ({reinits} reinitializations)"),
    )
}

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 10] = [
        ("streaming matches batch weak form", streaming_equivalence),
        ("Lorenz coefficient recovery", coefficient_recovery),
        ("Lorenz storage accounting", storage_accounting),
        ("error decreases with more snapshots", error_trend),
        (
            "block system sizes with two mode additions",
            problem_set_sizes,
        ),
        ("POD truncation identity", truncation_identity),
        ("streaming POD trigger", pod_trigger),
        ("end-to-end field compression", end_to_end),
        ("quadrature properties", quadrature_properties),
        ("reinitialization bounds mode count", reinit_remedy),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                println!("criterion {:>2} FAIL  {name}: {d} [{secs:.1} s]", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("all {} criteria passed", criteria.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
