//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use swsindy::Result;

pub fn collect<I: IntoIterator<Item = Result<DVector<f64>>>>(it: I) -> Vec<DVector<f64>> {
    it.into_iter().map(|r| r.expect("stream item")).collect()
}

/// Orthonormal Fourier family on `[0, T]`: sines, cosines, constant.
pub fn fourier(t: f64, half_count: usize, horizon: f64) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; 2 * half_count + 1];
    let mut d = vec![0.0; 2 * half_count + 1];
    let a = (2.0 / horizon).sqrt();
    for k in 1..=half_count {
        let w = 2.0 * PI * k as f64 / horizon;
        v[k - 1] = a * (w * t).sin();
        d[k - 1] = a * w * (w * t).cos();
        v[half_count + k - 1] = a * (w * t).cos();
        d[half_count + k - 1] = -a * w * (w * t).sin();
    }
    v[2 * half_count] = 1.0 / horizon.sqrt();
    (v, d)
}

pub fn monomial(u: &[f64], exps: &[u32]) -> f64 {
    u.iter().zip(exps).map(|(x, &e)| x.powi(e as i32)).product()
}

/// Offline composite trapezoid weights over `n` samples.
pub fn trapezoid_weights(n: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; n];
    if n == 1 {
        w[0] = 0.0;
    } else {
        w[0] = 0.5 * dt;
        w[n - 1] = 0.5 * dt;
    }
    w
}

/// Batch weak-form system from stored data: `(b, G)` with
/// `G = Psi W Phi` and `b = -dPsi W U + psi(t_N) u_N^T - psi(t_1) u_1^T`.
pub fn batch_weak_system(
    data: &[DVector<f64>],
    t0: f64,
    dt: f64,
    half_count: usize,
    horizon: f64,
    exponents: &[Vec<u32>],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = data.len();
    let s = data[0].len();
    let k = 2 * half_count + 1;
    let w = trapezoid_weights(n, dt);
    let mut psi = DMatrix::zeros(k, n);
    let mut dpsi = DMatrix::zeros(k, n);
    for i in 0..n {
        let (v, d) = fourier(t0 + i as f64 * dt, half_count, horizon);
        for r in 0..k {
            psi[(r, i)] = v[r] * w[i];
            dpsi[(r, i)] = d[r] * w[i];
        }
    }
    let phi = DMatrix::from_fn(n, exponents.len(), |i, j| {
        monomial(data[i].as_slice(), &exponents[j])
    });
    let u = DMatrix::from_fn(n, s, |i, c| data[i][c]);
    let g = &psi * phi;
    let mut b = -(&dpsi * u);
    let (first, _) = fourier(t0, half_count, horizon);
    let (last, _) = fourier(t0 + (n - 1) as f64 * dt, half_count, horizon);
    for r in 0..k {
        for c in 0..s {
            b[(r, c)] += last[r] * data[n - 1][c] - first[r] * data[0][c];
        }
    }
    (b, g)
}

pub fn relative_frobenius(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (a - reference).norm() / reference.norm()
}

/// Right-hand side `du_s = sum_j c[j, s] phi_j(u)`.
pub fn polynomial_rhs(
    coefficients: DMatrix<f64>,
    exponents: Vec<Vec<u32>>,
) -> impl FnMut(f64, &DVector<f64>, &mut DVector<f64>) {
    move |_, u, du| {
        du.fill(0.0);
        for (j, e) in exponents.iter().enumerate() {
            let p = monomial(u.as_slice(), e);
            for s in 0..du.len() {
                du[s] += coefficients[(j, s)] * p;
            }
        }
    }
}

/// Classical RK4 on a uniform grid with `substeps` steps per sample.
pub fn rk4_grid<F>(
    mut f: F,
    y0: &DVector<f64>,
    dt: f64,
    samples: usize,
    substeps: usize,
) -> Vec<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
{
    let h = dt / substeps as f64;
    let n = y0.len();
    let (mut k1, mut k2, mut k3, mut k4) = (
        DVector::zeros(n),
        DVector::zeros(n),
        DVector::zeros(n),
        DVector::zeros(n),
    );
    let mut y = y0.clone();
    let mut out = vec![y.clone()];
    let mut t = 0.0;
    for _ in 1..samples {
        for _ in 0..substeps {
            f(t, &y, &mut k1);
            f(t + h / 2.0, &(&y + &k1 * (h / 2.0)), &mut k2);
            f(t + h / 2.0, &(&y + &k2 * (h / 2.0)), &mut k3);
            f(t + h, &(&y + &k3 * h), &mut k4);
            y += (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
            t += h;
        }
        out.push(y.clone());
    }
    out
}
