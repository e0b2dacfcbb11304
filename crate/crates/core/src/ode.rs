//! Adaptive Dormand-Prince 5(4) integration sampled on a uniform grid.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrator state carried between grid intervals.
#[derive(Debug, Clone)]
pub struct DormandPrince {
    tol: Tolerances,
    step: Option<f64>,
    stages: Vec<DVector<f64>>,
}

impl DormandPrince {
    pub fn new(tol: Tolerances) -> Self {
        Self {
            tol,
            step: None,
            stages: Vec::new(),
        }
    }

    /// Forgets the step-size history, e.g. after a state reset.
    pub fn reset_step(&mut self) {
        self.step = None;
    }

    fn error_norm(&self, y: &DVector<f64>, y_new: &DVector<f64>, err: &DVector<f64>) -> f64 {
        let n = y.len().max(1) as f64;
        let sum: f64 = (0..y.len())
            .map(|i| {
                let scale = self.tol.atol + self.tol.rtol * y[i].abs().max(y_new[i].abs());
                (err[i] / scale).powi(2)
            })
            .sum();
        (sum / n).sqrt()
    }

    /// Advances `y` from `t0` to `t1` in place under `rhs(t, y, dy)`.
    pub fn advance<F>(&mut self, rhs: &mut F, t0: f64, t1: f64, y: &mut DVector<f64>) -> Result<()>
    where
        F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
    {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        let dim = y.len();
        if self.stages.len() != 7 || self.stages[0].len() != dim {
            self.stages = vec![DVector::zeros(dim); 7];
        }
        let mut t = t0;
        let mut h = self.step.unwrap_or(span).min(span);
        let min_step = 1e-14 * t1.abs().max(1.0);
        let mut stage_y = DVector::zeros(dim);
        let mut y_new = DVector::zeros(dim);
        let mut err = DVector::zeros(dim);
        while t < t1 {
            let last = t + h >= t1 - 1e-12 * span;
            let h_try = if last { t1 - t } else { h };
            for s in 0..7 {
                stage_y.copy_from(y);
                for (j, a) in A[s].iter().enumerate().take(s) {
                    if *a != 0.0 {
                        stage_y.axpy(h_try * a, &self.stages[j], 1.0);
                    }
                }
                let mut k = std::mem::take(&mut self.stages[s]);
                rhs(t + C[s] * h_try, &stage_y, &mut k);
                self.stages[s] = k;
            }
            y_new.copy_from(y);
            err.fill(0.0);
            for s in 0..7 {
                y_new.axpy(h_try * B[s], &self.stages[s], 1.0);
                err.axpy(h_try * (B[s] - B_LOW[s]), &self.stages[s], 1.0);
            }
            if y_new.iter().any(|v| !v.is_finite()) {
                if h_try <= min_step {
                    return Err(Error::Reconstruct {
                        time: t,
                        message: "state became non-finite".into(),
                    });
                }
                h = h_try * 0.1;
                continue;
            }
            let e = self.error_norm(y, &y_new, &err);
            if e <= 1.0 {
                t = if last { t1 } else { t + h_try };
                y.copy_from(&y_new);
                let factor = if e == 0.0 {
                    5.0
                } else {
                    (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
                };
                let next = h_try * factor;
                if !last {
                    h = next;
                }
                self.step = Some(if last { next.max(h) } else { next });
            } else {
                let factor = (0.9 * e.powf(-0.2)).clamp(0.1, 1.0);
                h = h_try * factor;
                if h < min_step {
                    return Err(Error::Reconstruct {
                        time: t,
                        message: format!("step size underflow ({h:e})"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Integrates from `y0` at `t0` and returns the states at `t0 + i*dt` for
/// `i = 0..samples`.
pub fn integrate_grid<F>(
    mut rhs: F,
    y0: &DVector<f64>,
    t0: f64,
    dt: f64,
    samples: usize,
    tol: Tolerances,
) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
{
    let mut solver = DormandPrince::new(tol);
    let mut out = Vec::with_capacity(samples);
    let mut y = y0.clone();
    for i in 0..samples {
        if i > 0 {
            let a = t0 + (i - 1) as f64 * dt;
            solver.advance(&mut rhs, a, a + dt, &mut y)?;
        }
        out.push(y.clone());
    }
    Ok(out)
}
