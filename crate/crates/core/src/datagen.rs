//! Deterministic test-data generators.

use std::f64::consts::TAU;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};
use crate::ode::{DormandPrince, Tolerances};

pub const LORENZ_DEFAULT_STEPS: usize = 10_001;
pub const LORENZ_DEFAULT_DT: f64 = 1e-3;
pub const LORENZ_DEFAULT_INITIAL: [f64; 3] = [-8.0, 8.0, 27.0];

pub fn lorenz_rhs(u: &DVector<f64>, du: &mut DVector<f64>) {
    du[0] = 10.0 * (u[1] - u[0]);
    du[1] = u[0] * (28.0 - u[2]) - u[1];
    du[2] = u[0] * u[1] - 8.0 / 3.0 * u[2];
}

/// Lazily integrated Lorenz trajectory on a uniform grid.
#[derive(Debug, Clone)]
pub struct LorenzStream {
    state: DVector<f64>,
    dt: f64,
    index: usize,
    steps: usize,
    solver: DormandPrince,
}

impl Iterator for LorenzStream {
    type Item = Result<DVector<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.index >= self.steps {
            return None;
        }
        if self.index > 0 {
            let t0 = (self.index - 1) as f64 * self.dt;
            let mut rhs = |_: f64, u: &DVector<f64>, du: &mut DVector<f64>| lorenz_rhs(u, du);
            if let Err(e) = self
                .solver
                .advance(&mut rhs, t0, t0 + self.dt, &mut self.state)
            {
                self.index = self.steps;
                return Some(Err(e));
            }
        }
        self.index += 1;
        Some(Ok(self.state.clone()))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.steps - self.index;
        (left, Some(left))
    }
}

/// `steps` samples of the classical Lorenz system spaced `dt`, starting at
/// `initial`.
pub fn lorenz(steps: usize, dt: f64, initial: [f64; 3]) -> Result<LorenzStream> {
    if steps < 2 {
        return Err(argument("at least two Lorenz samples are required"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(argument("dt must be positive"));
    }
    Ok(LorenzStream {
        state: DVector::from_row_slice(&initial),
        dt,
        index: 0,
        steps,
        solver: DormandPrince::new(Tolerances::default()),
    })
}

/// Amplitude of a field component over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    /// `offset + amplitude cos(2 pi frequency t + phase)`
    Harmonic {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// `amplitude cos(2 pi f1 t + p1) cos(2 pi f2 t + p2)`
    Product {
        amplitude: f64,
        frequencies: [f64; 2],
        phases: [f64; 2],
    },
}

impl Signal {
    pub fn constant(value: f64) -> Self {
        Signal::Harmonic {
            offset: value,
            amplitude: 0.0,
            frequency: 0.0,
            phase: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Signal::Harmonic {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (TAU * frequency * t + phase).cos(),
            Signal::Product {
                amplitude,
                frequencies,
                phases,
            } => {
                amplitude
                    * (TAU * frequencies[0] * t + phases[0]).cos()
                    * (TAU * frequencies[1] * t + phases[1]).cos()
            }
        }
    }
}

/// One spatial pattern with its temporal signal. The pattern is the
/// `pattern`-th member of the orthonormal grid family (see [`grid_pattern`]).
/// With an onset the component is zero before that snapshot index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldComponent {
    pub pattern: usize,
    pub signal: Signal,
    #[serde(default)]
    pub onset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub height: usize,
    pub width: usize,
    pub steps: usize,
    pub dt: f64,
    pub components: Vec<FieldComponent>,
}

/// Wave numbers and kind of the `index`-th grid pattern: `(kx, ky, kind)` with
/// kind bit 0 selecting sine in x and bit 1 sine in y.
fn pattern_key(index: usize, height: usize, width: usize) -> Option<(usize, usize, u8)> {
    let max_x = (width - 1) / 2;
    let max_y = (height - 1) / 2;
    let mut seen = 0;
    for total in 0..=(max_x + max_y) {
        for kx in 0..=total.min(max_x) {
            let ky = total - kx;
            if ky > max_y {
                continue;
            }
            for kind in 0..4u8 {
                if (kind & 1 == 1 && kx == 0) || (kind & 2 == 2 && ky == 0) {
                    continue;
                }
                if seen == index {
                    return Some((kx, ky, kind));
                }
                seen += 1;
            }
        }
    }
    None
}

/// The `index`-th member of an orthonormal family of separable cosine/sine
/// products on an `height x width` periodic grid, flattened row-major. Index
/// 0 is the constant pattern.
pub fn grid_pattern(index: usize, height: usize, width: usize) -> Result<DVector<f64>> {
    if height == 0 || width == 0 {
        return Err(argument("grid must be nonempty"));
    }
    let (kx, ky, kind) = pattern_key(index, height, width)
        .ok_or_else(|| argument(format!("grid {height}x{width} has no pattern {index}")))?;
    let wave = |k: usize, sine: bool, i: usize, n: usize| {
        let a = TAU * (k * i) as f64 / n as f64;
        if sine {
            a.sin()
        } else {
            a.cos()
        }
    };
    let mut v = DVector::from_fn(height * width, |r, _| {
        let (y, x) = (r / width, r % width);
        wave(kx, kind & 1 == 1, x, width) * wave(ky, kind & 2 == 2, y, height)
    });
    let n = v.norm();
    v /= n;
    Ok(v)
}

/// Lazily generated field `u(t_n) = sum_i a_i(t_n) Phi_i`.
#[derive(Debug, Clone)]
pub struct FieldStream {
    spec: FieldSpec,
    patterns: Vec<DVector<f64>>,
    index: usize,
}

impl Iterator for FieldStream {
    type Item = Result<DVector<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.index >= self.spec.steps {
            return None;
        }
        let n = self.index;
        let t = n as f64 * self.spec.dt;
        let mut u = DVector::zeros(self.spec.height * self.spec.width);
        for (c, p) in self.spec.components.iter().zip(&self.patterns) {
            if c.onset.is_some_and(|o| n < o) {
                continue;
            }
            u.axpy(c.signal.eval(t), p, 1.0);
        }
        self.index += 1;
        Some(Ok(u))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.spec.steps - self.index;
        (left, Some(left))
    }
}

pub fn synthetic_field(spec: &FieldSpec) -> Result<FieldStream> {
    if !(spec.dt > 0.0 && spec.dt.is_finite()) {
        return Err(argument("dt must be positive"));
    }
    let mut used: Vec<usize> = spec.components.iter().map(|c| c.pattern).collect();
    used.sort_unstable();
    if used.windows(2).any(|w| w[0] == w[1]) {
        return Err(argument("components must use distinct patterns"));
    }
    let patterns = spec
        .components
        .iter()
        .map(|c| grid_pattern(c.pattern, spec.height, spec.width))
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldStream {
        spec: spec.clone(),
        patterns,
        index: 0,
    })
}

impl FieldSpec {
    /// A field with `base` always-present components and one extra component
    /// per entry of `onsets`, switching on at that snapshot index.
    ///
    /// Component 0 is a constant mean. The rest come in cosine/sine pairs of
    /// distinct frequencies, so the dynamics of the amplitudes are linear;
    /// an odd leftover is a product of the first two oscillators. Late
    /// components are offset copies of the first oscillator with their own
    /// pattern.
    pub fn late_onset(
        height: usize,
        width: usize,
        steps: usize,
        dt: f64,
        base: usize,
        onsets: &[usize],
    ) -> Self {
        let horizon = dt * steps.max(2) as f64;
        let base_freq = 8.0 / horizon;
        let mut components = Vec::with_capacity(base + onsets.len());
        if base > 0 {
            components.push(FieldComponent {
                pattern: 0,
                signal: Signal::constant(3.0),
                onset: None,
            });
        }
        let pairs = base.saturating_sub(1) / 2;
        for p in 0..pairs {
            let f = base_freq * (1.0 + 0.66 * p as f64);
            let amp = 1.0 / (1.0 + 0.3 * p as f64);
            for phase in [0.0, -TAU / 4.0] {
                components.push(FieldComponent {
                    pattern: components.len(),
                    signal: Signal::Harmonic {
                        offset: 0.0,
                        amplitude: amp,
                        frequency: f,
                        phase,
                    },
                    onset: None,
                });
            }
        }
        if base > 1 && (base - 1) % 2 == 1 {
            let f = base_freq;
            let g = base_freq * 1.66;
            components.push(FieldComponent {
                pattern: components.len(),
                signal: Signal::Product {
                    amplitude: 0.8,
                    frequencies: [f, if pairs > 1 { g } else { f }],
                    phases: [0.0, 0.0],
                },
                onset: None,
            });
        }
        for &onset in onsets {
            components.push(FieldComponent {
                pattern: components.len(),
                signal: Signal::Harmonic {
                    offset: 1.5,
                    amplitude: 0.5,
                    frequency: base_freq,
                    phase: 0.0,
                },
                onset: Some(onset),
            });
        }
        Self {
            height,
            width,
            steps,
            dt,
            components,
        }
    }
}

/// Parameters of a Gaussian blob travelling across a periodic grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub height: usize,
    pub width: usize,
    pub steps: usize,
    pub dt: f64,
    /// Blob radius in grid cells.
    pub radius: f64,
    /// Laps around the grid in x over the whole stream.
    pub laps: f64,
    /// Constant background level.
    pub background: f64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            height: 24,
            width: 96,
            steps: 1200,
            dt: 1e-2,
            radius: 1.5,
            laps: 1.0,
            background: 0.2,
        }
    }
}

/// Lazily generated drifting-blob field.
#[derive(Debug, Clone)]
pub struct DriftStream {
    spec: DriftSpec,
    index: usize,
}

impl Iterator for DriftStream {
    type Item = Result<DVector<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        let s = &self.spec;
        if self.index >= s.steps {
            return None;
        }
        let frac = self.index as f64 / s.steps as f64;
        let cx = frac * s.laps * s.width as f64;
        let cy = 0.5 * s.height as f64 + 0.25 * s.height as f64 * (TAU * frac).sin();
        let wrap = |d: f64, n: usize| {
            let n = n as f64;
            let d = d.rem_euclid(n);
            d.min(n - d)
        };
        let u = DVector::from_fn(s.height * s.width, |r, _| {
            let (y, x) = ((r / s.width) as f64, (r % s.width) as f64);
            let dx = wrap(x - cx, s.width);
            let dy = wrap(y - cy, s.height);
            s.background + (-(dx * dx + dy * dy) / (2.0 * s.radius * s.radius)).exp()
        });
        self.index += 1;
        Some(Ok(u))
    }
}

pub fn drifting_field(spec: &DriftSpec) -> Result<DriftStream> {
    if spec.height == 0
        || spec.width == 0
        || spec.radius.is_nan()
        || spec.radius <= 0.0
        || spec.dt.is_nan()
        || spec.dt <= 0.0
    {
        return Err(argument(
            "drift field needs a nonempty grid, positive radius and dt",
        ));
    }
    Ok(DriftStream {
        spec: *spec,
        index: 0,
    })
}
