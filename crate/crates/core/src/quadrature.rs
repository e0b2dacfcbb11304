//! One-pass composite Newton–Cotes quadrature over uniformly spaced samples.
//!
//! Two accumulation styles share one [`StreamIntegrator`]:
//!
//! * the trapezoid path ([`StreamIntegrator::push`] with a two-node rule) weights
//!   each incoming sample immediately and never buffers; the end-point halving
//!   of the final sample is applied by subtraction in
//!   [`StreamIntegrator::finalize`], so the stream length is never needed;
//! * the panel path buffers at most `P` samples, applies the `P`-node rule to
//!   every full panel and keeps the shared end node for the next one. A short
//!   trailing panel falls back to the lower-degree closed rule.

use nalgebra::{DMatrix, DVector};

use crate::error::{argument, invariant, state, Result};

/// Values that can be accumulated by a [`StreamIntegrator`].
pub trait Integrand: Clone {
    fn zeros_like(&self) -> Self;
    fn same_shape(&self, other: &Self) -> bool;
    /// `self += weight * other`
    fn add_scaled(&mut self, weight: f64, other: &Self);
}

impl Integrand for f64 {
    fn zeros_like(&self) -> Self {
        0.0
    }

    fn same_shape(&self, _other: &Self) -> bool {
        true
    }

    fn add_scaled(&mut self, weight: f64, other: &Self) {
        *self += weight * other;
    }
}

impl Integrand for DVector<f64> {
    fn zeros_like(&self) -> Self {
        DVector::zeros(self.len())
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.len() == other.len()
    }

    fn add_scaled(&mut self, weight: f64, other: &Self) {
        self.axpy(weight, other, 1.0);
    }
}

impl Integrand for DMatrix<f64> {
    fn zeros_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    fn add_scaled(&mut self, weight: f64, other: &Self) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += weight * b;
        }
    }
}

/// A closed Newton–Cotes panel rule `alpha * dt * sum_p w_p g_p` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: usize,
    prefactor: f64,
    weights: Vec<f64>,
    dt: f64,
}

/// Closed Newton–Cotes coefficients `(alpha, w)` for 2..=5 nodes.
fn closed_newton_cotes(nodes: usize) -> Option<(f64, &'static [f64])> {
    match nodes {
        2 => Some((1.0 / 2.0, &[1.0, 1.0])),
        3 => Some((1.0 / 3.0, &[1.0, 4.0, 1.0])),
        4 => Some((3.0 / 8.0, &[1.0, 3.0, 3.0, 1.0])),
        5 => Some((2.0 / 45.0, &[7.0, 32.0, 12.0, 32.0, 7.0])),
        _ => None,
    }
}

impl QuadratureRule {
    pub const MAX_NODES: usize = 5;

    /// Closed Newton–Cotes rule with `nodes` points per panel (2 = trapezoid,
    /// 3 = Simpson, 4 = Simpson 3/8, 5 = Boole).
    pub fn newton_cotes(nodes: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(argument(format!("time step must be positive, got {dt}")));
        }
        let (prefactor, weights) = closed_newton_cotes(nodes).ok_or_else(|| {
            argument(format!(
                "Newton-Cotes panels of {nodes} nodes are not supported (2..={})",
                Self::MAX_NODES
            ))
        })?;
        Ok(Self {
            nodes,
            prefactor,
            weights: weights.to_vec(),
            dt,
        })
    }

    pub fn trapezoid(dt: f64) -> Result<Self> {
        Self::newton_cotes(2, dt)
    }

    pub fn simpson(dt: f64) -> Result<Self> {
        Self::newton_cotes(3, dt)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Polynomial degree integrated exactly by a single panel.
    pub fn exact_degree(&self) -> usize {
        // Odd-node closed rules gain one degree by symmetry.
        if self.nodes % 2 == 1 {
            self.nodes
        } else {
            self.nodes - 1
        }
    }

    /// Effective per-node weights `alpha * dt * w_p` of one panel.
    pub fn panel_weights(&self) -> impl Iterator<Item = f64> + '_ {
        let scale = self.prefactor * self.dt;
        self.weights.iter().map(move |w| scale * w)
    }

    /// The same family of rule on a shorter panel, used for the trailing panel.
    fn lower(&self, nodes: usize) -> Self {
        Self::newton_cotes(nodes, self.dt).expect("2 <= nodes <= MAX_NODES")
    }
}

/// Streaming trapezoid weights: `dt/2` for the first sample, `dt` afterwards,
/// and a closing `-dt/2` correction for whichever sample turned out to be last.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidSchedule {
    dt: f64,
    seen: usize,
}

impl TrapezoidSchedule {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(argument(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { dt, seen: 0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Weight for the next sample; advances the schedule.
    pub fn next_weight(&mut self) -> f64 {
        let w = if self.seen == 0 {
            0.5 * self.dt
        } else {
            self.dt
        };
        self.seen += 1;
        w
    }

    /// Weight to re-apply to the final sample at end of stream.
    pub fn closing_weight(&self) -> f64 {
        match self.seen {
            0 => 0.0,
            _ => -0.5 * self.dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Fresh,
    /// single-sample trapezoid weighting (no buffering)
    Weighted,
    /// explicit first/last flags
    Flagged,
    /// buffered panels
    Paneled,
}

/// Running composite quadrature of a stream of equally spaced samples.
#[derive(Debug, Clone)]
pub struct StreamIntegrator<T: Integrand> {
    rule: QuadratureRule,
    value: T,
    count: usize,
    finalized: bool,
    mode: Mode,
    schedule: TrapezoidSchedule,
    last: Option<T>,
    pending: Vec<T>,
}

impl<T: Integrand> StreamIntegrator<T> {
    /// `shape` fixes the integrand shape; its values are ignored.
    pub fn new(rule: QuadratureRule, shape: &T) -> Self {
        let schedule = TrapezoidSchedule::new(rule.dt).expect("rule dt validated");
        Self {
            pending: Vec::with_capacity(rule.nodes),
            rule,
            value: shape.zeros_like(),
            count: 0,
            finalized: false,
            mode: Mode::Fresh,
            schedule,
            last: None,
        }
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn value(&self) -> &T {
        &self.value
    }

    pub fn into_value(self) -> T {
        self.value
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    fn check(&mut self, sample: &T, mode: Mode) -> Result<()> {
        if self.finalized {
            return Err(state("integrator already finalized"));
        }
        if !self.value.same_shape(sample) {
            return Err(invariant("sample shape differs from integrator shape"));
        }
        if self.mode != Mode::Fresh && self.mode != mode {
            return Err(state("cannot mix accumulation styles on one integrator"));
        }
        self.mode = mode;
        Ok(())
    }

    /// Composite trapezoid update with explicit end-point flags.
    pub fn trapezoid_update(&mut self, sample: &T, is_first: bool, is_last: bool) -> Result<()> {
        self.check(sample, Mode::Flagged)?;
        let dt = self.rule.dt;
        let w = if is_first || is_last { 0.5 * dt } else { dt };
        // A single-sample stream is a zero-width interval.
        if !(is_first && is_last) {
            self.value.add_scaled(w, sample);
        }
        self.count += 1;
        if is_last {
            self.finalized = true;
        }
        Ok(())
    }

    /// Feeds one sample without knowing whether it is the last.
    pub fn push(&mut self, sample: &T) -> Result<()> {
        if self.rule.nodes == 2 {
            self.check(sample, Mode::Weighted)?;
            let w = self.schedule.next_weight();
            self.value.add_scaled(w, sample);
            self.last = Some(sample.clone());
            self.count += 1;
            Ok(())
        } else {
            self.panel_update(std::slice::from_ref(sample))
        }
    }

    /// Feeds consecutive samples through the panel rule. Every completed panel
    /// of `P` nodes is added immediately; its last node opens the next panel.
    pub fn panel_update(&mut self, panel: &[T]) -> Result<()> {
        if panel.is_empty() {
            return Err(argument("empty panel"));
        }
        if panel.len() > self.rule.nodes {
            return Err(argument(format!(
                "panel of {} samples exceeds rule size {}",
                panel.len(),
                self.rule.nodes
            )));
        }
        for sample in panel {
            self.check(sample, Mode::Paneled)?;
            self.pending.push(sample.clone());
            self.count += 1;
            if self.pending.len() == self.rule.nodes {
                let rule = self.rule.clone();
                self.apply_panel(&rule);
                let shared = self.pending.pop().expect("full panel");
                self.pending.clear();
                self.pending.push(shared);
            }
        }
        Ok(())
    }

    fn apply_panel(&mut self, rule: &QuadratureRule) {
        for (w, g) in rule.panel_weights().zip(&self.pending) {
            self.value.add_scaled(w, g);
        }
    }

    /// Closes the stream: applies the end-point correction or the trailing
    /// short panel. A one-sample stream integrates to zero.
    pub fn finalize(&mut self) -> Result<&T> {
        if self.finalized {
            return Err(state("integrator already finalized"));
        }
        match self.mode {
            Mode::Weighted => {
                if let Some(last) = self.last.take() {
                    self.value.add_scaled(self.schedule.closing_weight(), &last);
                }
            }
            Mode::Paneled => {
                let len = self.pending.len();
                if len >= 2 {
                    let rule = self.rule.lower(len);
                    self.apply_panel(&rule);
                }
                self.pending.clear();
            }
            Mode::Fresh | Mode::Flagged => {}
        }
        self.finalized = true;
        Ok(&self.value)
    }
}
