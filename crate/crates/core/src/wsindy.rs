//! Streaming accumulation of the weak-form linear system `b = G c`.
//!
//! For a state stream `u(t_n)` the accumulator holds
//!
//! * `G[k, j] ≈ <phi_j(u), psi_k>` (`K x J`), and
//! * `b[k, s] ≈ <du_s/dt, psi_k> = -<u_s, dpsi_k/dt> + [u_s psi_k]` evaluated
//!   between the first and last sample (`K x S`).
//!
//! The boundary bracket is applied at both ends because the Fourier test
//! functions are not compactly supported. Storage is `K (J + S)` numbers plus
//! scratch of size `O(K + J + S)`, independent of the stream length.

use nalgebra::{DMatrix, DVector};

use crate::bases::{FourierTestBasis, MonomialBasis};
use crate::error::{argument, state, Result};
use crate::quadrature::TrapezoidSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Open,
    Frozen,
}

#[derive(Debug, Clone)]
pub struct WeakAccumulator {
    projection: MonomialBasis,
    test: FourierTestBasis,
    targets: DMatrix<f64>,
    features: DMatrix<f64>,
    schedule: TrapezoidSchedule,
    boundary_terms: bool,
    boundary_initialized: bool,
    phase: Phase,
    last: Option<(f64, DVector<f64>)>,
    count: usize,
    psi: DVector<f64>,
    dpsi: DVector<f64>,
    phi: DVector<f64>,
}

impl WeakAccumulator {
    /// Empty accumulator for a `state_dim`-dimensional stream sampled every `dt`.
    /// The projection basis must be defined over `state_dim` variables.
    pub fn new(
        projection: MonomialBasis,
        test: FourierTestBasis,
        state_dim: usize,
        dt: f64,
    ) -> Result<Self> {
        if projection.nvars() != state_dim {
            return Err(argument(format!(
                "projection basis is over {} variables but the state has {state_dim}",
                projection.nvars()
            )));
        }
        let k = test.len();
        let j = projection.len();
        Ok(Self {
            targets: DMatrix::zeros(k, state_dim),
            features: DMatrix::zeros(k, j),
            schedule: TrapezoidSchedule::new(dt)?,
            boundary_terms: true,
            boundary_initialized: false,
            phase: Phase::Open,
            last: None,
            count: 0,
            psi: DVector::zeros(k),
            dpsi: DVector::zeros(k),
            phi: DVector::zeros(j),
            projection,
            test,
        })
    }

    /// Disables the end-point terms, for compactly supported test families.
    pub fn without_boundary_terms(mut self) -> Self {
        self.boundary_terms = false;
        self
    }

    pub fn projection(&self) -> &MonomialBasis {
        &self.projection
    }

    pub fn test_basis(&self) -> &FourierTestBasis {
        &self.test
    }

    pub fn state_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_frozen(&self) -> bool {
        self.phase == Phase::Frozen
    }

    pub fn boundary_initialized(&self) -> bool {
        self.boundary_initialized
    }

    /// The last `(t, u)` passed to [`update`](Self::update).
    pub fn last_sample(&self) -> Option<(f64, &DVector<f64>)> {
        self.last.as_ref().map(|(t, u)| (*t, u))
    }

    /// Stored entries `K (J + S)`.
    pub fn stored_entries(&self) -> usize {
        self.targets.len() + self.features.len()
    }

    /// Heap bytes held, including scratch and the retained last sample.
    pub fn heap_bytes(&self) -> usize {
        let scratch = self.psi.len() + self.dpsi.len() + self.phi.len();
        let last = self.state_dim();
        (self.stored_entries() + scratch + last) * std::mem::size_of::<f64>()
    }

    fn check_state(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.state_dim() {
            return Err(argument(format!(
                "state has {} entries, accumulator expects {}",
                u.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    fn eval_test(&mut self, t: f64) -> Result<()> {
        self.test
            .eval_into(t, self.psi.as_mut_slice(), self.dpsi.as_mut_slice())
    }

    /// Lower end-point term: `b[k, :] -= psi_k(t1) u1`.
    pub fn init_boundary(&mut self, t1: f64, u1: &DVector<f64>) -> Result<()> {
        if self.boundary_initialized {
            return Err(state("boundary term already initialized"));
        }
        if self.count > 0 || self.phase == Phase::Frozen {
            return Err(state(
                "boundary term must be initialized on a fresh accumulator",
            ));
        }
        self.check_state(u1)?;
        if self.boundary_terms {
            self.eval_test(t1)?;
            self.targets.ger(-1.0, &self.psi, u1, 1.0);
        }
        self.boundary_initialized = true;
        Ok(())
    }

    /// Adds one quadrature-weighted sample:
    /// `b -= weight * dpsi(t) u^T` and `G += weight * psi(t) phi(u)^T`.
    pub fn update(&mut self, t: f64, u: &DVector<f64>, weight: f64) -> Result<()> {
        if self.phase == Phase::Frozen {
            return Err(state("accumulator is frozen"));
        }
        self.check_state(u)?;
        if weight != 0.0 {
            self.eval_test(t)?;
            self.projection
                .eval_into(u.as_slice(), self.phi.as_mut_slice())?;
            self.targets.ger(-weight, &self.dpsi, u, 1.0);
            self.features.ger(weight, &self.psi, &self.phi, 1.0);
        }
        self.count += 1;
        match &mut self.last {
            Some((lt, lu)) => {
                *lt = t;
                lu.copy_from(u);
            }
            None => self.last = Some((t, u.clone())),
        }
        Ok(())
    }

    /// Streaming entry point: opens the boundary on the first sample and
    /// weights every sample with the streaming trapezoid schedule.
    pub fn push(&mut self, t: f64, u: &DVector<f64>) -> Result<()> {
        if self.count == 0 && !self.boundary_initialized {
            self.init_boundary(t, u)?;
        }
        let w = self.schedule.next_weight();
        self.update(t, u, w)
    }

    /// Upper end-point term `b[k, :] += psi_k(tN) uN`; freezes the accumulator.
    pub fn finalize_boundary(&mut self, t_end: f64, u_end: &DVector<f64>) -> Result<()> {
        if self.phase == Phase::Frozen {
            return Err(state("accumulator is frozen"));
        }
        if !self.boundary_initialized {
            return Err(state("finalize called before the boundary was initialized"));
        }
        if self.count == 0 {
            return Err(state("finalize called before any update"));
        }
        self.check_state(u_end)?;
        if self.boundary_terms {
            self.eval_test(t_end)?;
            self.targets.ger(1.0, &self.psi, u_end, 1.0);
        }
        self.phase = Phase::Frozen;
        Ok(())
    }

    /// Closes a stream fed through [`push`](Self::push): halves the weight of
    /// the last sample and applies the upper boundary term.
    pub fn finish(&mut self) -> Result<()> {
        let (t, u) = self
            .last
            .clone()
            .ok_or_else(|| state("finish called on an empty accumulator"))?;
        let w = self.schedule.closing_weight();
        if self.phase == Phase::Frozen {
            return Err(state("accumulator is frozen"));
        }
        self.update(t, &u, w)?;
        // the correction is not a new sample
        self.count -= 1;
        self.finalize_boundary(t, &u)
    }

    /// `(b, G)`
    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.targets, self.features)
    }
}
