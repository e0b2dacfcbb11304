//! Decompression: evolving the fitted surrogate between restart samples and
//! lifting the reduced state back to the full field, plus error metrics.

use nalgebra::{DMatrix, DVector};

use crate::archive::{EpochModel, SurrogateArchive};
use crate::error::{argument, invariant, Result};
use crate::ode::{DormandPrince, Tolerances};
use crate::pipeline::RestartSample;
use crate::pod::PodBasis;

/// Right-hand side `dnu_l/dt = sum_j c_jl phi_j(nu)` of one epoch.
#[derive(Debug, Clone)]
pub struct SurrogateModel<'a> {
    epoch: &'a EpochModel,
    /// `L x J`
    coefficients: DMatrix<f64>,
    dt: f64,
    phi: DVector<f64>,
}

impl<'a> SurrogateModel<'a> {
    pub fn new(epoch: &'a EpochModel, dt: f64) -> Result<Self> {
        epoch.validate()?;
        let l = epoch.mode_count();
        let j = epoch.projection.len();
        let mut coefficients = DMatrix::zeros(l, j);
        for (mode, c) in epoch.coefficients.iter().enumerate() {
            coefficients
                .row_mut(mode)
                .copy_from(&c.values().transpose());
        }
        Ok(Self {
            epoch,
            coefficients,
            dt,
            phi: DVector::zeros(j),
        })
    }

    pub fn epoch(&self) -> &EpochModel {
        self.epoch
    }

    pub fn mode_count(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Evaluates the model with only the first `active` modes free; the
    /// remaining derivatives are zero.
    pub fn rhs(&mut self, state: &DVector<f64>, active: usize, out: &mut DVector<f64>) {
        self.epoch
            .projection
            .eval_into(state.as_slice(), self.phi.as_mut_slice())
            .expect("state length matches the basis");
        self.coefficients.mul_to(&self.phi, out);
        out.rows_mut(active, out.len() - active).fill(0.0);
    }

    /// Free evolution from `from` up to stream index `until`, without any
    /// resets. Modes that are not active yet stay pinned at their value.
    /// Returns `L x (until - from.index + 1)` samples on the stream grid.
    pub fn evolve(&mut self, from: &RestartSample, until: usize) -> Result<DMatrix<f64>> {
        if until < from.index {
            return Err(argument("evolution must run forward in time"));
        }
        if from.values.len() != self.mode_count() {
            return Err(argument("restart sample has the wrong length"));
        }
        let steps = until - from.index + 1;
        let mut out = DMatrix::zeros(self.mode_count(), steps);
        let mut state = from.values.clone();
        out.set_column(0, &state);
        let mut solver = DormandPrince::new(Tolerances::default());
        for i in 1..steps {
            let n = from.index + i - 1;
            self.step(&mut solver, n, &mut state)?;
            out.set_column(i, &state);
        }
        Ok(out)
    }

    /// Advances `state` from index `n` to `n + 1`.
    fn step(
        &mut self,
        solver: &mut DormandPrince,
        n: usize,
        state: &mut DVector<f64>,
    ) -> Result<()> {
        let active = self.epoch.active_count(n);
        let t0 = n as f64 * self.dt;
        let dt = self.dt;
        let mut rhs = |_: f64, y: &DVector<f64>, dy: &mut DVector<f64>| self.rhs(y, active, dy);
        solver.advance(&mut rhs, t0, t0 + dt, state)
    }
}

/// Streams `P nu` for every column of `temporal`.
pub fn synthesize<'a>(
    temporal: &'a DMatrix<f64>,
    basis: &'a PodBasis,
) -> Result<impl Iterator<Item = DVector<f64>> + 'a> {
    if temporal.nrows() != basis.len() {
        return Err(argument(format!(
            "{} temporal rows for {} spatial modes",
            temporal.nrows(),
            basis.len()
        )));
    }
    Ok(temporal.column_iter().map(move |c| basis.modes() * c))
}

/// Which samples reset the surrogate state during decompression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetPolicy {
    /// Every stored restart sample and mode birth.
    EveryRestart,
    /// Only epoch starts and mode births.
    BirthsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Output {
    Field,
    Temporal,
}

struct EpochCursor<'a> {
    model: SurrogateModel<'a>,
    resets: Vec<&'a RestartSample>,
    next_reset: usize,
    solver: DormandPrince,
    state: DVector<f64>,
}

/// Sequential decompressor yielding one reconstructed snapshot at a time.
pub struct Decompressor<'a> {
    archive: &'a SurrogateArchive,
    policy: ResetPolicy,
    output: Output,
    index: usize,
    epoch: usize,
    cursor: Option<EpochCursor<'a>>,
    failed: bool,
}

impl<'a> Decompressor<'a> {
    fn new(archive: &'a SurrogateArchive, output: Output) -> Result<Self> {
        archive.validate()?;
        Ok(Self {
            archive,
            policy: ResetPolicy::EveryRestart,
            output,
            index: 0,
            epoch: 0,
            cursor: None,
            failed: false,
        })
    }

    /// Reconstructs the full field `u(t_n)`.
    pub fn field(archive: &'a SurrogateArchive) -> Result<Self> {
        Self::new(archive, Output::Field)
    }

    /// Reconstructs the reduced state `nu(t_n)` (zero-padded per epoch).
    pub fn temporal(archive: &'a SurrogateArchive) -> Result<Self> {
        Self::new(archive, Output::Temporal)
    }

    pub fn with_policy(mut self, policy: ResetPolicy) -> Self {
        self.policy = policy;
        self
    }

    fn open_epoch(&mut self) -> Result<EpochCursor<'a>> {
        let epoch = &self.archive.epochs[self.epoch];
        let model = SurrogateModel::new(epoch, self.archive.dt)?;
        let mut resets: Vec<&RestartSample> = epoch.seams.iter().collect();
        match self.policy {
            ResetPolicy::EveryRestart => resets.extend(epoch.restarts.iter()),
            ResetPolicy::BirthsOnly => resets.extend(epoch.restarts.first()),
        }
        resets.sort_by_key(|r| r.index);
        resets.dedup_by_key(|r| r.index);
        Ok(EpochCursor {
            state: DVector::zeros(epoch.mode_count()),
            model,
            resets,
            next_reset: 0,
            solver: DormandPrince::new(Tolerances::default()),
        })
    }

    fn advance(&mut self) -> Result<DVector<f64>> {
        let n = self.index;
        if self.archive.epochs[self.epoch].end < n {
            self.epoch += 1;
            self.cursor = None;
        }
        let fresh = self.cursor.is_none();
        if fresh {
            let cursor = self.open_epoch()?;
            self.cursor = Some(cursor);
        }
        let cursor = self.cursor.as_mut().expect("opened above");
        if !fresh {
            cursor
                .model
                .step(&mut cursor.solver, n - 1, &mut cursor.state)?;
        }
        if let Some(r) = cursor.resets.get(cursor.next_reset) {
            if r.index == n {
                cursor.state.copy_from(&r.values);
                cursor.next_reset += 1;
            }
        }
        if fresh && cursor.next_reset == 0 {
            return Err(invariant("epoch has no sample at its first index"));
        }
        Ok(match (self.output, &cursor.model.epoch().pod) {
            (Output::Field, Some(pod)) => pod.modes() * &cursor.state,
            _ => cursor.state.clone(),
        })
    }
}

impl Iterator for Decompressor<'_> {
    type Item = Result<DVector<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.index >= self.archive.snapshot_count {
            return None;
        }
        let out = self.advance();
        self.failed = out.is_err();
        self.index += 1;
        Some(out)
    }
}

/// `P_n P_n^T u`, with `P_n` the modes active at index `n`. Unreduced epochs
/// return `u` itself.
pub fn pod_projection(
    archive: &SurrogateArchive,
    index: usize,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let epoch = archive
        .epoch_at(index)
        .ok_or_else(|| argument(format!("index {index} lies outside the archive")))?;
    let Some(pod) = &epoch.pod else {
        return Ok(u.clone());
    };
    if u.len() != pod.state_dim() {
        return Err(argument("snapshot has the wrong length"));
    }
    let active = epoch.active_count(index);
    let p = pod.modes().columns(0, active);
    Ok(p * p.tr_mul(u))
}

/// Percent errors at one snapshot. `None` marks an undefined value (zero
/// reference norm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMetrics {
    /// `100 ||approx - u|| / ||u||`
    pub overall: Option<f64>,
    /// `100 ||approx - u_pod|| / ||u_pod||`
    pub against_projection: Option<f64>,
    /// `100 (||approx - u|| - ||u - u_pod||) / ||u||`
    pub fitting: Option<f64>,
    /// `100 ||u - u_pod|| / ||u||`
    pub truncation: Option<f64>,
}

pub fn snapshot_metrics(
    truth: &DVector<f64>,
    approx: &DVector<f64>,
    projected: &DVector<f64>,
) -> Result<SnapshotMetrics> {
    if truth.len() != approx.len() || truth.len() != projected.len() {
        return Err(argument("metric inputs differ in length"));
    }
    let u = truth.norm();
    let p = projected.norm();
    let err = (approx - truth).norm();
    let trunc = (truth - projected).norm();
    let pct = |num: f64, den: f64| (den > 0.0).then(|| 100.0 * num / den);
    Ok(SnapshotMetrics {
        overall: pct(err, u),
        against_projection: pct((approx - projected).norm(), p),
        fitting: pct(err - trunc, u),
        truncation: pct(trunc, u),
    })
}

/// Metric time series over three equally long streams.
pub fn error_metrics<A, B, C>(truth: A, approx: B, projected: C) -> Result<Vec<SnapshotMetrics>>
where
    A: IntoIterator<Item = Result<DVector<f64>>>,
    B: IntoIterator<Item = Result<DVector<f64>>>,
    C: IntoIterator<Item = Result<DVector<f64>>>,
{
    let mut t = truth.into_iter();
    let mut a = approx.into_iter();
    let mut p = projected.into_iter();
    let mut out = Vec::new();
    loop {
        match (t.next(), a.next(), p.next()) {
            (None, None, None) => return Ok(out),
            (Some(t), Some(a), Some(p)) => out.push(snapshot_metrics(&t?, &a?, &p?)?),
            _ => return Err(argument("metric streams differ in length")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::{DegreePolicy, FourierTestBasis, MonomialBasis};
    use crate::regression::{FitStatus, SparseCoefficients};

    fn scalar_epoch(rate: f64, end: usize) -> EpochModel {
        let projection = MonomialBasis::new(1, DegreePolicy::Total(1)).unwrap();
        let c = SparseCoefficients::from_sparse(2, vec![1], &[rate], FitStatus::Converged).unwrap();
        EpochModel {
            start: 0,
            end,
            projection,
            active_from: vec![0],
            pod: None,
            coefficients: vec![c],
            restarts: vec![RestartSample {
                index: 0,
                values: DVector::from_element(1, 1.0),
            }],
            seams: Vec::new(),
        }
    }

    fn archive_of(epoch: EpochModel, dt: f64) -> SurrogateArchive {
        SurrogateArchive {
            state_dim: epoch.mode_count(),
            snapshot_count: epoch.end + 1,
            dt,
            test: FourierTestBasis::new(1, 1.0).unwrap(),
            restart_stride: 1000,
            fits: Vec::new(),
            epochs: vec![epoch],
        }
    }

    #[test]
    fn linear_decay() {
        let epoch = scalar_epoch(-1.0, 10);
        let mut model = SurrogateModel::new(&epoch, 0.1).unwrap();
        let out = model.evolve(&epoch.restarts[0], 10).unwrap();
        assert!((out[(0, 10)] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn zero_steps_returns_sample() {
        let epoch = scalar_epoch(-1.0, 10);
        let mut model = SurrogateModel::new(&epoch, 0.1).unwrap();
        let out = model.evolve(&epoch.restarts[0], 0).unwrap();
        assert_eq!(out[(0, 0)], 1.0);
    }

    #[test]
    fn zero_model_is_constant() {
        let epoch = scalar_epoch(0.0, 5);
        let archive = archive_of(epoch, 0.2);
        let out: Vec<_> = Decompressor::field(&archive)
            .unwrap()
            .map(Result::unwrap)
            .collect();
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|v| v[0] == 1.0));
    }

    #[test]
    fn restarts_reset_state() {
        let mut epoch = scalar_epoch(-1.0, 20);
        epoch.restarts.push(RestartSample {
            index: 10,
            values: DVector::from_element(1, 5.0),
        });
        let archive = archive_of(epoch, 0.1);
        let out: Vec<_> = Decompressor::temporal(&archive)
            .unwrap()
            .map(Result::unwrap)
            .collect();
        assert_eq!(out[10][0], 5.0);
        assert!((out[20][0] - 5.0 * (-1.0f64).exp()).abs() < 1e-6);
        let free: Vec<_> = Decompressor::temporal(&archive)
            .unwrap()
            .with_policy(ResetPolicy::BirthsOnly)
            .map(Result::unwrap)
            .collect();
        assert!((free[20][0] - (-2.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn late_mode_is_pinned_then_seeded() {
        // nu0' = -nu0, nu1' = 1 once born at index 5
        let projection = MonomialBasis::new(2, DegreePolicy::Total(1)).unwrap();
        let c0 =
            SparseCoefficients::from_sparse(3, vec![2], &[-1.0], FitStatus::Converged).unwrap();
        let c1 = SparseCoefficients::from_sparse(3, vec![0], &[1.0], FitStatus::Converged).unwrap();
        let modes = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let pod = PodBasis::from_parts(modes, vec![0, 5], 0.0, 0.1, 2).unwrap();
        let epoch = EpochModel {
            start: 0,
            end: 9,
            projection,
            active_from: vec![0, 5],
            pod: Some(pod),
            coefficients: vec![c0, c1],
            restarts: vec![RestartSample {
                index: 0,
                values: DVector::from_vec(vec![1.0, 0.0]),
            }],
            seams: vec![RestartSample {
                index: 5,
                values: DVector::from_vec(vec![0.0, 2.0]),
            }],
        };
        let mut archive = archive_of(epoch, 0.1);
        archive.state_dim = 3;
        let out: Vec<_> = Decompressor::field(&archive)
            .unwrap()
            .map(Result::unwrap)
            .collect();
        for v in &out[..5] {
            assert_eq!(v[1], 0.0);
        }
        assert_eq!(out[5][1], 2.0);
        assert!((out[9][1] - 2.4).abs() < 1e-9);
        assert!(out.iter().all(|v| v[2] == 0.0));
    }

    #[test]
    fn blowup_is_reported_once() {
        let projection = MonomialBasis::new(1, DegreePolicy::Total(2)).unwrap();
        let c = SparseCoefficients::from_sparse(3, vec![2], &[1.0], FitStatus::Converged).unwrap();
        let epoch = EpochModel {
            start: 0,
            end: 30,
            projection,
            active_from: vec![0],
            pod: None,
            coefficients: vec![c],
            restarts: vec![RestartSample {
                index: 0,
                values: DVector::from_element(1, 1.0),
            }],
            seams: Vec::new(),
        };
        let archive = archive_of(epoch, 0.1);
        let results: Vec<_> = Decompressor::field(&archive).unwrap().collect();
        assert!(results.last().unwrap().is_err());
        assert_eq!(results.iter().filter(|r| r.is_err()).count(), 1);
    }

    #[test]
    fn metric_identities() {
        let u = DVector::from_vec(vec![3.0, 4.0, 0.0]);
        let p = DVector::from_vec(vec![3.0, 4.0 - 0.5, 0.0]);
        let m = snapshot_metrics(&u, &u, &p).unwrap();
        assert_eq!(m.overall, Some(0.0));
        let m = snapshot_metrics(&u, &p, &p).unwrap();
        assert_eq!(m.against_projection, Some(0.0));
        assert!((m.overall.unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(m.overall, m.truncation);
        let a = DVector::from_vec(vec![2.0, 4.0, 1.0]);
        let m = snapshot_metrics(&u, &a, &p).unwrap();
        let identity = m.overall.unwrap() - m.truncation.unwrap();
        assert!((m.fitting.unwrap() - identity).abs() < 1e-12);
        let z = DVector::zeros(3);
        assert_eq!(snapshot_metrics(&z, &a, &p).unwrap().overall, None);
    }

    #[test]
    fn synthesize_single_mode() {
        let modes = DMatrix::from_column_slice(2, 1, &[0.6, 0.8]);
        let pod = PodBasis::from_parts(modes, vec![0], 0.0, 0.1, 2).unwrap();
        let temporal = DMatrix::from_element(1, 4, 1.0);
        let out: Vec<_> = synthesize(&temporal, &pod).unwrap().collect();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|v| *v == pod.modes().column(0)));
        assert!(synthesize(&DMatrix::zeros(2, 4), &pod).is_err());
    }
}
