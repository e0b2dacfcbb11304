//! The compressed representation: spatial modes, sparse model coefficients
//! and restart samples, one block per epoch.

use nalgebra::DVector;

use crate::bases::{FourierTestBasis, MonomialBasis};
use crate::config::CompressConfig;
use crate::error::{argument, invariant, Result};
use crate::pipeline::{build, solve, CompressionRun, Epoch, RestartSample};
use crate::pod::PodBasis;
use crate::regression::{FitConfig, SparseCoefficients};

/// Fitted surrogate for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochModel {
    pub start: usize,
    pub end: usize,
    /// Final projection basis, over all modes of the epoch.
    pub projection: MonomialBasis,
    /// First stream index at which each mode carries data.
    pub active_from: Vec<usize>,
    /// Spatial modes; `None` when the state was modelled directly.
    pub pod: Option<PodBasis>,
    /// One coefficient vector per mode, over the final projection basis.
    pub coefficients: Vec<SparseCoefficients>,
    /// Reduced state, zero-padded to the final mode count.
    pub restarts: Vec<RestartSample>,
    /// Reduced state at each mode birth, zero-padded.
    pub seams: Vec<RestartSample>,
}

impl EpochModel {
    pub fn mode_count(&self) -> usize {
        self.active_from.len()
    }

    /// Modes carrying data at stream index `index`.
    pub fn active_count(&self, index: usize) -> usize {
        self.active_from.partition_point(|&a| a <= index)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.mode_count();
        let j = self.projection.len();
        if self.projection.nvars() != l {
            return Err(invariant("projection basis and mode count disagree"));
        }
        if self.coefficients.len() != l || self.coefficients.iter().any(|c| c.len() != j) {
            return Err(invariant(
                "one coefficient vector of the basis size per mode",
            ));
        }
        if self.active_from.windows(2).any(|w| w[0] > w[1]) {
            return Err(invariant("modes must become active in order"));
        }
        if let Some(pod) = &self.pod {
            if pod.len() != l {
                return Err(invariant("spatial mode count disagrees with the model"));
            }
        }
        for set in [&self.restarts, &self.seams] {
            if set.windows(2).any(|w| w[0].index >= w[1].index) {
                return Err(invariant("restart samples must be strictly time-ordered"));
            }
            if set.iter().any(|r| r.values.len() != l) {
                return Err(invariant(
                    "restart samples must be padded to the mode count",
                ));
            }
            if set
                .iter()
                .any(|r| r.index < self.start || r.index > self.end)
            {
                return Err(invariant("restart sample outside its epoch"));
            }
        }
        if self.restarts.first().map(|r| r.index) != Some(self.start) {
            return Err(invariant(
                "every epoch needs a restart sample at its first index",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateArchive {
    pub state_dim: usize,
    pub snapshot_count: usize,
    pub dt: f64,
    pub test: FourierTestBasis,
    pub restart_stride: usize,
    pub fits: Vec<FitConfig>,
    pub epochs: Vec<EpochModel>,
}

impl SurrogateArchive {
    pub fn validate(&self) -> Result<()> {
        if self.epochs.is_empty() {
            return Err(argument("archive has no epochs"));
        }
        let mut next = 0;
        for e in &self.epochs {
            if e.start != next {
                return Err(invariant("epochs must cover the stream contiguously"));
            }
            e.validate()?;
            if let Some(p) = &e.pod {
                if p.state_dim() != self.state_dim {
                    return Err(invariant("spatial modes have the wrong length"));
                }
            } else if e.mode_count() != self.state_dim {
                return Err(invariant(
                    "unreduced epoch must model every state component",
                ));
            }
            next = e.end + 1;
        }
        if next != self.snapshot_count {
            return Err(invariant("epochs do not cover the stream"));
        }
        Ok(())
    }

    pub fn epoch_at(&self, index: usize) -> Option<&EpochModel> {
        let i = self.epochs.partition_point(|e| e.end < index);
        self.epochs.get(i).filter(|e| e.start <= index)
    }

    pub fn max_modes(&self) -> usize {
        self.epochs
            .iter()
            .map(EpochModel::mode_count)
            .max()
            .unwrap_or(0)
    }
}

fn pad(samples: &[RestartSample], len: usize) -> Vec<RestartSample> {
    samples
        .iter()
        .map(|r| {
            let mut values = DVector::zeros(len);
            values.rows_mut(0, r.values.len()).copy_from(&r.values);
            RestartSample {
                index: r.index,
                values,
            }
        })
        .collect()
}

/// Offline phase for one epoch: assemble the block system and fit each mode.
pub fn fit_epoch(epoch: &Epoch, fits: &[FitConfig]) -> Result<EpochModel> {
    let system = build(&epoch.problems)?;
    let coefficients = solve(&system, fits)?;
    let l = epoch.mode_count();
    Ok(EpochModel {
        start: epoch.start,
        end: epoch.end,
        projection: epoch.problems.projection().clone(),
        active_from: (0..l).map(|m| epoch.active_from(m)).collect(),
        pod: epoch.pod.clone(),
        coefficients,
        restarts: pad(&epoch.restarts, l),
        seams: pad(&epoch.seams, l),
    })
}

/// Offline phase: fits every epoch of `run` with the settings of `cfg`.
pub fn fit_run(run: &CompressionRun, cfg: &CompressConfig) -> Result<SurrogateArchive> {
    let modes = run.epochs.iter().map(Epoch::mode_count).max().unwrap_or(0);
    let fits: Vec<FitConfig> = (0..modes).map(|m| cfg.fit_for(m)).collect();
    let epochs = run
        .epochs
        .iter()
        .map(|e| fit_epoch(e, &fits))
        .collect::<Result<Vec<_>>>()?;
    let test = run
        .epochs
        .first()
        .map(|e| *e.problems.test_basis())
        .ok_or_else(|| argument("run has no epochs"))?;
    let archive = SurrogateArchive {
        state_dim: run.state_dim,
        snapshot_count: run.snapshot_count,
        dt: run.dt,
        test,
        restart_stride: run.restart_stride,
        fits,
        epochs,
    };
    archive.validate()?;
    Ok(archive)
}
