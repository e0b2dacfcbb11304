//! Snapshot-method POD with streaming basis growth.
//!
//! The first `p0` snapshots are stacked into a window matrix whose leading
//! left singular vectors (singular value at least the spectral threshold) form
//! the initial spatial modes. Every later snapshot `v` is tested with the
//! relative residual `||(I - P P^T) v|| / ||v||`; when it exceeds the residual
//! threshold the normalized residual direction is appended as a new mode.
//! Temporal coefficients are plain Euclidean projections `P^T v`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

/// Largest tolerated `max |P^T P - I|`.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReinitPolicy {
    /// Reinitialize instead of growing past this many modes.
    pub mode_cap: usize,
    /// Residual threshold used after a reinitialization.
    #[serde(default)]
    pub relaxed_residual_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PodSettings {
    /// Snapshots in the initialization window (`p0`).
    pub init_window: usize,
    pub spectral_threshold: f64,
    pub residual_threshold: f64,
    /// Compare `sigma_l / sigma_1` rather than raw singular values.
    #[serde(default)]
    pub normalize_spectrum: bool,
    #[serde(default)]
    pub reinit: Option<ReinitPolicy>,
}

impl PodSettings {
    pub fn validate(&self) -> Result<()> {
        if self.init_window < 2 {
            return Err(Error::Config(
                "POD init window must hold at least 2 snapshots".into(),
            ));
        }
        if !(self.spectral_threshold >= 0.0 && self.spectral_threshold.is_finite()) {
            return Err(Error::Config(
                "spectral threshold must be nonnegative".into(),
            ));
        }
        let res_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !res_ok(self.residual_threshold) {
            return Err(Error::Config(
                "residual threshold must lie in [0, 1]".into(),
            ));
        }
        if let Some(p) = self.reinit {
            if p.mode_cap == 0 {
                return Err(Error::Config("reinit mode cap must be positive".into()));
            }
            if p.relaxed_residual_threshold.is_some_and(|r| !res_ok(r)) {
                return Err(Error::Config(
                    "relaxed residual threshold must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Orthonormal spatial modes with the snapshot index at which each entered.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    modes: DMatrix<f64>,
    births: Vec<usize>,
    spectral_threshold: f64,
    residual_threshold: f64,
    init_window: usize,
}

/// Result of the window SVD.
#[derive(Debug, Clone)]
pub struct WindowSvd {
    pub basis: PodBasis,
    /// Every singular value of the window, descending.
    pub singular_values: DVector<f64>,
    /// Right singular vectors of the retained modes, `p0 x L`.
    pub right_vectors: DMatrix<f64>,
}

impl WindowSvd {
    /// Temporal coefficients of the window snapshots, `Sigma_L V_L^T` (`L x p0`).
    pub fn temporal_history(&self) -> DMatrix<f64> {
        let l = self.basis.len();
        let mut h = self.right_vectors.transpose();
        for (i, mut row) in h.row_iter_mut().enumerate().take(l) {
            row *= self.singular_values[i];
        }
        h
    }

    pub fn retained(&self) -> usize {
        self.basis.len()
    }
}

/// Computes the initial modes from the `S x p0` window `window`. The modes are
/// stamped with birth index `birth`.
pub fn init_from_window(
    window: &DMatrix<f64>,
    spectral_threshold: f64,
    residual_threshold: f64,
    normalize_spectrum: bool,
    birth: usize,
) -> Result<WindowSvd> {
    if window.ncols() == 0 || window.nrows() == 0 {
        return Err(argument("empty POD window"));
    }
    if window.iter().any(|x| !x.is_finite()) {
        return Err(argument("non-finite entry in POD window"));
    }
    let svd = window.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma = DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i]));

    let reference = if normalize_spectrum { sigma[0] } else { 1.0 };
    let retained = sigma
        .iter()
        .take_while(|&&s| reference > 0.0 && s / reference >= spectral_threshold && s > 0.0)
        .count();
    if retained == 0 {
        return Err(Error::Config(format!(
            "no singular value reaches the spectral threshold {spectral_threshold} (largest {})",
            sigma[0]
        )));
    }
    let modes = DMatrix::from_fn(window.nrows(), retained, |r, c| u[(r, order[c])]);
    let right_vectors = DMatrix::from_fn(window.ncols(), retained, |r, c| v_t[(order[c], r)]);
    let basis = PodBasis {
        modes,
        births: vec![birth; retained],
        spectral_threshold,
        residual_threshold,
        init_window: window.ncols(),
    };
    Ok(WindowSvd {
        basis,
        singular_values: sigma,
        right_vectors,
    })
}

impl PodBasis {
    /// Rebuilds a basis from stored modes, checking orthonormality.
    pub fn from_parts(
        modes: DMatrix<f64>,
        births: Vec<usize>,
        spectral_threshold: f64,
        residual_threshold: f64,
        init_window: usize,
    ) -> Result<Self> {
        if births.len() != modes.ncols() {
            return Err(argument("one birth index per mode is required"));
        }
        if births.windows(2).any(|w| w[0] > w[1]) {
            return Err(argument("birth indices must be nondecreasing"));
        }
        let basis = Self {
            modes,
            births,
            spectral_threshold,
            residual_threshold,
            init_window,
        };
        let drift = basis.orthonormality_error();
        if drift > 1e-8 {
            return Err(argument(format!(
                "stored modes are not orthonormal (drift {drift:e})"
            )));
        }
        Ok(basis)
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn births(&self) -> &[usize] {
        &self.births
    }

    pub fn state_dim(&self) -> usize {
        self.modes.nrows()
    }

    pub fn len(&self) -> usize {
        self.modes.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.ncols() == 0
    }

    pub fn spectral_threshold(&self) -> f64 {
        self.spectral_threshold
    }

    pub fn residual_threshold(&self) -> f64 {
        self.residual_threshold
    }

    pub fn set_residual_threshold(&mut self, threshold: f64) {
        self.residual_threshold = threshold;
    }

    pub fn init_window(&self) -> usize {
        self.init_window
    }

    /// Number of modes whose birth index is at most `index`.
    pub fn born_by(&self, index: usize) -> usize {
        self.births.partition_point(|&b| b <= index)
    }

    pub fn orthonormality_error(&self) -> f64 {
        let l = self.len();
        let gram = self.modes.tr_mul(&self.modes);
        (gram - DMatrix::<f64>::identity(l, l)).amax()
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.state_dim() {
            return Err(argument(format!(
                "snapshot has {} entries, basis expects {}",
                v.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    /// `P^T v`
    pub fn temporal_coefficient(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v)?;
        Ok(self.modes.tr_mul(v))
    }

    /// `P P^T v`
    pub fn reconstruct(&self, coefficients: &DVector<f64>) -> Result<DVector<f64>> {
        if coefficients.len() != self.len() {
            return Err(argument("coefficient count differs from mode count"));
        }
        Ok(&self.modes * coefficients)
    }

    /// `(I - P P^T) v`, with one re-orthogonalization pass.
    fn orthogonal_part(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut p = v - &self.modes * self.modes.tr_mul(v);
        let correction = &self.modes * self.modes.tr_mul(&p);
        p -= correction;
        p
    }

    /// Relative residual `||(I - P P^T) v|| / ||v||`.
    pub fn residual(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_len(v)?;
        let norm = v.norm();
        if norm == 0.0 {
            return Err(argument("residual of the zero vector is undefined"));
        }
        Ok(self.orthogonal_part(v).norm() / norm)
    }

    /// Appends the normalized residual direction of `v` when its relative
    /// residual exceeds the threshold. Returns whether a mode was added.
    pub fn maybe_add_mode(&mut self, v: &DVector<f64>, index: usize) -> Result<bool> {
        self.check_len(v)?;
        let norm = v.norm();
        if norm == 0.0 {
            return Err(argument("residual of the zero vector is undefined"));
        }
        let p = self.orthogonal_part(v);
        let pn = p.norm();
        if pn / norm <= self.residual_threshold {
            return Ok(false);
        }
        self.push_mode(p / pn, index);
        Ok(true)
    }

    fn push_mode(&mut self, direction: DVector<f64>, index: usize) {
        let l = self.len();
        let modes = std::mem::replace(&mut self.modes, DMatrix::zeros(0, 0));
        let mut modes = modes.insert_column(l, 0.0);
        modes.set_column(l, &direction);
        self.modes = modes;
        self.births.push(index);
        if self.orthonormality_error() > ORTHONORMALITY_TOL {
            // one more Gram-Schmidt pass on the new column
            let prev = self.modes.columns(0, l).into_owned();
            let mut col = self.modes.column(l).into_owned();
            col -= &prev * prev.tr_mul(&col);
            col /= col.norm();
            self.modes.set_column(l, &col);
        }
    }
}

/// What happened to one snapshot fed through [`StreamingPod::observe`].
#[derive(Debug, Clone)]
pub enum PodEvent {
    /// Buffered into the initialization window.
    Collecting,
    /// The window completed and the basis was (re)initialized. `history`
    /// holds the temporal coefficients of the window snapshots (`L x p0`);
    /// `start` is the stream index of the window's first snapshot.
    Initialized { start: usize, history: DMatrix<f64> },
    /// Projected onto the current basis (after a possible mode addition).
    Projected {
        coefficients: DVector<f64>,
        residual: f64,
        added: bool,
    },
    /// The mode cap was hit: the old basis is retired and this snapshot opens
    /// a fresh window.
    Retired { basis: PodBasis },
}

/// Per-snapshot driver for streaming POD, including the optional
/// reinitialization remedy for rapidly changing data.
#[derive(Debug, Clone)]
pub struct StreamingPod {
    settings: PodSettings,
    residual_threshold: f64,
    window: Vec<DVector<f64>>,
    window_start: usize,
    basis: Option<PodBasis>,
    state_dim: Option<usize>,
    reinitializations: usize,
}

impl StreamingPod {
    pub fn new(settings: PodSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            residual_threshold: settings.residual_threshold,
            window: Vec::with_capacity(settings.init_window),
            window_start: 0,
            basis: None,
            state_dim: None,
            reinitializations: 0,
            settings,
        })
    }

    pub fn settings(&self) -> &PodSettings {
        &self.settings
    }

    pub fn basis(&self) -> Option<&PodBasis> {
        self.basis.as_ref()
    }

    pub fn mode_count(&self) -> usize {
        self.basis.as_ref().map_or(0, PodBasis::len)
    }

    pub fn reinitializations(&self) -> usize {
        self.reinitializations
    }

    pub fn is_collecting(&self) -> bool {
        self.basis.is_none()
    }

    pub fn pending_window(&self) -> usize {
        self.window.len()
    }

    fn initialize(&mut self) -> Result<PodEvent> {
        let window = DMatrix::from_columns(&self.window);
        let last = self.window_start + self.window.len() - 1;
        let svd = init_from_window(
            &window,
            self.settings.spectral_threshold,
            self.residual_threshold,
            self.settings.normalize_spectrum,
            last,
        )?;
        if let Some(cap) = self.settings.reinit.map(|p| p.mode_cap) {
            if svd.retained() > cap {
                log::warn!(
                    "POD window retained {} modes, above the reinit cap {cap}",
                    svd.retained()
                );
            }
        }
        let history = svd.temporal_history();
        self.basis = Some(svd.basis);
        self.window.clear();
        Ok(PodEvent::Initialized {
            start: self.window_start,
            history,
        })
    }

    /// Feeds snapshot `index` (zero-based, consecutive).
    pub fn observe(&mut self, index: usize, snapshot: &DVector<f64>) -> Result<PodEvent> {
        match self.state_dim {
            None => self.state_dim = Some(snapshot.len()),
            Some(s) if s != snapshot.len() => {
                return Err(argument(format!(
                    "snapshot has {} entries, stream has {s}",
                    snapshot.len()
                )))
            }
            Some(_) => {}
        }
        let Some(basis) = self.basis.as_mut() else {
            if self.window.is_empty() {
                self.window_start = index;
            }
            self.window.push(snapshot.clone());
            if self.window.len() == self.settings.init_window {
                return self.initialize();
            }
            return Ok(PodEvent::Collecting);
        };

        let norm = snapshot.norm();
        let residual = if norm == 0.0 {
            0.0
        } else {
            basis.residual(snapshot)?
        };
        if residual > basis.residual_threshold() {
            if let Some(policy) = self.settings.reinit {
                if basis.len() >= policy.mode_cap {
                    let retired = self.basis.take().expect("basis present");
                    self.reinitializations += 1;
                    if let Some(relaxed) = policy.relaxed_residual_threshold {
                        self.residual_threshold = relaxed;
                    }
                    self.window.clear();
                    self.window_start = index;
                    self.window.push(snapshot.clone());
                    return Ok(PodEvent::Retired { basis: retired });
                }
            }
        }
        let added =
            residual > basis.residual_threshold() && basis.maybe_add_mode(snapshot, index)?;
        let coefficients = basis.temporal_coefficient(snapshot)?;
        Ok(PodEvent::Projected {
            coefficients,
            residual,
            added,
        })
    }

    /// Initializes from a partial window when the stream ended early.
    /// Returns `None` if nothing is pending.
    pub fn flush_short_window(&mut self) -> Result<Option<PodEvent>> {
        if self.basis.is_some() || self.window.is_empty() {
            return Ok(None);
        }
        log::warn!(
            "stream ended after {} of {} window snapshots; initializing from the partial window",
            self.window.len(),
            self.settings.init_window
        );
        self.initialize().map(Some)
    }
}
