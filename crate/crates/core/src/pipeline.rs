//! Online compression of a snapshot stream into frozen weak-form problems,
//! and the offline block assembly and solve.
//!
//! Without a POD stage the state itself is fed to a single accumulator. With
//! POD, the temporal coefficients are fed instead, and every time the basis
//! grows by one mode the running accumulator is closed at the previous
//! sample, stored as a *segment*, and replaced by a fresh accumulator over the
//! extended projection basis that opens at the current sample.
//!
//! When a POD reinitialization policy retires a basis, the whole problem
//! collected so far is closed as an *epoch* and a new epoch starts with a
//! fresh initialization window.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bases::{FourierTestBasis, MonomialBasis};
use crate::config::CompressConfig;
use crate::error::{argument, invariant, Error, Result};
use crate::pod::{PodBasis, PodEvent, StreamingPod};
use crate::regression::{stlsq, FitConfig, SparseCoefficients};
use crate::wsindy::WeakAccumulator;

/// Reduced state stored at a stream index.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartSample {
    pub index: usize,
    pub values: DVector<f64>,
}

/// Frozen accumulator output for the snapshot range `start..=end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    /// `K x L_m`
    pub targets: DMatrix<f64>,
    /// `K x J_m`
    pub features: DMatrix<f64>,
}

impl Segment {
    pub fn mode_count(&self) -> usize {
        self.targets.ncols()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    pub fn samples(&self) -> usize {
        self.end + 1 - self.start
    }
}

/// Ordered segments sharing one test basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSet {
    test: FourierTestBasis,
    projection: MonomialBasis,
    segments: Vec<Segment>,
}

impl ProblemSet {
    /// `projection` is the basis of the last segment.
    pub fn new(
        test: FourierTestBasis,
        projection: MonomialBasis,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| argument("a problem set needs at least one segment"))?;
        let k = test.len();
        let l0 = first.mode_count();
        for (m, seg) in segments.iter().enumerate() {
            if seg.targets.nrows() != k || seg.features.nrows() != k {
                return Err(invariant(format!("segment {m} does not have {k} rows")));
            }
            if seg.mode_count() != l0 + m {
                return Err(invariant(format!(
                    "segment {m} has {} modes, expected {}",
                    seg.mode_count(),
                    l0 + m
                )));
            }
            if seg.end < seg.start {
                return Err(invariant(format!("segment {m} has an empty interval")));
            }
            if m > 0 {
                let prev = &segments[m - 1];
                if seg.width() <= prev.width() {
                    return Err(invariant("segment widths must increase"));
                }
                if seg.start != prev.end + 1 {
                    return Err(invariant("segment intervals must be contiguous"));
                }
            }
        }
        let last = segments.last().expect("nonempty");
        if projection.nvars() != last.mode_count() || projection.len() != last.width() {
            return Err(invariant(
                "projection basis does not match the last segment",
            ));
        }
        Ok(Self {
            test,
            projection,
            segments,
        })
    }

    pub fn test_basis(&self) -> &FourierTestBasis {
        &self.test
    }

    pub fn projection(&self) -> &MonomialBasis {
        &self.projection
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn k(&self) -> usize {
        self.test.len()
    }

    pub fn initial_modes(&self) -> usize {
        self.segments[0].mode_count()
    }

    /// Number of mode additions `M`.
    pub fn additions(&self) -> usize {
        self.segments.len() - 1
    }

    pub fn widths(&self) -> Vec<usize> {
        self.segments.iter().map(Segment::width).collect()
    }

    pub fn feature_entries(&self) -> usize {
        self.segments.iter().map(|s| s.features.len()).sum()
    }

    pub fn target_entries(&self) -> usize {
        self.segments.iter().map(|s| s.targets.len()).sum()
    }

    pub fn stored_entries(&self) -> usize {
        self.feature_entries() + self.target_entries()
    }

    /// Closed form `K sum_m J_m + K L (M + 1) + K (M^2 + M) / 2`.
    pub fn closed_form_entries(&self) -> usize {
        let k = self.k();
        let m = self.additions();
        let widths: usize = self.widths().iter().sum();
        k * widths + k * self.initial_modes() * (m + 1) + k * (m * m + m) / 2
    }
}

/// One stretch of the stream served by a single POD basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub start: usize,
    pub end: usize,
    pub problems: ProblemSet,
    /// `None` when the state is fed without reduction.
    pub pod: Option<PodBasis>,
    /// Reduced state every restart stride, plus the epoch's first sample.
    pub restarts: Vec<RestartSample>,
    /// Reduced state at each mode birth.
    pub seams: Vec<RestartSample>,
}

impl Epoch {
    pub fn initial_modes(&self) -> usize {
        self.problems.initial_modes()
    }

    pub fn mode_count(&self) -> usize {
        self.problems.initial_modes() + self.problems.additions()
    }

    /// First stream index at which mode `mode` carries data.
    pub fn active_from(&self, mode: usize) -> usize {
        if mode < self.initial_modes() {
            self.start
        } else {
            self.problems.segments()[mode - self.initial_modes() + 1].start
        }
    }
}

/// Everything the online phase produces.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionRun {
    pub state_dim: usize,
    pub snapshot_count: usize,
    pub dt: f64,
    pub restart_stride: usize,
    pub epochs: Vec<Epoch>,
    pub warnings: Vec<String>,
    /// `(index, residual)` of every projected snapshot, when tracing.
    pub residual_trace: Vec<(usize, f64)>,
}

impl CompressionRun {
    pub fn stream_entries(&self) -> usize {
        self.state_dim * self.snapshot_count
    }

    pub fn stored_entries(&self) -> usize {
        self.epochs
            .iter()
            .map(|e| e.problems.stored_entries())
            .sum()
    }
}

struct OpenEpoch {
    start: usize,
    projection: Option<MonomialBasis>,
    acc: Option<WeakAccumulator>,
    segment_start: usize,
    segments: Vec<Segment>,
    restarts: Vec<RestartSample>,
    seams: Vec<RestartSample>,
}

impl OpenEpoch {
    fn new(start: usize) -> Self {
        Self {
            start,
            projection: None,
            acc: None,
            segment_start: start,
            segments: Vec::new(),
            restarts: Vec::new(),
            seams: Vec::new(),
        }
    }
}

/// Single-pass consumer implementing the online phase.
pub struct Compressor {
    cfg: CompressConfig,
    test: FourierTestBasis,
    pod: Option<StreamingPod>,
    next_index: usize,
    state_dim: Option<usize>,
    open: Option<OpenEpoch>,
    epochs: Vec<Epoch>,
    warnings: Vec<String>,
    trace: Option<Vec<(usize, f64)>>,
}

impl Compressor {
    pub fn new(cfg: CompressConfig) -> Result<Self> {
        cfg.validate()?;
        let test = cfg.test_basis()?;
        let pod = cfg.pod.map(StreamingPod::new).transpose()?;
        Ok(Self {
            cfg,
            test,
            pod,
            next_index: 0,
            state_dim: None,
            open: None,
            epochs: Vec::new(),
            warnings: Vec::new(),
            trace: None,
        })
    }

    /// Records the POD residual of every projected snapshot.
    pub fn with_residual_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn snapshots_seen(&self) -> usize {
        self.next_index
    }

    pub fn mode_count(&self) -> usize {
        self.pod
            .as_ref()
            .map_or(self.state_dim.unwrap_or(0), StreamingPod::mode_count)
    }

    /// Entries held by frozen segments and the running accumulator.
    pub fn online_entries(&self) -> usize {
        let closed: usize = self
            .epochs
            .iter()
            .map(|e| e.problems.stored_entries())
            .sum();
        let open = self.open.as_ref().map_or(0, |o| {
            let frozen: usize = o
                .segments
                .iter()
                .map(|s| s.features.len() + s.targets.len())
                .sum();
            frozen + o.acc.as_ref().map_or(0, WeakAccumulator::stored_entries)
        });
        closed + open
    }

    fn time(&self, index: usize) -> f64 {
        index as f64 * self.cfg.dt
    }

    fn new_accumulator(&self, projection: MonomialBasis, dim: usize) -> Result<WeakAccumulator> {
        let acc = WeakAccumulator::new(projection, self.test, dim, self.cfg.dt)?;
        Ok(if self.cfg.boundary_terms {
            acc
        } else {
            acc.without_boundary_terms()
        })
    }

    fn begin_accumulation(&mut self, dim: usize) -> Result<()> {
        let projection = MonomialBasis::new(dim, self.cfg.projection)?;
        let acc = self.new_accumulator(projection.clone(), dim)?;
        let open = self
            .open
            .as_mut()
            .ok_or_else(|| invariant("no open epoch"))?;
        open.projection = Some(projection);
        open.acc = Some(acc);
        Ok(())
    }

    fn feed(&mut self, index: usize, values: &DVector<f64>) -> Result<()> {
        let t = self.time(index);
        let stride = self.cfg.restart_stride;
        let open = self
            .open
            .as_mut()
            .ok_or_else(|| invariant("no open epoch"))?;
        open.acc
            .as_mut()
            .ok_or_else(|| invariant("no open accumulator"))?
            .push(t, values)?;
        if index.is_multiple_of(stride) || index == open.start {
            open.restarts.push(RestartSample {
                index,
                values: values.clone(),
            });
        }
        Ok(())
    }

    fn close_segment(&mut self, end: usize) -> Result<()> {
        let open = self
            .open
            .as_mut()
            .ok_or_else(|| invariant("no open epoch"))?;
        let mut acc = open
            .acc
            .take()
            .ok_or_else(|| invariant("no open accumulator"))?;
        acc.finish()?;
        let (targets, features) = acc.into_parts();
        let segment = Segment {
            start: open.segment_start,
            end,
            targets,
            features,
        };
        if segment.samples() < 2 {
            self.warnings.push(format!(
                "segment {}..={} holds a single snapshot and contributes no equations",
                segment.start, segment.end
            ));
        }
        open.segments.push(segment);
        Ok(())
    }

    fn seam(&mut self, index: usize, values: &DVector<f64>) -> Result<()> {
        self.close_segment(index - 1)?;
        let dim = values.len();
        let open = self
            .open
            .as_ref()
            .ok_or_else(|| invariant("no open epoch"))?;
        let projection = open
            .projection
            .as_ref()
            .ok_or_else(|| invariant("no projection basis"))?
            .extend(dim)?;
        let acc = self.new_accumulator(projection.clone(), dim)?;
        let open = self.open.as_mut().expect("checked above");
        open.projection = Some(projection);
        open.acc = Some(acc);
        open.segment_start = index;
        open.seams.push(RestartSample {
            index,
            values: values.clone(),
        });
        self.feed(index, values)
    }

    fn close_epoch(&mut self, end: usize, pod: Option<PodBasis>) -> Result<()> {
        self.close_segment(end)?;
        let open = self.open.take().ok_or_else(|| invariant("no open epoch"))?;
        let projection = open
            .projection
            .ok_or_else(|| invariant("no projection basis"))?;
        let problems = ProblemSet::new(self.test, projection, open.segments)?;
        self.epochs.push(Epoch {
            start: open.start,
            end,
            problems,
            pod,
            restarts: open.restarts,
            seams: open.seams,
        });
        Ok(())
    }

    fn handle(&mut self, index: usize, event: PodEvent) -> Result<()> {
        match event {
            PodEvent::Collecting => {
                if self.open.is_none() {
                    self.open = Some(OpenEpoch::new(index));
                }
            }
            PodEvent::Initialized { start, history } => {
                if self.open.is_none() {
                    self.open = Some(OpenEpoch::new(start));
                }
                self.begin_accumulation(history.nrows())?;
                for (i, column) in history.column_iter().enumerate() {
                    self.feed(start + i, &column.into_owned())?;
                }
            }
            PodEvent::Projected {
                coefficients,
                residual,
                added,
            } => {
                if let Some(trace) = self.trace.as_mut() {
                    trace.push((index, residual));
                }
                if added {
                    self.seam(index, &coefficients)?;
                } else {
                    self.feed(index, &coefficients)?;
                }
            }
            PodEvent::Retired { basis } => {
                log::info!(
                    "POD basis with {} modes retired at snapshot {index}",
                    basis.len()
                );
                self.close_epoch(index - 1, Some(basis))?;
                self.open = Some(OpenEpoch::new(index));
            }
        }
        Ok(())
    }

    /// Consumes the next snapshot.
    pub fn push(&mut self, snapshot: &DVector<f64>) -> Result<()> {
        let index = self.next_index;
        match self.state_dim {
            None => {
                if snapshot.is_empty() {
                    return Err(argument("snapshots must be nonempty"));
                }
                self.state_dim = Some(snapshot.len());
            }
            Some(s) if s != snapshot.len() => {
                return Err(argument(format!(
                    "snapshot {index} has {} entries, expected {s}",
                    snapshot.len()
                )))
            }
            Some(_) => {}
        }
        if snapshot.iter().any(|x| !x.is_finite()) {
            return Err(argument(format!("snapshot {index} has a non-finite entry")));
        }
        let t = self.time(index);
        if t > self.cfg.horizon * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "snapshot {index} at t = {t} lies past the horizon {}",
                self.cfg.horizon
            )));
        }
        match self.pod.as_mut() {
            None => {
                if self.open.is_none() {
                    self.open = Some(OpenEpoch::new(index));
                    self.begin_accumulation(snapshot.len())?;
                }
                self.feed(index, snapshot)?;
            }
            Some(pod) => {
                let event = pod.observe(index, snapshot)?;
                self.handle(index, event)?;
            }
        }
        self.next_index += 1;
        Ok(())
    }

    /// Closes the stream and returns the collected problems.
    pub fn finish(mut self) -> Result<CompressionRun> {
        if self.next_index == 0 {
            return Err(argument("the stream is empty"));
        }
        let last = self.next_index - 1;
        let mut pod_basis = None;
        if let Some(pod) = self.pod.as_mut() {
            if let Some(event) = pod.flush_short_window()? {
                let init = pod.settings().init_window;
                self.warnings.push(format!(
                    "stream ended before the POD window filled; initialized from {} of {init} snapshots",
                    pod_window_len(&event)
                ));
                self.handle(last, event)?;
            }
            pod_basis = self.pod.as_ref().and_then(|p| p.basis().cloned());
        }
        self.close_epoch(last, pod_basis)?;
        for w in &self.warnings {
            log::warn!("{w}");
        }
        Ok(CompressionRun {
            state_dim: self.state_dim.expect("at least one snapshot"),
            snapshot_count: self.next_index,
            dt: self.cfg.dt,
            restart_stride: self.cfg.restart_stride,
            epochs: self.epochs,
            warnings: self.warnings,
            residual_trace: self.trace.unwrap_or_default(),
        })
    }
}

fn pod_window_len(event: &PodEvent) -> usize {
    match event {
        PodEvent::Initialized { history, .. } => history.ncols(),
        _ => 0,
    }
}

/// Runs the online phase over a whole stream.
pub fn process_stream<I>(source: I, cfg: &CompressConfig) -> Result<CompressionRun>
where
    I: IntoIterator<Item = Result<DVector<f64>>>,
{
    let mut compressor = Compressor::new(cfg.clone())?;
    for snapshot in source {
        compressor.push(&snapshot?)?;
    }
    compressor.finish()
}

/// Lower block-triangular system assembled from a [`ProblemSet`].
///
/// Row block `m` holds segment `m`'s feature matrix in its first `J_m`
/// columns and zeros after. Mode `l` is fitted against the row blocks from
/// the segment in which it was born onward.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    k: usize,
    widths: Vec<usize>,
    matrix: DMatrix<f64>,
    targets: Vec<DVector<f64>>,
    first_block: Vec<usize>,
}

impl BlockSystem {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn blocks(&self) -> usize {
        self.widths.len()
    }

    pub fn mode_count(&self) -> usize {
        self.targets.len()
    }

    pub fn target(&self, mode: usize) -> &DVector<f64> {
        &self.targets[mode]
    }

    /// Index of the first row block used by `mode`.
    pub fn first_block(&self, mode: usize) -> usize {
        self.first_block[mode]
    }

    /// Rows of the system used for `mode`.
    pub fn rows_for(&self, mode: usize) -> DMatrix<f64> {
        let f = self.first_block[mode];
        self.matrix
            .rows(f * self.k, (self.blocks() - f) * self.k)
            .into_owned()
    }

    /// Shapes of the structurally nonzero blocks, column block by column
    /// block, top to bottom.
    pub fn block_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        for c in 0..self.blocks() {
            let prev = if c == 0 { 0 } else { self.widths[c - 1] };
            for _ in c..self.blocks() {
                shapes.push((self.k, self.widths[c] - prev));
            }
        }
        shapes
    }

    /// Entries of the nonzero blocks plus all stacked targets.
    pub fn stored_entries(&self) -> usize {
        let features: usize = self.widths.iter().map(|w| w * self.k).sum();
        let targets: usize = self.targets.iter().map(DVector::len).sum();
        features + targets
    }

    /// Largest magnitude above the block diagonal.
    pub fn upper_magnitude(&self) -> f64 {
        let mut worst = 0.0f64;
        for (m, &w) in self.widths.iter().enumerate() {
            let rows = self.matrix.rows(m * self.k, self.k);
            let cols = self.matrix.ncols() - w;
            if cols > 0 {
                worst = worst.max(rows.columns(w, cols).amax());
            }
        }
        worst
    }
}

pub fn build(problems: &ProblemSet) -> Result<BlockSystem> {
    let k = problems.k();
    let segments = problems.segments();
    let widths = problems.widths();
    let width = *widths.last().expect("nonempty");
    let blocks = segments.len();
    let mut matrix = DMatrix::zeros(blocks * k, width);
    for (m, seg) in segments.iter().enumerate() {
        if seg.features.shape() != (k, widths[m]) {
            return Err(invariant(format!("segment {m} feature shape changed")));
        }
        matrix
            .view_mut((m * k, 0), (k, widths[m]))
            .copy_from(&seg.features);
    }
    let l0 = problems.initial_modes();
    let modes = l0 + problems.additions();
    let mut targets = Vec::with_capacity(modes);
    let mut first_block = Vec::with_capacity(modes);
    for mode in 0..modes {
        let f = if mode < l0 { 0 } else { mode - l0 + 1 };
        let mut stacked = DVector::zeros((blocks - f) * k);
        for (i, seg) in segments[f..].iter().enumerate() {
            stacked
                .rows_mut(i * k, k)
                .copy_from(&seg.targets.column(mode));
        }
        targets.push(stacked);
        first_block.push(f);
    }
    Ok(BlockSystem {
        k,
        widths,
        matrix,
        targets,
        first_block,
    })
}

/// Fits every mode with sequential thresholding, in parallel. `fits[l]` is
/// the configuration of mode `l`.
pub fn solve(system: &BlockSystem, fits: &[FitConfig]) -> Result<Vec<SparseCoefficients>> {
    if fits.len() < system.mode_count() {
        return Err(Error::Config(format!(
            "{} fit configurations supplied for {} modes",
            fits.len(),
            system.mode_count()
        )));
    }
    (0..system.mode_count())
        .into_par_iter()
        .map(|mode| {
            let rows = system.rows_for(mode);
            if rows.nrows() < rows.ncols() {
                log::warn!(
                    "mode {mode} is fitted from {} equations for {} unknowns",
                    rows.nrows(),
                    rows.ncols()
                );
            }
            stlsq(&rows, system.target(mode), &fits[mode])
        })
        .collect()
}
