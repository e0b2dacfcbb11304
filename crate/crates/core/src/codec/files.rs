//! Problem files (`SWSP`, online output) and archives (`SWSA`, offline output).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::container::{manifest_bytes, read_container, write_container, Array, Container};
use crate::archive::{EpochModel, SurrogateArchive};
use crate::bases::{FourierTestBasis, MonomialBasis};
use crate::config::CompressConfig;
use crate::error::{Error, Result};
use crate::pipeline::{CompressionRun, Epoch, ProblemSet, RestartSample, Segment};
use crate::pod::PodBasis;
use crate::regression::{FitConfig, FitStatus, SparseCoefficients};

pub const PROBLEM_MAGIC: &[u8; 4] = b"SWSP";
pub const ARCHIVE_MAGIC: &[u8; 4] = b"SWSA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PodHeader {
    births: Vec<usize>,
    spectral_threshold: f64,
    residual_threshold: f64,
    init_window: usize,
}

impl PodHeader {
    fn of(p: &PodBasis) -> Self {
        Self {
            births: p.births().to_vec(),
            spectral_threshold: p.spectral_threshold(),
            residual_threshold: p.residual_threshold(),
            init_window: p.init_window(),
        }
    }

    fn rebuild(self, modes: DMatrix<f64>) -> Result<PodBasis> {
        PodBasis::from_parts(
            modes,
            self.births,
            self.spectral_threshold,
            self.residual_threshold,
            self.init_window,
        )
        .map_err(format_error)
    }
}

fn format_error(e: Error) -> Error {
    match e {
        Error::Argument(m) | Error::Invariant(m) => Error::Format(m),
        other => other,
    }
}

fn flatten(samples: &[RestartSample]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let idx = samples.iter().map(|s| s.index).collect();
    let lens = samples.iter().map(|s| s.values.len()).collect();
    let values = samples
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .collect();
    (idx, lens, values)
}

fn unflatten(idx: &[usize], lens: &[usize], values: &[f64]) -> Result<Vec<RestartSample>> {
    if idx.len() != lens.len() || lens.iter().sum::<usize>() != values.len() {
        return Err(Error::Format("restart sample table is inconsistent".into()));
    }
    let mut out = Vec::with_capacity(idx.len());
    let mut at = 0;
    for (&index, &len) in idx.iter().zip(lens) {
        out.push(RestartSample {
            index,
            values: DVector::from_row_slice(&values[at..at + len]),
        });
        at += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProblemEpochHeader {
    start: usize,
    end: usize,
    projection: MonomialBasis,
    segments: Vec<[usize; 2]>,
    pod: Option<PodHeader>,
    restart_indices: Vec<usize>,
    restart_lengths: Vec<usize>,
    seam_indices: Vec<usize>,
    seam_lengths: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProblemHeader {
    config: CompressConfig,
    state_dim: usize,
    snapshot_count: usize,
    dt: f64,
    restart_stride: usize,
    test: FourierTestBasis,
    warnings: Vec<String>,
    epochs: Vec<ProblemEpochHeader>,
}

fn problem_parts(
    run: &CompressionRun,
    cfg: &CompressConfig,
) -> Result<(ProblemHeader, Vec<(String, Array)>)> {
    let test = run
        .epochs
        .first()
        .map(|e| *e.problems.test_basis())
        .ok_or_else(|| Error::Argument("run has no epochs".into()))?;
    let mut arrays = Vec::new();
    let mut epochs = Vec::new();
    for (i, e) in run.epochs.iter().enumerate() {
        for (m, s) in e.problems.segments().iter().enumerate() {
            arrays.push((format!("e{i}.s{m}.targets"), Array::from_matrix(&s.targets)));
            arrays.push((
                format!("e{i}.s{m}.features"),
                Array::from_matrix(&s.features),
            ));
        }
        if let Some(p) = &e.pod {
            arrays.push((format!("e{i}.modes"), Array::from_matrix(p.modes())));
        }
        let (restart_indices, restart_lengths, rv) = flatten(&e.restarts);
        let (seam_indices, seam_lengths, sv) = flatten(&e.seams);
        arrays.push((format!("e{i}.restarts"), Array::f64_row(rv)));
        arrays.push((format!("e{i}.seams"), Array::f64_row(sv)));
        epochs.push(ProblemEpochHeader {
            start: e.start,
            end: e.end,
            projection: e.problems.projection().clone(),
            segments: e
                .problems
                .segments()
                .iter()
                .map(|s| [s.start, s.end])
                .collect(),
            pod: e.pod.as_ref().map(PodHeader::of),
            restart_indices,
            restart_lengths,
            seam_indices,
            seam_lengths,
        });
    }
    let header = ProblemHeader {
        config: cfg.clone(),
        state_dim: run.state_dim,
        snapshot_count: run.snapshot_count,
        dt: run.dt,
        restart_stride: run.restart_stride,
        test,
        warnings: run.warnings.clone(),
        epochs,
    };
    Ok((header, arrays))
}

/// Writes the online output together with the configuration that produced it.
pub fn encode_problems<W: Write>(
    w: &mut W,
    run: &CompressionRun,
    cfg: &CompressConfig,
) -> Result<()> {
    let (header, arrays) = problem_parts(run, cfg)?;
    write_container(w, PROBLEM_MAGIC, &header, &arrays)
}

pub fn decode_problems<R: Read>(r: &mut R) -> Result<(CompressionRun, CompressConfig)> {
    let mut c: Container<ProblemHeader> = read_container(r, PROBLEM_MAGIC)?;
    let header = c.header.clone();
    let mut epochs = Vec::with_capacity(header.epochs.len());
    for (i, e) in header.epochs.into_iter().enumerate() {
        let mut segments = Vec::with_capacity(e.segments.len());
        for (m, [start, end]) in e.segments.iter().copied().enumerate() {
            segments.push(Segment {
                start,
                end,
                targets: c.take_matrix(&format!("e{i}.s{m}.targets"))?,
                features: c.take_matrix(&format!("e{i}.s{m}.features"))?,
            });
        }
        let problems =
            ProblemSet::new(header.test, e.projection, segments).map_err(format_error)?;
        let pod = match e.pod {
            Some(h) => Some(h.rebuild(c.take_matrix(&format!("e{i}.modes"))?)?),
            None => None,
        };
        let rv = c.take_f64(&format!("e{i}.restarts"))?;
        let sv = c.take_f64(&format!("e{i}.seams"))?;
        epochs.push(Epoch {
            start: e.start,
            end: e.end,
            problems,
            pod,
            restarts: unflatten(&e.restart_indices, &e.restart_lengths, &rv)?,
            seams: unflatten(&e.seam_indices, &e.seam_lengths, &sv)?,
        });
    }
    header.config.validate()?;
    let run = CompressionRun {
        state_dim: header.state_dim,
        snapshot_count: header.snapshot_count,
        dt: header.dt,
        restart_stride: header.restart_stride,
        epochs,
        warnings: header.warnings,
        residual_trace: Vec::new(),
    };
    Ok((run, header.config))
}

pub fn write_problem_file(path: &Path, run: &CompressionRun, cfg: &CompressConfig) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_problems(&mut w, run, cfg)
}

pub fn read_problem_file(path: &Path) -> Result<(CompressionRun, CompressConfig)> {
    decode_problems(&mut BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CoefficientHeader {
    nonzeros: usize,
    status: FitStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchiveEpochHeader {
    start: usize,
    end: usize,
    projection: MonomialBasis,
    active_from: Vec<usize>,
    pod: Option<PodHeader>,
    coefficients: Vec<CoefficientHeader>,
    restart_indices: Vec<usize>,
    seam_indices: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchiveHeader {
    state_dim: usize,
    snapshot_count: usize,
    dt: f64,
    restart_stride: usize,
    test: FourierTestBasis,
    fits: Vec<FitConfig>,
    epochs: Vec<ArchiveEpochHeader>,
}

fn sample_matrix(samples: &[RestartSample], width: usize) -> DMatrix<f64> {
    DMatrix::from_fn(samples.len(), width, |r, c| samples[r].values[c])
}

fn samples_of(idx: &[usize], m: &DMatrix<f64>) -> Result<Vec<RestartSample>> {
    if m.nrows() != idx.len() {
        return Err(Error::Format("restart table is inconsistent".into()));
    }
    Ok(idx
        .iter()
        .zip(m.row_iter())
        .map(|(&index, row)| RestartSample {
            index,
            values: row.transpose(),
        })
        .collect())
}

fn archive_parts(a: &SurrogateArchive) -> Result<(ArchiveHeader, Vec<(String, Array)>)> {
    a.validate()?;
    let mut arrays = Vec::new();
    let mut epochs = Vec::new();
    for (i, e) in a.epochs.iter().enumerate() {
        let l = e.mode_count();
        if let Some(p) = &e.pod {
            arrays.push((format!("e{i}.modes"), Array::from_matrix(p.modes())));
        }
        let support: Vec<u64> = e
            .coefficients
            .iter()
            .flat_map(|c| c.support().iter().map(|&j| j as u64))
            .collect();
        let values: Vec<f64> = e.coefficients.iter().flat_map(|c| c.nonzeros()).collect();
        arrays.push((format!("e{i}.support"), Array::u64_row(support)));
        arrays.push((format!("e{i}.values"), Array::f64_row(values)));
        arrays.push((
            format!("e{i}.restarts"),
            Array::from_matrix(&sample_matrix(&e.restarts, l)),
        ));
        arrays.push((
            format!("e{i}.seams"),
            Array::from_matrix(&sample_matrix(&e.seams, l)),
        ));
        epochs.push(ArchiveEpochHeader {
            start: e.start,
            end: e.end,
            projection: e.projection.clone(),
            active_from: e.active_from.clone(),
            pod: e.pod.as_ref().map(PodHeader::of),
            coefficients: e
                .coefficients
                .iter()
                .map(|c| CoefficientHeader {
                    nonzeros: c.support().len(),
                    status: c.status(),
                })
                .collect(),
            restart_indices: e.restarts.iter().map(|r| r.index).collect(),
            seam_indices: e.seams.iter().map(|r| r.index).collect(),
        });
    }
    let header = ArchiveHeader {
        state_dim: a.state_dim,
        snapshot_count: a.snapshot_count,
        dt: a.dt,
        restart_stride: a.restart_stride,
        test: a.test,
        fits: a.fits.clone(),
        epochs,
    };
    Ok((header, arrays))
}

/// Size of the archive's manifest in bytes.
pub fn archive_manifest_bytes(a: &SurrogateArchive) -> Result<usize> {
    let (header, arrays) = archive_parts(a)?;
    manifest_bytes(&header, &arrays)
}

pub fn encode_archive<W: Write>(w: &mut W, a: &SurrogateArchive) -> Result<()> {
    let (header, arrays) = archive_parts(a)?;
    write_container(w, ARCHIVE_MAGIC, &header, &arrays)
}

pub fn decode_archive<R: Read>(r: &mut R) -> Result<SurrogateArchive> {
    let mut c: Container<ArchiveHeader> = read_container(r, ARCHIVE_MAGIC)?;
    let header = c.header.clone();
    let mut epochs = Vec::with_capacity(header.epochs.len());
    for (i, e) in header.epochs.into_iter().enumerate() {
        let pod = match e.pod {
            Some(h) => Some(h.rebuild(c.take_matrix(&format!("e{i}.modes"))?)?),
            None => None,
        };
        let support = c.take_u64(&format!("e{i}.support"))?;
        let values = c.take_f64(&format!("e{i}.values"))?;
        let total: usize = e.coefficients.iter().map(|h| h.nonzeros).sum();
        if support.len() != total || values.len() != total {
            return Err(Error::Format("coefficient table is inconsistent".into()));
        }
        let j = e.projection.len();
        let mut coefficients = Vec::with_capacity(e.coefficients.len());
        let mut at = 0;
        for h in &e.coefficients {
            let idx = support[at..at + h.nonzeros]
                .iter()
                .map(|&s| s as usize)
                .collect();
            coefficients.push(
                SparseCoefficients::from_sparse(j, idx, &values[at..at + h.nonzeros], h.status)
                    .map_err(format_error)?,
            );
            at += h.nonzeros;
        }
        let restarts = samples_of(
            &e.restart_indices,
            &c.take_matrix(&format!("e{i}.restarts"))?,
        )?;
        let seams = samples_of(&e.seam_indices, &c.take_matrix(&format!("e{i}.seams"))?)?;
        epochs.push(EpochModel {
            start: e.start,
            end: e.end,
            projection: e.projection,
            active_from: e.active_from,
            pod,
            coefficients,
            restarts,
            seams,
        });
    }
    let archive = SurrogateArchive {
        state_dim: header.state_dim,
        snapshot_count: header.snapshot_count,
        dt: header.dt,
        test: header.test,
        restart_stride: header.restart_stride,
        fits: header.fits,
        epochs,
    };
    archive.validate().map_err(format_error)?;
    Ok(archive)
}

pub fn write_archive_file(path: &Path, a: &SurrogateArchive) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_archive(&mut w, a)
}

pub fn read_archive_file(path: &Path) -> Result<SurrogateArchive> {
    decode_archive(&mut BufReader::new(File::open(path)?))
}
