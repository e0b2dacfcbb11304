//! Storage accounting in stored numbers (8-byte entries) against the raw stream.

use std::fmt;

use serde::Serialize;

use super::files::archive_manifest_bytes;
use crate::archive::SurrogateArchive;
use crate::error::Result;
use crate::pipeline::CompressionRun;

/// Size of the online output (weak-form problems) relative to the stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnlineReport {
    pub stream_entries: usize,
    pub feature_entries: usize,
    pub target_entries: usize,
    pub restart_entries: usize,
}

impl OnlineReport {
    pub fn of(run: &CompressionRun) -> Self {
        let mut r = Self {
            stream_entries: run.stream_entries(),
            feature_entries: 0,
            target_entries: 0,
            restart_entries: 0,
        };
        for e in &run.epochs {
            r.feature_entries += e.problems.feature_entries();
            r.target_entries += e.problems.target_entries();
            r.restart_entries += e
                .restarts
                .iter()
                .chain(&e.seams)
                .map(|s| s.values.len())
                .sum::<usize>();
        }
        r
    }

    /// Features plus targets.
    pub fn stored_entries(&self) -> usize {
        self.feature_entries + self.target_entries
    }

    pub fn ratio(&self) -> f64 {
        self.stored_entries() as f64 / self.stream_entries as f64
    }

    /// True when the problems are no smaller than the stream itself.
    pub fn inefficient(&self) -> bool {
        self.stored_entries() >= self.stream_entries
    }
}

impl fmt::Display for OnlineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22}{:>14}", "stream entries", self.stream_entries)?;
        writeln!(f, "{:<22}{:>14}", "feature entries", self.feature_entries)?;
        writeln!(f, "{:<22}{:>14}", "target entries", self.target_entries)?;
        writeln!(f, "{:<22}{:>14}", "restart entries", self.restart_entries)?;
        write!(
            f,
            "{:<22}{:>13.4}%",
            "problems / stream",
            100.0 * self.ratio()
        )?;
        if self.inefficient() {
            write!(f, "  (larger than the stream)")?;
        }
        Ok(())
    }
}

/// Size of the fitted archive relative to the stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OfflineReport {
    pub stream_entries: usize,
    pub mode_entries: usize,
    pub dense_coefficient_entries: usize,
    /// Index plus value per nonzero coefficient.
    pub sparse_coefficient_entries: usize,
    pub restart_entries: usize,
    pub seam_entries: usize,
    pub manifest_bytes: usize,
}

impl OfflineReport {
    pub fn of(archive: &SurrogateArchive) -> Result<Self> {
        let mut r = Self {
            stream_entries: archive.state_dim * archive.snapshot_count,
            mode_entries: 0,
            dense_coefficient_entries: 0,
            sparse_coefficient_entries: 0,
            restart_entries: 0,
            seam_entries: 0,
            manifest_bytes: archive_manifest_bytes(archive)?,
        };
        for e in &archive.epochs {
            r.mode_entries += e.pod.as_ref().map_or(0, |p| p.modes().len());
            r.dense_coefficient_entries += e.coefficients.iter().map(|c| c.len()).sum::<usize>();
            r.sparse_coefficient_entries += 2 * e
                .coefficients
                .iter()
                .map(|c| c.support().len())
                .sum::<usize>();
            r.restart_entries += e.restarts.iter().map(|s| s.values.len()).sum::<usize>();
            r.seam_entries += e.seams.iter().map(|s| s.values.len()).sum::<usize>();
        }
        Ok(r)
    }

    /// Modes, sparse coefficients, restarts and seams.
    pub fn stored_entries(&self) -> usize {
        self.mode_entries
            + self.sparse_coefficient_entries
            + self.restart_entries
            + self.seam_entries
    }

    pub fn ratio(&self) -> f64 {
        self.stored_entries() as f64 / self.stream_entries as f64
    }

    pub fn dense_coefficient_ratio(&self) -> f64 {
        self.dense_coefficient_entries as f64 / self.stream_entries as f64
    }
}

impl fmt::Display for OfflineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22}{:>14}", "stream entries", self.stream_entries)?;
        writeln!(f, "{:<22}{:>14}", "spatial modes", self.mode_entries)?;
        writeln!(
            f,
            "{:<22}{:>14}  ({:.4}% of stream)",
            "coefficients, dense",
            self.dense_coefficient_entries,
            100.0 * self.dense_coefficient_ratio()
        )?;
        writeln!(
            f,
            "{:<22}{:>14}",
            "coefficients, sparse", self.sparse_coefficient_entries
        )?;
        writeln!(f, "{:<22}{:>14}", "restart entries", self.restart_entries)?;
        writeln!(f, "{:<22}{:>14}", "seam entries", self.seam_entries)?;
        writeln!(f, "{:<22}{:>14}", "manifest bytes", self.manifest_bytes)?;
        write!(
            f,
            "{:<22}{:>13.4}%",
            "archive / stream",
            100.0 * self.ratio()
        )
    }
}
