use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// One completed iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub k: usize,
    /// Fidelity weight (field mean for the local solver).
    pub tau: f64,
    pub rel_err: f64,
    /// Against the reference image, if one was given.
    pub psnr: Option<f64>,
    /// Global discrepancy of the new iterate.
    pub discrepancy: f64,
    /// Step size (field mean for the local solver).
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunStatus {
    Converged,
    MaxIterations,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIterations => "max-iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    /// Tau updates where Newton could neither decrease |K| nor find a root.
    pub newton_failures: usize,
    /// Largest `delta (tau L + 8 rho)` seen; below 1 means every step obeyed
    /// the convergence bound.
    pub max_step_ratio: f64,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(["k", "tau", "rel_err", "psnr", "discrepancy", "delta"])?;
        }
        w.flush().map_err(|e| crate::error::Error::io("<trace>", e))?;
        Ok(())
    }
}
