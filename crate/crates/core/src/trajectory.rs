//! Probe time series shared by the explicit and implicit integrators, and
//! their CSV form `t,<probe>,...`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::schur::RhsFamily;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub probe_names: Vec<String>,
    pub times: Vec<f64>,
    /// `values[k][p]`: probe `p` at `times[k]`.
    pub values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(probe_names: Vec<String>) -> Self {
        Self {
            probe_names,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.probe_names.len());
        self.times.push(t);
        self.values.push(values);
    }

    /// Time series of probe `p`.
    pub fn series(&self, p: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[p]).collect()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.values.last().map(Vec::as_slice)
    }

    /// Linear interpolation of probe `p` at `t`, clamped to the sampled range.
    pub fn interpolate(&self, p: usize, t: f64) -> Option<f64> {
        let n = self.times.len();
        if n == 0 {
            return None;
        }
        if t <= self.times[0] {
            return Some(self.values[0][p]);
        }
        if t >= self.times[n - 1] {
            return Some(self.values[n - 1][p]);
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1][p], self.values[k][p]);
        if t1 == t0 {
            return Some(v1);
        }
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv_writer(path)?;
        let mut header = vec!["t".to_string()];
        header.extend(self.probe_names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (t, vals) in self.times.iter().zip(&self.values) {
            let mut rec = vec![format!("{t:e}")];
            rec.extend(vals.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        let header = r.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("t") {
            return Err(Error::Csv(format!("{}: first column must be 't'", path.display())));
        }
        let mut traj = Trajectory::new(header.iter().skip(1).map(str::to_string).collect());
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = row + 2;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Csv(format!("{}:{line}: bad number '{s}'", path.display())))
            };
            let t = parse(&rec[0])?;
            let vals = rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
            traj.push(t, vals);
        }
        Ok(traj)
    }
}

/// One inner solve within a time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveRecord {
    pub family: RhsFamily,
    pub iterations: usize,
    pub subspace_cols: usize,
}

/// Row of the step-report CSV `step,t,rhs_family,pcg_iters,subspace_cols`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub t: f64,
    pub solve: SolveRecord,
}

pub fn write_step_report_csv(path: impl AsRef<Path>, rows: &[StepRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["step", "t", "rhs_family", "pcg_iters", "subspace_cols"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            format!("{:e}", r.t),
            r.solve.family.to_string(),
            r.solve.iterations.to_string(),
            r.solve.subspace_cols.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(BufWriter::new(f)))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}
