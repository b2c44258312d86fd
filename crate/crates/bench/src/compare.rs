//! Probe-by-probe comparison of two trajectories on possibly different time
//! grids.

use std::fmt::Write as _;
use std::path::Path;

use mqs_core::trajectory::Trajectory;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDeviation {
    pub name: String,
    /// Deviations relative to the peak `|value|` of the second trajectory.
    pub max: f64,
    pub rms: f64,
    /// Time of the largest deviation.
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub probes: Vec<ProbeDeviation>,
    pub samples: usize,
    pub tol: f64,
}

impl CompareReport {
    pub fn max_deviation(&self) -> f64 {
        self.probes.iter().map(|p| p.max).fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_deviation() <= self.tol
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples = {}", self.samples);
        for p in &self.probes {
            let _ = writeln!(
                s,
                "{}: max {:.6e} at t = {:e}, rms {:.6e}",
                p.name, p.max, p.t_max, p.rms
            );
        }
        let verdict = if self.passes() { "PASS" } else { "FAIL" };
        let _ = writeln!(
            s,
            "{verdict}: max deviation {:.6e}, tol {:e}",
            self.max_deviation(),
            self.tol
        );
        s
    }
}

/// Samples the trajectory with fewer samples, interpolating the other one
/// linearly, over the common time span.
pub fn compare(a: &Trajectory, b: &Trajectory, tol: f64) -> Result<CompareReport> {
    if a.probe_names != b.probe_names {
        return Err(BenchError::Usage(format!(
            "probe schemas differ: [{}] vs [{}]",
            a.probe_names.join(", "),
            b.probe_names.join(", ")
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(BenchError::Usage("cannot compare an empty trajectory".into()));
    }
    let a_is_coarse = a.len() <= b.len();
    let (coarse, fine) = if a_is_coarse { (a, b) } else { (b, a) };
    let (lo, hi) = (fine.times[0], fine.times[fine.len() - 1]);
    let mut probes = Vec::with_capacity(a.probe_names.len());
    let mut samples = 0;
    for (p, name) in a.probe_names.iter().enumerate() {
        let peak = b.series(p).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { peak } else { 1.0 };
        let (mut max, mut t_max, mut sq, mut n) = (0.0_f64, coarse.times[0], 0.0, 0usize);
        for (k, &t) in coarse.times.iter().enumerate() {
            if t < lo || t > hi {
                continue;
            }
            let c = coarse.values[k][p];
            let f = fine.interpolate(p, t).expect("t lies inside the fine grid");
            let d = (c - f).abs() / scale;
            if d > max {
                (max, t_max) = (d, t);
            }
            sq += d * d;
            n += 1;
        }
        if n == 0 {
            return Err(BenchError::Usage("trajectories do not overlap in time".into()));
        }
        samples = n;
        probes.push(ProbeDeviation {
            name: name.clone(),
            max,
            rms: (sq / n as f64).sqrt(),
            t_max,
        });
    }
    Ok(CompareReport { probes, samples, tol })
}

pub fn compare_files(a: &Path, b: &Path, tol: f64) -> Result<CompareReport> {
    compare(&Trajectory::read_csv(a)?, &Trajectory::read_csv(b)?, tol)
}
