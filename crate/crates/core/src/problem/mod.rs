//! Discretized magnetoquasistatic systems `M da/dt + K(a) a = j_s(t)`.
//!
//! Built-in 1D slab and 2D plate models, Matrix Market import/export,
//! material laws, the source ramp and the conductor/air partition.

mod assembly;
mod material;
mod mmio;
mod partition;
mod plate;
mod probe;
mod slab;
mod waveform;

use std::sync::Arc;

pub use assembly::{Cell, CellAssembler, ConstantAssembler, LocalForm, StiffnessAssembler};
pub use material::{nu, nu_derivative, MaterialModel, NU_VACUUM};
pub use mmio::{
    export_system, load_matrix_market, read_mask, read_matrix_market, read_vector, write_mask, write_matrix_market,
    write_vector, SystemFiles,
};
pub use partition::{partition, MassMode, PartitionedSystem};
pub use plate::{build_plate_model_2d, PlateGeometry, PlateLayout};
pub use probe::{probe_flux, Probe};
pub use slab::{build_slab_model, SlabLayout};
pub use waveform::{source_at, SourceWaveform};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Mesh metadata used by the flux probes.
#[derive(Debug, Clone, PartialEq)]
pub enum Mesh {
    /// Uniform 1D grid of `n_cells` cells; dof `k` sits on node `k + 1`.
    Line { n_cells: usize, h: f64 },
    /// Uniform `nx x ny` cell grid; interior node `(i, j)` has dof
    /// `(j - 1) * (nx - 1) + (i - 1)`.
    Grid { nx: usize, ny: usize, hx: f64, hy: f64 },
    /// Imported system without geometry.
    Unstructured,
}

/// Length and conductivity scales of the conductor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Geometry {
    /// Smallest edge length (m).
    pub h_min: Option<f64>,
    /// Conductor conductivity (S/m).
    pub kappa: Option<f64>,
}

/// The assembled DAE system `M da/dt + K(a) a = waveform(t) * source_pattern`.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub mass: CsrMatrix,
    pub assembler: Arc<dyn StiffnessAssembler>,
    /// Stiffness at the zero state (initial reluctivities).
    pub k_linear: CsrMatrix,
    pub source_pattern: Vec<f64>,
    pub waveform: SourceWaveform,
    pub conductive: Vec<bool>,
    pub geometry: Geometry,
    pub mesh: Mesh,
    pub probes: Vec<Probe>,
}

impl DiscreteSystem {
    /// Assembles a system and checks the structural invariants.
    pub fn new(
        mass: CsrMatrix,
        assembler: Arc<dyn StiffnessAssembler>,
        source_pattern: Vec<f64>,
        waveform: SourceWaveform,
        conductive: Vec<bool>,
    ) -> Result<Self> {
        let n = assembler.n_dofs();
        let k_linear = assembler.stiffness(&vec![0.0; n]);
        let sys = Self {
            mass,
            assembler,
            k_linear,
            source_pattern,
            waveform,
            conductive,
            geometry: Geometry::default(),
            mesh: Mesh::Unstructured,
            probes: Vec::new(),
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn n_dofs(&self) -> usize {
        self.conductive.len()
    }

    pub fn is_linear(&self) -> bool {
        self.assembler.is_linear()
    }

    pub fn stiffness(&self, a: &[f64]) -> CsrMatrix {
        if self.assembler.is_linear() {
            self.k_linear.clone()
        } else {
            self.assembler.stiffness(a)
        }
    }

    /// Largest cell-average |B| (T), when the assembler exposes cells.
    pub fn peak_flux_density(&self, a: &[f64]) -> Option<f64> {
        let b2 = self.assembler.cell_b_squared(a)?;
        Some(b2.into_iter().fold(0.0, f64::max).sqrt())
    }

    /// `j_s(t)` in global ordering.
    pub fn source(&self, t: f64) -> Vec<f64> {
        let s = self.waveform.at(t);
        self.source_pattern.iter().map(|p| s * p).collect()
    }

    pub fn with_waveform(mut self, waveform: SourceWaveform) -> Self {
        self.waveform = waveform;
        self
    }

    pub fn probe(&self, name: &str) -> Option<&Probe> {
        self.probes.iter().find(|p| p.name == name)
    }

    /// Dimension, pattern, and mass/source placement checks.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_dofs();
        for (what, m) in [("mass matrix", &self.mass), ("stiffness matrix", &self.k_linear)] {
            if m.n_rows() != n || m.n_cols() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got: m.n_rows().max(m.n_cols()),
                });
            }
        }
        if self.source_pattern.len() != n {
            return Err(Error::DimensionMismatch {
                what: "source pattern",
                expected: n,
                got: self.source_pattern.len(),
            });
        }
        if !self.conductive.iter().any(|&c| c) {
            return Err(Error::EmptyPartition("conductive"));
        }
        if self.conductive.iter().all(|&c| c) {
            return Err(Error::EmptyPartition("non-conductive"));
        }
        for i in 0..n {
            let (cols, vals) = self.mass.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if v != 0.0 && !(self.conductive[i] && self.conductive[j]) {
                    let air = if self.conductive[i] { j } else { i };
                    return Err(Error::MassOnNonConductive(air));
                }
            }
            if self.conductive[i] && self.source_pattern[i] != 0.0 {
                return Err(Error::SourceOnConductor(i));
            }
        }
        Ok(())
    }
}
