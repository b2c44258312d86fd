use std::sync::Arc;

use mqs_core::problem::{
    build_plate_model_2d, build_slab_model, load_matrix_market, partition, DiscreteSystem, PartitionedSystem,
    SystemFiles,
};
use mqs_core::schur::{estimate_cfl_with, CflEstimate, CflOptions, StepperConfig};

use crate::config::{ProblemSpec, RunConfig};
use crate::error::Result;

pub fn build_system(cfg: &RunConfig) -> Result<DiscreteSystem> {
    let sys = match &cfg.problem {
        ProblemSpec::Slab {
            n_cells,
            length,
            slab_fraction,
            kappa,
            material,
        } => build_slab_model(
            *n_cells,
            *length,
            *slab_fraction,
            *kappa,
            material.model(),
            cfg.waveform,
        )?,
        ProblemSpec::Plate {
            nx,
            ny,
            geometry,
            kappa,
            material,
        } => build_plate_model_2d(*nx, *ny, geometry, *kappa, material.model(), cfg.waveform)?,
        ProblemSpec::MatrixMarket { dir } => load_matrix_market(&SystemFiles::in_dir(dir), cfg.waveform)?,
    };
    Ok(sys)
}

/// Assembled and partitioned problem, shared read-only between runs.
pub struct Problem {
    pub system: Arc<DiscreteSystem>,
    pub ps: PartitionedSystem,
}

impl Problem {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let system = Arc::new(build_system(cfg)?);
        let ps = partition(Arc::clone(&system))?;
        Ok(Self { system, ps })
    }

    /// CFL bound at the zero initial state, with the mass mode and power
    /// iteration settings of `stepper`.
    pub fn initial_cfl(&self, stepper: &StepperConfig) -> Result<CflEstimate> {
        let opts = CflOptions {
            safety: stepper.cfl_safety,
            tol: stepper.cfl_tol,
            mass_mode: stepper.mass_mode,
            seed: stepper.seed,
            ..Default::default()
        };
        Ok(estimate_cfl_with(&self.ps, &vec![0.0; self.ps.n_c()], &opts, None)?)
    }
}
