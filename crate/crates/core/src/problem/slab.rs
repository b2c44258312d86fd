use std::sync::Arc;

use super::assembly::{Cell, CellAssembler, LocalForm};
use super::{DiscreteSystem, Geometry, MaterialModel, Mesh, Probe, SourceWaveform};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Cell layout of the 1D slab model.
///
/// Cells `0..air`, the slab `air..air + slab`, cells `air + slab..n` are air.
/// The left coil occupies cells `coil.0..coil.1` carrying `+J`; the right
/// coil is its mirror image carrying `-J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabLayout {
    pub n_cells: usize,
    pub length: f64,
    pub h: f64,
    pub air_cells: usize,
    pub slab_cells: usize,
    pub coil: (usize, usize),
}

impl SlabLayout {
    pub fn new(n_cells: usize, length: f64, slab_fraction: f64) -> Result<Self> {
        if n_cells < 8 {
            return Err(Error::InvalidParameter(format!(
                "slab model needs n_cells >= 8, got {n_cells}"
            )));
        }
        if !(slab_fraction > 0.0 && slab_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "slab_fraction must lie in (0, 1), got {slab_fraction}"
            )));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidParameter(format!("length must be > 0, got {length}")));
        }
        let mut slab = ((slab_fraction * n_cells as f64).round() as usize).max(1);
        if (n_cells - slab.min(n_cells)) % 2 == 1 {
            slab = if slab + 1 < n_cells { slab + 1 } else { slab - 1 };
        }
        if slab == 0 || slab + 4 > n_cells {
            return Err(Error::Geometry(format!(
                "slab of {slab} cells touches the domain boundary (n_cells = {n_cells}); \
                 the conductor must be surrounded by at least two air cells per side"
            )));
        }
        let air = (n_cells - slab) / 2;
        let i0 = air / 4;
        let i1 = ((3 * air) / 4).clamp(i0 + 1, air - 1);
        Ok(Self {
            n_cells,
            length,
            h: length / n_cells as f64,
            air_cells: air,
            slab_cells: slab,
            coil: (i0, i1),
        })
    }

    pub fn is_slab_cell(&self, cell: usize) -> bool {
        cell >= self.air_cells && cell < self.air_cells + self.slab_cells
    }

    /// Dof index of node `node` (nodes `1..n_cells`).
    pub fn dof(&self, node: usize) -> usize {
        debug_assert!(node >= 1 && node < self.n_cells);
        node - 1
    }

    pub fn x(&self, node: usize) -> f64 {
        node as f64 * self.h
    }
}

/// 1D conducting slab between two air gaps with an antisymmetric coil pair.
///
/// Linear elements on a uniform grid, Dirichlet `A = 0` at both ends. The
/// slab cells get `material` and conductivity `kappa`; air cells are vacuum.
pub fn build_slab_model(
    n_cells: usize,
    length: f64,
    slab_fraction: f64,
    kappa: f64,
    material: MaterialModel,
    waveform: SourceWaveform,
) -> Result<DiscreteSystem> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa must be > 0, got {kappa}")));
    }
    let lay = SlabLayout::new(n_cells, length, slab_fraction)?;
    let h = lay.h;
    let n_dofs = n_cells - 1;
    let node_dof = |node: usize| (node >= 1 && node < n_cells).then(|| node - 1);

    let form = LocalForm::from_differences(2, &[(0, 1, 1.0 / (h * h))]);
    let cells: Vec<Cell> = (0..n_cells)
        .map(|i| Cell {
            dofs: vec![node_dof(i), node_dof(i + 1)],
            form: 0,
            weight: h,
            material: usize::from(lay.is_slab_cell(i)),
        })
        .collect();
    let assembler = CellAssembler::new(n_dofs, vec![form], vec![MaterialModel::vacuum(), material], cells);

    let mut mass = Vec::new();
    let mut conductive = vec![false; n_dofs];
    let m = kappa * h / 6.0;
    for i in (0..n_cells).filter(|&i| lay.is_slab_cell(i)) {
        let (a, b) = (i - 1, i); // dofs of nodes i and i + 1
        mass.extend([(a, a, 2.0 * m), (a, b, m), (b, a, m), (b, b, 2.0 * m)]);
        conductive[a] = true;
        conductive[b] = true;
    }
    let mass = CsrMatrix::from_triplets(n_dofs, n_dofs, &mass)?;

    let mut source = vec![0.0; n_dofs];
    for i in lay.coil.0..lay.coil.1 {
        for node in [i, i + 1] {
            if let Some(d) = node_dof(node) {
                source[d] += 0.5 * h;
            }
        }
        let mirror = n_cells - 1 - i;
        for node in [mirror, mirror + 1] {
            if let Some(d) = node_dof(node) {
                source[d] -= 0.5 * h;
            }
        }
    }

    let mut sys = DiscreteSystem::new(mass, Arc::new(assembler), source, waveform, conductive)?;
    sys.geometry = Geometry {
        h_min: Some(h),
        kappa: Some(kappa),
    };
    sys.mesh = Mesh::Line { n_cells, h };
    let center = n_cells / 2;
    let quarter = lay.air_cells + (lay.slab_cells / 4).max(1);
    sys.probes = vec![
        Probe::uniform("slab_center", vec![lay.dof(center)]),
        Probe::uniform("slab_quarter", vec![lay.dof(quarter)]),
    ];
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::probe_flux;

    fn linear_slab(n: usize) -> DiscreteSystem {
        build_slab_model(
            n,
            0.1,
            0.25,
            5.96e7,
            MaterialModel::linear_relative(100.0).unwrap(),
            SourceWaveform::new(1e6, 1e-3).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn small_structure() {
        let sys = linear_slab(8);
        assert_eq!(sys.n_dofs(), 7);
        // two slab cells share three nodes, all carrying conductor mass
        let n_c = sys.conductive.iter().filter(|&&c| c).count();
        assert_eq!(n_c, 3);
        assert_eq!(sys.conductive, vec![false, false, true, true, true, false, false]);
        for (i, &c) in sys.conductive.iter().enumerate() {
            if !c {
                assert_eq!(sys.mass.row(i).0.len(), 0);
            } else {
                assert_eq!(sys.source_pattern[i], 0.0);
            }
        }
    }

    #[test]
    fn linear_stiffness_is_state_independent() {
        let sys = linear_slab(16);
        let a: Vec<f64> = (0..sys.n_dofs()).map(|i| (i as f64).sin()).collect();
        assert_eq!(sys.assembler.stiffness(&a), sys.k_linear);
    }

    #[test]
    fn source_is_antisymmetric_and_in_air() {
        let sys = linear_slab(32);
        let n = sys.n_dofs();
        for i in 0..n {
            assert_eq!(sys.source_pattern[i], -sys.source_pattern[n - 1 - i]);
        }
        assert!(sys.source_pattern.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn slab_touching_boundary_is_rejected() {
        let r = build_slab_model(8, 1.0, 0.8, 1.0, MaterialModel::vacuum(), SourceWaveform::zero());
        assert!(matches!(r, Err(Error::Geometry(_))));
        assert!(build_slab_model(7, 1.0, 0.25, 1.0, MaterialModel::vacuum(), SourceWaveform::zero()).is_err());
    }

    #[test]
    fn flux_of_linear_profile_is_slope() {
        let sys = linear_slab(32);
        let h = 0.1 / 32.0;
        let a: Vec<f64> = (1..32).map(|node| 3.0 * node as f64 * h).collect();
        for p in &sys.probes {
            assert!((probe_flux(&sys, &a, p).unwrap() - 3.0).abs() < 1e-12);
        }
        assert_eq!(probe_flux(&sys, &vec![0.0; 31], &sys.probes[0]).unwrap(), 0.0);
    }

    #[test]
    fn flux_of_sine_is_second_order() {
        let err = |n: usize| {
            let sys = linear_slab(n);
            let l = 0.1;
            let h = l / n as f64;
            let pi = std::f64::consts::PI;
            let a: Vec<f64> = (1..n).map(|k| (pi * k as f64 * h / l).sin()).collect();
            let node = n / 2 + n / 8;
            let probe = Probe::uniform("p", vec![node - 1]);
            let x = node as f64 * h;
            let exact = (pi / l * (pi * x / l).cos()).abs();
            (probe_flux(&sys, &a, &probe).unwrap() - exact).abs()
        };
        let (e1, e2) = (err(32), err(64));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "observed order {order}");
    }

    #[test]
    fn empty_probe_is_an_error() {
        let sys = linear_slab(16);
        assert!(probe_flux(&sys, &[0.0; 15], &Probe::uniform("none", vec![])).is_err());
    }
}
