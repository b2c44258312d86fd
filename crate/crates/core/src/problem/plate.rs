use std::sync::Arc;

use super::assembly::{Cell, CellAssembler, LocalForm};
use super::{DiscreteSystem, Geometry, MaterialModel, Mesh, Probe, SourceWaveform};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Physical dimensions (m) of the 2D plate model. Plate and coil extents are
/// snapped to whole cells, centred so that the mirror symmetries hold exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateGeometry {
    pub lx: f64,
    pub ly: f64,
    pub plate_width: f64,
    pub plate_height: f64,
    /// Air gap between plate and each coil side.
    pub gap: f64,
    pub coil_width: f64,
    pub coil_height: f64,
}

impl Default for PlateGeometry {
    fn default() -> Self {
        Self {
            lx: 0.16,
            ly: 0.16,
            plate_width: 0.02,
            plate_height: 0.08,
            gap: 0.01,
            coil_width: 0.02,
            coil_height: 0.08,
        }
    }
}

/// Cell index ranges `(start, count)` of the snapped geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateLayout {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub plate_x: (usize, usize),
    pub plate_y: (usize, usize),
    pub gap_cells: usize,
    /// Left coil; the right coil is its mirror in x.
    pub coil_x: (usize, usize),
    pub coil_y: (usize, usize),
}

fn centered(total: usize, want: f64, h: f64) -> (usize, usize) {
    let mut n = ((want / h).round() as usize).max(1);
    if (total.saturating_sub(n)) % 2 == 1 {
        n += 1;
    }
    let n = n.min(total);
    ((total - n) / 2, n)
}

impl PlateLayout {
    pub fn new(nx: usize, ny: usize, g: &PlateGeometry) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidParameter(format!(
                "plate model needs nx, ny >= 8, got {nx} x {ny}"
            )));
        }
        let (hx, hy) = (g.lx / nx as f64, g.ly / ny as f64);
        let plate_x = centered(nx, g.plate_width, hx);
        let plate_y = centered(ny, g.plate_height, hy);
        let coil_y = centered(ny, g.coil_height, hy);
        let gap_cells = ((g.gap / hx).round() as usize).max(1);
        let coil_w = ((g.coil_width / hx).round() as usize).max(1);
        if plate_x.0 == 0 || plate_y.0 == 0 {
            return Err(Error::Geometry("plate touches the domain boundary".into()));
        }
        if plate_x.0 < gap_cells + coil_w {
            return Err(Error::Geometry(format!(
                "coil ({coil_w} cells) and gap ({gap_cells} cells) do not fit left of the plate ({} cells)",
                plate_x.0
            )));
        }
        Ok(Self {
            nx,
            ny,
            hx,
            hy,
            plate_x,
            plate_y,
            gap_cells,
            coil_x: (plate_x.0 - gap_cells - coil_w, coil_w),
            coil_y,
        })
    }

    fn in_range(v: usize, r: (usize, usize)) -> bool {
        v >= r.0 && v < r.0 + r.1
    }

    pub fn is_plate_cell(&self, i: usize, j: usize) -> bool {
        Self::in_range(i, self.plate_x) && Self::in_range(j, self.plate_y)
    }

    /// +1 in the left coil, -1 in the right coil, 0 elsewhere.
    pub fn coil_sign(&self, i: usize, j: usize) -> f64 {
        if !Self::in_range(j, self.coil_y) {
            return 0.0;
        }
        if Self::in_range(i, self.coil_x) {
            1.0
        } else if Self::in_range(self.nx - 1 - i, self.coil_x) {
            -1.0
        } else {
            0.0
        }
    }

    pub fn node_dof(&self, i: usize, j: usize) -> Option<usize> {
        (i >= 1 && j >= 1 && i < self.nx && j < self.ny).then(|| (j - 1) * (self.nx - 1) + (i - 1))
    }
}

/// 2D `A_z` model: a rectangular conducting plate between the two sides of
/// a coil, separated by air gaps, Dirichlet boundary all around.
///
/// The stiffness uses edge differences per cell, giving a 5-point stencil;
/// the consistent mass is the bilinear element mass on plate cells.
pub fn build_plate_model_2d(
    nx: usize,
    ny: usize,
    geometry: &PlateGeometry,
    kappa: f64,
    material: MaterialModel,
    waveform: SourceWaveform,
) -> Result<DiscreteSystem> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa must be > 0, got {kappa}")));
    }
    let lay = PlateLayout::new(nx, ny, geometry)?;
    let (hx, hy) = (lay.hx, lay.hy);
    let n_dofs = (nx - 1) * (ny - 1);

    // local nodes: 0 (i, j), 1 (i+1, j), 2 (i, j+1), 3 (i+1, j+1)
    let cx = 0.5 / (hx * hx);
    let cy = 0.5 / (hy * hy);
    let form = LocalForm::from_differences(4, &[(0, 1, cx), (2, 3, cx), (0, 2, cy), (1, 3, cy)]);
    let mass_local = [
        [4.0, 2.0, 2.0, 1.0],
        [2.0, 4.0, 1.0, 2.0],
        [2.0, 1.0, 4.0, 2.0],
        [1.0, 2.0, 2.0, 4.0],
    ];
    let area = hx * hy;

    let mut cells = Vec::with_capacity(nx * ny);
    let mut mass = Vec::new();
    let mut conductive = vec![false; n_dofs];
    let mut source = vec![0.0; n_dofs];
    for j in 0..ny {
        for i in 0..nx {
            let dofs = vec![
                lay.node_dof(i, j),
                lay.node_dof(i + 1, j),
                lay.node_dof(i, j + 1),
                lay.node_dof(i + 1, j + 1),
            ];
            let plate = lay.is_plate_cell(i, j);
            if plate {
                let m = kappa * area / 36.0;
                for (p, dp) in dofs.iter().enumerate() {
                    for (q, dq) in dofs.iter().enumerate() {
                        if let (Some(dp), Some(dq)) = (dp, dq) {
                            mass.push((*dp, *dq, m * mass_local[p][q]));
                        }
                    }
                    if let Some(dp) = dp {
                        conductive[*dp] = true;
                    }
                }
            }
            let sign = lay.coil_sign(i, j);
            if sign != 0.0 {
                for d in dofs.iter().flatten() {
                    source[*d] += sign * 0.25 * area;
                }
            }
            cells.push(Cell {
                dofs,
                form: 0,
                weight: area,
                material: usize::from(plate),
            });
        }
    }
    let assembler = CellAssembler::new(n_dofs, vec![form], vec![MaterialModel::vacuum(), material], cells);
    let mass = CsrMatrix::from_triplets(n_dofs, n_dofs, &mass)?;

    let mut sys = DiscreteSystem::new(mass, Arc::new(assembler), source, waveform, conductive)?;
    sys.geometry = Geometry {
        h_min: Some(hx.min(hy)),
        kappa: Some(kappa),
    };
    sys.mesh = Mesh::Grid { nx, ny, hx, hy };

    let jm = ny / 2;
    let line: Vec<usize> = (lay.plate_x.0..=lay.plate_x.0 + lay.plate_x.1)
        .filter_map(|i| lay.node_dof(i, jm))
        .collect();
    let gap_node = lay.plate_x.0 - lay.gap_cells.div_ceil(2);
    sys.probes = vec![
        Probe::uniform("plate_line", line),
        Probe::uniform("gap", vec![lay.node_dof(gap_node, jm).expect("gap node is interior")]),
    ];
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(nx: usize, ny: usize) -> DiscreteSystem {
        build_plate_model_2d(
            nx,
            ny,
            &PlateGeometry::default(),
            7.5e6,
            MaterialModel::brauer_default(),
            SourceWaveform::new(1e6, 1e-3).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn five_point_stiffness_pattern() {
        let s = sys(16, 16);
        let k = &s.k_linear;
        for i in 0..k.n_rows() {
            assert!(k.row(i).0.len() <= 5);
        }
        assert_eq!(k.symmetry_defect(), 0.0);
        assert!(!s.is_linear());
        assert_eq!(s.mass.symmetry_defect(), 0.0);
    }

    #[test]
    fn layout_is_mirror_symmetric() {
        let lay = PlateLayout::new(16, 16, &PlateGeometry::default()).unwrap();
        for j in 0..16 {
            for i in 0..16 {
                assert_eq!(lay.is_plate_cell(i, j), lay.is_plate_cell(15 - i, j));
                assert_eq!(lay.is_plate_cell(i, j), lay.is_plate_cell(i, 15 - j));
                assert_eq!(lay.coil_sign(i, j), -lay.coil_sign(15 - i, j));
                assert_eq!(lay.coil_sign(i, j), lay.coil_sign(i, 15 - j));
            }
        }
    }

    #[test]
    fn nonlinear_dofs_are_conductive() {
        let s = sys(16, 16);
        for d in s.assembler.nonlinear_dofs() {
            assert!(s.conductive[d]);
        }
    }

    #[test]
    fn geometry_errors() {
        let g = PlateGeometry {
            plate_width: 0.16,
            ..Default::default()
        };
        assert!(matches!(
            build_plate_model_2d(16, 16, &g, 1.0, MaterialModel::vacuum(), SourceWaveform::zero()),
            Err(Error::Geometry(_))
        ));
        assert!(build_plate_model_2d(
            4,
            16,
            &PlateGeometry::default(),
            1.0,
            MaterialModel::vacuum(),
            SourceWaveform::zero()
        )
        .is_err());
    }
}
