//! Stiffness assembly from cell energies.
//!
//! Every cell carries a local quadratic form `Q` such that the cell-average
//! flux density is `B^2 = a_loc^T Q a_loc`. The magnetic energy is
//! `W(a) = sum_cells w/2 * int_0^{B^2} nu(s) ds`, whose gradient is `K(a) a`
//! with the secant stiffness `K(a) = sum w nu(B^2) Q` and whose Hessian is the
//! Newton Jacobian `sum w (nu Q + 2 nu' (Q a)(Q a)^T)`.

use std::fmt;

use super::material::MaterialModel;
use crate::sparse::CsrMatrix;

/// State-dependent stiffness `K(a)` and the Jacobian of `a -> K(a) a`.
pub trait StiffnessAssembler: Send + Sync + fmt::Debug {
    fn n_dofs(&self) -> usize;
    fn is_linear(&self) -> bool;
    fn stiffness(&self, a: &[f64]) -> CsrMatrix;
    fn jacobian(&self, a: &[f64]) -> CsrMatrix;
    /// Dofs whose stiffness rows depend on the state.
    fn nonlinear_dofs(&self) -> Vec<usize> {
        Vec::new()
    }
    /// Cell-average `B^2` per cell, when the assembler knows its cells.
    fn cell_b_squared(&self, _a: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Externally assembled, state-independent stiffness.
#[derive(Debug, Clone)]
pub struct ConstantAssembler {
    k: CsrMatrix,
}

impl ConstantAssembler {
    pub fn new(k: CsrMatrix) -> Self {
        Self { k }
    }
}

impl StiffnessAssembler for ConstantAssembler {
    fn n_dofs(&self) -> usize {
        self.k.n_rows()
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn stiffness(&self, _a: &[f64]) -> CsrMatrix {
        self.k.clone()
    }
    fn jacobian(&self, _a: &[f64]) -> CsrMatrix {
        self.k.clone()
    }
}

/// Local quadratic form, row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalForm {
    pub n: usize,
    pub q: Vec<f64>,
}

impl LocalForm {
    /// Sum of `c * (e_i - e_j)(e_i - e_j)^T` terms.
    pub fn from_differences(n: usize, terms: &[(usize, usize, f64)]) -> Self {
        let mut q = vec![0.0; n * n];
        for &(i, j, c) in terms {
            q[i * n + i] += c;
            q[j * n + j] += c;
            q[i * n + j] -= c;
            q[j * n + i] -= c;
        }
        Self { n, q }
    }
}

/// One cell: its local dofs (`None` for Dirichlet nodes), form, weight
/// (length or area) and material.
#[derive(Debug, Clone)]
pub struct Cell {
    pub dofs: Vec<Option<usize>>,
    pub form: usize,
    pub weight: f64,
    pub material: usize,
}

#[derive(Debug, Clone)]
pub struct CellAssembler {
    n_dofs: usize,
    forms: Vec<LocalForm>,
    materials: Vec<MaterialModel>,
    cells: Vec<Cell>,
    k_pattern: CsrMatrix,
    j_pattern: CsrMatrix,
    // per cell, n_local^2 value slots (usize::MAX = not stored)
    k_slots: Vec<usize>,
    j_slots: Vec<usize>,
    slot_base: Vec<usize>,
}

impl CellAssembler {
    pub fn new(n_dofs: usize, forms: Vec<LocalForm>, materials: Vec<MaterialModel>, cells: Vec<Cell>) -> Self {
        for c in &cells {
            assert!(c.form < forms.len() && c.material < materials.len());
            assert_eq!(c.dofs.len(), forms[c.form].n);
        }
        let mut k_trip = Vec::new();
        let mut j_trip = Vec::new();
        for c in &cells {
            let f = &forms[c.form];
            for (p, dp) in c.dofs.iter().enumerate() {
                for (q, dq) in c.dofs.iter().enumerate() {
                    if let (Some(dp), Some(dq)) = (dp, dq) {
                        j_trip.push((*dp, *dq, 0.0));
                        if f.q[p * f.n + q] != 0.0 {
                            k_trip.push((*dp, *dq, 0.0));
                        }
                    }
                }
            }
        }
        let k_pattern = CsrMatrix::from_triplets(n_dofs, n_dofs, &k_trip).expect("cell dofs in range");
        let j_pattern = CsrMatrix::from_triplets(n_dofs, n_dofs, &j_trip).expect("cell dofs in range");

        let locate = |m: &CsrMatrix, r: usize, c: usize| {
            let s = m.row_ptr()[r];
            let (cols, _) = m.row(r);
            s + cols.binary_search(&c).expect("pattern entry")
        };
        let mut k_slots = Vec::new();
        let mut j_slots = Vec::new();
        let mut slot_base = Vec::with_capacity(cells.len());
        for c in &cells {
            slot_base.push(k_slots.len());
            let f = &forms[c.form];
            for (p, dp) in c.dofs.iter().enumerate() {
                for (q, dq) in c.dofs.iter().enumerate() {
                    match (dp, dq) {
                        (Some(dp), Some(dq)) => {
                            j_slots.push(locate(&j_pattern, *dp, *dq));
                            k_slots.push(if f.q[p * f.n + q] != 0.0 {
                                locate(&k_pattern, *dp, *dq)
                            } else {
                                usize::MAX
                            });
                        }
                        _ => {
                            j_slots.push(usize::MAX);
                            k_slots.push(usize::MAX);
                        }
                    }
                }
            }
        }
        Self {
            n_dofs,
            forms,
            materials,
            cells,
            k_pattern,
            j_pattern,
            k_slots,
            j_slots,
            slot_base,
        }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn materials(&self) -> &[MaterialModel] {
        &self.materials
    }

    fn local(&self, cell: &Cell, a: &[f64], buf: &mut [f64]) {
        for (b, d) in buf.iter_mut().zip(&cell.dofs) {
            *b = d.map_or(0.0, |d| a[d]);
        }
    }

    /// Cell-average B^2 for every cell.
    pub fn b_squared(&self, a: &[f64]) -> Vec<f64> {
        let mut buf = [0.0; 8];
        self.cells
            .iter()
            .map(|c| {
                let f = &self.forms[c.form];
                let loc = &mut buf[..f.n];
                self.local(c, a, loc);
                quad(f, loc)
            })
            .collect()
    }
}

fn quad(f: &LocalForm, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for p in 0..f.n {
        for q in 0..f.n {
            s += x[p] * f.q[p * f.n + q] * x[q];
        }
    }
    s
}

impl StiffnessAssembler for CellAssembler {
    fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    fn is_linear(&self) -> bool {
        self.cells.iter().all(|c| self.materials[c.material].is_linear())
    }

    fn stiffness(&self, a: &[f64]) -> CsrMatrix {
        assert_eq!(a.len(), self.n_dofs);
        let mut values = vec![0.0; self.k_pattern.nnz()];
        let mut buf = [0.0; 8];
        for (ci, c) in self.cells.iter().enumerate() {
            let f = &self.forms[c.form];
            let mat = &self.materials[c.material];
            let coef = if mat.is_linear() {
                c.weight * mat.nu(0.0)
            } else {
                let loc = &mut buf[..f.n];
                self.local(c, a, loc);
                c.weight * mat.nu(quad(f, loc))
            };
            let base = self.slot_base[ci];
            for k in 0..f.n * f.n {
                let slot = self.k_slots[base + k];
                if slot != usize::MAX {
                    values[slot] += coef * f.q[k];
                }
            }
        }
        with_values(&self.k_pattern, values)
    }

    fn jacobian(&self, a: &[f64]) -> CsrMatrix {
        assert_eq!(a.len(), self.n_dofs);
        let mut values = vec![0.0; self.j_pattern.nnz()];
        let mut buf = [0.0; 8];
        let mut qa = [0.0; 8];
        for (ci, c) in self.cells.iter().enumerate() {
            let f = &self.forms[c.form];
            let n = f.n;
            let mat = &self.materials[c.material];
            let loc = &mut buf[..n];
            self.local(c, a, loc);
            let b2 = quad(f, loc);
            let nu = mat.nu(b2);
            let dnu = mat.nu_derivative(b2);
            for p in 0..n {
                qa[p] = (0..n).map(|q| f.q[p * n + q] * loc[q]).sum();
            }
            let base = self.slot_base[ci];
            for p in 0..n {
                for q in 0..n {
                    let slot = self.j_slots[base + p * n + q];
                    if slot != usize::MAX {
                        values[slot] += c.weight * (nu * f.q[p * n + q] + 2.0 * dnu * qa[p] * qa[q]);
                    }
                }
            }
        }
        with_values(&self.j_pattern, values)
    }

    fn nonlinear_dofs(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .cells
            .iter()
            .filter(|c| !self.materials[c.material].is_linear())
            .flat_map(|c| c.dofs.iter().flatten().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn cell_b_squared(&self, a: &[f64]) -> Option<Vec<f64>> {
        Some(self.b_squared(a))
    }
}

fn with_values(pattern: &CsrMatrix, values: Vec<f64>) -> CsrMatrix {
    CsrMatrix::new(
        pattern.n_rows(),
        pattern.n_cols(),
        pattern.row_ptr().to_vec(),
        pattern.col_idx().to_vec(),
        values,
    )
    .expect("pattern is valid CSR")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cell_line(material: MaterialModel) -> CellAssembler {
        // nodes 0..=2 with node 0 Dirichlet; dofs: node1 -> 0, node2 -> 1
        let h = 0.5;
        let form = LocalForm::from_differences(2, &[(0, 1, 1.0 / (h * h))]);
        let cells = vec![
            Cell {
                dofs: vec![None, Some(0)],
                form: 0,
                weight: h,
                material: 0,
            },
            Cell {
                dofs: vec![Some(0), Some(1)],
                form: 0,
                weight: h,
                material: 0,
            },
        ];
        CellAssembler::new(2, vec![form], vec![material], cells)
    }

    #[test]
    fn linear_line_stiffness() {
        let a = two_cell_line(MaterialModel::linear(3.0).unwrap());
        let k = a.stiffness(&[0.0, 0.0]);
        // nu/h * [[2, -1], [-1, 1]]
        assert_eq!(k.to_dense(), vec![vec![12.0, -6.0], vec![-6.0, 6.0]]);
        assert!(a.is_linear());
        assert_eq!(a.stiffness(&[1.0, 7.0]), k);
    }

    #[test]
    fn gradient_is_secant_times_state() {
        // K(a) a must equal the energy gradient; compare with finite differences of W
        let asm = two_cell_line(MaterialModel::brauer_default());
        let forms = &asm.forms;
        let energy = |a: &[f64]| -> f64 {
            // W = sum w/2 int_0^{B^2} nu
            asm.cells
                .iter()
                .map(|c| {
                    let loc: Vec<f64> = c.dofs.iter().map(|d| d.map_or(0.0, |d| a[d])).collect();
                    let b2 = quad(&forms[c.form], &loc);
                    let (k1, k2, k3) = (0.3774, 2.970, 388.33);
                    c.weight / 2.0 * (k1 / k2 * ((k2 * b2).exp() - 1.0) + k3 * b2)
                })
                .sum()
        };
        let a = [0.4, 0.9];
        let ka = asm.stiffness(&a).spmv(&a).unwrap();
        for i in 0..2 {
            let eps = 1e-7;
            let mut p = a;
            let mut m = a;
            p[i] += eps;
            m[i] -= eps;
            let fd = (energy(&p) - energy(&m)) / (2.0 * eps);
            assert!((fd - ka[i]).abs() <= 1e-6 * ka[i].abs(), "{fd} vs {}", ka[i]);
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let asm = two_cell_line(MaterialModel::brauer_default());
        let a = [0.3, 0.8];
        let d = [0.7, -0.4];
        let j = asm.jacobian(&a).spmv(&d).unwrap();
        let eps = 1e-7;
        let f = |x: &[f64]| asm.stiffness(x).spmv(x).unwrap();
        let ap: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + eps * y).collect();
        let am: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x - eps * y).collect();
        let (fp, fm) = (f(&ap), f(&am));
        for i in 0..2 {
            let fd = (fp[i] - fm[i]) / (2.0 * eps);
            assert!((fd - j[i]).abs() <= 1e-6 * j[i].abs().max(1.0));
        }
        assert_eq!(asm.nonlinear_dofs(), vec![0, 1]);
    }
}
