use super::{DiscreteSystem, Mesh};
use crate::error::{Error, Result};

/// Weighted set of dofs at which `|B|` is averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    pub dofs: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Probe {
    pub fn new(name: impl Into<String>, dofs: Vec<usize>, weights: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dofs,
            weights,
        }
    }

    pub fn uniform(name: impl Into<String>, dofs: Vec<usize>) -> Self {
        let weights = vec![1.0; dofs.len()];
        Self::new(name, dofs, weights)
    }
}

/// Weighted average of `|B| = |curl A|` over the probe dofs, with the curl
/// evaluated by central differences at each node (Dirichlet nodes are zero).
pub fn probe_flux(sys: &DiscreteSystem, a: &[f64], probe: &Probe) -> Result<f64> {
    if probe.dofs.is_empty() {
        return Err(Error::Probe(format!("probe '{}' is empty", probe.name)));
    }
    if probe.dofs.len() != probe.weights.len() {
        return Err(Error::Probe(format!("probe '{}' has mismatched weights", probe.name)));
    }
    if a.len() != sys.n_dofs() {
        return Err(Error::DimensionMismatch {
            what: "probe state",
            expected: sys.n_dofs(),
            got: a.len(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&d, &w) in probe.dofs.iter().zip(&probe.weights) {
        if d >= sys.n_dofs() {
            return Err(Error::Probe(format!("probe '{}': dof {d} out of range", probe.name)));
        }
        num += w * flux_magnitude(&sys.mesh, a, d)?;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::Probe(format!("probe '{}' has zero total weight", probe.name)));
    }
    Ok(num / den)
}

fn flux_magnitude(mesh: &Mesh, a: &[f64], dof: usize) -> Result<f64> {
    match *mesh {
        Mesh::Line { n_cells, h } => {
            let node = dof + 1;
            let at = |k: usize| if k == 0 || k >= n_cells { 0.0 } else { a[k - 1] };
            Ok(((at(node + 1) - at(node - 1)) / (2.0 * h)).abs())
        }
        Mesh::Grid { nx, ny, hx, hy } => {
            let (i, j) = (dof % (nx - 1) + 1, dof / (nx - 1) + 1);
            let at = |i: usize, j: usize| {
                if i == 0 || j == 0 || i >= nx || j >= ny {
                    0.0
                } else {
                    a[(j - 1) * (nx - 1) + (i - 1)]
                }
            };
            let bx = (at(i, j + 1) - at(i, j - 1)) / (2.0 * hy);
            let by = -(at(i + 1, j) - at(i - 1, j)) / (2.0 * hx);
            Ok(bx.hypot(by))
        }
        Mesh::Unstructured => Err(Error::Probe(
            "flux probes need mesh geometry; imported systems have none".into(),
        )),
    }
}
