//! Matrix Market exchange for externally assembled systems.
//!
//! Matrices use `%%MatrixMarket matrix coordinate real {general|symmetric}`
//! (array format is also read). Vectors are one value per line, masks one
//! `0`/`1` per line; `%` and `#` lines are comments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{partition, ConstantAssembler, DiscreteSystem, SourceWaveform};
use crate::error::{Error, Result};
use crate::sparse::{build_jacobi, pcg, CsrMatrix, Preconditioner};

/// File set describing one system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemFiles {
    pub mass: PathBuf,
    pub stiffness: PathBuf,
    pub source_pattern: PathBuf,
    pub conductive_mask: PathBuf,
}

impl SystemFiles {
    /// `M.mtx`, `K.mtx`, `source.txt`, `mask.txt` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            mass: d.join("M.mtx"),
            stiffness: d.join("K.mtx"),
            source_pattern: d.join("source.txt"),
            conductive_mask: d.join("mask.txt"),
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(
            path,
            1,
            "header must read '%%MatrixMarket matrix <format> <field> <symmetry>'",
        ));
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(parse_err(path, 1, format!("unsupported format '{other}'"))),
    };
    if !matches!(tokens[3].as_str(), "real" | "integer" | "double") {
        return Err(parse_err(path, 1, format!("unsupported field '{}'", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(path, 1, format!("unsupported symmetry '{other}'"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body.next().ok_or_else(|| parse_err(path, 2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| parse_err(path, size_line, format!("bad size entry '{t}'")))
        })
        .collect::<Result<_>>()?;

    let mut trip = Vec::new();
    let (n_rows, n_cols);
    if coordinate {
        if dims.len() != 3 {
            return Err(parse_err(path, size_line, "coordinate size line needs 'rows cols nnz'"));
        }
        (n_rows, n_cols) = (dims[0], dims[1]);
        let nnz = dims[2];
        for (ln, l) in body.by_ref().take(nnz) {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 3 {
                return Err(parse_err(path, ln, "expected 'row col value'"));
            }
            let idx = |s: &str, max: usize| -> Result<usize> {
                let v: usize = s.parse().map_err(|_| parse_err(path, ln, format!("bad index '{s}'")))?;
                if v == 0 || v > max {
                    return Err(parse_err(path, ln, format!("index {v} outside 1..={max}")));
                }
                Ok(v - 1)
            };
            let (r, c) = (idx(t[0], n_rows)?, idx(t[1], n_cols)?);
            let v: f64 = t[2]
                .parse()
                .map_err(|_| parse_err(path, ln, format!("bad value '{}'", t[2])))?;
            if symmetric && c > r {
                return Err(parse_err(
                    path,
                    ln,
                    "symmetric storage must list the lower triangle only",
                ));
            }
            trip.push((r, c, v));
            if symmetric && r != c {
                trip.push((c, r, v));
            }
        }
        let got = trip.iter().filter(|t| !symmetric || t.0 >= t.1).count();
        if got != nnz {
            return Err(parse_err(
                path,
                size_line,
                format!("declared {nnz} entries, found {got}"),
            ));
        }
    } else {
        if dims.len() != 2 {
            return Err(parse_err(path, size_line, "array size line needs 'rows cols'"));
        }
        (n_rows, n_cols) = (dims[0], dims[1]);
        // column-major; symmetric arrays store the lower triangle
        let mut k = 0usize;
        for j in 0..n_cols {
            let start = if symmetric { j } else { 0 };
            for i in start..n_rows {
                let (ln, l) = body
                    .next()
                    .ok_or_else(|| parse_err(path, size_line, format!("array data ends after {k} values")))?;
                let v: f64 = l
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(path, ln, format!("bad value '{}'", l.trim())))?;
                if v != 0.0 {
                    trip.push((i, j, v));
                    if symmetric && i != j {
                        trip.push((j, i, v));
                    }
                }
                k += 1;
            }
        }
    }
    if let Some((ln, _)) = body.next() {
        return Err(parse_err(path, ln, "trailing data after the declared entries"));
    }
    CsrMatrix::from_triplets(n_rows, n_cols, &trip)
}

/// Writes every stored entry in coordinate general format.
pub fn write_matrix_market(path: impl AsRef<Path>, a: &CsrMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(32 * a.nnz() + 64);
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz());
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            let _ = writeln!(s, "{} {} {:e}", i + 1, c + 1, v);
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%') && !l.starts_with('#'))
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = read(path)?;
    data_lines(&text)
        .map(|(ln, l)| l.parse().map_err(|_| parse_err(path, ln, format!("bad value '{l}'"))))
        .collect()
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(24 * v.len());
    for x in v {
        let _ = writeln!(s, "{x:e}");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Vec<bool>> {
    let path = path.as_ref();
    let text = read(path)?;
    data_lines(&text)
        .map(|(ln, l)| match l {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(parse_err(path, ln, format!("mask entries must be 0 or 1, got '{l}'"))),
        })
        .collect()
}

pub fn write_mask(path: impl AsRef<Path>, mask: &[bool]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(2 * mask.len());
    for &m in mask {
        s.push_str(if m { "1\n" } else { "0\n" });
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes `M`, `K` (at the zero state), source pattern and mask.
pub fn export_system(sys: &DiscreteSystem, files: &SystemFiles) -> Result<()> {
    write_matrix_market(&files.mass, &sys.mass)?;
    write_matrix_market(&files.stiffness, &sys.k_linear)?;
    write_vector(&files.source_pattern, &sys.source_pattern)?;
    write_mask(&files.conductive_mask, &sys.conductive)
}

const SYMMETRY_TOL: f64 = 1e-10;
const SOURCE_CHECK_TOL: f64 = 1e-10;

/// Loads an externally assembled system, treated as linear.
///
/// Validation order: parsing, dimensions, symmetry of `M` and `K`, partition
/// non-emptiness, mass and source placement, and finally a PCG solvability
/// check of `K_nn x = j_s,n`.
pub fn load_matrix_market(files: &SystemFiles, waveform: SourceWaveform) -> Result<DiscreteSystem> {
    let m = read_matrix_market(&files.mass)?;
    let k = read_matrix_market(&files.stiffness)?;
    let source = read_vector(&files.source_pattern)?;
    let mask = read_mask(&files.conductive_mask)?;

    let n = k.n_rows();
    let dims = [
        ("stiffness columns", k.n_cols()),
        ("mass rows", m.n_rows()),
        ("mass columns", m.n_cols()),
        ("source pattern", source.len()),
        ("conductive mask", mask.len()),
    ];
    for (what, got) in dims {
        if got != n {
            return Err(Error::DimensionMismatch { what, expected: n, got });
        }
    }
    for (name, a) in [("mass matrix", &m), ("stiffness matrix", &k)] {
        let deviation = a.symmetry_defect();
        let limit = SYMMETRY_TOL * a.max_abs();
        if deviation > limit {
            return Err(Error::Asymmetric { name, deviation, limit });
        }
    }

    let sys = DiscreteSystem::new(m, Arc::new(ConstantAssembler::new(k)), source, waveform, mask)?;

    let ps = partition(Arc::new(sys.clone()))?;
    let pre = build_jacobi(&ps.k_nn).unwrap_or(Preconditioner::Identity);
    let (_, rep) = pcg(
        &ps.k_nn,
        &ps.j_sn_pattern,
        &vec![0.0; ps.n_n()],
        SOURCE_CHECK_TOL,
        20 * ps.n_n().max(10),
        &pre,
    )?;
    if !rep.converged {
        return Err(Error::InconsistentSource {
            residual: rep.final_relative_residual,
            iterations: rep.iterations,
        });
    }
    Ok(sys)
}
