//! CSV input and output for coefficient tables, grid fields and sparse matrices.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use serde::Deserialize;

use crate::cell::CorrectorField;
use crate::domain::grid::DomainGrid;
use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Deserialize)]
struct TabulatedRow {
    node: usize,
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

/// Reads coefficient samples from a CSV with header `node,row,col,re,im`.
/// Every entry of every node must be present exactly once.
pub fn read_tabulated_coefficient(path: &Path, grid: &[usize], m: usize) -> Result<Vec<DMatrix<C64>>> {
    let total: usize = grid.iter().product();
    let mut values = vec![DMatrix::<C64>::zeros(m, m); total];
    let mut seen = vec![false; total * m * m];
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    for rec in reader.deserialize() {
        let r: TabulatedRow = rec?;
        if r.node >= total || r.row >= m || r.col >= m {
            return Err(Error::InvalidInput(format!(
                "{}: entry (node {}, row {}, col {}) outside a {total}-node grid of {m}x{m} matrices",
                path.display(),
                r.node,
                r.row,
                r.col
            )));
        }
        let k = (r.node * m + r.row) * m + r.col;
        if seen[k] {
            return Err(Error::InvalidInput(format!(
                "{}: duplicate entry (node {}, row {}, col {})",
                path.display(),
                r.node,
                r.row,
                r.col
            )));
        }
        seen[k] = true;
        values[r.node][(r.row, r.col)] = C64::new(r.re, r.im);
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidInput(format!(
            "{}: missing entry (node {}, row {}, col {})",
            path.display(),
            k / (m * m),
            k / m % m,
            k % m
        )));
    }
    Ok(values)
}

/// Writes an all-node real field as `x[,y],component,re,im`. Realified fields are
/// written back in complex form when `complex` is set.
pub fn write_field_csv(path: &Path, grid: &DomainGrid, field: &DVector<f64>, nc: usize, complex: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let axes = ["x", "y"];
    let mut header: Vec<&str> = axes[..grid.dim()].to_vec();
    header.extend(["component", "re", "im"]);
    w.write_record(&header)?;
    let ncomp = if complex { nc / 2 } else { nc };
    for node in 0..grid.node_count() {
        let x = grid.node_coords(node);
        for c in 0..ncomp {
            let (re, im) = if complex {
                (field[node * nc + c], field[node * nc + ncomp + c])
            } else {
                (field[node * nc + c], 0.0)
            };
            let mut rec: Vec<String> = x.iter().map(|v| format_num(*v)).collect();
            rec.push(c.to_string());
            rec.push(format_num(re));
            rec.push(format_num(im));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`] back into all-node form.
pub fn read_field_csv(path: &Path, grid: &DomainGrid, nc: usize, complex: bool) -> Result<DVector<f64>> {
    let d = grid.dim();
    let ncomp = if complex { nc / 2 } else { nc };
    let mut out = DVector::zeros(grid.node_count() * nc);
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut count = 0;
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 3 {
            return Err(Error::InvalidInput(format!("{}: row {k} has {} fields, expected {}", path.display(), rec.len(), d + 3)));
        }
        let parse = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| Error::InvalidInput(format!("{}: row {k}: {e}", path.display())))
        };
        let node = k / ncomp;
        let c = k % ncomp;
        if node >= grid.node_count() {
            return Err(Error::GridMismatch(format!("{}: more rows than the grid has nodes", path.display())));
        }
        let x = grid.node_coords(node);
        for (a, xa) in x.iter().enumerate() {
            if (parse(a)? - xa).abs() > 1e-9 * (1.0 + xa.abs()) {
                return Err(Error::GridMismatch(format!("{}: row {k} is not at node {node}", path.display())));
            }
        }
        out[node * nc + c] = parse(d + 1)?;
        if complex {
            out[node * nc + ncomp + c] = parse(d + 2)?;
        }
        count += 1;
    }
    if count != grid.node_count() * ncomp {
        return Err(Error::GridMismatch(format!("{}: {count} rows for {} node components", path.display(), grid.node_count() * ncomp)));
    }
    Ok(out)
}

/// Writes corrector samples as `tau_1[,tau_2],row,col,re,im` (values of Λ̃ = -iΛ).
pub fn write_corrector_csv(path: &Path, corrector: &CorrectorField) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = corrector.dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("tau_{j}")).collect();
    header.extend(["row", "col", "re", "im"].map(String::from));
    w.write_record(&header)?;
    for idx in 0..corrector.node_count() {
        let tau = corrector.node_tau(idx);
        let v = corrector.complex_value(idx);
        for r in 0..v.nrows() {
            for c in 0..v.ncols() {
                let mut rec: Vec<String> = tau.iter().map(|t| format_num(*t)).collect();
                rec.push(r.to_string());
                rec.push(c.to_string());
                rec.push(format_num(v[(r, c)].re));
                rec.push(format_num(v[(r, c)].im));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Dumps a sparse matrix in coordinate form, one `row col value` triplet per line.
pub fn write_triplets(path: &Path, a: &CsrMatrix<f64>) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "% {} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.triplet_iter() {
        writeln!(f, "{i} {j} {}", format_num(*v))?;
    }
    f.flush()?;
    Ok(())
}

/// Shortest round-trip representation, so outputs are byte-stable.
pub fn format_num(v: f64) -> String {
    format!("{v:e}")
}
