use std::io::Write;

use faer::c64;
use faer::Mat;

use crate::operators::SparseOperator;
use crate::textio::fmt_real;
use crate::{Error, Result};

/// Largest dimension handled by the dense eigensolver.
pub const DENSE_CAP: usize = 5000;

/// All eigenvalues of a row-major `n x n` matrix.
pub fn dense_eigenvalues(data: &[f64], n: usize) -> Result<Vec<c64>> {
    if n > DENSE_CAP {
        return Err(Error::TooLargeForDense { n, cap: DENSE_CAP });
    }
    if data.len() != n * n {
        return Err(Error::DimensionMismatch(n * n, data.len()));
    }
    let m = Mat::<f64>::from_fn(n, n, |i, j| data[i * n + j]);
    m.eigenvalues()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

/// Full spectrum of `op`, each eigenvalue multiplied by `scale`.
pub fn dump_spectrum(op: &SparseOperator, scale: f64) -> Result<Vec<(f64, f64)>> {
    let n = op.dim();
    if n > DENSE_CAP {
        return Err(Error::TooLargeForDense { n, cap: DENSE_CAP });
    }
    let mut eigs = dense_eigenvalues(&op.to_dense(), n)?;
    eigs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(eigs
        .into_iter()
        .map(|e| (e.re * scale, e.im * scale))
        .collect())
}

pub fn write_spectrum_csv<W: Write>(eigs: &[(f64, f64)], mut out: W) -> Result<()> {
    writeln!(out, "re,im")?;
    for (re, im) in eigs {
        writeln!(out, "{},{}", fmt_real(*re), fmt_real(*im))?;
    }
    Ok(())
}
