//! Global sparse differentiation matrices.

use std::io::{BufRead, Write};

use crate::geometry::{NodeSet, StencilTable};
use crate::local_approx::{compute_weights, OperatorSpec};
use crate::textio::fmt_real;
use crate::{Error, Execution, Result};

/// Square sparse matrix in compressed-row form. Column indices within a row
/// are kept in the order they were inserted (stencil order for assembled
/// operators, ascending for combinations).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    spec: Option<OperatorSpec>,
}

impl SparseOperator {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, spec: Option<OperatorSpec>) -> Result<Self> {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                if c >= dim {
                    return Err(Error::InvalidParameter(format!(
                        "column {c} outside dimension {dim}"
                    )));
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(SparseOperator {
            dim,
            row_ptr,
            cols,
            vals,
            spec,
        })
    }

    pub fn identity(dim: usize) -> Self {
        SparseOperator {
            dim,
            row_ptr: (0..=dim).collect(),
            cols: (0..dim).collect(),
            vals: vec![1.0; dim],
            spec: None,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        SparseOperator {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
            spec: None,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut op = Self::identity(diag.len());
        op.vals.copy_from_slice(diag);
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn spec(&self) -> Option<&OperatorSpec> {
        self.spec.as_ref()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Value at `(i, j)`, summing duplicates; zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.cols[r.clone()]
                .iter()
                .zip(&self.vals[r])
                .map(|(&c, v)| v * x[c])
                .sum();
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for (c, v) in self.row(i) {
                d[i * n + c] += v;
            }
        }
        d
    }

    /// `sum_t coef_t * op_t`, with duplicate columns merged and rows sorted
    /// by column. Terms with a zero coefficient are dropped entirely.
    pub fn linear_combination(terms: &[(f64, &SparseOperator)]) -> Result<Self> {
        let dim = terms.first().map(|t| t.1.dim).unwrap_or(0);
        if let Some(bad) = terms.iter().find(|t| t.1.dim != dim) {
            return Err(Error::DimensionMismatch(dim, bad.1.dim));
        }
        let live: Vec<_> = terms.iter().filter(|t| t.0 != 0.0).collect();
        let mut rows = Vec::with_capacity(dim);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..dim {
            scratch.clear();
            for (coef, op) in &live {
                scratch.extend(op.row(i).map(|(c, v)| (c, coef * v)));
            }
            rows.push(merge_sorted(&mut scratch));
        }
        SparseOperator::from_rows(rows, None)
    }

    /// `diag(d) * self`.
    pub fn scale_rows(&self, d: &[f64]) -> Result<Self> {
        if d.len() != self.dim {
            return Err(Error::DimensionMismatch(self.dim, d.len()));
        }
        let mut out = self.clone();
        for i in 0..self.dim {
            for k in out.row_ptr[i]..out.row_ptr[i + 1] {
                out.vals[k] *= d[i];
            }
        }
        out.spec = None;
        Ok(out)
    }

    /// Same operator with node indices relabelled: entry `(i, j)` moves to
    /// `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.dim {
            return Err(Error::DimensionMismatch(self.dim, perm.len()));
        }
        let mut rows = vec![Vec::new(); self.dim];
        for i in 0..self.dim {
            rows[perm[i]] = self.row(i).map(|(c, v)| (perm[c], v)).collect();
        }
        SparseOperator::from_rows(rows, self.spec)
    }

    /// Writes `row,col,value` lines sorted by `(row, col)`, duplicates merged.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "row,col,value")?;
        let mut scratch = Vec::new();
        for i in 0..self.dim {
            scratch.clear();
            scratch.extend(self.row(i));
            for (c, v) in merge_sorted(&mut scratch) {
                writeln!(out, "{i},{c},{}", fmt_real(v))?;
            }
        }
        Ok(())
    }

    /// Reads the coordinate format back; `dim` must be supplied since empty
    /// trailing rows are not recorded.
    pub fn read_coo<R: BufRead>(input: R, dim: usize) -> Result<Self> {
        let mut rows = vec![Vec::new(); dim];
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == "row,col,value" {
                continue;
            }
            let err = |msg: String| Error::Parse {
                line: lineno + 1,
                msg,
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(err("expected row,col,value".into()));
            }
            let r: usize = f[0].parse().map_err(|e| err(format!("{e}")))?;
            let c: usize = f[1].parse().map_err(|e| err(format!("{e}")))?;
            let v: f64 = f[2].parse().map_err(|e| err(format!("{e}")))?;
            if r >= dim {
                return Err(err(format!("row {r} outside dimension {dim}")));
            }
            rows[r].push((c, v));
        }
        SparseOperator::from_rows(rows, None)
    }
}

fn merge_sorted(entries: &mut [(usize, f64)]) -> Vec<(usize, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for &(c, v) in entries.iter() {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out
}

/// Assembles the global differentiation matrix whose row `i` holds the
/// RBF-FD weights of node `i`.
pub fn assemble(
    nodes: &NodeSet,
    stencils: &StencilTable,
    spec: &OperatorSpec,
) -> Result<SparseOperator> {
    assemble_with(nodes, stencils, spec, Execution::default())
}

pub fn assemble_with(
    nodes: &NodeSet,
    stencils: &StencilTable,
    spec: &OperatorSpec,
    exec: Execution,
) -> Result<SparseOperator> {
    spec.validate()?;
    if stencils.stencil_size() != spec.n {
        return Err(Error::InvalidParameter(format!(
            "stencil table has size {}, spec expects {}",
            stencils.stencil_size(),
            spec.n
        )));
    }
    if stencils.num_nodes() != nodes.len() {
        return Err(Error::DimensionMismatch(stencils.num_nodes(), nodes.len()));
    }
    let rows = exec.map_range(nodes.len(), |i| {
        let st = stencils.neighbours(i);
        compute_weights(nodes, st, i, spec).map(|w| st.iter().copied().zip(w).collect::<Vec<_>>())
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    SparseOperator::from_rows(rows, Some(*spec))
}

/// Hyperviscosity magnitude `gamma = c * h^(2 alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct HyperviscosityConfig {
    pub alpha: u32,
    pub c: f64,
    pub h: f64,
}

impl HyperviscosityConfig {
    pub fn new(alpha: u32, c: f64, h: f64) -> Result<Self> {
        if alpha == 0 || !(c >= 0.0) || !(h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "hyperviscosity alpha={alpha} c={c} h={h}"
            )));
        }
        Ok(HyperviscosityConfig { alpha, c, h })
    }

    pub fn gamma(&self) -> f64 {
        self.c * self.h.powi(2 * self.alpha as i32)
    }

    /// `(-1)^(alpha + 1)`.
    pub fn sign(&self) -> f64 {
        if self.alpha % 2 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Coefficient multiplying the discrete `Laplacian^alpha` on the right
    /// hand side of the semidiscrete system.
    pub fn coefficient(&self) -> f64 {
        self.sign() * self.gamma()
    }
}

/// `D_hat = -D_adv + (-1)^(alpha + 1) * gamma * D_hip`.
pub fn stabilised_operator(
    d_adv: &SparseOperator,
    d_hip: &SparseOperator,
    cfg: &HyperviscosityConfig,
) -> Result<SparseOperator> {
    if d_adv.dim() != d_hip.dim() {
        return Err(Error::DimensionMismatch(d_adv.dim(), d_hip.dim()));
    }
    SparseOperator::linear_combination(&[(-1.0, d_adv), (cfg.coefficient(), d_hip)])
}

/// Replaces the rows and columns of boundary nodes by those of the identity.
pub fn apply_dirichlet(op: &SparseOperator, boundary: &[usize]) -> Result<SparseOperator> {
    if boundary.is_empty() {
        return Ok(op.clone());
    }
    let mut is_b = vec![false; op.dim()];
    for &b in boundary {
        if b >= op.dim() {
            return Err(Error::InvalidParameter(format!(
                "boundary index {b} outside dimension {}",
                op.dim()
            )));
        }
        is_b[b] = true;
    }
    let rows = (0..op.dim())
        .map(|i| {
            if is_b[i] {
                vec![(i, 1.0)]
            } else {
                op.row(i).filter(|&(c, _)| !is_b[c]).collect()
            }
        })
        .collect();
    SparseOperator::from_rows(rows, None)
}

/// Entries of `op` in interior rows and boundary columns; these move to the
/// right hand side once [`apply_dirichlet`] has decoupled the boundary.
pub fn boundary_coupling(op: &SparseOperator, boundary: &[usize]) -> Vec<(usize, usize, f64)> {
    let mut is_b = vec![false; op.dim()];
    boundary.iter().for_each(|&b| is_b[b] = true);
    let mut out = Vec::new();
    for i in (0..op.dim()).filter(|&i| !is_b[i]) {
        out.extend(
            op.row(i)
                .filter(|&(c, v)| is_b[c] && v != 0.0)
                .map(|(c, v)| (i, c, v)),
        );
    }
    out
}
