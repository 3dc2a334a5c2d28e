//! Local polyharmonic-spline interpolation with monomial augmentation and the
//! RBF-FD weights derived from it.
//!
//! For a stencil `x_1..x_n` around a centre node, the augmented system
//!
//! ```text
//! [ A   P ] [ w    ]   [ L phi(x_c) ]
//! [ P^T 0 ] [ beta ] = [ L m(x_c)   ]
//! ```
//!
//! with `A_ij = |x_i - x_j|^k` and `P_ij = m_j(x_i)` yields differentiation
//! weights `w` for the operator `L`. Coordinates are shifted to the centre
//! and divided by `h` before assembly; weights are rescaled by `h^-order`.

use crate::geometry::NodeSet;
use crate::{Error, Result};

/// Pivot magnitude, relative to the largest pivot, below which a local
/// system is declared singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum OperatorKind {
    PartialX,
    PartialY,
    Laplacian,
    /// `Laplacian^alpha`.
    Hyperviscosity(u32),
}

impl OperatorKind {
    /// Differential order of the operator.
    pub fn order(self) -> u32 {
        match self {
            OperatorKind::PartialX | OperatorKind::PartialY => 1,
            OperatorKind::Laplacian => 2,
            OperatorKind::Hyperviscosity(alpha) => 2 * alpha,
        }
    }
}

/// Recipe for one RBF-FD operator approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    /// PHS exponent, `phi(r) = r^k`.
    pub k: u32,
    /// Monomial augmentation degree.
    pub m: u32,
    /// Stencil size.
    pub n: usize,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, k: u32, m: u32, n: usize) -> Result<Self> {
        let spec = OperatorSpec { kind, k, m, n };
        spec.validate()?;
        Ok(spec)
    }

    /// Default for first- and second-order transport operators: `k = 3`,
    /// `m = 2`, `n = 12`.
    pub fn transport(kind: OperatorKind) -> Self {
        OperatorSpec {
            kind,
            k: 3,
            m: 2,
            n: 12,
        }
    }

    /// Default reduced-augmentation hyperviscosity: `k = 2 alpha + 1`,
    /// `m = 2`, `n = 30`.
    pub fn hyperviscosity(alpha: u32) -> Self {
        OperatorSpec {
            kind: OperatorKind::Hyperviscosity(alpha),
            k: 2 * alpha + 1,
            m: 2,
            n: 30,
        }
    }

    /// Number of augmenting monomials, `C(m + 2, 2)`.
    pub fn num_monomials(&self) -> usize {
        num_monomials(self.m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "PHS exponent k = {} must be odd",
                self.k
            )));
        }
        if let OperatorKind::Hyperviscosity(alpha) = self.kind {
            if alpha == 0 {
                return Err(Error::InvalidParameter(
                    "hyperviscosity order must be positive".into(),
                ));
            }
            if self.k < 2 * alpha + 1 {
                return Err(Error::InvalidParameter(format!(
                    "k = {} too small for Laplacian^{alpha}; need k >= {}",
                    self.k,
                    2 * alpha + 1
                )));
            }
        }
        let q = self.num_monomials();
        if self.n < q {
            return Err(Error::InvalidParameter(format!(
                "stencil size {} below the {q} monomials of degree {}",
                self.n, self.m
            )));
        }
        Ok(())
    }
}

/// Which quantity [`phs_eval`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhsDerivative {
    Value,
    /// `Laplacian^alpha` of `r^k` in two dimensions.
    LaplacianPower(u32),
}

/// Evaluates the polyharmonic spline `r^k` or its iterated Laplacian.
///
/// In two dimensions `Laplacian r^p = p^2 r^(p-2)`, so
/// `Laplacian^alpha r^k = prod_{j<alpha} (k - 2j)^2 * r^(k - 2 alpha)`.
pub fn phs_eval(r: f64, k: u32, deriv: PhsDerivative) -> f64 {
    match deriv {
        PhsDerivative::Value => r.powi(k as i32),
        PhsDerivative::LaplacianPower(alpha) => {
            let mut coef = 1.0;
            for j in 0..alpha as i64 {
                let p = k as i64 - 2 * j;
                coef *= (p * p) as f64;
            }
            let power = k as i64 - 2 * alpha as i64;
            if r == 0.0 {
                if power > 0 {
                    0.0
                } else if power == 0 {
                    coef
                } else {
                    f64::INFINITY
                }
            } else {
                coef * r.powi(power as i32)
            }
        }
    }
}

pub fn num_monomials(m: u32) -> usize {
    let m = m as usize;
    (m + 1) * (m + 2) / 2
}

/// Exponent pairs `(a, b)` of `x^a y^b` with `a + b <= m`, graded by total
/// degree and lexicographic (descending `a`) within a degree.
pub fn monomial_basis(m: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(num_monomials(m));
    for deg in 0..=m {
        for a in (0..=deg).rev() {
            out.push((a, deg - a));
        }
    }
    out
}

/// Sparse bivariate polynomial, used to differentiate monomials exactly.
#[derive(Debug, Clone, Default)]
struct Poly(Vec<((u32, u32), f64)>);

impl Poly {
    fn monomial(a: u32, b: u32) -> Self {
        Poly(vec![((a, b), 1.0)])
    }

    fn dx(&self) -> Self {
        Poly(
            self.0
                .iter()
                .filter(|t| t.0 .0 > 0)
                .map(|&((a, b), c)| ((a - 1, b), c * a as f64))
                .collect(),
        )
    }

    fn dy(&self) -> Self {
        Poly(
            self.0
                .iter()
                .filter(|t| t.0 .1 > 0)
                .map(|&((a, b), c)| ((a, b - 1), c * b as f64))
                .collect(),
        )
    }

    fn laplacian(&self) -> Self {
        let mut terms = self.dx().dx().0;
        terms.extend(self.dy().dy().0);
        let mut p = Poly(terms);
        p.collect();
        p
    }

    fn collect(&mut self) {
        self.0.sort_by_key(|t| t.0);
        let mut merged: Vec<((u32, u32), f64)> = Vec::with_capacity(self.0.len());
        for &(e, c) in &self.0 {
            match merged.last_mut() {
                Some(last) if last.0 == e => last.1 += c,
                _ => merged.push((e, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.0 = merged;
    }

    fn apply(&self, kind: OperatorKind) -> Self {
        match kind {
            OperatorKind::PartialX => self.dx(),
            OperatorKind::PartialY => self.dy(),
            OperatorKind::Laplacian => self.laplacian(),
            OperatorKind::Hyperviscosity(alpha) => {
                let mut p = self.clone();
                for _ in 0..alpha {
                    p = p.laplacian();
                }
                p
            }
        }
    }

    fn eval(&self, p: [f64; 2]) -> f64 {
        self.0
            .iter()
            .map(|&((a, b), c)| c * p[0].powi(a as i32) * p[1].powi(b as i32))
            .sum()
    }
}

/// Exact value of `L (x^a y^b)` at `point`.
pub fn monomial_apply(exponents: (u32, u32), kind: OperatorKind, point: [f64; 2]) -> f64 {
    Poly::monomial(exponents.0, exponents.1)
        .apply(kind)
        .eval(point)
}

#[inline]
fn monomial_value(e: (u32, u32), p: [f64; 2]) -> f64 {
    p[0].powi(e.0 as i32) * p[1].powi(e.1 as i32)
}

/// `L` applied (in the evaluation variable) to `|x - x_j|^k`, evaluated at
/// the origin; `xj` is the stencil node in local coordinates.
fn phs_apply_at_origin(kind: OperatorKind, k: u32, xj: [f64; 2]) -> f64 {
    let r = xj[0].hypot(xj[1]);
    match kind {
        OperatorKind::PartialX | OperatorKind::PartialY => {
            if r == 0.0 {
                return 0.0;
            }
            let c = if kind == OperatorKind::PartialX {
                xj[0]
            } else {
                xj[1]
            };
            -(k as f64) * r.powi(k as i32 - 2) * c
        }
        OperatorKind::Laplacian => phs_eval(r, k, PhsDerivative::LaplacianPower(1)),
        OperatorKind::Hyperviscosity(alpha) => phs_eval(r, k, PhsDerivative::LaplacianPower(alpha)),
    }
}

/// The augmented local collocation system of one stencil, factorised.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    /// Stencil nodes in local (shifted, scaled) coordinates.
    pub points: Vec<[f64; 2]>,
    pub exponents: Vec<(u32, u32)>,
    /// Full `(n + q)^2` saddle matrix, row-major.
    pub matrix: Vec<f64>,
    lu: DenseLu,
}

impl LocalSystem {
    /// Assembles and factorises the saddle system for stencil points given in
    /// local coordinates.
    pub fn new(points: Vec<[f64; 2]>, k: u32, m: u32) -> std::result::Result<Self, f64> {
        let exponents = monomial_basis(m);
        let n = points.len();
        let q = exponents.len();
        let dim = n + q;
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..n {
            for j in 0..n {
                let d = [points[i][0] - points[j][0], points[i][1] - points[j][1]];
                matrix[i * dim + j] = phs_eval(d[0].hypot(d[1]), k, PhsDerivative::Value);
            }
            for (l, &e) in exponents.iter().enumerate() {
                let v = monomial_value(e, points[i]);
                matrix[i * dim + n + l] = v;
                matrix[(n + l) * dim + i] = v;
            }
        }
        let lu = DenseLu::factor(matrix.clone(), dim)?;
        Ok(LocalSystem {
            points,
            exponents,
            matrix,
            lu,
        })
    }

    pub fn stencil_len(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points.len() + self.exponents.len()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.lu.solve(rhs)
    }

    /// `max_i |(M sol - rhs)_i|`.
    pub fn residual(&self, sol: &[f64], rhs: &[f64]) -> f64 {
        let dim = self.dim();
        (0..dim)
            .map(|i| {
                let row = &self.matrix[i * dim..(i + 1) * dim];
                (row.iter().zip(sol).map(|(a, b)| a * b).sum::<f64>() - rhs[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Interpolation coefficients `(w, beta)` for nodal values.
    pub fn interpolate(&self, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut rhs = values.to_vec();
        rhs.resize(self.dim(), 0.0);
        let mut sol = self.solve(&rhs);
        let beta = sol.split_off(self.stencil_len());
        (sol, beta)
    }

    /// Right-hand side `[L phi_j(0); L m_l(0)]` for operator `kind`.
    pub fn operator_rhs(&self, kind: OperatorKind, k: u32) -> Vec<f64> {
        let mut rhs: Vec<f64> = self
            .points
            .iter()
            .map(|&p| phs_apply_at_origin(kind, k, p))
            .collect();
        rhs.extend(
            self.exponents
                .iter()
                .map(|&e| monomial_apply(e, kind, [0.0, 0.0])),
        );
        rhs
    }
}

/// RBF-FD weights of `spec` at node `center` over `stencil`, in physical
/// units.
pub fn compute_weights(
    nodes: &NodeSet,
    stencil: &[usize],
    center: usize,
    spec: &OperatorSpec,
) -> Result<Vec<f64>> {
    if stencil.len() != spec.n {
        return Err(Error::InvalidParameter(format!(
            "stencil of node {center} has {} entries, spec expects {}",
            stencil.len(),
            spec.n
        )));
    }
    let h = nodes.h();
    let points: Vec<[f64; 2]> = stencil
        .iter()
        .map(|&j| {
            let d = nodes.displacement(center, j);
            [d[0] / h, d[1] / h]
        })
        .collect();
    let system =
        LocalSystem::new(points, spec.k, spec.m).map_err(|ratio| Error::SingularStencil {
            node: center,
            ratio,
        })?;
    let rhs = system.operator_rhs(spec.kind, spec.k);
    let mut sol = system.solve(&rhs);
    sol.truncate(spec.n);
    let scale = h.powi(-(spec.kind.order() as i32));
    sol.iter_mut().for_each(|w| *w *= scale);
    Ok(sol)
}

/// Dense LU with complete pivoting: `P A Q = L U`.
#[derive(Debug, Clone)]
struct DenseLu {
    lu: Vec<f64>,
    dim: usize,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
}

impl DenseLu {
    /// Fails with the offending pivot ratio when the matrix is numerically
    /// singular.
    fn factor(mut a: Vec<f64>, dim: usize) -> std::result::Result<Self, f64> {
        let mut row_perm: Vec<usize> = (0..dim).collect();
        let mut col_perm: Vec<usize> = (0..dim).collect();
        let mut largest = 0.0f64;
        for s in 0..dim {
            let (mut pr, mut pc, mut pv) = (s, s, 0.0f64);
            for i in s..dim {
                for j in s..dim {
                    let v = a[i * dim + j].abs();
                    if v > pv {
                        (pr, pc, pv) = (i, j, v);
                    }
                }
            }
            largest = largest.max(pv);
            if pv <= SINGULAR_PIVOT_RATIO * largest || pv == 0.0 {
                return Err(if largest > 0.0 { pv / largest } else { 0.0 });
            }
            if pr != s {
                for j in 0..dim {
                    a.swap(s * dim + j, pr * dim + j);
                }
                row_perm.swap(s, pr);
            }
            if pc != s {
                for i in 0..dim {
                    a.swap(i * dim + s, i * dim + pc);
                }
                col_perm.swap(s, pc);
            }
            let piv = a[s * dim + s];
            for i in (s + 1)..dim {
                let f = a[i * dim + s] / piv;
                if f == 0.0 {
                    continue;
                }
                a[i * dim + s] = f;
                for j in (s + 1)..dim {
                    a[i * dim + j] -= f * a[s * dim + j];
                }
            }
        }
        Ok(DenseLu {
            lu: a,
            dim,
            row_perm,
            col_perm,
        })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let dim = self.dim;
        let mut y: Vec<f64> = self.row_perm.iter().map(|&r| rhs[r]).collect();
        for i in 0..dim {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lu[i * dim + j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..dim).rev() {
            let mut acc = y[i];
            for j in (i + 1)..dim {
                acc -= self.lu[i * dim + j] * y[j];
            }
            y[i] = acc / self.lu[i * dim + i];
        }
        let mut x = vec![0.0; dim];
        for (s, &c) in self.col_perm.iter().enumerate() {
            x[c] = y[s];
        }
        x
    }
}
