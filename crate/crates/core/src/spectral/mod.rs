//! Backward-Euler evolution maps and their spectral radius.

mod arnoldi;
mod dense;

pub use arnoldi::{arnoldi_eigs, ArnoldiOutcome};
pub use dense::{dense_eigenvalues, dump_spectrum, write_spectrum_csv, DENSE_CAP};

use faer::c64;
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::operators::{apply_dirichlet, boundary_coupling, SparseOperator};
use crate::{Error, Result};

/// Slack on the unit-circle test that absorbs round-off on neutral modes.
pub const STABILITY_SLACK: f64 = 1e-12;

/// One backward-Euler step `G = (I - dt * D_hat)^-1`, applied by solving
/// with a sparse LU factorisation computed once.
pub struct EvolutionMap {
    system: SparseOperator,
    dt: f64,
    boundary: Vec<usize>,
    /// Entries `(i, j, S_ij)` of the unmodified system with `i` interior and
    /// `j` on the boundary.
    coupling: Vec<(usize, usize, f64)>,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for EvolutionMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EvolutionMap")
            .field("dim", &self.dim())
            .field("dt", &self.dt)
            .field("nnz", &self.system.nnz())
            .field("boundary", &self.boundary.len())
            .finish()
    }
}

/// Builds `S = I - dt * D_hat`, replaces boundary rows and columns by the
/// identity and factorises it.
pub fn build_evolution(
    d_hat: &SparseOperator,
    dt: f64,
    boundary: &[usize],
) -> Result<EvolutionMap> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let n = d_hat.dim();
    let identity = SparseOperator::identity(n);
    let raw = SparseOperator::linear_combination(&[(1.0, &identity), (-dt, d_hat)])?;
    let coupling = boundary_coupling(&raw, boundary);
    let system = apply_dirichlet(&raw, boundary)?;
    let nnz = system.nnz();
    let fail = move |reason: String| Error::Factorisation { dt, n, nnz, reason };

    let mut triplets = Vec::with_capacity(system.nnz());
    for i in 0..n {
        triplets.extend(system.row(i).map(|(c, v)| Triplet::new(i, c, v)));
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| fail(format!("{e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| fail(format!("{e:?}")))?;
    let map = EvolutionMap {
        system,
        dt,
        boundary: boundary.to_vec(),
        coupling,
        lu,
    };

    // partial pivoting does not report tiny pivots; probe with one solve
    let probe: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i * 2654435761) % 1000) as f64 * 1e-3)
        .collect();
    let x = map.apply(&probe);
    let res = map.residual(&x, &probe);
    let norm = probe.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(res <= 1e-6 * norm) {
        return Err(fail(format!(
            "numerically singular (probe residual {res:e})"
        )));
    }
    Ok(map)
}

impl EvolutionMap {
    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// The Dirichlet-adjusted system matrix `S`.
    pub fn system(&self) -> &SparseOperator {
        &self.system
    }

    /// Solves `S x = v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut x = v.to_vec();
        self.apply_in_place(&mut x);
        x
    }

    pub fn apply_in_place(&self, v: &mut [f64]) {
        assert_eq!(v.len(), self.dim());
        let n = v.len();
        let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| v[i]);
        self.lu.solve_in_place(rhs.as_mut());
        for (i, x) in v.iter_mut().enumerate() {
            *x = rhs[(i, 0)];
        }
    }

    /// Solves several right hand sides at once; columns of `block` are
    /// stored contiguously.
    pub fn apply_block(&self, block: &mut [f64], ncols: usize) {
        let n = self.dim();
        assert_eq!(block.len(), n * ncols);
        let mut rhs = Mat::<f64>::from_fn(n, ncols, |i, j| block[j * n + i]);
        self.lu.solve_in_place(rhs.as_mut());
        for j in 0..ncols {
            for i in 0..n {
                block[j * n + i] = rhs[(i, j)];
            }
        }
    }

    /// One backward-Euler step with Dirichlet data: the boundary entries of
    /// the result equal `g` at the boundary nodes exactly.
    pub fn apply_with_boundary(&self, u: &[f64], g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.dim());
        let mut rhs = u.to_vec();
        for &(i, j, s) in &self.coupling {
            rhs[i] -= s * g[j];
        }
        for &b in &self.boundary {
            rhs[b] = g[b];
        }
        let mut x = self.apply(&rhs);
        for &b in &self.boundary {
            x[b] = g[b];
        }
        x
    }

    /// `||S x - v||_2`.
    pub fn residual(&self, x: &[f64], v: &[f64]) -> f64 {
        let sx = self.system.matvec(x);
        sx.iter()
            .zip(v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SpectralMethod {
    /// Dense eigendecomposition up to [`SpectralConfig::dense_max`] nodes,
    /// restarted Arnoldi beyond.
    Auto,
    Arnoldi,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectralConfig {
    pub num_eigs: usize,
    /// Krylov subspace dimension.
    pub ncv: usize,
    pub max_restarts: usize,
    /// Relative Ritz residual below which an eigenpair counts as converged.
    pub tol: f64,
    pub seed: u64,
    pub method: SpectralMethod,
    pub dense_max: usize,
    /// Stop as soon as a converged eigenvalue exceeds this magnitude.
    #[serde(default)]
    pub early_exit_above: Option<f64>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            num_eigs: 40,
            ncv: 81,
            max_restarts: 300,
            tol: 1e-8,
            seed: 0x5eed,
            method: SpectralMethod::Auto,
            dense_max: 1000,
            early_exit_above: None,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_eigs == 0
            || self.ncv <= self.num_eigs
            || !(self.tol > 0.0)
            || self.max_restarts == 0
        {
            return Err(Error::InvalidParameter(format!("spectral config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StabilityReport {
    pub rho: f64,
    /// Sorted by descending magnitude.
    pub leading_eigs: Vec<(f64, f64)>,
    pub converged: bool,
    pub iterations: usize,
}

impl StabilityReport {
    /// `rho <= 1 + 1e-12` on a converged estimate.
    pub fn is_stable(&self) -> bool {
        self.converged && is_stable(self.rho)
    }

    /// Report for a map that could not even be built.
    pub fn singular() -> Self {
        StabilityReport {
            rho: f64::INFINITY,
            leading_eigs: Vec::new(),
            converged: true,
            iterations: 0,
        }
    }
}

pub fn is_stable(rho: f64) -> bool {
    rho <= 1.0 + STABILITY_SLACK
}

/// Spectral radius of the evolution map, from its largest-magnitude
/// eigenvalues.
pub fn spectral_radius(map: &EvolutionMap, cfg: &SpectralConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let n = map.dim();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "spectral radius needs N >= 2, got {n}"
        )));
    }
    let dense = match cfg.method {
        SpectralMethod::Dense => true,
        SpectralMethod::Arnoldi => false,
        SpectralMethod::Auto => n <= cfg.dense_max,
    };
    if dense {
        return dense_radius(map, cfg.num_eigs);
    }
    let out = arnoldi_eigs(n, |block, ncols| map.apply_block(block, ncols), cfg);
    Ok(arnoldi_report(&out))
}

/// `rho` is the largest wanted Ritz magnitude; the report is converged when
/// that leading pair is.
fn arnoldi_report(out: &ArnoldiOutcome) -> StabilityReport {
    let mut idx: Vec<usize> = (0..out.eigs.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (out.eigs[a], out.eigs[b]);
        y.norm().total_cmp(&x.norm()).then(y.im.total_cmp(&x.im))
    });
    let rho = idx.first().map(|&i| out.eigs[i].norm()).unwrap_or(0.0);
    let lead_ok = idx.first().is_some_and(|&i| out.flags[i]);
    StabilityReport {
        rho,
        leading_eigs: idx
            .iter()
            .map(|&i| (out.eigs[i].re, out.eigs[i].im))
            .collect(),
        converged: lead_ok,
        iterations: out.restarts,
    }
}

fn dense_radius(map: &EvolutionMap, num_eigs: usize) -> Result<StabilityReport> {
    let n = map.dim();
    if n > DENSE_CAP {
        return Err(Error::TooLargeForDense { n, cap: DENSE_CAP });
    }
    let mu = dense_eigenvalues(&map.system().to_dense(), n)?;
    let eigs: Vec<c64> = mu
        .iter()
        .map(|m| {
            if m.norm() == 0.0 {
                c64::new(f64::INFINITY, 0.0)
            } else {
                m.inv()
            }
        })
        .collect();
    Ok(report(eigs, num_eigs, true, 1))
}

fn report(
    mut eigs: Vec<c64>,
    num_eigs: usize,
    converged: bool,
    iterations: usize,
) -> StabilityReport {
    eigs.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    eigs.truncate(num_eigs);
    let rho = eigs.first().map(|e| e.norm()).unwrap_or(0.0);
    StabilityReport {
        rho,
        leading_eigs: eigs.iter().map(|e| (e.re, e.im)).collect(),
        converged,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(d: &[f64]) -> SparseOperator {
        SparseOperator::from_diagonal(d)
    }

    #[test]
    fn map_is_shareable() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<EvolutionMap>();
    }

    #[test]
    fn zero_operator_gives_identity_map() {
        let map = build_evolution(&SparseOperator::zeros(5), 0.1, &[]).unwrap();
        let v = [1.0, -2.0, 3.5, 0.0, 1e-3];
        assert_eq!(map.apply(&v), v.to_vec());
        for method in [SpectralMethod::Dense, SpectralMethod::Arnoldi] {
            let cfg = SpectralConfig {
                method,
                num_eigs: 2,
                ncv: 5,
                ..Default::default()
            };
            let r = spectral_radius(&map, &cfg).unwrap();
            assert_eq!(r.rho, 1.0, "{method:?}");
            assert!(r.is_stable());
        }
    }

    #[test]
    fn scalar_backward_euler() {
        let (lambda, dt) = (3.0, 0.25);
        let map = build_evolution(&diag(&[-lambda]), dt, &[]).unwrap();
        assert!((map.apply(&[1.0])[0] - 1.0 / (1.0 + lambda * dt)).abs() < 1e-15);
        assert!(build_evolution(&diag(&[1.0]), 0.0, &[]).is_err());
        assert!(build_evolution(&diag(&[1.0]), -1.0, &[]).is_err());
    }

    #[test]
    fn diagonal_radius() {
        let map = build_evolution(&diag(&[-1.0, -3.0]), 1.0, &[]).unwrap();
        let r = spectral_radius(
            &map,
            &SpectralConfig {
                num_eigs: 2,
                ncv: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.rho - 0.5).abs() < 1e-14);
        assert!((r.leading_eigs[1].0 - 0.25).abs() < 1e-14);
    }

    #[test]
    fn singular_system_is_reported() {
        // dt * d = 1 makes S = 0 in the first row
        let err = build_evolution(&diag(&[1.0, -1.0]), 1.0, &[]).unwrap_err();
        assert!(
            matches!(err, Error::Factorisation { dt, n: 2, .. } if dt == 1.0),
            "{err}"
        );
    }

    fn random_stable(n: usize, seed: u64) -> SparseOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = (0..6)
                    .map(|_| (rng.gen_range(0..n), rng.gen_range(-1.0..1.0)))
                    .collect();
                row.push((i, -8.0));
                row
            })
            .collect();
        SparseOperator::from_rows(rows, None).unwrap()
    }

    #[test]
    fn solve_matches_dense_lu() {
        let n = 200;
        let d = random_stable(n, 3);
        let dt = 0.3;
        let map = build_evolution(&d, dt, &[]).unwrap();
        let mut s = d.to_dense();
        s.iter_mut().for_each(|v| *v *= -dt);
        (0..n).for_each(|i| s[i * n + i] += 1.0);
        let dense = Mat::<f64>::from_fn(n, n, |i, j| s[i * n + j]);
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let oracle = dense
            .partial_piv_lu()
            .solve(Mat::<f64>::from_fn(n, 1, |i, _| v[i]));
        let x = map.apply(&v);
        let vnorm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for i in 0..n {
            assert!((x[i] - oracle[(i, 0)]).abs() <= 1e-10 * vnorm);
        }
        assert!(map.residual(&x, &v) <= 1e-10 * vnorm);
    }

    #[test]
    fn dirichlet_solution_matches_boundary_data() {
        let n = 60;
        let d = random_stable(n, 9);
        let boundary = [0, 7, 31, 59];
        let map = build_evolution(&d, 0.1, &boundary).unwrap();
        let u: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let g: Vec<f64> = (0..n).map(|i| 10.0 + i as f64).collect();
        let x = map.apply_with_boundary(&u, &g);
        for &b in &boundary {
            assert_eq!(x[b], g[b]);
        }
        // interior rows of the original system hold with the boundary data in place
        let mut s = d.to_dense();
        s.iter_mut().for_each(|v| *v *= -0.1);
        (0..n).for_each(|i| s[i * n + i] += 1.0);
        for i in (0..n).filter(|i| !boundary.contains(i)) {
            let lhs: f64 = (0..n).map(|j| s[i * n + j] * x[j]).sum();
            assert!((lhs - u[i]).abs() < 1e-10, "row {i}");
        }
    }

    fn outcome(eigs: &[(f64, bool)]) -> ArnoldiOutcome {
        ArnoldiOutcome {
            eigs: eigs.iter().map(|e| c64::new(e.0, 0.0)).collect(),
            residuals: vec![0.0; eigs.len()],
            flags: eigs.iter().map(|e| e.1).collect(),
            converged: eigs.iter().all(|e| e.1),
            nconv: eigs.iter().filter(|e| e.1).count(),
            restarts: 3,
        }
    }

    #[test]
    fn arnoldi_report_policy() {
        let r = arnoldi_report(&outcome(&[(0.9, true), (1.0001, false)]));
        assert_eq!(r.rho, 1.0001);
        assert_eq!(r.leading_eigs[0], (1.0001, 0.0));
        assert!(!r.converged && !r.is_stable());
        let r = arnoldi_report(&outcome(&[(0.9, true), (0.99999, false)]));
        assert!(!r.converged && !r.is_stable());
        assert_eq!(r.rho, 0.99999);
        let r = arnoldi_report(&outcome(&[(0.99999, true), (0.9, false)]));
        assert!(r.converged && r.is_stable());
        let r = arnoldi_report(&outcome(&[(0.5, false), (1.1, true)]));
        assert!(r.converged && !r.is_stable());
        let r = arnoldi_report(&outcome(&[(0.5, false), (0.4, false)]));
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn apply_block_matches_single_solves() {
        let n = 50;
        let map = build_evolution(&random_stable(n, 1), 0.2, &[]).unwrap();
        let mut block: Vec<f64> = (0..3 * n).map(|i| (i as f64 * 0.1).sin()).collect();
        let cols: Vec<Vec<f64>> = block.chunks(n).map(|c| map.apply(c)).collect();
        map.apply_block(&mut block, 3);
        assert_eq!(block, cols.concat());
    }
}
