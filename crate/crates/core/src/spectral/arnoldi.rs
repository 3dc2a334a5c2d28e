//! Implicitly restarted Arnoldi iteration for the largest-magnitude
//! eigenvalues of a real operator given only by its action.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SpectralConfig;

#[derive(Debug, Clone)]
pub struct ArnoldiOutcome {
    /// Wanted Ritz values, by descending magnitude.
    pub eigs: Vec<c64>,
    /// Ritz residual estimates matching `eigs`.
    pub residuals: Vec<f64>,
    /// Per-eigenvalue convergence flags matching `eigs`.
    pub flags: Vec<bool>,
    /// All wanted eigenvalues converged.
    pub converged: bool,
    pub nconv: usize,
    pub restarts: usize,
}

struct Krylov {
    n: usize,
    m: usize,
    /// Orthonormal basis, column-major `n x m`.
    v: Vec<f64>,
    h: Mat<f64>,
    f: Vec<f64>,
    rng: ChaCha8Rng,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl Krylov {
    fn col(&self, j: usize) -> &[f64] {
        &self.v[j * self.n..(j + 1) * self.n]
    }

    /// Two passes of classical Gram-Schmidt against the first `cols` basis
    /// vectors; returns the accumulated coefficients.
    fn orthogonalise(&self, w: &mut [f64], cols: usize) -> Vec<f64> {
        let mut coef = vec![0.0; cols];
        for _ in 0..2 {
            let c: Vec<f64> = (0..cols).map(|j| dot(self.col(j), w)).collect();
            for (j, cj) in c.iter().enumerate() {
                let vj = &self.v[j * self.n..(j + 1) * self.n];
                w.iter_mut().zip(vj).for_each(|(x, y)| *x -= cj * y);
                coef[j] += cj;
            }
        }
        coef
    }

    fn h_scale(&self, upto: usize) -> f64 {
        let mut s = 0.0f64;
        for i in 0..upto {
            for j in 0..upto {
                s = s.max(self.h[(i, j)].abs());
            }
        }
        s
    }

    /// Grows the factorisation `A V_k = V_k H_k + f e_k^T` to size `m`.
    fn extend<F: FnMut(&mut [f64], usize)>(&mut self, k: usize, op: &mut F) {
        let n = self.n;
        for j in k..self.m {
            let beta = norm(&self.f);
            let scale = self.h_scale(j).max(f64::MIN_POSITIVE);
            let mut v;
            if j > 0 && !(beta > 1e-12 * scale) {
                // invariant subspace found; continue from a fresh direction
                v = (0..n)
                    .map(|_| self.rng.gen_range(-1.0..1.0))
                    .collect::<Vec<_>>();
                self.orthogonalise(&mut v, j);
                let nv = norm(&v);
                v.iter_mut().for_each(|x| *x /= nv);
                self.h[(j, j - 1)] = 0.0;
            } else {
                v = self.f.iter().map(|x| x / beta).collect();
                if j > 0 {
                    self.h[(j, j - 1)] = beta;
                }
            }
            self.v[j * n..(j + 1) * n].copy_from_slice(&v);
            let mut w = v;
            op(&mut w, 1);
            let coef = self.orthogonalise(&mut w, j + 1);
            for (i, c) in coef.into_iter().enumerate() {
                self.h[(i, j)] = c;
            }
            self.f = w;
        }
    }

    /// Ritz values with their unit eigenvectors of `H`, sorted by
    /// descending magnitude with the positive-imaginary member of a
    /// conjugate pair first.
    fn ritz(&self) -> Option<Vec<(c64, Vec<c64>)>> {
        let m = self.m;
        let eig = self.h.eigen().ok()?;
        let (s, u) = (eig.S(), eig.U());
        let mut out: Vec<(c64, Vec<c64>)> = (0..m)
            .map(|i| {
                let nrm = (0..m).map(|r| u[(r, i)].norm_sqr()).sum::<f64>().sqrt();
                (s[i], (0..m).map(|r| u[(r, i)] / nrm).collect())
            })
            .collect();
        out.sort_by(|a, b| {
            b.0.norm()
                .total_cmp(&a.0.norm())
                .then(b.0.im.total_cmp(&a.0.im))
        });
        Some(out)
    }

    fn rotate(&mut self, q: &mut Mat<f64>, i: usize, c: f64, s: f64, lo: usize, hi: usize) {
        let m = self.m;
        for col in lo..m {
            let (a, b) = (self.h[(i, col)], self.h[(i + 1, col)]);
            self.h[(i, col)] = c * a + s * b;
            self.h[(i + 1, col)] = -s * a + c * b;
        }
        for row in 0..=hi.min(m - 1) {
            let (a, b) = (self.h[(row, i)], self.h[(row, i + 1)]);
            self.h[(row, i)] = c * a + s * b;
            self.h[(row, i + 1)] = -s * a + c * b;
        }
        for row in 0..m {
            let (a, b) = (q[(row, i)], q[(row, i + 1)]);
            q[(row, i)] = c * a + s * b;
            q[(row, i + 1)] = -s * a + c * b;
        }
    }

    fn reflect(&mut self, q: &mut Mat<f64>, i: usize, u: [f64; 3], lo: usize, hi: usize) {
        let m = self.m;
        let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        if nu == 0.0 {
            return;
        }
        let alpha = if u[0] >= 0.0 { nu } else { -nu };
        let v = [u[0] + alpha, u[1], u[2]];
        let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let tau = 2.0 / vv;
        for col in lo..m {
            let d =
                v[0] * self.h[(i, col)] + v[1] * self.h[(i + 1, col)] + v[2] * self.h[(i + 2, col)];
            for r in 0..3 {
                self.h[(i + r, col)] -= tau * d * v[r];
            }
        }
        for row in 0..=hi.min(m - 1) {
            let d =
                v[0] * self.h[(row, i)] + v[1] * self.h[(row, i + 1)] + v[2] * self.h[(row, i + 2)];
            for c in 0..3 {
                self.h[(row, i + c)] -= tau * d * v[c];
            }
        }
        for row in 0..m {
            let d = v[0] * q[(row, i)] + v[1] * q[(row, i + 1)] + v[2] * q[(row, i + 2)];
            for c in 0..3 {
                q[(row, i + c)] -= tau * d * v[c];
            }
        }
    }

    /// Unreduced diagonal blocks `[l, r]` of `H`, negligible subdiagonals
    /// set to zero.
    fn blocks(&mut self) -> Vec<(usize, usize)> {
        let m = self.m;
        let mut out = Vec::new();
        let mut start = 0;
        for i in 0..m - 1 {
            let sub = self.h[(i + 1, i)].abs();
            let diag = self.h[(i, i)].abs() + self.h[(i + 1, i + 1)].abs();
            if sub <= f64::EPSILON * diag.max(f64::MIN_POSITIVE) {
                self.h[(i + 1, i)] = 0.0;
                if i > start {
                    out.push((start, i));
                }
                start = i + 1;
            }
        }
        if m - 1 > start {
            out.push((start, m - 1));
        }
        out
    }

    fn single_shift(&mut self, q: &mut Mat<f64>, mu: f64) {
        for (l, r) in self.blocks() {
            let mut x = self.h[(l, l)] - mu;
            let mut y = self.h[(l + 1, l)];
            for i in l..r {
                if i > l {
                    x = self.h[(i, i - 1)];
                    y = self.h[(i + 1, i - 1)];
                }
                let rr = x.hypot(y);
                let (c, s) = if rr == 0.0 {
                    (1.0, 0.0)
                } else {
                    (x / rr, y / rr)
                };
                self.rotate(q, i, c, s, if i > l { i - 1 } else { l }, (i + 2).min(r));
                if i > l {
                    self.h[(i + 1, i - 1)] = 0.0;
                }
            }
        }
    }

    /// Francis double step with the shift pair `re +- i im`.
    fn double_shift(&mut self, q: &mut Mat<f64>, re: f64, im: f64) {
        let s = 2.0 * re;
        let t = re * re + im * im;
        for (l, r) in self.blocks() {
            let h = |me: &Self, i: usize, j: usize| me.h[(i, j)];
            if r == l + 1 {
                let x = h(self, l, l) * h(self, l, l) + h(self, l, r) * h(self, r, l)
                    - s * h(self, l, l)
                    + t;
                let y = h(self, r, l) * (h(self, l, l) + h(self, r, r) - s);
                let rr = x.hypot(y);
                if rr > 0.0 {
                    self.rotate(q, l, x / rr, y / rr, l, r);
                }
                continue;
            }
            let mut x = h(self, l, l) * h(self, l, l) + h(self, l, l + 1) * h(self, l + 1, l)
                - s * h(self, l, l)
                + t;
            let mut y = h(self, l + 1, l) * (h(self, l, l) + h(self, l + 1, l + 1) - s);
            let mut z = h(self, l + 1, l) * h(self, l + 2, l + 1);
            for kk in l..=r - 2 {
                let lo = if kk > l { kk - 1 } else { l };
                self.reflect(q, kk, [x, y, z], lo, (kk + 3).min(r));
                if kk > l {
                    self.h[(kk + 1, kk - 1)] = 0.0;
                    self.h[(kk + 2, kk - 1)] = 0.0;
                }
                x = self.h[(kk + 1, kk)];
                y = self.h[(kk + 2, kk)];
                if kk + 3 <= r {
                    z = self.h[(kk + 3, kk)];
                }
            }
            let rr = x.hypot(y);
            if rr > 0.0 {
                self.rotate(q, r - 1, x / rr, y / rr, r - 2, r);
                self.h[(r, r - 2)] = 0.0;
            }
        }
    }

    /// Applies the unwanted Ritz values as shifts and truncates the
    /// factorisation to `k` columns.
    fn restart(&mut self, k: usize, shifts: &[c64]) {
        let (n, m) = (self.n, self.m);
        let mut q = Mat::<f64>::identity(m, m);
        for sh in shifts {
            let scale = sh.norm().max(f64::MIN_POSITIVE);
            if sh.im.abs() <= 1e-12 * scale {
                self.single_shift(&mut q, sh.re);
            } else if sh.im > 0.0 {
                self.double_shift(&mut q, sh.re, sh.im);
            }
        }
        let beta_k = self.h[(k, k - 1)];
        let sigma = q[(m - 1, k - 1)];
        // V Q[:, 0..=k]
        let mut vq = vec![0.0; n * (k + 1)];
        for c in 0..=k {
            let out = &mut vq[c * n..(c + 1) * n];
            for j in 0..m {
                let qj = q[(j, c)];
                if qj != 0.0 {
                    let vj = &self.v[j * n..(j + 1) * n];
                    out.iter_mut().zip(vj).for_each(|(o, x)| *o += qj * x);
                }
            }
        }
        let mut f: Vec<f64> = vq[k * n..(k + 1) * n].iter().map(|x| x * beta_k).collect();
        f.iter_mut().zip(&self.f).for_each(|(a, b)| *a += sigma * b);
        self.v[..k * n].copy_from_slice(&vq[..k * n]);
        for i in 0..m {
            for j in 0..m {
                if i >= k || j >= k {
                    self.h[(i, j)] = 0.0;
                }
            }
        }
        for i in 2..k {
            for j in 0..i - 1 {
                self.h[(i, j)] = 0.0;
            }
        }
        self.orthogonalise(&mut f, k);
        self.f = f;
    }
}

/// Largest-magnitude eigenvalues of the `n x n` operator applied in place by
/// `op(block, ncols)`.
pub fn arnoldi_eigs<F: FnMut(&mut [f64], usize)>(
    n: usize,
    mut op: F,
    cfg: &SpectralConfig,
) -> ArnoldiOutcome {
    let m = cfg.ncv.min(n);
    let full = m == n;
    let nev = if full {
        cfg.num_eigs.min(n)
    } else {
        cfg.num_eigs.min(m - 1)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut kr = Krylov {
        n,
        m,
        v: vec![0.0; n * m],
        h: Mat::zeros(m, m),
        f: start,
        rng,
    };
    kr.extend(0, &mut op);

    let mut restarts = 0;
    loop {
        let Some(ritz) = kr.ritz() else {
            return ArnoldiOutcome {
                eigs: Vec::new(),
                residuals: Vec::new(),
                flags: Vec::new(),
                converged: false,
                nconv: 0,
                restarts,
            };
        };
        let beta = norm(&kr.f);
        let est: Vec<f64> = ritz.iter().map(|r| beta * r.1[m - 1].norm()).collect();
        let tol_of = |theta: c64| cfg.tol * theta.norm().max(f64::EPSILON.powf(2.0 / 3.0));
        let ok: Vec<bool> = ritz
            .iter()
            .zip(&est)
            .map(|(r, e)| *e <= tol_of(r.0))
            .collect();
        let nconv = ok[..nev].iter().filter(|&&b| b).count();
        let converged = full || nconv == nev;
        let early = cfg.early_exit_above.is_some_and(|thr| {
            ritz[..nev]
                .iter()
                .zip(&ok)
                .any(|(r, &c)| c && r.0.norm() > thr)
        });
        if converged || early || restarts >= cfg.max_restarts {
            return ArnoldiOutcome {
                eigs: ritz[..nev].iter().map(|r| r.0).collect(),
                residuals: est[..nev].to_vec(),
                flags: if full {
                    vec![true; nev]
                } else {
                    ok[..nev].to_vec()
                },
                converged,
                nconv,
                restarts,
            };
        }
        let mut k = (nev + nconv.min((m - nev) / 2)).min(m - 1);
        let is_pair = |a: c64, b: c64| {
            a.im != 0.0
                && (a.re - b.re).abs() <= 1e-12 * a.norm()
                && (a.im + b.im).abs() <= 1e-12 * a.norm()
        };
        if is_pair(ritz[k - 1].0, ritz[k].0) {
            if k < m - 1 {
                k += 1;
            } else {
                k -= 1;
            }
        }
        let shifts: Vec<c64> = ritz[k..].iter().map(|r| r.0).collect();
        kr.restart(k, &shifts);
        kr.extend(k, &mut op);
        restarts += 1;
        log::trace!(
            "arnoldi restart {restarts}: nconv {nconv}/{nev}, leading {:?}",
            ritz[0].0
        );
    }
}
