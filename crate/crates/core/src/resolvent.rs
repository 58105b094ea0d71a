//! Shifted linear solves `(z - L) y = b` and spectra of generators.
//!
//! The generator of an irreducible kernel has a simple eigenvalue 0 (constant
//! right eigenvector, stationary left eigenvector) and all other eigenvalues in
//! the open left half plane. For `z != 0` on the imaginary axis the shifted
//! system is therefore nonsingular and solved directly: dense complex LU up to
//! [`DENSE_SOLVE_MAX`] states, restarted GMRES with Jacobi preconditioning
//! above. At `z = 0` the solve is restricted to the mean-zero subspace through
//! a bordered system with a Lagrange-multiplier normalization row, which pins
//! `pi[y] = 0` and absorbs any stationary component of the right-hand side.

use crate::{C64, Error, RateMatrix, Result};
use nalgebra::DMatrix;

/// Largest system handed to the dense complex LU path.
pub const DENSE_SOLVE_MAX: usize = 2000;

/// Relative residual target of the iterative path.
const GMRES_TOL: f64 = 1e-12;
const GMRES_RESTART: usize = 80;
const GMRES_MAX_OUTER: usize = 400;

/// Generator action on a complex vector: `(Q v)(x) = sum_y r(x, y)(v(y) - v(x))`.
pub fn apply_generator_c64(rates: &RateMatrix, v: &[C64]) -> Vec<C64> {
    (0..rates.len())
        .map(|x| {
            rates
                .edges_from(x)
                .iter()
                .map(|&(y, r)| r * (v[y] - v[x]))
                .sum()
        })
        .collect()
}

/// A factorized (or operator-form) shifted system `(z - Q) y = b` over a kernel.
/// Factorizations are cached so repeated right-hand sides reuse the LU.
pub struct ShiftedSystem<'a> {
    rates: &'a RateMatrix,
    z: C64,
    dense: Option<nalgebra::linalg::LU<C64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl<'a> ShiftedSystem<'a> {
    pub fn new(rates: &'a RateMatrix, z: C64) -> Self {
        Self::with_dense_cap(rates, z, DENSE_SOLVE_MAX)
    }

    /// As [`Self::new`] with an explicit dense-size cap (tests force the
    /// iterative path by passing a small cap).
    pub fn with_dense_cap(rates: &'a RateMatrix, z: C64, cap: usize) -> Self {
        let n = rates.len();
        let dense = if n <= cap {
            let mut m = DMatrix::<C64>::zeros(n, n);
            for x in 0..n {
                for &(y, r) in rates.edges_from(x) {
                    m[(x, y)] = C64::new(-r, 0.0);
                }
                m[(x, x)] = z + C64::new(rates.holding(x), 0.0);
            }
            Some(m.lu())
        } else {
            None
        };
        Self { rates, z, dense }
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        match &self.dense {
            Some(lu) => {
                let rhs = nalgebra::DVector::from_column_slice(b);
                let sol = lu
                    .solve(&rhs)
                    .ok_or_else(|| Error::SolverFailure("singular shifted system".into()))?;
                Ok(sol.as_slice().to_vec())
            }
            None => {
                // Jacobi-preconditioned operator: D^{-1} (z - Q).
                let diag: Vec<C64> = (0..self.rates.len())
                    .map(|x| self.z + C64::new(self.rates.holding(x), 0.0))
                    .collect();
                let apply = |v: &[C64]| -> Vec<C64> {
                    let qv = apply_generator_c64(self.rates, v);
                    v.iter()
                        .zip(qv.iter().zip(&diag))
                        .map(|(vi, (q, d))| (self.z * vi - q) / d)
                        .collect()
                };
                let pb: Vec<C64> = b.iter().zip(&diag).map(|(bi, d)| bi / d).collect();
                gmres(apply, &pb, GMRES_TOL, GMRES_RESTART, GMRES_MAX_OUTER)
            }
        }
    }
}

/// Restricted inverse at the singular shift `z = 0`: solves `-Q y = b` subject
/// to `pi[y] = 0` through the bordered system
/// `[-Q, 1; pi, 0] [y; mu] = [b; 0]`.
pub fn solve_restricted(rates: &RateMatrix, pi: &[f64], b: &[C64]) -> Result<Vec<C64>> {
    let n = rates.len();
    if n <= DENSE_SOLVE_MAX {
        let mut m = DMatrix::<C64>::zeros(n + 1, n + 1);
        for x in 0..n {
            for &(y, r) in rates.edges_from(x) {
                m[(x, y)] = C64::new(-r, 0.0);
            }
            m[(x, x)] = C64::new(rates.holding(x), 0.0);
            m[(x, n)] = C64::new(1.0, 0.0);
            m[(n, x)] = C64::new(pi[x], 0.0);
        }
        let mut rhs = nalgebra::DVector::from_element(n + 1, C64::ZERO);
        for (i, bi) in b.iter().enumerate() {
            rhs[i] = *bi;
        }
        let sol = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SolverFailure("singular bordered system".into()))?;
        Ok(sol.as_slice()[..n].to_vec())
    } else {
        let apply = |v: &[C64]| -> Vec<C64> {
            let qv = apply_generator_c64(rates, &v[..n]);
            let mut out: Vec<C64> = (0..n).map(|x| -qv[x] + v[n]).collect();
            out.push(pi.iter().zip(&v[..n]).map(|(&p, vi)| p * vi).sum());
            out
        };
        let mut rhs = b.to_vec();
        rhs.push(C64::ZERO);
        let sol = gmres(apply, &rhs, GMRES_TOL, GMRES_RESTART, GMRES_MAX_OUTER)?;
        Ok(sol[..n].to_vec())
    }
}

fn cnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn cdot(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// Restarted GMRES with modified Gram-Schmidt and complex Givens rotations.
pub fn gmres<F>(apply: F, b: &[C64], tol_rel: f64, restart: usize, max_outer: usize) -> Result<Vec<C64>>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let bnorm = cnorm(b);
    let mut x = vec![C64::ZERO; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    for _ in 0..max_outer {
        let ax = apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = cnorm(&r);
        if beta <= tol_rel * bnorm {
            return Ok(x);
        }
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        // h is stored column-wise; column j has j + 2 entries before rotation.
        let mut h_cols: Vec<Vec<C64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<C64> = Vec::new();
        let mut g = vec![C64::ZERO; restart + 1];
        g[0] = C64::new(beta, 0.0);
        let mut converged_at: Option<usize> = None;
        for j in 0..restart {
            let mut w = apply(&basis[j]);
            let mut col = vec![C64::ZERO; j + 2];
            for (i, vi) in basis.iter().enumerate() {
                let hij = cdot(vi, &w);
                col[i] = hij;
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= hij * vk;
                }
            }
            let hlast = cnorm(&w);
            col[j + 1] = C64::new(hlast, 0.0);
            // Apply accumulated rotations to the new column.
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i].conj() * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            // New rotation zeroing col[j + 1].
            let (c, s, rr) = givens(col[j], col[j + 1]);
            col[j] = rr;
            col[j + 1] = C64::ZERO;
            cs.push(c);
            sn.push(s);
            let gj = g[j];
            g[j] = c * gj;
            g[j + 1] = -s.conj() * gj;
            h_cols.push(col);
            let resid = g[j + 1].norm();
            if resid <= tol_rel * bnorm || hlast < 1e-300 {
                converged_at = Some(j + 1);
                break;
            }
            basis.push(w.iter().map(|z| z / hlast).collect());
        }
        let m = converged_at.unwrap_or(h_cols.len());
        // Back substitution on the upper-triangular system.
        let mut y = vec![C64::ZERO; m];
        for i in (0..m).rev() {
            let mut acc = g[i];
            for (k, yk) in y.iter().enumerate().take(m).skip(i + 1) {
                acc -= h_cols[k][i] * yk;
            }
            y[i] = acc / h_cols[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[j]) {
                *xi += yj * vi;
            }
        }
        if converged_at.is_some() {
            let ax = apply(&x);
            let resid = b
                .iter()
                .zip(&ax)
                .map(|(bi, ai)| (bi - ai).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if resid <= 10.0 * tol_rel * bnorm {
                return Ok(x);
            }
        }
    }
    Err(Error::SolverFailure(format!(
        "GMRES did not reach relative residual {tol_rel:.1e} in {max_outer} restarts"
    )))
}

/// Complex Givens rotation: returns `(c, s, r)` with `c` real so that
/// `[c, s; -conj(s), c] [a; b] = [r; 0]`.
fn givens(a: C64, b: C64) -> (f64, C64, C64) {
    if a.norm() == 0.0 {
        (0.0, C64::new(1.0, 0.0), b)
    } else {
        let scale = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let alpha = a / a.norm();
        (a.norm() / scale, alpha * b.conj() / scale, alpha * scale)
    }
}

/// Eigenvalues of a dense real matrix (via its real Schur form).
pub fn spectrum(q: &DMatrix<f64>) -> Vec<C64> {
    q.clone().complex_eigenvalues().as_slice().to_vec()
}
