//! Semigroup action `exp(sL)` for jump-process generators.
//!
//! Two interchangeable evaluators sit behind [`Propagator`]:
//!
//! * **Uniformization**: with `Lambda >= max_x r_hat(x)` and the substochastic
//!   step `P = I + Q / Lambda`, the semigroup is the Poisson mixture
//!   `exp(sQ) v = sum_k e^{-Lambda s} (Lambda s)^k / k! P^k v`. All terms are
//!   nonnegative mixtures, so positivity and the constant function are preserved
//!   to roundoff. Long horizons are split into chunks with `Lambda * s <= 32`
//!   to keep the Poisson weights well scaled.
//! * **Scaling and squaring**: the dense Pade(13) evaluation of `exp(A)` with
//!   `2^j` scaling, the textbook choice for small dense generators.
//!
//! The default dispatch follows matrix size: dense up to 64 states,
//! uniformization above.

use crate::RateMatrix;
use nalgebra::DMatrix;

/// Largest state count for which the dense matrix exponential is the default.
pub const DENSE_EXPM_MAX: usize = 64;

/// Poisson tail mass kept per uniformization chunk.
const UNIFORMIZATION_TAIL: f64 = 1e-16;

/// Largest `Lambda * s` per uniformization chunk.
const CHUNK_MASS: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorMethod {
    Uniformization,
    ScalingSquaring,
}

/// Evaluator for `v -> exp(sL) v` (action on observables) and
/// `mu -> mu exp(sL)` (action on distributions) over a fixed kernel.
#[derive(Debug, Clone)]
pub struct Propagator<'a> {
    rates: &'a RateMatrix,
    method: PropagatorMethod,
    lambda: f64,
}

impl<'a> Propagator<'a> {
    /// Default method dispatch by size.
    pub fn new(rates: &'a RateMatrix) -> Self {
        let method = if rates.len() <= DENSE_EXPM_MAX {
            PropagatorMethod::ScalingSquaring
        } else {
            PropagatorMethod::Uniformization
        };
        Self::with_method(rates, method)
    }

    pub fn with_method(rates: &'a RateMatrix, method: PropagatorMethod) -> Self {
        let lambda = (0..rates.len())
            .map(|x| rates.holding(x))
            .fold(0.0f64, f64::max)
            * 1.000001;
        Self { rates, method, lambda }
    }

    pub fn method(&self) -> PropagatorMethod {
        self.method
    }

    /// `exp(sL) v`.
    pub fn apply(&self, s: f64, v: &[f64]) -> Vec<f64> {
        match self.method {
            PropagatorMethod::Uniformization => self.uniformize(s, v, false),
            PropagatorMethod::ScalingSquaring => {
                let m = self.matrix(s);
                let x = nalgebra::DVector::from_column_slice(v);
                (m * x).as_slice().to_vec()
            }
        }
    }

    /// `mu exp(sL)` (forward evolution of a distribution row vector).
    pub fn apply_left(&self, s: f64, mu: &[f64]) -> Vec<f64> {
        match self.method {
            PropagatorMethod::Uniformization => self.uniformize(s, mu, true),
            PropagatorMethod::ScalingSquaring => {
                let m = self.matrix(s);
                let x = nalgebra::DVector::from_column_slice(mu);
                (m.transpose() * x).as_slice().to_vec()
            }
        }
    }

    /// Dense `exp(sQ)` (rows index the starting state).
    pub fn matrix(&self, s: f64) -> DMatrix<f64> {
        let q = self.rates.dense_generator();
        expm_dense(&(q * s))
    }

    fn uniformize(&self, s: f64, v: &[f64], left: bool) -> Vec<f64> {
        assert!(s >= 0.0, "semigroup is defined for s >= 0");
        if s == 0.0 {
            return v.to_vec();
        }
        let chunks = (self.lambda * s / CHUNK_MASS).ceil().max(1.0);
        let ds = s / chunks;
        let mut cur = v.to_vec();
        for _ in 0..chunks as usize {
            cur = self.uniform_chunk(ds, &cur, left);
        }
        cur
    }

    fn uniform_chunk(&self, s: f64, v: &[f64], left: bool) -> Vec<f64> {
        let n = v.len();
        let a = self.lambda * s;
        let mut weight = (-a).exp();
        let mut cum = weight;
        let mut term = v.to_vec();
        let mut acc: Vec<f64> = term.iter().map(|t| weight * t).collect();
        let mut k = 1.0f64;
        // Stop once the remaining Poisson mass is negligible; the weight-based
        // cutoff past the mode guards against the cumulative sum saturating a
        // few ulps below 1.
        while 1.0 - cum > UNIFORMIZATION_TAIL && !(k > a && weight < 1e-18) {
            // term <- P term (or term P for distributions).
            let mut next = vec![0.0f64; n];
            if left {
                for (y, nx) in next.iter_mut().enumerate() {
                    *nx = term[y] * (1.0 - self.rates.holding(y) / self.lambda);
                }
                for x in 0..n {
                    let w = term[x] / self.lambda;
                    for &(y, r) in self.rates.edges_from(x) {
                        next[y] += w * r;
                    }
                }
            } else {
                for (x, nx) in next.iter_mut().enumerate() {
                    let mut acc_x = term[x] * (1.0 - self.rates.holding(x) / self.lambda);
                    for &(y, r) in self.rates.edges_from(x) {
                        acc_x += r / self.lambda * term[y];
                    }
                    *nx = acc_x;
                }
            }
            term = next;
            weight *= a / k;
            k += 1.0;
            cum += weight;
            for (ac, t) in acc.iter_mut().zip(&term) {
                *ac += weight * t;
            }
            if k > 1e7 {
                unreachable!("Poisson series failed to terminate");
            }
        }
        acc
    }
}

/// Dense matrix exponential by Pade(13) with scaling and squaring.
pub fn expm_dense(a: &DMatrix<f64>) -> DMatrix<f64> {
    const THETA13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let norm = a
        .column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let j = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a_scaled = a / 2f64.powi(j);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a_scaled * &a_scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u_inner = &a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2)
        + B[7] * &a6
        + B[5] * &a4
        + B[3] * &a2
        + B[1] * &id;
    let u = &a_scaled * u_inner;
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2)
        + B[6] * &a6
        + B[4] * &a4
        + B[2] * &a2
        + B[0] * &id;
    let denom = &v - &u;
    let numer = &v + &u;
    let mut e = denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator is nonsingular for scaled matrices");
    for _ in 0..j {
        e = &e * &e;
    }
    e
}
