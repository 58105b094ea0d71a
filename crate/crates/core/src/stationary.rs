//! Stationary distributions, time reversal, and the weighted inner product.
//!
//! For an irreducible kernel `r` the stationary distribution is the unique
//! probability vector with `sum_x pi(x) r(x, y) = pi(y) r_hat(y)` for all `y`
//! (equivalently `pi Q = 0` for the generator matrix `Q`). The time-reversed
//! kernel is `r*(x, y) = pi(y) r(y, x) / pi(x)`; it shares the holding rates and
//! the stationary distribution of `r`, and its generator `L*` is the adjoint of
//! `L` in the `pi`-weighted inner product `<f, h> = sum_x pi(x) conj(f(x)) h(x)`.

use crate::{C64, Error, RateMatrix, Result, StateSpace};
use nalgebra::{DMatrix, DVector};

/// Dense direct solve is used up to this size; power iteration on the
/// uniformized transition matrix above it.
const DENSE_STATIONARY_MAX: usize = 2000;

/// Residual tolerance for `pi Q = 0`, relative to the largest holding rate.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-12;

/// A stationary probability vector together with its residual.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pi: Vec<f64>,
    /// `max_y |sum_x pi(x) Q(x, y)|`, scaled by `max_x r_hat(x)`.
    pub residual: f64,
}

impl StationaryDistribution {
    /// Solve `pi Q = 0`, `sum pi = 1` for an irreducible kernel.
    ///
    /// Small systems go through a dense LU factorization of the transposed
    /// generator with one balance equation replaced by the normalization row;
    /// larger systems use power iteration on `P = I + Q / Lambda`.
    pub fn solve(rates: &RateMatrix) -> Result<Self> {
        rates.require_irreducible()?;
        let n = rates.len();
        let pi = if n <= DENSE_STATIONARY_MAX {
            solve_dense(rates)?
        } else {
            solve_power(rates)?
        };
        let scale = (0..n).map(|x| rates.holding(x)).fold(0.0f64, f64::max);
        let residual = residual_inf(rates, &pi) / scale;
        if residual > STATIONARY_RESIDUAL_TOL {
            return Err(Error::SolverFailure(format!(
                "stationary residual {residual:.3e} exceeds {STATIONARY_RESIDUAL_TOL:.1e}"
            )));
        }
        Ok(Self { pi, residual })
    }

    /// Wrap an externally known stationary vector after validating the
    /// balance equations state by state in relative terms.
    ///
    /// The dense and power solvers resolve mass ratios only down to solver
    /// precision (about `1e-16` of the norm), which destroys time reversal
    /// for models whose stationary weights span many orders of magnitude.
    /// Models that know `pi` in closed form (for instance through detailed
    /// balance) should inject it here: every entry must be strictly positive,
    /// and for each state the inflow `sum_x pi(x) r(x, y)` must match the
    /// outflow `pi(y) r_hat(y)` to `1e-10` relative to their total.
    pub fn from_known(rates: &RateMatrix, pi: Vec<f64>) -> Result<Self> {
        rates.require_irreducible()?;
        let n = rates.len();
        if pi.len() != n {
            return Err(Error::InvalidParameter(format!(
                "stationary vector over {} states on a chain with {n}",
                pi.len()
            )));
        }
        if pi.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter(
                "known stationary vector must be strictly positive and finite".into(),
            ));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "known stationary vector sums to {total}, not 1"
            )));
        }
        let mut pi = pi;
        for p in &mut pi {
            *p /= total;
        }
        let mut inflow = vec![0.0f64; n];
        for x in 0..n {
            for &(y, r) in rates.edges_from(x) {
                inflow[y] += pi[x] * r;
            }
        }
        for y in 0..n {
            let outflow = pi[y] * rates.holding(y);
            let gap = (inflow[y] - outflow).abs();
            if gap > 1e-10 * (inflow[y] + outflow) {
                return Err(Error::SolverFailure(format!(
                    "claimed stationary vector violates balance at state {y}: \
                     relative flow gap {:.3e}",
                    gap / (inflow[y] + outflow)
                )));
            }
        }
        let scale = (0..n).map(|x| rates.holding(x)).fold(0.0f64, f64::max);
        let residual = residual_inf(rates, &pi) / scale;
        Ok(Self { pi, residual })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn prob(&self, x: usize) -> f64 {
        self.pi[x]
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// Expectation `pi[f] = sum_x pi(x) f(x)`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        self.pi.iter().zip(f).map(|(p, v)| p * v).sum()
    }
}

fn residual_inf(rates: &RateMatrix, pi: &[f64]) -> f64 {
    let n = rates.len();
    let mut res = vec![0.0f64; n];
    for x in 0..n {
        for &(y, r) in rates.edges_from(x) {
            res[y] += pi[x] * r;
        }
        res[x] -= pi[x] * rates.holding(x);
    }
    res.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn solve_dense(rates: &RateMatrix) -> Result<Vec<f64>> {
    let n = rates.len();
    // Rows of the system are the balance equations (columns of Q); the last is
    // replaced by normalization. A = Q^T with row n-1 := 1.
    let mut a = rates.dense_generator().transpose();
    let mut b = DVector::zeros(n);
    for y in 0..n {
        a[(n - 1, y)] = 1.0;
    }
    b[n - 1] = 1.0;
    let lu = a.lu();
    let sol = lu
        .solve(&b)
        .ok_or_else(|| Error::SolverFailure("singular stationary system".into()))?;
    normalize_probability(sol.as_slice())
}

fn solve_power(rates: &RateMatrix) -> Result<Vec<f64>> {
    let n = rates.len();
    let lambda = 1.01 * (0..n).map(|x| rates.holding(x)).fold(0.0f64, f64::max);
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0f64; n];
    let max_iter = 500_000;
    for _ in 0..max_iter {
        // next = pi P with P = I + Q / lambda.
        for y in 0..n {
            next[y] = pi[y] * (1.0 - rates.holding(y) / lambda);
        }
        for x in 0..n {
            let w = pi[x] / lambda;
            for &(y, r) in rates.edges_from(x) {
                next[y] += w * r;
            }
        }
        let total: f64 = next.iter().sum();
        let mut delta = 0.0f64;
        for y in 0..n {
            next[y] /= total;
            delta += (next[y] - pi[y]).abs();
        }
        std::mem::swap(&mut pi, &mut next);
        if delta < 1e-16 {
            return normalize_probability(&pi);
        }
    }
    Err(Error::SolverFailure(format!(
        "power iteration did not converge in {max_iter} sweeps"
    )))
}

fn normalize_probability(raw: &[f64]) -> Result<Vec<f64>> {
    let mut v = raw.to_vec();
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-12 {
        return Err(Error::SolverFailure(format!(
            "stationary solve produced negative mass {min:.3e}"
        )));
    }
    for p in &mut v {
        *p = p.max(0.0);
    }
    let total: f64 = v.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::SolverFailure("stationary mass is not positive".into()));
    }
    for p in &mut v {
        *p /= total;
    }
    Ok(v)
}

/// Time-reversed kernel `r*(x, y) = pi(y) r(y, x) / pi(x)`.
#[derive(Debug, Clone)]
pub struct ReversedKernel {
    rates: RateMatrix,
}

impl ReversedKernel {
    pub fn build(forward: &RateMatrix, pi: &StationaryDistribution) -> Result<Self> {
        let n = forward.len();
        let mut triples = Vec::with_capacity(forward.edge_count());
        for y in 0..n {
            for &(x, r) in forward.edges_from(y) {
                // Edge (y -> x) of r contributes r*(x -> y).
                triples.push((x, y, pi.prob(y) * r / pi.prob(x)));
            }
        }
        let space = StateSpace::with_labels(forward.space().labels().to_vec())?;
        let rates = RateMatrix::from_triples(space, &triples)?;
        Ok(Self { rates })
    }

    /// The reversed kernel as an ordinary rate matrix (generator `L*`).
    pub fn rates(&self) -> &RateMatrix {
        &self.rates
    }
}

/// An irreducible kernel bundled with its stationary distribution and time
/// reversal; the working object of the exact-response, steady-state, and
/// mobility layers.
#[derive(Debug, Clone)]
pub struct StationaryChain {
    rates: RateMatrix,
    pi: StationaryDistribution,
    reversed: ReversedKernel,
}

impl StationaryChain {
    pub fn new(rates: RateMatrix) -> Result<Self> {
        let pi = StationaryDistribution::solve(&rates)?;
        let reversed = ReversedKernel::build(&rates, &pi)?;
        Ok(Self { rates, pi, reversed })
    }

    /// Build a chain from a stationary vector known in closed form, bypassing
    /// the numeric solve.
    ///
    /// Use this when the stationary weights span more orders of magnitude
    /// than a linear solve can resolve (steep potentials, long tails): the
    /// vector is validated state by state against the balance equations, and
    /// the time reversal `r*(x, y) = pi(y) r(y, x) / pi(x)` is then computed
    /// from exact ratios instead of solver noise.
    pub fn with_known_pi(rates: RateMatrix, pi: Vec<f64>) -> Result<Self> {
        let pi = StationaryDistribution::from_known(&rates, pi)?;
        let reversed = ReversedKernel::build(&rates, &pi)?;
        Ok(Self { rates, pi, reversed })
    }

    pub fn rates(&self) -> &RateMatrix {
        &self.rates
    }

    pub fn pi(&self) -> &StationaryDistribution {
        &self.pi
    }

    pub fn reversed(&self) -> &RateMatrix {
        self.reversed.rates()
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Weighted inner product `<f, h> = sum_x pi(x) conj(f(x)) h(x)`.
    pub fn inner(&self, f: &[C64], h: &[C64]) -> C64 {
        self.pi
            .as_slice()
            .iter()
            .zip(f.iter().zip(h))
            .map(|(&p, (a, b))| p * a.conj() * b)
            .sum()
    }

    /// Real special case of [`Self::inner`].
    pub fn inner_real(&self, f: &[f64], h: &[f64]) -> f64 {
        self.pi
            .as_slice()
            .iter()
            .zip(f.iter().zip(h))
            .map(|(&p, (a, b))| p * a * b)
            .sum()
    }

    /// `pi`-weighted L2 norm.
    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner_real(f, f).sqrt()
    }

    /// Remove the mean: `f - pi[f] 1`.
    pub fn project_mean_zero(&self, f: &[f64]) -> Vec<f64> {
        let m = self.pi.mean(f);
        f.iter().map(|v| v - m).collect()
    }

    /// Dense generator matrix of the forward kernel.
    pub fn dense_generator(&self) -> DMatrix<f64> {
        self.rates.dense_generator()
    }

    /// Dense generator matrix of the reversed kernel (the adjoint `L*`).
    pub fn dense_adjoint_generator(&self) -> DMatrix<f64> {
        self.reversed.rates().dense_generator()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(triples: &[(usize, usize, f64)], n: usize) -> StationaryChain {
        let sp = StateSpace::of_size(n).unwrap();
        StationaryChain::new(RateMatrix::from_triples(sp, triples).unwrap()).unwrap()
    }

    /// Deterministically scrambled strictly positive rates on the complete
    /// digraph over `n` states.
    fn dense_random_chain(n: usize, seed: u64) -> StationaryChain {
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut triples = Vec::new();
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let u = ((s >> 11) as f64) / ((1u64 << 53) as f64);
                    triples.push((x, y, 0.1 + 2.0 * u));
                }
            }
        }
        chain(&triples, n)
    }

    #[test]
    fn two_state_closed_form() {
        // r(0,1) = a, r(1,0) = b  =>  pi = (b, a) / (a + b).
        let c = chain(&[(0, 1, 2.0), (1, 0, 1.0)], 2);
        assert!((c.pi().prob(0) - 1.0 / 3.0).abs() < 1e-14);
        assert!((c.pi().prob(1) - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn residual_within_tolerance_on_random_chain() {
        let c = dense_random_chain(6, 42);
        assert!(c.pi().residual <= STATIONARY_RESIDUAL_TOL);
        let total: f64 = c.pi().as_slice().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reversal_preserves_holding_and_pi() {
        let c = dense_random_chain(5, 7);
        let rev = c.reversed();
        for x in 0..c.len() {
            assert!(
                (rev.holding(x) - c.rates().holding(x)).abs() < 1e-12,
                "holding rate changed under reversal at {x}"
            );
        }
        // pi is stationary for r* as well.
        let pi_rev = StationaryDistribution::solve(rev).unwrap();
        for x in 0..c.len() {
            assert!((pi_rev.prob(x) - c.pi().prob(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn double_reversal_is_identity() {
        let c = dense_random_chain(5, 3);
        let rev = ReversedKernel::build(c.rates(), c.pi()).unwrap();
        let back = ReversedKernel::build(rev.rates(), c.pi()).unwrap();
        for (a, b) in back.rates().triples().iter().zip(c.rates().triples()) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
            assert!((a.2 - b.2).abs() < 1e-12 * (1.0 + b.2.abs()));
        }
    }

    #[test]
    fn adjoint_identity_in_weighted_inner_product() {
        // <f, L h> = <L* f, h> for randomized real f, h on a random chain.
        let c = dense_random_chain(6, 11);
        let n = c.len();
        let f: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 5) as f64 - 2.0).collect();
        let h: Vec<f64> = (0..n).map(|i| ((i * 13 + 1) % 7) as f64 * 0.5 - 1.5).collect();
        let lh = c.rates().apply_generator(&h);
        let lsf = c.reversed().apply_generator(&f);
        let lhs = c.inner_real(&f, &lh);
        let rhs = c.inner_real(&lsf, &h);
        assert!(
            (lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()),
            "adjointness violated: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn power_iteration_matches_dense_on_ring() {
        // Biased ring of 12 states solved both ways.
        let n = 12;
        let mut triples = Vec::new();
        for x in 0..n {
            triples.push((x, (x + 1) % n, 2.0 + (x % 3) as f64));
            triples.push((x, (x + n - 1) % n, 1.0 + (x % 2) as f64));
        }
        let sp = StateSpace::of_size(n).unwrap();
        let rm = RateMatrix::from_triples(sp, &triples).unwrap();
        let dense = solve_dense(&rm).unwrap();
        let power = solve_power(&rm).unwrap();
        for x in 0..n {
            assert!((dense[x] - power[x]).abs() < 1e-10);
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let sp = StateSpace::of_size(4).unwrap();
        // Two disconnected 2-cycles.
        let rm = RateMatrix::from_triples(
            sp,
            &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)],
        )
        .unwrap();
        assert!(matches!(
            StationaryDistribution::solve(&rm),
            Err(Error::NotIrreducible)
        ));
    }
}
