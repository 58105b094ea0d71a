//! Rate kernels and their generators.
//!
//! A kernel is a nonnegative function `r(x, y)` on ordered pairs of distinct states
//! with finite holding rates `r_hat(x) = sum_y r(x, y)`. Its generator acts on
//! observables as `(L f)(x) = sum_y r(x, y) (f(y) - f(x))`. Kernels are stored as
//! per-state adjacency lists sorted by target, which stays cheap for the sparse
//! nearest-neighbour models (tori, birth-death chains, lattice boxes) while dense
//! matrices are materialized on demand for the direct linear-algebra paths.

use crate::{Error, Result, StateSpace};
use nalgebra::DMatrix;

/// Sparse rate kernel over a [`StateSpace`].
#[derive(Debug, Clone)]
pub struct RateMatrix {
    space: StateSpace,
    /// `out[x]` lists `(y, r(x, y))` with `r > 0`, sorted by `y`.
    out: Vec<Vec<(usize, f64)>>,
    /// Holding rates `r_hat(x)`.
    holding: Vec<f64>,
}

impl RateMatrix {
    /// Build from triples `(x, y, rate)`. Rates must be strictly positive and finite,
    /// edges must join distinct valid states, no edge may repeat, and every state
    /// needs at least one outgoing edge (`r_hat > 0`).
    pub fn from_triples(space: StateSpace, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let n = space.len();
        let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(x, y, rate) in triples {
            if x >= n || y >= n {
                return Err(Error::InvalidModel(format!(
                    "edge ({x} -> {y}) outside state space of size {n}"
                )));
            }
            if x == y {
                return Err(Error::InvalidModel(format!("self-loop rate on state {x}")));
            }
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::NonPositiveRate { from: x, to: y, rate });
            }
            out[x].push((y, rate));
        }
        for (x, row) in out.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(y, _)| y);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidModel(format!(
                    "duplicate edge out of state {x}"
                )));
            }
            if row.is_empty() {
                return Err(Error::InvalidModel(format!(
                    "state {x} has no outgoing rate (r_hat = 0)"
                )));
            }
        }
        let holding = out
            .iter()
            .map(|row| row.iter().map(|&(_, r)| r).sum())
            .collect();
        Ok(Self { space, out, holding })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// `r(x, y)`; zero when the edge is absent.
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        match self.out[x].binary_search_by_key(&y, |&(t, _)| t) {
            Ok(i) => self.out[x][i].1,
            Err(_) => 0.0,
        }
    }

    /// Outgoing edges `(y, r(x, y))` of `x`, sorted by target.
    pub fn edges_from(&self, x: usize) -> &[(usize, f64)] {
        &self.out[x]
    }

    /// Holding rate `r_hat(x)`.
    pub fn holding(&self, x: usize) -> f64 {
        self.holding[x]
    }

    /// All edges as triples, in `(x, y)` order.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        let mut v = Vec::new();
        for (x, row) in self.out.iter().enumerate() {
            for &(y, r) in row {
                v.push((x, y, r));
            }
        }
        v
    }

    /// Number of directed edges with positive rate.
    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// Generator action: `(L f)(x) = sum_y r(x, y) (f(y) - f(x))`.
    pub fn apply_generator(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|x| {
                self.out[x]
                    .iter()
                    .map(|&(y, r)| r * (f[y] - f[x]))
                    .sum::<f64>()
            })
            .collect()
    }

    /// Contraction of an edge function against the kernel:
    /// `(a)_r(x) = sum_y a(x, y) r(x, y)`, summed over present edges.
    pub fn contract<F: Fn(usize, usize) -> f64>(&self, a: F) -> Vec<f64> {
        (0..self.len())
            .map(|x| {
                self.out[x]
                    .iter()
                    .map(|&(y, r)| a(x, y) * r)
                    .sum::<f64>()
            })
            .collect()
    }

    /// Contraction at a single state.
    pub fn contract_at<F: Fn(usize, usize) -> f64>(&self, x: usize, a: F) -> f64 {
        self.out[x].iter().map(|&(y, r)| a(x, y) * r).sum()
    }

    /// Dense generator matrix `Q` with `Q[x][y] = r(x, y)` off the diagonal and
    /// `Q[x][x] = -r_hat(x)`.
    pub fn dense_generator(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut q = DMatrix::zeros(n, n);
        for (x, row) in self.out.iter().enumerate() {
            for &(y, r) in row {
                q[(x, y)] = r;
            }
            q[(x, x)] = -self.holding[x];
        }
        q
    }

    /// True when the positive-rate digraph is strongly connected.
    pub fn is_irreducible(&self) -> bool {
        let n = self.len();
        // Forward reachability from state 0.
        if self.reach_count(|x| self.out[x].iter().map(|&(y, _)| y).collect()) < n {
            return false;
        }
        // Backward reachability from state 0 (forward in the transposed graph).
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (x, row) in self.out.iter().enumerate() {
            for &(y, _) in row {
                incoming[y].push(x);
            }
        }
        self.reach_count(|x| incoming[x].clone()) == n
    }

    fn reach_count<F: Fn(usize) -> Vec<usize>>(&self, succ: F) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = stack.pop() {
            for y in succ(x) {
                if !seen[y] {
                    seen[y] = true;
                    count += 1;
                    stack.push(y);
                }
            }
        }
        count
    }

    /// Error unless irreducible.
    pub fn require_irreducible(&self) -> Result<()> {
        if self.is_irreducible() {
            Ok(())
        } else {
            Err(Error::NotIrreducible)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> RateMatrix {
        RateMatrix::from_triples(StateSpace::of_size(2).unwrap(), &[(0, 1, a), (1, 0, b)])
            .unwrap()
    }

    #[test]
    fn holding_and_rate_lookup() {
        let r = two_state(2.0, 1.0);
        assert_eq!(r.rate(0, 1), 2.0);
        assert_eq!(r.rate(1, 0), 1.0);
        assert_eq!(r.rate(0, 0), 0.0);
        assert_eq!(r.holding(0), 2.0);
        assert_eq!(r.holding(1), 1.0);
    }

    #[test]
    fn rejects_bad_edges() {
        let sp = || StateSpace::of_size(3).unwrap();
        assert!(matches!(
            RateMatrix::from_triples(sp(), &[(0, 1, -1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 0, 1.0)]),
            Err(Error::NonPositiveRate { .. })
        ));
        assert!(RateMatrix::from_triples(sp(), &[(0, 0, 1.0)]).is_err());
        assert!(RateMatrix::from_triples(sp(), &[(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        // state 2 has no outgoing edge
        assert!(RateMatrix::from_triples(sp(), &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0)]).is_err());
    }

    #[test]
    fn generator_row_sums_vanish_on_constants() {
        let r = two_state(2.0, 1.0);
        let lf = r.apply_generator(&[5.0, 5.0]);
        assert_eq!(lf, vec![0.0, 0.0]);
        let lf = r.apply_generator(&[1.0, 0.0]);
        assert_eq!(lf, vec![-2.0, 1.0]);
    }

    #[test]
    fn irreducibility_detects_absorbing_component() {
        // 0 <-> 1 strongly connected, 2 -> 0 but nothing returns to 2.
        let sp = StateSpace::of_size(3).unwrap();
        let r =
            RateMatrix::from_triples(sp, &[(0, 1, 1.0), (1, 0, 1.0), (2, 0, 1.0)]).unwrap();
        assert!(!r.is_irreducible());
        assert!(matches!(r.require_irreducible(), Err(Error::NotIrreducible)));

        let sp = StateSpace::of_size(3).unwrap();
        let r = RateMatrix::from_triples(
            sp,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)],
        )
        .unwrap();
        assert!(r.is_irreducible());
    }

    #[test]
    fn contraction_matches_hand_sum() {
        let r = two_state(2.0, 1.0);
        // a(x, y) = 1 on the edge (0, 1) only.
        let c = r.contract(|x, y| if (x, y) == (0, 1) { 1.0 } else { 0.0 });
        assert_eq!(c, vec![2.0, 0.0]);
    }
}
