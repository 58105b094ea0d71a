//! Multiplicative kernel perturbations and the response field `psi`.
//!
//! A perturbation tilts the kernel as `r_t^lambda(x, y) = r(x, y) e^{lambda g(t, x, y)}`.
//! The exponent `g` is either *decoupled*, `g(t, x, y) = tau(t) E(x, y)` with a
//! declared [`TimeProfile`] and a static edge field `E`, or a *general table*
//! assigning its own profile to each edge. Both shapes keep segment integrals
//! and sup bounds in closed form, which the samplers and estimators rely on.
//!
//! The response field of a stationary chain is
//! `psi_t(x) = sum_y [ r*(x, y) g(t, y, x) - r(x, y) g(t, x, y) ]`,
//! the difference between the reversed contraction of the transposed exponent
//! and the forward contraction; it has zero stationary mean for every `t`.

use crate::{C64, Error, RateMatrix, Result, StationaryChain, TimeProfile};

/// A static real-valued function on ordered pairs of states, stored sparsely
/// (missing edges are zero). Values may have either sign.
#[derive(Debug, Clone, Default)]
pub struct EdgeField {
    /// Per-source adjacency `(target, value)`, sorted by target.
    entries: Vec<Vec<(usize, f64)>>,
}

impl EdgeField {
    pub fn from_triples(n: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(x, y, v) in triples {
            if x >= n || y >= n {
                return Err(Error::InvalidModel(format!(
                    "edge field entry ({x} -> {y}) outside state space of size {n}"
                )));
            }
            if x == y {
                return Err(Error::InvalidModel(format!(
                    "edge field entry on the diagonal at state {x}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "non-finite edge field value on ({x} -> {y})"
                )));
            }
            entries[x].push((y, v));
        }
        for (x, row) in entries.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(y, _)| y);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidModel(format!(
                    "duplicate edge field entry out of state {x}"
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Indicator of a single directed edge.
    pub fn indicator(n: usize, x: usize, y: usize) -> Result<Self> {
        Self::from_triples(n, &[(x, y, 1.0)])
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        match self.entries[x].binary_search_by_key(&y, |&(t, _)| t) {
            Ok(i) => self.entries[x][i].1,
            Err(_) => 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .map(|&(_, v)| v.abs())
            .fold(0.0, f64::max)
    }

    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (x, row) in self.entries.iter().enumerate() {
            for &(y, v) in row {
                out.push((x, y, v));
            }
        }
        out
    }
}

/// The exponent `g(t, x, y)` of a multiplicative perturbation.
#[derive(Debug, Clone)]
pub enum Perturbation {
    /// `g(t, x, y) = tau(t) E(x, y)`.
    Decoupled { profile: TimeProfile, field: EdgeField },
    /// Each listed edge carries its own profile; unlisted edges are unperturbed.
    GeneralTable {
        n: usize,
        /// Per-source adjacency `(target, profile)`, sorted by target.
        entries: Vec<Vec<(usize, TimeProfile)>>,
    },
}

impl Perturbation {
    pub fn general_table(n: usize, items: Vec<(usize, usize, TimeProfile)>) -> Result<Self> {
        let mut entries: Vec<Vec<(usize, TimeProfile)>> = vec![Vec::new(); n];
        for (x, y, p) in items {
            if x >= n || y >= n || x == y {
                return Err(Error::InvalidModel(format!(
                    "perturbation entry on invalid edge ({x} -> {y})"
                )));
            }
            entries[x].push((y, p));
        }
        for (x, row) in entries.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(y, _)| y);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidModel(format!(
                    "duplicate perturbation entry out of state {x}"
                )));
            }
        }
        Ok(Self::GeneralTable { n, entries })
    }

    /// `g(t, x, y)`.
    pub fn eval(&self, t: f64, x: usize, y: usize) -> f64 {
        match self {
            Self::Decoupled { profile, field } => profile.eval(t) * field.get(x, y),
            Self::GeneralTable { entries, .. } => {
                match entries[x].binary_search_by_key(&y, |(t, _)| *t) {
                    Ok(i) => entries[x][i].1.eval(t),
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Exact `int_a^b g(s, x, y) ds`.
    pub fn integral(&self, a: f64, b: f64, x: usize, y: usize) -> f64 {
        match self {
            Self::Decoupled { profile, field } => profile.integral(a, b) * field.get(x, y),
            Self::GeneralTable { entries, .. } => {
                match entries[x].binary_search_by_key(&y, |(t, _)| *t) {
                    Ok(i) => entries[x][i].1.integral(a, b),
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// A valid bound on `sup_{t, x, y} |g(t, x, y)|`, assembled from the
    /// declared profile bounds.
    pub fn sup_bound(&self) -> f64 {
        match self {
            Self::Decoupled { profile, field } => profile.sup_bound() * field.max_abs(),
            Self::GeneralTable { entries, .. } => entries
                .iter()
                .flatten()
                .map(|(_, p)| p.sup_bound())
                .fold(0.0, f64::max),
        }
    }

    /// True when `g` has no time dependence, enabling closed-form compensators.
    pub fn is_time_independent(&self) -> bool {
        match self {
            Self::Decoupled { profile, .. } => profile.is_constant(),
            Self::GeneralTable { entries, .. } => {
                entries.iter().flatten().all(|(_, p)| p.is_constant())
            }
        }
    }

    /// Number of states the perturbation addresses.
    pub fn n(&self) -> usize {
        match self {
            Self::Decoupled { field, .. } => field.len(),
            Self::GeneralTable { n, .. } => *n,
        }
    }

    /// Contraction against a kernel: `g_r(t, x) = sum_y r(x, y) g(t, x, y)`.
    pub fn contract(&self, rates: &RateMatrix, t: f64, x: usize) -> f64 {
        rates.contract_at(x, |a, b| self.eval(t, a, b))
    }

    /// Exact `int_a^b g_r(s, x) ds` using profile primitives.
    pub fn contract_integral(&self, rates: &RateMatrix, a: f64, b: f64, x: usize) -> f64 {
        rates
            .edges_from(x)
            .iter()
            .map(|&(y, r)| r * self.integral(a, b, x, y))
            .sum()
    }

    /// Fourier coefficient table `g_hat_k(x, y)` with respect to period `T`,
    /// as a complex edge table (entries only where `g` lives).
    pub fn fourier_coefficient(&self, k: i64, period: f64) -> Result<Vec<(usize, usize, C64)>> {
        match self {
            Self::Decoupled { profile, field } => {
                let c = profile.fourier_coefficient(k, period)?;
                Ok(field
                    .triples()
                    .into_iter()
                    .map(|(x, y, v)| (x, y, c * v))
                    .collect())
            }
            Self::GeneralTable { entries, .. } => {
                let mut out = Vec::new();
                for (x, row) in entries.iter().enumerate() {
                    for (y, p) in row {
                        out.push((x, *y, p.fourier_coefficient(k, period)?));
                    }
                }
                Ok(out)
            }
        }
    }

    /// Harmonics `k >= 0` that can carry weight relative to period `T`.
    pub fn harmonics(&self, period: f64) -> Result<Vec<u32>> {
        let mut ks: Vec<u32> = match self {
            Self::Decoupled { profile, .. } => profile.harmonics(period)?,
            Self::GeneralTable { entries, .. } => {
                let mut acc = Vec::new();
                for (_, p) in entries.iter().flatten() {
                    acc.extend(p.harmonics(period)?);
                }
                acc
            }
        };
        ks.sort_unstable();
        ks.dedup();
        Ok(ks)
    }
}

/// View of the tilted kernel `r_t^lambda(x, y) = r(x, y) e^{lambda g(t, x, y)}`.
#[derive(Debug, Clone)]
pub struct PerturbedKernel<'a> {
    pub base: &'a RateMatrix,
    pub g: &'a Perturbation,
    pub lambda: f64,
}

impl<'a> PerturbedKernel<'a> {
    pub fn new(base: &'a RateMatrix, g: &'a Perturbation, lambda: f64) -> Result<Self> {
        if g.n() != base.len() {
            return Err(Error::InvalidModel(format!(
                "perturbation over {} states applied to kernel over {}",
                g.n(),
                base.len()
            )));
        }
        Ok(Self { base, g, lambda })
    }

    pub fn rate(&self, t: f64, x: usize, y: usize) -> f64 {
        let r = self.base.rate(x, y);
        if r == 0.0 {
            0.0
        } else {
            r * (self.lambda * self.g.eval(t, x, y)).exp()
        }
    }

    /// Holding rate `r_hat_t^lambda(x)`.
    pub fn holding(&self, t: f64, x: usize) -> f64 {
        self.base
            .edges_from(x)
            .iter()
            .map(|&(y, r)| r * (self.lambda * self.g.eval(t, x, y)).exp())
            .sum()
    }

    /// Uniform-in-time envelope `r_hat(x) e^{|lambda| * sup|g|}` dominating the
    /// holding rate; the thinning sampler's proposal intensity.
    pub fn envelope(&self, x: usize) -> f64 {
        self.base.holding(x) * (self.lambda.abs() * self.g.sup_bound()).exp()
    }
}

/// The response field of a perturbation over a stationary chain.
#[derive(Debug, Clone)]
pub struct PsiField<'a> {
    chain: &'a StationaryChain,
    g: &'a Perturbation,
}

impl<'a> PsiField<'a> {
    pub fn new(chain: &'a StationaryChain, g: &'a Perturbation) -> Result<Self> {
        if g.n() != chain.len() {
            return Err(Error::InvalidModel(format!(
                "perturbation over {} states applied to chain over {}",
                g.n(),
                chain.len()
            )));
        }
        Ok(Self { chain, g })
    }

    /// `psi_t(x) = sum_y [ r*(x, y) g(t, y, x) - r(x, y) g(t, x, y) ]`.
    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        let n = self.chain.len();
        (0..n).map(|x| self.evaluate_at(t, x)).collect()
    }

    pub fn evaluate_at(&self, t: f64, x: usize) -> f64 {
        let rev: f64 = self
            .chain
            .reversed()
            .edges_from(x)
            .iter()
            .map(|&(y, rs)| rs * self.g.eval(t, y, x))
            .sum();
        let fwd: f64 = self
            .chain
            .rates()
            .edges_from(x)
            .iter()
            .map(|&(y, r)| r * self.g.eval(t, x, y))
            .sum();
        rev - fwd
    }

    /// Fourier coefficient `psi_hat_k(x)` with respect to period `T`:
    /// the same contraction applied to the coefficient table of `g`.
    pub fn fourier_coefficient(&self, k: i64, period: f64) -> Result<Vec<C64>> {
        let table = self.g.fourier_coefficient(k, period)?;
        let n = self.chain.len();
        let mut lookup: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
        for (x, y, c) in table {
            lookup[x].push((y, c));
        }
        for row in &mut lookup {
            row.sort_unstable_by_key(|&(y, _)| y);
        }
        let ghat = |x: usize, y: usize| -> C64 {
            match lookup[x].binary_search_by_key(&y, |&(t, _)| t) {
                Ok(i) => lookup[x][i].1,
                Err(_) => C64::ZERO,
            }
        };
        Ok((0..n)
            .map(|x| {
                let rev: C64 = self
                    .chain
                    .reversed()
                    .edges_from(x)
                    .iter()
                    .map(|&(y, rs)| rs * ghat(y, x))
                    .sum();
                let fwd: C64 = self
                    .chain
                    .rates()
                    .edges_from(x)
                    .iter()
                    .map(|&(y, r)| r * ghat(x, y))
                    .sum();
                rev - fwd
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{StateSpace, StationaryChain};

    fn chain(triples: &[(usize, usize, f64)], n: usize) -> StationaryChain {
        let sp = StateSpace::of_size(n).unwrap();
        StationaryChain::new(RateMatrix::from_triples(sp, triples).unwrap()).unwrap()
    }

    fn random_chain(n: usize, seed: u64) -> StationaryChain {
        let mut s = seed;
        let mut triples = Vec::new();
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let u = ((s >> 11) as f64) / ((1u64 << 53) as f64);
                    triples.push((x, y, 0.1 + u));
                }
            }
        }
        chain(&triples, n)
    }

    #[test]
    fn constant_exponent_has_vanishing_psi() {
        // g identically equal to a constant c on every edge: the reversed and
        // forward contractions both collapse to c * r_hat, so psi = 0.
        let c = random_chain(5, 4);
        let mut items = Vec::new();
        for (x, y, _) in c.rates().triples() {
            items.push((x, y, TimeProfile::Constant(0.7)));
        }
        // Also cover edges of the reversed kernel not present forward (none
        // here: the chain is complete).
        let g = Perturbation::general_table(5, items).unwrap();
        let psi = PsiField::new(&c, &g).unwrap().evaluate(0.3);
        for (x, v) in psi.iter().enumerate() {
            assert!(v.abs() < 1e-12, "psi({x}) = {v}");
        }
    }

    #[test]
    fn psi_has_zero_stationary_mean() {
        let c = random_chain(6, 99);
        let field = EdgeField::from_triples(
            6,
            &[(0, 1, 1.0), (2, 3, -0.5), (4, 5, 2.0), (1, 0, 0.25)],
        )
        .unwrap();
        let g = Perturbation::Decoupled {
            profile: TimeProfile::Cosine { amplitude: 1.0, omega: 2.0 },
            field,
        };
        let psi_field = PsiField::new(&c, &g).unwrap();
        for t in [0.0, 0.4, 1.7] {
            let psi = psi_field.evaluate(t);
            let mean = c.pi().mean(&psi);
            assert!(mean.abs() < 1e-13, "pi[psi_{t}] = {mean}");
        }
    }

    #[test]
    fn two_state_psi_closed_form() {
        // r(0,1) = 2, r(1,0) = 1, g = 1 on edge (0,1): a 2-state chain is
        // reversible, so r* = r, and psi = (-2, 1).
        let c = chain(&[(0, 1, 2.0), (1, 0, 1.0)], 2);
        let g = Perturbation::Decoupled {
            profile: TimeProfile::Constant(1.0),
            field: EdgeField::indicator(2, 0, 1).unwrap(),
        };
        let psi = PsiField::new(&c, &g).unwrap().evaluate(0.0);
        assert!((psi[0] + 2.0).abs() < 1e-13);
        assert!((psi[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn perturbed_kernel_reduces_at_lambda_zero() {
        let c = random_chain(4, 8);
        let g = Perturbation::Decoupled {
            profile: TimeProfile::Cosine { amplitude: 1.0, omega: 1.0 },
            field: EdgeField::indicator(4, 0, 1).unwrap(),
        };
        let pk = PerturbedKernel::new(c.rates(), &g, 0.0).unwrap();
        for (x, y, r) in c.rates().triples() {
            assert_eq!(pk.rate(0.55, x, y), r);
        }
        for x in 0..4 {
            assert!((pk.holding(0.55, x) - c.rates().holding(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn envelope_dominates_holding() {
        let c = random_chain(4, 15);
        let g = Perturbation::Decoupled {
            profile: TimeProfile::Cosine { amplitude: 1.5, omega: 3.0 },
            field: EdgeField::from_triples(4, &[(0, 1, 1.0), (1, 2, -1.0), (2, 3, 0.5)]).unwrap(),
        };
        let pk = PerturbedKernel::new(c.rates(), &g, 0.3).unwrap();
        for x in 0..4 {
            for t in [0.0, 0.3, 0.9, 2.4] {
                assert!(pk.holding(t, x) <= pk.envelope(x) * (1.0 + 1e-12));
            }
        }
        // Spot-check the declared bound against samples of |g|.
        let bound = g.sup_bound();
        for t in [0.0, 0.1, 0.5, 1.1, 2.2] {
            for x in 0..4 {
                for y in 0..4 {
                    if x != y {
                        assert!(g.eval(t, x, y).abs() <= bound + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn contract_integral_matches_quadrature() {
        let c = random_chain(4, 23);
        let g = Perturbation::Decoupled {
            profile: TimeProfile::Cosine { amplitude: 0.8, omega: 2.5 },
            field: EdgeField::from_triples(4, &[(0, 1, 1.0), (0, 2, -2.0)]).unwrap(),
        };
        let (quad, _) = crate::quad::integrate(|s| g.contract(c.rates(), s, 0), 0.2, 1.9, 1e-12);
        let exact = g.contract_integral(c.rates(), 0.2, 1.9, 0);
        assert!((quad - exact).abs() < 1e-10);
    }

    #[test]
    fn torus_style_field_psi_matches_difference_of_contractions() {
        // Cross-check evaluate() against an independent direct sum over all pairs.
        let c = random_chain(5, 31);
        let g = Perturbation::Decoupled {
            profile: TimeProfile::Cosine { amplitude: 1.0, omega: 1.0 },
            field: EdgeField::from_triples(5, &[(0, 1, 1.0), (1, 2, 1.0), (3, 0, -1.0)]).unwrap(),
        };
        let psi_field = PsiField::new(&c, &g).unwrap();
        let t = 0.77;
        let psi = psi_field.evaluate(t);
        for x in 0..5 {
            let mut direct = 0.0;
            for y in 0..5 {
                if y != x {
                    direct += c.reversed().rate(x, y) * g.eval(t, y, x)
                        - c.rates().rate(x, y) * g.eval(t, x, y);
                }
            }
            assert!((psi[x] - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn fourier_coefficients_reconstruct_psi() {
        let c = random_chain(4, 55);
        let period = std::f64::consts::TAU;
        let g = Perturbation::Decoupled {
            profile: TimeProfile::Cosine { amplitude: 1.0, omega: 1.0 },
            field: EdgeField::from_triples(4, &[(0, 1, 1.0), (2, 0, -1.0)]).unwrap(),
        };
        let psi_field = PsiField::new(&c, &g).unwrap();
        let t = 0.9;
        let psi = psi_field.evaluate(t);
        // Sum over harmonics of psi_hat_k e^{i k omega t}.
        let mut recon = [C64::ZERO; 4];
        for k in [-1i64, 0, 1] {
            let coeff = psi_field.fourier_coefficient(k, period).unwrap();
            let phase = C64::new(0.0, k as f64 * t).exp();
            for (r, c) in recon.iter_mut().zip(coeff) {
                *r += c * phase;
            }
        }
        for (r, p) in recon.iter().zip(&psi) {
            assert!(r.im.abs() < 1e-13);
            assert!((r.re - p).abs() < 1e-12);
        }
    }
}
