//! Trajectory sampling and path functionals.
//!
//! Homogeneous chains are simulated by the exact holding-time algorithm
//! (exponential waits at rate `r_hat(x)`, targets proportional to `r(x, y)`).
//! Time-dependent tilted kernels are simulated by thinning: proposals arrive at
//! the constant envelope intensity `B(x) = r_hat(x) e^{|lambda| sup|g|}` and a
//! single uniform draw both accepts a proposal and selects its target, so at
//! `lambda = 0` the thinning sampler reproduces the homogeneous sampler draw
//! for draw.
//!
//! Path functionals come in three shapes: a terminal observable `v(t, X_t)`, a
//! time integral `int_0^t v(s, X_s) ds`, and a jump sum
//! `sum_{s <= t} alpha(s, X_{s-}, X_s)`. Alongside them live the response
//! martingale
//! `G_t = sum_{jumps} g(s, X_{s-}, X_s) - int_0^t g_r(s, X_s) ds`
//! and the change-of-measure action
//! `A_lambda = int_0^t sum_y r(X_s, y)(e^{lambda g(s, X_s, y)} - 1) ds - lambda sum_{jumps} g`,
//! whose exponential `e^{-A_lambda}` reweights unperturbed paths into tilted ones.

use crate::perturb::{PerturbedKernel, Perturbation};
use crate::profile::TimeProfile;
use crate::RateMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Default cap on jumps per trajectory.
pub const DEFAULT_JUMP_CAP: usize = 1_000_000;

/// Tolerance used for the per-segment quadratures inside path functionals.
const SEGMENT_QUAD_TOL: f64 = 1e-12;

/// A counter-based RNG stream: `(seed, stream)` fully determines the draw
/// sequence, and distinct streams are independent. One stream per path keeps
/// ensembles reproducible bit for bit regardless of the worker count.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, seed, stream }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Exponential with the given rate, strictly positive.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -(1.0 - self.uniform()).ln() / rate
    }
}

/// Inverse-CDF sample from a probability vector given one uniform in `[0, 1)`.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A piecewise-constant path on `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial: usize,
    pub horizon: f64,
    /// Strictly increasing jump times in `(0, horizon]`.
    pub jump_times: Vec<f64>,
    /// State entered at each jump; same length as `jump_times`.
    pub states: Vec<usize>,
    /// True when the jump cap fired before the horizon.
    pub truncated: bool,
    pub seed: u64,
    pub stream: u64,
}

impl Trajectory {
    /// State occupied at time `s` (right-continuous).
    pub fn state_at(&self, s: f64) -> usize {
        match self
            .jump_times
            .binary_search_by(|t| t.partial_cmp(&s).unwrap())
        {
            Ok(i) => self.states[i],
            Err(0) => self.initial,
            Err(i) => self.states[i - 1],
        }
    }

    /// Terminal state.
    pub fn terminal(&self) -> usize {
        self.states.last().copied().unwrap_or(self.initial)
    }

    /// Constancy segments `(start, end, state)` covering `[0, horizon]`.
    pub fn segments(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.jump_times.len() + 1);
        let mut t = 0.0;
        let mut x = self.initial;
        for (&tj, &xj) in self.jump_times.iter().zip(&self.states) {
            out.push((t, tj, x));
            t = tj;
            x = xj;
        }
        out.push((t, self.horizon, x));
        out
    }

    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }
}

/// Exact simulation of the homogeneous chain started at `x0` over `[0, horizon]`.
pub fn simulate_homogeneous(
    rates: &RateMatrix,
    x0: usize,
    horizon: f64,
    rng: &mut RngStream,
    cap: usize,
) -> Trajectory {
    let mut t = 0.0;
    let mut x = x0;
    let mut jump_times = Vec::new();
    let mut states = Vec::new();
    let mut truncated = false;
    loop {
        let total = rates.holding(x);
        t += rng.exponential(total);
        if t > horizon {
            break;
        }
        if jump_times.len() >= cap {
            truncated = true;
            break;
        }
        let v = rng.uniform() * total;
        let mut acc = 0.0;
        let mut next = x;
        for &(y, r) in rates.edges_from(x) {
            acc += r;
            if v < acc {
                next = y;
                break;
            }
        }
        x = next;
        jump_times.push(t);
        states.push(x);
    }
    Trajectory {
        initial: x0,
        horizon,
        jump_times,
        states,
        truncated,
        seed: rng.seed,
        stream: rng.stream,
    }
}

/// Thinning simulation of the tilted kernel `r_t^lambda` started at `x0`.
///
/// Proposals from state `x` arrive at the envelope intensity `B(x)`; a proposal
/// at time `s` draws one uniform `u` and walks the cumulative tilted rates: it
/// jumps to the first target with `u B(x) < cumsum r_s^lambda(x, .)` and is
/// rejected when the walk ends first (probability `1 - holding_s^lambda(x)/B(x)`).
pub fn simulate_inhomogeneous(
    kernel: &PerturbedKernel,
    x0: usize,
    horizon: f64,
    rng: &mut RngStream,
    cap: usize,
) -> Trajectory {
    let mut t = 0.0;
    let mut x = x0;
    let mut jump_times = Vec::new();
    let mut states = Vec::new();
    let mut truncated = false;
    // Proposals strictly outnumber jumps; guard the loop generously.
    let mut proposals_left = cap.saturating_mul(100).max(1_000_000);
    loop {
        let envelope = kernel.envelope(x);
        t += rng.exponential(envelope);
        if t > horizon {
            break;
        }
        if proposals_left == 0 {
            truncated = true;
            break;
        }
        proposals_left -= 1;
        let v = rng.uniform() * envelope;
        let mut acc = 0.0;
        let mut accepted = None;
        for &(y, r) in kernel.base.edges_from(x) {
            acc += r * (kernel.lambda * kernel.g.eval(t, x, y)).exp();
            if v < acc {
                accepted = Some(y);
                break;
            }
        }
        if let Some(y) = accepted {
            if jump_times.len() >= cap {
                truncated = true;
                break;
            }
            x = y;
            jump_times.push(t);
            states.push(x);
        }
    }
    Trajectory {
        initial: x0,
        horizon,
        jump_times,
        states,
        truncated,
        seed: rng.seed,
        stream: rng.stream,
    }
}

/// A real observable of `(time, state)` from the closed evaluation families.
#[derive(Clone)]
pub enum Observable {
    /// `v(x)`, tabulated by state.
    Static(Vec<f64>),
    /// `v(s, x) = tau(s) * values[x]`.
    Separable { profile: TimeProfile, values: Vec<f64> },
    /// Arbitrary jointly bounded function; time integrals fall back to quadrature.
    General(Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Static(v) => write!(f, "Observable::Static({} states)", v.len()),
            Self::Separable { .. } => write!(f, "Observable::Separable"),
            Self::General(_) => write!(f, "Observable::General"),
        }
    }
}

impl Observable {
    pub fn eval(&self, s: f64, x: usize) -> f64 {
        match self {
            Self::Static(v) => v[x],
            Self::Separable { profile, values } => profile.eval(s) * values[x],
            Self::General(f) => f(s, x),
        }
    }

    /// `int_a^b v(s, x) ds` for a frozen state.
    pub fn integral_on(&self, a: f64, b: f64, x: usize) -> f64 {
        match self {
            Self::Static(v) => v[x] * (b - a),
            Self::Separable { profile, values } => profile.integral(a, b) * values[x],
            Self::General(f) => crate::quad::integrate(|s| f(s, x), a, b, SEGMENT_QUAD_TOL).0,
        }
    }

    /// Snapshot `x -> v(s, x)` as a vector.
    pub fn at_time(&self, s: f64, n: usize) -> Vec<f64> {
        (0..n).map(|x| self.eval(s, x)).collect()
    }
}

/// The three supported path-functional shapes.
#[derive(Debug, Clone)]
pub enum FunctionalSpec {
    /// `F = v(t, X_t)` at the horizon.
    TerminalObservable(Observable),
    /// `F = int_0^t v(s, X_s) ds`.
    TimeIntegral(Observable),
    /// `F = sum_{jumps} alpha(s, X_{s-}, X_s)`; the weight reuses the
    /// perturbation shape (edge table x declared profiles).
    JumpSum(Perturbation),
}

/// Evaluate a functional along one trajectory.
pub fn eval_functional(traj: &Trajectory, spec: &FunctionalSpec) -> f64 {
    match spec {
        FunctionalSpec::TerminalObservable(v) => v.eval(traj.horizon, traj.terminal()),
        FunctionalSpec::TimeIntegral(v) => traj
            .segments()
            .iter()
            .map(|&(a, b, x)| v.integral_on(a, b, x))
            .sum(),
        FunctionalSpec::JumpSum(alpha) => {
            let mut prev = traj.initial;
            let mut acc = 0.0;
            for (&tj, &xj) in traj.jump_times.iter().zip(&traj.states) {
                acc += alpha.eval(tj, prev, xj);
                prev = xj;
            }
            acc
        }
    }
}

/// The response martingale evaluated along a path, with enough stored
/// structure to query `G_s` at any intermediate time in O(log m).
#[derive(Debug, Clone)]
pub struct RunningMartingale {
    /// Per segment `(start, end, state, G at start)`.
    segments: Vec<(f64, f64, usize, f64)>,
    terminal: f64,
}

impl RunningMartingale {
    /// Walk the trajectory once, accumulating the jump sum and the exact
    /// compensator integral (closed-form profile primitives) at each jump.
    pub fn build(traj: &Trajectory, g: &Perturbation, rates: &RateMatrix) -> Self {
        let mut segments = Vec::with_capacity(traj.jump_count() + 1);
        let mut g_running = 0.0;
        let mut prev_state = traj.initial;
        let mut seg_start = 0.0;
        for (&tj, &xj) in traj.jump_times.iter().zip(&traj.states) {
            segments.push((seg_start, tj, prev_state, g_running));
            g_running -= g.contract_integral(rates, seg_start, tj, prev_state);
            g_running += g.eval(tj, prev_state, xj);
            seg_start = tj;
            prev_state = xj;
        }
        segments.push((seg_start, traj.horizon, prev_state, g_running));
        let terminal =
            g_running - g.contract_integral(rates, seg_start, traj.horizon, prev_state);
        Self { segments, terminal }
    }

    /// `G` at the horizon.
    pub fn terminal(&self) -> f64 {
        self.terminal
    }

    /// `G_s` for `s` inside the horizon.
    pub fn at(&self, s: f64, g: &Perturbation, rates: &RateMatrix) -> f64 {
        let idx = self
            .segments
            .partition_point(|&(start, _, _, _)| start <= s)
            .saturating_sub(1);
        let (start, _, state, g_start) = self.segments[idx];
        g_start - g.contract_integral(rates, start, s, state)
    }

    /// Segments `(start, end, state, G at start)`.
    pub fn segments(&self) -> &[(f64, f64, usize, f64)] {
        &self.segments
    }
}

/// `G_t` for one trajectory.
pub fn eval_martingale(traj: &Trajectory, g: &Perturbation, rates: &RateMatrix) -> f64 {
    RunningMartingale::build(traj, g, rates).terminal()
}

/// The change-of-measure action `A_lambda` of a trajectory.
///
/// The time integral is exact when `g` is time independent and adaptive
/// Simpson per constancy segment otherwise; the jump sum is exact.
pub fn eval_action(
    traj: &Trajectory,
    g: &Perturbation,
    rates: &RateMatrix,
    lambda: f64,
) -> f64 {
    let mut action = 0.0;
    // Integral term: sum over segments of int sum_y r(x, y)(e^{lambda g} - 1).
    let time_independent = g.is_time_independent();
    for (a, b, x) in traj.segments() {
        if time_independent {
            let rate_excess: f64 = rates
                .edges_from(x)
                .iter()
                .map(|&(y, r)| r * ((lambda * g.eval(0.0, x, y)).exp() - 1.0))
                .sum();
            action += rate_excess * (b - a);
        } else {
            let (val, _) = crate::quad::integrate(
                |s| {
                    rates
                        .edges_from(x)
                        .iter()
                        .map(|&(y, r)| r * ((lambda * g.eval(s, x, y)).exp() - 1.0))
                        .sum::<f64>()
                },
                a,
                b,
                SEGMENT_QUAD_TOL,
            );
            action += val;
        }
    }
    // Jump term: -lambda sum g(s, pre, post).
    let mut prev = traj.initial;
    for (&tj, &xj) in traj.jump_times.iter().zip(&traj.states) {
        action -= lambda * g.eval(tj, prev, xj);
        prev = xj;
    }
    action
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expm::Propagator;
    use crate::perturb::EdgeField;
    use crate::{StateSpace, StationaryChain};

    fn two_state() -> RateMatrix {
        RateMatrix::from_triples(
            StateSpace::of_size(2).unwrap(),
            &[(0, 1, 2.0), (1, 0, 1.0)],
        )
        .unwrap()
    }

    fn cosine_edge_perturbation(n: usize) -> Perturbation {
        Perturbation::Decoupled {
            profile: TimeProfile::Cosine { amplitude: 1.0, omega: 1.0 },
            field: EdgeField::indicator(n, 0, 1).unwrap(),
        }
    }

    #[test]
    fn deterministic_given_seed_and_stream() {
        let r = two_state();
        let a = simulate_homogeneous(&r, 0, 50.0, &mut RngStream::new(7, 3), DEFAULT_JUMP_CAP);
        let b = simulate_homogeneous(&r, 0, 50.0, &mut RngStream::new(7, 3), DEFAULT_JUMP_CAP);
        assert_eq!(a.jump_times, b.jump_times);
        assert_eq!(a.states, b.states);
        let c = simulate_homogeneous(&r, 0, 50.0, &mut RngStream::new(7, 4), DEFAULT_JUMP_CAP);
        assert_ne!(a.jump_times, c.jump_times);
    }

    #[test]
    fn thinning_at_lambda_zero_is_draw_for_draw_identical() {
        let r = two_state();
        let g = cosine_edge_perturbation(2);
        let pk = PerturbedKernel::new(&r, &g, 0.0).unwrap();
        for stream in 0..50 {
            let a = simulate_homogeneous(&r, 0, 20.0, &mut RngStream::new(11, stream), 10_000);
            let b = simulate_inhomogeneous(&pk, 0, 20.0, &mut RngStream::new(11, stream), 10_000);
            assert_eq!(a.jump_times, b.jump_times, "stream {stream}");
            assert_eq!(a.states, b.states, "stream {stream}");
        }
    }

    #[test]
    fn occupation_matches_semigroup_within_three_se() {
        let r = two_state();
        let prop = Propagator::new(&r);
        let t = 1.0;
        let n = 20_000;
        let mut hits = 0.0;
        for stream in 0..n {
            let traj =
                simulate_homogeneous(&r, 0, t, &mut RngStream::new(5, stream), DEFAULT_JUMP_CAP);
            if traj.terminal() == 0 {
                hits += 1.0;
            }
        }
        let p_hat = hits / n as f64;
        let p_exact = prop.matrix(t)[(0, 0)];
        let se = (p_exact * (1.0 - p_exact) / n as f64).sqrt();
        assert!(
            (p_hat - p_exact).abs() <= 3.0 * se,
            "p_hat = {p_hat}, exact = {p_exact}, se = {se}"
        );
    }

    #[test]
    fn mean_jump_count_matches_stationary_rate() {
        // Started from pi, E[#jumps in [0, t]] = t * pi[r_hat] = t * 4/3.
        let r = two_state();
        let chain = StationaryChain::new(r.clone()).unwrap();
        let t = 3.0;
        let n = 20_000;
        let mut total = 0.0;
        let mut total_sq = 0.0;
        for stream in 0..n {
            let mut rng = RngStream::new(17, stream);
            let x0 = sample_index(chain.pi().as_slice(), rng.uniform());
            let traj = simulate_homogeneous(&r, x0, t, &mut rng, DEFAULT_JUMP_CAP);
            let c = traj.jump_count() as f64;
            total += c;
            total_sq += c * c;
        }
        let mean = total / n as f64;
        let var = total_sq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        let expected = t * chain.pi().mean(&[2.0, 1.0]);
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "mean = {mean}, expected = {expected}, se = {se}"
        );
    }

    #[test]
    fn jump_cap_truncates_and_flags() {
        let r = two_state();
        let traj = simulate_homogeneous(&r, 0, 1e9, &mut RngStream::new(1, 0), 10);
        assert!(traj.truncated);
        assert_eq!(traj.jump_count(), 10);
    }

    #[test]
    fn state_at_and_segments_are_consistent() {
        let traj = Trajectory {
            initial: 0,
            horizon: 2.0,
            jump_times: vec![0.5, 1.25],
            states: vec![1, 0],
            truncated: false,
            seed: 0,
            stream: 0,
        };
        assert_eq!(traj.state_at(0.0), 0);
        assert_eq!(traj.state_at(0.49), 0);
        assert_eq!(traj.state_at(0.5), 1);
        assert_eq!(traj.state_at(1.9), 0);
        assert_eq!(traj.terminal(), 0);
        assert_eq!(
            traj.segments(),
            vec![(0.0, 0.5, 0), (0.5, 1.25, 1), (1.25, 2.0, 0)]
        );
    }

    #[test]
    fn functionals_on_handmade_path() {
        let traj = Trajectory {
            initial: 0,
            horizon: 2.0,
            jump_times: vec![0.5, 1.25],
            states: vec![1, 0],
            truncated: false,
            seed: 0,
            stream: 0,
        };
        // Terminal observable.
        let term = FunctionalSpec::TerminalObservable(Observable::Static(vec![3.0, -1.0]));
        assert_eq!(eval_functional(&traj, &term), 3.0);
        // Time integral of the indicator of state 0: 0.5 + 0.75 occupancy.
        let ti = FunctionalSpec::TimeIntegral(Observable::Static(vec![1.0, 0.0]));
        assert!((eval_functional(&traj, &ti) - 1.25).abs() < 1e-15);
        // Jump sum of cos(s) on the edge (0, 1): only the first jump counts.
        let alpha = Perturbation::general_table(
            2,
            vec![(0, 1, TimeProfile::Cosine { amplitude: 1.0, omega: 1.0 })],
        )
        .unwrap();
        let js = FunctionalSpec::JumpSum(alpha);
        assert!((eval_functional(&traj, &js) - 0.5f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn time_integral_separable_matches_general() {
        let traj = Trajectory {
            initial: 0,
            horizon: 2.0,
            jump_times: vec![0.7],
            states: vec![1],
            truncated: false,
            seed: 0,
            stream: 0,
        };
        let sep = Observable::Separable {
            profile: TimeProfile::Cosine { amplitude: 2.0, omega: 3.0 },
            values: vec![1.0, -0.5],
        };
        let gen = Observable::General(Arc::new(|s: f64, x: usize| {
            2.0 * (3.0 * s).cos() * if x == 0 { 1.0 } else { -0.5 }
        }));
        let a = eval_functional(&traj, &FunctionalSpec::TimeIntegral(sep));
        let b = eval_functional(&traj, &FunctionalSpec::TimeIntegral(gen));
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn martingale_on_handmade_path() {
        // g = 1 on edge (0, 1), time independent. r(0,1) = 2, r(1,0) = 1.
        // G_t = #(0 -> 1 jumps) - 2 * (time spent in 0).
        let r = two_state();
        let g = Perturbation::Decoupled {
            profile: TimeProfile::Constant(1.0),
            field: EdgeField::indicator(2, 0, 1).unwrap(),
        };
        let traj = Trajectory {
            initial: 0,
            horizon: 2.0,
            jump_times: vec![0.5, 1.25],
            states: vec![1, 0],
            truncated: false,
            seed: 0,
            stream: 0,
        };
        let time_in_zero = 0.5 + 0.75;
        let want = 1.0 - 2.0 * time_in_zero;
        let got = eval_martingale(&traj, &g, &r);
        assert!((got - want).abs() < 1e-13);
        // Running values: just before the first jump the compensator has
        // accumulated -2 * 0.5 and no jumps yet.
        let run = RunningMartingale::build(&traj, &g, &r);
        assert!((run.at(0.499, &g, &r) + 2.0 * 0.499).abs() < 1e-12);
        // Right after the first jump: +1 - 2 * 0.5, constant while in state 1.
        assert!((run.at(0.8, &g, &r) - (1.0 - 1.0)).abs() < 1e-12);
        assert!((run.terminal() - want).abs() < 1e-13);
    }

    #[test]
    fn martingale_has_zero_mean_and_matching_quadratic_variation() {
        let r = two_state();
        let chain = StationaryChain::new(r.clone()).unwrap();
        let g = cosine_edge_perturbation(2);
        let t = 1.5;
        let n = 40_000;
        let (mut sum, mut sum_sq, mut sum_p4) = (0.0, 0.0, 0.0);
        let (mut qv_sum, mut qv_sq) = (0.0, 0.0);
        for stream in 0..n {
            let mut rng = RngStream::new(23, stream);
            let x0 = sample_index(chain.pi().as_slice(), rng.uniform());
            let traj = simulate_homogeneous(&r, x0, t, &mut rng, DEFAULT_JUMP_CAP);
            let gt = eval_martingale(&traj, &g, &r);
            sum += gt;
            sum_sq += gt * gt;
            sum_p4 += gt.powi(4);
            // int_0^t (g^2)_r(s, X_s) ds by per-segment quadrature.
            let mut qv = 0.0;
            for (a, b, x) in traj.segments() {
                let (val, _) = crate::quad::integrate(
                    |s| r.contract_at(x, |xx, yy| g.eval(s, xx, yy).powi(2)),
                    a,
                    b,
                    1e-11,
                );
                qv += val;
            }
            qv_sum += qv;
            qv_sq += qv * qv;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let se = ((sum_sq / nf - mean * mean) / nf).sqrt();
        assert!(mean.abs() <= 3.0 * se, "E[G_t] = {mean} +- {se}");
        // Second moment of G_t vs mean of the integrated square contraction;
        // the SE of the second moment comes from the fourth moment.
        let m2 = sum_sq / nf;
        let m2_se = ((sum_p4 / nf - m2 * m2) / nf).sqrt();
        let qv_mean = qv_sum / nf;
        let qv_se = ((qv_sq / nf - qv_mean * qv_mean) / nf).sqrt();
        assert!(
            (m2 - qv_mean).abs() <= 3.0 * (qv_se + m2_se),
            "E[G^2] = {m2} +- {m2_se}, E[int (g^2)_r] = {qv_mean} +- {qv_se}"
        );
    }

    #[test]
    fn action_vanishes_at_lambda_zero_and_reweights_to_unit_mass() {
        let r = two_state();
        let chain = StationaryChain::new(r.clone()).unwrap();
        let g = cosine_edge_perturbation(2);
        let t = 1.0;
        let n = 40_000;
        let lambda = 0.3;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for stream in 0..n {
            let mut rng = RngStream::new(29, stream);
            let x0 = sample_index(chain.pi().as_slice(), rng.uniform());
            let traj = simulate_homogeneous(&r, x0, t, &mut rng, DEFAULT_JUMP_CAP);
            assert_eq!(eval_action(&traj, &g, &r, 0.0), 0.0);
            let w = (-eval_action(&traj, &g, &r, lambda)).exp();
            sum += w;
            sum_sq += w * w;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let se = ((sum_sq / nf - mean * mean) / nf).sqrt();
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "E[e^-A] = {mean} +- {se}"
        );
    }

    #[test]
    fn first_jump_survival_under_cosine_tilt() {
        // From state 0 the first proposal/acceptance cascade must reproduce
        // the survival function exp(-int_0^s holding^lambda(u, 0) du).
        let r = two_state();
        let g = cosine_edge_perturbation(2);
        let lambda = 0.4;
        let pk = PerturbedKernel::new(&r, &g, lambda).unwrap();
        let n = 100_000;
        let horizon = 2.0;
        let mut first_jumps = Vec::with_capacity(n as usize);
        for stream in 0..n {
            let traj =
                simulate_inhomogeneous(&pk, 0, horizon, &mut RngStream::new(31, stream), 10_000);
            first_jumps.push(traj.jump_times.first().copied().unwrap_or(f64::INFINITY));
        }
        first_jumps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Kolmogorov-Smirnov style bound on a fixed grid, alpha ~ 1e-3.
        let bound = 1.95 / (n as f64).sqrt();
        for i in 1..=20 {
            let s = horizon * i as f64 / 20.0 * 0.9;
            let empirical =
                first_jumps.partition_point(|&t| t <= s) as f64 / n as f64;
            let (integral, _) =
                crate::quad::integrate(|u| pk.holding(u, 0), 0.0, s, 1e-11);
            let theoretical = 1.0 - (-integral).exp();
            assert!(
                (empirical - theoretical).abs() <= bound,
                "s = {s}: empirical {empirical} vs exact {theoretical} (bound {bound})"
            );
        }
    }
}
