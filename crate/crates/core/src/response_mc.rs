//! Monte-Carlo linear-response estimators.
//!
//! Three independent estimators of `d/dlambda E_nu[F]` at `lambda = 0` for an
//! additive path functional `F` under the exponentially tilted kernel
//! `r e^{lambda g}`:
//!
//! * **Covariance (martingale) estimator.** The response martingale
//!   `G_t = sum_{jumps} g(s, X_{s-}, X_s) - int_0^t g_r(s, X_s) ds` has mean
//!   zero, and `d/dlambda E[F] = E[F G_t]` for terminal observables; for time
//!   integrals the sharper form `E[int_0^t v(s, X_s) G_s ds]` is used.
//! * **Two-term jump estimator.** For jump sums
//!   `F = sum alpha(s, X_{s-}, X_s)` the derivative picks up a same-jump term:
//!   `E[int (alpha g)_r(s, X_s) ds] + E[int alpha_r(s, X_s) G_s ds]`.
//! * **Girsanov reweighting / finite differences.** Perturbed expectations are
//!   `E^lambda[F] = E[F e^{-A_lambda}]` over *unperturbed* paths, where
//!   `A_lambda = int_0^t sum_y r(X_s, y)(e^{lambda g(s, X_s, y)} - 1) ds -
//!   lambda sum_{jumps} g`. A central difference of the two reweightings on
//!   one common path ensemble estimates the derivative with `O(lambda^2)`
//!   variance in the difference.
//!
//! All ensembles draw path `i` from an independent counter-based RNG stream
//! `i`, are reduced in stream order, and are therefore bit-for-bit
//! reproducible for a fixed seed regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::paths::{
    eval_action, eval_functional, sample_index, simulate_homogeneous, FunctionalSpec,
    RngStream, RunningMartingale, DEFAULT_JUMP_CAP,
};
use crate::perturb::Perturbation;
use crate::quad::integrate;
use crate::{Error, RateMatrix, Result};

/// Fraction of an ensemble allowed to hit the jump cap before the whole
/// estimate is rejected.
pub const TRUNCATION_TOLERANCE: f64 = 1e-3;
/// Girsanov guard: `lambda * sup|g|` must stay at or below this.
pub const GIRSANOV_GUARD: f64 = 0.5;
/// Finite-difference guard: `lambda_step * sup|g|` must stay at or below this.
pub const FD_GUARD: f64 = 0.25;
/// Effective-sample-size floor as a fraction of the ensemble size.
pub const ESS_FLOOR: f64 = 0.01;
/// Per-segment quadrature tolerance for time-dependent integrands.
const SEGMENT_TOL: f64 = 1e-12;

/// Which estimator produced a [`ResponseEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorTag {
    /// Martingale covariance `E[F G_t]` (or its running-time refinement).
    Covariance,
    /// Two-term jump-sum estimator.
    Res3,
    /// Girsanov-reweighted expectation at fixed `lambda`.
    Girsanov,
    /// Central finite difference of Girsanov reweightings on common paths.
    GirsanovFd,
    /// Exponential moment of the time-integrated rate contraction.
    ExpMoment,
    /// Exponential moment of the jump-sum companion.
    ExpMomentJumps,
}

impl std::fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Covariance => "covariance",
            Self::Res3 => "res3",
            Self::Girsanov => "girsanov",
            Self::GirsanovFd => "girsanov-fd",
            Self::ExpMoment => "exp-moment",
            Self::ExpMomentJumps => "exp-moment-jumps",
        };
        f.write_str(s)
    }
}

/// A Monte-Carlo estimate with the sampling metadata needed to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseEstimate {
    pub value: f64,
    /// Standard error of `value`, computed from the same sample.
    pub stderr: f64,
    /// Paths contributing to the estimate (truncated paths excluded).
    pub n: u64,
    pub seed: u64,
    pub estimator: EstimatorTag,
}

/// Ensemble parameters shared by every estimator.
#[derive(Debug, Clone, Copy)]
pub struct McParams {
    /// Time horizon of each path.
    pub t: f64,
    /// Number of paths.
    pub n: u64,
    /// Base RNG seed; path `i` uses stream `i` of this seed.
    pub seed: u64,
    /// Per-path jump cap standing in for explosion.
    pub jump_cap: usize,
}

impl McParams {
    pub fn new(t: f64, n: u64, seed: u64) -> Self {
        Self {
            t,
            n,
            seed,
            jump_cap: DEFAULT_JUMP_CAP,
        }
    }
}

/// A sensible central-difference step for [`fd_derivative`]: small enough for
/// `O(lambda^2)` bias below Monte-Carlo noise at `n ~ 1e5`, large enough to
/// avoid cancellation.
pub fn default_lambda_step(g: &Perturbation) -> f64 {
    let sup = g.sup_bound();
    if sup > 0.0 {
        1e-3 / sup
    } else {
        1e-3
    }
}

pub(crate) fn validate_initial(nu: &[f64], n_states: usize) -> Result<()> {
    if nu.len() != n_states {
        return Err(Error::InvalidParameter(format!(
            "initial distribution over {} states on a chain with {n_states}",
            nu.len()
        )));
    }
    if nu.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidParameter(
            "initial distribution has negative or non-finite entries".into(),
        ));
    }
    let mass: f64 = nu.iter().sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "initial distribution sums to {mass}, not 1"
        )));
    }
    Ok(())
}

/// Run `n` independent path workers and collect their outputs in stream order.
///
/// A worker returns `None` when its path hit the jump cap; truncated paths are
/// excluded from the sample, and the whole ensemble is rejected once more than
/// [`TRUNCATION_TOLERANCE`] of it is truncated.
pub(crate) fn ensemble<T: Send>(
    params: &McParams,
    worker: impl Fn(&mut RngStream) -> Option<T> + Sync,
) -> Result<Vec<T>> {
    let raw: Vec<Option<T>> = (0..params.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(params.seed, i);
            worker(&mut rng)
        })
        .collect();
    let truncated = raw.iter().filter(|o| o.is_none()).count();
    if truncated as f64 > TRUNCATION_TOLERANCE * params.n as f64 {
        return Err(Error::TruncatedPathsExceeded {
            truncated,
            total: params.n as usize,
            tolerated: TRUNCATION_TOLERANCE,
        });
    }
    Ok(raw.into_iter().flatten().collect())
}

/// Sample mean and its standard error (unbiased variance).
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Martingale covariance estimator of `d/dlambda E_nu[F]` at `lambda = 0`.
///
/// Terminal observables use `F G_t`; time integrals use the running-martingale
/// form `int_0^t v(s, X_s) G_s ds`. Jump sums are rejected here — their
/// derivative has an extra same-jump term — and belong to [`lr_res3`].
pub fn lr_covariance(
    rates: &RateMatrix,
    nu: &[f64],
    spec: &FunctionalSpec,
    g: &Perturbation,
    params: &McParams,
) -> Result<ResponseEstimate> {
    validate_initial(nu, rates.len())?;
    if matches!(spec, FunctionalSpec::JumpSum(_)) {
        return Err(Error::InvalidParameter(
            "jump-sum functionals have a same-jump response term; use lr_res3".into(),
        ));
    }
    let values = ensemble(params, |rng| {
        let x0 = sample_index(nu, rng.uniform());
        let traj = simulate_homogeneous(rates, x0, params.t, rng, params.jump_cap);
        if traj.truncated {
            return None;
        }
        let mart = RunningMartingale::build(&traj, g, rates);
        let value = match spec {
            FunctionalSpec::TerminalObservable(_) => {
                eval_functional(&traj, spec) * mart.terminal()
            }
            FunctionalSpec::TimeIntegral(v) => mart
                .segments()
                .iter()
                .map(|&(a, b, x, g_start)| {
                    integrate(
                        |s| {
                            v.eval(s, x) * (g_start - g.contract_integral(rates, a, s, x))
                        },
                        a,
                        b,
                        SEGMENT_TOL,
                    )
                    .0
                })
                .sum(),
            FunctionalSpec::JumpSum(_) => unreachable!(),
        };
        Some(value)
    })?;
    let (value, stderr) = mean_and_se(&values);
    Ok(ResponseEstimate {
        value,
        stderr,
        n: values.len() as u64,
        seed: params.seed,
        estimator: EstimatorTag::Covariance,
    })
}

/// Two-term estimator of `d/dlambda E_nu[sum_jumps alpha]` at `lambda = 0`:
/// per path, `int_0^t (alpha g)_r(s, X_s) ds + int_0^t alpha_r(s, X_s) G_s ds`.
pub fn lr_res3(
    rates: &RateMatrix,
    nu: &[f64],
    alpha: &Perturbation,
    g: &Perturbation,
    params: &McParams,
) -> Result<ResponseEstimate> {
    validate_initial(nu, rates.len())?;
    if alpha.n() != rates.len() || g.n() != rates.len() {
        return Err(Error::InvalidParameter(
            "perturbation tables sized for a different state space".into(),
        ));
    }
    let values = ensemble(params, |rng| {
        let x0 = sample_index(nu, rng.uniform());
        let traj = simulate_homogeneous(rates, x0, params.t, rng, params.jump_cap);
        if traj.truncated {
            return None;
        }
        let mart = RunningMartingale::build(&traj, g, rates);
        let mut acc = 0.0;
        for &(a, b, x, g_start) in mart.segments() {
            // Same-jump term: int (alpha g)_r over the segment.
            acc += integrate(
                |s| rates.contract_at(x, |p, q| alpha.eval(s, p, q) * g.eval(s, p, q)),
                a,
                b,
                SEGMENT_TOL,
            )
            .0;
            // Coupling term: int alpha_r(s, x) G_s over the segment.
            acc += integrate(
                |s| {
                    rates.contract_at(x, |p, q| alpha.eval(s, p, q))
                        * (g_start - g.contract_integral(rates, a, s, x))
                },
                a,
                b,
                SEGMENT_TOL,
            )
            .0;
        }
        Some(acc)
    })?;
    let (value, stderr) = mean_and_se(&values);
    Ok(ResponseEstimate {
        value,
        stderr,
        n: values.len() as u64,
        seed: params.seed,
        estimator: EstimatorTag::Res3,
    })
}

fn ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// Perturbed expectation `E^lambda_nu[F]` estimated by reweighting unperturbed
/// paths with `e^{-A_lambda}`.
pub fn girsanov_expectation(
    rates: &RateMatrix,
    nu: &[f64],
    spec: &FunctionalSpec,
    g: &Perturbation,
    lambda: f64,
    params: &McParams,
) -> Result<ResponseEstimate> {
    validate_initial(nu, rates.len())?;
    let guard = lambda.abs() * g.sup_bound();
    if guard > GIRSANOV_GUARD + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "|lambda| * sup|g| = {guard:.3} exceeds the Girsanov weight guard {GIRSANOV_GUARD}"
        )));
    }
    let samples = ensemble(params, |rng| {
        let x0 = sample_index(nu, rng.uniform());
        let traj = simulate_homogeneous(rates, x0, params.t, rng, params.jump_cap);
        if traj.truncated {
            return None;
        }
        let w = (-eval_action(&traj, g, rates, lambda)).exp();
        Some((eval_functional(&traj, spec) * w, w))
    })?;
    let weights: Vec<f64> = samples.iter().map(|&(_, w)| w).collect();
    let ess = ess(&weights);
    if ess < ESS_FLOOR * samples.len() as f64 {
        return Err(Error::WeightDegeneracy {
            ess,
            n: samples.len(),
        });
    }
    let products: Vec<f64> = samples.iter().map(|&(fw, _)| fw).collect();
    let (value, stderr) = mean_and_se(&products);
    Ok(ResponseEstimate {
        value,
        stderr,
        n: products.len() as u64,
        seed: params.seed,
        estimator: EstimatorTag::Girsanov,
    })
}

/// Central-difference estimate of `d/dlambda E_nu[F]` at `lambda = 0`:
/// `[E^{+l}[F] - E^{-l}[F]] / 2l` with both reweightings evaluated on the SAME
/// paths, so the difference has `O(l^2)` variance instead of `O(1)`.
pub fn fd_derivative(
    rates: &RateMatrix,
    nu: &[f64],
    spec: &FunctionalSpec,
    g: &Perturbation,
    lambda_step: f64,
    params: &McParams,
) -> Result<ResponseEstimate> {
    validate_initial(nu, rates.len())?;
    if lambda_step <= 0.0 {
        return Err(Error::InvalidParameter(
            "finite-difference step must be positive".into(),
        ));
    }
    let guard = lambda_step * g.sup_bound();
    if guard > FD_GUARD + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "lambda_step * sup|g| = {guard:.3} exceeds the finite-difference guard {FD_GUARD}"
        )));
    }
    let samples = ensemble(params, |rng| {
        let x0 = sample_index(nu, rng.uniform());
        let traj = simulate_homogeneous(rates, x0, params.t, rng, params.jump_cap);
        if traj.truncated {
            return None;
        }
        let f = eval_functional(&traj, spec);
        let w_plus = (-eval_action(&traj, g, rates, lambda_step)).exp();
        let w_minus = (-eval_action(&traj, g, rates, -lambda_step)).exp();
        Some((f * (w_plus - w_minus) / (2.0 * lambda_step), w_plus, w_minus))
    })?;
    let ess_plus = ess(&samples.iter().map(|&(_, w, _)| w).collect::<Vec<_>>());
    let ess_minus = ess(&samples.iter().map(|&(_, _, w)| w).collect::<Vec<_>>());
    if ess_plus.min(ess_minus) < ESS_FLOOR * samples.len() as f64 {
        return Err(Error::WeightDegeneracy {
            ess: ess_plus.min(ess_minus),
            n: samples.len(),
        });
    }
    let diffs: Vec<f64> = samples.iter().map(|&(d, _, _)| d).collect();
    let (value, stderr) = mean_and_se(&diffs);
    Ok(ResponseEstimate {
        value,
        stderr,
        n: diffs.len() as u64,
        seed: params.seed,
        estimator: EstimatorTag::GirsanovFd,
    })
}
