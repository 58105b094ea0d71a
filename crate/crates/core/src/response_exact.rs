//! Exact linear response via semigroup correlation functions.
//!
//! For a stationary chain perturbed by `r_t^lambda = r e^{lambda g(t, ., .)}`, the
//! derivative at `lambda = 0` of stationary expectations is a correlation
//! integral against the response field `psi` (see [`crate::perturb::PsiField`]):
//!
//! * terminal observable `v(X_t)`:
//!   `d/dlambda E[v] = int_0^t E_pi[ v(X_s) psi_{t-s}(X_0) ] ds`;
//! * time integral `int_0^t v(s, X_s) ds`:
//!   `int_0^t ds int_0^s du E_pi[ v(s, X_u) psi_{s-u}(X_0) ]`;
//! * jump sum `sum alpha(s, X_{s-}, X_s)`:
//!   `int_0^t E_pi[(alpha g)_r(s, .)] ds + int_0^t ds int_0^s du E_pi[ alpha_r(s, X_u) psi_{s-u}(X_0) ]`.
//!
//! Every two-point expectation reduces by stationarity to
//! `correlation(f, w, s) = sum_x pi(x) w(x) (e^{sL} f)(x)`, evaluated with the
//! positivity-preserving semigroup of [`crate::expm::Propagator`] under adaptive
//! Simpson quadrature. Time-dependent marginals of the *perturbed* (generally
//! time-inhomogeneous) chain are integrated with an embedded Dormand-Prince 5(4)
//! stepper.

use crate::expm::Propagator;
use crate::paths::Observable;
use crate::perturb::{PerturbedKernel, Perturbation, PsiField};
use crate::quad::integrate;
use crate::{Error, Result, StationaryChain};

/// Default absolute quadrature tolerance for single correlation integrals.
pub const LR_OBSERVABLE_TOL: f64 = 1e-9;
/// Default absolute tolerance for the double (time-integral) quadratures.
pub const LR_TIME_INTEGRAL_TOL: f64 = 1e-8;
/// Default local relative tolerance of the marginal stepper.
pub const KOLMOGOROV_REL_TOL: f64 = 1e-10;
/// Mass-conservation gate checked at every output slice before renormalization.
pub const MASS_DRIFT_TOL: f64 = 1e-9;

/// Which semigroup [`propagate`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `e^{sL}`: preserves constants and probability mass.
    Forward,
    /// `e^{sL*}` (the pi-weighted adjoint, i.e. the time-reversed generator):
    /// preserves the mean-zero subspace of L2(pi) and contracts on it.
    Adjoint,
}

/// Apply `e^{sL} f` or `e^{sL*} f`.
pub fn propagate(chain: &StationaryChain, f: &[f64], s: f64, direction: Direction) -> Vec<f64> {
    let rates = match direction {
        Direction::Forward => chain.rates(),
        Direction::Adjoint => chain.reversed(),
    };
    Propagator::new(rates).apply(s, f)
}

/// Stationary two-point function `E_pi[ f(X_s) w(X_0) ] = sum_x pi(x) w(x) (e^{sL} f)(x)`.
pub fn correlation(chain: &StationaryChain, f: &[f64], weight: &[f64], gap: f64) -> f64 {
    let prop = Propagator::new(chain.rates());
    let moved = prop.apply(gap, f);
    chain
        .pi()
        .as_slice()
        .iter()
        .zip(weight.iter().zip(&moved))
        .map(|(&p, (&w, &m))| p * w * m)
        .sum()
}

/// Derivative at `lambda = 0` of `E_pi[ v(X_t^lambda) ]` for a static observable.
/// Returns `(value, quadrature error estimate)`.
pub fn lr_observable_stationary(
    chain: &StationaryChain,
    v: &[f64],
    g: &Perturbation,
    t: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let psi = PsiField::new(chain, g)?;
    let prop = Propagator::new(chain.rates());
    let pi = chain.pi().as_slice();
    let (value, err) = integrate(
        |s| {
            let moved = prop.apply(s, v);
            let w = psi.evaluate(t - s);
            pi.iter()
                .zip(w.iter().zip(&moved))
                .map(|(&p, (&wx, &mx))| p * wx * mx)
                .sum()
        },
        0.0,
        t,
        tol,
    );
    Ok((value, err))
}

/// Derivative at `lambda = 0` of `E_pi[ int_0^t v(s, X_s^lambda) ds ]`.
pub fn lr_time_integral_stationary(
    chain: &StationaryChain,
    v: &Observable,
    g: &Perturbation,
    t: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let psi = PsiField::new(chain, g)?;
    let prop = Propagator::new(chain.rates());
    let pi = chain.pi().as_slice();
    let n = chain.len();
    let inner_tol = tol / (2.0 * t.max(1.0));
    let inner_err = std::cell::Cell::new(0.0f64);
    let (value, outer_err) = integrate(
        |s| {
            let vs = v.at_time(s, n);
            let (val, e) = integrate(
                |u| {
                    let moved = prop.apply(u, &vs);
                    let w = psi.evaluate(s - u);
                    pi.iter()
                        .zip(w.iter().zip(&moved))
                        .map(|(&p, (&wx, &mx))| p * wx * mx)
                        .sum()
                },
                0.0,
                s,
                inner_tol,
            );
            inner_err.set(inner_err.get().max(e));
            val
        },
        0.0,
        t,
        tol / 2.0,
    );
    Ok((value, outer_err + t * inner_err.get()))
}

/// Derivative at `lambda = 0` of `E_pi[ sum_{jumps <= t} alpha(s, X_{s-}, X_s) ]`.
///
/// The first (same-time) term integrates the stationary mean of the contraction
/// `(alpha g)_r`; the second is the double correlation integral of `alpha_r`
/// against `psi`.
pub fn lr_jump_stationary(
    chain: &StationaryChain,
    alpha: &Perturbation,
    g: &Perturbation,
    t: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let psi = PsiField::new(chain, g)?;
    let prop = Propagator::new(chain.rates());
    let pi = chain.pi().as_slice();
    let n = chain.len();
    let rates = chain.rates();
    let (same_time, err1) = integrate(
        |s| {
            (0..n)
                .map(|x| {
                    pi[x] * rates.contract_at(x, |a, b| alpha.eval(s, a, b) * g.eval(s, a, b))
                })
                .sum()
        },
        0.0,
        t,
        tol / 2.0,
    );
    let inner_tol = tol / (4.0 * t.max(1.0));
    let inner_err = std::cell::Cell::new(0.0f64);
    let (lagged, err2) = integrate(
        |s| {
            let alpha_r: Vec<f64> = (0..n)
                .map(|x| rates.contract_at(x, |a, b| alpha.eval(s, a, b)))
                .collect();
            let (val, e) = integrate(
                |u| {
                    let moved = prop.apply(u, &alpha_r);
                    let w = psi.evaluate(s - u);
                    pi.iter()
                        .zip(w.iter().zip(&moved))
                        .map(|(&p, (&wx, &mx))| p * wx * mx)
                        .sum()
                },
                0.0,
                s,
                inner_tol,
            );
            inner_err.set(inner_err.get().max(e));
            val
        },
        0.0,
        t,
        tol / 2.0,
    );
    Ok((same_time + lagged, err1 + err2 + t * inner_err.get()))
}

/// Time-indexed marginal distributions of a (possibly time-inhomogeneous) chain.
#[derive(Debug, Clone)]
pub struct MarginalCurve {
    pub times: Vec<f64>,
    /// One probability vector per grid time, renormalized after the mass gate.
    pub slices: Vec<Vec<f64>>,
}

impl MarginalCurve {
    pub fn slice_at(&self, t: f64) -> Option<&[f64]> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() < 1e-12)
            .map(|i| self.slices[i].as_slice())
    }
}

/// Integrate the forward equation `d mu_s / ds = mu_s Q_s^lambda` from `mu0` at
/// `s = 0`, recording the marginal at each requested grid time.
///
/// Embedded Dormand-Prince 5(4) with PI-free standard step control at local
/// relative tolerance `rel_tol`; each output slice passes the
/// [`MASS_DRIFT_TOL`] gate and is then renormalized.
pub fn kolmogorov_forward(
    kernel: &PerturbedKernel,
    mu0: &[f64],
    grid: &[f64],
    rel_tol: f64,
) -> Result<MarginalCurve> {
    let n = kernel.base.len();
    if mu0.len() != n {
        return Err(Error::InvalidParameter(format!(
            "initial distribution over {} states on a kernel over {n}",
            mu0.len()
        )));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter(
            "grid times must be nonnegative and strictly increasing".into(),
        ));
    }
    let derivative = |s: f64, mu: &[f64], out: &mut [f64]| {
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for x in 0..n {
            let mut hold = 0.0;
            for &(y, r) in kernel.base.edges_from(x) {
                let rate = r * (kernel.lambda * kernel.g.eval(s, x, y)).exp();
                out[y] += mu[x] * rate;
                hold += rate;
            }
            out[x] -= mu[x] * hold;
        }
    };

    let mut times = Vec::with_capacity(grid.len());
    let mut slices = Vec::with_capacity(grid.len());
    let mut t = 0.0;
    let mut y = mu0.to_vec();
    let mut record = |t: f64, y: &[f64]| -> Result<()> {
        let mass: f64 = y.iter().sum();
        if (mass - 1.0).abs() > MASS_DRIFT_TOL || y.iter().any(|&v| v < -1e-10) {
            return Err(Error::StepperFailure { t, tol: rel_tol });
        }
        times.push(t);
        slices.push(y.iter().map(|v| (v / mass).max(0.0)).collect());
        Ok(())
    };

    let mut grid_iter = grid.iter().copied().peekable();
    while let Some(&next) = grid_iter.peek() {
        if next <= t + 1e-15 {
            record(next, &y)?;
            grid_iter.next();
            continue;
        }
        integrate_rk45(&derivative, &mut t, next, &mut y, rel_tol)?;
        record(next, &y)?;
        grid_iter.next();
    }
    Ok(MarginalCurve { times, slices })
}

/// Dormand-Prince 5(4) from `*t` to `t_end` in place.
pub(crate) fn integrate_rk45<F: Fn(f64, &[f64], &mut [f64])>(
    f: &F,
    t: &mut f64,
    t_end: f64,
    y: &mut Vec<f64>,
    rel_tol: f64,
) -> Result<()> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    // Error weights: 5th-order minus embedded 4th-order coefficients.
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let n = y.len();
    let span = t_end - *t;
    let mut h = (span / 16.0).clamp(1e-8, 0.1);
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    f(*t, y, &mut k[0]);
    let h_min = 1e-14 * (1.0 + t_end.abs());
    while *t < t_end - 1e-15 {
        h = h.min(t_end - *t);
        if h < h_min {
            return Err(Error::StepperFailure { t: *t, tol: rel_tol });
        }
        for stage in 0..6 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage + 1) {
                    acc += A[stage][j] * kj[i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            let (_, rest) = k.split_at_mut(stage + 1);
            f(*t + C[stage] * h, &ytmp, &mut rest[0]);
        }
        // After the last stage, ytmp holds the 5th-order solution (the final
        // stage is evaluated at that point, so its derivative can seed the
        // next step: first-same-as-last).
        let mut err_norm = 0.0f64;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let scale = rel_tol + rel_tol * y[i].abs().max(ytmp[i].abs());
            err_norm = err_norm.max((h * e / scale).abs());
        }
        if err_norm <= 1.0 {
            *t += h;
            std::mem::swap(y, &mut ytmp);
            k.swap(0, 6);
        }
        // On rejection y and t are unchanged, so k[0] remains the correct
        // first-stage derivative; only the step size shrinks.
        let factor = if err_norm > 0.0 {
            0.9 * err_norm.powf(-0.2)
        } else {
            5.0
        };
        h *= factor.clamp(0.2, 5.0);
    }
    Ok(())
}
