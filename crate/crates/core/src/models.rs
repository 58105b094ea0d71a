//! Model zoo (birth-death chains, confining potentials on `Z^d`) and the
//! diagnostic checkers for the exponential-moment condition that underwrites
//! every response formula.
//!
//! Countable state spaces enter through explicit truncation with a reflecting
//! boundary, and every infinite-state condition is evaluated empirically:
//! partial sums at increasing truncations, ratio-test evidence, and verdicts
//! that never claim a proof. The key condition is the existence of some
//! `theta > 0` with `E_nu[exp{theta int_0^t |alpha|_r(s, X_s) ds}] < infinity`;
//! [`lyapunov_check`] verifies the sufficient drift certificate
//! `LU <= C U - sigma |alpha|_r U` pointwise, and [`exp_moment_mc`] estimates
//! the moment itself together with its jump-sum companion.

use std::sync::Arc;

use rayon::prelude::*;

use crate::paths::{sample_index, simulate_homogeneous};
use crate::perturb::Perturbation;
use crate::quad::integrate;
use crate::response_mc::{
    ensemble, mean_and_se, validate_initial, EstimatorTag, McParams, ResponseEstimate,
};
use crate::{Error, RateMatrix, Result, StateSpace, StationaryChain};

/// Relative slack used when a pointwise inequality is allowed to bind exactly.
const MARGIN_SLACK: f64 = 1e-12;
/// Ratio-test margin: tail ratios this far from 1 are decisive.
const RATIO_MARGIN: f64 = 0.05;

/// Empirical behavior of a nonnegative series under growing truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesTrend {
    /// Partial sums have numerically stabilized or the tail ratio is < 1.
    ConvergesEmpirically,
    /// Partial sums keep growing materially or the tail ratio is > 1.
    DivergesEmpirically,
    /// The evidence is consistent with either behavior.
    Unclear,
}

/// Verdict of a condition checker. Checkers report empirical evidence only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    HoldsEmpirically,
    FailsEmpirically,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::HoldsEmpirically => "holds-empirically",
            Self::FailsEmpirically => "fails-empirically",
            Self::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// Ratio-test plus partial-sum evidence for `sum_k terms[k]`.
///
/// The tail ratio is averaged over the last quarter of the terms; ratios
/// bounded away from 1 are decisive, and otherwise the growth of the partial
/// sums between the half and full truncation decides or stays [`SeriesTrend::Unclear`].
fn series_trend(terms: &[f64]) -> SeriesTrend {
    if terms.iter().any(|t| !t.is_finite()) {
        return SeriesTrend::DivergesEmpirically;
    }
    if terms.len() < 8 {
        return SeriesTrend::Unclear;
    }
    let start = terms.len() - (terms.len() / 4).max(2);
    let mut ratios = Vec::new();
    for k in start.max(1)..terms.len() {
        if terms[k - 1] > 0.0 {
            ratios.push(terms[k] / terms[k - 1]);
        }
    }
    if !ratios.is_empty() {
        let rho = ratios.iter().sum::<f64>() / ratios.len() as f64;
        if rho <= 1.0 - RATIO_MARGIN {
            return SeriesTrend::ConvergesEmpirically;
        }
        if rho >= 1.0 + RATIO_MARGIN {
            return SeriesTrend::DivergesEmpirically;
        }
    }
    let half: f64 = terms[..terms.len() / 2].iter().sum();
    let full: f64 = terms.iter().sum();
    if full - half <= 1e-9 * full.abs().max(1e-300) {
        SeriesTrend::ConvergesEmpirically
    } else if full >= 1.5 * half {
        SeriesTrend::DivergesEmpirically
    } else {
        SeriesTrend::Unclear
    }
}

/// A birth-death chain on `{0, 1, 2, ...}` given by user rate functions,
/// truncated at level `K` with a reflecting boundary (no birth out of `K`).
#[derive(Clone)]
pub struct BirthDeathModel {
    truncation: usize,
    birth: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    death: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for BirthDeathModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BirthDeathModel")
            .field("truncation", &self.truncation)
            .finish_non_exhaustive()
    }
}

impl BirthDeathModel {
    /// `birth(k) = r_k^+` for `k >= 0` and `death(k) = r_k^-` for `k >= 1`,
    /// validated positive on the truncated range.
    pub fn new(
        truncation: usize,
        birth: impl Fn(usize) -> f64 + Send + Sync + 'static,
        death: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if truncation < 1 {
            return Err(Error::InvalidParameter(
                "birth-death truncation level must be at least 1".into(),
            ));
        }
        for k in 0..truncation {
            let r = birth(k);
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::NonPositiveRate {
                    from: k,
                    to: k + 1,
                    rate: r,
                });
            }
        }
        for k in 1..=truncation {
            let r = death(k);
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::NonPositiveRate {
                    from: k,
                    to: k - 1,
                    rate: r,
                });
            }
        }
        Ok(Self {
            truncation,
            birth: Arc::new(birth),
            death: Arc::new(death),
        })
    }

    /// Constant rates `r^+` and `r^-`.
    pub fn constant(truncation: usize, r_plus: f64, r_minus: f64) -> Result<Self> {
        Self::new(truncation, move |_| r_plus, move |_| r_minus)
    }

    /// The same rate functions truncated at a different level.
    pub fn with_truncation(&self, truncation: usize) -> Result<Self> {
        let birth = Arc::clone(&self.birth);
        let death = Arc::clone(&self.death);
        Self::new(truncation, move |k| birth(k), move |k| death(k))
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// `r_k^+` (defined for every `k`, used up to the truncation).
    pub fn birth_rate(&self, k: usize) -> f64 {
        (self.birth)(k)
    }

    /// `r_k^-` for `k >= 1`.
    pub fn death_rate(&self, k: usize) -> f64 {
        (self.death)(k)
    }

    /// The truncated kernel on `{0, ..., K}`: births up to `K - 1 -> K`,
    /// deaths down to `1 -> 0`, and no birth out of `K` (reflecting).
    pub fn rate_matrix(&self) -> Result<RateMatrix> {
        let k_max = self.truncation;
        let mut triples = Vec::with_capacity(2 * k_max);
        for k in 0..k_max {
            triples.push((k, k + 1, self.birth_rate(k)));
        }
        for k in 1..=k_max {
            triples.push((k, k - 1, self.death_rate(k)));
        }
        RateMatrix::from_triples(StateSpace::of_size(k_max + 1)?, &triples)
    }
}

/// Stationary data of a truncated birth-death chain, with the partial sums
/// that diagnose the untruncated conditions.
#[derive(Debug, Clone)]
pub struct BdStationary {
    /// `Z_m = 1 + sum_{k=1}^m (r_0^+ ... r_{k-1}^+)/(r_1^- ... r_k^-)` for `m = 0..=K`.
    pub z_partial_sums: Vec<f64>,
    /// Normalized stationary distribution on `{0, ..., K}`.
    pub pi: Vec<f64>,
    /// Partial sums of the non-explosion series
    /// `sum_{k>=0} (r_1^- ... r_k^-)/(r_1^+ ... r_k^+)` for `m = 0..=K`
    /// (this series must diverge for the untruncated chain to be non-explosive).
    pub second_series_partial_sums: Vec<f64>,
}

impl BdStationary {
    /// The truncated normalization `Z_K`.
    pub fn z(&self) -> f64 {
        *self.z_partial_sums.last().unwrap()
    }

    /// Empirical summability of the normalization series.
    pub fn z_trend(&self) -> SeriesTrend {
        series_trend(&partial_sums_to_terms(&self.z_partial_sums))
    }

    /// Empirical behavior of the non-explosion series.
    pub fn second_series_trend(&self) -> SeriesTrend {
        series_trend(&partial_sums_to_terms(&self.second_series_partial_sums))
    }
}

fn partial_sums_to_terms(sums: &[f64]) -> Vec<f64> {
    let mut terms = Vec::with_capacity(sums.len());
    let mut prev = 0.0;
    for &s in sums {
        terms.push(s - prev);
        prev = s;
    }
    terms
}

/// Stationary weights `pi(k) proportional to prod_{i<k} r_i^+ / prod_{i<=k, i>=1} r_i^-`,
/// normalized on the truncated range, plus both diagnostic series.
pub fn bd_stationary(model: &BirthDeathModel) -> BdStationary {
    let k_max = model.truncation();
    let mut weight = 1.0f64;
    let mut z_partial_sums = Vec::with_capacity(k_max + 1);
    let mut weights = Vec::with_capacity(k_max + 1);
    weights.push(weight);
    z_partial_sums.push(weight);
    for k in 1..=k_max {
        weight *= model.birth_rate(k - 1) / model.death_rate(k);
        weights.push(weight);
        z_partial_sums.push(z_partial_sums[k - 1] + weight);
    }
    let z = z_partial_sums[k_max];
    let pi: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let mut term = 1.0f64;
    let mut second_series_partial_sums = Vec::with_capacity(k_max + 1);
    second_series_partial_sums.push(term);
    for k in 1..=k_max {
        term *= model.death_rate(k) / model.birth_rate(k);
        second_series_partial_sums.push(second_series_partial_sums[k - 1] + term);
    }
    BdStationary {
        z_partial_sums,
        pi,
        second_series_partial_sums,
    }
}

/// Evidence about one of the two birth-death series at growing truncations.
#[derive(Debug, Clone)]
pub struct SeriesDiagnostic {
    pub truncations: Vec<usize>,
    /// Partial sum at each requested truncation.
    pub partial_sums: Vec<f64>,
    /// Mean consecutive-term ratio near the largest truncation.
    pub tail_ratio: f64,
    pub trend: SeriesTrend,
}

/// Combined verdict on the stationarity + non-explosion conditions of a
/// birth-death chain: the normalization series must converge and the
/// non-explosion series must diverge. Empirical evidence only, never a proof.
#[derive(Debug, Clone)]
pub struct BdConditionReport {
    /// Must converge (summable weights give an invariant distribution).
    pub z_series: SeriesDiagnostic,
    /// Must diverge (divergence rules out explosion).
    pub non_explosion_series: SeriesDiagnostic,
    pub verdict: Verdict,
}

fn diagnose_series(terms: &[f64], truncations: &[usize]) -> SeriesDiagnostic {
    let mut partial_sums = Vec::with_capacity(truncations.len());
    for &k in truncations {
        let upto = k.min(terms.len() - 1);
        partial_sums.push(terms[..=upto].iter().sum());
    }
    let start = terms.len() - (terms.len() / 4).max(2);
    let mut ratios = Vec::new();
    for k in start.max(1)..terms.len() {
        if terms[k - 1] > 0.0 && terms[k].is_finite() && terms[k - 1].is_finite() {
            ratios.push(terms[k] / terms[k - 1]);
        }
    }
    let tail_ratio = if ratios.is_empty() {
        f64::NAN
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    SeriesDiagnostic {
        truncations: truncations.to_vec(),
        partial_sums,
        tail_ratio,
        trend: series_trend(terms),
    }
}

/// Evaluate both series at the given increasing truncations and combine the
/// trends into a verdict.
pub fn bd_check_conditions(model: &BirthDeathModel, truncations: &[usize]) -> BdConditionReport {
    let k_max = truncations.iter().copied().max().unwrap_or(64).max(8);
    let mut z_terms = Vec::with_capacity(k_max + 1);
    let mut ne_terms = Vec::with_capacity(k_max + 1);
    let mut w = 1.0f64;
    let mut u = 1.0f64;
    z_terms.push(w);
    ne_terms.push(u);
    for k in 1..=k_max {
        w *= model.birth_rate(k - 1) / model.death_rate(k);
        u *= model.death_rate(k) / model.birth_rate(k);
        z_terms.push(w);
        ne_terms.push(u);
    }
    let z_series = diagnose_series(&z_terms, truncations);
    let non_explosion_series = diagnose_series(&ne_terms, truncations);
    let verdict = match (z_series.trend, non_explosion_series.trend) {
        (SeriesTrend::ConvergesEmpirically, SeriesTrend::DivergesEmpirically) => {
            Verdict::HoldsEmpirically
        }
        (SeriesTrend::DivergesEmpirically, _) | (_, SeriesTrend::ConvergesEmpirically) => {
            Verdict::FailsEmpirically
        }
        _ => Verdict::Inconclusive,
    };
    BdConditionReport {
        z_series,
        non_explosion_series,
        verdict,
    }
}

/// A drift certificate for the exponential-moment condition: a function `U`
/// with floor `c > 0` and constants `C >= 0`, `sigma > 0` such that
/// `LU <= C U - sigma |alpha|_r U` pointwise.
pub struct LyapunovCertificate<'a, S> {
    /// `U`, evaluable at every state reachable in one jump from the checked set.
    pub u: &'a (dyn Fn(&S) -> f64 + Sync),
    /// `C`.
    pub growth: f64,
    /// `sigma`.
    pub sigma: f64,
    /// `c`, the positive floor of `U`.
    pub floor: f64,
}

/// Outcome of one item of the certificate check.
#[derive(Debug, Clone)]
pub struct ItemReport<S> {
    pub label: &'static str,
    pub passed: bool,
    /// Smallest slack of the item's inequality over the checked set
    /// (negative when violated). For finiteness items this is the largest
    /// magnitude observed.
    pub worst_margin: f64,
    pub worst_state: Option<S>,
    pub violations: usize,
}

/// Pointwise certificate check; reports, never errors.
#[derive(Debug, Clone)]
pub struct LyapunovReport<S> {
    pub passed: bool,
    /// Floor, finite contraction, drift inequality, finite initial mass.
    pub items: Vec<ItemReport<S>>,
}

/// Check a drift certificate on a finite set of states of a (possibly
/// infinite) model.
///
/// `transitions(x)` must list the outgoing rates of the *untruncated* model,
/// so targets one jump outside the checked set are examined; `alpha_sup(x, y)`
/// is the time-sup `sup_s |alpha(s, x, y)|` (for decoupled perturbations,
/// `||tau||_inf |E(x, y)|`). The four items are: `U >= c` on the set, finite
/// `U_r(x) = sum_y r(x, y) U(y)`, the drift inequality
/// `LU(x) <= C U(x) - sigma |alpha|_r(x) U(x)`, and finite `nu[U]` over the
/// finitely-supported surrogate initial law.
pub fn lyapunov_check<S: Clone + Sync + Send>(
    checked: &[S],
    transitions: &(dyn Fn(&S) -> Vec<(S, f64)> + Sync),
    alpha_sup: &(dyn Fn(&S, &S) -> f64 + Sync),
    initial: &[(S, f64)],
    cert: &LyapunovCertificate<'_, S>,
) -> LyapunovReport<S> {
    struct PerState<S> {
        floor_margin: f64,
        contraction: f64,
        drift_margin: f64,
        state: S,
    }
    let rows: Vec<PerState<S>> = checked
        .par_iter()
        .map(|x| {
            let ux = (cert.u)(x);
            let mut u_r = 0.0;
            let mut generator = 0.0;
            let mut alpha_r = 0.0;
            for (y, rate) in transitions(x) {
                let uy = (cert.u)(&y);
                u_r += rate * uy;
                generator += rate * (uy - ux);
                alpha_r += rate * alpha_sup(x, &y).abs();
            }
            let bound = cert.growth * ux - cert.sigma * alpha_r * ux;
            let scale = 1.0 + bound.abs().max(generator.abs());
            PerState {
                floor_margin: ux - cert.floor,
                contraction: u_r,
                drift_margin: (bound - generator) / scale,
                state: x.clone(),
            }
        })
        .collect();
    let mut floor = ItemReport {
        label: "floor: U >= c on the checked set",
        passed: true,
        worst_margin: f64::INFINITY,
        worst_state: None,
        violations: 0,
    };
    let mut contraction = ItemReport {
        label: "finite contraction: U_r(x) < infinity",
        passed: true,
        worst_margin: 0.0,
        worst_state: None,
        violations: 0,
    };
    let mut drift = ItemReport {
        label: "drift: LU <= C U - sigma |alpha|_r U",
        passed: true,
        worst_margin: f64::INFINITY,
        worst_state: None,
        violations: 0,
    };
    for row in &rows {
        if row.floor_margin < floor.worst_margin || !row.floor_margin.is_finite() {
            floor.worst_margin = row.floor_margin;
            floor.worst_state = Some(row.state.clone());
        }
        if !(row.floor_margin >= 0.0) {
            floor.violations += 1;
        }
        if row.contraction > contraction.worst_margin || !row.contraction.is_finite() {
            contraction.worst_margin = row.contraction;
            contraction.worst_state = Some(row.state.clone());
        }
        if !row.contraction.is_finite() {
            contraction.violations += 1;
        }
        if row.drift_margin < drift.worst_margin || !row.drift_margin.is_finite() {
            drift.worst_margin = row.drift_margin;
            drift.worst_state = Some(row.state.clone());
        }
        if !(row.drift_margin >= -MARGIN_SLACK) {
            drift.violations += 1;
        }
    }
    floor.passed = floor.violations == 0 && floor.worst_margin.is_finite();
    contraction.passed = contraction.violations == 0;
    drift.passed = drift.violations == 0 && drift.worst_margin.is_finite();
    let nu_u: f64 = initial.iter().map(|(x, p)| p * (cert.u)(x)).sum();
    let initial_mass = ItemReport {
        label: "finite initial mass: nu[U] < infinity",
        passed: nu_u.is_finite(),
        worst_margin: nu_u,
        worst_state: None,
        violations: usize::from(!nu_u.is_finite()),
    };
    let items = vec![floor, contraction, drift, initial_mass];
    LyapunovReport {
        passed: items.iter().all(|i| i.passed),
        items,
    }
}

/// Monte-Carlo estimate of the exponential moment
/// `E_nu[exp{theta int_0^t |alpha|_r(s, X_s) ds}]` together with the jump-sum
/// companion `E_nu[exp{theta sum_jumps |alpha(s, X_{s-}, X_s)|}]`.
#[derive(Debug, Clone)]
pub struct ExpMomentReport {
    pub integral: ResponseEstimate,
    pub jump_sum: ResponseEstimate,
    pub theta: f64,
    /// Fraction of the integral-moment sample mean carried by the largest 1%
    /// of samples. Large values mean the estimate is tail-dominated.
    pub top_share: f64,
}

/// Estimate both exponential moments on unperturbed paths from `nu`.
///
/// Fails with [`Error::HeavyTailWarning`] when the top 1% of samples carry
/// more than half of the integral-moment mean, since the estimate is then
/// dominated by rare excursions and says little about finiteness.
pub fn exp_moment_mc(
    rates: &RateMatrix,
    nu: &[f64],
    alpha: &Perturbation,
    theta: f64,
    params: &McParams,
) -> Result<ExpMomentReport> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "exponential-moment tilt theta must be positive, got {theta}"
        )));
    }
    validate_initial(nu, rates.len())?;
    let samples = ensemble(params, |rng| {
        let x0 = sample_index(nu, rng.uniform());
        let traj = simulate_homogeneous(rates, x0, params.t, rng, params.jump_cap);
        if traj.truncated {
            return None;
        }
        let mut integral = 0.0;
        for (start, end, x) in traj.segments() {
            let (value, _) = integrate(
                |s| rates.contract_at(x, |xx, yy| alpha.eval(s, xx, yy).abs()),
                start,
                end,
                1e-10 * (1.0 + end - start),
            );
            integral += value;
        }
        let mut jump_sum = 0.0;
        let mut from = traj.initial;
        for (&s, &to) in traj.jump_times.iter().zip(&traj.states) {
            jump_sum += alpha.eval(s, from, to).abs();
            from = to;
        }
        Some(((theta * integral).exp(), (theta * jump_sum).exp()))
    })?;
    let integral_samples: Vec<f64> = samples.iter().map(|&(a, _)| a).collect();
    let jump_samples: Vec<f64> = samples.iter().map(|&(_, b)| b).collect();
    let total: f64 = integral_samples.iter().sum();
    let mut sorted = integral_samples.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = sorted.len().div_ceil(100);
    let top_sum: f64 = sorted[..top].iter().sum();
    let top_share = if total > 0.0 { top_sum / total } else { 1.0 };
    if !total.is_finite() || top_share > 0.5 {
        return Err(Error::HeavyTailWarning {
            theta,
            share: 100.0 * top_share,
        });
    }
    let (iv, ise) = mean_and_se(&integral_samples);
    let (jv, jse) = mean_and_se(&jump_samples);
    let n = integral_samples.len() as u64;
    Ok(ExpMomentReport {
        integral: ResponseEstimate {
            value: iv,
            stderr: ise,
            n,
            seed: params.seed,
            estimator: EstimatorTag::ExpMoment,
        },
        jump_sum: ResponseEstimate {
            value: jv,
            stderr: jse,
            n,
            seed: params.seed,
            estimator: EstimatorTag::ExpMomentJumps,
        },
        theta,
        top_share,
    })
}

/// Outcome of one grid point of [`exp_moment_scan`].
#[derive(Debug, Clone)]
pub enum ScanOutcome {
    Reliable(ExpMomentReport),
    HeavyTail { share: f64 },
    Failed(String),
}

/// Scan of the existential condition over a `theta` grid.
#[derive(Debug, Clone)]
pub struct ThetaScan {
    pub thetas: Vec<f64>,
    pub outcomes: Vec<ScanOutcome>,
    /// Largest grid point with a reliable finite estimate, if any. A scan
    /// with no reliable point is evidence of nothing: the condition is
    /// existential in `theta` and failure here is not a disproof.
    pub best_theta: Option<f64>,
}

/// Estimate the exponential moment at every `theta` in the grid and report
/// the best (largest) tilt that produced a reliable estimate.
pub fn exp_moment_scan(
    rates: &RateMatrix,
    nu: &[f64],
    alpha: &Perturbation,
    thetas: &[f64],
    params: &McParams,
) -> ThetaScan {
    let mut outcomes = Vec::with_capacity(thetas.len());
    let mut best_theta = None;
    for &theta in thetas {
        match exp_moment_mc(rates, nu, alpha, theta, params) {
            Ok(report) => {
                if best_theta.map_or(true, |b| theta > b) {
                    best_theta = Some(theta);
                }
                outcomes.push(ScanOutcome::Reliable(report));
            }
            Err(Error::HeavyTailWarning { share, .. }) => {
                outcomes.push(ScanOutcome::HeavyTail { share });
            }
            Err(e) => outcomes.push(ScanOutcome::Failed(e.to_string())),
        }
    }
    ThetaScan {
        thetas: thetas.to_vec(),
        outcomes,
        best_theta,
    }
}

/// Nearest-neighbor walk on `Z^d` with rates `r(x, y) = exp{-(V(y) - V(x))/2}`,
/// truncated to the box `|x|_inf <= R` with a reflecting boundary. Reversible
/// with `pi proportional to e^{-V}` on the box.
pub struct ConfiningPotentialModel {
    d: usize,
    radius: i64,
    v: PotentialFn,
    chain: StationaryChain,
}

/// Shareable potential function `V(x)` on lattice coordinates.
pub type PotentialFn = Arc<dyn Fn(&[i64]) -> f64 + Send + Sync>;

impl std::fmt::Debug for ConfiningPotentialModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConfiningPotentialModel")
            .field("d", &self.d)
            .field("radius", &self.radius)
            .finish_non_exhaustive()
    }
}

impl ConfiningPotentialModel {
    pub fn new(
        d: usize,
        radius: usize,
        v: impl Fn(&[i64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "lattice dimension must be 1, 2, or 3, got {d}"
            )));
        }
        if radius < 1 {
            return Err(Error::InvalidParameter(
                "box radius must be at least 1".into(),
            ));
        }
        let side = 2 * radius + 1;
        let n = side.pow(d as u32);
        if n > 200_000 {
            return Err(Error::InvalidParameter(format!(
                "box with {n} sites exceeds the supported size"
            )));
        }
        let radius = radius as i64;
        let v: PotentialFn = Arc::new(v);
        let side = side as i64;
        let index_of = |c: &[i64]| -> usize {
            c.iter()
                .rev()
                .fold(0i64, |acc, &x| acc * side + (x + radius)) as usize
        };
        let coords_of = |mut idx: i64| -> Vec<i64> {
            let mut c = vec![0i64; d];
            for slot in c.iter_mut() {
                *slot = idx % side - radius;
                idx /= side;
            }
            c
        };
        let mut triples = Vec::new();
        let mut potential = vec![0.0f64; n];
        for idx in 0..n as i64 {
            let x = coords_of(idx);
            let vx = v(&x);
            if !vx.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "potential is not finite at {x:?}"
                )));
            }
            potential[idx as usize] = vx;
            for j in 0..d {
                for step in [1i64, -1] {
                    let mut y = x.clone();
                    y[j] += step;
                    if y[j].abs() > radius {
                        continue;
                    }
                    let rate = (-(v(&y) - vx) / 2.0).exp();
                    if !(rate > 0.0) || !rate.is_finite() {
                        return Err(Error::NonPositiveRate {
                            from: idx as usize,
                            to: index_of(&y),
                            rate,
                        });
                    }
                    triples.push((idx as usize, index_of(&y), rate));
                }
            }
        }
        // The Gibbs weights e^{-V} can span far more orders of magnitude than
        // a numeric stationary solve resolves, so build pi in closed form
        // (the nearest-neighbour rates e^{-(V(y)-V(x))/2} are in detailed
        // balance with it) and shift by the minimum to keep every weight
        // representable.
        let v_min = potential.iter().copied().fold(f64::INFINITY, f64::min);
        let mut pi: Vec<f64> = potential.iter().map(|&vx| (-(vx - v_min)).exp()).collect();
        if pi.contains(&0.0) {
            return Err(Error::InvalidParameter(
                "potential spread exceeds the representable range (about 700)".into(),
            ));
        }
        let total: f64 = pi.iter().sum();
        for w in &mut pi {
            *w /= total;
        }
        let chain = StationaryChain::with_known_pi(
            RateMatrix::from_triples(StateSpace::of_size(n)?, &triples)?,
            pi,
        )?;
        Ok(Self {
            d,
            radius,
            v,
            chain,
        })
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> usize {
        self.radius as usize
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn chain(&self) -> &StationaryChain {
        &self.chain
    }

    pub fn potential(&self, x: &[i64]) -> f64 {
        (self.v)(x)
    }

    pub fn site_index(&self, coords: &[i64]) -> Option<usize> {
        if coords.len() != self.d || coords.iter().any(|c| c.abs() > self.radius) {
            return None;
        }
        let side = 2 * self.radius + 1;
        Some(
            coords
                .iter()
                .rev()
                .fold(0i64, |acc, &x| acc * side + (x + self.radius)) as usize,
        )
    }

    pub fn site_coords(&self, idx: usize) -> Vec<i64> {
        let side = 2 * self.radius + 1;
        let mut idx = idx as i64;
        let mut c = vec![0i64; self.d];
        for slot in c.iter_mut() {
            *slot = idx % side - self.radius;
            idx /= side;
        }
        c
    }

    /// Partial sums of `sum_x e^{-V(x)}` over nested boxes — the finiteness
    /// diagnostic for the untruncated normalization.
    pub fn partition_partial_sums(&self, radii: &[usize]) -> Vec<f64> {
        let mut shell_sum = vec![0.0f64; self.radius as usize + 1];
        for idx in 0..self.len() {
            let x = self.site_coords(idx);
            let norm = x.iter().map(|c| c.abs()).max().unwrap() as usize;
            shell_sum[norm] += (-self.potential(&x)).exp();
        }
        radii
            .iter()
            .map(|&r| shell_sum[..=r.min(self.radius as usize)].iter().sum())
            .collect()
    }

    /// Untruncated lattice transitions of a state, for certificate checks
    /// that must look one jump outside the box.
    pub fn lattice_transitions(&self, x: &[i64]) -> Vec<(Vec<i64>, f64)> {
        let vx = self.potential(x);
        let mut out = Vec::with_capacity(2 * self.d);
        for j in 0..self.d {
            for step in [1i64, -1] {
                let mut y = x.to_vec();
                y[j] += step;
                let rate = (-(self.potential(&y) - vx) / 2.0).exp();
                out.push((y, rate));
            }
        }
        out
    }
}

/// Running maximum of `sum_{y ~ x} E(x, y) e^{-(V(y) - V(x))/2}` over nested
/// boxes; a bounded sup (on the infinite lattice) makes every bounded-profile
/// perturbation along `E` satisfy the exponential-moment condition for every
/// initial law.
#[derive(Debug, Clone)]
pub struct ConfiningReport {
    pub radii: Vec<usize>,
    /// `running_max[i]`: sup over the box of radius `radii[i]` (monotone).
    pub running_max: Vec<f64>,
    /// True when the running max stopped growing (relative increment over the
    /// last half of the radii below 0.1%).
    pub plateaued: bool,
}

/// Evaluate the edge-sum criterion on every shell up to the model radius.
/// Neighbors outside the box contribute too: `V` and `E` are total functions.
pub fn confining_check(
    model: &ConfiningPotentialModel,
    e: &(dyn Fn(&[i64], &[i64]) -> f64 + Sync),
) -> ConfiningReport {
    let r_max = model.radius();
    let mut shell_max = vec![f64::NEG_INFINITY; r_max + 1];
    let per_site: Vec<(usize, f64)> = (0..model.len())
        .into_par_iter()
        .map(|idx| {
            let x = model.site_coords(idx);
            let norm = x.iter().map(|c| c.abs()).max().unwrap() as usize;
            let vx = model.potential(&x);
            let mut sum = 0.0;
            for j in 0..model.dimension() {
                for step in [1i64, -1] {
                    let mut y = x.clone();
                    y[j] += step;
                    sum += e(&x, &y) * (-(model.potential(&y) - vx) / 2.0).exp();
                }
            }
            (norm, sum)
        })
        .collect();
    for (norm, sum) in per_site {
        if sum > shell_max[norm] {
            shell_max[norm] = sum;
        }
    }
    let radii: Vec<usize> = (0..=r_max).collect();
    let mut running_max = Vec::with_capacity(radii.len());
    let mut acc = f64::NEG_INFINITY;
    for r in 0..=r_max {
        acc = acc.max(shell_max[r]);
        running_max.push(acc);
    }
    let mid = running_max[running_max.len() / 2];
    let last = *running_max.last().unwrap();
    let plateaued = (last - mid) <= 1e-3 * (1.0 + last.abs());
    ConfiningReport {
        radii,
        running_max,
        plateaued,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::EdgeField;
    use crate::profile::TimeProfile;

    fn geometric_model(k: usize) -> BirthDeathModel {
        BirthDeathModel::constant(k, 1.0, 2.0).unwrap()
    }

    #[test]
    fn geometric_birth_death_matches_the_closed_form() {
        let bd = bd_stationary(&geometric_model(40));
        assert!((bd.z() - 2.0).abs() <= 1e-12, "Z = {}", bd.z());
        for (k, &p) in bd.pi.iter().enumerate() {
            assert!(
                (p - 0.5f64.powi(k as i32 + 1)).abs() <= 1e-12,
                "pi({k}) = {p}"
            );
        }
        assert_eq!(bd.z_trend(), SeriesTrend::ConvergesEmpirically);
        assert_eq!(bd.second_series_trend(), SeriesTrend::DivergesEmpirically);
    }

    #[test]
    fn balanced_rates_are_flagged_non_summable() {
        let bd = bd_stationary(&BirthDeathModel::constant(64, 1.5, 1.5).unwrap());
        // Weights are constant, so the partial sums grow linearly.
        assert_eq!(bd.z_trend(), SeriesTrend::DivergesEmpirically);
        assert!((bd.z() - 65.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_pi_satisfies_detailed_balance_and_matches_the_solver() {
        let model = BirthDeathModel::new(
            30,
            |k| 1.0 + 0.3 * ((k as f64).sin() + 1.1),
            |k| 1.8 + 0.2 * ((k as f64 * 0.7).cos() + 1.1),
        )
        .unwrap();
        let bd = bd_stationary(&model);
        for k in 0..model.truncation() {
            let flow_up = bd.pi[k] * model.birth_rate(k);
            let flow_down = bd.pi[k + 1] * model.death_rate(k + 1);
            assert!((flow_up - flow_down).abs() <= 1e-12, "balance at {k}");
        }
        let chain = StationaryChain::new(model.rate_matrix().unwrap()).unwrap();
        for k in 0..=model.truncation() {
            assert!((chain.pi().prob(k) - bd.pi[k]).abs() < 1e-11);
        }
    }

    #[test]
    fn condition_verdicts_match_the_three_regimes() {
        let grid = [25usize, 50, 100, 200];
        let holds = bd_check_conditions(&geometric_model(40), &grid);
        assert_eq!(holds.verdict, Verdict::HoldsEmpirically);
        assert_eq!(holds.z_series.trend, SeriesTrend::ConvergesEmpirically);
        assert_eq!(
            holds.non_explosion_series.trend,
            SeriesTrend::DivergesEmpirically
        );

        let fails = bd_check_conditions(&BirthDeathModel::constant(40, 2.0, 1.0).unwrap(), &grid);
        assert_eq!(fails.verdict, Verdict::FailsEmpirically);
        assert_eq!(fails.z_series.trend, SeriesTrend::DivergesEmpirically);

        // Term ratios tend to 1: designed boundary, no verdict either way.
        let boundary = bd_check_conditions(
            &BirthDeathModel::new(40, |_| 1.0, |k| 1.0 + 2.0 / (k as f64 + 2.0)).unwrap(),
            &grid,
        );
        assert_eq!(boundary.verdict, Verdict::Inconclusive);
        assert_eq!(boundary.z_series.trend, SeriesTrend::Unclear);
        assert!((boundary.z_series.tail_ratio - 1.0).abs() < RATIO_MARGIN);
    }

    #[test]
    fn partial_sums_are_reported_at_each_truncation() {
        let report = bd_check_conditions(&geometric_model(40), &[10, 20, 40]);
        assert_eq!(report.z_series.partial_sums.len(), 3);
        for (i, &k) in [10usize, 20, 40].iter().enumerate() {
            let want = 2.0 * (1.0 - 0.5f64.powi(k as i32 + 1));
            assert!((report.z_series.partial_sums[i] - want).abs() < 1e-12);
        }
    }

    fn bd_states_and_transitions(
        model: &BirthDeathModel,
    ) -> (Vec<usize>, impl Fn(&usize) -> Vec<(usize, f64)> + Sync + '_) {
        let states: Vec<usize> = (0..=model.truncation()).collect();
        let transitions = move |k: &usize| {
            let mut out = vec![(*k + 1, model.birth_rate(*k))];
            if *k > 0 {
                out.push((*k - 1, model.death_rate(*k)));
            }
            out
        };
        (states, transitions)
    }

    #[test]
    fn constant_certificate_covers_bounded_perturbations() {
        // Constant U certifies the condition when sup_k (|E_k^+| r_k^+ + |E_k^-| r_k^-)
        // is finite; with unit edge values that sup is r^+ + r^- = 3.
        let model = geometric_model(50);
        let (states, transitions) = bd_states_and_transitions(&model);
        let u = |_: &usize| 1.0;
        let cert = LyapunovCertificate {
            u: &u,
            growth: 0.3,
            sigma: 0.1,
            floor: 1.0,
        };
        let report = lyapunov_check(
            &states,
            &transitions,
            &|_: &usize, _: &usize| 1.0,
            &[(0usize, 1.0)],
            &cert,
        );
        assert!(report.passed, "items: {:?}", report.items);
        // The drift inequality binds exactly at C = sigma * sup |alpha|_r.
        let drift = &report.items[2];
        assert!(drift.worst_margin.abs() < 1e-9);

        let too_small = LyapunovCertificate {
            u: &u,
            growth: 0.2,
            sigma: 0.1,
            floor: 1.0,
        };
        let failing = lyapunov_check(
            &states,
            &transitions,
            &|_: &usize, _: &usize| 1.0,
            &[(0usize, 1.0)],
            &too_small,
        );
        assert!(!failing.passed);
        let drift = &failing.items[2];
        assert!(drift.violations > 0);
        assert!(drift.worst_margin < 0.0);
        assert!(drift.worst_state.is_some());
    }

    #[test]
    fn certificate_passing_is_monotone_in_the_constants() {
        let model = BirthDeathModel::new(40, |k| 1.0 + 0.1 * k as f64, |k| 2.0 + 0.2 * k as f64)
            .unwrap();
        let (states, transitions) = bd_states_and_transitions(&model);
        let u = |k: &usize| 1.0 + *k as f64;
        let alpha = |x: &usize, y: &usize| if *y > *x { 0.5 } else { 0.25 };
        let base = LyapunovCertificate {
            u: &u,
            growth: 2.0,
            sigma: 0.2,
            floor: 1.0,
        };
        let passed = lyapunov_check(&states, &transitions, &alpha, &[(0usize, 1.0)], &base).passed;
        assert!(passed);
        for (growth, sigma) in [(2.0, 0.1), (3.0, 0.2), (5.0, 0.05)] {
            let relaxed = LyapunovCertificate {
                u: &u,
                growth,
                sigma,
                floor: 1.0,
            };
            assert!(
                lyapunov_check(&states, &transitions, &alpha, &[(0usize, 1.0)], &relaxed).passed,
                "relaxing to C = {growth}, sigma = {sigma} must not fail"
            );
        }
    }

    #[test]
    fn exponential_potential_certificate_checks_pointwise() {
        // V(x) = x^2 on Z, U = e^{V/2}: the drift inequality holds with a
        // moderate C because downhill moves dominate at large |x|.
        let model = ConfiningPotentialModel::new(1, 12, |x| (x[0] * x[0]) as f64).unwrap();
        let states: Vec<Vec<i64>> = (0..model.len()).map(|i| model.site_coords(i)).collect();
        let transitions = |x: &Vec<i64>| model.lattice_transitions(x);
        let u = |x: &Vec<i64>| (model.potential(x) / 2.0).exp();
        let cert = LyapunovCertificate {
            u: &u,
            growth: 3.0,
            sigma: 0.5,
            floor: 1.0,
        };
        let report = lyapunov_check(
            &states,
            &transitions,
            &|_: &Vec<i64>, _: &Vec<i64>| 1.0,
            &[(vec![0i64], 1.0)],
            &cert,
        );
        assert!(report.passed, "items: {:?}", report.items);

        // alpha = 0 reduces the drift item to the plain Lyapunov inequality,
        // so sigma is arbitrary.
        let huge_sigma = LyapunovCertificate {
            u: &u,
            growth: 3.0,
            sigma: 1e9,
            floor: 1.0,
        };
        let plain = lyapunov_check(
            &states,
            &transitions,
            &|_: &Vec<i64>, _: &Vec<i64>| 0.0,
            &[(vec![0i64], 1.0)],
            &huge_sigma,
        );
        assert!(plain.passed);
    }

    fn two_state_alpha() -> Perturbation {
        Perturbation::Decoupled {
            profile: TimeProfile::Constant(1.0),
            field: EdgeField::from_triples(2, &[(0, 1, 1.0), (1, 0, -1.0)]).unwrap(),
        }
    }

    fn two_state_rates() -> RateMatrix {
        RateMatrix::from_triples(
            StateSpace::of_size(2).unwrap(),
            &[(0, 1, 2.0), (1, 0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn zero_tilt_moment_is_exactly_one() {
        let rates = two_state_rates();
        let alpha = Perturbation::Decoupled {
            profile: TimeProfile::Constant(0.0),
            field: EdgeField::from_triples(2, &[(0, 1, 1.0)]).unwrap(),
        };
        let params = McParams::new(1.0, 2_000, 7);
        let report = exp_moment_mc(&rates, &[1.0, 0.0], &alpha, 0.7, &params).unwrap();
        assert_eq!(report.integral.value, 1.0);
        assert_eq!(report.integral.stderr, 0.0);
        assert_eq!(report.jump_sum.value, 1.0);
    }

    #[test]
    fn bounded_contraction_respects_the_deterministic_envelope() {
        // |alpha|_r <= max(2, 1) = 2, so the moment is at most e^{theta * 2 * t}.
        let rates = two_state_rates();
        let params = McParams::new(1.5, 4_000, 11);
        let theta = 0.4;
        let report =
            exp_moment_mc(&rates, &[0.5, 0.5], &two_state_alpha(), theta, &params).unwrap();
        let envelope = (theta * 2.0 * params.t).exp();
        assert!(report.integral.value <= envelope + 1e-12);
        assert!(report.integral.value >= 1.0);
        // Jumps happen at finite rate, so the jump-sum moment is finite too.
        assert!(report.jump_sum.value.is_finite());
        assert!(report.jump_sum.value >= 1.0);
    }

    #[test]
    fn oversized_tilt_trips_the_heavy_tail_guard() {
        // Starting in the slow state makes near-maximal contraction integrals
        // rare, so at theta = 25 the sample mean is carried by a thin tail.
        let rates = two_state_rates();
        let params = McParams::new(1.0, 5_000, 13);
        let result = exp_moment_mc(&rates, &[0.0, 1.0], &two_state_alpha(), 25.0, &params);
        assert!(matches!(result, Err(Error::HeavyTailWarning { .. })));
    }

    #[test]
    fn theta_scan_reports_the_largest_reliable_tilt() {
        let rates = two_state_rates();
        let params = McParams::new(1.0, 5_000, 13);
        let scan = exp_moment_scan(
            &rates,
            &[0.0, 1.0],
            &two_state_alpha(),
            &[0.05, 0.2, 25.0],
            &params,
        );
        assert_eq!(scan.best_theta, Some(0.2));
        assert!(matches!(scan.outcomes[0], ScanOutcome::Reliable(_)));
        assert!(matches!(scan.outcomes[1], ScanOutcome::Reliable(_)));
        assert!(matches!(scan.outcomes[2], ScanOutcome::HeavyTail { .. }));
    }

    #[test]
    fn confining_stationary_mass_concentrates_and_is_truncation_stable() {
        let small = ConfiningPotentialModel::new(1, 8, |x| (x[0] * x[0]) as f64).unwrap();
        let large = ConfiningPotentialModel::new(1, 16, |x| (x[0] * x[0]) as f64).unwrap();
        let origin_small = small.chain().pi().prob(small.site_index(&[0]).unwrap());
        let origin_large = large.chain().pi().prob(large.site_index(&[0]).unwrap());
        assert!(
            (origin_small - origin_large).abs() / origin_large < 0.01,
            "{origin_small} vs {origin_large}"
        );
        let sums = large.partition_partial_sums(&[4, 8, 16]);
        assert!(sums.windows(2).all(|w| w[1] >= w[0]));
        assert!((sums[2] - sums[1]).abs() < 1e-9 * sums[2]);
    }

    #[test]
    fn exp_moment_is_stable_under_box_doubling() {
        let alpha_field = |d: usize, n: usize, model: &ConfiningPotentialModel| {
            let mut triples = Vec::new();
            for idx in 0..n {
                let x = model.site_coords(idx);
                for j in 0..d {
                    for step in [1i64, -1] {
                        let mut y = x.clone();
                        y[j] += step;
                        if let Some(to) = model.site_index(&y) {
                            triples.push((idx, to, 1.0));
                        }
                    }
                }
            }
            EdgeField::from_triples(n, &triples).unwrap()
        };
        let mut values = Vec::new();
        for radius in [8usize, 16] {
            let model = ConfiningPotentialModel::new(1, radius, |x| (x[0] * x[0]) as f64).unwrap();
            let alpha = Perturbation::Decoupled {
                profile: TimeProfile::Constant(1.0),
                field: alpha_field(1, model.len(), &model),
            };
            let mut nu = vec![0.0; model.len()];
            nu[model.site_index(&[0]).unwrap()] = 1.0;
            let params = McParams::new(1.0, 4_000, 17);
            let report = exp_moment_mc(model.chain().rates(), &nu, &alpha, 0.3, &params).unwrap();
            values.push(report.integral.value);
        }
        assert!(
            (values[0] - values[1]).abs() / values[1] < 0.01,
            "{} vs {}",
            values[0],
            values[1]
        );
    }

    #[test]
    fn edge_sum_criterion_recognizes_the_three_designed_cases() {
        let model = ConfiningPotentialModel::new(2, 10, |x| (x[0] * x[0] + x[1] * x[1]) as f64)
            .unwrap();
        // E = 0: sup is identically zero.
        let zero = confining_check(&model, &|_: &[i64], _: &[i64]| 0.0);
        assert!(zero.plateaued);
        assert_eq!(*zero.running_max.last().unwrap(), 0.0);

        // E = exp{(W(y) - W(x))/2} with W = V: every edge term is exactly 1,
        // so the sum is 2d everywhere.
        let matched = confining_check(&model, &|x: &[i64], y: &[i64]| {
            let w = |z: &[i64]| (z[0] * z[0] + z[1] * z[1]) as f64;
            ((w(y) - w(x)) / 2.0).exp()
        });
        assert!(matched.plateaued);
        for &m in &matched.running_max {
            assert!((m - 4.0).abs() < 1e-12);
        }

        // W = 2V: the increment gap grows with the radius and is flagged.
        let growing = confining_check(&model, &|x: &[i64], y: &[i64]| {
            let w = |z: &[i64]| 2.0 * (z[0] * z[0] + z[1] * z[1]) as f64;
            ((w(y) - w(x)) / 2.0).exp()
        });
        assert!(!growing.plateaued);
        let rm = &growing.running_max;
        assert!(rm.last().unwrap() > &(2.0 * rm[rm.len() / 2]));
    }

    #[test]
    fn invalid_zoo_parameters_are_rejected() {
        assert!(BirthDeathModel::constant(0, 1.0, 1.0).is_err());
        assert!(matches!(
            BirthDeathModel::new(10, |_| 1.0, |k| if k == 5 { 0.0 } else { 1.0 }),
            Err(Error::NonPositiveRate { from: 5, to: 4, .. })
        ));
        assert!(ConfiningPotentialModel::new(4, 5, |_| 0.0).is_err());
        assert!(ConfiningPotentialModel::new(2, 0, |_| 0.0).is_err());
        let rates = two_state_rates();
        let params = McParams::new(1.0, 100, 1);
        assert!(exp_moment_mc(&rates, &[1.0, 0.0], &two_state_alpha(), -1.0, &params).is_err());
    }
}
