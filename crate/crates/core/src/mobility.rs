//! Complex mobility of nearest-neighbor random walks on the discrete torus.
//!
//! For a walk on `(Z/N)^d` with channel rates `r(x, x +- e_j) > 0`, an
//! oscillating tilt `r e^{lambda cos(omega t) (y - x) . v}` drives a mean
//! instantaneous velocity whose derivative at `lambda = 0` is
//! `Re(e^{i omega t} sigma(omega) v)` with the complex mobility matrix
//!
//! `sigma_{jk}(omega) = pi[c_j] delta_{jk} + <gamma_j, (i omega - L*)^{-1} Psi_k>`,
//!
//! where `c_j = r(x, x+e_j) + r(x, x-e_j)`, `gamma_j = r(x, x+e_j) - r(x, x-e_j)`,
//! and `Psi(x) = -sum_{|e|=1} (r*(x, x+e) + r(x, x+e)) e` is the mean-zero
//! drift-mismatch field of the time reversal (coordinate-wise, `Psi_j` is the
//! response field of the linear edge observable `(y - x) . e_j`). For
//! reversible walks `Psi = -2 gamma` and the equivalent form
//! `sigma_{jk} = pi[c_j] delta_{jk} - 2 <gamma_j, (i omega - L)^{-1} gamma_k>`
//! makes the symmetry of `sigma` explicit. On the 2-periodic 1D ring the
//! matrix reduces to the closed form implemented by
//! [`mobility_closed_form_two_periodic`], the exact oracle of the test suite.

use rayon::prelude::*;

use crate::expm::Propagator;
use crate::oss::{estimate_gap, monodromy, oss_distribution};
use crate::paths::{sample_index, simulate_inhomogeneous, RngStream, DEFAULT_JUMP_CAP};
use crate::perturb::{EdgeField, PerturbedKernel, Perturbation};
use crate::profile::TimeProfile;
use crate::quad::integrate_c64;
use crate::resolvent::{solve_restricted, ShiftedSystem};
use crate::{Error, RateMatrix, Result, StateSpace, StationaryChain, C64};

/// Agreement demanded between the resolvent mobility and its oracles.
pub const MOBILITY_ORACLE_TOL: f64 = 1e-10;

/// Nearest-neighbor random walk on `(Z/N)^d` with per-channel rates and the
/// derived mobility fields.
#[derive(Debug)]
pub struct TorusModel {
    d: usize,
    side: usize,
    chain: StationaryChain,
    /// `rate_up[j][x] = r(x, x + e_j)`.
    rate_up: Vec<Vec<f64>>,
    /// `rate_down[j][x] = r(x, x - e_j)`.
    rate_down: Vec<Vec<f64>>,
    /// Channel rates of the time reversal, from `pi` by brute force.
    rev_up: Vec<Vec<f64>>,
    rev_down: Vec<Vec<f64>>,
    /// `c[j][x]`, `gamma[j][x]`, `psi[j][x]` as defined in the module docs.
    c: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
    psi: Vec<Vec<f64>>,
}

impl TorusModel {
    /// Build from an arbitrary channel-rate function
    /// `rate(coords, axis, up) = r(x, x +- e_axis)`.
    pub fn from_rates(
        d: usize,
        side: usize,
        rate: impl Fn(&[usize], usize, bool) -> f64,
    ) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "torus dimension must be 1, 2, or 3, got {d}"
            )));
        }
        if side < 2 {
            return Err(Error::InvalidParameter(format!(
                "torus side must be at least 2, got {side}"
            )));
        }
        let n = side.pow(d as u32);
        let coords_of = |mut idx: usize| -> Vec<usize> {
            let mut c = vec![0usize; d];
            for slot in c.iter_mut() {
                *slot = idx % side;
                idx /= side;
            }
            c
        };
        let index_of = |c: &[usize]| -> usize {
            c.iter().rev().fold(0usize, |acc, &v| acc * side + v)
        };
        let mut rate_up = vec![vec![0.0; n]; d];
        let mut rate_down = vec![vec![0.0; n]; d];
        // Accumulate merged kernel rates: on side 2 both channels of an axis
        // reach the same neighbor and their rates add.
        let mut merged: std::collections::BTreeMap<(usize, usize), f64> =
            std::collections::BTreeMap::new();
        for x in 0..n {
            let cx = coords_of(x);
            for j in 0..d {
                for up in [true, false] {
                    let r = rate(&cx, j, up);
                    let mut cy = cx.clone();
                    cy[j] = if up {
                        (cx[j] + 1) % side
                    } else {
                        (cx[j] + side - 1) % side
                    };
                    let y = index_of(&cy);
                    if !(r > 0.0) || !r.is_finite() {
                        return Err(Error::NonPositiveRate {
                            from: x,
                            to: y,
                            rate: r,
                        });
                    }
                    if up {
                        rate_up[j][x] = r;
                    } else {
                        rate_down[j][x] = r;
                    }
                    *merged.entry((x, y)).or_insert(0.0) += r;
                }
            }
        }
        let triples: Vec<(usize, usize, f64)> =
            merged.into_iter().map(|((x, y), r)| (x, y, r)).collect();
        let space = StateSpace::of_size(n)?;
        let chain = StationaryChain::new(RateMatrix::from_triples(space, &triples)?)?;
        // Channel-wise time reversal: the reversed walk crosses the up channel
        // of (x, j) at rate pi(x + e_j) r(x + e_j, x) / pi(x), where the
        // return rate is the down channel at the neighbor.
        let pi = chain.pi();
        let mut rev_up = vec![vec![0.0; n]; d];
        let mut rev_down = vec![vec![0.0; n]; d];
        for x in 0..n {
            let cx = coords_of(x);
            for j in 0..d {
                let mut cu = cx.clone();
                cu[j] = (cx[j] + 1) % side;
                let yu = index_of(&cu);
                rev_up[j][x] = pi.prob(yu) * rate_down[j][yu] / pi.prob(x);
                let mut cd = cx.clone();
                cd[j] = (cx[j] + side - 1) % side;
                let yd = index_of(&cd);
                rev_down[j][x] = pi.prob(yd) * rate_up[j][yd] / pi.prob(x);
            }
        }
        let mut c = vec![vec![0.0; n]; d];
        let mut gamma = vec![vec![0.0; n]; d];
        let mut psi = vec![vec![0.0; n]; d];
        for j in 0..d {
            for x in 0..n {
                c[j][x] = rate_up[j][x] + rate_down[j][x];
                gamma[j][x] = rate_up[j][x] - rate_down[j][x];
                psi[j][x] = (rev_down[j][x] + rate_down[j][x])
                    - (rev_up[j][x] + rate_up[j][x]);
            }
        }
        Ok(Self {
            d,
            side,
            chain,
            rate_up,
            rate_down,
            rev_up,
            rev_down,
            c,
            gamma,
            psi,
        })
    }

    /// Spatially homogeneous rates `r(x, x + e_j) = up[j]`, `r(x, x - e_j) = down[j]`.
    pub fn homogeneous(d: usize, side: usize, up: &[f64], down: &[f64]) -> Result<Self> {
        if up.len() != d || down.len() != d {
            return Err(Error::InvalidParameter(
                "one up and one down rate per axis required".into(),
            ));
        }
        Self::from_rates(d, side, |_, j, is_up| if is_up { up[j] } else { down[j] })
    }

    /// 1D ring whose rates alternate with site parity; `side` must be even so
    /// the pattern closes.
    pub fn two_periodic(
        side: usize,
        r0: (f64, f64),
        r1: (f64, f64),
    ) -> Result<Self> {
        if side % 2 != 0 {
            return Err(Error::InvalidParameter(
                "2-periodic rates need an even ring size".into(),
            ));
        }
        Self::from_rates(1, side, |coords, _, up| {
            let (plus, minus) = if coords[0] % 2 == 0 { r0 } else { r1 };
            if up {
                plus
            } else {
                minus
            }
        })
    }

    /// Symmetric random conductances, i.i.d. uniform on `(0, upper]` per
    /// undirected edge, drawn deterministically from `seed`. The walk is
    /// reversible with uniform stationary distribution.
    pub fn conductances(d: usize, side: usize, upper: f64, seed: u64) -> Result<Self> {
        if side < 3 {
            return Err(Error::InvalidParameter(
                "conductance sampling needs side >= 3 (distinct channel endpoints)".into(),
            ));
        }
        if !(upper > 0.0) {
            return Err(Error::InvalidParameter(
                "conductance upper bound must be positive".into(),
            ));
        }
        let n = side.pow(d as u32);
        let index_of = |c: &[usize]| -> usize {
            c.iter().rev().fold(0usize, |acc, &v| acc * side + v)
        };
        // One conductance per undirected edge (x, x + e_j), enumerated in a
        // fixed order.
        let mut rng = RngStream::new(seed, 0);
        let mut xi = vec![vec![0.0; n]; d];
        for x in 0..n {
            for row in xi.iter_mut() {
                row[x] = upper * (1.0 - rng.uniform());
            }
        }
        Self::from_rates(d, side, move |coords, j, up| {
            if up {
                xi[j][index_of(coords)]
            } else {
                let mut cd = coords.to_vec();
                cd[j] = (coords[j] + side - 1) % side;
                xi[j][index_of(&cd)]
            }
        })
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.side
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

    pub fn site_index(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0usize, |acc, &v| acc * self.side + v)
    }

    pub fn site_coords(&self, mut idx: usize) -> Vec<usize> {
        let mut c = vec![0usize; self.d];
        for slot in c.iter_mut() {
            *slot = idx % self.side;
            idx /= self.side;
        }
        c
    }

    pub fn channel_rate(&self, x: usize, axis: usize, up: bool) -> f64 {
        if up {
            self.rate_up[axis][x]
        } else {
            self.rate_down[axis][x]
        }
    }

    pub fn reversed_channel_rate(&self, x: usize, axis: usize, up: bool) -> f64 {
        if up {
            self.rev_up[axis][x]
        } else {
            self.rev_down[axis][x]
        }
    }

    /// `c_j` as a function of the site.
    pub fn c_field(&self, j: usize) -> &[f64] {
        &self.c[j]
    }

    /// `gamma_j` as a function of the site.
    pub fn gamma_field(&self, j: usize) -> &[f64] {
        &self.gamma[j]
    }

    /// `Psi_j` as a function of the site (mean-zero under `pi`).
    pub fn psi_field(&self, j: usize) -> &[f64] {
        &self.psi[j]
    }

    /// Channel-wise detailed balance: the walk is reversible iff the reversed
    /// channel rates reproduce the forward ones.
    pub fn is_reversible(&self) -> bool {
        for j in 0..self.d {
            for x in 0..self.len() {
                let scale = self.rate_up[j][x].max(self.rate_down[j][x]).max(1.0);
                if (self.rev_up[j][x] - self.rate_up[j][x]).abs() > 1e-10 * scale
                    || (self.rev_down[j][x] - self.rate_down[j][x]).abs() > 1e-10 * scale
                {
                    return false;
                }
            }
        }
        true
    }

    /// The edge observable `E(x, y) = (y - x) . v` of a drift tilt along `v`
    /// (displacement read channel-wise, so `side >= 3` is required to keep the
    /// two channels of an axis distinguishable).
    pub fn direction_field(&self, v: &[f64]) -> Result<EdgeField> {
        if v.len() != self.d {
            return Err(Error::InvalidParameter(
                "direction vector must have one entry per axis".into(),
            ));
        }
        if self.side < 3 {
            return Err(Error::InvalidParameter(
                "drift tilts need side >= 3 (distinct channel endpoints)".into(),
            ));
        }
        let n = self.len();
        let mut triples = Vec::new();
        for x in 0..n {
            let cx = self.site_coords(x);
            for j in 0..self.d {
                if v[j] == 0.0 {
                    continue;
                }
                let mut cu = cx.clone();
                cu[j] = (cx[j] + 1) % self.side;
                triples.push((x, self.site_index(&cu), v[j]));
                let mut cd = cx.clone();
                cd[j] = (cx[j] + self.side - 1) % self.side;
                triples.push((x, self.site_index(&cd), -v[j]));
            }
        }
        EdgeField::from_triples(n, &triples)
    }

    /// Mean instantaneous velocity observable of the tilted walk at time `t`:
    /// coordinate `j` of `sum_{|e|=1} e r(x, x+e) e^{lambda g(t, x, x+e)}`.
    fn instantaneous_velocity(
        &self,
        x: usize,
        t: f64,
        g: &Perturbation,
        lambda: f64,
    ) -> Vec<f64> {
        let cx = self.site_coords(x);
        (0..self.d)
            .map(|j| {
                let mut cu = cx.clone();
                cu[j] = (cx[j] + 1) % self.side;
                let mut cd = cx.clone();
                cd[j] = (cx[j] + self.side - 1) % self.side;
                let up = self.rate_up[j][x]
                    * (lambda * g.eval(t, x, self.site_index(&cu))).exp();
                let down = self.rate_down[j][x]
                    * (lambda * g.eval(t, x, self.site_index(&cd))).exp();
                up - down
            })
            .collect()
    }
}

/// The complex mobility matrix at one frequency.
#[derive(Debug, Clone)]
pub struct MobilityMatrix {
    pub omega: f64,
    /// Row `j`, column `k`: response of the `j`-th velocity component to a
    /// tilt along `e_k`.
    pub entries: Vec<Vec<C64>>,
    /// True when `omega = 0` forced the restricted (mean-zero subspace)
    /// resolvent extension.
    pub restricted: bool,
}

impl MobilityMatrix {
    pub fn dimension(&self) -> usize {
        self.entries.len()
    }

    /// `sigma(omega) v` for a real direction `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<C64> {
        self.entries
            .iter()
            .map(|row| row.iter().zip(v).map(|(s, &vk)| s * vk).sum())
            .collect()
    }

    /// `max_{jk} |sigma_{jk} - sigma_{kj}|`.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.dimension();
        let mut worst = 0.0f64;
        for j in 0..d {
            for k in 0..d {
                worst = worst.max((self.entries[j][k] - self.entries[k][j]).norm());
            }
        }
        worst
    }
}

/// `sigma_{jk}(omega) = pi[c_j] delta_{jk} + <gamma_j, (i omega - L*)^{-1} Psi_k>`
/// by one shifted adjoint solve per column (restricted resolvent at `omega = 0`).
pub fn mobility(model: &TorusModel, omega: f64) -> Result<MobilityMatrix> {
    let chain = model.chain();
    let pi = chain.pi().as_slice();
    let d = model.dimension();
    let restricted = omega == 0.0;
    let mut columns = Vec::with_capacity(d);
    for k in 0..d {
        let rhs: Vec<C64> = model
            .psi_field(k)
            .iter()
            .map(|&v| C64::new(v, 0.0))
            .collect();
        let solved = if restricted {
            solve_restricted(chain.reversed(), pi, &rhs)?
        } else {
            ShiftedSystem::new(chain.reversed(), C64::new(0.0, omega)).solve(&rhs)?
        };
        columns.push(solved);
    }
    let mut entries = vec![vec![C64::ZERO; d]; d];
    for j in 0..d {
        let mean_c: f64 = pi
            .iter()
            .zip(model.c_field(j))
            .map(|(&p, &v)| p * v)
            .sum();
        for k in 0..d {
            let inner: C64 = pi
                .iter()
                .zip(model.gamma_field(j).iter().zip(&columns[k]))
                .map(|(&p, (&g, y))| p * g * y)
                .sum();
            entries[j][k] = inner + if j == k { C64::new(mean_c, 0.0) } else { C64::ZERO };
        }
    }
    Ok(MobilityMatrix {
        omega,
        entries,
        restricted,
    })
}

/// The reversible-only equivalent form
/// `sigma_{jk} = pi[c_j] delta_{jk} - 2 <gamma_j, (i omega - L)^{-1} gamma_k>`
/// (forward generator). Rejects non-reversible models.
pub fn mobility_reversible_form(model: &TorusModel, omega: f64) -> Result<MobilityMatrix> {
    if !model.is_reversible() {
        return Err(Error::InvalidParameter(
            "the gamma-only mobility form requires a reversible walk".into(),
        ));
    }
    let chain = model.chain();
    let pi = chain.pi().as_slice();
    let d = model.dimension();
    let restricted = omega == 0.0;
    let mut columns = Vec::with_capacity(d);
    for k in 0..d {
        let rhs: Vec<C64> = model
            .gamma_field(k)
            .iter()
            .map(|&v| C64::new(v, 0.0))
            .collect();
        let solved = if restricted {
            solve_restricted(chain.rates(), pi, &rhs)?
        } else {
            ShiftedSystem::new(chain.rates(), C64::new(0.0, omega)).solve(&rhs)?
        };
        columns.push(solved);
    }
    let mut entries = vec![vec![C64::ZERO; d]; d];
    for j in 0..d {
        let mean_c: f64 = pi
            .iter()
            .zip(model.c_field(j))
            .map(|(&p, &v)| p * v)
            .sum();
        for k in 0..d {
            let inner: C64 = pi
                .iter()
                .zip(model.gamma_field(j).iter().zip(&columns[k]))
                .map(|(&p, (&g, y))| p * g * y)
                .sum();
            entries[j][k] =
                -2.0 * inner + if j == k { C64::new(mean_c, 0.0) } else { C64::ZERO };
        }
    }
    Ok(MobilityMatrix {
        omega,
        entries,
        restricted,
    })
}

/// Exact mobility of the 2-periodic 1D ring with rates `r0 = (r0+, r0-)` on
/// even and `r1 = (r1+, r1-)` on odd sites:
/// `(c0 c1/(c0 + c1)) [2 + (gamma1/c1 - gamma0/c0)(gamma0 - gamma1)/(i omega + c0 + c1)]`.
pub fn mobility_closed_form_two_periodic(r0: (f64, f64), r1: (f64, f64), omega: f64) -> C64 {
    let (c0, g0) = (r0.0 + r0.1, r0.0 - r0.1);
    let (c1, g1) = (r1.0 + r1.1, r1.0 - r1.1);
    let prefactor = c0 * c1 / (c0 + c1);
    let bracket = C64::new(2.0, 0.0)
        + (g1 / c1 - g0 / c0) * (g0 - g1) / C64::new(c0 + c1, omega);
    prefactor * bracket
}

/// `d/dlambda` of the mean instantaneous velocity in the oscillatory steady
/// state: `Re(e^{i omega t} sigma(omega) v)`.
pub fn velocity_response(
    model: &TorusModel,
    omega: f64,
    v: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let sigma = mobility(model, omega)?;
    let phase = C64::from_polar(1.0, omega * t);
    Ok(sigma.apply(v).into_iter().map(|z| (phase * z).re).collect())
}

/// A per-coordinate Monte-Carlo estimate with standard errors.
#[derive(Debug, Clone)]
pub struct VelocityFdEstimate {
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: u64,
    pub seed: u64,
    pub lambda: f64,
}

/// Finite-difference Monte-Carlo estimate of `d/dlambda V_lambda(t)`: the
/// tilted walk is simulated in its oscillatory steady state at `+-lambda`
/// with common random numbers (same streams, inverse-CDF-coupled starts), and
/// the instantaneous velocities at time `t` are differenced pathwise.
pub fn velocity_fd_mc(
    model: &TorusModel,
    omega: f64,
    v: &[f64],
    lambda: f64,
    t: f64,
    n: u64,
    seed: u64,
) -> Result<VelocityFdEstimate> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter(
            "the oscillatory steady state needs omega > 0".into(),
        ));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(
            "finite differences need lambda > 0".into(),
        ));
    }
    let field = model.direction_field(v)?;
    let g = Perturbation::Decoupled {
        profile: TimeProfile::Cosine {
            amplitude: 1.0,
            omega,
        },
        field,
    };
    let period = 2.0 * std::f64::consts::PI / omega;
    let rates = model.chain().rates();
    let pi_plus = oss_distribution(&monodromy(rates, &g, lambda, period)?)?;
    let pi_minus = oss_distribution(&monodromy(rates, &g, -lambda, period)?)?;
    let kernel_plus = PerturbedKernel::new(rates, &g, lambda)?;
    let kernel_minus = PerturbedKernel::new(rates, &g, -lambda)?;
    let d = model.dimension();
    let diffs: Vec<Option<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng_p = RngStream::new(seed, i);
            let mut rng_m = RngStream::new(seed, i);
            let u0 = rng_p.uniform();
            let _ = rng_m.uniform();
            let x0p = sample_index(&pi_plus, u0);
            let x0m = sample_index(&pi_minus, u0);
            let tp = simulate_inhomogeneous(&kernel_plus, x0p, t, &mut rng_p, DEFAULT_JUMP_CAP);
            let tm = simulate_inhomogeneous(&kernel_minus, x0m, t, &mut rng_m, DEFAULT_JUMP_CAP);
            if tp.truncated || tm.truncated {
                return None;
            }
            let vp = model.instantaneous_velocity(tp.terminal(), t, &g, lambda);
            let vm = model.instantaneous_velocity(tm.terminal(), t, &g, -lambda);
            Some(
                vp.into_iter()
                    .zip(vm)
                    .map(|(a, b)| (a - b) / (2.0 * lambda))
                    .collect(),
            )
        })
        .collect();
    let truncated = diffs.iter().filter(|o| o.is_none()).count();
    if truncated as f64 > 1e-3 * n as f64 {
        return Err(Error::TruncatedPathsExceeded {
            truncated,
            total: n as usize,
            tolerated: 1e-3,
        });
    }
    let kept: Vec<Vec<f64>> = diffs.into_iter().flatten().collect();
    let m = kept.len() as f64;
    let mut value = vec![0.0; d];
    let mut stderr = vec![0.0; d];
    for j in 0..d {
        let mean = kept.iter().map(|row| row[j]).sum::<f64>() / m;
        let var = kept
            .iter()
            .map(|row| (row[j] - mean).powi(2))
            .sum::<f64>()
            / (m - 1.0);
        value[j] = mean;
        stderr[j] = (var / m).sqrt();
    }
    Ok(VelocityFdEstimate {
        value,
        stderr,
        n: kept.len() as u64,
        seed,
        lambda,
    })
}

/// Time-domain form of the mobility coupling term,
/// `int_0^inf e^{-i omega s} <gamma_j, e^{sL*} Psi_k> ds`, truncated with the
/// empirical gap certificate. Used to cross-check the resolvent solve.
pub fn mobility_coupling_by_quadrature(
    model: &TorusModel,
    omega: f64,
    j: usize,
    k: usize,
    tail_tol: f64,
) -> Result<C64> {
    let chain = model.chain();
    let gap = estimate_gap(chain)?;
    let scale = chain.norm(model.gamma_field(j)) * chain.norm(model.psi_field(k));
    let horizon = gap.truncation_horizon(scale.max(1e-300), tail_tol);
    let prop = Propagator::new(chain.reversed());
    let gamma = model.gamma_field(j);
    let pi = chain.pi().as_slice();
    let psi_k = model.psi_field(k);
    let (value, _) = integrate_c64(
        |s| {
            let moved = prop.apply(s, psi_k);
            let inner: f64 = pi
                .iter()
                .zip(gamma.iter().zip(&moved))
                .map(|(&p, (&g, &m))| p * g * m)
                .sum();
            C64::from_polar(1.0, -omega * s) * inner
        },
        0.0,
        horizon,
        tail_tol.max(1e-12),
    );
    Ok(value)
}
