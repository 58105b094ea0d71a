//! Declared time profiles.
//!
//! Time dependence enters perturbations and observables only through members of
//! this closed family, so sup bounds, primitives, and Fourier coefficients are
//! available in closed form rather than being inferred numerically.

use crate::{C64, Error, Result};

const TWO_PI: f64 = std::f64::consts::TAU;

/// A real-valued function of time from a closed family.
#[derive(Debug, Clone)]
pub enum TimeProfile {
    /// `tau(t) = value`.
    Constant(f64),
    /// `tau(t) = amplitude * cos(omega * t)`.
    Cosine { amplitude: f64, omega: f64 },
    /// Real trigonometric polynomial `tau(t) = sum_k c_k exp(i k 2 pi t / period)`;
    /// coefficients are stored for `k >= 0` and extended by conjugate symmetry.
    Fourier {
        period: f64,
        /// `(k, c_k)` with distinct `k >= 0`; `c_0` must be real.
        coefficients: Vec<(u32, C64)>,
    },
}

impl TimeProfile {
    /// Validated trigonometric polynomial. `c_0` (if present) must be real.
    pub fn fourier(period: f64, coefficients: Vec<(u32, C64)>) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Fourier profile needs a positive period, got {period}"
            )));
        }
        let mut ks: Vec<u32> = coefficients.iter().map(|&(k, _)| k).collect();
        ks.sort_unstable();
        if ks.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(
                "duplicate harmonic in Fourier profile".into(),
            ));
        }
        for &(k, c) in &coefficients {
            if k == 0 && c.im.abs() > 0.0 {
                return Err(Error::InvalidParameter(
                    "constant Fourier coefficient must be real".into(),
                ));
            }
        }
        Ok(Self::Fourier { period, coefficients })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Cosine { amplitude, omega } => amplitude * (omega * t).cos(),
            Self::Fourier { period, coefficients } => {
                let w0 = TWO_PI / period;
                coefficients
                    .iter()
                    .map(|&(k, c)| {
                        if k == 0 {
                            c.re
                        } else {
                            // c_k e^{ik w0 t} + conj, which is 2 Re(...).
                            2.0 * (c * C64::new(0.0, k as f64 * w0 * t).exp()).re
                        }
                    })
                    .sum()
            }
        }
    }

    /// Exact primitive: `int_a^b tau(s) ds`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Self::Constant(c) => c * (b - a),
            Self::Cosine { amplitude, omega } => {
                if omega.abs() == 0.0 {
                    amplitude * (b - a)
                } else {
                    amplitude * ((omega * b).sin() - (omega * a).sin()) / omega
                }
            }
            Self::Fourier { period, coefficients } => {
                let w0 = TWO_PI / period;
                coefficients
                    .iter()
                    .map(|&(k, c)| {
                        if k == 0 {
                            c.re * (b - a)
                        } else {
                            let ikw = C64::new(0.0, k as f64 * w0);
                            let anti = ((ikw * b).exp() - (ikw * a).exp()) / ikw;
                            2.0 * (c * anti).re
                        }
                    })
                    .sum()
            }
        }
    }

    /// A valid upper bound on `sup_t |tau(t)|`, exact for `Constant` and
    /// `Cosine` and the triangle-inequality bound for `Fourier`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            Self::Constant(c) => c.abs(),
            Self::Cosine { amplitude, .. } => amplitude.abs(),
            Self::Fourier { coefficients, .. } => coefficients
                .iter()
                .map(|&(k, c)| if k == 0 { c.norm() } else { 2.0 * c.norm() })
                .sum(),
        }
    }

    /// True when the profile does not depend on time; segment integrals of
    /// derived quantities then have closed forms.
    pub fn is_constant(&self) -> bool {
        match self {
            Self::Constant(_) => true,
            Self::Cosine { amplitude, omega } => *amplitude == 0.0 || *omega == 0.0,
            Self::Fourier { coefficients, .. } => {
                coefficients.iter().all(|&(k, c)| k == 0 || c.norm() == 0.0)
            }
        }
    }

    /// Fourier coefficient `c_k = (1/T) int_0^T tau(t) e^{-i k 2 pi t / T} dt`
    /// with respect to a stated period `T`, or an error if the profile is not
    /// `T`-periodic (cosine frequency not a harmonic of `2 pi / T`, mismatched
    /// declared period).
    pub fn fourier_coefficient(&self, k: i64, period: f64) -> Result<C64> {
        match self {
            Self::Constant(c) => Ok(if k == 0 { C64::new(*c, 0.0) } else { C64::ZERO }),
            Self::Cosine { amplitude, omega } => {
                if *omega == 0.0 {
                    return Ok(if k == 0 {
                        C64::new(*amplitude, 0.0)
                    } else {
                        C64::ZERO
                    });
                }
                let m = omega * period / TWO_PI;
                let m_round = m.round();
                if (m - m_round).abs() > 1e-9 || m_round <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "cosine frequency {omega} is not a positive harmonic of 2 pi / {period}"
                    )));
                }
                Ok(if k.unsigned_abs() as f64 == m_round {
                    C64::new(amplitude / 2.0, 0.0)
                } else {
                    C64::ZERO
                })
            }
            Self::Fourier { period: p, coefficients } => {
                if (p - period).abs() > 1e-12 * period.abs() {
                    return Err(Error::InvalidParameter(format!(
                        "Fourier profile period {p} does not match driving period {period}"
                    )));
                }
                let ka = k.unsigned_abs() as u32;
                let c = coefficients
                    .iter()
                    .find(|&&(kk, _)| kk == ka)
                    .map(|&(_, c)| c)
                    .unwrap_or(C64::ZERO);
                Ok(if k >= 0 { c } else { c.conj() })
            }
        }
    }

    /// Harmonics `k >= 0` at which the profile can have nonzero coefficients
    /// relative to period `T`.
    pub fn harmonics(&self, period: f64) -> Result<Vec<u32>> {
        match self {
            Self::Constant(_) => Ok(vec![0]),
            Self::Cosine { amplitude, omega } => {
                if *amplitude == 0.0 {
                    return Ok(vec![]);
                }
                if *omega == 0.0 {
                    return Ok(vec![0]);
                }
                let m = omega * period / TWO_PI;
                let m_round = m.round();
                if (m - m_round).abs() > 1e-9 || m_round <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "cosine frequency {omega} is not a positive harmonic of 2 pi / {period}"
                    )));
                }
                Ok(vec![m_round as u32])
            }
            Self::Fourier { coefficients, .. } => {
                self.fourier_coefficient(0, period)?; // validates the period
                Ok(coefficients
                    .iter()
                    .filter(|&&(_, c)| c.norm() > 0.0)
                    .map(|&(k, _)| k)
                    .collect())
            }
        }
    }
}
