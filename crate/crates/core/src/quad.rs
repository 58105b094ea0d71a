//! Adaptive Simpson quadrature, scalar and vector valued.
//!
//! Classic recursive bisection with Richardson extrapolation: a panel is
//! accepted when the two-half refinement changes the Simpson value by less
//! than `15 * tol`, and the extrapolated value `S_2 + (S_2 - S_1) / 15` is
//! returned. The interval is pre-split into eight seed panels so narrow
//! features near panel midpoints are not missed at the first level.

const MAX_DEPTH: u32 = 48;
const SEED_PANELS: usize = 8;

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
/// Returns `(value, error_estimate)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (v, e) = integrate_vec(|t| vec![f(t)], a, b, tol);
    (v[0], e)
}

/// Integrate a complex-valued function by integrating real and imaginary parts
/// jointly under one subdivision.
pub fn integrate_c64<F: Fn(f64) -> num_complex::Complex64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> (num_complex::Complex64, f64) {
    let (v, e) = integrate_vec(
        |t| {
            let z = f(t);
            vec![z.re, z.im]
        },
        a,
        b,
        tol,
    );
    (num_complex::Complex64::new(v[0], v[1]), e)
}

/// Integrate a vector-valued function componentwise under a shared adaptive
/// subdivision; the error is controlled in the max norm.
pub fn integrate_vec<F: Fn(f64) -> Vec<f64>>(f: F, a: f64, b: f64, tol: f64) -> (Vec<f64>, f64) {
    if a == b {
        let dim = f(a).len();
        return (vec![0.0; dim], 0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let dim = f(lo).len();
    let mut total = vec![0.0; dim];
    let mut err = 0.0;
    let h = (hi - lo) / SEED_PANELS as f64;
    let panel_tol = tol / SEED_PANELS as f64;
    for i in 0..SEED_PANELS {
        let pa = lo + i as f64 * h;
        let pb = if i + 1 == SEED_PANELS { hi } else { pa + h };
        let pm = 0.5 * (pa + pb);
        let fa = f(pa);
        let fm = f(pm);
        let fb = f(pb);
        let whole = simpson(&fa, &fm, &fb, pb - pa);
        let (v, e) = adapt(&f, pa, pm, pb, &fa, &fm, &fb, &whole, panel_tol, MAX_DEPTH);
        for (t, x) in total.iter_mut().zip(&v) {
            *t += x;
        }
        err += e;
    }
    for t in &mut total {
        *t *= sign;
    }
    (total, err)
}

fn simpson(fa: &[f64], fm: &[f64], fb: &[f64], h: f64) -> Vec<f64> {
    fa.iter()
        .zip(fm.iter().zip(fb))
        .map(|(a, (m, b))| h / 6.0 * (a + 4.0 * m + b))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> Vec<f64>>(
    f: &F,
    a: f64,
    m: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: &[f64],
    tol: f64,
    depth: u32,
) -> (Vec<f64>, f64) {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, &flm, fm, m - a);
    let right = simpson(fm, &frm, fb, b - m);
    let delta: Vec<f64> = left
        .iter()
        .zip(right.iter().zip(whole))
        .map(|(l, (r, w))| l + r - w)
        .collect();
    let delta_norm = delta.iter().fold(0.0f64, |mx, d| mx.max(d.abs()));
    if depth == 0 || delta_norm <= 15.0 * tol {
        let value = left
            .iter()
            .zip(right.iter().zip(&delta))
            .map(|(l, (r, d))| l + r + d / 15.0)
            .collect();
        return (value, delta_norm / 15.0);
    }
    let (lv, le) = adapt(f, a, lm, m, fa, &flm, fm, &left, tol / 2.0, depth - 1);
    let (rv, re) = adapt(f, m, rm, b, fm, &frm, fb, &right, tol / 2.0, depth - 1);
    (
        lv.iter().zip(&rv).map(|(l, r)| l + r).collect(),
        le + re,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_near_exact() {
        let (v, e) = integrate(|t| 3.0 * t * t, 0.0, 2.0, 1e-12);
        assert!((v - 8.0).abs() < 1e-12, "got {v}, err {e}");
    }

    #[test]
    fn oscillatory_meets_tolerance() {
        let (v, _) = integrate(|t| (10.0 * t).cos() * (-t).exp(), 0.0, 5.0, 1e-11);
        // Exact: Re int e^{(10i - 1)t} = [e^{-t}(10 sin(10t) - cos(10t)) / 101]
        let anti = |t: f64| (-t).exp() * (10.0 * (10.0 * t).sin() - (10.0 * t).cos()) / 101.0;
        assert!((v - (anti(5.0) - anti(0.0))).abs() < 1e-10);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let (fwd, _) = integrate(|t| t.sin(), 0.0, 1.0, 1e-12);
        let (bwd, _) = integrate(|t| t.sin(), 1.0, 0.0, 1e-12);
        assert!((fwd + bwd).abs() < 1e-14);
    }

    #[test]
    fn kinked_integrand_converges() {
        // |cos t| over [0, pi]: value 2, kink at pi/2.
        let (v, _) = integrate(|t| t.cos().abs(), 0.0, std::f64::consts::PI, 1e-10);
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn vector_components_share_subdivision() {
        let (v, _) = integrate_vec(|t| vec![t, t * t, (5.0 * t).sin()], 0.0, 1.0, 1e-12);
        assert!((v[0] - 0.5).abs() < 1e-12);
        assert!((v[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((v[2] - (1.0 - 5.0f64.cos()) / 5.0).abs() < 1e-11);
    }
}
