//! Quadrature rules with a-priori error bounds.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Largest node count the radial sphere quadrature will use before giving up.
const MAX_NODES: usize = 1 << 24;

/// Surface area of the unit sphere `S^k` in `R^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

/// Upper bound for `|J_n(w)|` valid for every integer `n >= 0` and `w >= 0`,
/// returned as a natural logarithm.
fn ln_bessel_bound(n: usize, w: f64) -> f64 {
    if w == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    (n as f64) * (w / 2.0).ln() - ln_factorial_lower(n)
}

/// Robbins' lower bound `ln n! >= n ln n - n + ½ ln(2πn) + 1/(12n+1)`.
fn ln_factorial_lower(n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let x = n as f64;
    x * x.ln() - x + 0.5 * (2.0 * PI * x).ln() + 1.0 / (12.0 * x + 1.0)
}

/// Radial profile of the surface measure on `S^k`:
/// `|S^{k-1}| * ∫_0^π cos(w cos φ) sin^{k-1} φ dφ` at `w = 2π|ξ|`.
///
/// Returns the value and a certified bound on its absolute error.
pub fn sphere_radial(k: usize, rho: f64, tol: f64) -> Result<(f64, f64)> {
    assert!(k >= 1);
    if rho == 0.0 {
        return Ok((sphere_area(k), 0.0));
    }
    let w = 2.0 * PI * rho.abs();
    let scale = sphere_area(k - 1);
    let (integral, err) = if k % 2 == 1 {
        periodic_trapezoid(k, w, tol / scale)?
    } else {
        clenshaw_curtis_even(k, w, tol / scale)?
    };
    Ok((scale * integral, scale * err))
}

/// Odd `k`: the integrand is a smooth even 2π-periodic function, so the
/// trapezoid rule converges geometrically. Its error is bounded by the
/// aliased Fourier coefficients, which Jacobi-Anger ties to Bessel values.
fn periodic_trapezoid(k: usize, w: f64, tol: f64) -> Result<(f64, f64)> {
    let degree = k - 1;
    // Error of the half-period rule is at most 2π Σ_{m>=1} B(mP - degree);
    // once P - degree > w the terms at least halve, so 2π·2·B(P - degree) bounds it.
    let ln_target = (tol / (4.0 * PI)).ln();
    let mut p = ((w.ceil() as usize) + degree + 2).max(8);
    p += p % 2;
    loop {
        if ln_bessel_bound(p - degree, w) <= ln_target {
            break;
        }
        if p > MAX_NODES {
            let achieved = 4.0 * PI * ln_bessel_bound(p - degree, w).exp();
            return Err(Error::Quadrature { tolerance: tol, achieved });
        }
        p += 8;
    }
    let h = 2.0 * PI / p as f64;
    let f = |phi: f64| {
        let (s, c) = phi.sin_cos();
        (w * c).cos() * s.powi(degree as i32)
    };
    let half = p / 2;
    let mut sum = f(0.0) + f(PI);
    let mut inner = 0.0;
    for j in 1..half {
        inner += f(j as f64 * h);
    }
    sum += 2.0 * inner;
    let value = PI / p as f64 * sum;
    let rounding = (p as f64) * f64::EPSILON * PI * (1.0 + w * f64::EPSILON);
    let truncation = 4.0 * PI * ln_bessel_bound(p - degree, w).exp();
    Ok((value, truncation + rounding))
}

fn cc_cache() -> &'static Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Nodes in `[0, 1]` with weights already doubled for the mirror node, for an
/// even integrand on `[-1, 1]` and an even node count `n`.
fn clenshaw_curtis_half(n: usize) -> Arc<Vec<(f64, f64)>> {
    if let Some(rule) = cc_cache().lock().expect("cache poisoned").get(&n) {
        return rule.clone();
    }
    let nf = n as f64;
    let mut rule = Vec::with_capacity(n / 2 + 1);
    for j in 0..=n / 2 {
        let theta = j as f64 * PI / nf;
        let mut v = 1.0;
        for k in 1..=n / 2 {
            let b = if 2 * k == n { 1.0 } else { 2.0 };
            v -= b / (4.0 * (k * k) as f64 - 1.0) * (2.0 * k as f64 * theta).cos();
        }
        let c = if j == 0 { 1.0 } else { 2.0 };
        let mut weight = c * v / nf;
        if 2 * j != n {
            weight *= 2.0;
        }
        rule.push((theta.cos(), weight));
    }
    let rule = Arc::new(rule);
    cc_cache()
        .lock()
        .expect("cache poisoned")
        .insert(n, rule.clone());
    rule
}

/// Log of the Clenshaw-Curtis error bound `64/15 · M ρ^{1-n} / (ρ² - 1)` for
/// `cos(wt)(1-t²)^m`, minimized over a grid of Bernstein ellipses.
fn ln_cc_bound(n: usize, w: f64, m: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..60 {
        let rho = 1.0 + 1e-3 * 1.2f64.powi(i);
        let a = 0.5 * (rho + 1.0 / rho);
        let b = 0.5 * (rho - 1.0 / rho);
        let ln_m = w * b + (m as f64) * (1.0 + a * a).ln();
        let ln_e = (64.0f64 / 15.0).ln() + ln_m - (n as f64 - 1.0) * rho.ln() - (rho * rho - 1.0).ln();
        best = best.min(ln_e);
    }
    best
}

/// Even `k`: substitute `t = cos φ` to get the entire integrand
/// `cos(wt)(1-t²)^{(k-2)/2}` on `[-1, 1]` and apply Clenshaw-Curtis.
fn clenshaw_curtis_even(k: usize, w: f64, tol: f64) -> Result<(f64, f64)> {
    let m = (k - 2) / 2;
    let ln_target = tol.ln();
    let mut n = 32usize.max(((w * 0.75) as usize / 32 + 1) * 32);
    while ln_cc_bound(n, w, m) > ln_target {
        if n > MAX_NODES {
            let achieved = ln_cc_bound(n, w, m).exp();
            return Err(Error::Quadrature { tolerance: tol, achieved });
        }
        n += 32;
    }
    let rule = clenshaw_curtis_half(n);
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    for &(t, weight) in rule.iter() {
        let term = weight * (w * t).cos() * (1.0 - t * t).powi(m as i32);
        sum += term;
        abs_sum += term.abs();
    }
    let rounding = abs_sum * (n as f64) * f64::EPSILON * (1.0 + w * f64::EPSILON);
    Ok((sum, ln_cc_bound(n, w, m).exp() + rounding))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_GAUSS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 7/15-point Gauss-Kronrod panel: (Kronrod estimate, |Kronrod - Gauss|).
pub fn gauss_kronrod15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_KRONROD[7] * fc;
    let mut g = GK_GAUSS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let pair = f(c - x) + f(c + x);
        k += GK_KRONROD[i] * pair;
        if i % 2 == 1 {
            g += GK_GAUSS[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod on `[a, b]` with a starting partition of `panels`
/// equal pieces; bisects the worst panel until the summed error estimate is
/// below `abs_tol + rel_tol·|I|` or `max_panels` is reached.
pub fn adaptive_gk(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    panels: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> (f64, f64) {
    let mut work: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(panels * 2);
    let h = (b - a) / panels as f64;
    for i in 0..panels {
        let lo = a + h * i as f64;
        let hi = if i + 1 == panels { b } else { lo + h };
        let (v, e) = gauss_kronrod15(&mut f, lo, hi);
        work.push((lo, hi, v, e));
    }
    loop {
        let total: f64 = work.iter().map(|p| p.2).sum();
        let err: f64 = work.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || work.len() >= max_panels {
            return (total, err);
        }
        let (idx, _) = work
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty partition");
        let (lo, hi, _, _) = work.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod15(&mut f, lo, mid);
        let (v2, e2) = gauss_kronrod15(&mut f, mid, hi);
        work.push((lo, mid, v1, e1));
        work.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bessel_j0(x: f64) -> f64 {
        // Power series; accurate for moderate x.
        let mut term = 1.0;
        let mut sum = 1.0;
        for m in 1..200 {
            term *= -(x * x) / (4.0 * (m * m) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn areas_match_known_values() {
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(4) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn circle_profile_is_scaled_j0() {
        for &rho in &[0.1, 0.7, 1.3, 2.9, 4.0] {
            let (v, e) = sphere_radial(1, rho, 1e-8).unwrap();
            let exact = 2.0 * PI * bessel_j0(2.0 * PI * rho);
            assert!(e <= 1e-8);
            assert!((v - exact).abs() < 1e-8, "rho={rho} v={v} exact={exact}");
        }
    }

    #[test]
    fn two_sphere_profile_matches_sine_form() {
        for &rho in &[0.05, 0.5, 3.3, 17.25, 120.5] {
            let (v, e) = sphere_radial(2, rho, 1e-8).unwrap();
            let exact = 2.0 * (2.0 * PI * rho).sin() / rho;
            assert!(e <= 1e-8);
            assert!((v - exact).abs() < 1e-8, "rho={rho} v={v} exact={exact}");
        }
    }

    #[test]
    fn three_sphere_profile_matches_independent_quadrature() {
        // S^3: |S^2| ∫_0^π cos(w cos φ) sin² φ dφ, oracle by fine midpoint rule.
        let rho = 2.2;
        let w = 2.0 * PI * rho;
        let n = 200_000;
        let h = PI / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let phi = (i as f64 + 0.5) * h;
            s += (w * phi.cos()).cos() * phi.sin().powi(2);
        }
        let oracle = 4.0 * PI * s * h;
        let (v, _) = sphere_radial(3, rho, 1e-8).unwrap();
        assert!((v - oracle).abs() < 1e-7);
    }

    #[test]
    fn large_frequency_stays_within_tolerance() {
        let (v, e) = sphere_radial(1, 900.3, 1e-8).unwrap();
        let asym = 2.0 * PI * (2.0 / (PI * 2.0 * PI * 900.3)).sqrt();
        assert!(e <= 1e-8);
        assert!(v.abs() <= asym * 1.05);
    }

    #[test]
    fn gauss_kronrod_integrates_smooth_functions() {
        let (v, e) = adaptive_gk(|x| x.sin(), 0.0, PI, 1, 1e-13, 0.0, 100);
        assert!((v - 2.0).abs() < 1e-12 && e < 1e-12);
        let (v, _) = adaptive_gk(|x: f64| 1.0 / (1.0 + x * x), 0.0, 50.0, 4, 1e-12, 0.0, 1000);
        assert!((v - 50f64.atan()).abs() < 1e-10);
    }
}
