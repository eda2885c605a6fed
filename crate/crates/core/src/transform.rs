//! Radial statistics of `|μ̂|` over dyadic shells and lattice energy sums.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{interval_transform, self_similar_transform, MeasureSpec};
use crate::quadrature::{gauss_kronrod15, sphere_radial};
use crate::tolerances::{
    LATTICE_POINT_BUDGET, SHELL_MIN_SAMPLES, SHELL_PROBES, SHELL_REL_SE_FLAG, SHELL_REL_SE_TARGET,
    SPHERE_QUADRATURE_TOL,
};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const STRATA: usize = 8;
const PER_STRATUM: usize = 128;

/// Integrals of `|μ̂|^{2/θ}` over the balls `|z| <= R_j` with `R_j = 2^j`.
///
/// Shell 0 is the unit ball; shell `j >= 1` is the annulus `R_{j-1} < |z| <= R_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellStats {
    pub theta: f64,
    pub ambient_dim: usize,
    pub radii: Vec<f64>,
    /// Cumulative integrals `S(R_j)`.
    pub shell_integrals: Vec<f64>,
    pub shell_stderr: Vec<f64>,
    /// Per-shell contributions `S(R_j) - S(R_{j-1})`.
    pub increments: Vec<f64>,
    pub increment_stderr: Vec<f64>,
    /// Largest `|μ̂|` observed in each shell.
    pub shell_sups: Vec<f64>,
    /// Largest transform error bound met in each shell.
    pub max_abs_err: Vec<f64>,
    /// Shells whose relative standard error exceeds the flag threshold.
    pub flagged: Vec<bool>,
    pub evaluations: Vec<usize>,
}

impl ShellStats {
    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn any_flagged(&self) -> bool {
        self.flagged.iter().any(|&f| f)
    }
}

/// Largest dyadic exponent `J` with `2^J <= r_max`.
fn dyadic_count(r_max: f64) -> usize {
    (r_max.log2() + 1e-9).floor() as usize
}

/// Default outer radius for shell statistics by ambient dimension.
pub fn default_shell_rmax(d: usize) -> f64 {
    match d {
        1 => 4096.0,
        2 => 1024.0,
        3 => 128.0,
        _ => 32.0,
    }
}

/// Shell statistics for a single `theta`.
pub fn shell_stats(spec: &MeasureSpec, theta: f64, r_max: f64, budget: usize, seed: u64) -> Result<ShellStats> {
    Ok(shell_stats_multi(spec, &[theta], r_max, budget, seed)?.remove(0))
}

/// Shell statistics for several `theta` values from one set of transform
/// evaluations. Results are returned in the order of `thetas`.
pub fn shell_stats_multi(
    spec: &MeasureSpec,
    thetas: &[f64],
    r_max: f64,
    budget: usize,
    seed: u64,
) -> Result<Vec<ShellStats>> {
    if thetas.is_empty() {
        return Err(Error::arg("at least one theta is required"));
    }
    if let Some(t) = thetas.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::arg(format!("theta must lie in (0, 1], got {t}")));
    }
    if !(r_max >= 4.0) || !r_max.is_finite() {
        return Err(Error::arg(format!("R_max must be at least 4, got {r_max}")));
    }
    if budget < SHELL_MIN_SAMPLES {
        return Err(Error::arg(format!(
            "budget must be at least {SHELL_MIN_SAMPLES} evaluations per shell, got {budget}"
        )));
    }
    let d = spec.ambient_dim();
    let top = dyadic_count(r_max);
    let powers: Vec<f64> = thetas.iter().map(|t| 2.0 / t).collect();
    let shells: Vec<ShellEstimate> = (0..=top)
        .into_par_iter()
        .map(|j| {
            let inner = if j == 0 { 0.0 } else { 2f64.powi(j as i32 - 1) };
            let outer = 2f64.powi(j as i32);
            if d == 1 {
                line_shell(spec, &powers, inner, outer)
            } else {
                let mut shell = ball_shell(spec, &powers, inner, outer, budget, seed, j as u64)?;
                shell.sup = shell.sup.max(axis_sup(spec, inner, outer)?);
                Ok(shell)
            }
        })
        .collect::<Result<_>>()?;

    let radii: Vec<f64> = (0..=top).map(|j| 2f64.powi(j as i32)).collect();
    let mut out = Vec::with_capacity(thetas.len());
    for (i, &theta) in thetas.iter().enumerate() {
        let mut cumulative = 0.0;
        let mut variance = 0.0;
        let mut stats = ShellStats {
            theta,
            ambient_dim: d,
            radii: radii.clone(),
            shell_integrals: Vec::new(),
            shell_stderr: Vec::new(),
            increments: Vec::new(),
            increment_stderr: Vec::new(),
            shell_sups: Vec::new(),
            max_abs_err: Vec::new(),
            flagged: Vec::new(),
            evaluations: Vec::new(),
        };
        for shell in &shells {
            let (value, se) = shell.integrals[i];
            cumulative += value;
            variance += se * se;
            stats.shell_integrals.push(cumulative);
            stats.shell_stderr.push(variance.sqrt());
            stats.increments.push(value);
            stats.increment_stderr.push(se);
            stats.shell_sups.push(shell.sup);
            stats.max_abs_err.push(shell.max_abs_err);
            stats.flagged.push(value > 0.0 && se > SHELL_REL_SE_FLAG * value);
            stats.evaluations.push(shell.evaluations);
        }
        out.push(stats);
    }
    Ok(out)
}

/// Seeded probe frequencies: the origin, then `per_shell` points drawn
/// uniformly from each dyadic shell up to `r_max`, innermost first.
pub fn shell_probe_points(d: usize, r_max: f64, per_shell: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if d == 0 {
        return Err(Error::arg("ambient dimension must be positive"));
    }
    if !(r_max >= 1.0) || !r_max.is_finite() {
        return Err(Error::arg(format!("R_max must be at least 1, got {r_max}")));
    }
    let df = d as f64;
    let mut points = vec![vec![0.0; d]];
    for j in 0..=dyadic_count(r_max) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let inner = if j == 0 { 0.0 } else { 2f64.powi(j as i32 - 1) };
        let (lo_pow, hi_pow) = (inner.powf(df), 2f64.powi(j as i32).powf(df));
        for _ in 0..per_shell {
            let u: f64 = rng.random();
            let radius = (lo_pow + u * (hi_pow - lo_pow)).powf(1.0 / df);
            let mut z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = z.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
            z.iter_mut().for_each(|c| *c *= radius / norm);
            points.push(z);
        }
    }
    Ok(points)
}

/// `(R_j, sup_j)` pairs for every shell.
pub fn sup_decay(stats: &ShellStats) -> Vec<(f64, f64)> {
    stats.radii.iter().copied().zip(stats.shell_sups.iter().copied()).collect()
}

struct ShellEstimate {
    /// `(integral, standard error)` per theta.
    integrals: Vec<(f64, f64)>,
    sup: f64,
    max_abs_err: f64,
    evaluations: usize,
}

fn magnitude(spec: &MeasureSpec, z: &[f64]) -> Result<(f64, f64)> {
    let v = spec.transform(z)?;
    Ok((v.value.norm(), v.abs_err))
}

/// Largest `|μ̂|` on the shell `(inner, outer]` restricted to the coordinate
/// blocks of one-dimensional factors of a product.
///
/// On the block of a factor `μ` the transform of `μ × ν` is `μ̂(x) ν(R^m)`,
/// so the factor's densely sampled line sup carries over exactly. These are
/// the directions along which products fail to decay.
fn axis_sup(spec: &MeasureSpec, inner: f64, outer: f64) -> Result<f64> {
    let MeasureSpec::Product { left, right } = spec else {
        return Ok(0.0);
    };
    let factor_sup = |factor: &MeasureSpec| -> Result<f64> {
        match factor.ambient_dim() {
            1 => Ok(line_shell(factor, &[2.0], inner, outer)?.sup),
            _ => axis_sup(factor, inner, outer),
        }
    };
    let from_left = factor_sup(left)? * right.total_mass();
    let from_right = factor_sup(right)? * left.total_mass();
    Ok(from_left.max(from_right))
}

/// Probe directions: coordinate axes, the full diagonal and pairwise diagonals.
fn probe_directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        dirs.push(e);
    }
    if d >= 2 {
        dirs.push(vec![1.0 / (d as f64).sqrt(); d]);
        for i in 0..d {
            for j in i + 1..d {
                for sign in [1.0, -1.0] {
                    let mut e = vec![0.0; d];
                    e[i] = std::f64::consts::FRAC_1_SQRT_2;
                    e[j] = sign * std::f64::consts::FRAC_1_SQRT_2;
                    dirs.push(e);
                }
            }
        }
    }
    dirs
}

/// Largest `|μ̂|` over the deterministic probes of the shell `(inner, outer]`,
/// together with the best probe point.
///
/// Probe radii are biased toward the inner edge, where decaying transforms
/// peak, and the best few candidates are then refined along their rays.
fn probe_sup(spec: &MeasureSpec, inner: f64, outer: f64, mut best: Vec<(f64, Vec<f64>)>) -> Result<(f64, f64, usize)> {
    let dirs = probe_directions(spec.ambient_dim());
    let mut err = 0.0f64;
    let mut evaluations = 0;
    for i in 0..SHELL_PROBES {
        let frac = ((i as f64 + 1.0) * GOLDEN).fract();
        let radius = inner + (outer - inner) * frac * frac;
        let z: Vec<f64> = dirs[i % dirs.len()].iter().map(|c| c * radius).collect();
        let (m, e) = magnitude(spec, &z)?;
        err = err.max(e);
        evaluations += 1;
        keep_best(&mut best, m, z);
    }
    let mut sup = best.iter().map(|b| b.0).fold(0.0, f64::max);
    let reach = 0.5 / spec.support_radius().max(1.0);
    for (_, z) in best {
        let radius = z.iter().map(|c| c * c).sum::<f64>().sqrt();
        if radius == 0.0 {
            continue;
        }
        let unit: Vec<f64> = z.iter().map(|c| c / radius).collect();
        let lo = (radius - reach).max(inner);
        let hi = (radius + reach).min(outer);
        let (m, e, n) = golden_max(spec, &unit, lo, hi)?;
        sup = sup.max(m);
        err = err.max(e);
        evaluations += n;
    }
    Ok((sup, err, evaluations))
}

const REFINED_CANDIDATES: usize = 4;

/// Keeps the `REFINED_CANDIDATES` largest magnitudes seen so far.
fn keep_best(best: &mut Vec<(f64, Vec<f64>)>, m: f64, z: Vec<f64>) {
    if best.len() < REFINED_CANDIDATES {
        best.push((m, z));
    } else if let Some(slot) = best.iter_mut().min_by(|a, b| a.0.total_cmp(&b.0)) {
        if m > slot.0 {
            *slot = (m, z);
        }
    }
}

/// Golden-section search for the largest `|μ̂|` on the ray segment `[lo, hi]`.
fn golden_max(spec: &MeasureSpec, unit: &[f64], lo: f64, hi: f64) -> Result<(f64, f64, usize)> {
    let eval = |r: f64| -> Result<(f64, f64)> {
        let z: Vec<f64> = unit.iter().map(|c| c * r).collect();
        magnitude(spec, &z)
    };
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut e1) = eval(x1)?;
    let (mut f2, mut e2) = eval(x2)?;
    let mut best = f1.max(f2);
    let mut err = e1.max(e2);
    let mut evaluations = 2;
    for _ in 0..24 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            (f2, e2) = eval(x2)?;
            best = best.max(f2);
            err = err.max(e2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            (f1, e1) = eval(x1)?;
            best = best.max(f1);
            err = err.max(e1);
        }
        evaluations += 1;
    }
    Ok((best, err, evaluations))
}

/// One-dimensional shells by adaptive Gauss-Kronrod on `[inner, outer]`,
/// doubled because `|μ̂|` is even.
fn line_shell(spec: &MeasureSpec, powers: &[f64], inner: f64, outer: f64) -> Result<ShellEstimate> {
    // Oscillations of μ̂ have period about 1/support_radius.
    let width = 0.25 / spec.support_radius().max(1.0);
    let panels = (((outer - inner) / width).ceil() as usize).max(1);
    let m = powers.len();
    let mut sup = 0.0f64;
    let mut argmax = inner;
    let mut max_err = 0.0f64;
    let mut evaluations = 0usize;
    let mut failure = None;

    let mut panel = |lo: f64, hi: f64, sup: &mut f64, argmax: &mut f64, max_err: &mut f64, evals: &mut usize| {
        let mut values = Vec::with_capacity(15);
        let mut probe = |x: f64| {
            let (v, e) = match magnitude(spec, &[x]) {
                Ok(r) => r,
                Err(err) => {
                    failure.get_or_insert(err);
                    (0.0, 0.0)
                }
            };
            if v > *sup {
                *sup = v;
                *argmax = x;
            }
            *max_err = max_err.max(e);
            values.push(v);
            0.0
        };
        gauss_kronrod15(&mut probe, lo, hi);
        *evals += values.len();
        // Re-run the rule on each power using the cached magnitudes, in the
        // same evaluation order the rule used.
        let mut out = Vec::with_capacity(m);
        for &p in powers {
            let mut it = values.iter();
            let mut f = |_x: f64| it.next().expect("cached node").powf(p);
            out.push(gauss_kronrod15(&mut f, lo, hi));
        }
        Panel { lo, hi, parts: out }
    };

    let mut work: Vec<Panel> = Vec::with_capacity(panels * 2);
    let h = (outer - inner) / panels as f64;
    for i in 0..panels {
        let lo = inner + h * i as f64;
        let hi = if i + 1 == panels { outer } else { lo + h };
        work.push(panel(lo, hi, &mut sup, &mut argmax, &mut max_err, &mut evaluations));
    }
    let totals = |work: &[Panel]| -> Vec<(f64, f64)> {
        (0..m)
            .map(|i| {
                work.iter()
                    .fold((0.0, 0.0), |(v, e), p| (v + p.parts[i].0, e + p.parts[i].1))
            })
            .collect()
    };
    let initial = totals(&work);
    let scale: Vec<f64> = initial.iter().map(|t| t.0.abs().max(1e-300)).collect();
    let priority = |p: &Panel| -> f64 {
        p.parts
            .iter()
            .zip(&scale)
            .map(|(part, s)| part.1 / s)
            .fold(0.0, f64::max)
    };
    let mut heap: BinaryHeap<Ranked> = work
        .into_iter()
        .map(|p| Ranked { key: priority(&p), panel: p })
        .collect();
    let max_panels = panels * 4 + 64;
    let rel_tol = 1e-7;
    loop {
        let worst = heap.peek().map(|r| r.key).unwrap_or(0.0);
        let total_err: f64 = heap.iter().map(|r| r.key).sum();
        if total_err <= rel_tol || heap.len() >= max_panels || worst == 0.0 {
            break;
        }
        let Ranked { panel: p, .. } = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (p.lo + p.hi);
        for (lo, hi) in [(p.lo, mid), (mid, p.hi)] {
            let child = panel(lo, hi, &mut sup, &mut argmax, &mut max_err, &mut evaluations);
            heap.push(Ranked { key: priority(&child), panel: child });
        }
    }
    if let Some(err) = failure {
        return Err(err);
    }
    let work: Vec<Panel> = heap.into_iter().map(|r| r.panel).collect();
    let mut integrals = totals(&work);
    for t in integrals.iter_mut() {
        t.0 *= 2.0;
        t.1 *= 2.0;
    }
    // Probes on the positive half-line suffice by evenness.
    let (probe_max, probe_err, probes) = probe_sup(spec, inner, outer, vec![(sup, vec![argmax])])?;
    Ok(ShellEstimate {
        integrals,
        sup: sup.max(probe_max),
        max_abs_err: max_err.max(probe_err),
        evaluations: evaluations + probes,
    })
}

struct Panel {
    lo: f64,
    hi: f64,
    parts: Vec<(f64, f64)>,
}

struct Ranked {
    key: f64,
    panel: Panel,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then_with(|| other.panel.lo.total_cmp(&self.panel.lo))
    }
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// Multi-dimensional shells by Monte-Carlo, stratified into equal-volume
/// radial layers, sampled in batches until every theta reaches the target
/// relative standard error or the budget runs out.
fn ball_shell(
    spec: &MeasureSpec,
    powers: &[f64],
    inner: f64,
    outer: f64,
    budget: usize,
    seed: u64,
    shell: u64,
) -> Result<ShellEstimate> {
    let d = spec.ambient_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shell);
    let df = d as f64;
    let lo_pow = inner.powf(df);
    let hi_pow = outer.powf(df);
    let volume = unit_ball_volume(d) * (hi_pow - lo_pow);
    let stratum_volume = volume / STRATA as f64;
    let m = powers.len();
    // Running sums per (stratum, theta).
    let mut sum = vec![0.0f64; STRATA * m];
    let mut sum_sq = vec![0.0f64; STRATA * m];
    let mut count = 0usize;
    let mut best: Vec<(f64, Vec<f64>)> = Vec::with_capacity(REFINED_CANDIDATES);
    let mut max_err = 0.0f64;
    let mut z = vec![0.0; d];
    let estimate = |sum: &[f64], sum_sq: &[f64], n: usize| -> Vec<(f64, f64)> {
        (0..m)
            .map(|i| {
                let mut value = 0.0;
                let mut var = 0.0;
                for h in 0..STRATA {
                    let mean = sum[h * m + i] / n as f64;
                    let second = sum_sq[h * m + i] / n as f64;
                    let sample_var = (second - mean * mean).max(0.0) * n as f64 / (n as f64 - 1.0);
                    value += stratum_volume * mean;
                    var += stratum_volume * stratum_volume * sample_var / n as f64;
                }
                (value, var.sqrt())
            })
            .collect()
    };
    loop {
        for _ in 0..PER_STRATUM {
            for h in 0..STRATA {
                let u: f64 = rng.random();
                let layer = (h as f64 + u) / STRATA as f64;
                let radius = (lo_pow + layer * (hi_pow - lo_pow)).powf(1.0 / df);
                let mut norm = 0.0f64;
                for c in z.iter_mut() {
                    *c = rng.sample(StandardNormal);
                    norm += *c * *c;
                }
                let scale = radius / norm.sqrt().max(1e-300);
                for c in z.iter_mut() {
                    *c *= scale;
                }
                let (v, e) = magnitude(spec, &z)?;
                if best.len() < REFINED_CANDIDATES || v > best.iter().map(|b| b.0).fold(f64::INFINITY, f64::min) {
                    keep_best(&mut best, v, z.clone());
                }
                max_err = max_err.max(e);
                for (i, &p) in powers.iter().enumerate() {
                    let f = v.powf(p);
                    sum[h * m + i] += f;
                    sum_sq[h * m + i] += f * f;
                }
            }
        }
        count += PER_STRATUM;
        let current = estimate(&sum, &sum_sq, count);
        let converged = current
            .iter()
            .all(|(v, se)| *se <= SHELL_REL_SE_TARGET * v.abs() || *v == 0.0);
        if converged || (count + PER_STRATUM) * STRATA > budget {
            let (sup, probe_err, probes) = probe_sup(spec, inner, outer, best)?;
            return Ok(ShellEstimate {
                integrals: current,
                sup,
                max_abs_err: max_err.max(probe_err),
                evaluations: count * STRATA + probes,
            });
        }
    }
}

/// Lattice spacing used when none is given: comfortably below `1/diameter`.
pub fn default_alpha(spec: &MeasureSpec) -> f64 {
    let diam = spec.diameter();
    if diam == 0.0 {
        0.4
    } else {
        (0.9 / diam).min(0.4)
    }
}

/// Default outer radius for lattice sums by ambient dimension.
pub fn default_lattice_rmax(spec: &MeasureSpec) -> f64 {
    match spec.ambient_dim() {
        1 => 16384.0,
        2 => {
            if contains_sphere(spec) {
                256.0
            } else {
                512.0
            }
        }
        _ => 64.0,
    }
}

fn contains_sphere(spec: &MeasureSpec) -> bool {
    match spec {
        MeasureSpec::SphereSurface { .. } => true,
        MeasureSpec::Product { left, right } => contains_sphere(left) || contains_sphere(right),
        _ => false,
    }
}

/// Partial sums of `|μ̂(0)|^{2/θ} + Σ_{z ∈ αZ^d, 0<|z|<=R_j} |μ̂(z)|^{2/θ} |z|^{s/θ-d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeEnergy {
    pub s: f64,
    pub theta: f64,
    pub alpha: f64,
    pub radii: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// `P_j - P_{j-1}` for `j >= 1`, summed directly so that fast-decaying
    /// tails do not cancel away.
    pub increments: Vec<f64>,
}

impl LatticeEnergy {
    /// Number of trailing increments used by the divergence verdict.
    pub fn window(&self) -> usize {
        let n = self.increments.len();
        n.div_ceil(3).max(3).min(n)
    }

    /// Least-squares slope of `ln(P_j - P_{j-1})` against `j` over the last
    /// third of the increments (at least three).
    pub fn tail_slope(&self) -> f64 {
        self.tail_slope_over(self.window())
    }

    /// Tail slope over the last `w` increments.
    pub fn tail_slope_over(&self, w: usize) -> f64 {
        let w = w.clamp(2, self.increments.len());
        let tail: Vec<f64> = self.increments[self.increments.len() - w..]
            .iter()
            .map(|v| v.max(f64::MIN_POSITIVE).ln())
            .collect();
        let xs: Vec<f64> = (0..w).map(|i| i as f64).collect();
        ols_slope(&xs, &tail)
    }

    /// True when the tail increments do not decay.
    pub fn diverges(&self) -> bool {
        self.tail_slope() >= 0.0
    }
}

pub(crate) fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Logarithms of the lattice terms, grouped by dyadic shell, so that the
/// energy for any `(s, θ)` is a single pass of exponentials.
#[derive(Debug, Clone)]
pub struct LatticeSamples {
    pub ambient_dim: usize,
    pub alpha: f64,
    pub radii: Vec<f64>,
    origin: f64,
    /// Per shell: `(ln |z|, ln |μ̂(z)|)` over the half-space `z > 0` (lexicographic).
    shells: Vec<Vec<(f32, f32)>>,
}

impl LatticeSamples {
    pub fn build(spec: &MeasureSpec, alpha: f64, r_max: f64) -> Result<Self> {
        let d = spec.ambient_dim();
        if d > 3 {
            return Err(Error::arg(format!(
                "lattice enumeration supports ambient dimension at most 3, got {d}"
            )));
        }
        let diam = spec.diameter();
        if !(alpha > 0.0) || (diam > 0.0 && alpha * diam >= 1.0) {
            return Err(Error::arg(format!(
                "alpha must lie in (0, 1/diameter) = (0, {}), got {alpha}",
                if diam > 0.0 { 1.0 / diam } else { f64::INFINITY }
            )));
        }
        if !(r_max >= 1.0) || !r_max.is_finite() {
            return Err(Error::arg(format!("R_max must be at least 1, got {r_max}")));
        }
        let reach = (r_max / alpha).floor() as i64;
        let required = (unit_ball_volume(d) * (reach as f64 + 1.0).powi(d as i32)).ceil() as u64;
        if required > LATTICE_POINT_BUDGET {
            return Err(Error::LatticeBudget {
                required,
                budget: LATTICE_POINT_BUDGET,
            });
        }
        let top = dyadic_count(r_max);
        let radii: Vec<f64> = (0..=top).map(|j| 2f64.powi(j as i32)).collect();
        let mut evaluator = LatticeEvaluator::new(spec, alpha, reach)?;
        let mut shells: Vec<Vec<(f32, f32)>> = vec![Vec::new(); top + 1];
        let reach2 = reach * reach;
        let r_max2 = r_max * r_max;
        let mut m = vec![0i64; d];
        let mut visit = |m: &[i64], evaluator: &mut LatticeEvaluator| -> Result<()> {
            let q: i64 = m.iter().map(|c| c * c).sum();
            let norm2 = alpha * alpha * q as f64;
            if q == 0 || q > reach2 || norm2 > r_max2 {
                return Ok(());
            }
            let v = evaluator.magnitude(m)?;
            if v > 0.0 {
                let norm = norm2.sqrt();
                let shell = if norm <= 1.0 { 0 } else { norm.log2().ceil() as usize };
                shells[shell.min(top)].push((norm.ln() as f32, v.ln() as f32));
            }
            Ok(())
        };
        match d {
            1 => {
                for a in 1..=reach {
                    m[0] = a;
                    visit(&m, &mut evaluator)?;
                }
            }
            2 => {
                for a in 0..=reach {
                    let span = isqrt(reach2 - a * a);
                    let start = if a == 0 { 1 } else { -span };
                    for b in start..=span {
                        m[0] = a;
                        m[1] = b;
                        visit(&m, &mut evaluator)?;
                    }
                }
            }
            _ => {
                for a in 0..=reach {
                    let span_b = isqrt(reach2 - a * a);
                    let start_b = if a == 0 { 0 } else { -span_b };
                    for b in start_b..=span_b {
                        let span_c = isqrt(reach2 - a * a - b * b);
                        let start_c = if a == 0 && b == 0 { 1 } else { -span_c };
                        for c in start_c..=span_c {
                            m[0] = a;
                            m[1] = b;
                            m[2] = c;
                            visit(&m, &mut evaluator)?;
                        }
                    }
                }
            }
        }
        Ok(LatticeSamples {
            ambient_dim: d,
            alpha,
            radii,
            origin: spec.total_mass(),
            shells,
        })
    }

    pub fn point_count(&self) -> usize {
        self.shells.iter().map(Vec::len).sum()
    }

    pub fn energy(&self, s: f64, theta: f64) -> LatticeEnergy {
        let a = 2.0 / theta;
        let b = s / theta - self.ambient_dim as f64;
        let mut partial = self.origin.powf(a);
        let mut partial_sums = Vec::with_capacity(self.shells.len());
        let mut increments = Vec::with_capacity(self.shells.len());
        for (j, shell) in self.shells.iter().enumerate() {
            let sum: f64 = 2.0
                * shell
                    .iter()
                    .map(|&(ln_z, ln_v)| (a * ln_v as f64 + b * ln_z as f64).exp())
                    .sum::<f64>();
            partial += sum;
            partial_sums.push(partial);
            if j > 0 {
                increments.push(sum);
            }
        }
        LatticeEnergy {
            s,
            theta,
            alpha: self.alpha,
            radii: self.radii.clone(),
            partial_sums,
            increments,
        }
    }
}

fn isqrt(n: i64) -> i64 {
    if n <= 0 {
        return 0;
    }
    let mut r = (n as f64).sqrt() as i64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Partial lattice sums for one `(s, θ)`.
pub fn lattice_energy(spec: &MeasureSpec, s: f64, theta: f64, alpha: f64, r_max: f64) -> Result<LatticeEnergy> {
    if !(s >= 0.0) {
        return Err(Error::arg(format!("s must be nonnegative, got {s}")));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::arg(format!("theta must lie in (0, 1], got {theta}")));
    }
    Ok(LatticeSamples::build(spec, alpha, r_max)?.energy(s, theta))
}

/// Evaluates `|μ̂(α m)|` on integer vectors using per-factor lookup tables.
struct LatticeEvaluator {
    blocks: Vec<(usize, Block)>,
}

enum Block {
    /// `|sinc|` per coordinate, indexed by `|m_i|`.
    Cube { width: usize, table: Vec<f64> },
    /// Radial profile indexed by `Σ m_i²`, filled on demand.
    Sphere { width: usize, k: usize, alpha: f64, table: Vec<f64> },
    /// Even one-dimensional magnitude indexed by `|m|`.
    Line { table: Vec<f64> },
    /// Direct evaluation for multi-dimensional atomic factors.
    Direct { spec: MeasureSpec, alpha: f64, width: usize },
}

impl LatticeEvaluator {
    fn new(spec: &MeasureSpec, alpha: f64, reach: i64) -> Result<Self> {
        let mut leaves = Vec::new();
        flatten(spec, &mut leaves);
        let mut blocks = Vec::with_capacity(leaves.len());
        let mut offset = 0;
        for leaf in leaves {
            let width = leaf.ambient_dim();
            let block = match leaf {
                MeasureSpec::UniformCube { .. } => Block::Cube {
                    width,
                    table: (0..=reach).map(|m| interval_transform(alpha * m as f64).norm()).collect(),
                },
                MeasureSpec::SphereSurface { k } => Block::Sphere {
                    width,
                    k: *k,
                    alpha,
                    table: vec![f64::NAN; (reach * reach + 1) as usize],
                },
                MeasureSpec::SelfSimilar1D {
                    ratio,
                    translations,
                    probabilities,
                } => Block::Line {
                    table: (0..=reach)
                        .map(|m| self_similar_transform(*ratio, translations, probabilities, alpha * m as f64).value.norm())
                        .collect(),
                },
                MeasureSpec::Atomic { .. } if width == 1 => Block::Line {
                    table: (0..=reach)
                        .map(|m| leaf.transform(&[alpha * m as f64]).map(|v| v.value.norm()))
                        .collect::<Result<_>>()?,
                },
                _ => Block::Direct {
                    spec: leaf.clone(),
                    alpha,
                    width,
                },
            };
            blocks.push((offset, block));
            offset += width;
        }
        Ok(LatticeEvaluator { blocks })
    }

    fn magnitude(&mut self, m: &[i64]) -> Result<f64> {
        let mut acc = 1.0;
        for (offset, block) in self.blocks.iter_mut() {
            let v = match block {
                Block::Cube { width, table } => m[*offset..*offset + *width]
                    .iter()
                    .map(|c| table[c.unsigned_abs() as usize])
                    .product(),
                Block::Sphere { width, k, alpha, table } => {
                    let q: i64 = m[*offset..*offset + *width].iter().map(|c| c * c).sum();
                    let slot = &mut table[q as usize];
                    if slot.is_nan() {
                        let rho = *alpha * (q as f64).sqrt();
                        *slot = sphere_radial(*k, rho, SPHERE_QUADRATURE_TOL)?.0.abs();
                    }
                    *slot
                }
                Block::Line { table } => table[m[*offset].unsigned_abs() as usize],
                Block::Direct { spec, alpha, width } => {
                    let z: Vec<f64> = m[*offset..*offset + *width].iter().map(|&c| *alpha * c as f64).collect();
                    spec.transform(&z)?.value.norm()
                }
            };
            acc *= v;
            if acc == 0.0 {
                break;
            }
        }
        Ok(acc)
    }
}

fn flatten<'a>(spec: &'a MeasureSpec, out: &mut Vec<&'a MeasureSpec>) {
    match spec {
        MeasureSpec::Product { left, right } => {
            flatten(left, out);
            flatten(right, out);
        }
        leaf => out.push(leaf),
    }
}
