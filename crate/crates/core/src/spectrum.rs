//! Dimension estimates from shell statistics and lattice energies.
//!
//! Three routes, chosen per `θ`:
//!
//! * `θ = 0`: the decay rate of shell sups (`SUP_DECAY`).
//! * Ball averages that scale strictly below the trivial ceiling `dθ` give the
//!   dimension directly (`EXACT_REGIME`).
//! * Otherwise the averages saturate at `dθ`, and the finiteness threshold of
//!   the lattice energy is located by bisection (`CLAMPED`).

use std::fmt;

use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::tolerances::{BISECTION_WIDTH, REGIME_MARGIN};
use crate::transform::{
    default_alpha, default_lattice_rmax, default_shell_rmax, ols_slope, shell_stats_multi, LatticeSamples,
    ShellStats,
};

/// Minimum number of shells for any scaling estimate.
pub const MIN_SHELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeFlag {
    ExactRegime,
    Clamped,
    SupDecay,
}

impl RegimeFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeFlag::ExactRegime => "EXACT_REGIME",
            RegimeFlag::Clamped => "CLAMPED",
            RegimeFlag::SupDecay => "SUP_DECAY",
        }
    }
}

impl fmt::Display for RegimeFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lower and upper scaling exponents of the ball averages over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct StrichartzReport {
    pub f_lower: f64,
    pub f_upper: f64,
    /// Least-squares exponent over the same window.
    pub estimate: f64,
    /// Local exponents, one per shell in the window.
    pub local: Vec<f64>,
}

/// Scaling exponents of `R^{-d} S(R)` over the last `window` fraction of shells.
///
/// Local exponents come from consecutive annulus contributions,
/// `g_j = θ (d - log2(I_j / I_{j-1}))`, which cancels the constant prefactor
/// of `S(R)` instead of dividing it by `log R`. Values are clipped to `[0, dθ]`.
pub fn strichartz_exponents(stats: &ShellStats, window: f64) -> Result<StrichartzReport> {
    let n = stats.len();
    if n < MIN_SHELLS {
        return Err(Error::TooFewScales { needed: MIN_SHELLS, got: n });
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::arg(format!("window fraction must lie in (0, 1], got {window}")));
    }
    if stats.increments.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("shell integrals"));
    }
    let theta = stats.theta;
    let ceiling = stats.ambient_dim as f64 * theta;
    let count = ((n as f64 * window).ceil() as usize).clamp(2, n - 1);
    let first = n - count;
    let tiny = f64::MIN_POSITIVE;
    let log_inc: Vec<f64> = stats.increments.iter().map(|v| v.max(tiny).log2()).collect();
    let exponent = |growth: f64| (theta * (stats.ambient_dim as f64 - growth)).clamp(0.0, ceiling);
    let local: Vec<f64> = (first..n).map(|j| exponent(log_inc[j] - log_inc[j - 1])).collect();
    let xs: Vec<f64> = (first - 1..n).map(|j| j as f64).collect();
    let estimate = exponent(ols_slope(&xs, &log_inc[first - 1..]));
    let f_lower = local.iter().copied().fold(f64::INFINITY, f64::min);
    let f_upper = local.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(StrichartzReport {
        f_lower,
        f_upper,
        estimate,
        local,
    })
}

/// Fourier dimension from the decay of shell sups: `-2` times the least-squares
/// slope of `ln T_j` against `ln R_j` over a window of a third of the shells
/// ending before the outermost one, where `T_j` is the largest sup over
/// shells `j` and beyond.
pub fn estimate_fourier_dim(stats: &ShellStats) -> Result<f64> {
    Ok(fourier_dim_report(stats)?.0)
}

/// Fourier dimension with an envelope band from the extreme two-point slopes.
pub fn fourier_dim_report(stats: &ShellStats) -> Result<(f64, f64, f64)> {
    let n = stats.len();
    if n < MIN_SHELLS {
        return Err(Error::TooFewScales { needed: MIN_SHELLS, got: n });
    }
    if stats.shell_sups.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::NonFinite("shell sups (zero sup for a nonzero measure)"));
    }
    let count = n.div_ceil(3).max(3);
    // Decay is a statement about all large frequencies, so each shell
    // reports the largest sup at or beyond it. The outermost shell has no
    // observed tail and only enters through the shells before it.
    let mut tail = stats.shell_sups.clone();
    for j in (0..n - 1).rev() {
        tail[j] = tail[j].max(tail[j + 1]);
    }
    let window = n - 1 - count..n - 1;
    let xs: Vec<f64> = stats.radii[window.clone()].iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = tail[window].iter().map(|s| s.ln()).collect();
    let decay = |slope: f64| (-2.0 * slope).max(0.0);
    let estimate = decay(ols_slope(&xs, &ys));
    let mut lo = estimate;
    let mut hi = estimate;
    for i in 1..count {
        let v = decay((ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]));
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((estimate, lo, hi))
}

/// Lattice settings for the bisection route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeBudget {
    pub alpha: f64,
    pub r_max: f64,
}

impl ProbeBudget {
    pub fn default_for(spec: &MeasureSpec) -> Self {
        ProbeBudget {
            alpha: default_alpha(spec),
            r_max: default_lattice_rmax(spec),
        }
    }
}

/// One point of a spectrum curve with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DimEstimate {
    pub theta: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub flag: RegimeFlag,
    /// Ball-average exponents, absent on the sup-decay route.
    pub strichartz: Option<StrichartzReport>,
    /// Bisection diagnostics, present on the clamped route.
    pub bisection: Option<Bisection>,
}

/// Record of a bisection over `s` on lattice-energy verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct Bisection {
    /// Final bracket: convergent at `lo`, divergent at `hi` (unless saturated).
    pub lo: f64,
    pub hi: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
    /// Roots found with alternative verdict windows.
    pub window_roots: Vec<f64>,
    /// The search interval ran out before a sign change was found.
    pub saturated: bool,
}

impl Bisection {
    /// True when the stored tail slopes change sign across the bracket.
    pub fn brackets_sign_change(&self) -> bool {
        self.saturated || (self.slope_lo < 0.0 && self.slope_hi >= 0.0)
    }
}

/// Locates the largest `s` in `[lo, hi]` whose lattice energy converges.
fn bisect(samples: &LatticeSamples, theta: f64, lo: f64, hi: f64, window: Option<usize>) -> (f64, f64, f64, f64) {
    let slope = |s: f64| {
        let e = samples.energy(s, theta);
        match window {
            Some(w) => e.tail_slope_over(w),
            None => e.tail_slope(),
        }
    };
    let (mut lo, mut hi) = (lo, hi);
    let mut slope_lo = slope(lo);
    let mut slope_hi = slope(hi);
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        let m = slope(mid);
        if m >= 0.0 {
            hi = mid;
            slope_hi = m;
        } else {
            lo = mid;
            slope_lo = m;
        }
    }
    (lo, hi, slope_lo, slope_hi)
}

/// Finiteness threshold of the lattice energy at `theta`, searched on
/// `[dθ, 2d+2]` and extended down to 0 if already divergent at `dθ`.
pub fn energy_threshold(samples: &LatticeSamples, theta: f64) -> Bisection {
    let d = samples.ambient_dim as f64;
    let verdict = |s: f64| samples.energy(s, theta).tail_slope();
    let ceiling = 2.0 * d + 2.0;
    let (lo, hi) = if verdict(d * theta) >= 0.0 { (0.0, d * theta) } else { (d * theta, ceiling) };
    let slope_at_lo = verdict(lo);
    let slope_at_hi = verdict(hi);
    if slope_at_lo >= 0.0 {
        // Divergent everywhere on the search range.
        return Bisection {
            lo,
            hi: lo,
            slope_lo: slope_at_lo,
            slope_hi: slope_at_lo,
            window_roots: vec![lo],
            saturated: true,
        };
    }
    if slope_at_hi < 0.0 {
        return Bisection {
            lo: hi,
            hi,
            slope_lo: slope_at_hi,
            slope_hi: slope_at_hi,
            window_roots: vec![hi],
            saturated: true,
        };
    }
    let (blo, bhi, slope_lo, slope_hi) = bisect(samples, theta, lo, hi, None);
    let increments = samples.radii.len().saturating_sub(1);
    let mut window_roots = Vec::new();
    for w in [3, increments.div_ceil(2).max(3)] {
        let (a, b, sa, sb) = bisect(samples, theta, lo, hi, Some(w));
        if sa < 0.0 && sb >= 0.0 {
            window_roots.push(0.5 * (a + b));
        }
    }
    Bisection {
        lo: blo,
        hi: bhi,
        slope_lo,
        slope_hi,
        window_roots,
        saturated: false,
    }
}

/// Estimate of the spectrum at one `θ > 0`. The lattice is built only when
/// the clamped route needs it.
pub fn estimate_dim_theta(
    spec: &MeasureSpec,
    theta: f64,
    stats: &ShellStats,
    probe: ProbeBudget,
) -> Result<DimEstimate> {
    let mut cache = None;
    estimate_with_lattice(spec, theta, stats, probe, &mut cache)
}

fn estimate_with_lattice(
    spec: &MeasureSpec,
    theta: f64,
    stats: &ShellStats,
    probe: ProbeBudget,
    lattice: &mut Option<LatticeSamples>,
) -> Result<DimEstimate> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::arg(format!("theta must lie in (0, 1], got {theta}")));
    }
    if (stats.theta - theta).abs() > 1e-12 {
        return Err(Error::arg("shell statistics were computed for a different theta"));
    }
    let d = spec.ambient_dim() as f64;
    let report = strichartz_exponents(stats, 1.0 / 3.0)?;
    if report.f_lower < d * theta - REGIME_MARGIN {
        let estimate = report.estimate;
        return Ok(DimEstimate {
            theta,
            estimate,
            lower: report.f_lower.min(estimate),
            upper: report.f_upper.max(estimate),
            flag: RegimeFlag::ExactRegime,
            strichartz: Some(report),
            bisection: None,
        });
    }
    if lattice.is_none() {
        *lattice = Some(LatticeSamples::build(spec, probe.alpha, probe.r_max)?);
    }
    let samples = lattice.as_ref().expect("lattice just built");
    let bisection = energy_threshold(samples, theta);
    let estimate = 0.5 * (bisection.lo + bisection.hi);
    let lower = bisection.window_roots.iter().copied().fold(bisection.lo, f64::min);
    let upper = bisection.window_roots.iter().copied().fold(bisection.hi, f64::max);
    Ok(DimEstimate {
        theta,
        estimate,
        lower,
        upper,
        flag: RegimeFlag::Clamped,
        strichartz: Some(report),
        bisection: Some(bisection),
    })
}

/// Budgets shared by every `θ` of a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumBudget {
    pub shell_rmax: f64,
    pub shell_budget: usize,
    pub probe: ProbeBudget,
    pub seed: u64,
}

impl SpectrumBudget {
    pub fn default_for(spec: &MeasureSpec) -> Self {
        SpectrumBudget {
            shell_rmax: default_shell_rmax(spec.ambient_dim()),
            shell_budget: 16_384,
            probe: ProbeBudget::default_for(spec),
            seed: 0,
        }
    }
}

/// Dimension estimates over a grid of `θ`, reported raw (no smoothing).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCurve {
    pub ambient_dim: usize,
    pub points: Vec<DimEstimate>,
}

impl SpectrumCurve {
    pub fn thetas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.theta).collect()
    }

    pub fn dim_estimates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.estimate).collect()
    }

    pub fn lower_band(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lower).collect()
    }

    pub fn upper_band(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.upper).collect()
    }

    pub fn flags(&self) -> Vec<RegimeFlag> {
        self.points.iter().map(|p| p.flag).collect()
    }
}

/// Spectrum estimates on a sorted grid in `[0, 1]`; `θ = 0` uses sup decay.
pub fn spectrum_curve(spec: &MeasureSpec, theta_grid: &[f64], budget: SpectrumBudget) -> Result<SpectrumCurve> {
    if theta_grid.is_empty() {
        return Err(Error::arg("theta grid is empty"));
    }
    if theta_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::arg("theta grid must lie in [0, 1]"));
    }
    if theta_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::arg("theta grid must be sorted"));
    }
    let positive: Vec<f64> = theta_grid.iter().copied().filter(|&t| t > 0.0).collect();
    let stat_thetas = if positive.is_empty() { vec![1.0] } else { positive.clone() };
    let stats = shell_stats_multi(spec, &stat_thetas, budget.shell_rmax, budget.shell_budget, budget.seed)?;
    let mut lattice = None;
    let mut points = Vec::with_capacity(theta_grid.len());
    for &theta in theta_grid {
        if theta == 0.0 {
            let (estimate, lower, upper) = fourier_dim_report(&stats[0])?;
            points.push(DimEstimate {
                theta,
                estimate,
                lower: lower.min(estimate),
                upper: upper.max(estimate),
                flag: RegimeFlag::SupDecay,
                strichartz: None,
                bisection: None,
            });
        } else {
            let idx = stat_thetas.iter().position(|&t| t == theta).expect("theta has stats");
            points.push(estimate_with_lattice(spec, theta, &stats[idx], budget.probe, &mut lattice)?);
        }
    }
    Ok(SpectrumCurve {
        ambient_dim: spec.ambient_dim(),
        points,
    })
}

/// Evenly spaced grid `start, ..., stop` with `count` points.
pub fn theta_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::shell_stats;
    use proptest::prelude::*;

    fn dirac() -> MeasureSpec {
        MeasureSpec::dirac(1).unwrap()
    }

    fn lebesgue(d: usize) -> MeasureSpec {
        MeasureSpec::uniform_cube(d).unwrap()
    }

    fn stats(spec: &MeasureSpec, theta: f64) -> ShellStats {
        let b = SpectrumBudget::default_for(spec);
        shell_stats(spec, theta, b.shell_rmax, b.shell_budget, b.seed).unwrap()
    }

    fn estimate(spec: &MeasureSpec, theta: f64) -> DimEstimate {
        estimate_dim_theta(spec, theta, &stats(spec, theta), ProbeBudget::default_for(spec)).unwrap()
    }

    fn assert_ordered(p: &DimEstimate) {
        assert!(p.lower <= p.estimate && p.estimate <= p.upper, "{p:?}");
    }

    #[test]
    fn flags_are_spelled_for_csv() {
        let names: Vec<String> = [RegimeFlag::ExactRegime, RegimeFlag::Clamped, RegimeFlag::SupDecay]
            .iter()
            .map(|f| f.to_string())
            .collect();
        assert_eq!(names, ["EXACT_REGIME", "CLAMPED", "SUP_DECAY"]);
    }

    #[test]
    fn strichartz_point_mass_does_not_decay() {
        let r = strichartz_exponents(&stats(&dirac(), 1.0), 1.0 / 3.0).unwrap();
        assert!(r.f_upper <= 0.05, "{r:?}");
    }

    #[test]
    fn strichartz_at_full_theta_recovers_dimension() {
        let line = strichartz_exponents(&stats(&lebesgue(1), 1.0), 1.0 / 3.0).unwrap();
        assert!((line.estimate - 1.0).abs() <= 0.1, "{line:?}");
        let circle = strichartz_exponents(&stats(&MeasureSpec::sphere(1).unwrap(), 1.0), 1.0 / 3.0).unwrap();
        assert!((circle.estimate - 1.0).abs() <= 0.1, "{circle:?}");
        assert!(circle.f_lower <= circle.estimate && circle.estimate <= circle.f_upper);
    }

    #[test]
    fn strichartz_argument_checks() {
        let s = stats(&lebesgue(1), 1.0);
        assert!(strichartz_exponents(&s, 0.0).is_err());
        assert!(strichartz_exponents(&s, 1.5).is_err());
        let short = shell_stats(&lebesgue(1), 1.0, 16.0, 1000, 0).unwrap();
        assert!(matches!(
            strichartz_exponents(&short, 0.5),
            Err(Error::TooFewScales { .. })
        ));
        assert!(fourier_dim_report(&short).is_err());
    }

    #[test]
    fn interval_is_clamped_at_half_theta() {
        let p = estimate(&lebesgue(1), 0.5);
        assert_eq!(p.flag, RegimeFlag::Clamped);
        assert!((p.estimate - 2.0).abs() <= 0.15, "{p:?}");
        assert_ordered(&p);
        assert!(p.bisection.as_ref().unwrap().brackets_sign_change());
    }

    #[test]
    fn two_sphere_is_exact_at_full_theta() {
        let sphere = MeasureSpec::sphere(2).unwrap();
        let p = estimate(&sphere, 1.0);
        assert_eq!(p.flag, RegimeFlag::ExactRegime);
        assert!((p.estimate - 2.0).abs() <= 0.15, "{p:?}");
        assert!(p.estimate <= 3.0 + 0.05);
        assert_ordered(&p);
    }

    #[test]
    fn point_mass_has_zero_spectrum() {
        for theta in [0.25, 1.0] {
            let p = estimate(&dirac(), theta);
            assert!(p.estimate.abs() <= 0.05, "{p:?}");
        }
    }

    #[test]
    fn estimate_rejects_mismatched_theta() {
        let s = stats(&dirac(), 0.5);
        let probe = ProbeBudget::default_for(&dirac());
        assert!(estimate_dim_theta(&dirac(), 0.75, &s, probe).is_err());
        assert!(estimate_dim_theta(&dirac(), 0.0, &s, probe).is_err());
    }

    #[test]
    fn fourier_dimension_examples() {
        let interval = estimate_fourier_dim(&stats(&lebesgue(1), 1.0)).unwrap();
        assert!((interval - 2.0).abs() <= 0.2, "{interval}");
        let cantor = estimate_fourier_dim(&stats(&MeasureSpec::cantor(), 1.0)).unwrap();
        assert!(cantor <= 0.1, "{cantor}");
        let square = MeasureSpec::product(lebesgue(1), lebesgue(1));
        let (est, lo, hi) = fourier_dim_report(&stats(&square, 1.0)).unwrap();
        assert!((est - 2.0).abs() <= 0.2, "{est}");
        assert!(lo <= est && est <= hi);
    }

    #[test]
    fn square_curve_follows_lebesgue_formula() {
        let spec = lebesgue(2);
        let curve = spectrum_curve(&spec, &[0.0, 0.5, 1.0], SpectrumBudget::default_for(&spec)).unwrap();
        for (p, want) in curve.points.iter().zip([2.0, 2.5, 3.0]) {
            assert!((p.estimate - want).abs() <= 0.2, "{p:?}");
            assert_ordered(p);
        }
        assert_eq!(curve.flags()[0], RegimeFlag::SupDecay);
    }

    #[test]
    fn circle_curve_is_flat() {
        let spec = MeasureSpec::sphere(1).unwrap();
        let grid = theta_grid(0.0, 1.0, 5);
        let curve = spectrum_curve(&spec, &grid, SpectrumBudget::default_for(&spec)).unwrap();
        for p in &curve.points {
            assert!((p.estimate - 1.0).abs() <= 0.15, "{p:?}");
            if p.flag == RegimeFlag::ExactRegime {
                assert!(p.estimate <= 2.0 * p.theta + 0.05);
            }
        }
    }

    #[test]
    fn point_mass_curve_is_zero() {
        let curve = spectrum_curve(&dirac(), &theta_grid(0.0, 1.0, 5), SpectrumBudget::default_for(&dirac())).unwrap();
        assert!(curve.dim_estimates().iter().all(|v| v.abs() <= 0.05), "{curve:?}");
        assert_eq!(curve.thetas(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn interval_curve_is_continuous_across_nearby_thetas() {
        let spec = lebesgue(1);
        let curve = spectrum_curve(&spec, &[0.5, 0.55, 0.6], SpectrumBudget::default_for(&spec)).unwrap();
        let v = curve.dim_estimates();
        assert!(v.windows(2).all(|w| (w[1] - w[0]).abs() <= 0.2), "{v:?}");
    }

    #[test]
    fn curve_argument_checks() {
        let b = SpectrumBudget::default_for(&dirac());
        assert!(spectrum_curve(&dirac(), &[], b).is_err());
        assert!(spectrum_curve(&dirac(), &[0.5, 0.25], b).is_err());
        assert!(spectrum_curve(&dirac(), &[1.5], b).is_err());
        assert!(spectrum_curve(&dirac(), &[-0.1], b).is_err());
    }

    #[test]
    fn curves_are_deterministic() {
        let spec = MeasureSpec::cantor();
        let b = SpectrumBudget::default_for(&spec);
        let grid = [0.0, 0.5];
        assert_eq!(spectrum_curve(&spec, &grid, b).unwrap(), spectrum_curve(&spec, &grid, b).unwrap());
    }

    proptest! {
        #[test]
        fn theta_grid_hits_endpoints(start in 0.0f64..0.5, span in 0.0f64..0.5, count in 2usize..20) {
            let g = theta_grid(start, start + span, count);
            prop_assert_eq!(g.len(), count);
            prop_assert_eq!(g[0], start);
            prop_assert!((g[count - 1] - (start + span)).abs() < 1e-12);
            prop_assert!(g.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

        #[test]
        fn atomic_curves_are_ordered_and_bounded(
            atoms in proptest::collection::vec((-1.0f64..1.0, 0.1f64..1.0), 1..4),
            theta in 0.1f64..1.0,
        ) {
            let (points, weights): (Vec<_>, Vec<_>) = atoms.into_iter().map(|(x, w)| (vec![x], w)).unzip();
            let spec = MeasureSpec::atomic(points, weights).unwrap();
            let curve = spectrum_curve(&spec, &[0.0, theta], SpectrumBudget::default_for(&spec)).unwrap();
            for p in &curve.points {
                prop_assert!(p.lower <= p.estimate && p.estimate <= p.upper);
                prop_assert!(p.estimate >= 0.0 && p.estimate <= 4.0);
                if p.flag == RegimeFlag::ExactRegime {
                    prop_assert!(p.estimate <= p.theta + 0.05);
                }
                if let Some(b) = &p.bisection {
                    prop_assert!(b.brackets_sign_change());
                }
            }
        }
    }
}
