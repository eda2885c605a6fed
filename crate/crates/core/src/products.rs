//! Product measures, product sets, and numerical checks of the bounds relating
//! the spectrum of a product to the spectra of its marginals.
//!
//! For `μ` on `R^k` and `ν` on `R^m` the spectrum of `μ × ν` lies between
//!
//! * `min{kθ + dim ν, dim μ + mθ, dim μ + dim ν}` and
//! * `min{kθ + dim ν, dim μ + mθ}`, and also below
//!   `max{F̄_μ(θ) + dim ν, dim μ + F̄_ν(θ)}` with `F̄` the upper ball-average
//!   exponent.
//!
//! Estimates come with envelope bands; a bound is reported as violated only
//! when it fails for every value inside the bands, widened by
//! [`ESTIMATOR_TOL`].

use std::fmt;

use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::setdim::{frostman_energy, PointCloud};
use crate::spectrum::{spectrum_curve, DimEstimate, ProbeBudget, SpectrumBudget, SpectrumCurve};
use crate::tolerances::{ESTIMATOR_TOL, SALEM_BOUNDARY_MARGIN, SOLVER_GAP_TOL};
use crate::transform::{default_lattice_rmax, default_shell_rmax};

/// The product measure `μ × ν` on `R^{k+m}`.
pub fn product_spec(mu: MeasureSpec, nu: MeasureSpec) -> MeasureSpec {
    MeasureSpec::product(mu, nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Consistent,
    ViolationCandidate,
    /// Not decidable from one-sided approximations; the margin is reported only.
    Informative,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Consistent => "CONSISTENT",
            Verdict::ViolationCandidate => "VIOLATION_CANDIDATE",
            Verdict::Informative => "INFORMATIVE",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An estimate with its envelope band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Banded {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Banded {
    pub fn exact(value: f64) -> Self {
        Banded {
            value,
            lower: value,
            upper: value,
        }
    }

    fn from_estimate(e: &DimEstimate) -> Self {
        Banded {
            value: e.estimate,
            lower: e.lower.min(e.estimate),
            upper: e.upper.max(e.estimate),
        }
    }

    fn capped(self, cap: f64) -> Self {
        Banded {
            value: self.value.min(cap),
            lower: self.lower.min(cap),
            upper: self.upper.min(cap),
        }
    }
}

/// The three-term lower bound for a product of marginals on `R^k` and `R^m`.
pub fn product_lower_bound(k: usize, m: usize, theta: f64, dim_mu: f64, dim_nu: f64) -> f64 {
    (k as f64 * theta + dim_nu)
        .min(dim_mu + m as f64 * theta)
        .min(dim_mu + dim_nu)
}

/// The two-term upper bound from the marginal spectra.
pub fn product_upper_bound(k: usize, m: usize, theta: f64, dim_mu: f64, dim_nu: f64) -> f64 {
    (k as f64 * theta + dim_nu).min(dim_mu + m as f64 * theta)
}

/// The upper bound through the upper ball-average exponents `F̄`.
pub fn product_average_bound(dim_mu: f64, dim_nu: f64, f_upper_mu: f64, f_upper_nu: f64) -> f64 {
    (f_upper_mu + dim_nu).max(dim_mu + f_upper_nu)
}

/// One `θ` of a product bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRecord {
    pub theta: f64,
    /// The spectrum estimate of the product.
    pub lhs: Banded,
    pub mu: Banded,
    pub nu: Banded,
    /// Upper ball-average exponents of the marginals (0 at `θ = 0`).
    pub f_upper_mu: f64,
    pub f_upper_nu: f64,
    /// Lower bound at the central marginal estimates.
    pub lower_formula: f64,
    /// Two-term upper bound at the central marginal estimates.
    pub upper_formula_dims: f64,
    /// Ball-average upper bound at the central marginal estimates.
    pub upper_formula_averages: f64,
    /// `lhs - lower_formula`.
    pub lower_margin: f64,
    /// `min(upper formulas) - lhs`.
    pub upper_margin: f64,
    /// Verdict on the lower bound.
    pub lower_verdict: Verdict,
    /// Verdict on the upper bounds.
    pub upper_verdict: Verdict,
}

impl BoundRecord {
    /// The worse of the two verdicts.
    pub fn verdict(&self) -> Verdict {
        if self.lower_verdict == Verdict::ViolationCandidate || self.upper_verdict == Verdict::ViolationCandidate {
            Verdict::ViolationCandidate
        } else if self.upper_verdict == Verdict::Informative {
            Verdict::Informative
        } else {
            Verdict::Consistent
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub mu_dim: usize,
    pub nu_dim: usize,
    pub records: Vec<BoundRecord>,
}

impl BoundReport {
    pub fn thetas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.theta).collect()
    }

    pub fn violations(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.verdict() == Verdict::ViolationCandidate)
            .count()
    }
}

/// Budgets for the marginal and product spectrum estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductBudgets {
    pub mu: SpectrumBudget,
    pub nu: SpectrumBudget,
    pub product: SpectrumBudget,
}

impl ProductBudgets {
    /// Default budgets, with every shell estimate cut off at the product's
    /// outer radius. Decay slopes of self-similar transforms drift with the
    /// frequency window, so marginals and product are compared on one window.
    pub fn default_for(mu: &MeasureSpec, nu: &MeasureSpec, seed: u64) -> Self {
        let product = product_spec(mu.clone(), nu.clone());
        let shell_rmax = default_shell_rmax(product.ambient_dim());
        let with_seed = |spec: &MeasureSpec, offset: u64| SpectrumBudget {
            seed: seed.wrapping_add(offset),
            shell_rmax,
            ..SpectrumBudget::default_for(spec)
        };
        ProductBudgets {
            mu: with_seed(mu, 0),
            nu: with_seed(nu, 1),
            product: with_seed(&product, 2),
        }
    }
}

fn f_upper(e: &DimEstimate) -> f64 {
    e.strichartz.as_ref().map_or(0.0, |s| s.f_upper)
}

/// Classifies one `θ` given the three spectrum estimates.
///
/// `cap` bounds every spectrum of a set (`d` for set products, infinite for
/// measures). With `one_sided`, the upper bounds are only reported.
#[allow(clippy::too_many_arguments)]
fn bound_record(
    theta: f64,
    k: usize,
    m: usize,
    lhs: Banded,
    mu: Banded,
    nu: Banded,
    f_upper_mu: f64,
    f_upper_nu: f64,
    cap: f64,
    one_sided: bool,
) -> BoundRecord {
    let lower_at = |a: f64, b: f64| product_lower_bound(k, m, theta, a, b).min(cap);
    let upper_at = |a: f64, b: f64, fa: f64, fb: f64| {
        let dims = product_upper_bound(k, m, theta, a, b).min(cap);
        if one_sided {
            dims
        } else {
            dims.min(product_average_bound(a, b, fa, fb))
        }
    };
    let lower_formula = lower_at(mu.value, nu.value);
    let upper_formula_dims = product_upper_bound(k, m, theta, mu.value, nu.value).min(cap);
    let upper_formula_averages = product_average_bound(mu.value, nu.value, f_upper_mu, f_upper_nu);

    // The bounds are monotone in the marginal spectra, so the weakest form of
    // each is at the matching band edge.
    let weakest_lower = lower_at(mu.lower, nu.lower);
    let slack = ESTIMATOR_TOL;
    let weakest_upper = upper_at(mu.upper, nu.upper, f_upper_mu + slack, f_upper_nu + slack);
    let lower_verdict = if lhs.upper + slack < weakest_lower {
        Verdict::ViolationCandidate
    } else {
        Verdict::Consistent
    };
    let upper_verdict = if one_sided {
        Verdict::Informative
    } else if lhs.lower - slack > weakest_upper {
        Verdict::ViolationCandidate
    } else {
        Verdict::Consistent
    };
    let best_upper = if one_sided {
        upper_formula_dims
    } else {
        upper_formula_dims.min(upper_formula_averages)
    };
    BoundRecord {
        theta,
        lhs,
        mu,
        nu,
        f_upper_mu,
        f_upper_nu,
        lower_formula,
        upper_formula_dims,
        upper_formula_averages,
        lower_margin: lhs.value - lower_formula,
        upper_margin: best_upper - lhs.value,
        lower_verdict,
        upper_verdict,
    }
}

/// Spectrum estimates of `μ`, `ν` and `μ × ν` compared against the product bounds.
pub fn check_product_bounds(
    mu: &MeasureSpec,
    nu: &MeasureSpec,
    theta_grid: &[f64],
    budgets: ProductBudgets,
) -> Result<BoundReport> {
    let product = product_spec(mu.clone(), nu.clone());
    let curve_mu = spectrum_curve(mu, theta_grid, budgets.mu)?;
    let curve_nu = spectrum_curve(nu, theta_grid, budgets.nu)?;
    let curve_product = spectrum_curve(&product, theta_grid, budgets.product)?;
    Ok(compare_curves(mu.ambient_dim(), nu.ambient_dim(), &curve_mu, &curve_nu, &curve_product))
}

/// Bound records from precomputed spectrum curves on a common grid.
pub fn compare_curves(
    k: usize,
    m: usize,
    curve_mu: &SpectrumCurve,
    curve_nu: &SpectrumCurve,
    curve_product: &SpectrumCurve,
) -> BoundReport {
    let records = curve_product
        .points
        .iter()
        .zip(&curve_mu.points)
        .zip(&curve_nu.points)
        .map(|((p, a), b)| {
            bound_record(
                p.theta,
                k,
                m,
                Banded::from_estimate(p),
                Banded::from_estimate(a),
                Banded::from_estimate(b),
                f_upper(a),
                f_upper(b),
                f64::INFINITY,
                false,
            )
        })
        .collect();
    BoundReport {
        mu_dim: k,
        nu_dim: m,
        records,
    }
}

/// An `n`-fold product measure with the predicted spectrum, when the
/// prediction applies.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpec {
    pub spec: MeasureSpec,
    pub n: usize,
    pub theta: f64,
    /// `(n-1)dθ + dim μ`, present only when `dθ <= dim μ`.
    pub prediction: Option<f64>,
}

/// `μ^n` and its predicted spectrum at `θ` from an estimate of `dim μ`.
///
/// Once the spectrum of `μ` reaches the trivial level `dθ`, each further
/// factor adds exactly `dθ`.
pub fn power_spec(mu: &MeasureSpec, n: usize, theta: f64, dim_mu: f64) -> Result<PowerSpec> {
    if n == 0 {
        return Err(Error::arg("power must be at least 1"));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::arg(format!("theta must lie in [0, 1], got {theta}")));
    }
    mu.validate()?;
    let d = mu.ambient_dim() as f64;
    let spec = (1..n).fold(mu.clone(), |acc, _| MeasureSpec::product(acc, mu.clone()));
    let prediction = (d * theta <= dim_mu).then(|| (n - 1) as f64 * d * theta + dim_mu);
    Ok(PowerSpec {
        spec,
        n,
        theta,
        prediction,
    })
}

/// A point cloud with candidate probability measures on it.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub cloud: PointCloud,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub label: String,
    /// Probability weights over the cloud's points.
    pub weights: Vec<f64>,
}

impl Candidate {
    /// The candidate as an atomic measure on its support.
    pub fn measure(&self, cloud: &PointCloud) -> Result<MeasureSpec> {
        let (points, weights): (Vec<Vec<f64>>, Vec<f64>) = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (cloud.point(i).to_vec(), w))
            .unzip();
        MeasureSpec::atomic(points, weights)
    }
}

/// Uniform weights plus the minimizers of the discrete `s`-energy for each `s`.
pub fn candidate_family(cloud: PointCloud, s_grid: &[f64]) -> Result<CandidateSet> {
    let n = cloud.len();
    let mut candidates = vec![Candidate {
        label: "uniform".into(),
        weights: vec![1.0 / n as f64; n],
    }];
    if n > 1 {
        for &s in s_grid {
            let energy = frostman_energy(&cloud, s, SOLVER_GAP_TOL)?;
            candidates.push(Candidate {
                label: format!("energy s={s}"),
                weights: energy.minimizer,
            });
        }
    }
    Ok(CandidateSet { cloud, candidates })
}

/// Budgets for spectra of measures on point clouds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetBudget {
    pub shell_budget: usize,
    pub seed: u64,
}

impl Default for SetBudget {
    fn default() -> Self {
        SetBudget {
            shell_budget: 4096,
            seed: 0,
        }
    }
}

/// Largest dyadic radius below the frequency `1/(2δ)` at which a cloud of
/// spacing `δ` stops resembling the set it samples.
fn resolution_radius(separation: f64) -> f64 {
    if separation.is_finite() {
        2f64.powf((0.5 / separation).log2().floor())
    } else {
        f64::INFINITY
    }
}

fn cloud_budget(spec: &MeasureSpec, separation: f64, budget: SetBudget) -> Result<SpectrumBudget> {
    let d = spec.ambient_dim();
    let limit = resolution_radius(separation);
    let shell_rmax = default_shell_rmax(d).min(limit);
    if shell_rmax < 128.0 {
        return Err(Error::Cloud(format!(
            "cloud spacing {separation} resolves frequencies only up to {limit}; at least 128 is needed"
        )));
    }
    let probe = ProbeBudget::default_for(spec);
    Ok(SpectrumBudget {
        shell_rmax,
        shell_budget: budget.shell_budget,
        probe: ProbeBudget {
            alpha: probe.alpha,
            r_max: default_lattice_rmax(spec).min(limit),
        },
        seed: budget.seed,
    })
}

/// The best candidate spectrum at one `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SetEstimate {
    pub theta: f64,
    pub value: Banded,
    /// Index of the witnessing candidate.
    pub candidate: usize,
}

/// Set-product bounds evaluated with candidate measures.
///
/// Every set-level quantity here is a LOWER-BOUND APPROXIMATION of a
/// supremum over all measures. The lower bound is checked exactly as for
/// measures, since the product of the best marginal candidates is itself a
/// candidate on `X × Y`; the upper bounds are reported as informative.
#[derive(Debug, Clone, PartialEq)]
pub struct SetBoundReport {
    pub report: BoundReport,
    pub x_best: Vec<SetEstimate>,
    pub y_best: Vec<SetEstimate>,
    /// Candidate index pairs whose product witnesses the left-hand side.
    pub product_witness: Vec<(usize, usize)>,
}

/// Checks the set-product bounds on `X × Y` by candidate measures.
///
/// Each candidate is an atomic measure, whose transform never decays, so
/// spectra are read off frequencies below the clouds' resolution.
pub fn check_set_product_bounds(
    x: &CandidateSet,
    y: &CandidateSet,
    theta_grid: &[f64],
    budget: SetBudget,
) -> Result<SetBoundReport> {
    if x.candidates.is_empty() || y.candidates.is_empty() {
        return Err(Error::arg("each set needs at least one candidate measure"));
    }
    let k = x.cloud.dim();
    let m = y.cloud.dim();
    let sep_x = x.cloud.min_separation();
    let sep_y = y.cloud.min_separation();

    let curves = |set: &CandidateSet, sep: f64| -> Result<Vec<SpectrumCurve>> {
        set.candidates
            .iter()
            .map(|c| {
                let spec = c.measure(&set.cloud)?;
                spectrum_curve(&spec, theta_grid, cloud_budget(&spec, sep, budget)?)
            })
            .collect()
    };
    let x_curves = curves(x, sep_x)?;
    let y_curves = curves(y, sep_y)?;
    let best = |curves: &[SpectrumCurve]| -> Vec<SetEstimate> {
        (0..theta_grid.len())
            .map(|t| {
                let (i, p) = curves
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, &c.points[t]))
                    .max_by(|a, b| a.1.estimate.total_cmp(&b.1.estimate))
                    .expect("at least one candidate");
                SetEstimate {
                    theta: p.theta,
                    value: Banded::from_estimate(p),
                    candidate: i,
                }
            })
            .collect()
    };
    let x_best = best(&x_curves);
    let y_best = best(&y_curves);

    let mut pairs: Vec<(usize, usize)> = vec![(0, 0)];
    for (a, b) in x_best.iter().zip(&y_best) {
        if !pairs.contains(&(a.candidate, b.candidate)) {
            pairs.push((a.candidate, b.candidate));
        }
    }
    let product_curves = pairs
        .iter()
        .map(|&(i, j)| {
            let spec = product_spec(
                x.candidates[i].measure(&x.cloud)?,
                y.candidates[j].measure(&y.cloud)?,
            );
            spectrum_curve(&spec, theta_grid, cloud_budget(&spec, sep_x.min(sep_y), budget)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let d = (k + m) as f64;
    let mut records = Vec::with_capacity(theta_grid.len());
    let mut product_witness = Vec::with_capacity(theta_grid.len());
    for t in 0..theta_grid.len() {
        let (w, p) = product_curves
            .iter()
            .enumerate()
            .map(|(w, c)| (w, &c.points[t]))
            .max_by(|a, b| a.1.estimate.total_cmp(&b.1.estimate))
            .expect("at least one product candidate");
        product_witness.push(pairs[w]);
        records.push(bound_record(
            p.theta,
            k,
            m,
            Banded::from_estimate(p).capped(d),
            x_best[t].value,
            y_best[t].value,
            0.0,
            0.0,
            d,
            true,
        ));
    }
    Ok(SetBoundReport {
        report: BoundReport {
            mu_dim: k,
            nu_dim: m,
            records,
        },
        x_best,
        y_best,
        product_witness,
    })
}

/// One refinement probe of the discrete energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyProbe {
    pub s: f64,
    pub coarse_energy: f64,
    pub fine_energy: f64,
    /// `log2(fine / coarse)`.
    pub growth: f64,
    /// `s / (1 + max(growth, 0))`.
    pub proxy: f64,
}

/// Hausdorff dimension proxy of a cloud from the refinement growth of its
/// least `s`-energy.
#[derive(Debug, Clone, PartialEq)]
pub struct HausdorffProxy {
    pub value: f64,
    /// Change of the proxy over the last step of the `s` grid.
    pub band: f64,
    pub probes: Vec<EnergyProbe>,
}

/// Default energy exponents `0.1d, 0.2d, ..., 2d`.
pub fn default_energy_grid(d: usize) -> Vec<f64> {
    (1..=20).map(|i| 0.1 * i as f64 * d as f64).collect()
}

/// Estimates the Hausdorff dimension of the set sampled by `cloud`.
///
/// The coarse cloud keeps every other point. Above the dimension `t`, the
/// least `s`-energy of an `n`-point sample grows like `n^{s/t - 1}`, so
/// `s / (1 + growth)` recovers `t`; below it the energy stays bounded and the
/// ratio is at most `s`. The proxy is the largest ratio over the `s` grid.
pub fn hausdorff_proxy(cloud: &PointCloud, s_grid: &[f64]) -> Result<HausdorffProxy> {
    if s_grid.is_empty() {
        return Err(Error::arg("need at least one energy exponent"));
    }
    if cloud.len() < 4 {
        return Ok(HausdorffProxy {
            value: 0.0,
            band: 0.0,
            probes: Vec::new(),
        });
    }
    let coarse = PointCloud::new(cloud.points().step_by(2).map(<[f64]>::to_vec).collect())?;
    let probes = s_grid
        .iter()
        .map(|&s| {
            let c = frostman_energy(&coarse, s, SOLVER_GAP_TOL)?.min_energy;
            let f = frostman_energy(cloud, s, SOLVER_GAP_TOL)?.min_energy;
            let growth = (f / c).log2();
            Ok(EnergyProbe {
                s,
                coarse_energy: c,
                fine_energy: f,
                growth,
                proxy: s / (1.0 + growth.max(0.0)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let value = probes.iter().map(|p| p.proxy).fold(0.0, f64::max);
    let band = match probes.as_slice() {
        [.., a, b] => (b.proxy - a.proxy).abs(),
        _ => 0.0,
    };
    Ok(HausdorffProxy { value, band, probes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SalemVerdict {
    /// The Fourier estimate sits clearly below the Hausdorff proxy.
    NotSalem,
    Inconclusive,
}

impl SalemVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            SalemVerdict::NotSalem => "NOT_SALEM",
            SalemVerdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SalemReport {
    /// Proxy for the product: the sum of the factor proxies, which bounds
    /// the Hausdorff dimension of a product from below.
    pub hausdorff_proxy: f64,
    pub hausdorff_band: f64,
    /// Candidate Fourier dimension of the product set, with band.
    pub fourier: Banded,
    pub verdict: SalemVerdict,
    pub x_proxy: HausdorffProxy,
    pub y_proxy: HausdorffProxy,
}

/// Tests whether `X × Y` fails to be Salem: its Fourier dimension estimate
/// must fall below its Hausdorff proxy by more than the combined bands.
///
/// Products of dimension 0 or `d` are excluded and reported inconclusive.
pub fn salem_product_check(x: &PointCloud, y: &PointCloud, budget: SetBudget) -> Result<SalemReport> {
    let d = (x.dim() + y.dim()) as f64;
    let x_proxy = hausdorff_proxy(x, &default_energy_grid(x.dim()))?;
    let y_proxy = if x == y {
        x_proxy.clone()
    } else {
        hausdorff_proxy(y, &default_energy_grid(y.dim()))?
    };
    let hausdorff_proxy = (x_proxy.value + y_proxy.value).min(d);
    let hausdorff_band = x_proxy.band + y_proxy.band;

    let interior = hausdorff_proxy > SALEM_BOUNDARY_MARGIN && hausdorff_proxy < d - SALEM_BOUNDARY_MARGIN;
    let xs = CandidateSet {
        cloud: x.clone(),
        candidates: vec![uniform_candidate(x.len())],
    };
    let ys = CandidateSet {
        cloud: y.clone(),
        candidates: vec![uniform_candidate(y.len())],
    };
    let fourier = if interior {
        check_set_product_bounds(&xs, &ys, &[0.0], budget)?.report.records[0].lhs
    } else {
        Banded::exact(f64::NAN)
    };
    let verdict = if interior && fourier.upper + hausdorff_band + ESTIMATOR_TOL < hausdorff_proxy {
        SalemVerdict::NotSalem
    } else {
        SalemVerdict::Inconclusive
    };
    Ok(SalemReport {
        hausdorff_proxy,
        hausdorff_band,
        fourier,
        verdict,
        x_proxy,
        y_proxy,
    })
}

fn uniform_candidate(n: usize) -> Candidate {
    Candidate {
        label: "uniform".into(),
        weights: vec![1.0 / n as f64; n],
    }
}
