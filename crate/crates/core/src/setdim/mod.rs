//! Capacities, box counting and energies of finite point clouds.
//!
//! The capacity at scale `r` and exponent `s` is the reciprocal of the least
//! double integral of `min{1, (r/|x-y|)^s}` over probability weights on the
//! cloud. Its growth as `r -> 0` measures the box dimension profiles, and
//! those increase to the box dimension as `s -> d`.

mod cloud;
pub mod solver;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

pub(crate) use cloud::csv_io;
pub use cloud::PointCloud;
pub use solver::{DenseKernel, Kernel, Solution, SolverOptions};

use crate::error::{Error, Result};
use crate::report::fmt_float;
use crate::measures::MeasureSpec;
use crate::tolerances::{BOX_COUNT_SNAP, SOLVER_GAP_TOL, SOLVER_MAX_ITERATIONS};
use crate::transform::shell_stats;

/// Fewest scales accepted by the slope estimators.
pub const MIN_SCALES: usize = 6;

/// Largest cloud for which `box_dim_fourier` also solves the `s < d`
/// profiles; their kernel has no sparsity or product structure to exploit.
pub const PROFILE_MAX_POINTS: usize = crate::tolerances::DENSE_KERNEL_MAX_POINTS;

/// `min{1, (r/|x-y|)^s}`, equal to 1 on the diagonal.
pub struct CapacityKernel<'a> {
    cloud: &'a PointCloud,
    r: f64,
    s: f64,
}

impl Kernel for CapacityKernel<'_> {
    fn len(&self) -> usize {
        self.cloud.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        let d2 = self.cloud.distance_sq(i, j);
        if d2 <= self.r * self.r {
            1.0
        } else {
            (self.r * self.r / d2).powf(0.5 * self.s)
        }
    }
}

/// `|x-y|^{-s}` off the diagonal; the diagonal carries the self-energy of a
/// point at the cloud's resolution, `δ^{-s}` with `δ` the least separation.
pub struct RieszKernel<'a> {
    cloud: &'a PointCloud,
    s: f64,
    diagonal: f64,
}

impl Kernel for RieszKernel<'_> {
    fn len(&self) -> usize {
        self.cloud.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diagonal
        } else {
            self.cloud.distance_sq(i, j).powf(-0.5 * self.s)
        }
    }
}

/// Exponent below which Gaussian kernel entries are dropped; `e^{-40}` is
/// about `4e-18`, so the objective moves by less than that.
const GAUSSIAN_CUTOFF: f64 = 40.0;

/// `exp(-π|x-y|²/r²)`, whose integral over `R^d` is `r^d`, the volume of a
/// box of side `r`. Its energy is the spatial side of the Gaussian-weighted
/// Fourier energy `∫ e^{-c r²|z|²} |μ̂(z)|² dz`, the `s = d` member of the
/// capacity family. Entries below `e^{-40}` are zero, which lets columns be
/// assembled from a cell list.
pub struct GaussianKernel<'a> {
    cloud: &'a PointCloud,
    r: f64,
    cells: CellList,
}

impl<'a> GaussianKernel<'a> {
    pub fn new(cloud: &'a PointCloud, r: f64) -> Self {
        let reach = r * (GAUSSIAN_CUTOFF / std::f64::consts::PI).sqrt();
        GaussianKernel {
            cloud,
            r,
            cells: CellList::new(cloud, reach),
        }
    }

    fn value(&self, d2: f64) -> f64 {
        let t = std::f64::consts::PI * d2 / (self.r * self.r);
        if t > GAUSSIAN_CUTOFF {
            0.0
        } else {
            (-t).exp()
        }
    }
}

impl Kernel for GaussianKernel<'_> {
    fn len(&self) -> usize {
        self.cloud.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.value(self.cloud.distance_sq(i, j))
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.cells.for_each_near(self.cloud, j, |i| out[i] = self.value(self.cloud.distance_sq(i, j)));
    }

    fn sparse_column(&self, j: usize, rows: &mut Vec<usize>, values: &mut Vec<f64>) -> bool {
        rows.clear();
        values.clear();
        self.cells.for_each_near(self.cloud, j, |i| {
            let k = self.value(self.cloud.distance_sq(i, j));
            if k > 0.0 {
                rows.push(i);
                values.push(k);
            }
        });
        true
    }
}

/// Points bucketed into cubes of side `reach`, so that all points within
/// `reach` of a point lie in the `3^d` surrounding cubes.
struct CellList {
    reach: f64,
    buckets: std::collections::HashMap<Vec<i64>, Vec<usize>>,
}

impl CellList {
    fn new(cloud: &PointCloud, reach: f64) -> Self {
        let mut buckets: std::collections::HashMap<Vec<i64>, Vec<usize>> = std::collections::HashMap::new();
        for (i, p) in cloud.points().enumerate() {
            buckets.entry(Self::key(p, reach)).or_default().push(i);
        }
        CellList { reach, buckets }
    }

    fn key(p: &[f64], reach: f64) -> Vec<i64> {
        p.iter().map(|x| (x / reach).floor() as i64).collect()
    }

    fn for_each_near(&self, cloud: &PointCloud, j: usize, mut visit: impl FnMut(usize)) {
        let center = Self::key(cloud.point(j), self.reach);
        let d = center.len();
        let mut offset = vec![-1i64; d];
        loop {
            let key: Vec<i64> = center.iter().zip(&offset).map(|(c, o)| c + o).collect();
            if let Some(bucket) = self.buckets.get(&key) {
                bucket.iter().for_each(|&i| visit(i));
            }
            // Odometer over {-1, 0, 1}^d.
            let mut k = 0;
            while k < d && offset[k] == 1 {
                offset[k] = -1;
                k += 1;
            }
            if k == d {
                break;
            }
            offset[k] += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub r: f64,
    pub s: f64,
    /// `1 / (wᵀKw)` at the returned weights.
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub duality_gap: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the gap target.
    pub converged: bool,
}

fn solver_options(tol: f64) -> SolverOptions {
    SolverOptions {
        tol,
        max_iterations: SOLVER_MAX_ITERATIONS,
        seed: 0x5eed,
    }
}

fn result_from(r: f64, s: f64, sol: Solution) -> CapacityResult {
    CapacityResult {
        r,
        s,
        value: 1.0 / sol.objective,
        minimizer: sol.weights,
        duality_gap: sol.gap,
        iterations: sol.iterations,
        converged: sol.converged,
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::arg(format!("solver tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Capacity `C_r^s` of the cloud.
///
/// The solver stops once the duality gap is at most `tol · min(1, wᵀKw)`.
pub fn capacity(cloud: &PointCloud, r: f64, s: f64, tol: f64) -> Result<CapacityResult> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::arg(format!("scale must lie in (0, 1), got {r}")));
    }
    if !(s > 0.0 && s < cloud.dim() as f64) {
        return Err(Error::arg(format!("exponent must lie in (0, {}), got {s}", cloud.dim())));
    }
    check_tol(tol)?;
    let kernel = CapacityKernel { cloud, r, s };
    Ok(result_from(r, s, solver::minimize(&kernel, solver_options(tol))))
}

/// Gaussian capacity `1 / min wᵀGw` with `G = exp(-π|x-y|²/r²)`.
///
/// The Gaussian kernel is a product over coordinates, so on a full Cartesian
/// product cloud its matrix is the Kronecker product of the factor matrices.
/// If `p` and `q` satisfy the optimality conditions on the factors then
/// `p ⊗ q` satisfies them on the product, and by convexity it is the
/// minimizer; such clouds are solved factor by factor.
pub fn gaussian_capacity(cloud: &PointCloud, r: f64, tol: f64) -> Result<CapacityResult> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::arg(format!("scale must lie in (0, 1), got {r}")));
    }
    check_tol(tol)?;
    let d = cloud.dim() as f64;
    if cloud.factors().is_empty() {
        let kernel = GaussianKernel::new(cloud, r);
        return Ok(result_from(r, d, solver::minimize(&kernel, solver_options(tol))));
    }
    let parts = cloud
        .factors()
        .iter()
        .map(|factor| gaussian_capacity(factor, r, tol / cloud.factors().len() as f64))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = vec![1.0];
    let mut objective = 1.0;
    // Per-factor minima of Kw over the factor points.
    let mut floor = 1.0;
    for part in &parts {
        let f = 1.0 / part.value;
        weights = weights.iter().flat_map(|a| part.minimizer.iter().map(move |b| a * b)).collect();
        objective *= f;
        floor *= f - 0.5 * part.duality_gap;
    }
    Ok(CapacityResult {
        r,
        s: d,
        value: 1.0 / objective,
        minimizer: weights,
        // Kw on the product is the tensor product of the factor Kw's, all
        // nonnegative, so its minimum is the product of the factor minima.
        duality_gap: (2.0 * (objective - floor)).max(0.0),
        iterations: parts.iter().map(|p| p.iterations).sum(),
        converged: parts.iter().all(|p| p.converged),
    })
}

/// Scales sorted from coarse to fine after validation.
fn sorted_scales(r_list: &[f64]) -> Result<Vec<f64>> {
    if r_list.len() < MIN_SCALES {
        return Err(Error::TooFewScales {
            needed: MIN_SCALES,
            got: r_list.len(),
        });
    }
    if let Some(r) = r_list.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::arg(format!("scale must lie in (0, 1), got {r}")));
    }
    let mut scales = r_list.to_vec();
    scales.sort_by(|a, b| b.total_cmp(a));
    if scales.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::arg("scales must be distinct"));
    }
    Ok(scales)
}

/// Max and min of consecutive two-point slopes of `ln value` against
/// `ln(1/r)` over the finest third of the scales (at least three scales).
fn tail_slope_range(scales: &[f64], values: &[f64]) -> (f64, f64) {
    let n = scales.len();
    let keep = n.div_ceil(3).max(3).min(n);
    let slopes: Vec<f64> = (n - keep..n - 1)
        .map(|k| (values[k + 1].ln() - values[k].ln()) / (scales[k].ln() - scales[k + 1].ln()))
        .collect();
    let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    (hi, lo)
}

/// Dyadic scales `2^{-from}, ..., 2^{-to}`.
pub fn dyadic_scales(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileDims {
    pub s: f64,
    pub upper: f64,
    pub lower: f64,
    /// One solve per scale, coarse to fine.
    pub capacities: Vec<CapacityResult>,
}

/// Upper and lower `s`-dimensional box profile exponents.
pub fn box_profile_dims(cloud: &PointCloud, s: f64, r_list: &[f64]) -> Result<ProfileDims> {
    let scales = sorted_scales(r_list)?;
    let capacities = scales
        .par_iter()
        .map(|&r| capacity(cloud, r, s, SOLVER_GAP_TOL))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = capacities.iter().map(|c| c.value).collect();
    let (upper, lower) = tail_slope_range(&scales, &values);
    Ok(ProfileDims {
        s,
        upper,
        lower,
        capacities,
    })
}

/// Box exponents from the Gaussian capacities, the `s = d` endpoint of the profiles.
pub fn gaussian_profile_dims(cloud: &PointCloud, r_list: &[f64]) -> Result<ProfileDims> {
    let scales = sorted_scales(r_list)?;
    let capacities = scales
        .par_iter()
        .map(|&r| gaussian_capacity(cloud, r, SOLVER_GAP_TOL))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = capacities.iter().map(|c| c.value).collect();
    let (upper, lower) = tail_slope_range(&scales, &values);
    Ok(ProfileDims {
        s: cloud.dim() as f64,
        upper,
        lower,
        capacities,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxDimFourier {
    pub upper: f64,
    pub lower: f64,
    /// Profile exponents for each `s`, increasing in `s`.
    pub profiles: Vec<ProfileDims>,
    /// Change of the upper profile exponent between consecutive `s`.
    pub trend: Vec<f64>,
    /// The Gaussian endpoint reported as `upper`/`lower`.
    pub endpoint: ProfileDims,
}

/// Box dimension estimates from capacity profiles as `s` increases toward `d`.
///
/// At `s < d` the kernel tail makes the capacity of a full-dimensional set
/// behave like `r^{-s}(1 - r^{d-s})`, which converges to its exponent only
/// once `(d-s)·ln(1/r)` is large, so the profiles sit well below `d` at any
/// resolvable scale. The reported exponents therefore come from the Gaussian
/// endpoint; the profiles and their trend are returned as the convergence
/// diagnostic, for clouds of at most [`PROFILE_MAX_POINTS`] points.
pub fn box_dim_fourier(cloud: &PointCloud, s_sequence: &[f64], r_list: &[f64]) -> Result<BoxDimFourier> {
    let d = cloud.dim() as f64;
    if s_sequence.is_empty() {
        return Err(Error::arg("need at least one exponent"));
    }
    if s_sequence.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("exponents must increase"));
    }
    if let Some(s) = s_sequence.iter().find(|s| !(**s > 0.0 && **s < d)) {
        return Err(Error::arg(format!("exponent must lie in (0, {d}), got {s}")));
    }
    let profiles = if cloud.len() <= PROFILE_MAX_POINTS {
        s_sequence
            .iter()
            .map(|&s| box_profile_dims(cloud, s, r_list))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let trend = profiles.windows(2).map(|w| w[1].upper - w[0].upper).collect();
    let endpoint = gaussian_profile_dims(cloud, r_list)?;
    Ok(BoxDimFourier {
        upper: endpoint.upper,
        lower: endpoint.lower,
        profiles,
        trend,
        endpoint,
    })
}

/// Default exponent sequence `d - 2^{-m}`, `m = 1..=5`.
pub fn default_s_sequence(d: usize) -> Vec<f64> {
    (1..=5).map(|m| d as f64 - 2f64.powi(-m)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxCount {
    pub upper: f64,
    pub lower: f64,
    /// `(r, N_r)` from coarse to fine.
    pub counts: Vec<(f64, usize)>,
}

/// Number of occupied cells of the axis-aligned mesh of side `r` anchored at the origin.
pub fn occupied_cells(cloud: &PointCloud, r: f64) -> usize {
    let d = cloud.dim();
    let keys: Vec<i64> = cloud
        .points()
        .flat_map(|p| p.iter().map(|x| (x / r + BOX_COUNT_SNAP).floor() as i64))
        .collect();
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    let key = |i: usize| &keys[i * d..(i + 1) * d];
    order.sort_unstable_by(|&a, &b| key(a).cmp(key(b)));
    1 + order.windows(2).filter(|w| key(w[0]) != key(w[1])).count()
}

/// Grid-cell box counting dimensions.
pub fn box_counting(cloud: &PointCloud, r_list: &[f64]) -> Result<BoxCount> {
    let scales = sorted_scales(r_list)?;
    let counts: Vec<(f64, usize)> = scales.iter().map(|&r| (r, occupied_cells(cloud, r))).collect();
    let values: Vec<f64> = counts.iter().map(|&(_, n)| n as f64).collect();
    let (upper, lower) = tail_slope_range(&scales, &values);
    Ok(BoxCount { upper, lower, counts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrostmanEnergy {
    pub s: f64,
    pub min_energy: f64,
    pub minimizer: Vec<f64>,
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Least discrete `s`-energy over probability weights on the cloud.
///
/// Off-diagonal pairs contribute `|x_i - x_j|^{-s}`; each point contributes
/// `w_i² δ^{-s}` with `δ` the least separation, the energy of a point mass
/// smeared at the cloud's own resolution. Exponents above the ambient
/// dimension are allowed: growth of the energy under refinement at such `s`
/// is exactly the divergence this probe is meant to show.
pub fn frostman_energy(cloud: &PointCloud, s: f64, tol: f64) -> Result<FrostmanEnergy> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::arg(format!("exponent must be positive, got {s}")));
    }
    check_tol(tol)?;
    let separation = cloud.min_separation();
    if separation == 0.0 {
        return Err(Error::Cloud("coincident points have infinite energy".into()));
    }
    let diagonal = if separation.is_finite() { separation.powf(-s) } else { 1.0 };
    let kernel = RieszKernel { cloud, s, diagonal };
    let sol = solver::minimize(&kernel, solver_options(tol));
    Ok(FrostmanEnergy {
        s,
        min_energy: sol.objective,
        minimizer: sol.weights,
        duality_gap: sol.gap,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgePoint {
    pub r: f64,
    /// Monte-Carlo mean of `min{1, (r/|x-y|)^s}` over independent pairs.
    pub kernel_side: f64,
    pub kernel_stderr: f64,
    /// `R^{-d} ∫_{|z| <= R} |μ̂|²` with `R = 1/r`.
    pub fourier_side: f64,
    pub ratio: f64,
}

/// Compares the kernel energy of a measure with its low-frequency Fourier
/// mass at each scale. Scales must be dyadic, `r = 2^{-k}`.
pub fn kernel_fourier_bridge(
    spec: &MeasureSpec,
    r_list: &[f64],
    s: f64,
    pairs: usize,
    shell_budget: usize,
    seed: u64,
) -> Result<Vec<BridgePoint>> {
    spec.validate()?;
    let d = spec.ambient_dim();
    if !(s > 0.0 && s < d as f64) {
        return Err(Error::arg(format!("exponent must lie in (0, {d}), got {s}")));
    }
    if pairs < 2 {
        return Err(Error::arg("need at least two sample pairs"));
    }
    let mut shell_index = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let k = -r.log2();
        if !(r > 0.0 && r < 1.0) || (k - k.round()).abs() > 1e-9 {
            return Err(Error::arg(format!("scale must be 2^-k with k >= 1, got {r}")));
        }
        shell_index.push(k.round() as usize);
    }
    let finest = *shell_index.iter().max().expect("nonempty after validation");
    let stats = shell_stats(spec, 1.0, 2f64.powi(finest.max(2) as i32), shell_budget, seed)?;

    let xs = spec.sample(pairs, seed);
    let ys = spec.sample(pairs, seed ^ 0x9e37_79b9_7f4a_7c15);
    let dist_sq: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();

    let mass = spec.total_mass();
    let mut out = Vec::with_capacity(r_list.len());
    for (&r, &k) in r_list.iter().zip(&shell_index) {
        let values: Vec<f64> = dist_sq
            .iter()
            .map(|&q| if q <= r * r { 1.0 } else { (r * r / q).powf(0.5 * s) })
            .collect();
        let mean = values.iter().sum::<f64>() / pairs as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (pairs - 1) as f64;
        // Samples are normalized; the double integral carries the squared mass.
        let kernel_side = mean * mass * mass;
        let kernel_stderr = (var / pairs as f64).sqrt() * mass * mass;
        let radius = 2f64.powi(k as i32);
        let fourier_side = stats.shell_integrals[k] / radius.powi(d as i32);
        out.push(BridgePoint {
            r,
            kernel_side,
            kernel_stderr,
            fourier_side,
            ratio: kernel_side / fourier_side,
        });
    }
    Ok(out)
}

/// Writes capacity solves as CSV rows `r,s,capacity,gap,iterations` with a header.
pub fn write_capacity_report<W: std::io::Write>(results: &[CapacityResult], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(["r", "s", "capacity", "gap", "iterations"])
        .map_err(cloud::csv_io)?;
    for c in results {
        writer
            .write_record([
                fmt_float(c.r),
                fmt_float(c.s),
                fmt_float(c.value),
                fmt_float(c.duality_gap),
                c.iterations.to_string(),
            ])
            .map_err(cloud::csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

/// Uniform random cloud in `[0,1]^d`, for tests and demos.
pub fn random_cloud(n: usize, d: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    PointCloud::from_flat((0..n * d).map(|_| unit.sample(&mut rng)).collect(), d)
}
