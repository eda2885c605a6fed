//! Repo-wide tolerance constants.
//!
//! Every threshold used by the estimators and by the acceptance suite lives
//! here so that the two never drift apart.

/// Certified absolute error for sphere surface transforms.
pub const SPHERE_QUADRATURE_TOL: f64 = 1e-8;

/// Relative error target for self-similar transform truncation.
pub const SELF_SIMILAR_REL_TOL: f64 = 1e-10;

/// Sampling depth for self-similar measures: stop once `r^depth` drops below this.
pub const SELF_SIMILAR_SAMPLE_RESOLUTION: f64 = 1e-12;

/// A shell estimate with a larger relative standard error is flagged.
pub const SHELL_REL_SE_FLAG: f64 = 0.05;

/// Monte-Carlo shells stop sampling once this relative standard error is reached.
pub const SHELL_REL_SE_TARGET: f64 = 0.01;

/// Minimum number of Monte-Carlo evaluations per shell.
pub const SHELL_MIN_SAMPLES: usize = 1000;

/// Deterministic axis/diagonal probes added to each shell's sup estimate.
pub const SHELL_PROBES: usize = 64;

/// Maximum number of lattice points enumerated by `lattice_energy`.
pub const LATTICE_POINT_BUDGET: u64 = 100_000_000;

/// `F_upper < d*theta - REGIME_MARGIN` selects the exact (unsaturated) regime.
pub const REGIME_MARGIN: f64 = 0.1;

/// Slack allowed above the trivial `d*theta` ceiling.
pub const CEILING_SLACK: f64 = 0.05;

/// Half-width added to every dimension band to cover estimator bias that the
/// envelope alone does not capture.
pub const ESTIMATOR_TOL: f64 = 0.1;

/// Width at which the lattice-energy bisection stops.
pub const BISECTION_WIDTH: f64 = 1e-3;

/// Iteration cap for the simplex QP solver.
pub const SOLVER_MAX_ITERATIONS: usize = 1_000_000;

/// Clouds up to this size get a dense kernel matrix; larger ones compute
/// kernel columns on demand.
pub const DENSE_KERNEL_MAX_POINTS: usize = 4096;

/// Clouds up to this size get seeded multistart in the simplex solver.
pub const MULTISTART_MAX_POINTS: usize = 64;

/// Number of extra seeded starts for small clouds.
pub const MULTISTART_COUNT: usize = 16;

/// Relative snap used by grid-cell box counting so that points lying on a
/// cell boundary up to rounding land in the upper cell.
pub const BOX_COUNT_SNAP: f64 = 1e-9;

/// Hausdorff proxies closer than this to 0 or to `d` are treated as boundary
/// cases by the Salem product check.
pub const SALEM_BOUNDARY_MARGIN: f64 = 0.1;

/// Default relative duality-gap target for capacity and energy solves.
pub const SOLVER_GAP_TOL: f64 = 1e-8;

/// Default number of sampled pairs for the kernel side of the bridge check.
pub const BRIDGE_PAIRS: usize = 200_000;

/// Largest support the active-set solver grows before handing over to the
/// conditional-gradient iterations.
pub const ACTIVE_SET_MAX_SUPPORT: usize = 4096;
