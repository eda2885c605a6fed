use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fourier_spectrum::figure::{family_rows, write_family_csv, Family};
use fourier_spectrum::products::{
    candidate_family, check_product_bounds, check_set_product_bounds, ProductBudgets, SetBudget,
};
use fourier_spectrum::report::{
    write_bound_report, write_box_dims, write_spectrum_curve, write_transform_samples, write_with_provenance,
    Provenance,
};
use fourier_spectrum::setdim::{
    box_counting, box_dim_fourier, capacity, default_s_sequence, dyadic_scales, write_capacity_report,
    PointCloud, MIN_SCALES,
};
use fourier_spectrum::spectrum::{spectrum_curve, SpectrumBudget};
use fourier_spectrum::tolerances::SOLVER_GAP_TOL;
use fourier_spectrum::transform::shell_probe_points;
use fourier_spectrum::{fourier_eval, Error, MeasureSpec};

use crate::config::{
    parse_list, BoxdimArgs, CapacityArgs, Cli, CloudScales, Command, Estimation, ExamplesArgs, FtArgs, Output,
    ProductCheckArgs, SpectrumArgs,
};

const INPUT_ERROR: u8 = 2;
const ANOMALY: u8 = 1;

/// A failed run: exit code and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: INPUT_ERROR,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Quadrature { .. } | Error::NonFinite(_) => ANOMALY,
            _ => INPUT_ERROR,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Files written and the number of violated bounds.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub violations: usize,
}

type Run = Result<Outcome, Failure>;

pub fn run(cli: &Cli) -> Run {
    match &cli.command {
        Command::Ft(a) => ft(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Examples(a) => examples(a),
        Command::Capacity(a) => capacity_cmd(a),
        Command::Boxdim(a) => boxdim(a),
        Command::ProductCheck(a) => product_check(a),
    }
}

fn provenance(command: &str, output: &Output) -> Provenance {
    let mut p = Provenance::new();
    p.set("tool", "fspec")
        .set("tool_version", env!("CARGO_PKG_VERSION"))
        .set("command", command)
        .set("seed", output.seed);
    p
}

fn out_dir(output: &Output) -> Result<&Path, Failure> {
    fs::create_dir_all(&output.out)
        .map_err(|e| Failure::input(format!("cannot create output directory {}: {e}", output.out.display())))?;
    Ok(&output.out)
}

/// Writes `name` under the output directory with its sidecar.
fn emit(
    outcome: &mut Outcome,
    output: &Output,
    name: &str,
    provenance: &Provenance,
    body: impl FnOnce(&mut dyn Write) -> fourier_spectrum::Result<()>,
) -> Result<(), Failure> {
    let path = out_dir(output)?.join(name);
    let mut p = provenance.clone();
    p.set("output", name);
    write_with_provenance(&path, &p, body)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
    outcome.written.push(path);
    Ok(())
}

fn load_measure(path: &Path) -> Result<MeasureSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    MeasureSpec::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_cloud(path: &Path) -> Result<PointCloud, Failure> {
    PointCloud::read_csv_file(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn ft(a: &FtArgs) -> Run {
    let spec = load_measure(&a.measure)?;
    let d = spec.ambient_dim();
    let points = if a.z.is_empty() {
        if a.budget == 0 {
            return Err(Failure::input("--budget must be positive"));
        }
        shell_probe_points(d, a.rmax, a.budget, a.output.seed)?
    } else {
        a.z.iter()
            .enumerate()
            .map(|(i, text)| {
                let z = parse_list(text, &format!("--z #{}", i + 1)).map_err(Failure::input)?;
                if z.len() != d {
                    return Err(Failure::input(format!(
                        "--z #{}: expected {d} coordinates, got {}",
                        i + 1,
                        z.len()
                    )));
                }
                Ok(z)
            })
            .collect::<Result<_, _>>()?
    };
    let values = points
        .iter()
        .map(|z| fourier_eval(&spec, z))
        .collect::<fourier_spectrum::Result<Vec<_>>>()?;

    let mut p = provenance("ft", &a.output);
    p.set("measure", a.measure.display());
    if a.z.is_empty() {
        p.set("probe_rmax", a.rmax).set("probes_per_shell", a.budget);
    } else {
        p.set("z", a.z.join(";"));
    }
    let mut outcome = Outcome::default();
    emit(&mut outcome, &a.output, "ft.csv", &p, |out| write_transform_samples(&points, &values, out))?;
    Ok(outcome)
}

fn spectrum_budget(spec: &MeasureSpec, est: &Estimation, seed: u64) -> Result<SpectrumBudget, Failure> {
    let mut b = SpectrumBudget::default_for(spec);
    b.seed = seed;
    if let Some(r) = est.rmax {
        b.shell_rmax = r;
    }
    if let Some(n) = est.budget {
        b.shell_budget = n;
    }
    if let Some(alpha) = est.alpha {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Failure::input(format!("--alpha must be positive, got {alpha}")));
        }
        b.probe.alpha = alpha;
    }
    Ok(b)
}

fn spectrum(a: &SpectrumArgs) -> Run {
    let spec = load_measure(&a.measure)?;
    let budget = spectrum_budget(&spec, &a.estimation, a.output.seed)?;
    let curve = spectrum_curve(&spec, &a.theta.values(), budget)?;
    let mut p = provenance("spectrum", &a.output);
    p.set("measure", a.measure.display()).set("theta", a.theta);
    p.set_spectrum_budget("budget", &budget);
    let mut outcome = Outcome::default();
    emit(&mut outcome, &a.output, "spectrum.csv", &p, |out| write_spectrum_curve(&curve, out))?;
    Ok(outcome)
}

fn examples(a: &ExamplesArgs) -> Run {
    let grid = a.theta.values();
    let budget_for = |spec: &MeasureSpec| SpectrumBudget {
        seed: a.output.seed,
        shell_budget: a.budget.unwrap_or(SpectrumBudget::default_for(spec).shell_budget),
        ..SpectrumBudget::default_for(spec)
    };
    let mut outcome = Outcome::default();
    for family in Family::ALL {
        let rows = family_rows(family, &grid, budget_for)?;
        let mut p = provenance("examples", &a.output);
        p.set("family", family.name()).set("theta", a.theta);
        if let Some(n) = a.budget {
            p.set("shell_budget", n);
        }
        for index in 1..=fourier_spectrum::figure::FAMILY_SIZE {
            if family.ambient_dim(index) <= fourier_spectrum::figure::ESTIMATE_MAX_DIM {
                p.set_spectrum_budget(&format!("member{index}"), &budget_for(&family.spec(index)?));
            }
        }
        let name = format!("examples_{}.csv", family.name());
        emit(&mut outcome, &a.output, &name, &p, |out| write_family_csv(&rows, out))?;
    }
    Ok(outcome)
}

/// Explicit scales, or dyadic scales from 1/2 to twice the least separation
/// (2^-1..2^-6 for a single point).
fn scales(cloud: &PointCloud, args: &CloudScales) -> Result<Vec<f64>, Failure> {
    if let Some(text) = &args.r {
        let list = parse_list(text, "--r").map_err(Failure::input)?;
        if list.iter().any(|&r| r <= 0.0) {
            return Err(Failure::input("--r scales must be positive"));
        }
        return Ok(list);
    }
    let sep = cloud.min_separation();
    let finest = if sep.is_finite() {
        (1.0 / (2.0 * sep)).log2().floor() as i32
    } else {
        MIN_SCALES as i32
    };
    Ok(dyadic_scales(1, finest.max(MIN_SCALES as i32)))
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn capacity_cmd(a: &CapacityArgs) -> Run {
    let cloud = load_cloud(&a.cloud.cloud)?;
    let r_list = scales(&cloud, &a.cloud)?;
    let s = a.s.unwrap_or_else(|| *default_s_sequence(cloud.dim()).last().expect("nonempty sequence"));
    let results = r_list
        .iter()
        .map(|&r| capacity(&cloud, r, s, SOLVER_GAP_TOL))
        .collect::<fourier_spectrum::Result<Vec<_>>>()?;
    let mut p = provenance("capacity", &a.output);
    p.set("cloud", a.cloud.cloud.display())
        .set("r", join(&r_list))
        .set("s", s)
        .set("gap_tolerance", SOLVER_GAP_TOL);
    let mut outcome = Outcome::default();
    emit(&mut outcome, &a.output, "capacity.csv", &p, |out| write_capacity_report(&results, out))?;
    Ok(outcome)
}

fn boxdim(a: &BoxdimArgs) -> Run {
    let cloud = load_cloud(&a.cloud.cloud)?;
    let r_list = scales(&cloud, &a.cloud)?;
    let s_sequence = default_s_sequence(cloud.dim());
    let fourier = box_dim_fourier(&cloud, &s_sequence, &r_list)?;
    let counted = box_counting(&cloud, &r_list)?;
    let mut p = provenance("boxdim", &a.output);
    p.set("cloud", a.cloud.cloud.display())
        .set("r", join(&r_list))
        .set("s_sequence", join(&s_sequence));
    let mut outcome = Outcome::default();
    emit(&mut outcome, &a.output, "boxdim.csv", &p, |out| write_box_dims(&fourier, &counted, out))?;
    Ok(outcome)
}

fn product_check(a: &ProductCheckArgs) -> Run {
    let grid = a.theta.values();
    let mut p = provenance("product-check", &a.output);
    p.set("theta", a.theta);
    let mut outcome = Outcome::default();
    match (a.measure.len(), a.cloud.len()) {
        (2, 0) => {
            let mu = load_measure(&a.measure[0])?;
            let nu = load_measure(&a.measure[1])?;
            let mut budgets = ProductBudgets::default_for(&mu, &nu, a.output.seed);
            if let Some(n) = a.budget {
                for b in [&mut budgets.mu, &mut budgets.nu, &mut budgets.product] {
                    b.shell_budget = n;
                }
            }
            let report = check_product_bounds(&mu, &nu, &grid, budgets)?;
            p.set("measure_mu", a.measure[0].display())
                .set("measure_nu", a.measure[1].display())
                .set_spectrum_budget("mu", &budgets.mu)
                .set_spectrum_budget("nu", &budgets.nu)
                .set_spectrum_budget("product", &budgets.product);
            outcome.violations = report.violations();
            emit(&mut outcome, &a.output, "product_check.csv", &p, |out| write_bound_report(&report, out))?;
        }
        (0, 2) => {
            let x = load_cloud(&a.cloud[0])?;
            let y = load_cloud(&a.cloud[1])?;
            let s_x = 0.5 * x.dim() as f64;
            let s_y = 0.5 * y.dim() as f64;
            let budget = SetBudget {
                shell_budget: a.budget.unwrap_or(SetBudget::default().shell_budget),
                seed: a.output.seed,
            };
            let report = check_set_product_bounds(
                &candidate_family(x, &[s_x])?,
                &candidate_family(y, &[s_y])?,
                &grid,
                budget,
            )?;
            p.set("cloud_x", a.cloud[0].display())
                .set("cloud_y", a.cloud[1].display())
                .set("candidate_s_x", s_x)
                .set("candidate_s_y", s_y)
                .set("shell_budget", budget.shell_budget);
            outcome.violations = report.report.violations();
            emit(&mut outcome, &a.output, "product_check.csv", &p, |out| {
                write_bound_report(&report.report, out)
            })?;
        }
        _ => {
            return Err(Failure::input(
                "product-check needs exactly two --measure files or exactly two --cloud files",
            ))
        }
    }
    Ok(outcome)
}
