//! Acceptance suite. Criteria 1 to 10 run once, each producing a CSV
//! artifact; they then run again, and criterion 11 compares the bytes.
//! One PASS/FAIL line per criterion goes straight to stderr, so it shows
//! even when test output is captured.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fourier_spectrum::figure::{family_rows, Family};
use fourier_spectrum::products::{check_product_bounds, power_spec, product_spec, ProductBudgets, Verdict};
use fourier_spectrum::report::{fmt_float, write_bound_report, write_spectrum_curve};
use fourier_spectrum::setdim::solver::{brute_force_minimum, DenseKernel};
use fourier_spectrum::setdim::{
    box_counting, box_dim_fourier, capacity, default_s_sequence, dyadic_scales, frostman_energy,
    kernel_fourier_bridge, PointCloud,
};
use fourier_spectrum::spectrum::{spectrum_curve, SpectrumBudget, SpectrumCurve};
use fourier_spectrum::tolerances::{BRIDGE_PAIRS, SOLVER_GAP_TOL};
use fourier_spectrum::{fourier_eval, MeasureSpec};

const SEED: u64 = 20_240_917;

struct Check {
    pass: bool,
    detail: String,
    csv: Vec<u8>,
}

/// Accumulates rows of `label,key=value...` free-form CSV plus failures.
struct Artifact {
    csv: Vec<u8>,
    failures: Vec<String>,
}

impl Artifact {
    fn new(header: &str) -> Self {
        Artifact {
            csv: format!("{header}\n").into_bytes(),
            failures: Vec::new(),
        }
    }

    fn row(&mut self, fields: &[String]) {
        writeln!(self.csv, "{}", fields.join(",")).unwrap();
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self, detail: String) -> Check {
        let pass = self.failures.is_empty();
        let detail = if pass {
            detail
        } else {
            format!("{detail}; failed: {}", self.failures.join("; "))
        };
        Check {
            pass,
            detail,
            csv: self.csv,
        }
    }
}

fn f(x: f64) -> String {
    fmt_float(x)
}

fn curve_csv(curve: &SpectrumCurve) -> Vec<u8> {
    let mut out = Vec::new();
    write_spectrum_curve(curve, &mut out).unwrap();
    out
}

fn cube(d: usize) -> MeasureSpec {
    MeasureSpec::uniform_cube(d).unwrap()
}

fn circle() -> MeasureSpec {
    MeasureSpec::sphere(1).unwrap()
}

fn curve(spec: &MeasureSpec, grid: &[f64]) -> SpectrumCurve {
    spectrum_curve(spec, grid, SpectrumBudget::default_for(spec)).unwrap()
}

const GRID5: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// One-dimensional atomic, cube or self-similar marginal.
fn random_marginal(rng: &mut ChaCha8Rng, allow_2d: bool) -> MeasureSpec {
    let kinds = if allow_2d { 5 } else { 3 };
    match rng.random_range(0..kinds) {
        0 => {
            let n = rng.random_range(1..=4);
            let points = (0..n).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
            let weights = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            MeasureSpec::atomic(points, weights).unwrap()
        }
        1 => cube(1),
        2 => {
            let ratio = rng.random_range(0.15..0.45);
            let p = rng.random_range(0.3..0.7);
            MeasureSpec::self_similar(ratio, vec![0.0, 1.0 - ratio], vec![p, 1.0 - p]).unwrap()
        }
        3 => {
            let n = rng.random_range(1..=3);
            let points = (0..n)
                .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
                .collect();
            MeasureSpec::atomic(points, vec![1.0 / n as f64; n]).unwrap()
        }
        _ => cube(2),
    }
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut art = Artifact::new("case,mu_dim,nu_dim,abs_error");
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let mu = random_marginal(&mut rng, true);
        let nu = random_marginal(&mut rng, true);
        let (k, m) = (mu.ambient_dim(), nu.ambient_dim());
        let z: Vec<f64> = (0..k + m).map(|_| rng.random_range(-60.0..60.0)).collect();
        let joint = fourier_eval(&product_spec(mu.clone(), nu.clone()), &z).unwrap().value;
        let split = fourier_eval(&mu, &z[..k]).unwrap().value * fourier_eval(&nu, &z[k..]).unwrap().value;
        let err = (joint - split).norm();
        worst = worst.max(err);
        art.row(&[case.to_string(), k.to_string(), m.to_string(), f(err)]);
        art.require(err <= 1e-10, || format!("case {case}: error {err:e}"));
    }
    art.finish(format!("factorization, 1000 random cases, max |error| {worst:.1e} (limit 1e-10)"))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut art = Artifact::new("d,theta,dim,lower,upper,flag,predicted");
    let mut worst = 0.0f64;
    for d in 1..=3 {
        let c = curve(&cube(d), &GRID5);
        for p in &c.points {
            let want = 2.0 + (d as f64 - 1.0) * p.theta;
            worst = worst.max((p.estimate - want).abs());
            art.row(&[d.to_string(), f(p.theta), f(p.estimate), f(p.lower), f(p.upper), p.flag.to_string(), f(want)]);
            art.require((p.estimate - want).abs() <= 0.2, || {
                format!("d={d} theta={}: {} vs {want}", p.theta, p.estimate)
            });
        }
    }
    let elapsed = start.elapsed();
    art.require(elapsed <= Duration::from_secs(300), || format!("runtime {elapsed:?} above 5 min"));
    art.finish(format!(
        "Lebesgue spectra d=1..3, max deviation {worst:.3} (limit 0.2), {:.1} s (limit 300 s)",
        elapsed.as_secs_f64()
    ))
}

fn criterion_3() -> Check {
    let c = curve(&circle(), &GRID5);
    let mut art = Artifact::new("");
    art.csv = curve_csv(&c);
    let worst = c.points.iter().map(|p| (p.estimate - 1.0).abs()).fold(0.0, f64::max);
    for p in &c.points {
        art.require((p.estimate - 1.0).abs() <= 0.15, || format!("theta={}: {}", p.theta, p.estimate));
    }
    art.finish(format!("circle spectrum constant 1, max deviation {worst:.3} (limit 0.15)"))
}

fn criterion_4() -> Check {
    let rows = family_rows(Family::SphereCylinders, &GRID5, SpectrumBudget::default_for).unwrap();
    let mut art = Artifact::new("k,theta,predicted,kink,estimated");
    let mut worst = 0.0f64;
    for r in &rows {
        let est = r.estimate.as_ref().map_or(String::new(), |e| f(e.estimate));
        art.row(&[r.index.to_string(), f(r.theta), f(r.predicted), u8::from(r.is_kink).to_string(), est]);
        if r.index == 1 {
            let e = r.estimate.as_ref().expect("the circle cylinder is estimated").estimate;
            let want = 1.0 + r.theta;
            worst = worst.max((e - want).abs());
            art.require((e - want).abs() <= 0.25, || format!("theta={}: {e} vs {want}", r.theta));
        }
    }
    for k in 3..=6usize {
        let kinks: Vec<f64> = rows.iter().filter(|r| r.index == k && r.is_kink).map(|r| r.theta).collect();
        let want = 1.0 - 2.0 / k as f64;
        art.require(kinks == [want], || format!("k={k}: kinks {kinks:?}, expected [{want}]"));
    }
    art.finish(format!(
        "circle cylinder within {worst:.3} of 1+theta (limit 0.25); kinks at 1-2/k for k=3..6"
    ))
}

/// Marginal for the sandwich suite; `room` bounds its ambient dimension.
fn sandwich_marginal(rng: &mut ChaCha8Rng, room: usize) -> MeasureSpec {
    loop {
        let spec = match rng.random_range(0..5) {
            0 => random_marginal(rng, room >= 2),
            1 => {
                let ratio = rng.random_range(0.15..0.34);
                MeasureSpec::self_similar(ratio, vec![0.0, 0.5 - ratio / 2.0, 1.0 - ratio], vec![1.0 / 3.0; 3]).unwrap()
            }
            2 => cube(1),
            3 => cube(rng.random_range(1..=2)),
            _ => circle(),
        };
        if spec.ambient_dim() <= room {
            return spec;
        }
    }
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut art = Artifact::new("pair,theta,lhs,lower_formula,upper_formula_dims,upper_formula_averages,verdict");
    let mut violations = 0;
    for pair in 0..20 {
        let mu = sandwich_marginal(&mut rng, 2);
        let nu = sandwich_marginal(&mut rng, 3 - mu.ambient_dim());
        let budgets = ProductBudgets::default_for(&mu, &nu, SEED + pair);
        let report = check_product_bounds(&mu, &nu, &[0.0, 0.5, 1.0], budgets).unwrap();
        let mut out = Vec::new();
        write_bound_report(&report, &mut out).unwrap();
        for line in String::from_utf8(out).unwrap().lines().skip(1) {
            writeln!(art.csv, "{pair},{line}").unwrap();
        }
        for r in &report.records {
            if r.verdict() == Verdict::ViolationCandidate {
                violations += 1;
                art.failures.push(format!("pair {pair} ({mu:?} x {nu:?}) theta={}: {r:?}", r.theta));
            }
        }
    }
    art.finish(format!("product-bound sandwich, 20 random pairs x 3 theta, {violations} VIOLATION_CANDIDATE"))
}

fn criterion_6() -> Check {
    let mut art = Artifact::new("cloud,method,upper,lower,target");
    let cases = [
        ("cantor", PointCloud::cantor_endpoints(10).unwrap(), (1..=8).map(|k| 3f64.powi(-k)).collect::<Vec<_>>(), 2f64.ln() / 3f64.ln()),
        ("interval", PointCloud::centered_grid(1 << 10, 1).unwrap(), dyadic_scales(1, 9), 1.0),
        ("square", PointCloud::centered_grid(1 << 10, 2).unwrap(), dyadic_scales(1, 9), 2.0),
    ];
    let mut summary = Vec::new();
    for (name, cloud, scales, target) in cases {
        let est = box_dim_fourier(&cloud, &default_s_sequence(cloud.dim()), &scales).unwrap();
        let oracle = box_counting(&cloud, &scales).unwrap();
        art.row(&[name.into(), "capacity".into(), f(est.upper), f(est.lower), f(target)]);
        art.row(&[name.into(), "box_counting".into(), f(oracle.upper), f(oracle.lower), f(target)]);
        for (side, v, o) in [("upper", est.upper, oracle.upper), ("lower", est.lower, oracle.lower)] {
            art.require((v - target).abs() <= 0.05, || format!("{name} {side} {v} vs {target}"));
            art.require((v - o).abs() <= 0.03, || format!("{name} {side} {v} vs box counting {o}"));
        }
        summary.push(format!("{name} {:.3}/{:.3}", est.upper, est.lower));
    }
    art.finish(format!("capacity box dimensions (upper/lower): {}", summary.join(", ")))
}

fn criterion_7() -> Check {
    let mut art = Artifact::new("measure,r,kernel_side,fourier_side,ratio");
    let scales = dyadic_scales(4, 10);
    let mut summary = Vec::new();
    for (name, spec, s) in [("lebesgue", cube(1), 0.9), ("cantor", MeasureSpec::cantor(), 0.6)] {
        let bridge = kernel_fourier_bridge(&spec, &scales, s, BRIDGE_PAIRS, 4000, SEED).unwrap();
        for b in &bridge {
            art.row(&[name.into(), f(b.r), f(b.kernel_side), f(b.fourier_side), f(b.ratio)]);
        }
        let hi = bridge.iter().map(|b| b.ratio).fold(f64::NEG_INFINITY, f64::max);
        let lo = bridge.iter().map(|b| b.ratio).fold(f64::INFINITY, f64::min);
        let spread = hi / lo;
        art.require(lo > 0.0 && spread <= 50.0, || format!("{name} spread {spread}"));
        summary.push(format!("{name} {spread:.2}"));
    }
    art.finish(format!("kernel/Fourier ratio spread over r=2^-4..2^-10: {} (limit 50)", summary.join(", ")))
}

fn criterion_8() -> Check {
    let mut art = Artifact::new("s,points,min_energy,gap");
    let energy = |m: usize, s: f64, art: &mut Artifact| {
        let e = frostman_energy(&PointCloud::uniform_grid(m, 1).unwrap(), s, SOLVER_GAP_TOL).unwrap();
        art.row(&[f(s), m.to_string(), f(e.min_energy), f(e.duality_gap)]);
        e.min_energy
    };
    let stable: Vec<f64> = [256, 1024, 4096].iter().map(|&m| energy(m, 0.5, &mut art)).collect();
    let ratio = stable[2] / stable[0];
    art.require((0.5..=2.0).contains(&ratio), || format!("s=0.5 energy ratio 4096/256 = {ratio}"));
    let growing: Vec<f64> = [256, 512, 1024, 2048].iter().map(|&m| energy(m, 1.5, &mut art)).collect();
    let min_growth = growing.windows(2).map(|w| w[1] / w[0]).fold(f64::INFINITY, f64::min);
    art.require(min_growth >= 2f64.powf(0.4), || format!("s=1.5 growth {min_growth} per doubling"));
    art.finish(format!(
        "energy ratio 4096/256 at s=0.5 is {ratio:.3} (within 2x); least growth per doubling at s=1.5 is {min_growth:.3} (limit {:.3})",
        2f64.powf(0.4)
    ))
}

fn criterion_9() -> Check {
    let mut art = Artifact::new("n,theta,estimate,prediction");
    let base = curve(&cube(1), &[0.5, 1.0]);
    let mut worst = 0.0f64;
    for n in [2usize, 3] {
        let spec = power_spec(&cube(1), n, 0.0, 2.0).unwrap().spec;
        let c = curve(&spec, &[0.0, 0.5, 1.0]);
        let fourier = c.points[0].estimate;
        art.row(&[n.to_string(), "0".into(), f(fourier), "2".into()]);
        art.require((fourier - 2.0).abs() <= 0.25, || format!("n={n}: Fourier dimension {fourier}"));
        for (p, mu) in c.points[1..].iter().zip(&base.points) {
            let predicted = power_spec(&cube(1), n, p.theta, mu.estimate).unwrap().prediction;
            let Some(want) = predicted else {
                art.failures.push(format!("n={n} theta={}: no prediction (dim {})", p.theta, mu.estimate));
                continue;
            };
            worst = worst.max((p.estimate - want).abs());
            art.row(&[n.to_string(), f(p.theta), f(p.estimate), f(want)]);
            art.require((p.estimate - want).abs() <= 0.3, || {
                format!("n={n} theta={}: {} vs {want}", p.theta, p.estimate)
            });
        }
    }
    art.finish(format!("powers of the interval, max deviation {worst:.3} from predictions (limit 0.3)"))
}

/// Dense matrix of `kernel(|x_i - x_j|)` with the given diagonal.
fn dense(cloud: &PointCloud, diagonal: f64, kernel: impl Fn(f64) -> f64) -> DenseKernel {
    let n = cloud.len();
    DenseKernel::from_rows(
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { diagonal } else { kernel(cloud.distance(i, j)) }).collect())
            .collect(),
    )
}

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let mut art = Artifact::new("cloud,points,dim,quantity,r,s,solver,oracle,gap");
    let limit = 10.0 * SOLVER_GAP_TOL;
    let mut worst = 0.0f64;
    let mut worst_gap = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(1..=12);
        let d = rng.random_range(1..=2);
        let cloud = PointCloud::from_flat((0..n * d).map(|_| rng.random_range(0.0..1.0)).collect(), d).unwrap();
        let r = rng.random_range(0.02..0.5);
        let s = rng.random_range(0.1..d as f64 - 0.05);

        let cap = capacity(&cloud, r, s, SOLVER_GAP_TOL).unwrap();
        let oracle = brute_force_minimum(&dense(&cloud, 1.0, |t| (r / t).powf(s).min(1.0)));
        let solved = 1.0 / cap.value;
        let err = (solved - oracle).abs() / oracle.max(1.0);
        art.row(&[case.to_string(), n.to_string(), d.to_string(), "capacity".into(), f(r), f(s), f(solved), f(oracle), f(cap.duality_gap)]);
        art.require(cap.converged, || format!("cloud {case}: capacity did not converge"));
        art.require(err <= limit, || format!("cloud {case}: capacity energy {solved} vs oracle {oracle}"));
        art.require(cap.duality_gap <= SOLVER_GAP_TOL, || format!("cloud {case}: capacity gap {}", cap.duality_gap));
        worst = worst.max(err);
        worst_gap = worst_gap.max(cap.duality_gap);

        if n >= 2 {
            let fs = rng.random_range(0.1..2.0);
            let e = frostman_energy(&cloud, fs, SOLVER_GAP_TOL).unwrap();
            let diagonal = cloud.min_separation().powf(-fs);
            let oracle = brute_force_minimum(&dense(&cloud, diagonal, |t| t.powf(-fs)));
            let err = (e.min_energy - oracle).abs() / oracle.max(1.0);
            art.row(&[case.to_string(), n.to_string(), d.to_string(), "frostman".into(), String::new(), f(fs), f(e.min_energy), f(oracle), f(e.duality_gap)]);
            art.require(e.converged, || format!("cloud {case}: energy did not converge"));
            art.require(err <= limit, || format!("cloud {case}: energy {} vs oracle {oracle}", e.min_energy));
            art.require(e.duality_gap <= SOLVER_GAP_TOL, || format!("cloud {case}: energy gap {}", e.duality_gap));
            worst = worst.max(err);
            worst_gap = worst_gap.max(e.duality_gap);
        }
    }
    art.finish(format!(
        "100 random clouds of at most 12 points, max relative error {worst:.1e} (limit {limit:.0e}), max gap {worst_gap:.1e} (limit 1e-8)"
    ))
}

type Criterion = fn() -> Check;

const CRITERIA: [Criterion; 10] = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
];

fn report(index: usize, check: &Check) {
    let status = if check.pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance criterion {index:>2}: {status}  {}\n", check.detail);
    // Written to the raw handle so the line shows even under capture.
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

#[test]
fn acceptance() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).unwrap();
    let mut first = Vec::new();
    for (i, criterion) in CRITERIA.iter().enumerate() {
        let check = criterion();
        report(i + 1, &check);
        fs::write(dir.join(format!("criterion_{:02}.csv", i + 1)), &check.csv).unwrap();
        first.push(check);
    }

    let mut mismatched = Vec::new();
    for (i, criterion) in CRITERIA.iter().enumerate() {
        if criterion().csv != first[i].csv {
            mismatched.push(i + 1);
        }
    }
    let determinism = Check {
        pass: mismatched.is_empty(),
        detail: if mismatched.is_empty() {
            "second run of criteria 1-10 produced byte-identical CSVs".into()
        } else {
            format!("CSV bytes differ on rerun for criteria {mismatched:?}")
        },
        csv: Vec::new(),
    };
    report(11, &determinism);

    let failed: Vec<usize> = first
        .iter()
        .chain([&determinism])
        .enumerate()
        .filter(|(_, c)| !c.pass)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
