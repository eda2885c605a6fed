//! CSV writers and provenance sidecars.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::measures::FourierValue;
use crate::products::BoundReport;
use crate::setdim::{csv_io, BoxCount, BoxDimFourier};
use crate::spectrum::{SpectrumBudget, SpectrumCurve};
use crate::transform::{LatticeEnergy, ShellStats};

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-5, 1e16)` so tiny values stay short.
pub fn fmt_float(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn write_rows<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(header).map_err(csv_io)?;
    for row in rows {
        writer.write_record(&row).map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

/// Columns `theta,R,S,S_stderr,shell_sup`, radii increasing. `S` is the
/// cumulative ball integral.
pub fn write_shell_stats<W: Write>(stats: &ShellStats, out: W) -> Result<()> {
    let rows = (0..stats.len()).map(|j| {
        vec![
            fmt_float(stats.theta),
            fmt_float(stats.radii[j]),
            fmt_float(stats.shell_integrals[j]),
            fmt_float(stats.shell_stderr[j]),
            fmt_float(stats.shell_sups[j]),
        ]
    });
    write_rows(out, &["theta", "R", "S", "S_stderr", "shell_sup"], rows)
}

/// Columns `s,theta,alpha,R,partial_sum`, radii increasing.
pub fn write_lattice_energy<W: Write>(energy: &LatticeEnergy, out: W) -> Result<()> {
    let rows = energy.radii.iter().zip(&energy.partial_sums).map(|(r, p)| {
        vec![
            fmt_float(energy.s),
            fmt_float(energy.theta),
            fmt_float(energy.alpha),
            fmt_float(*r),
            fmt_float(*p),
        ]
    });
    write_rows(out, &["s", "theta", "alpha", "R", "partial_sum"], rows)
}

/// Columns `theta,dim,lower,upper,flag`.
pub fn write_spectrum_curve<W: Write>(curve: &SpectrumCurve, out: W) -> Result<()> {
    let rows = curve.points.iter().map(|p| {
        vec![
            fmt_float(p.theta),
            fmt_float(p.estimate),
            fmt_float(p.lower),
            fmt_float(p.upper),
            p.flag.as_str().to_string(),
        ]
    });
    write_rows(out, &["theta", "dim", "lower", "upper", "flag"], rows)
}

/// Columns `theta,lhs,lower_formula,upper_formula_dims,upper_formula_averages,verdict`.
pub fn write_bound_report<W: Write>(report: &BoundReport, out: W) -> Result<()> {
    let rows = report.records.iter().map(|r| {
        vec![
            fmt_float(r.theta),
            fmt_float(r.lhs.value),
            fmt_float(r.lower_formula),
            fmt_float(r.upper_formula_dims),
            fmt_float(r.upper_formula_averages),
            r.verdict().as_str().to_string(),
        ]
    });
    write_rows(
        out,
        &["theta", "lhs", "lower_formula", "upper_formula_dims", "upper_formula_averages", "verdict"],
        rows,
    )
}

/// Columns `z1..zd,re,im,abs,abs_err`, one row per frequency.
pub fn write_transform_samples<W: Write>(points: &[Vec<f64>], values: &[FourierValue], out: W) -> Result<()> {
    if points.len() != values.len() {
        return Err(Error::arg("one transform value per frequency is required"));
    }
    let d = points.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (1..=d).map(|i| format!("z{i}")).collect();
    header.extend(["re", "im", "abs", "abs_err"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = points.iter().zip(values).map(|(z, v)| {
        let mut row: Vec<String> = z.iter().copied().map(fmt_float).collect();
        row.extend([v.value.re, v.value.im, v.value.norm(), v.abs_err].map(fmt_float));
        row
    });
    write_rows(out, &header, rows)
}

/// Columns `method,s,upper,lower`: the capacity estimate, the box-counting
/// oracle, then one `profile` row per exponent.
pub fn write_box_dims<W: Write>(capacity: &BoxDimFourier, counted: &BoxCount, out: W) -> Result<()> {
    let row = |method: &str, s: String, upper: f64, lower: f64| {
        vec![method.to_string(), s, fmt_float(upper), fmt_float(lower)]
    };
    let rows = [
        row("capacity", String::new(), capacity.upper, capacity.lower),
        row("box_counting", String::new(), counted.upper, counted.lower),
    ]
    .into_iter()
    .chain(capacity.profiles.iter().map(|p| row("profile", fmt_float(p.s), p.upper, p.lower)));
    write_rows(out, &["method", "s", "upper", "lower"], rows)
}

/// Flat `key=value` record of everything that determined an output file.
/// Entries keep insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    entries: Vec<(String, String)>,
}

impl Provenance {
    /// Starts with the library version.
    pub fn new() -> Self {
        let mut p = Provenance::default();
        p.set("library_version", env!("CARGO_PKG_VERSION"));
        p
    }

    /// Sets `key`, replacing an earlier value in place.
    ///
    /// # Panics
    /// If `key` contains `=` or a line break, or `value` contains a line break.
    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        let value = value.to_string();
        assert!(
            !key.is_empty() && !key.contains(['=', '\n', '\r']),
            "provenance key {key:?} is not a flat token"
        );
        assert!(!value.contains(['\n', '\r']), "provenance value for {key} spans lines");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Records a spectrum budget under `prefix.`.
    pub fn set_spectrum_budget(&mut self, prefix: &str, budget: &SpectrumBudget) -> &mut Self {
        self.set(&format!("{prefix}.shell_rmax"), budget.shell_rmax)
            .set(&format!("{prefix}.shell_budget"), budget.shell_budget)
            .set(&format!("{prefix}.lattice_alpha"), budget.probe.alpha)
            .set(&format!("{prefix}.lattice_rmax"), budget.probe.r_max)
            .set(&format!("{prefix}.seed"), budget.seed)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(out, "{k}={v}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parses the `key=value` format written by [`Provenance::write`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Provenance::default();
        for (i, line) in text.lines().enumerate() {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                location: format!("line {}", i + 1),
                message: "expected key=value".into(),
            })?;
            p.set(k, v);
        }
        Ok(p)
    }
}

/// Sidecar path for an output file: `name.csv` becomes `name.csv.provenance`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_os_string();
    name.push(".provenance");
    PathBuf::from(name)
}

/// Writes `output` through `body`, then its provenance sidecar.
pub fn write_with_provenance(
    output: &Path,
    provenance: &Provenance,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(output)?);
    body(&mut file)?;
    file.flush()?;
    provenance.write(std::io::BufWriter::new(fs::File::create(sidecar_path(output))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::MeasureSpec;
    use crate::products::{check_product_bounds, ProductBudgets};
    use crate::spectrum::{spectrum_curve, SpectrumBudget};
    use crate::transform::{lattice_energy, shell_stats};

    fn lines(bytes: Vec<u8>) -> Vec<String> {
        String::from_utf8(bytes).unwrap().lines().map(str::to_string).collect()
    }

    #[test]
    fn shell_csv_has_header_and_increasing_radii() {
        let stats = shell_stats(&MeasureSpec::dirac(1).unwrap(), 0.5, 64.0, 1000, 3).unwrap();
        let mut out = Vec::new();
        write_shell_stats(&stats, &mut out).unwrap();
        let rows = lines(out);
        assert_eq!(rows[0], "theta,R,S,S_stderr,shell_sup");
        assert_eq!(rows.len(), stats.len() + 1);
        let radii: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(radii.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn lattice_csv_round_trips_values() {
        let e = lattice_energy(&MeasureSpec::uniform_cube(1).unwrap(), 0.5, 1.0, 0.5, 64.0).unwrap();
        let mut out = Vec::new();
        write_lattice_energy(&e, &mut out).unwrap();
        let rows = lines(out);
        assert_eq!(rows[0], "s,theta,alpha,R,partial_sum");
        let last: Vec<f64> = rows.last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(last, vec![0.5, 1.0, 0.5, *e.radii.last().unwrap(), *e.partial_sums.last().unwrap()]);
    }

    #[test]
    fn curve_and_bound_csvs_are_deterministic() {
        let spec = MeasureSpec::dirac(1).unwrap();
        let render = || {
            let curve = spectrum_curve(&spec, &[0.0, 1.0], SpectrumBudget::default_for(&spec)).unwrap();
            let mut out = Vec::new();
            write_spectrum_curve(&curve, &mut out).unwrap();
            out
        };
        let first = render();
        assert_eq!(first, render());
        let rows = lines(first);
        assert_eq!(rows[0], "theta,dim,lower,upper,flag");
        assert!(rows[1..].iter().all(|r| {
            let flag = r.rsplit(',').next().unwrap();
            ["EXACT_REGIME", "CLAMPED", "SUP_DECAY"].contains(&flag)
        }));

        let budgets = ProductBudgets::default_for(&spec, &spec, 4);
        let report = check_product_bounds(&spec, &spec, &[0.5], budgets).unwrap();
        let mut out = Vec::new();
        write_bound_report(&report, &mut out).unwrap();
        let rows = lines(out);
        assert_eq!(
            rows[0],
            "theta,lhs,lower_formula,upper_formula_dims,upper_formula_averages,verdict"
        );
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn provenance_round_trip_keeps_order() {
        let spec = MeasureSpec::uniform_cube(2).unwrap();
        let mut p = Provenance::new();
        p.set("command", "spectrum").set_spectrum_budget("marginal", &SpectrumBudget::default_for(&spec));
        p.set("command", "ft");
        let mut out = Vec::new();
        p.write(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("library_version="));
        assert_eq!(text.lines().nth(1), Some("command=ft"));
        assert_eq!(Provenance::parse(&text).unwrap(), p);
        assert!(Provenance::parse("no separator").is_err());
    }

    #[test]
    #[should_panic]
    fn provenance_rejects_multiline_values() {
        Provenance::new().set("k", "a\nb");
    }

    #[test]
    fn transform_samples_csv() {
        let spec = MeasureSpec::uniform_cube(2).unwrap();
        let points = vec![vec![0.0, 0.0], vec![0.5, 0.0]];
        let values: Vec<_> = points.iter().map(|z| crate::fourier_eval(&spec, z).unwrap()).collect();
        let mut out = Vec::new();
        write_transform_samples(&points, &values, &mut out).unwrap();
        let rows = lines(out);
        assert_eq!(rows[0], "z1,z2,re,im,abs,abs_err");
        let abs: f64 = rows[1].split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(abs, 1.0);
        assert!(write_transform_samples(&points[..1], &values, Vec::new()).is_err());
    }

    #[test]
    fn floats_are_short_and_round_trip() {
        for x in [0.0, 1.0, -2.5, 3.8981718325193755e-17, 1e300, 123456.789, 1e-5, -7e-6] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(3.8981718325193755e-17), "3.8981718325193755e-17");
        assert_eq!(fmt_float(0.5), "0.5");
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar_path(Path::new("out/curve.csv")), PathBuf::from("out/curve.csv.provenance"));
    }
}
