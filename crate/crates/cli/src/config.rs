use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fspec", version, about = "Fourier spectrum estimation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the Fourier transform of a measure at given or probe frequencies.
    Ft(FtArgs),
    /// Estimate the Fourier spectrum of a measure over a grid of theta.
    Spectrum(SpectrumArgs),
    /// Predicted and estimated curves for the Lebesgue and cylinder families.
    Examples(ExamplesArgs),
    /// Capacities of a point cloud over a list of scales.
    Capacity(CapacityArgs),
    /// Upper and lower box dimensions of a point cloud.
    Boxdim(BoxdimArgs),
    /// Check the product bounds for two measures or two point clouds.
    ProductCheck(ProductCheckArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FtArgs {
    #[arg(long, value_name = "PATH")]
    pub measure: PathBuf,
    /// Frequency as comma-separated coordinates; repeat for several.
    /// Without it, seeded probes are drawn from each dyadic shell.
    #[arg(long, value_name = "Z1,Z2,...", allow_hyphen_values = true)]
    pub z: Vec<String>,
    /// Outer radius of the probe shells.
    #[arg(long, value_name = "FLOAT", default_value_t = 64.0)]
    pub rmax: f64,
    /// Probes per shell.
    #[arg(long, value_name = "INT", default_value_t = 8)]
    pub budget: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct Estimation {
    /// Outer shell radius; defaults by ambient dimension.
    #[arg(long, value_name = "FLOAT")]
    pub rmax: Option<f64>,
    /// Transform evaluations per shell.
    #[arg(long, value_name = "INT")]
    pub budget: Option<usize>,
    /// Lattice spacing of the energy sums; defaults from the measure's support.
    #[arg(long, value_name = "FLOAT")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long, value_name = "PATH")]
    pub measure: PathBuf,
    #[arg(long, value_name = "START:STOP:COUNT", default_value = "0:1:5")]
    pub theta: ThetaGrid,
    #[command(flatten)]
    pub estimation: Estimation,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ExamplesArgs {
    #[arg(long, value_name = "START:STOP:COUNT", default_value = "0:1:11")]
    pub theta: ThetaGrid,
    /// Transform evaluations per shell for the estimated curves.
    #[arg(long, value_name = "INT")]
    pub budget: Option<usize>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct CloudScales {
    #[arg(long, value_name = "PATH")]
    pub cloud: PathBuf,
    /// Scales as a comma-separated list; defaults to dyadic scales from 1/2
    /// down to twice the cloud's least separation.
    #[arg(long, value_name = "R1,R2,...")]
    pub r: Option<String>,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub cloud: CloudScales,
    /// Kernel exponent in (0, d); defaults to d - 1/32.
    #[arg(long, value_name = "FLOAT")]
    pub s: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct BoxdimArgs {
    #[command(flatten)]
    pub cloud: CloudScales,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ProductCheckArgs {
    /// Two measure files, for the measure bounds.
    #[arg(long, value_name = "PATH", num_args = 1, conflicts_with = "cloud")]
    pub measure: Vec<PathBuf>,
    /// Two point-cloud files, for the set bounds.
    #[arg(long, value_name = "PATH", num_args = 1)]
    pub cloud: Vec<PathBuf>,
    #[arg(long, value_name = "START:STOP:COUNT", default_value = "0:1:3")]
    pub theta: ThetaGrid,
    /// Transform evaluations per shell.
    #[arg(long, value_name = "INT")]
    pub budget: Option<usize>,
    #[command(flatten)]
    pub output: Output,
}

/// `START:STOP:COUNT`, evenly spaced and inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl FromStr for ThetaGrid {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, count] = parts[..] else {
            return Err(format!("expected START:STOP:COUNT, got {text:?}"));
        };
        let float = |field: &str, name: &str| {
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("{name} {field:?} is not a number"))
        };
        let grid = ThetaGrid {
            start: float(start, "START")?,
            stop: float(stop, "STOP")?,
            count: count
                .trim()
                .parse()
                .map_err(|_| format!("COUNT {count:?} is not a positive integer"))?,
        };
        if grid.count == 0 {
            return Err("COUNT must be positive".into());
        }
        if !(0.0..=1.0).contains(&grid.start) || !(0.0..=1.0).contains(&grid.stop) {
            return Err("theta must lie in [0, 1]".into());
        }
        if grid.stop < grid.start {
            return Err("STOP must not be below START".into());
        }
        Ok(grid)
    }
}

impl std::fmt::Display for ThetaGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)
    }
}

impl ThetaGrid {
    pub fn values(&self) -> Vec<f64> {
        fourier_spectrum::spectrum::theta_grid(self.start, self.stop, self.count)
    }
}

/// Parses a comma-separated list of floats.
pub fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .enumerate()
        .map(|(i, field)| {
            field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("{what}, entry {}: {field:?} is not a finite number", i + 1))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_grid_parsing() {
        let g: ThetaGrid = "0:1:5".parse().unwrap();
        assert_eq!(g.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.to_string(), "0:1:5");
        for bad in ["0:1", "0:1:0", "a:1:3", "0:2:3", "0.5:0.2:3", "0:1:-1"] {
            assert!(bad.parse::<ThetaGrid>().is_err(), "{bad}");
        }
    }

    #[test]
    fn list_parsing_reports_position() {
        assert_eq!(parse_list("0.5, -1,2", "z").unwrap(), vec![0.5, -1.0, 2.0]);
        let err = parse_list("1,x", "z").unwrap_err();
        assert!(err.contains("entry 2"), "{err}");
    }
}
