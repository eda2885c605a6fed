//! Three families of surface and Lebesgue measures with closed-form spectra:
//! `ℒ^d`, `σ¹ × ℒⁿ` and `σ^k × ℒ¹`, each for index 1 to 6.

use std::io::Write;

use crate::error::Result;
use crate::measures::MeasureSpec;
use crate::report::fmt_float;
use crate::setdim::csv_io;
use crate::spectrum::{spectrum_curve, DimEstimate, SpectrumBudget};

/// Largest family index.
pub const FAMILY_SIZE: usize = 6;

/// Largest ambient dimension for which curves are estimated, not only predicted.
pub const ESTIMATE_MAX_DIM: usize = 3;

/// Spectrum of Lebesgue measure on `[0,1]^d`.
pub fn lebesgue_spectrum(d: usize, theta: f64) -> f64 {
    2.0 + (d as f64 - 1.0) * theta
}

/// Spectrum of the surface measure on `S^k × [0,1]^n`.
pub fn cylinder_spectrum(k: usize, n: usize, theta: f64) -> f64 {
    let (k, n) = (k as f64, n as f64);
    (2.0 + (k + n) * theta).min(k + n * theta)
}

/// Interior `θ` where the two branches of the cylinder spectrum cross; only
/// spheres of dimension 3 and up have one.
pub fn cylinder_kink(k: usize) -> Option<f64> {
    (k >= 3).then(|| 1.0 - 2.0 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `ℒ^d`, indexed by `d`.
    Lebesgue,
    /// `σ¹ × ℒⁿ`, indexed by `n`.
    CircleCylinders,
    /// `σ^k × ℒ¹`, indexed by `k`.
    SphereCylinders,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Lebesgue, Family::CircleCylinders, Family::SphereCylinders];

    pub fn name(self) -> &'static str {
        match self {
            Family::Lebesgue => "lebesgue",
            Family::CircleCylinders => "circle_cylinders",
            Family::SphereCylinders => "sphere_cylinders",
        }
    }

    pub fn spec(self, index: usize) -> Result<MeasureSpec> {
        Ok(match self {
            Family::Lebesgue => MeasureSpec::uniform_cube(index)?,
            Family::CircleCylinders => MeasureSpec::product(MeasureSpec::sphere(1)?, MeasureSpec::uniform_cube(index)?),
            Family::SphereCylinders => MeasureSpec::product(MeasureSpec::sphere(index)?, MeasureSpec::uniform_cube(1)?),
        })
    }

    pub fn ambient_dim(self, index: usize) -> usize {
        match self {
            Family::Lebesgue => index,
            Family::CircleCylinders => 2 + index,
            Family::SphereCylinders => index + 2,
        }
    }

    pub fn predicted(self, index: usize, theta: f64) -> f64 {
        match self {
            Family::Lebesgue => lebesgue_spectrum(index, theta),
            Family::CircleCylinders => cylinder_spectrum(1, index, theta),
            Family::SphereCylinders => cylinder_spectrum(index, 1, theta),
        }
    }

    pub fn kink(self, index: usize) -> Option<f64> {
        match self {
            Family::SphereCylinders => cylinder_kink(index),
            _ => None,
        }
    }

    /// `base` with this member's kink inserted, sorted and deduplicated.
    pub fn grid(self, index: usize, base: &[f64]) -> Vec<f64> {
        let mut grid = base.to_vec();
        grid.extend(self.kink(index));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }
}

/// One `(member, θ)` row; `estimate` is present for members of ambient
/// dimension at most [`ESTIMATE_MAX_DIM`].
#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    pub index: usize,
    pub ambient_dim: usize,
    pub theta: f64,
    pub predicted: f64,
    pub is_kink: bool,
    pub estimate: Option<DimEstimate>,
}

/// Predicted curves for the whole family and estimated curves where
/// affordable. `budget_for` chooses the estimation budget per member.
pub fn family_rows(
    family: Family,
    base_grid: &[f64],
    budget_for: impl Fn(&MeasureSpec) -> SpectrumBudget,
) -> Result<Vec<FigureRow>> {
    let mut rows = Vec::new();
    for index in 1..=FAMILY_SIZE {
        let grid = family.grid(index, base_grid);
        let ambient_dim = family.ambient_dim(index);
        let estimates = if ambient_dim <= ESTIMATE_MAX_DIM {
            let spec = family.spec(index)?;
            Some(spectrum_curve(&spec, &grid, budget_for(&spec))?.points)
        } else {
            None
        };
        for (i, &theta) in grid.iter().enumerate() {
            rows.push(FigureRow {
                index,
                ambient_dim,
                theta,
                predicted: family.predicted(index, theta),
                is_kink: family.kink(index) == Some(theta),
                estimate: estimates.as_ref().map(|e| e[i].clone()),
            });
        }
    }
    Ok(rows)
}

/// Columns `index,ambient_dim,theta,predicted,kink,estimated,lower,upper,flag`;
/// the last four are empty where no estimate was made.
pub fn write_family_csv<W: Write>(rows: &[FigureRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(["index", "ambient_dim", "theta", "predicted", "kink", "estimated", "lower", "upper", "flag"])
        .map_err(csv_io)?;
    for r in rows {
        let (est, lo, hi, flag) = match &r.estimate {
            Some(e) => (
                fmt_float(e.estimate),
                fmt_float(e.lower),
                fmt_float(e.upper),
                e.flag.as_str().to_string(),
            ),
            None => Default::default(),
        };
        writer
            .write_record([
                r.index.to_string(),
                r.ambient_dim.to_string(),
                fmt_float(r.theta),
                fmt_float(r.predicted),
                u8::from(r.is_kink).to_string(),
                est,
                lo,
                hi,
                flag,
            ])
            .map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lebesgue_cube_at_half_theta() {
        assert_eq!(lebesgue_spectrum(3, 0.5), 3.0);
        assert!((0..=10).all(|i| lebesgue_spectrum(1, i as f64 / 10.0) == 2.0));
    }

    #[test]
    fn circle_cylinders_take_the_second_branch() {
        for n in 1..=FAMILY_SIZE {
            for i in 0..=20 {
                let t = i as f64 / 20.0;
                assert!((cylinder_spectrum(1, n, t) - (1.0 + n as f64 * t)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn kinks_sit_where_the_branches_cross() {
        assert_eq!(cylinder_kink(2), None);
        assert_eq!(cylinder_kink(3), Some(1.0 - 2.0 / 3.0));
        for k in 3..=FAMILY_SIZE {
            let t = cylinder_kink(k).unwrap();
            let (k_, n) = (k as f64, 1.0);
            assert!(((2.0 + (k_ + n) * t) - (k_ + n * t)).abs() < 1e-12);
            let grid = Family::SphereCylinders.grid(k, &[0.0, 0.5, 1.0]);
            assert!(grid.contains(&t) && grid.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn two_sphere_cylinder_matches_the_square() {
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            assert_eq!(Family::SphereCylinders.predicted(2, t), Family::Lebesgue.predicted(2, t));
        }
    }

    #[test]
    fn ambient_dims_match_specs() {
        for family in Family::ALL {
            for index in 1..=FAMILY_SIZE {
                assert_eq!(family.spec(index).unwrap().ambient_dim(), family.ambient_dim(index));
            }
        }
    }

    #[test]
    fn only_small_members_are_estimated() {
        // A grid of just θ = 0 keeps the estimates cheap.
        let rows = family_rows(Family::CircleCylinders, &[0.0], SpectrumBudget::default_for).unwrap();
        assert_eq!(rows.len(), FAMILY_SIZE);
        assert!(rows[0].estimate.is_some());
        assert!(rows[1..].iter().all(|r| r.estimate.is_none()));
        let mut out = Vec::new();
        write_family_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with(",,,,"));
    }
}
