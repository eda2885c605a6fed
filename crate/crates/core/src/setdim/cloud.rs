use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Finite discretization of a compact set in `R^d`.
#[derive(Debug, Clone)]
pub struct PointCloud {
    coords: Vec<f64>,
    dim: usize,
    diameter: f64,
    /// Factor clouds when this cloud is their full Cartesian product, with
    /// the first factor's index varying slowest.
    factors: Vec<PointCloud>,
}

/// Clouds are equal when they list the same points in the same order.
impl PartialEq for PointCloud {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.coords == other.coords
    }
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or_else(|| Error::Cloud("cloud has no points".into()))?;
        if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
            return Err(Error::Cloud(format!("point {i} has {} coordinates, expected {dim}", p.len())));
        }
        Self::from_flat(points.into_iter().flatten().collect(), dim)
    }

    /// Builds a cloud from row-major coordinates.
    pub fn from_flat(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Cloud("ambient dimension must be positive".into()));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::Cloud(format!(
                "{} coordinates do not form a nonempty set of {dim}-vectors",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Cloud("non-finite coordinate".into()));
        }
        let mut cloud = PointCloud {
            coords,
            dim,
            diameter: 0.0,
            factors: Vec::new(),
        };
        cloud.diameter = cloud.compute_diameter();
        Ok(cloud)
    }

    /// Factor clouds of a full Cartesian product; empty otherwise.
    pub fn factors(&self) -> &[PointCloud] {
        &self.factors
    }

    fn compute_diameter(&self) -> f64 {
        let n = self.len();
        if self.dim == 1 {
            let (lo, hi) = self
                .coords
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            return hi - lo;
        }
        if self.dim == 2 {
            // The farthest pair lies on the convex hull.
            let hull = convex_hull(self.points().map(|p| (p[0], p[1])).collect());
            let mut best = 0.0f64;
            for (i, a) in hull.iter().enumerate() {
                for b in &hull[i + 1..] {
                    best = best.max((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2));
                }
            }
            return best.sqrt();
        }
        let mut best = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(self.distance_sq(i, j));
            }
        }
        best.sqrt()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn distance_sq(&self, i: usize, j: usize) -> f64 {
        self.point(i).iter().zip(self.point(j)).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance_sq(i, j).sqrt()
    }

    /// Smallest distance between two different points; zero if any coincide.
    pub fn min_separation(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return f64::INFINITY;
        }
        if self.dim == 1 {
            let mut xs = self.coords.clone();
            xs.sort_by(f64::total_cmp);
            return xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        }
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                best = best.min(self.distance_sq(i, j));
            }
        }
        best.sqrt()
    }

    /// `per_axis^dim` points on the grid `{0, 1/(per_axis-1), ..., 1}^dim`.
    pub fn uniform_grid(per_axis: usize, dim: usize) -> Result<Self> {
        let step = if per_axis > 1 { 1.0 / (per_axis - 1) as f64 } else { 0.0 };
        Self::grid(per_axis, dim, |i| i as f64 * step)
    }

    /// `per_axis^dim` cell midpoints `(i + 1/2) / per_axis`: one point in
    /// each cell of the mesh of side `1/per_axis`, so dyadic box counts of
    /// the unit cube are exact.
    pub fn centered_grid(per_axis: usize, dim: usize) -> Result<Self> {
        let step = 1.0 / per_axis.max(1) as f64;
        Self::grid(per_axis, dim, |i| (i as f64 + 0.5) * step)
    }

    fn grid(per_axis: usize, dim: usize, coordinate: impl Fn(usize) -> f64) -> Result<Self> {
        if per_axis == 0 || dim == 0 {
            return Err(Error::arg("grid needs at least one point per axis and dimension >= 1"));
        }
        let axis = Self::from_flat((0..per_axis).map(coordinate).collect(), 1)?;
        let mut cloud = axis.clone();
        for _ in 1..dim {
            cloud = cloud.product(&axis, usize::MAX, 0)?;
        }
        Ok(cloud)
    }

    /// Left endpoints of the `2^level` intervals of the middle-third Cantor
    /// construction at the given level.
    pub fn cantor_endpoints(level: u32) -> Result<Self> {
        if level > 20 {
            return Err(Error::arg("Cantor level above 20 exceeds the cloud size limit"));
        }
        let coords: Vec<f64> = (0u64..1 << level)
            .map(|bits| {
                // Integer numerator over 3^level keeps the points exact up to one rounding.
                let numerator: u64 = (0..level)
                    .filter(|k| bits & (1 << (level - 1 - k)) != 0)
                    .map(|k| 2 * 3u64.pow(level - 1 - k))
                    .sum();
                numerator as f64 / 3f64.powi(level as i32)
            })
            .collect();
        Self::from_flat(coords, 1)
    }

    /// Cartesian product, subsampled with a fixed seed when it would exceed `cap` points.
    pub fn product(&self, other: &PointCloud, cap: usize, seed: u64) -> Result<Self> {
        let total = self.len().checked_mul(other.len()).unwrap_or(usize::MAX);
        let dim = self.dim + other.dim;
        let pair = |k: usize| (k / other.len(), k % other.len());
        let chosen: Vec<usize> = if total <= cap {
            (0..total).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, total, cap).into_vec();
            picked.sort_unstable();
            picked
        };
        let mut coords = Vec::with_capacity(chosen.len() * dim);
        for k in &chosen {
            let (i, j) = pair(*k);
            coords.extend_from_slice(self.point(i));
            coords.extend_from_slice(other.point(j));
        }
        let mut cloud = PointCloud {
            coords,
            dim,
            diameter: 0.0,
            factors: Vec::new(),
        };
        if total <= cap {
            // Squared distances add across factors, so the maxima do too.
            cloud.diameter = self.diameter.hypot(other.diameter);
            for part in [self, other] {
                if part.factors.is_empty() {
                    cloud.factors.push(part.clone());
                } else {
                    cloud.factors.extend(part.factors.iter().cloned());
                }
            }
        } else {
            cloud.diameter = cloud.compute_diameter();
        }
        Ok(cloud)
    }

    /// Reads headerless CSV, one point per row.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut coords = Vec::new();
        let mut dim = None;
        for (row, record) in rdr.records().enumerate() {
            let line = row + 1;
            let record = record.map_err(|e| Error::Parse {
                location: format!("line {line}"),
                message: e.to_string(),
            })?;
            let expected = *dim.get_or_insert(record.len());
            if record.len() != expected {
                return Err(Error::Parse {
                    location: format!("line {line}"),
                    message: format!("expected {expected} columns, found {}", record.len()),
                });
            }
            for (col, field) in record.iter().enumerate() {
                let value: f64 = field.parse().map_err(|_| Error::Parse {
                    location: format!("line {line}, column {}", col + 1),
                    message: format!("not a decimal number: {field:?}"),
                })?;
                coords.push(value);
            }
        }
        Self::from_flat(coords, dim.unwrap_or(0).max(1))
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for p in self.points() {
            w.write_record(p.iter().map(|&x| crate::report::fmt_float(x))).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Andrew's monotone chain.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
