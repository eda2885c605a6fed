//! Symbolic finite Borel measures with evaluable Fourier transforms.
//!
//! The transform convention is `μ̂(z) = ∫ exp(-2πi z·x) dμ(x)`. Measures are
//! never normalized: the total mass is carried and `μ̂(0)` equals it exactly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{sphere_area, sphere_radial};
use crate::tolerances::{SELF_SIMILAR_REL_TOL, SELF_SIMILAR_SAMPLE_RESOLUTION, SPHERE_QUADRATURE_TOL};

/// A finite Borel measure on `R^d` described symbolically.
///
/// Serializes to JSON tagged by `"variant"`. Deserialization re-runs every
/// validity check, so a parsed spec is always well formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", try_from = "RawSpec")]
pub enum MeasureSpec {
    /// Weighted point masses.
    Atomic { points: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Lebesgue measure on `[0,1]^d`.
    UniformCube { d: usize },
    /// Surface measure on the unit sphere `S^k ⊂ R^{k+1}`.
    SphereSurface { k: usize },
    /// Invariant measure of the maps `x ↦ ratio·x + t_j` chosen with probabilities `p_j`.
    SelfSimilar1D {
        ratio: f64,
        translations: Vec<f64>,
        probabilities: Vec<f64>,
    },
    /// Product measure on `R^{d_left} × R^{d_right}`.
    Product {
        left: Box<MeasureSpec>,
        right: Box<MeasureSpec>,
    },
}

#[derive(Deserialize)]
#[serde(tag = "variant", deny_unknown_fields)]
enum RawSpec {
    Atomic { points: Vec<Vec<f64>>, weights: Vec<f64> },
    UniformCube { d: usize },
    SphereSurface { k: usize },
    SelfSimilar1D {
        ratio: f64,
        translations: Vec<f64>,
        probabilities: Vec<f64>,
    },
    Product {
        left: Box<MeasureSpec>,
        right: Box<MeasureSpec>,
    },
}

impl TryFrom<RawSpec> for MeasureSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let spec = match raw {
            RawSpec::Atomic { points, weights } => MeasureSpec::Atomic { points, weights },
            RawSpec::UniformCube { d } => MeasureSpec::UniformCube { d },
            RawSpec::SphereSurface { k } => MeasureSpec::SphereSurface { k },
            RawSpec::SelfSimilar1D {
                ratio,
                translations,
                probabilities,
            } => MeasureSpec::SelfSimilar1D {
                ratio,
                translations,
                probabilities,
            },
            RawSpec::Product { left, right } => MeasureSpec::Product { left, right },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A transform value with a guaranteed bound `|value - μ̂(z)| <= abs_err`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierValue {
    pub value: Complex64,
    pub abs_err: f64,
}

impl MeasureSpec {
    pub fn atomic(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let spec = MeasureSpec::Atomic { points, weights };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit point mass at the origin of `R^d`.
    pub fn dirac(d: usize) -> Result<Self> {
        Self::atomic(vec![vec![0.0; d]], vec![1.0])
    }

    pub fn uniform_cube(d: usize) -> Result<Self> {
        let spec = MeasureSpec::UniformCube { d };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sphere(k: usize) -> Result<Self> {
        let spec = MeasureSpec::SphereSurface { k };
        spec.validate()?;
        Ok(spec)
    }

    pub fn self_similar(ratio: f64, translations: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        let spec = MeasureSpec::SelfSimilar1D {
            ratio,
            translations,
            probabilities,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The middle-third Cantor measure.
    pub fn cantor() -> Self {
        Self::self_similar(1.0 / 3.0, vec![0.0, 2.0 / 3.0], vec![0.5, 0.5]).expect("valid Cantor spec")
    }

    pub fn product(left: MeasureSpec, right: MeasureSpec) -> Self {
        MeasureSpec::Product {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("measure specs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MeasureSpec::Atomic { points, weights } => {
                if points.is_empty() {
                    return Err(Error::measure("atomic measure needs at least one point"));
                }
                if points.len() != weights.len() {
                    return Err(Error::measure(format!(
                        "{} points but {} weights",
                        points.len(),
                        weights.len()
                    )));
                }
                let d = points[0].len();
                if d == 0 {
                    return Err(Error::measure("points must have at least one coordinate"));
                }
                for p in points {
                    if p.len() != d {
                        return Err(Error::DimensionMismatch { expected: d, got: p.len() });
                    }
                    if p.iter().any(|c| !c.is_finite()) {
                        return Err(Error::measure("non-finite point coordinate"));
                    }
                }
                if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                    return Err(Error::measure("weights must be positive and finite"));
                }
                let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
                sorted.sort_by(|a, b| {
                    a.iter()
                        .zip(b.iter())
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::measure("atomic points must be distinct"));
                }
                Ok(())
            }
            MeasureSpec::UniformCube { d } => {
                if *d == 0 {
                    return Err(Error::measure("cube dimension must be positive"));
                }
                Ok(())
            }
            MeasureSpec::SphereSurface { k } => {
                if *k == 0 {
                    return Err(Error::measure("sphere dimension must be positive"));
                }
                Ok(())
            }
            MeasureSpec::SelfSimilar1D {
                ratio,
                translations,
                probabilities,
            } => {
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(Error::measure("contraction ratio must lie in (0, 1)"));
                }
                if translations.is_empty() || translations.len() != probabilities.len() {
                    return Err(Error::measure("need one probability per translation"));
                }
                if probabilities.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                    return Err(Error::measure("probabilities must be positive"));
                }
                let total: f64 = probabilities.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::measure(format!("probabilities sum to {total}, not 1")));
                }
                for &t in translations {
                    if !(0.0..=1.0).contains(&t) || t + ratio > 1.0 + 1e-12 {
                        return Err(Error::measure(format!(
                            "image interval [{t}, {}] leaves [0, 1]",
                            t + ratio
                        )));
                    }
                }
                // Open set condition with U = (0,1): the image intervals
                // [t_j, t_j + ratio] may touch but not overlap.
                let mut sorted = translations.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[1] - w[0] < ratio - 1e-12) {
                    return Err(Error::measure("image intervals overlap; open set condition fails"));
                }
                Ok(())
            }
            MeasureSpec::Product { left, right } => {
                left.validate()?;
                right.validate()
            }
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            MeasureSpec::Atomic { points, .. } => points[0].len(),
            MeasureSpec::UniformCube { d } => *d,
            MeasureSpec::SphereSurface { k } => k + 1,
            MeasureSpec::SelfSimilar1D { .. } => 1,
            MeasureSpec::Product { left, right } => left.ambient_dim() + right.ambient_dim(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            MeasureSpec::Atomic { weights, .. } => weights.iter().sum(),
            MeasureSpec::UniformCube { .. } => 1.0,
            MeasureSpec::SphereSurface { k } => sphere_area(*k),
            MeasureSpec::SelfSimilar1D { .. } => 1.0,
            MeasureSpec::Product { left, right } => left.total_mass() * right.total_mass(),
        }
    }

    /// Diameter of the support.
    pub fn diameter(&self) -> f64 {
        match self {
            MeasureSpec::Atomic { points, .. } => {
                let mut best = 0.0f64;
                for (i, p) in points.iter().enumerate() {
                    for q in &points[i + 1..] {
                        let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                        best = best.max(d2);
                    }
                }
                best.sqrt()
            }
            MeasureSpec::UniformCube { d } => (*d as f64).sqrt(),
            MeasureSpec::SphereSurface { .. } => 2.0,
            MeasureSpec::SelfSimilar1D {
                ratio, translations, ..
            } => {
                let (lo, hi) = min_max(translations);
                (hi - lo) / (1.0 - ratio)
            }
            MeasureSpec::Product { left, right } => {
                (left.diameter().powi(2) + right.diameter().powi(2)).sqrt()
            }
        }
    }

    /// Largest norm of a point in the support.
    pub fn support_radius(&self) -> f64 {
        match self {
            MeasureSpec::Atomic { points, .. } => points
                .iter()
                .map(|p| p.iter().map(|c| c * c).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
            MeasureSpec::UniformCube { d } => (*d as f64).sqrt(),
            MeasureSpec::SphereSurface { .. } => 1.0,
            MeasureSpec::SelfSimilar1D {
                ratio, translations, ..
            } => {
                let (lo, hi) = min_max(translations);
                (lo.abs().max(hi.abs())) / (1.0 - ratio)
            }
            MeasureSpec::Product { left, right } => {
                (left.support_radius().powi(2) + right.support_radius().powi(2)).sqrt()
            }
        }
    }

    /// Evaluates the transform without checking the dimension of `z`.
    pub(crate) fn transform(&self, z: &[f64]) -> Result<FourierValue> {
        if z.iter().all(|&c| c == 0.0) {
            return Ok(FourierValue {
                value: Complex64::new(self.total_mass(), 0.0),
                abs_err: 0.0,
            });
        }
        match self {
            MeasureSpec::Atomic { points, weights } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (p, &w) in points.iter().zip(weights) {
                    let phase: f64 = p.iter().zip(z).map(|(x, y)| x * y).sum();
                    acc += w * cis_turns(-phase);
                }
                Ok(FourierValue { value: acc, abs_err: 0.0 })
            }
            MeasureSpec::UniformCube { .. } => {
                let mut acc = Complex64::new(1.0, 0.0);
                for &c in z {
                    acc *= interval_transform(c);
                }
                Ok(FourierValue { value: acc, abs_err: 0.0 })
            }
            MeasureSpec::SphereSurface { k } => {
                let rho = z.iter().map(|c| c * c).sum::<f64>().sqrt();
                let (v, e) = sphere_radial(*k, rho, SPHERE_QUADRATURE_TOL)?;
                Ok(FourierValue {
                    value: Complex64::new(v, 0.0),
                    abs_err: e,
                })
            }
            MeasureSpec::SelfSimilar1D {
                ratio,
                translations,
                probabilities,
            } => Ok(self_similar_transform(*ratio, translations, probabilities, z[0])),
            MeasureSpec::Product { left, right } => {
                let split = left.ambient_dim();
                let a = left.transform(&z[..split])?;
                let b = right.transform(&z[split..])?;
                Ok(multiply(a, b))
            }
        }
    }

    /// Draws `n` i.i.d. points from the normalized measure.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampler = Sampler::new(self);
        (0..n)
            .map(|_| {
                let mut point = Vec::with_capacity(self.ambient_dim());
                sampler.draw(&mut rng, &mut point);
                point
            })
            .collect()
    }
}

/// Transform of `spec` at `z`, with a certified absolute error bound.
pub fn fourier_eval(spec: &MeasureSpec, z: &[f64]) -> Result<FourierValue> {
    let d = spec.ambient_dim();
    if z.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: z.len() });
    }
    if z.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("frequency"));
    }
    spec.transform(z)
}

pub fn total_mass(spec: &MeasureSpec) -> f64 {
    spec.total_mass()
}

pub fn sample(spec: &MeasureSpec, n: usize, seed: u64) -> Vec<Vec<f64>> {
    spec.sample(n, seed)
}

pub(crate) fn multiply(a: FourierValue, b: FourierValue) -> FourierValue {
    let value = a.value * b.value;
    let abs_err = a.abs_err * (b.value.norm() + b.abs_err)
        + a.value.norm() * b.abs_err
        + 4.0 * f64::EPSILON * value.norm();
    FourierValue { value, abs_err }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// `exp(2πi·turns)` with the argument reduced to `[-1/2, 1/2]` first.
pub(crate) fn cis_turns(turns: f64) -> Complex64 {
    let reduced = turns - turns.round();
    let (s, c) = (2.0 * PI * reduced).sin_cos();
    Complex64::new(c, s)
}

/// `sin(πx)` and `cos(πx)` with exact reduction modulo 2.
fn sin_cos_pi(x: f64) -> (f64, f64) {
    let r = x - 2.0 * (0.5 * x).round();
    (PI * r).sin_cos()
}

/// Transform of Lebesgue measure on `[0,1]`: `e^{-πiξ} sin(πξ)/(πξ)`.
pub(crate) fn interval_transform(xi: f64) -> Complex64 {
    if xi == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let (s, c) = sin_cos_pi(xi);
    let sinc = s / (PI * xi);
    Complex64::new(c * sinc, -s * sinc)
}

/// `μ̂(ξ) = Π_{n>=0} m(ratio^n ξ)` with `m(ξ) = Σ p_j e^{-2πiξ t_j}`.
///
/// Each omitted factor differs from 1 by at most `2π|ξ| ratio^n max|t_j|`,
/// so truncating after `N` factors costs at most `exp(τ) - 1` with
/// `τ = 2π|ξ| max|t| ratio^N / (1 - ratio)`.
pub(crate) fn self_similar_transform(ratio: f64, t: &[f64], p: &[f64], xi: f64) -> FourierValue {
    if xi == 0.0 {
        return FourierValue {
            value: Complex64::new(1.0, 0.0),
            abs_err: 0.0,
        };
    }
    let t_max = t.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut acc = Complex64::new(1.0, 0.0);
    let mut scale = xi;
    let mut factors = 0usize;
    let budget = 0.5 * SELF_SIMILAR_REL_TOL;
    loop {
        let tail = 2.0 * PI * scale.abs() * t_max / (1.0 - ratio);
        if tail.exp_m1() <= budget {
            let rounding = (factors as f64 + 1.0) * (t.len() as f64 + 2.0) * 4.0 * f64::EPSILON;
            return FourierValue {
                value: acc,
                abs_err: tail.exp_m1() + rounding,
            };
        }
        let mut m = Complex64::new(0.0, 0.0);
        for (&tj, &pj) in t.iter().zip(p) {
            m += pj * cis_turns(-scale * tj);
        }
        acc *= m;
        scale *= ratio;
        factors += 1;
    }
}

/// Precomputed sampling tables so repeated draws avoid re-validating weights.
enum Sampler<'a> {
    Atomic(&'a [Vec<f64>], WeightedIndex<f64>),
    Cube(usize),
    Sphere(usize),
    SelfSimilar {
        ratio: f64,
        translations: &'a [f64],
        index: WeightedIndex<f64>,
        depth: usize,
    },
    Product(Box<Sampler<'a>>, Box<Sampler<'a>>),
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a MeasureSpec) -> Self {
        match spec {
            MeasureSpec::Atomic { points, weights } => {
                Sampler::Atomic(points, WeightedIndex::new(weights).expect("validated weights"))
            }
            MeasureSpec::UniformCube { d } => Sampler::Cube(*d),
            MeasureSpec::SphereSurface { k } => Sampler::Sphere(k + 1),
            MeasureSpec::SelfSimilar1D {
                ratio,
                translations,
                probabilities,
            } => {
                let depth = (SELF_SIMILAR_SAMPLE_RESOLUTION.ln() / ratio.ln()).ceil() as usize + 1;
                Sampler::SelfSimilar {
                    ratio: *ratio,
                    translations,
                    index: WeightedIndex::new(probabilities).expect("validated probabilities"),
                    depth,
                }
            }
            MeasureSpec::Product { left, right } => {
                Sampler::Product(Box::new(Sampler::new(left)), Box::new(Sampler::new(right)))
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        match self {
            Sampler::Atomic(points, index) => out.extend_from_slice(&points[index.sample(rng)]),
            Sampler::Cube(d) => out.extend((0..*d).map(|_| rng.random::<f64>())),
            Sampler::Sphere(n) => loop {
                let v: Vec<f64> = (0..*n).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    out.extend(v.iter().map(|c| c / norm));
                    break;
                }
            },
            Sampler::SelfSimilar {
                ratio,
                translations,
                index,
                depth,
            } => {
                let mut x = 0.0;
                let mut scale = 1.0;
                for _ in 0..*depth {
                    x += scale * translations[index.sample(rng)];
                    scale *= ratio;
                }
                out.push(x);
            }
            Sampler::Product(left, right) => {
                left.draw(rng, out);
                right.draw(rng, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(spec: &MeasureSpec, z: &[f64]) -> FourierValue {
        fourier_eval(spec, z).unwrap()
    }

    #[test]
    fn dirac_transform_is_one() {
        let v = eval(&MeasureSpec::dirac(1).unwrap(), &[3.7]);
        assert_eq!(v.value, Complex64::new(1.0, 0.0));
        assert_eq!(v.abs_err, 0.0);
    }

    #[test]
    fn interval_transform_at_half() {
        // Oracle: midpoint rule for ∫_0^1 e^{-πix} dx on 10^6 cells.
        let n = 1_000_000;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64;
            acc += Complex64::from_polar(1.0, -PI * x);
        }
        let oracle = (acc / n as f64).norm();
        let v = eval(&MeasureSpec::uniform_cube(1).unwrap(), &[0.5]);
        assert!((v.value.norm() - oracle).abs() < 1e-9);
        assert!((v.value.norm() - 0.636_620).abs() < 1e-6);
    }

    #[test]
    fn masses() {
        let a = MeasureSpec::atomic(vec![vec![0.0], vec![1.0]], vec![0.3, 0.7]).unwrap();
        assert!((a.total_mass() - 1.0).abs() < 1e-15);
        assert_eq!(MeasureSpec::uniform_cube(3).unwrap().total_mass(), 1.0);
        let p = MeasureSpec::product(MeasureSpec::sphere(1).unwrap(), a.clone());
        assert_eq!(p.total_mass(), 2.0 * PI * a.total_mass());
        assert_eq!(eval(&p, &[0.0, 0.0, 0.0]).value.re, p.total_mass());
    }

    #[test]
    fn product_on_axis_is_scaled_marginal() {
        let mu = MeasureSpec::cantor();
        let nu = MeasureSpec::sphere(1).unwrap();
        let p = MeasureSpec::product(mu.clone(), nu.clone());
        let x = 2.71;
        let joint = eval(&p, &[x, 0.0, 0.0]);
        let marginal = eval(&mu, &[x]).value * nu.total_mass();
        assert!((joint.value - marginal).norm() <= joint.abs_err + 1e-14);
    }

    #[test]
    fn cantor_invariant_under_tripling() {
        let c = MeasureSpec::cantor();
        let base = eval(&c, &[1.0]).value.norm();
        for n in 1..=12 {
            let v = eval(&c, &[3f64.powi(n)]);
            assert!((v.value.norm() - base).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn cantor_matches_cosine_product() {
        // Independent form: e^{-πiξ} Π_{n>=1} cos(2πξ/3^n).
        for &xi in &[0.3, 1.7, 12.25, 400.5] {
            let mut prod = 1.0;
            for n in 1..80 {
                prod *= (2.0 * PI * xi / 3f64.powi(n)).cos();
            }
            let oracle = Complex64::from_polar(prod, -PI * xi);
            let v = eval(&MeasureSpec::cantor(), &[xi]);
            assert!(v.abs_err <= 1e-10);
            assert!((v.value - oracle).norm() < 1e-10, "xi={xi}");
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(MeasureSpec::atomic(vec![vec![0.0], vec![0.0]], vec![0.5, 0.5]).is_err());
        assert!(MeasureSpec::atomic(vec![vec![0.0]], vec![0.0]).is_err());
        assert!(MeasureSpec::self_similar(0.5, vec![0.0, 0.25], vec![0.5, 0.5]).is_err());
        assert!(MeasureSpec::self_similar(0.5, vec![0.0, 0.5], vec![0.5, 0.6]).is_err());
        assert!(MeasureSpec::self_similar(0.5, vec![0.0, 0.5], vec![0.5, 0.5]).is_ok());
        assert!(MeasureSpec::uniform_cube(0).is_err());
        let bad = r#"{"variant":"SelfSimilar1D","ratio":1.5,"translations":[0.0],"probabilities":[1.0]}"#;
        assert!(MeasureSpec::from_json(bad).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = fourier_eval(&MeasureSpec::uniform_cube(2).unwrap(), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn json_round_trip() {
        let spec = MeasureSpec::product(
            MeasureSpec::product(MeasureSpec::cantor(), MeasureSpec::sphere(2).unwrap()),
            MeasureSpec::atomic(vec![vec![0.1, 0.2]], vec![2.5]).unwrap(),
        );
        let text = spec.to_json();
        assert_eq!(MeasureSpec::from_json(&text).unwrap(), spec);
    }

    #[test]
    fn sampling_single_atom() {
        let pts = MeasureSpec::dirac(1).unwrap().sample(5, 1);
        assert_eq!(pts, vec![vec![0.0]; 5]);
    }

    #[test]
    fn cube_sample_mean() {
        let n = 100_000;
        let pts = MeasureSpec::uniform_cube(2).unwrap().sample(n, 7);
        let sigma = (1.0f64 / 12.0 / n as f64).sqrt();
        for c in 0..2 {
            let mean = pts.iter().map(|p| p[c]).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn cantor_empirical_transform_agrees() {
        let n = 100_000;
        let pts = MeasureSpec::cantor().sample(n, 11);
        let emp: Complex64 = pts.iter().map(|p| cis_turns(-p[0])).sum::<Complex64>() / n as f64;
        let exact = eval(&MeasureSpec::cantor(), &[1.0]).value;
        // Each coordinate of e^{-2πix} has variance at most 1/2.
        let sigma = (0.5 / n as f64).sqrt();
        assert!((emp.re - exact.re).abs() < 3.0 * sigma);
        assert!((emp.im - exact.im).abs() < 3.0 * sigma);
    }

    #[test]
    fn sphere_samples_lie_on_sphere() {
        for p in MeasureSpec::sphere(2).unwrap().sample(100, 3) {
            let r: f64 = p.iter().map(|c| c * c).sum();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = MeasureSpec::product(MeasureSpec::cantor(), MeasureSpec::uniform_cube(1).unwrap());
        assert_eq!(spec.sample(50, 9), spec.sample(50, 9));
    }

    fn spec_strategy() -> impl Strategy<Value = MeasureSpec> {
        let leaf = prop_oneof![
            (1usize..=3).prop_map(|d| MeasureSpec::uniform_cube(d).unwrap()),
            (1usize..=2).prop_map(|k| MeasureSpec::sphere(k).unwrap()),
            Just(MeasureSpec::cantor()),
            (0.05f64..0.45).prop_map(|r| MeasureSpec::self_similar(r, vec![0.0, 0.5], vec![0.3, 0.7]).unwrap()),
            proptest::collection::vec((-2.0f64..2.0, 0.1f64..2.0), 1..5).prop_map(|atoms| {
                let points = atoms.iter().enumerate().map(|(i, a)| vec![a.0 + 10.0 * i as f64]).collect();
                let weights = atoms.iter().map(|a| a.1).collect();
                MeasureSpec::atomic(points, weights).unwrap()
            }),
        ];
        leaf.prop_recursive(2, 4, 2, |inner| {
            (inner.clone(), inner).prop_map(|(a, b)| MeasureSpec::product(a, b))
        })
    }

    fn frequency(spec: &MeasureSpec, raw: &[f64]) -> Vec<f64> {
        raw.iter().cycle().take(spec.ambient_dim()).copied().collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn conjugate_symmetry(spec in spec_strategy(), raw in proptest::collection::vec(-40.0f64..40.0, 6)) {
            let z = frequency(&spec, &raw);
            let neg: Vec<f64> = z.iter().map(|c| -c).collect();
            let a = eval(&spec, &z).value;
            let b = eval(&spec, &neg).value;
            prop_assert!((a - b.conj()).norm() <= 1e-12 * spec.total_mass().max(1.0));
        }

        #[test]
        fn bounded_by_mass(spec in spec_strategy(), raw in proptest::collection::vec(-40.0f64..40.0, 6)) {
            let z = frequency(&spec, &raw);
            let v = eval(&spec, &z);
            prop_assert!(v.abs_err.is_finite());
            prop_assert!(v.value.norm() <= spec.total_mass() * (1.0 + 1e-12) + v.abs_err);
        }

        #[test]
        fn mass_is_transform_at_origin(spec in spec_strategy()) {
            let zero = vec![0.0; spec.ambient_dim()];
            prop_assert_eq!(eval(&spec, &zero).value.re, spec.total_mass());
        }

        #[test]
        fn json_round_trips(spec in spec_strategy()) {
            prop_assert_eq!(MeasureSpec::from_json(&spec.to_json()).unwrap(), spec);
        }
    }
}
