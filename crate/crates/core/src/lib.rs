//! Numerical estimation of Fourier spectra, product-measure bounds and
//! capacity-based box dimensions.

pub mod error;
pub mod figure;
pub mod measures;
pub mod products;
pub mod quadrature;
pub mod report;
pub mod setdim;
pub mod spectrum;
pub mod tolerances;
pub mod transform;

pub use error::{Error, Result};
pub use measures::{fourier_eval, sample, total_mass, FourierValue, MeasureSpec};
