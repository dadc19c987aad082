//! Source spectra, the analytic wavelet filter bank and the scale-domain
//! covariance matrices `Σ(θ)`.

mod covariance;
mod spectrum;
mod wavelet;

pub use covariance::{
    build_covariance, CovarianceFactor, CovarianceMatrix, FilterBank, QuadratureConfig,
    DEFAULT_COVARIANCE_FLOOR,
};
pub use spectrum::{GridSpacing, SourceSpectrum};
pub use wavelet::{wavelet_fourier, WaveletSpec};
