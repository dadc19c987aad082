use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Analytic log-Gaussian wavelet, `ψ̂(ξ) = exp(−c·ln²(ξ/ξ₀))` for `ξ > 0` and
/// zero otherwise. Frequencies are in cycles per sample.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WaveletSpec {
    bandwidth: f64,
    center: f64,
}

impl WaveletSpec {
    /// `bandwidth` is the shape parameter `c` (larger is narrower in
    /// frequency); `center` is the peak frequency `ξ₀` of scale zero.
    pub fn log_gaussian(bandwidth: f64, center: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Config(format!("wavelet bandwidth c = {bandwidth} must be positive")));
        }
        if !(center.is_finite() && center > 0.0) {
            return Err(Error::Config(format!("wavelet centre ξ₀ = {center} must be positive")));
        }
        Ok(WaveletSpec { bandwidth, center })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    #[inline]
    pub fn fourier(&self, xi: f64) -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        let l = (xi / self.center).ln();
        (-self.bandwidth * l * l).exp()
    }

    /// Full width at half maximum of `|ψ̂|` in natural-log frequency.
    pub fn log_fwhm(&self) -> f64 {
        2.0 * (2f64.ln() / self.bandwidth).sqrt()
    }

    /// Half-width in natural-log frequency beyond which `ψ̂ < cutoff`.
    pub fn log_support(&self, cutoff: f64) -> f64 {
        (-cutoff.ln() / self.bandwidth).sqrt()
    }

    /// Half-width, in samples, of the time envelope of the wavelet tuned to
    /// `frequency` (four standard deviations of its Gaussian approximation).
    pub fn time_support(&self, frequency: f64) -> f64 {
        4.0 * (2.0 * self.bandwidth).sqrt() / (2.0 * PI * frequency)
    }

    /// `∫₀^∞ |ψ̂(u)|² du`, in closed form.
    pub fn energy(&self) -> f64 {
        let c = self.bandwidth;
        self.center * (PI / (2.0 * c)).sqrt() * (1.0 / (8.0 * c)).exp()
    }
}

/// `ψ̂(ξ)` as a complex value (its imaginary part is always zero).
pub fn wavelet_fourier(wavelet: &WaveletSpec, xi: f64) -> Complex64 {
    Complex64::new(wavelet.fourier(xi), 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admissible_and_peaked() {
        let w = WaveletSpec::log_gaussian(12.0, 0.2).unwrap();
        assert_eq!(wavelet_fourier(&w, 0.0), Complex64::new(0.0, 0.0));
        assert_eq!(w.fourier(-0.1), 0.0);
        let peak = w.fourier(0.2);
        for i in 1..4000 {
            assert!(w.fourier(i as f64 * 1e-4) <= peak);
        }
        for r in [1.01, 1.5, 3.0, 17.0] {
            assert!((w.fourier(0.2 * r) - w.fourier(0.2 / r)).abs() < 1e-15);
        }
    }

    #[test]
    fn energy_matches_quadrature() {
        let w = WaveletSpec::log_gaussian(7.0, 0.1).unwrap();
        let h = 1e-5;
        let q: f64 = (1..200_000).map(|i| w.fourier(i as f64 * h).powi(2) * h).sum();
        assert!((q - w.energy()).abs() < 1e-9 * w.energy().max(1.0));
    }
}
