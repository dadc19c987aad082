use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{apply_time_warp, Boundary, FrameGrid, MultichannelSignal};
use crate::spectral::{GridSpacing, SourceSpectrum};
use crate::trajectory::WarpingTrajectory;

/// Welch estimate (Hann window, half overlap) of the power spectrum of a
/// single-channel signal, on `segment / 2 + 1` linear bins over `[0, 1/2]`.
/// The normalization matches [`SourceSpectrum::variance`]: the variance is
/// `2 ∫₀^{1/2} S`.
pub fn welch_spectrum(x: &[f64], segment: usize) -> Result<SourceSpectrum> {
    if segment < 4 || segment % 2 != 0 {
        return Err(Error::Config(format!("Welch segment length {segment} must be even and at least 4")));
    }
    if x.len() < segment {
        return Err(Error::Config(format!(
            "signal of {} samples is shorter than the Welch segment ({segment})",
            x.len()
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment);
    let window: Vec<f64> = (0..segment).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / segment as f64).cos()).collect();
    let window_energy: f64 = window.iter().map(|w| w * w).sum();
    let half = segment / 2;
    let mut acc = vec![0.0; half + 1];
    let mut count = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); segment];
    let mut start = 0;
    while start + segment <= x.len() {
        for (b, (v, w)) in buf.iter_mut().zip(x[start..start + segment].iter().zip(&window)) {
            *b = Complex64::new(v * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += half;
    }
    let norm = 1.0 / (count as f64 * window_energy);
    let frequencies = (0..=half).map(|k| k as f64 / segment as f64).collect();
    let values = acc.iter().map(|a| a * norm).collect();
    SourceSpectrum::new(frequencies, values, GridSpacing::Linear)
}

/// Spectrum of the stationary signal underlying a warped source.
///
/// The warping rebuilt from the per-frame `theta` (scale units, base `q`)
/// is inverted and applied to `y`, and the Welch spectrum of the result is
/// returned. With `θ ≡ 0` this is the Welch spectrum of `y` itself.
pub fn estimate_spectrum(
    y: &MultichannelSignal,
    theta: &[f64],
    frames: &FrameGrid,
    base: f64,
    segment: usize,
) -> Result<SourceSpectrum> {
    if y.n_channels() != 1 {
        return Err(Error::InvalidSignal(format!("spectrum estimation expects one channel, got {}", y.n_channels())));
    }
    if theta.len() != frames.count || frames.signal_len != y.len() {
        return Err(Error::Config(format!(
            "{} θ values for {} frames over {} samples (signal has {})",
            theta.len(),
            frames.count,
            frames.signal_len,
            y.len()
        )));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("non-finite θ in spectrum estimation".into()));
    }
    if theta.iter().all(|&t| t == 0.0) {
        return welch_spectrum(&y.channel_vec(0), segment);
    }
    let trajectory = WarpingTrajectory { frames: frames.clone(), base, theta: vec![theta.to_vec()] };
    let inverse = trajectory.warping(0, y.sample_rate())?.inverse()?;
    let x = apply_time_warp(y, &inverse, Boundary::ZeroPad)?;
    welch_spectrum(&x.channel_vec(0), segment)
}
