use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{apply_time_warp, Boundary, FrameGrid, MultichannelSignal, WarpingFunction};
use crate::error::{Error, Result};
use crate::spectral::SourceSpectrum;
use crate::trajectory::{condition_number, MatrixKind, MixingTrajectory};

/// Zero-mean stationary Gaussian noise with power spectral density
/// `spectrum`, made by filtering white noise in the frequency domain.
pub fn generate_stationary_source(
    spectrum: &SourceSpectrum,
    len: usize,
    sample_rate: f64,
    seed: u64,
) -> Result<MultichannelSignal> {
    if len < 2 {
        return Err(Error::InvalidSignal(format!("cannot generate {len} samples")));
    }
    let fft_len = (2 * len).next_power_of_two();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex64> = (0..fft_len)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(fft_len).process(&mut buf);
    for (m, b) in buf.iter_mut().enumerate() {
        let xi = m.min(fft_len - m) as f64 / fft_len as f64;
        *b *= spectrum.eval(xi).sqrt() / fft_len as f64;
    }
    planner.plan_fft_inverse(fft_len).process(&mut buf);
    let samples: Vec<f64> = buf[..len].iter().map(|c| c.re).collect();
    MultichannelSignal::single(samples, sample_rate)
}

/// Band-pass source: flat between `band_hz` with raised-cosine skirts,
/// scaled to the requested variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub band_hz: [f64; 2],
    pub rolloff_hz: f64,
    pub variance: f64,
}

/// `γ'(t) = 1 + amplitude · sin(2π frequency_hz t + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpSpec {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

/// `A(t)_{ij} = base_{ij} + amplitude_{ij} sin(2π frequency_hz_{ij} t + phase_{ij})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSpec {
    pub base: Vec<Vec<f64>>,
    pub amplitude: Vec<Vec<f64>>,
    pub frequency_hz: Vec<Vec<f64>>,
    pub phase: Vec<Vec<f64>>,
    /// Largest condition number tolerated at any frame.
    pub condition_cap: f64,
}

impl MixingSpec {
    pub fn constant(matrix: Vec<Vec<f64>>) -> Self {
        let zeros: Vec<Vec<f64>> = matrix.iter().map(|r| vec![0.0; r.len()]).collect();
        MixingSpec {
            base: matrix,
            amplitude: zeros.clone(),
            frequency_hz: zeros.clone(),
            phase: zeros,
            condition_cap: 1e3,
        }
    }

    pub fn n(&self) -> usize {
        self.base.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let fields = [
            ("base", &self.base),
            ("amplitude", &self.amplitude),
            ("frequency_hz", &self.frequency_hz),
            ("phase", &self.phase),
        ];
        for (name, m) in fields {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::Config(format!("mixing.{name} must be {n}×{n}")));
            }
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("mixing.{name} has non-finite entries")));
            }
        }
        if !(self.condition_cap > 1.0) {
            return Err(Error::Config(format!("mixing.condition_cap = {} must exceed 1", self.condition_cap)));
        }
        Ok(())
    }

    /// `A(t)` at time `t` seconds.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            self.base[i][j] + self.amplitude[i][j] * (2.0 * PI * self.frequency_hz[i][j] * t + self.phase[i][j]).sin()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    pub n_samples: usize,
    pub sample_rate: f64,
    pub sources: Vec<SourceSpec>,
    pub warps: Vec<WarpSpec>,
    pub mixing: MixingSpec,
    /// Frame hop (samples) on which the mixing trajectory is reported and
    /// its conditioning checked.
    pub frame_hop: usize,
    /// Number of linear grid points of each source spectrum on `[0, 1/2]`.
    pub spectrum_points: usize,
    pub seed: u64,
}

impl SynthesisSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.sources.len();
        if n == 0 {
            return Err(Error::Config("synthesis needs at least one source".into()));
        }
        if self.warps.len() != n {
            return Err(Error::Config(format!("{} warps for {n} sources", self.warps.len())));
        }
        if self.mixing.n() != n {
            return Err(Error::Config(format!("mixing is {}×{0}, expected {n}×{n}", self.mixing.n())));
        }
        self.mixing.validate()?;
        if self.n_samples < 2 || !(self.sample_rate > 0.0) {
            return Err(Error::Config("synthesis needs n_samples ≥ 2 and a positive sample rate".into()));
        }
        let nyquist = self.sample_rate / 2.0;
        for (i, s) in self.sources.iter().enumerate() {
            let [lo, hi] = s.band_hz;
            if !(0.0 <= lo && lo < hi && hi <= nyquist && s.rolloff_hz >= 0.0 && s.variance >= 0.0) {
                return Err(Error::Config(format!(
                    "sources[{i}]: need 0 ≤ band low < high ≤ {nyquist} Hz and non-negative rolloff/variance"
                )));
            }
        }
        for (i, w) in self.warps.iter().enumerate() {
            if !(w.amplitude.abs() < 1.0 && w.frequency_hz >= 0.0 && w.phase.is_finite()) {
                return Err(Error::Config(format!("warps[{i}]: need |amplitude| < 1 and frequency ≥ 0")));
            }
        }
        if self.frame_hop == 0 || self.frame_hop > self.n_samples {
            return Err(Error::Config(format!("frame_hop {} out of range", self.frame_hop)));
        }
        if self.spectrum_points < 2 {
            return Err(Error::Config("spectrum_points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn spectrum(&self, i: usize) -> Result<SourceSpectrum> {
        let s = &self.sources[i];
        let fs = self.sample_rate;
        let shape = SourceSpectrum::band_pass(
            s.band_hz[0] / fs,
            s.band_hz[1] / fs,
            s.rolloff_hz / fs,
            1.0,
            self.spectrum_points,
        )?;
        let v = shape.variance();
        shape.scaled(if v > 0.0 { s.variance / v } else { 0.0 })
    }

    pub fn warp(&self, i: usize) -> Result<WarpingFunction> {
        let w = &self.warps[i];
        let duration = self.n_samples as f64 / self.sample_rate;
        // Knots every 1/64 of a warp period keep the Hermite error far below
        // the interpolation error.
        let spacing = if w.frequency_hz > 0.0 { (1.0 / (64.0 * w.frequency_hz)).min(duration) } else { duration };
        WarpingFunction::sinusoidal(w.amplitude, w.frequency_hz, w.phase, 0.0, 0.0, duration, spacing)
    }
}

/// Observations together with the full ground truth that produced them.
#[derive(Clone, Debug)]
pub struct SyntheticMixture {
    pub observations: MultichannelSignal,
    pub sources: MultichannelSignal,
    pub mixing: MixingTrajectory,
    pub warps: Vec<WarpingFunction>,
    pub spectra: Vec<SourceSpectrum>,
    pub condition_numbers: Vec<f64>,
}

fn source_seed(seed: u64, i: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1)
}

/// Warped band-pass sources mixed sample-wise by the sinusoidal `A(t)`.
pub fn generate_synthetic_mixture(spec: &SynthesisSpec) -> Result<SyntheticMixture> {
    spec.validate()?;
    let n = spec.sources.len();
    let len = spec.n_samples;
    let fs = spec.sample_rate;
    let frames = FrameGrid::centered(len, spec.frame_hop)?;

    let mut matrices = Vec::with_capacity(frames.count);
    let mut conditions = Vec::with_capacity(frames.count);
    for (j, p) in frames.positions().enumerate() {
        let a = spec.mixing.at(p as f64 / fs);
        let cond = condition_number(&a);
        if !(cond <= spec.mixing.condition_cap) {
            return Err(Error::IllConditionedMixing { frame: j, condition: cond, cap: spec.mixing.condition_cap });
        }
        matrices.push(a);
        conditions.push(cond);
    }
    let mixing = MixingTrajectory::new(frames, MatrixKind::Mixing, matrices)?;

    let mut spectra = Vec::with_capacity(n);
    let mut warps = Vec::with_capacity(n);
    let mut sources = Array2::<f64>::zeros((n, len));
    for i in 0..n {
        let spectrum = spec.spectrum(i)?;
        let gamma = spec.warp(i)?;
        let w = &spec.warps[i];
        // γ drifts from t by at most 2|a| / (2πf) seconds.
        let drift = if w.frequency_hz > 0.0 {
            2.0 * w.amplitude.abs() / (2.0 * PI * w.frequency_hz)
        } else {
            w.amplitude.abs() * len as f64 / fs
        };
        let pad = (drift * fs).ceil() as usize + 64;
        let stationary = generate_stationary_source(&spectrum, len + 2 * pad, fs, source_seed(spec.seed, i))?;
        let shifted = gamma.offset(pad as f64 / fs);
        let warped = apply_time_warp(&stationary, &shifted, Boundary::ZeroPad)?;
        for (t, v) in warped.channel(0).iter().take(len).enumerate() {
            sources[[i, t]] = *v;
        }
        spectra.push(spectrum);
        warps.push(gamma);
    }

    let mut observations = Array2::<f64>::zeros((n, len));
    for t in 0..len {
        let a = spec.mixing.at(t as f64 / fs);
        for r in 0..n {
            observations[[r, t]] = (0..n).map(|c| a[(r, c)] * sources[[c, t]]).sum();
        }
    }
    Ok(SyntheticMixture {
        observations: MultichannelSignal::new(observations, fs)?,
        sources: MultichannelSignal::new(sources, fs)?,
        mixing,
        warps,
        spectra,
        condition_numbers: conditions,
    })
}
