use std::path::Path;

use ndarray::{Array3, ArrayView2};
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{FrameGrid, MultichannelSignal};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::spectral::WaveletSpec;

/// Scales `s_k` of the transform; scale `s` analyses frequencies around
/// `ξ₀ q^{-s}`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScaleGrid {
    base: f64,
    scales: Vec<f64>,
}

impl ScaleGrid {
    pub fn new(base: f64, scales: Vec<f64>) -> Result<Self> {
        if !(base.is_finite() && base > 1.0) {
            return Err(Error::Config(format!("scale base q = {base} must exceed 1")));
        }
        if scales.len() < 2 {
            return Err(Error::Config(format!("need at least 2 scales, got {}", scales.len())));
        }
        if scales.iter().any(|s| !s.is_finite()) || scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("scales must be finite and strictly increasing".into()));
        }
        Ok(ScaleGrid { base, scales })
    }

    /// `count` unit-spaced scales starting at `first`.
    pub fn uniform(base: f64, first: f64, count: usize) -> Result<Self> {
        Self::new(base, (0..count).map(|k| first + k as f64).collect())
    }

    /// `count` unit-spaced scales whose highest analysed frequency is
    /// `max_frequency` (cycles per sample).
    pub fn from_max_frequency(base: f64, count: usize, max_frequency: f64, wavelet: &WaveletSpec) -> Result<Self> {
        if !(max_frequency > 0.0) {
            return Err(Error::Config(format!("max frequency {max_frequency} must be positive")));
        }
        let first = (wavelet.center() / max_frequency).ln() / base.ln();
        Self::uniform(base, first, count)
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn log_base(&self) -> f64 {
        self.base.ln()
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Spacing of a uniform grid, `None` if the grid is irregular.
    pub fn step(&self) -> Option<f64> {
        let step = self.scales[1] - self.scales[0];
        let uniform = self
            .scales
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1.0));
        uniform.then_some(step)
    }

    pub fn shifted(&self, delta: f64) -> Self {
        ScaleGrid { base: self.base, scales: self.scales.iter().map(|s| s + delta).collect() }
    }

    /// Centre frequency analysed by each scale, in cycles per sample.
    pub fn center_frequencies(&self, wavelet: &WaveletSpec) -> Vec<f64> {
        self.scales.iter().map(|&s| wavelet.center() * self.base.powf(-s)).collect()
    }
}

/// Complex wavelet coefficients indexed by (channel, scale, frame).
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoefficientBlock {
    pub coefficients: Array3<Complex64>,
    pub frames: FrameGrid,
    pub scales: ScaleGrid,
    pub sample_rate: f64,
    /// Per scale, the number of samples at each signal edge contaminated by
    /// zero padding.
    pub boundary_margin: Vec<usize>,
}

impl WaveletCoefficientBlock {
    pub fn n_channels(&self) -> usize {
        self.coefficients.dim().0
    }

    pub fn n_scales(&self) -> usize {
        self.coefficients.dim().1
    }

    pub fn n_frames(&self) -> usize {
        self.coefficients.dim().2
    }

    /// Scales × frames coefficients of one channel.
    pub fn channel(&self, c: usize) -> ArrayView2<'_, Complex64> {
        self.coefficients.index_axis(ndarray::Axis(0), c)
    }

    /// Whether frame `j` lies outside every boundary margin.
    pub fn is_interior(&self, j: usize) -> bool {
        let m = self.boundary_margin.iter().copied().max().unwrap_or(0);
        let p = self.frames.position(j);
        p >= m && p + m < self.frames.signal_len
    }

    /// Writes one CSV per channel (rows = scales, columns = frames) holding
    /// the coefficient moduli.
    pub fn export_csv(&self, dir: &Path, prefix: &str) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for c in 0..self.n_channels() {
            let path = dir.join(format!("{prefix}{c}.csv"));
            let rows: Vec<Vec<f64>> = self
                .channel(c)
                .outer_iter()
                .map(|row| row.iter().map(|w| w.norm()).collect())
                .collect();
            super::io::write_matrix_csv(&path, &rows)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Continuous wavelet transform of every channel, sampled on `frames`.
pub fn cwt(
    signal: &MultichannelSignal,
    wavelet: &WaveletSpec,
    grid: &ScaleGrid,
    frames: &FrameGrid,
) -> Result<WaveletCoefficientBlock> {
    cwt_with(signal, wavelet, grid, frames, Parallelism::default())
}

pub fn cwt_with(
    signal: &MultichannelSignal,
    wavelet: &WaveletSpec,
    grid: &ScaleGrid,
    frames: &FrameGrid,
    exec: Parallelism,
) -> Result<WaveletCoefficientBlock> {
    let n = signal.n_channels();
    let len = signal.len();
    if frames.count == 0 {
        return Err(Error::Domain("empty frame grid".into()));
    }
    let last = frames.position(frames.count - 1);
    if last >= len || frames.signal_len != len {
        return Err(Error::Domain(format!(
            "frame at sample {last} lies outside the signal support [0, {len})"
        )));
    }
    let margins: Vec<usize> = grid
        .scales()
        .iter()
        .map(|&s| wavelet.time_support(wavelet.center() * grid.base().powf(-s)).ceil() as usize)
        .collect();
    let max_margin = margins.iter().copied().max().unwrap_or(0);
    let fft_len = (len + max_margin).next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);

    let spectra: Vec<Vec<Complex64>> = (0..n)
        .map(|c| {
            let mut buf: Vec<Complex64> = signal.channel(c).iter().map(|&v| Complex64::new(v, 0.0)).collect();
            buf.resize(fft_len, Complex64::new(0.0, 0.0));
            forward.process(&mut buf);
            buf
        })
        .collect();

    // Analytic filter: only bins 1..=fft_len/2 are non-zero.
    let half = fft_len / 2;
    let filters: Vec<Vec<f64>> = par::map_range(exec, grid.len(), |k| {
        let scale = grid.base().powf(grid.scales()[k]);
        let gain = scale.sqrt();
        (0..=half)
            .map(|m| {
                let xi = m as f64 / fft_len as f64;
                gain * wavelet.fourier(scale * xi)
            })
            .collect()
    });

    let m_s = grid.len();
    let norm = 1.0 / fft_len as f64;
    let rows: Vec<Vec<Complex64>> = par::map_range(exec, n * m_s, |idx| {
        let (c, k) = (idx / m_s, idx % m_s);
        let filter = &filters[k];
        let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
        for (m, h) in filter.iter().enumerate() {
            if *h != 0.0 {
                buf[m] = spectra[c][m] * *h;
            }
        }
        inverse.process(&mut buf);
        frames.positions().map(|p| buf[p] * norm).collect()
    });

    let mut coefficients = Array3::zeros((n, m_s, frames.count));
    for (idx, row) in rows.into_iter().enumerate() {
        let (c, k) = (idx / m_s, idx % m_s);
        for (j, w) in row.into_iter().enumerate() {
            coefficients[[c, k, j]] = w;
        }
    }
    Ok(WaveletCoefficientBlock {
        coefficients,
        frames: frames.clone(),
        scales: grid.clone(),
        sample_rate: signal.sample_rate(),
        boundary_margin: margins,
    })
}
