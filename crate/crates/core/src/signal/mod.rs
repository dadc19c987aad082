//! Signal containers, time warping, synthetic data and the continuous
//! wavelet transform.

mod cwt;
mod generate;
pub mod io;
mod warp;

pub use cwt::{cwt, cwt_with, ScaleGrid, WaveletCoefficientBlock};
pub use generate::{
    generate_stationary_source, generate_synthetic_mixture, MixingSpec, SourceSpec,
    SynthesisSpec, SyntheticMixture, WarpSpec,
};
pub use warp::{apply_time_warp, Boundary, WarpingFunction};

use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// `N` real channels sampled uniformly in time.
#[derive(Clone, Debug, PartialEq)]
pub struct MultichannelSignal {
    samples: Array2<f64>,
    sample_rate: f64,
}

impl MultichannelSignal {
    /// Wraps a channels × time matrix.
    pub fn new(samples: Array2<f64>, sample_rate: f64) -> Result<Self> {
        let (n, t) = samples.dim();
        if n == 0 {
            return Err(Error::InvalidSignal("signal has no channels".into()));
        }
        if t < 2 {
            return Err(Error::InvalidSignal(format!("signal has {t} samples, need at least 2")));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidSignal(format!("sample rate {sample_rate} must be positive")));
        }
        if let Some(((c, i), v)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite sample {v} at channel {c}, index {i}")));
        }
        Ok(MultichannelSignal { samples, sample_rate })
    }

    pub fn from_channels(channels: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        let n = channels.len();
        let t = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != t) {
            return Err(Error::InvalidSignal("channels have different lengths".into()));
        }
        let flat: Vec<f64> = channels.into_iter().flatten().collect();
        let samples = Array2::from_shape_vec((n, t), flat)
            .map_err(|e| Error::InvalidSignal(e.to_string()))?;
        Self::new(samples, sample_rate)
    }

    pub fn single(channel: Vec<f64>, sample_rate: f64) -> Result<Self> {
        Self::from_channels(vec![channel], sample_rate)
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    /// Channel `i`. Panics when out of range.
    pub fn channel(&self, i: usize) -> ArrayView1<'_, f64> {
        self.samples.row(i)
    }

    pub fn channel_vec(&self, i: usize) -> Vec<f64> {
        self.samples.row(i).to_vec()
    }

    /// Extracts a single channel as its own signal.
    pub fn select(&self, i: usize) -> Result<Self> {
        if i >= self.n_channels() {
            return Err(Error::InvalidSignal(format!(
                "channel {i} out of range for {} channels",
                self.n_channels()
            )));
        }
        Ok(MultichannelSignal {
            samples: self.samples.select(Axis(0), &[i]),
            sample_rate: self.sample_rate,
        })
    }

    /// Reorders channels so that output channel `k` is input channel `order[k]`.
    pub fn permute_channels(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_channels() || order.iter().any(|&i| i >= self.n_channels()) {
            return Err(Error::InvalidSignal("channel permutation does not match channel count".into()));
        }
        Ok(MultichannelSignal {
            samples: self.samples.select(Axis(0), order),
            sample_rate: self.sample_rate,
        })
    }

    /// Samples `range` of every channel.
    pub fn slice(&self, range: Range<usize>) -> ArrayView2<'_, f64> {
        self.samples.slice(ndarray::s![.., range])
    }

    pub fn energy(&self, channel: usize) -> f64 {
        self.samples.row(channel).iter().map(|v| v * v).sum()
    }
}

/// A uniform grid of sample positions (`start + j * hop`) used both for the
/// frame grid `D` and for the finer grid of analysis columns.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FrameGrid {
    pub start: usize,
    pub hop: usize,
    pub count: usize,
    /// Length of the underlying signal, so the last interval can absorb a
    /// remainder.
    pub signal_len: usize,
}

impl FrameGrid {
    /// Frames centred in consecutive intervals `[j*hop, (j+1)*hop)`.
    pub fn centered(signal_len: usize, hop: usize) -> Result<Self> {
        if hop == 0 {
            return Err(Error::Config("frame hop must be positive".into()));
        }
        if signal_len < hop {
            return Err(Error::Config(format!(
                "signal of {signal_len} samples is shorter than one frame hop ({hop})"
            )));
        }
        Ok(FrameGrid { start: hop / 2, hop, count: signal_len / hop, signal_len })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Sample index of frame `j`.
    pub fn position(&self, j: usize) -> usize {
        self.start + j * self.hop
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.count).map(move |j| self.position(j))
    }

    pub fn times(&self, sample_rate: f64) -> Vec<f64> {
        self.positions().map(|p| p as f64 / sample_rate).collect()
    }

    /// Samples on which frame `j`'s parameters are held constant. The last
    /// interval extends to the end of the signal.
    pub fn interval(&self, j: usize) -> Range<usize> {
        let lo = self.position(j).saturating_sub(self.hop / 2);
        let lo = if j == 0 { 0 } else { lo };
        let hi = if j + 1 == self.count {
            self.signal_len
        } else {
            (self.position(j) + self.hop - self.hop / 2).min(self.signal_len)
        };
        lo..hi
    }

    /// Frame whose interval contains sample `t`.
    pub fn frame_of(&self, t: usize) -> usize {
        if self.count == 0 {
            return 0;
        }
        let shifted = (t + self.hop / 2).saturating_sub(self.start);
        (shifted / self.hop).min(self.count - 1)
    }
}
