//! Per-frame mixing/unmixing matrices and warping parameters.

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{FrameGrid, MultichannelSignal, WarpingFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Mixing,
    Unmixing,
}

/// One real `N × N` matrix per frame, held constant on the frame's interval.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingTrajectory {
    frames: FrameGrid,
    kind: MatrixKind,
    matrices: Vec<DMatrix<f64>>,
}

pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

impl MixingTrajectory {
    pub fn new(frames: FrameGrid, kind: MatrixKind, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if matrices.len() != frames.count {
            return Err(Error::Config(format!(
                "{} matrices for {} frames",
                matrices.len(),
                frames.count
            )));
        }
        let n = matrices.first().map_or(0, |m| m.nrows());
        for (j, m) in matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n || n == 0 {
                return Err(Error::Config(format!("matrix {j} is {}×{}, expected {n}×{n}", m.nrows(), m.ncols())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("matrix {j} has non-finite entries")));
            }
            if !condition_number(m).is_finite() {
                return Err(Error::SingularMatrix(format!("matrix at frame {j} is singular")));
            }
        }
        Ok(MixingTrajectory { frames, kind, matrices })
    }

    pub fn constant(frames: FrameGrid, kind: MatrixKind, matrix: DMatrix<f64>) -> Result<Self> {
        let matrices = vec![matrix; frames.count];
        Self::new(frames, kind, matrices)
    }

    pub fn frames(&self) -> &FrameGrid {
        &self.frames
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn matrix(&self, j: usize) -> &DMatrix<f64> {
        &self.matrices[j]
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn n_sources(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn condition_numbers(&self) -> Vec<f64> {
        self.matrices.iter().map(condition_number).collect()
    }

    /// Largest entrywise change between consecutive frames.
    pub fn max_step(&self) -> f64 {
        self.matrices
            .windows(2)
            .map(|w| (&w[1] - &w[0]).amax())
            .fold(0.0, f64::max)
    }

    /// Matrix-wise inverse, turning a mixing trajectory into an unmixing one
    /// and vice versa.
    pub fn inverted(&self) -> Result<Self> {
        let matrices = self
            .matrices
            .iter()
            .enumerate()
            .map(|(j, m)| {
                m.clone()
                    .try_inverse()
                    .ok_or_else(|| Error::SingularMatrix(format!("matrix at frame {j} is singular")))
            })
            .collect::<Result<Vec<_>>>()?;
        let kind = match self.kind {
            MatrixKind::Mixing => MatrixKind::Unmixing,
            MatrixKind::Unmixing => MatrixKind::Mixing,
        };
        Ok(MixingTrajectory { frames: self.frames.clone(), kind, matrices })
    }

    /// `out(t) = M_{τ(t)} x(t)`, with `τ(t)` the frame whose interval holds `t`.
    pub fn apply(&self, x: &MultichannelSignal) -> Result<MultichannelSignal> {
        let n = self.n_sources();
        if x.n_channels() != n || x.len() != self.frames.signal_len {
            return Err(Error::InvalidSignal(format!(
                "signal is {}×{}, trajectory expects {n}×{}",
                x.n_channels(),
                x.len(),
                self.frames.signal_len
            )));
        }
        let samples = x.samples();
        let mut out = Array2::<f64>::zeros((n, x.len()));
        for j in 0..self.frames.count {
            let m = &self.matrices[j];
            for t in self.frames.interval(j) {
                for r in 0..n {
                    let mut acc = 0.0;
                    for c in 0..n {
                        acc += m[(r, c)] * samples[[c, t]];
                    }
                    out[[r, t]] = acc;
                }
            }
        }
        MultichannelSignal::new(out, x.sample_rate())
    }

    /// Reorders rows of every matrix so that row `k` is old row `order[k]`.
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        let matrices = self.matrices.iter().map(|m| m.select_rows(order)).collect();
        MixingTrajectory { frames: self.frames.clone(), kind: self.kind, matrices }
    }

    pub fn to_serial(&self) -> SerialTrajectory {
        SerialTrajectory {
            kind: self.kind,
            frames: self.frames.clone(),
            matrices: self.matrices.iter().map(matrix_to_rows).collect(),
        }
    }

    pub fn from_serial(s: SerialTrajectory) -> Result<Self> {
        let matrices = s.matrices.iter().map(|m| rows_to_matrix(m)).collect::<Result<Vec<_>>>()?;
        Self::new(s.frames, s.kind, matrices)
    }
}

/// JSON layout of a [`MixingTrajectory`]: matrices as row-major nested arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerialTrajectory {
    pub kind: MatrixKind,
    pub frames: FrameGrid,
    pub matrices: Vec<Vec<Vec<f64>>>,
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config("matrix rows are empty or ragged".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// `θ_{i,τ} = log_q γ'_i(τ)` for every source and frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpingTrajectory {
    pub frames: FrameGrid,
    pub base: f64,
    /// One row per source.
    pub theta: Vec<Vec<f64>>,
}

impl WarpingTrajectory {
    pub fn zeros(frames: FrameGrid, base: f64, n_sources: usize) -> Self {
        let theta = vec![vec![0.0; frames.count]; n_sources];
        WarpingTrajectory { frames, base, theta }
    }

    /// Samples `log_q γ'_i` at the frame positions.
    pub fn from_warps(warps: &[WarpingFunction], frames: &FrameGrid, base: f64, sample_rate: f64) -> Self {
        let theta = warps
            .iter()
            .map(|g| frames.positions().map(|p| g.theta(p as f64 / sample_rate, base)).collect())
            .collect();
        WarpingTrajectory { frames: frames.clone(), base, theta }
    }

    pub fn n_sources(&self) -> usize {
        self.theta.len()
    }

    /// Rebuilds `γ_i` (with `γ_i(τ₀) = τ₀`) by integrating `q^{θ}` with the
    /// trapezoid rule across frames.
    pub fn warping(&self, i: usize, sample_rate: f64) -> Result<WarpingFunction> {
        let times = self.frames.times(sample_rate);
        let derivs: Vec<f64> = self.theta[i].iter().map(|t| self.base.powf(*t)).collect();
        if times.len() < 2 {
            return WarpingFunction::dilation(derivs.first().copied().unwrap_or(1.0), 0.0, 1.0 / sample_rate);
        }
        let mut values = vec![times[0]];
        for k in 1..times.len() {
            let prev = values[k - 1];
            values.push(prev + 0.5 * (derivs[k] + derivs[k - 1]) * (times[k] - times[k - 1]));
        }
        WarpingFunction::from_knots(times, values, derivs)
    }
}
