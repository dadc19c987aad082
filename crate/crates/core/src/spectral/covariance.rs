use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::{SourceSpectrum, WaveletSpec};
use crate::error::{Error, Result};
use crate::signal::ScaleGrid;

/// Relative diagonal loading applied before any inversion: `floor · trace / M_s`.
pub const DEFAULT_COVARIANCE_FLOOR: f64 = 1e-8;

/// Log-frequency trapezoidal quadrature settings.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    /// Nodes per half-maximum width of `|ψ̂|` in log frequency.
    pub points_per_bandwidth: usize,
    /// The node range extends until every filter drops below this fraction
    /// of its peak.
    pub tail: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { points_per_bandwidth: 16, tail: 1e-12 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_bandwidth < 16 {
            return Err(Error::Config(format!(
                "quadrature needs at least 16 points per wavelet bandwidth, got {}",
                self.points_per_bandwidth
            )));
        }
        if !(self.tail > 0.0 && self.tail <= 1e-6) {
            return Err(Error::Config(format!(
                "quadrature tail {} leaves part of the wavelet band uncovered (need 0 < tail ≤ 1e-6)",
                self.tail
            )));
        }
        Ok(())
    }
}

/// The wavelet filters of a scale grid sampled on a fixed log-frequency
/// quadrature, so that `Σ(θ) = Ψ diag(S(q^{-θ} ξ_j)) Ψᵀ`.
///
/// The node grid is anchored to the scale grid: shifting every scale by `δ`
/// shifts the nodes by `q^{-δ}`, which makes the identity
/// `Σ_{s+δ}(θ) = Σ_s(θ+δ)` hold up to rounding.
#[derive(Clone, Debug)]
pub struct FilterBank {
    wavelet: WaveletSpec,
    grid: ScaleGrid,
    nodes: Vec<f64>,
    /// `M_s × J`, entry `q^{s_k/2} ψ̂(q^{s_k} ξ_j) √w_j`.
    basis: DMatrix<f64>,
}

impl FilterBank {
    pub fn new(wavelet: &WaveletSpec, grid: &ScaleGrid, quadrature: &QuadratureConfig) -> Result<Self> {
        quadrature.validate()?;
        let ln_q = grid.log_base();
        let ln_center = wavelet.center().ln();
        let c = wavelet.bandwidth();
        let reach = wavelet.log_support(quadrature.tail);
        let h = wavelet.log_fwhm() / quadrature.points_per_bandwidth as f64;
        let scales = grid.scales();
        let (first, last) = (scales[0], scales[scales.len() - 1]);
        let start = ln_center - last * ln_q - reach;
        let span = (last - first) * ln_q + 2.0 * reach;
        let count = (span / h - 1e-9).ceil() as usize + 1;
        let logs: Vec<f64> = (0..count).map(|j| start + j as f64 * h).collect();
        let nodes: Vec<f64> = logs.iter().map(|v| v.exp()).collect();
        let basis = DMatrix::from_fn(scales.len(), count, |k, j| {
            let end = if j == 0 || j + 1 == count { 0.5 } else { 1.0 };
            let weight = end * h * nodes[j];
            let l = scales[k] * ln_q + logs[j] - ln_center;
            (0.5 * scales[k] * ln_q).exp() * (-c * l * l).exp() * weight.sqrt()
        });
        Ok(FilterBank { wavelet: *wavelet, grid: grid.clone(), nodes, basis })
    }

    pub fn wavelet(&self) -> &WaveletSpec {
        &self.wavelet
    }

    pub fn grid(&self) -> &ScaleGrid {
        &self.grid
    }

    pub fn n_scales(&self) -> usize {
        self.grid.len()
    }

    /// Quadrature nodes `ξ_j` in cycles per sample.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `Σ(θ)` without regularization.
    pub fn raw_covariance(&self, spectrum: &SourceSpectrum, theta: f64) -> Result<CovarianceMatrix> {
        if !theta.is_finite() {
            return Err(Error::Domain(format!("warping parameter θ = {theta} is not finite")));
        }
        let shrink = self.grid.base().powf(-theta);
        let mut phi = self.basis.clone();
        for (j, mut col) in phi.column_iter_mut().enumerate() {
            col *= spectrum.eval(shrink * self.nodes[j]).sqrt();
        }
        let mut entries = &phi * phi.transpose();
        symmetrize(&mut entries);
        Ok(CovarianceMatrix { entries, theta, scales: self.grid.clone() })
    }

    /// `trace Σ(θ)` without regularization, without forming the matrix.
    pub fn trace(&self, spectrum: &SourceSpectrum, theta: f64) -> f64 {
        let shrink = self.grid.base().powf(-theta);
        self.basis
            .column_iter()
            .zip(&self.nodes)
            .map(|(col, &xi)| spectrum.eval(shrink * xi) * col.norm_squared())
            .sum()
    }

    /// `trace Σ(0)`.
    pub fn reference_trace(&self, spectrum: &SourceSpectrum) -> f64 {
        self.trace(spectrum, 0.0)
    }

    /// Diagonal load `floor · trace Σ(0) / M_s`. It does not depend on `θ`,
    /// so the load acts as a fixed white noise floor in the scale domain.
    pub fn loading(&self, spectrum: &SourceSpectrum, floor: f64) -> f64 {
        floor.max(0.0) * self.reference_trace(spectrum) / self.n_scales() as f64
    }

    /// `Σ(θ)` with the diagonal load of [`FilterBank::loading`].
    pub fn covariance(&self, spectrum: &SourceSpectrum, theta: f64, floor: f64) -> Result<CovarianceMatrix> {
        Ok(self.raw_covariance(spectrum, theta)?.loaded(self.loading(spectrum, floor)))
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Scale-domain covariance of one source's wavelet coefficients. With a real
/// analytic wavelet the matrix is real symmetric, which is the Hermitian case
/// with zero imaginary part.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
    theta: f64,
    scales: ScaleGrid,
}

impl CovarianceMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn scales(&self) -> &ScaleGrid {
        &self.scales
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        self.entries.map(|v| Complex64::new(v, 0.0))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| (self.entries[(i, j)] - self.entries[(j, i)]).abs() <= tol))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.entries.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Adds `load` to the diagonal.
    pub fn loaded(mut self, load: f64) -> Self {
        let load = load.max(0.0);
        for i in 0..self.dim() {
            self.entries[(i, i)] += load;
        }
        self
    }

    pub fn factor(&self) -> Result<CovarianceFactor> {
        CovarianceFactor::new(&self.entries)
    }
}

/// Cholesky factor `Σ = L Lᵀ` used for log-determinants and quadratic forms.
#[derive(Clone, Debug)]
pub struct CovarianceFactor {
    lower: DMatrix<f64>,
    log_det: f64,
}

impl CovarianceFactor {
    pub fn new(entries: &DMatrix<f64>) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(entries.clone())
            .ok_or_else(|| Error::Numerical("covariance is not positive definite after regularization".into()))?;
        let lower = chol.unpack();
        let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::Numerical(format!("covariance log-determinant is {log_det}")));
        }
        Ok(CovarianceFactor { lower, log_det })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Replaces every column `x` of `rhs` by `L⁻¹ x`.
    pub fn whiten(&self, rhs: &mut DMatrix<f64>) {
        let ok = self.lower.solve_lower_triangular_mut(rhs);
        debug_assert!(ok);
    }

    /// `y Σ⁻¹ yᴴ` for a complex row `y`.
    pub fn quad_form(&self, y: &[Complex64]) -> f64 {
        let n = self.dim();
        let mut rhs = DMatrix::from_fn(n, 2, |k, p| if p == 0 { y[k].re } else { y[k].im });
        self.whiten(&mut rhs);
        rhs.norm_squared()
    }
}

/// One-off evaluation of the regularized covariance with the default
/// quadrature and floor.
pub fn build_covariance(
    spectrum: &SourceSpectrum,
    theta: f64,
    grid: &ScaleGrid,
    wavelet: &WaveletSpec,
) -> Result<CovarianceMatrix> {
    FilterBank::new(wavelet, grid, &QuadratureConfig::default())?.covariance(spectrum, theta, DEFAULT_COVARIANCE_FLOOR)
}
