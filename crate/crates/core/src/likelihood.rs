//! Frame-wise negative log-likelihood of the wavelet coefficients of the
//! observations under the mixing model, and the sufficient statistics the
//! solvers need.
//!
//! With `y = B w_z` and independent circular Gaussian rows
//! `y_i ~ CN(0, Σ_i(θ_i))`,
//!
//! ```text
//! ℓ(B, θ) = −M_s log|det B| + ½ Σ_i log det Σ_i(θ_i) + ½ Σ_i y_i Σ_i(θ_i)⁻¹ y_iᴴ
//! ```
//!
//! which is half the exact complex-Gaussian negative log-density with the
//! `π`-terms dropped. Over several analysis columns the terms add up.

use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::ScaleGrid;
use crate::spectral::{
    CovarianceFactor, FilterBank, QuadratureConfig, SourceSpectrum, WaveletSpec, DEFAULT_COVARIANCE_FLOOR,
};

/// Resolution at which `θ` is quantized for covariance caching.
pub const THETA_QUANTUM: f64 = 1e-4;
const DEFAULT_CACHE_CAPACITY: usize = 512;

/// Wavelet coefficients of all observation channels at one time, `N × M_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameObservation {
    w_z: Array2<Complex64>,
    time: f64,
}

impl FrameObservation {
    pub fn new(w_z: Array2<Complex64>, time: f64) -> Result<Self> {
        if w_z.nrows() == 0 || w_z.ncols() == 0 {
            return Err(Error::InvalidSignal("empty frame observation".into()));
        }
        if w_z.iter().any(|w| !(w.re.is_finite() && w.im.is_finite())) {
            return Err(Error::InvalidSignal(format!("non-finite coefficient in frame at {time} s")));
        }
        Ok(FrameObservation { w_z, time })
    }

    pub fn w_z(&self) -> ArrayView2<'_, Complex64> {
        self.w_z.view()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n_channels(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn n_scales(&self) -> usize {
        self.w_z.ncols()
    }
}

/// Unmixing matrix, warping parameters and spectra of every source.
#[derive(Clone, Debug)]
pub struct ModelParameters<'a> {
    pub unmixing: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub spectra: &'a [SourceSpectrum],
}

fn quantize(theta: f64) -> i64 {
    (theta / THETA_QUANTUM).round() as i64
}

/// Covariance model of one source, with an LRU cache of factors keyed by
/// quantized `θ`. Safe to share between threads.
#[derive(Debug)]
pub struct SourceModel {
    bank: Arc<FilterBank>,
    spectrum: SourceSpectrum,
    load: f64,
    cache: Mutex<LruCache<i64, Arc<CovarianceFactor>>>,
}

impl SourceModel {
    pub fn new(bank: Arc<FilterBank>, spectrum: SourceSpectrum, floor: f64) -> Self {
        Self::with_capacity(bank, spectrum, floor, DEFAULT_CACHE_CAPACITY)
    }

    pub fn with_capacity(bank: Arc<FilterBank>, spectrum: SourceSpectrum, floor: f64, capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).expect("capacity is positive");
        let load = bank.loading(&spectrum, floor);
        SourceModel { bank, spectrum, load, cache: Mutex::new(LruCache::new(cap)) }
    }

    pub fn spectrum(&self) -> &SourceSpectrum {
        &self.spectrum
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn n_scales(&self) -> usize {
        self.bank.n_scales()
    }

    /// `E‖y‖² = trace Σ(θ)` of one coefficient column, load included.
    pub fn expected_energy(&self, theta: f64) -> f64 {
        self.bank.trace(&self.spectrum, theta) + self.load * self.n_scales() as f64
    }

    /// Factor of `Σ(θ)` built at `θ` exactly, bypassing the cache.
    pub fn exact_factor(&self, theta: f64) -> Result<CovarianceFactor> {
        self.bank.raw_covariance(&self.spectrum, theta)?.loaded(self.load).factor()
    }

    /// Factor of `Σ(θ̄)` where `θ̄` is `θ` rounded to [`THETA_QUANTUM`].
    pub fn factor(&self, theta: f64) -> Result<Arc<CovarianceFactor>> {
        if !theta.is_finite() {
            return Err(Error::Domain(format!("warping parameter θ = {theta} is not finite")));
        }
        let key = quantize(theta);
        if let Some(f) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(f));
        }
        let f = Arc::new(self.exact_factor(key as f64 * THETA_QUANTUM)?);
        self.cache.lock().expect("cache lock").put(key, Arc::clone(&f));
        Ok(f)
    }

    /// Per-source part of `ℓ`: `½ n log det Σ + ½ Σ_c y_c Σ⁻¹ y_cᴴ`.
    pub fn objective(&self, factor: &CovarianceFactor, data: &SourceData) -> f64 {
        let mut rhs = data.stacked.clone();
        factor.whiten(&mut rhs);
        0.5 * data.count as f64 * factor.log_det() + 0.5 * rhs.norm_squared()
    }
}

/// Coefficient rows of one source over a set of analysis columns, stored as
/// real `M_s × 2n` (real parts then imaginary parts of each column).
#[derive(Clone, Debug, PartialEq)]
pub struct SourceData {
    stacked: DMatrix<f64>,
    count: usize,
}

impl SourceData {
    /// `rows` is `n × M_s`: one coefficient row per analysis column.
    pub fn from_rows(rows: ArrayView2<'_, Complex64>) -> Self {
        let (n, m) = rows.dim();
        let stacked = DMatrix::from_fn(m, 2 * n, |k, p| {
            let w = rows[[p / 2, k]];
            if p % 2 == 0 {
                w.re
            } else {
                w.im
            }
        });
        SourceData { stacked, count: n }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn n_scales(&self) -> usize {
        self.stacked.nrows()
    }
}

/// Covariance models of all sources sharing one filter bank.
#[derive(Debug)]
pub struct LikelihoodModel {
    sources: Vec<SourceModel>,
}

impl LikelihoodModel {
    pub fn new(bank: Arc<FilterBank>, spectra: Vec<SourceSpectrum>, floor: f64) -> Self {
        let sources = spectra.into_iter().map(|s| SourceModel::new(Arc::clone(&bank), s, floor)).collect();
        LikelihoodModel { sources }
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn source(&self, i: usize) -> &SourceModel {
        &self.sources[i]
    }

    /// Reduced objective in `B` for fixed `θ` over the given columns.
    pub fn unmixing_objective(&self, observations: &[FrameObservation], theta: &[f64]) -> Result<UnmixingObjective> {
        let factors = theta
            .iter()
            .enumerate()
            .map(|(i, &t)| self.sources[i].factor(t))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&CovarianceFactor> = factors.iter().map(|f| f.as_ref()).collect();
        UnmixingObjective::new(observations, &refs)
    }

    /// `Σ_columns ℓ(B, θ)` with cached (quantized-θ) covariances.
    pub fn neg_log_likelihood(&self, observations: &[FrameObservation], unmixing: &DMatrix<f64>, theta: &[f64]) -> Result<f64> {
        self.unmixing_objective(observations, theta)?.value(unmixing)
    }
}

/// A smooth function of a square unmixing matrix.
pub trait Objective {
    fn n_sources(&self) -> usize;
    fn value(&self, unmixing: &DMatrix<f64>) -> Result<f64>;
    fn gradient(&self, unmixing: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

/// `f(B) = −n M_s log|det B| + ½ Σ_i b_iᵀ R_i b_i + ½ n Σ_i log det Σ_i`,
/// where `b_i` is row `i` of `B` and `R_i = Σ_c Re(Z_c Σ_i⁻¹ Z_cᴴ)`.
/// Equal to the summed `ℓ` over the `n` columns `Z_c` for every real `B`.
#[derive(Clone, Debug)]
pub struct UnmixingObjective {
    stats: Vec<DMatrix<f64>>,
    /// `Σ_c Re(Z_c Z_cᴴ)`, the unwhitened channel Gram matrix.
    gram: DMatrix<f64>,
    count: usize,
    n_scales: usize,
    log_det_term: f64,
}

impl UnmixingObjective {
    pub fn new(observations: &[FrameObservation], factors: &[&CovarianceFactor]) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::Config("no observations for the likelihood".into()))?;
        let (n, m) = (first.n_channels(), first.n_scales());
        if factors.len() != n {
            return Err(Error::Config(format!("{} covariance factors for {n} channels", factors.len())));
        }
        if observations.iter().any(|o| o.n_channels() != n || o.n_scales() != m)
            || factors.iter().any(|f| f.dim() != m)
        {
            return Err(Error::Config("inconsistent observation/covariance dimensions".into()));
        }
        let count = observations.len();
        // Channel a stacked as M_s × 2n real.
        let channels: Vec<DMatrix<f64>> = (0..n)
            .map(|a| {
                DMatrix::from_fn(m, 2 * count, |k, p| {
                    let w = observations[p / 2].w_z[[a, k]];
                    if p % 2 == 0 {
                        w.re
                    } else {
                        w.im
                    }
                })
            })
            .collect();
        let gram = DMatrix::from_fn(n, n, |a, b| channels[a].dot(&channels[b]));
        let mut stats = Vec::with_capacity(n);
        for f in factors {
            let white: Vec<DMatrix<f64>> = channels
                .iter()
                .map(|c| {
                    let mut u = c.clone();
                    f.whiten(&mut u);
                    u
                })
                .collect();
            stats.push(DMatrix::from_fn(n, n, |a, b| white[a].dot(&white[b])));
        }
        let log_det_term = 0.5 * count as f64 * factors.iter().map(|f| f.log_det()).sum::<f64>();
        Ok(UnmixingObjective { stats, gram, count, n_scales: m, log_det_term })
    }

    pub fn n_sources(&self) -> usize {
        self.stats.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// The quadratic statistic `R_i` of source `i`.
    pub fn statistic(&self, i: usize) -> &DMatrix<f64> {
        &self.stats[i]
    }

    /// `b_iᵀ R_i b_i`, the summed quadratic form of source `i`.
    pub fn quadratic(&self, unmixing: &DMatrix<f64>, i: usize) -> f64 {
        let b = unmixing.row(i).transpose();
        (b.transpose() * &self.stats[i] * &b)[(0, 0)]
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Coefficient energy `b_iᵀ (Σ_c Re Z_c Z_cᴴ) b_i` of source `i`.
    pub fn energy(&self, unmixing: &DMatrix<f64>, i: usize) -> f64 {
        let b = unmixing.row(i).transpose();
        (b.transpose() * &self.gram * &b)[(0, 0)]
    }

    /// The objective minimized over the scale of every row, which depends
    /// on the row directions only.
    pub fn profiled(&self) -> ProfiledObjective<'_> {
        ProfiledObjective { inner: self }
    }

    pub fn value(&self, unmixing: &DMatrix<f64>) -> Result<f64> {
        let det = unmixing.determinant();
        if !(det.abs() > 0.0) || !det.is_finite() {
            return Err(Error::SingularUnmixing(format!("det B = {det}")));
        }
        let quad: f64 = (0..self.n_sources()).map(|i| self.quadratic(unmixing, i)).sum();
        Ok(-((self.count * self.n_scales) as f64) * det.abs().ln() + self.log_det_term + 0.5 * quad)
    }

    /// `∇f(B) = −n M_s B⁻ᵀ + [R_i b_i]_i`.
    pub fn gradient(&self, unmixing: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let inv = unmixing
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularUnmixing("cannot invert B".into()))?;
        let mut g = inv.transpose() * (-((self.count * self.n_scales) as f64));
        for i in 0..self.n_sources() {
            let rb = &self.stats[i] * unmixing.row(i).transpose();
            for j in 0..unmixing.ncols() {
                g[(i, j)] += rb[j];
            }
        }
        Ok(g)
    }
}

impl Objective for UnmixingObjective {
    fn n_sources(&self) -> usize {
        self.stats.len()
    }

    fn value(&self, unmixing: &DMatrix<f64>) -> Result<f64> {
        UnmixingObjective::value(self, unmixing)
    }

    fn gradient(&self, unmixing: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        UnmixingObjective::gradient(self, unmixing)
    }
}

/// `g(B) = min over diagonal D > 0 of f(D B)`. With `K = n M_s` and
/// `q_i = b_iᵀ R_i b_i` the minimizing scales are `d_i = √(K / q_i)` and
///
/// ```text
/// g(B) = −K log|det B| + ½ K Σ_i (log q_i − log K + 1) + ½ n Σ_i log det Σ_i
/// ```
///
/// The redundant scale grid leaves `Σ_i` with many nearly null directions
/// in which the data carry less energy than the loading, so the scale
/// `f` prefers is inflated and varies from frame to frame. `g` removes the
/// row scales from the update.
#[derive(Clone, Copy, Debug)]
pub struct ProfiledObjective<'a> {
    inner: &'a UnmixingObjective,
}

impl ProfiledObjective<'_> {
    fn k(&self) -> f64 {
        (self.inner.count * self.inner.n_scales) as f64
    }

    /// The row scales `d_i` attaining the minimum.
    pub fn optimal_scales(&self, unmixing: &DMatrix<f64>) -> Vec<f64> {
        (0..self.inner.n_sources()).map(|i| (self.k() / self.inner.quadratic(unmixing, i)).sqrt()).collect()
    }
}

impl Objective for ProfiledObjective<'_> {
    fn n_sources(&self) -> usize {
        self.inner.n_sources()
    }

    fn value(&self, unmixing: &DMatrix<f64>) -> Result<f64> {
        let det = unmixing.determinant();
        if !(det.abs() > 0.0) || !det.is_finite() {
            return Err(Error::SingularUnmixing(format!("det B = {det}")));
        }
        let k = self.k();
        let mut total = -k * det.abs().ln() + self.inner.log_det_term;
        for i in 0..self.n_sources() {
            let q = self.inner.quadratic(unmixing, i);
            if !(q > 0.0) {
                return Err(Error::SingularUnmixing(format!("source {i} has no energy")));
            }
            total += 0.5 * k * (q.ln() - k.ln() + 1.0);
        }
        Ok(total)
    }

    /// `−K B⁻ᵀ + [K R_i b_i / q_i]_i`.
    fn gradient(&self, unmixing: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let inv = unmixing
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularUnmixing("cannot invert B".into()))?;
        let k = self.k();
        let mut g = inv.transpose() * -k;
        for i in 0..self.n_sources() {
            let rb = &self.inner.stats[i] * unmixing.row(i).transpose();
            let q = unmixing.row(i).dot(&rb.transpose());
            if !(q > 0.0) {
                return Err(Error::SingularUnmixing(format!("source {i} has no energy")));
            }
            for j in 0..unmixing.ncols() {
                g[(i, j)] += k * rb[j] / q;
            }
        }
        Ok(g)
    }
}

/// `ℓ(B, θ)` for one frame, building the covariances from scratch with the
/// default quadrature and floor at the exact `θ`.
pub fn neg_log_likelihood(
    obs: &FrameObservation,
    params: &ModelParameters<'_>,
    grid: &ScaleGrid,
    wavelet: &WaveletSpec,
) -> Result<f64> {
    let n = obs.n_channels();
    if params.theta.len() != n || params.spectra.len() != n || params.unmixing.nrows() != n || params.unmixing.ncols() != n {
        return Err(Error::Config(format!("model parameters do not match {n} channels")));
    }
    if obs.n_scales() != grid.len() {
        return Err(Error::Config(format!("{} scales in the frame, {} in the grid", obs.n_scales(), grid.len())));
    }
    let bank = FilterBank::new(wavelet, grid, &QuadratureConfig::default())?;
    let factors = params
        .theta
        .iter()
        .zip(params.spectra)
        .map(|(&t, s)| bank.covariance(s, t, DEFAULT_COVARIANCE_FLOOR)?.factor())
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&CovarianceFactor> = factors.iter().collect();
    UnmixingObjective::new(std::slice::from_ref(obs), &refs)?.value(&params.unmixing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scalar_case() {
        let m = DMatrix::from_element(1, 1, 1.0);
        let f = CovarianceFactor::new(&m).unwrap();
        let obs = FrameObservation::new(array![[Complex64::new(0.6, -0.8)]], 0.0).unwrap();
        let obj = UnmixingObjective::new(&[obs], &[&f]).unwrap();
        let v = obj.value(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert!(matches!(obj.value(&DMatrix::zeros(1, 1)), Err(Error::SingularUnmixing(_))));
    }

    fn two_source_objective() -> (CovarianceFactor, CovarianceFactor, Vec<FrameObservation>) {
        let sigma = |s: f64| DMatrix::from_fn(3, 3, |i, j| s * (-((i as f64 - j as f64).powi(2)) / 2.0).exp() + if i == j { 0.1 } else { 0.0 });
        let fa = CovarianceFactor::new(&sigma(1.0)).unwrap();
        let fb = CovarianceFactor::new(&sigma(2.0)).unwrap();
        let obs: Vec<FrameObservation> = (0..5)
            .map(|c| {
                let w = Array2::from_shape_fn((2, 3), |(i, k)| {
                    Complex64::new(((c * 7 + i * 3 + k) as f64).sin(), ((c + 2 * i + 5 * k) as f64).cos())
                });
                FrameObservation::new(w, c as f64).unwrap()
            })
            .collect();
        (fa, fb, obs)
    }

    fn check_gradient<O: Objective>(obj: &O, b: &DMatrix<f64>) {
        let g = obj.gradient(b).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let h = 1e-6;
                let mut bp = b.clone();
                bp[(i, j)] += h;
                let mut bm = b.clone();
                bm[(i, j)] -= h;
                let fd = (obj.value(&bp).unwrap() - obj.value(&bm).unwrap()) / (2.0 * h);
                assert!((fd - g[(i, j)]).abs() <= 1e-5 * g[(i, j)].abs().max(1.0), "{fd} vs {}", g[(i, j)]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (fa, fb, obs) = two_source_objective();
        let obj = UnmixingObjective::new(&obs, &[&fa, &fb]).unwrap();
        check_gradient(&obj, &DMatrix::from_row_slice(2, 2, &[1.2, 0.3, -0.4, 0.9]));
        check_gradient(&obj.profiled(), &DMatrix::from_row_slice(2, 2, &[1.2, 0.3, -0.4, 0.9]));
    }

    #[test]
    fn profiled_value_is_the_minimum_over_row_scales() {
        let (fa, fb, obs) = two_source_objective();
        let obj = UnmixingObjective::new(&obs, &[&fa, &fb]).unwrap();
        let p = obj.profiled();
        let b = DMatrix::from_row_slice(2, 2, &[0.7, -0.2, 0.5, 1.4]);
        let d = p.optimal_scales(&b);
        let scaled = DMatrix::from_fn(2, 2, |i, j| d[i] * b[(i, j)]);
        let g = p.value(&b).unwrap();
        assert!((g - obj.value(&scaled).unwrap()).abs() < 1e-10 * g.abs().max(1.0));
        for f in [0.9, 1.1] {
            let off = DMatrix::from_fn(2, 2, |i, j| if i == 0 { f } else { 1.0 } * scaled[(i, j)]);
            assert!(obj.value(&off).unwrap() > g);
        }
        let rescaled = DMatrix::from_fn(2, 2, |i, j| [3.0, -0.25][i] * b[(i, j)]);
        assert!((p.value(&rescaled).unwrap() - g).abs() < 1e-10 * g.abs().max(1.0));
    }

    #[test]
    fn cache_returns_quantized_factor() {
        let w = WaveletSpec::log_gaussian(20.0, 0.25).unwrap();
        let g = ScaleGrid::uniform(2f64.powf(0.25), 1.0, 6).unwrap();
        let bank = Arc::new(FilterBank::new(&w, &g, &QuadratureConfig::default()).unwrap());
        let s = SourceSpectrum::band_pass(0.05, 0.2, 0.02, 1.0, 201).unwrap();
        let model = SourceModel::new(bank, s, 1e-6);
        let a = model.factor(0.30001).unwrap();
        let b = model.factor(0.29999).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.log_det(), model.exact_factor(3000.0 * THETA_QUANTUM).unwrap().log_det());
    }
}
