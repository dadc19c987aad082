#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use ndarray::Array2;
use warpsep::estimators::{estimate_theta_ml, AlgorithmConfig, ThetaSearch};
use warpsep::likelihood::{SourceData, SourceModel};
use warpsep::signal::{apply_time_warp, cwt, generate_stationary_source, Boundary, FrameGrid, MultichannelSignal, WarpingFunction};
use warpsep::spectral::{FilterBank, SourceSpectrum, DEFAULT_COVARIANCE_FLOOR};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Full complex-Gaussian negative log-density of the observation
/// coefficients `w` (`N × M`) under `w = B⁻¹ y`, `y_i ~ CN(0, Σ_i)`:
/// `Σ_i [M log π + log det Σ_i + y_iᴴ Σ_i⁻¹ y_i] − 2M log|det B|`.
pub fn dense_complex_nll(w: &DMatrix<Complex64>, b: &DMatrix<f64>, sigmas: &[DMatrix<f64>]) -> f64 {
    let m = w.ncols();
    let bc = b.map(|v| Complex64::new(v, 0.0));
    let y = &bc * w;
    let mut total = 0.0;
    for (i, s) in sigmas.iter().enumerate() {
        let sc = s.map(|v| Complex64::new(v, 0.0));
        let det = sc.clone().lu().determinant();
        let inv = sc.lu().try_inverse().expect("Σ invertible");
        let yi = DVector::from_iterator(m, y.row(i).iter().copied());
        let quad = (yi.adjoint() * inv * &yi)[(0, 0)];
        total += m as f64 * std::f64::consts::PI.ln() + det.re.ln() + quad.re;
    }
    total - 2.0 * m as f64 * b.determinant().abs().ln()
}

/// Stationary AR(1) sources `x_t = a x_{t−1} + e_t`.
pub fn ar1_sources(coeffs: &[f64], len: usize, seed: u64) -> MultichannelSignal {
    let mut r = rng(seed);
    let channels = coeffs
        .iter()
        .map(|&a| {
            let mut x = 0.0;
            (0..len)
                .map(|_| {
                    let e: f64 = r.sample(rand_distr::StandardNormal);
                    x = a * x + e;
                    x
                })
                .collect()
        })
        .collect();
    MultichannelSignal::from_channels(channels, 1.0).unwrap()
}

pub fn mix(a: &DMatrix<f64>, s: &MultichannelSignal) -> MultichannelSignal {
    let n = s.n_channels();
    let channels = (0..n)
        .map(|i| (0..s.len()).map(|t| (0..n).map(|j| a[(i, j)] * s.samples()[[j, t]]).sum()).collect())
        .collect();
    MultichannelSignal::from_channels(channels, s.sample_rate()).unwrap()
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal(n: usize, r: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(rand_distr::StandardNormal));
    let qr = g.qr();
    let (q, rr) = (qr.q(), qr.r());
    DMatrix::from_fn(n, n, |i, j| q[(i, j)] * rr[(j, j)].signum())
}

/// θ̃ of a band-pass source dilated by `q^δ`, pooled over 200 frames of
/// 512 samples with the 16 analysis columns nearest each frame centre.
pub fn dilation_estimate(delta: f64, seed: u64) -> f64 {
    let len = 1 << 17;
    let config = AlgorithmConfig::default_for(len).unwrap();
    let q = config.scales.base();
    let spectrum = SourceSpectrum::band_pass(0.05, 0.17, 0.002, 1.0, 2049).unwrap();
    let x = generate_stationary_source(&spectrum, len, 1.0, seed).unwrap();
    let gamma = WarpingFunction::dilation(q.powf(delta), 0.0, len as f64).unwrap();
    let y = apply_time_warp(&x, &gamma, Boundary::ZeroPad).unwrap();
    let columns = FrameGrid::centered(len, 32).unwrap();
    let block = cwt(&y, &config.wavelet, &config.scales, &columns).unwrap();
    let frames = FrameGrid::centered(len, 512).unwrap();
    let usable = |c: usize| block.is_interior(c) && gamma.eval(columns.position(c) as f64) < 0.98 * len as f64;
    let picked: Vec<usize> = (0..frames.count)
        .filter(|&j| (j * 16..j * 16 + 16).all(usable))
        .take(200)
        .flat_map(|j| j * 16..j * 16 + 16)
        .collect();
    assert_eq!(picked.len(), 200 * 16);
    let w = block.channel(0);
    let rows = Array2::from_shape_fn((picked.len(), w.nrows()), |(r, k)| w[[k, picked[r]]]);
    let bank = Arc::new(FilterBank::new(&config.wavelet, &config.scales, &config.quadrature).unwrap());
    let model = SourceModel::new(bank, spectrum, DEFAULT_COVARIANCE_FLOOR);
    estimate_theta_ml(&model, &SourceData::from_rows(rows.view()), &ThetaSearch::default()).unwrap().value
}
