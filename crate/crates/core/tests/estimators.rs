mod common;

use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use warpsep::estimators::{
    convergence_criterion, estimate_spectrum, estimate_unmixing_frame, jefas_bss, AlgorithmConfig,
    SolverOptions,
};
use warpsep::likelihood::{FrameObservation, LikelihoodModel, UnmixingObjective};
use warpsep::metrics::amari_curve;
use warpsep::signal::{
    generate_stationary_source, generate_synthetic_mixture, FrameGrid, MixingSpec, MultichannelSignal, ScaleGrid,
    SourceSpec, SynthesisSpec, WarpSpec,
};
use warpsep::spectral::{build_covariance, FilterBank, GridSpacing, SourceSpectrum, DEFAULT_COVARIANCE_FLOOR};

#[test]
fn theta_of_an_unwarped_source_is_zero() {
    let t = common::dilation_estimate(0.0, 3);
    assert!(t.abs() <= 0.02, "θ̃ = {t}");
}

#[test]
fn theta_recovers_pure_dilations() {
    for delta in [-0.5, 0.5] {
        let t = common::dilation_estimate(delta, 4);
        assert!((t - delta).abs() <= 0.05, "δ = {delta}: θ̃ = {t}");
    }
}

#[test]
fn white_source_spectrum_is_flat() {
    let truth = SourceSpectrum::flat(1.0, 0.5, 2).unwrap();
    let len = 1 << 17;
    let y = generate_stationary_source(&truth, len, 1.0, 11).unwrap();
    let frames = FrameGrid::centered(len, 512).unwrap();
    let theta = vec![0.0; frames.count];
    let est = estimate_spectrum(&y, &theta, &frames, 2f64.powf(1.0 / 32.0), 128).unwrap();
    // the analysed band of the default scale grid
    for (f, v) in est.frequencies().iter().zip(est.values()) {
        if (0.025..=0.2).contains(f) {
            assert!((v - 1.0).abs() < 0.1, "S({f}) = {v}");
        }
    }
}

#[test]
fn band_pass_spectrum_peak_is_within_one_scale_bin() {
    let freqs: Vec<f64> = (0..=2048).map(|k| k as f64 / 4096.0).collect();
    let peak = 0.0731;
    let values: Vec<f64> = freqs.iter().map(|f| (-(f - peak).powi(2) / (2.0 * 0.004f64.powi(2))).exp()).collect();
    let truth = SourceSpectrum::new(freqs, values, GridSpacing::Linear).unwrap();
    let len = 1 << 17;
    let y = generate_stationary_source(&truth, len, 1.0, 12).unwrap();
    let frames = FrameGrid::centered(len, 512).unwrap();
    let est = estimate_spectrum(&y, &vec![0.0; frames.count], &frames, 2f64.powf(1.0 / 32.0), 2048).unwrap();
    let bins = (est.peak_frequency() / truth.peak_frequency()).ln() / 2f64.powf(1.0 / 32.0).ln();
    assert!(bins.abs() <= 1.0, "peak {} vs {}", est.peak_frequency(), truth.peak_frequency());
}

/// SIR of `est` against the references, by least-squares projection.
fn projected_sir(est: &[f64], refs: &[Vec<f64>], target: usize) -> f64 {
    let n = refs.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram = DMatrix::from_fn(n, n, |i, j| dot(&refs[i], &refs[j]));
    let rhs = nalgebra::DVector::from_fn(n, |i, _| dot(&refs[i], est));
    let c = gram.lu().solve(&rhs).unwrap();
    let part = |k: usize| refs[k].iter().map(|x| c[k] * x).collect::<Vec<f64>>();
    let target_part = part(target);
    let interference: Vec<f64> = (0..est.len()).map(|t| (0..n).filter(|&k| k != target).map(|k| c[k] * refs[k][t]).sum()).collect();
    10.0 * (dot(&target_part, &target_part) / dot(&interference, &interference)).log10()
}

#[test]
fn small_perturbation_scores_sixty_db() {
    let prev = common::ar1_sources(&[0.5, -0.3], 1 << 15, 21);
    let mut r = common::rng(22);
    // each update leaks 1e-3 of the other source, with a random sign
    let refs: Vec<Vec<f64>> = (0..2).map(|i| prev.channel_vec(i)).collect();
    let curr: Vec<Vec<f64>> = (0..2)
        .map(|i| {
            let j = 1 - i;
            let gain = if r.gen::<bool>() { 1e-3 } else { -1e-3 } * (prev.energy(i) / prev.energy(j)).sqrt();
            refs[i].iter().zip(&refs[j]).map(|(a, b)| a + gain * b).collect()
        })
        .collect();
    let oracle = (projected_sir(&curr[0], &refs, 0) + projected_sir(&curr[1], &refs, 1)) / 2.0;
    let curr = MultichannelSignal::from_channels(curr, 1.0).unwrap();
    let db = convergence_criterion(&prev, &curr).unwrap();
    assert!((db - oracle).abs() <= 1e-4, "{db} dB vs direct {oracle} dB");
    assert!((db - 60.0).abs() <= 3.0, "{db} dB");
}

/// Complex coefficients `y ~ CN(0, Σ)` for `count` columns.
fn circular_gaussian(sigma: &DMatrix<f64>, count: usize, rng: &mut impl Rng) -> Vec<Vec<Complex64>> {
    let l = sigma.clone().cholesky().unwrap().l();
    let m = sigma.nrows();
    (0..count)
        .map(|_| {
            let z: Vec<Complex64> = (0..m)
                .map(|_| {
                    Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
                        / 2f64.sqrt()
                })
                .collect();
            (0..m).map(|k| (0..=k).map(|j| z[j] * l[(k, j)]).sum()).collect()
        })
        .collect()
}

#[test]
fn unmixing_update_matches_grid_search() {
    let w = warpsep::spectral::WaveletSpec::log_gaussian(20.0, 0.25).unwrap();
    let grid = ScaleGrid::uniform(2f64.powf(0.25), 1.0, 8).unwrap();
    let spectra = vec![
        SourceSpectrum::band_pass(0.03, 0.06, 0.01, 1.0, 513).unwrap(),
        SourceSpectrum::band_pass(0.08, 0.14, 0.01, 1.0, 513).unwrap(),
    ];
    let sigmas: Vec<DMatrix<f64>> =
        spectra.iter().map(|s| build_covariance(s, 0.0, &grid, &w).unwrap().entries().clone()).collect();
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.3, 0.9]);
    let truth = a.clone().try_inverse().unwrap();
    let mut r = common::rng(31);
    let ys: Vec<Vec<Vec<Complex64>>> = sigmas.iter().map(|s| circular_gaussian(s, 200, &mut r)).collect();
    let obs: Vec<FrameObservation> = (0..200)
        .map(|c| {
            let wz = Array2::from_shape_fn((2, 8), |(i, k)| (0..2).map(|j| ys[j][c][k] * a[(i, j)]).sum());
            FrameObservation::new(wz, c as f64).unwrap()
        })
        .collect();
    let bank = Arc::new(FilterBank::new(&w, &grid, &Default::default()).unwrap());
    let model = LikelihoodModel::new(bank, spectra, DEFAULT_COVARIANCE_FLOOR);
    let b_prev = &truth + DMatrix::from_row_slice(2, 2, &[0.01, -0.008, 0.005, 0.012]);
    let radius = 0.02;
    let est = estimate_unmixing_frame(&model, &obs, &[0.0, 0.0], &b_prev, radius, 1.0, &SolverOptions::default()).unwrap();

    let objective: UnmixingObjective = model.unmixing_objective(&obs, &[0.0, 0.0]).unwrap();
    let steps = (2.0 * radius / 1e-3).round() as i64;
    let axis = |c: f64| (0..=steps).map(move |k| c - radius + k as f64 * 1e-3);
    let mut best = (f64::INFINITY, b_prev.clone());
    for b00 in axis(b_prev[(0, 0)]) {
        for b01 in axis(b_prev[(0, 1)]) {
            for b10 in axis(b_prev[(1, 0)]) {
                for b11 in axis(b_prev[(1, 1)]) {
                    let b = DMatrix::from_row_slice(2, 2, &[b00, b01, b10, b11]);
                    let v = objective.value(&b).unwrap();
                    if v < best.0 {
                        best = (v, b);
                    }
                }
            }
        }
    }
    assert!(est.value <= best.0 + 1e-9 * best.0.abs());
    assert!((&est.matrix - &best.1).amax() <= 5e-3, "{} vs {}", est.matrix, best.1);
}

#[test]
fn stationary_sources_with_constant_rotation() {
    let angle: f64 = 0.6;
    let rotation = vec![vec![angle.cos(), -angle.sin()], vec![angle.sin(), angle.cos()]];
    let spec = SynthesisSpec {
        n_samples: 1 << 14,
        sample_rate: 8000.0,
        sources: vec![
            SourceSpec { band_hz: [300.0, 600.0], rolloff_hz: 40.0, variance: 1.0 },
            SourceSpec { band_hz: [700.0, 1100.0], rolloff_hz: 40.0, variance: 1.0 },
        ],
        warps: vec![WarpSpec { amplitude: 0.0, frequency_hz: 0.0, phase: 0.0 }; 2],
        mixing: MixingSpec::constant(rotation),
        frame_hop: 512,
        spectrum_points: 1025,
        seed: 7,
    };
    let mix = generate_synthetic_mixture(&spec).unwrap();
    let mut config = AlgorithmConfig::default_for(spec.n_samples).unwrap();
    config.max_iterations = 10;
    let state = jefas_bss(&mix.observations, &config).unwrap();
    let curve = amari_curve(&state.unmixing, &mix.mixing).unwrap();
    let mean = curve.iter().sum::<f64>() / curve.len() as f64;
    assert!(mean <= 1e-2, "time-averaged Amari index {mean}");
}
