//! End-to-end acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use warpsep::baselines::sobi;
use warpsep::estimators::{align_sources, slice_similarity};
use warpsep::experiment::{eval, run, synth, Algorithm, EvalReport, ExperimentConfig};
use warpsep::likelihood::{neg_log_likelihood, FrameObservation, ModelParameters};
use warpsep::metrics::{amari_index, bss_eval, sir};
use warpsep::signal::ScaleGrid;
use warpsep::spectral::{build_covariance, FilterBank, QuadratureConfig, SourceSpectrum, WaveletSpec};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const METRIC_FILES: [&str; 4] = ["table.csv", "metrics.csv", "amari_curves.csv", "convergence.csv"];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// synth → sobi, p-sobi, jefas-bss → eval under `root`.
fn pipeline(config: &ExperimentConfig, root: &Path) -> warpsep::error::Result<EvalReport> {
    let data = root.join("data");
    synth(config, &data)?;
    let mut results = Vec::new();
    for algorithm in Algorithm::ALL {
        let dir = root.join(algorithm.name());
        run(config, &data, algorithm, &dir)?;
        results.push(dir);
    }
    eval(&data, &results, &root.join("eval"))
}

struct Runs {
    root: PathBuf,
    reports: Vec<(u64, EvalReport)>,
}

fn scores(r: &EvalReport, label: &str) -> (f64, f64, f64) {
    let row = r.row(label).expect("row present");
    (row.sir_db, row.sdr_db, row.amari)
}

fn table_ordering(d: &Runs) -> Outcome {
    let report = &d.reports[0].1;
    let (js, jd, ja) = scores(report, "jefas-bss");
    let (ss, sd, sa) = scores(report, "sobi");
    let (ps, pd, pa) = scores(report, "p-sobi");
    let detail = format!(
        "seed {}: SIR/SDR/Amari sobi {ss:.2}/{sd:.2}/{sa:.3e}, p-sobi {ps:.2}/{pd:.2}/{pa:.3e}, jefas-bss {js:.2}/{jd:.2}/{ja:.3e}",
        d.reports[0].0
    );
    let jefas_best = js > ss && js > ps && jd > sd && jd > pd && ja < sa && ja < pa;
    let psobi_pattern = pa < sa && ps < ss && pd < sd;
    check(jefas_best && psobi_pattern, detail)
}

fn quality_thresholds(d: &Runs) -> Outcome {
    let mut passed = 0;
    let mut parts = Vec::new();
    for (seed, report) in &d.reports {
        let (js, _, ja) = scores(report, "jefas-bss");
        let (ss, _, sa) = scores(report, "sobi");
        let ok = ja <= 1e-2 && 10.0 * ja <= sa && js >= ss + 6.0;
        passed += ok as usize;
        parts.push(format!("seed {seed} {} (Amari {ja:.2e} vs {sa:.2e}, SIR {js:.1} vs {ss:.1})", if ok { "ok" } else { "miss" }));
    }
    check(passed >= 4, format!("{passed}/5 seeds: {}", parts.join("; ")))
}

fn convergence_behavior(d: &Runs) -> Outcome {
    let row = d.reports[0].1.row("jefas-bss").unwrap();
    let first = row.convergence.iter().take(20).position(|&v| v >= 60.0);
    let best = row.convergence.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match first {
        Some(k) => Ok(format!("≥ 60 dB at iteration {} ({} iterations, best {best:.1} dB)", k + 1, row.convergence.len())),
        None => Err(format!("best {best:.1} dB over {} iterations", row.convergence.len())),
    }
}

fn likelihood_oracle() -> Outcome {
    let wavelet = WaveletSpec::log_gaussian(20.0, 0.25).unwrap();
    let mut r = common::rng(40);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.gen_range(1..=3);
        let m = r.gen_range(2..=4);
        let w = DMatrix::from_fn(n, m, |_, _| Complex64::new(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)));
        let b = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.0 } + r.gen_range(-0.5..0.5));
        let theta: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let spectra: Vec<SourceSpectrum> = (0..n)
            .map(|_| {
                let lo: f64 = r.gen_range(0.02..0.15);
                let hi = (lo + r.gen_range(0.02..0.2)).min(0.5);
                SourceSpectrum::band_pass(lo, hi, 0.01, r.gen_range(0.1..3.0), 257).unwrap()
            })
            .collect();
        let grid = ScaleGrid::uniform(2f64.powf(r.gen_range(0.1..0.5)), r.gen_range(0.0..2.0), m).unwrap();
        let obs = FrameObservation::new(Array2::from_shape_fn((n, m), |(i, k)| w[(i, k)]), 0.0).unwrap();
        let params = ModelParameters { unmixing: b.clone(), theta: theta.clone(), spectra: &spectra };
        let value = neg_log_likelihood(&obs, &params, &grid, &wavelet).unwrap();
        let sigmas: Vec<DMatrix<f64>> = (0..n)
            .map(|i| build_covariance(&spectra[i], theta[i], &grid, &wavelet).unwrap().entries().clone())
            .collect();
        let full = common::dense_complex_nll(&w, &b, &sigmas);
        let expected = 0.5 * (full - (n * m) as f64 * std::f64::consts::PI.ln());
        worst = worst.max((value - expected).abs() / expected.abs().max(1.0));
    }
    check(worst <= 1e-10, format!("worst relative deviation {worst:.2e} over 100 instances"))
}

fn covariance_properties() -> Outcome {
    let wavelet = WaveletSpec::log_gaussian(20.0, 0.25).unwrap();
    let grid = ScaleGrid::uniform(2f64.powf(1.0 / 8.0), 1.0, 20).unwrap();
    let bank = FilterBank::new(&wavelet, &grid, &QuadratureConfig::default()).unwrap();
    let mut r = common::rng(50);
    let (mut min_eig, mut shift_err, mut flat_err): (f64, f64, f64) = (f64::INFINITY, 0.0, 0.0);
    let mut hermitian = true;
    for _ in 0..100 {
        let lo: f64 = r.gen_range(0.01..0.3);
        let s = SourceSpectrum::band_pass(lo, (lo + r.gen_range(0.005..0.2)).min(0.5), 0.01, r.gen_range(0.1..5.0), 501)
            .unwrap();
        let theta = r.gen_range(-3.0..3.0);
        let sigma = bank.raw_covariance(&s, theta).unwrap();
        hermitian &= sigma.is_hermitian(0.0);
        let eig = SymmetricEigen::new(sigma.entries().clone()).eigenvalues;
        min_eig = min_eig.min(eig.min() / eig.max());

        let delta = r.gen_range(-2.0..2.0);
        let theta = r.gen_range(-1.5..1.5);
        let a = bank.raw_covariance(&s, theta + delta).unwrap();
        let shifted = FilterBank::new(&wavelet, &grid.shifted(delta), &QuadratureConfig::default()).unwrap();
        let b = shifted.raw_covariance(&s, theta).unwrap();
        let scale = a.entries().amax().max(b.entries().amax());
        shift_err = shift_err.max((a.entries() - b.entries()).amax() / scale);

        let flat = SourceSpectrum::flat(r.gen_range(0.1..10.0), 50.0, 3).unwrap();
        let f0 = bank.raw_covariance(&flat, 0.0).unwrap();
        let f1 = bank.raw_covariance(&flat, r.gen_range(-3.0..3.0)).unwrap();
        flat_err = flat_err.max((f0.entries() - f1.entries()).amax() / f0.entries().amax());
    }
    check(
        hermitian && min_eig >= -1e-12 && shift_err <= 1e-8 && flat_err <= 1e-10,
        format!(
            "symmetric {hermitian}, min eigenvalue/max {min_eig:.1e}, shift identity {shift_err:.1e}, flat θ-invariance {flat_err:.1e}"
        ),
    )
}

fn warping_accuracy() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for delta in [-0.5, 0.0, 0.5] {
        let t = common::dilation_estimate(delta, 1);
        ok &= (t - delta).abs() <= 0.05;
        parts.push(format!("δ = {delta}: θ̃ = {t:.4}"));
    }
    check(ok, parts.join(", "))
}

fn sobi_sanity() -> Outcome {
    let lags: Vec<usize> = (1..=10).collect();
    let mut r = common::rng(70);
    let a = common::random_orthogonal(2, &mut r);
    let s = common::ar1_sources(&[0.9, -0.5], 1 << 15, 71);
    let b = sobi(common::mix(&a, &s).samples(), &lags).unwrap();
    let amari = amari_index(&b, &a).unwrap();
    check(amari <= 1e-2, format!("Amari {amari:.2e}"))
}

fn metric_invariances() -> Outcome {
    let mut r = common::rng(80);
    let mut amari_max: f64 = 0.0;
    for _ in 0..100 {
        let n = r.gen_range(1..=6);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, r.gen_range(0..=i));
        }
        let mut p = DMatrix::zeros(n, n);
        for (i, &j) in order.iter().enumerate() {
            p[(i, j)] = 10f64.powf(r.gen_range(-3.0..3.0)) * if r.gen::<bool>() { 1.0 } else { -1.0 };
        }
        amari_max = amari_max.max(amari_index(&p, &DMatrix::identity(n, n)).unwrap());
    }
    let mut recon: f64 = 0.0;
    for _ in 0..100 {
        let n = r.gen_range(1..=4);
        let truth: Vec<Vec<f64>> = (0..n).map(|_| (0..1000).map(|_| r.sample(StandardNormal)).collect()).collect();
        let est: Vec<f64> = (0..1000).map(|_| r.sample(StandardNormal)).collect();
        let dec = bss_eval(&est, &truth, r.gen_range(0..n)).unwrap();
        let err: f64 = (0..1000).map(|t| (dec.s_target[t] + dec.e_interf[t] + dec.e_artif[t] - est[t]).powi(2)).sum();
        let norm: f64 = est.iter().map(|v| v * v).sum();
        recon = recon.max((err / norm).sqrt());
    }
    // cosine pair on a full period: orthogonal, equal energy
    let len = 1000;
    let s1: Vec<f64> = (0..len).map(|t| (2.0 * std::f64::consts::PI * 3.0 * t as f64 / len as f64).cos()).collect();
    let s2: Vec<f64> = (0..len).map(|t| (2.0 * std::f64::consts::PI * 7.0 * t as f64 / len as f64).cos()).collect();
    let est: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + b).collect();
    let sir0 = sir(&bss_eval(&est, &[s1, s2], 0).unwrap());
    check(
        amari_max == 0.0 && recon <= 1e-10 && sir0.abs() <= 1e-9,
        format!("Amari on scaled permutations {amari_max:e}, reconstruction {recon:.1e}, equal-energy SIR {sir0:.1e} dB"),
    )
}

fn matching_stability() -> Outcome {
    let mut r = common::rng(90);
    let mut blocking = 0;
    for _ in 0..1000 {
        let n = r.gen_range(1..=6);
        let mut slices = || -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| {
                    let len = r.gen_range(8..64);
                    (0..len).map(|_| r.sample(StandardNormal)).collect()
                })
                .collect()
        };
        let (prev, new) = (slices(), slices());
        let p: Vec<&[f64]> = prev.iter().map(|v| v.as_slice()).collect();
        let q: Vec<&[f64]> = new.iter().map(|v| v.as_slice()).collect();
        let perm = align_sources(&p, &q).unwrap();
        let sim = slice_similarity(&p, &q).unwrap();
        let s = |a: usize, b: usize| sim[a][b].unwrap();
        let prev_of = |a: usize| perm.iter().position(|&x| x == a).unwrap();
        let unstable = (0..n).any(|a| (0..n).any(|b| perm[b] != a && s(a, b) > s(a, prev_of(a)) && s(a, b) > s(perm[b], b)));
        blocking += unstable as usize;
    }
    check(blocking == 0, format!("{blocking} of 1000 matchings have a blocking pair"))
}

fn determinism(d: &Runs) -> Outcome {
    let config = ExperimentConfig::default();
    let again = d.root.join("repeat");
    pipeline(&config, &again).map_err(|e| e.to_string())?;
    let first = d.root.join(format!("seed{}", config.seed)).join("eval");
    let mut differing = Vec::new();
    for name in METRIC_FILES {
        let a = std::fs::read(first.join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(again.join("eval").join(name)).map_err(|e| e.to_string())?;
        if a != b {
            differing.push(name);
        }
    }
    check(differing.is_empty(), format!("{} metric files compared, differing: {differing:?}", METRIC_FILES.len()))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut reports = Vec::new();
    let mut setup_error = None;
    for seed in SEEDS {
        let mut config = ExperimentConfig::default();
        config.seed = seed;
        match pipeline(&config, &tmp.path().join(format!("seed{seed}"))) {
            Ok(r) => reports.push((seed, r)),
            Err(e) => {
                setup_error = Some(format!("seed {seed}: {e}"));
                break;
            }
        }
    }
    let d = Runs { root: tmp.path().to_path_buf(), reports };
    let needs_pipeline = |f: fn(&Runs) -> Outcome| -> Outcome {
        match &setup_error {
            Some(e) => Err(format!("pipeline failed: {e}")),
            None => f(&d),
        }
    };

    let results: Vec<(&str, Outcome)> = vec![
        ("ordering of the three methods", needs_pipeline(table_ordering)),
        ("JEFAS-BSS quality thresholds", needs_pipeline(quality_thresholds)),
        ("convergence ≥ 60 dB within 20 iterations", needs_pipeline(convergence_behavior)),
        ("likelihood matches the dense density", likelihood_oracle()),
        ("covariance properties", covariance_properties()),
        ("warping estimation on pure dilations", warping_accuracy()),
        ("SOBI on AR(1) sources", sobi_sanity()),
        ("metric invariances", metric_invariances()),
        ("matching stability", matching_stability()),
        ("determinism of synth, run and eval", needs_pipeline(determinism)),
    ];
    let mut failed = 0;
    for (k, (name, outcome)) in results.iter().enumerate() {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag}: {name}: {detail}", k + 1);
    }
    println!("{} of {} criteria passed in {:.0} s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
