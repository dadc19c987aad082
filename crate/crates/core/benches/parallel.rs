use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use warpsep::estimators::{jefas_bss, AlgorithmConfig};
use warpsep::experiment::ExperimentConfig;
use warpsep::par::Parallelism;
use warpsep::signal::{cwt_with, generate_synthetic_mixture, FrameGrid};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("rayon", Parallelism::Rayon)];

fn mixture(len: usize) -> (warpsep::signal::MultichannelSignal, AlgorithmConfig) {
    let mut config = ExperimentConfig::default();
    config.signal.n_samples = len;
    let mix = generate_synthetic_mixture(&config.synthesis_spec()).unwrap();
    (mix.observations, config.algorithm_config().unwrap())
}

fn cwt(c: &mut Criterion) {
    let (z, algo) = mixture(1 << 15);
    let frames = FrameGrid::centered(z.len(), algo.analysis_hop).unwrap();
    let mut group = c.benchmark_group("cwt");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| cwt_with(&z, &algo.wavelet, &algo.scales, &frames, exec).unwrap())
        });
    }
    group.finish();
}

fn jefas(c: &mut Criterion) {
    let (z, mut algo) = mixture(1 << 13);
    algo.max_iterations = 2;
    let mut group = c.benchmark_group("jefas_bss");
    group.sample_size(10);
    for (name, exec) in MODES {
        algo.parallelism = exec;
        group.bench_with_input(BenchmarkId::from_parameter(name), &algo, |b, algo| b.iter(|| jefas_bss(&z, algo).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, cwt, jefas);
criterion_main!(benches);
