use warpsep::estimators::jefas_bss;
use warpsep::experiment::ExperimentConfig;
use warpsep::par::Parallelism;
use warpsep::signal::{cwt_with, generate_synthetic_mixture, FrameGrid};

#[test]
fn sequential_and_rayon_agree_bit_for_bit() {
    let mut config = ExperimentConfig::default();
    config.signal.n_samples = 1 << 13;
    config.algorithm.max_iterations = 2;
    let z = generate_synthetic_mixture(&config.synthesis_spec()).unwrap().observations;
    let mut algo = config.algorithm_config().unwrap();

    let frames = FrameGrid::centered(z.len(), algo.analysis_hop).unwrap();
    let seq = cwt_with(&z, &algo.wavelet, &algo.scales, &frames, Parallelism::Sequential).unwrap();
    let par = cwt_with(&z, &algo.wavelet, &algo.scales, &frames, Parallelism::Rayon).unwrap();
    assert_eq!(seq, par);

    algo.parallelism = Parallelism::Sequential;
    let a = jefas_bss(&z, &algo).unwrap();
    algo.parallelism = Parallelism::Rayon;
    let b = jefas_bss(&z, &algo).unwrap();
    assert_eq!(a.unmixing, b.unmixing);
    assert_eq!(a.warping, b.warping);
    assert_eq!(a.sources, b.sources);
    assert_eq!(a.history, b.history);
}
