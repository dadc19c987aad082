//! Reproducible experiments: synthetic data generation, algorithm runs and
//! evaluation, all exchanged through files on disk.
//!
//! A data directory holds `manifest.json` ([`DataManifest`]) next to the
//! files it names; a result directory holds `run.json` ([`RunManifest`])
//! next to the stored [`EstimationState`].

mod config;
mod eval;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use config::{AlgorithmSection, ExperimentConfig, ScaleSection, SignalSection, WaveletSection, DEFAULT_CONFIG_TOML};
pub use eval::{eval, EvalReport, EvalRow};

use crate::baselines::{p_sobi, sobi};
use crate::error::{Error, Result};
use crate::estimators::{jefas_bss, welch_spectrum, write_state, EstimationState};
use crate::metrics::amari_curve;
use crate::signal::io::{read_signal_csv, read_table_csv, write_signal_csv, write_signal_wav, write_table_csv, WavFormat};
use crate::signal::{generate_synthetic_mixture, FrameGrid, MultichannelSignal};
use crate::trajectory::{MatrixKind, MixingTrajectory, WarpingTrajectory};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_FILE: &str = "run.json";
pub const FORMAT_VERSION: u32 = 1;

const CONFIG_FILE: &str = "config.toml";
const OBSERVATIONS_CSV: &str = "observations.csv";
const OBSERVATIONS_WAV: &str = "observations.wav";
const SOURCES_CSV: &str = "sources.csv";
const SOURCES_WAV: &str = "sources.wav";
const MIXING_CSV: &str = "mixing.csv";
const WARPS_CSV: &str = "warps.csv";
const THETA_CSV: &str = "theta.csv";
const CONVERGENCE_CSV: &str = "convergence.csv";
const AMARI_CSV: &str = "amari.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    JefasBss,
    Sobi,
    PSobi,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Sobi, Algorithm::PSobi, Algorithm::JefasBss];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::JefasBss => "jefas-bss",
            Algorithm::Sobi => "sobi",
            Algorithm::PSobi => "p-sobi",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected jefas-bss, sobi or p-sobi)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalFiles {
    pub csv: String,
    pub wav: String,
}

/// `manifest.json` of a data directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataManifest {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub config: String,
    pub n_sources: usize,
    pub n_samples: usize,
    pub sample_rate: f64,
    pub frame_hop: usize,
    pub observations: SignalFiles,
    pub sources: SignalFiles,
    pub mixing: String,
    pub warps: String,
    pub theta: String,
    pub spectra: Vec<String>,
    pub max_condition_number: f64,
}

/// `run.json` of a result directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config_hash: String,
    pub data_config_hash: String,
    pub iterations: usize,
    pub converged: bool,
    pub final_criterion_db: Option<f64>,
    pub state: String,
    pub sources_wav: String,
    pub convergence: String,
    pub amari: Option<String>,
    pub mean_amari: Option<f64>,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn read_data_manifest(dir: &Path) -> Result<DataManifest> {
    let path = dir.join(MANIFEST_FILE);
    let m: DataManifest = read_json(&path)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::format(&path, format!("unsupported format version {}", m.format_version)));
    }
    Ok(m)
}

pub fn read_run_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(RUN_FILE);
    let m: RunManifest = read_json(&path)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::format(&path, format!("unsupported format version {}", m.format_version)));
    }
    Ok(m)
}

fn matrix_header(prefix: &str, n: usize) -> Vec<String> {
    let mut h = vec!["frame".to_string(), "time".to_string()];
    for i in 0..n {
        for j in 0..n {
            h.push(format!("{prefix}_{i}_{j}"));
        }
    }
    h
}

/// Per-frame matrices as `frame,time,a_0_0,a_0_1,…` (row-major).
pub fn write_mixing_csv(traj: &MixingTrajectory, sample_rate: f64, path: &Path) -> Result<()> {
    let n = traj.n_sources();
    let times = traj.frames().times(sample_rate);
    let rows: Vec<Vec<f64>> = traj
        .matrices()
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let mut row = vec![j as f64, times[j]];
            for i in 0..n {
                row.extend(m.row(i).iter());
            }
            row
        })
        .collect();
    write_table_csv(path, &matrix_header("a", n), &rows)
}

/// Reads [`write_mixing_csv`] output back onto `frames`.
pub fn read_mixing_csv(path: &Path, frames: &FrameGrid) -> Result<MixingTrajectory> {
    let (header, rows) = read_table_csv(path)?;
    let n = ((header.len().saturating_sub(2)) as f64).sqrt().round() as usize;
    if n == 0 || header != matrix_header("a", n) {
        return Err(Error::format(path, "header is not frame,time,a_0_0,…"));
    }
    if rows.len() != frames.count {
        return Err(Error::Eval {
            path: path.into(),
            message: format!("{} frames stored, {} expected", rows.len(), frames.count),
        });
    }
    let matrices = rows.iter().map(|r| DMatrix::from_row_slice(n, n, &r[2..])).collect();
    MixingTrajectory::new(frames.clone(), MatrixKind::Mixing, matrices).map_err(|e| Error::format(path, e))
}

fn write_theta_csv(traj: &WarpingTrajectory, sample_rate: f64, path: &Path) -> Result<()> {
    let mut header = vec!["frame".to_string(), "time".to_string()];
    header.extend((0..traj.n_sources()).map(|i| format!("theta_{i}")));
    let times = traj.frames.times(sample_rate);
    let rows: Vec<Vec<f64>> = (0..traj.frames.count)
        .map(|j| {
            let mut row = vec![j as f64, times[j]];
            row.extend(traj.theta.iter().map(|t| t[j]));
            row
        })
        .collect();
    write_table_csv(path, &header, &rows)
}

/// Generates the synthetic mixture described by `config` and writes it with
/// its full ground truth to `out`. Nothing is written if generation fails.
pub fn synth(config: &ExperimentConfig, out: &Path) -> Result<DataManifest> {
    config.validate()?;
    let spec = config.synthesis_spec();
    let mix = generate_synthetic_mixture(&spec)?;
    let base = config.scales.base;
    let fs = spec.sample_rate;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let config_text = config.to_toml_string()?;
    let config_path = out.join(CONFIG_FILE);
    std::fs::write(&config_path, &config_text).map_err(|e| Error::io(&config_path, e))?;
    write_signal_csv(&mix.observations, &out.join(OBSERVATIONS_CSV))?;
    write_signal_wav(&mix.observations, &out.join(OBSERVATIONS_WAV), WavFormat::Float32)?;
    write_signal_csv(&mix.sources, &out.join(SOURCES_CSV))?;
    write_signal_wav(&mix.sources, &out.join(SOURCES_WAV), WavFormat::Float32)?;
    write_mixing_csv(&mix.mixing, fs, &out.join(MIXING_CSV))?;
    let warp_rows: Vec<Vec<f64>> = spec
        .warps
        .iter()
        .enumerate()
        .map(|(i, w)| vec![i as f64, w.amplitude, w.frequency_hz, w.phase])
        .collect();
    write_table_csv(&out.join(WARPS_CSV), &["source", "amplitude", "frequency_hz", "phase"], &warp_rows)?;
    let theta = WarpingTrajectory::from_warps(&mix.warps, mix.mixing.frames(), base, fs);
    write_theta_csv(&theta, fs, &out.join(THETA_CSV))?;
    let mut spectra = Vec::new();
    for (i, s) in mix.spectra.iter().enumerate() {
        let name = format!("spectrum_{i}.csv");
        s.write_csv(&out.join(&name))?;
        spectra.push(name);
    }
    let manifest = DataManifest {
        format_version: FORMAT_VERSION,
        seed: config.seed,
        config_hash: config.hash()?,
        config: CONFIG_FILE.into(),
        n_sources: spec.sources.len(),
        n_samples: spec.n_samples,
        sample_rate: fs,
        frame_hop: spec.frame_hop,
        observations: SignalFiles { csv: OBSERVATIONS_CSV.into(), wav: OBSERVATIONS_WAV.into() },
        sources: SignalFiles { csv: SOURCES_CSV.into(), wav: SOURCES_WAV.into() },
        mixing: MIXING_CSV.into(),
        warps: WARPS_CSV.into(),
        theta: THETA_CSV.into(),
        spectra,
        max_condition_number: mix.condition_numbers.iter().copied().fold(0.0, f64::max),
    };
    write_json(&manifest, &out.join(MANIFEST_FILE))?;
    log::info!("wrote synthetic data (seed {}) to {}", config.seed, out.display());
    Ok(manifest)
}

fn stationary_state(z: &MultichannelSignal, unmixing: MixingTrajectory, base: f64, segment: usize) -> Result<EstimationState> {
    let sources = unmixing.apply(z)?;
    let spectra = (0..sources.n_channels())
        .map(|i| welch_spectrum(&sources.channel_vec(i), segment))
        .collect::<Result<Vec<_>>>()?;
    let n = unmixing.n_sources();
    Ok(EstimationState {
        iterations: 1,
        converged: true,
        initial_unmixing: unmixing.clone(),
        warping: WarpingTrajectory::zeros(unmixing.frames().clone(), base, n),
        unmixing,
        spectra,
        sources,
        history: Vec::new(),
        alignment_switches: Vec::new(),
        unidentifiable: vec![false; n],
    })
}

fn with_context<T>(algorithm: Algorithm, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{algorithm}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{algorithm}: {m}")),
        Error::DegenerateInput(m) => Error::DegenerateInput(format!("{algorithm}: {m}")),
        Error::SingularUnmixing(m) => Error::SingularUnmixing(format!("{algorithm}: {m}")),
        Error::SingularMatrix(m) => Error::SingularMatrix(format!("{algorithm}: {m}")),
        other => other,
    })
}

/// Runs one algorithm on the observations of the data directory `data` and
/// writes the estimation state and its companions to `out`. Non-convergence
/// is not an error; it is recorded in `run.json`.
pub fn run(config: &ExperimentConfig, data: &Path, algorithm: Algorithm, out: &Path) -> Result<RunManifest> {
    let manifest = read_data_manifest(data)?;
    let z = read_signal_csv(&data.join(&manifest.observations.csv), manifest.sample_rate)?;
    if z.n_channels() != config.signal.n_sources {
        return Err(Error::Config(format!(
            "configuration expects {} sources, the data has {} channels",
            config.signal.n_sources,
            z.n_channels()
        )));
    }
    let mut algo = config.algorithm_config()?;
    algo.psobi_segment = algo.psobi_segment.min(z.len());
    let frames = FrameGrid::centered(z.len(), algo.frame_hop)?;
    let base = config.scales.base;

    let state = with_context(
        algorithm,
        match algorithm {
            Algorithm::JefasBss => jefas_bss(&z, &algo),
            Algorithm::Sobi => sobi(z.samples(), &algo.lags)
                .and_then(|b| MixingTrajectory::constant(frames.clone(), MatrixKind::Unmixing, b))
                .and_then(|b| stationary_state(&z, b, base, algo.spectrum_segment)),
            Algorithm::PSobi => p_sobi(&z, algo.psobi_segment, &algo.lags, &frames, algo.parallelism)
                .and_then(|b| stationary_state(&z, b, base, algo.spectrum_segment)),
        },
    )?;
    if !state.converged {
        log::warn!(
            "{algorithm} stopped after {} iterations without reaching {} dB",
            state.iterations,
            algo.stop_db
        );
    }

    write_state(&state, out)?;
    write_signal_wav(&state.sources, &out.join(SOURCES_WAV), WavFormat::Float32)?;
    let history: Vec<Vec<f64>> = state.history.iter().enumerate().map(|(k, v)| vec![(k + 1) as f64, *v]).collect();
    write_table_csv(&out.join(CONVERGENCE_CSV), &["iteration", "criterion_db"], &history)?;

    let truth = data.join(&manifest.mixing);
    let mut amari = None;
    let mut mean_amari = None;
    if truth.exists() {
        if manifest.frame_hop == algo.frame_hop {
            let a = read_mixing_csv(&truth, &frames)?;
            let curve = amari_curve(&state.unmixing, &a)?;
            let times = frames.times(z.sample_rate());
            let rows: Vec<Vec<f64>> = curve.iter().enumerate().map(|(j, v)| vec![j as f64, times[j], *v]).collect();
            write_table_csv(&out.join(AMARI_CSV), &["frame", "time", "amari"], &rows)?;
            mean_amari = Some(curve.iter().sum::<f64>() / curve.len() as f64);
            amari = Some(AMARI_CSV.to_string());
        } else {
            log::warn!(
                "frame hop {} differs from the data's {}; skipping the Amari curve",
                algo.frame_hop,
                manifest.frame_hop
            );
        }
    }

    let run = RunManifest {
        format_version: FORMAT_VERSION,
        algorithm,
        seed: config.seed,
        config_hash: config.hash()?,
        data_config_hash: manifest.config_hash,
        iterations: state.iterations,
        converged: state.converged,
        final_criterion_db: state.history.last().copied(),
        state: "state.json".into(),
        sources_wav: SOURCES_WAV.into(),
        convergence: CONVERGENCE_CSV.into(),
        amari,
        mean_amari,
    };
    write_json(&run, &out.join(RUN_FILE))?;
    log::info!("{algorithm}: wrote results to {}", out.display());
    Ok(run)
}

/// Loads `config.toml` stored in a data directory.
pub fn data_config(data: &Path) -> Result<ExperimentConfig> {
    let manifest = read_data_manifest(data)?;
    ExperimentConfig::load(&data.join(manifest.config))
}
