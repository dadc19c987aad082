use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{AlgorithmConfig, SolverOptions, ThetaSearch};
use crate::par::Parallelism;
use crate::signal::{MixingSpec, ScaleGrid, SourceSpec, SynthesisSpec, WarpSpec};
use crate::spectral::{QuadratureConfig, WaveletSpec};

/// The shipped default experiment, also embedded as [`ExperimentConfig::default`].
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../../../configs/default.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub n_sources: usize,
    pub n_samples: usize,
    pub sample_rate: f64,
    /// Frame spacing `Δτ` in samples.
    pub frame_hop: usize,
    /// Linear grid points of the stored ground-truth spectra.
    #[serde(default = "default_spectrum_points")]
    pub spectrum_points: usize,
}

fn default_spectrum_points() -> usize {
    1025
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletSection {
    /// Log-Gaussian bandwidth `c`.
    pub bandwidth: f64,
    /// Centre frequency `ξ₀` in cycles per sample at unit scale.
    pub center: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSection {
    /// Ratio `q` between consecutive scales.
    pub base: f64,
    pub count: usize,
    /// Centre frequency of the finest scale, in cycles per sample.
    pub max_frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub analysis_hop: usize,
    pub eps_b: f64,
    pub gain_window: usize,
    pub theta_max: f64,
    pub theta_grid_step: f64,
    pub theta_window: f64,
    pub theta_neighborhood: usize,
    pub jefas_iterations: usize,
    pub stop_db: f64,
    pub max_iterations: usize,
    pub psobi_segment: usize,
    pub lags: Vec<usize>,
    pub spectrum_segment: usize,
    pub covariance_floor: f64,
    #[serde(default)]
    pub parallelism: Parallelism,
}

/// Everything needed to synthesize, separate and evaluate one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub signal: SignalSection,
    pub wavelet: WaveletSection,
    pub scales: ScaleSection,
    pub algorithm: AlgorithmSection,
    pub mixing: MixingSpec,
    pub sources: Vec<SourceSpec>,
    pub warps: Vec<WarpSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::from_toml_str(DEFAULT_CONFIG_TOML).expect("the shipped default configuration is valid")
    }
}

/// Collects validation problems keyed by the offending field path.
#[derive(Default)]
struct Issues(Vec<(String, String)>);

impl Issues {
    fn check(&mut self, ok: bool, path: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.0.push((path.into(), message.into()));
        }
    }

    fn into_result(self) -> Result<()> {
        if self.0.is_empty() {
            return Ok(());
        }
        let mut text = format!("{} invalid field(s)", self.0.len());
        for (path, message) in &self.0 {
            let _ = write!(text, "\n  {path}: {message}");
        }
        Err(Error::Config(text))
    }
}

fn finite_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl ExperimentConfig {
    /// Parses and validates; syntax errors carry the TOML line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }

    /// `sha256:` digest of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(format!("sha256:{}", digest.iter().map(|b| format!("{b:02x}")).collect::<String>()))
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut is = Issues::default();
        let s = &self.signal;
        let n = s.n_sources;
        is.check(n >= 1, "signal.n_sources", "must be at least 1");
        is.check(s.n_samples >= 2, "signal.n_samples", "must be at least 2");
        is.check(finite_positive(s.sample_rate), "signal.sample_rate", "must be positive");
        is.check(s.frame_hop >= 1 && s.frame_hop <= s.n_samples, "signal.frame_hop", "must lie in [1, n_samples]");
        is.check(s.spectrum_points >= 2, "signal.spectrum_points", "must be at least 2");
        is.check(
            self.sources.len() == n,
            "sources",
            format!("{} entries for n_sources = {n}", self.sources.len()),
        );
        is.check(self.warps.len() == n, "warps", format!("{} entries for n_sources = {n}", self.warps.len()));

        let nyquist = s.sample_rate / 2.0;
        for (i, src) in self.sources.iter().enumerate() {
            let [lo, hi] = src.band_hz;
            is.check(
                lo >= 0.0 && lo < hi && hi <= nyquist,
                format!("sources[{i}].band_hz"),
                format!("need 0 ≤ low < high ≤ {nyquist} Hz, got [{lo}, {hi}]"),
            );
            is.check(src.rolloff_hz >= 0.0, format!("sources[{i}].rolloff_hz"), "must be non-negative");
            is.check(src.variance > 0.0 && src.variance.is_finite(), format!("sources[{i}].variance"), "must be positive");
        }
        for (i, w) in self.warps.iter().enumerate() {
            is.check(w.amplitude.abs() < 1.0, format!("warps[{i}].amplitude"), "must satisfy |amplitude| < 1");
            is.check(
                w.frequency_hz >= 0.0 && w.frequency_hz.is_finite(),
                format!("warps[{i}].frequency_hz"),
                "must be finite and non-negative",
            );
            is.check(w.phase.is_finite(), format!("warps[{i}].phase"), "must be finite");
        }

        let m = &self.mixing;
        for (name, rows) in [
            ("base", &m.base),
            ("amplitude", &m.amplitude),
            ("frequency_hz", &m.frequency_hz),
            ("phase", &m.phase),
        ] {
            is.check(rows.len() == n, format!("mixing.{name}"), format!("has {} rows, expected {n}", rows.len()));
            for (r, row) in rows.iter().enumerate() {
                is.check(
                    row.len() == n,
                    format!("mixing.{name}[{r}]"),
                    format!("has {} entries, expected {n}", row.len()),
                );
                for (c, v) in row.iter().enumerate() {
                    is.check(v.is_finite(), format!("mixing.{name}[{r}][{c}]"), "must be finite");
                }
            }
        }
        is.check(m.condition_cap > 1.0, "mixing.condition_cap", "must exceed 1");

        is.check(finite_positive(self.wavelet.bandwidth), "wavelet.bandwidth", "must be positive");
        is.check(
            self.wavelet.center > 0.0 && self.wavelet.center < 0.5,
            "wavelet.center",
            "must lie in (0, 0.5) cycles per sample",
        );
        is.check(self.scales.base > 1.0 && self.scales.base.is_finite(), "scales.base", "must exceed 1");
        is.check(self.scales.count >= 2, "scales.count", "must be at least 2");
        is.check(
            self.scales.max_frequency > 0.0 && self.scales.max_frequency < 0.5,
            "scales.max_frequency",
            "must lie in (0, 0.5) cycles per sample",
        );

        let a = &self.algorithm;
        is.check(
            a.analysis_hop >= 1 && s.frame_hop % a.analysis_hop.max(1) == 0,
            "algorithm.analysis_hop",
            format!("must divide signal.frame_hop ({})", s.frame_hop),
        );
        is.check(a.eps_b >= 0.0 && a.eps_b.is_finite(), "algorithm.eps_b", "must be finite and non-negative");
        is.check(finite_positive(a.theta_max), "algorithm.theta_max", "must be positive");
        is.check(
            finite_positive(a.theta_grid_step) && a.theta_grid_step <= a.theta_max,
            "algorithm.theta_grid_step",
            "must lie in (0, theta_max]",
        );
        is.check(finite_positive(a.theta_window), "algorithm.theta_window", "must be positive");
        is.check(a.theta_neighborhood >= 1, "algorithm.theta_neighborhood", "must be at least 1");
        is.check(a.jefas_iterations >= 1, "algorithm.jefas_iterations", "must be at least 1");
        is.check(a.stop_db.is_finite(), "algorithm.stop_db", "must be finite");
        is.check(a.max_iterations >= 1, "algorithm.max_iterations", "must be at least 1");
        is.check(!a.lags.is_empty(), "algorithm.lags", "must not be empty");
        for (k, &lag) in a.lags.iter().enumerate() {
            is.check(lag >= 1, format!("algorithm.lags[{k}]"), "must be positive");
        }
        let max_lag = a.lags.iter().copied().max().unwrap_or(0);
        is.check(
            a.psobi_segment >= 4 * max_lag && a.psobi_segment >= 1 && a.psobi_segment <= s.n_samples,
            "algorithm.psobi_segment",
            format!("must lie in [4 × largest lag = {}, n_samples]", 4 * max_lag),
        );
        is.check(
            a.spectrum_segment >= 4 && a.spectrum_segment % 2 == 0 && a.spectrum_segment <= s.n_samples,
            "algorithm.spectrum_segment",
            "must be even, at least 4 and at most n_samples",
        );
        is.check(
            a.covariance_floor >= 0.0 && a.covariance_floor.is_finite(),
            "algorithm.covariance_floor",
            "must be finite and non-negative",
        );
        is.into_result()
    }

    pub fn synthesis_spec(&self) -> SynthesisSpec {
        SynthesisSpec {
            n_samples: self.signal.n_samples,
            sample_rate: self.signal.sample_rate,
            sources: self.sources.clone(),
            warps: self.warps.clone(),
            mixing: self.mixing.clone(),
            frame_hop: self.signal.frame_hop,
            spectrum_points: self.signal.spectrum_points,
            seed: self.seed,
        }
    }

    pub fn algorithm_config(&self) -> Result<AlgorithmConfig> {
        let wavelet = WaveletSpec::log_gaussian(self.wavelet.bandwidth, self.wavelet.center)?;
        let scales = ScaleGrid::from_max_frequency(self.scales.base, self.scales.count, self.scales.max_frequency, &wavelet)?;
        let a = &self.algorithm;
        let config = AlgorithmConfig {
            wavelet,
            scales,
            frame_hop: self.signal.frame_hop,
            analysis_hop: a.analysis_hop,
            eps_b: a.eps_b,
            gain_window: a.gain_window,
            theta: ThetaSearch { theta_max: a.theta_max, grid_step: a.theta_grid_step, ..ThetaSearch::default() },
            theta_neighborhood: a.theta_neighborhood,
            theta_local_window: a.theta_window,
            jefas_iterations: a.jefas_iterations,
            stop_db: a.stop_db,
            max_iterations: a.max_iterations,
            psobi_segment: a.psobi_segment,
            lags: a.lags.clone(),
            spectrum_segment: a.spectrum_segment,
            covariance_floor: a.covariance_floor,
            quadrature: QuadratureConfig::default(),
            solver: SolverOptions::default(),
            parallelism: a.parallelism,
        };
        config.validate()?;
        Ok(config)
    }
}
