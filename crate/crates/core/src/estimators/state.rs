use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EstimationState;
use crate::error::{Error, Result};
use crate::signal::io::{read_signal_csv, write_signal_csv};
use crate::spectral::SourceSpectrum;
use crate::trajectory::{MixingTrajectory, SerialTrajectory, WarpingTrajectory};

const STATE_FILE: &str = "state.json";
const SOURCES_FILE: &str = "sources.csv";
const FORMAT_VERSION: u32 = 1;

/// JSON layout of `state.json`. Spectra and separated sources live in CSV
/// files next to it, referenced by file name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredState {
    pub format_version: u32,
    pub iterations: usize,
    pub converged: bool,
    pub sample_rate: f64,
    pub unmixing: SerialTrajectory,
    pub initial_unmixing: SerialTrajectory,
    pub warping: WarpingTrajectory,
    pub spectra: Vec<String>,
    pub sources: String,
    pub history: Vec<f64>,
    pub alignment_switches: Vec<usize>,
    pub unidentifiable: Vec<bool>,
}

pub fn write_state(state: &EstimationState, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut spectra = Vec::new();
    for (i, s) in state.spectra.iter().enumerate() {
        let name = format!("spectrum_{i}.csv");
        s.write_csv(&dir.join(&name))?;
        spectra.push(name);
    }
    write_signal_csv(&state.sources, &dir.join(SOURCES_FILE))?;
    let stored = StoredState {
        format_version: FORMAT_VERSION,
        iterations: state.iterations,
        converged: state.converged,
        sample_rate: state.sources.sample_rate(),
        unmixing: state.unmixing.to_serial(),
        initial_unmixing: state.initial_unmixing.to_serial(),
        warping: state.warping.clone(),
        spectra,
        sources: SOURCES_FILE.into(),
        history: state.history.clone(),
        alignment_switches: state.alignment_switches.clone(),
        unidentifiable: state.unidentifiable.clone(),
    };
    let path = dir.join(STATE_FILE);
    let json = serde_json::to_string_pretty(&stored).map_err(|e| Error::format(&path, e))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_state(dir: &Path) -> Result<EstimationState> {
    let path = dir.join(STATE_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let stored: StoredState = serde_json::from_str(&text).map_err(|e| Error::format(&path, e))?;
    if stored.format_version != FORMAT_VERSION {
        return Err(Error::format(&path, format!("unsupported format version {}", stored.format_version)));
    }
    let spectra = stored
        .spectra
        .iter()
        .map(|name| SourceSpectrum::read_csv(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    let sources = read_signal_csv(&dir.join(&stored.sources), stored.sample_rate)?;
    Ok(EstimationState {
        iterations: stored.iterations,
        converged: stored.converged,
        unmixing: MixingTrajectory::from_serial(stored.unmixing)?,
        initial_unmixing: MixingTrajectory::from_serial(stored.initial_unmixing)?,
        warping: stored.warping,
        spectra,
        sources,
        history: stored.history,
        alignment_switches: stored.alignment_switches,
        unidentifiable: stored.unidentifiable,
    })
}
