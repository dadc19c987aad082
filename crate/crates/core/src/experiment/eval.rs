use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{data_config, read_data_manifest, read_mixing_csv, read_run_manifest, MANIFEST_FILE, RUN_FILE};
use crate::error::{Error, Result};
use crate::estimators::read_state;
use crate::metrics::{amari_curve, separation_scores};
use crate::signal::io::{read_signal_csv, write_table_csv};
use crate::signal::{cwt_with, FrameGrid};

const PLOT_SCRIPT: &str = include_str!("plot_results.py");
const SCALOGRAM_HOP: usize = 64;

/// Scores of one result directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub label: String,
    pub dir: PathBuf,
    pub sir_db: f64,
    pub sdr_db: f64,
    /// Time average of `amari_curve`.
    pub amari: f64,
    pub amari_curve: Vec<f64>,
    pub convergence: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub frame_times: Vec<f64>,
}

impl EvalReport {
    pub fn row(&self, label: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

fn eval_err(path: impl Into<PathBuf>, message: impl Into<String>) -> Error {
    Error::Eval { path: path.into(), message: message.into() }
}

fn unique_label(label: String, taken: &[EvalRow]) -> String {
    if !taken.iter().any(|r| r.label == label) {
        return label;
    }
    (2..).map(|k| format!("{label}#{k}")).find(|l| !taken.iter().any(|r| &r.label == l)).expect("unbounded")
}

/// Scores every result directory against the ground truth in `data` and
/// writes the comparison table and plot data to `out`. A data directory
/// passed as a result is scored as a perfect separation (label
/// `ground-truth`).
pub fn eval(data: &Path, results: &[PathBuf], out: &Path) -> Result<EvalReport> {
    if results.is_empty() {
        return Err(Error::Config("eval needs at least one result directory".into()));
    }
    let manifest = read_data_manifest(data)?;
    let config = data_config(data)?;
    let truth_path = data.join(&manifest.sources.csv);
    let truth = read_signal_csv(&truth_path, manifest.sample_rate)?;
    let frames = FrameGrid::centered(manifest.n_samples, manifest.frame_hop)?;
    if truth.len() != manifest.n_samples || truth.n_channels() != manifest.n_sources {
        return Err(eval_err(&truth_path, format!(
            "{}×{} samples, manifest declares {}×{}",
            truth.n_channels(),
            truth.len(),
            manifest.n_sources,
            manifest.n_samples
        )));
    }
    let mixing = read_mixing_csv(&data.join(&manifest.mixing), &frames)?;

    let mut rows: Vec<EvalRow> = Vec::new();
    for dir in results {
        let row = if dir.join(RUN_FILE).exists() {
            let run = read_run_manifest(dir)?;
            let state = read_state(dir)?;
            let sources_path = dir.join("sources.csv");
            if state.sources.len() != truth.len() || state.sources.n_channels() != truth.n_channels() {
                return Err(eval_err(&sources_path, format!(
                    "{}×{} samples, ground truth {} is {}×{}",
                    state.sources.n_channels(),
                    state.sources.len(),
                    truth_path.display(),
                    truth.n_channels(),
                    truth.len()
                )));
            }
            if state.unmixing.frames() != &frames {
                return Err(eval_err(dir.join("state.json"), format!(
                    "{} frames of {} samples, ground truth has {} frames of {}",
                    state.unmixing.frames().count,
                    state.unmixing.frames().hop,
                    frames.count,
                    frames.hop
                )));
            }
            if run.data_config_hash != manifest.config_hash {
                log::warn!("{} was computed from different data ({})", dir.display(), run.data_config_hash);
            }
            let scores = separation_scores(&state.sources, &truth)?;
            let curve = amari_curve(&state.unmixing, &mixing)?;
            EvalRow {
                label: unique_label(run.algorithm.to_string(), &rows),
                dir: dir.clone(),
                sir_db: scores.sir_db,
                sdr_db: scores.sdr_db,
                amari: curve.iter().sum::<f64>() / curve.len() as f64,
                amari_curve: curve,
                convergence: state.history,
            }
        } else if dir.join(MANIFEST_FILE).exists() {
            let m = read_data_manifest(dir)?;
            let path = dir.join(&m.sources.csv);
            let sources = read_signal_csv(&path, m.sample_rate)?;
            if sources.len() != truth.len() || sources.n_channels() != truth.n_channels() {
                return Err(eval_err(&path, "ground-truth sources differ in shape from the evaluated data"));
            }
            let a = read_mixing_csv(&dir.join(&m.mixing), &frames)?;
            let scores = separation_scores(&sources, &truth)?;
            let curve = amari_curve(&a.inverted()?, &mixing)?;
            EvalRow {
                label: unique_label("ground-truth".into(), &rows),
                dir: dir.clone(),
                sir_db: scores.sir_db,
                sdr_db: scores.sdr_db,
                amari: curve.iter().sum::<f64>() / curve.len() as f64,
                amari_curve: curve,
                convergence: Vec::new(),
            }
        } else {
            return Err(eval_err(dir, format!("neither {RUN_FILE} nor {MANIFEST_FILE} found")));
        };
        rows.push(row);
    }

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();

    let table_path = out.join("table.csv");
    let mut w = csv::Writer::from_path(&table_path).map_err(|e| Error::format(&table_path, e))?;
    let mut header = vec!["metric"];
    header.extend(&labels);
    w.write_record(&header).map_err(|e| Error::format(&table_path, e))?;
    for (name, get) in [
        ("SIR", (|r: &EvalRow| r.sir_db) as fn(&EvalRow) -> f64),
        ("SDR", |r: &EvalRow| r.sdr_db),
        ("Amari", |r: &EvalRow| r.amari),
    ] {
        let mut record = vec![name.to_string()];
        record.extend(rows.iter().map(|r| get(r).to_string()));
        w.write_record(&record).map_err(|e| Error::format(&table_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&table_path, e))?;

    let metrics: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.sir_db, r.sdr_db, r.amari]).collect();
    let metrics_path = out.join("metrics.csv");
    let mut w = csv::Writer::from_path(&metrics_path).map_err(|e| Error::format(&metrics_path, e))?;
    w.write_record(["algorithm", "sir_db", "sdr_db", "amari"]).map_err(|e| Error::format(&metrics_path, e))?;
    for (label, m) in labels.iter().zip(&metrics) {
        let mut record = vec![label.to_string()];
        record.extend(m.iter().map(f64::to_string));
        w.write_record(&record).map_err(|e| Error::format(&metrics_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&metrics_path, e))?;

    let frame_times = frames.times(manifest.sample_rate);
    let mut header = vec!["frame".to_string(), "time".to_string()];
    header.extend(labels.iter().map(|l| l.to_string()));
    let curves: Vec<Vec<f64>> = (0..frames.count)
        .map(|j| {
            let mut row = vec![j as f64, frame_times[j]];
            row.extend(rows.iter().map(|r| r.amari_curve[j]));
            row
        })
        .collect();
    write_table_csv(&out.join("amari_curves.csv"), &header, &curves)?;

    let iterations = rows.iter().map(|r| r.convergence.len()).max().unwrap_or(0);
    let mut header = vec!["iteration".to_string()];
    header.extend(labels.iter().map(|l| l.to_string()));
    let conv: Vec<Vec<f64>> = (0..iterations)
        .map(|k| {
            let mut row = vec![(k + 1) as f64];
            row.extend(rows.iter().map(|r| r.convergence.get(k).copied().unwrap_or(f64::NAN)));
            row
        })
        .collect();
    write_table_csv(&out.join("convergence.csv"), &header, &conv)?;

    let algo = config.algorithm_config()?;
    let grid = FrameGrid::centered(manifest.n_samples, SCALOGRAM_HOP.min(manifest.n_samples))?;
    let observations = read_signal_csv(&data.join(&manifest.observations.csv), manifest.sample_rate)?;
    cwt_with(&observations, &algo.wavelet, &algo.scales, &grid, algo.parallelism)?
        .export_csv(out, "scalogram_observation_")?;
    cwt_with(&truth, &algo.wavelet, &algo.scales, &grid, algo.parallelism)?.export_csv(out, "scalogram_source_")?;
    let freqs: Vec<Vec<f64>> = algo
        .scales
        .center_frequencies(&algo.wavelet)
        .iter()
        .map(|f| vec![f * manifest.sample_rate])
        .collect();
    write_table_csv(&out.join("scalogram_frequencies.csv"), &["frequency_hz"], &freqs)?;
    let times: Vec<Vec<f64>> = grid.times(manifest.sample_rate).into_iter().map(|t| vec![t]).collect();
    write_table_csv(&out.join("scalogram_times.csv"), &["time"], &times)?;
    let script = out.join("plot_results.py");
    std::fs::write(&script, PLOT_SCRIPT).map_err(|e| Error::io(&script, e))?;

    Ok(EvalReport { rows, frame_times })
}
