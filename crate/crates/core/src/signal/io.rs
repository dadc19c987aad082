//! CSV and WAV readers/writers for signals and plain matrices.
//!
//! Numbers are written in Rust's shortest round-trip form, so CSV output
//! reads back bit-exactly.

use std::path::Path;

use hound::{SampleFormat, WavSpec};
use ndarray::Array2;

use super::MultichannelSignal;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    Pcm16,
    Pcm24,
    #[default]
    Float32,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e)
}

/// One column per channel, header `ch0,ch1,…`.
pub fn write_signal_csv(signal: &MultichannelSignal, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let n = signal.n_channels();
    w.write_record((0..n).map(|c| format!("ch{c}"))).map_err(|e| csv_err(path, e))?;
    let s = signal.samples();
    for t in 0..signal.len() {
        w.write_record((0..n).map(|c| s[[c, t]].to_string())).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_signal_csv(path: &Path, sample_rate: f64) -> Result<MultichannelSignal> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let n = r.headers().map_err(|e| csv_err(path, e))?.len();
    if n == 0 {
        return Err(Error::format(path, "no channel columns"));
    }
    let mut channels = vec![Vec::new(); n];
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for (c, field) in rec.iter().enumerate() {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::format(path, format!("row {}, column {c}: {e}", row + 2)))?;
            channels[c].push(v);
        }
    }
    MultichannelSignal::from_channels(channels, sample_rate).map_err(|e| Error::format(path, e))
}

/// Integer formats clip to `[-1, 1]`.
pub fn write_signal_wav(signal: &MultichannelSignal, path: &Path, format: WavFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Pcm24 => (24, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: signal.n_channels() as u16,
        sample_rate: signal.sample_rate().round() as u32,
        bits_per_sample: bits,
        sample_format,
    };
    let wav_err = |e: hound::Error| Error::format(path, e);
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    let s = signal.samples();
    let full = ((1i64 << (bits - 1)) - 1) as f64;
    for t in 0..signal.len() {
        for c in 0..signal.n_channels() {
            let v = s[[c, t]];
            match format {
                WavFormat::Float32 => w.write_sample(v as f32),
                _ => w.write_sample((v.clamp(-1.0, 1.0) * full).round() as i32),
            }
            .map_err(wav_err)?;
        }
    }
    w.finalize().map_err(wav_err)
}

pub fn read_signal_wav(path: &Path) -> Result<MultichannelSignal> {
    let wav_err = |e: hound::Error| Error::format(path, e);
    let mut r = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = r.spec();
    let n = spec.channels as usize;
    let values: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>(),
        SampleFormat::Int => {
            let full = ((1i64 << (spec.bits_per_sample - 1)) - 1) as f64;
            r.samples::<i32>().map(|s| s.map(|v| v as f64 / full)).collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(wav_err)?;
    if n == 0 || values.len() % n != 0 {
        return Err(Error::format(path, "sample count is not a multiple of the channel count"));
    }
    let len = values.len() / n;
    let samples = Array2::from_shape_fn((n, len), |(c, t)| values[t * n + c]);
    MultichannelSignal::new(samples, spec.sample_rate as f64).map_err(|e| Error::format(path, e))
}

/// Headerless numeric matrix, one CSV row per row.
pub fn write_matrix_csv(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(f64::to_string)).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            rec.iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::format(path, format!("row {}: {e}", i + 1))))
                .collect()
        })
        .collect()
}

/// Numeric table with a header row. Missing values (NaN) are written as
/// empty cells.
pub fn write_table_csv<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header.iter().map(AsRef::as_ref)).map_err(|e| csv_err(path, e))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::format(path, format!("row of {} values for {} columns", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a [`write_table_csv`] file; empty cells come back as NaN.
pub fn read_table_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| match f.trim() {
                "" => Ok(f64::NAN),
                v => v.parse::<f64>().map_err(|e| Error::format(path, format!("row {}: {e}", i + 2))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
