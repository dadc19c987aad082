use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSpacing {
    Linear,
    Log,
}

/// Sampled two-sided power spectral density on `ξ ≥ 0` (cycles per sample),
/// piecewise-linear between grid points and zero outside the grid. The
/// variance of the process is `2∫S`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSpectrum {
    frequencies: Vec<f64>,
    values: Vec<f64>,
    spacing: GridSpacing,
}

impl SourceSpectrum {
    pub fn new(frequencies: Vec<f64>, values: Vec<f64>, spacing: GridSpacing) -> Result<Self> {
        if frequencies.len() < 2 || frequencies.len() != values.len() {
            return Err(Error::InvalidSpectrum(format!(
                "need at least 2 matching frequency/value points, got {}/{}",
                frequencies.len(),
                values.len()
            )));
        }
        for (i, (&f, &v)) in frequencies.iter().zip(&values).enumerate() {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::InvalidSpectrum(format!("frequency {f} at point {i}")));
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidSpectrum(format!("value {v} at frequency {f}")));
            }
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpectrum("frequency grid not strictly increasing".into()));
        }
        let uniform = |xs: &[f64]| {
            let step = xs[1] - xs[0];
            xs.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= 1e-6 * step.abs())
        };
        let ok = match spacing {
            GridSpacing::Linear => uniform(&frequencies),
            GridSpacing::Log => {
                frequencies[0] > 0.0 && uniform(&frequencies.iter().map(|f| f.ln()).collect::<Vec<_>>())
            }
        };
        if !ok {
            return Err(Error::InvalidSpectrum(format!("frequency grid is not uniform in {spacing:?} spacing")));
        }
        Ok(SourceSpectrum { frequencies, values, spacing })
    }

    /// Constant `level` on `count` linear points of `[0, max_frequency]`.
    pub fn flat(level: f64, max_frequency: f64, count: usize) -> Result<Self> {
        let freqs = linspace(0.0, max_frequency, count);
        Self::new(freqs, vec![level; count], GridSpacing::Linear)
    }

    /// Band-pass shape on `[0, 1/2]`: `level` on `[low, high]` with
    /// raised-cosine skirts of width `rolloff` on each side.
    pub fn band_pass(low: f64, high: f64, rolloff: f64, level: f64, count: usize) -> Result<Self> {
        if !(0.0 <= low && low < high && high <= 0.5 && rolloff >= 0.0 && level >= 0.0) {
            return Err(Error::InvalidSpectrum(format!(
                "band-pass needs 0 ≤ low < high ≤ 1/2 and non-negative rolloff/level, got [{low}, {high}], rolloff {rolloff}, level {level}"
            )));
        }
        let freqs = linspace(0.0, 0.5, count);
        let values = freqs
            .iter()
            .map(|&f| {
                let d = if f < low { low - f } else if f > high { f - high } else { 0.0 };
                if d == 0.0 {
                    level
                } else if d >= rolloff {
                    0.0
                } else {
                    level * (0.5 + 0.5 * (PI * d / rolloff).cos())
                }
            })
            .collect();
        Self::new(freqs, values, GridSpacing::Linear)
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> GridSpacing {
        self.spacing
    }

    /// Piecewise-linear interpolation, zero outside the grid.
    #[inline]
    pub fn eval(&self, f: f64) -> f64 {
        let n = self.frequencies.len();
        if !(f >= self.frequencies[0] && f <= self.frequencies[n - 1]) {
            return 0.0;
        }
        let k = match self.spacing {
            GridSpacing::Linear => {
                let step = (self.frequencies[n - 1] - self.frequencies[0]) / (n - 1) as f64;
                ((f - self.frequencies[0]) / step) as usize
            }
            GridSpacing::Log => {
                let l0 = self.frequencies[0].ln();
                let step = (self.frequencies[n - 1].ln() - l0) / (n - 1) as f64;
                ((f.ln() - l0) / step) as usize
            }
        };
        // The O(1) guess can be off by one from rounding.
        let mut k = k.min(n - 2);
        while k > 0 && self.frequencies[k] > f {
            k -= 1;
        }
        while k + 2 < n && self.frequencies[k + 1] < f {
            k += 1;
        }
        let (f0, f1) = (self.frequencies[k], self.frequencies[k + 1]);
        let t = ((f - f0) / (f1 - f0)).clamp(0.0, 1.0);
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }

    /// `2∫S`, exact for the piecewise-linear interpolant.
    pub fn variance(&self) -> f64 {
        2.0 * self
            .frequencies
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(f, v)| 0.5 * (v[0] + v[1]) * (f[1] - f[0]))
            .sum::<f64>()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn peak_frequency(&self) -> f64 {
        let (i, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        self.frequencies[i]
    }

    /// Same grid, values multiplied by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.frequencies.clone(), self.values.iter().map(|v| v * factor).collect(), self.spacing)
    }

    /// Whether the values vary by less than `rel` of their maximum.
    pub fn is_flat(&self, rel: f64) -> bool {
        let max = self.max_value();
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        max - min <= rel * max.max(f64::MIN_POSITIVE)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
        w.write_record(["frequency", "value"]).map_err(|e| Error::format(path, e))?;
        for (f, v) in self.frequencies.iter().zip(&self.values) {
            w.write_record([f.to_string(), v.to_string()]).map_err(|e| Error::format(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a two-column CSV; the grid spacing is inferred.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
        let (mut freqs, mut values) = (Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(path, e))?;
            if rec.len() != 2 {
                return Err(Error::format(path, format!("row {}: expected 2 columns", i + 2)));
            }
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::format(path, format!("row {}: {e}", i + 2)))
            };
            freqs.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        Self::new(freqs.clone(), values.clone(), GridSpacing::Linear)
            .or_else(|_| Self::new(freqs, values, GridSpacing::Log))
            .map_err(|e| Error::format(path, e))
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a; n];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(SourceSpectrum::new(vec![0.0, 0.1], vec![1.0, -1.0], GridSpacing::Linear).is_err());
        assert!(SourceSpectrum::new(vec![0.1, 0.0], vec![1.0, 1.0], GridSpacing::Linear).is_err());
        assert!(SourceSpectrum::new(vec![0.0, 0.1, 0.3], vec![1.0; 3], GridSpacing::Linear).is_err());
        assert!(SourceSpectrum::new(vec![0.0, 0.1], vec![1.0; 2], GridSpacing::Log).is_err());
        assert!(SourceSpectrum::new(vec![0.1, 0.2, 0.4], vec![1.0; 3], GridSpacing::Log).is_ok());
    }

    #[test]
    fn interpolation_and_variance() {
        let s = SourceSpectrum::new(vec![0.0, 0.25, 0.5], vec![0.0, 2.0, 0.0], GridSpacing::Linear).unwrap();
        assert_eq!(s.eval(0.125), 1.0);
        assert_eq!(s.eval(0.6), 0.0);
        assert!((s.variance() - 1.0).abs() < 1e-15);
        let l = SourceSpectrum::new(vec![0.1, 0.2, 0.4], vec![1.0, 3.0, 1.0], GridSpacing::Log).unwrap();
        assert!((l.eval(0.15) - 2.0).abs() < 1e-12);
        assert!((l.eval(0.3) - 2.0).abs() < 1e-12);
        assert_eq!(l.eval(0.05), 0.0);
        assert_eq!(SourceSpectrum::flat(1.0, 0.5, 11).unwrap().variance(), 1.0);
    }

    #[test]
    fn band_pass_shape() {
        let s = SourceSpectrum::band_pass(0.1, 0.2, 0.02, 1.0, 1001).unwrap();
        assert_eq!(s.eval(0.15), 1.0);
        assert_eq!(s.eval(0.05), 0.0);
        assert!((s.eval(0.21) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = SourceSpectrum::band_pass(0.1, 0.2, 0.02, 1.0, 101).unwrap();
        let p = dir.path().join("s.csv");
        s.write_csv(&p).unwrap();
        assert_eq!(SourceSpectrum::read_csv(&p).unwrap(), s);
    }
}
