use std::f64::consts::PI;
use std::sync::OnceLock;

use super::MultichannelSignal;
use crate::error::{Error, Result};

/// Strictly increasing warping function `γ`, stored as knots `(t, γ(t), γ'(t))`
/// in seconds and interpolated by piecewise cubic Hermite polynomials.
///
/// Outside the knot range `γ` is extended linearly with the end slope.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpingFunction {
    times: Vec<f64>,
    values: Vec<f64>,
    derivatives: Vec<f64>,
}

const MONOTONE_PROBES: usize = 8;

impl WarpingFunction {
    pub fn from_knots(times: Vec<f64>, values: Vec<f64>, derivatives: Vec<f64>) -> Result<Self> {
        let n = times.len();
        if n < 2 || values.len() != n || derivatives.len() != n {
            return Err(Error::InvalidWarping(format!(
                "need at least 2 knots with matching lengths, got {n}/{}/{}",
                values.len(),
                derivatives.len()
            )));
        }
        for k in 0..n {
            if !(times[k].is_finite() && values[k].is_finite() && derivatives[k].is_finite()) {
                return Err(Error::InvalidWarping(format!("non-finite knot {k}")));
            }
            if derivatives[k] <= 0.0 {
                return Err(Error::InvalidWarping(format!(
                    "derivative {} at t = {} is not positive",
                    derivatives[k], times[k]
                )));
            }
            if k > 0 && times[k] <= times[k - 1] {
                return Err(Error::InvalidWarping(format!("knot times not increasing at {k}")));
            }
            if k > 0 && values[k] <= values[k - 1] {
                return Err(Error::InvalidWarping(format!(
                    "warping not increasing between t = {} and t = {}",
                    times[k - 1],
                    times[k]
                )));
            }
        }
        let warp = WarpingFunction { times, values, derivatives };
        // The Hermite interpolant can dip between valid knots.
        for k in 0..n - 1 {
            for p in 0..=MONOTONE_PROBES {
                let t = warp.times[k] + (warp.times[k + 1] - warp.times[k]) * p as f64 / MONOTONE_PROBES as f64;
                let d = warp.derivative(t);
                if !(d > 0.0) {
                    return Err(Error::InvalidWarping(format!("interpolated derivative {d} at t = {t}")));
                }
            }
        }
        Ok(warp)
    }

    /// Samples an analytic warping and its derivative on `knots` equispaced
    /// points of `[t0, t1]`.
    pub fn from_fn(
        gamma: impl Fn(f64) -> f64,
        derivative: impl Fn(f64) -> f64,
        t0: f64,
        t1: f64,
        knots: usize,
    ) -> Result<Self> {
        if !(t1 > t0) || knots < 2 {
            return Err(Error::InvalidWarping(format!("bad knot range [{t0}, {t1}] with {knots} knots")));
        }
        let times: Vec<f64> = (0..knots).map(|k| t0 + (t1 - t0) * k as f64 / (knots - 1) as f64).collect();
        let values = times.iter().map(|&t| gamma(t)).collect();
        let derivatives = times.iter().map(|&t| derivative(t)).collect();
        Self::from_knots(times, values, derivatives)
    }

    pub fn identity(t0: f64, t1: f64) -> Result<Self> {
        Self::from_knots(vec![t0, t1], vec![t0, t1], vec![1.0, 1.0])
    }

    /// `γ(t) = factor · t`.
    pub fn dilation(factor: f64, t0: f64, t1: f64) -> Result<Self> {
        Self::from_knots(vec![t0, t1], vec![factor * t0, factor * t1], vec![factor, factor])
    }

    /// `γ'(t) = 1 + a·sin(2πft + φ)` with `γ(0) = offset`.
    pub fn sinusoidal(
        amplitude: f64,
        frequency: f64,
        phase: f64,
        offset: f64,
        t0: f64,
        t1: f64,
        knot_spacing: f64,
    ) -> Result<Self> {
        if amplitude.abs() >= 1.0 {
            return Err(Error::InvalidWarping(format!("|amplitude| = {} must be below 1", amplitude.abs())));
        }
        let knots = (((t1 - t0) / knot_spacing).ceil() as usize).max(1) + 1;
        let w = 2.0 * PI * frequency;
        let gamma = move |t: f64| {
            if w == 0.0 {
                offset + t * (1.0 + amplitude * phase.sin())
            } else {
                offset + t - amplitude / w * ((w * t + phase).cos() - phase.cos())
            }
        };
        let derivative = move |t: f64| 1.0 + amplitude * (w * t + phase).sin();
        Self::from_fn(gamma, derivative, t0, t1, knots)
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&x| x <= t);
        k.saturating_sub(1).min(self.times.len() - 2)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0] + self.derivatives[0] * (t - self.times[0]);
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1] + self.derivatives[n - 1] * (t - self.times[n - 1]);
        }
        let k = self.segment(t);
        let h = self.times[k + 1] - self.times[k];
        let s = (t - self.times[k]) / h;
        // Written around the secant slope so linear pieces are exact.
        let m = (self.values[k + 1] - self.values[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h10 = s3 - 2.0 * s2 + s;
        let h11 = s3 - s2;
        self.values[k]
            + h * (s * m + h10 * (self.derivatives[k] - m) + h11 * (self.derivatives[k + 1] - m))
    }

    /// `γ'(t)`.
    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.derivatives[0];
        }
        if t >= self.times[n - 1] {
            return self.derivatives[n - 1];
        }
        let k = self.segment(t);
        let h = self.times[k + 1] - self.times[k];
        let s = (t - self.times[k]) / h;
        let m = (self.values[k + 1] - self.values[k]) / h;
        let s2 = s * s;
        m + (3.0 * s2 - 4.0 * s + 1.0) * (self.derivatives[k] - m) + (3.0 * s2 - 2.0 * s) * (self.derivatives[k + 1] - m)
    }

    /// `log_q γ'(t)`, the scale shift induced by the warping.
    pub fn theta(&self, t: f64, base: f64) -> f64 {
        self.derivative(t).ln() / base.ln()
    }

    /// `γ⁻¹`, obtained by swapping the knot coordinates.
    pub fn inverse(&self) -> Result<Self> {
        Self::from_knots(
            self.values.clone(),
            self.times.clone(),
            self.derivatives.iter().map(|d| 1.0 / d).collect(),
        )
    }

    /// Adds a constant to `γ`.
    pub fn offset(&self, delta: f64) -> Self {
        WarpingFunction {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v + delta).collect(),
            derivatives: self.derivatives.clone(),
        }
    }

    pub fn knots(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.times, &self.values, &self.derivatives)
    }
}

/// What to do when `γ(t)` leaves the support of the input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Error,
    ZeroPad,
}

const SINC_HALF_WIDTH: usize = 32;
const KAISER_BETA: f64 = 10.0;
const KAISER_TABLE: usize = 4096;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let norm = bessel_i0(KAISER_BETA);
        (0..=KAISER_TABLE + 1)
            .map(|i| {
                let r = (i as f64 / KAISER_TABLE as f64).min(1.0);
                bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
            })
            .collect()
    })
}

fn kaiser(r: f64) -> f64 {
    let r = r.abs();
    if r >= 1.0 {
        return 0.0;
    }
    let table = kaiser_table();
    let pos = r * KAISER_TABLE as f64;
    let i = pos as usize;
    let frac = pos - i as f64;
    table[i] * (1.0 - frac) + table[i + 1] * frac
}

/// Band-limited value of `x` at fractional sample position `u`, zero outside.
pub(crate) fn sinc_interpolate(x: &[f64], u: f64) -> f64 {
    let base = u.floor();
    let frac = u - base;
    let base = base as i64;
    if frac == 0.0 {
        return usize::try_from(base).ok().and_then(|i| x.get(i)).copied().unwrap_or(0.0);
    }
    let s = (PI * frac).sin();
    let half = SINC_HALF_WIDTH as i64;
    let lo = (base - half + 1).max(0);
    let hi = (base + half).min(x.len() as i64 - 1);
    let mut acc = 0.0;
    for m in lo..=hi {
        let d = u - m as f64;
        // sin(π d) = ±sin(π frac) since d − frac is an integer.
        let sign = if (base - m).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let sinc = sign * s / (PI * d);
        acc += x[m as usize] * sinc * kaiser(d / SINC_HALF_WIDTH as f64);
    }
    acc
}

/// `y(t) = sqrt(γ'(t)) · x(γ(t))` on the sample grid of a single-channel `x`.
pub fn apply_time_warp(x: &MultichannelSignal, gamma: &WarpingFunction, boundary: Boundary) -> Result<MultichannelSignal> {
    if x.n_channels() != 1 {
        return Err(Error::InvalidSignal(format!(
            "time warping expects a single channel, got {}",
            x.n_channels()
        )));
    }
    let fs = x.sample_rate();
    let data = x.channel_vec(0);
    let last = (data.len() - 1) as f64;
    let mut out = Vec::with_capacity(data.len());
    for n in 0..data.len() {
        let t = n as f64 / fs;
        let mut u = gamma.eval(t) * fs;
        // Absorb rounding at the exact ends of the support.
        if u < 0.0 && u > -1e-9 {
            u = 0.0;
        } else if u > last && u - last < 1e-9 * last.max(1.0) {
            u = last;
        }
        if (u - u.round()).abs() < 1e-9 {
            u = u.round();
        }
        let d = gamma.derivative(t);
        if !(d > 0.0) {
            return Err(Error::InvalidWarping(format!("γ'({t}) = {d}")));
        }
        if u < 0.0 || u > last {
            match boundary {
                Boundary::ZeroPad => {
                    out.push(0.0);
                    continue;
                }
                Boundary::Error => {
                    return Err(Error::Domain(format!(
                        "γ({t:.6}) = {:.6} s falls outside the input support [0, {:.6}] s",
                        u / fs,
                        last / fs
                    )))
                }
            }
        }
        out.push(d.sqrt() * sinc_interpolate(&data, u));
    }
    MultichannelSignal::single(out, fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse(len: usize, center: f64, width: f64, freq: f64) -> Vec<f64> {
        (0..len)
            .map(|n| {
                let t = n as f64 - center;
                (-t * t / (2.0 * width * width)).exp() * (2.0 * PI * freq * t).cos()
            })
            .collect()
    }

    #[test]
    fn identity_warp_is_exact() {
        let x = MultichannelSignal::single(pulse(512, 256.0, 30.0, 0.1), 100.0).unwrap();
        let g = WarpingFunction::identity(0.0, 5.11).unwrap();
        let y = apply_time_warp(&x, &g, Boundary::Error).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rejects_non_monotone_knots() {
        let e = WarpingFunction::from_knots(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.5], vec![1.0, 1.0, 1.0]);
        assert!(matches!(e, Err(Error::InvalidWarping(_))));
        let e = WarpingFunction::from_knots(vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, -1.0]);
        assert!(matches!(e, Err(Error::InvalidWarping(_))));
        // Valid knot values whose Hermite interpolant overshoots backwards.
        let e = WarpingFunction::from_knots(vec![0.0, 1.0], vec![0.0, 0.01], vec![5.0, 5.0]);
        assert!(matches!(e, Err(Error::InvalidWarping(_))));
    }

    #[test]
    fn out_of_support_is_a_domain_error_unless_padding() {
        let x = MultichannelSignal::single(pulse(256, 128.0, 20.0, 0.1), 1.0).unwrap();
        let g = WarpingFunction::dilation(1.2, 0.0, 255.0).unwrap();
        assert!(matches!(apply_time_warp(&x, &g, Boundary::Error), Err(Error::Domain(_))));
        let y = apply_time_warp(&x, &g, Boundary::ZeroPad).unwrap();
        assert_eq!(y.channel(0)[255], 0.0);
    }

    #[test]
    fn hermite_reproduces_sinusoidal_warp() {
        let g = WarpingFunction::sinusoidal(0.1, 0.05, 0.3, 2.0, 0.0, 100.0, 0.5).unwrap();
        let w = 2.0 * PI * 0.05;
        for i in 0..1000 {
            let t = i as f64 * 0.1;
            let exact = 2.0 + t - 0.1 / w * ((w * t + 0.3).cos() - 0.3f64.cos());
            assert!((g.eval(t) - exact).abs() < 1e-6);
            assert!((g.derivative(t) - (1.0 + 0.1 * (w * t + 0.3).sin())).abs() < 1e-5);
        }
    }

    #[test]
    fn sinc_interpolation_of_band_limited_tone() {
        let x: Vec<f64> = (0..400).map(|n| (2.0 * PI * 0.13 * n as f64).sin()).collect();
        for i in 0..50 {
            let u = 150.0 + i as f64 * 1.37;
            let exact = (2.0 * PI * 0.13 * u).sin();
            assert!((sinc_interpolate(&x, u) - exact).abs() < 1e-5, "u = {u}");
        }
    }
}
