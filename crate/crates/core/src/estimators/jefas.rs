use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    align_sources, convergence_criterion, estimate_spectrum, estimate_theta_ml_in, minimize_in_box, SolverOptions,
    ThetaSearch,
};
use crate::baselines::p_sobi;
use crate::error::{Error, Result};
use crate::likelihood::{FrameObservation, LikelihoodModel, SourceData, SourceModel, UnmixingObjective};
use crate::par::{self, Parallelism};
use crate::signal::{cwt_with, FrameGrid, MultichannelSignal, ScaleGrid, WaveletCoefficientBlock};
use crate::spectral::{FilterBank, QuadratureConfig, SourceSpectrum, WaveletSpec, DEFAULT_COVARIANCE_FLOOR};
use crate::trajectory::{MatrixKind, MixingTrajectory, WarpingTrajectory};

/// Settings of the alternating estimation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub wavelet: WaveletSpec,
    pub scales: ScaleGrid,
    /// Spacing `Δτ` of the frame grid, in samples. `B` is constant on each
    /// frame's interval.
    pub frame_hop: usize,
    /// Spacing of the wavelet-coefficient columns entering the likelihood.
    pub analysis_hop: usize,
    /// Bound on the rate of change of `B` per second (uniform prior width).
    pub eps_b: f64,
    /// Half-width, in frames, of the window over which each source's
    /// separated energy is matched to its model to set the row scales.
    pub gain_window: usize,
    pub theta: ThetaSearch,
    /// Number of analysis columns, centred on a frame, used to estimate its `θ`.
    pub theta_neighborhood: usize,
    /// After the first iteration `θ` is searched within this distance of
    /// its previous value.
    pub theta_local_window: f64,
    /// Warping/spectrum alternations in the first iteration (later
    /// iterations do one, warm-started).
    pub jefas_iterations: usize,
    pub stop_db: f64,
    pub max_iterations: usize,
    pub psobi_segment: usize,
    pub lags: Vec<usize>,
    /// Welch segment length of the spectrum estimates.
    pub spectrum_segment: usize,
    /// Relative diagonal loading of the source covariances.
    pub covariance_floor: f64,
    pub quadrature: QuadratureConfig,
    pub solver: SolverOptions,
    #[serde(default)]
    pub parallelism: Parallelism,
}

impl AlgorithmConfig {
    /// Defaults for a signal of `len` samples: 100 scales with `q = 2^{1/32}`
    /// topping out at 0.2 cycles per sample, 512-sample frames.
    pub fn default_for(len: usize) -> Result<Self> {
        let wavelet = WaveletSpec::log_gaussian(20.0, 0.25)?;
        let scales = ScaleGrid::from_max_frequency(2f64.powf(1.0 / 32.0), 100, 0.2, &wavelet)?;
        Ok(AlgorithmConfig {
            wavelet,
            scales,
            frame_hop: 512,
            analysis_hop: 32,
            eps_b: 0.5,
            gain_window: 8,
            theta: ThetaSearch::default(),
            theta_neighborhood: 16,
            theta_local_window: 1.0,
            jefas_iterations: 3,
            stop_db: 80.0,
            max_iterations: 30,
            psobi_segment: (len / 16).max(40),
            lags: (1..=10).collect(),
            spectrum_segment: 1024,
            covariance_floor: DEFAULT_COVARIANCE_FLOOR,
            quadrature: QuadratureConfig::default(),
            solver: SolverOptions::default(),
            parallelism: Parallelism::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_hop == 0 || self.analysis_hop == 0 || self.frame_hop % self.analysis_hop != 0 {
            return Err(Error::Config(format!(
                "frame_hop ({}) must be a positive multiple of analysis_hop ({})",
                self.frame_hop, self.analysis_hop
            )));
        }
        if !(self.eps_b >= 0.0 && self.eps_b.is_finite()) {
            return Err(Error::Config(format!("eps_b = {} must be finite and non-negative", self.eps_b)));
        }
        self.theta.validate()?;
        self.quadrature.validate()?;
        if self.theta_neighborhood == 0 {
            return Err(Error::Config("theta_neighborhood must be at least 1".into()));
        }
        if !(self.theta_local_window > 0.0) {
            return Err(Error::Config("theta_local_window must be positive".into()));
        }
        if self.jefas_iterations == 0 {
            return Err(Error::Config("jefas_iterations must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.covariance_floor >= 0.0) {
            return Err(Error::Config("covariance_floor must be non-negative".into()));
        }
        if self.spectrum_segment < 4 || self.spectrum_segment % 2 != 0 {
            return Err(Error::Config(format!("spectrum_segment = {} must be even and at least 4", self.spectrum_segment)));
        }
        if self.lags.is_empty() || self.lags.contains(&0) {
            return Err(Error::Config("lags must be non-empty and positive".into()));
        }
        Ok(())
    }
}

/// Everything the alternating estimation produced.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationState {
    pub iterations: usize,
    pub converged: bool,
    pub unmixing: MixingTrajectory,
    /// The p-SOBI trajectory the estimation started from.
    pub initial_unmixing: MixingTrajectory,
    pub warping: WarpingTrajectory,
    pub spectra: Vec<SourceSpectrum>,
    pub sources: MultichannelSignal,
    /// Convergence criterion (dB) after each iteration.
    pub history: Vec<f64>,
    /// Per iteration, how many consecutive-interval source matchings were
    /// not the identity.
    pub alignment_switches: Vec<usize>,
    /// Sources whose warping was found unidentifiable at some frame.
    pub unidentifiable: Vec<bool>,
}

/// Observation coefficients on the analysis columns and their assignment
/// to frames.
struct Layout {
    frames: FrameGrid,
    columns: FrameGrid,
    /// Observation coefficients, column-major: one `N × M_s` matrix each.
    observations: Vec<FrameObservation>,
    frame_of_column: Vec<usize>,
    /// Columns of each frame that are clear of the boundary margins; may
    /// be empty near the signal edges.
    columns_of_frame: Vec<Range<usize>>,
    interior: Range<usize>,
}

impl Layout {
    fn new(block: WaveletCoefficientBlock, frames: FrameGrid) -> Result<Self> {
        let columns = block.frames.clone();
        let n_cols = columns.count;
        let frame_of_column: Vec<usize> = columns.positions().map(|p| frames.frame_of(p)).collect();
        let first = (0..n_cols).find(|&c| block.is_interior(c));
        let interior = match first {
            Some(first) => first..(first..n_cols).take_while(|&c| block.is_interior(c)).last().unwrap_or(first) + 1,
            None => {
                return Err(Error::Config(
                    "signal is too short: every analysis column touches the boundary margin".into(),
                ))
            }
        };
        let mut columns_of_frame = vec![0..0; frames.count];
        for j in 0..frames.count {
            let start = frame_of_column.partition_point(|&f| f < j).max(interior.start);
            let end = frame_of_column.partition_point(|&f| f <= j).min(interior.end);
            columns_of_frame[j] = start..end.max(start);
        }
        let times = columns.times(block.sample_rate);
        let observations = (0..n_cols)
            .map(|c| FrameObservation::new(block.coefficients.index_axis(Axis(2), c).to_owned(), times[c]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Layout { frames, columns, observations, frame_of_column, columns_of_frame, interior })
    }

    /// Source coefficients `B_{τ(c)} w_z(c)` as `N × M_s × n_cols`.
    fn source_coefficients(&self, unmixing: &MixingTrajectory) -> Array3<Complex64> {
        let first = &self.observations[0];
        let (n, m) = (first.n_channels(), first.n_scales());
        let mut out = Array3::zeros((n, m, self.observations.len()));
        for (c, obs) in self.observations.iter().enumerate() {
            let b = unmixing.matrix(self.frame_of_column[c]);
            let w = obs.w_z();
            for i in 0..n {
                for k in 0..m {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..n {
                        acc += w[[a, k]] * b[(i, a)];
                    }
                    out[[i, k, c]] = acc;
                }
            }
        }
        out
    }

    /// Interior columns centred, as far as possible, on frame `j`'s position.
    fn neighborhood(&self, j: usize, size: usize) -> Range<usize> {
        let (lo, hi) = (self.interior.start, self.interior.end);
        let size = size.min(hi - lo);
        let nearest = self.columns.frame_of(self.frames.position(j));
        let start = (nearest + 1).saturating_sub(size.div_ceil(2)).clamp(lo, hi - size);
        start..start + size
    }
}

/// Rescales every source's rows by one factor across all frames so that
/// their mean norm is one, with the largest entry at the first frame positive.
fn normalize_rows(traj: &MixingTrajectory) -> Result<MixingTrajectory> {
    let n = traj.n_sources();
    let mut scale = vec![0.0; n];
    for m in traj.matrices() {
        for (i, s) in scale.iter_mut().enumerate() {
            *s += m.row(i).norm();
        }
    }
    let first = traj.matrix(0);
    let factors: Vec<f64> = (0..n)
        .map(|i| {
            let mean = scale[i] / traj.len() as f64;
            let lead = first.row(i).iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if mean > 0.0 {
                lead.signum() / mean
            } else {
                1.0
            }
        })
        .collect();
    let matrices = traj
        .matrices()
        .iter()
        .map(|m| DMatrix::from_fn(n, n, |i, j| m[(i, j)] * factors[i]))
        .collect();
    MixingTrajectory::new(traj.frames().clone(), MatrixKind::Unmixing, matrices)
}

/// Rescales each row `b_i` so that `b_iᵀ G b_i` equals `target[i]`.
fn match_energy(mut b: DMatrix<f64>, gram: &DMatrix<f64>, target: &[f64]) -> DMatrix<f64> {
    for (i, &t) in target.iter().enumerate() {
        let row = b.row(i).transpose();
        let energy = row.dot(&(gram * &row));
        if energy > 0.0 && t > 0.0 {
            b.row_mut(i).scale_mut((t / energy).sqrt());
        }
    }
    b
}

/// Joint warping/spectrum estimation of one source from its signal `y`
/// and coefficients (`M_s × n_cols`), warm-started from `theta`.
#[allow(clippy::too_many_arguments)]
fn jefas_source(
    config: &AlgorithmConfig,
    layout: &Layout,
    bank: &Arc<FilterBank>,
    y: &MultichannelSignal,
    coefficients: &Array2<Complex64>,
    theta: &mut [f64],
    rounds: usize,
    full_search: bool,
) -> Result<(SourceSpectrum, bool)> {
    let base = config.scales.base();
    let estimate = |theta: &[f64]| estimate_spectrum(y, theta, &layout.frames, base, config.spectrum_segment);
    let mut unidentifiable = false;
    let mut spectrum = estimate(theta)?;
    for round in 0..rounds {
        let model = SourceModel::new(Arc::clone(bank), spectrum.clone(), config.covariance_floor);
        let full = full_search && round == 0;
        let estimates = par::try_map_range(config.parallelism, layout.frames.count, |j| {
            let cols = layout.neighborhood(j, config.theta_neighborhood);
            let rows = coefficients.slice(ndarray::s![.., cols]).reversed_axes();
            let data = SourceData::from_rows(rows);
            let max = config.theta.theta_max;
            let (lo, hi) = if full {
                (-max, max)
            } else {
                let t = theta[j].clamp(-max, max);
                (t - config.theta_local_window, t + config.theta_local_window)
            };
            estimate_theta_ml_in(&model, &data, &config.theta, lo, hi)
        })?;
        unidentifiable |= estimates.iter().any(|e| e.unidentifiable);
        let mean = estimates.iter().map(|e| e.value).sum::<f64>() / estimates.len() as f64;
        for (t, e) in theta.iter_mut().zip(&estimates) {
            *t = e.value - mean;
        }
        spectrum = estimate(theta)?;
    }
    Ok((spectrum, unidentifiable))
}

/// Observations wavelet transform, p-SOBI initialization and the alternating
/// warping/spectrum and MAP unmixing updates until the convergence
/// criterion reaches `stop_db` or `max_iterations` is hit.
pub fn jefas_bss(z: &MultichannelSignal, config: &AlgorithmConfig) -> Result<EstimationState> {
    config.validate()?;
    let frames = FrameGrid::centered(z.len(), config.frame_hop)?;
    let initial = p_sobi(z, config.psobi_segment, &config.lags, &frames, config.parallelism)?;
    jefas_bss_from(z, config, initial)
}

/// [`jefas_bss`] from a given initial unmixing trajectory.
pub fn jefas_bss_from(z: &MultichannelSignal, config: &AlgorithmConfig, initial: MixingTrajectory) -> Result<EstimationState> {
    config.validate()?;
    let n = z.n_channels();
    if n < 2 {
        return Err(Error::Config(format!("separation needs at least 2 channels, got {n}")));
    }
    let frames = FrameGrid::centered(z.len(), config.frame_hop)?;
    if initial.frames() != &frames || initial.n_sources() != n {
        return Err(Error::Config("initial trajectory does not match the frame grid".into()));
    }
    let columns = FrameGrid::centered(z.len(), config.analysis_hop)?;
    let block = cwt_with(z, &config.wavelet, &config.scales, &columns, config.parallelism)?;
    let layout = Layout::new(block, frames.clone())?;
    let bank = Arc::new(FilterBank::new(&config.wavelet, &config.scales, &config.quadrature)?);
    let radius = config.eps_b * config.frame_hop as f64 / z.sample_rate();

    let mut current = initial.clone();
    let mut sources = current.apply(z)?;
    let mut theta = vec![vec![0.0; frames.count]; n];
    let mut spectra = Vec::new();
    let mut history = Vec::new();
    let mut switches = Vec::new();
    let mut unidentifiable = vec![false; n];
    let mut converged = false;

    for k in 1..=config.max_iterations {
        let normalized = normalize_rows(&current)?;
        let coeffs = layout.source_coefficients(&normalized);
        let separated = normalized.apply(z)?;
        let first = k == 1;
        let rounds = if first { config.jefas_iterations } else { 1 };
        let results = par::try_map_range(config.parallelism, n, |i| {
            let mut th = theta[i].clone();
            let c = coeffs.index_axis(Axis(0), i).to_owned();
            let y = separated.select(i)?;
            let (s, flag) = jefas_source(config, &layout, &bank, &y, &c, &mut th, rounds, first)?;
            Ok::<_, Error>((th, s, flag))
        })?;
        spectra.clear();
        for (i, (th, s, flag)) in results.into_iter().enumerate() {
            theta[i] = th;
            spectra.push(s);
            unidentifiable[i] |= flag;
        }

        let model = LikelihoodModel::new(Arc::clone(&bank), spectra.clone(), config.covariance_floor);
        let objectives: Vec<Option<UnmixingObjective>> = par::try_map_range(config.parallelism, frames.count, |j| {
            let cols = layout.columns_of_frame[j].clone();
            if cols.is_empty() {
                return Ok(None);
            }
            let th: Vec<f64> = (0..n).map(|i| theta[i][j]).collect();
            model.unmixing_objective(&layout.observations[cols], &th).map(Some)
        })?;
        // Frames without interior columns take the nearest estimated frame's matrix.
        let targets: Vec<Vec<f64>> = objectives
            .iter()
            .enumerate()
            .map(|(j, o)| match o {
                Some(o) => (0..n).map(|i| o.count() as f64 * model.source(i).expected_energy(theta[i][j])).collect(),
                None => vec![0.0; n],
            })
            .collect();
        let mut estimated: Vec<Option<DMatrix<f64>>> = vec![None; frames.count];
        let mut previous: Option<DMatrix<f64>> = None;
        for (j, objective) in objectives.iter().enumerate() {
            if let Some(objective) = objective {
                let center = previous.clone().unwrap_or_else(|| normalized.matrix(j).clone());
                let est = minimize_in_box(&objective.profiled(), &center, Some(normalized.matrix(j)), radius, &config.solver)?;
                let b = match_energy(est.matrix, objective.gram(), &targets[j]);
                previous = Some(b.clone());
                estimated[j] = Some(b);
            }
        }
        // Final row scales from energies pooled over neighbouring frames.
        let w = config.gain_window;
        for j in 0..frames.count {
            let Some(b) = estimated[j].take() else { continue };
            let range = j.saturating_sub(w)..(j + w + 1).min(frames.count);
            let mut gram = DMatrix::zeros(n, n);
            let mut target = vec![0.0; n];
            for f in range {
                if let Some(o) = &objectives[f] {
                    gram += o.gram();
                    for (t, v) in target.iter_mut().zip(&targets[f]) {
                        *t += v;
                    }
                }
            }
            estimated[j] = Some(match_energy(b, &gram, &target));
        }
        let first_estimated = estimated.iter().position(Option::is_some).ok_or_else(|| {
            Error::Config("signal is too short: no frame has interior analysis columns".into())
        })?;
        let mut last = estimated[first_estimated].clone().expect("checked");
        let matrices: Vec<DMatrix<f64>> = estimated
            .into_iter()
            .map(|m| {
                if let Some(m) = m {
                    last = m;
                }
                last.clone()
            })
            .collect();
        current = MixingTrajectory::new(frames.clone(), MatrixKind::Unmixing, matrices)?;

        let next = current.apply(z)?;
        let mut switched = 0;
        for j in 1..frames.count {
            let (a, b) = (frames.interval(j - 1), frames.interval(j));
            let prev_slices: Vec<Vec<f64>> = (0..n).map(|i| next.channel(i).slice(ndarray::s![a.clone()]).to_vec()).collect();
            let new_slices: Vec<Vec<f64>> = (0..n).map(|i| next.channel(i).slice(ndarray::s![b.clone()]).to_vec()).collect();
            let p: Vec<&[f64]> = prev_slices.iter().map(Vec::as_slice).collect();
            let q: Vec<&[f64]> = new_slices.iter().map(Vec::as_slice).collect();
            let perm = align_sources(&p, &q)?;
            if perm.iter().enumerate().any(|(a, &b)| a != b) {
                switched += 1;
            }
        }
        switches.push(switched);

        let crit = convergence_criterion(&sources, &next)?;
        sources = next;
        history.push(crit);
        log::info!("iteration {k}: convergence criterion {crit:.2} dB");
        if crit >= config.stop_db {
            converged = true;
            break;
        }
    }

    let iterations = history.len();
    if !converged {
        log::warn!("stopped after {iterations} iterations without reaching {} dB", config.stop_db);
    }
    Ok(EstimationState {
        iterations,
        converged,
        unmixing: current,
        initial_unmixing: initial,
        warping: WarpingTrajectory { frames, base: config.scales.base(), theta },
        spectra,
        sources,
        history,
        alignment_switches: switches,
        unidentifiable,
    })
}
