use nalgebra::DMatrix;

use super::sobi;
use crate::error::{Error, Result};
use crate::estimators::align_sources;
use crate::par::{self, Parallelism};
use crate::signal::{FrameGrid, MultichannelSignal};
use crate::trajectory::{MatrixKind, MixingTrajectory};

/// Sample ranges of non-overlapping segments; the last absorbs the remainder.
pub fn segment_ranges(len: usize, segment_len: usize) -> Vec<std::ops::Range<usize>> {
    let count = (len / segment_len).max(1);
    (0..count)
        .map(|k| {
            let start = k * segment_len;
            let end = if k + 1 == count { len } else { start + segment_len };
            start..end
        })
        .collect()
}

fn unmix(b: &DMatrix<f64>, z: &MultichannelSignal, range: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    let s = z.slice(range);
    let n = b.nrows();
    (0..n)
        .map(|i| {
            (0..s.ncols())
                .map(|t| (0..n).map(|c| b[(i, c)] * s[[c, t]]).sum())
                .collect()
        })
        .collect()
}

/// Piecewise SOBI: SOBI on each segment, consecutive segments reordered by
/// Gale–Shapley on the spectra of the separated slices and sign-matched to
/// the previous segment's rows, then held constant over the frames whose
/// centre falls in each segment.
pub fn p_sobi(
    z: &MultichannelSignal,
    segment_len: usize,
    lags: &[usize],
    frames: &FrameGrid,
    exec: Parallelism,
) -> Result<MixingTrajectory> {
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if segment_len < 4 * max_lag || segment_len == 0 {
        return Err(Error::Config(format!(
            "p-SOBI segment of {segment_len} samples is shorter than 4 × the largest lag ({max_lag})"
        )));
    }
    if frames.signal_len != z.len() {
        return Err(Error::Config("frame grid does not match the signal length".into()));
    }
    let ranges = segment_ranges(z.len(), segment_len);
    let raw = par::map_range(exec, ranges.len(), |k| sobi(z.slice(ranges[k].clone()), lags));

    let mut matrices: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(ranges.len());
    for (k, r) in raw.into_iter().enumerate() {
        match r {
            Ok(b) => matrices.push(Some(b)),
            Err(e) => {
                log::warn!("p-SOBI segment {k} failed ({e}); reusing the previous segment's matrix");
                matrices.push(None);
            }
        }
    }
    let first_ok = matrices
        .iter()
        .position(Option::is_some)
        .ok_or_else(|| Error::DegenerateInput("SOBI failed on every p-SOBI segment".into()))?;
    let mut aligned: Vec<DMatrix<f64>> = Vec::with_capacity(ranges.len());
    let first = matrices[first_ok].clone().expect("checked");
    for k in 0..ranges.len() {
        let b = match (&matrices[k], aligned.last()) {
            (None, Some(prev)) => prev.clone(),
            (None, None) => first.clone(),
            (Some(b), None) => b.clone(),
            (Some(b), Some(prev)) => {
                let prev_slices = unmix(prev, z, ranges[k - 1].clone());
                let new_slices = unmix(b, z, ranges[k].clone());
                let p: Vec<&[f64]> = prev_slices.iter().map(Vec::as_slice).collect();
                let q: Vec<&[f64]> = new_slices.iter().map(Vec::as_slice).collect();
                let perm = align_sources(&p, &q)?;
                let mut b = b.select_rows(&perm);
                for i in 0..b.nrows() {
                    if b.row(i).dot(&prev.row(i)) < 0.0 {
                        b.row_mut(i).neg_mut();
                    }
                }
                b
            }
        };
        aligned.push(b);
    }
    let per_frame = frames
        .positions()
        .map(|p| {
            let k = ranges.iter().position(|r| r.contains(&p)).unwrap_or(ranges.len() - 1);
            aligned[k].clone()
        })
        .collect();
    MixingTrajectory::new(frames.clone(), MatrixKind::Unmixing, per_frame)
}
