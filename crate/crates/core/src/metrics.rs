//! Separation quality: SIR/SDR by orthogonal projection and the Amari index.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::MultichannelSignal;
use crate::trajectory::MixingTrajectory;

/// Decibel values are clipped to `±DB_CLIP`.
pub const DB_CLIP: f64 = 300.0;

/// `estimated = s_target + e_interf + e_artif`.
#[derive(Clone, Debug, PartialEq)]
pub struct BssEvalDecomposition {
    pub s_target: Vec<f64>,
    pub e_interf: Vec<f64>,
    pub e_artif: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn energy(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Decomposes `estimated` against the true sources (rows of `truth`):
/// `s_target` is its projection on `truth[matched]`, `e_interf` the rest of
/// its projection on the span of all sources, `e_artif` the remainder.
pub fn bss_eval(estimated: &[f64], truth: &[Vec<f64>], matched: usize) -> Result<BssEvalDecomposition> {
    let len = estimated.len();
    if matched >= truth.len() {
        return Err(Error::Config(format!("matched index {matched} out of {} sources", truth.len())));
    }
    if truth.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidSignal("estimated and true sources differ in length".into()));
    }
    let reference = &truth[matched];
    let ref_energy = energy(reference);
    if !(ref_energy > 0.0) {
        return Err(Error::DegenerateReference(format!("true source {matched} has zero energy")));
    }
    let gain = dot(estimated, reference) / ref_energy;
    let s_target: Vec<f64> = reference.iter().map(|v| gain * v).collect();

    let n = truth.len();
    let gram = DMatrix::from_fn(n, n, |i, j| dot(&truth[i], &truth[j]));
    let rhs = DVector::from_fn(n, |i, _| dot(&truth[i], estimated));
    let coef = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.clone().lu().solve(&rhs))
        .ok_or_else(|| Error::DegenerateReference("true sources are linearly dependent".into()))?;
    let mut projection = vec![0.0; len];
    for (i, s) in truth.iter().enumerate() {
        for (p, v) in projection.iter_mut().zip(s) {
            *p += coef[i] * v;
        }
    }
    let e_interf = projection.iter().zip(&s_target).map(|(p, t)| p - t).collect();
    let e_artif = estimated.iter().zip(&projection).map(|(e, p)| e - p).collect();
    Ok(BssEvalDecomposition { s_target, e_interf, e_artif })
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        return if num > 0.0 { DB_CLIP } else { -DB_CLIP };
    }
    if num <= 0.0 {
        return -DB_CLIP;
    }
    (10.0 * (num / den).log10()).clamp(-DB_CLIP, DB_CLIP)
}

pub fn sir(dec: &BssEvalDecomposition) -> f64 {
    ratio_db(energy(&dec.s_target), energy(&dec.e_interf))
}

pub fn sdr(dec: &BssEvalDecomposition) -> f64 {
    let distortion: Vec<f64> = dec.e_interf.iter().zip(&dec.e_artif).map(|(a, b)| a + b).collect();
    ratio_db(energy(&dec.s_target), energy(&distortion))
}

/// Amari index of `P = B A`, normalized by `2N(N−1)` so that scaled
/// permutations score 0.
pub fn amari_index(unmixing: &DMatrix<f64>, mixing: &DMatrix<f64>) -> Result<f64> {
    let n = unmixing.nrows();
    if n == 0 || unmixing.ncols() != n || mixing.nrows() != n || mixing.ncols() != n {
        return Err(Error::Config("Amari index needs two square matrices of equal size".into()));
    }
    for (name, m) in [("unmixing", unmixing), ("mixing", mixing)] {
        let det = m.determinant();
        if !(det.abs() > 0.0 && det.is_finite()) {
            return Err(Error::SingularMatrix(format!("{name} matrix has determinant {det}")));
        }
    }
    if n == 1 {
        return Ok(0.0);
    }
    let p = (unmixing * mixing).abs();
    let mut total = 0.0;
    for i in 0..n {
        let row = p.row(i);
        total += row.sum() / row.max() - 1.0;
    }
    for j in 0..n {
        let col = p.column(j);
        total += col.sum() / col.max() - 1.0;
    }
    Ok(total / (2 * n * (n - 1)) as f64)
}

/// Amari index at every frame of two trajectories on the same grid.
pub fn amari_curve(unmixing: &MixingTrajectory, mixing: &MixingTrajectory) -> Result<Vec<f64>> {
    if unmixing.len() != mixing.len() {
        return Err(Error::Config(format!(
            "trajectories have {} and {} frames",
            unmixing.len(),
            mixing.len()
        )));
    }
    unmixing
        .matrices()
        .iter()
        .zip(mixing.matrices())
        .map(|(b, a)| amari_index(b, a))
        .collect()
}

/// Source-averaged SIR/SDR after matching estimates to true sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationScores {
    pub sir_db: f64,
    pub sdr_db: f64,
    pub per_source_sir_db: Vec<f64>,
    pub per_source_sdr_db: Vec<f64>,
    /// `matching[k]` is the estimated channel paired with true source `k`.
    pub matching: Vec<usize>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Pairs estimates with true sources by the permutation maximizing the mean
/// SIR (exhaustive search) and reports source-averaged SIR and SDR.
pub fn separation_scores(estimated: &MultichannelSignal, truth: &MultichannelSignal) -> Result<SeparationScores> {
    let n = truth.n_channels();
    if estimated.n_channels() != n || estimated.len() != truth.len() {
        return Err(Error::InvalidSignal(format!(
            "estimate is {}×{}, truth is {n}×{}",
            estimated.n_channels(),
            estimated.len(),
            truth.len()
        )));
    }
    if n > 8 {
        return Err(Error::Config(format!("exhaustive matching supports at most 8 sources, got {n}")));
    }
    let refs: Vec<Vec<f64>> = (0..n).map(|k| truth.channel_vec(k)).collect();
    let mut table = vec![vec![(0.0, 0.0); n]; n];
    for (e, row) in table.iter_mut().enumerate() {
        let est = estimated.channel_vec(e);
        for (k, cell) in row.iter_mut().enumerate() {
            let dec = bss_eval(&est, &refs, k)?;
            *cell = (sir(&dec), sdr(&dec));
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(n) {
        let score: f64 = (0..n).map(|k| table[perm[k]][k].0).sum();
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, perm));
        }
    }
    let matching = best.expect("at least one permutation").1;
    let per_source_sir_db: Vec<f64> = (0..n).map(|k| table[matching[k]][k].0).collect();
    let per_source_sdr_db: Vec<f64> = (0..n).map(|k| table[matching[k]][k].1).collect();
    Ok(SeparationScores {
        sir_db: per_source_sir_db.iter().sum::<f64>() / n as f64,
        sdr_db: per_source_sdr_db.iter().sum::<f64>() / n as f64,
        per_source_sir_db,
        per_source_sdr_db,
        matching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amari_hand_value() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let v = amari_index(&p, &DMatrix::identity(2, 2)).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn amari_ignores_scale_and_permutation() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.3, -0.4, 1.1, 0.1, 0.2, 0.3, 0.9]);
        let inv = a.clone().try_inverse().unwrap();
        let pd = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, 0.0, 0.0, -0.5, 3.0, 0.0, 0.0]);
        assert!(amari_index(&(pd * inv), &a).unwrap() < 1e-14);
        assert!(matches!(amari_index(&DMatrix::zeros(2, 2), &DMatrix::identity(2, 2)), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn equal_energy_interference_is_zero_db() {
        let s1 = vec![1.0, 0.0, 1.0, 0.0];
        let s2 = vec![0.0, 1.0, 0.0, 1.0];
        let est: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + b).collect();
        let dec = bss_eval(&est, &[s1, s2], 0).unwrap();
        assert!(sir(&dec).abs() < 1e-12);
    }

    #[test]
    fn perfect_estimate_clips() {
        let s1 = vec![1.0, 2.0, -1.0, 0.5];
        let s2 = vec![0.3, -1.0, 0.0, 1.0];
        let dec = bss_eval(&s1, &[s1.clone(), s2], 0).unwrap();
        assert_eq!(sir(&dec), DB_CLIP);
        assert_eq!(sdr(&dec), DB_CLIP);
        assert!(matches!(bss_eval(&s1, &[vec![0.0; 4]], 0), Err(Error::DegenerateReference(_))));
    }

    #[test]
    fn matching_finds_swapped_sources() {
        let a: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..64).map(|i| (i as f64 * 1.1).cos()).collect();
        let truth = MultichannelSignal::from_channels(vec![a.clone(), b.clone()], 1.0).unwrap();
        let est = MultichannelSignal::from_channels(vec![b, a], 1.0).unwrap();
        let s = separation_scores(&est, &truth).unwrap();
        assert_eq!(s.matching, vec![1, 0]);
        assert_eq!(s.sir_db, DB_CLIP);
    }
}
