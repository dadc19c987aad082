use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Magnitude spectra of the slices, zero-padded to a common length and
/// normalized to unit L² norm (zero-energy slices stay zero).
fn normalized_spectra(slices: &[&[f64]], fft_len: usize) -> Vec<Vec<f64>> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(fft_len);
    slices
        .iter()
        .map(|s| {
            let mut buf: Vec<Complex64> = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            buf.resize(fft_len, Complex64::new(0.0, 0.0));
            fft.process(&mut buf);
            let mag: Vec<f64> = buf[..fft_len / 2 + 1].iter().map(|c| c.norm()).collect();
            let norm = mag.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                mag.iter().map(|v| v / norm).collect()
            } else {
                mag
            }
        })
        .collect()
}

/// Similarity `sim[a][b]` between new slice `a` and previous slice `b`;
/// `None` when either slice has no energy.
pub fn slice_similarity(prev: &[&[f64]], new: &[&[f64]]) -> Result<Vec<Vec<Option<f64>>>> {
    if prev.len() != new.len() || prev.is_empty() {
        return Err(Error::Config(format!("cannot align {} previous with {} new slices", prev.len(), new.len())));
    }
    if prev.iter().chain(new).any(|s| s.is_empty()) {
        return Err(Error::InvalidSignal("empty slice in source alignment".into()));
    }
    let len = prev.iter().chain(new).map(|s| s.len()).max().unwrap_or(1);
    let fft_len = len.next_power_of_two();
    let sp = normalized_spectra(prev, fft_len);
    let sn = normalized_spectra(new, fft_len);
    let energetic = |v: &Vec<f64>| v.iter().any(|x| *x != 0.0);
    Ok(sn
        .iter()
        .map(|a| {
            sp.iter()
                .map(|b| (energetic(a) && energetic(b)).then(|| a.iter().zip(b).map(|(x, y)| x * y).sum()))
                .collect()
        })
        .collect())
}

/// Preference list of row `r` of `sim`: indices sorted by decreasing
/// similarity, unknown similarities last, ties broken by index.
fn ranking(row: &[Option<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| match (row[a], row[b]) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    idx
}

/// Preference lists of both sides: `new_prefs[a]` ranks previous slices for
/// new slice `a`, `prev_prefs[b]` ranks new slices for previous slice `b`.
pub fn preference_lists(sim: &[Vec<Option<f64>>]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let n = sim.len();
    let new_prefs = sim.iter().map(|row| ranking(row)).collect();
    let prev_prefs = (0..n)
        .map(|b| ranking(&(0..n).map(|a| sim[a][b]).collect::<Vec<_>>()))
        .collect();
    (new_prefs, prev_prefs)
}

/// Gale–Shapley with new slices proposing. Returns `perm` with
/// `perm[b]` = new slice matched to previous slice `b`.
pub fn stable_matching(new_prefs: &[Vec<usize>], prev_prefs: &[Vec<usize>]) -> Vec<usize> {
    let n = new_prefs.len();
    // rank[b][a]: position of new slice a in previous slice b's list.
    let mut rank = vec![vec![0; n]; n];
    for (b, prefs) in prev_prefs.iter().enumerate() {
        for (pos, &a) in prefs.iter().enumerate() {
            rank[b][a] = pos;
        }
    }
    let mut next = vec![0; n];
    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut free: Vec<usize> = (0..n).rev().collect();
    while let Some(a) = free.pop() {
        let b = new_prefs[a][next[a]];
        next[a] += 1;
        match partner[b] {
            None => partner[b] = Some(a),
            Some(cur) if rank[b][a] < rank[b][cur] => {
                partner[b] = Some(a);
                free.push(cur);
            }
            Some(_) => free.push(a),
        }
    }
    partner.into_iter().map(|p| p.expect("complete matching")).collect()
}

/// Whether `perm` (previous → new) has no blocking pair.
pub fn is_stable(perm: &[usize], new_prefs: &[Vec<usize>], prev_prefs: &[Vec<usize>]) -> bool {
    let n = perm.len();
    let mut partner_of_new = vec![0; n];
    for (b, &a) in perm.iter().enumerate() {
        partner_of_new[a] = b;
    }
    let pos = |list: &[usize], x: usize| list.iter().position(|&y| y == x).unwrap_or(usize::MAX);
    for a in 0..n {
        for b in 0..n {
            if perm[b] == a {
                continue;
            }
            let a_prefers = pos(&new_prefs[a], b) < pos(&new_prefs[a], partner_of_new[a]);
            let b_prefers = pos(&prev_prefs[b], a) < pos(&prev_prefs[b], perm[b]);
            if a_prefers && b_prefers {
                return false;
            }
        }
    }
    true
}

/// Matches each previous slice with a new slice by Gale–Shapley on the
/// spectral similarity. Reordering the new sources as `new[perm[0]],
/// new[perm[1]], …` lines them up with the previous ones.
pub fn align_sources(prev: &[&[f64]], new: &[&[f64]]) -> Result<Vec<usize>> {
    let sim = slice_similarity(prev, new)?;
    let (new_prefs, prev_prefs) = preference_lists(&sim);
    Ok(stable_matching(&new_prefs, &prev_prefs))
}
