use crate::error::{Error, Result};
use crate::metrics::{bss_eval, sir};
use crate::signal::MultichannelSignal;

/// Mean over sources of the SIR of each current estimate measured against
/// the previous estimates as references. High values mean the last update
/// barely changed the separation. Sources with no energy in either
/// iterate are skipped with a warning.
pub fn convergence_criterion(prev: &MultichannelSignal, curr: &MultichannelSignal) -> Result<f64> {
    let n = prev.n_channels();
    if curr.n_channels() != n || curr.len() != prev.len() {
        return Err(Error::InvalidSignal(format!(
            "iterates are {}×{} and {}×{}",
            n,
            prev.len(),
            curr.n_channels(),
            curr.len()
        )));
    }
    let refs: Vec<Vec<f64>> = (0..n).map(|i| prev.channel_vec(i)).collect();
    let active: Vec<usize> = (0..n)
        .filter(|&i| {
            let ok = prev.energy(i) > 0.0 && curr.energy(i) > 0.0;
            if !ok {
                log::warn!("source {i} has zero energy; excluded from the convergence criterion");
            }
            ok
        })
        .collect();
    if active.is_empty() {
        return Err(Error::DegenerateReference("every source has zero energy".into()));
    }
    // Zero-energy references cannot span anything; drop them from the basis.
    let basis: Vec<Vec<f64>> = active.iter().map(|&i| refs[i].clone()).collect();
    let mut total = 0.0;
    for (k, &i) in active.iter().enumerate() {
        let dec = bss_eval(&curr.channel_vec(i), &basis, k)?;
        total += sir(&dec);
    }
    Ok(total / active.len() as f64)
}
