use crate::error::{Error, Result};
use crate::likelihood::{SourceData, SourceModel};

/// Grid-then-Brent search for the warping parameter of one source.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaSearch {
    /// Search interval `[−theta_max, theta_max]`, in scale units.
    pub theta_max: f64,
    pub grid_step: f64,
    pub tolerance: f64,
    /// Objective ranges below this fraction of the objective's magnitude
    /// mark the warping as unidentifiable.
    pub flat_tolerance: f64,
}

impl Default for ThetaSearch {
    fn default() -> Self {
        ThetaSearch { theta_max: 8.0, grid_step: 0.25, tolerance: 1e-4, flat_tolerance: 1e-9 }
    }
}

impl ThetaSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_max > 0.0 && self.theta_max.is_finite()) {
            return Err(Error::Config(format!("theta_max = {} must be positive", self.theta_max)));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= self.theta_max) {
            return Err(Error::Config(format!("theta grid step {} must lie in (0, theta_max]", self.grid_step)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("theta tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaEstimate {
    pub value: f64,
    pub objective: f64,
    /// Set when the objective is flat over the grid (e.g. white spectrum);
    /// `value` is then 0.
    pub unidentifiable: bool,
}

/// Brent's method (golden section with parabolic steps) on `[a, b]`.
pub(crate) fn brent_minimize(f: impl Fn(f64) -> Result<f64>, a: f64, b: f64, x0: f64, f0: f64, tol: f64) -> Result<(f64, f64)> {
    const GOLD: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let (mut x, mut w, mut v) = (x0, x0, x0);
    let (mut fx, mut fw, mut fv) = (f0, f0, f0);
    let (mut d, mut e): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let tol1 = tol * 0.5 + 1e-12 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Ok((x, fx))
}

/// Maximum-likelihood `θ` of one source from its coefficient rows.
///
/// The per-source terms of `ℓ` are evaluated on a grid over
/// `[lo, hi] ⊆ [−θ_max, θ_max]` (cached covariances), and the best grid
/// point is refined by Brent's method with exactly built covariances.
pub fn estimate_theta_ml_in(model: &SourceModel, data: &SourceData, search: &ThetaSearch, lo: f64, hi: f64) -> Result<ThetaEstimate> {
    search.validate()?;
    if data.count() == 0 {
        return Err(Error::Config("no coefficient columns for θ estimation".into()));
    }
    let lo = lo.max(-search.theta_max);
    let hi = hi.min(search.theta_max);
    if !(hi >= lo) {
        return Err(Error::Config(format!("empty θ search interval [{lo}, {hi}]")));
    }
    let steps = ((hi - lo) / search.grid_step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect();
    let values = grid
        .iter()
        .map(|&t| Ok(model.objective(&*model.factor(t)?, data)))
        .collect::<Result<Vec<f64>>>()?;
    let (best, &fbest) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if max - fbest <= search.flat_tolerance * scale.max(f64::MIN_POSITIVE) {
        return Ok(ThetaEstimate { value: 0.0, objective: fbest, unidentifiable: true });
    }
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(grid.len() - 1)];
    let x0 = grid[best];
    let exact = |t: f64| Ok(model.objective(&model.exact_factor(t)?, data));
    let f0 = exact(x0)?;
    let (x, fx) = brent_minimize(exact, a, b, x0, f0, search.tolerance)?;
    Ok(ThetaEstimate { value: x, objective: fx, unidentifiable: false })
}

/// [`estimate_theta_ml_in`] over the whole interval `[−θ_max, θ_max]`.
pub fn estimate_theta_ml(model: &SourceModel, data: &SourceData, search: &ThetaSearch) -> Result<ThetaEstimate> {
    estimate_theta_ml_in(model, data, search, -search.theta_max, search.theta_max)
}
