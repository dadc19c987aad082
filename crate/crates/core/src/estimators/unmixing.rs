use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::{FrameObservation, LikelihoodModel, Objective};

/// Stopping rules of the box-constrained quasi-Newton solver.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once the projected gradient's largest entry falls below
    /// `gradient_tolerance · (1 + |f|)`.
    pub gradient_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iterations: 200, gradient_tolerance: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnmixingEstimate {
    pub matrix: DMatrix<f64>,
    pub value: f64,
    /// Objective at the box centre.
    pub initial_value: f64,
    pub iterations: usize,
}

/// Per-coefficient bounds `|x − center| ≤ radius` that hold exactly in
/// floating point.
fn exact_bounds(center: f64, radius: f64) -> (f64, f64) {
    let mut lo = center - radius;
    while center - lo > radius {
        lo = lo.next_up();
    }
    let mut hi = center + radius;
    while hi - center > radius {
        hi = hi.next_down();
    }
    (lo.min(center), hi.max(center))
}

struct BoxProblem<'a, O> {
    objective: &'a O,
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<O: Objective> BoxProblem<'_, O> {
    fn to_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| x[i * self.n + j])
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.objective.value(&self.to_matrix(x)).unwrap_or(f64::INFINITY)
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let g = self.objective.gradient(&self.to_matrix(x)).ok()?;
        Some(DVector::from_fn(self.n * self.n, |k, _| g[(k / self.n, k % self.n)]))
    }

    fn project(&self, x: &mut DVector<f64>) {
        for k in 0..x.len() {
            x[k] = x[k].clamp(self.lo[k], self.hi[k]);
        }
    }

    /// Coordinates pinned at a bound with the gradient pushing outward.
    fn active(&self, x: &DVector<f64>, g: &DVector<f64>) -> Vec<bool> {
        (0..x.len())
            .map(|k| (x[k] <= self.lo[k] && g[k] > 0.0) || (x[k] >= self.hi[k] && g[k] < 0.0) || self.lo[k] == self.hi[k])
            .collect()
    }

    fn projected_gradient_norm(&self, x: &DVector<f64>, g: &DVector<f64>) -> f64 {
        let active = self.active(x, g);
        (0..x.len()).filter(|&k| !active[k]).map(|k| g[k].abs()).fold(0.0, f64::max)
    }

    /// One pass of exact-ish line minimization along each coordinate.
    fn coordinate_pass(&self, x: &mut DVector<f64>, fx: &mut f64) -> bool {
        let mut improved = false;
        for k in 0..x.len() {
            if self.lo[k] == self.hi[k] {
                continue;
            }
            let f = |v: f64| {
                let mut y = x.clone();
                y[k] = v;
                self.value(&y)
            };
            let (v, fv) = golden_section(f, self.lo[k], self.hi[k], 1e-12 * (1.0 + x[k].abs()));
            if fv < *fx {
                x[k] = v;
                *fx = fv;
                improved = true;
            }
        }
        improved
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimizes `objective` over the box `‖B − center‖_∞ ≤ radius`, starting
/// from `start` (projected into the box) or the centre, whichever is better.
///
/// Only decreasing steps are accepted, so the result is never worse than
/// the centre, and every coefficient satisfies the box exactly.
pub fn minimize_in_box<O: Objective>(
    objective: &O,
    center: &DMatrix<f64>,
    start: Option<&DMatrix<f64>>,
    radius: f64,
    options: &SolverOptions,
) -> Result<UnmixingEstimate> {
    let n = center.nrows();
    if center.ncols() != n || n != objective.n_sources() {
        return Err(Error::Config(format!("unmixing matrix must be {0}×{0}", objective.n_sources())));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::Config(format!("box radius {radius} must be finite and non-negative")));
    }
    let initial_value = objective.value(center)?;
    if radius == 0.0 {
        return Ok(UnmixingEstimate { matrix: center.clone(), value: initial_value, initial_value, iterations: 0 });
    }
    let c = DVector::from_fn(n * n, |k, _| center[(k / n, k % n)]);
    let (lo, hi): (Vec<f64>, Vec<f64>) = c.iter().map(|&v| exact_bounds(v, radius)).unzip();
    let problem = BoxProblem { objective, n, lo, hi };

    let mut x = c.clone();
    let mut fx = initial_value;
    if let Some(s) = start {
        let mut y = DVector::from_fn(n * n, |k, _| s[(k / n, k % n)]);
        problem.project(&mut y);
        let fy = problem.value(&y);
        if fy < fx {
            x = y;
            fx = fy;
        }
    }

    let dim = n * n;
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut g = problem
        .gradient(&x)
        .ok_or_else(|| Error::SingularUnmixing("gradient undefined at the starting point".into()))?;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        if problem.projected_gradient_norm(&x, &g) <= options.gradient_tolerance * (1.0 + fx.abs()) {
            break;
        }
        let active = problem.active(&x, &g);
        let mut d = -(&h * &g);
        for k in 0..dim {
            if active[k] {
                d[k] = 0.0;
            }
        }
        if d.dot(&g) >= 0.0 {
            h = DMatrix::identity(dim, dim);
            d = -g.clone();
            for k in 0..dim {
                if active[k] {
                    d[k] = 0.0;
                }
            }
        }
        // Projected Armijo backtracking.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mut y = &x + &d * step;
            problem.project(&mut y);
            let fy = problem.value(&y);
            let decrease = g.dot(&(&y - &x));
            if fy < fx && fy <= fx + 1e-4 * decrease {
                accepted = Some((y, fy));
                break;
            }
            step *= 0.5;
        }
        let (y, fy) = match accepted {
            Some(v) => v,
            None => {
                let mut y = x.clone();
                let mut fy = fx;
                if !problem.coordinate_pass(&mut y, &mut fy) {
                    break;
                }
                h = DMatrix::identity(dim, dim);
                (y, fy)
            }
        };
        let gy = match problem.gradient(&y) {
            Some(v) => v,
            None => break,
        };
        let s = &y - &x;
        let yv = &gy - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(dim, dim);
            let left = &eye - &s * yv.transpose() * rho;
            let right = &eye - &yv * s.transpose() * rho;
            h = &left * &h * &right + &s * s.transpose() * rho;
        }
        let progress = fx - fy;
        x = y;
        fx = fy;
        g = gy;
        if progress <= 1e-15 * (1.0 + fx.abs()) {
            break;
        }
    }
    Ok(UnmixingEstimate { matrix: problem.to_matrix(&x), value: fx, initial_value, iterations })
}

/// MAP update of one frame's unmixing matrix under the uniform prior of
/// half-width `eps_b · delta_tau` centred on `b_prev`.
pub fn estimate_unmixing_frame(
    model: &LikelihoodModel,
    observations: &[FrameObservation],
    theta: &[f64],
    b_prev: &DMatrix<f64>,
    eps_b: f64,
    delta_tau: f64,
    options: &SolverOptions,
) -> Result<UnmixingEstimate> {
    if !(eps_b >= 0.0) {
        return Err(Error::Config(format!("ε_B = {eps_b} must be non-negative")));
    }
    let objective = model.unmixing_objective(observations, theta)?;
    minimize_in_box(&objective, b_prev, None, eps_b * delta_tau, options)
}
