//! Energy minimization by Sobolev-preconditioned descent, translation
//! normalization, profile diagnostics, and the solitary-wave fixed point.

use serde::{Deserialize, Serialize};

use crate::energy::{clip, eval_energy, translate, EnergyContext, Potential};
use crate::error::{Error, Result};
use crate::grid::{derivative_x, LineInterpolant, RealField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeConfig {
    pub max_iterations: usize,
    /// Stop once the discrete `L²` norm of the projected gradient is at most this.
    pub tol_residual: f64,
    /// Shift in the preconditioner `(σ + μ)^{-1}`.
    pub mu: f64,
    /// Initial step length; halved until the energy does not increase.
    pub step: f64,
    pub clip_each_step: bool,
    /// Keep `u = η` outside `(a, b)`.
    pub interval: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            max_iterations: 5000,
            tol_residual: 1e-8,
            mu: 1.0,
            step: 1.0,
            clip_each_step: true,
            interval: None,
            seed: 0,
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::InvalidParameter("tol_residual must be positive".into()));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParameter("mu must be positive".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidParameter("step must be positive".into()));
        }
        if let Some((a, b)) = self.interval {
            if !(a < -1.0 && b > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "interval ({a}, {b}) must contain [-1, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub energy: f64,
    pub initial_energy: f64,
    /// Largest accepted energy increase (round-off level when descent is healthy).
    pub max_energy_increase: f64,
    pub monotonicity_margin: f64,
    /// `max_x (max_y u - min_y u)`; zero for `d = 1`.
    pub transverse_range: f64,
    pub translation_offset: f64,
    /// Points held at `±1` by an outward gradient at the last iterate; the
    /// residual excludes them.
    pub active_bounds: usize,
    /// `max |u(-X) + 1|` over transverse lines; by helicity this also bounds `|u(X) - 1|`.
    pub truncation_error: f64,
}

/// Mask of grid points strictly inside `(a, b)`, or all points.
fn interior_mask(ctx: &EnergyContext, interval: Option<(f64, f64)>) -> Vec<bool> {
    let n = ctx.grid.n_x();
    let x = ctx.grid.x();
    (0..ctx.grid.len())
        .map(|i| match interval {
            Some((a, b)) => x[i % n] > a && x[i % n] < b,
            None => true,
        })
        .collect()
}

fn project(u: &mut RealField, eta: &RealField, mask: &[bool], clip_values: bool) {
    for ((v, &e), &inside) in u.values.iter_mut().zip(&eta.values).zip(mask) {
        if !inside {
            *v = e;
        } else if clip_values {
            *v = v.clamp(-1.0, 1.0);
        }
    }
}

/// Points sitting on `±1` with the gradient pushing outward; a clipped step
/// cannot move them, so they are held fixed and left out of the residual.
fn bound_active(g: &RealField, u: &RealField, mask: &[bool], clip_values: bool) -> Vec<bool> {
    g.values
        .iter()
        .zip(&u.values)
        .zip(mask)
        .map(|((&gi, &ui), &inside)| inside && clip_values && ((ui >= 1.0 && gi < 0.0) || (ui <= -1.0 && gi > 0.0)))
        .collect()
}

/// Minimize the energy starting from `u0`.
///
/// Each step moves along `-(σ + μ)^{-1}·∇F`, projects (clipping and, in
/// interval mode, resetting `u = η` outside the interval) and halves the step
/// until the energy does not increase beyond round-off. Points held on a bound
/// by an outward gradient are frozen for the step, so the residual is that of
/// the projected gradient.
pub fn minimize_energy(
    ctx: &EnergyContext,
    cfg: &MinimizeConfig,
    u0: &RealField,
) -> Result<(RealField, SolveReport)> {
    cfg.validate()?;
    u0.check_grid(&ctx.grid)?;
    let eta = ctx.eta_field();
    let mask = interior_mask(ctx, cfg.interval);
    let mut u = u0.clone();
    project(&mut u, &eta, &mask, false);
    let mut energy = eval_energy(&u, ctx)?;
    let initial_energy = energy;
    let mut max_increase = f64::NEG_INFINITY;
    let mut residual = f64::INFINITY;
    let mut active = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations <= cfg.max_iterations {
        let mut g = ctx.gradient(&u)?;
        let pinned = bound_active(&g, &u, &mask, cfg.clip_each_step);
        active = pinned.iter().filter(|&&p| p).count();
        for ((v, &p), &inside) in g.values.iter_mut().zip(&pinned).zip(&mask) {
            if p || !inside {
                *v = 0.0;
            }
        }
        residual = g.norm_l2();
        if !residual.is_finite() {
            return Err(Error::NonFinite(format!("residual at iteration {iterations}")));
        }
        if residual <= cfg.tol_residual {
            converged = true;
            break;
        }
        if iterations == cfg.max_iterations {
            break;
        }
        let mut dir = ctx.operator.apply_resolvent(&g, cfg.mu)?;
        for (v, &p) in dir.values.iter_mut().zip(&pinned) {
            if p {
                *v = 0.0;
            }
        }
        let slack = 1e-13 * (1.0 + energy.abs());
        let mut tau = cfg.step;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = u.zip_map(&dir, |a, b| a - tau * b);
            project(&mut trial, &eta, &mask, cfg.clip_each_step);
            let f = eval_energy(&trial, ctx)?;
            if f <= energy + slack {
                accepted = Some((trial, f));
                break;
            }
            tau *= 0.5;
        }
        let Some((trial, f)) = accepted else {
            break;
        };
        max_increase = max_increase.max(f - energy);
        u = trial;
        energy = f;
        iterations += 1;
    }
    let report = SolveReport {
        converged,
        iterations,
        residual,
        energy,
        initial_energy,
        max_energy_increase: max_increase.max(0.0),
        monotonicity_margin: monotonicity_check(&u),
        transverse_range: if ctx.grid.d() > 1 { symmetry_check(&u)? } else { 0.0 },
        translation_offset: 0.0,
        active_bounds: active,
        truncation_error: (0..ctx.grid.lines())
            .map(|l| (u.line(l)[0] + 1.0).abs())
            .fold(0.0, f64::max),
    };
    Ok((u, report))
}

/// Translate `u` so its transverse mean vanishes at `x = 0`; returns the
/// translated field and the offset (minus the location of the zero crossing).
pub fn align_translation(u: &RealField) -> Result<(RealField, f64)> {
    let grid = &u.grid;
    let xl = grid.half_length();
    let x = grid.x();
    let mean = u.transverse_mean();
    let crossing = (0..grid.n_x() - 1)
        .filter(|&j| (mean[j] <= 0.0 && mean[j + 1] > 0.0) || (mean[j] >= 0.0 && mean[j + 1] < 0.0))
        .min_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()))
        .ok_or(Error::NotTransition)?;
    let remainder: Vec<f64> = mean.iter().zip(x).map(|(m, &xi)| m - xi / xl).collect();
    let interp = LineInterpolant::new(grid, &remainder);
    let f = |t: f64| t / xl + interp.eval(t);
    // widen by a cell so round-off in the interpolant cannot lose the bracket
    let h = grid.h_x();
    let (mut a, mut b) = ((x[crossing] - h).max(-xl), (x[crossing + 1] + h).min(xl));
    let fa = f(a);
    if (fa > 0.0) == (f(b) > 0.0) {
        return Err(Error::NotTransition);
    }
    let mut t = 0.5 * (a + b);
    for _ in 0..100 {
        if b - a <= 1e-15 * xl {
            break;
        }
        let ft = f(t);
        if ft == 0.0 {
            break;
        }
        if (ft > 0.0) == (fa > 0.0) {
            a = t;
        } else {
            b = t;
        }
        let df = 1.0 / xl + interp.eval_derivative(t);
        let newton = t - ft / df;
        t = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
    }
    let shifted = translate(u, t)?;
    Ok((shifted, -t))
}

/// Minimum over the grid of the spectral `∂ₓu`.
pub fn monotonicity_check(u: &RealField) -> f64 {
    let xl = u.grid.half_length();
    let n = u.grid.n_x();
    let x = u.grid.x();
    let w = RealField {
        grid: u.grid.clone(),
        values: u.values.iter().enumerate().map(|(i, v)| v - x[i % n] / xl).collect(),
    };
    derivative_x(&w)
        .values
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v + 1.0 / xl))
}

/// `max_x (max_y u - min_y u)`.
pub fn symmetry_check(u: &RealField) -> Result<f64> {
    let grid = &u.grid;
    if grid.d() < 2 {
        return Err(Error::InvalidParameter("symmetry check needs d >= 2".into()));
    }
    let n = grid.n_x();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for l in 0..grid.lines() {
        for (j, &v) in u.line(l).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    Ok(lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolitaryConfig {
    pub max_iterations: usize,
    pub tol_residual: f64,
    /// Initial guess `amplitude·exp(-x²)`.
    pub amplitude: f64,
}

impl Default for SolitaryConfig {
    fn default() -> Self {
        SolitaryConfig {
            max_iterations: 500,
            tol_residual: 1e-8,
            amplitude: 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolitaryReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Petviashvili stabilizing factor; tends to 1 at a fixed point.
    pub stabilizing_factor: f64,
    pub amplitude: f64,
    /// `max |u(x) - u(-x)|`.
    pub evenness_defect: f64,
}

/// Solve `2G·ℒu + u - u² = 0` (the travelling-wave equation with `γ'(u) = u - u²`)
/// for a positive even solitary profile by Petviashvili iteration.
pub fn solve_solitary(ctx: &EnergyContext, cfg: &SolitaryConfig) -> Result<(RealField, SolitaryReport)> {
    if ctx.potential != Potential::BenjaminOnoCubic {
        return Err(Error::InvalidParameter("solitary solve needs the cubic potential".into()));
    }
    if ctx.grid.d() != 1 {
        return Err(Error::InvalidParameter("solitary solve runs on a line (d = 1)".into()));
    }
    let two_g = 2.0 * ctx.shear_modulus;
    let linear = |f: &RealField| -> Result<RealField> {
        let lf = ctx.operator.apply(f)?;
        Ok(f.zip_map(&lf, |a, b| a + two_g * b))
    };
    let inv_table: Vec<f64> = ctx.operator.table.iter().map(|s| 1.0 / (1.0 + two_g * s)).collect();
    let mut u = RealField::from_x_fn(&ctx.grid, |x| cfg.amplitude * (-x * x).exp());
    let mut residual;
    let mut factor = f64::NAN;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let sq = u.map(|v| v * v);
        let lu = linear(&u)?;
        residual = lu.zip_map(&sq, |a, b| a - b).norm_l2();
        if !residual.is_finite() {
            return Err(Error::NonFinite(format!("residual at iteration {iterations}")));
        }
        if u.max_abs() < 1e-8 {
            return Err(Error::TrivialFixedPoint);
        }
        if residual <= cfg.tol_residual {
            converged = true;
            break;
        }
        if iterations == cfg.max_iterations {
            break;
        }
        let den = sq.dot(&u);
        if !(den > 0.0) {
            return Err(Error::TrivialFixedPoint);
        }
        factor = lu.dot(&u) / den;
        let next = crate::grid::apply_multiplier(&sq, &inv_table);
        u = next.map(|v| factor * factor * v);
        iterations += 1;
    }
    let n = ctx.grid.n_x();
    let evenness_defect = (0..n)
        .map(|j| (u.values[j] - u.values[(n - j) % n]).abs())
        .fold(0.0, f64::max);
    let amplitude = u.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((
        u,
        SolitaryReport {
            converged,
            iterations,
            residual,
            stabilizing_factor: factor,
            amplitude,
            evenness_defect,
        },
    ))
}

/// Clip into `[-1, 1]`; re-exported here for callers that build initial data.
pub fn clip_field(u: &RealField) -> RealField {
    clip(u)
}
