//! Potentials, the reference transition profile, the energy functional and its
//! gradient, rearrangement and translation.
//!
//! Layers live on the box `[-X, X)` as helical fields: `u(x + 2X) = u(x) + 2`.
//! The perturbation `v = u - η` is then periodic, and the nonlocal operator
//! acting on the extended profile `η` uses the periodic Hilbert kernel
//! `(π/2X)·cot(πt/2X)`. With this choice the discrete energy is exactly
//! invariant under translations of the layer.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{shift_x, Grid, RealField};
use crate::kernel::{extract_kernel, lag_index, BRUTE_FORCE_LIMIT};
use crate::quadrature::GaussLegendre;
use crate::symbols::{reduced_1d_constant, symbol_bounds, Operator, SymbolSpec};

/// Nonlinear potential `γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// `(cos(πu) + 1)/π²`.
    Cosine,
    /// `(1 - u²)²`.
    Quartic,
    /// `u²/2 - u³/3`.
    BenjaminOnoCubic,
    /// `Σ cᵢ uⁱ`, validated as a double well.
    Polynomial(Vec<f64>),
}

/// `(γ, γ', γ'')` at `u`.
pub fn eval_potential(p: &Potential, u: f64) -> (f64, f64, f64) {
    match p {
        Potential::Cosine => {
            let (s, c) = (PI * u).sin_cos();
            ((c + 1.0) / (PI * PI), -s / PI, -c)
        }
        Potential::Quartic => {
            let w = 1.0 - u * u;
            (w * w, -4.0 * u * w, 12.0 * u * u - 4.0)
        }
        Potential::BenjaminOnoCubic => (0.5 * u * u - u * u * u / 3.0, u - u * u, 1.0 - 2.0 * u),
        Potential::Polynomial(c) => {
            let (mut g, mut g1, mut g2) = (0.0, 0.0, 0.0);
            for &ci in c.iter().rev() {
                g2 = g2 * u + g1 * 2.0;
                g1 = g1 * u + g;
                g = g * u + ci;
            }
            (g, g1, g2)
        }
    }
}

impl Potential {
    /// Polynomial potential from coefficients `c₀, c₁, ...`, checked to be a
    /// double well: zero at ±1, positive in between, positive curvature at ±1.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        let p = Potential::Polynomial(coeffs);
        let scale = (0..=20)
            .map(|i| eval_potential(&p, -1.0 + 0.1 * i as f64).0.abs())
            .fold(1.0, f64::max);
        for u in [-1.0, 1.0] {
            let (g, _, g2) = eval_potential(&p, u);
            if g.abs() > 1e-12 * scale {
                return Err(Error::InvalidPotential(format!("γ({u}) = {g}, expected 0")));
            }
            if !(g2 > 0.0) {
                return Err(Error::InvalidPotential(format!("γ''({u}) = {g2} is not positive")));
            }
        }
        for i in 1..1000 {
            let u = -1.0 + 2.0 * i as f64 / 1000.0;
            if !(eval_potential(&p, u).0 > 0.0) {
                return Err(Error::InvalidPotential(format!("γ({u}) is not positive")));
            }
        }
        Ok(p)
    }

    pub fn eval(&self, u: f64) -> (f64, f64, f64) {
        eval_potential(self, u)
    }

    pub fn is_double_well(&self) -> bool {
        !matches!(self, Potential::BenjaminOnoCubic)
    }

    /// `min(γ''(-1), γ''(1))` for double wells.
    pub fn well_curvature(&self) -> Option<f64> {
        self.is_double_well()
            .then(|| self.eval(-1.0).2.min(self.eval(1.0).2))
    }
}

/// Quintic smoothstep `η(x) = x(15 - 10x² + 3x⁴)/8` on `[-1, 1]`, `±1` outside.
#[derive(Clone, Debug)]
pub struct ReferenceProfile {
    rule: GaussLegendre,
}

impl Default for ReferenceProfile {
    fn default() -> Self {
        ReferenceProfile {
            rule: GaussLegendre::new(48),
        }
    }
}

fn eta_poly_prime(x: f64) -> f64 {
    let w = 1.0 - x * x;
    1.875 * w * w
}

/// `z·cot(z)`, continuous at 0.
fn z_cot_z(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 3.0 - z2 * z2 / 45.0
    } else {
        z / z.tan()
    }
}

impl ReferenceProfile {
    pub fn eta(&self, x: f64) -> f64 {
        let y = x.clamp(-1.0, 1.0);
        y * (15.0 - 10.0 * y * y + 3.0 * y.powi(4)) / 8.0
    }

    pub fn eta_prime(&self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            0.0
        } else {
            eta_poly_prime(x)
        }
    }

    /// `Λη(x) = (1/π) PV∫ η'(s)·(π/2X)cot(π(x-s)/2X) ds` for the helical
    /// extension of `η` with period cell `[-X, X)`, by quadrature.
    ///
    /// Near the transition the constant `P(x)` (the polynomial `η'` continued past
    /// ±1) is subtracted so the remaining integrand is analytic; far from it the
    /// integrand is already analytic on `[-1, 1]`.
    pub fn periodic_trace(&self, x: f64, half_length: f64) -> f64 {
        let a = PI / (2.0 * half_length);
        if x.abs() >= 2.0 {
            let f = |s: f64| eta_poly_prime(s) * a / (a * (x - s)).tan();
            return self.rule.integrate(-1.0, 1.0, f) / PI;
        }
        let px = eta_poly_prime(x);
        let log_term = if px == 0.0 {
            0.0
        } else {
            px * ((a * (x + 1.0)).sin().abs().ln() - (a * (x - 1.0)).sin().abs().ln())
        };
        let f = |s: f64| 1.875 * (x + s) * (2.0 - s * s - x * x) * z_cot_z(a * (x - s));
        (log_term + self.rule.integrate(-1.0, 1.0, f)) / PI
    }

    /// Half-Laplacian of `η` on the whole line, `(1/π) PV∫ η'(s)/(x-s) ds`.
    pub fn line_trace(&self, x: f64) -> f64 {
        // ∫_{-1}^{1} P(s)/(x-s) ds in closed form with P(s) = (15/8)(1-s²)².
        let px = eta_poly_prime(x);
        let log_term = if px == 0.0 {
            0.0
        } else {
            px * ((x + 1.0).abs().ln() - (x - 1.0).abs().ln())
        };
        // (P(s) - P(x))/(x - s) = (15/8)(x + s)(2 - s² - x²), integrated exactly.
        let poly = 1.875 * (2.0 * x * (2.0 - x * x) - 2.0 * x / 3.0);
        (log_term + poly) / PI
    }
}

/// Half-width `δ = 2G·c_ℒ` of the layer for the cosine potential.
pub fn layer_width(shear_modulus: f64, c_l: f64) -> f64 {
    2.0 * shear_modulus * c_l
}

/// `(2/π)·arctan(x/δ)`, the layer on the whole line.
pub fn arctan_layer(x: f64, delta: f64) -> f64 {
    2.0 / PI * (x / delta).atan()
}

/// Exact cosine-potential layer for the helical box of half-length `X`:
/// `(2/π)·arctan(tan(πx/2X)·coth b)` with `sinh 2b = πδ/X`, continued by
/// `u(x + 2X) = u(x) + 2`.
pub fn periodic_layer(x: f64, half_length: f64, delta: f64) -> f64 {
    let period = 2.0 * half_length;
    let turns = ((x + half_length) / period).floor();
    let r = x - turns * period;
    let b = 0.5 * (PI * delta / half_length).asinh();
    let th = PI * r / period;
    2.0 / PI * (th.sin() * b.cosh()).atan2(th.cos() * b.sinh()) + 2.0 * turns
}

/// Energy split into its three contributions.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyParts {
    /// `½⟨v, ℒv⟩`.
    pub quadratic: f64,
    /// `c_ℒ⟨v, Λη⟩`.
    pub cross: f64,
    /// `(1/2G) ∫ γ(u)`.
    pub potential: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.quadratic + self.cross + self.potential
    }
}

/// Everything needed to evaluate the energy on one grid.
#[derive(Clone, Debug)]
pub struct EnergyContext {
    pub grid: Grid,
    pub symbol: SymbolSpec,
    pub potential: Potential,
    pub profile: ReferenceProfile,
    pub shear_modulus: f64,
    pub c_l: f64,
    pub operator: Operator,
    eta: Vec<f64>,
    drive: Vec<f64>,
}

impl EnergyContext {
    pub fn new(grid: &Grid, symbol: SymbolSpec, potential: Potential, shear_modulus: f64) -> Result<Self> {
        if !(shear_modulus > 0.0 && shear_modulus.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "shear modulus must be positive, got {shear_modulus}"
            )));
        }
        symbol_bounds(&symbol, grid)?;
        let c_l = reduced_1d_constant(&symbol)?;
        let operator = Operator::new(&symbol, grid)?;
        let profile = ReferenceProfile::default();
        let xl = grid.half_length();
        let eta: Vec<f64> = grid.x().iter().map(|&x| profile.eta(x)).collect();
        // ℒη for the helical extension equals ℒ(η - x/X), a periodic field. Using the
        // same discrete operator as for v keeps ½⟨v,ℒv⟩ + ⟨v,ℒη⟩ equal to
        // ½⟨w,ℒw⟩ - ½⟨w_η,ℒw_η⟩ with w = u - x/X, which is what makes the discrete
        // energy translation invariant.
        let line = crate::grid::build_grid(1, xl, grid.n_x(), &[])?;
        let w_eta = RealField {
            values: grid.x().iter().zip(&eta).map(|(&x, &e)| e - x / xl).collect(),
            grid: line.clone(),
        };
        let half = Operator::new(&SymbolSpec::half_laplacian(1), &line)?;
        let drive = half.apply(&w_eta)?.values.iter().map(|v| c_l * v).collect();
        Ok(EnergyContext {
            grid: grid.clone(),
            symbol,
            potential,
            profile,
            shear_modulus,
            c_l,
            operator,
            eta,
            drive,
        })
    }

    /// `η` sampled on the grid.
    pub fn eta_field(&self) -> RealField {
        self.broadcast(&self.eta)
    }

    /// `ℒη = c_ℒ·Λη` sampled on the grid (spectral evaluation on the periodic remainder).
    pub fn drive_field(&self) -> RealField {
        self.broadcast(&self.drive)
    }

    fn broadcast(&self, column: &[f64]) -> RealField {
        let n = self.grid.n_x();
        RealField {
            grid: self.grid.clone(),
            values: (0..self.grid.len()).map(|i| column[i % n]).collect(),
        }
    }

    /// `v = u - η`.
    pub fn perturbation(&self, u: &RealField) -> Result<RealField> {
        u.check_grid(&self.grid)?;
        let n = self.grid.n_x();
        Ok(RealField {
            grid: self.grid.clone(),
            values: u
                .values
                .iter()
                .enumerate()
                .map(|(i, &x)| x - self.eta[i % n])
                .collect(),
        })
    }

    fn check_finite(u: &RealField) -> Result<()> {
        if let Some(i) = u.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("u[{i}] = {}", u.values[i])));
        }
        Ok(())
    }

    fn cross_and_potential(&self, u: &RealField, v: &RealField) -> (f64, f64) {
        let n = self.grid.n_x();
        let cv = self.grid.cell_volume();
        let cross: f64 = v
            .values
            .iter()
            .enumerate()
            .map(|(i, &vi)| vi * self.drive[i % n])
            .sum::<f64>()
            * cv;
        let pot: f64 = u.values.iter().map(|&x| self.potential.eval(x).0).sum::<f64>() * cv
            / (2.0 * self.shear_modulus);
        (cross, pot)
    }

    pub fn energy_parts(&self, u: &RealField) -> Result<EnergyParts> {
        Self::check_finite(u)?;
        let v = self.perturbation(u)?;
        let lv = self.operator.apply(&v)?;
        let (cross, potential) = self.cross_and_potential(u, &v);
        Ok(EnergyParts {
            quadratic: 0.5 * v.dot(&lv),
            cross,
            potential,
        })
    }

    /// `ℒv + c_ℒΛη + γ'(u)/(2G)`.
    pub fn gradient(&self, u: &RealField) -> Result<RealField> {
        Self::check_finite(u)?;
        let v = self.perturbation(u)?;
        let mut g = self.operator.apply(&v)?;
        let n = self.grid.n_x();
        let inv = 1.0 / (2.0 * self.shear_modulus);
        for (i, gi) in g.values.iter_mut().enumerate() {
            *gi += self.drive[i % n] + self.potential.eval(u.values[i]).1 * inv;
        }
        Ok(g)
    }

    /// Energy with the quadratic part as the double sum `¼ΣΣ|v(w)-v(w')|²K`.
    pub fn energy_bruteforce(&self, u: &RealField) -> Result<EnergyParts> {
        Self::check_finite(u)?;
        let grid = &self.grid;
        let n = grid.len();
        if n > BRUTE_FORCE_LIMIT {
            return Err(Error::TooLarge(n, BRUTE_FORCE_LIMIT));
        }
        let kernel = extract_kernel(&self.symbol, grid)?;
        let v = self.perturbation(u)?;
        let multis: Vec<[usize; 3]> = (0..n).map(|i| grid.unflatten(i)).collect();
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|p| {
                let mut acc = 0.0;
                for q in 0..n {
                    if q != p {
                        let dv = v.values[p] - v.values[q];
                        acc += dv * dv * (-kernel.values[lag_index(grid, multis[p], multis[q])]);
                    }
                }
                acc
            })
            .collect();
        let cv = grid.cell_volume();
        let quadratic = 0.25 * rows.iter().sum::<f64>() * cv * cv;
        let (cross, potential) = self.cross_and_potential(u, &v);
        Ok(EnergyParts {
            quadratic,
            cross,
            potential,
        })
    }
}

/// `F(u) = ½⟨v, ℒv⟩ + c_ℒ⟨v, Λη⟩ + (1/2G)∫γ(u)` with `v = u - η`.
pub fn eval_energy(u: &RealField, ctx: &EnergyContext) -> Result<f64> {
    ctx.energy_parts(u).map(|p| p.total())
}

/// Direct double-sum evaluation of [`eval_energy`] (small grids only).
pub fn eval_energy_bruteforce(u: &RealField, ctx: &EnergyContext) -> Result<f64> {
    ctx.energy_bruteforce(u).map(|p| p.total())
}

/// `ℒu + γ'(u)/(2G)`.
pub fn eval_gradient(u: &RealField, ctx: &EnergyContext) -> Result<RealField> {
    ctx.gradient(u)
}

/// Pointwise `(min(u, v), max(u, v))`.
pub fn rearrange_pair(u: &RealField, v: &RealField) -> Result<(RealField, RealField)> {
    v.check_grid(&u.grid)?;
    Ok((u.zip_map(v, f64::min), u.zip_map(v, f64::max)))
}

/// Both sides of `ab + AB - a₁b₁ - a₂b₂ = (a₁-a₂)₊(b₁-b₂)₋ + (a₁-a₂)₋(b₁-b₂)₊`
/// with `a, A` the min and max of `a₁, a₂` and `b, B` those of `b₁, b₂`.
/// Integer arithmetic, so rationals over a common denominator check exactly.
pub fn rearrangement_identity(a1: i64, a2: i64, b1: i64, b2: i64) -> (i64, i64) {
    let (a, big_a) = (a1.min(a2), a1.max(a2));
    let (b, big_b) = (b1.min(b2), b1.max(b2));
    let lhs = a * b + big_a * big_b - a1 * b1 - a2 * b2;
    let pos = |t: i64| t.max(0);
    let neg = |t: i64| (-t).max(0);
    let rhs = pos(a1 - a2) * neg(b1 - b2) + neg(a1 - a2) * pos(b1 - b2);
    (lhs, rhs)
}

#[derive(Clone, Debug, Serialize)]
pub struct RearrangementSummary {
    pub trials: usize,
    /// Smallest `[F(u) + F(v)] - [F(m) + F(M)]` over all trials.
    pub worst_slack: f64,
    /// The same, divided by `max(1, |F(u) + F(v)|)`.
    pub worst_relative_slack: f64,
    /// Trials where the rearranged pair has strictly lower energy.
    pub strict_decreases: usize,
    pub passed: bool,
}

/// Reference profile plus a few random Gaussian bumps (with random
/// transverse modes for `d ≥ 2`), clipped into `[-1, 1]`.
pub fn random_layer_field(ctx: &EnergyContext, rng: &mut impl Rng) -> RealField {
    let xl = ctx.grid.half_length();
    let bumps: Vec<(f64, f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.25 * xl..0.25 * xl),
                rng.random_range(0.5..3.0),
                rng.random_range(0.0..3.0_f64).floor(),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let profile = &ctx.profile;
    clip(&RealField::from_fn(&ctx.grid, |x, y| {
        let mut v = profile.eta(x);
        for &(c, m, w, k, phase) in &bumps {
            let t = y.first().map_or(1.0, |&y0| (std::f64::consts::TAU * k * y0 + phase).cos());
            v += c * t * (-(x - m) * (x - m) / (w * w)).exp();
        }
        v
    }))
}

/// Check `F(min(u, v)) + F(max(u, v)) ≤ F(u) + F(v)` on random pairs; a trial
/// passes when the slack is at least `-tol·max(1, |F(u) + F(v)|)`.
pub fn rearrangement_trials(ctx: &EnergyContext, trials: usize, seed: u64, tol: f64) -> Result<RearrangementSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut worst_rel = f64::INFINITY;
    let mut strict = 0;
    for _ in 0..trials {
        let u = random_layer_field(ctx, &mut rng);
        let v = random_layer_field(ctx, &mut rng);
        let (m, big) = rearrange_pair(&u, &v)?;
        let before = eval_energy(&u, ctx)? + eval_energy(&v, ctx)?;
        let after = eval_energy(&m, ctx)? + eval_energy(&big, ctx)?;
        let slack = before - after;
        if slack > 0.0 {
            strict += 1;
        }
        worst = worst.min(slack);
        worst_rel = worst_rel.min(slack / before.abs().max(1.0));
    }
    Ok(RearrangementSummary {
        trials,
        worst_slack: worst,
        worst_relative_slack: worst_rel,
        strict_decreases: strict,
        passed: trials > 0 && worst_rel >= -tol,
    })
}

/// Project every value into `[-1, 1]`.
pub fn clip(u: &RealField) -> RealField {
    u.map(|x| x.clamp(-1.0, 1.0))
}

/// `u(· + c)` for a helical layer field: the linear part `x/X` is shifted
/// exactly and the periodic remainder by spectral phase shift.
pub fn translate(u: &RealField, c: f64) -> Result<RealField> {
    let xl = u.grid.half_length();
    if c.abs() > 0.25 * xl {
        return Err(Error::ShiftTooLarge(c, 0.25 * xl));
    }
    if c == 0.0 {
        return Ok(u.clone());
    }
    let n = u.grid.n_x();
    let x = u.grid.x();
    let w = RealField {
        grid: u.grid.clone(),
        values: u
            .values
            .iter()
            .enumerate()
            .map(|(i, &val)| val - x[i % n] / xl)
            .collect(),
    };
    let mut out = shift_x(&w, c);
    for (i, val) in out.values.iter_mut().enumerate() {
        *val += (x[i % n] + c) / xl;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, forward_transform};
    use crate::symbols::apply_operator;
    use proptest::prelude::*;

    fn context(d: usize, xl: f64, n_x: usize, n_y: &[usize], nu: f64, pot: Potential) -> EnergyContext {
        let grid = build_grid(d, xl, n_x, n_y).unwrap();
        EnergyContext::new(&grid, SymbolSpec::pn_reduced(nu, d).unwrap(), pot, 1.0).unwrap()
    }

    fn layer_field(ctx: &EnergyContext, shift: f64) -> RealField {
        let delta = layer_width(ctx.shear_modulus, ctx.c_l);
        let xl = ctx.grid.half_length();
        RealField::from_x_fn(&ctx.grid, |x| periodic_layer(x + shift, xl, delta))
    }

    #[test]
    fn cosine_values() {
        let (g, g1, g2) = eval_potential(&Potential::Cosine, 1.0);
        assert!(g.abs() < 1e-16 && g1.abs() < 1e-16 && (g2 - 1.0).abs() < 1e-15);
        let (g, g1, g2) = eval_potential(&Potential::Cosine, -1.0);
        assert!(g.abs() < 1e-16 && g1.abs() < 1e-16 && (g2 - 1.0).abs() < 1e-15);
        let (g, g1, g2) = eval_potential(&Potential::Cosine, 0.0);
        assert!((g - 2.0 / (PI * PI)).abs() < 1e-16 && g1 == 0.0 && g2 == -1.0);
        assert_eq!(eval_potential(&Potential::BenjaminOnoCubic, 0.0), (0.0, 0.0, 1.0));
        assert_eq!(Potential::Quartic.eval(1.0).2, 8.0);
        assert_eq!(Potential::Quartic.eval(-1.0).2, 8.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let pots = [
            Potential::Cosine,
            Potential::Quartic,
            Potential::BenjaminOnoCubic,
            Potential::polynomial(vec![1.0, 0.0, -2.0, 0.0, 1.0]).unwrap(),
        ];
        let e = 1e-5;
        for p in &pots {
            for i in 0..=60 {
                let u = -1.5 + 0.05 * i as f64;
                let (_, g1, g2) = p.eval(u);
                let fd1 = (p.eval(u + e).0 - p.eval(u - e).0) / (2.0 * e);
                let fd2 = (p.eval(u + e).1 - p.eval(u - e).1) / (2.0 * e);
                assert!((fd1 - g1).abs() < 1e-7 * (1.0 + g1.abs()), "{p:?} at {u}");
                assert!((fd2 - g2).abs() < 1e-7 * (1.0 + g2.abs()), "{p:?} at {u}");
            }
        }
    }

    #[test]
    fn polynomial_well_validation() {
        let p = Potential::polynomial(vec![1.0, 0.0, -2.0, 0.0, 1.0]).unwrap();
        assert_eq!(p.eval(0.3).0, Potential::Quartic.eval(0.3).0);
        assert!(Potential::polynomial(vec![1.0, 0.0, -1.0]).is_err());
        assert!(Potential::polynomial(vec![0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn profile_shape() {
        let p = ReferenceProfile::default();
        assert_eq!(p.eta(1.0), 1.0);
        assert_eq!(p.eta(-1.0), -1.0);
        assert_eq!(p.eta(3.0), 1.0);
        assert_eq!(p.eta_prime(1.5), 0.0);
        for i in 0..200 {
            let x = -1.0 + 0.01 * i as f64;
            assert!(p.eta_prime(x) >= 0.0);
            assert!((p.eta(-x) + p.eta(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn periodic_trace_matches_fine_spectral_oracle() {
        // η - x/X is periodic; its spectral half-Laplacian on a very fine grid converges
        // at the rate allowed by the C² joins of η.
        let xl = 8.0;
        let fine = build_grid(1, xl, 1 << 16, &[]).unwrap();
        let p = ReferenceProfile::default();
        let w = RealField::from_x_fn(&fine, |x| p.eta(x) - x / xl);
        let lw = apply_operator(&w, &SymbolSpec::half_laplacian(1)).unwrap();
        let step = fine.n_x() / 64;
        for j in (0..fine.n_x()).step_by(step) {
            let x = fine.x()[j];
            assert!((p.periodic_trace(x, xl) - lw.values[j]).abs() < 1e-7, "x = {x}");
        }
        for &x in &[-1.0 + 1e-9, 1.0, 1.0 - 3e-6, 1.999_999, 2.0] {
            assert!(p.periodic_trace(x, xl).is_finite());
        }
        assert!((p.periodic_trace(1.999_999, xl) - p.periodic_trace(2.0, xl)).abs() < 1e-5);
    }

    #[test]
    fn spectral_drive_matches_quadrature() {
        // The C² joins of η limit the sampled spectral evaluation to algebraic accuracy.
        for (n, tol) in [(2048usize, 5e-3), (8192, 3e-4)] {
            let ctx = context(1, 200.0, n, &[], 0.25, Potential::Cosine);
            let drive = ctx.drive_field();
            let err = ctx
                .grid
                .x()
                .iter()
                .zip(&drive.values)
                .map(|(&x, d)| (d - ctx.c_l * ctx.profile.periodic_trace(x, 200.0)).abs())
                .fold(0.0, f64::max);
            assert!(err < tol, "n = {n}: {err}");
        }
    }

    #[test]
    fn periodic_trace_approaches_line_trace_for_wide_boxes() {
        let p = ReferenceProfile::default();
        for &x in &[-3.0, -0.5, 0.2, 0.99, 1.5, 7.0] {
            let a = p.periodic_trace(x, 1e5);
            let b = p.line_trace(x);
            assert!((a - b).abs() < 1e-8, "x = {x}: {a} vs {b}");
        }
    }

    #[test]
    fn periodic_layer_solves_cosine_equation() {
        for nu in [0.0, 0.25] {
            let ctx = context(1, 200.0, 8192, &[], nu, Potential::Cosine);
            let u = layer_field(&ctx, 0.0);
            assert!(ctx.gradient(&u).unwrap().max_abs() <= 2e-3);
            let gm = ctx.gradient(&u).unwrap().max_abs(); assert!(gm <= 1e-10, "{gm}");
            let shifted = translate(&u, 3.7).unwrap();
            assert!(ctx.gradient(&shifted).unwrap().max_abs() <= 2e-3);
        }
    }

    #[test]
    fn whole_line_layer_has_small_interior_residual() {
        let ctx = context(1, 200.0, 8192, &[], 0.0, Potential::Cosine);
        let u = clip(&RealField::from_x_fn(&ctx.grid, |x| arctan_layer(x, 2.0)));
        let g = ctx.gradient(&u).unwrap();
        let interior = ctx
            .grid
            .x()
            .iter()
            .zip(&g.values)
            .filter(|(x, _)| x.abs() <= 100.0)
            .fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
        assert!(interior <= 2e-3, "interior residual {interior}");
        assert!(eval_energy(&u, &ctx).unwrap() < eval_energy(&ctx.eta_field(), &ctx).unwrap());
    }

    #[test]
    fn reference_energy_is_potential_only() {
        let ctx = context(1, 16.0, 256, &[], 0.0, Potential::Cosine);
        let parts = ctx.energy_parts(&ctx.eta_field()).unwrap();
        assert_eq!(parts.quadratic, 0.0);
        assert_eq!(parts.cross, 0.0);
        assert!(parts.potential > 0.0);
    }

    #[test]
    fn well_state_has_zero_gradient_from_potential() {
        let (g, g1, _) = Potential::Cosine.eval(1.0);
        assert!(g.abs() < 1e-16 && g1.abs() < 1e-16);
    }

    #[test]
    fn single_mode_quadratic_term() {
        let ctx = context(1, 8.0, 64, &[], 0.0, Potential::Cosine);
        let xi = 5.0 * PI / 8.0;
        let amp = 0.1;
        let u = ctx.eta_field().zip_map(&RealField::from_x_fn(&ctx.grid, |x| amp * (xi * x).cos()), |a, b| a + b);
        let brute = ctx.energy_bruteforce(&u).unwrap();
        // ½ σ(ξ) ⟨cos, cos⟩ = ½ ξ · amp² · X.
        let exact = 0.5 * xi * amp * amp * 8.0;
        assert!((brute.quadratic - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn bruteforce_matches_spectral_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (d, n_y) in [(1usize, vec![]), (2, vec![8usize])] {
            let ctx = context(d, 8.0, 64, &n_y, 0.2, Potential::Cosine);
            let u = ctx.eta_field().map(|e| e + rng.random_range(-0.3..0.3));
            let a = eval_energy(&u, &ctx).unwrap();
            let b = eval_energy_bruteforce(&u, &ctx).unwrap();
            assert!((a - b).abs() < 1e-6 * a.abs(), "d = {d}: {a} vs {b}");
            let eta = ctx.eta_field();
            let b0 = ctx.energy_bruteforce(&eta).unwrap();
            assert!(b0.quadratic == 0.0 && b0.cross == 0.0);
        }
    }

    #[test]
    fn gradient_matches_directional_differences() {
        let ctx = context(2, 8.0, 64, &[8], 0.25, Potential::Cosine);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = ctx.eta_field().map(|e| (e + rng.random_range(-0.2..0.2)).clamp(-1.0, 1.0));
        let g = ctx.gradient(&u).unwrap();
        for _ in 0..5 {
            let phi = RealField::new(ctx.grid.clone(), (0..ctx.grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let e = 1e-5;
            let up = u.zip_map(&phi, |a, b| a + e * b);
            let um = u.zip_map(&phi, |a, b| a - e * b);
            let fd = (eval_energy(&up, &ctx).unwrap() - eval_energy(&um, &ctx).unwrap()) / (2.0 * e);
            let exact = g.dot(&phi);
            assert!((fd - exact).abs() <= 1e-5 * exact.abs(), "{fd} vs {exact}");
        }
    }

    #[test]
    fn translation_keeps_energy() {
        let ctx = context(1, 50.0, 2048, &[], 0.0, Potential::Cosine);
        let u = layer_field(&ctx, 0.0);
        let f0 = eval_energy(&u, &ctx).unwrap();
        assert_eq!(translate(&u, 0.0).unwrap().values, u.values);
        for c in [3.7, -2.0 * ctx.grid.h_x(), ctx.grid.h_x(), 0.123] {
            let t = translate(&u, c).unwrap();
            let exact = layer_field(&ctx, c);
            assert!(t.zip_map(&exact, |a, b| a - b).max_abs() < 1e-10);
            let f1 = eval_energy(&t, &ctx).unwrap();
            assert!((f1 - f0).abs() <= 1e-8 * f0.abs(), "shift {c}: {f0} vs {f1}");
        }
        assert!(matches!(translate(&u, 13.0), Err(Error::ShiftTooLarge(..))));
    }

    #[test]
    fn scalar_rearrangement_identity() {
        assert_eq!(rearrangement_identity(1, 0, 0, 1), (1, 1));
        let vals = [-7, -3, -1, 0, 1, 2, 5];
        for &a1 in &vals {
            for &a2 in &vals {
                for &b1 in &vals {
                    for &b2 in &vals {
                        let (l, r) = rearrangement_identity(a1, a2, b1, b2);
                        assert_eq!(l, r);
                        assert!(l >= 0);
                        assert_eq!(l == 0, (a1 - a2) * (b1 - b2) >= 0);
                    }
                }
            }
        }
    }

    #[test]
    fn random_pairs_rearrange_downhill() {
        let ctx = context(1, 16.0, 128, &[], 0.0, Potential::Cosine);
        let s = rearrangement_trials(&ctx, 50, 7, 1e-10).unwrap();
        assert!(s.passed, "{s:?}");
        let u = random_layer_field(&ctx, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(u.max_abs() <= 1.0);
    }

    #[test]
    fn rearrangement_of_equal_fields() {
        let ctx = context(1, 8.0, 64, &[], 0.0, Potential::Cosine);
        let u = ctx.eta_field();
        let (m, big) = rearrange_pair(&u, &u).unwrap();
        assert_eq!(m.values, u.values);
        assert_eq!(big.values, u.values);
    }

    #[test]
    fn hermitian_spectrum_of_perturbation() {
        let ctx = context(1, 8.0, 64, &[], 0.0, Potential::Cosine);
        let v = ctx.perturbation(&layer_field(&ctx, 0.5)).unwrap();
        assert!(forward_transform(&v).hermitian_defect() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn clipping_never_raises_energy(seed in 0u64..10_000) {
            let ctx = context(1, 8.0, 128, &[], 0.1, Potential::Cosine);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = ctx.eta_field().map(|e| e + rng.random_range(-0.6..0.6));
            let fu = eval_energy(&u, &ctx).unwrap();
            let fc = eval_energy(&clip(&u), &ctx).unwrap();
            prop_assert!(fc <= fu + 1e-12);
        }

        #[test]
        fn rearrangement_lowers_energy(seed in 0u64..10_000) {
            let ctx = context(1, 8.0, 64, &[], 0.0, Potential::Cosine);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || RealField::new(ctx.grid.clone(), (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let (u, v) = (draw(), draw());
            let (m, big) = rearrange_pair(&u, &v).unwrap();
            let before = eval_energy(&u, &ctx).unwrap() + eval_energy(&v, &ctx).unwrap();
            let after = eval_energy(&m, &ctx).unwrap() + eval_energy(&big, &ctx).unwrap();
            prop_assert!(before - after >= -1e-10);
        }
    }
}
