//! Bulk elastic state of the two half-spaces reconstructed from the
//! slip-plane trace `u₁⁺`: displacements, strains, stresses, divergence and
//! the slip-plane traction.
//!
//! The trace is helical on the box, `u₁⁺ = x/X + w` with `w` periodic. All
//! fields are expressed through multipliers acting on the spectrum of
//! `∂ₓu₁⁺`, whose zero mode carries the ramp. Upper half-space (`y > 0`)
//! formulas use `a = |y|`, `t = |ξ|`, `κ = 1/(2 - 2ν)`; the lower half-space
//! follows by reflection with `u₁` odd and `u₂` even in `y`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyContext, Potential};
use crate::error::{Error, Result};
use crate::grid::{forward_transform, inverse_transform_complex, Grid, RealField};
use crate::symbols::SymbolSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticParams {
    pub shear_modulus: f64,
    pub poisson: f64,
}

impl ElasticParams {
    pub fn new(shear_modulus: f64, poisson: f64) -> Result<Self> {
        if !(shear_modulus > 0.0) || !shear_modulus.is_finite() {
            return Err(Error::InvalidParameter(format!("shear modulus {shear_modulus} must be positive")));
        }
        if !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::PoissonOutOfRange(poisson));
        }
        Ok(ElasticParams { shear_modulus, poisson })
    }

    /// Set when `ν` is admissible for elasticity but outside the range where
    /// the reduced slip-plane kernel stays positive.
    pub fn warning(&self) -> Option<String> {
        (!(self.poisson > -0.5 && self.poisson < 1.0 / 3.0)).then(|| {
            format!(
                "Poisson ratio {} lies outside (-1/2, 1/3); the reduced kernel is not positive there",
                self.poisson
            )
        })
    }

    fn kappa(&self) -> f64 {
        1.0 / (2.0 - 2.0 * self.poisson)
    }

    /// Second Lamé constant `2νG/(1 - 2ν)`.
    pub fn lame(&self) -> f64 {
        2.0 * self.poisson * self.shear_modulus / (1.0 - 2.0 * self.poisson)
    }
}

/// Displacement spectra at a set of heights.
#[derive(Clone, Debug)]
pub struct DisplacementSlab {
    pub grid: Grid,
    pub params: ElasticParams,
    pub levels: Vec<f64>,
    /// Spectrum of `∂ₓu₁⁺` (zero mode `2`, the ramp); Nyquist mode dropped.
    pub slope_hat: Vec<Complex64>,
    /// Spectrum of the periodic part of `u₁⁺`.
    pub trace_hat: Vec<Complex64>,
    /// Per level: spectra of the periodic parts of `u₁` and `u₂`.
    pub u1_hat: Vec<Vec<Complex64>>,
    pub u2_hat: Vec<Vec<Complex64>>,
    /// The out-of-plane displacement vanishes identically.
    pub u3_zero: bool,
}

/// Real fields at one height.
#[derive(Clone, Debug)]
pub struct LevelFields {
    pub y: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub sigma11: Vec<f64>,
    pub sigma12: Vec<f64>,
    pub sigma22: Vec<f64>,
}

fn check_trace(u1_plus: &RealField) -> Result<()> {
    if u1_plus.grid.d() != 1 {
        return Err(Error::InvalidGrid("the slip-plane trace must live on a line (d = 1)".into()));
    }
    if let Some(v) = u1_plus.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("trace value {v}")));
    }
    Ok(())
}

/// Spectra of `w = u₁⁺ - x/X` and `∂ₓu₁⁺`.
fn trace_spectra(u1_plus: &RealField) -> (Vec<Complex64>, Vec<Complex64>) {
    let grid = &u1_plus.grid;
    let xl = grid.half_length();
    let x = grid.x();
    let w = RealField {
        grid: grid.clone(),
        values: u1_plus.values.iter().zip(x).map(|(v, xi)| v - xi / xl).collect(),
    };
    let w_hat = forward_transform(&w).coefficients;
    let n = grid.n_x();
    let xi = grid.xi();
    let slope: Vec<Complex64> = (0..n)
        .map(|m| {
            if m == 0 {
                Complex64::new(2.0, 0.0)
            } else if 2 * m == n {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, xi[m]) * w_hat[m]
            }
        })
        .collect();
    (w_hat, slope)
}

fn sgn(m: usize, n: usize, xi: f64) -> f64 {
    if m == 0 || 2 * m == n {
        0.0
    } else {
        xi.signum()
    }
}

/// Extend the trace into both half-spaces at the given nonzero heights.
pub fn extend_displacement(u1_plus: &RealField, params: &ElasticParams, y_levels: &[f64]) -> Result<DisplacementSlab> {
    check_trace(u1_plus)?;
    if let Some(y) = y_levels.iter().find(|y| **y == 0.0 || !y.is_finite()) {
        return Err(Error::InvalidParameter(format!("level y = {y} must be finite and nonzero")));
    }
    let grid = u1_plus.grid.clone();
    let (w_hat, slope_hat) = trace_spectra(u1_plus);
    let n = grid.n_x();
    let xi = grid.xi();
    let kappa = params.kappa();
    let nu = params.poisson;
    let mut u1_hat = Vec::with_capacity(y_levels.len());
    let mut u2_hat = Vec::with_capacity(y_levels.len());
    for &y in y_levels {
        let (a, sy) = (y.abs(), y.signum());
        let mut h1 = Vec::with_capacity(n);
        let mut h2 = Vec::with_capacity(n);
        for m in 0..n {
            let t = xi[m].abs();
            let e = (-t * a).exp();
            let m1 = (1.0 - kappa * t * a) * e;
            let m2 = Complex64::new(0.0, -kappa * ((1.0 - 2.0 * nu) * sgn(m, n, xi[m]) + xi[m] * a) * e);
            let m2 = if 2 * m == n { Complex64::new(0.0, 0.0) } else { m2 };
            h1.push(sy * m1 * w_hat[m]);
            h2.push(m2 * w_hat[m]);
        }
        u1_hat.push(h1);
        u2_hat.push(h2);
    }
    Ok(DisplacementSlab {
        grid,
        params: *params,
        levels: y_levels.to_vec(),
        slope_hat,
        trace_hat: w_hat,
        u1_hat,
        u2_hat,
        u3_zero: true,
    })
}

/// First and second displacement derivatives at height `y`, as spectra acting
/// on the slope spectrum. Order: `u₁ₓ, u₁ᵧ, u₂ₓ, u₂ᵧ, u₁ₓₓ, u₁ₓᵧ, u₁ᵧᵧ, u₂ₓₓ, u₂ₓᵧ, u₂ᵧᵧ`.
fn derivative_spectra(slab: &DisplacementSlab, y: f64) -> [Vec<Complex64>; 10] {
    let n = slab.grid.n_x();
    let xi = slab.grid.xi();
    let kappa = slab.params.kappa();
    let nu = slab.params.poisson;
    let (a, s) = (y.abs(), y.signum());
    let i = Complex64::new(0.0, 1.0);
    let mut out: [Vec<Complex64>; 10] = Default::default();
    for v in out.iter_mut() {
        v.reserve(n);
    }
    for m in 0..n {
        let f = slab.slope_hat[m];
        let t = xi[m].abs();
        let e = (-t * a).exp();
        let sg = sgn(m, n, xi[m]);
        let ik = if 2 * m == n { Complex64::new(0.0, 0.0) } else { i * xi[m] };
        let d11 = (1.0 - kappa * t * a) * e;
        let d12 = i * sg * ((1.0 + kappa) - kappa * t * a) * e;
        let d21 = -kappa * (i * sg * (1.0 - 2.0 * nu) + ik * a) * e;
        let d22 = -kappa * (2.0 * nu - t * a) * e;
        let d12a = ik * (kappa * t * a - (1.0 + 2.0 * kappa)) * e;
        let d22a = kappa * t * (1.0 + 2.0 * nu - t * a) * e;
        // reflection signs: u₁ odd, u₂ even in y
        let vals: [Complex64; 10] = [
            Complex64::from(s * d11),
            d12,
            d21,
            Complex64::from(s * d22),
            s * d11 * ik,
            ik * d12,
            s * d12a,
            ik * d21,
            s * ik * d22,
            Complex64::from(d22a),
        ];
        for (k, v) in vals.into_iter().enumerate() {
            out[k].push(v * f);
        }
    }
    out
}

fn to_real(grid: &Grid, hat: &[Complex64]) -> Vec<f64> {
    let sf = crate::grid::SpectralField {
        grid: grid.clone(),
        coefficients: hat.to_vec(),
    };
    inverse_transform_complex(&sf).into_iter().map(|c| c.re).collect()
}

struct Strains {
    u1x: Vec<f64>,
    u1y: Vec<f64>,
    u2x: Vec<f64>,
    u2y: Vec<f64>,
}

fn stresses(p: &ElasticParams, s: &Strains) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = p.shear_modulus;
    let lam = p.lame();
    let n = s.u1x.len();
    let mut s11 = Vec::with_capacity(n);
    let mut s12 = Vec::with_capacity(n);
    let mut s22 = Vec::with_capacity(n);
    for j in 0..n {
        let tr = s.u1x[j] + s.u2y[j];
        s11.push(2.0 * g * s.u1x[j] + lam * tr);
        s22.push(2.0 * g * s.u2y[j] + lam * tr);
        s12.push(g * (s.u1y[j] + s.u2x[j]));
    }
    (s11, s12, s22)
}

/// Displacements and stresses at every level of the slab.
pub fn stress_tensor(slab: &DisplacementSlab, params: &ElasticParams) -> Result<Vec<LevelFields>> {
    let grid = &slab.grid;
    let xl = grid.half_length();
    let x = grid.x();
    let kappa = params.kappa();
    let mut out = Vec::with_capacity(slab.levels.len());
    for (l, &y) in slab.levels.iter().enumerate() {
        let d = derivative_spectra(slab, y);
        let strains = Strains {
            u1x: to_real(grid, &d[0]),
            u1y: to_real(grid, &d[1]),
            u2x: to_real(grid, &d[2]),
            u2y: to_real(grid, &d[3]),
        };
        let (sigma11, sigma12, sigma22) = stresses(params, &strains);
        let sy = y.signum();
        let u1: Vec<f64> = to_real(grid, &slab.u1_hat[l])
            .into_iter()
            .zip(x)
            .map(|(w, xi)| w + sy * xi / xl)
            .collect();
        // the ramp's uniform strain contracts the slab vertically
        let lift = -2.0 * params.poisson * kappa * y.abs() / xl;
        let u2: Vec<f64> = to_real(grid, &slab.u2_hat[l]).into_iter().map(|v| v + lift).collect();
        out.push(LevelFields {
            y,
            u1,
            u2,
            sigma11,
            sigma12,
            sigma22,
        });
    }
    Ok(out)
}

fn norm(v: &[f64], h: f64) -> f64 {
    (v.iter().map(|a| a * a).sum::<f64>() * h).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergenceResidual {
    pub y: f64,
    /// `‖∇·σ‖` over all components.
    pub absolute: f64,
    /// Absolute residual over `‖σ₁₁‖ + ‖σ₁₂‖ + ‖σ₂₂‖`.
    pub relative: f64,
}

/// `‖∂₁σ₁ⱼ + ∂₂σ₂ⱼ‖` per level, with analytic `y`-derivatives.
pub fn divergence_residual(slab: &DisplacementSlab, params: &ElasticParams) -> Result<Vec<DivergenceResidual>> {
    let grid = &slab.grid;
    let h = grid.h_x();
    let g = params.shear_modulus;
    let lam = params.lame();
    let mut out = Vec::with_capacity(slab.levels.len());
    for &y in &slab.levels {
        let d = derivative_spectra(slab, y);
        let r: Vec<Vec<f64>> = d.iter().map(|v| to_real(grid, v)).collect();
        let strains = Strains {
            u1x: r[0].clone(),
            u1y: r[1].clone(),
            u2x: r[2].clone(),
            u2y: r[3].clone(),
        };
        let (s11, s12, s22) = stresses(params, &strains);
        let n = grid.n_x();
        let mut div1 = Vec::with_capacity(n);
        let mut div2 = Vec::with_capacity(n);
        for j in 0..n {
            let (u1xx, u1xy, u1yy) = (r[4][j], r[5][j], r[6][j]);
            let (u2xx, u2xy, u2yy) = (r[7][j], r[8][j], r[9][j]);
            div1.push((2.0 * g + lam) * u1xx + lam * u2xy + g * (u1yy + u2xy));
            div2.push(g * (u1xy + u2xx) + lam * u1xy + (2.0 * g + lam) * u2yy);
        }
        let absolute = (norm(&div1, h).powi(2) + norm(&div2, h).powi(2)).sqrt();
        let scale = norm(&s11, h) + norm(&s12, h) + norm(&s22, h);
        out.push(DivergenceResidual {
            y,
            absolute,
            relative: if scale > 0.0 { absolute / scale } else { absolute },
        });
    }
    Ok(out)
}

/// Shear traction on the slip plane, `σ₁₂(x, 0⁺) = -(G/(1 - ν))·Λw`.
pub fn slip_stress_sigma12(u1_plus: &RealField, params: &ElasticParams) -> Result<RealField> {
    check_trace(u1_plus)?;
    let grid = &u1_plus.grid;
    let (w_hat, _) = trace_spectra(u1_plus);
    let c = -params.shear_modulus / (1.0 - params.poisson);
    let hat: Vec<Complex64> = w_hat.iter().zip(grid.xi()).map(|(w, xi)| c * xi.abs() * w).collect();
    Ok(RealField {
        grid: grid.clone(),
        values: to_real(grid, &hat),
    })
}

/// Normal traction on the slip plane, `σ₂₂(x, 0⁺)`; vanishes identically.
pub fn slip_stress_sigma22(u1_plus: &RealField, params: &ElasticParams) -> Result<RealField> {
    check_trace(u1_plus)?;
    let grid = &u1_plus.grid;
    let (_, slope) = trace_spectra(u1_plus);
    let lam = params.lame();
    let c = lam - 2.0 * params.poisson * params.kappa() * (2.0 * params.shear_modulus + lam);
    let hat: Vec<Complex64> = slope.iter().map(|f| c * f).collect();
    Ok(RealField {
        grid: grid.clone(),
        values: to_real(grid, &hat),
    })
}

/// `2σ₁₂(x, 0⁺) - γ'(u₁⁺)`: the slip-plane traction balance.
pub fn traction_balance(u1_plus: &RealField, params: &ElasticParams, potential: &Potential) -> Result<RealField> {
    let s12 = slip_stress_sigma12(u1_plus, params)?;
    Ok(s12.zip_map(u1_plus, |s, u| 2.0 * s - potential.eval(u).1))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ElasticEnergy {
    /// `½⟨v, ℒv⟩` for `v = u₁⁺ - η`.
    pub quadratic: f64,
    /// `⟨v, ℒ(η - x/X)⟩`.
    pub cross: f64,
    /// `½⟨η - x/X, ℒ(η - x/X)⟩`, the reference self-energy.
    pub reference: f64,
}

impl ElasticEnergy {
    /// `½⟨w, ℒw⟩` for `w = u₁⁺ - x/X`.
    pub fn total(&self) -> f64 {
        self.quadratic + self.cross + self.reference
    }
}

/// Slip-plane form of the bulk elastic energy, split around the reference profile.
pub fn elastic_energy(u1_plus: &RealField, params: &ElasticParams) -> Result<ElasticEnergy> {
    check_trace(u1_plus)?;
    let ctx = EnergyContext::new(
        &u1_plus.grid,
        SymbolSpec::pn_reduced(params.poisson, 1)?,
        Potential::Cosine,
        params.shear_modulus,
    )?;
    let parts = ctx.energy_parts(u1_plus)?;
    let drive = ctx.drive_field();
    let xl = u1_plus.grid.half_length();
    let eta = ctx.eta_field();
    let w_eta = RealField::from_x_fn(&u1_plus.grid, |x| -x / xl).zip_map(&eta, |a, b| a + b);
    Ok(ElasticEnergy {
        quadratic: parts.quadratic,
        cross: parts.cross,
        reference: 0.5 * w_eta.dot(&drive),
    })
}

/// CSV for one level: `x,u1,u2,sigma11,sigma12,sigma22`.
pub fn level_csv(grid: &Grid, level: &LevelFields) -> String {
    let mut s = String::from("x,u1,u2,sigma11,sigma12,sigma22\n");
    for (j, x) in grid.x().iter().enumerate() {
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            x, level.u1[j], level.u2[j], level.sigma11[j], level.sigma12[j], level.sigma22[j]
        ));
    }
    s
}
