//! Linearization of the layer equation at a computed profile and its lowest
//! eigenpairs (shift-invert block Krylov with a dense cross-check).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::grid::{derivative_x, RealField};
use crate::symbols::{Operator, SymbolSpec};

pub const DENSE_LIMIT: usize = 4096;
pub const ITERATIVE_LIMIT: usize = 1 << 18;
pub const MAX_EIGENPAIRS: usize = 10;

/// `φ ↦ ℒφ + m·φ` with `m = γ''(u*)/(2G)`.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub ctx: EnergyContext,
    pub profile: RealField,
    pub multiplier: RealField,
    /// Whether the profile met the residual tolerance it was built with.
    pub profile_converged: bool,
    pub profile_residual: f64,
}

impl LinearizedOperator {
    pub fn apply(&self, phi: &RealField) -> Result<RealField> {
        let lphi = self.ctx.operator.apply(phi)?;
        let mphi = phi.zip_map(&self.multiplier, |p, m| p * m);
        Ok(lphi.zip_map(&mphi, |a, b| a + b))
    }

    /// Same profile with the potential term dropped, leaving `ℒ` alone.
    pub fn operator_only(&self) -> Self {
        LinearizedOperator {
            multiplier: RealField::zeros(&self.ctx.grid),
            ..self.clone()
        }
    }

    /// `min(γ''(-1), γ''(1))/(2G)`.
    pub fn edge_estimate(&self) -> Result<f64> {
        self.ctx
            .potential
            .well_curvature()
            .map(|c| c / (2.0 * self.ctx.shear_modulus))
            .ok_or_else(|| Error::InvalidPotential("no wells at ±1".into()))
    }

    fn apply_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let f = RealField {
            grid: self.ctx.grid.clone(),
            values: v.to_vec(),
        };
        Ok(self.apply(&f)?.values)
    }
}

/// Linearize at `u`; the convergence flag compares the gradient norm with `tol`.
pub fn build_linearized(ctx: &EnergyContext, u: &RealField, tol: f64) -> Result<LinearizedOperator> {
    u.check_grid(&ctx.grid)?;
    let residual = ctx.gradient(u)?.norm_l2();
    let two_g = 2.0 * ctx.shear_modulus;
    let multiplier = u.map(|v| ctx.potential.eval(v).2 / two_g);
    Ok(LinearizedOperator {
        ctx: ctx.clone(),
        profile: u.clone(),
        multiplier,
        profile_converged: residual <= tol,
        profile_residual: residual,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GridInfo {
    pub d: usize,
    pub half_length: f64,
    pub n_x: usize,
    pub n_y: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    /// `‖Lg - λg‖ / ‖g‖` per eigenpair.
    pub residuals: Vec<f64>,
    /// `|⟨g₀, ∂ₓu*⟩| / (‖g₀‖ ‖∂ₓu*‖)`.
    pub overlap: f64,
    /// `min γ''(±1)/(2G)`; a numerical stand-in for the edge of the continuous spectrum.
    pub edge_estimate: f64,
    pub gap: f64,
    /// `min(0, min_x γ''(u*)/(2G))`; a numerical stand-in for the lower spectral bound.
    pub lower_bound_estimate: f64,
    pub shift: f64,
    pub profile_converged: bool,
    pub profile_residual: f64,
    pub grid: GridInfo,
    #[serde(skip)]
    pub eigenvectors: Vec<RealField>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Solve `(L - s)x = b` by conjugate gradients preconditioned with `(σ + c)^{-1}`.
fn shifted_solve(op: &LinearizedOperator, shift: f64, precond: f64, b: &[f64]) -> Result<Vec<f64>> {
    let grid = &op.ctx.grid;
    let pre = |r: &[f64]| -> Result<Vec<f64>> {
        let f = RealField {
            grid: grid.clone(),
            values: r.to_vec(),
        };
        Ok(op.ctx.operator.apply_resolvent(&f, precond)?.values)
    };
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z = pre(&r)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..5000 {
        let mut ap = op.apply_vec(&p)?;
        axpy(&mut ap, -shift, &p);
        let curv = dot(&p, &ap);
        if !(curv > 0.0) {
            return Err(Error::Breakdown(format!(
                "shifted operator is not positive definite (curvature {curv:.3e}); an eigenvalue lies below the shift {shift:.3e}, restart with a lower shift"
            )));
        }
        let alpha = rz / curv;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        if dot(&r, &r).sqrt() <= 1e-13 * bnorm {
            return Ok(x);
        }
        z = pre(&r)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::Breakdown(
        "inner solve did not converge in 5000 iterations; restart with a larger shift magnitude".into(),
    ))
}

/// Orthogonalize `v` against `basis` (twice) and normalize; `None` if nothing is left.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> Option<()> {
    let n0 = dot(v, v).sqrt();
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(v, -c, q);
        }
    }
    let n = dot(v, v).sqrt();
    if !(n > 1e-10 * n0) || n == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(())
}

fn grid_info(op: &LinearizedOperator) -> GridInfo {
    let g = &op.ctx.grid;
    GridInfo {
        d: g.d(),
        half_length: g.half_length(),
        n_x: g.n_x(),
        n_y: g.n_y().to_vec(),
    }
}

fn finish_report(
    op: &LinearizedOperator,
    shift: f64,
    mut pairs: Vec<(f64, Vec<f64>)>,
) -> Result<SpectrumReport> {
    let grid = &op.ctx.grid;
    let mut residuals = Vec::with_capacity(pairs.len());
    for (lambda, v) in pairs.iter_mut() {
        let lv = op.apply_vec(v)?;
        *lambda = dot(v, &lv) / dot(v, v);
        let mut r = lv;
        axpy(&mut r, -*lambda, v);
        residuals.push((dot(&r, &r) / dot(v, v)).sqrt());
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| pairs[i].0).collect();
    let residuals: Vec<f64> = order.iter().map(|&i| residuals[i]).collect();
    let eigenvectors: Vec<RealField> = order
        .iter()
        .map(|&i| RealField {
            grid: grid.clone(),
            values: pairs[i].1.clone(),
        })
        .collect();
    let xl = grid.half_length();
    let nx = grid.n_x();
    let x = grid.x();
    let w = RealField {
        grid: grid.clone(),
        values: op.profile.values.iter().enumerate().map(|(i, v)| v - x[i % nx] / xl).collect(),
    };
    let slope = derivative_x(&w).map(|v| v + 1.0 / xl);
    let overlap = eigenvectors
        .first()
        .map(|g| (g.dot(&slope).abs() / (g.norm_l2() * slope.norm_l2())).min(1.0))
        .unwrap_or(0.0);
    let gap = if eigenvalues.len() >= 2 { eigenvalues[1] - eigenvalues[0] } else { f64::NAN };
    let lower = op.multiplier.values.iter().cloned().fold(0.0, f64::min);
    Ok(SpectrumReport {
        eigenvalues,
        residuals,
        overlap,
        edge_estimate: op.edge_estimate()?,
        gap,
        lower_bound_estimate: lower,
        shift,
        profile_converged: op.profile_converged,
        profile_residual: op.profile_residual,
        grid: grid_info(op),
        eigenvectors,
    })
}

/// The `k` smallest eigenpairs of `L`, by block Krylov iteration on
/// `(L - s)^{-1}` with `s = -0.1·edge`, so a spurious negative mode would
/// stall the inner solve instead of hiding.
pub fn lowest_eigenpairs(op: &LinearizedOperator, k: usize) -> Result<SpectrumReport> {
    let n = op.ctx.grid.len();
    if k == 0 || k > MAX_EIGENPAIRS {
        return Err(Error::InvalidParameter(format!("k = {k} must lie in 1..={MAX_EIGENPAIRS}")));
    }
    if n > ITERATIVE_LIMIT {
        return Err(Error::TooLarge(n, ITERATIVE_LIMIT));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds the grid size {n}")));
    }
    let edge = op.edge_estimate()?;
    let shift = -0.1 * edge;
    let precond = edge - shift;
    let block = k.max(2).min(n);
    let max_basis = n.min(40 * block + 200);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut pending: Vec<Vec<f64>> = Vec::new();
    let fresh = |rng: &mut ChaCha8Rng, basis: &[Vec<f64>]| -> Option<Vec<f64>> {
        for _ in 0..10 {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            if orthonormalize(&mut v, basis).is_some() {
                return Some(v);
            }
        }
        None
    };
    for _ in 0..block {
        let mut all = basis.clone();
        all.extend(pending.iter().cloned());
        if let Some(v) = fresh(&mut rng, &all) {
            pending.push(v);
        }
    }
    // h[i][j] = basis_i · images_j
    let mut h: Vec<Vec<f64>> = Vec::new();
    loop {
        let mut new_images = Vec::with_capacity(pending.len());
        for v in &pending {
            new_images.push(shifted_solve(op, shift, precond, v)?);
        }
        for (v, av) in pending.drain(..).zip(new_images) {
            basis.push(v);
            images.push(av);
        }
        let m = basis.len();
        for (i, row) in h.iter_mut().enumerate() {
            for j in row.len()..m {
                row.push(dot(&basis[i], &images[j]));
            }
        }
        for i in h.len()..m {
            h.push((0..m).map(|j| dot(&basis[i], &images[j])).collect());
        }
        let hm = DMatrix::from_fn(m, m, |i, j| 0.5 * (h[i][j] + h[j][i]));
        let eig = SymmetricEigen::new(hm);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top: Vec<usize> = idx.into_iter().take(k.min(m)).collect();
        let theta_max = eig.eigenvalues[top[0]].abs();
        let mut ritz = Vec::with_capacity(top.len());
        let mut worst = 0.0f64;
        for &c in &top {
            let theta = eig.eigenvalues[c];
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            for j in 0..m {
                let s = eig.eigenvectors[(j, c)];
                axpy(&mut y, s, &basis[j]);
                axpy(&mut ay, s, &images[j]);
            }
            axpy(&mut ay, -theta, &y);
            worst = worst.max(dot(&ay, &ay).sqrt());
            ritz.push((theta, y));
        }
        let done = m >= n || (top.len() == k && worst <= 1e-11 * theta_max);
        if done || m >= max_basis {
            if !done {
                return Err(Error::Breakdown(format!(
                    "eigen-iteration stalled at basis size {m} (Ritz residual {worst:.3e}); restart with fewer eigenpairs"
                )));
            }
            let pairs = ritz
                .into_iter()
                .map(|(theta, y)| (shift + 1.0 / theta, y))
                .collect();
            return finish_report(op, shift, pairs);
        }
        // next block: images of the newest vectors
        let newest = basis.len() - block.min(basis.len());
        let mut next = Vec::new();
        for j in newest..basis.len() {
            let mut v = images[j].clone();
            let mut all = basis.clone();
            all.extend(next.iter().cloned());
            if orthonormalize(&mut v, &all).is_some() {
                next.push(v);
            } else if let Some(v) = fresh(&mut rng, &all) {
                next.push(v);
            }
        }
        let room = n - basis.len();
        next.truncate(room);
        if next.is_empty() {
            return Err(Error::Breakdown("Krylov basis exhausted; restart with a new start block".into()));
        }
        pending = next;
    }
}

/// All eigenvalues of the assembled matrix of `L` (ascending).
pub fn dense_eigenvalues(op: &LinearizedOperator) -> Result<Vec<f64>> {
    let n = op.ctx.grid.len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(n, DENSE_LIMIT));
    }
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply_vec(&e)?;
        e[j] = 0.0;
        for i in 0..n {
            a[(i, j)] = col[i];
        }
    }
    let sym = 0.5 * (&a + a.transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

#[derive(Clone, Debug, Serialize)]
pub struct SimplicityCheck {
    pub simple: bool,
    pub near_zero: usize,
    /// Smallest eigenvalue outside `(-tol_zero, tol_zero)`.
    pub next: Option<f64>,
    pub tol_zero: f64,
}

/// True iff exactly one eigenvalue lies in `(-tol_zero, tol_zero)` and the next
/// one is at least `10·tol_zero`. Needs at least three computed eigenvalues.
pub fn kernel_simplicity_check(report: &SpectrumReport, tol_zero: f64) -> SimplicityCheck {
    let near_zero = report.eigenvalues.iter().filter(|l| l.abs() < tol_zero).count();
    let next = report.eigenvalues.iter().cloned().find(|l| *l >= tol_zero);
    let simple = report.eigenvalues.len() >= 3
        && near_zero == 1
        && report.eigenvalues.iter().all(|&l| l > -tol_zero)
        && next.is_some_and(|l| l >= 10.0 * tol_zero);
    SimplicityCheck {
        simple,
        near_zero,
        next,
        tol_zero,
    }
}

/// Default zero tolerance, `1e-5·edge`.
pub fn default_tol_zero(op: &LinearizedOperator) -> Result<f64> {
    Ok(1e-5 * op.edge_estimate()?)
}

#[derive(Clone, Debug, Serialize)]
pub struct MaxPrincipleVerdict {
    /// Smallest `ℒf` over the global-maximum points.
    pub at_max: f64,
    /// Largest `ℒf` over the global-minimum points.
    pub at_min: f64,
    pub scale: f64,
    pub holds: bool,
}

/// Evaluate `ℒf` at the global maximum and minimum points of `f`.
pub fn maximal_principle_probe(f: &RealField, symbol: &SymbolSpec) -> Result<MaxPrincipleVerdict> {
    let op = Operator::new(symbol, &f.grid)?;
    let lf = op.apply(f)?;
    let hi = f.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = f.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut at_max = f64::INFINITY;
    let mut at_min = f64::NEG_INFINITY;
    for (v, l) in f.values.iter().zip(&lf.values) {
        if *v == hi {
            at_max = at_max.min(*l);
        }
        if *v == lo {
            at_min = at_min.max(*l);
        }
    }
    let scale = lf.max_abs().max(f.max_abs()).max(f64::MIN_POSITIVE);
    Ok(MaxPrincipleVerdict {
        at_max,
        at_min,
        scale,
        holds: at_max >= -1e-10 * scale && at_min <= 1e-10 * scale,
    })
}
