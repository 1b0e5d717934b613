use pnlayer::elasticity::{
    divergence_residual, extend_displacement, level_csv, slip_stress_sigma12, slip_stress_sigma22, stress_tensor,
    traction_balance, ElasticParams,
};
use pnlayer::energy::{
    arctan_layer, eval_energy, layer_width, periodic_layer, random_layer_field, rearrangement_identity,
    rearrangement_trials, translate, EnergyContext,
};
use pnlayer::kernel::positivity_scan;
use pnlayer::minimize::{align_translation, minimize_energy, solve_solitary, SolveReport};
use pnlayer::spectrum::{build_linearized, default_tol_zero, kernel_simplicity_check, lowest_eigenpairs};
use pnlayer::RealField;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Command, InitialKind, Resolved};

/// Result of a command: overall verdict, JSON report and files to write.
pub struct Outcome {
    pub passed: bool,
    pub report: Value,
    pub artifacts: Vec<(String, String)>,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// `x[,y1[,y2]],u` rows in storage order.
pub fn profile_csv(u: &RealField) -> String {
    let grid = &u.grid;
    let mut s = String::from(match grid.d() {
        1 => "x,u\n",
        2 => "x,y,u\n",
        _ => "x,y1,y2,u\n",
    });
    let x = grid.x();
    let ys: Vec<Vec<f64>> = (0..grid.d() - 1).map(|a| grid.y(a)).collect();
    for (i, v) in u.values.iter().enumerate() {
        let idx = grid.unflatten(i);
        s.push_str(&fmt(x[idx[0]]));
        for (a, y) in ys.iter().enumerate() {
            s.push(',');
            s.push_str(&fmt(y[idx[a + 1]]));
        }
        s.push(',');
        s.push_str(&fmt(*v));
        s.push('\n');
    }
    s
}

fn initial_field(r: &Resolved) -> RealField {
    let ctx = &r.ctx;
    let a = r.config.initial_amplitude;
    match r.config.initial {
        InitialKind::Reference => ctx.eta_field(),
        InitialKind::TransverseBump => {
            let p = &ctx.profile;
            RealField::from_fn(&ctx.grid, |x, y| {
                let t = match y.first() {
                    Some(&y0) => (std::f64::consts::TAU * y0).sin(),
                    None => x,
                };
                p.eta(x) + a * t * (-x * x).exp()
            })
        }
        InitialKind::Random => random_layer_field(ctx, &mut ChaCha8Rng::seed_from_u64(r.config.seed)),
    }
}

fn minimize_aligned(r: &Resolved, ctx: &EnergyContext, u0: &RealField) -> pnlayer::Result<(RealField, SolveReport)> {
    let (u, mut rep) = minimize_energy(ctx, &r.config.minimize, u0)?;
    let (aligned, offset) = align_translation(&u)?;
    rep.translation_offset = offset;
    Ok((aligned, rep))
}

pub fn run(r: &Resolved) -> pnlayer::Result<Outcome> {
    match r.command {
        Command::Solve => solve(r),
        Command::VerifyAnalytic => verify_analytic(r),
        Command::Spectrum => spectrum(r),
        Command::KernelScan => kernel_scan(r),
        Command::Reconstruct => reconstruct(r),
        Command::RearrangeTest => rearrange_test(r),
        Command::Solitary => solitary(r),
    }
}

fn solve(r: &Resolved) -> pnlayer::Result<Outcome> {
    let (u, rep) = minimize_aligned(r, &r.ctx, &initial_field(r))?;
    let report = json!({ "solve": to_value(&rep) });
    Ok(Outcome {
        passed: rep.converged,
        artifacts: vec![
            ("profile.csv".into(), profile_csv(&u)),
            ("solve_report.json".into(), pretty(&report)),
        ],
        report,
    })
}

const ANALYTIC_SUP_TOL: f64 = 1e-3;
const ANALYTIC_RESIDUAL_TOL: f64 = 2e-3;

fn verify_analytic(r: &Resolved) -> pnlayer::Result<Outcome> {
    let ctx = &r.ctx;
    let (u, rep) = minimize_aligned(r, ctx, &ctx.eta_field())?;
    let xl = ctx.grid.half_length();
    let delta = layer_width(ctx.shear_modulus, ctx.c_l);
    let x = ctx.grid.x();
    let sup = |f: &dyn Fn(f64) -> f64| x.iter().zip(&u.values).map(|(&x, v)| (v - f(x)).abs()).fold(0.0, f64::max);
    let sup_distance = sup(&|x| arctan_layer(x, delta));
    let periodic_distance = sup(&|x| periodic_layer(x, xl, delta));
    // gradient of the line formula itself, away from the box edges
    let formula = RealField::from_x_fn(&ctx.grid, |x| arctan_layer(x, delta));
    let g = ctx.gradient(&formula)?;
    let formula_residual = x
        .iter()
        .zip(&g.values)
        .filter(|(x, _)| x.abs() <= 0.5 * xl)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    let passed = rep.converged
        && rep.residual <= r.config.minimize.tol_residual
        && sup_distance <= ANALYTIC_SUP_TOL
        && formula_residual <= ANALYTIC_RESIDUAL_TOL;
    let report = json!({
        "layer_width": delta,
        "sup_distance": sup_distance,
        "sup_distance_tolerance": ANALYTIC_SUP_TOL,
        "periodic_layer_distance": periodic_distance,
        "residual": rep.residual,
        "formula_residual": formula_residual,
        "formula_residual_tolerance": ANALYTIC_RESIDUAL_TOL,
        "solve": to_value(&rep),
    });
    Ok(Outcome {
        passed,
        artifacts: vec![
            ("profile.csv".into(), profile_csv(&u)),
            ("verify_report.json".into(), pretty(&report)),
        ],
        report,
    })
}

fn spectrum(r: &Resolved) -> pnlayer::Result<Outcome> {
    let ctx = &r.ctx;
    let (u, rep) = minimize_aligned(r, ctx, &initial_field(r))?;
    let op = build_linearized(ctx, &u, r.config.minimize.tol_residual)?;
    let spec = lowest_eigenpairs(&op, r.config.spectrum.k)?;
    let tol_zero = match r.config.spectrum.tol_zero {
        Some(t) => t,
        None => default_tol_zero(&op)?,
    };
    let simplicity = kernel_simplicity_check(&spec, tol_zero);
    let lowest = spec.eigenvalues.first().copied().unwrap_or(f64::NAN);
    let no_negative = lowest >= -1e-6 * spec.edge_estimate;
    let passed = rep.converged && simplicity.simple && no_negative;
    let report = json!({
        "spectrum": to_value(&spec),
        "simplicity": to_value(&simplicity),
        "no_negative_eigenvalue": no_negative,
        "note": "edge_estimate and lower_bound_estimate are numerical stand-ins for existential spectral constants",
        "solve": to_value(&rep),
    });
    let mut mode = String::from("x,g0\n");
    if let Some(g) = spec.eigenvectors.first() {
        for (j, x) in ctx.grid.x().iter().enumerate() {
            mode.push_str(&format!("{},{}\n", fmt(*x), fmt(g.values[j])));
        }
    }
    let mut artifacts = vec![("spectrum_report.json".into(), pretty(&report))];
    if ctx.grid.d() == 1 {
        artifacts.push(("ground_mode.csv".into(), mode));
    }
    Ok(Outcome {
        passed,
        report,
        artifacts,
    })
}

fn kernel_scan(r: &Resolved) -> pnlayer::Result<Outcome> {
    let scan = positivity_scan(&r.config.scan_poissons, &r.grid)?;
    let report = json!({ "scan": to_value(&scan) });
    Ok(Outcome {
        passed: true,
        artifacts: vec![
            ("kernel_scan.csv".into(), scan.to_csv()),
            ("kernel_scan.json".into(), pretty(&report)),
        ],
        report,
    })
}

const DIVERGENCE_TOL: f64 = 1e-8;
const NORMAL_TRACTION_TOL: f64 = 1e-6;
const BALANCE_TOL: f64 = 1e-6;

fn reconstruct(r: &Resolved) -> pnlayer::Result<Outcome> {
    let ctx = &r.ctx;
    let (u, rep) = minimize_aligned(r, ctx, &ctx.eta_field())?;
    let params = ElasticParams::new(r.config.shear_modulus, r.config.poisson)?;
    let slab = extend_displacement(&u, &params, &r.config.levels)?;
    let fields = stress_tensor(&slab, &params)?;
    let divergence = divergence_residual(&slab, &params)?;
    let s12 = slip_stress_sigma12(&u, &params)?;
    let s22 = slip_stress_sigma22(&u, &params)?;
    let normal_traction = s22.norm_l2() / s12.norm_l2().max(f64::MIN_POSITIVE);
    let near = stress_tensor(&extend_displacement(&u, &params, &[1e-9])?, &params)?;
    let consistency = s12
        .values
        .iter()
        .zip(&near[0].sigma12)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let balance = traction_balance(&u, &params, &ctx.potential)?.max_abs();
    let worst_div = divergence.iter().map(|d| d.relative).fold(0.0, f64::max);
    let passed = rep.converged
        && worst_div <= DIVERGENCE_TOL
        && normal_traction <= NORMAL_TRACTION_TOL
        && balance <= BALANCE_TOL;
    let report = json!({
        "params": to_value(&params),
        "warning": params.warning(),
        "divergence": to_value(&divergence),
        "normal_traction_relative": normal_traction,
        "sigma12_consistency": consistency,
        "traction_balance": balance,
        "u3_zero": slab.u3_zero,
        "solve": to_value(&rep),
    });
    let mut artifacts = vec![("reconstruct_summary.json".into(), pretty(&report))];
    for (i, f) in fields.iter().enumerate() {
        artifacts.push((format!("level_{i}.csv"), level_csv(&slab.grid, f)));
    }
    let mut plane = String::from("x,u1,sigma12,sigma22\n");
    for (j, x) in u.grid.x().iter().enumerate() {
        plane.push_str(&format!(
            "{},{},{},{}\n",
            fmt(*x),
            fmt(u.values[j]),
            fmt(s12.values[j]),
            fmt(s22.values[j])
        ));
    }
    artifacts.push(("slip_plane.csv".into(), plane));
    Ok(Outcome {
        passed,
        report,
        artifacts,
    })
}

const REARRANGE_TOL: f64 = 1e-10;
const TRANSLATION_TOL: f64 = 1e-8;

fn rearrange_test(r: &Resolved) -> pnlayer::Result<Outcome> {
    let ctx = &r.ctx;
    let values: Vec<i64> = vec![-9, -4, -1, 0, 1, 3, 8];
    let (mut checked, mut mismatches) = (0usize, 0usize);
    for &a1 in &values {
        for &a2 in &values {
            for &b1 in &values {
                for &b2 in &values {
                    let (l, rr) = rearrangement_identity(a1, a2, b1, b2);
                    checked += 1;
                    if l != rr || (l == 0) != ((a1 - a2) * (b1 - b2) >= 0) {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let summary = rearrangement_trials(ctx, r.config.trials, r.config.seed, REARRANGE_TOL)?;
    let xl = ctx.grid.half_length();
    let delta = layer_width(ctx.shear_modulus, ctx.c_l);
    let layer = RealField::from_fn(&ctx.grid, |x, _| periodic_layer(x, xl, delta));
    let f0 = eval_energy(&layer, ctx)?;
    let mut translation = 0.0f64;
    for c in [0.37, -1.9, 0.5 * ctx.grid.h_x()] {
        let f1 = eval_energy(&translate(&layer, c)?, ctx)?;
        translation = translation.max((f1 - f0).abs() / f0.abs().max(f64::MIN_POSITIVE));
    }
    let passed = mismatches == 0 && summary.passed && translation <= TRANSLATION_TOL;
    let report = json!({
        "identity_checked": checked,
        "identity_mismatches": mismatches,
        "trials": to_value(&summary),
        "translation_relative_change": translation,
    });
    Ok(Outcome {
        passed,
        artifacts: vec![("rearrange_summary.json".into(), pretty(&report))],
        report,
    })
}

fn solitary(r: &Resolved) -> pnlayer::Result<Outcome> {
    let ctx = &r.ctx;
    let (u, rep) = solve_solitary(ctx, &r.config.solitary)?;
    let g = ctx.shear_modulus;
    let lorentz = |x: f64| 8.0 * g * g / (x * x + 4.0 * g * g);
    let distance = ctx
        .grid
        .x()
        .iter()
        .zip(&u.values)
        .map(|(&x, v)| (v - lorentz(x)).abs())
        .fold(0.0, f64::max);
    let report = json!({
        "solitary": to_value(&rep),
        "lorentzian_distance": distance,
    });
    Ok(Outcome {
        passed: rep.converged,
        artifacts: vec![
            ("solitary.csv".into(), profile_csv(&u)),
            ("solitary_report.json".into(), pretty(&report)),
        ],
        report,
    })
}
