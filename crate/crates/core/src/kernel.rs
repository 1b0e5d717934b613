//! Convolution kernel of a symbol on the periodic box, its sign and decay
//! diagnostics, and the O(N²) direct-summation oracle.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, RealField};
use crate::symbols::SymbolSpec;

/// Largest grid accepted by the direct-summation oracles.
pub const BRUTE_FORCE_LIMIT: usize = 8192;

/// Default Gaussian smoothing width, in units of the largest grid spacing.
pub const DEFAULT_SMOOTHING: f64 = 1.5;

/// Inner radius of the certification window, in units of the largest grid spacing.
pub const WINDOW_INNER: f64 = 4.0;

/// Lag-indexed kernel `k(w) = (1/V) Σ σ(ν) e^{i⟨ν,w⟩}`.
///
/// Index `i` corresponds to the lag whose signed wavenumber indices are
/// `grid.wavenumbers(i)` times the spacing. The interaction kernel of the
/// nonlocal form is `K = -k` off the origin.
#[derive(Clone, Debug)]
pub struct DiscreteKernel {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Gaussian smoothing width used in extraction (`None` for the raw kernel).
    pub smoothing: Option<f64>,
}

fn kernel_from_table(grid: &Grid, table: &[f64]) -> Vec<f64> {
    let mut data: Vec<Complex64> = table.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    grid.fft_all(&mut data, true);
    let scale = 1.0 / grid.volume();
    data.iter().map(|c| c.re * scale).collect()
}

/// Raw kernel: inverse transform of the symbol with cell-volume normalization.
pub fn extract_kernel(symbol: &SymbolSpec, grid: &Grid) -> Result<DiscreteKernel> {
    let table = symbol.table(grid)?;
    Ok(DiscreteKernel {
        grid: grid.clone(),
        values: kernel_from_table(grid, &table),
        smoothing: None,
    })
}

/// Kernel of `σ(ν)·exp(-½(s h |ν|)²)` with `h` the largest spacing.
///
/// The sharp lattice cutoff makes the raw kernel oscillate from lag to lag;
/// the Gaussian factor removes that oscillation while leaving the kernel
/// unchanged a few cells away from the origin.
pub fn extract_smoothed_kernel(symbol: &SymbolSpec, grid: &Grid, s: f64) -> Result<DiscreteKernel> {
    let table = symbol.table(grid)?;
    let width = s * grid.max_spacing();
    let smoothed: Vec<f64> = table
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let nu = grid.frequency(i);
            let r2: f64 = nu.iter().map(|a| a * a).sum();
            v * (-0.5 * width * width * r2).exp()
        })
        .collect();
    Ok(DiscreteKernel {
        grid: grid.clone(),
        values: kernel_from_table(grid, &smoothed),
        smoothing: Some(s),
    })
}

impl DiscreteKernel {
    /// Lag vector at index `i`.
    pub fn lag(&self, i: usize) -> [f64; 3] {
        let w = self.grid.wavenumbers(i);
        let mut out = [w[0] as f64 * self.grid.h_x(), 0.0, 0.0];
        for a in 0..self.grid.d() - 1 {
            out[a + 1] = w[a + 1] as f64 / self.grid.n_y()[a] as f64;
        }
        out
    }

    /// `Σ k · cell volume`, which equals `σ(0)`.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// `max |k(w) - k(-w)|` relative to `max |k|`.
    pub fn evenness_defect(&self) -> f64 {
        let scale = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let defect = (0..self.values.len())
            .map(|i| (self.values[i] - self.values[self.grid.mirror(i)]).abs())
            .fold(0.0, f64::max);
        defect / scale
    }

    /// Sign of `K = -k` at each lag; the origin is reported as 0.
    pub fn sign_map(&self) -> Vec<i8> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                if i == 0 || k == 0.0 {
                    0
                } else if k < 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect()
    }

    /// Smallest value of `K = -k` over the window `|x| ≤ X/2`, `|w| ≥ inner·h`,
    /// together with the largest value in the same window.
    pub fn interior_extremes(&self, inner: f64) -> (f64, f64) {
        let r0 = inner * self.grid.max_spacing();
        let xmax = 0.5 * self.grid.half_length();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, &k) in self.values.iter().enumerate() {
            let w = self.lag(i);
            let r = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            if w[0].abs() > xmax || r < r0 {
                continue;
            }
            lo = lo.min(-k);
            hi = hi.max(-k);
        }
        (lo, hi)
    }
}

/// Least-squares slope of `log K` against `log |x|` along the `x` axis.
///
/// The fit uses lags in `[8h, X/4]`; with torus directions the upper end is
/// also capped at `1/4` so that periodic images across the torus stay negligible.
pub fn homogeneity_exponent(kernel: &DiscreteKernel) -> Result<f64> {
    let grid = &kernel.grid;
    let h = grid.max_spacing();
    let lo = 8.0 * h;
    let mut hi = 0.25 * grid.half_length();
    if grid.d() > 1 {
        hi = hi.min(0.25);
    }
    let mut pts = Vec::new();
    for j in 1..grid.n_x() / 2 {
        let x = j as f64 * grid.h_x();
        if x < lo || x > hi {
            continue;
        }
        let k = -kernel.values[j];
        if !(k > 0.0) {
            return Err(Error::NonPositiveKernel(x));
        }
        pts.push((x.ln(), k.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "fit window [{lo}, {hi}] holds only {} lags",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// `(ℒf)(w) = Σ_{w'≠w} (f(w) - f(w'))·K(w - w')·cell volume` by direct summation.
pub fn brute_force_apply(f: &RealField, kernel: &DiscreteKernel) -> Result<RealField> {
    f.check_grid(&kernel.grid)?;
    let grid = &kernel.grid;
    let n = grid.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(n, BRUTE_FORCE_LIMIT));
    }
    let multis: Vec<[usize; 3]> = (0..n).map(|i| grid.unflatten(i)).collect();
    let cv = grid.cell_volume();
    let values = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut acc = 0.0;
            for q in 0..n {
                if q == p {
                    continue;
                }
                let lag = lag_index(grid, multis[p], multis[q]);
                acc += (f.values[p] - f.values[q]) * (-kernel.values[lag]);
            }
            acc * cv
        })
        .collect();
    Ok(RealField {
        grid: f.grid.clone(),
        values,
    })
}

/// Flat lag index of `w_p - w_q`.
pub(crate) fn lag_index(grid: &Grid, p: [usize; 3], q: [usize; 3]) -> usize {
    let mut m = [(p[0] + grid.n_x() - q[0]) % grid.n_x(), 0, 0];
    for a in 0..grid.d() - 1 {
        let ny = grid.n_y()[a];
        m[a + 1] = (p[a + 1] + ny - q[a + 1]) % ny;
    }
    grid.flatten(m)
}

/// Sign classification of the kernel on the certification window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Positive,
    Mixed,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Positive => "positive",
            Verdict::Mixed => "mixed",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanEntry {
    pub poisson: f64,
    pub verdict: Verdict,
    /// Smallest `K` on the window.
    pub min_interior: f64,
    /// Smallest `K` divided by the largest `K` on the window.
    pub min_relative: f64,
    /// Fitted decay exponent along the `x` axis, when the slice is positive.
    pub fitted_exponent: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
    /// Half-Laplacian on the same grid, as a reference for sign and decay.
    pub reference: ScanEntry,
    pub window: String,
    pub smoothing: f64,
}

impl ScanReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("nu,verdict,min_interior,fitted_exponent\n");
        for e in &self.entries {
            let fit = e
                .fitted_exponent
                .map(|v| format!("{v:.16e}"))
                .unwrap_or_else(|| "nan".into());
            out.push_str(&format!("{:.16e},{},{:.16e},{}\n", e.poisson, e.verdict, e.min_interior, fit));
        }
        out
    }
}

fn scan_one(symbol: &SymbolSpec, grid: &Grid, poisson: f64, s: f64) -> Result<ScanEntry> {
    let kernel = extract_smoothed_kernel(symbol, grid, s)?;
    let (lo, hi) = kernel.interior_extremes(WINDOW_INNER);
    Ok(ScanEntry {
        poisson,
        verdict: if lo > 0.0 { Verdict::Positive } else { Verdict::Mixed },
        min_interior: lo,
        min_relative: lo / hi,
        fitted_exponent: homogeneity_exponent(&kernel).ok(),
    })
}

/// Classify the reduced kernel for each Poisson ratio on `grid`.
///
/// Values within a few `1e-5` of zero relative to the window maximum are
/// resolution-limited; `min_relative` is reported so such cases can be judged.
pub fn positivity_scan(poissons: &[f64], grid: &Grid) -> Result<ScanReport> {
    let s = DEFAULT_SMOOTHING;
    let entries = poissons
        .iter()
        .map(|&nu| scan_one(&SymbolSpec::pn_reduced(nu, grid.d())?, grid, nu, s))
        .collect::<Result<Vec<_>>>()?;
    let reference = scan_one(&SymbolSpec::half_laplacian(grid.d()), grid, 0.0, s)?;
    Ok(ScanReport {
        entries,
        reference,
        window: format!(
            "|x| <= X/2 = {}, |w| >= {}h = {}",
            0.5 * grid.half_length(),
            WINDOW_INNER,
            WINDOW_INNER * grid.max_spacing()
        ),
        smoothing: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::symbols::apply_operator;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn raw_kernel_is_even_and_massless() {
        let grid = build_grid(2, 6.0, 32, &[8]).unwrap();
        let k = extract_kernel(&SymbolSpec::pn_reduced(0.2, 2).unwrap(), &grid).unwrap();
        assert!(k.evenness_defect() < 1e-14);
        let scale = k.values[0] * grid.cell_volume();
        assert!(k.total_mass().abs() < 1e-12 * scale);
    }

    #[test]
    fn half_laplacian_kernel_is_positive_in_one_dimension() {
        let grid = build_grid(1, 16.0, 256, &[]).unwrap();
        let k = extract_kernel(&SymbolSpec::half_laplacian(1), &grid).unwrap();
        let (lo, _) = k.interior_extremes(1.0);
        assert!(lo >= 0.0);
        let smooth = extract_smoothed_kernel(&SymbolSpec::half_laplacian(1), &grid, DEFAULT_SMOOTHING).unwrap();
        let (lo, _) = smooth.interior_extremes(WINDOW_INNER);
        assert!(lo > 0.0);
    }

    #[test]
    fn smoothed_kernel_matches_continuum_decay() {
        // Periodized 1/(π x²): (π/(2X)²)/sin²(πx/(2X)) / π. The smoothing bias is
        // about (s h)²K''/(2K), below 1e-3 for these lags.
        let grid = build_grid(1, 16.0, 1024, &[]).unwrap();
        let k = extract_smoothed_kernel(&SymbolSpec::half_laplacian(1), &grid, DEFAULT_SMOOTHING).unwrap();
        let x_big = 2.0 * grid.half_length();
        for j in [100usize, 200, 300] {
            let x = j as f64 * grid.h_x();
            let exact = std::f64::consts::PI / (x_big * x_big) / (std::f64::consts::PI * x / x_big).sin().powi(2);
            assert!((-k.values[j] - exact).abs() < 2e-3 * exact, "lag {x}");
        }
    }

    #[test]
    fn spectral_and_direct_application_agree() {
        let grid = build_grid(1, 8.0, 64, &[]).unwrap();
        let sym = SymbolSpec::half_laplacian(1);
        let k = extract_kernel(&sym, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = RealField::new(grid.clone(), (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let a = apply_operator(&f, &sym).unwrap();
        let b = brute_force_apply(&f, &k).unwrap();
        assert!(a.zip_map(&b, |p, q| p - q).max_abs() <= 1e-9 * a.max_abs());
        let c = brute_force_apply(&RealField::constant(&grid, 2.0), &k).unwrap();
        assert!(c.max_abs() == 0.0);
    }

    #[test]
    fn spike_is_pushed_down() {
        let grid = build_grid(2, 4.0, 16, &[8]).unwrap();
        let k = extract_kernel(&SymbolSpec::pn_reduced(0.1, 2).unwrap(), &grid).unwrap();
        let mut f = RealField::zeros(&grid);
        f.values[37] = 1.0;
        let lf = brute_force_apply(&f, &k).unwrap();
        assert!(lf.values[37] > 0.0);
    }

    #[test]
    fn brute_force_refuses_large_grids() {
        let grid = build_grid(2, 4.0, 1024, &[16]).unwrap();
        let k = extract_kernel(&SymbolSpec::half_laplacian(2), &grid).unwrap();
        let f = RealField::zeros(&grid);
        assert!(matches!(brute_force_apply(&f, &k), Err(Error::TooLarge(..))));
    }

    #[test]
    fn one_dimensional_exponent() {
        let grid = build_grid(1, 64.0, 256, &[]).unwrap();
        let k = extract_smoothed_kernel(&SymbolSpec::half_laplacian(1), &grid, DEFAULT_SMOOTHING).unwrap();
        let p = homogeneity_exponent(&k).unwrap();
        assert!((p + 2.0).abs() < 0.05, "exponent {p}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let grid = build_grid(2, 4.0, 64, &[16]).unwrap();
        let r = positivity_scan(&[0.0, 0.45], &grid).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "nu,verdict,min_interior,fitted_exponent");
        assert_eq!(lines.len(), 3);
    }
}
