//! Fourier multipliers: the reduced Peierls–Nabarro symbol, the half-Laplacian,
//! the coupled 2×2 symbol, and the multiplier recovering `u₃` from `u₁`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, Grid, RealField};

fn check_poisson(nu: f64) -> Result<()> {
    if nu > -1.0 && nu < 0.5 {
        Ok(())
    } else {
        Err(Error::PoissonOutOfRange(nu))
    }
}

/// `|k|³ / ((1-ν)k₁² + k₂²)`, zero at `k = 0`.
pub fn sigma_pn(nu: f64, k: [f64; 2]) -> Result<f64> {
    check_poisson(nu)?;
    Ok(pn_unchecked(nu, k[0], k[1] * k[1]))
}

fn pn_unchecked(nu: f64, k1: f64, k2_sq: f64) -> f64 {
    let r2 = k1 * k1 + k2_sq;
    if r2 == 0.0 {
        return 0.0;
    }
    r2 * r2.sqrt() / ((1.0 - nu) * k1 * k1 + k2_sq)
}

/// Euclidean norm `|k|`.
pub fn sigma_half(k: &[f64]) -> f64 {
    k.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Symmetric 2×2 symbol of the coupled `(u₁, u₃)` system; zero at `k = 0`.
pub fn matrix_symbol(nu: f64, k: [f64; 2]) -> Result<[[f64; 2]; 2]> {
    check_poisson(nu)?;
    let [k1, k2] = k;
    let r = sigma_half(&k);
    if r == 0.0 {
        return Ok([[0.0; 2]; 2]);
    }
    let a = 1.0 - nu;
    let d1 = k2 * k2 / r + k1 * k1 / (a * r);
    let off = nu * k1 * k2 / (a * r);
    let d2 = k1 * k1 / r + k2 * k2 / (a * r);
    Ok([[d1, off], [off, d2]])
}

/// `-ν k₁k₂ / ((1-ν)k₁² + k₂²)`, the factor with `û₃ = m(k) û₁`; zero at `k = 0`.
pub fn u3_multiplier(nu: f64, k: [f64; 2]) -> Result<f64> {
    check_poisson(nu)?;
    let [k1, k2] = k;
    let den = (1.0 - nu) * k1 * k1 + k2 * k2;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(-nu * k1 * k2 / den)
}

/// Symbol values supplied on a full lattice (FFT order along each axis).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSymbol {
    pub half_length: f64,
    pub n_x: usize,
    pub n_y: Vec<usize>,
    pub values: Vec<f64>,
}

impl TabulatedSymbol {
    /// Build from lattice values, checking `σ(0) = 0`, positivity and evenness.
    /// Evenness within `1e-12` relative is accepted and then made exact by averaging.
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidSymbol(format!(
                "table has {} entries, lattice has {}",
                values.len(),
                grid.len()
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidSymbol(format!("value at zero frequency is {}", values[0])));
        }
        let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut even = values.clone();
        for i in 0..values.len() {
            let j = grid.mirror(i);
            let (a, b) = (values[i], values[j]);
            if !a.is_finite() || (i != 0 && a <= 0.0) {
                return Err(Error::InvalidSymbol(format!(
                    "value {a} at lattice index {:?} is not positive",
                    grid.wavenumbers(i)
                )));
            }
            if (a - b).abs() > 1e-12 * scale {
                return Err(Error::InvalidSymbol(format!(
                    "table is not even at {:?}: {a} vs {b}",
                    grid.wavenumbers(i)
                )));
            }
            even[i] = 0.5 * (a + b);
        }
        Ok(TabulatedSymbol {
            half_length: grid.half_length(),
            n_x: grid.n_x(),
            n_y: grid.n_y().to_vec(),
            values: even,
        })
    }

    /// Read a CSV with rows `m_x[, m_y1[, m_y2]], value` of signed wavenumber
    /// indices; a non-numeric first row is treated as a header.
    pub fn from_csv(path: &Path, grid: &Grid) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text, grid)
    }

    pub fn parse_csv(text: &str, grid: &Grid) -> Result<Self> {
        let d = grid.d();
        let mut values = vec![f64::NAN; grid.len()];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if lineno == 0 && cols[0].parse::<i64>().is_err() {
                continue;
            }
            if cols.len() != d + 1 {
                return Err(Error::InvalidSymbol(format!(
                    "line {}: expected {} columns, got {}",
                    lineno + 1,
                    d + 1,
                    cols.len()
                )));
            }
            let bad = |what: &str| Error::InvalidSymbol(format!("line {}: bad {what}", lineno + 1));
            let mut multi = [0usize; 3];
            for a in 0..d {
                let n = if a == 0 { grid.n_x() } else { grid.n_y()[a - 1] } as i64;
                let m: i64 = cols[a].parse().map_err(|_| bad("index"))?;
                if m < -n / 2 || m >= n / 2 {
                    return Err(bad("index range"));
                }
                multi[a] = m.rem_euclid(n) as usize;
            }
            let v: f64 = cols[d].parse().map_err(|_| bad("value"))?;
            values[grid.flatten(multi)] = v;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidSymbol(format!(
                "missing lattice point {:?}",
                grid.wavenumbers(i)
            )));
        }
        Self::new(grid, values)
    }

    fn matches(&self, grid: &Grid) -> bool {
        self.half_length == grid.half_length() && self.n_x == grid.n_x() && self.n_y == grid.n_y()
    }
}

/// Which multiplier a [`SymbolSpec`] carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SymbolKind {
    HalfLaplacian,
    PnReduced { poisson: f64 },
    Tabulated(TabulatedSymbol),
}

/// A Fourier multiplier of order one on `ℝ × 𝕋^{d-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolSpec {
    pub kind: SymbolKind,
    pub d: usize,
}

impl SymbolSpec {
    pub fn half_laplacian(d: usize) -> Self {
        SymbolSpec {
            kind: SymbolKind::HalfLaplacian,
            d,
        }
    }

    /// Reduced Peierls–Nabarro symbol. For `d = 1` it is `|ξ|/(1-ν)`; for
    /// `d = 3` the transverse frequency is the Euclidean norm of both torus components.
    pub fn pn_reduced(poisson: f64, d: usize) -> Result<Self> {
        check_poisson(poisson)?;
        Ok(SymbolSpec {
            kind: SymbolKind::PnReduced { poisson },
            d,
        })
    }

    pub fn tabulated(table: TabulatedSymbol) -> Self {
        let d = table.n_y.len() + 1;
        SymbolSpec {
            kind: SymbolKind::Tabulated(table),
            d,
        }
    }

    /// Value at a frequency vector `(ξ, k...)`; tabulated symbols cannot be
    /// evaluated off their lattice and return `None`.
    pub fn eval(&self, nu: &[f64]) -> Option<f64> {
        match &self.kind {
            SymbolKind::HalfLaplacian => Some(sigma_half(nu)),
            SymbolKind::PnReduced { poisson } => {
                let k2_sq: f64 = nu[1..].iter().map(|v| v * v).sum();
                Some(pn_unchecked(*poisson, nu[0], k2_sq))
            }
            SymbolKind::Tabulated(_) => None,
        }
    }

    /// Symbol values on the lattice of `grid`, FFT order.
    pub fn table(&self, grid: &Grid) -> Result<Vec<f64>> {
        if self.d != grid.d() {
            return Err(Error::ShapeMismatch(format!(
                "symbol has d = {}, grid has d = {}",
                self.d,
                grid.d()
            )));
        }
        if let SymbolKind::Tabulated(t) = &self.kind {
            if !t.matches(grid) {
                return Err(Error::ShapeMismatch("tabulated symbol lattice differs from grid".into()));
            }
            return Ok(t.values.clone());
        }
        Ok((0..grid.len())
            .map(|i| {
                let nu = grid.frequency(i);
                self.eval(&nu[..grid.d()]).unwrap_or(0.0)
            })
            .collect())
    }
}

/// `c_ℒ` with `σ(ξ, 0) = c_ℒ |ξ|`; errors if the ratio is not constant.
pub fn reduced_1d_constant(symbol: &SymbolSpec) -> Result<f64> {
    let ratios: Vec<f64> = match &symbol.kind {
        SymbolKind::Tabulated(t) => {
            let step = std::f64::consts::PI / t.half_length;
            (1..t.n_x / 2)
                .map(|m| t.values[m] / (m as f64 * step))
                .collect()
        }
        _ => [1e-3, 0.1, 1.0, 7.3, 250.0]
            .iter()
            .map(|&xi| {
                let mut nu = vec![0.0; symbol.d];
                nu[0] = xi;
                symbol.eval(&nu).unwrap_or(0.0) / xi
            })
            .collect(),
    };
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / hi.abs().max(f64::MIN_POSITIVE);
    if !(lo > 0.0) || spread > 1e-12 {
        return Err(Error::NotReducible(spread));
    }
    Ok(ratios[0])
}

/// Lattice infimum and supremum of `σ(ν)/|ν|` over `ν ≠ 0`.
pub fn symbol_bounds(symbol: &SymbolSpec, grid: &Grid) -> Result<(f64, f64)> {
    let table = symbol.table(grid)?;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for (i, s) in table.iter().enumerate().skip(1) {
        let nu = grid.frequency(i);
        let r = s / sigma_half(&nu);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if !(lo > 0.0) {
        return Err(Error::BoundViolated(format!("lattice infimum of σ/|ν| is {lo}")));
    }
    Ok((lo, hi))
}

/// A symbol tabulated on a specific grid, ready to apply.
#[derive(Clone, Debug)]
pub struct Operator {
    pub grid: Grid,
    pub table: Vec<f64>,
}

impl Operator {
    pub fn new(symbol: &SymbolSpec, grid: &Grid) -> Result<Self> {
        Ok(Operator {
            grid: grid.clone(),
            table: symbol.table(grid)?,
        })
    }

    pub fn apply(&self, f: &RealField) -> Result<RealField> {
        f.check_grid(&self.grid)?;
        Ok(apply_multiplier(f, &self.table))
    }

    /// `(σ + μ)^{-1}` applied spectrally.
    pub fn apply_resolvent(&self, f: &RealField, mu: f64) -> Result<RealField> {
        f.check_grid(&self.grid)?;
        let t: Vec<f64> = self.table.iter().map(|s| 1.0 / (s + mu)).collect();
        Ok(apply_multiplier(f, &t))
    }
}

/// `inverse_transform(σ · forward_transform(f))`.
pub fn apply_operator(f: &RealField, symbol: &SymbolSpec) -> Result<RealField> {
    Operator::new(symbol, &f.grid)?.apply(f)
}

/// Homogeneous `Ḣ^s` seminorm `((1/V) Σ |ν|^{2s} |f̂|²)^{1/2}` computed spectrally.
pub fn homogeneous_seminorm(f: &RealField, s: f64) -> f64 {
    let fh = crate::grid::forward_transform(f);
    let grid = &f.grid;
    let sum: f64 = fh
        .coefficients
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let nu = grid.frequency(i);
            let r = sigma_half(&nu);
            if r == 0.0 {
                0.0
            } else {
                r.powf(2.0 * s) * c.norm_sqr()
            }
        })
        .sum();
    (sum / grid.volume()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        RealField::new(grid.clone(), values).unwrap()
    }

    #[test]
    fn pn_symbol_values() {
        assert_eq!(sigma_pn(0.0, [1.0, 0.0]).unwrap(), 1.0);
        assert!((sigma_pn(0.25, [1.0, 0.0]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(sigma_pn(0.3, [0.0, 0.0]).unwrap(), 0.0);
        assert!(sigma_pn(0.5, [1.0, 0.0]).is_err());
        assert!(sigma_pn(-1.0, [1.0, 0.0]).is_err());
    }

    #[test]
    fn half_laplacian_values() {
        assert_eq!(sigma_half(&[0.0, 0.0]), 0.0);
        assert_eq!(sigma_half(&[3.0, 4.0]), 5.0);
        let two_pi = 2.0 * std::f64::consts::PI;
        assert_eq!(sigma_half(&[0.0, two_pi]), two_pi);
    }

    #[test]
    fn matrix_symbol_cases() {
        let m = matrix_symbol(0.0, [0.7, -1.9]).unwrap();
        let r = sigma_half(&[0.7, -1.9]);
        assert!((m[0][0] - r).abs() < 1e-14 && (m[1][1] - r).abs() < 1e-14);
        assert_eq!(m[0][1], 0.0);
        let m = matrix_symbol(0.25, [1.0, 1.0]).unwrap();
        assert!((m[0][1] - 1.0 / (3.0 * 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(m[0][1], m[1][0]);
        assert_eq!(matrix_symbol(0.2, [0.0, 0.0]).unwrap(), [[0.0; 2]; 2]);
    }

    #[test]
    fn u3_multiplier_cases() {
        assert_eq!(u3_multiplier(0.0, [2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(u3_multiplier(0.3, [0.0, 3.0]).unwrap(), 0.0);
        assert!((u3_multiplier(0.25, [1.0, 1.0]).unwrap() + 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn reduced_constant() {
        assert_eq!(reduced_1d_constant(&SymbolSpec::half_laplacian(2)).unwrap(), 1.0);
        let c = reduced_1d_constant(&SymbolSpec::pn_reduced(0.25, 2).unwrap()).unwrap();
        assert!((c - 4.0 / 3.0).abs() < 1e-14);
        let c = reduced_1d_constant(&SymbolSpec::pn_reduced(0.0, 2).unwrap()).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reduced_constant_rejects_non_homogeneous_table() {
        let grid = build_grid(1, 8.0, 16, &[]).unwrap();
        let values: Vec<f64> = (0..16).map(|i| grid.xi()[i].abs().powf(1.5)).collect();
        let t = TabulatedSymbol::new(&grid, values).unwrap();
        assert!(matches!(
            reduced_1d_constant(&SymbolSpec::tabulated(t)),
            Err(Error::NotReducible(_))
        ));
    }

    #[test]
    fn bounds_match_parametrization() {
        let grid = build_grid(2, 8.0, 32, &[16]).unwrap();
        let (c, cc) = symbol_bounds(&SymbolSpec::half_laplacian(2), &grid).unwrap();
        assert!((c - 1.0).abs() < 1e-14 && (cc - 1.0).abs() < 1e-14);
        let (c, cc) = symbol_bounds(&SymbolSpec::pn_reduced(0.25, 2).unwrap(), &grid).unwrap();
        assert!((c - 1.0).abs() < 1e-10 && (cc - 4.0 / 3.0).abs() < 1e-10);
        let (c, cc) = symbol_bounds(&SymbolSpec::pn_reduced(-0.4, 2).unwrap(), &grid).unwrap();
        assert!((c - 5.0 / 7.0).abs() < 1e-10 && (cc - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tabulated_csv_round_trip() {
        let grid = build_grid(2, 4.0, 8, &[4]).unwrap();
        let sym = SymbolSpec::pn_reduced(0.1, 2).unwrap();
        let table = sym.table(&grid).unwrap();
        let mut csv = String::from("m_x,m_y,value\n");
        for (i, v) in table.iter().enumerate() {
            let w = grid.wavenumbers(i);
            csv.push_str(&format!("{},{},{:.17e}\n", w[0], w[1], v));
        }
        let t = TabulatedSymbol::parse_csv(&csv, &grid).unwrap();
        assert_eq!(SymbolSpec::tabulated(t).table(&grid).unwrap(), table);
    }

    #[test]
    fn tabulated_rejects_odd_table() {
        let grid = build_grid(1, 4.0, 8, &[]).unwrap();
        let values: Vec<f64> = grid.xi().iter().map(|x| x.abs() + 0.01 * x).collect();
        assert!(TabulatedSymbol::new(&grid, values).is_err());
    }

    #[test]
    fn constants_are_annihilated_and_modes_scaled() {
        let grid = build_grid(2, 8.0, 32, &[8]).unwrap();
        let sym = SymbolSpec::pn_reduced(0.25, 2).unwrap();
        let lc = apply_operator(&RealField::constant(&grid, 3.0), &sym).unwrap();
        assert!(lc.max_abs() < 1e-13);
        let (xi, k) = (3.0 * std::f64::consts::PI / 8.0, 2.0 * 2.0 * std::f64::consts::PI);
        let f = RealField::from_fn(&grid, |x, y| (xi * x + k * y[0]).cos());
        let s = sym.eval(&[xi, k]).unwrap();
        let lf = apply_operator(&f, &sym).unwrap();
        let err = lf.zip_map(&f, |a, b| a - s * b).max_abs();
        assert!(err < 1e-12 * s);
    }

    #[test]
    fn half_laplacian_matches_singular_quadrature() {
        // (1/π) PV∫ f'(s)/(x - s) ds with the singularity removed by pairing x ± t.
        let grid = build_grid(1, 100.0, 4096, &[]).unwrap();
        let f = |x: f64| (-x * x).exp();
        let df = |x: f64| -2.0 * x * (-x * x).exp();
        let lf = apply_operator(&RealField::from_x_fn(&grid, f), &SymbolSpec::half_laplacian(1)).unwrap();
        let rule = crate::quadrature::GaussLegendre::new(40);
        let edges = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
        for j in (2000..2100).step_by(7) {
            let x = grid.x()[j];
            let pair = |t: f64| (df(x - t) - df(x + t)) / t;
            let acc: f64 = edges.windows(2).map(|w| rule.integrate(w[0], w[1], pair)).sum();
            let exact = acc / std::f64::consts::PI;
            assert!((lf.values[j] - exact).abs() < 1e-4, "x = {x}");
        }
    }

    #[test]
    fn one_dimensional_reduction() {
        let grid = build_grid(2, 8.0, 64, &[8]).unwrap();
        let line = build_grid(1, 8.0, 64, &[]).unwrap();
        let prof = |x: f64| (x / 2.0).tanh() * (-x * x / 20.0).exp();
        let sym = SymbolSpec::pn_reduced(0.25, 2).unwrap();
        let c = reduced_1d_constant(&sym).unwrap();
        let lf = apply_operator(&RealField::from_x_fn(&grid, prof), &sym).unwrap();
        let l1 = apply_operator(&RealField::from_x_fn(&line, prof), &SymbolSpec::half_laplacian(1)).unwrap();
        let scale = l1.max_abs();
        for idx in 0..grid.len() {
            assert!((lf.values[idx] - c * l1.values[idx % 64]).abs() <= 1e-12 * scale);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn symbols_are_even_positive_and_bounded(nu in -0.99f64..0.49, seed in 0u64..1000) {
            let grid = build_grid(2, 6.0, 16, &[8]).unwrap();
            let sym = SymbolSpec::pn_reduced(nu, 2).unwrap();
            let table = sym.table(&grid).unwrap();
            prop_assert_eq!(table[0], 0.0);
            for i in 0..grid.len() {
                prop_assert_eq!(table[i], table[grid.mirror(i)]);
                if i != 0 { prop_assert!(table[i] > 0.0); }
            }
            let (c, cc) = symbol_bounds(&sym, &grid).unwrap();
            prop_assert!(0.0 < c && c <= cc);

            let f = random_field(&grid, seed);
            let g = random_field(&grid, seed + 7919);
            let lf = apply_operator(&f, &sym).unwrap();
            let lg = apply_operator(&g, &sym).unwrap();
            let (a, b) = (f.dot(&lg), lf.dot(&g));
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300));
            prop_assert!(f.dot(&lf) >= 0.0);

            let h1 = homogeneous_seminorm(&f, 1.0);
            let nl = lf.norm_l2();
            prop_assert!(c * h1 <= nl * (1.0 + 1e-12));
            prop_assert!(nl <= cc * h1 * (1.0 + 1e-12));
        }
    }
}
