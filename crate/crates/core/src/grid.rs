//! Truncated periodic box for `ℝ × 𝕋^{d-1}` and its spectral transforms.
//!
//! The `x` axis is cut to `[-X, X)` with `n_x` points `x_j = -X + j h_x`; each
//! torus axis has unit period and points `y_l = l / n_y`. Fields are stored
//! lexicographically with `x` fastest. Spectral coefficients are stored in FFT
//! order along every axis: index `m` carries the signed wavenumber `m` for
//! `m < n/2` and `m - n` otherwise.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Relative tolerance for Hermitian symmetry before a spectrum is rejected as non-real.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Validated grid description with precomputed coordinates, frequencies and FFT plans.
#[derive(Clone)]
pub struct GridSpec {
    d: usize,
    half_length: f64,
    n_x: usize,
    n_y: Vec<usize>,
    x: Vec<f64>,
    xi: Vec<f64>,
    k: Vec<Vec<f64>>,
    plans: Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("d", &self.d)
            .field("half_length", &self.half_length)
            .field("n_x", &self.n_x)
            .field("n_y", &self.n_y)
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d
            && self.half_length == other.half_length
            && self.n_x == other.n_x
            && self.n_y == other.n_y
    }
}

/// Shared handle to a grid; fields hold one of these.
pub type Grid = Arc<GridSpec>;

/// Validate the parameters and build a grid.
pub fn build_grid(d: usize, half_length: f64, n_x: usize, n_y: &[usize]) -> Result<Grid> {
    GridSpec::new(d, half_length, n_x, n_y).map(Arc::new)
}

fn signed_index(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

impl GridSpec {
    pub fn new(d: usize, half_length: f64, n_x: usize, n_y: &[usize]) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidGrid(format!("dimension must be 1, 2 or 3, got {d}")));
        }
        if !(half_length.is_finite() && half_length >= 4.0) {
            return Err(Error::InvalidGrid(format!(
                "half length must be at least 4, got {half_length}"
            )));
        }
        if n_y.len() != d - 1 {
            return Err(Error::InvalidGrid(format!(
                "expected {} torus counts for d = {d}, got {}",
                d - 1,
                n_y.len()
            )));
        }
        for &n in std::iter::once(&n_x).chain(n_y) {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "point counts must be even and at least 4, got {n}"
                )));
            }
        }
        let h_x = 2.0 * half_length / n_x as f64;
        let x = (0..n_x).map(|j| -half_length + j as f64 * h_x).collect();
        let xi = (0..n_x)
            .map(|m| std::f64::consts::PI / half_length * signed_index(m, n_x) as f64)
            .collect();
        let k = n_y
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|m| 2.0 * std::f64::consts::PI * signed_index(m, n) as f64)
                    .collect()
            })
            .collect();
        let mut planner = FftPlanner::new();
        let plans = std::iter::once(n_x)
            .chain(n_y.iter().copied())
            .map(|n| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
            .collect();
        Ok(GridSpec {
            d,
            half_length,
            n_x,
            n_y: n_y.to_vec(),
            x,
            xi,
            k,
            plans,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> &[usize] {
        &self.n_y
    }

    pub fn h_x(&self) -> f64 {
        2.0 * self.half_length / self.n_x as f64
    }

    pub fn h_y(&self) -> Vec<f64> {
        self.n_y.iter().map(|&n| 1.0 / n as f64).collect()
    }

    /// Largest grid spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        self.h_y().into_iter().fold(self.h_x(), f64::max)
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.n_x * self.n_y.iter().product::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of transverse lines (product of the torus counts).
    pub fn lines(&self) -> usize {
        self.n_y.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h_x() * self.h_y().iter().product::<f64>()
    }

    /// Volume of the box, `2X` (the torus has unit volume).
    pub fn volume(&self) -> f64 {
        2.0 * self.half_length
    }

    /// `x` coordinates of the grid columns.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Torus coordinates along transverse axis `axis`.
    pub fn y(&self, axis: usize) -> Vec<f64> {
        let n = self.n_y[axis];
        (0..n).map(|l| l as f64 / n as f64).collect()
    }

    /// Frequencies `ξ` along `x`, FFT order.
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Frequencies `k` along transverse axis `axis`, FFT order.
    pub fn k(&self, axis: usize) -> &[f64] {
        &self.k[axis]
    }

    /// Multi-index `[i_x, i_y1, ...]` of a flat index.
    pub fn unflatten(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        out[0] = idx % self.n_x;
        idx /= self.n_x;
        for (a, &n) in self.n_y.iter().enumerate() {
            out[a + 1] = idx % n;
            idx /= n;
        }
        out
    }

    pub fn flatten(&self, multi: [usize; 3]) -> usize {
        let mut idx = 0;
        for a in (0..self.d - 1).rev() {
            idx = idx * self.n_y[a] + multi[a + 1];
        }
        idx * self.n_x + multi[0]
    }

    /// Frequency vector `ν = (ξ, k...)` at a flat spectral index; unused slots are 0.
    pub fn frequency(&self, idx: usize) -> [f64; 3] {
        let m = self.unflatten(idx);
        let mut nu = [self.xi[m[0]], 0.0, 0.0];
        for a in 0..self.d - 1 {
            nu[a + 1] = self.k[a][m[a + 1]];
        }
        nu
    }

    /// Signed wavenumber indices at a flat spectral index.
    pub fn wavenumbers(&self, idx: usize) -> [i64; 3] {
        let m = self.unflatten(idx);
        let mut out = [signed_index(m[0], self.n_x), 0, 0];
        for a in 0..self.d - 1 {
            out[a + 1] = signed_index(m[a + 1], self.n_y[a]);
        }
        out
    }

    /// Flat index of the lattice point `-ν`.
    pub fn mirror(&self, idx: usize) -> usize {
        let m = self.unflatten(idx);
        let mut out = [(self.n_x - m[0]) % self.n_x, 0, 0];
        for a in 0..self.d - 1 {
            out[a + 1] = (self.n_y[a] - m[a + 1]) % self.n_y[a];
        }
        self.flatten(out)
    }

    fn axis_len(&self, axis: usize) -> usize {
        if axis == 0 {
            self.n_x
        } else {
            self.n_y[axis - 1]
        }
    }

    fn axis_stride(&self, axis: usize) -> usize {
        (0..axis).map(|a| self.axis_len(a)).product()
    }

    /// In-place unnormalized FFT along every axis.
    pub(crate) fn fft_all(&self, data: &mut [Complex64], inverse: bool) {
        for axis in 0..self.d {
            let n = self.axis_len(axis);
            let stride = self.axis_stride(axis);
            let plan = if inverse {
                &self.plans[axis].1
            } else {
                &self.plans[axis].0
            };
            if stride == 1 {
                plan.process(data);
                continue;
            }
            let block = n * stride;
            let mut line = vec![Complex64::default(); n];
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            for base in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (i, c) in line.iter_mut().enumerate() {
                        *c = data[start + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (i, c) in line.iter().enumerate() {
                        data[start + i * stride] = *c;
                    }
                }
            }
        }
    }

    /// Apply the `(-1)^m` phase that accounts for the box starting at `x = -X`.
    fn apply_x_phase(&self, data: &mut [Complex64]) {
        for (idx, c) in data.iter_mut().enumerate() {
            if (idx % self.n_x) % 2 == 1 {
                *c = -*c;
            }
        }
    }
}

/// Real samples on a grid.
#[derive(Clone, Debug)]
pub struct RealField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// Complex coefficients on the dual lattice.
#[derive(Clone, Debug)]
pub struct SpectralField {
    pub grid: Grid,
    pub coefficients: Vec<Complex64>,
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field entry {i} is {}", values[i])));
        }
        Ok(RealField { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        RealField {
            values: vec![0.0; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        RealField {
            values: vec![c; grid.len()],
            grid: grid.clone(),
        }
    }

    /// Sample `f(x, y)` at every grid point; `y` holds the torus coordinates.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let ys: Vec<Vec<f64>> = (0..grid.d() - 1).map(|a| grid.y(a)).collect();
        let mut y = vec![0.0; grid.d() - 1];
        let values = (0..grid.len())
            .map(|idx| {
                let m = grid.unflatten(idx);
                for a in 0..grid.d() - 1 {
                    y[a] = ys[a][m[a + 1]];
                }
                f(grid.x()[m[0]], &y)
            })
            .collect();
        RealField {
            grid: grid.clone(),
            values,
        }
    }

    /// Sample a function of `x` only.
    pub fn from_x_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        let line: Vec<f64> = grid.x().iter().map(|&x| f(x)).collect();
        let values = (0..grid.len()).map(|idx| line[idx % grid.n_x()]).collect();
        RealField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete `L²` inner product (cell-volume weighted).
    pub fn dot(&self, other: &RealField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Cell-volume weighted sum.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &RealField, mut f: impl FnMut(f64, f64) -> f64) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Values along the transverse line `line` (fixed torus index).
    pub fn line(&self, line: usize) -> &[f64] {
        let n = self.grid.n_x();
        &self.values[line * n..(line + 1) * n]
    }

    /// Average over the torus directions, one value per `x` column.
    pub fn transverse_mean(&self) -> Vec<f64> {
        let n = self.grid.n_x();
        let lines = self.grid.lines();
        let mut out = vec![0.0; n];
        for l in 0..lines {
            for (o, v) in out.iter_mut().zip(self.line(l)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= lines as f64);
        out
    }

    pub(crate) fn check_grid(&self, other: &Grid) -> Result<()> {
        if *self.grid != **other {
            return Err(Error::ShapeMismatch(format!(
                "field lives on {:?}, expected {:?}",
                self.grid, other
            )));
        }
        Ok(())
    }
}

impl SpectralField {
    pub fn zeros(grid: &Grid) -> Self {
        SpectralField {
            coefficients: vec![Complex64::default(); grid.len()],
            grid: grid.clone(),
        }
    }

    /// Largest deviation from Hermitian symmetry, relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.coefficients.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let defect = (0..self.coefficients.len())
            .map(|i| (self.coefficients[i] - self.coefficients[self.grid.mirror(i)].conj()).norm())
            .fold(0.0, f64::max);
        defect / scale
    }

    /// Multiply every coefficient by a real factor given per flat index.
    pub fn scale_by(&mut self, factors: &[f64]) {
        for (c, f) in self.coefficients.iter_mut().zip(factors) {
            *c *= f;
        }
    }
}

/// Discrete transform `f̂(ν) = Σ f(w) e^{-i⟨ν,w⟩} · cell volume`.
pub fn forward_transform(f: &RealField) -> SpectralField {
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_in_place(&f.grid, &mut data);
    SpectralField {
        grid: f.grid.clone(),
        coefficients: data,
    }
}

pub(crate) fn forward_in_place(grid: &GridSpec, data: &mut [Complex64]) {
    grid.fft_all(data, false);
    grid.apply_x_phase(data);
    let cv = grid.cell_volume();
    data.iter_mut().for_each(|c| *c *= cv);
}

pub(crate) fn inverse_in_place(grid: &GridSpec, data: &mut [Complex64]) {
    grid.apply_x_phase(data);
    grid.fft_all(data, true);
    let scale = 1.0 / grid.volume();
    data.iter_mut().for_each(|c| *c *= scale);
}

/// Inverse transform returning the complex samples `(1/V) Σ F(ν) e^{i⟨ν,w⟩}`.
pub fn inverse_transform_complex(f: &SpectralField) -> Vec<Complex64> {
    let mut data = f.coefficients.clone();
    inverse_in_place(&f.grid, &mut data);
    data
}

/// Outcome of a real inverse transform, with the size of the discarded imaginary part.
#[derive(Clone, Debug)]
pub struct RealInverse {
    pub field: RealField,
    /// Largest discarded imaginary part relative to the largest real value.
    pub imaginary_residue: f64,
}

/// Inverse transform to a real field; rejects spectra that are not Hermitian.
pub fn inverse_transform(f: &SpectralField) -> Result<RealInverse> {
    let defect = f.hermitian_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian(defect));
    }
    let data = inverse_transform_complex(f);
    let scale = data.iter().fold(0.0_f64, |m, c| m.max(c.re.abs()));
    let imag = data.iter().fold(0.0_f64, |m, c| m.max(c.im.abs()));
    let field = RealField {
        grid: f.grid.clone(),
        values: data.iter().map(|c| c.re).collect(),
    };
    Ok(RealInverse {
        field,
        imaginary_residue: if scale > 0.0 { imag / scale } else { imag },
    })
}

/// Apply a real, even multiplier table (FFT order) to a real field.
pub(crate) fn apply_multiplier(f: &RealField, table: &[f64]) -> RealField {
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let grid = &f.grid;
    grid.fft_all(&mut data, false);
    let n = grid.len() as f64;
    for (c, s) in data.iter_mut().zip(table) {
        *c *= s / n;
    }
    grid.fft_all(&mut data, true);
    RealField {
        grid: f.grid.clone(),
        values: data.iter().map(|c| c.re).collect(),
    }
}

/// Spectral `∂ₓ` of a field that is periodic in `x`; the Nyquist mode is dropped.
pub fn derivative_x(f: &RealField) -> RealField {
    let grid = &f.grid;
    let n = grid.n_x();
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    grid.fft_all(&mut data, false);
    let scale = 1.0 / grid.len() as f64;
    for (idx, c) in data.iter_mut().enumerate() {
        let m = idx % n;
        *c = if m == n / 2 {
            Complex64::default()
        } else {
            *c * Complex64::new(0.0, grid.xi()[m] * scale)
        };
    }
    grid.fft_all(&mut data, true);
    RealField {
        grid: f.grid.clone(),
        values: data.iter().map(|c| c.re).collect(),
    }
}

/// `f(· + c)` along `x` for a field periodic in `x`, by phase shift of the
/// trigonometric interpolant (the Nyquist mode is treated as a cosine).
pub fn shift_x(f: &RealField, c: f64) -> RealField {
    let grid = &f.grid;
    let n = grid.n_x();
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    grid.fft_all(&mut data, false);
    let scale = 1.0 / grid.len() as f64;
    let phases: Vec<Complex64> = (0..n)
        .map(|m| {
            let xi = grid.xi()[m];
            if m == n / 2 {
                Complex64::new((xi * c).cos() * scale, 0.0)
            } else {
                Complex64::from_polar(scale, xi * c)
            }
        })
        .collect();
    for (idx, v) in data.iter_mut().enumerate() {
        *v *= phases[idx % n];
    }
    grid.fft_all(&mut data, true);
    RealField {
        grid: f.grid.clone(),
        values: data.iter().map(|c| c.re).collect(),
    }
}

/// Trigonometric interpolant of one periodic `x` line, evaluated at `x`.
pub struct LineInterpolant {
    half_length: f64,
    coeffs: Vec<Complex64>,
    xi: Vec<f64>,
}

impl LineInterpolant {
    pub fn new(grid: &GridSpec, line: &[f64]) -> Self {
        let n = grid.n_x();
        let mut data: Vec<Complex64> = line.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        grid.plans[0].0.process(&mut data);
        data.iter_mut().for_each(|c| *c /= n as f64);
        LineInterpolant {
            half_length: grid.half_length(),
            coeffs: data,
            xi: grid.xi().to_vec(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.coeffs.len();
        let t = x + self.half_length;
        let mut acc = 0.0;
        for m in 0..n {
            let ph = self.xi[m] * t;
            let c = self.coeffs[m];
            acc += if m == n / 2 {
                c.re * ph.cos()
            } else {
                c.re * ph.cos() - c.im * ph.sin()
            };
        }
        acc
    }

    /// Derivative of the interpolant at `x`.
    pub fn eval_derivative(&self, x: f64) -> f64 {
        let n = self.coeffs.len();
        let t = x + self.half_length;
        let mut acc = 0.0;
        for m in 0..n {
            if m == n / 2 {
                continue;
            }
            let ph = self.xi[m] * t;
            let c = self.coeffs[m];
            acc -= self.xi[m] * (c.re * ph.sin() + c.im * ph.cos());
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: &Grid, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        RealField::new(grid.clone(), values).unwrap()
    }

    #[test]
    fn builds_documented_grids() {
        let g = build_grid(1, 64.0, 256, &[]).unwrap();
        assert_eq!(g.h_x(), 0.5);
        assert!((g.xi()[1] - PI / 64.0).abs() < 1e-16);
        let g = build_grid(2, 64.0, 256, &[32]).unwrap();
        assert_eq!(g.len(), 256 * 32);
        let mut k: Vec<i64> = g.k(0).iter().map(|v| (v / (2.0 * PI)).round() as i64).collect();
        k.sort();
        assert_eq!(k, (-16..16).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(build_grid(1, 2.0, 256, &[]).is_err());
        assert!(build_grid(1, 64.0, 255, &[]).is_err());
        assert!(build_grid(2, 64.0, 256, &[7]).is_err());
        assert!(build_grid(2, 64.0, 256, &[2]).is_err());
        assert!(build_grid(4, 64.0, 256, &[8, 8, 8]).is_err());
        assert!(build_grid(2, 64.0, 256, &[]).is_err());
    }

    #[test]
    fn constant_maps_to_zero_mode() {
        let g = build_grid(3, 5.0, 8, &[4, 6]).unwrap();
        let fh = forward_transform(&RealField::constant(&g, 1.5));
        assert!((fh.coefficients[0].re - 1.5 * 10.0).abs() < 1e-12);
        let rest = fh.coefficients[1..].iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        assert!(rest < 1e-12);
    }

    #[test]
    fn single_cosine_splits_between_plus_minus() {
        let g = build_grid(1, 8.0, 32, &[]).unwrap();
        let f = RealField::from_x_fn(&g, |x| (PI * x / 8.0).cos());
        let fh = forward_transform(&f);
        assert!((fh.coefficients[1].re - 8.0).abs() < 1e-12);
        assert!((fh.coefficients[31].re - 8.0).abs() < 1e-12);
        let other = (2..31).map(|i| fh.coefficients[i].norm()).fold(0.0, f64::max);
        assert!(other < 1e-12 && fh.coefficients[0].norm() < 1e-12);
    }

    #[test]
    fn forward_matches_direct_summation() {
        let g = build_grid(2, 4.0, 8, &[4]).unwrap();
        let f = random_field(&g, 11);
        let fh = forward_transform(&f);
        let cv = g.cell_volume();
        let y = g.y(0);
        for idx in 0..g.len() {
            let nu = g.frequency(idx);
            let mut acc = Complex64::default();
            for p in 0..g.len() {
                let m = g.unflatten(p);
                let phase = -(nu[0] * g.x()[m[0]] + nu[1] * y[m[1]]);
                acc += f.values[p] * Complex64::from_polar(1.0, phase);
            }
            assert!((acc * cv - fh.coefficients[idx]).norm() < 1e-12);
        }
    }

    #[test]
    fn shift_derivative_and_interpolant_agree_with_exact_mode() {
        let g = build_grid(2, 5.0, 32, &[4]).unwrap();
        let xi = 3.0 * PI / 5.0;
        let f = RealField::from_fn(&g, |x, y| (xi * x + 0.4).sin() * (1.0 + y[0]));
        let s = shift_x(&f, 0.37);
        let d = derivative_x(&f);
        for idx in 0..g.len() {
            let m = g.unflatten(idx);
            let (x, y) = (g.x()[m[0]], g.y(0)[m[1]]);
            assert!((s.values[idx] - (xi * (x + 0.37) + 0.4).sin() * (1.0 + y)).abs() < 1e-13);
            assert!((d.values[idx] - xi * (xi * x + 0.4).cos() * (1.0 + y)).abs() < 1e-12);
        }
        let p = LineInterpolant::new(&g, f.line(0));
        for &x in &[-4.9, -0.123, 2.71] {
            assert!((p.eval(x) - (xi * x + 0.4).sin()).abs() < 1e-13);
            assert!((p.eval_derivative(x) - xi * (xi * x + 0.4).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_field() {
        let g = build_grid(2, 4.0, 8, &[4]).unwrap();
        let out = inverse_transform(&SpectralField::zeros(&g)).unwrap();
        assert!(out.field.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_inverse_matches_analytic() {
        let g = build_grid(1, 6.0, 16, &[]).unwrap();
        let mut fh = SpectralField::zeros(&g);
        let c = Complex64::new(0.3, -0.8);
        fh.coefficients[1] = c;
        fh.coefficients[15] = c.conj();
        let out = inverse_transform(&fh).unwrap().field;
        let xi = PI / 6.0;
        for (j, &x) in g.x().iter().enumerate() {
            let exact = 2.0 * (c * Complex64::from_polar(1.0, xi * x)).re / 12.0;
            assert!((out.values[j] - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn non_hermitian_spectrum_is_rejected() {
        let g = build_grid(1, 6.0, 16, &[]).unwrap();
        let mut fh = SpectralField::zeros(&g);
        fh.coefficients[1] = Complex64::new(1.0, 0.0);
        assert!(matches!(inverse_transform(&fh), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn rejects_wrong_length_and_non_finite() {
        let g = build_grid(1, 6.0, 16, &[]).unwrap();
        assert!(RealField::new(g.clone(), vec![0.0; 15]).is_err());
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(RealField::new(g, v).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn round_trip_parseval_and_hermitian(seed in 0u64..10_000, d in 1usize..=3) {
            let g = match d {
                1 => build_grid(1, 7.0, 64, &[]).unwrap(),
                2 => build_grid(2, 4.5, 16, &[8]).unwrap(),
                _ => build_grid(3, 4.0, 8, &[4, 6]).unwrap(),
            };
            let f = random_field(&g, seed);
            let fh = forward_transform(&f);
            prop_assert!(fh.hermitian_defect() < 1e-13);
            let back = inverse_transform(&fh).unwrap();
            prop_assert!(back.imaginary_residue < 1e-12);
            let err = back.field.zip_map(&f, |a, b| a - b).max_abs();
            prop_assert!(err <= 1e-12 * f.max_abs());
            let lhs = f.dot(&f);
            let rhs: f64 = fh.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>() / g.volume();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs);
        }
    }
}
