//! Periodic lattices on flat tori and Fourier-spectral calculus on them.
//!
//! A [`Grid`] discretizes `T^n = R^n / (L_1 Z x ... x L_n Z)` by `N_1 x ... x N_n`
//! equally spaced sites, stored in row-major order (the last axis varies
//! fastest). Derivatives are Fourier-spectral: the data on every grid line is
//! transformed, multiplied by `i k` and transformed back, with the Nyquist
//! mode's derivative set to zero. The resulting real operator is an exactly
//! antisymmetric matrix, so the discrete divergence theorem and discrete
//! integration by parts hold up to rounding.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{EymError, Result};
use crate::fields::MetricField;

/// Largest axis length for which derivatives are applied as a dense line
/// operator; longer axes go through the FFT directly.
const DENSE_LINE_LIMIT: usize = 64;

/// Periodic lattice of an `n`-torus.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

struct GridInner {
    sizes: Vec<usize>,
    lengths: Vec<f64>,
    strides: Vec<usize>,
    total: usize,
    /// Per-axis dense spectral derivative matrix, row-major `N x N`.
    derivative: Vec<Vec<f64>>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.sizes == other.inner.sizes
                && self
                    .inner
                    .lengths
                    .iter()
                    .zip(&other.inner.lengths)
                    .all(|(a, b)| a.to_bits() == b.to_bits()))
    }
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("sizes", &self.inner.sizes)
            .field("lengths", &self.inner.lengths)
            .finish()
    }
}

impl Grid {
    /// Builds a grid with the given per-axis site counts and periods.
    ///
    /// Requires `n = sizes.len()` in `{2, 3, 4}`, every `N_i >= 4` even and
    /// every `L_i > 0` finite.
    pub fn new(sizes: &[usize], lengths: &[f64]) -> Result<Self> {
        let n = sizes.len();
        if !(2..=4).contains(&n) {
            return Err(EymError::InvalidGrid(format!(
                "dimension must be 2, 3 or 4, got {n}"
            )));
        }
        if lengths.len() != n {
            return Err(EymError::InvalidGrid(format!(
                "{} lengths given for {n} axes",
                lengths.len()
            )));
        }
        for (axis, &size) in sizes.iter().enumerate() {
            if size < 4 || size % 2 != 0 {
                return Err(EymError::InvalidGrid(format!(
                    "axis {axis}: site count {size} must be even and at least 4"
                )));
            }
        }
        for (axis, &len) in lengths.iter().enumerate() {
            if !(len.is_finite() && len > 0.0) {
                return Err(EymError::InvalidGrid(format!(
                    "axis {axis}: period {len} must be positive"
                )));
            }
        }
        let mut strides = vec![1; n];
        for axis in (0..n - 1).rev() {
            strides[axis] = strides[axis + 1] * sizes[axis + 1];
        }
        let total = sizes.iter().product();
        let mut planner = FftPlanner::new();
        let forward: Vec<_> = sizes.iter().map(|&s| planner.plan_fft_forward(s)).collect();
        let inverse: Vec<_> = sizes.iter().map(|&s| planner.plan_fft_inverse(s)).collect();
        let derivative = (0..n)
            .map(|axis| {
                dense_derivative(sizes[axis], lengths[axis], &*forward[axis], &*inverse[axis])
            })
            .collect();
        Ok(Grid {
            inner: Arc::new(GridInner {
                sizes: sizes.to_vec(),
                lengths: lengths.to_vec(),
                strides,
                total,
                derivative,
                forward,
                inverse,
            }),
        })
    }

    /// Grid with `size` sites and period `length` along each of `n` axes.
    pub fn cubic(n: usize, size: usize, length: f64) -> Result<Self> {
        Grid::new(&vec![size; n], &vec![length; n])
    }

    /// Dimension `n` of the torus.
    pub fn dim(&self) -> usize {
        self.inner.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.inner.sizes
    }

    pub fn lengths(&self) -> &[f64] {
        &self.inner.lengths
    }

    /// Lattice spacing `L_i / N_i` along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.inner.lengths[axis] / self.inner.sizes[axis] as f64
    }

    pub fn num_sites(&self) -> usize {
        self.inner.total
    }

    /// Coordinate volume of one lattice cell, `prod_i h_i`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Integer coordinates of a site.
    pub fn multi_index(&self, site: usize) -> [usize; 4] {
        let mut idx = [0; 4];
        let mut rest = site;
        for axis in 0..self.dim() {
            idx[axis] = rest / self.inner.strides[axis];
            rest %= self.inner.strides[axis];
        }
        idx
    }

    /// Row-major site number of integer coordinates (taken modulo the sizes).
    pub fn site_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .enumerate()
            .map(|(axis, &i)| (i % self.inner.sizes[axis]) * self.inner.strides[axis])
            .sum()
    }

    /// Physical coordinates `x_i = j_i h_i` of a site (unused axes are zero).
    pub fn coords(&self, site: usize) -> [f64; 4] {
        let idx = self.multi_index(site);
        let mut x = [0.0; 4];
        for axis in 0..self.dim() {
            x[axis] = idx[axis] as f64 * self.spacing(axis);
        }
        x
    }

    /// Angular wavenumber of Fourier index `m` along `axis`, in the
    /// FFT ordering `0, 1, .., N/2, -N/2 + 1, .., -1`.
    pub fn wavenumber(&self, axis: usize, m: usize) -> f64 {
        let size = self.inner.sizes[axis];
        let signed = if m <= size / 2 {
            m as f64
        } else {
            m as f64 - size as f64
        };
        2.0 * std::f64::consts::PI * signed / self.inner.lengths[axis]
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.dim() {
            Ok(())
        } else {
            Err(EymError::AxisOutOfRange { axis, n: self.dim() })
        }
    }

    /// Spectral derivative of raw site values along `axis`.
    ///
    /// Panics if `values` does not hold one entry per site or `axis >= n`.
    pub fn partial(&self, values: &[f64], axis: usize) -> Vec<f64> {
        assert_eq!(values.len(), self.inner.total, "value count does not match grid");
        assert!(axis < self.dim(), "axis out of range");
        let size = self.inner.sizes[axis];
        if size <= DENSE_LINE_LIMIT {
            self.partial_dense(values, axis)
        } else {
            self.partial_fft(values, axis)
        }
    }

    fn partial_dense(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let size = self.inner.sizes[axis];
        let stride = self.inner.strides[axis];
        let matrix = &self.inner.derivative[axis];
        let mut out = vec![0.0; values.len()];
        let mut line = vec![0.0; size];
        for base in self.line_starts(axis) {
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = values[base + j * stride];
            }
            for i in 0..size {
                let row = &matrix[i * size..(i + 1) * size];
                let mut acc = 0.0;
                for (m, v) in row.iter().zip(&line) {
                    acc += m * v;
                }
                out[base + i * stride] = acc;
            }
        }
        out
    }

    /// Spectral derivative along `axis` computed line by line with the FFT.
    pub fn partial_fft(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let size = self.inner.sizes[axis];
        let stride = self.inner.strides[axis];
        let factors: Vec<f64> = (0..size)
            .map(|m| if m == size / 2 { 0.0 } else { self.wavenumber(axis, m) })
            .collect();
        let mut out = vec![0.0; values.len()];
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for base in self.line_starts(axis) {
            for (j, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(values[base + j * stride], 0.0);
            }
            self.inner.forward[axis].process(&mut buf);
            for (c, &k) in buf.iter_mut().zip(&factors) {
                *c = Complex::new(-c.im * k, c.re * k);
            }
            self.inner.inverse[axis].process(&mut buf);
            for (j, c) in buf.iter().enumerate() {
                out[base + j * stride] = c.re / size as f64;
            }
        }
        out
    }

    /// Applies the real Fourier multiplier `symbol(k)` to site values, where
    /// `k` holds the angular wavenumbers of a mode (Nyquist modes carry `+N/2`).
    ///
    /// The symbol should be even in `k` so that real data stays real.
    pub fn fourier_multiplier<F>(&self, values: &[f64], symbol: F) -> Vec<f64>
    where
        F: Fn(&[f64; 4]) -> f64,
    {
        assert_eq!(values.len(), self.inner.total, "value count does not match grid");
        let mut data: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        for axis in 0..self.dim() {
            self.transform_axis(&mut data, axis, true);
        }
        for (site, c) in data.iter_mut().enumerate() {
            let idx = self.multi_index(site);
            let mut k = [0.0; 4];
            for axis in 0..self.dim() {
                k[axis] = self.wavenumber(axis, idx[axis]);
            }
            *c *= symbol(&k);
        }
        for axis in 0..self.dim() {
            self.transform_axis(&mut data, axis, false);
        }
        let scale = 1.0 / self.inner.total as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    fn transform_axis(&self, data: &mut [Complex<f64>], axis: usize, forward: bool) {
        let size = self.inner.sizes[axis];
        let stride = self.inner.strides[axis];
        let plan = if forward {
            &self.inner.forward[axis]
        } else {
            &self.inner.inverse[axis]
        };
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for base in self.line_starts(axis) {
            for (j, slot) in buf.iter_mut().enumerate() {
                *slot = data[base + j * stride];
            }
            plan.process(&mut buf);
            for (j, c) in buf.iter().enumerate() {
                data[base + j * stride] = *c;
            }
        }
    }

    /// First site of every grid line parallel to `axis`.
    fn line_starts(&self, axis: usize) -> impl Iterator<Item = usize> + '_ {
        let stride = self.inner.strides[axis];
        let size = self.inner.sizes[axis];
        (0..self.inner.total).filter(move |site| (site / stride) % size == 0)
    }
}

/// Dense matrix of the spectral derivative on one periodic axis, obtained by
/// differentiating unit vectors with the FFT and removing the rounding-level
/// symmetric part.
fn dense_derivative(size: usize, length: f64, fwd: &dyn Fft<f64>, inv: &dyn Fft<f64>) -> Vec<f64> {
    let mut columns = vec![0.0; size * size];
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for j in 0..size {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        buf[j] = Complex::new(1.0, 0.0);
        fwd.process(&mut buf);
        for (m, c) in buf.iter_mut().enumerate() {
            let k = if m == size / 2 {
                0.0
            } else if m < size / 2 {
                2.0 * std::f64::consts::PI * m as f64 / length
            } else {
                2.0 * std::f64::consts::PI * (m as f64 - size as f64) / length
            };
            *c = Complex::new(-c.im * k, c.re * k);
        }
        inv.process(&mut buf);
        for i in 0..size {
            columns[i * size + j] = buf[i].re / size as f64;
        }
    }
    let mut matrix = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            matrix[i * size + j] = 0.5 * (columns[i * size + j] - columns[j * size + i]);
        }
    }
    matrix
}

/// Real scalar function sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Wraps site values; rejects wrong counts and non-finite entries.
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_sites() {
            return Err(EymError::ShapeMismatch(format!(
                "{} values for {} sites",
                values.len(),
                grid.num_sites()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EymError::NonFinite("scalar field".into()));
        }
        Ok(ScalarField { grid: grid.clone(), values })
    }

    pub(crate) fn from_vec(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.num_sites());
        ScalarField { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &Grid) -> Self {
        ScalarField::from_vec(grid, vec![0.0; grid.num_sites()])
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField::from_vec(grid, vec![value; grid.num_sites()])
    }

    /// Samples `f` at the physical coordinates of every site.
    pub fn from_fn<F: Fn(&[f64; 4]) -> f64>(grid: &Grid, f: F) -> Self {
        let values = (0..grid.num_sites()).map(|s| f(&grid.coords(s))).collect();
        ScalarField::from_vec(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Largest absolute site value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sitewise affine combination `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &ScalarField) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(EymError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(ScalarField::from_vec(&self.grid, values))
    }

    pub fn scale(&self, alpha: f64) -> ScalarField {
        ScalarField::from_vec(&self.grid, self.values.iter().map(|v| alpha * v).collect())
    }
}

/// Fourier-spectral partial derivative of `f` along `axis`.
pub fn spectral_partial(f: &ScalarField, axis: usize) -> Result<ScalarField> {
    f.grid.check_axis(axis)?;
    Ok(ScalarField::from_vec(&f.grid, f.grid.partial(&f.values, axis)))
}

/// Riemannian integral `sum_sites f sqrt(det g) prod_i h_i`.
pub fn integrate(f: &ScalarField, g: &MetricField) -> Result<f64> {
    if f.grid() != g.grid() {
        return Err(EymError::GridMismatch);
    }
    let density = g.volume_density();
    let integrand: Vec<f64> = f.values.iter().zip(density).map(|(a, b)| a * b).collect();
    Ok(tree_sum(&integrand) * f.grid.cell_volume())
}

/// Pairwise summation in a fixed order, independent of thread count.
pub fn tree_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        tree_sum(&values[..mid]) + tree_sum(&values[mid..])
    }
}

pub use crate::fields::l2_inner;
