//! Tensor and form fields on a grid and the pointwise algebra between them.
//!
//! Symmetric 2-tensors store their upper triangle `(i <= j)` in lexicographic
//! order. Differential forms store components on strictly increasing
//! multi-indices, using the skew-tensor convention
//! `(e^1 ^ e^2)(v, w) = e^1(v) e^2(w) - e^1(w) e^2(v)`; Lie-algebra valued forms
//! interleave the fiber index fastest, so component `(I, L)` lives at
//! `I * fiber + L`. Form inner products use the determinant convention in which
//! orthonormal coframe monomials are orthonormal.

pub mod index;
pub mod mat;

use std::sync::{Arc, OnceLock};

use crate::algebra::LieAlgebraData;
use crate::error::{EymError, Result};
use crate::lattice::{tree_sum, Grid, ScalarField};
use index::{binomial, form_basis, pow, sym_index, sym_len, sym_pairs, tensor_index};
use mat::M4;

fn check_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(EymError::GridMismatch)
    }
}

fn max_abs_of(comps: &[Vec<f64>]) -> f64 {
    comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

fn combine(a: &[Vec<f64>], alpha: f64, b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + alpha * q).collect())
        .collect()
}

fn scaled(a: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    a.iter().map(|x| x.iter().map(|v| alpha * v).collect()).collect()
}

/// Symmetric covariant 2-tensor field `h_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl SymTensorField {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.dim();
        SymTensorField { grid: grid.clone(), comps: vec![vec![0.0; grid.num_sites()]; sym_len(n)] }
    }

    /// Wraps upper-triangle component arrays.
    pub fn from_components(grid: &Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        let n = grid.dim();
        if comps.len() != sym_len(n) || comps.iter().any(|c| c.len() != grid.num_sites()) {
            return Err(EymError::ShapeMismatch("symmetric tensor components".into()));
        }
        if comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EymError::NonFinite("symmetric tensor".into()));
        }
        Ok(SymTensorField { grid: grid.clone(), comps })
    }

    /// Samples a matrix-valued function; only the upper triangle is read.
    pub fn from_fn<F: Fn(&[f64; 4]) -> M4>(grid: &Grid, f: F) -> Self {
        let mut out = Self::zeros(grid);
        for site in 0..grid.num_sites() {
            out.set_at(site, &f(&grid.coords(site)));
        }
        out
    }

    /// The same constant matrix at every site.
    pub fn constant(grid: &Grid, m: &M4) -> Self {
        Self::from_fn(grid, |_| *m)
    }

    /// `f * delta_ij`.
    pub fn scalar_identity(f: &ScalarField) -> Self {
        let grid = f.grid();
        let n = grid.dim();
        let mut out = Self::zeros(grid);
        for i in 0..n {
            out.comps[sym_index(n, i, i)] = f.values().to_vec();
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn component(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[sym_index(self.dim(), i, j)]
    }

    pub fn component_mut(&mut self, i: usize, j: usize) -> &mut Vec<f64> {
        let n = self.dim();
        &mut self.comps[sym_index(n, i, j)]
    }

    /// Full symmetric matrix at a site.
    #[inline]
    pub fn at(&self, site: usize) -> M4 {
        let n = self.dim();
        let mut m = mat::ZERO;
        let mut c = 0;
        for i in 0..n {
            for j in i..n {
                let v = self.comps[c][site];
                m[i][j] = v;
                m[j][i] = v;
                c += 1;
            }
        }
        m
    }

    /// Stores the symmetric part of `m` at a site.
    #[inline]
    pub fn set_at(&mut self, site: usize, m: &M4) {
        let n = self.dim();
        let mut c = 0;
        for i in 0..n {
            for j in i..n {
                self.comps[c][site] = 0.5 * (m[i][j] + m[j][i]);
                c += 1;
            }
        }
    }

    pub fn axpy(&self, alpha: f64, other: &SymTensorField) -> Result<SymTensorField> {
        check_grid(&self.grid, &other.grid)?;
        Ok(SymTensorField { grid: self.grid.clone(), comps: combine(&self.comps, alpha, &other.comps) })
    }

    pub fn scale(&self, alpha: f64) -> SymTensorField {
        SymTensorField { grid: self.grid.clone(), comps: scaled(&self.comps, alpha) }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs_of(&self.comps)
    }

    /// Multiplies every site by the matching value of `f`.
    pub fn mul_scalar(&self, f: &ScalarField) -> SymTensorField {
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(f.values()).map(|(a, b)| a * b).collect())
            .collect();
        SymTensorField { grid: self.grid.clone(), comps }
    }

    /// Rank-2 [`Tensor`] with both orderings of each component filled in.
    pub fn to_tensor(&self) -> Tensor {
        let n = self.dim();
        let mut comps = vec![Vec::new(); n * n];
        for (i, j) in sym_pairs(n) {
            let c = self.comps[sym_index(n, i, j)].clone();
            comps[i * n + j] = c.clone();
            comps[j * n + i] = c;
        }
        Tensor { grid: self.grid.clone(), rank: 2, comps }
    }
}

/// Per-site compound matrices `C_r(g)` and `C_r(g^{-1})` of every degree.
struct Compounds {
    /// `[r]` -> row-major blocks of size `C(n,r)^2`, one block per site.
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
}

/// Riemannian metric: a symmetric tensor field that is positive definite at
/// every site, with cached inverse, volume density and compound matrices.
#[derive(Clone)]
pub struct MetricField {
    tensor: SymTensorField,
    g: Arc<Vec<M4>>,
    ginv: Arc<Vec<M4>>,
    sqrtg: Arc<Vec<f64>>,
    compounds: OnceLock<Arc<Compounds>>,
    pub(crate) christoffel: OnceLock<Arc<Vec<Vec<f64>>>>,
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricField").field("grid", self.grid()).finish()
    }
}

impl PartialEq for MetricField {
    fn eq(&self, other: &Self) -> bool {
        self.tensor == other.tensor
    }
}

impl MetricField {
    /// Validates positive definiteness by a Cholesky factorization per site.
    pub fn new(tensor: SymTensorField) -> Result<Self> {
        let n = tensor.dim();
        let sites = tensor.grid.num_sites();
        let mut g = Vec::with_capacity(sites);
        let mut ginv = Vec::with_capacity(sites);
        let mut sqrtg = Vec::with_capacity(sites);
        for site in 0..sites {
            let m = tensor.at(site);
            let (inv, det) = mat::spd_inverse(n, &m).ok_or(EymError::NonSpd { site })?;
            g.push(m);
            ginv.push(inv);
            sqrtg.push(det.sqrt());
        }
        Ok(MetricField {
            tensor,
            g: Arc::new(g),
            ginv: Arc::new(ginv),
            sqrtg: Arc::new(sqrtg),
            compounds: OnceLock::new(),
            christoffel: OnceLock::new(),
        })
    }

    /// The Euclidean metric `delta_ij`.
    pub fn flat(grid: &Grid) -> Self {
        let n = grid.dim();
        Self::new(SymTensorField::constant(grid, &mat::identity(n))).expect("identity is positive definite")
    }

    pub fn from_fn<F: Fn(&[f64; 4]) -> M4>(grid: &Grid, f: F) -> Result<Self> {
        Self::new(SymTensorField::from_fn(grid, f))
    }

    /// `g + alpha h`, rejected when it fails to be positive definite.
    pub fn perturbed(&self, alpha: f64, h: &SymTensorField) -> Result<Self> {
        Self::new(self.tensor.axpy(alpha, h)?)
    }

    pub fn grid(&self) -> &Grid {
        &self.tensor.grid
    }

    pub fn dim(&self) -> usize {
        self.tensor.dim()
    }

    pub fn tensor(&self) -> &SymTensorField {
        &self.tensor
    }

    #[inline]
    pub fn g_at(&self, site: usize) -> &M4 {
        &self.g[site]
    }

    #[inline]
    pub fn ginv_at(&self, site: usize) -> &M4 {
        &self.ginv[site]
    }

    /// `sqrt(det g)` per site.
    pub fn volume_density(&self) -> &[f64] {
        &self.sqrtg
    }

    /// True when every site carries the identity matrix.
    pub fn is_identity(&self) -> bool {
        let n = self.dim();
        let id = mat::identity(n);
        self.g.iter().all(|m| (0..n).all(|i| (0..n).all(|j| m[i][j] == id[i][j])))
    }

    /// True when the metric is the same matrix at every site.
    pub fn is_constant(&self) -> bool {
        self.g.iter().all(|m| m == &self.g[0])
    }

    fn compounds(&self) -> &Compounds {
        self.compounds.get_or_init(|| {
            let n = self.dim();
            let basis = form_basis(n);
            let sites = self.grid().num_sites();
            let mut lower = Vec::with_capacity(n + 1);
            let mut upper = Vec::with_capacity(n + 1);
            for r in 0..=n {
                let m = basis.count(r);
                let mut lo = vec![0.0; sites * m * m];
                let mut up = vec![0.0; sites * m * m];
                let axes: Vec<Vec<usize>> = (0..m).map(|p| basis.indices(r, p)).collect();
                for site in 0..sites {
                    for a in 0..m {
                        for b in 0..m {
                            lo[site * m * m + a * m + b] = mat::minor_det(&self.g[site], &axes[a], &axes[b]);
                            up[site * m * m + a * m + b] = mat::minor_det(&self.ginv[site], &axes[a], &axes[b]);
                        }
                    }
                }
                lower.push(lo);
                upper.push(up);
            }
            Arc::new(Compounds { lower, upper })
        })
    }

    /// Row-major `C(n,r) x C(n,r)` block of `det g^{-1}[I, J]` at a site.
    #[inline]
    pub fn compound_upper(&self, degree: usize, site: usize) -> &[f64] {
        let m = binomial(self.dim(), degree);
        &self.compounds().upper[degree][site * m * m..(site + 1) * m * m]
    }

    /// Row-major `C(n,r) x C(n,r)` block of `det g[I, J]` at a site.
    #[inline]
    pub fn compound_lower(&self, degree: usize, site: usize) -> &[f64] {
        let m = binomial(self.dim(), degree);
        &self.compounds().lower[degree][site * m * m..(site + 1) * m * m]
    }

    /// Raises all indices of a form's components at one site
    /// (`input`, `out` hold `C(n,r) * fiber` values).
    #[inline]
    pub fn raise_form_at(&self, degree: usize, fiber: usize, site: usize, input: &[f64], out: &mut [f64]) {
        apply_compound(self.compound_upper(degree, site), binomial(self.dim(), degree), fiber, input, out);
    }

    /// Lowers all indices of a form's components at one site.
    #[inline]
    pub fn lower_form_at(&self, degree: usize, fiber: usize, site: usize, input: &[f64], out: &mut [f64]) {
        apply_compound(self.compound_lower(degree, site), binomial(self.dim(), degree), fiber, input, out);
    }
}

#[inline]
fn apply_compound(block: &[f64], m: usize, fiber: usize, input: &[f64], out: &mut [f64]) {
    for a in 0..m {
        for l in 0..fiber {
            let mut acc = 0.0;
            for b in 0..m {
                acc += block[a * m + b] * input[b * fiber + l];
            }
            out[a * fiber + l] = acc;
        }
    }
}

/// Differential form of degree `r`, scalar valued (`fiber = 1`) or valued in a
/// Lie algebra of dimension `fiber`.
#[derive(Clone, Debug, PartialEq)]
pub struct FormField {
    grid: Grid,
    degree: usize,
    fiber: usize,
    comps: Vec<Vec<f64>>,
}

impl FormField {
    pub fn zeros(grid: &Grid, degree: usize, fiber: usize) -> Self {
        assert!(degree <= grid.dim(), "form degree exceeds dimension");
        assert!(fiber >= 1, "fiber dimension must be positive");
        let count = binomial(grid.dim(), degree) * fiber;
        FormField { grid: grid.clone(), degree, fiber, comps: vec![vec![0.0; grid.num_sites()]; count] }
    }

    /// Wraps component arrays ordered `(I, L)` with `L` fastest.
    pub fn from_components(grid: &Grid, degree: usize, fiber: usize, comps: Vec<Vec<f64>>) -> Result<Self> {
        if degree > grid.dim() || fiber == 0 {
            return Err(EymError::ShapeMismatch(format!("degree {degree}, fiber {fiber}")));
        }
        let count = binomial(grid.dim(), degree) * fiber;
        if comps.len() != count || comps.iter().any(|c| c.len() != grid.num_sites()) {
            return Err(EymError::ShapeMismatch("form components".into()));
        }
        if comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EymError::NonFinite("form".into()));
        }
        Ok(FormField { grid: grid.clone(), degree, fiber, comps })
    }

    /// Samples `f(x, multi-index position, fiber index)` at every site.
    pub fn from_fn<F: Fn(&[f64; 4], usize, usize) -> f64>(grid: &Grid, degree: usize, fiber: usize, f: F) -> Self {
        let mut out = Self::zeros(grid, degree, fiber);
        let m = binomial(grid.dim(), degree);
        for site in 0..grid.num_sites() {
            let x = grid.coords(site);
            for pos in 0..m {
                for l in 0..fiber {
                    out.comps[pos * fiber + l][site] = f(&x, pos, l);
                }
            }
        }
        out
    }

    /// Constant form given by a list of `(axes, fiber index, value)` terms; the
    /// axes may come in any order, the skew sign is applied.
    pub fn constant(grid: &Grid, degree: usize, fiber: usize, terms: &[(&[usize], usize, f64)]) -> Self {
        let mut out = Self::zeros(grid, degree, fiber);
        let basis = form_basis(grid.dim());
        for (axes, l, value) in terms {
            assert_eq!(axes.len(), degree, "term degree mismatch");
            if let Some((pos, sign)) = basis.locate(axes) {
                for v in out.comps[pos * fiber + l].iter_mut() {
                    *v += sign * value;
                }
            }
        }
        out
    }

    /// Scalar-valued 0-form from a function.
    pub fn from_scalar(f: &ScalarField) -> Self {
        FormField { grid: f.grid().clone(), degree: 0, fiber: 1, comps: vec![f.values().to_vec()] }
    }

    /// Values of a scalar-valued 0-form.
    pub fn to_scalar(&self) -> Result<ScalarField> {
        if self.degree != 0 || self.fiber != 1 {
            return Err(EymError::ShapeMismatch("expected a scalar 0-form".into()));
        }
        Ok(ScalarField::from_vec(&self.grid, self.comps[0].clone()))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn fiber(&self) -> usize {
        self.fiber
    }

    /// Number of increasing multi-indices of this degree.
    pub fn multi_count(&self) -> usize {
        binomial(self.dim(), self.degree)
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub(crate) fn components_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.comps
    }

    pub fn component(&self, pos: usize, l: usize) -> &[f64] {
        &self.comps[pos * self.fiber + l]
    }

    /// Component for axes in any order (with skew sign) at one site.
    pub fn value(&self, axes: &[usize], l: usize, site: usize) -> f64 {
        match form_basis(self.dim()).locate(axes) {
            Some((pos, sign)) => sign * self.comps[pos * self.fiber + l][site],
            None => 0.0,
        }
    }

    /// All components at a site, `(I, L)` ordering.
    #[inline]
    pub fn gather(&self, site: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c[site];
        }
    }

    #[inline]
    pub fn scatter(&mut self, site: usize, values: &[f64]) {
        for (c, v) in self.comps.iter_mut().zip(values) {
            c[site] = *v;
        }
    }

    pub fn same_shape(&self, other: &FormField) -> Result<()> {
        check_grid(&self.grid, &other.grid)?;
        if self.degree != other.degree || self.fiber != other.fiber {
            return Err(EymError::ShapeMismatch(format!(
                "forms of degree/fiber {}/{} and {}/{}",
                self.degree, self.fiber, other.degree, other.fiber
            )));
        }
        Ok(())
    }

    pub fn axpy(&self, alpha: f64, other: &FormField) -> Result<FormField> {
        self.same_shape(other)?;
        Ok(FormField { comps: combine(&self.comps, alpha, &other.comps), ..self.clone_shape() })
    }

    pub fn scale(&self, alpha: f64) -> FormField {
        FormField { comps: scaled(&self.comps, alpha), ..self.clone_shape() }
    }

    fn clone_shape(&self) -> FormField {
        FormField { grid: self.grid.clone(), degree: self.degree, fiber: self.fiber, comps: Vec::new() }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs_of(&self.comps)
    }

    /// Componentwise product with a function.
    pub fn mul_scalar(&self, f: &ScalarField) -> FormField {
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(f.values()).map(|(a, b)| a * b).collect())
            .collect();
        FormField { comps, ..self.clone_shape() }
    }

    /// Rank-`r` covariant tensor of a scalar-valued form (all orderings filled).
    pub fn to_tensor(&self) -> Result<Tensor> {
        if self.fiber != 1 {
            return Err(EymError::ShapeMismatch("tensor view needs a scalar-valued form".into()));
        }
        let n = self.dim();
        let r = self.degree;
        let basis = form_basis(n);
        let sites = self.grid.num_sites();
        let mut comps = Vec::with_capacity(pow(n, r));
        for flat in 0..pow(n, r) {
            let idx = index::tensor_multi(n, r, flat);
            comps.push(match basis.locate(&idx) {
                Some((pos, sign)) => self.comps[pos].iter().map(|v| sign * v).collect(),
                None => vec![0.0; sites],
            });
        }
        Ok(Tensor { grid: self.grid.clone(), rank: r, comps })
    }
}

/// Tangent vector field `v^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField { grid: grid.clone(), comps: vec![vec![0.0; grid.num_sites()]; grid.dim()] }
    }

    pub fn from_components(grid: &Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() || comps.iter().any(|c| c.len() != grid.num_sites()) {
            return Err(EymError::ShapeMismatch("vector components".into()));
        }
        Ok(VectorField { grid: grid.clone(), comps })
    }

    pub fn from_fn<F: Fn(&[f64; 4], usize) -> f64>(grid: &Grid, f: F) -> Self {
        let mut out = Self::zeros(grid);
        for site in 0..grid.num_sites() {
            let x = grid.coords(site);
            for i in 0..grid.dim() {
                out.comps[i][site] = f(&x, i);
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn axpy(&self, alpha: f64, other: &VectorField) -> Result<VectorField> {
        check_grid(&self.grid, &other.grid)?;
        Ok(VectorField { grid: self.grid.clone(), comps: combine(&self.comps, alpha, &other.comps) })
    }

    pub fn scale(&self, alpha: f64) -> VectorField {
        VectorField { grid: self.grid.clone(), comps: scaled(&self.comps, alpha) }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs_of(&self.comps)
    }
}

/// Covariant tensor field of arbitrary rank with all `n^r` components stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    grid: Grid,
    rank: usize,
    comps: Vec<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(grid: &Grid, rank: usize) -> Self {
        Tensor { grid: grid.clone(), rank, comps: vec![vec![0.0; grid.num_sites()]; pow(grid.dim(), rank)] }
    }

    pub fn from_components(grid: &Grid, rank: usize, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != pow(grid.dim(), rank) || comps.iter().any(|c| c.len() != grid.num_sites()) {
            return Err(EymError::ShapeMismatch("tensor components".into()));
        }
        Ok(Tensor { grid: grid.clone(), rank, comps })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn component(&self, idx: &[usize]) -> &[f64] {
        &self.comps[tensor_index(self.dim(), idx)]
    }

    pub fn axpy(&self, alpha: f64, other: &Tensor) -> Result<Tensor> {
        check_grid(&self.grid, &other.grid)?;
        if self.rank != other.rank {
            return Err(EymError::ShapeMismatch("tensor ranks differ".into()));
        }
        Ok(Tensor { grid: self.grid.clone(), rank: self.rank, comps: combine(&self.comps, alpha, &other.comps) })
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        Tensor { grid: self.grid.clone(), rank: self.rank, comps: scaled(&self.comps, alpha) }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs_of(&self.comps)
    }

    /// Symmetric part of a rank-2 tensor.
    pub fn symmetric_part(&self) -> Result<SymTensorField> {
        if self.rank != 2 {
            return Err(EymError::ShapeMismatch("symmetric part needs rank 2".into()));
        }
        let n = self.dim();
        let comps = sym_pairs(n)
            .into_iter()
            .map(|(i, j)| {
                self.comps[i * n + j].iter().zip(&self.comps[j * n + i]).map(|(a, b)| 0.5 * (a + b)).collect()
            })
            .collect();
        Ok(SymTensorField { grid: self.grid.clone(), comps })
    }

    /// Scalar-valued 1-form of a rank-1 tensor.
    pub fn to_one_form(&self) -> Result<FormField> {
        if self.rank != 1 {
            return Err(EymError::ShapeMismatch("1-form view needs rank 1".into()));
        }
        FormField::from_components(&self.grid, 1, 1, self.comps.clone())
    }

    /// Scalar field of a rank-0 tensor.
    pub fn to_scalar(&self) -> Result<ScalarField> {
        if self.rank != 0 {
            return Err(EymError::ShapeMismatch("scalar view needs rank 0".into()));
        }
        Ok(ScalarField::from_vec(&self.grid, self.comps[0].clone()))
    }

    /// Full symmetrization over all slots.
    pub fn symmetrize(&self) -> Tensor {
        let n = self.dim();
        let r = self.rank;
        let perms = permutations(r);
        let weight = 1.0 / perms.len() as f64;
        let sites = self.grid.num_sites();
        let mut comps = vec![vec![0.0; sites]; pow(n, r)];
        for (flat, out) in comps.iter_mut().enumerate() {
            let idx = index::tensor_multi(n, r, flat);
            for p in &perms {
                let permuted: Vec<usize> = p.iter().map(|&s| idx[s]).collect();
                let src = &self.comps[tensor_index(n, &permuted)];
                for (o, v) in out.iter_mut().zip(src) {
                    *o += weight * v;
                }
            }
        }
        Tensor { grid: self.grid.clone(), rank: r, comps }
    }

    /// Raises every index with `g^{-1}`.
    pub fn raise_all(&self, g: &MetricField) -> Tensor {
        self.transform_all(|site| g.ginv_at(site))
    }

    /// Lowers every index with `g`.
    pub fn lower_all(&self, g: &MetricField) -> Tensor {
        self.transform_all(|site| g.g_at(site))
    }

    fn transform_all<'a, F: Fn(usize) -> &'a M4>(&self, matrix: F) -> Tensor {
        let n = self.dim();
        let r = self.rank;
        let total = pow(n, r);
        let sites = self.grid.num_sites();
        let mut comps = vec![vec![0.0; sites]; total];
        let mut buf = vec![0.0; total];
        let mut tmp = vec![0.0; total];
        for site in 0..sites {
            for (b, c) in buf.iter_mut().zip(&self.comps) {
                *b = c[site];
            }
            let m = matrix(site);
            for slot in 0..r {
                let stride = pow(n, r - 1 - slot);
                for (flat, t) in tmp.iter_mut().enumerate() {
                    let i = (flat / stride) % n;
                    let base = flat - i * stride;
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += m[i][k] * buf[base + k * stride];
                    }
                    *t = acc;
                }
                std::mem::swap(&mut buf, &mut tmp);
            }
            for (c, b) in comps.iter_mut().zip(&buf) {
                c[site] = *b;
            }
        }
        Tensor { grid: self.grid.clone(), rank: r, comps }
    }
}

fn permutations(r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(r - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, r - 1);
            out.push(q);
        }
    }
    out
}

/// Tangent vector `(h, a)` to the configuration space: a symmetric 2-tensor
/// and a Lie-algebra valued 1-form.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationPair {
    pub h: SymTensorField,
    pub a: FormField,
}

impl DeformationPair {
    pub fn new(h: SymTensorField, a: FormField) -> Result<Self> {
        check_grid(h.grid(), a.grid())?;
        if a.degree() != 1 {
            return Err(EymError::ShapeMismatch("gauge part must be a 1-form".into()));
        }
        Ok(DeformationPair { h, a })
    }

    pub fn zeros(grid: &Grid, fiber: usize) -> Self {
        DeformationPair { h: SymTensorField::zeros(grid), a: FormField::zeros(grid, 1, fiber) }
    }

    pub fn grid(&self) -> &Grid {
        self.h.grid()
    }

    pub fn axpy(&self, alpha: f64, other: &DeformationPair) -> Result<DeformationPair> {
        Ok(DeformationPair { h: self.h.axpy(alpha, &other.h)?, a: self.a.axpy(alpha, &other.a)? })
    }

    pub fn scale(&self, alpha: f64) -> DeformationPair {
        DeformationPair { h: self.h.scale(alpha), a: self.a.scale(alpha) }
    }

    pub fn max_abs(&self) -> f64 {
        self.h.max_abs().max(self.a.max_abs())
    }

    /// All components concatenated (metric part first).
    pub fn to_flat(&self) -> Vec<f64> {
        self.h.components().iter().chain(self.a.components()).flatten().copied().collect()
    }

    /// Inverse of [`DeformationPair::to_flat`] for the shape of `template`.
    pub fn from_flat(template: &DeformationPair, data: &[f64]) -> DeformationPair {
        let sites = template.grid().num_sites();
        let mut chunks = data.chunks(sites).map(|c| c.to_vec());
        let h_comps: Vec<Vec<f64>> = (0..template.h.components().len()).map(|_| chunks.next().unwrap()).collect();
        let a_comps: Vec<Vec<f64>> = (0..template.a.components().len()).map(|_| chunks.next().unwrap()).collect();
        DeformationPair {
            h: SymTensorField { grid: template.grid().clone(), comps: h_comps },
            a: FormField { comps: a_comps, ..template.a.clone_shape() },
        }
    }
}

#[inline]
fn fiber_pair(c: Option<&LieAlgebraData>, x: &[f64], y: &[f64]) -> f64 {
    match c {
        Some(alg) => alg.pair(x, y),
        None => x.iter().zip(y).map(|(a, b)| a * b).sum(),
    }
}

fn check_fiber(form: &FormField, c: Option<&LieAlgebraData>) -> Result<()> {
    match c {
        Some(alg) if alg.dim() != form.fiber() => Err(EymError::AlgebraMismatch(format!(
            "form fiber {} vs algebra dimension {}",
            form.fiber(),
            alg.dim()
        ))),
        _ => Ok(()),
    }
}

/// Pointwise `g(h, k) = h_ij k^ij`.
pub fn sym_inner_pointwise(h: &SymTensorField, k: &SymTensorField, g: &MetricField) -> Result<ScalarField> {
    check_grid(h.grid(), k.grid())?;
    check_grid(h.grid(), g.grid())?;
    let n = g.dim();
    let values = (0..g.grid().num_sites())
        .map(|site| {
            let gi = g.ginv_at(site);
            let a = mat::mul(n, &mat::mul(n, gi, &h.at(site)), gi);
            mat::trace_product(n, &a, &k.at(site))
        })
        .collect();
    Ok(ScalarField::from_vec(g.grid(), values))
}

/// Pointwise determinant inner product of forms; `c = None` pairs the fiber
/// components Euclideanly.
pub fn form_inner_pointwise(
    alpha: &FormField,
    beta: &FormField,
    g: &MetricField,
    c: Option<&LieAlgebraData>,
) -> Result<ScalarField> {
    alpha.same_shape(beta)?;
    check_grid(alpha.grid(), g.grid())?;
    check_fiber(alpha, c)?;
    let len = alpha.components().len();
    let (r, fiber) = (alpha.degree(), alpha.fiber());
    let mut x = vec![0.0; len];
    let mut y = vec![0.0; len];
    let mut yr = vec![0.0; len];
    let values = (0..g.grid().num_sites())
        .map(|site| {
            alpha.gather(site, &mut x);
            beta.gather(site, &mut y);
            g.raise_form_at(r, fiber, site, &y, &mut yr);
            x.chunks(fiber).zip(yr.chunks(fiber)).map(|(a, b)| fiber_pair(c, a, b)).sum()
        })
        .collect();
    Ok(ScalarField::from_vec(g.grid(), values))
}

/// Pointwise squared norm `|alpha|^2`.
pub fn norm_sq_pointwise(alpha: &FormField, g: &MetricField, c: Option<&LieAlgebraData>) -> Result<ScalarField> {
    form_inner_pointwise(alpha, alpha, g, c)
}

/// L2 inner product `int (g(h,k) + <a,b>_{g,c}) dvol` of deformation pairs.
pub fn l2_inner(p: &DeformationPair, q: &DeformationPair, g: &MetricField, c: &LieAlgebraData) -> Result<f64> {
    let hh = sym_inner_pointwise(&p.h, &q.h, g)?;
    let aa = form_inner_pointwise(&p.a, &q.a, g, Some(c))?;
    let density = g.volume_density();
    let integrand: Vec<f64> =
        hh.values().iter().zip(aa.values()).zip(density).map(|((x, y), d)| (x + y) * d).collect();
    Ok(tree_sum(&integrand) * g.grid().cell_volume())
}

/// Integral `int <alpha, beta> dvol` of forms.
pub fn form_l2_inner(alpha: &FormField, beta: &FormField, g: &MetricField, c: Option<&LieAlgebraData>) -> Result<f64> {
    let f = form_inner_pointwise(alpha, beta, g, c)?;
    crate::lattice::integrate(&f, g)
}

/// Integral `int g(h, k) dvol` of symmetric tensors.
pub fn sym_l2_inner(h: &SymTensorField, k: &SymTensorField, g: &MetricField) -> Result<f64> {
    let f = sym_inner_pointwise(h, k, g)?;
    crate::lattice::integrate(&f, g)
}

/// Integral of the full contraction of two covariant tensors of equal rank.
pub fn tensor_l2_inner(s: &Tensor, t: &Tensor, g: &MetricField) -> Result<f64> {
    check_grid(s.grid(), t.grid())?;
    if s.rank() != t.rank() {
        return Err(EymError::ShapeMismatch("tensor ranks differ".into()));
    }
    let raised = t.raise_all(g);
    let sites = g.grid().num_sites();
    let values: Vec<f64> = (0..sites)
        .map(|site| s.components().iter().zip(raised.components()).map(|(a, b)| a[site] * b[site]).sum())
        .collect();
    crate::lattice::integrate(&ScalarField::from_vec(g.grid(), values), g)
}

/// Hodge star, fixed by `alpha ^ *beta = <alpha, beta> dvol` with the
/// orientation `dx^1 ^ .. ^ dx^n`.
pub fn hodge_star(g: &MetricField, omega: &FormField) -> Result<FormField> {
    check_grid(g.grid(), omega.grid())?;
    let n = g.dim();
    let r = omega.degree();
    let fiber = omega.fiber();
    let basis = form_basis(n);
    let full: u8 = ((1u16 << n) - 1) as u8;
    // For every output multi-index J: the complementary input position and sign.
    let map: Vec<(usize, f64)> = basis
        .masks(n - r)
        .iter()
        .map(|&j_mask| {
            let i_axes = index::mask_axes(full & !j_mask);
            let mut tuple = i_axes.clone();
            tuple.extend(index::mask_axes(j_mask));
            let (_, sign) = basis.locate(&tuple).expect("complementary indices are distinct");
            (basis.position(full & !j_mask), sign)
        })
        .collect();
    let mut out = FormField::zeros(omega.grid(), n - r, fiber);
    let len_in = omega.components().len();
    let mut x = vec![0.0; len_in];
    let mut xr = vec![0.0; len_in];
    let mut y = vec![0.0; out.components().len()];
    for site in 0..g.grid().num_sites() {
        omega.gather(site, &mut x);
        g.raise_form_at(r, fiber, site, &x, &mut xr);
        let vol = g.volume_density()[site];
        for (jpos, &(ipos, sign)) in map.iter().enumerate() {
            for l in 0..fiber {
                y[jpos * fiber + l] = vol * sign * xr[ipos * fiber + l];
            }
        }
        out.scatter(site, &y);
    }
    Ok(out)
}

/// Interior product `iota_v omega`.
pub fn interior(v: &VectorField, omega: &FormField) -> Result<FormField> {
    check_grid(v.grid(), omega.grid())?;
    let r = omega.degree();
    if r == 0 {
        return Ok(FormField::zeros(omega.grid(), 0, omega.fiber()));
    }
    let n = omega.dim();
    let fiber = omega.fiber();
    let basis = form_basis(n);
    let mut out = FormField::zeros(omega.grid(), r - 1, fiber);
    for (jpos, &j_mask) in basis.masks(r - 1).iter().enumerate() {
        for k in 0..n {
            if let Some((pos, sign)) = basis.prepend(k, j_mask) {
                for l in 0..fiber {
                    let src = &omega.comps[pos * fiber + l];
                    let dst = &mut out.comps[jpos * fiber + l];
                    for ((d, s), vk) in dst.iter_mut().zip(src).zip(&v.comps[k]) {
                        *d += sign * vk * s;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exterior product `u ^ alpha` of a scalar 1-form with a form.
pub fn wedge_one(u: &FormField, alpha: &FormField) -> Result<FormField> {
    check_grid(u.grid(), alpha.grid())?;
    if u.degree() != 1 || u.fiber() != 1 {
        return Err(EymError::ShapeMismatch("left factor must be a scalar 1-form".into()));
    }
    let n = alpha.dim();
    let r = alpha.degree();
    if r == n {
        return Ok(FormField::zeros(alpha.grid(), n, alpha.fiber()));
    }
    let fiber = alpha.fiber();
    let basis = form_basis(n);
    let mut out = FormField::zeros(alpha.grid(), r + 1, fiber);
    for (jpos, &j_mask) in basis.masks(r).iter().enumerate() {
        for k in 0..n {
            if let Some((pos, sign)) = basis.prepend(k, j_mask) {
                for l in 0..fiber {
                    let src = &alpha.comps[jpos * fiber + l];
                    let dst = &mut out.comps[pos * fiber + l];
                    for ((d, s), uk) in dst.iter_mut().zip(src).zip(&u.comps[k]) {
                        *d += sign * uk * s;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Metric dual `u^#` of a scalar 1-form.
pub fn sharp(u: &FormField, g: &MetricField) -> Result<VectorField> {
    if u.degree() != 1 || u.fiber() != 1 {
        return Err(EymError::ShapeMismatch("sharp needs a scalar 1-form".into()));
    }
    check_grid(u.grid(), g.grid())?;
    let n = g.dim();
    let mut out = VectorField::zeros(g.grid());
    for site in 0..g.grid().num_sites() {
        let gi = g.ginv_at(site);
        for i in 0..n {
            out.comps[i][site] = (0..n).map(|k| gi[i][k] * u.comps[k][site]).sum();
        }
    }
    Ok(out)
}

/// Metric dual `v^flat` of a vector field.
pub fn flat(v: &VectorField, g: &MetricField) -> Result<FormField> {
    check_grid(v.grid(), g.grid())?;
    let n = g.dim();
    let mut out = FormField::zeros(g.grid(), 1, 1);
    for site in 0..g.grid().num_sites() {
        let gm = g.g_at(site);
        for i in 0..n {
            out.comps[i][site] = (0..n).map(|k| gm[i][k] * v.comps[k][site]).sum();
        }
    }
    Ok(out)
}

/// `(alpha o beta)(v1, v2) = 1/2 (<iota_v1 alpha, iota_v2 beta> + <iota_v2 alpha, iota_v1 beta>)`
/// for forms of equal degree `k >= 1`.
pub fn circ_gc(alpha: &FormField, beta: &FormField, g: &MetricField, c: Option<&LieAlgebraData>) -> Result<SymTensorField> {
    alpha.same_shape(beta)?;
    check_grid(alpha.grid(), g.grid())?;
    check_fiber(alpha, c)?;
    let k = alpha.degree();
    if k == 0 {
        return Err(EymError::ShapeMismatch("circ needs forms of degree at least 1".into()));
    }
    let n = g.dim();
    let fiber = alpha.fiber();
    let basis = form_basis(n);
    let m = basis.count(k - 1);
    let j_masks = basis.masks(k - 1).to_vec();
    let mut out = SymTensorField::zeros(g.grid());
    let mut x = vec![0.0; alpha.components().len()];
    let mut y = vec![0.0; beta.components().len()];
    // iota_i alpha as (k-1)-form components for each i.
    let mut ia = vec![0.0; n * m * fiber];
    let mut ib = vec![0.0; n * m * fiber];
    let mut ibr = vec![0.0; n * m * fiber];
    for site in 0..g.grid().num_sites() {
        alpha.gather(site, &mut x);
        beta.gather(site, &mut y);
        for i in 0..n {
            for (jpos, &j_mask) in j_masks.iter().enumerate() {
                for l in 0..fiber {
                    let (va, vb) = match basis.prepend(i, j_mask) {
                        Some((pos, sign)) => (sign * x[pos * fiber + l], sign * y[pos * fiber + l]),
                        None => (0.0, 0.0),
                    };
                    ia[(i * m + jpos) * fiber + l] = va;
                    ib[(i * m + jpos) * fiber + l] = vb;
                }
            }
            let (src, dst) = (&ib[i * m * fiber..(i + 1) * m * fiber], &mut ibr[i * m * fiber..(i + 1) * m * fiber]);
            g.raise_form_at(k - 1, fiber, site, src, dst);
        }
        let mut res = mat::ZERO;
        for i in 0..n {
            for j in 0..n {
                let a = &ia[i * m * fiber..(i + 1) * m * fiber];
                let b = &ibr[j * m * fiber..(j + 1) * m * fiber];
                res[i][j] = a.chunks(fiber).zip(b.chunks(fiber)).map(|(p, q)| fiber_pair(c, p, q)).sum();
            }
        }
        out.set_at(site, &res);
    }
    Ok(out)
}

/// `(alpha o_h beta)_ij = 1/2 (alpha_ik beta_jl + alpha_jk beta_il) h^kl` for 2-forms,
/// with the indices of `h` raised by `g`.
pub fn circ_h(
    alpha: &FormField,
    beta: &FormField,
    h: &SymTensorField,
    g: &MetricField,
    c: Option<&LieAlgebraData>,
) -> Result<SymTensorField> {
    alpha.same_shape(beta)?;
    check_grid(h.grid(), g.grid())?;
    check_grid(alpha.grid(), g.grid())?;
    check_fiber(alpha, c)?;
    if alpha.degree() != 2 {
        return Err(EymError::ShapeMismatch("circ_h needs 2-forms".into()));
    }
    let n = g.dim();
    let mut out = SymTensorField::zeros(g.grid());
    let fa = full_two_form(alpha);
    let fb = full_two_form(beta);
    for site in 0..g.grid().num_sites() {
        let gi = g.ginv_at(site);
        let hu = mat::mul(n, &mat::mul(n, gi, &h.at(site)), gi);
        let mut res = mat::ZERO;
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        let w = hu[k][l];
                        if w == 0.0 {
                            continue;
                        }
                        let a_ik = fa.at(i, k, site);
                        let b_jl = fb.at(j, l, site);
                        let a_jk = fa.at(j, k, site);
                        let b_il = fb.at(i, l, site);
                        acc += 0.5 * w * (fiber_pair(c, &a_ik, &b_jl) + fiber_pair(c, &a_jk, &b_il));
                    }
                }
                res[i][j] = acc;
                res[j][i] = acc;
            }
        }
        out.set_at(site, &res);
    }
    Ok(out)
}

/// Skew-matrix access to a 2-form's fiber components.
struct FullTwoForm<'a> {
    form: &'a FormField,
    table: Vec<Option<(usize, f64)>>,
    n: usize,
}

impl FullTwoForm<'_> {
    #[inline]
    fn at(&self, i: usize, j: usize, site: usize) -> Vec<f64> {
        let fiber = self.form.fiber();
        match self.table[i * self.n + j] {
            Some((pos, sign)) => (0..fiber).map(|l| sign * self.form.comps[pos * fiber + l][site]).collect(),
            None => vec![0.0; fiber],
        }
    }
}

fn full_two_form(form: &FormField) -> FullTwoForm<'_> {
    let n = form.dim();
    let basis = form_basis(n);
    let table = (0..n * n).map(|f| basis.locate(&[f / n, f % n])).collect();
    FullTwoForm { form, table, n }
}

/// `(a -| F)(v) = -<a, iota_v F>_{g,c}`: scalar 1-form from an algebra-valued
/// 1-form and 2-form.
pub fn lrcorner_c(a: &FormField, f: &FormField, g: &MetricField, c: &LieAlgebraData) -> Result<FormField> {
    check_grid(a.grid(), f.grid())?;
    check_grid(a.grid(), g.grid())?;
    if a.degree() != 1 || f.degree() != 2 || a.fiber() != f.fiber() {
        return Err(EymError::ShapeMismatch("lrcorner needs a 1-form and a 2-form with equal fibers".into()));
    }
    check_fiber(a, Some(c))?;
    let n = g.dim();
    let fiber = a.fiber();
    let basis = form_basis(n);
    let mut out = FormField::zeros(g.grid(), 1, 1);
    let mut av = vec![0.0; n * fiber];
    let mut ar = vec![0.0; n * fiber];
    let mut fv = vec![0.0; f.components().len()];
    for site in 0..g.grid().num_sites() {
        a.gather(site, &mut av);
        g.raise_form_at(1, fiber, site, &av, &mut ar);
        f.gather(site, &mut fv);
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                if let Some((pos, sign)) = basis.locate(&[i, k]) {
                    acc -= sign * c.pair(&ar[k * fiber..(k + 1) * fiber], &fv[pos * fiber..(pos + 1) * fiber]);
                }
            }
            out.comps[i][site] = acc;
        }
    }
    Ok(out)
}

/// `(a -|^g F) = sum_i [a(e_i), iota_{e_i} F]` in a `g`-orthonormal frame.
pub fn lrcorner_alg(a: &FormField, f: &FormField, g: &MetricField, alg: &LieAlgebraData) -> Result<FormField> {
    check_grid(a.grid(), f.grid())?;
    check_grid(a.grid(), g.grid())?;
    if a.degree() != 1 || f.degree() != 2 || a.fiber() != f.fiber() {
        return Err(EymError::ShapeMismatch("lrcorner needs a 1-form and a 2-form with equal fibers".into()));
    }
    check_fiber(a, Some(alg))?;
    let n = g.dim();
    let fiber = a.fiber();
    let mut out = FormField::zeros(g.grid(), 1, fiber);
    if alg.is_abelian() {
        return Ok(out);
    }
    let basis = form_basis(n);
    let mut av = vec![0.0; n * fiber];
    let mut ar = vec![0.0; n * fiber];
    let mut fv = vec![0.0; f.components().len()];
    let mut res = vec![0.0; n * fiber];
    for site in 0..g.grid().num_sites() {
        a.gather(site, &mut av);
        g.raise_form_at(1, fiber, site, &av, &mut ar);
        f.gather(site, &mut fv);
        res.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..n {
            for j in 0..n {
                if let Some((pos, sign)) = basis.locate(&[j, k]) {
                    alg.bracket_acc(
                        &ar[j * fiber..(j + 1) * fiber],
                        &fv[pos * fiber..(pos + 1) * fiber],
                        sign,
                        &mut res[k * fiber..(k + 1) * fiber],
                    );
                }
            }
        }
        out.scatter(site, &res);
    }
    Ok(out)
}

/// `(omega)_h = -sum_k h(e_k) ^ iota_{e_k} omega`, the derivation extension of
/// the endomorphism `g^{-1} h` with a minus sign.
pub fn op_gh(omega: &FormField, h: &SymTensorField, g: &MetricField) -> Result<FormField> {
    check_grid(omega.grid(), h.grid())?;
    check_grid(omega.grid(), g.grid())?;
    let r = omega.degree();
    let fiber = omega.fiber();
    let mut out = FormField::zeros(omega.grid(), r, fiber);
    if r == 0 {
        return Ok(out);
    }
    let n = g.dim();
    let basis = form_basis(n);
    let multis: Vec<Vec<usize>> = (0..basis.count(r)).map(|p| basis.indices(r, p)).collect();
    let mut x = vec![0.0; omega.components().len()];
    let mut y = vec![0.0; omega.components().len()];
    for site in 0..g.grid().num_sites() {
        // H^l_i = g^{lk} h_ki
        let endo = mat::mul(n, g.ginv_at(site), &h.at(site));
        omega.gather(site, &mut x);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (ipos, axes) in multis.iter().enumerate() {
            let mut tuple = axes.clone();
            for slot in 0..r {
                let orig = axes[slot];
                for l in 0..n {
                    let w = endo[l][orig];
                    if w == 0.0 {
                        continue;
                    }
                    tuple[slot] = l;
                    if let Some((pos, sign)) = basis.locate(&tuple) {
                        for f in 0..fiber {
                            y[ipos * fiber + f] -= w * sign * x[pos * fiber + f];
                        }
                    }
                }
                tuple[slot] = orig;
            }
        }
        out.scatter(site, &y);
    }
    Ok(out)
}

/// `(t1 o t2)(v1, v2) = 1/2 (g(t1 v1, t2 v2) + g(t1 v2, t2 v1))`.
pub fn sym_circ(t1: &SymTensorField, t2: &SymTensorField, g: &MetricField) -> Result<SymTensorField> {
    check_grid(t1.grid(), t2.grid())?;
    check_grid(t1.grid(), g.grid())?;
    let n = g.dim();
    let mut out = SymTensorField::zeros(g.grid());
    for site in 0..g.grid().num_sites() {
        let m = mat::mul(n, &mat::mul(n, &t1.at(site), g.ginv_at(site)), &t2.at(site));
        out.set_at(site, &m);
    }
    Ok(out)
}

/// `Tr_g h = g^ij h_ij`.
pub fn trace_g(h: &SymTensorField, g: &MetricField) -> Result<ScalarField> {
    check_grid(h.grid(), g.grid())?;
    let n = g.dim();
    let values = (0..g.grid().num_sites()).map(|s| mat::trace_product(n, g.ginv_at(s), &h.at(s))).collect();
    Ok(ScalarField::from_vec(g.grid(), values))
}

/// `h - (Tr_g h / n) g`.
pub fn traceless_part(h: &SymTensorField, g: &MetricField) -> Result<SymTensorField> {
    let tr = trace_g(h, g)?;
    let n = g.dim() as f64;
    h.axpy(-1.0, &g.tensor().mul_scalar(&tr.scale(1.0 / n)))
}
