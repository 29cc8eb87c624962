//! Seeded random band-limited fields for property checks and probes.

use rand::Rng;

use crate::error::Result;
use crate::fields::index::{binomial, sym_len};
use crate::fields::mat::{self, M4};
use crate::fields::{DeformationPair, FormField, MetricField, SymTensorField, VectorField};
use crate::lattice::{Grid, ScalarField};

/// Trigonometric polynomial with wavenumbers `|k_i| <= max_mode` on every axis.
#[derive(Clone, Debug)]
pub struct RandomMode {
    k: [i32; 4],
    cos: f64,
    sin: f64,
}

fn random_modes<R: Rng>(grid: &Grid, rng: &mut R, max_mode: usize, count: usize) -> Vec<RandomMode> {
    let n = grid.dim();
    (0..count)
        .map(|_| {
            let mut k = [0i32; 4];
            for kk in k.iter_mut().take(n) {
                *kk = rng.gen_range(-(max_mode as i32)..=max_mode as i32);
            }
            RandomMode { k, cos: rng.gen_range(-1.0..1.0), sin: rng.gen_range(-1.0..1.0) }
        })
        .collect()
}

fn evaluate(grid: &Grid, modes: &[RandomMode], x: &[f64; 4]) -> f64 {
    let n = grid.dim();
    modes
        .iter()
        .map(|m| {
            let phase: f64 = (0..n)
                .map(|i| 2.0 * std::f64::consts::PI * m.k[i] as f64 * x[i] / grid.lengths()[i])
                .sum();
            m.cos * phase.cos() + m.sin * phase.sin()
        })
        .sum::<f64>()
        / (modes.len() as f64).sqrt()
}

/// Number of modes summed per component.
const MODES_PER_COMPONENT: usize = 4;

/// Random smooth function of size about `amplitude`.
pub fn random_scalar<R: Rng>(grid: &Grid, rng: &mut R, max_mode: usize, amplitude: f64) -> ScalarField {
    let modes = random_modes(grid, rng, max_mode, MODES_PER_COMPONENT);
    ScalarField::from_fn(grid, |x| amplitude * evaluate(grid, &modes, x))
}

/// Random smooth symmetric 2-tensor.
pub fn random_sym<R: Rng>(grid: &Grid, rng: &mut R, max_mode: usize, amplitude: f64) -> SymTensorField {
    let comps = (0..sym_len(grid.dim()))
        .map(|_| random_scalar(grid, rng, max_mode, amplitude).into_values())
        .collect();
    SymTensorField::from_components(grid, comps).expect("finite samples")
}

/// Random smooth form.
pub fn random_form<R: Rng>(
    grid: &Grid,
    degree: usize,
    fiber: usize,
    rng: &mut R,
    max_mode: usize,
    amplitude: f64,
) -> FormField {
    let comps = (0..binomial(grid.dim(), degree) * fiber)
        .map(|_| random_scalar(grid, rng, max_mode, amplitude).into_values())
        .collect();
    FormField::from_components(grid, degree, fiber, comps).expect("finite samples")
}

/// Random smooth vector field.
pub fn random_vector<R: Rng>(grid: &Grid, rng: &mut R, max_mode: usize, amplitude: f64) -> VectorField {
    let comps = (0..grid.dim()).map(|_| random_scalar(grid, rng, max_mode, amplitude).into_values()).collect();
    VectorField::from_components(grid, comps).expect("finite samples")
}

/// `identity + amplitude * (random symmetric)`; stays positive definite for
/// amplitudes below roughly `1 / n`.
pub fn random_metric<R: Rng>(grid: &Grid, rng: &mut R, max_mode: usize, amplitude: f64) -> Result<MetricField> {
    let flat = MetricField::flat(grid);
    flat.perturbed(1.0, &random_sym(grid, rng, max_mode, amplitude))
}

/// Random deformation pair with the given fiber dimension.
pub fn random_pair<R: Rng>(grid: &Grid, fiber: usize, rng: &mut R, max_mode: usize, amplitude: f64) -> DeformationPair {
    DeformationPair {
        h: random_sym(grid, rng, max_mode, amplitude),
        a: random_form(grid, 1, fiber, rng, max_mode, amplitude),
    }
}

/// Random `n x n` SPD matrix `B^T B + I/2`, padded with zeros to 4 x 4.
pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> M4 {
    let mut b = mat::ZERO;
    for row in b.iter_mut().take(n) {
        for v in row.iter_mut().take(n) {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let mut m = mat::identity(n);
    for i in 0..n {
        for j in 0..n {
            m[i][j] *= 0.5;
            for k in 0..n {
                m[i][j] += b[k][i] * b[k][j];
            }
        }
    }
    m
}
