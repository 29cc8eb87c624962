//! Levi-Civita calculus of a spectrally discretized metric.
//!
//! Conventions: `R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z`,
//! `Riem(a,b,c,d) = g(R(e_a,e_b)e_c, e_d)`, `Ric(v1,v2) = Tr(v3 -> R(v3,v1)v2)`.
//! With these choices the round sphere has positive scalar curvature.
//!
//! Every divergence-type operator is assembled as the exact discrete adjoint of
//! its gradient-type partner: the spectral derivative matrix is antisymmetric,
//! so `(nabla, nabla*)`, `(d, d*)` and `(delta, nabla*)` are adjoint up to
//! rounding in the discrete `L2` pairing.

use std::sync::Arc;

use rayon::prelude::*;

use crate::algebra::LieAlgebraData;
use crate::error::{EymError, Result};
use crate::fields::index::{form_basis, pow, sym_index, tensor_multi};
use crate::fields::{
    hodge_star, op_gh, sym_circ, trace_g, FormField, MetricField, SymTensorField, Tensor, VectorField,
};
use crate::lattice::{Grid, ScalarField};

/// Curvature of a metric. Christoffel symbols are stored as `Gamma^k_ij` at
/// flat index `(k*n + i)*n + j`.
#[derive(Clone, Debug)]
pub struct CurvaturePackage {
    pub christoffel: Arc<Vec<Vec<f64>>>,
    /// Fully lowered `Riem(a,b,c,d)`, projected onto the algebraic curvature symmetries.
    pub riemann: Tensor,
    pub ricci: SymTensorField,
    pub scalar: ScalarField,
    /// `Ric - s/2 g`.
    pub einstein: SymTensorField,
}

/// Christoffel symbols `Gamma^k_ij`, cached on the metric.
pub fn christoffel(g: &MetricField) -> Arc<Vec<Vec<f64>>> {
    g.christoffel
        .get_or_init(|| {
            let grid = g.grid();
            let n = g.dim();
            let sites = grid.num_sites();
            let comps = g.tensor().components();
            // dg[l][sym(i,j)] = d_l g_ij
            let dg: Vec<Vec<Vec<f64>>> = (0..n)
                .into_par_iter()
                .map(|l| comps.iter().map(|c| grid.partial(c, l)).collect())
                .collect();
            let mut gamma = vec![vec![0.0; sites]; n * n * n];
            let mut lower = vec![0.0; n * n * n];
            for site in 0..sites {
                let dgs = |l: usize, i: usize, j: usize| dg[l][sym_index(n, i, j)][site];
                for k in 0..n {
                    for i in 0..n {
                        for j in i..n {
                            let v = 0.5 * (dgs(i, j, k) + dgs(j, i, k) - dgs(k, i, j));
                            lower[(k * n + i) * n + j] = v;
                            lower[(k * n + j) * n + i] = v;
                        }
                    }
                }
                let gi = g.ginv_at(site);
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for l in 0..n {
                                acc += gi[k][l] * lower[(l * n + i) * n + j];
                            }
                            gamma[(k * n + i) * n + j][site] = acc;
                        }
                    }
                }
            }
            Arc::new(gamma)
        })
        .clone()
}

/// Curvature package of `g`.
pub fn curvature(g: &MetricField) -> Result<CurvaturePackage> {
    let grid = g.grid();
    let n = g.dim();
    let sites = grid.num_sites();
    let gamma = christoffel(g);
    let gi = |k: usize, i: usize, j: usize| (k * n + i) * n + j;
    // dgamma[k][l*n*n+i*n+j] = d_k Gamma^l_ij
    let dgamma: Vec<Vec<Vec<f64>>> =
        (0..n).into_par_iter().map(|k| gamma.iter().map(|c| grid.partial(c, k)).collect()).collect();
    let total = pow(n, 4);
    let mut riem = vec![vec![0.0; sites]; total];
    let mut up = vec![0.0; total];
    for site in 0..sites {
        // R^l_{kij} stored at (k,i,j,l)
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let mut v = dgamma[k][gi(l, i, j)][site] - dgamma[i][gi(l, k, j)][site];
                        for m in 0..n {
                            v += gamma[gi(l, k, m)][site] * gamma[gi(m, i, j)][site]
                                - gamma[gi(l, i, m)][site] * gamma[gi(m, k, j)][site];
                        }
                        up[((k * n + i) * n + j) * n + l] = v;
                    }
                }
            }
        }
        let gm = g.g_at(site);
        let idx = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
        let lowered = |a: usize, b: usize, c: usize, d: usize| -> f64 {
            (0..n).map(|l| up[idx(a, b, c, l)] * gm[l][d]).sum()
        };
        let anti = |a: usize, b: usize, c: usize, d: usize| -> f64 {
            0.25 * (lowered(a, b, c, d) - lowered(a, b, d, c) - lowered(b, a, c, d) + lowered(b, a, d, c))
        };
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        riem[idx(a, b, c, d)][site] = 0.5 * (anti(a, b, c, d) + anti(c, d, a, b));
                    }
                }
            }
        }
    }
    let riemann = Tensor::from_components(grid, 4, riem)?;
    let mut ricci = SymTensorField::zeros(grid);
    let mut scalar = vec![0.0; sites];
    let rc = riemann.components();
    for site in 0..sites {
        let ginv = g.ginv_at(site);
        let mut ric = crate::fields::mat::ZERO;
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        acc += ginv[k][l] * rc[((k * n + i) * n + j) * n + l][site];
                    }
                }
                ric[i][j] = acc;
            }
        }
        scalar[site] = crate::fields::mat::trace_product(n, ginv, &ric);
        ricci.set_at(site, &ric);
    }
    let scalar = ScalarField::from_vec(grid, scalar);
    let einstein = ricci.axpy(-0.5, &g.tensor().mul_scalar(&scalar))?;
    Ok(CurvaturePackage { christoffel: gamma, riemann, ricci, scalar, einstein })
}

fn check(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(EymError::GridMismatch)
    }
}

/// Covariant derivative `(nabla T)(e_k, v_1, .., v_r)`, derivative slot first.
pub fn nabla(t: &Tensor, g: &MetricField) -> Result<Tensor> {
    check(t.grid(), g.grid())?;
    let grid = g.grid();
    let n = g.dim();
    let r = t.rank();
    let sites = grid.num_sites();
    let gamma = christoffel(g);
    let inner = pow(n, r);
    let comps: Vec<Vec<f64>> = (0..n * inner)
        .into_par_iter()
        .map(|flat| {
            let k = flat / inner;
            let j = flat % inner;
            let mut out = grid.partial(&t.components()[j], k);
            let idx = tensor_multi(n, r, j);
            for m in 0..r {
                let stride = pow(n, r - 1 - m);
                let base = j - idx[m] * stride;
                for q in 0..n {
                    let gam = &gamma[(q * n + k) * n + idx[m]];
                    let src = &t.components()[base + q * stride];
                    for s in 0..sites {
                        out[s] -= gam[s] * src[s];
                    }
                }
            }
            out
        })
        .collect();
    Tensor::from_components(grid, r + 1, comps)
}

/// Divergence `(nabla* T)(v..) = -sum_i (nabla_{e_i} T)(e_i, v..)` for rank at least one.
pub fn divergence(t: &Tensor, g: &MetricField) -> Result<Tensor> {
    check(t.grid(), g.grid())?;
    if t.rank() == 0 {
        return Err(EymError::ShapeMismatch("divergence needs rank at least 1".into()));
    }
    let grid = g.grid();
    let n = g.dim();
    let r = t.rank() - 1;
    let sites = grid.num_sites();
    let gamma = christoffel(g);
    let raised = t.raise_all(g);
    let vol = g.volume_density();
    let inner = pow(n, r);
    let comps: Vec<Vec<f64>> = (0..inner)
        .into_par_iter()
        .map(|j| {
            let mut out = vec![0.0; sites];
            for k in 0..n {
                let weighted: Vec<f64> =
                    raised.components()[k * inner + j].iter().zip(vol).map(|(a, b)| a * b).collect();
                let dk = grid.partial(&weighted, k);
                for s in 0..sites {
                    out[s] -= dk[s] / vol[s];
                }
            }
            let idx = tensor_multi(n, r, j);
            for m in 0..r {
                let stride = pow(n, r - 1 - m);
                let base = j - idx[m] * stride;
                for k in 0..n {
                    for q in 0..n {
                        let gam = &gamma[(idx[m] * n + k) * n + q];
                        let src = &raised.components()[k * inner + base + q * stride];
                        for s in 0..sites {
                            out[s] -= gam[s] * src[s];
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok(Tensor::from_components(grid, r, comps)?.lower_all(g))
}

/// `nabla* h` of a symmetric 2-tensor as a scalar 1-form.
pub fn divergence_sym(h: &SymTensorField, g: &MetricField) -> Result<FormField> {
    divergence(&h.to_tensor(), g)?.to_one_form()
}

/// `nabla* nabla* h`.
pub fn double_divergence(h: &SymTensorField, g: &MetricField) -> Result<ScalarField> {
    d_star(&divergence_sym(h, g)?, g)?.to_scalar()
}

/// Symmetrized covariant derivative
/// `(delta T)(v_0..v_r) = 1/(r+1) sum_i (nabla_{v_i} T)(v_0..^v_i..v_r)` of a symmetric tensor.
pub fn sym_derivative(t: &Tensor, g: &MetricField) -> Result<Tensor> {
    Ok(nabla(t, g)?.symmetrize())
}

/// `delta` of a scalar 1-form: `1/2 (nabla_i w_j + nabla_j w_i)`.
pub fn sym_derivative_one_form(w: &FormField, g: &MetricField) -> Result<SymTensorField> {
    nabla(&w.to_tensor()?, g)?.symmetric_part()
}

/// Lie derivative `L_v g = 2 delta(v^flat)`.
pub fn lie_derivative(v: &VectorField, g: &MetricField) -> Result<SymTensorField> {
    Ok(sym_derivative_one_form(&crate::fields::flat(v, g)?, g)?.scale(2.0))
}

/// Hessian `nabla d f`.
pub fn hessian(f: &ScalarField, g: &MetricField) -> Result<SymTensorField> {
    sym_derivative_one_form(&d(&FormField::from_scalar(f))?, g)
}

/// Connection data for the covariant exterior calculus.
pub(crate) type Coupling<'a> = Option<(&'a FormField, &'a LieAlgebraData)>;

/// `(d_A w)_I = sum_m (-1)^m (d_{i_m} w_{I - i_m} + [A_{i_m}, w_{I - i_m}])`.
pub(crate) fn exterior_core(omega: &FormField, coupling: Coupling<'_>) -> Result<FormField> {
    let grid = omega.grid();
    let n = omega.dim();
    let r = omega.degree();
    let fiber = omega.fiber();
    if r == n {
        return Ok(FormField::zeros(grid, n, fiber));
    }
    let basis = form_basis(n);
    let sites = grid.num_sites();
    let m_out = basis.count(r + 1);
    let masks_in = basis.masks(r);
    // derivatives[k][J*fiber + L]
    let derivatives: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|k| omega.components().iter().map(|c| grid.partial(c, k)).collect())
        .collect();
    let mut comps = vec![vec![0.0; sites]; m_out * fiber];
    for (jpos, &j_mask) in masks_in.iter().enumerate() {
        for k in 0..n {
            if let Some((pos, sign)) = basis.prepend(k, j_mask) {
                for l in 0..fiber {
                    let dst = &mut comps[pos * fiber + l];
                    for (d, s) in dst.iter_mut().zip(&derivatives[k][jpos * fiber + l]) {
                        *d += sign * s;
                    }
                }
            }
        }
    }
    if let Some((a, alg)) = coupling {
        if !alg.is_abelian() {
            let mut out = vec![0.0; fiber];
            for site in 0..sites {
                for (jpos, &j_mask) in masks_in.iter().enumerate() {
                    let w: Vec<f64> = (0..fiber).map(|l| omega.components()[jpos * fiber + l][site]).collect();
                    for k in 0..n {
                        if let Some((pos, sign)) = basis.prepend(k, j_mask) {
                            let ak: Vec<f64> = (0..fiber).map(|l| a.components()[k * fiber + l][site]).collect();
                            out.iter_mut().for_each(|v| *v = 0.0);
                            alg.bracket_acc(&ak, &w, sign, &mut out);
                            for l in 0..fiber {
                                comps[pos * fiber + l][site] += out[l];
                            }
                        }
                    }
                }
            }
        }
    }
    FormField::from_components(grid, r + 1, fiber, comps)
}

/// `(d_A* eta)^J = -(1/sqrt g) d_k(sqrt g eta^{kJ}) - [A_k, eta^{kJ}]`, lowered.
pub(crate) fn codifferential_core(eta: &FormField, g: &MetricField, coupling: Coupling<'_>) -> Result<FormField> {
    check(eta.grid(), g.grid())?;
    let grid = g.grid();
    let n = g.dim();
    let r = eta.degree();
    let fiber = eta.fiber();
    if r == 0 {
        return Ok(FormField::zeros(grid, 0, fiber));
    }
    let basis = form_basis(n);
    let sites = grid.num_sites();
    let len = eta.components().len();
    let mut raised = vec![vec![0.0; sites]; len];
    let mut x = vec![0.0; len];
    let mut y = vec![0.0; len];
    for site in 0..sites {
        eta.gather(site, &mut x);
        g.raise_form_at(r, fiber, site, &x, &mut y);
        for (c, v) in raised.iter_mut().zip(&y) {
            c[site] = *v;
        }
    }
    let vol = g.volume_density();
    let m_out = basis.count(r - 1);
    let masks_out = basis.masks(r - 1).to_vec();
    let results: Vec<Vec<f64>> = (0..m_out * fiber)
        .into_par_iter()
        .map(|flat| {
            let jpos = flat / fiber;
            let l = flat % fiber;
            let mut out = vec![0.0; sites];
            for k in 0..n {
                if let Some((pos, sign)) = basis.prepend(k, masks_out[jpos]) {
                    let weighted: Vec<f64> =
                        raised[pos * fiber + l].iter().zip(vol).map(|(a, b)| sign * a * b).collect();
                    let dk = grid.partial(&weighted, k);
                    for s in 0..sites {
                        out[s] -= dk[s] / vol[s];
                    }
                }
            }
            out
        })
        .collect();
    let mut upper = results;
    if let Some((a, alg)) = coupling {
        if !alg.is_abelian() {
            let mut acc = vec![0.0; fiber];
            for site in 0..sites {
                for (jpos, &j_mask) in masks_out.iter().enumerate() {
                    acc.iter_mut().for_each(|v| *v = 0.0);
                    for k in 0..n {
                        if let Some((pos, sign)) = basis.prepend(k, j_mask) {
                            let ak: Vec<f64> = (0..fiber).map(|s| a.components()[k * fiber + s][site]).collect();
                            let e: Vec<f64> = (0..fiber).map(|s| raised[pos * fiber + s][site]).collect();
                            alg.bracket_acc(&ak, &e, -sign, &mut acc);
                        }
                    }
                    for l in 0..fiber {
                        upper[jpos * fiber + l][site] += acc[l];
                    }
                }
            }
        }
    }
    // lower the result
    let mut out = FormField::zeros(grid, r - 1, fiber);
    let lenout = m_out * fiber;
    let mut xo = vec![0.0; lenout];
    let mut yo = vec![0.0; lenout];
    for site in 0..sites {
        for (v, c) in xo.iter_mut().zip(&upper) {
            *v = c[site];
        }
        g.lower_form_at(r - 1, fiber, site, &xo, &mut yo);
        out.scatter(site, &yo);
    }
    Ok(out)
}

/// Exterior derivative.
pub fn d(omega: &FormField) -> Result<FormField> {
    exterior_core(omega, None)
}

/// Codifferential, the formal `L2` adjoint of `d`.
pub fn d_star(omega: &FormField, g: &MetricField) -> Result<FormField> {
    codifferential_core(omega, g, None)
}

/// Hodge-de Rham Laplacian `d d* + d* d`.
pub fn hodge_laplacian(omega: &FormField, g: &MetricField) -> Result<FormField> {
    let a = d(&d_star(omega, g)?)?;
    let b = d_star(&d(omega)?, g)?;
    if omega.degree() == 0 {
        return Ok(b);
    }
    if omega.degree() == g.dim() {
        return Ok(a);
    }
    a.axpy(1.0, &b)
}

/// Positive Laplacian of a function.
pub fn laplacian(f: &ScalarField, g: &MetricField) -> Result<ScalarField> {
    hodge_laplacian(&FormField::from_scalar(f), g)?.to_scalar()
}

/// Rough Laplacian `nabla* nabla h` of a symmetric 2-tensor.
pub fn rough_laplacian(h: &SymTensorField, g: &MetricField) -> Result<SymTensorField> {
    divergence(&nabla(&h.to_tensor(), g)?, g)?.symmetric_part()
}

/// `R_o(h)(v1, v2) = sum_i h(R(e_i, v1) v2, e_i)`, i.e. `Riem_{a i j d} h^{d a}`.
pub fn r_o(h: &SymTensorField, g: &MetricField, curv: &CurvaturePackage) -> Result<SymTensorField> {
    check(h.grid(), g.grid())?;
    let n = g.dim();
    let rc = curv.riemann.components();
    let mut out = SymTensorField::zeros(g.grid());
    for site in 0..g.grid().num_sites() {
        let gi = g.ginv_at(site);
        let hu = crate::fields::mat::mul(n, &crate::fields::mat::mul(n, gi, &h.at(site)), gi);
        let mut res = crate::fields::mat::ZERO;
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for a in 0..n {
                    for dd in 0..n {
                        acc += rc[((a * n + i) * n + j) * n + dd][site] * hu[dd][a];
                    }
                }
                res[i][j] = acc;
            }
        }
        out.set_at(site, &res);
    }
    Ok(out)
}

/// Lichnerowicz Laplacian `nabla* nabla h + 2 h o Ric - 2 R_o(h)`.
pub fn lichnerowicz(h: &SymTensorField, g: &MetricField) -> Result<SymTensorField> {
    let curv = curvature(g)?;
    lichnerowicz_with(h, g, &curv)
}

pub(crate) fn lichnerowicz_with(h: &SymTensorField, g: &MetricField, curv: &CurvaturePackage) -> Result<SymTensorField> {
    let rough = rough_laplacian(h, g)?;
    let circ = sym_circ(h, &curv.ricci, g)?;
    let ro = r_o(h, g, curv)?;
    rough.axpy(2.0, &circ)?.axpy(-2.0, &ro)
}

/// `d Ric (h) = 1/2 Delta_L h - delta nabla* h - 1/2 nabla d Tr h`.
pub fn lin_ricci(h: &SymTensorField, g: &MetricField) -> Result<SymTensorField> {
    let curv = curvature(g)?;
    lin_ricci_with(h, g, &curv)
}

pub(crate) fn lin_ricci_with(h: &SymTensorField, g: &MetricField, curv: &CurvaturePackage) -> Result<SymTensorField> {
    let lich = lichnerowicz_with(h, g, curv)?;
    let dd = sym_derivative_one_form(&divergence_sym(h, g)?, g)?;
    let hess = hessian(&trace_g(h, g)?, g)?;
    lich.scale(0.5).axpy(-1.0, &dd)?.axpy(-0.5, &hess)
}

/// `d s (h) = Delta Tr h + nabla* nabla* h - g(h, Ric)`.
pub fn lin_scalar(h: &SymTensorField, g: &MetricField) -> Result<ScalarField> {
    let curv = curvature(g)?;
    lin_scalar_with(h, g, &curv)
}

pub(crate) fn lin_scalar_with(h: &SymTensorField, g: &MetricField, curv: &CurvaturePackage) -> Result<ScalarField> {
    let lap = laplacian(&trace_g(h, g)?, g)?;
    let dd = double_divergence(h, g)?;
    let hr = crate::fields::sym_inner_pointwise(h, &curv.ricci, g)?;
    lap.axpy(1.0, &dd)?.axpy(-1.0, &hr)
}

/// Differential of the Einstein tensor: `dRic(h) - 1/2 ds(h) g - 1/2 s h`.
pub fn lin_einstein(h: &SymTensorField, g: &MetricField) -> Result<SymTensorField> {
    let curv = curvature(g)?;
    lin_einstein_with(h, g, &curv)
}

pub(crate) fn lin_einstein_with(h: &SymTensorField, g: &MetricField, curv: &CurvaturePackage) -> Result<SymTensorField> {
    let ric = lin_ricci_with(h, g, curv)?;
    let ds = lin_scalar_with(h, g, curv)?;
    ric.axpy(-0.5, &g.tensor().mul_scalar(&ds))?.axpy(-0.5, &h.mul_scalar(&curv.scalar))
}

/// Differential of the volume density: `1/2 Tr_g(h) sqrt(det g)`.
pub fn lin_volume(h: &SymTensorField, g: &MetricField) -> Result<ScalarField> {
    let tr = trace_g(h, g)?;
    let values = tr.values().iter().zip(g.volume_density()).map(|(t, v)| 0.5 * t * v).collect();
    Ok(ScalarField::from_vec(g.grid(), values))
}

/// Differential of the Hodge star on `omega`: `1/2 Tr_g(h) *omega + *(omega)_h`.
pub fn lin_star(omega: &FormField, h: &SymTensorField, g: &MetricField) -> Result<FormField> {
    let tr = trace_g(h, g)?;
    let star = hodge_star(g, omega)?.mul_scalar(&tr.scale(0.5));
    star.axpy(1.0, &hodge_star(g, &op_gh(omega, h, g)?)?)
}
