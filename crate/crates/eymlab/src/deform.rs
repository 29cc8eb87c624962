//! Deformation theory of Einstein-Yang-Mills pairs: the infinitesimal gauge
//! action, the linearized residual, the Laplacian of the deformation complex
//! and the identities satisfied by essential deformations.
//!
//! Every operator takes an [`EymPoint`], which bundles `(g, A)` with its
//! curvature data so that repeated applications inside solvers stay cheap.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::algebra::LieAlgebraData;
use crate::error::{EymError, Result};
use crate::eym::{EymConfig, EymPoint};
use crate::fields::index::sym_pairs;
use crate::fields::mat::{self, M4};
use crate::fields::{
    circ_gc, circ_h, form_inner_pointwise, form_l2_inner, interior, l2_inner, lrcorner_alg, lrcorner_c, op_gh, sharp, sym_circ, sym_inner_pointwise, sym_l2_inner, trace_g, traceless_part,
    DeformationPair, FormField, MetricField, SymTensorField, VectorField,
};
use crate::gauge::{d_a, d_a_star};
use crate::lattice::{integrate, ScalarField};
use crate::linalg::{block_lanczos, conjugate_gradient, dense_spectrum, kernel_count, CgOutcome, LanczosOptions};
use crate::riemann::{
    d, d_star, divergence_sym, double_divergence, hessian, laplacian, lie_derivative, lin_einstein_with, r_o,
    rough_laplacian, sym_derivative_one_form,
};

/// Infinitesimal automorphism `(v, tau)`: a vector field and a Lie-algebra
/// valued function.
#[derive(Clone, Debug, PartialEq)]
pub struct InfAutomorphism {
    pub v: VectorField,
    pub tau: FormField,
}

impl InfAutomorphism {
    pub fn zeros(grid: &crate::lattice::Grid, fiber: usize) -> Self {
        InfAutomorphism { v: VectorField::zeros(grid), tau: FormField::zeros(grid, 0, fiber) }
    }

    pub fn axpy(&self, alpha: f64, other: &InfAutomorphism) -> Result<InfAutomorphism> {
        Ok(InfAutomorphism { v: self.v.axpy(alpha, &other.v)?, tau: self.tau.axpy(alpha, &other.tau)? })
    }

    pub fn scale(&self, alpha: f64) -> InfAutomorphism {
        InfAutomorphism { v: self.v.scale(alpha), tau: self.tau.scale(alpha) }
    }

    pub fn max_abs(&self) -> f64 {
        self.v.max_abs().max(self.tau.max_abs())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.v.components().iter().chain(self.tau.components()).flatten().copied().collect()
    }

    pub fn from_flat(template: &InfAutomorphism, data: &[f64]) -> Result<InfAutomorphism> {
        let grid = template.v.grid();
        let sites = grid.num_sites();
        let n = grid.dim();
        let mut chunks = data.chunks(sites).map(|c| c.to_vec());
        let v: Vec<Vec<f64>> = chunks.by_ref().take(n).collect();
        let tau: Vec<Vec<f64>> = chunks.collect();
        Ok(InfAutomorphism {
            v: VectorField::from_components(grid, v)?,
            tau: FormField::from_components(grid, 0, template.tau.fiber(), tau)?,
        })
    }
}

/// `int (g(v, w) + c(tau, sigma)) dvol`.
pub fn inf_inner(x: &InfAutomorphism, y: &InfAutomorphism, g: &MetricField, alg: &LieAlgebraData) -> Result<f64> {
    let n = g.dim();
    let values: Vec<f64> = (0..g.grid().num_sites())
        .map(|s| {
            let gm = g.g_at(s);
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += gm[i][j] * x.v.components()[i][s] * y.v.components()[j][s];
                }
            }
            acc
        })
        .collect();
    let vv = integrate(&ScalarField::new(g.grid(), values)?, g)?;
    Ok(vv + form_l2_inner(&x.tau, &y.tau, g, Some(alg))?)
}

fn pair_norm(p: &DeformationPair, point: &EymPoint) -> Result<f64> {
    Ok(l2_inner(p, p, &point.g, point.algebra())?.max(0.0).sqrt())
}

fn inf_norm(x: &InfAutomorphism, point: &EymPoint) -> Result<f64> {
    Ok(inf_inner(x, x, &point.g, point.algebra())?.max(0.0).sqrt())
}

/// `d Phi (v, tau) = (L_v g, d_A tau + iota_v F)`.
pub fn inf_action(x: &InfAutomorphism, point: &EymPoint) -> Result<DeformationPair> {
    let h = lie_derivative(&x.v, &point.g)?;
    let a = d_a(&x.tau, &point.conn)?.axpy(1.0, &interior(&x.v, &point.f)?)?;
    Ok(DeformationPair { h, a })
}

/// `(d Phi)^* (h, a) = (2 (nabla^* h)^# - (a -| F)^#, d_A^* a)`.
pub fn inf_action_adjoint(p: &DeformationPair, point: &EymPoint) -> Result<InfAutomorphism> {
    let g = &point.g;
    let div = divergence_sym(&p.h, g)?;
    let contraction = lrcorner_c(&p.a, &point.f, g, point.algebra())?;
    let v = sharp(&div.scale(2.0).axpy(-1.0, &contraction)?, g)?;
    let tau = d_a_star(&p.a, &point.conn, g)?;
    Ok(InfAutomorphism { v, tau })
}

/// Which closed form of the linearized residual to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LinBranch {
    /// Valid at every pair.
    General,
    /// Simplified using the field equations; only meaningful at critical pairs.
    OnShell,
}

/// `h(u)` for a (possibly algebra-valued) 1-form: `u` composed with `g^-1 h`.
fn endo_one_form(u: &FormField, h: &SymTensorField, g: &MetricField) -> Result<FormField> {
    Ok(op_gh(u, h, g)?.scale(-1.0))
}

/// `d E (h, a)` at `point`.
pub fn lin_residual(p: &DeformationPair, point: &EymPoint, cfg: &EymConfig, branch: LinBranch) -> Result<DeformationPair> {
    let g = &point.g;
    let alg = point.algebra();
    let k = cfg.k();
    let n = point.dim();
    let h = &p.h;
    let a = &p.a;
    let f = &point.f;
    let da = d_a(a, &point.conn)?;
    let inner_fa = form_inner_pointwise(&da, f, g, Some(alg))?;
    let f_da = circ_gc(f, &da, g, Some(alg))?;
    let f_h_f = circ_h(f, f, h, g, Some(alg))?;
    let tr = trace_g(h, g)?;
    let dtr = d(&FormField::from_scalar(&tr))?;

    let e1 = match branch {
        LinBranch::General => {
            let h_fcf = sym_inner_pointwise(h, &point.fcf, g)?;
            let scalar = inner_fa.scale(2.0).axpy(-1.0, &h_fcf)?.scale(0.5 * k);
            let dt = g
                .tensor()
                .mul_scalar(&scalar)
                .axpy(1.0, &h.mul_scalar(&point.f_sq.scale(0.5 * k)))?
                .axpy(k, &f_h_f)?
                .axpy(-2.0 * k, &f_da)?;
            dt.axpy(-1.0, &lin_einstein_with(h, g, &point.curv)?)?
        }
        LinBranch::OnShell => {
            if n == 2 {
                return Err(EymError::UnsupportedDimension(2));
            }
            let lap_tr = laplacian(&tr, g)?;
            let ddh = double_divergence(h, g)?;
            let scalar = lap_tr
                .scale(-0.5)
                .axpy(-0.5, &ddh)?
                .axpy(k / (2.0 * (n as f64 - 2.0)), &ScalarField::new(g.grid(), mul(tr.values(), point.f_sq.values()))?)?
                .axpy(-k, &inner_fa)?;
            let inside = rough_laplacian(h, g)?
                .scale(0.5)
                .axpy(-1.0, &r_o(h, g, &point.curv)?)?
                .axpy(-1.0, &sym_derivative_one_form(&divergence_sym(h, g)?, g)?)?
                .axpy(-0.5, &hessian(&tr, g)?)?
                .axpy(-k, &sym_circ(h, &point.fcf, g)?)?
                .axpy(-k, &f_h_f)?
                .axpy(2.0 * k, &f_da)?
                .axpy(1.0, &g.tensor().mul_scalar(&scalar))?;
            inside.scale(-1.0)
        }
    };

    let mut e2 = d_a_star(&da, &point.conn, g)?
        .axpy(-1.0, &lrcorner_alg(a, f, g, alg)?)?
        .axpy(-0.5, &interior(&sharp(&dtr, g)?, f)?)?
        .axpy(1.0, &d_a_star(&op_gh(f, h, g)?, &point.conn, g)?)?;
    if branch == LinBranch::General {
        e2 = e2.axpy(1.0, &endo_one_form(&point.ym, h, g)?)?;
    }
    Ok(DeformationPair { h: e1, a: e2.scale(2.0 * k) })
}

fn mul(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a * b).collect()
}

/// Random infinitesimal automorphism with smooth band-limited components.
pub fn random_automorphism<R: Rng>(
    grid: &crate::lattice::Grid,
    fiber: usize,
    rng: &mut R,
    max_mode: usize,
    amplitude: f64,
) -> InfAutomorphism {
    InfAutomorphism {
        v: crate::sampling::random_vector(grid, rng, max_mode, amplitude),
        tau: crate::sampling::random_form(grid, 0, fiber, rng, max_mode, amplitude),
    }
}

/// Defects of the deformation complex at a point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexReport {
    /// `L2` norm of the residual at the point.
    pub residual_norm: f64,
    /// Whether the residual is below the critical-pair tolerance.
    pub on_shell: bool,
    /// `max ||dE(dPhi x)|| / ||x||` over the trials.
    pub d_e_after_d_phi: f64,
    /// `max ||dPhi^*(dE p)|| / ||p||` over the trials.
    pub d_phi_adjoint_after_d_e: f64,
    /// `||dPhi^*(E)||` divided by the sum of the norms of its terms.
    pub off_shell_relative: f64,
    pub off_shell_absolute: f64,
    /// Sum of the norms of the terms of `dPhi^*(E)`.
    pub off_shell_scale: f64,
}

/// `dE o dPhi`, `dPhi^* o dE` on random inputs, and the identity
/// `dPhi^*(E(g, A)) = 0` that holds at every pair.
pub fn complex_defect<R: Rng>(
    point: &EymPoint,
    cfg: &EymConfig,
    trials: usize,
    rng: &mut R,
    max_mode: usize,
) -> Result<ComplexReport> {
    let grid = point.g.grid().clone();
    let fiber = point.algebra().dim();
    let res = point.residual(cfg.k())?;
    let residual_norm = res.l2_norm(&point.g, point.algebra())?;
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    for _ in 0..trials {
        let x = random_automorphism(&grid, fiber, rng, max_mode, 1.0);
        let img = lin_residual(&inf_action(&x, point)?, point, cfg, LinBranch::General)?;
        first = first.max(pair_norm(&img, point)? / inf_norm(&x, point)?);
        let p = crate::sampling::random_pair(&grid, fiber, rng, max_mode, 1.0);
        let back = inf_action_adjoint(&lin_residual(&p, point, cfg, LinBranch::General)?, point)?;
        second = second.max(inf_norm(&back, point)? / pair_norm(&p, point)?);
    }
    let (off_abs, off_scale) = off_shell_parts(point, cfg)?;
    let off_rel = if off_scale > 0.0 { off_abs / off_scale } else { off_abs };
    Ok(ComplexReport {
        residual_norm,
        on_shell: residual_norm <= cfg.tol.residual,
        d_e_after_d_phi: first,
        d_phi_adjoint_after_d_e: second,
        off_shell_relative: off_rel,
        off_shell_absolute: off_abs,
        off_shell_scale: off_scale,
    })
}

/// `||dPhi^*(E)||` and the sum of the norms of `2 nabla^* E1`, `E2 -| F` and
/// `d_A^* E2`.
fn off_shell_parts(point: &EymPoint, cfg: &EymConfig) -> Result<(f64, f64)> {
    let res = point.residual(cfg.k())?;
    let g = &point.g;
    let alg = point.algebra();
    let div = divergence_sym(&res.e1, g)?.scale(2.0);
    let contraction = lrcorner_c(&res.e2, &point.f, g, alg)?;
    let tau = d_a_star(&res.e2, &point.conn, g)?;
    let one_norm = |w: &FormField, c: Option<&LieAlgebraData>| -> Result<f64> {
        Ok(form_l2_inner(w, w, g, c)?.max(0.0).sqrt())
    };
    let vec_part = div.axpy(-1.0, &contraction)?;
    let defect = (one_norm(&vec_part, None)?.powi(2) + one_norm(&tau, Some(alg))?.powi(2)).sqrt();
    let scale = one_norm(&div, None)? + one_norm(&contraction, None)? + one_norm(&tau, Some(alg))?;
    Ok((defect, scale))
}

/// `(||dPhi^*(E)||, ||dPhi^*(E)|| / scale)` with the scale of [`ComplexReport::off_shell_scale`].
pub fn off_shell_identity(point: &EymPoint, cfg: &EymConfig) -> Result<(f64, f64)> {
    let (defect, scale) = off_shell_parts(point, cfg)?;
    Ok((defect, if scale > 0.0 { defect / scale } else { defect }))
}

/// Relative symmetry defect of `dE` in the `L2` metric: the largest
/// `|<dE p, q> - <p, dE q>| / (||dE p|| ||q|| + ||p|| ||dE q||)` over random
/// `(p, q)`. Only expected to vanish at critical pairs.
pub fn self_adjoint_defect<R: Rng>(
    point: &EymPoint,
    cfg: &EymConfig,
    trials: usize,
    rng: &mut R,
    max_mode: usize,
) -> Result<f64> {
    let grid = point.g.grid().clone();
    let fiber = point.algebra().dim();
    let g = &point.g;
    let alg = point.algebra();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let p = crate::sampling::random_pair(&grid, fiber, rng, max_mode, 1.0);
        let q = crate::sampling::random_pair(&grid, fiber, rng, max_mode, 1.0);
        let dp = lin_residual(&p, point, cfg, LinBranch::General)?;
        let dq = lin_residual(&q, point, cfg, LinBranch::General)?;
        let lhs = l2_inner(&dp, &q, g, alg)?;
        let rhs = l2_inner(&p, &dq, g, alg)?;
        let scale = pair_norm(&dp, point)? * pair_norm(&q, point)? + pair_norm(&p, point)? * pair_norm(&dq, point)?;
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(worst)
}

/// `Delta^(1) p = dE(dE p) + dPhi(dPhi^* p)`; `dE` is self-adjoint at
/// critical pairs, so this is `(dE)^* dE + dPhi dPhi^*` there.
pub fn laplacian1_apply(p: &DeformationPair, point: &EymPoint, cfg: &EymConfig) -> Result<DeformationPair> {
    let de = lin_residual(p, point, cfg, LinBranch::General)?;
    let dede = lin_residual(&de, point, cfg, LinBranch::General)?;
    dede.axpy(1.0, &inf_action(&inf_action_adjoint(p, point)?, point)?)
}

/// `Delta^(0) x = dPhi^* dPhi x`.
pub fn laplacian0_apply(x: &InfAutomorphism, point: &EymPoint) -> Result<InfAutomorphism> {
    inf_action_adjoint(&inf_action(x, point)?, point)
}

/// Low end of a spectrum with the kernel-dimension verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    pub gap_ratio: f64,
    pub ambiguous: bool,
    /// Largest Ritz residual among the reported pairs, relative to the top value.
    pub max_residual: f64,
    pub subspace_dim: usize,
}

/// Thresholds of the kernel-dimension policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelPolicy {
    pub tau_rel: f64,
    pub tau_abs: f64,
    pub min_gap: f64,
}

impl Default for KernelPolicy {
    fn default() -> Self {
        KernelPolicy { tau_rel: 1e-8, tau_abs: 1e-12, min_gap: 1e3 }
    }
}

fn report_from(values: Vec<f64>, residuals: &[f64], subspace_dim: usize, policy: KernelPolicy) -> SpectrumReport {
    let kc = kernel_count(&values, policy.tau_rel, policy.tau_abs, policy.min_gap);
    let top = values.last().copied().unwrap_or(0.0).abs().max(policy.tau_abs);
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(*r)) / top;
    SpectrumReport {
        eigenvalues: values,
        kernel_dim: kc.dim,
        gap_ratio: kc.gap_ratio,
        ambiguous: kc.ambiguous,
        max_residual,
        subspace_dim,
    }
}

fn pair_operator<'a>(
    point: &'a EymPoint,
    cfg: &'a EymConfig,
) -> (DeformationPair, impl Fn(&[f64]) -> Vec<f64> + 'a, impl Fn(&[f64], &[f64]) -> f64 + 'a) {
    let template = DeformationPair::zeros(point.g.grid(), point.algebra().dim());
    let t1 = template.clone();
    let t2 = template.clone();
    let apply = move |x: &[f64]| {
        let p = DeformationPair::from_flat(&t1, x);
        laplacian1_apply(&p, point, cfg).expect("shapes fixed by the template").to_flat()
    };
    let inner = move |x: &[f64], y: &[f64]| {
        let p = DeformationPair::from_flat(&t2, x);
        let q = DeformationPair::from_flat(&t2, y);
        l2_inner(&p, &q, &point.g, point.algebra()).expect("shapes fixed by the template")
    };
    (template, apply, inner)
}

/// Lowest `k` eigenvalues of `Delta^(1)` by block Lanczos.
pub fn essential_spectrum<R: Rng>(
    point: &EymPoint,
    cfg: &EymConfig,
    k: usize,
    opts: LanczosOptions,
    policy: KernelPolicy,
    rng: &mut R,
) -> Result<SpectrumReport> {
    let (template, apply, inner) = pair_operator(point, cfg);
    let len = template.to_flat().len();
    let out = block_lanczos(apply, inner, len, k, opts, rng)?;
    Ok(report_from(out.values, &out.residuals, out.subspace_dim, policy))
}

/// Full spectrum of `Delta^(1)` from the assembled matrix; intended for tiny grids.
pub fn dense_essential_spectrum(point: &EymPoint, cfg: &EymConfig, policy: KernelPolicy) -> Result<SpectrumReport> {
    let (template, apply, inner) = pair_operator(point, cfg);
    let len = template.to_flat().len();
    let values = dense_spectrum(apply, inner, len)?;
    let dim = values.len();
    Ok(report_from(values, &[], dim, policy))
}

/// Lowest `k` eigenvalues of `Delta^(0) = dPhi^* dPhi`, whose kernel is the
/// space of infinitesimal symmetries of the pair.
pub fn automorphism_spectrum<R: Rng>(
    point: &EymPoint,
    k: usize,
    opts: LanczosOptions,
    policy: KernelPolicy,
    rng: &mut R,
) -> Result<SpectrumReport> {
    let template = InfAutomorphism::zeros(point.g.grid(), point.algebra().dim());
    let len = template.to_flat().len();
    let apply = |x: &[f64]| {
        let y = InfAutomorphism::from_flat(&template, x).expect("template shape");
        laplacian0_apply(&y, point).expect("template shape").to_flat()
    };
    let inner = |x: &[f64], y: &[f64]| {
        let p = InfAutomorphism::from_flat(&template, x).expect("template shape");
        let q = InfAutomorphism::from_flat(&template, y).expect("template shape");
        inf_inner(&p, &q, &point.g, point.algebra()).expect("template shape")
    };
    let out = block_lanczos(apply, inner, len, k, opts, rng)?;
    Ok(report_from(out.values, &out.residuals, out.subspace_dim, policy))
}

/// `L2` and sup norm of one defect field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DefectNorm {
    pub l2: f64,
    pub sup: f64,
}

impl DefectNorm {
    pub fn max(&self) -> f64 {
        self.l2.max(self.sup)
    }

    pub fn of_sym(h: &SymTensorField, g: &MetricField) -> Result<Self> {
        Ok(DefectNorm { l2: sym_l2_inner(h, h, g)?.max(0.0).sqrt(), sup: h.max_abs() })
    }

    pub fn of_form(w: &FormField, g: &MetricField, c: Option<&LieAlgebraData>) -> Result<Self> {
        Ok(DefectNorm { l2: form_l2_inner(w, w, g, c)?.max(0.0).sqrt(), sup: w.max_abs() })
    }

    pub fn of_scalar(f: &ScalarField, g: &MetricField) -> Result<Self> {
        let sq = ScalarField::new(g.grid(), mul(f.values(), f.values()))?;
        Ok(DefectNorm { l2: integrate(&sq, g)?.max(0.0).sqrt(), sup: f.max_abs() })
    }
}

/// The four equations characterizing essential deformations at a critical pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EssentialReport {
    pub metric_equation: DefectNorm,
    pub gauge_equation: DefectNorm,
    pub slice_metric: DefectNorm,
    pub slice_gauge: DefectNorm,
}

impl EssentialReport {
    pub fn max(&self) -> f64 {
        [self.metric_equation, self.gauge_equation, self.slice_metric, self.slice_gauge]
            .iter()
            .fold(0.0, |m, d| m.max(d.max()))
    }
}

/// Defects of the four essential-deformation equations for `p`.
pub fn essential_system_residual(p: &DeformationPair, point: &EymPoint, cfg: &EymConfig) -> Result<EssentialReport> {
    let n = point.dim();
    if n == 2 {
        return Err(EymError::UnsupportedDimension(2));
    }
    let g = &point.g;
    let alg = point.algebra();
    let k = cfg.k();
    let (h, a, f) = (&p.h, &p.a, &point.f);
    let da = d_a(a, &point.conn)?;
    let tr = trace_g(h, g)?;
    let inner_fa = form_inner_pointwise(f, &da, g, Some(alg))?;
    let fcf_h = sym_inner_pointwise(&point.fcf, h, g)?;
    let scalar = inner_fa.scale(2.0).axpy(-1.0, &fcf_h)?.scale(-k / (n as f64 - 2.0));
    let first = rough_laplacian(h, g)?
        .scale(0.5)
        .axpy(-1.0, &r_o(h, g, &point.curv)?)?
        .axpy(-1.0, &sym_derivative_one_form(&divergence_sym(h, g)?, g)?)?
        .axpy(-0.5, &hessian(&tr, g)?)?
        .axpy(-k, &circ_h(f, f, h, g, Some(alg))?)?
        .axpy(-k, &sym_circ(h, &point.fcf, g)?)?
        .axpy(2.0 * k, &circ_gc(f, &da, g, Some(alg))?)?
        .axpy(1.0, &g.tensor().mul_scalar(&scalar))?;
    let dtr = d(&FormField::from_scalar(&tr))?;
    let second = d_a_star(&da, &point.conn, g)?
        .axpy(-1.0, &lrcorner_alg(a, f, g, alg)?)?
        .axpy(-0.5, &interior(&sharp(&dtr, g)?, f)?)?
        .axpy(1.0, &d_a_star(&op_gh(f, h, g)?, &point.conn, g)?)?;
    let third = divergence_sym(h, g)?.scale(2.0).axpy(-1.0, &lrcorner_c(a, f, g, alg)?)?;
    let fourth = d_a_star(a, &point.conn, g)?;
    Ok(EssentialReport {
        metric_equation: DefectNorm::of_sym(&first, g)?,
        gauge_equation: DefectNorm::of_form(&second, g, Some(alg))?,
        slice_metric: DefectNorm::of_form(&third, g, None)?,
        slice_gauge: DefectNorm::of_form(&fourth, g, Some(alg))?,
    })
}

/// Orthogonal projection of `p` onto `Ker (dPhi)^*`: solves
/// `dPhi^* dPhi x = dPhi^* p` by conjugate gradients and returns `p - dPhi x`.
pub fn project_to_slice(
    p: &DeformationPair,
    point: &EymPoint,
    tol: f64,
    max_iter: usize,
) -> Result<(DeformationPair, CgOutcome)> {
    let template = InfAutomorphism::zeros(point.g.grid(), point.algebra().dim());
    let rhs = inf_action_adjoint(p, point)?.to_flat();
    let apply = |x: &[f64]| {
        let y = InfAutomorphism::from_flat(&template, x).expect("template shape");
        laplacian0_apply(&y, point).expect("template shape").to_flat()
    };
    let inner = |x: &[f64], y: &[f64]| {
        let a = InfAutomorphism::from_flat(&template, x).expect("template shape");
        let b = InfAutomorphism::from_flat(&template, y).expect("template shape");
        inf_inner(&a, &b, &point.g, point.algebra()).expect("template shape")
    };
    let cg = conjugate_gradient(apply, inner, &rhs, tol, max_iter);
    let x = InfAutomorphism::from_flat(&template, &cg.solution)?;
    let projected = p.axpy(-1.0, &inf_action(&x, point)?)?;
    Ok((projected, cg))
}

/// Defect of the trace identity satisfied by infinitesimal deformations
/// `p in Ker dE`:
/// for `n = 4`, `Delta Tr h + nabla^* nabla^* h + kappa g((F o F)°, h°)`;
/// otherwise `Delta Tr h + nabla^* nabla^* h + (s/n) Tr h` minus
/// `2 kappa (n-4)/(2-n) <d_A a, F> + 2 kappa/(2-n) g((F o F)°, h°)`.
pub fn trace_lemma_defect(p: &DeformationPair, point: &EymPoint, cfg: &EymConfig) -> Result<ScalarField> {
    let n = point.dim();
    if n == 2 {
        return Err(EymError::UnsupportedDimension(2));
    }
    let g = &point.g;
    let alg = point.algebra();
    let k = cfg.k();
    let h = &p.h;
    let tr = trace_g(h, g)?;
    let base = laplacian(&tr, g)?.axpy(1.0, &double_divergence(h, g)?)?;
    let ho = traceless_part(h, g)?;
    let fcf_o = traceless_part(&point.fcf, g)?;
    let coupling = sym_inner_pointwise(&fcf_o, &ho, g)?;
    if n == 4 {
        return base.axpy(k, &coupling);
    }
    let nf = n as f64;
    let da = d_a(&p.a, &point.conn)?;
    let inner_fa = form_inner_pointwise(&da, &point.f, g, Some(alg))?;
    let s_tr = ScalarField::new(g.grid(), mul(point.curv.scalar.values(), tr.values()))?;
    base.axpy(1.0 / nf, &s_tr)?
        .axpy(-2.0 * k * (nf - 4.0) / (2.0 - nf), &inner_fa)?
        .axpy(-2.0 * k / (2.0 - nf), &coupling)
}

/// `nabla^* nabla^* h - 1/2 <d_A a, F>`, which vanishes on the slice at
/// Yang-Mills pairs.
pub fn slice_second_order_defect(p: &DeformationPair, point: &EymPoint) -> Result<ScalarField> {
    let g = &point.g;
    let da = d_a(&p.a, &point.conn)?;
    let inner_fa = form_inner_pointwise(&da, &point.f, g, Some(point.algebra()))?;
    double_divergence(&p.h, g)?.axpy(-0.5, &inner_fa)
}

/// Harmonic part of the 1-form `2 nabla^* h° - a -| F` and the integral
/// identity for infinitesimal deformations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObstructionReport {
    /// Coefficients `c_i` of the class `sum c_i [dx^i]`.
    pub class: Vec<f64>,
    /// `L2` norm of the harmonic representative.
    pub class_norm: f64,
    /// `int (s/n) Tr h dvol`.
    pub scalar_integral: f64,
    /// `2 kappa/(2-n) int g((F o F)°, h°) dvol`.
    pub coupling_integral: f64,
    /// `int g((F o F)°, h°) dvol`, the quantity that vanishes for `n = 4`.
    pub traceless_pairing: f64,
    /// Largest CG residual met while building harmonic forms.
    pub solver_residual: f64,
}

/// Harmonic representatives `dx^i - d f_i` with `Delta f_i = d^* dx^i`, and
/// the largest relative CG residual met. On constant metrics `dx^i` is
/// already harmonic.
pub(crate) fn harmonic_forms(g: &MetricField, cg_tol: f64, cg_max: usize) -> Result<(Vec<FormField>, f64)> {
    let grid = g.grid();
    let mut worst: f64 = 0.0;
    let mut harmonic = Vec::with_capacity(g.dim());
    for i in 0..g.dim() {
        let dx = FormField::constant(grid, 1, 1, &[(&[i], 0, 1.0)]);
        if g.is_constant() {
            harmonic.push(dx);
            continue;
        }
        let rhs = d_star(&dx, g)?.to_scalar()?;
        let cg = solve_laplacian(&rhs, g, cg_tol, cg_max);
        worst = worst.max(cg.relative_residual);
        let f = ScalarField::new(grid, cg.solution)?;
        harmonic.push(dx.axpy(-1.0, &d(&FormField::from_scalar(&f))?)?);
    }
    Ok((harmonic, worst))
}

/// CG solve of `Delta_g f = rhs`; `rhs` must be orthogonal to constants.
pub(crate) fn solve_laplacian(rhs: &ScalarField, g: &MetricField, tol: f64, max_iter: usize) -> CgOutcome {
    let grid = g.grid();
    let apply = |x: &[f64]| {
        let f = ScalarField::new(grid, x.to_vec()).expect("finite");
        laplacian(&f, g).expect("same grid").into_values()
    };
    let inner = |x: &[f64], y: &[f64]| {
        let f = ScalarField::new(grid, mul(x, y)).expect("finite");
        integrate(&f, g).expect("same grid")
    };
    conjugate_gradient(apply, inner, rhs.values(), tol, max_iter)
}

/// Hodge projection of a scalar 1-form onto harmonic forms, as class
/// coefficients in the basis of [`harmonic_forms`] together with the `L2` norm
/// of the projection and the worst CG residual.
pub fn harmonic_class(rho: &FormField, g: &MetricField, cg_tol: f64, cg_max: usize) -> Result<(Vec<f64>, f64, f64)> {
    let n = g.dim();
    let (harmonic, worst) = harmonic_forms(g, cg_tol, cg_max)?;
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = form_l2_inner(&harmonic[i], &harmonic[j], g, None)?;
        }
        b[i] = form_l2_inner(&harmonic[i], rho, g, None)?;
    }
    let c = gram
        .clone()
        .cholesky()
        .ok_or_else(|| EymError::Precondition("harmonic Gram matrix is singular".into()))?
        .solve(&b);
    let norm = (c.transpose() * &gram * &c)[(0, 0)].max(0.0).sqrt();
    Ok((c.iter().copied().collect(), norm, worst))
}

/// Obstruction data of `(h, a)`: the class `[2 nabla^* h° - a -| F]` and the
/// integrals of the trace identity. `h` may carry a trace; the class only sees `h°`.
pub fn obstruction_class(
    h: &SymTensorField,
    a: &FormField,
    point: &EymPoint,
    cfg: &EymConfig,
) -> Result<ObstructionReport> {
    let n = point.dim();
    if n < 3 {
        return Err(EymError::UnsupportedDimension(n));
    }
    let g = &point.g;
    let alg = point.algebra();
    let ho = traceless_part(h, g)?;
    let rho = divergence_sym(&ho, g)?.scale(2.0).axpy(-1.0, &lrcorner_c(a, &point.f, g, alg)?)?;
    let (class, class_norm, solver_residual) = harmonic_class(&rho, g, cfg.flow.cg_tol, cfg.flow.cg_max_iter)?;
    let tr = trace_g(h, g)?;
    let s_tr = ScalarField::new(g.grid(), mul(point.curv.scalar.values(), tr.values()))?;
    let scalar_integral = integrate(&s_tr, g)? / n as f64;
    let fcf_o = traceless_part(&point.fcf, g)?;
    let traceless_pairing = integrate(&sym_inner_pointwise(&fcf_o, &ho, g)?, g)?;
    let coupling_integral = 2.0 * cfg.k() / (2.0 - n as f64) * traceless_pairing;
    Ok(ObstructionReport { class, class_norm, scalar_integral, coupling_integral, traceless_pairing, solver_residual })
}

/// Coefficient `2 kappa (n-4) / (n(n-2) + 2(n-2)^2 - 16 kappa (n-2) + 8 kappa n)`
/// of the conformal-deformation operator.
pub fn conformal_coefficient(n: usize, kappa: f64) -> Result<f64> {
    let nf = n as f64;
    let den = nf * (nf - 2.0) + 2.0 * (nf - 2.0).powi(2) - 16.0 * kappa * (nf - 2.0) + 8.0 * kappa * nf;
    if den == 0.0 {
        return Err(EymError::Precondition(format!("conformal coefficient is singular for n = {n}")));
    }
    Ok(2.0 * kappa * (nf - 4.0) / den)
}

/// `Delta_g f + c_n |F|^2 f` with `c_n` from [`conformal_coefficient`].
pub fn conformal_operator(f: &ScalarField, point: &EymPoint, cfg: &EymConfig) -> Result<ScalarField> {
    let coef = conformal_coefficient(point.dim(), cfg.k())?;
    let pot = ScalarField::new(f.grid(), mul(point.f_sq.values(), f.values()))?;
    laplacian(f, &point.g)?.axpy(coef, &pot)
}

/// Lowest eigenvalues of [`conformal_operator`].
pub fn conformal_spectrum<R: Rng>(
    point: &EymPoint,
    cfg: &EymConfig,
    k: usize,
    opts: LanczosOptions,
    policy: KernelPolicy,
    rng: &mut R,
) -> Result<SpectrumReport> {
    let g = &point.g;
    let grid = g.grid();
    let apply = |x: &[f64]| {
        let f = ScalarField::new(grid, x.to_vec()).expect("finite");
        conformal_operator(&f, point, cfg).expect("same grid").into_values()
    };
    let inner = |x: &[f64], y: &[f64]| {
        let f = ScalarField::new(grid, mul(x, y)).expect("finite");
        integrate(&f, g).expect("same grid")
    };
    let out = block_lanczos(apply, inner, grid.num_sites(), k, opts, rng)?;
    // The kernel test here looks for zero itself rather than for values small
    // relative to the top of the window: the operator may be indefinite.
    let mut report = report_from(out.values.clone(), &out.residuals, out.subspace_dim, policy);
    let top = out.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(policy.tau_abs);
    report.kernel_dim = out.values.iter().filter(|v| v.abs() <= policy.tau_rel * top).count();
    Ok(report)
}

/// Ranks of the principal symbols of the deformation complex at one point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolReport {
    pub n: usize,
    pub d: usize,
    pub rank_d_phi: usize,
    pub rank_d_e: usize,
    pub rank_d_phi_adjoint: usize,
    /// Dimension of the space of deformations `(h, a)`.
    pub middle_dim: usize,
    /// `||sigma(dE) sigma(dPhi)||` and `||sigma(dPhi^*) sigma(dE)||`, relative.
    pub composition_defects: (f64, f64),
    pub exact_first: bool,
    pub exact_second: bool,
    pub surjective_last: bool,
}

impl SymbolReport {
    pub fn exact(&self) -> bool {
        self.exact_first && self.exact_second && self.surjective_last
    }
}

/// Relative singular-value threshold used for symbol ranks.
pub const SYMBOL_RANK_TOL: f64 = 1e-9;

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0f64, |a, b| a.max(*b));
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > SYMBOL_RANK_TOL * top).count()
}

fn rel_norm(prod: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm() * b.norm();
    if scale == 0.0 {
        0.0
    } else {
        prod.norm() / scale
    }
}

/// Builds `sigma(dPhi)`, `sigma(dE)`, `sigma(dPhi^*)` at the covector `xi`
/// for the metric `g_point` (an `n x n` SPD matrix) and a `d`-dimensional
/// algebra, and checks exactness at both middle slots by SVD ranks.
/// Symmetric tensors use coordinates `h_ij, i <= j`; 1-forms `a_i^L`.
pub fn symbol_check(g_point: &M4, n: usize, xi: &[f64], d: usize, kappa: f64) -> Result<SymbolReport> {
    if !(2..=4).contains(&n) {
        return Err(EymError::UnsupportedDimension(n));
    }
    if xi.len() != n || xi.iter().all(|x| *x == 0.0) {
        return Err(EymError::Precondition("symbol needs a nonzero covector of length n".into()));
    }
    let (ginv, _) = mat::spd_inverse(n, g_point).ok_or(EymError::NonSpd { site: 0 })?;
    let pairs = sym_pairs(n);
    let ns = pairs.len();
    let dim_a = n + d;
    let dim_b = ns + n * d;
    let xi_up: Vec<f64> = (0..n).map(|i| (0..n).map(|j| ginv[i][j] * xi[j]).sum()).collect();
    let xi_sq: f64 = (0..n).map(|i| xi[i] * xi_up[i]).sum();
    let sym_to_mat = |col: &[f64]| -> M4 {
        let mut h = mat::ZERO;
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            h[i][j] = col[idx];
            h[j][i] = col[idx];
        }
        h
    };
    let mat_to_sym = |h: &M4, out: &mut [f64]| {
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            out[idx] = h[i][j];
        }
    };

    // sigma(dPhi): (v, tau) -> (v (x) xi + xi (x) v, xi (x) tau), v a covector.
    let mut s_phi = DMatrix::<f64>::zeros(dim_b, dim_a);
    for col in 0..dim_a {
        let mut out = vec![0.0; dim_b];
        if col < n {
            let mut h = mat::ZERO;
            for i in 0..n {
                for j in 0..n {
                    let vi = if i == col { 1.0 } else { 0.0 };
                    let vj = if j == col { 1.0 } else { 0.0 };
                    h[i][j] = vi * xi[j] + xi[i] * vj;
                }
            }
            mat_to_sym(&h, &mut out[..ns]);
        } else {
            let l = col - n;
            for i in 0..n {
                out[ns + i * d + l] = xi[i];
            }
        }
        for (r, v) in out.iter().enumerate() {
            s_phi[(r, col)] = *v;
        }
    }

    // sigma(dE): block diagonal.
    let mut s_e = DMatrix::<f64>::zeros(dim_b, dim_b);
    for col in 0..dim_b {
        let mut inp = vec![0.0; dim_b];
        inp[col] = 1.0;
        let mut out = vec![0.0; dim_b];
        let h = sym_to_mat(&inp[..ns]);
        let h_xi: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * xi_up[j]).sum()).collect();
        let tr: f64 = (0..n).map(|i| (0..n).map(|j| ginv[i][j] * h[i][j]).sum::<f64>()).sum();
        let h_xx: f64 = (0..n).map(|i| h_xi[i] * xi_up[i]).sum();
        let mut e1 = mat::ZERO;
        for i in 0..n {
            for j in 0..n {
                let inner = -xi_sq * h[i][j] + xi[i] * h_xi[j] + h_xi[i] * xi[j] - tr * xi[i] * xi[j]
                    + (xi_sq * tr - h_xx) * g_point[i][j];
                e1[i][j] = -inner;
            }
        }
        mat_to_sym(&e1, &mut out[..ns]);
        for l in 0..d {
            let a: Vec<f64> = (0..n).map(|i| inp[ns + i * d + l]).collect();
            let iota: f64 = (0..n).map(|i| xi_up[i] * a[i]).sum();
            for i in 0..n {
                out[ns + i * d + l] = 2.0 * kappa * (-2.0 * xi_sq * a[i] + 2.0 * xi[i] * iota);
            }
        }
        for (r, v) in out.iter().enumerate() {
            s_e[(r, col)] = *v;
        }
    }

    // sigma(dPhi^*): (h, a) -> (-2 h(xi), -iota_xi a).
    let mut s_adj = DMatrix::<f64>::zeros(dim_a, dim_b);
    for col in 0..dim_b {
        let mut inp = vec![0.0; dim_b];
        inp[col] = 1.0;
        let h = sym_to_mat(&inp[..ns]);
        for i in 0..n {
            s_adj[(i, col)] = -2.0 * (0..n).map(|j| h[i][j] * xi_up[j]).sum::<f64>();
        }
        for l in 0..d {
            s_adj[(n + l, col)] = -(0..n).map(|i| xi_up[i] * inp[ns + i * d + l]).sum::<f64>();
        }
    }

    let r_phi = numerical_rank(&s_phi);
    let r_e = numerical_rank(&s_e);
    let r_adj = numerical_rank(&s_adj);
    let c1 = rel_norm(&(&s_e * &s_phi), &s_e, &s_phi);
    let c2 = rel_norm(&(&s_adj * &s_e), &s_adj, &s_e);
    let comp_ok = |c: f64| c <= SYMBOL_RANK_TOL;
    Ok(SymbolReport {
        n,
        d,
        rank_d_phi: r_phi,
        rank_d_e: r_e,
        rank_d_phi_adjoint: r_adj,
        middle_dim: dim_b,
        composition_defects: (c1, c2),
        exact_first: comp_ok(c1) && r_phi == dim_b - r_e,
        exact_second: comp_ok(c2) && r_e == dim_b - r_adj,
        surjective_last: r_adj == dim_a,
    })
}

/// Defects of the four conditions under which `(0, a)` is an essential deformation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PureGaugeReport {
    /// `d_A^* d_A a - a -|^g F`.
    pub yang_mills: DefectNorm,
    /// `d_A^* a`.
    pub gauge_slice: DefectNorm,
    /// `F o d_A a - <F, d_A a> g / (n-2)`.
    pub stress: DefectNorm,
    /// `a -|^c F`.
    pub metric_slice: DefectNorm,
}

pub fn pure_gauge_deformation_check(a: &FormField, point: &EymPoint) -> Result<PureGaugeReport> {
    let n = point.dim();
    if n == 2 {
        return Err(EymError::UnsupportedDimension(2));
    }
    let g = &point.g;
    let alg = point.algebra();
    let f = &point.f;
    let da = d_a(a, &point.conn)?;
    let first = d_a_star(&da, &point.conn, g)?.axpy(-1.0, &lrcorner_alg(a, f, g, alg)?)?;
    let second = d_a_star(a, &point.conn, g)?;
    let inner = form_inner_pointwise(f, &da, g, Some(alg))?;
    let third = circ_gc(f, &da, g, Some(alg))?.axpy(-1.0 / (n as f64 - 2.0), &g.tensor().mul_scalar(&inner))?;
    let fourth = lrcorner_c(a, f, g, alg)?;
    Ok(PureGaugeReport {
        yang_mills: DefectNorm::of_form(&first, g, Some(alg))?,
        gauge_slice: DefectNorm::of_form(&second, g, Some(alg))?,
        stress: DefectNorm::of_sym(&third, g)?,
        metric_slice: DefectNorm::of_form(&fourth, g, None)?,
    })
}
