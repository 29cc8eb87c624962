//! Four-dimensional anti-self-dual pairs: the self-dual splitting, the
//! residual `(Ric, *F + F)` of Ricci-flat metrics with ASD connections, its
//! linearization, and the two systems describing essential deformations of
//! such pairs.
//!
//! Orientation is `dx^1 ^ dx^2 ^ dx^3 ^ dx^4`; a 2-form is anti-self-dual when
//! `*w = -w`.

use serde::Serialize;

use crate::deform::{harmonic_class, harmonic_forms, solve_laplacian, DefectNorm};
use crate::error::{EymError, Result};
use crate::eym::{EymConfig, EymPoint};
use crate::fields::{
    circ_gc, circ_h, form_inner_pointwise, form_l2_inner, hodge_star, lrcorner_alg, lrcorner_c, op_gh, trace_g,
    traceless_part, FormField, MetricField, SymTensorField,
};
use crate::gauge::{curvature_f, d_a, d_a_star, ConnectionField};
use crate::lattice::{integrate, ScalarField};
use crate::riemann::{
    curvature, d, d_star, divergence_sym, double_divergence, lin_ricci, r_o, rough_laplacian, sym_derivative_one_form,
};

/// Largest `|Tr_g h|` accepted for a traceless input.
pub const TRACE_TOLERANCE: f64 = 1e-12;

fn require_four(n: usize) -> Result<()> {
    if n == 4 {
        Ok(())
    } else {
        Err(EymError::UnsupportedDimension(n))
    }
}

/// `w = plus + minus` with `*plus = plus`, `*minus = -minus`.
#[derive(Clone, Debug, PartialEq)]
pub struct SdSplit {
    pub plus: FormField,
    pub minus: FormField,
}

pub fn sd_split(omega: &FormField, g: &MetricField) -> Result<SdSplit> {
    require_four(g.dim())?;
    if omega.degree() != 2 {
        return Err(EymError::ShapeMismatch("self-dual splitting needs a 2-form".into()));
    }
    let star = hodge_star(g, omega)?;
    Ok(SdSplit { plus: omega.axpy(1.0, &star)?.scale(0.5), minus: omega.axpy(-1.0, &star)?.scale(0.5) })
}

/// `(Ric, *F + F)`; both parts vanish exactly for Ricci-flat metrics with ASD
/// connections.
#[derive(Clone, Debug, PartialEq)]
pub struct AsdResidual {
    pub ricci: SymTensorField,
    pub self_dual: FormField,
}

impl AsdResidual {
    pub fn max_abs(&self) -> f64 {
        self.ricci.max_abs().max(self.self_dual.max_abs())
    }
}

pub fn asd_residual(g: &MetricField, conn: &ConnectionField) -> Result<AsdResidual> {
    require_four(g.dim())?;
    let f = curvature_f(conn)?;
    let ricci = curvature(g)?.ricci;
    let self_dual = hodge_star(g, &f)?.axpy(1.0, &f)?;
    Ok(AsdResidual { ricci, self_dual })
}

/// `d Ric (h)` and `*d_A a + d_A a + *(F)_{h°}`, the differential of
/// [`asd_residual`]. The second part holds at every pair because the Hodge
/// star on 2-forms in dimension four only sees the traceless part of `h`.
pub fn lin_asd_residual(h: &SymTensorField, a: &FormField, point: &EymPoint) -> Result<AsdResidual> {
    require_four(point.dim())?;
    let g = &point.g;
    let ho = traceless_part(h, g)?;
    let da = d_a(a, &point.conn)?;
    let self_dual = hodge_star(g, &da)?.axpy(1.0, &da)?.axpy(1.0, &hodge_star(g, &op_gh(&point.f, &ho, g)?)?)?;
    Ok(AsdResidual { ricci: lin_ricci(h, g)?, self_dual })
}

fn check_traceless(ho: &SymTensorField, g: &MetricField) -> Result<()> {
    let tr = trace_g(ho, g)?.max_abs();
    if tr > TRACE_TOLERANCE {
        return Err(EymError::Precondition(format!("input is not traceless: |Tr h| = {tr:e}")));
    }
    Ok(())
}

/// `1/2 nabla^* nabla h° - R_o(h°) - 2 delta nabla^* h° - 1/6 (nabla^* nabla^* h°) g`,
/// the operator shared by both essential systems before the gauge coupling.
fn metric_operator(ho: &SymTensorField, point: &EymPoint) -> Result<SymTensorField> {
    let g = &point.g;
    let ddh = double_divergence(ho, g)?;
    rough_laplacian(ho, g)?
        .scale(0.5)
        .axpy(-1.0, &r_o(ho, g, &point.curv)?)?
        .axpy(-2.0, &sym_derivative_one_form(&divergence_sym(ho, g)?, g)?)?
        .axpy(-1.0 / 6.0, &g.tensor().mul_scalar(&ddh))
}

/// Defects of the essential-deformation system of a Ricci-flat metric with
/// an ASD connection.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsdEssentialReport {
    pub metric_equation: DefectNorm,
    /// `*d_A a + d_A a + *(F)_{h°}`.
    pub gauge_equation: DefectNorm,
    pub gauge_slice: DefectNorm,
    /// `<F, (F)_{h°}>` pointwise.
    pub orthogonality: DefectNorm,
    /// Anti-self-dual part of `(F)_{h°}`.
    pub self_duality: DefectNorm,
}

impl AsdEssentialReport {
    pub fn max(&self) -> f64 {
        [self.metric_equation, self.gauge_equation, self.gauge_slice, self.orthogonality, self.self_duality]
            .iter()
            .fold(0.0, |m, d| m.max(d.max()))
    }
}

pub fn essential_asd_system(
    ho: &SymTensorField,
    a: &FormField,
    point: &EymPoint,
    _cfg: &EymConfig,
) -> Result<AsdEssentialReport> {
    require_four(point.dim())?;
    let g = &point.g;
    check_traceless(ho, g)?;
    let alg = point.algebra();
    let f = &point.f;
    let contraction = lrcorner_c(a, f, g, alg)?;
    let first = metric_operator(ho, point)?.axpy(0.5, &sym_derivative_one_form(&contraction, g)?)?;
    let f_h = op_gh(f, ho, g)?;
    let da = d_a(a, &point.conn)?;
    let second = hodge_star(g, &da)?.axpy(1.0, &da)?.axpy(1.0, &hodge_star(g, &f_h)?)?;
    let third = d_a_star(a, &point.conn, g)?;
    let orth = form_inner_pointwise(f, &f_h, g, Some(alg))?;
    let asd_part = f_h.axpy(-1.0, &hodge_star(g, &f_h)?)?.scale(0.5);
    Ok(AsdEssentialReport {
        metric_equation: DefectNorm::of_sym(&first, g)?,
        gauge_equation: DefectNorm::of_form(&second, g, Some(alg))?,
        gauge_slice: DefectNorm::of_form(&third, g, Some(alg))?,
        orthogonality: DefectNorm::of_scalar(&orth, g)?,
        self_duality: DefectNorm::of_form(&asd_part, g, Some(alg))?,
    })
}

/// Defects of the traceless essential-deformation system of a general EYM
/// pair in dimension four, written for `(h°, a)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EymAsdEssentialReport {
    pub metric_equation: DefectNorm,
    /// `d_A^* d_A a - a -|^g F + d_A^* (F)_{h°}`.
    pub gauge_equation: DefectNorm,
    pub gauge_slice: DefectNorm,
}

impl EymAsdEssentialReport {
    pub fn max(&self) -> f64 {
        self.metric_equation.max().max(self.gauge_equation.max()).max(self.gauge_slice.max())
    }
}

pub fn essential_eym_asd_system(
    ho: &SymTensorField,
    a: &FormField,
    point: &EymPoint,
    cfg: &EymConfig,
) -> Result<EymAsdEssentialReport> {
    require_four(point.dim())?;
    let g = &point.g;
    check_traceless(ho, g)?;
    let alg = point.algebra();
    let k = cfg.k();
    let f = &point.f;
    let da = d_a(a, &point.conn)?;
    let contraction = lrcorner_c(a, f, g, alg)?;
    let inner = form_inner_pointwise(f, &da, g, Some(alg))?;
    let coupling = circ_h(f, f, ho, g, Some(alg))?
        .axpy(1.0, &ho.mul_scalar(&point.f_sq.scale(0.5)))?
        .axpy(-2.0, &circ_gc(f, &da, g, Some(alg))?)?
        .axpy(1.0, &g.tensor().mul_scalar(&inner))?;
    let first = metric_operator(ho, point)?
        .axpy(0.5, &sym_derivative_one_form(&contraction, g)?)?
        .axpy(-k, &coupling)?;
    let second = d_a_star(&da, &point.conn, g)?
        .axpy(-1.0, &lrcorner_alg(a, f, g, alg)?)?
        .axpy(1.0, &d_a_star(&op_gh(f, ho, g)?, &point.conn, g)?)?;
    let third = d_a_star(a, &point.conn, g)?;
    Ok(EymAsdEssentialReport {
        metric_equation: DefectNorm::of_sym(&first, g)?,
        gauge_equation: DefectNorm::of_form(&second, g, Some(alg))?,
        gauge_slice: DefectNorm::of_form(&third, g, Some(alg))?,
    })
}

/// Trace completion `h = (f/4) g + h°` of a traceless deformation.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceCompletion {
    /// Mean-zero potential with `df` equal to the exact part of `rho`.
    pub f: ScalarField,
    /// Harmonic class of `rho = 4 nabla^* h° - 2 a -| F`; completion is
    /// possible only when it vanishes.
    pub class: Vec<f64>,
    pub class_norm: f64,
    /// `||df - (rho - harmonic part)|| / max(||rho||, 1)`: the co-exact part
    /// that no potential can absorb.
    pub defect: f64,
    pub completed: SymTensorField,
}

/// Solves `df = rho` for the trace potential. The completed `h` satisfies
/// `2 nabla^* h = a -| F` whenever `rho` is exact.
pub fn complete_trace(ho: &SymTensorField, a: &FormField, point: &EymPoint, cfg: &EymConfig) -> Result<TraceCompletion> {
    require_four(point.dim())?;
    let g = &point.g;
    let grid = g.grid();
    let alg = point.algebra();
    let rho = divergence_sym(ho, g)?.scale(4.0).axpy(-2.0, &lrcorner_c(a, &point.f, g, alg)?)?;
    let (class, class_norm, _) = harmonic_class(&rho, g, cfg.flow.cg_tol, cfg.flow.cg_max_iter)?;

    let rhs = d_star(&rho, g)?.to_scalar()?;
    let f = if rhs.max_abs() == 0.0 {
        ScalarField::zeros(grid)
    } else {
        let cg = solve_laplacian(&rhs, g, cfg.flow.cg_tol, cfg.flow.cg_max_iter);
        let f = ScalarField::new(grid, cg.solution)?;
        let mean = integrate(&f, g)? / integrate(&ScalarField::constant(grid, 1.0), g)?;
        f.axpy(-mean, &ScalarField::constant(grid, 1.0))?
    };

    let df = d(&FormField::from_scalar(&f))?;
    let mut exact_part = rho.clone();
    let (harmonic, _) = harmonic_forms(g, cfg.flow.cg_tol, cfg.flow.cg_max_iter)?;
    for (c, eta) in class.iter().zip(&harmonic) {
        exact_part = exact_part.axpy(-c, eta)?;
    }
    let norm = |w: &FormField| -> Result<f64> { Ok(form_l2_inner(w, w, g, None)?.max(0.0).sqrt()) };
    let defect = norm(&df.axpy(-1.0, &exact_part)?)? / norm(&rho)?.max(1.0);
    let completed = ho.axpy(1.0, &g.tensor().mul_scalar(&f.scale(0.25)))?;
    Ok(TraceCompletion { f, class, class_norm, defect, completed })
}
