//! The Einstein-Yang-Mills functional, its Euler-Lagrange residual and the
//! energy-momentum tensors.

mod flow;

pub use flow::{flow_step, solve, FlowOutcome, FlowState, HistoryEntry, StepInfo};

use serde::{Deserialize, Serialize};

use crate::algebra::LieAlgebraData;
use crate::error::{EymError, Result};
use crate::fields::{
    circ_gc, form_l2_inner, lrcorner_c, norm_sq_pointwise, sym_l2_inner, DeformationPair, FormField,
    MetricField, SymTensorField,
};
use crate::gauge::{curvature_f, d_a_star, ConnectionField};
use crate::lattice::{integrate, ScalarField};
use crate::riemann::{curvature, divergence, CurvaturePackage};

/// Sign of the Yang-Mills coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kappa {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Kappa {
    pub fn value(self) -> f64 {
        match self {
            Kappa::Plus => 1.0,
            Kappa::Minus => -1.0,
        }
    }
}

impl TryFrom<f64> for Kappa {
    type Error = EymError;

    fn try_from(v: f64) -> Result<Self> {
        if v == 1.0 {
            Ok(Kappa::Plus)
        } else if v == -1.0 {
            Ok(Kappa::Minus)
        } else {
            Err(EymError::Precondition(format!("kappa must be +1 or -1, got {v}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Residual level below which a pair counts as critical.
    pub residual: f64,
    /// Relative accuracy requested from eigensolvers.
    pub eigen: f64,
    /// Target residual norm of the flow.
    pub flow: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { residual: 1e-9, eigen: 1e-10, flow: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    /// Largest step length tried along the preconditioned descent direction.
    pub step: f64,
    pub max_iter: usize,
    /// Project the velocity onto the slice every this many steps (0 disables).
    pub projection_period: usize,
    pub max_halvings: usize,
    /// Shift `c` of the preconditioner `(c + Delta)^-2`.
    pub preconditioner_shift: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            step: 1.0,
            max_iter: 5000,
            projection_period: 10,
            max_halvings: 30,
            preconditioner_shift: 1.0,
            cg_tol: 1e-10,
            cg_max_iter: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EymConfig {
    pub kappa: Kappa,
    pub algebra: LieAlgebraData,
    pub tol: Tolerances,
    pub flow: FlowParams,
}

impl EymConfig {
    /// Default tolerances and flow parameters.
    pub fn new(kappa: Kappa, algebra: LieAlgebraData) -> Self {
        EymConfig { kappa, algebra, tol: Tolerances::default(), flow: FlowParams::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tol;
        if !(t.residual > 0.0 && t.eigen > 0.0 && t.flow > 0.0) {
            return Err(EymError::Precondition("tolerances must be positive".into()));
        }
        let f = &self.flow;
        if !(f.step > 0.0 && f.step.is_finite()) {
            return Err(EymError::Precondition("flow step must be positive".into()));
        }
        if !(f.preconditioner_shift > 0.0 && f.cg_tol > 0.0) {
            return Err(EymError::Precondition("preconditioner shift and CG tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> f64 {
        self.kappa.value()
    }
}

/// Everything at a configuration point `(g, A)` that the residual and its
/// linearization reuse.
#[derive(Clone, Debug)]
pub struct EymPoint {
    pub g: MetricField,
    pub conn: ConnectionField,
    pub curv: CurvaturePackage,
    pub f: FormField,
    /// `|F|^2_{g,c}`.
    pub f_sq: ScalarField,
    /// `F o_{g,c} F`.
    pub fcf: SymTensorField,
    /// `d_A^* F`.
    pub ym: FormField,
}

impl EymPoint {
    pub fn new(g: &MetricField, conn: &ConnectionField) -> Result<Self> {
        if g.grid() != conn.grid() {
            return Err(EymError::GridMismatch);
        }
        let alg = conn.algebra();
        let curv = curvature(g)?;
        let f = curvature_f(conn)?;
        let f_sq = norm_sq_pointwise(&f, g, Some(alg))?;
        let fcf = circ_gc(&f, &f, g, Some(alg))?;
        let ym = d_a_star(&f, conn, g)?;
        Ok(EymPoint { g: g.clone(), conn: conn.clone(), curv, f, f_sq, fcf, ym })
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn algebra(&self) -> &LieAlgebraData {
        self.conn.algebra()
    }

    pub fn energy_momentum(&self, kappa: f64) -> Result<SymTensorField> {
        self.g.tensor().mul_scalar(&self.f_sq).scale(0.5 * kappa).axpy(-kappa, &self.fcf)
    }

    pub fn residual(&self, kappa: f64) -> Result<Residual> {
        let t = self.energy_momentum(kappa)?;
        let e1 = t.axpy(-1.0, &self.curv.einstein)?;
        let e2 = self.ym.scale(2.0 * kappa);
        Ok(Residual { e1, e2 })
    }

    pub fn trace_constraint(&self, kappa: f64) -> ScalarField {
        let n = self.dim() as f64;
        if self.dim() == 2 {
            return self.f_sq.scale(kappa);
        }
        let coef = kappa * (n - 4.0) / (2.0 - n);
        self.curv.scalar.axpy(-coef, &self.f_sq).expect("same grid")
    }
}

/// `(E1, E2)` with `E1 = -(Ein - T)` and `E2 = 2 kappa d_A^* F`.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub e1: SymTensorField,
    pub e2: FormField,
}

impl Residual {
    pub fn to_pair(&self) -> DeformationPair {
        DeformationPair { h: self.e1.clone(), a: self.e2.clone() }
    }

    /// `L2` norm in the deformation metric.
    pub fn l2_norm(&self, g: &MetricField, alg: &LieAlgebraData) -> Result<f64> {
        let hh = sym_l2_inner(&self.e1, &self.e1, g)?;
        let aa = form_l2_inner(&self.e2, &self.e2, g, Some(alg))?;
        Ok((hh + aa).max(0.0).sqrt())
    }

    pub fn max_abs(&self) -> (f64, f64) {
        (self.e1.max_abs(), self.e2.max_abs())
    }
}

fn check_algebra(conn: &ConnectionField, cfg: &EymConfig) -> Result<()> {
    if conn.algebra() != &cfg.algebra {
        return Err(EymError::AlgebraMismatch(format!(
            "connection uses '{}', configuration '{}'",
            conn.algebra().name(),
            cfg.algebra.name()
        )));
    }
    Ok(())
}

/// `int (s + kappa |F|^2) dvol`.
pub fn action(g: &MetricField, conn: &ConnectionField, cfg: &EymConfig) -> Result<f64> {
    check_algebra(conn, cfg)?;
    let curv = curvature(g)?;
    let f = curvature_f(conn)?;
    let f_sq = norm_sq_pointwise(&f, g, Some(conn.algebra()))?;
    integrate(&curv.scalar.axpy(cfg.k(), &f_sq)?, g)
}

/// `T = kappa/2 |F|^2 g - kappa F o F`.
pub fn energy_momentum(g: &MetricField, conn: &ConnectionField, cfg: &EymConfig) -> Result<SymTensorField> {
    check_algebra(conn, cfg)?;
    let f = curvature_f(conn)?;
    let alg = conn.algebra();
    let f_sq = norm_sq_pointwise(&f, g, Some(alg))?;
    let k = cfg.k();
    g.tensor().mul_scalar(&f_sq).scale(0.5 * k).axpy(-k, &circ_gc(&f, &f, g, Some(alg))?)
}

/// `T^ = kappa (|F|^2 g / (n-2) - F o F)`; undefined for surfaces.
pub fn reversed_em(g: &MetricField, conn: &ConnectionField, cfg: &EymConfig) -> Result<SymTensorField> {
    check_algebra(conn, cfg)?;
    let n = g.dim();
    if n == 2 {
        return Err(EymError::UnsupportedDimension(2));
    }
    let f = curvature_f(conn)?;
    let alg = conn.algebra();
    let f_sq = norm_sq_pointwise(&f, g, Some(alg))?;
    let k = cfg.k();
    g.tensor().mul_scalar(&f_sq).scale(k / (n as f64 - 2.0)).axpy(-k, &circ_gc(&f, &f, g, Some(alg))?)
}

pub fn residual(g: &MetricField, conn: &ConnectionField, cfg: &EymConfig) -> Result<Residual> {
    check_algebra(conn, cfg)?;
    EymPoint::new(g, conn)?.residual(cfg.k())
}

/// `S = s - kappa (n-4)/(2-n) |F|^2`, normalized so that `Tr_g E1 = -(1 - n/2) S`.
/// On surfaces the scalar-curvature part of `Tr_g E1` vanishes identically
/// and `S = kappa |F|^2` is returned, so that `Tr_g E1 = -S`.
pub fn trace_constraint(g: &MetricField, conn: &ConnectionField, cfg: &EymConfig) -> Result<ScalarField> {
    check_algebra(conn, cfg)?;
    Ok(EymPoint::new(g, conn)?.trace_constraint(cfg.k()))
}

/// Pointwise `g`-norm of `nabla^* T - kappa (d_A^* F) -| F`, which vanishes
/// for every pair.
pub fn divergence_em_defect(g: &MetricField, conn: &ConnectionField, cfg: &EymConfig) -> Result<ScalarField> {
    check_algebra(conn, cfg)?;
    let point = EymPoint::new(g, conn)?;
    let defect = divergence_em_form(&point, cfg.k())?;
    norm_sq_pointwise(&defect, g, None).map(|s| {
        let values = s.values().iter().map(|v| v.max(0.0).sqrt()).collect();
        ScalarField::new(g.grid(), values).expect("finite")
    })
}

/// The 1-form `nabla^* T - kappa (d_A^* F) -| F` at a point.
pub(crate) fn divergence_em_form(point: &EymPoint, kappa: f64) -> Result<FormField> {
    let t = point.energy_momentum(kappa)?;
    let div = divergence(&t.to_tensor(), &point.g)?.to_one_form()?;
    let contraction = lrcorner_c(&point.ym, &point.f, &point.g, point.algebra())?;
    div.axpy(-kappa, &contraction)
}
