//! Preconditioned descent on `1/2 ||E||^2` with slice projection.
//!
//! The descent direction is `-P dE(E)`: near a critical pair `dE` is the
//! Hessian of the action and therefore self-adjoint up to terms of the size of
//! `E`, so `dE(E)` is the gradient of `1/2 ||E||^2` to leading order. The
//! preconditioner `P = (c + Delta_flat)^-2` acts componentwise in Fourier space
//! and cancels the fourth-order growth of `dE o dE`. The step length is the
//! minimizer of the linearized objective along the direction, halved until
//! the true residual norm decreases and the metric stays positive definite.

use serde::Serialize;

use crate::deform::{lin_residual, project_to_slice, LinBranch};
use crate::error::{EymError, Result};
use crate::fields::{l2_inner, DeformationPair, FormField, MetricField, SymTensorField};
use crate::gauge::ConnectionField;
use crate::lattice::Grid;

use super::{EymConfig, EymPoint};

/// Configuration point carried by the flow.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub g: MetricField,
    pub conn: ConnectionField,
    pub iteration: usize,
}

/// One history row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iter: usize,
    pub action: f64,
    pub residual_norm: f64,
    pub step: f64,
}

/// What a single accepted step did.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepInfo {
    pub step: f64,
    pub halvings: usize,
    pub residual_before: f64,
    pub residual_after: f64,
    pub projected: bool,
}

#[derive(Clone, Debug)]
pub struct FlowOutcome {
    pub g: MetricField,
    pub conn: ConnectionField,
    pub history: Vec<HistoryEntry>,
    pub converged: bool,
    pub total_halvings: usize,
    /// Why the flow stopped when it did not converge.
    pub failure: Option<String>,
}

fn precondition(p: &DeformationPair, grid: &Grid, shift: f64) -> Result<DeformationPair> {
    let symbol = |k: &[f64; 4]| {
        let k2: f64 = k.iter().map(|x| x * x).sum();
        1.0 / (shift + k2).powi(2)
    };
    let h: Vec<Vec<f64>> = p.h.components().iter().map(|c| grid.fourier_multiplier(c, symbol)).collect();
    let a: Vec<Vec<f64>> = p.a.components().iter().map(|c| grid.fourier_multiplier(c, symbol)).collect();
    Ok(DeformationPair {
        h: SymTensorField::from_components(grid, h)?,
        a: FormField::from_components(grid, 1, p.a.fiber(), a)?,
    })
}

fn residual_norm(point: &EymPoint, cfg: &EymConfig) -> Result<(f64, DeformationPair)> {
    let res = point.residual(cfg.k())?;
    Ok((res.l2_norm(&point.g, point.algebra())?, res.to_pair()))
}

fn action_at(point: &EymPoint, cfg: &EymConfig) -> Result<f64> {
    crate::lattice::integrate(&point.curv.scalar.axpy(cfg.k(), &point.f_sq)?, &point.g)
}

/// Takes one accepted step from `state`, starting the line search at `step`.
pub fn flow_step(state: &FlowState, cfg: &EymConfig, step: f64) -> Result<(FlowState, StepInfo)> {
    cfg.validate()?;
    if !(step > 0.0) {
        return Err(EymError::Precondition("flow step must be positive".into()));
    }
    let point = EymPoint::new(&state.g, &state.conn)?;
    let (before, res) = residual_norm(&point, cfg)?;
    let grid = state.g.grid().clone();
    let alg = point.algebra().clone();
    let grad = lin_residual(&res, &point, cfg, LinBranch::General)?;
    let mut dir = precondition(&grad, &grid, cfg.flow.preconditioner_shift)?.scale(-1.0);
    let period = cfg.flow.projection_period;
    let projected = period > 0 && state.iteration % period == 0;
    if projected {
        dir = project_to_slice(&dir, &point, cfg.flow.cg_tol, cfg.flow.cg_max_iter)?.0;
    }
    // Minimizer of ||E + t dE(dir)||^2 over t.
    let jd = lin_residual(&dir, &point, cfg, LinBranch::General)?;
    let jd_sq = l2_inner(&jd, &jd, &state.g, &alg)?;
    let optimal = if jd_sq > 0.0 { -l2_inner(&res, &jd, &state.g, &alg)? / jd_sq } else { 0.0 };
    let mut t = if optimal > 0.0 { optimal.min(step) } else { step };
    for halvings in 0..=cfg.flow.max_halvings {
        let trial = state.g.perturbed(t, &dir.h).and_then(|g| Ok((g, state.conn.perturbed(t, &dir.a)?)));
        if let Ok((g, conn)) = trial {
            let p = EymPoint::new(&g, &conn)?;
            let (after, _) = residual_norm(&p, cfg)?;
            if after < before {
                let info = StepInfo { step: t, halvings, residual_before: before, residual_after: after, projected };
                return Ok((FlowState { g, conn, iteration: state.iteration + 1 }, info));
            }
        }
        t *= 0.5;
    }
    Err(EymError::Precondition(format!(
        "no decrease of the residual norm after {} step halvings",
        cfg.flow.max_halvings
    )))
}

/// Runs the flow from `(g0, a0)` until the residual norm drops to
/// `cfg.tol.flow` or `cfg.flow.max_iter` steps were taken. Failure to
/// converge is reported in the outcome, not as an error.
pub fn solve(g0: &MetricField, a0: &ConnectionField, cfg: &EymConfig) -> Result<FlowOutcome> {
    cfg.validate()?;
    let mut state = FlowState { g: g0.clone(), conn: a0.clone(), iteration: 0 };
    let mut history = Vec::new();
    let mut total_halvings = 0;
    let mut step = cfg.flow.step;
    let point = EymPoint::new(&state.g, &state.conn)?;
    let (mut norm, _) = residual_norm(&point, cfg)?;
    history.push(HistoryEntry { iter: 0, action: action_at(&point, cfg)?, residual_norm: norm, step: 0.0 });
    let mut failure = None;
    while norm > cfg.tol.flow && state.iteration < cfg.flow.max_iter {
        match flow_step(&state, cfg, step) {
            Ok((next, info)) => {
                total_halvings += info.halvings;
                // Let the line search start a little above the last accepted length.
                step = (info.step * 2.0).min(cfg.flow.step);
                norm = info.residual_after;
                let point = EymPoint::new(&next.g, &next.conn)?;
                history.push(HistoryEntry {
                    iter: next.iteration,
                    action: action_at(&point, cfg)?,
                    residual_norm: norm,
                    step: info.step,
                });
                state = next;
            }
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    if failure.is_none() && norm > cfg.tol.flow {
        failure = Some(format!("iteration budget of {} exhausted", cfg.flow.max_iter));
    }
    Ok(FlowOutcome {
        g: state.g,
        conn: state.conn,
        history,
        converged: norm <= cfg.tol.flow,
        total_halvings,
        failure,
    })
}
