//! Connections on the trivial bundle, their curvature and the covariant
//! exterior calculus.
//!
//! A connection is a periodic Lie-algebra valued potential plus a constant
//! central 2-form `F0`. The background flux is what lets a torus carry constant
//! abelian field strength without transition functions; it enters the
//! curvature but no derivative ever acts on it.

use crate::algebra::{LieAlgebraData, ALGEBRA_TOLERANCE};
use crate::error::{EymError, Result};
use crate::fields::index::form_basis;
use crate::fields::{FormField, MetricField};
use crate::lattice::Grid;
use crate::riemann::{codifferential_core, exterior_core};

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionField {
    potential: FormField,
    background: FormField,
    algebra: LieAlgebraData,
}

impl ConnectionField {
    /// Validates shapes, constancy of the background and its centrality.
    pub fn new(potential: FormField, background: FormField, algebra: LieAlgebraData) -> Result<Self> {
        if potential.degree() != 1 || background.degree() != 2 {
            return Err(EymError::ShapeMismatch("potential must be a 1-form, background a 2-form".into()));
        }
        if potential.grid() != background.grid() {
            return Err(EymError::GridMismatch);
        }
        if potential.fiber() != algebra.dim() || background.fiber() != algebra.dim() {
            return Err(EymError::AlgebraMismatch(format!(
                "fields have fiber {} / {}, algebra '{}' has dimension {}",
                potential.fiber(),
                background.fiber(),
                algebra.name(),
                algebra.dim()
            )));
        }
        let d = algebra.dim();
        for (idx, comp) in background.components().iter().enumerate() {
            if comp.iter().any(|v| *v != comp[0]) {
                return Err(EymError::Precondition(format!("background component {idx} is not constant")));
            }
        }
        let m = background.multi_count();
        for pos in 0..m {
            let value: Vec<f64> = (0..d).map(|l| background.component(pos, l)[0]).collect();
            if algebra.centrality_defect(&value) > ALGEBRA_TOLERANCE {
                return Err(EymError::NonCentralBackground);
            }
        }
        Ok(ConnectionField { potential, background, algebra })
    }

    /// The trivial connection.
    pub fn flat(grid: &Grid, algebra: &LieAlgebraData) -> Self {
        let d = algebra.dim();
        ConnectionField {
            potential: FormField::zeros(grid, 1, d),
            background: FormField::zeros(grid, 2, d),
            algebra: algebra.clone(),
        }
    }

    /// Zero potential with constant flux given by `(axes, fiber index, value)` terms.
    pub fn with_flux(grid: &Grid, algebra: &LieAlgebraData, terms: &[(&[usize], usize, f64)]) -> Result<Self> {
        let d = algebra.dim();
        Self::new(FormField::zeros(grid, 1, d), FormField::constant(grid, 2, d, terms), algebra.clone())
    }

    /// Same background, new potential.
    pub fn with_potential(&self, potential: FormField) -> Result<Self> {
        Self::new(potential, self.background.clone(), self.algebra.clone())
    }

    /// `A + alpha a`.
    pub fn perturbed(&self, alpha: f64, a: &FormField) -> Result<Self> {
        Ok(ConnectionField {
            potential: self.potential.axpy(alpha, a)?,
            background: self.background.clone(),
            algebra: self.algebra.clone(),
        })
    }

    pub fn potential(&self) -> &FormField {
        &self.potential
    }

    pub fn background(&self) -> &FormField {
        &self.background
    }

    pub fn algebra(&self) -> &LieAlgebraData {
        &self.algebra
    }

    pub fn grid(&self) -> &Grid {
        self.potential.grid()
    }

    pub fn fiber(&self) -> usize {
        self.algebra.dim()
    }
}

/// `F = dA + 1/2 [A ^ A] + F0`.
pub fn curvature_f(conn: &ConnectionField) -> Result<FormField> {
    let a = conn.potential();
    let alg = conn.algebra();
    let mut f = crate::riemann::d(a)?.axpy(1.0, conn.background())?;
    if !alg.is_abelian() {
        let n = a.dim();
        let d = alg.dim();
        let basis = form_basis(n);
        let sites = a.grid().num_sites();
        let comps = f.components_mut();
        let mut out = vec![0.0; d];
        let mut ai = vec![0.0; d];
        let mut aj = vec![0.0; d];
        for site in 0..sites {
            for i in 0..n {
                for j in i + 1..n {
                    for l in 0..d {
                        ai[l] = a.component(i, l)[site];
                        aj[l] = a.component(j, l)[site];
                    }
                    out.iter_mut().for_each(|v| *v = 0.0);
                    alg.bracket_acc(&ai, &aj, 1.0, &mut out);
                    let (pos, _) = basis.locate(&[i, j]).expect("distinct axes");
                    for l in 0..d {
                        comps[pos * d + l][site] += out[l];
                    }
                }
            }
        }
    }
    Ok(f)
}

/// Exterior covariant derivative `d_A`.
pub fn d_a(omega: &FormField, conn: &ConnectionField) -> Result<FormField> {
    check(omega, conn)?;
    exterior_core(omega, Some((conn.potential(), conn.algebra())))
}

/// Formal adjoint of `d_A` with respect to `g` and the pairing `c`.
pub fn d_a_star(omega: &FormField, conn: &ConnectionField, g: &MetricField) -> Result<FormField> {
    check(omega, conn)?;
    codifferential_core(omega, g, Some((conn.potential(), conn.algebra())))
}

fn check(omega: &FormField, conn: &ConnectionField) -> Result<()> {
    if omega.grid() != conn.grid() {
        return Err(EymError::GridMismatch);
    }
    if omega.fiber() != conn.fiber() {
        return Err(EymError::AlgebraMismatch(format!(
            "form fiber {} vs algebra dimension {}",
            omega.fiber(),
            conn.fiber()
        )));
    }
    Ok(())
}

/// Yang-Mills residual `d_A^* F_A`.
pub fn ym_residual(g: &MetricField, conn: &ConnectionField) -> Result<FormField> {
    d_a_star(&curvature_f(conn)?, conn, g)
}

/// `[F ^ w]` for an algebra-valued 2-form `F` and `r`-form `w`.
pub fn bracket_wedge(f: &FormField, omega: &FormField, alg: &LieAlgebraData) -> Result<FormField> {
    if f.degree() != 2 || f.fiber() != alg.dim() || omega.fiber() != alg.dim() {
        return Err(EymError::ShapeMismatch("bracket_wedge needs an algebra-valued 2-form".into()));
    }
    if f.grid() != omega.grid() {
        return Err(EymError::GridMismatch);
    }
    let n = f.dim();
    let r = omega.degree();
    let d = alg.dim();
    let grid = f.grid();
    if r + 2 > n || alg.is_abelian() {
        return Ok(FormField::zeros(grid, (r + 2).min(n), d));
    }
    let basis = form_basis(n);
    let mut out = FormField::zeros(grid, r + 2, d);
    let out_masks = basis.masks(r + 2).to_vec();
    let comps = out.components_mut();
    let mut buf = vec![0.0; d];
    let mut fv = vec![0.0; d];
    let mut wv = vec![0.0; d];
    for site in 0..grid.num_sites() {
        for (opos, &mask) in out_masks.iter().enumerate() {
            let axes = crate::fields::index::mask_axes(mask);
            buf.iter_mut().for_each(|v| *v = 0.0);
            for a in 0..axes.len() {
                for b in a + 1..axes.len() {
                    let rest: Vec<usize> =
                        axes.iter().enumerate().filter(|&(k, _)| k != a && k != b).map(|(_, &v)| v).collect();
                    let mut tuple = vec![axes[a], axes[b]];
                    tuple.extend(&rest);
                    let (_, sign) = basis.locate(&tuple).expect("distinct axes");
                    let (fpos, _) = basis.locate(&[axes[a], axes[b]]).expect("distinct axes");
                    let wpos = if rest.is_empty() { 0 } else { basis.locate(&rest).expect("distinct axes").0 };
                    for l in 0..d {
                        fv[l] = f.component(fpos, l)[site];
                        wv[l] = omega.component(wpos, l)[site];
                    }
                    alg.bracket_acc(&fv, &wv, sign, &mut buf);
                }
            }
            for l in 0..d {
                comps[opos * d + l][site] = buf[l];
            }
        }
    }
    Ok(out)
}
