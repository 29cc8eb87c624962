//! Compact Lie algebras: structure constants and an ad-invariant inner product.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EymError, Result};

/// Residual level below which algebra data is accepted.
pub const ALGEBRA_TOLERANCE: f64 = 1e-12;

/// Lie algebra with basis `tau_0 .. tau_{d-1}`, bracket
/// `[tau_L, tau_S] = sum_G f[L][S][G] tau_G` and pairing matrix `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LieAlgebraData {
    name: String,
    dim: usize,
    structure: Vec<f64>,
    pairing: Vec<f64>,
    abelian: bool,
}

/// Serializable description of an algebra, the format of algebra data files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraSpec {
    pub name: String,
    pub dim: usize,
    /// `f[L][S][G]` flattened row-major.
    pub structure: Vec<f64>,
    /// `c[L][S]` flattened row-major.
    pub pairing: Vec<f64>,
}

/// Largest defects found by [`validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub antisymmetry: f64,
    pub jacobi: f64,
    pub pairing_symmetry: f64,
    /// Smallest eigenvalue of the symmetrized pairing matrix.
    pub pairing_min_eigenvalue: f64,
    pub ad_invariance: f64,
}

impl ValidationReport {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.antisymmetry <= tol
            && self.jacobi <= tol
            && self.pairing_symmetry <= tol
            && self.pairing_min_eigenvalue > 0.0
            && self.ad_invariance <= tol
    }

    /// Names of the failed checks.
    pub fn defects(&self, tol: f64) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.antisymmetry > tol {
            out.push("antisymmetry");
        }
        if self.jacobi > tol {
            out.push("jacobi");
        }
        if self.pairing_symmetry > tol || self.pairing_min_eigenvalue <= 0.0 {
            out.push("pairing not symmetric positive definite");
        }
        if self.ad_invariance > tol {
            out.push("ad-invariance");
        }
        out
    }
}

impl LieAlgebraData {
    /// The abelian algebra `u(1)` with unit pairing.
    pub fn u1() -> Self {
        Self::unchecked("u1", 1, vec![0.0], vec![1.0])
    }

    /// `su(2)` with `f = epsilon` and `c = identity`.
    pub fn su2() -> Self {
        let mut f = vec![0.0; 27];
        for (l, s, g, sign) in [
            (0, 1, 2, 1.0),
            (1, 2, 0, 1.0),
            (2, 0, 1, 1.0),
            (1, 0, 2, -1.0),
            (2, 1, 0, -1.0),
            (0, 2, 1, -1.0),
        ] {
            f[(l * 3 + s) * 3 + g] = sign;
        }
        let mut c = vec![0.0; 9];
        for i in 0..3 {
            c[i * 3 + i] = 1.0;
        }
        Self::unchecked("su2", 3, f, c)
    }

    /// Looks up a shipped algebra by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "u1" => Ok(Self::u1()),
            "su2" => Ok(Self::su2()),
            other => Err(EymError::InvalidAlgebra(format!("unknown algebra '{other}'"))),
        }
    }

    /// Builds an algebra from raw data and rejects it unless [`validate`] passes.
    pub fn from_spec(spec: &AlgebraSpec) -> Result<Self> {
        let d = spec.dim;
        if d == 0 {
            return Err(EymError::InvalidAlgebra("dimension must be positive".into()));
        }
        if spec.structure.len() != d * d * d || spec.pairing.len() != d * d {
            return Err(EymError::InvalidAlgebra(format!(
                "expected {} structure constants and {} pairing entries",
                d * d * d,
                d * d
            )));
        }
        if spec.structure.iter().chain(&spec.pairing).any(|v| !v.is_finite()) {
            return Err(EymError::InvalidAlgebra("non-finite entries".into()));
        }
        let alg = Self::unchecked(&spec.name, d, spec.structure.clone(), spec.pairing.clone());
        let report = validate(&alg);
        if report.is_valid(ALGEBRA_TOLERANCE) {
            Ok(alg)
        } else {
            Err(EymError::InvalidAlgebra(report.defects(ALGEBRA_TOLERANCE).join(", ")))
        }
    }

    /// Builds an algebra without validation; use [`validate`] to inspect it.
    pub fn unchecked(name: &str, dim: usize, structure: Vec<f64>, pairing: Vec<f64>) -> Self {
        let abelian = structure.iter().all(|&v| v == 0.0);
        LieAlgebraData { name: name.to_string(), dim, structure, pairing, abelian }
    }

    pub fn spec(&self) -> AlgebraSpec {
        AlgebraSpec {
            name: self.name.clone(),
            dim: self.dim,
            structure: self.structure.clone(),
            pairing: self.pairing.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_abelian(&self) -> bool {
        self.abelian
    }

    pub fn structure_constant(&self, l: usize, s: usize, g: usize) -> f64 {
        self.structure[(l * self.dim + s) * self.dim + g]
    }

    pub fn pairing_entry(&self, l: usize, s: usize) -> f64 {
        self.pairing[l * self.dim + s]
    }

    /// `out += scale * [x, y]` on component slices.
    #[inline]
    pub fn bracket_acc(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        if self.abelian {
            return;
        }
        let d = self.dim;
        for l in 0..d {
            let xl = x[l];
            if xl == 0.0 {
                continue;
            }
            for s in 0..d {
                let coeff = scale * xl * y[s];
                if coeff == 0.0 {
                    continue;
                }
                let row = &self.structure[(l * d + s) * d..(l * d + s + 1) * d];
                for (o, f) in out.iter_mut().zip(row) {
                    *o += coeff * f;
                }
            }
        }
    }

    /// `c(x, y)` on component slices.
    #[inline]
    pub fn pair(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.dim == 1 {
            return self.pairing[0] * x[0] * y[0];
        }
        let d = self.dim;
        let mut acc = 0.0;
        for l in 0..d {
            if x[l] == 0.0 {
                continue;
            }
            let row = &self.pairing[l * d..(l + 1) * d];
            let mut inner = 0.0;
            for (c, v) in row.iter().zip(y) {
                inner += c * v;
            }
            acc += x[l] * inner;
        }
        acc
    }

    /// Largest component of `[x, tau_L]` over the basis: zero iff `x` is central.
    pub fn centrality_defect(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for l in 0..d {
            let mut e = vec![0.0; d];
            e[l] = 1.0;
            let mut out = vec![0.0; d];
            self.bracket_acc(x, &e, 1.0, &mut out);
            worst = out.iter().fold(worst, |m, v| m.max(v.abs()));
        }
        worst
    }
}

/// Element of the Lie algebra in the fixed basis.
#[derive(Clone, Debug, PartialEq)]
pub struct AdValue(pub Vec<f64>);

impl AdValue {
    pub fn basis(alg: &LieAlgebraData, index: usize) -> Self {
        let mut v = vec![0.0; alg.dim()];
        v[index] = 1.0;
        AdValue(v)
    }

    fn check(&self, alg: &LieAlgebraData) -> Result<()> {
        if self.0.len() == alg.dim() {
            Ok(())
        } else {
            Err(EymError::AlgebraMismatch(format!(
                "value has {} components, algebra '{}' has dimension {}",
                self.0.len(),
                alg.name(),
                alg.dim()
            )))
        }
    }
}

/// Lie bracket `[x, y]`.
pub fn bracket(alg: &LieAlgebraData, x: &AdValue, y: &AdValue) -> Result<AdValue> {
    x.check(alg)?;
    y.check(alg)?;
    let mut out = vec![0.0; alg.dim()];
    alg.bracket_acc(&x.0, &y.0, 1.0, &mut out);
    Ok(AdValue(out))
}

/// Invariant inner product `c(x, y)`.
pub fn pairing(alg: &LieAlgebraData, x: &AdValue, y: &AdValue) -> Result<f64> {
    x.check(alg)?;
    y.check(alg)?;
    Ok(alg.pair(&x.0, &y.0))
}

/// Checks antisymmetry, the Jacobi identity, positivity of `c` and
/// ad-invariance on all basis triples.
pub fn validate(alg: &LieAlgebraData) -> ValidationReport {
    let d = alg.dim();
    let f = |l, s, g| alg.structure_constant(l, s, g);
    let mut antisymmetry: f64 = 0.0;
    for l in 0..d {
        for s in 0..d {
            for g in 0..d {
                antisymmetry = antisymmetry.max((f(l, s, g) + f(s, l, g)).abs());
            }
        }
    }
    // [[x,y],z] + [[y,z],x] + [[z,x],y] on basis triples.
    let mut jacobi: f64 = 0.0;
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                for out in 0..d {
                    let mut acc = 0.0;
                    for m in 0..d {
                        acc += f(x, y, m) * f(m, z, out)
                            + f(y, z, m) * f(m, x, out)
                            + f(z, x, m) * f(m, y, out);
                    }
                    jacobi = jacobi.max(acc.abs());
                }
            }
        }
    }
    let mut pairing_symmetry: f64 = 0.0;
    for l in 0..d {
        for s in 0..d {
            pairing_symmetry =
                pairing_symmetry.max((alg.pairing_entry(l, s) - alg.pairing_entry(s, l)).abs());
        }
    }
    let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (alg.pairing_entry(i, j) + alg.pairing_entry(j, i)));
    let pairing_min_eigenvalue = sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    // c([z,x],y) + c(x,[z,y])
    let mut ad_invariance: f64 = 0.0;
    for z in 0..d {
        for x in 0..d {
            for y in 0..d {
                let mut acc = 0.0;
                for m in 0..d {
                    acc += f(z, x, m) * alg.pairing_entry(m, y) + alg.pairing_entry(x, m) * f(z, y, m);
                }
                ad_invariance = ad_invariance.max(acc.abs());
            }
        }
    }
    ValidationReport { antisymmetry, jacobi, pairing_symmetry, pairing_min_eigenvalue, ad_invariance }
}
