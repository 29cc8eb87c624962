//! Run configuration read from a JSON file. Every tunable lives under a
//! namespace (`grid`, `flow`, `tol`, `spectrum`, `symbol`, `fdcheck`,
//! `checks`); absent keys take their defaults and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use eymlab::algebra::LieAlgebraData;
use eymlab::deform::KernelPolicy;
use eymlab::eym::{EymConfig, FlowParams, Kappa, Tolerances};
use eymlab::lattice::Grid;
use eymlab::linalg::LanczosOptions;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    /// Points per axis; `sizes` overrides it when present.
    pub size: usize,
    pub sizes: Option<Vec<usize>>,
    /// Side length of every axis; `lengths` overrides it when present.
    pub length: f64,
    pub lengths: Option<Vec<f64>>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: 3, size: 8, sizes: None, length: 1.0, lengths: None }
    }
}

impl GridSection {
    pub fn build(&self) -> Result<Grid, CliError> {
        if !(2..=4).contains(&self.n) {
            return Err(CliError::invalid(format!("grid.n must be 2, 3 or 4, got {}", self.n)));
        }
        let sizes = self.sizes.clone().unwrap_or_else(|| vec![self.size; self.n]);
        let lengths = self.lengths.clone().unwrap_or_else(|| vec![self.length; self.n]);
        if sizes.len() != self.n || lengths.len() != self.n {
            return Err(CliError::invalid("grid.sizes and grid.lengths need one entry per axis"));
        }
        Ok(Grid::new(&sizes, &lengths)?)
    }
}

/// One constant flux term `value * dx^i ^ dx^j` (axes counted from 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxTerm {
    pub axes: [usize; 2],
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Flat,
    /// Flat metric, zero potential and the given constant abelian flux.
    U1Flux { flux: Vec<FluxTerm> },
    /// Configuration point read from a snapshot file.
    File { path: PathBuf },
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::Flat
    }
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Flat => "flat",
            Scenario::U1Flux { .. } => "u1_flux",
            Scenario::File { .. } => "file",
        }
    }
}

/// Smooth random perturbation added to the scenario point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Perturbation {
    pub metric: f64,
    pub potential: f64,
    pub max_mode: usize,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation { metric: 0.0, potential: 0.0, max_mode: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolSection {
    pub residual: f64,
    pub eigen: f64,
    pub flow: f64,
    /// Identities that hold at every pair (divergence, off-shell complex).
    pub identity: f64,
    /// Identities that hold at critical pairs (complex, self-adjointness).
    pub complex: f64,
    /// Absolute finite-difference agreement at the smaller step.
    pub fd_abs: f64,
    /// Smallest accepted observed finite-difference order.
    pub fd_order: f64,
}

impl Default for TolSection {
    fn default() -> Self {
        let t = Tolerances::default();
        TolSection {
            residual: t.residual,
            eigen: t.eigen,
            flow: t.flow,
            identity: 1e-8,
            complex: 1e-9,
            fd_abs: 1e-5,
            fd_order: 1.9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumOperator {
    /// `Delta^(1)` by block Lanczos.
    Essential,
    /// `Delta^(1)` assembled densely.
    Dense,
    /// `Delta^(0)` by block Lanczos.
    Automorphism,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub operator: SpectrumOperator,
    pub k: usize,
    pub block_size: usize,
    pub max_dim: usize,
    pub tau_rel: f64,
    pub tau_abs: f64,
    pub min_gap: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        let p = KernelPolicy::default();
        SpectrumSection {
            operator: SpectrumOperator::Essential,
            k: 10,
            block_size: 8,
            max_dim: 200,
            tau_rel: p.tau_rel,
            tau_abs: p.tau_abs,
            min_gap: p.min_gap,
        }
    }
}

impl SpectrumSection {
    pub fn policy(&self) -> KernelPolicy {
        KernelPolicy { tau_rel: self.tau_rel, tau_abs: self.tau_abs, min_gap: self.min_gap }
    }

    pub fn lanczos(&self) -> LanczosOptions {
        LanczosOptions { block_size: self.block_size, max_dim: self.max_dim }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymbolSection {
    pub trials: usize,
}

impl Default for SymbolSection {
    fn default() -> Self {
        SymbolSection { trials: 1000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdSection {
    /// Size of the random direction `(h, a)`.
    pub amplitude: f64,
    pub max_mode: usize,
    pub eps: [f64; 2],
}

impl Default for FdSection {
    fn default() -> Self {
        FdSection { amplitude: 0.1, max_mode: 1, eps: [1e-2, 1e-3] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    /// Random inputs per complex and self-adjointness check.
    pub trials: usize,
    pub max_mode: usize,
}

impl Default for ChecksSection {
    fn default() -> Self {
        ChecksSection { trials: 50, max_mode: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub algebra: String,
    /// `+1` or `-1`.
    pub kappa: f64,
    pub scenario: Scenario,
    pub perturbation: Perturbation,
    pub flow: FlowParams,
    pub tol: TolSection,
    pub spectrum: SpectrumSection,
    pub symbol: SymbolSection,
    pub fdcheck: FdSection,
    pub checks: ChecksSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSection::default(),
            algebra: "u1".into(),
            kappa: -1.0,
            scenario: Scenario::default(),
            perturbation: Perturbation::default(),
            flow: FlowParams::default(),
            tol: TolSection::default(),
            spectrum: SpectrumSection::default(),
            symbol: SymbolSection::default(),
            fdcheck: FdSection::default(),
            checks: ChecksSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::invalid(format!("config: {e}")))
    }

    pub fn kappa(&self) -> Result<Kappa, CliError> {
        Ok(Kappa::try_from(self.kappa)?)
    }

    pub fn algebra(&self) -> Result<LieAlgebraData, CliError> {
        Ok(LieAlgebraData::by_name(&self.algebra)?)
    }

    /// Model configuration for the given coupling sign and algebra.
    pub fn eym(&self, kappa: Kappa, algebra: LieAlgebraData) -> Result<EymConfig, CliError> {
        let cfg = EymConfig {
            kappa,
            algebra,
            tol: Tolerances { residual: self.tol.residual, eigen: self.tol.eigen, flow: self.tol.flow },
            flow: self.flow,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that does not need the configuration point.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("tol.identity", self.tol.identity),
            ("tol.complex", self.tol.complex),
            ("tol.fd_abs", self.tol.fd_abs),
            ("fdcheck.amplitude", self.fdcheck.amplitude),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::invalid(format!("{key} must be positive")));
            }
        }
        let p = &self.perturbation;
        if !(p.metric >= 0.0 && p.potential >= 0.0) {
            return Err(CliError::invalid("perturbation amplitudes must be non-negative"));
        }
        let [e1, e2] = self.fdcheck.eps;
        if !(e1 > e2 && e2 > 0.0) {
            return Err(CliError::invalid("fdcheck.eps must be two decreasing positive steps"));
        }
        if self.checks.trials == 0 || self.symbol.trials == 0 {
            return Err(CliError::invalid("trial counts must be positive"));
        }
        if let Scenario::U1Flux { flux } = &self.scenario {
            if self.algebra != "u1" {
                return Err(CliError::invalid("scenario u1_flux needs algebra u1"));
            }
            for t in flux {
                let [i, j] = t.axes;
                if i == 0 || j == 0 || i > self.grid.n || j > self.grid.n || i == j {
                    return Err(CliError::invalid(format!("flux axes {:?} invalid for n = {}", t.axes, self.grid.n)));
                }
            }
        }
        self.kappa()?;
        self.algebra()?;
        self.grid.build()?;
        self.eym(self.kappa()?, self.algebra()?)?;
        Ok(())
    }
}
