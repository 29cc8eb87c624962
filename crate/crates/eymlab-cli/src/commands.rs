//! The five subcommands. Each returns its output text and whether every
//! check passed; the caller turns that into an exit code.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use eymlab::deform::{
    automorphism_spectrum, complex_defect, dense_essential_spectrum, essential_spectrum, lin_residual,
    self_adjoint_defect, symbol_check, LinBranch, SpectrumReport,
};
use eymlab::eym::{divergence_em_defect, solve, trace_constraint, EymConfig, EymPoint, HistoryEntry};
use eymlab::fields::{DeformationPair, MetricField};
use eymlab::gauge::ConnectionField;
use eymlab::riemann::{curvature, lin_einstein, lin_ricci, lin_scalar, lin_volume};
use eymlab::sampling::{random_form, random_spd, random_sym};

use crate::config::{RunConfig, Scenario, SpectrumOperator};
use crate::error::CliError;
use crate::report::{Check, CheckReport, Metadata};
use crate::snapshot::Snapshot;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Options shared by every command.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub input: Option<PathBuf>,
    pub seed: u64,
    pub format: Option<Format>,
    pub timing: bool,
}

/// Text to print (or write to `--out`) and the pass verdict.
#[derive(Clone, Debug)]
pub struct Output {
    pub text: String,
    pub pass: bool,
}

/// The configuration point a command works on.
pub struct Setup {
    pub cfg: RunConfig,
    pub eym: EymConfig,
    pub g: MetricField,
    pub conn: ConnectionField,
    pub scenario: String,
    pub rng: ChaCha8Rng,
    pub seed: u64,
}

impl Setup {
    pub fn new(cfg: &RunConfig, opts: &RunOptions) -> Result<Self, CliError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let file = opts.input.clone().or(match &cfg.scenario {
            Scenario::File { path } => Some(path.clone()),
            _ => None,
        });
        let (g, conn, kappa, scenario) = match file {
            Some(path) => {
                let snap = Snapshot::load(&path)?;
                (snap.g, snap.conn, snap.kappa, "file".to_string())
            }
            None => {
                let grid = cfg.grid.build()?;
                let alg = cfg.algebra()?;
                let conn = match &cfg.scenario {
                    Scenario::U1Flux { flux } => {
                        let axes: Vec<[usize; 2]> = flux.iter().map(|t| [t.axes[0] - 1, t.axes[1] - 1]).collect();
                        let terms: Vec<(&[usize], usize, f64)> =
                            axes.iter().zip(flux).map(|(ax, t)| (&ax[..], 0, t.value)).collect();
                        ConnectionField::with_flux(&grid, &alg, &terms)?
                    }
                    _ => ConnectionField::flat(&grid, &alg),
                };
                (MetricField::flat(&grid), conn, cfg.kappa()?, cfg.scenario.kind().to_string())
            }
        };
        let grid = g.grid().clone();
        let p = cfg.perturbation;
        let g = if p.metric > 0.0 { g.perturbed(1.0, &random_sym(&grid, &mut rng, p.max_mode, p.metric))? } else { g };
        let conn = if p.potential > 0.0 {
            let a = random_form(&grid, 1, conn.fiber(), &mut rng, p.max_mode, p.potential);
            conn.perturbed(1.0, &a)?
        } else {
            conn
        };
        let eym = cfg.eym(kappa, conn.algebra().clone())?;
        Ok(Setup { cfg: cfg.clone(), eym, g, conn, scenario, rng, seed: opts.seed })
    }

    fn point(&self) -> Result<EymPoint, CliError> {
        Ok(EymPoint::new(&self.g, &self.conn)?)
    }

    fn metadata(&self, command: &str, started: Option<Instant>) -> Metadata {
        let grid = self.g.grid();
        Metadata {
            command: command.into(),
            grid_sizes: grid.sizes().to_vec(),
            grid_lengths: grid.lengths().to_vec(),
            algebra: self.conn.algebra().name().into(),
            kappa: self.eym.k(),
            scenario: self.scenario.clone(),
            seed: self.seed,
            eymlab_version: eymlab::VERSION.into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: started.map(|t| t.elapsed().as_secs_f64()),
        }
    }
}

fn render(report: &CheckReport, format: Option<Format>) -> Output {
    let text = match format.unwrap_or(Format::Json) {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    Output { text, pass: report.pass }
}

fn started(opts: &RunOptions) -> Option<Instant> {
    opts.timing.then(Instant::now)
}

/// Residual, trace constraint, divergence identity, deformation complex and
/// self-adjointness at the configured point.
pub fn verify(cfg: &RunConfig, opts: &RunOptions) -> Result<Output, CliError> {
    let t0 = started(opts);
    let mut s = Setup::new(cfg, opts)?;
    let point = s.point()?;
    let tol = s.cfg.tol;
    let (e1, e2) = point.residual(s.eym.k())?.max_abs();
    let trace = trace_constraint(&s.g, &s.conn, &s.eym)?.max_abs();
    let div = divergence_em_defect(&s.g, &s.conn, &s.eym)?.max_abs();
    let trials = s.cfg.checks.trials;
    let modes = s.cfg.checks.max_mode;
    let complex = complex_defect(&point, &s.eym, trials, &mut s.rng, modes)?;
    let sa = self_adjoint_defect(&point, &s.eym, trials, &mut s.rng, modes)?;
    // Below unit scale the terms themselves are at rounding level, so the
    // defect is measured absolutely there.
    let off_shell = complex.off_shell_absolute / complex.off_shell_scale.max(1.0);
    let checks = vec![
        Check::at_most("residual.e1_sup", e1, tol.residual),
        Check::at_most("residual.e2_sup", e2, tol.residual),
        Check::at_most("trace_constraint.sup", trace, tol.residual),
        Check::at_most("divergence_em.sup", div, tol.identity),
        Check::at_most("complex.de_after_dphi", complex.d_e_after_d_phi, tol.complex),
        Check::at_most("complex.dphi_adjoint_after_de", complex.d_phi_adjoint_after_d_e, tol.complex),
        Check::at_most("complex.off_shell", off_shell, tol.identity),
        Check::at_most("self_adjoint.relative", sa, tol.complex),
    ];
    Ok(render(&CheckReport::new(checks, s.metadata("verify", t0)), opts.format))
}

#[derive(Serialize)]
struct FlowJson<'a> {
    converged: bool,
    failure: &'a Option<String>,
    total_halvings: usize,
    history: &'a [HistoryEntry],
    metadata: Metadata,
}

/// Runs the flow; `out` receives the final snapshot. Passes when the flow
/// converged.
pub fn flow(cfg: &RunConfig, opts: &RunOptions, out: Option<&Path>) -> Result<Output, CliError> {
    let t0 = started(opts);
    let s = Setup::new(cfg, opts)?;
    let outcome = solve(&s.g, &s.conn, &s.eym)?;
    if let Some(path) = out {
        Snapshot { g: outcome.g.clone(), conn: outcome.conn.clone(), kappa: s.eym.kappa }.save(path)?;
    }
    let text = match opts.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut text = String::from("iter,action,residual_norm,step\n");
            for h in &outcome.history {
                text.push_str(&format!("{},{:e},{:e},{:e}\n", h.iter, h.action, h.residual_norm, h.step));
            }
            text
        }
        Format::Json => {
            let body = FlowJson {
                converged: outcome.converged,
                failure: &outcome.failure,
                total_halvings: outcome.total_halvings,
                history: &outcome.history,
                metadata: s.metadata("flow", t0),
            };
            serde_json::to_string_pretty(&body).expect("flow outcome serializes") + "\n"
        }
    };
    if let Some(reason) = &outcome.failure {
        eprintln!("flow did not converge: {reason}");
    }
    Ok(Output { text, pass: outcome.converged })
}

#[derive(Serialize)]
struct SpectrumJson {
    operator: SpectrumOperator,
    spectrum: SpectrumReport,
    metadata: Metadata,
}

/// Low end of `Delta^(1)` or `Delta^(0)`. An ambiguous kernel gap is reported
/// with a warning and does not fail the command.
pub fn spectrum(cfg: &RunConfig, opts: &RunOptions) -> Result<Output, CliError> {
    let t0 = started(opts);
    let sp = cfg.spectrum;
    if sp.k == 0 {
        return Err(CliError::invalid("spectrum.k must be positive"));
    }
    if sp.block_size == 0 || sp.max_dim == 0 {
        return Err(CliError::invalid("spectrum.block_size and spectrum.max_dim must be positive"));
    }
    let mut s = Setup::new(cfg, opts)?;
    let point = s.point()?;
    let report = match sp.operator {
        SpectrumOperator::Essential => {
            essential_spectrum(&point, &s.eym, sp.k, sp.lanczos(), sp.policy(), &mut s.rng)?
        }
        SpectrumOperator::Dense => dense_essential_spectrum(&point, &s.eym, sp.policy())?,
        SpectrumOperator::Automorphism => automorphism_spectrum(&point, sp.k, sp.lanczos(), sp.policy(), &mut s.rng)?,
    };
    if report.ambiguous {
        eprintln!(
            "warning: kernel dimension {} is ambiguous (gap ratio {:e})",
            report.kernel_dim, report.gap_ratio
        );
    }
    let text = match opts.format.unwrap_or(Format::Json) {
        Format::Json => {
            let body = SpectrumJson { operator: sp.operator, spectrum: report, metadata: s.metadata("spectrum", t0) };
            serde_json::to_string_pretty(&body).expect("spectrum serializes") + "\n"
        }
        Format::Csv => {
            let mut text = format!("# kernel_dim={} ambiguous={}\nindex,eigenvalue\n", report.kernel_dim, report.ambiguous);
            for (i, v) in report.eigenvalues.iter().enumerate() {
                text.push_str(&format!("{i},{v:e}\n"));
            }
            text
        }
    };
    Ok(Output { text, pass: true })
}

/// Exactness of the principal-symbol sequence at random SPD metrics and
/// covectors, in the dimension of the configured grid.
pub fn symbol(cfg: &RunConfig, opts: &RunOptions) -> Result<Output, CliError> {
    let t0 = started(opts);
    let mut s = Setup::new(cfg, opts)?;
    let n = s.g.dim();
    let d = s.conn.fiber();
    let mut failures = 0usize;
    let mut composition: f64 = 0.0;
    for _ in 0..s.cfg.symbol.trials {
        let gp = random_spd(n, &mut s.rng);
        let xi: Vec<f64> = loop {
            let xi: Vec<f64> = (0..n).map(|_| s.rng.gen_range(-1.0..1.0)).collect();
            if xi.iter().any(|x| x.abs() > 1e-3) {
                break xi;
            }
        };
        let report = symbol_check(&gp, n, &xi, d, s.eym.k())?;
        if !report.exact() {
            failures += 1;
        }
        composition = composition.max(report.composition_defects.0).max(report.composition_defects.1);
    }
    let checks = vec![
        Check::at_most("symbol.inexact_trials", failures as f64, 0.0),
        Check::at_most("symbol.composition_defect", composition, s.cfg.tol.complex),
    ];
    Ok(render(&CheckReport::new(checks, s.metadata("symbol", t0)), opts.format))
}

/// Sup-norm errors of the central difference at both steps.
fn fd_errors<F: Fn(f64) -> Result<Vec<f64>, CliError>>(
    f: F,
    exact: &[f64],
    eps: [f64; 2],
) -> Result<[f64; 2], CliError> {
    let mut out = [0.0; 2];
    for (slot, e) in out.iter_mut().zip(eps) {
        let plus = f(e)?;
        let minus = f(-e)?;
        *slot = plus
            .iter()
            .zip(&minus)
            .zip(exact)
            .map(|((p, m), x)| ((p - m) / (2.0 * e) - x).abs())
            .fold(0.0, f64::max);
    }
    Ok(out)
}

/// Finite-difference oracle for every linearized operator at the configured
/// point along one random direction.
pub fn fdcheck(cfg: &RunConfig, opts: &RunOptions) -> Result<Output, CliError> {
    let t0 = started(opts);
    let mut s = Setup::new(cfg, opts)?;
    let fd = s.cfg.fdcheck;
    let grid = s.g.grid().clone();
    let h = random_sym(&grid, &mut s.rng, fd.max_mode, fd.amplitude);
    let a = random_form(&grid, 1, s.conn.fiber(), &mut s.rng, fd.max_mode, fd.amplitude);
    let g = &s.g;
    let conn = &s.conn;
    let k = s.eym.k();
    let flat = |h: &eymlab::fields::SymTensorField| h.components().concat();
    let curv = |t: f64| -> Result<_, CliError> { Ok(curvature(&g.perturbed(t, &h)?)?) };

    let mut results: Vec<(&str, [f64; 2])> = Vec::new();
    results.push(("ricci", fd_errors(|t| Ok(flat(&curv(t)?.ricci)), &flat(&lin_ricci(&h, g)?), fd.eps)?));
    results.push((
        "scalar",
        fd_errors(|t| Ok(curv(t)?.scalar.into_values()), lin_scalar(&h, g)?.values(), fd.eps)?,
    ));
    results.push(("einstein", fd_errors(|t| Ok(flat(&curv(t)?.einstein)), &flat(&lin_einstein(&h, g)?), fd.eps)?));
    results.push((
        "volume",
        fd_errors(|t| Ok(g.perturbed(t, &h)?.volume_density().to_vec()), lin_volume(&h, g)?.values(), fd.eps)?,
    ));
    let point = s.point()?;
    let p = DeformationPair { h: h.clone(), a: a.clone() };
    let exact = lin_residual(&p, &point, &s.eym, LinBranch::General)?.to_flat();
    results.push((
        "residual",
        fd_errors(
            |t| {
                let pt = EymPoint::new(&g.perturbed(t, &h)?, &conn.perturbed(t, &a)?)?;
                Ok(pt.residual(k)?.to_pair().to_flat())
            },
            &exact,
            fd.eps,
        )?,
    ));

    let step_ratio = (fd.eps[0] / fd.eps[1]).log10();
    let mut checks = Vec::new();
    for (name, [coarse, fine]) in results {
        let order = (coarse / fine).log10() / step_ratio;
        checks.push(Check::at_most(format!("fd.{name}.error"), fine, s.cfg.tol.fd_abs));
        checks.push(Check::at_least(format!("fd.{name}.order"), order, s.cfg.tol.fd_order));
    }
    Ok(render(&CheckReport::new(checks, s.metadata("fdcheck", t0)), opts.format))
}

