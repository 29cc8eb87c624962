//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
//! criterion fails. Runs without the libtest harness so that the verdict
//! lines are always printed.

use std::process::Command;
use std::time::{Duration, Instant};

use eymlab::algebra::LieAlgebraData;
use eymlab::asd4::{asd_residual, essential_asd_system, essential_eym_asd_system};
use eymlab::deform::{
    complex_defect, dense_essential_spectrum, essential_spectrum, harmonic_class, inf_action, obstruction_class,
    off_shell_identity, project_to_slice, random_automorphism, self_adjoint_defect, slice_second_order_defect,
    symbol_check, trace_lemma_defect, KernelPolicy,
};
use eymlab::eym::{solve, EymConfig, EymPoint, Kappa};
use eymlab::fields::mat::{self, M4};
use eymlab::fields::{DeformationPair, FormField, MetricField, SymTensorField};
use eymlab::gauge::ConnectionField;
use eymlab::lattice::Grid;
use eymlab::linalg::LanczosOptions;
use eymlab::riemann::{curvature, d, hessian, lin_einstein, lin_ricci, lin_scalar, lin_volume};
use eymlab::sampling::{random_form, random_metric, random_pair, random_scalar, random_spd, random_sym};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const ASD_FLUX: [(&[usize], usize, f64); 2] = [(&[0, 1], 0, 1.0), (&[2, 3], 0, -1.0)];

fn instanton(size: usize) -> (EymPoint, EymConfig) {
    let grid = Grid::cubic(4, size, 1.0).unwrap();
    let u1 = LieAlgebraData::u1();
    let conn = ConnectionField::with_flux(&grid, &u1, &ASD_FLUX).unwrap();
    (EymPoint::new(&MetricField::flat(&grid), &conn).unwrap(), EymConfig::new(Kappa::Minus, u1))
}

fn flat(n: usize, size: usize, alg: LieAlgebraData, kappa: Kappa) -> (EymPoint, EymConfig) {
    let grid = Grid::cubic(n, size, 1.0).unwrap();
    let conn = ConnectionField::flat(&grid, &alg);
    (EymPoint::new(&MetricField::flat(&grid), &conn).unwrap(), EymConfig::new(kappa, alg))
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

fn flat_ground_truth() -> Verdict {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        for alg in [LieAlgebraData::u1(), LieAlgebraData::su2()] {
            let (point, cfg) = flat(n, 8, alg, Kappa::Minus);
            let (e1, e2) = point.residual(cfg.k()).unwrap().max_abs();
            let s = point.trace_constraint(cfg.k()).max_abs();
            worst = worst.max(e1).max(e2).max(s);
            if n == 4 {
                worst = worst.max(asd_residual(&point.g, &point.conn).unwrap().max_abs());
            }
        }
    }
    let elapsed = t0.elapsed();
    Verdict::new(worst <= 1e-12 && within(elapsed, 1.0), format!("max defect {worst:e}, {elapsed:.2?}"))
}

fn instanton_pair() -> Verdict {
    let t0 = Instant::now();
    let (point, cfg) = instanton(8);
    let (e1, e2) = point.residual(cfg.k()).unwrap().max_abs();
    let stress = point.energy_momentum(cfg.k()).unwrap().max_abs();
    let s = point.trace_constraint(cfg.k()).max_abs();
    let elapsed = t0.elapsed();
    let pass = e1.max(e2) <= 1e-12 && stress <= 1e-13 && s <= 1e-12 && within(elapsed, 5.0);
    Verdict::new(pass, format!("residual {:e}, stress {stress:e}, S {s:e}, {elapsed:.2?}", e1.max(e2)))
}

const EPS: [f64; 2] = [1e-2, 1e-3];

fn fd_errors<F: Fn(f64) -> Vec<f64>>(f: F, exact: &[f64]) -> [f64; 2] {
    EPS.map(|eps| {
        let plus = f(eps);
        let minus = f(-eps);
        plus.iter().zip(&minus).zip(exact).map(|((p, m), e)| ((p - m) / (2.0 * eps) - e).abs()).fold(0.0, f64::max)
    })
}

fn variation_oracle() -> Verdict {
    let t0 = Instant::now();
    let grid = Grid::cubic(3, 8, 1.0).unwrap();
    let flat_sym = |h: &SymTensorField| h.components().concat();
    let mut results: Vec<(String, [f64; 2])> = Vec::new();
    for seed in 0..3u64 {
        let mut r = rng(300 + seed);
        let g = random_metric(&grid, &mut r, 1, 1e-3).unwrap();
        let h = random_sym(&grid, &mut r, 1, 0.1);
        let at = |t: f64| curvature(&g.perturbed(t, &h).unwrap()).unwrap();
        results.push(("ricci".into(), fd_errors(|t| flat_sym(&at(t).ricci), &flat_sym(&lin_ricci(&h, &g).unwrap()))));
        results.push(("scalar".into(), fd_errors(|t| at(t).scalar.into_values(), lin_scalar(&h, &g).unwrap().values())));
        results.push((
            "einstein".into(),
            fd_errors(|t| flat_sym(&at(t).einstein), &flat_sym(&lin_einstein(&h, &g).unwrap())),
        ));
        results.push((
            "volume".into(),
            fd_errors(|t| g.perturbed(t, &h).unwrap().volume_density().to_vec(), lin_volume(&h, &g).unwrap().values()),
        ));
        for (alg, kappa, amp) in [(LieAlgebraData::u1(), Kappa::Plus, 0.1), (LieAlgebraData::su2(), Kappa::Minus, 0.03)] {
            let dim = alg.dim();
            let conn = ConnectionField::flat(&grid, &alg).with_potential(random_form(&grid, 1, dim, &mut r, 1, amp)).unwrap();
            let a = random_form(&grid, 1, dim, &mut r, 1, 0.1);
            let cfg = EymConfig::new(kappa, alg.clone());
            let point = EymPoint::new(&g, &conn).unwrap();
            let p = DeformationPair { h: h.clone(), a: a.clone() };
            let exact = eymlab::deform::lin_residual(&p, &point, &cfg, eymlab::deform::LinBranch::General).unwrap().to_flat();
            let errs = fd_errors(
                |t| {
                    let pt = EymPoint::new(&g.perturbed(t, &h).unwrap(), &conn.perturbed(t, &a).unwrap()).unwrap();
                    pt.residual(cfg.k()).unwrap().to_pair().to_flat()
                },
                &exact,
            );
            results.push((format!("residual-{}", alg.name()), errs));
        }
    }
    let elapsed = t0.elapsed();
    let worst_err = results.iter().map(|(_, e)| e[1]).fold(0.0, f64::max);
    let worst_ratio = results.iter().map(|(_, e)| e[0] / e[1]).fold(f64::INFINITY, f64::min);
    let pass = worst_err <= 1e-5 && worst_ratio >= 3.5 && within(elapsed, 60.0);
    Verdict::new(
        pass,
        format!("{} oracles, max error {worst_err:e}, min ratio {worst_ratio:.3}, {elapsed:.2?}", results.len()),
    )
}

fn random_su2_point(grid: &Grid, r: &mut ChaCha8Rng, amp_g: f64, amp_a: f64) -> EymPoint {
    let g = random_metric(grid, r, 1, amp_g).unwrap();
    let su2 = LieAlgebraData::su2();
    let conn = ConnectionField::flat(grid, &su2).with_potential(random_form(grid, 1, 3, r, 1, amp_a)).unwrap();
    EymPoint::new(&g, &conn).unwrap()
}

fn deformation_complex() -> Verdict {
    let mut r = rng(400);
    let mut worst: f64 = 0.0;
    for (point, cfg) in [flat(3, 8, LieAlgebraData::su2(), Kappa::Minus), instanton(8)] {
        let rep = complex_defect(&point, &cfg, 50, &mut r, 2).unwrap();
        worst = worst.max(rep.d_e_after_d_phi);
    }
    // Products of the random data must stay resolved for the discrete
    // identity to hold to 1e-8; 16^3 with these amplitudes does.
    let grid = Grid::cubic(3, 16, 1.0).unwrap();
    let mut off: f64 = 0.0;
    let mut min_residual = f64::INFINITY;
    for i in 0..20 {
        let point = random_su2_point(&grid, &mut r, 0.01, 0.3);
        let kappa = if i % 2 == 0 { Kappa::Plus } else { Kappa::Minus };
        let cfg = EymConfig::new(kappa, LieAlgebraData::su2());
        min_residual = min_residual.min(point.residual(cfg.k()).unwrap().l2_norm(&point.g, point.algebra()).unwrap());
        off = off.max(off_shell_identity(&point, &cfg).unwrap().1);
    }
    Verdict::new(
        worst <= 1e-9 && off <= 1e-8 && min_residual > 0.0,
        format!("dE dPhi {worst:e}; off-shell relative {off:e} (residual norms >= {min_residual:.2e})"),
    )
}

fn self_adjointness() -> Verdict {
    let (point, cfg) = instanton(8);
    let defect = self_adjoint_defect(&point, &cfg, 50, &mut rng(500), 2).unwrap();
    Verdict::new(defect <= 1e-9, format!("relative defect {defect:e}"))
}

fn symbol_exactness() -> Verdict {
    let t0 = Instant::now();
    let mut r = rng(600);
    let mut parts = Vec::new();
    let mut all = true;
    for n in 2..=4 {
        for d in [1, 3] {
            let mut exact = 0;
            for _ in 0..1000 {
                let g = random_spd(n, &mut r);
                let xi: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
                let kappa = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                if symbol_check(&g, n, &xi, d, kappa).unwrap().exact() {
                    exact += 1;
                }
            }
            all &= exact == 1000;
            parts.push(format!("(n={n},d={d}) {exact}/1000"));
        }
    }
    let elapsed = t0.elapsed();
    Verdict::new(all && within(elapsed, 30.0), format!("{}, {elapsed:.2?}", parts.join(", ")))
}

fn kernel_oracle() -> Verdict {
    let (point, cfg) = flat(2, 4, LieAlgebraData::u1(), Kappa::Minus);
    let policy = KernelPolicy::default();
    let dense = dense_essential_spectrum(&point, &cfg, policy).unwrap();
    let opts = LanczosOptions { block_size: 4, max_dim: 80 };
    let k = dense.kernel_dim + 6;
    let iterative = essential_spectrum(&point, &cfg, k, opts, policy, &mut rng(700)).unwrap();
    let top = dense.eigenvalues.last().unwrap().abs();
    let worst = iterative
        .eigenvalues
        .iter()
        .zip(&dense.eigenvalues)
        .map(|(a, b)| (a - b).abs() / top.max(b.abs()))
        .fold(0.0, f64::max);
    let pass = iterative.kernel_dim == dense.kernel_dim && !dense.ambiguous && !iterative.ambiguous && worst <= 1e-8;
    Verdict::new(
        pass,
        format!("kernel {} (dense) vs {} (Lanczos), eigenvalue deviation {worst:e}", dense.kernel_dim, iterative.kernel_dim),
    )
}

fn slice_and_trace_identities() -> Verdict {
    let mut r = rng(800);
    let mut trace: f64 = 0.0;
    let mut slice: f64 = 0.0;
    for (point, cfg) in [instanton(6), flat(3, 8, LieAlgebraData::su2(), Kappa::Minus)] {
        let grid = point.g.grid().clone();
        let x = random_automorphism(&grid, point.algebra().dim(), &mut r, 2, 1.0);
        let p = inf_action(&x, &point).unwrap();
        trace = trace.max(trace_lemma_defect(&p, &point, &cfg).unwrap().max_abs());
        let q = project_to_slice(&random_pair(&grid, point.algebra().dim(), &mut r, 2, 1.0), &point, 1e-14, 500)
            .unwrap()
            .0;
        slice = slice.max(slice_second_order_defect(&q, &point).unwrap().max_abs());
    }

    // Exact forms: the Hessian of a function, and df on a curved metric.
    let grid = Grid::cubic(3, 8, 1.0).unwrap();
    let f = random_scalar(&grid, &mut r, 2, 1.0);
    let (fp, fcfg) = flat(3, 8, LieAlgebraData::u1(), Kappa::Plus);
    let h = hessian(&f, &fp.g).unwrap();
    let exact_flat = obstruction_class(&h, &FormField::zeros(&grid, 1, 1), &fp, &fcfg).unwrap().class_norm;
    let g = random_metric(&grid, &mut r, 1, 0.1).unwrap();
    let df = d(&FormField::from_scalar(&f)).unwrap();
    let exact_curved = harmonic_class(&df, &g, 1e-13, 500).unwrap().1;
    let exact = exact_flat.max(exact_curved);

    // Constant a at the instanton: a -| F is a nonzero harmonic form.
    let (ip, icfg) = instanton(4);
    let a = FormField::constant(ip.g.grid(), 1, 1, &[(&[0], 0, 1.0)]);
    let counter = obstruction_class(&SymTensorField::zeros(ip.g.grid()), &a, &ip, &icfg).unwrap();
    let detected = (counter.class[1] + 1.0).abs() < 1e-10 && counter.class_norm > 0.5;

    Verdict::new(
        trace <= 1e-9 && slice <= 1e-9 && exact <= 1e-10 && detected,
        format!(
            "trace {trace:e}, slice {slice:e}, exact class {exact:e}, counterexample class {:?}",
            counter.class
        ),
    )
}

/// Symmetric, traceless and anticommuting with the flux matrix of `ASD_FLUX`.
fn anticommuting(c: &[f64; 6]) -> M4 {
    let mut m = mat::ZERO;
    let entries = [
        (0, 0, c[0]),
        (1, 1, -c[0]),
        (0, 1, c[1]),
        (2, 2, c[2]),
        (3, 3, -c[2]),
        (2, 3, c[3]),
        (0, 2, c[4]),
        (1, 3, c[4]),
        (0, 3, c[5]),
        (1, 2, -c[5]),
    ];
    for (i, j, v) in entries {
        m[i][j] = v;
        m[j][i] = v;
    }
    m
}

fn asd_inclusion() -> Verdict {
    let (point, cfg) = instanton(8);
    let grid = point.g.grid().clone();
    let mut r = rng(900);
    let mut passing = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c: [f64; 6] = std::array::from_fn(|_| r.gen_range(-1.0..1.0));
        let ho = SymTensorField::constant(&grid, &anticommuting(&c));
        let terms: Vec<(Vec<usize>, f64)> = (0..4).map(|i| (vec![i], r.gen_range(-1.0..1.0))).collect();
        let spec: Vec<(&[usize], usize, f64)> = terms.iter().map(|(ax, v)| (ax.as_slice(), 0, *v)).collect();
        let a = FormField::constant(&grid, 1, 1, &spec);
        if essential_asd_system(&ho, &a, &point, &cfg).unwrap().max() <= 1e-10 {
            passing += 1;
            worst = worst.max(essential_eym_asd_system(&ho, &a, &point, &cfg).unwrap().max());
        }
    }
    Verdict::new(passing == 20 && worst <= 1e-8, format!("{passing}/20 ASD-essential, EYM defect {worst:e}"))
}

fn flow_convergence() -> Verdict {
    let t0 = Instant::now();
    let grid = Grid::cubic(4, 8, 1.0).unwrap();
    let mut r = rng(1000);
    let u1 = LieAlgebraData::u1();
    let g = random_metric(&grid, &mut r, 1, 1e-3).unwrap();
    let conn = ConnectionField::flat(&grid, &u1).with_potential(random_form(&grid, 1, 1, &mut r, 1, 1e-3)).unwrap();
    let cfg = EymConfig::new(Kappa::Minus, u1);
    let out = solve(&g, &conn, &cfg).unwrap();
    let monotone = out.history.windows(2).all(|w| w[1].residual_norm < w[0].residual_norm);
    let end = EymPoint::new(&out.g, &out.conn).unwrap();
    let riemann = end.curv.riemann.max_abs();
    let field = end.f.max_abs();
    let elapsed = t0.elapsed();
    let iters = out.history.len() - 1;
    let last = out.history.last().unwrap().residual_norm;
    let pass = out.converged && monotone && iters <= 5000 && riemann < 1e-5 && field < 1e-5 && within(elapsed, 600.0);
    Verdict::new(
        pass,
        format!(
            "{iters} iterations, residual {last:e}, monotone {monotone}, halvings {}, |Rm| {riemann:e}, |F| {field:e}, {elapsed:.1?}",
            out.total_halvings
        ),
    )
}

fn determinism() -> Verdict {
    let dir = std::env::temp_dir().join(format!("eymlab-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("verify.json");
    std::fs::write(
        &cfg,
        r#"{"grid": {"n": 3, "size": 8}, "algebra": "su2", "perturbation": {"metric": 1e-3, "potential": 1e-2}}"#,
    )
    .unwrap();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_eymlab"))
            .args(["verify", "--config", cfg.to_str().unwrap(), "--seed", "7"])
            .output()
            .expect("binary runs")
            .stdout
    };
    let first = run();
    let second = run();
    Verdict::new(
        !first.is_empty() && first == second,
        format!("{} bytes, identical {}", first.len(), first == second),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("flat ground truth", flat_ground_truth),
        ("instanton pair", instanton_pair),
        ("variation-formula oracle", variation_oracle),
        ("deformation complex", deformation_complex),
        ("self-adjointness", self_adjointness),
        ("symbol exactness", symbol_exactness),
        ("kernel oracle", kernel_oracle),
        ("slice and trace identities", slice_and_trace_identities),
        ("ASD inclusion", asd_inclusion),
        ("flow convergence", flow_convergence),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} [{name}]: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
