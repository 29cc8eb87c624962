use eymlab::algebra::LieAlgebraData;
use eymlab::deform::*;
use eymlab::eym::{EymConfig, EymPoint, Kappa};
use eymlab::fields::mat::{self, M4};
use eymlab::fields::{l2_inner, traceless_part, DeformationPair, FormField, MetricField, SymTensorField};
use eymlab::gauge::ConnectionField;
use eymlab::lattice::{Grid, ScalarField};
use eymlab::linalg::LanczosOptions;
use eymlab::riemann::{d, hessian};
use eymlab::sampling::{random_form, random_metric, random_pair, random_scalar, random_spd};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn instanton_point(size: usize) -> (EymPoint, EymConfig) {
    let grid = Grid::cubic(4, size, 1.0).unwrap();
    let u1 = LieAlgebraData::u1();
    let conn = ConnectionField::with_flux(&grid, &u1, &[(&[0, 1], 0, 1.0), (&[2, 3], 0, -1.0)]).unwrap();
    (EymPoint::new(&MetricField::flat(&grid), &conn).unwrap(), EymConfig::new(Kappa::Minus, u1))
}

fn flat_point(n: usize, size: usize, alg: LieAlgebraData) -> (EymPoint, EymConfig) {
    let grid = Grid::cubic(n, size, 1.0).unwrap();
    let conn = ConnectionField::flat(&grid, &alg);
    (EymPoint::new(&MetricField::flat(&grid), &conn).unwrap(), EymConfig::new(Kappa::Plus, alg))
}

fn random_su2_point(grid: &Grid, seed: u64, amp_g: f64, amp_a: f64) -> EymPoint {
    let mut r = rng(seed);
    let g = random_metric(grid, &mut r, 1, amp_g).unwrap();
    let su2 = LieAlgebraData::su2();
    let conn = ConnectionField::flat(grid, &su2).with_potential(random_form(grid, 1, 3, &mut r, 1, amp_a)).unwrap();
    EymPoint::new(&g, &conn).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn translations_and_constant_gauge_act_trivially_on_flat_pairs() {
    let (point, _) = flat_point(3, 6, LieAlgebraData::su2());
    let grid = point.g.grid().clone();
    let mut x = InfAutomorphism::zeros(&grid, 3);
    x.v = eymlab::fields::VectorField::from_fn(&grid, |_, i| [0.3, -1.0, 2.0][i]);
    x.tau = FormField::constant(&grid, 0, 3, &[(&[], 1, 0.5)]);
    assert!(inf_action(&x, &point).unwrap().max_abs() < 1e-12);
}

#[test]
fn translation_moves_the_flux_potential() {
    // On the instanton pair a constant v produces (0, iota_v F).
    let (point, _) = instanton_point(4);
    let grid = point.g.grid().clone();
    let mut x = InfAutomorphism::zeros(&grid, 1);
    x.v = eymlab::fields::VectorField::from_fn(&grid, |_, i| if i == 0 { 1.0 } else { 0.0 });
    let p = inf_action(&x, &point).unwrap();
    assert!(p.h.max_abs() < 1e-13);
    // iota_{e1} (dx1 ^ dx2) = dx2
    assert!((p.a.component(1, 0)[0] - 1.0).abs() < 1e-14);
    assert!(p.a.component(0, 0)[0].abs() < 1e-14);
}

#[test]
fn infinitesimal_action_and_its_adjoint() {
    let grid = Grid::cubic(3, 6, 1.0).unwrap();
    let point = random_su2_point(&grid, 1, 0.15, 0.5);
    let mut r = rng(2);
    for _ in 0..3 {
        let x = random_automorphism(&grid, 3, &mut r, 2, 1.0);
        let p = random_pair(&grid, 3, &mut r, 2, 1.0);
        let lhs = l2_inner(&inf_action(&x, &point).unwrap(), &p, &point.g, point.algebra()).unwrap();
        let rhs = inf_inner(&x, &inf_action_adjoint(&p, &point).unwrap(), &point.g, point.algebra()).unwrap();
        assert!(rel(lhs, rhs) < 1e-10, "{lhs} vs {rhs}");
    }
}

#[test]
fn complex_identities_at_flat_and_instanton_pairs() {
    let mut r = rng(3);
    let cases = vec![
        flat_point(3, 6, LieAlgebraData::su2()),
        flat_point(4, 4, LieAlgebraData::u1()),
        instanton_point(6),
    ];
    for (point, cfg) in &cases {
        let report = complex_defect(point, cfg, 10, &mut r, 2).unwrap();
        assert!(report.on_shell);
        assert!(report.d_e_after_d_phi <= 1e-9, "{report:?}");
        assert!(report.d_phi_adjoint_after_d_e <= 1e-9, "{report:?}");
        assert!(report.off_shell_absolute <= 1e-12);
    }
}

#[test]
fn off_shell_identity_at_non_critical_pairs() {
    let grid = Grid::cubic(3, 16, 1.0).unwrap();
    for seed in 0..3 {
        let point = random_su2_point(&grid, 100 + seed, 0.01, 0.3);
        for kappa in [Kappa::Plus, Kappa::Minus] {
            let cfg = EymConfig::new(kappa, LieAlgebraData::su2());
            assert!(point.residual(cfg.k()).unwrap().l2_norm(&point.g, point.algebra()).unwrap() > 1e-3);
            let (abs, relative) = off_shell_identity(&point, &cfg).unwrap();
            assert!(relative <= 1e-8, "seed {seed}: {abs} / {relative}");
        }
    }
}

#[test]
fn linearization_is_self_adjoint_at_critical_pairs() {
    let (point, cfg) = instanton_point(6);
    let defect = self_adjoint_defect(&point, &cfg, 10, &mut rng(4), 2).unwrap();
    assert!(defect <= 1e-9, "{defect}");
    let (flat, cfg) = flat_point(3, 6, LieAlgebraData::su2());
    assert!(self_adjoint_defect(&flat, &cfg, 5, &mut rng(5), 2).unwrap() <= 1e-9);
}

#[test]
fn linearization_is_not_self_adjoint_off_shell() {
    let grid = Grid::cubic(3, 8, 1.0).unwrap();
    let point = random_su2_point(&grid, 6, 0.1, 0.6);
    let cfg = EymConfig::new(Kappa::Minus, LieAlgebraData::su2());
    assert!(self_adjoint_defect(&point, &cfg, 3, &mut rng(7), 1).unwrap() > 1e-6);
}

#[test]
fn on_shell_branch_agrees_at_critical_pairs() {
    let mut r = rng(8);
    for (point, cfg) in [instanton_point(4), flat_point(3, 6, LieAlgebraData::su2())] {
        let grid = point.g.grid().clone();
        let p = random_pair(&grid, point.algebra().dim(), &mut r, 2, 1.0);
        let general = lin_residual(&p, &point, &cfg, LinBranch::General).unwrap();
        let on_shell = lin_residual(&p, &point, &cfg, LinBranch::OnShell).unwrap();
        let diff = general.axpy(-1.0, &on_shell).unwrap().max_abs();
        assert!(diff <= 1e-10 * general.max_abs(), "{diff}");
    }
    let (flat2, cfg) = flat_point(2, 4, LieAlgebraData::u1());
    let p = DeformationPair::zeros(flat2.g.grid(), 1);
    assert!(lin_residual(&p, &flat2, &cfg, LinBranch::OnShell).is_err());
}

#[test]
fn deformation_laplacian_is_symmetric_and_nonnegative() {
    let (point, cfg) = instanton_point(4);
    let grid = point.g.grid().clone();
    let mut r = rng(9);
    let p = random_pair(&grid, 1, &mut r, 1, 1.0);
    let q = random_pair(&grid, 1, &mut r, 1, 1.0);
    let lp = laplacian1_apply(&p, &point, &cfg).unwrap();
    let lq = laplacian1_apply(&q, &point, &cfg).unwrap();
    let a = l2_inner(&lp, &q, &point.g, point.algebra()).unwrap();
    let b = l2_inner(&p, &lq, &point.g, point.algebra()).unwrap();
    assert!(rel(a, b) < 1e-10);
    assert!(l2_inner(&lp, &p, &point.g, point.algebra()).unwrap() > 0.0);
}

#[test]
fn iterative_kernel_matches_dense_assembly() {
    let (point, cfg) = flat_point(2, 4, LieAlgebraData::u1());
    let policy = KernelPolicy::default();
    let dense = dense_essential_spectrum(&point, &cfg, policy).unwrap();
    assert_eq!(dense.eigenvalues.len(), 80);
    assert!(!dense.ambiguous);
    let opts = LanczosOptions { block_size: 4, max_dim: 80 };
    let k = dense.kernel_dim + 6;
    let iterative = essential_spectrum(&point, &cfg, k, opts, policy, &mut rng(10)).unwrap();
    assert_eq!(iterative.kernel_dim, dense.kernel_dim);
    let top = dense.eigenvalues.last().unwrap().abs();
    for (a, b) in iterative.eigenvalues.iter().zip(&dense.eigenvalues) {
        assert!((a - b).abs() <= 1e-8 * top.max(b.abs()), "{a} vs {b}");
    }
}

#[test]
fn essential_kernel_of_flat_three_torus() {
    // Constant h and constant a give 6 + 3 dimensions. Every mode whose
    // wavenumbers are 0 or N/2 on each axis has vanishing spectral first
    // derivatives, so the lattice kernel holds 2^3 copies of that space.
    let (point, cfg) = flat_point(3, 4, LieAlgebraData::u1());
    let dense = dense_essential_spectrum(&point, &cfg, KernelPolicy::default()).unwrap();
    assert_eq!(dense.kernel_dim, 72);
    assert!(!dense.ambiguous);
    // A block smaller than the multiplicity sees only part of the kernel.
    let opts = LanczosOptions { block_size: 12, max_dim: 240 };
    let partial = essential_spectrum(&point, &cfg, 14, opts, KernelPolicy::default(), &mut rng(11)).unwrap();
    assert_eq!(partial.kernel_dim, 12);
}

#[test]
fn symmetries_of_flat_and_instanton_pairs() {
    // Constant v and tau on a flat pair, times the 2^n Nyquist patterns.
    let (flat, _) = flat_point(3, 4, LieAlgebraData::u1());
    let opts = LanczosOptions { block_size: 40, max_dim: 256 };
    let report = automorphism_spectrum(&flat, 40, opts, KernelPolicy::default(), &mut rng(12)).unwrap();
    assert_eq!(report.kernel_dim, 32);
    // The flux spoils translations: iota_v F is never exact, so only the
    // constant gauge rotations survive.
    let (inst, _) = instanton_point(4);
    let opts = LanczosOptions { block_size: 20, max_dim: 400 };
    let report = automorphism_spectrum(&inst, 20, opts, KernelPolicy::default(), &mut rng(13)).unwrap();
    assert_eq!(report.kernel_dim, 16, "{:?}", report.eigenvalues);
    assert!(!report.ambiguous);
}

/// Constant traceless h with H F + F H = 0 for F = dx12 - dx34.
fn anticommuting_traceless(coeffs: &[f64; 6]) -> M4 {
    // Basis of symmetric matrices anticommuting with the block rotation J.
    let [a, b, c, e, f, gg] = *coeffs;
    let mut m = mat::ZERO;
    m[0][0] = a;
    m[1][1] = -a;
    m[0][1] = b;
    m[1][0] = b;
    m[2][2] = c;
    m[3][3] = -c;
    m[2][3] = e;
    m[3][2] = e;
    m[0][2] = f;
    m[2][0] = f;
    m[1][3] = f;
    m[3][1] = f;
    m[0][3] = gg;
    m[3][0] = gg;
    m[1][2] = -gg;
    m[2][1] = -gg;
    m
}

#[test]
fn constant_deformations_of_the_instanton_are_essential() {
    let (point, cfg) = instanton_point(4);
    let grid = point.g.grid().clone();
    let mut r = rng(14);
    for _ in 0..5 {
        let coeffs: [f64; 6] = std::array::from_fn(|_| r.gen_range(-1.0..1.0));
        let h = SymTensorField::constant(&grid, &anticommuting_traceless(&coeffs));
        let p = DeformationPair { h, a: FormField::zeros(&grid, 1, 1) };
        let report = essential_system_residual(&p, &point, &cfg).unwrap();
        assert!(report.max() < 1e-12, "{report:?}");
        assert!(lin_residual(&p, &point, &cfg, LinBranch::General).unwrap().max_abs() < 1e-12);
    }
    // A constant h commuting with F is not a solution.
    let mut m = mat::identity(4);
    m[0][0] = 2.0;
    m[1][1] = 2.0;
    let p = DeformationPair { h: traceless_part(&SymTensorField::constant(&grid, &m), &point.g).unwrap(), a: FormField::zeros(&grid, 1, 1) };
    assert!(essential_system_residual(&p, &point, &cfg).unwrap().metric_equation.sup > 1e-3);
}

#[test]
fn trace_identity_on_gauge_directions() {
    let mut r = rng(15);
    for (point, cfg) in [instanton_point(6), flat_point(3, 8, LieAlgebraData::su2())] {
        let grid = point.g.grid().clone();
        let x = random_automorphism(&grid, point.algebra().dim(), &mut r, 2, 1.0);
        let p = inf_action(&x, &point).unwrap();
        assert!(lin_residual(&p, &point, &cfg, LinBranch::General).unwrap().max_abs() < 1e-9);
        let defect = trace_lemma_defect(&p, &point, &cfg).unwrap();
        assert!(defect.max_abs() < 1e-9, "{}", defect.max_abs());
    }
    let (flat2, cfg) = flat_point(2, 4, LieAlgebraData::u1());
    assert!(trace_lemma_defect(&DeformationPair::zeros(flat2.g.grid(), 1), &flat2, &cfg).is_err());
}

#[test]
fn slice_identity_on_projected_deformations() {
    let mut r = rng(16);
    for (point, _) in [instanton_point(6), flat_point(3, 8, LieAlgebraData::su2())] {
        let grid = point.g.grid().clone();
        let p = random_pair(&grid, point.algebra().dim(), &mut r, 2, 1.0);
        let (q, cg) = project_to_slice(&p, &point, 1e-14, 500).unwrap();
        assert!(cg.relative_residual < 1e-12, "{cg:?}");
        let back = inf_action_adjoint(&q, &point).unwrap();
        assert!(back.max_abs() < 1e-9);
        let defect = slice_second_order_defect(&q, &point).unwrap();
        assert!(defect.max_abs() < 1e-9, "{}", defect.max_abs());
        // Away from the slice the identity fails.
        assert!(slice_second_order_defect(&p, &point).unwrap().max_abs() > 1e-2);
    }
}

#[test]
fn obstruction_class_of_exact_forms_vanishes() {
    let grid = Grid::cubic(3, 8, 1.0).unwrap();
    let mut r = rng(17);
    let f = random_scalar(&grid, &mut r, 2, 1.0);
    let flat = MetricField::flat(&grid);
    let u1 = LieAlgebraData::u1();
    let cfg = EymConfig::new(Kappa::Plus, u1.clone());
    let point = EymPoint::new(&flat, &ConnectionField::flat(&grid, &u1)).unwrap();
    let h = hessian(&f, &flat).unwrap();
    let report = obstruction_class(&h, &FormField::zeros(&grid, 1, 1), &point, &cfg).unwrap();
    assert!(report.class_norm <= 1e-10, "{report:?}");

    // Harmonic projection of df on a curved metric.
    let g = random_metric(&grid, &mut r, 1, 0.1).unwrap();
    let df = d(&FormField::from_scalar(&f)).unwrap();
    let (_, norm, solver) = harmonic_class(&df, &g, 1e-13, 500).unwrap();
    assert!(norm <= 1e-10 && solver <= 1e-12, "{norm} {solver}");
    let dx = FormField::constant(&grid, 1, 1, &[(&[1], 0, 1.0)]).axpy(1.0, &df).unwrap();
    let (class, _, _) = harmonic_class(&dx, &g, 1e-13, 500).unwrap();
    assert!((class[1] - 1.0).abs() < 1e-10 && class[0].abs() < 1e-10);
}

#[test]
fn constant_contraction_has_nonzero_class() {
    let (point, cfg) = instanton_point(4);
    let grid = point.g.grid().clone();
    let a = FormField::constant(&grid, 1, 1, &[(&[0], 0, 1.0)]);
    let report = obstruction_class(&SymTensorField::zeros(&grid), &a, &point, &cfg).unwrap();
    // a -| F = F(e1, .) = dx2, entering with a minus sign.
    assert!((report.class[1] + 1.0).abs() < 1e-12, "{:?}", report.class);
    assert!(report.class_norm > 0.9);
    assert!(obstruction_class(&SymTensorField::zeros(&grid), &a, &flat_point(2, 4, LieAlgebraData::u1()).0, &cfg).is_err());
}

#[test]
fn conformal_operator_examples() {
    assert_eq!(conformal_coefficient(4, 1.0).unwrap(), 0.0);
    let (point, cfg) = instanton_point(4);
    let f = random_scalar(point.g.grid(), &mut rng(18), 1, 1.0);
    let lap = eymlab::riemann::laplacian(&f, &point.g).unwrap();
    assert!(conformal_operator(&f, &point, &cfg).unwrap().axpy(-1.0, &lap).unwrap().max_abs() < 1e-12);

    let grid = Grid::cubic(3, 4, 1.0).unwrap();
    let u1 = LieAlgebraData::u1();
    let conn = ConnectionField::with_flux(&grid, &u1, &[(&[0, 1], 0, 1.0)]).unwrap();
    let point = EymPoint::new(&MetricField::flat(&grid), &conn).unwrap();
    let cfg = EymConfig::new(Kappa::Minus, u1);
    let c = conformal_coefficient(3, -1.0).unwrap();
    let one = ScalarField::constant(&grid, 1.0);
    let out = conformal_operator(&one, &point, &cfg).unwrap();
    // |F|^2 = 1 for dx1 ^ dx2.
    assert!((out.values()[0] - c).abs() < 1e-14);
    let opts = LanczosOptions { block_size: 4, max_dim: 64 };
    let spec = conformal_spectrum(&point, &cfg, 3, opts, KernelPolicy::default(), &mut rng(19)).unwrap();
    assert!((spec.eigenvalues[0] - c).abs() < 1e-10);
    assert_eq!(spec.kernel_dim, 0);
}


#[test]
fn symbol_sequence_is_exact_in_dimensions_three_and_four() {
    let mut r = rng(20);
    for n in 3..=4 {
        for d in [1, 3] {
            for _ in 0..100 {
                let g = random_spd(n, &mut r);
                let xi: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
                let kappa = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                let report = symbol_check(&g, n, &xi, d, kappa).unwrap();
                assert!(report.exact(), "{report:?}");
                assert_eq!(report.rank_d_phi, n + d);
            }
        }
    }
}

#[test]
fn surface_symbol_fails_because_the_einstein_block_vanishes() {
    let report = symbol_check(&mat::identity(2), 2, &[1.0, 0.3], 1, 1.0).unwrap();
    assert!(!report.exact());
    // sigma(dE) only sees the gauge block: rank n*d - d.
    assert_eq!(report.rank_d_e, 1);
    assert!(symbol_check(&mat::identity(3), 3, &[0.0, 0.0, 0.0], 1, 1.0).is_err());
}

#[test]
fn pure_gauge_conditions_for_constant_potentials() {
    let (point, _) = instanton_point(4);
    let grid = point.g.grid().clone();
    let a = FormField::constant(&grid, 1, 1, &[(&[2], 0, 0.5)]);
    let report = pure_gauge_deformation_check(&a, &point).unwrap();
    assert!(report.yang_mills.max() < 1e-13);
    assert!(report.gauge_slice.max() < 1e-13);
    assert!(report.stress.max() < 1e-13);
    assert!((report.metric_slice.sup - 0.5).abs() < 1e-13);
}
