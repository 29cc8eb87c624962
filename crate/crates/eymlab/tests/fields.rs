//! Hodge star, contractions and products of tensor fields on flat grids.

use eymlab::algebra::LieAlgebraData;
use eymlab::fields::mat::{identity, M4};
use eymlab::fields::{
    circ_gc, circ_h, hodge_star, lrcorner_alg, lrcorner_c, norm_sq_pointwise, op_gh, sym_circ, trace_g,
    traceless_part, FormField, MetricField, SymTensorField,
};
use eymlab::lattice::{Grid, ScalarField};

const TOL: f64 = 1e-13;

fn flat(n: usize) -> (Grid, MetricField) {
    let grid = Grid::cubic(n, 4, 1.0).unwrap();
    let g = MetricField::flat(&grid);
    (grid, g)
}

fn diag(n: usize, entries: &[f64]) -> M4 {
    let mut m = identity(n);
    for (i, v) in entries.iter().enumerate() {
        m[i][i] = *v;
    }
    m
}

fn assert_sym_eq(t: &SymTensorField, expected: &M4) {
    let n = t.dim();
    for site in 0..t.grid().num_sites() {
        let m = t.at(site);
        for i in 0..n {
            for j in 0..n {
                assert!((m[i][j] - expected[i][j]).abs() <= TOL, "site {site} ({i},{j}): {} vs {}", m[i][j], expected[i][j]);
            }
        }
    }
}

fn assert_form_eq(a: &FormField, b: &FormField) {
    assert!(a.axpy(-1.0, b).unwrap().max_abs() <= TOL);
}

#[test]
fn hodge_star_on_basis_forms() {
    let (grid, g) = flat(3);
    let one = FormField::from_scalar(&ScalarField::constant(&grid, 1.0));
    let vol = FormField::constant(&grid, 3, 1, &[(&[0, 1, 2], 0, 1.0)]);
    assert_form_eq(&hodge_star(&g, &one).unwrap(), &vol);
    assert_form_eq(&hodge_star(&g, &vol).unwrap(), &one);

    let dx1 = FormField::constant(&grid, 1, 1, &[(&[0], 0, 1.0)]);
    let dx23 = FormField::constant(&grid, 2, 1, &[(&[1, 2], 0, 1.0)]);
    assert_form_eq(&hodge_star(&g, &dx1).unwrap(), &dx23);

    let (grid4, g4) = flat(4);
    let f = FormField::constant(&grid4, 2, 1, &[(&[0, 1], 0, 1.0)]);
    let expected = FormField::constant(&grid4, 2, 1, &[(&[2, 3], 0, 1.0)]);
    assert_form_eq(&hodge_star(&g4, &f).unwrap(), &expected);
}

#[test]
fn hodge_star_sees_a_scaled_metric() {
    let grid = Grid::cubic(2, 4, 1.0).unwrap();
    let g = MetricField::from_fn(&grid, |_| diag(2, &[4.0, 4.0])).unwrap();
    let one = FormField::from_scalar(&ScalarField::constant(&grid, 1.0));
    // The volume form is sqrt(det g) dx1 ^ dx2.
    let expected = FormField::constant(&grid, 2, 1, &[(&[0, 1], 0, 4.0)]);
    assert_form_eq(&hodge_star(&g, &one).unwrap(), &expected);
}

#[test]
fn circ_of_a_simple_two_form() {
    let (grid, g) = flat(4);
    let f = FormField::constant(&grid, 2, 1, &[(&[0, 1], 0, 1.0)]);
    assert_sym_eq(&circ_gc(&f, &f, &g, None).unwrap(), &diag(4, &[1.0, 1.0, 0.0, 0.0]));
    let norm = norm_sq_pointwise(&f, &g, None).unwrap();
    assert!(norm.values().iter().all(|v| (v - 1.0).abs() <= TOL));
}

#[test]
fn circ_of_an_anti_self_dual_form_is_pure_trace() {
    let (grid, g) = flat(4);
    let f = FormField::constant(&grid, 2, 1, &[(&[0, 1], 0, 1.0), (&[2, 3], 0, -1.0)]);
    let norm = norm_sq_pointwise(&f, &g, None).unwrap();
    let half = 0.5 * norm.values()[0];
    assert!((half - 1.0).abs() <= TOL);
    assert_sym_eq(&circ_gc(&f, &f, &g, None).unwrap(), &diag(4, &[half; 4]));
}

#[test]
fn circ_h_reduces_to_circ_gc_at_the_metric() {
    let (grid, g) = flat(3);
    let su2 = LieAlgebraData::su2();
    let f = FormField::constant(&grid, 2, 3, &[(&[0, 1], 0, 1.0), (&[1, 2], 2, -0.5), (&[0, 2], 1, 2.0)]);
    let with_g = circ_h(&f, &f, g.tensor(), &g, Some(&su2)).unwrap();
    let plain = circ_gc(&f, &f, &g, Some(&su2)).unwrap();
    assert!(with_g.axpy(-1.0, &plain).unwrap().max_abs() <= TOL);
    let zero = circ_h(&f, &f, &SymTensorField::zeros(&grid), &g, Some(&su2)).unwrap();
    assert_eq!(zero.max_abs(), 0.0);
}

#[test]
fn circ_h_with_a_rank_one_direction() {
    let (grid, g) = flat(2);
    let f = FormField::constant(&grid, 2, 1, &[(&[0, 1], 0, 1.0)]);
    let h = SymTensorField::constant(&grid, &diag(2, &[1.0, 0.0]));
    assert_sym_eq(&circ_h(&f, &f, &h, &g, None).unwrap(), &diag(2, &[0.0, 1.0]));
}

#[test]
fn contraction_with_the_pairing() {
    let (grid, g) = flat(3);
    let u1 = LieAlgebraData::u1();
    let a = FormField::constant(&grid, 1, 1, &[(&[0], 0, 1.0)]);
    let f = FormField::constant(&grid, 2, 1, &[(&[0, 1], 0, 1.0)]);
    let expected = FormField::constant(&grid, 1, 1, &[(&[1], 0, 1.0)]);
    assert_form_eq(&lrcorner_c(&a, &f, &g, &u1).unwrap(), &expected);

    // Bilinear in both slots.
    let b = FormField::constant(&grid, 1, 1, &[(&[1], 0, 2.0), (&[2], 0, -1.0)]);
    let k = FormField::constant(&grid, 2, 1, &[(&[1, 2], 0, 3.0)]);
    let lhs = lrcorner_c(&a.axpy(2.0, &b).unwrap(), &f.axpy(-1.0, &k).unwrap(), &g, &u1).unwrap();
    let rhs = lrcorner_c(&a, &f, &g, &u1)
        .unwrap()
        .axpy(-1.0, &lrcorner_c(&a, &k, &g, &u1).unwrap())
        .unwrap()
        .axpy(2.0, &lrcorner_c(&b, &f, &g, &u1).unwrap())
        .unwrap()
        .axpy(-2.0, &lrcorner_c(&b, &k, &g, &u1).unwrap())
        .unwrap();
    assert_form_eq(&lhs, &rhs);
}

#[test]
fn contraction_with_the_bracket() {
    let (grid, g) = flat(3);
    let u1 = LieAlgebraData::u1();
    let a = FormField::constant(&grid, 1, 1, &[(&[0], 0, 1.0)]);
    let f = FormField::constant(&grid, 2, 1, &[(&[0, 1], 0, 1.0)]);
    assert_eq!(lrcorner_alg(&a, &f, &g, &u1).unwrap().max_abs(), 0.0);

    let su2 = LieAlgebraData::su2();
    let a = FormField::constant(&grid, 1, 3, &[(&[0], 0, 1.0)]);
    let f = FormField::constant(&grid, 2, 3, &[(&[0, 1], 1, 1.0)]);
    let expected = FormField::constant(&grid, 1, 3, &[(&[1], 2, 1.0)]);
    assert_form_eq(&lrcorner_alg(&a, &f, &g, &su2).unwrap(), &expected);
}

#[test]
fn derivation_extension_of_h() {
    let (grid, g) = flat(3);
    let omega = FormField::constant(&grid, 1, 1, &[(&[0], 0, 1.5), (&[2], 0, -2.0)]);
    assert_eq!(op_gh(&omega, &SymTensorField::zeros(&grid), &g).unwrap().max_abs(), 0.0);
    assert_form_eq(&op_gh(&omega, g.tensor(), &g).unwrap(), &omega.scale(-1.0));

    let h = SymTensorField::constant(&grid, &diag(3, &[1.0, 0.0, 0.0]));
    let dx1 = FormField::constant(&grid, 1, 1, &[(&[0], 0, 1.0)]);
    let dx2 = FormField::constant(&grid, 1, 1, &[(&[1], 0, 1.0)]);
    assert_form_eq(&op_gh(&dx1, &h, &g).unwrap(), &dx1.scale(-1.0));
    assert_eq!(op_gh(&dx2, &h, &g).unwrap().max_abs(), 0.0);

    // On a 2-form, h = g acts as -degree.
    let f = FormField::constant(&grid, 2, 1, &[(&[0, 1], 0, 1.0), (&[1, 2], 0, 0.5)]);
    assert_form_eq(&op_gh(&f, g.tensor(), &g).unwrap(), &f.scale(-2.0));
}

#[test]
fn symmetric_circle_product() {
    let (grid, g) = flat(3);
    let id = SymTensorField::constant(&grid, &identity(3));
    assert_sym_eq(&sym_circ(&id, &id, &g).unwrap(), &identity(3));
    let h = SymTensorField::constant(&grid, &diag(3, &[2.0, 0.0, -1.0]));
    assert_sym_eq(&sym_circ(&h, &h, &g).unwrap(), &diag(3, &[4.0, 0.0, 1.0]));
    assert_sym_eq(&sym_circ(&h, &id, &g).unwrap(), &diag(3, &[2.0, 0.0, -1.0]));
}

#[test]
fn trace_and_traceless_part() {
    let (grid, g) = flat(3);
    let id = SymTensorField::constant(&grid, &identity(3));
    assert!(trace_g(&id, &g).unwrap().values().iter().all(|v| (v - 3.0).abs() <= TOL));
    assert!(traceless_part(&id, &g).unwrap().max_abs() <= TOL);

    let h = SymTensorField::constant(&grid, &diag(3, &[1.0, 0.0, 0.0]));
    let t = traceless_part(&h, &g).unwrap();
    assert_sym_eq(&t, &diag(3, &[2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0]));
    assert!(trace_g(&t, &g).unwrap().max_abs() <= TOL);

    // The trace uses the inverse metric.
    let g2 = MetricField::from_fn(&grid, |_| diag(3, &[2.0, 2.0, 2.0])).unwrap();
    assert!(trace_g(&id, &g2).unwrap().values().iter().all(|v| (v - 1.5).abs() <= TOL));
}
