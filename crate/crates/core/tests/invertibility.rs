use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segkernel::grid::{Grid, PairGridFunction};
use segkernel::invertibility::{
    certified_lower_eigenvalue, constrained_inv_constant_exact, estimate_norm, exact_norm, exact_norm_with_bound,
    inv_constant_estimate, inv_constant_exact, smallest_eigenvalue,
};
use segkernel::norms::{kernel_basis, NormContext, OrthMode, Projector};
use segkernel::operator::{assemble, DiscreteOperator};
use segkernel::profile::{solve_profile, ProfileTable};
use segkernel::Error;
use std::sync::OnceLock;

fn profile() -> &'static ProfileTable {
    static P: OnceLock<ProfileTable> = OnceLock::new();
    P.get_or_init(|| solve_profile(12.0, 4801, 1e-10).unwrap())
}

fn ctx(theta: f64) -> NormContext {
    NormContext::new(theta).unwrap()
}

fn dense(op: &DiscreteOperator) -> DMatrix<f64> {
    let m = op.dim();
    DMatrix::from_fn(m, m, |i, j| op.band().get(i, j))
}

/// `max_i Σ_j |M_ij| / cosh(θ x_j)` for a dense `M`.
fn weighted_row_sum_max(m: &DMatrix<f64>, grid: Grid, c: NormContext) -> f64 {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| m[(i, j)].abs() * c.inverse_weight(grid.x(j / 2 + 1)))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

fn oracle_op() -> DiscreteOperator {
    assemble(profile(), 0.5, Grid::new(10.0, 201).unwrap()).unwrap()
}

#[test]
fn exact_constant_matches_dense_inverse() {
    let op = oracle_op();
    let c = ctx(0.5);
    let inv = dense(&op).try_inverse().unwrap();
    let expected = weighted_row_sum_max(&inv, *op.grid(), c);
    let k = inv_constant_exact(&op, c).unwrap();
    assert!((k - expected).abs() / expected < 1e-10, "{k} vs {expected}");
}

#[test]
fn smallest_eigenvalue_matches_dense_eigensolver() {
    let op = oracle_op();
    let eig = SymmetricEigen::new(dense(&op));
    let expected = eig.eigenvalues.min();
    let got = smallest_eigenvalue(&op, 1e-13).unwrap();
    assert!((got.value - expected).abs() / expected < 1e-8);
    assert!(got.certified_lower < expected && got.certified_lower > 0.0);
    assert!(certified_lower_eigenvalue(&op).unwrap() < expected);
}

#[test]
fn constrained_constant_matches_dense_composition() {
    let op = oracle_op();
    let grid = *op.grid();
    let c = ctx(0.5);
    let inv = dense(&op).try_inverse().unwrap();
    let basis = kernel_basis(profile(), grid);
    for mode in [OrthMode::One, OrthMode::Two] {
        let p = Projector::for_mode(&basis, mode, c).unwrap().unwrap();
        let m = op.dim();
        let mut proj = DMatrix::zeros(m, m);
        for col in 0..m {
            let mut e = vec![0.0; m];
            e[col] = 1.0;
            p.project_interior(&mut e);
            proj.set_column(col, &nalgebra::DVector::from_vec(e));
        }
        let expected = weighted_row_sum_max(&(&inv * proj), grid, c);
        let k = constrained_inv_constant_exact(&op, c, &p).unwrap();
        assert!((k - expected).abs() / expected < 1e-10, "{mode:?}: {k} vs {expected}");
        if mode == OrthMode::One {
            assert!(k <= inv_constant_exact(&op, c).unwrap());
        }
    }
}

#[test]
fn truncated_columns_do_not_change_the_constant() {
    let op = assemble(profile(), 0.2, Grid::new(150.0, 6001).unwrap()).unwrap();
    let c = ctx(0.5);
    let truncated = exact_norm(&op, c, None).unwrap();
    assert!(truncated.columns < op.dim());
    let full = exact_norm_with_bound(&op, c, None, 0.0).unwrap();
    assert_eq!(full.columns, op.dim());
    assert_eq!(full.tail_bound, 0.0);
    assert!((truncated.value - full.value).abs() <= truncated.tail_bound + 1e-13 * full.value);
}

#[test]
fn estimator_is_a_lower_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let big_r = rng.gen_range(5.0..20.0);
        let n = 2 * rng.gen_range(40..200) + 1;
        let omega = rng.gen_range(0.05..1.0);
        let theta = rng.gen_range(0.2..0.9);
        let op = assemble(profile(), omega, Grid::new(big_r, n).unwrap()).unwrap();
        let exact = inv_constant_exact(&op, ctx(theta)).unwrap();
        let est = inv_constant_estimate(&op, ctx(theta), 10).unwrap();
        assert!(est <= exact * (1.0 + 1e-12), "{est} > {exact}");
    }
}

#[test]
fn estimator_quality_and_restarts() {
    let op = oracle_op();
    let c = ctx(0.5);
    let exact = inv_constant_exact(&op, c).unwrap();
    let five = estimate_norm(&op, c, None, 10, 5, 42).unwrap();
    let one = estimate_norm(&op, c, None, 10, 1, 42).unwrap();
    assert!(five >= 0.5 * exact);
    assert!(five >= one);

    let basis = kernel_basis(profile(), *op.grid());
    let p = Projector::for_mode(&basis, OrthMode::One, c).unwrap().unwrap();
    let constrained = constrained_inv_constant_exact(&op, c, &p).unwrap();
    let est = estimate_norm(&op, c, Some(&p), 10, 5, 42).unwrap();
    assert!(est <= constrained * (1.0 + 1e-12) && est >= 0.5 * constrained);
}

#[test]
fn spectrum_shifts_by_omega_squared() {
    let grid = Grid::new(40.0, 3201).unwrap();
    let l0 = smallest_eigenvalue(&assemble(profile(), 0.0, grid).unwrap(), 1e-14).unwrap().value;
    let l3 = smallest_eigenvalue(&assemble(profile(), 0.3, grid).unwrap(), 1e-14).unwrap().value;
    assert!((l3 - l0 - 0.09).abs() < 1e-12, "{}", l3 - l0 - 0.09);
}

#[test]
fn spectrum_lies_above_omega_squared() {
    let grid = Grid::with_default_density(60.0).unwrap();
    let op = assemble(profile(), 0.3, grid).unwrap();
    let l = smallest_eigenvalue(&op, 1e-12).unwrap().value;
    assert!(l >= 0.09 - 1e-4);
}

#[test]
fn budget_guard() {
    let op = assemble(profile(), 0.5, Grid::new(10.0, 100_003).unwrap()).unwrap();
    assert!(matches!(
        inv_constant_exact(&op, ctx(0.5)),
        Err(Error::BudgetExceeded { unknowns: 200_002, .. })
    ));
}

#[test]
fn exact_constant_bounds_every_solution() {
    let op = oracle_op();
    let c = ctx(0.5);
    let k = inv_constant_exact(&op, c).unwrap();
    let grid = *op.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let g = PairGridFunction::sample(grid, |_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let phi = op.solve(&g).unwrap();
        let gn = segkernel::norms::weighted_sup_norm(&g, c);
        assert!(segkernel::norms::unweighted_sup_norm(&phi) <= k * gn * (1.0 + 1e-12));
    }
}
