use bns_core::analytic::bns_european_put;
use bns_core::dynamics::{BnsModel, ModelParams};
use bns_core::kernel::{JumpMeasure, LevyKernel};
use bns_core::payoff::Payoff;
use bns_core::solver::{self, ExerciseMode, Grid, SolverOptions, VInterp};
use proptest::prelude::*;

fn model(r: f64, rho: f64) -> BnsModel {
    BnsModel::new(ModelParams::new(1.0, rho, r, 1.0).unwrap(), JumpMeasure::untilted(LevyKernel::gamma_ou(1.0, 20.0).unwrap()))
        .unwrap()
}

fn small_grid() -> Grid {
    Grid::uniform(-1.0, 1.0, 41, 0.0, 0.6, 21, 20, 1.0).unwrap()
}

fn european() -> SolverOptions {
    SolverOptions { mode: ExerciseMode::European, ..SolverOptions::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn american_put_is_ordered(strike in 0.8f64..1.2, r in 0.0f64..0.08, rho in -1.0f64..0.0) {
        let m = model(r, rho);
        let put = Payoff::put(strike).unwrap();
        let g = small_grid();
        let am = solver::solve(&g, &m, &put, &SolverOptions::default()).unwrap();
        let eu = solver::solve(&g, &m, &put, &european()).unwrap();
        for j in 0..g.n_v() {
            for i in 0..g.n_x() {
                let u = am.value(0, i, j);
                prop_assert!(u >= put.evaluate(g.x()[i]) - 1e-6);
                // u = h at v = 0 pulls the American below the European in a
                // layer of a few cells above the edge.
                if g.v()[j] >= 0.3 {
                    prop_assert!(u >= eu.value(0, i, j) - 1e-6);
                }
                prop_assert!(u <= strike + 1e-9);
                if i + 1 < g.n_x() {
                    // Puts are nonincreasing in the log-price.
                    prop_assert!(am.value(0, i + 1, j) <= u + 1e-6);
                }
            }
        }
    }

    #[test]
    fn raising_boundary_data_raises_the_surface(shift in 0.001f64..0.05) {
        let m = model(0.03, -0.5);
        let put = Payoff::put(1.0).unwrap();
        let g = small_grid();
        let base = solver::solve(&g, &m, &put, &SolverOptions::default()).unwrap();
        let up = solver::solve(&g, &m, &put, &SolverOptions { boundary_shift: shift, ..SolverOptions::default() }).unwrap();
        for n in 0..=g.n_t() {
            let cap = shift * (0.03 * (1.0 - g.time(n))).exp() + 1e-6;
            for (a, b) in up.level(n).iter().zip(base.level(n)) {
                prop_assert!(a - b >= -1e-6 && a - b <= cap);
            }
        }
    }
}

#[test]
fn edge_layer_shrinks_under_refinement() {
    let m = model(0.0, -0.5);
    let put = Payoff::put(1.0).unwrap();
    let gap = |n_v: usize| {
        let g = Grid::uniform(-1.0, 1.0, 41, 0.0, 0.6, n_v, 20, 1.0).unwrap();
        let am = solver::solve(&g, &m, &put, &SolverOptions::default()).unwrap();
        let eu = solver::solve(&g, &m, &put, &european()).unwrap();
        eu.price(0.0, 0.06).unwrap() - am.price(0.0, 0.06).unwrap()
    };
    let (coarse, fine, finer) = (gap(21), gap(41), gap(81));
    assert!(finer < fine && fine < coarse, "{coarse} {fine} {finer}");
}

#[test]
fn higher_rate_lowers_the_european_put() {
    let put = Payoff::put(1.0).unwrap();
    let g = small_grid();
    let lo = solver::solve(&g, &model(0.01, -0.5), &put, &european()).unwrap().price(0.0, 0.06).unwrap();
    let hi = solver::solve(&g, &model(0.08, -0.5), &put, &european()).unwrap().price(0.0, 0.06).unwrap();
    assert!(hi < lo, "{hi} vs {lo}");
}

#[test]
fn european_surface_approaches_the_transform_price() {
    let m = model(0.03, -0.5);
    let put = Payoff::put(1.0).unwrap();
    let want = bns_european_put(&m, 0.0, 0.04, 1.0).unwrap();
    let coarse = Grid::geometric_v(-1.0, 1.0, 101, 0.0, 0.6, 51, 1.0609, 100, 1.0).unwrap();
    let fine = Grid::geometric_v(-1.0, 1.0, 201, 0.0, 0.6, 101, 1.03, 200, 1.0).unwrap();
    let ec = (solver::solve(&coarse, &m, &put, &european()).unwrap().price(0.0, 0.04).unwrap() - want).abs();
    let ef = (solver::solve(&fine, &m, &put, &european()).unwrap().price(0.0, 0.04).unwrap() - want).abs();
    assert!(ef < ec, "{ef} vs {ec}");
    assert!(ef / want < 5e-3, "relative error {}", ef / want);
}

#[test]
fn cubic_transport_agrees_with_linear_to_grid_accuracy() {
    let m = model(0.03, -0.5);
    let put = Payoff::put(1.0).unwrap();
    let g = Grid::geometric_v(-1.0, 1.0, 101, 0.0, 0.6, 51, 1.0609, 100, 1.0).unwrap();
    let lin = solver::solve(&g, &m, &put, &SolverOptions::default()).unwrap().price(0.0, 0.04).unwrap();
    let opts = SolverOptions { v_interp: VInterp::Cubic, ..SolverOptions::default() };
    let cub = solver::solve(&g, &m, &put, &opts).unwrap().price(0.0, 0.04).unwrap();
    assert!((lin - cub).abs() < 2e-3, "{lin} vs {cub}");
}

#[test]
fn localized_solve_needs_a_positive_edge() {
    let m = model(0.03, -0.5);
    let put = Payoff::put(1.0).unwrap();
    assert!(solver::solve_localized(&small_grid(), &m, &put, &SolverOptions::default()).is_err());
}
