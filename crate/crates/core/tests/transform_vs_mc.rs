use bns_core::analytic::bns_european_put;
use bns_core::dynamics::{BnsModel, ModelParams};
use bns_core::kernel::{JumpMeasure, LevyKernel};
use bns_core::mc::{self, McSettings};
use bns_core::payoff::Payoff;

fn check(kernel: LevyKernel, strike: f64, seed: u64) {
    let m = BnsModel::new(ModelParams::new(1.0, -0.5, 0.03, 1.0).unwrap(), JumpMeasure::untilted(kernel)).unwrap();
    let put = Payoff::put(strike).unwrap();
    let want = bns_european_put(&m, 0.0, 0.04, strike).unwrap();
    let e = mc::price_european(&m, &put, 0.0, 0.04, &McSettings { n_paths: 200_000, seed, control_variate: true }).unwrap();
    let z = (e.value - want).abs() / e.std_error;
    assert!(z < 3.0, "transform {want}, MC {} ± {} ({z:.2} s.e.)", e.value, e.std_error);
}

#[test]
fn gamma_ou_put_transform_matches_mc() {
    check(LevyKernel::gamma_ou(1.0, 20.0).unwrap(), 1.0, 3);
}

#[test]
fn inverse_gaussian_put_transform_matches_mc() {
    check(LevyKernel::inverse_gaussian_ou(1.0, 6.0).unwrap(), 1.1, 4);
}

#[test]
fn transform_rejects_zero_variance() {
    let m = BnsModel::new(
        ModelParams::new(1.0, -0.5, 0.03, 1.0).unwrap(),
        JumpMeasure::untilted(LevyKernel::gamma_ou(1.0, 20.0).unwrap()),
    )
    .unwrap();
    assert!(bns_european_put(&m, 0.0, 0.0, 1.0).is_err());
}
