//! Fixtures shared by the benchmarks.

use gpebo_core::{paper_example, RegressionSample, Scenario};

/// The bundled study truncated to `t_final` seconds.
pub fn example_scenario(t_final: f64) -> Scenario {
    let mut sc = paper_example();
    sc.sim.t_final = t_final;
    sc
}

/// Regressor samples of the bundled study over `[0, t_final]`.
pub fn example_regression(t_final: f64) -> Vec<RegressionSample> {
    let sc = example_scenario(t_final);
    gpebo_core::run_joint(&sc.plant, &sc.observer, &gpebo_core::EstimatorChoice::None, &sc.sim)
        .expect("example filters run")
        .regression
}
