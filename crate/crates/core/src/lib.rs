//! Adaptive state observer for linear time-varying SISO plants
//!
//! ```text
//! x' = A(t)x + k C(t)ᵀx + b u,   y = C(t)ᵀx
//! ```
//!
//! with known `A(t)`, `C(t)` and unknown constant vectors `k`, `b`. A cascade
//! of linear filters driven by `y` and `u` reduces state estimation to the
//! scalar regression `z = ΨΘ` with `Θ = [e(0); k; b]`, which is identified
//! online by least squares with forgetting factor (or a gradient law). The
//! state estimate is then reconstructed from the filter states and `Θ̂`.
//!
//! Module map:
//!
//! * [`timefunc`]: parsed time functions for matrix entries
//! * [`numerics`]: dense matrices, Jacobi eigen routines, RK4
//! * [`plant`]: the true system
//! * [`gpebo`]: filter cascade and regression assembly
//! * [`estimators`]: LS with forgetting factor, gradient, excitation scan
//! * [`observer`]: state reconstruction, error metrics, stability monitors
//! * [`sim`]: joint simulation driver
//! * [`scenario`]: JSON scenario files
//! * [`study`]: end-to-end scenario runs and excitation checks

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimators;
pub mod gpebo;
pub mod numerics;
pub mod observer;
pub mod plant;
pub mod scenario;
pub mod sim;
pub mod study;
pub mod timefunc;

pub use estimators::{
    excitation_scan, gradient_rhs, lsff_rhs, Estimator, EstimatorError, EstimatorState, ExcitationReport,
    GradientConfig, GradientEstimator, LsFfConfig, LsFfEstimator,
};
pub use gpebo::{
    a0_at, assemble_regression, filter_rhs, fundamental_matrix_checks, FilterState, ObserverConfig, RegressionSample,
    ThetaVector,
};
pub use numerics::{eig2_real_parts, rk4_step, Mat, NumericsError, OdeSystem, Rk4};
pub use observer::{
    assumption_monitors, error_metrics, reconstruct_state, AssumptionReport, EstimateLog, MetricsSummary,
    MonitorBounds, RunSummary,
};
pub use plant::{simulate_plant, PlantError, PlantSpec, TrajectoryLog};
pub use scenario::{paper_example, Scenario, ScenarioError, ScenarioFile};
pub use sim::{run_joint, EstimatorChoice, JointRun, SimConfig, SimError};
pub use study::{check_excitation, execute, Outcome, StudyError};
pub use timefunc::{parse_expr, ParseError, Term, TimeExpr};
