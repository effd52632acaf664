//! Executable models and their integrators.

pub mod linear;
pub mod models;
pub mod noise;
pub mod simulate;

pub use linear::{
    tf_feedback, tf_feedback_with, tf_series, tf_to_state_space, Polynomial, StateSpaceModel,
    TransferFunction, C64,
};
pub use models::{
    box_system, grazing_drift, msd_closed_loop, BoxSystem, Equilibrium, GrazingParams, MsdParams,
};
pub use noise::NormalStream;
pub use simulate::{
    grazing_scenario, integrate_deterministic, integrate_linear, msd_scenario, run_batch,
    simulate_sde, Scheme, SdeScenario, Trajectory, VectorField,
};
