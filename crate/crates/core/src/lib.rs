//! Supervisory multi-observer for joint parameter and state estimation.
//!
//! A bank of observers, one per sampled parameter value, runs alongside the
//! plant. Exponentially weighted output-error monitors pick the observer
//! whose parameter and state serve as estimates. In dynamic mode the
//! parameter box is periodically re-centred on the current estimate and
//! shrunk.

pub mod gain_design;
pub mod harness;
pub mod input;
pub mod linalg;
pub mod models;
pub mod observers;
pub mod odesim;
pub mod pe;
pub mod sampling;
pub mod supervisor;

pub use linalg::Mat;
pub use models::{JansenRitParams, LinearPlant, LurePlant, Plant};
pub use sampling::{grid_sample, ParamBox, SampledParamSet};
pub use supervisor::{run_dynamic, run_static, RunSetup, SupervisorTrace};
