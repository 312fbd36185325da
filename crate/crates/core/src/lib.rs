//! Hybrid quantum/classical forecasting of chaotic time series.
//!
//! The crate is layered bottom-up:
//!
//! * [`qsim`]: dense statevector simulation of parameterized gate programs.
//! * [`qgrad`]: adjoint and parameter-shift gradients of Pauli-Z readouts.
//! * [`mlcore`]: differentiable classical blocks, MSE loss and Adam.
//! * [`qmodels`] / [`cmodels`]: the five variational quantum forecasters and
//!   the three classical baselines, all behind [`model::Forecaster`].
//! * [`chaosdata`] / [`chaostats`]: chaotic generators, scaling, windowing and
//!   dataset characterization (mean period, Lyapunov time).
//! * [`trainer`]: training loop, convergence test, seed replication and
//!   hyperparameter / ansatz search.

pub mod chaosdata;
pub mod chaostats;
pub mod cmodels;
pub mod error;
pub mod mlcore;
pub mod model;
pub mod qgrad;
pub mod qmodels;
pub mod qsim;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{build_model, Forecaster, ParamCounts};
pub use qmodels::{AnsatzDescriptor, Hyperparams, ModelKind, ModelSpec};
