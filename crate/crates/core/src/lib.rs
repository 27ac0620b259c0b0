//! Scheduling flexible jobs to smooth aggregate capacity.
//!
//! Jobs arrive with a demand and a deadline. A policy picks a service rate for
//! each active job, and the aggregate rate P(t) is the capacity that must be
//! provisioned. The crate covers arrival models, decentralized and centralized
//! policies, a discrete-time simulator, offline and receding-horizon QP
//! solvers, the fluid max-stability construction, and closed-form stationary
//! analysis.

// `!(x > 0.0)` guards are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod fluid;
pub mod model;
pub mod policies;
pub mod qp;
pub mod rng;

pub use engine::{simulate, simulate_detailed, summarize, CapacityTrace, Metrics, SimOptions, SimRun};
pub use error::{Error, Result};
pub use model::{ArrivalModel, JobRequest, JobSet, JobState, MarkSampler};
pub use policies::{DeadlineAction, Mode, PolicyConfig};
pub use qp::{Method, QpOptions, RateMatrix, SolveReport};
