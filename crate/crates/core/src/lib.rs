//! Online scheduling of deadline-constrained, partially completable jobs over
//! time-varying convex rate regions.
//!
//! The crate provides the deadline-oblivious primal-dual scheduler ([`online`]),
//! its lightweight linearized variant, the long-term fair frame scheduler and
//! non-causal frame benchmark ([`stochastic`]), the prescient offline optimum
//! ([`offline`]), comparison baselines ([`baselines`]), workload generators
//! ([`workload`]) and an experiment harness ([`harness`]).
//!
//! Users are indexed from zero throughout.

pub mod baselines;
pub mod error;
pub mod format;
pub mod harness;
pub mod invariants;
pub mod numerics;
pub mod offline;
pub mod online;
pub mod region;
pub mod sim;
pub mod solver;
pub mod stochastic;
pub mod workload;

pub use error::{Error, Result};
pub use numerics::{DriftPenaltyUtility, NumericsError, PowerUtility, Utility};
pub use online::{competitive_constant, competitive_bound, JobHandle, SchedulerState, SlotDecision};
pub use region::{RateRegion, UserRateAllocation};
pub use workload::{FrameConfig, Instance, Job, JobClass, ScenarioConfig};
