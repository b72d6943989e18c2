//! Sizing of a residential PV and battery system under stochastic PV output
//! and budgeted demand uncertainty, solved by column-and-constraint
//! generation on top of a HiGHS MILP backend.

pub mod ccg;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod forge;
pub mod master;
pub mod par;
pub mod planner;
pub mod recourse;
pub mod solver;
pub mod subproblem;

pub use domain::{
    validate, BatteryTech, DemandUncertainty, HourlyMatrix, PlanningInstance, PvScenarioSet, SystemConfig, Tariff,
    TimeGrid,
};
pub use error::{HarsoError, Result};
pub use par::Execution;
pub use planner::{solve_deterministic, FirstStageDecision, SizingSolution};
pub use solver::{solve, ModelHandle, SolveOutcome, SolveParams, SolveStatus};
