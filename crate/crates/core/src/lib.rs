//! Planning toolkit for distribution networks with vehicle-to-grid charging stations.
//!
//! The crate jointly sites and sizes V2G charging stations (V2GCS), distribution
//! lines and distributed generation resources (PV, ESS, CB, SVC, OLTC) while
//! scheduling the charge/discharge behaviour of an autonomous EV fleet. Two
//! solution paths are provided:
//!
//! * a sequential decomposition — an AEV-scheduling MILP ([`scheduler`])
//!   followed by a network-planning MISOCP ([`planner`]) coupled through
//!   per-region station load profiles — and
//! * a monolithic formulation ([`holistic`]) used to benchmark the
//!   decomposition.
//!
//! Conic constraints are handled by an outer-approximation engine layered on a
//! plain MILP backend ([`mip`]). Every solution can be re-checked from primal
//! values alone by the [`verifier`], which also implements the worst-case
//! feasibility certificate for the decomposition.

pub mod case;
pub mod casegen;
pub mod holistic;
pub mod mip;
pub mod planner;
pub mod scheduler;
pub mod verifier;

pub use case::{
    annualization_factor, load_case, penetration_rate, tou_price, CaseError, EconomicParams,
    LineSpec, NetworkCase, NodeSpec, Region, Tariff,
};
pub use mip::{
    derive_big_m, solve_milp, solve_with_oa, BigMContext, MilpBackend, MipError, MipModel,
    OaOptions, SolveLimits, SolveReport, SolveStatus,
};
pub use scheduler::{
    build_sp1, solve_sp1, worst_case_profile, AevFleet, AevSpec, RegionProfiles, ScheduleError,
    ScheduleSolution,
};
