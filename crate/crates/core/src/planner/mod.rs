//! Subproblem II: joint network expansion, V2GCS siting and DGR sizing.
//!
//! Given the per-region station load profiles produced by the scheduler, this
//! module builds a mixed-integer second-order cone model over squared
//! voltages (LinDistFlow):
//!
//! * annualized objective — line/station/DGR capex, O&M and tariff-priced
//!   network loss through per-line-period loss epigraphs;
//! * nodal active/reactive balance with ESS discharge injecting and charge
//!   withdrawing, stations drawing their regional AEV load and optionally
//!   injecting reactive power from inverter headroom;
//! * disjunctive voltage-drop coupling on built lines, single-commodity-flow
//!   radiality, line and station capacity cones, substation limits;
//! * device models: PV availability ceiling, SVC band, ESS with cyclic
//!   energy, capacitor banks with ordered bank binaries and a daily switching
//!   budget, and a substation OLTC with ordered tap steps.
//!
//! All internal computation is in per-unit on the case-declared base; every
//! public interface speaks engineering units (kW, kvar, kWh, pu voltage).

mod build;
mod extract;

pub(crate) use build::{fix_binaries_from_plan, positive_slacks, Sp2Build};
pub(crate) use extract::extract_plan as extract_plan_from_build;
pub use extract::{compute_costs, extract_costs};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{NetworkCase, NodeId, Region};
use crate::mip::{
    solve_with_oa, MilpBackend, MipError, MipModel, OaOptions, SolveLimits, SolveStatus,
};
use crate::scheduler::RegionProfiles;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("region {0} has station demand but no V2GCS candidate")]
    RegionWithoutStation(Region),
    #[error("aggregate profile for region {0} has {1} periods, expected {2}")]
    ProfileLength(Region, usize, usize),
    #[error("scenario count mismatch: {0} profiles for {1} scenarios")]
    ScenarioCount(usize, usize),
    #[error("planning model is infeasible{}", hint_suffix(.hint))]
    Infeasible { hint: Vec<String> },
    #[error("solver hit its limit before finding a plan (status {0:?})")]
    Limit(SolveStatus),
    #[error("cost re-computation disagrees with solve objective: {recomputed} vs {solved}")]
    CostMismatch { recomputed: f64, solved: f64 },
    #[error(transparent)]
    Case(#[from] crate::case::CaseError),
    #[error(transparent)]
    Mip(#[from] MipError),
}

fn hint_suffix(hint: &[String]) -> String {
    if hint.is_empty() {
        String::new()
    } else {
        format!("; likely binding: {}", hint.join(", "))
    }
}

/// Case-study switches: Case A disables DGRs, Case B disables station
/// reactive support, Case C enables both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub reactive_support: bool,
    pub dgrs_enabled: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            reactive_support: true,
            dgrs_enabled: true,
        }
    }
}

impl PlanOptions {
    pub fn case_a() -> Self {
        PlanOptions {
            reactive_support: true,
            dgrs_enabled: false,
        }
    }

    pub fn case_b() -> Self {
        PlanOptions {
            reactive_support: false,
            dgrs_enabled: true,
        }
    }

    pub fn case_c() -> Self {
        PlanOptions::default()
    }
}

/// Annualized cost account, 10^4 CNY per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub line_capex: f64,
    pub v2g_capex: f64,
    pub dgr_capex: f64,
    pub o_and_m: f64,
    pub network_loss: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn zero() -> CostBreakdown {
        CostBreakdown {
            line_capex: 0.0,
            v2g_capex: 0.0,
            dgr_capex: 0.0,
            o_and_m: 0.0,
            network_loss: 0.0,
            total: 0.0,
        }
    }

    /// Table-style rows `(label, value)` in reporting order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("Network loss cost", self.network_loss),
            ("Line construction cost", self.line_capex),
            ("Investment cost of DGRs", self.dgr_capex),
            ("O&M cost", self.o_and_m),
            ("Investment cost of V2GCS", self.v2g_capex),
            ("Total cost", self.total),
        ]
    }
}

/// ESS dispatch at one node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EssDispatch {
    /// Stored energy at the start of each period, kWh.
    pub e_kwh: Vec<f64>,
    pub p_ch_kw: Vec<f64>,
    pub p_dis_kw: Vec<f64>,
    pub charging: Vec<bool>,
    pub discharging: Vec<bool>,
}

/// Capacitor-bank dispatch at one node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CbDispatch {
    pub banks_on: Vec<u32>,
    pub q_kvar: Vec<f64>,
    /// Increase flag at t (1-based periods 1..T-1): banks rise into t+1.
    pub switch_in: Vec<bool>,
    pub switch_out: Vec<bool>,
}

/// OLTC tap schedule at the substation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OltcDispatch {
    pub tap: Vec<u32>,
    pub v_pu: Vec<f64>,
    pub switch_in: Vec<bool>,
    pub switch_out: Vec<bool>,
}

/// Dispatch trajectories of one scenario, engineering units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchTrajectories {
    /// Flow on each candidate line in its spec orientation, kW / kvar.
    pub line_p_kw: Vec<Vec<f64>>,
    pub line_q_kvar: Vec<Vec<f64>>,
    /// Node voltage magnitude, pu, aligned with `case.nodes`.
    pub voltage_pu: Vec<Vec<f64>>,
    pub sub_p_kw: Vec<f64>,
    pub sub_q_kvar: Vec<f64>,
    /// Station draw: positive when AEVs charge, negative when they discharge.
    pub station_p_kw: BTreeMap<NodeId, Vec<f64>>,
    /// Station reactive injection (positive supports the grid).
    pub station_q_kvar: BTreeMap<NodeId, Vec<f64>>,
    pub pv_p_kw: BTreeMap<NodeId, Vec<f64>>,
    pub svc_q_kvar: BTreeMap<NodeId, Vec<f64>>,
    pub ess: BTreeMap<NodeId, EssDispatch>,
    pub cb: BTreeMap<NodeId, CbDispatch>,
    pub oltc: Option<OltcDispatch>,
}

/// Summary of the solve that produced a plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    /// Network-side objective of the solve (10^4 CNY/yr). For holistic runs
    /// the AEV energy-cost term is already removed.
    pub objective: f64,
    pub mip_gap: f64,
    pub oa_iterations: usize,
    pub max_cone_violation: f64,
    pub wall_time_s: f64,
}

/// Full planning solution: build decisions, dispatch and costs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanSolution {
    pub options: PlanOptions,
    /// Aligned with `case.candidate_lines`.
    pub built_lines: Vec<bool>,
    pub built_v2gcs: BTreeMap<NodeId, bool>,
    pub built_pv: BTreeMap<NodeId, bool>,
    pub built_ess: BTreeMap<NodeId, bool>,
    pub built_cb: BTreeMap<NodeId, bool>,
    pub built_svc: BTreeMap<NodeId, bool>,
    pub scenarios: Vec<DispatchTrajectories>,
    pub costs: CostBreakdown,
    pub report: SolveSummary,
}

impl PlanSolution {
    /// Node ids of built stations.
    pub fn station_nodes(&self) -> Vec<NodeId> {
        self.built_v2gcs
            .iter()
            .filter(|(_, b)| **b)
            .map(|(n, _)| *n)
            .collect()
    }

    /// The build-decision fingerprint used to compare planning methods.
    pub fn build_signature(&self) -> (Vec<bool>, Vec<NodeId>, Vec<NodeId>, Vec<NodeId>, Vec<NodeId>, Vec<NodeId>) {
        let on = |m: &BTreeMap<NodeId, bool>| {
            m.iter().filter(|(_, b)| **b).map(|(n, _)| *n).collect::<Vec<_>>()
        };
        (
            self.built_lines.clone(),
            on(&self.built_v2gcs),
            on(&self.built_pv),
            on(&self.built_ess),
            on(&self.built_cb),
            on(&self.built_svc),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<PlanSolution, PlanError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlanError::Mip(MipError::Backend(e.to_string())))?;
        serde_json::from_str(&text).map_err(|e| PlanError::Mip(MipError::Backend(e.to_string())))
    }
}

/// Normalize a caller-supplied profile set: every region must be present and
/// have `periods` entries; regions absent from the map count as zero demand.
pub(crate) fn normalized_profiles(
    profiles: &RegionProfiles,
    periods: usize,
) -> Result<RegionProfiles, PlanError> {
    let mut out = crate::scheduler::zero_profiles(periods);
    for (region, profile) in profiles {
        if profile.len() != periods {
            return Err(PlanError::ProfileLength(*region, profile.len(), periods));
        }
        out.insert(*region, profile.clone());
    }
    Ok(out)
}

/// Build the planning model for the given aggregate profiles; one profile
/// set per scenario, aligned with `case.scenarios`.
pub fn build_sp2(
    case: &NetworkCase,
    agg_profiles: &[RegionProfiles],
    options: PlanOptions,
) -> Result<MipModel, PlanError> {
    Ok(Sp2Build::new(case, agg_profiles, options, false)?.model)
}

/// Re-solve the dispatch of an existing plan against new profiles with every
/// binary pinned to the plan's decisions. The result is the convex dispatch
/// of the built network serving `agg_profiles`.
pub fn solve_fixed_dispatch(
    case: &NetworkCase,
    agg_profiles: &[RegionProfiles],
    plan: &PlanSolution,
    backend: &dyn MilpBackend,
    limits: &SolveLimits,
    oa: &OaOptions,
) -> Result<PlanSolution, PlanError> {
    let mut build = Sp2Build::new(case, agg_profiles, plan.options, false)?;
    fix_binaries_from_plan(&mut build, plan);
    let report = solve_with_oa(backend, &build.model, limits, oa)?;
    match report.status {
        SolveStatus::Optimal | SolveStatus::Feasible => {}
        SolveStatus::Infeasible => return Err(PlanError::Infeasible { hint: Vec::new() }),
        SolveStatus::Limit => return Err(PlanError::Limit(report.status)),
    }
    extract::extract_plan(case, &build, &report)
}

/// Solve SP2 and return a verified, polished plan.
pub fn solve_sp2(
    case: &NetworkCase,
    agg_profiles: &[RegionProfiles],
    options: PlanOptions,
    backend: &dyn MilpBackend,
    limits: &SolveLimits,
    oa: &OaOptions,
) -> Result<PlanSolution, PlanError> {
    case.validate()?;
    let build = Sp2Build::new(case, agg_profiles, options, false)?;
    let report = solve_with_oa(backend, &build.model, limits, oa)?;
    match report.status {
        SolveStatus::Optimal | SolveStatus::Feasible => {}
        SolveStatus::Infeasible => {
            let hint = build::diagnose_infeasibility(case, agg_profiles, options, backend, limits, oa);
            return Err(PlanError::Infeasible { hint });
        }
        SolveStatus::Limit => return Err(PlanError::Limit(report.status)),
    }
    extract::extract_plan(case, &build, &report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casegen;
    use crate::mip::HighsBackend;
    use crate::scheduler::zero_profiles;

    fn flat_profile(region: Region, kw: f64, periods: usize) -> Vec<RegionProfiles> {
        let mut p = zero_profiles(periods);
        p.insert(region, vec![kw; periods]);
        vec![p]
    }

    #[test]
    fn dgrs_disabled_strips_device_variables() {
        let case = casegen::stressed_case();
        let profiles = flat_profile(Region::Office, 10.0, case.periods);
        let model = build_sp2(&case, &profiles, PlanOptions::case_a()).unwrap();
        for prefix in ["pv_", "ess_", "cb_", "svc_", "oltc_"] {
            assert_eq!(
                model.count_vars_with_prefix(prefix),
                0,
                "expected no {prefix} variables"
            );
        }
        let with_dgrs = build_sp2(&case, &profiles, PlanOptions::case_c()).unwrap();
        for prefix in ["pv_", "ess_", "cb_", "svc_"] {
            assert!(with_dgrs.count_vars_with_prefix(prefix) > 0, "expected {prefix} variables");
        }
    }

    #[test]
    fn no_reactive_support_pins_station_q_to_zero() {
        let case = casegen::six_node_case(casegen::SixNodeVariant::Baseline);
        let profiles = flat_profile(Region::Office, 10.0, case.periods);
        let model = build_sp2(&case, &profiles, PlanOptions::case_b()).unwrap();
        let q_vars: Vec<_> = model
            .vars
            .iter()
            .filter(|v| v.name.starts_with("v2g_q"))
            .collect();
        assert!(!q_vars.is_empty());
        for v in q_vars {
            assert_eq!((v.lb, v.ub), (0.0, 0.0), "{} must be fixed to zero", v.name);
        }
    }

    #[test]
    fn zero_demand_builds_no_station() {
        let case = casegen::four_node_case(None);
        let profiles = vec![zero_profiles(case.periods)];
        let plan = solve_sp2(
            &case,
            &profiles,
            PlanOptions::case_a(),
            &HighsBackend::new(),
            &SolveLimits::default(),
            &crate::mip::OaOptions::default(),
        )
        .unwrap();
        assert!(plan.station_nodes().is_empty());
        assert_eq!(plan.built_lines.iter().filter(|b| **b).count(), 3);
        assert_eq!(plan.costs.v2g_capex, 0.0);
    }

    #[test]
    fn station_demand_without_candidate_rejected() {
        let case = casegen::four_node_case(None);
        // Demand in a region with no V2GCS candidate.
        let profiles = flat_profile(Region::Commercial, 5.0, case.periods);
        match build_sp2(&case, &profiles, PlanOptions::default()) {
            Err(PlanError::RegionWithoutStation(Region::Commercial)) => {}
            other => panic!("expected region error, got {other:?}"),
        }
    }

    #[test]
    fn four_node_star_builds_station_and_all_lines() {
        let case = casegen::four_node_case(None);
        let profiles = flat_profile(Region::Office, 10.0, case.periods);
        let plan = solve_sp2(
            &case,
            &profiles,
            PlanOptions::case_a(),
            &HighsBackend::new(),
            &SolveLimits::default(),
            &crate::mip::OaOptions::default(),
        )
        .unwrap();
        assert_eq!(plan.built_lines, vec![true, true, true]);
        assert_eq!(plan.station_nodes(), vec![2]);
        let p12 = &plan.scenarios[0].line_p_kw[0];
        // Line 1->2 carries downstream load plus the station draw.
        assert!(p12.iter().all(|p| *p > 0.0));
    }
}
