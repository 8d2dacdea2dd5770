//! End-to-end smoke checks on the small fixtures: decomposition pipeline,
//! verifier agreement and the worst-case certificate.

use gridforge_core::casegen::{four_node_case, six_node_case, stressed_case, SixNodeVariant};
use gridforge_core::holistic::{solve_decomposition, solve_holistic};
use gridforge_core::mip::{HighsBackend, OaOptions, SolveLimits};
use gridforge_core::planner::PlanOptions;
use gridforge_core::scheduler::AevFleet;
use gridforge_core::verifier::{verify_plan, verify_worst_case};
use gridforge_core::{AevSpec, Region};

fn small_fleet(region: Region, n: u32) -> AevFleet {
    AevFleet {
        vehicles: (1..=n)
            .map(|id| AevSpec {
                id,
                arrive: 9,
                depart: 17,
                e_initial_kwh: 40.0,
                e_target_kwh: 76.0,
                e_min_kwh: 9.0,
                e_max_kwh: 90.0,
                p_charge_max_kw: 12.0,
                p_discharge_max_kw: 12.0,
                region,
            })
            .collect(),
    }
}

#[test]
fn six_node_decomposition_verifies() {
    let mut case = six_node_case(SixNodeVariant::Baseline);
    case.scenarios[0].fleet = small_fleet(Region::Office, 3);
    let backend = HighsBackend::new();
    let (schedules, plan) = solve_decomposition(
        &case,
        PlanOptions::case_a(),
        &backend,
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    assert_eq!(plan.built_lines.iter().filter(|b| **b).count(), 5);
    let profiles: Vec<_> = schedules.iter().map(|s| s.region_profiles.clone()).collect();
    let report = verify_plan(&plan, &case, &profiles);
    assert!(
        report.passed(),
        "verifier flagged a solver plan: {:#?}",
        report.violations.iter().take(5).collect::<Vec<_>>()
    );
    println!(
        "six-node: total {:.4}, stations {:?}, oa rounds {}, max viol {:.2e}",
        plan.costs.total,
        plan.station_nodes(),
        plan.report.oa_iterations,
        plan.report.max_cone_violation
    );
}

#[test]
fn stressed_case_c_verifies_with_dgrs() {
    let mut case = stressed_case();
    case.scenarios[0].fleet = small_fleet(Region::Residential, 4);
    let backend = HighsBackend::new();
    let (schedules, plan) = solve_decomposition(
        &case,
        PlanOptions::case_c(),
        &backend,
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    let profiles: Vec<_> = schedules.iter().map(|s| s.region_profiles.clone()).collect();
    let report = verify_plan(&plan, &case, &profiles);
    assert!(
        report.passed(),
        "verifier flagged Case C plan: {:#?}",
        report.violations.iter().take(5).collect::<Vec<_>>()
    );
    println!(
        "stressed C: total {:.4}, stations {:?}, dgrs pv{:?} ess{:?} cb{:?} svc{:?}",
        plan.costs.total,
        plan.station_nodes(),
        plan.built_pv,
        plan.built_ess,
        plan.built_cb,
        plan.built_svc
    );
}

#[test]
fn four_node_worst_case_certificate() {
    let mut case = four_node_case(None);
    case.scenarios[0].fleet = small_fleet(Region::Office, 3);
    let backend = HighsBackend::new();
    let (_, plan) = solve_decomposition(
        &case,
        PlanOptions::case_a(),
        &backend,
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    let fleet = case.scenarios[0].fleet.clone();
    let report = verify_worst_case(
        &plan,
        &case,
        &fleet,
        &backend,
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    assert!(report.feasible, "adequate capacity should certify feasible");

    // Narrow the head line below the worst-case station load.
    let mut tight = four_node_case(Some(230.0));
    tight.scenarios[0].fleet = fleet.clone();
    let report = verify_worst_case(
        &plan,
        &tight,
        &fleet,
        &backend,
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    assert!(!report.feasible);
    println!("limiting: {:?}", report.limiting);
    assert!(
        report.limiting.iter().any(|l| l.contains("line_capacity") && l.contains("1-2")),
        "expected line 1-2 capacity to be named, got {:?}",
        report.limiting
    );
}

#[test]
fn holistic_matches_structure() {
    let mut case = six_node_case(SixNodeVariant::Baseline);
    case.scenarios[0].fleet = small_fleet(Region::Office, 2);
    let backend = HighsBackend::new();
    let result = solve_holistic(
        &case,
        PlanOptions::case_a(),
        &backend,
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    assert_eq!(result.schedules.len(), 1);
    assert_eq!(result.schedules[0].vehicles.len(), 2);
    let profiles: Vec<_> = result
        .schedules
        .iter()
        .map(|s| s.region_profiles.clone())
        .collect();
    let report = verify_plan(&result.plan, &case, &profiles);
    assert!(
        report.passed(),
        "verifier flagged holistic plan: {:#?}",
        report.violations.iter().take(5).collect::<Vec<_>>()
    );
    println!(
        "holistic: joint {:.4}, network {:.4}, aev {:.4}",
        result.joint_objective, result.plan.costs.total, result.aev_cost_annualized
    );
}
