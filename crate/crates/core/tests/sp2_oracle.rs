//! Planning oracle equivalence: the integer network-expansion solve against
//! exhaustive spanning-tree enumeration with per-tree convex dispatch, plus
//! the cost-extraction arithmetic examples.

mod common;

use common::{backend, best_tree_by_enumeration, forced_fleet, spanning_trees};
use gridforge_core::case::{annualization_factor, Region};
use gridforge_core::casegen::{four_node_case, six_node_case, SixNodeVariant};
use gridforge_core::holistic::solve_decomposition;
use gridforge_core::mip::{OaOptions, SolveLimits};
use gridforge_core::planner::{compute_costs, solve_sp2, PlanOptions};
use gridforge_core::scheduler::zero_profiles;

#[test]
fn six_node_family_tree_enumeration() {
    for variant in [
        SixNodeVariant::Baseline,
        SixNodeVariant::LossTradeoff,
        SixNodeVariant::TightCapacity,
    ] {
        let mut case = six_node_case(variant);
        case.scenarios[0].fleet = forced_fleet(Region::Office, 2, 9, 14);
        let trees = spanning_trees(&case);
        assert!(
            (2..=16).contains(&trees.len()),
            "{variant:?}: {} spanning trees",
            trees.len()
        );
        let (schedules, plan) = solve_decomposition(
            &case,
            PlanOptions::case_a(),
            &backend(),
            &SolveLimits::default(),
            &OaOptions::default(),
        )
        .unwrap();
        let profiles: Vec<_> = schedules.iter().map(|s| s.region_profiles.clone()).collect();
        let (best_cost, best_tree) =
            best_tree_by_enumeration(&case, &profiles, PlanOptions::case_a());
        let rel = (plan.costs.total - best_cost).abs() / best_cost.abs().max(1.0);
        assert!(
            rel <= 1e-4,
            "{variant:?}: solver {} vs enumeration {best_cost} (tree {best_tree:?})",
            plan.costs.total
        );
    }
}

#[test]
fn four_node_star_is_the_only_tree() {
    let case = four_node_case(None);
    assert_eq!(spanning_trees(&case).len(), 1);
    let mut profiles = vec![zero_profiles(case.periods)];
    profiles[0].insert(Region::Office, vec![10.0; case.periods]);
    let plan = solve_sp2(
        &case,
        &profiles,
        PlanOptions::case_a(),
        &backend(),
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    assert_eq!(plan.built_lines, vec![true, true, true]);
    assert_eq!(plan.station_nodes(), vec![2]);
}

#[test]
fn line_capex_arithmetic() {
    // Three built lines of capex 10/20/30 annualized at R_d(0.08, 10).
    let mut case = four_node_case(None);
    case.economics.lifetimes.line = 10;
    case.candidate_lines[0].capex = 10.0;
    case.candidate_lines[1].capex = 20.0;
    case.candidate_lines[2].capex = 30.0;
    let profiles = vec![zero_profiles(case.periods)];
    let plan = solve_sp2(
        &case,
        &profiles,
        PlanOptions::case_a(),
        &backend(),
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    let costs = compute_costs(&plan, &case, &case.economics);
    let rd = annualization_factor(0.08, 10);
    assert!(
        (costs.line_capex - rd * 60.0).abs() < 1e-6,
        "line capex {} vs {}",
        costs.line_capex,
        rd * 60.0
    );
    assert!((costs.line_capex - 8.9417).abs() < 2e-4);
}

#[test]
fn zero_plan_has_zero_costs() {
    let mut case = four_node_case(None);
    for node in &mut case.nodes {
        node.p_load_kw = vec![0.0; 24];
        node.q_load_kvar = vec![0.0; 24];
    }
    let profiles = vec![zero_profiles(case.periods)];
    let plan = solve_sp2(
        &case,
        &profiles,
        PlanOptions::case_a(),
        &backend(),
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    // Lines are still forced by radiality, but nothing else costs anything.
    let costs = compute_costs(&plan, &case, &case.economics);
    assert_eq!(costs.v2g_capex, 0.0);
    assert_eq!(costs.dgr_capex, 0.0);
    assert_eq!(costs.o_and_m, 0.0);
    assert!(costs.network_loss.abs() < 1e-9);
}

#[test]
fn loss_term_formula_on_single_line() {
    // One line carrying a constant 100 kW for one hour per day at a flat
    // price of 1.1121: loss cost = 365·price·r_pu·(P_pu²)·S_base/1e4.
    let mut case = four_node_case(None);
    case.tariff = gridforge_core::case::Tariff::flat(24, 1.1121);
    // Single-hour load at node 2 only.
    for node in &mut case.nodes {
        node.p_load_kw = vec![0.0; 24];
        node.q_load_kvar = vec![0.0; 24];
    }
    case.nodes[1].p_load_kw[11] = 100.0;
    let profiles = vec![zero_profiles(case.periods)];
    let plan = solve_sp2(
        &case,
        &profiles,
        PlanOptions::case_a(),
        &backend(),
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    let costs = compute_costs(&plan, &case, &case.economics);
    let s_base = case.base.s_base_kva();
    let r_pu = case.candidate_lines[0].r_ohm / case.base.z_base_ohm();
    let p_pu: f64 = 100.0 / s_base;
    let expected = 365.0 * 1.1121 * r_pu * p_pu * p_pu * s_base / 1e4;
    assert!(
        (costs.network_loss - expected).abs() <= 1e-9 + expected * 1e-9,
        "loss {} vs {}",
        costs.network_loss,
        expected
    );
}
