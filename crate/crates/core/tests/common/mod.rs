//! Shared oracles for the integration suites. Everything here is computed
//! independently of the solver path it checks: the fleet oracle enumerates
//! power levels directly, the planning oracle enumerates spanning trees.

use gridforge_core::case::{NetworkCase, Region, Tariff};
use gridforge_core::mip::{HighsBackend, OaOptions, SolveLimits};
use gridforge_core::planner::{solve_sp2, PlanOptions};
use gridforge_core::scheduler::{AevFleet, AevSpec, RegionProfiles};

pub fn backend() -> HighsBackend {
    HighsBackend::new()
}

/// Brute-force fleet cost: every vehicle independently enumerates the power
/// levels {-p̄, 0, +p̄} over its window, respecting the prefix energy band
/// and the departure target. Exact whenever every energy bound sits a
/// multiple of p̄·Δt away from the initial energy.
pub fn brute_force_fleet_cost(fleet: &AevFleet, tariff: &Tariff) -> f64 {
    fleet
        .vehicles
        .iter()
        .map(|v| brute_force_vehicle_cost(v, tariff))
        .sum()
}

fn brute_force_vehicle_cost(v: &AevSpec, tariff: &Tariff) -> f64 {
    let window: Vec<usize> = v.window().collect();
    let mut best = f64::INFINITY;
    let levels = 3usize.pow(window.len() as u32);
    for code in 0..levels {
        let mut c = code;
        let mut energy = v.e_initial_kwh;
        let mut cost = 0.0;
        let mut ok = true;
        for t in &window {
            let level = c % 3;
            c /= 3;
            match level {
                1 => {
                    energy += v.p_charge_max_kw;
                    cost += tariff.charge_price[t - 1] * v.p_charge_max_kw;
                }
                2 => {
                    energy -= v.p_discharge_max_kw;
                    cost -= tariff.discharge_subsidy[t - 1] * v.p_discharge_max_kw;
                }
                _ => {}
            }
            if energy < v.e_min_kwh - 1e-9 || energy > v.e_max_kwh + 1e-9 {
                ok = false;
                break;
            }
        }
        if ok && energy >= v.e_target_kwh - 1e-9 && cost < best {
            best = cost;
        }
    }
    best
}

/// All spanning trees of the candidate graph, as index sets into
/// `case.candidate_lines`.
pub fn spanning_trees(case: &NetworkCase) -> Vec<Vec<usize>> {
    let n = case.nodes.len();
    let m = case.candidate_lines.len();
    let mut trees = Vec::new();
    let mut subset: Vec<usize> = Vec::new();
    enumerate_subsets(m, n - 1, 0, &mut subset, &mut |edges| {
        if is_spanning_tree(case, edges) {
            trees.push(edges.to_vec());
        }
    });
    trees
}

fn enumerate_subsets(
    m: usize,
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if current.len() == k {
        visit(current);
        return;
    }
    for i in start..m {
        current.push(i);
        enumerate_subsets(m, k, i + 1, current, visit);
        current.pop();
    }
}

fn is_spanning_tree(case: &NetworkCase, edges: &[usize]) -> bool {
    let n = case.nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut joined = 0;
    for li in edges {
        let line = &case.candidate_lines[*li];
        let a = find(&mut parent, case.node_index(line.from).unwrap());
        let b = find(&mut parent, case.node_index(line.to).unwrap());
        if a == b {
            return false;
        }
        parent[a] = b;
        joined += 1;
    }
    joined == n - 1
}

/// Best total cost over all spanning trees, each priced by a convex dispatch
/// solve on a case restricted to exactly that tree.
pub fn best_tree_by_enumeration(
    case: &NetworkCase,
    profiles: &[RegionProfiles],
    options: PlanOptions,
) -> (f64, Vec<usize>) {
    let backend = backend();
    let mut best = (f64::INFINITY, Vec::new());
    for tree in spanning_trees(case) {
        let mut restricted = case.clone();
        restricted.candidate_lines = tree
            .iter()
            .map(|li| case.candidate_lines[*li].clone())
            .collect();
        match solve_sp2(
            &restricted,
            profiles,
            options,
            &backend,
            &SolveLimits::default(),
            &OaOptions::default(),
        ) {
            Ok(plan) => {
                if plan.costs.total < best.0 {
                    best = (plan.costs.total, tree);
                }
            }
            // Capacity-tight variants make some trees unservable.
            Err(gridforge_core::planner::PlanError::Infeasible { .. }) => continue,
            Err(other) => panic!("per-tree dispatch failed: {other}"),
        }
    }
    best
}

/// A fleet whose schedule is fully determined: each vehicle must charge at
/// full power for its whole window to reach its target.
pub fn forced_fleet(region: Region, n: u32, arrive: usize, depart: usize) -> AevFleet {
    let window = (depart + 1 - arrive) as f64;
    AevFleet {
        vehicles: (1..=n)
            .map(|id| AevSpec {
                id,
                arrive,
                depart,
                e_initial_kwh: 10.0,
                e_target_kwh: 10.0 + 12.0 * window,
                e_min_kwh: 5.0,
                e_max_kwh: 12.0 * window + 15.0,
                p_charge_max_kw: 12.0,
                p_discharge_max_kw: 12.0,
                region,
            })
            .collect(),
    }
}
