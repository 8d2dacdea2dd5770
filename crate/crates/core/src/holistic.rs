//! The monolithic comparison model: fleet scheduling and network planning
//! solved as one mixed-integer conic program.
//!
//! The holistic model is the union of the scheduling and planning variable
//! and constraint sets with the regional coupling written against vehicle
//! variables instead of fixed profiles. Its objective adds the fleet's
//! energy cost — annualized onto the same 10^4 CNY/yr scale as the network
//! costs — so both solution methods optimize comparable totals; published
//! cost breakdowns exclude the fleet term on both paths so the comparison
//! tables stay network-side.

use serde::{Deserialize, Serialize};

use crate::case::{NetworkCase, Region, Tariff};
use crate::mip::{
    solve_with_oa, MilpBackend, MipModel, OaOptions, OaRound, SolveLimits, SolveStatus,
};
use crate::planner::{
    solve_sp2, CostBreakdown, PlanError, PlanOptions, PlanSolution, Sp2Build,
};
use crate::scheduler::{
    add_vehicle, solve_sp1, zero_profiles, AevFleet, RegionProfiles, ScheduleSolution,
    VehicleSchedule, VehicleVars,
};

/// Joint solution of the holistic model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolisticResult {
    pub plan: PlanSolution,
    /// One schedule per scenario.
    pub schedules: Vec<ScheduleSolution>,
    /// Fleet energy cost inside the holistic objective, 10^4 CNY/yr.
    pub aev_cost_annualized: f64,
    /// Objective of the joint solve (network + fleet), 10^4 CNY/yr.
    pub joint_objective: f64,
    /// Gap-versus-time series sampled at outer-approximation rounds.
    pub gap_series: Vec<OaRound>,
}

/// Replace the case's scenarios with a single certain scenario holding
/// `fleet`, and its tariff with `tariff`.
pub fn case_with_fleet(case: &NetworkCase, fleet: &AevFleet, tariff: &Tariff) -> NetworkCase {
    let mut out = case.clone();
    out.tariff = tariff.clone();
    out.scenarios = vec![crate::case::Scenario {
        probability: 1.0,
        fleet: fleet.clone(),
        load_overrides: std::collections::BTreeMap::new(),
    }];
    out
}

/// Internal registry: vehicle variables per scenario.
struct HolisticBuild {
    build: Sp2Build,
    vehicles: Vec<Vec<(usize, VehicleVars)>>,
    /// Objective scale of scenario k's fleet cost terms.
    cost_scales: Vec<f64>,
}

fn build_internal(case: &NetworkCase, options: PlanOptions) -> Result<HolisticBuild, PlanError> {
    // Regions with vehicles need station candidates, as in the profile path.
    let with_candidates = case.regions_with_stations();
    for sc in &case.scenarios {
        for v in &sc.fleet.vehicles {
            if !with_candidates.contains(&v.region) {
                return Err(PlanError::RegionWithoutStation(v.region));
            }
        }
    }

    let mut build = Sp2Build::without_coupling(case, options)?;
    let s_base = case.base.s_base_kva();
    let annualize = case.economics.days_per_year / 1e4;
    let mut vehicles = Vec::with_capacity(case.scenarios.len());
    let mut cost_scales = Vec::with_capacity(case.scenarios.len());

    for (k, sc) in case.scenarios.iter().enumerate() {
        let scale = annualize * sc.probability;
        cost_scales.push(scale);
        let mut per_scenario = Vec::with_capacity(sc.fleet.vehicles.len());
        for (ui, v) in sc.fleet.vehicles.iter().enumerate() {
            let vars = add_vehicle(&mut build.model, v, &case.tariff, false, scale);
            per_scenario.push((ui, vars));
        }

        // Coupling: stations of a region serve exactly its fleet's net draw.
        for region in Region::ALL {
            let stations: Vec<u32> = case
                .nodes
                .iter()
                .filter(|n| n.region == region && n.v2g_candidate.is_some())
                .map(|n| n.id)
                .collect();
            if stations.is_empty() {
                continue;
            }
            for t in 0..case.periods {
                let mut sum = crate::mip::LinExpr::default();
                for id in &stations {
                    sum.add_term(build.scenarios[k].v2g_p[id][t], 1.0);
                }
                for (ui, vars) in &per_scenario {
                    if sc.fleet.vehicles[*ui].region != region {
                        continue;
                    }
                    if let (Some(ch), Some(dis)) = (vars.p_ch[t], vars.p_dis[t]) {
                        sum.add_term(ch, -1.0 / s_base);
                        sum.add_term(dis, -1.0 / s_base);
                    }
                }
                build
                    .model
                    .add_eq(format!("couple[{k}][{region}][{}]", t + 1), sum, 0.0);
            }
        }
        vehicles.push(per_scenario);
    }
    Ok(HolisticBuild {
        build,
        vehicles,
        cost_scales,
    })
}

/// Build the holistic model for one fleet under one tariff.
pub fn build_holistic(
    case: &NetworkCase,
    fleet: &AevFleet,
    tariff: &Tariff,
    options: PlanOptions,
) -> Result<MipModel, PlanError> {
    let merged = case_with_fleet(case, fleet, tariff);
    merged.validate()?;
    Ok(build_internal(&merged, options)?.build.model)
}

/// Solve the holistic model over the case's own scenarios and tariff.
pub fn solve_holistic(
    case: &NetworkCase,
    options: PlanOptions,
    backend: &dyn MilpBackend,
    limits: &SolveLimits,
    oa: &OaOptions,
) -> Result<HolisticResult, PlanError> {
    case.validate()?;
    let hb = build_internal(case, options)?;
    let mut report = solve_with_oa(backend, &hb.build.model, limits, oa)?;
    match report.status {
        SolveStatus::Optimal | SolveStatus::Feasible => {}
        SolveStatus::Infeasible => return Err(PlanError::Infeasible { hint: Vec::new() }),
        SolveStatus::Limit => return Err(PlanError::Limit(report.status)),
    }

    // Split the joint objective into network and fleet parts; the plan
    // extraction checks its cost recomputation against the network part.
    let joint_objective = report.objective;
    let mut schedules = Vec::with_capacity(hb.vehicles.len());
    let mut aev_cost_annualized = 0.0;
    for (k, per_scenario) in hb.vehicles.iter().enumerate() {
        let fleet = &case.scenarios[k].fleet;
        let mut vehicles = Vec::with_capacity(per_scenario.len());
        let mut region_profiles = zero_profiles(case.periods);
        let mut daily_cost = 0.0;
        for (ui, vars) in per_scenario {
            let v = &fleet.vehicles[*ui];
            let mut sched = VehicleSchedule {
                id: v.id,
                region: v.region,
                p_ch_kw: vec![0.0; case.periods],
                p_dis_kw: vec![0.0; case.periods],
                discharging: vec![false; case.periods],
            };
            for t in 0..case.periods {
                if let (Some(ch), Some(dis), Some(mode)) = (vars.p_ch[t], vars.p_dis[t], vars.mode[t]) {
                    let pch = report.values[ch.index()].max(0.0);
                    let pdis = report.values[dis.index()].min(0.0);
                    sched.p_ch_kw[t] = pch;
                    sched.p_dis_kw[t] = pdis;
                    sched.discharging[t] = report.values[mode.index()] > 0.5;
                    daily_cost += case.tariff.charge_price[t] * pch
                        + case.tariff.discharge_subsidy[t] * pdis;
                    region_profiles.get_mut(&v.region).unwrap()[t] += pch + pdis;
                }
            }
            vehicles.push(sched);
        }
        vehicles.sort_by_key(|v| v.id);
        aev_cost_annualized += hb.cost_scales[k] * daily_cost;
        schedules.push(ScheduleSolution {
            periods: case.periods,
            vehicles,
            region_profiles,
            objective: daily_cost,
            wall_time_s: report.wall_time_s,
        });
    }

    report.objective = joint_objective - aev_cost_annualized;
    let plan = crate::planner::extract_plan_from_build(case, &hb.build, &report)?;
    Ok(HolisticResult {
        plan,
        schedules,
        aev_cost_annualized,
        joint_objective,
        gap_series: report.rounds,
    })
}

/// Outcome of one solution method inside a comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub status: SolveStatus,
    pub costs: CostBreakdown,
    pub wall_time_s: f64,
    pub built_lines: Vec<bool>,
    pub built_v2gcs: Vec<u32>,
    pub built_dgrs: Vec<u32>,
    pub gap_series: Vec<OaRound>,
}

impl MethodOutcome {
    fn from_plan(plan: &PlanSolution, wall_time_s: f64, gap_series: Vec<OaRound>) -> MethodOutcome {
        let mut dgrs: Vec<u32> = Vec::new();
        for m in [&plan.built_pv, &plan.built_ess, &plan.built_cb, &plan.built_svc] {
            dgrs.extend(m.iter().filter(|(_, b)| **b).map(|(id, _)| *id));
        }
        dgrs.sort_unstable();
        MethodOutcome {
            status: plan.report.status,
            costs: plan.costs.clone(),
            wall_time_s,
            built_lines: plan.built_lines.clone(),
            built_v2gcs: plan.station_nodes(),
            built_dgrs: dgrs,
            gap_series,
        }
    }
}

/// Side-by-side run of the sequential decomposition and the holistic model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub decomposition: MethodOutcome,
    pub holistic: MethodOutcome,
    /// True when line, station and DGR build decisions agree exactly.
    pub identical_builds: bool,
}

/// Run both methods on the case's scenarios within a per-method time budget.
pub fn compare_methods(
    case: &NetworkCase,
    options: PlanOptions,
    backend: &dyn MilpBackend,
    time_budget_s: Option<f64>,
    gap: f64,
    oa: &OaOptions,
) -> Result<ComparisonReport, PlanError> {
    let limits = SolveLimits {
        gap,
        time_limit_s: time_budget_s,
    };
    let started = std::time::Instant::now();
    let (_, plan) = solve_decomposition(case, options, backend, &limits, oa)?;
    let decomp_wall = started.elapsed().as_secs_f64();
    let decomposition =
        MethodOutcome::from_plan(&plan, decomp_wall, plan_rounds(&plan));

    let started = std::time::Instant::now();
    let joint = solve_holistic(case, options, backend, &limits, oa)?;
    let holistic_wall = started.elapsed().as_secs_f64();
    let holistic = MethodOutcome::from_plan(&joint.plan, holistic_wall, joint.gap_series.clone());

    let identical_builds = plan.build_signature() == joint.plan.build_signature();
    Ok(ComparisonReport {
        decomposition,
        holistic,
        identical_builds,
    })
}

fn plan_rounds(plan: &PlanSolution) -> Vec<OaRound> {
    vec![OaRound {
        round: plan.report.oa_iterations,
        elapsed_s: plan.report.wall_time_s,
        objective: plan.report.objective,
        max_violation: plan.report.max_cone_violation,
        backend_gap: plan.report.mip_gap,
        cuts_added: 0,
    }]
}

/// Check that a (schedule, plan) pair from the decomposition is feasible in
/// the holistic model by direct substitution: assemble the full holistic
/// variable vector from the pair and evaluate every linear constraint, cone
/// and epigraph. Returns the largest violation found.
pub fn decomposition_embeds(
    case: &NetworkCase,
    schedules: &[ScheduleSolution],
    plan: &PlanSolution,
) -> Result<f64, PlanError> {
    let hb = build_internal(case, plan.options)?;
    let model = &hb.build.model;
    let s_base = case.base.s_base_kva();
    let mut values = vec![0.0; model.num_vars()];

    // Build binaries.
    for (li, z) in hb.build.z.iter().enumerate() {
        values[z.index()] = if plan.built_lines[li] { 1.0 } else { 0.0 };
    }
    for (map, decided) in [
        (&hb.build.y_v2g, &plan.built_v2gcs),
        (&hb.build.y_pv, &plan.built_pv),
        (&hb.build.y_ess, &plan.built_ess),
        (&hb.build.y_cb, &plan.built_cb),
        (&hb.build.y_svc, &plan.built_svc),
    ] {
        for (id, var) in map.iter() {
            values[var.index()] = if decided.get(id).copied().unwrap_or(false) {
                1.0
            } else {
                0.0
            };
        }
    }

    // Fictitious radial flows: unit demand per non-substation node pushed up
    // the built tree.
    let root = case.node_index(case.substation_node).unwrap();
    let n = case.nodes.len();
    let mut adj: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    for (li, line) in case.candidate_lines.iter().enumerate() {
        if !plan.built_lines[li] {
            continue;
        }
        let fi = case.node_index(line.from).unwrap();
        let ti = case.node_index(line.to).unwrap();
        adj[fi].push((ti, li, 1.0));
        adj[ti].push((fi, li, -1.0));
    }
    let mut order = vec![root];
    let mut seen = vec![false; n];
    let mut parent_edge: Vec<Option<(usize, usize, f64)>> = vec![None; n];
    seen[root] = true;
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for (v, li, sign) in &adj[u] {
            if !seen[*v] {
                seen[*v] = true;
                parent_edge[*v] = Some((u, *li, *sign));
                order.push(*v);
            }
        }
    }
    let mut subtree = vec![1.0f64; n];
    subtree[root] = 0.0;
    // `radial_f[li]` is oriented from -> to; the sign flips when the parent
    // sits at the line's `to` end.
    let radial_f: Vec<crate::mip::VarId> = (0..case.candidate_lines.len())
        .map(|li| {
            model
                .vars
                .iter()
                .position(|v| v.name == format!("radial_f[{li}]"))
                .map(crate::mip::VarId)
                .expect("radial flow variable")
        })
        .collect();
    for u in order.iter().rev() {
        if let Some((p, li, sign)) = parent_edge[*u] {
            values[radial_f[li].index()] = sign * subtree[*u];
            subtree[p] += subtree[*u];
        }
    }

    // Network dispatch from the plan.
    for (k, sv) in hb.build.scenarios.iter().enumerate() {
        let d = &plan.scenarios[k];
        for (li, _) in case.candidate_lines.iter().enumerate() {
            for t in 0..case.periods {
                values[sv.flow_p[li][t].index()] = d.line_p_kw[li][t] / s_base;
                values[sv.flow_q[li][t].index()] = d.line_q_kvar[li][t] / s_base;
            }
        }
        for ni in 0..n {
            for t in 0..case.periods {
                values[sv.w[ni][t].index()] = d.voltage_pu[ni][t].powi(2);
            }
        }
        for t in 0..case.periods {
            values[sv.sub_p[t].index()] = d.sub_p_kw[t] / s_base;
            values[sv.sub_q[t].index()] = d.sub_q_kvar[t] / s_base;
        }
        for (id, vars) in &sv.v2g_p {
            for t in 0..case.periods {
                values[vars[t].index()] =
                    d.station_p_kw.get(id).map(|v| v[t]).unwrap_or(0.0) / s_base;
            }
        }
        for (id, vars) in &sv.v2g_q {
            for t in 0..case.periods {
                values[vars[t].index()] =
                    d.station_q_kvar.get(id).map(|v| v[t]).unwrap_or(0.0) / s_base;
            }
        }
        for (id, vars) in &sv.pv_p {
            for t in 0..case.periods {
                values[vars[t].index()] = d.pv_p_kw.get(id).map(|v| v[t]).unwrap_or(0.0) / s_base;
            }
        }
        for (id, vars) in &sv.svc_q {
            for t in 0..case.periods {
                values[vars[t].index()] =
                    d.svc_q_kvar.get(id).map(|v| v[t]).unwrap_or(0.0) / s_base;
            }
        }
        for (id, ev) in &sv.ess {
            if let Some(e) = d.ess.get(id) {
                for t in 0..case.periods {
                    values[ev.e[t].index()] = e.e_kwh[t] / s_base;
                    values[ev.p_ch[t].index()] = e.p_ch_kw[t] / s_base;
                    values[ev.p_dis[t].index()] = e.p_dis_kw[t] / s_base;
                    values[ev.t_ch[t].index()] = if e.charging[t] { 1.0 } else { 0.0 };
                    values[ev.t_dis[t].index()] = if e.discharging[t] { 1.0 } else { 0.0 };
                }
            }
        }
        for (id, cv) in &sv.cb {
            if let Some(cbd) = d.cb.get(id) {
                for (s, bank) in cv.banks.iter().enumerate() {
                    for t in 0..case.periods {
                        values[bank[t].index()] =
                            if (cbd.banks_on[t] as usize) > s { 1.0 } else { 0.0 };
                    }
                }
                for t in 0..cv.t_in.len() {
                    values[cv.t_in[t].index()] = if cbd.switch_in[t] { 1.0 } else { 0.0 };
                    values[cv.t_de[t].index()] = if cbd.switch_out[t] { 1.0 } else { 0.0 };
                }
            }
        }
        if let (Some(ov), Some(od)) = (&sv.oltc, &d.oltc) {
            for (s, step) in ov.steps.iter().enumerate() {
                for t in 0..case.periods {
                    values[step[t].index()] = if (od.tap[t] as usize) > s { 1.0 } else { 0.0 };
                }
            }
            for t in 0..ov.t_in.len() {
                values[ov.t_in[t].index()] = if od.switch_in[t] { 1.0 } else { 0.0 };
                values[ov.t_de[t].index()] = if od.switch_out[t] { 1.0 } else { 0.0 };
            }
        }
    }

    // Vehicle schedules and loss epigraphs.
    for (k, per_scenario) in hb.vehicles.iter().enumerate() {
        let sched = &schedules[k];
        for (ui, vars) in per_scenario {
            let v = &case.scenarios[k].fleet.vehicles[*ui];
            let vehicle = sched
                .vehicles
                .iter()
                .find(|s| s.id == v.id)
                .expect("schedule covers every vehicle");
            for t in 0..case.periods {
                if let (Some(ch), Some(dis), Some(mode)) = (vars.p_ch[t], vars.p_dis[t], vars.mode[t]) {
                    values[ch.index()] = vehicle.p_ch_kw[t];
                    values[dis.index()] = vehicle.p_dis_kw[t];
                    values[mode.index()] = if vehicle.discharging[t]
                        || vehicle.p_dis_kw[t] < 0.0
                    {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    for epi in &model.epigraph_terms {
        let x = values[epi.x.index()];
        let y = values[epi.y.index()];
        values[epi.epi.index()] = x * x + y * y;
    }

    // Evaluate everything: variable bounds, rows, cones.
    let mut worst: f64 = 0.0;
    for (i, var) in model.vars.iter().enumerate() {
        worst = worst.max(var.lb - values[i]).max(values[i] - var.ub);
    }
    for cst in &model.constraints {
        worst = worst.max(cst.violation(&values));
    }
    for cone in &model.cone_terms {
        let x = values[cone.x.index()];
        let y = values[cone.y.index()];
        let rho = cone.radius.eval(&values).max(0.0);
        worst = worst.max(x * x + y * y - rho * rho);
    }
    Ok(worst)
}

/// The sequential pipeline: schedule every scenario's fleet, aggregate, then
/// plan the network against the resulting profiles.
pub fn solve_decomposition(
    case: &NetworkCase,
    options: PlanOptions,
    backend: &dyn MilpBackend,
    limits: &SolveLimits,
    oa: &OaOptions,
) -> Result<(Vec<ScheduleSolution>, PlanSolution), PlanError> {
    case.validate()?;
    let mut schedules = Vec::with_capacity(case.scenarios.len());
    let mut profiles: Vec<RegionProfiles> = Vec::with_capacity(case.scenarios.len());
    for sc in &case.scenarios {
        let sched = solve_sp1(&sc.fleet, &case.tariff, backend, limits)
            .map_err(|e| PlanError::Mip(crate::mip::MipError::Backend(e.to_string())))?;
        profiles.push(sched.region_profiles.clone());
        schedules.push(sched);
    }
    let plan = solve_sp2(case, &profiles, options, backend, limits, oa)?;
    Ok((schedules, plan))
}
