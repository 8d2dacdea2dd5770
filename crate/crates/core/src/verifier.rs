//! Independent validation of planning solutions.
//!
//! Every check recomputes constraint residuals from the plan's primal values
//! and the case data alone — no solver state is reused. Electrical residuals
//! are evaluated in per-unit (squared-voltage families in pu²); nodal balance
//! is additionally reported in kW/kvar. The base tolerance mirrors solver
//! feasibility (1e-6); magnitudes within a 10× band above it are downgraded
//! to warnings, anything larger is a violation.
//!
//! [`verify_worst_case`] implements the feasibility certificate for the
//! sequential decomposition: build the ceiling profile (every connected
//! vehicle charging at full power), pin all binaries to the plan, and
//! re-solve the remaining convex dispatch. Feasibility there guarantees
//! feasibility for every actual schedule dominated by the ceiling; on
//! failure an elastic re-solve names the binding constraint families.

use serde::{Deserialize, Serialize};

use crate::case::{NetworkCase, NodeId, Region};
use crate::mip::{solve_with_oa, MilpBackend, OaOptions, SolveLimits, SolveStatus};
use crate::planner::{fix_binaries_from_plan, positive_slacks, PlanError, PlanSolution, Sp2Build};
use crate::scheduler::{worst_case_profile, AevFleet, RegionProfiles};

/// Base feasibility tolerance; see module docs for the warning band.
pub const TOL: f64 = 1e-6;
const WARN_BAND: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintFamily {
    Radiality,
    NodalBalanceP,
    NodalBalanceQ,
    VoltageDrop,
    UnbuiltLineFlow,
    LineCapacity,
    VoltageBounds,
    SubstationLimit,
    V2gGating,
    V2gCapacity,
    V2gCapacityFloor,
    RegionalCoupling,
    PvLimit,
    SvcLimit,
    EssPower,
    EssExclusivity,
    EssEnergy,
    EssCycle,
    CbValue,
    CbSwitching,
    OltcPinning,
    OltcSwitching,
    CostConsistency,
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_string(self).unwrap();
        f.write_str(s.trim_matches('"'))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub family: ConstraintFamily,
    /// Node id, line endpoints or region involved, prefixed by scenario.
    pub location: String,
    /// 1-based period, when the violation is period-specific.
    pub period: Option<usize>,
    pub magnitude: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Families present among the violations, deduplicated.
    pub fn violated_families(&self) -> Vec<ConstraintFamily> {
        let mut fams: Vec<ConstraintFamily> = self.violations.iter().map(|v| v.family).collect();
        fams.dedup();
        fams
    }

    fn record(&mut self, v: Violation, tol: f64) {
        if v.magnitude > tol * WARN_BAND {
            self.violations.push(v);
        } else if v.magnitude > tol {
            self.warnings.push(v);
        }
    }
}

struct Checker<'a> {
    case: &'a NetworkCase,
    plan: &'a PlanSolution,
    report: VerifyReport,
    s_base: f64,
    z_base: f64,
}

impl Checker<'_> {
    fn push(
        &mut self,
        family: ConstraintFamily,
        location: impl Into<String>,
        period: Option<usize>,
        magnitude: f64,
        detail: impl Into<String>,
    ) {
        self.push_tol(family, location, period, magnitude, detail, TOL)
    }

    fn push_tol(
        &mut self,
        family: ConstraintFamily,
        location: impl Into<String>,
        period: Option<usize>,
        magnitude: f64,
        detail: impl Into<String>,
        tol: f64,
    ) {
        let v = Violation {
            family,
            location: location.into(),
            period,
            magnitude,
            detail: detail.into(),
        };
        self.report.record(v, tol);
    }
}

/// Check every constraint family of the planning model against the plan's
/// primal values. `agg_profiles` must be the per-scenario regional profiles
/// the plan was solved against.
pub fn verify_plan(
    plan: &PlanSolution,
    case: &NetworkCase,
    agg_profiles: &[RegionProfiles],
) -> VerifyReport {
    let mut c = Checker {
        case,
        plan,
        report: VerifyReport::default(),
        s_base: case.base.s_base_kva(),
        z_base: case.base.z_base_ohm(),
    };
    check_radiality(&mut c);
    for k in 0..plan.scenarios.len().min(case.scenarios.len()) {
        check_scenario(&mut c, k, agg_profiles.get(k));
    }
    check_costs(&mut c);
    c.report
}

fn check_radiality(c: &mut Checker) {
    let case = c.case;
    let n = case.nodes.len();
    let built: Vec<usize> = c
        .plan
        .built_lines
        .iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .map(|(i, _)| i)
        .collect();
    if built.len() != n - 1 {
        c.push(
            ConstraintFamily::Radiality,
            "tree",
            None,
            (built.len() as f64 - (n - 1) as f64).abs(),
            format!("{} lines built, a spanning tree needs {}", built.len(), n - 1),
        );
    }
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..n).collect();
    // Forest of the edges accepted so far, for recovering full cycles.
    let mut forest: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut cycles: Vec<Vec<String>> = Vec::new();
    for li in &built {
        let line = &case.candidate_lines[*li];
        let fi = case.node_index(line.from).unwrap();
        let ti = case.node_index(line.to).unwrap();
        let a = find(&mut parent, fi);
        let b = find(&mut parent, ti);
        if a == b {
            // The closing edge plus the tree path between its endpoints.
            let mut edges = vec![format!("{}-{}", line.from, line.to)];
            edges.extend(tree_path_edges(case, &forest, fi, ti));
            cycles.push(edges);
        } else {
            parent[a] = b;
            forest[fi].push((ti, *li));
            forest[ti].push((fi, *li));
        }
    }
    for cycle in cycles {
        c.push(
            ConstraintFamily::Radiality,
            cycle.join(","),
            None,
            cycle.len() as f64,
            format!("built lines close a cycle through: {}", cycle.join(", ")),
        );
    }
    let root = find(&mut parent, case.node_index(case.substation_node).unwrap());
    for ni in 0..n {
        if find(&mut parent, ni) != root {
            let id = case.nodes[ni].id;
            c.push(
                ConstraintFamily::Radiality,
                id.to_string(),
                None,
                1.0,
                format!("node {id} is disconnected from the substation"),
            );
        }
    }
}

/// Edge labels along the unique forest path between two nodes.
fn tree_path_edges(
    case: &NetworkCase,
    forest: &[Vec<(usize, usize)>],
    from: usize,
    to: usize,
) -> Vec<String> {
    let n = forest.len();
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for (v, li) in &forest[u] {
            if !seen[*v] {
                seen[*v] = true;
                prev[*v] = Some((u, *li));
                queue.push_back(*v);
            }
        }
    }
    let mut edges = Vec::new();
    let mut cur = to;
    while let Some((p, li)) = prev[cur] {
        let line = &case.candidate_lines[li];
        edges.push(format!("{}-{}", line.from, line.to));
        cur = p;
    }
    edges
}

fn check_scenario(c: &mut Checker, k: usize, agg: Option<&RegionProfiles>) {
    let case = c.case;
    let plan = c.plan;
    let d = &plan.scenarios[k];
    let periods = case.periods;
    let s_base = c.s_base;
    let z_base = c.z_base;
    let vb = &case.voltage_bounds;
    let (w_lo, w_hi) = (vb.v_min_pu * vb.v_min_pu, vb.v_max_pu * vb.v_max_pu);
    let dt = case.economics.hours_per_period;
    let tag = |loc: &str| format!("s{k}:{loc}");

    // Lines: capacity cone and drop consistency when built, zero flow else.
    for (li, line) in case.candidate_lines.iter().enumerate() {
        let built = plan.built_lines[li];
        let s_pu = line.s_max_kva / s_base;
        let r_pu = line.r_ohm / z_base;
        let x_pu = line.x_ohm / z_base;
        let fi = case.node_index(line.from).unwrap();
        let ti = case.node_index(line.to).unwrap();
        let loc = format!("{}-{}", line.from, line.to);
        for t in 0..periods {
            let p = d.line_p_kw[li][t] / s_base;
            let q = d.line_q_kvar[li][t] / s_base;
            if built {
                c.push(
                    ConstraintFamily::LineCapacity,
                    tag(&loc),
                    Some(t + 1),
                    p * p + q * q - s_pu * s_pu,
                    "apparent flow above line capacity",
                );
                let wf = d.voltage_pu[fi][t].powi(2);
                let wt = d.voltage_pu[ti][t].powi(2);
                c.push(
                    ConstraintFamily::VoltageDrop,
                    tag(&loc),
                    Some(t + 1),
                    (wf - wt - 2.0 * (r_pu * p + x_pu * q)).abs(),
                    "squared-voltage drop mismatch on a built line",
                );
            } else {
                c.push(
                    ConstraintFamily::UnbuiltLineFlow,
                    tag(&loc),
                    Some(t + 1),
                    p.hypot(q),
                    "flow on a line that was not built",
                );
            }
        }
    }

    // Voltage band everywhere.
    for (ni, node) in case.nodes.iter().enumerate() {
        for t in 0..periods {
            let w = d.voltage_pu[ni][t].powi(2);
            c.push(
                ConstraintFamily::VoltageBounds,
                tag(&node.id.to_string()),
                Some(t + 1),
                (w_lo - w).max(w - w_hi),
                format!("squared voltage {w:.6} outside [{w_lo:.4}, {w_hi:.4}]"),
            );
        }
    }

    // Substation capability.
    let cap_p = case.substation.p_max_kw / s_base;
    let cap_q = case.substation.q_max_kvar / s_base;
    for t in 0..periods {
        c.push(
            ConstraintFamily::SubstationLimit,
            tag("p"),
            Some(t + 1),
            (d.sub_p_kw[t] / s_base).abs() - cap_p,
            "substation active power beyond capacity",
        );
        c.push(
            ConstraintFamily::SubstationLimit,
            tag("q"),
            Some(t + 1),
            (d.sub_q_kvar[t] / s_base).abs() - cap_q,
            "substation reactive power beyond capacity",
        );
    }

    // Stations.
    for node in &case.nodes {
        let Some(cand) = &node.v2g_candidate else { continue };
        let built = plan.built_v2gcs.get(&node.id).copied().unwrap_or(false);
        let m = cand.s_max_kva / s_base;
        let floor = cand.s_min_kva / s_base;
        let loc = tag(&node.id.to_string());
        for t in 0..periods {
            let p = d.station_p_kw.get(&node.id).map(|v| v[t]).unwrap_or(0.0) / s_base;
            let q = d.station_q_kvar.get(&node.id).map(|v| v[t]).unwrap_or(0.0) / s_base;
            if !built {
                c.push(
                    ConstraintFamily::V2gGating,
                    loc.clone(),
                    Some(t + 1),
                    p.hypot(q),
                    "power at a station that was not built",
                );
            } else {
                c.push(
                    ConstraintFamily::V2gCapacity,
                    loc.clone(),
                    Some(t + 1),
                    p * p + q * q - m * m,
                    "station apparent power above capacity",
                );
                if floor > 0.0 {
                    c.push(
                        ConstraintFamily::V2gCapacityFloor,
                        loc.clone(),
                        Some(t + 1),
                        floor * floor - (p * p + q * q),
                        "station loaded below its capacity floor",
                    );
                }
            }
            if !plan.options.reactive_support {
                c.push(
                    ConstraintFamily::V2gGating,
                    loc.clone(),
                    Some(t + 1),
                    q.abs(),
                    "reactive power with reactive support disabled",
                );
            }
        }
    }

    // Regional coupling against the profiles the plan was solved for.
    if let Some(agg) = agg {
        for region in Region::ALL {
            let stations: Vec<NodeId> = case
                .nodes
                .iter()
                .filter(|n| n.region == region && n.v2g_candidate.is_some())
                .map(|n| n.id)
                .collect();
            let profile = agg.get(&region);
            for t in 0..periods {
                let served: f64 = stations
                    .iter()
                    .map(|id| d.station_p_kw.get(id).map(|v| v[t]).unwrap_or(0.0))
                    .sum::<f64>()
                    / s_base;
                let want = profile.map(|p| p[t]).unwrap_or(0.0) / s_base;
                if stations.is_empty() && want.abs() <= TOL {
                    continue;
                }
                c.push(
                    ConstraintFamily::RegionalCoupling,
                    tag(region.as_str()),
                    Some(t + 1),
                    (served - want).abs(),
                    format!("stations serve {served:.6} pu, fleet requires {want:.6} pu"),
                );
            }
        }
    }

    // Distributed resources.
    for node in &case.nodes {
        let dgr = &node.dgr_candidates;
        let id = node.id;
        let loc = tag(&id.to_string());
        if let Some(pv) = &dgr.pv {
            let built = plan.built_pv.get(&id).copied().unwrap_or(false);
            for t in 0..periods {
                let p = d.pv_p_kw.get(&id).map(|v| v[t]).unwrap_or(0.0) / s_base;
                let cap = if built { pv.p_max_kw[t] / s_base } else { 0.0 };
                c.push(
                    ConstraintFamily::PvLimit,
                    loc.clone(),
                    Some(t + 1),
                    (p - cap).max(-p),
                    "PV output outside its availability band",
                );
            }
        }
        if let Some(svc) = &dgr.svc {
            let built = plan.built_svc.get(&id).copied().unwrap_or(false);
            for t in 0..periods {
                let q = d.svc_q_kvar.get(&id).map(|v| v[t]).unwrap_or(0.0) / s_base;
                let (lo, hi) = if built {
                    (svc.q_min_kvar / s_base, svc.q_max_kvar / s_base)
                } else {
                    (0.0, 0.0)
                };
                c.push(
                    ConstraintFamily::SvcLimit,
                    loc.clone(),
                    Some(t + 1),
                    (lo - q).max(q - hi),
                    "SVC output outside its band",
                );
            }
        }
        if let (Some(spec), Some(e)) = (&dgr.ess, d.ess.get(&id)) {
            let built = plan.built_ess.get(&id).copied().unwrap_or(false);
            check_ess(c, k, id, spec, e, built, dt);
        }
        if let (Some(spec), Some(cbd)) = (&dgr.cb, d.cb.get(&id)) {
            let built = plan.built_cb.get(&id).copied().unwrap_or(false);
            check_cb(c, k, id, spec, cbd, built);
        }
    }

    // OLTC pinning and switching budget; or nominal head without taps.
    let sub = case.node_index(case.substation_node).unwrap();
    match (plan_oltc_spec(case, plan), &d.oltc) {
        (Some(spec), Some(oltc)) => {
            let mut switches = 0usize;
            for t in 0..periods {
                let tap = oltc.tap[t].min(spec.steps);
                let v_tap = spec.tap_voltage_pu(tap);
                let w_sub = d.voltage_pu[sub][t].powi(2);
                c.push(
                    ConstraintFamily::OltcPinning,
                    tag("substation"),
                    Some(t + 1),
                    (w_sub - v_tap * v_tap).abs(),
                    format!("substation voltage not pinned to tap {tap}"),
                );
                if t > 0 && oltc.tap[t] != oltc.tap[t - 1] {
                    switches += 1;
                    let rising = oltc.tap[t] > oltc.tap[t - 1];
                    let flagged = if rising {
                        oltc.switch_in.get(t - 1).copied().unwrap_or(false)
                    } else {
                        oltc.switch_out.get(t - 1).copied().unwrap_or(false)
                    };
                    if !flagged {
                        c.push(
                            ConstraintFamily::OltcSwitching,
                            tag("substation"),
                            Some(t + 1),
                            1.0,
                            "tap moved without a matching switch flag",
                        );
                    }
                }
            }
            if switches > spec.max_daily_switches as usize {
                c.push(
                    ConstraintFamily::OltcSwitching,
                    tag("substation"),
                    None,
                    (switches - spec.max_daily_switches as usize) as f64,
                    format!(
                        "{switches} tap moves exceed the daily budget {}",
                        spec.max_daily_switches
                    ),
                );
            }
        }
        _ => {
            for t in 0..periods {
                let w_sub = d.voltage_pu[sub][t].powi(2);
                c.push(
                    ConstraintFamily::OltcPinning,
                    tag("substation"),
                    Some(t + 1),
                    (w_sub - 1.0).abs(),
                    "feeder head away from nominal voltage without an OLTC",
                );
            }
        }
    }

    // Nodal balance, reported in kW / kvar.
    for (ni, node) in case.nodes.iter().enumerate() {
        let (p_load, q_load) = case.scenario_load(k, node);
        for t in 0..periods {
            let mut inj_p = -p_load[t];
            let mut inj_q = -q_load[t];
            for (li, line) in case.candidate_lines.iter().enumerate() {
                if case.node_index(line.to).unwrap() == ni {
                    inj_p += d.line_p_kw[li][t];
                    inj_q += d.line_q_kvar[li][t];
                } else if case.node_index(line.from).unwrap() == ni {
                    inj_p -= d.line_p_kw[li][t];
                    inj_q -= d.line_q_kvar[li][t];
                }
            }
            if node.id == case.substation_node {
                inj_p += d.sub_p_kw[t];
                inj_q += d.sub_q_kvar[t];
            }
            if let Some(p) = d.pv_p_kw.get(&node.id) {
                inj_p += p[t];
            }
            if let Some(e) = d.ess.get(&node.id) {
                inj_p += e.p_dis_kw[t] - e.p_ch_kw[t];
            }
            if let Some(p) = d.station_p_kw.get(&node.id) {
                inj_p -= p[t];
            }
            if let Some(q) = d.station_q_kvar.get(&node.id) {
                inj_q += q[t];
            }
            if let Some(q) = d.svc_q_kvar.get(&node.id) {
                inj_q += q[t];
            }
            if let Some(cb) = d.cb.get(&node.id) {
                inj_q += cb.q_kvar[t];
            }
            c.push(
                ConstraintFamily::NodalBalanceP,
                tag(&node.id.to_string()),
                Some(t + 1),
                inj_p.abs(),
                format!("active power imbalance {inj_p:.3e} kW"),
            );
            c.push(
                ConstraintFamily::NodalBalanceQ,
                tag(&node.id.to_string()),
                Some(t + 1),
                inj_q.abs(),
                format!("reactive power imbalance {inj_q:.3e} kvar"),
            );
        }
    }
}

fn check_ess(
    c: &mut Checker,
    k: usize,
    id: NodeId,
    spec: &crate::case::EssCandidate,
    e: &crate::planner::EssDispatch,
    built: bool,
    dt: f64,
) {
    let s_base = c.s_base;
    let periods = e.p_ch_kw.len();
    let loc = format!("s{k}:{id}");
    for t in 0..periods {
        let pch = e.p_ch_kw[t] / s_base;
        let pdis = e.p_dis_kw[t] / s_base;
        let cap_ch = if built && e.charging[t] {
            spec.p_ch_max_kw / s_base
        } else {
            0.0
        };
        let cap_dis = if built && e.discharging[t] {
            spec.p_dis_max_kw / s_base
        } else {
            0.0
        };
        c.push(
            ConstraintFamily::EssPower,
            loc.clone(),
            Some(t + 1),
            (pch - cap_ch).max(-pch).max((pdis - cap_dis).max(-pdis)),
            "charge/discharge power outside its gated band",
        );
        if e.charging[t] && e.discharging[t] {
            c.push(
                ConstraintFamily::EssExclusivity,
                loc.clone(),
                Some(t + 1),
                1.0,
                "simultaneous charge and discharge modes",
            );
        }
        let energy = e.e_kwh[t] / s_base;
        let (e_lo, e_hi) = if built {
            (spec.e_min_kwh / s_base, spec.e_max_kwh / s_base)
        } else {
            (0.0, 0.0)
        };
        c.push(
            ConstraintFamily::EssEnergy,
            loc.clone(),
            Some(t + 1),
            (e_lo - energy).max(energy - e_hi),
            "stored energy outside its gated band",
        );
    }
    // Recurrence every period; the wrap-around step is the cyclic boundary.
    for t in 0..periods {
        let next = (t + 1) % periods;
        let expect =
            e.e_kwh[t] + spec.eta_ch * e.p_ch_kw[t] * dt - e.p_dis_kw[t] * dt / spec.eta_dis;
        let resid = (e.e_kwh[next] - expect).abs() / s_base;
        let family = if next == 0 {
            ConstraintFamily::EssCycle
        } else {
            ConstraintFamily::EssEnergy
        };
        c.push(family, loc.clone(), Some(t + 1), resid, "energy recurrence mismatch");
    }
}

fn check_cb(
    c: &mut Checker,
    k: usize,
    id: NodeId,
    spec: &crate::case::CbCandidate,
    cb: &crate::planner::CbDispatch,
    built: bool,
) {
    let loc = format!("s{k}:{id}");
    let periods = cb.banks_on.len();
    let mut switches = 0usize;
    for t in 0..periods {
        let n = cb.banks_on[t];
        if n > spec.banks || (!built && n > 0) {
            c.push(
                ConstraintFamily::CbValue,
                loc.clone(),
                Some(t + 1),
                n as f64,
                "bank count outside its gated range",
            );
        }
        let expect = if built {
            spec.q_min_kvar + n as f64 * spec.bank_kvar
        } else {
            0.0
        };
        c.push(
            ConstraintFamily::CbValue,
            loc.clone(),
            Some(t + 1),
            (cb.q_kvar[t] - expect).abs() / c.s_base,
            "CB reactive output inconsistent with its bank count",
        );
        if t > 0 && cb.banks_on[t] != cb.banks_on[t - 1] {
            switches += 1;
            let rising = cb.banks_on[t] > cb.banks_on[t - 1];
            let flagged = if rising {
                cb.switch_in.get(t - 1).copied().unwrap_or(false)
            } else {
                cb.switch_out.get(t - 1).copied().unwrap_or(false)
            };
            if !flagged {
                c.push(
                    ConstraintFamily::CbSwitching,
                    loc.clone(),
                    Some(t + 1),
                    1.0,
                    "bank count moved without a matching switch flag",
                );
            }
        }
    }
    if switches > spec.max_daily_switches as usize {
        c.push(
            ConstraintFamily::CbSwitching,
            loc,
            None,
            (switches - spec.max_daily_switches as usize) as f64,
            format!(
                "{switches} regulations exceed the daily budget {}",
                spec.max_daily_switches
            ),
        );
    }
}

fn check_costs(c: &mut Checker) {
    let costs = &c.plan.costs;
    let parts =
        costs.line_capex + costs.v2g_capex + costs.dgr_capex + costs.o_and_m + costs.network_loss;
    c.push(
        ConstraintFamily::CostConsistency,
        "total",
        None,
        (parts - costs.total).abs(),
        "cost breakdown does not sum to its total",
    );
    let recomputed = crate::planner::compute_costs(c.plan, c.case, &c.case.economics);
    let denom = costs.total.abs().max(1.0);
    c.push_tol(
        ConstraintFamily::CostConsistency,
        "recompute",
        None,
        (recomputed.total - costs.total).abs() / denom,
        "published breakdown disagrees with recomputation from primal values",
        1e-4,
    );
}

fn plan_oltc_spec(case: &NetworkCase, plan: &PlanSolution) -> Option<crate::case::OltcSpec> {
    if plan.options.dgrs_enabled {
        case.oltc.clone()
    } else {
        None
    }
}

/// Result of the worst-case feasibility certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub feasible: bool,
    /// Constraint families binding when infeasible, from the elastic re-solve.
    pub limiting: Vec<String>,
    pub worst_profiles: RegionProfiles,
}

/// Fix every binary to the plan, replace the station demand with the
/// all-charging ceiling profile, and re-solve the remaining convex dispatch.
pub fn verify_worst_case(
    plan: &PlanSolution,
    case: &NetworkCase,
    fleet: &AevFleet,
    backend: &dyn MilpBackend,
    limits: &SolveLimits,
    oa: &OaOptions,
) -> Result<WorstCaseReport, PlanError> {
    let worst = worst_case_profile(fleet, case.periods);
    let profiles: Vec<RegionProfiles> = case.scenarios.iter().map(|_| worst.clone()).collect();

    let mut build = Sp2Build::new(case, &profiles, plan.options, false)?;
    fix_binaries_from_plan(&mut build, plan);
    let report = solve_with_oa(backend, &build.model, limits, oa)?;
    if matches!(report.status, SolveStatus::Optimal | SolveStatus::Feasible) {
        return Ok(WorstCaseReport {
            feasible: true,
            limiting: Vec::new(),
            worst_profiles: worst,
        });
    }

    let mut elastic = Sp2Build::new(case, &profiles, plan.options, true)?;
    fix_binaries_from_plan(&mut elastic, plan);
    let limiting = match solve_with_oa(backend, &elastic.model, limits, oa) {
        Ok(rep) if rep.has_solution() => positive_slacks(&elastic, &rep.values),
        _ => vec!["diagnosis unavailable".into()],
    };
    Ok(WorstCaseReport {
        feasible: false,
        limiting,
        worst_profiles: worst,
    })
}
