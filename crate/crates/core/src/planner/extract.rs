//! Primal extraction: turn a solver report into a [`PlanSolution`].
//!
//! On a radial plan the LinDistFlow equations determine line flows and
//! squared voltages exactly from nodal injections, so extraction re-derives
//! them by tree traversal instead of copying solver values. That removes the
//! backend's feasibility tolerance from the published trajectories: nodal
//! balance and voltage-drop consistency hold to floating-point precision,
//! and unbuilt lines carry exactly zero flow.

use std::collections::BTreeMap;

use crate::case::{NetworkCase, NodeId, EconomicParams};
use crate::mip::{SolveReport, SolveStatus};

use super::build::Sp2Build;
use super::{
    CbDispatch, CostBreakdown, DispatchTrajectories, EssDispatch, OltcDispatch, PlanError,
    PlanSolution, SolveSummary,
};

pub(crate) fn extract_plan(
    case: &NetworkCase,
    build: &Sp2Build,
    report: &SolveReport,
) -> Result<PlanSolution, PlanError> {
    let values = &report.values;
    let on = |v: crate::mip::VarId| values[v.index()] > 0.5;

    let built_lines: Vec<bool> = build.z.iter().map(|z| on(*z)).collect();
    let to_map = |m: &BTreeMap<NodeId, crate::mip::VarId>| -> BTreeMap<NodeId, bool> {
        m.iter().map(|(id, v)| (*id, on(*v))).collect()
    };
    let built_v2gcs = to_map(&build.y_v2g);
    let built_pv = to_map(&build.y_pv);
    let built_ess = to_map(&build.y_ess);
    let built_cb = to_map(&build.y_cb);
    let built_svc = to_map(&build.y_svc);

    let tree = TreeView::new(case, &built_lines);
    let s_base = case.base.s_base_kva();
    let periods = case.periods;
    let dt = case.economics.hours_per_period;

    let mut scenarios = Vec::with_capacity(build.scenarios.len());
    for (k, sv) in build.scenarios.iter().enumerate() {
        let val = |v: crate::mip::VarId| values[v.index()];

        // Device dispatch straight from the solver (already binary-exact).
        let mut station_p_kw: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        let mut station_q_kvar: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        for (id, vars) in &sv.v2g_p {
            station_p_kw.insert(*id, vars.iter().map(|v| val(*v) * s_base).collect());
        }
        for (id, vars) in &sv.v2g_q {
            station_q_kvar.insert(*id, vars.iter().map(|v| val(*v) * s_base).collect());
        }
        let mut pv_p_kw: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        for (id, vars) in &sv.pv_p {
            pv_p_kw.insert(*id, vars.iter().map(|v| val(*v) * s_base).collect());
        }
        let mut svc_q_kvar: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        for (id, vars) in &sv.svc_q {
            svc_q_kvar.insert(*id, vars.iter().map(|v| val(*v) * s_base).collect());
        }
        let mut ess: BTreeMap<NodeId, EssDispatch> = BTreeMap::new();
        for (id, ev) in &sv.ess {
            let spec = case.node(*id).unwrap().dgr_candidates.ess.as_ref().unwrap();
            let p_ch_kw: Vec<f64> = ev.p_ch.iter().map(|v| val(*v) * s_base).collect();
            let p_dis_kw: Vec<f64> = ev.p_dis.iter().map(|v| val(*v) * s_base).collect();
            // Re-derive the energy trajectory from the power schedule so the
            // recurrence holds exactly in the published plan.
            let mut e_kwh = vec![val(ev.e[0]) * s_base];
            for t in 0..periods - 1 {
                let next = e_kwh[t] + spec.eta_ch * p_ch_kw[t] * dt - p_dis_kw[t] * dt / spec.eta_dis;
                e_kwh.push(next);
            }
            ess.insert(
                *id,
                EssDispatch {
                    e_kwh,
                    p_ch_kw,
                    p_dis_kw,
                    charging: ev.t_ch.iter().map(|v| val(*v) > 0.5).collect(),
                    discharging: ev.t_dis.iter().map(|v| val(*v) > 0.5).collect(),
                },
            );
        }
        let mut cb: BTreeMap<NodeId, CbDispatch> = BTreeMap::new();
        for (id, cv) in &sv.cb {
            let spec = case.node(*id).unwrap().dgr_candidates.cb.as_ref().unwrap();
            let built = built_cb.get(id).copied().unwrap_or(false);
            let banks_on: Vec<u32> = (0..periods)
                .map(|t| cv.banks.iter().filter(|s| val(s[t]) > 0.5).count() as u32)
                .collect();
            let q_kvar: Vec<f64> = banks_on
                .iter()
                .map(|n| {
                    if built {
                        spec.q_min_kvar + *n as f64 * spec.bank_kvar
                    } else {
                        0.0
                    }
                })
                .collect();
            cb.insert(
                *id,
                CbDispatch {
                    banks_on,
                    q_kvar,
                    switch_in: cv.t_in.iter().map(|v| val(*v) > 0.5).collect(),
                    switch_out: cv.t_de.iter().map(|v| val(*v) > 0.5).collect(),
                },
            );
        }
        let oltc = sv.oltc.as_ref().map(|ov| {
            let spec = case.oltc.as_ref().expect("oltc vars imply oltc spec");
            let tap: Vec<u32> = (0..periods)
                .map(|t| ov.steps.iter().filter(|s| val(s[t]) > 0.5).count() as u32)
                .collect();
            OltcDispatch {
                v_pu: tap.iter().map(|p| spec.tap_voltage_pu(*p)).collect(),
                tap,
                switch_in: ov.t_in.iter().map(|v| val(*v) > 0.5).collect(),
                switch_out: ov.t_de.iter().map(|v| val(*v) > 0.5).collect(),
            }
        });

        // Net nodal consumption (pu): load + station draw − local generation.
        let n = case.nodes.len();
        let mut cons_p = vec![vec![0.0; periods]; n];
        let mut cons_q = vec![vec![0.0; periods]; n];
        for (ni, node) in case.nodes.iter().enumerate() {
            let (p_load, q_load) = case.scenario_load(k, node);
            for t in 0..periods {
                let mut cp = p_load[t] / s_base;
                let mut cq = q_load[t] / s_base;
                if let Some(p) = station_p_kw.get(&node.id) {
                    cp += p[t] / s_base;
                }
                if let Some(q) = station_q_kvar.get(&node.id) {
                    cq -= q[t] / s_base;
                }
                if let Some(p) = pv_p_kw.get(&node.id) {
                    cp -= p[t] / s_base;
                }
                if let Some(e) = ess.get(&node.id) {
                    cp += (e.p_ch_kw[t] - e.p_dis_kw[t]) / s_base;
                }
                if let Some(q) = svc_q_kvar.get(&node.id) {
                    cq -= q[t] / s_base;
                }
                if let Some(c) = cb.get(&node.id) {
                    cq -= c.q_kvar[t] / s_base;
                }
                cons_p[ni][t] = cp;
                cons_q[ni][t] = cq;
            }
        }

        let (line_p_kw, line_q_kvar, voltage_pu, sub_p_kw, sub_q_kvar) = match &tree {
            Some(tree) => {
                tree.propagate(case, sv, values, &cons_p, &cons_q, s_base)
            }
            None => raw_network_values(case, sv, values, s_base),
        };

        scenarios.push(DispatchTrajectories {
            line_p_kw,
            line_q_kvar,
            voltage_pu,
            sub_p_kw,
            sub_q_kvar,
            station_p_kw,
            station_q_kvar,
            pv_p_kw,
            svc_q_kvar,
            ess,
            cb,
            oltc,
        });
    }

    let mut plan = PlanSolution {
        options: build.options,
        built_lines,
        built_v2gcs,
        built_pv,
        built_ess,
        built_cb,
        built_svc,
        scenarios,
        costs: CostBreakdown::zero(),
        report: SolveSummary {
            status: report.status,
            objective: report.objective,
            mip_gap: report.mip_gap,
            oa_iterations: report.oa_iterations,
            max_cone_violation: report.max_cone_violation,
            wall_time_s: report.wall_time_s,
        },
    };
    plan.costs = extract_costs(&plan, case, &case.economics)?;
    Ok(plan)
}

/// Rooted view of the built lines, when they form a spanning tree.
struct TreeView {
    /// Children of each node index: `(child_node_index, line_index, sign)`;
    /// sign +1 when the line's spec orientation is parent→child.
    children: Vec<Vec<(usize, usize, f64)>>,
    /// Node indices in BFS order from the substation.
    order: Vec<usize>,
    parent_edge: Vec<Option<(usize, usize, f64)>>,
}

impl TreeView {
    fn new(case: &NetworkCase, built: &[bool]) -> Option<TreeView> {
        let n = case.nodes.len();
        if built.iter().filter(|b| **b).count() != n.saturating_sub(1) {
            return None;
        }
        let mut adj: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
        for (li, line) in case.candidate_lines.iter().enumerate() {
            if !built[li] {
                continue;
            }
            let fi = case.node_index(line.from)?;
            let ti = case.node_index(line.to)?;
            adj[fi].push((ti, li, 1.0));
            adj[ti].push((fi, li, -1.0));
        }
        let root = case.node_index(case.substation_node)?;
        let mut children: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
        let mut parent_edge: Vec<Option<(usize, usize, f64)>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut order = vec![root];
        seen[root] = true;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for (v, li, sign) in &adj[u] {
                if !seen[*v] {
                    seen[*v] = true;
                    children[u].push((*v, *li, *sign));
                    parent_edge[*v] = Some((u, *li, *sign));
                    order.push(*v);
                }
            }
        }
        if seen.iter().all(|s| *s) {
            Some(TreeView {
                children,
                order,
                parent_edge,
            })
        } else {
            None
        }
    }

    /// Flows from subtree sums, voltages from the head downward.
    #[allow(clippy::type_complexity)]
    fn propagate(
        &self,
        case: &NetworkCase,
        sv: &super::build::ScenarioVars,
        values: &[f64],
        cons_p: &[Vec<f64>],
        cons_q: &[Vec<f64>],
        s_base: f64,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let periods = case.periods;
        let n = case.nodes.len();
        let nl = case.candidate_lines.len();
        let z_base = case.base.z_base_ohm();
        let root = case.node_index(case.substation_node).unwrap();

        let mut line_p = vec![vec![0.0; periods]; nl];
        let mut line_q = vec![vec![0.0; periods]; nl];
        let mut w = vec![vec![0.0; periods]; n];
        let mut sub_p = vec![0.0; periods];
        let mut sub_q = vec![0.0; periods];

        for t in 0..periods {
            // Subtree consumption by reverse BFS order.
            let mut sum_p: Vec<f64> = (0..n).map(|ni| cons_p[ni][t]).collect();
            let mut sum_q: Vec<f64> = (0..n).map(|ni| cons_q[ni][t]).collect();
            for u in self.order.iter().rev() {
                if let Some((parent, _, _)) = self.parent_edge[*u] {
                    sum_p[parent] += sum_p[*u];
                    sum_q[parent] += sum_q[*u];
                }
            }
            for (ni, _) in case.nodes.iter().enumerate() {
                if let Some((_, li, sign)) = self.parent_edge[ni] {
                    line_p[li][t] = sign * sum_p[ni];
                    line_q[li][t] = sign * sum_q[ni];
                }
            }
            sub_p[t] = sum_p[root];
            sub_q[t] = sum_q[root];

            // Head voltage from the solver (tap-pinned or nominal), drops
            // downstream along built lines.
            w[root][t] = values[sv.w[root][t].index()];
            for u in &self.order {
                for (child, li, sign) in &self.children[*u] {
                    let line = &case.candidate_lines[*li];
                    let r_pu = line.r_ohm / z_base;
                    let x_pu = line.x_ohm / z_base;
                    let p_down = sign * line_p[*li][t];
                    let q_down = sign * line_q[*li][t];
                    w[*child][t] = w[*u][t] - 2.0 * (r_pu * p_down + x_pu * q_down);
                }
            }
        }

        let scale = |m: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            m.into_iter()
                .map(|row| row.into_iter().map(|v| v * s_base).collect())
                .collect()
        };
        let voltage = w
            .into_iter()
            .map(|row| row.into_iter().map(|v| v.max(0.0).sqrt()).collect())
            .collect();
        (
            scale(line_p),
            scale(line_q),
            voltage,
            sub_p.into_iter().map(|v| v * s_base).collect(),
            sub_q.into_iter().map(|v| v * s_base).collect(),
        )
    }
}

/// Fallback when the built lines are not a spanning tree: publish solver
/// values untouched and let the verifier flag the radiality violation.
#[allow(clippy::type_complexity)]
fn raw_network_values(
    case: &NetworkCase,
    sv: &super::build::ScenarioVars,
    values: &[f64],
    s_base: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let read = |vars: &Vec<crate::mip::VarId>, scale: f64| -> Vec<f64> {
        vars.iter().map(|v| values[v.index()] * scale).collect()
    };
    let line_p = sv.flow_p.iter().map(|vs| read(vs, s_base)).collect();
    let line_q = sv.flow_q.iter().map(|vs| read(vs, s_base)).collect();
    let voltage = sv
        .w
        .iter()
        .map(|vs| {
            vs.iter()
                .map(|v| values[v.index()].max(0.0).sqrt())
                .collect()
        })
        .collect();
    let sub_p = read(&sv.sub_p, s_base);
    let sub_q = read(&sv.sub_q, s_base);
    let _ = case;
    (line_p, line_q, voltage, sub_p, sub_q)
}

/// Recompute the cost account from a plan's primal values, engineering units
/// in, 10^4 CNY/yr out. Does not consult the solver objective.
pub fn compute_costs(
    plan: &PlanSolution,
    case: &NetworkCase,
    econ: &EconomicParams,
) -> CostBreakdown {
    let rd = |years: u32| crate::case::annualization_factor(econ.inflation_rate, years);
    let mut c = CostBreakdown::zero();

    for (li, line) in case.candidate_lines.iter().enumerate() {
        if plan.built_lines.get(li).copied().unwrap_or(false) {
            c.line_capex += rd(econ.lifetimes.line) * line.capex;
        }
    }
    for node in &case.nodes {
        let built = |m: &BTreeMap<NodeId, bool>| m.get(&node.id).copied().unwrap_or(false);
        if let Some(v2g) = &node.v2g_candidate {
            if built(&plan.built_v2gcs) {
                c.v2g_capex += rd(econ.lifetimes.v2gcs) * v2g.capex;
                c.o_and_m += v2g.om_cost;
            }
        }
        let d = &node.dgr_candidates;
        if let Some(pv) = &d.pv {
            if built(&plan.built_pv) {
                c.dgr_capex += rd(econ.lifetimes.pv) * pv.capex;
                c.o_and_m += pv.om_cost;
            }
        }
        if let Some(ess) = &d.ess {
            if built(&plan.built_ess) {
                c.dgr_capex += rd(econ.lifetimes.ess) * ess.capex;
                c.o_and_m += ess.om_cost;
            }
        }
        if let Some(cb) = &d.cb {
            if built(&plan.built_cb) {
                c.dgr_capex += rd(econ.lifetimes.cb) * cb.capex;
                c.o_and_m += cb.om_cost;
            }
        }
        if let Some(svc) = &d.svc {
            if built(&plan.built_svc) {
                c.dgr_capex += rd(econ.lifetimes.svc) * svc.capex;
                c.o_and_m += svc.om_cost;
            }
        }
    }

    let s_base = case.base.s_base_kva();
    let z_base = case.base.z_base_ohm();
    let dt = econ.hours_per_period;
    for (k, dispatch) in plan.scenarios.iter().enumerate() {
        let p_k = case.scenarios.get(k).map(|s| s.probability).unwrap_or(1.0);
        for (li, line) in case.candidate_lines.iter().enumerate() {
            let r_pu = line.r_ohm / z_base;
            for t in 0..case.periods {
                let p_pu = dispatch.line_p_kw[li][t] / s_base;
                let q_pu = dispatch.line_q_kvar[li][t] / s_base;
                c.network_loss += econ.days_per_year
                    * p_k
                    * case.tariff.price[t]
                    * dt
                    * r_pu
                    * (p_pu * p_pu + q_pu * q_pu)
                    * s_base
                    / 1e4;
            }
        }
    }

    c.total = c.line_capex + c.v2g_capex + c.dgr_capex + c.o_and_m + c.network_loss;
    c
}

/// Recompute the cost account and check it against the solve objective at
/// 1e-4 relative tolerance. A mismatch signals a modelling bug.
pub fn extract_costs(
    plan: &PlanSolution,
    case: &NetworkCase,
    econ: &EconomicParams,
) -> Result<CostBreakdown, PlanError> {
    let costs = compute_costs(plan, case, econ);
    let solved = plan.report.objective;
    if solved.is_finite() && plan.report.status == SolveStatus::Optimal {
        let denom = solved.abs().max(1.0);
        if (costs.total - solved).abs() / denom > 1e-4 {
            return Err(PlanError::CostMismatch {
                recomputed: costs.total,
                solved,
            });
        }
    }
    Ok(costs)
}
