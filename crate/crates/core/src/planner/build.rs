//! Construction of the SP2 mixed-integer conic model.
//!
//! The builder keeps a registry of every variable it creates so that the
//! extraction, verification and holistic layers can address the primal
//! solution by meaning rather than by index. An `elastic` mode swaps the
//! economic objective for a slack-minimisation objective over capacity,
//! voltage, substation and coupling families; it backs both the infeasibility
//! hint and the worst-case certificate diagnostics.

use std::collections::BTreeMap;

use crate::case::{NetworkCase, NodeId, Region};
use crate::mip::{
    derive_big_m, solve_with_oa, BigMContext, LinExpr, MilpBackend, MipModel, OaOptions,
    SolveLimits, VarId,
};
use crate::scheduler::RegionProfiles;

use super::{normalized_profiles, PlanError, PlanOptions, PlanSolution};

/// ESS behaviour gated by one build binary and two mode binaries per period.
#[derive(Debug, Clone)]
pub(crate) struct EssVars {
    pub e: Vec<VarId>,
    pub p_ch: Vec<VarId>,
    pub p_dis: Vec<VarId>,
    pub t_ch: Vec<VarId>,
    pub t_dis: Vec<VarId>,
}

#[derive(Debug, Clone)]
pub(crate) struct CbVars {
    /// `banks[s][t]`, ordered so bank `s` can only be on when `s-1` is.
    pub banks: Vec<Vec<VarId>>,
    /// Change flags at 0-based `t` describing the move from period t to t+1.
    pub t_in: Vec<VarId>,
    pub t_de: Vec<VarId>,
}

#[derive(Debug, Clone)]
pub(crate) struct OltcVars {
    pub steps: Vec<Vec<VarId>>,
    pub t_in: Vec<VarId>,
    pub t_de: Vec<VarId>,
}

/// Per-scenario dispatch variables.
#[derive(Debug, Clone)]
pub(crate) struct ScenarioVars {
    pub flow_p: Vec<Vec<VarId>>,
    pub flow_q: Vec<Vec<VarId>>,
    /// Squared voltage per node and period.
    pub w: Vec<Vec<VarId>>,
    pub sub_p: Vec<VarId>,
    pub sub_q: Vec<VarId>,
    pub v2g_p: BTreeMap<NodeId, Vec<VarId>>,
    pub v2g_q: BTreeMap<NodeId, Vec<VarId>>,
    pub pv_p: BTreeMap<NodeId, Vec<VarId>>,
    pub svc_q: BTreeMap<NodeId, Vec<VarId>>,
    pub ess: BTreeMap<NodeId, EssVars>,
    pub cb: BTreeMap<NodeId, CbVars>,
    pub oltc: Option<OltcVars>,
}

/// A named elastic slack: `(family, location, var)`.
pub(crate) type SlackEntry = (String, VarId);

/// The fully built model plus its variable registry.
pub(crate) struct Sp2Build {
    pub model: MipModel,
    pub z: Vec<VarId>,
    pub y_v2g: BTreeMap<NodeId, VarId>,
    pub y_pv: BTreeMap<NodeId, VarId>,
    pub y_ess: BTreeMap<NodeId, VarId>,
    pub y_cb: BTreeMap<NodeId, VarId>,
    pub y_svc: BTreeMap<NodeId, VarId>,
    pub scenarios: Vec<ScenarioVars>,
    pub slacks: Vec<SlackEntry>,
    pub options: PlanOptions,
}

impl Sp2Build {
    /// Build the SP2 model. `agg_profiles` must be aligned with
    /// `case.scenarios`; a single profile set is accepted for a single
    /// scenario. With `elastic` the objective minimises constraint slack
    /// instead of cost (loss epigraphs are dropped).
    pub fn new(
        case: &NetworkCase,
        agg_profiles: &[RegionProfiles],
        options: PlanOptions,
        elastic: bool,
    ) -> Result<Sp2Build, PlanError> {
        if agg_profiles.len() != case.scenarios.len() {
            return Err(PlanError::ScenarioCount(
                agg_profiles.len(),
                case.scenarios.len(),
            ));
        }
        let mut profiles = Vec::with_capacity(agg_profiles.len());
        for p in agg_profiles {
            profiles.push(normalized_profiles(p, case.periods)?);
        }
        // Every region with station demand needs at least one candidate.
        let with_candidates = case.regions_with_stations();
        for profile in &profiles {
            for (region, agg) in profile {
                if agg.iter().any(|p| p.abs() > 1e-12) && !with_candidates.contains(region) {
                    return Err(PlanError::RegionWithoutStation(*region));
                }
            }
        }
        let mut b = Builder::new(case, options, elastic);
        b.add_build_binaries();
        b.add_radiality();
        for (k, profile) in profiles.iter().enumerate() {
            b.add_scenario(k, Some(profile));
        }
        b.add_investment_objective();
        Ok(b.finish())
    }

    /// Build the network side only, leaving the regional coupling rows to
    /// the caller (the holistic model couples stations to vehicle variables
    /// instead of fixed profiles).
    pub fn without_coupling(
        case: &NetworkCase,
        options: PlanOptions,
    ) -> Result<Sp2Build, PlanError> {
        let mut b = Builder::new(case, options, false);
        b.add_build_binaries();
        b.add_radiality();
        for k in 0..case.scenarios.len() {
            b.add_scenario(k, None);
        }
        b.add_investment_objective();
        Ok(b.finish())
    }
}

struct Builder<'a> {
    case: &'a NetworkCase,
    options: PlanOptions,
    elastic: bool,
    periods: usize,
    s_base_kva: f64,
    z_base_ohm: f64,
    m_vdrop: f64,
    model: MipModel,
    z: Vec<VarId>,
    y_v2g: BTreeMap<NodeId, VarId>,
    y_pv: BTreeMap<NodeId, VarId>,
    y_ess: BTreeMap<NodeId, VarId>,
    y_cb: BTreeMap<NodeId, VarId>,
    y_svc: BTreeMap<NodeId, VarId>,
    scenarios: Vec<ScenarioVars>,
    slacks: Vec<SlackEntry>,
}

impl<'a> Builder<'a> {
    fn new(case: &'a NetworkCase, options: PlanOptions, elastic: bool) -> Builder<'a> {
        Builder {
            case,
            options,
            elastic,
            periods: case.periods,
            s_base_kva: case.base.s_base_kva(),
            z_base_ohm: case.base.z_base_ohm(),
            m_vdrop: derive_big_m(BigMContext::VoltageDrop, case),
            model: MipModel::new(),
            z: Vec::new(),
            y_v2g: BTreeMap::new(),
            y_pv: BTreeMap::new(),
            y_ess: BTreeMap::new(),
            y_cb: BTreeMap::new(),
            y_svc: BTreeMap::new(),
            scenarios: Vec::new(),
            slacks: Vec::new(),
        }
    }

    fn pu(&self, kw: f64) -> f64 {
        kw / self.s_base_kva
    }

    fn slack(&mut self, family: &str, location: impl std::fmt::Display) -> Option<VarId> {
        if !self.elastic {
            return None;
        }
        let name = format!("{family}[{location}]");
        let v = self.model.add_continuous(format!("slack_{name}"), 0.0, f64::INFINITY);
        self.model.add_objective_term(v, 1.0);
        self.slacks.push((name, v));
        Some(v)
    }

    fn add_build_binaries(&mut self) {
        let case = self.case;
        for (li, line) in case.candidate_lines.iter().enumerate() {
            self.z.push(
                self.model
                    .add_binary(format!("z[{}-{}#{li}]", line.from, line.to)),
            );
        }
        for node in &case.nodes {
            if node.v2g_candidate.is_some() {
                let v = self.model.add_binary(format!("y_v2g[{}]", node.id));
                self.y_v2g.insert(node.id, v);
            }
            if self.options.dgrs_enabled {
                let d = &node.dgr_candidates;
                if d.pv.is_some() {
                    let v = self.model.add_binary(format!("y_pv[{}]", node.id));
                    self.y_pv.insert(node.id, v);
                }
                if d.ess.is_some() {
                    let v = self.model.add_binary(format!("y_ess[{}]", node.id));
                    self.y_ess.insert(node.id, v);
                }
                if d.cb.is_some() {
                    let v = self.model.add_binary(format!("y_cb[{}]", node.id));
                    self.y_cb.insert(node.id, v);
                }
                if d.svc.is_some() {
                    let v = self.model.add_binary(format!("y_svc[{}]", node.id));
                    self.y_svc.insert(node.id, v);
                }
            }
        }
    }

    /// Single-commodity-flow radiality: unit fictitious demand at every
    /// non-substation node, flow only on built lines, and exactly |N|-1
    /// built lines. Built lines therefore form a spanning tree.
    fn add_radiality(&mut self) {
        let case = self.case;
        let n = case.nodes.len();
        let cap = n as f64;
        let mut node_flow: Vec<LinExpr> = vec![LinExpr::default(); n];
        for (li, line) in case.candidate_lines.iter().enumerate() {
            let f = self
                .model
                .add_continuous(format!("radial_f[{li}]"), -cap, cap);
            let mut hi = LinExpr::var(f);
            hi.add_term(self.z[li], -cap);
            self.model.add_le(format!("radial_cap_hi[{li}]"), hi, 0.0);
            let mut lo = LinExpr::var(f);
            lo.add_term(self.z[li], cap);
            self.model.add_ge(format!("radial_cap_lo[{li}]"), lo, 0.0);
            let fi = case.node_index(line.from).unwrap();
            let ti = case.node_index(line.to).unwrap();
            node_flow[fi].add_term(f, -1.0);
            node_flow[ti].add_term(f, 1.0);
        }
        let sub = case.node_index(case.substation_node).unwrap();
        for (ni, node) in case.nodes.iter().enumerate() {
            if ni == sub {
                continue;
            }
            self.model.add_eq(
                format!("radial_demand[{}]", node.id),
                node_flow[ni].clone(),
                1.0,
            );
        }
        let mut count = LinExpr::default();
        for z in &self.z {
            count.add_term(*z, 1.0);
        }
        self.model
            .add_eq("radial_tree_size", count, (n - 1) as f64);
    }

    fn add_scenario(&mut self, k: usize, profile: Option<&RegionProfiles>) {
        let case = self.case;
        let t_count = self.periods;
        let n = case.nodes.len();
        let vb = &case.voltage_bounds;
        let (w_lo, w_hi) = (vb.v_min_pu * vb.v_min_pu, vb.v_max_pu * vb.v_max_pu);
        let sub = case.node_index(case.substation_node).unwrap();
        let p_k = case.scenarios[k].probability;
        let econ = &case.economics;
        let dt = econ.hours_per_period;

        // Squared voltages.
        let mut w: Vec<Vec<VarId>> = Vec::with_capacity(n);
        for (ni, node) in case.nodes.iter().enumerate() {
            // Without tap machinery the feeder head is held at nominal.
            let pinned_head = ni == sub && self.oltc_spec().is_none();
            let (lo, hi) = if pinned_head { (1.0, 1.0) } else { (w_lo, w_hi) };
            let hi_slack = self.slack("voltage_hi", format!("{k}:{}", node.id));
            let lo_slack = self.slack("voltage_lo", format!("{k}:{}", node.id));
            let mut per_node = Vec::with_capacity(t_count);
            for t in 0..t_count {
                let v = self
                    .model
                    .add_continuous(format!("w[{k}][{}][{}]", node.id, t + 1), lo, hi);
                if let Some(s) = hi_slack {
                    let mut e = LinExpr::var(v);
                    e.add_term(s, -1.0);
                    self.model.add_le(format!("w_hi_el[{k}][{}][{}]", node.id, t + 1), e, hi);
                    self.model.vars[v.index()].ub = hi * 4.0;
                }
                if let Some(s) = lo_slack {
                    let mut e = LinExpr::var(v);
                    e.add_term(s, 1.0);
                    self.model.add_ge(format!("w_lo_el[{k}][{}][{}]", node.id, t + 1), e, lo);
                    self.model.vars[v.index()].lb = 0.0;
                }
                per_node.push(v);
            }
            w.push(per_node);
        }

        // Line flows, capacity cones, loss epigraphs, voltage drop.
        let mut flow_p: Vec<Vec<VarId>> = Vec::new();
        let mut flow_q: Vec<Vec<VarId>> = Vec::new();
        for (li, line) in case.candidate_lines.iter().enumerate() {
            let s_pu = line.s_max_kva / self.s_base_kva;
            let r_pu = line.r_ohm / self.z_base_ohm;
            let x_pu = line.x_ohm / self.z_base_ohm;
            let fi = case.node_index(line.from).unwrap();
            let ti = case.node_index(line.to).unwrap();
            let cap_slack = self.slack("line_capacity", format!("{k}:{}-{}", line.from, line.to));
            let mut ps = Vec::with_capacity(t_count);
            let mut qs = Vec::with_capacity(t_count);
            for t in 0..t_count {
                let p = self
                    .model
                    .add_continuous(format!("line_p[{k}][{li}][{}]", t + 1), -2.0 * s_pu, 2.0 * s_pu);
                let q = self
                    .model
                    .add_continuous(format!("line_q[{k}][{li}][{}]", t + 1), -2.0 * s_pu, 2.0 * s_pu);
                // Capacity: P² + Q² <= (z·S̄ + slack)².
                let mut radius = LinExpr::scaled(self.z[li], s_pu);
                if let Some(s) = cap_slack {
                    radius.add_term(s, 1.0);
                }
                self.model
                    .add_cone(format!("line_cap[{k}][{li}][{}]", t + 1), p, q, radius);
                // Disjunctive LinDistFlow drop on squared voltages.
                let m = self.m_vdrop;
                let mut drop = LinExpr::var(w[fi][t]);
                drop.add_term(w[ti][t], -1.0);
                drop.add_term(p, -2.0 * r_pu);
                drop.add_term(q, -2.0 * x_pu);
                let mut upper = drop.clone();
                upper.add_term(self.z[li], m);
                self.model
                    .add_le(format!("vdrop_hi[{k}][{li}][{}]", t + 1), upper, m);
                let mut lower = drop;
                lower.add_term(self.z[li], -m);
                self.model
                    .add_ge(format!("vdrop_lo[{k}][{li}][{}]", t + 1), lower, -m);
                // Loss epigraph weighted by the annualized tariffed price.
                if !self.elastic {
                    let epi = self.model.add_continuous(
                        format!("loss_epi[{k}][{li}][{}]", t + 1),
                        0.0,
                        8.0 * s_pu * s_pu,
                    );
                    let weight = econ.days_per_year
                        * p_k
                        * case.tariff.price[t]
                        * dt
                        * r_pu
                        * self.s_base_kva
                        / 1e4;
                    self.model
                        .add_epigraph(format!("loss[{k}][{li}][{}]", t + 1), p, q, epi, weight);
                }
                ps.push(p);
                qs.push(q);
            }
            flow_p.push(ps);
            flow_q.push(qs);
        }

        // Substation head.
        let sub_cap_p = self.pu(case.substation.p_max_kw);
        let sub_cap_q = self.pu(case.substation.q_max_kvar);
        let sub_slack = self.slack("substation", format!("{k}"));
        let mut sub_p = Vec::with_capacity(t_count);
        let mut sub_q = Vec::with_capacity(t_count);
        for t in 0..t_count {
            let scale = if self.elastic { 8.0 } else { 1.0 };
            let p = self.model.add_continuous(
                format!("sub_p[{k}][{}]", t + 1),
                -sub_cap_p * scale,
                sub_cap_p * scale,
            );
            let q = self.model.add_continuous(
                format!("sub_q[{k}][{}]", t + 1),
                -sub_cap_q * scale,
                sub_cap_q * scale,
            );
            if let Some(s) = sub_slack {
                for (var, cap, tag) in [(p, sub_cap_p, "p"), (q, sub_cap_q, "q")] {
                    let mut hi = LinExpr::var(var);
                    hi.add_term(s, -1.0);
                    self.model
                        .add_le(format!("sub_{tag}_hi_el[{k}][{}]", t + 1), hi, cap);
                    let mut lo = LinExpr::var(var);
                    lo.add_term(s, 1.0);
                    self.model
                        .add_ge(format!("sub_{tag}_lo_el[{k}][{}]", t + 1), lo, -cap);
                }
            }
            sub_p.push(p);
            sub_q.push(q);
        }

        // Stations.
        let mut v2g_p: BTreeMap<NodeId, Vec<VarId>> = BTreeMap::new();
        let mut v2g_q: BTreeMap<NodeId, Vec<VarId>> = BTreeMap::new();
        for node in &case.nodes {
            let Some(candidate) = &node.v2g_candidate else {
                continue;
            };
            let y = self.y_v2g[&node.id];
            let m = candidate.s_max_kva / self.s_base_kva;
            let cap_slack = self.slack("v2gcs_capacity", format!("{k}:{}", node.id));
            let mut ps = Vec::with_capacity(t_count);
            let mut qs = Vec::with_capacity(t_count);
            for t in 0..t_count {
                let p = self
                    .model
                    .add_continuous(format!("v2g_p[{k}][{}][{}]", node.id, t + 1), -m, m);
                let (q_lo, q_hi) = if self.options.reactive_support {
                    (-m, m)
                } else {
                    (0.0, 0.0)
                };
                let q = self
                    .model
                    .add_continuous(format!("v2g_q[{k}][{}][{}]", node.id, t + 1), q_lo, q_hi);
                // Build gating: |P|, |Q| <= y·M.
                for (var, tag) in [(p, "p"), (q, "q")] {
                    let mut hi = LinExpr::var(var);
                    hi.add_term(y, -m);
                    if let Some(s) = cap_slack {
                        hi.add_term(s, -1.0);
                    }
                    self.model
                        .add_le(format!("v2g_{tag}_gate_hi[{k}][{}][{}]", node.id, t + 1), hi, 0.0);
                    let mut lo = LinExpr::var(var);
                    lo.add_term(y, m);
                    if let Some(s) = cap_slack {
                        lo.add_term(s, 1.0);
                    }
                    self.model
                        .add_ge(format!("v2g_{tag}_gate_lo[{k}][{}][{}]", node.id, t + 1), lo, 0.0);
                }
                // Apparent-power capacity cone.
                let mut radius = LinExpr::scaled(y, m);
                if let Some(s) = cap_slack {
                    radius.add_term(s, 1.0);
                }
                self.model
                    .add_cone(format!("v2g_cap[{k}][{}][{}]", node.id, t + 1), p, q, radius);
                ps.push(p);
                qs.push(q);
            }
            v2g_p.insert(node.id, ps);
            v2g_q.insert(node.id, qs);
        }

        // Regional coupling: stations in a region jointly serve its profile.
        if let Some(profile) = profile {
        for region in Region::ALL {
            let stations: Vec<NodeId> = self
                .case
                .nodes
                .iter()
                .filter(|nd| nd.region == region && nd.v2g_candidate.is_some())
                .map(|nd| nd.id)
                .collect();
            if stations.is_empty() {
                continue;
            }
            // The coupling stays hard even in elastic mode: the certificate
            // asks whether the network can carry the demand, not whether the
            // demand can shrink. Station capacity slacks absorb unservable
            // profiles instead.
            let agg = &profile[&region];
            for t in 0..t_count {
                let mut sum = LinExpr::default();
                for id in &stations {
                    sum.add_term(v2g_p[id][t], 1.0);
                }
                let rhs = self.pu(agg[t]);
                self.model
                    .add_eq(format!("couple[{k}][{region}][{}]", t + 1), sum, rhs);
            }
        }
        }

        // Distributed resources.
        let mut pv_p: BTreeMap<NodeId, Vec<VarId>> = BTreeMap::new();
        let mut svc_q: BTreeMap<NodeId, Vec<VarId>> = BTreeMap::new();
        let mut ess: BTreeMap<NodeId, EssVars> = BTreeMap::new();
        let mut cb: BTreeMap<NodeId, CbVars> = BTreeMap::new();
        if self.options.dgrs_enabled {
            for node in &case.nodes {
                let d = &node.dgr_candidates;
                if let Some(pv) = &d.pv {
                    let y = self.y_pv[&node.id];
                    let mut ps = Vec::with_capacity(t_count);
                    for t in 0..t_count {
                        let cap = self.pu(pv.p_max_kw[t]);
                        let p = self
                            .model
                            .add_continuous(format!("pv_p[{k}][{}][{}]", node.id, t + 1), 0.0, cap.max(0.0));
                        let mut gate = LinExpr::var(p);
                        gate.add_term(y, -cap);
                        self.model
                            .add_le(format!("pv_gate[{k}][{}][{}]", node.id, t + 1), gate, 0.0);
                        ps.push(p);
                    }
                    pv_p.insert(node.id, ps);
                }
                if let Some(svc) = &d.svc {
                    let y = self.y_svc[&node.id];
                    let lo = self.pu(svc.q_min_kvar);
                    let hi = self.pu(svc.q_max_kvar);
                    let mut qs = Vec::with_capacity(t_count);
                    for t in 0..t_count {
                        let q = self.model.add_continuous(
                            format!("svc_q[{k}][{}][{}]", node.id, t + 1),
                            lo.min(0.0),
                            hi.max(0.0),
                        );
                        let mut upper = LinExpr::var(q);
                        upper.add_term(y, -hi);
                        self.model
                            .add_le(format!("svc_hi[{k}][{}][{}]", node.id, t + 1), upper, 0.0);
                        let mut lower = LinExpr::var(q);
                        lower.add_term(y, -lo);
                        self.model
                            .add_ge(format!("svc_lo[{k}][{}][{}]", node.id, t + 1), lower, 0.0);
                        qs.push(q);
                    }
                    svc_q.insert(node.id, qs);
                }
                if let Some(e) = &d.ess {
                    ess.insert(node.id, self.add_ess(k, node.id, e, dt));
                }
                if let Some(c) = &d.cb {
                    cb.insert(node.id, self.add_cb(k, node.id, c));
                }
            }
        }

        // OLTC tap schedule pins the substation squared voltage:
        // w_sub = v(0)² + Σ_s (v(s)² − v(s−1)²)·step_s.
        let oltc = self.oltc_spec().map(|spec| {
            let vars = self.add_oltc(k, &spec);
            let v0 = spec.tap_voltage_pu(0);
            for t in 0..t_count {
                let mut pin = LinExpr::var(w[sub][t]);
                for (s, step) in vars.steps.iter().enumerate() {
                    let v_lo = spec.tap_voltage_pu(s as u32);
                    let v_hi = spec.tap_voltage_pu(s as u32 + 1);
                    pin.add_term(step[t], -(v_hi * v_hi - v_lo * v_lo));
                }
                self.model
                    .add_eq(format!("oltc_pin[{k}][{}]", t + 1), pin, v0 * v0);
            }
            vars
        });

        // Nodal balance.
        for (ni, node) in case.nodes.iter().enumerate() {
            let (p_load, q_load) = case.scenario_load(k, node);
            for t in 0..t_count {
                let mut bal_p = LinExpr::default();
                let mut bal_q = LinExpr::default();
                for (li, line) in case.candidate_lines.iter().enumerate() {
                    if case.node_index(line.to).unwrap() == ni {
                        bal_p.add_term(flow_p[li][t], 1.0);
                        bal_q.add_term(flow_q[li][t], 1.0);
                    } else if case.node_index(line.from).unwrap() == ni {
                        bal_p.add_term(flow_p[li][t], -1.0);
                        bal_q.add_term(flow_q[li][t], -1.0);
                    }
                }
                if ni == sub {
                    bal_p.add_term(sub_p[t], 1.0);
                    bal_q.add_term(sub_q[t], 1.0);
                }
                if let Some(ps) = pv_p.get(&node.id) {
                    bal_p.add_term(ps[t], 1.0);
                }
                if let Some(e) = ess.get(&node.id) {
                    bal_p.add_term(e.p_dis[t], 1.0);
                    bal_p.add_term(e.p_ch[t], -1.0);
                }
                if let Some(ps) = v2g_p.get(&node.id) {
                    bal_p.add_term(ps[t], -1.0);
                }
                if let Some(qs) = v2g_q.get(&node.id) {
                    bal_q.add_term(qs[t], 1.0);
                }
                if let Some(qs) = svc_q.get(&node.id) {
                    bal_q.add_term(qs[t], 1.0);
                }
                if let Some(c) = cb.get(&node.id) {
                    let bank_pu = self.pu(node.dgr_candidates.cb.as_ref().unwrap().bank_kvar);
                    for step in &c.banks {
                        bal_q.add_term(step[t], bank_pu);
                    }
                }
                self.model.add_eq(
                    format!("bal_p[{k}][{}][{}]", node.id, t + 1),
                    bal_p,
                    self.pu(p_load[t]),
                );
                self.model.add_eq(
                    format!("bal_q[{k}][{}][{}]", node.id, t + 1),
                    bal_q,
                    self.pu(q_load[t]),
                );
            }
        }

        self.scenarios.push(ScenarioVars {
            flow_p,
            flow_q,
            w,
            sub_p,
            sub_q,
            v2g_p,
            v2g_q,
            pv_p,
            svc_q,
            ess,
            cb,
            oltc,
        });
    }

    fn oltc_spec(&self) -> Option<crate::case::OltcSpec> {
        if self.options.dgrs_enabled {
            self.case.oltc.clone()
        } else {
            None
        }
    }

    fn add_ess(&mut self, k: usize, id: NodeId, spec: &crate::case::EssCandidate, dt: f64) -> EssVars {
        let t_count = self.periods;
        let y = self.y_ess[&id];
        let e_lo = spec.e_min_kwh / self.s_base_kva;
        let e_hi = spec.e_max_kwh / self.s_base_kva;
        let pch_hi = self.pu(spec.p_ch_max_kw);
        let pdis_hi = self.pu(spec.p_dis_max_kw);
        let mut vars = EssVars {
            e: Vec::new(),
            p_ch: Vec::new(),
            p_dis: Vec::new(),
            t_ch: Vec::new(),
            t_dis: Vec::new(),
        };
        for t in 0..t_count {
            vars.e.push(
                self.model
                    .add_continuous(format!("ess_e[{k}][{id}][{}]", t + 1), 0.0, e_hi),
            );
            vars.p_ch.push(
                self.model
                    .add_continuous(format!("ess_pch[{k}][{id}][{}]", t + 1), 0.0, pch_hi),
            );
            vars.p_dis.push(
                self.model
                    .add_continuous(format!("ess_pdis[{k}][{id}][{}]", t + 1), 0.0, pdis_hi),
            );
            vars.t_ch
                .push(self.model.add_binary(format!("ess_tch[{k}][{id}][{}]", t + 1)));
            vars.t_dis
                .push(self.model.add_binary(format!("ess_tdis[{k}][{id}][{}]", t + 1)));
        }
        for t in 0..t_count {
            // Power gated by the mode binaries, modes gated by the build.
            let mut ch = LinExpr::var(vars.p_ch[t]);
            ch.add_term(vars.t_ch[t], -pch_hi);
            self.model
                .add_le(format!("ess_ch_cap[{k}][{id}][{}]", t + 1), ch, 0.0);
            let mut dis = LinExpr::var(vars.p_dis[t]);
            dis.add_term(vars.t_dis[t], -pdis_hi);
            self.model
                .add_le(format!("ess_dis_cap[{k}][{id}][{}]", t + 1), dis, 0.0);
            let mut excl = LinExpr::var(vars.t_ch[t]);
            excl.add_term(vars.t_dis[t], 1.0);
            self.model
                .add_le(format!("ess_excl[{k}][{id}][{}]", t + 1), excl, 1.0);
            for (bin, tag) in [(vars.t_ch[t], "ch"), (vars.t_dis[t], "dis")] {
                let mut gate = LinExpr::var(bin);
                gate.add_term(y, -1.0);
                self.model
                    .add_le(format!("ess_{tag}_built[{k}][{id}][{}]", t + 1), gate, 0.0);
            }
            // Energy band gated by the build decision.
            let mut hi = LinExpr::var(vars.e[t]);
            hi.add_term(y, -e_hi);
            self.model
                .add_le(format!("ess_e_hi[{k}][{id}][{}]", t + 1), hi, 0.0);
            let mut lo = LinExpr::var(vars.e[t]);
            lo.add_term(y, -e_lo);
            self.model
                .add_ge(format!("ess_e_lo[{k}][{id}][{}]", t + 1), lo, 0.0);
        }
        // Cyclic energy recurrence: e[t+1] = e[t] + η_ch·p_ch·Δt − p_dis·Δt/η_dis,
        // wrapping period T back onto period 1.
        for t in 0..t_count {
            let next = (t + 1) % t_count;
            let mut rec = LinExpr::var(vars.e[next]);
            rec.add_term(vars.e[t], -1.0);
            rec.add_term(vars.p_ch[t], -spec.eta_ch * dt);
            rec.add_term(vars.p_dis[t], dt / spec.eta_dis);
            self.model
                .add_eq(format!("ess_cycle[{k}][{id}][{}]", t + 1), rec, 0.0);
        }
        vars
    }

    fn add_cb(&mut self, k: usize, id: NodeId, spec: &crate::case::CbCandidate) -> CbVars {
        let t_count = self.periods;
        let y = self.y_cb[&id];
        let banks_n = spec.banks as usize;
        let mut banks: Vec<Vec<VarId>> = Vec::with_capacity(banks_n);
        for s in 0..banks_n {
            let mut per_t = Vec::with_capacity(t_count);
            for t in 0..t_count {
                per_t.push(
                    self.model
                        .add_binary(format!("cb_bank[{k}][{id}][{}][{}]", s + 1, t + 1)),
                );
            }
            banks.push(per_t);
        }
        for t in 0..t_count {
            // Lower banks switch in first; the first bank needs the build.
            let mut first = LinExpr::var(banks[0][t]);
            first.add_term(y, -1.0);
            self.model
                .add_le(format!("cb_built[{k}][{id}][{}]", t + 1), first, 0.0);
            for s in 1..banks_n {
                let mut ord = LinExpr::var(banks[s][t]);
                ord.add_term(banks[s - 1][t], -1.0);
                self.model
                    .add_le(format!("cb_order[{k}][{id}][{}][{}]", s + 1, t + 1), ord, 0.0);
            }
        }
        // Switching dynamics and the daily regulation budget.
        let mut t_in = Vec::with_capacity(t_count.saturating_sub(1));
        let mut t_de = Vec::with_capacity(t_count.saturating_sub(1));
        for t in 0..t_count.saturating_sub(1) {
            t_in.push(self.model.add_binary(format!("cb_in[{k}][{id}][{}]", t + 1)));
            t_de.push(self.model.add_binary(format!("cb_de[{k}][{id}][{}]", t + 1)));
        }
        let nmax = banks_n as f64;
        for t in 1..t_count {
            let mut delta = LinExpr::default();
            for s in 0..banks_n {
                delta.add_term(banks[s][t], 1.0);
                delta.add_term(banks[s][t - 1], -1.0);
            }
            let mut hi = delta.clone();
            hi.add_term(t_in[t - 1], -nmax);
            hi.add_term(t_de[t - 1], 1.0);
            self.model
                .add_le(format!("cb_delta_hi[{k}][{id}][{}]", t + 1), hi, 0.0);
            let mut lo = delta;
            lo.add_term(t_in[t - 1], -1.0);
            lo.add_term(t_de[t - 1], nmax);
            self.model
                .add_ge(format!("cb_delta_lo[{k}][{id}][{}]", t + 1), lo, 0.0);
            let mut excl = LinExpr::var(t_in[t - 1]);
            excl.add_term(t_de[t - 1], 1.0);
            self.model
                .add_le(format!("cb_sw_excl[{k}][{id}][{}]", t + 1), excl, 1.0);
        }
        let mut budget = LinExpr::default();
        for v in t_in.iter().chain(t_de.iter()) {
            budget.add_term(*v, 1.0);
        }
        self.model.add_le(
            format!("cb_budget[{k}][{id}]"),
            budget,
            spec.max_daily_switches as f64,
        );
        CbVars { banks, t_in, t_de }
    }

    fn add_oltc(&mut self, k: usize, spec: &crate::case::OltcSpec) -> OltcVars {
        let t_count = self.periods;
        let steps_n = spec.steps as usize;
        let mut steps: Vec<Vec<VarId>> = Vec::with_capacity(steps_n);
        for s in 0..steps_n {
            let mut per_t = Vec::with_capacity(t_count);
            for t in 0..t_count {
                per_t.push(
                    self.model
                        .add_binary(format!("oltc_step[{k}][{}][{}]", s + 1, t + 1)),
                );
            }
            steps.push(per_t);
        }
        for t in 0..t_count {
            for s in 1..steps_n {
                let mut ord = LinExpr::var(steps[s][t]);
                ord.add_term(steps[s - 1][t], -1.0);
                self.model
                    .add_le(format!("oltc_order[{k}][{}][{}]", s + 1, t + 1), ord, 0.0);
            }
        }
        let mut t_in = Vec::with_capacity(t_count.saturating_sub(1));
        let mut t_de = Vec::with_capacity(t_count.saturating_sub(1));
        for t in 0..t_count.saturating_sub(1) {
            t_in.push(self.model.add_binary(format!("oltc_in[{k}][{}]", t + 1)));
            t_de.push(self.model.add_binary(format!("oltc_de[{k}][{}]", t + 1)));
        }
        let nmax = steps_n as f64;
        for t in 1..t_count {
            let mut delta = LinExpr::default();
            for s in 0..steps_n {
                delta.add_term(steps[s][t], 1.0);
                delta.add_term(steps[s][t - 1], -1.0);
            }
            let mut hi = delta.clone();
            hi.add_term(t_in[t - 1], -nmax);
            hi.add_term(t_de[t - 1], 1.0);
            self.model
                .add_le(format!("oltc_delta_hi[{k}][{}]", t + 1), hi, 0.0);
            let mut lo = delta;
            lo.add_term(t_in[t - 1], -1.0);
            lo.add_term(t_de[t - 1], nmax);
            self.model
                .add_ge(format!("oltc_delta_lo[{k}][{}]", t + 1), lo, 0.0);
            let mut excl = LinExpr::var(t_in[t - 1]);
            excl.add_term(t_de[t - 1], 1.0);
            self.model
                .add_le(format!("oltc_sw_excl[{k}][{}]", t + 1), excl, 1.0);
        }
        let mut budget = LinExpr::default();
        for v in t_in.iter().chain(t_de.iter()) {
            budget.add_term(*v, 1.0);
        }
        self.model.add_le(
            format!("oltc_budget[{k}]"),
            budget,
            spec.max_daily_switches as f64,
        );
        OltcVars { steps, t_in, t_de }
    }

    /// Capex annualized per asset class plus flat annual O&M.
    fn add_investment_objective(&mut self) {
        let case = self.case;
        if self.elastic {
            return;
        }
        let econ = &case.economics;
        let d = econ.inflation_rate;
        let rd = |years: u32| crate::case::annualization_factor(d, years);
        for (li, line) in case.candidate_lines.iter().enumerate() {
            self.model
                .add_objective_term(self.z[li], rd(econ.lifetimes.line) * line.capex);
        }
        for node in &case.nodes {
            if let (Some(c), Some(y)) = (&node.v2g_candidate, self.y_v2g.get(&node.id)) {
                self.model
                    .add_objective_term(*y, rd(econ.lifetimes.v2gcs) * c.capex + c.om_cost);
            }
            if !self.options.dgrs_enabled {
                continue;
            }
            let dgr = &node.dgr_candidates;
            if let (Some(c), Some(y)) = (&dgr.pv, self.y_pv.get(&node.id)) {
                self.model
                    .add_objective_term(*y, rd(econ.lifetimes.pv) * c.capex + c.om_cost);
            }
            if let (Some(c), Some(y)) = (&dgr.ess, self.y_ess.get(&node.id)) {
                self.model
                    .add_objective_term(*y, rd(econ.lifetimes.ess) * c.capex + c.om_cost);
            }
            if let (Some(c), Some(y)) = (&dgr.cb, self.y_cb.get(&node.id)) {
                self.model
                    .add_objective_term(*y, rd(econ.lifetimes.cb) * c.capex + c.om_cost);
            }
            if let (Some(c), Some(y)) = (&dgr.svc, self.y_svc.get(&node.id)) {
                self.model
                    .add_objective_term(*y, rd(econ.lifetimes.svc) * c.capex + c.om_cost);
            }
        }
    }

    fn finish(self) -> Sp2Build {
        Sp2Build {
            model: self.model,
            z: self.z,
            y_v2g: self.y_v2g,
            y_pv: self.y_pv,
            y_ess: self.y_ess,
            y_cb: self.y_cb,
            y_svc: self.y_svc,
            scenarios: self.scenarios,
            slacks: self.slacks,
            options: self.options,
        }
    }
}

/// Pin every binary of `build` to the values recorded in `plan`, turning the
/// model into the convex dispatch problem over the plan's decisions.
pub(crate) fn fix_binaries_from_plan(build: &mut Sp2Build, plan: &PlanSolution) {
    let fix = |model: &mut MipModel, var: VarId, on: bool| {
        let v = &mut model.vars[var.index()];
        let val = if on { 1.0 } else { 0.0 };
        v.lb = val;
        v.ub = val;
    };
    for (li, z) in build.z.iter().enumerate() {
        fix(&mut build.model, *z, plan.built_lines[li]);
    }
    for (map, decided) in [
        (&build.y_v2g, &plan.built_v2gcs),
        (&build.y_pv, &plan.built_pv),
        (&build.y_ess, &plan.built_ess),
        (&build.y_cb, &plan.built_cb),
        (&build.y_svc, &plan.built_svc),
    ] {
        for (id, var) in map.iter() {
            fix(&mut build.model, *var, decided.get(id).copied().unwrap_or(false));
        }
    }
    for (k, sv) in build.scenarios.iter().enumerate() {
        let dispatch = &plan.scenarios[k];
        for (id, ev) in &sv.ess {
            if let Some(d) = dispatch.ess.get(id) {
                for t in 0..ev.t_ch.len() {
                    fix(&mut build.model, ev.t_ch[t], d.charging[t]);
                    fix(&mut build.model, ev.t_dis[t], d.discharging[t]);
                }
            }
        }
        for (id, cv) in &sv.cb {
            if let Some(d) = dispatch.cb.get(id) {
                for (s, bank) in cv.banks.iter().enumerate() {
                    for t in 0..bank.len() {
                        fix(&mut build.model, bank[t], d.banks_on[t] as usize > s);
                    }
                }
                for t in 0..cv.t_in.len() {
                    fix(&mut build.model, cv.t_in[t], d.switch_in[t]);
                    fix(&mut build.model, cv.t_de[t], d.switch_out[t]);
                }
            }
        }
        if let (Some(ov), Some(d)) = (&sv.oltc, &dispatch.oltc) {
            for (s, step) in ov.steps.iter().enumerate() {
                for t in 0..step.len() {
                    fix(&mut build.model, step[t], d.tap[t] as usize > s);
                }
            }
            for t in 0..ov.t_in.len() {
                fix(&mut build.model, ov.t_in[t], d.switch_in[t]);
                fix(&mut build.model, ov.t_de[t], d.switch_out[t]);
            }
        }
    }
}

/// Best-effort infeasibility hint: re-solve with elastic slacks and report
/// the families that end up strictly positive.
pub(crate) fn diagnose_infeasibility(
    case: &NetworkCase,
    agg_profiles: &[RegionProfiles],
    options: PlanOptions,
    backend: &dyn MilpBackend,
    limits: &SolveLimits,
    oa: &OaOptions,
) -> Vec<String> {
    let Ok(build) = Sp2Build::new(case, agg_profiles, options, true) else {
        return Vec::new();
    };
    match solve_with_oa(backend, &build.model, limits, oa) {
        Ok(report) if report.has_solution() => positive_slacks(&build, &report.values),
        _ => Vec::new(),
    }
}

/// Slack entries strictly above tolerance, formatted with their magnitude.
pub(crate) fn positive_slacks(build: &Sp2Build, values: &[f64]) -> Vec<String> {
    build
        .slacks
        .iter()
        .filter(|(_, v)| values[v.index()] > 1e-6)
        .map(|(name, v)| format!("{name} (slack {:.6} pu)", values[v.index()]))
        .collect()
}
