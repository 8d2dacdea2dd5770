//! Problem data model: network cases, tariffs, economics and case-file I/O.
//!
//! A [`NetworkCase`] is the full planning instance: nodes with load profiles
//! and device candidates, candidate lines, a substation, and one or more
//! fleet scenarios with probabilities. Cases are serialized as versioned JSON
//! (see `docs/case-schema.md` in the repository root) and validated on load;
//! after validation every type is immutable and safe to share across solves.
//!
//! Monetary values are uniformly expressed in units of 10^4 CNY; energy
//! tariffs in CNY/kWh. Electrical quantities at the interface are engineering
//! units (kW, kvar, kVA, Ω, kWh); solvers convert to per-unit internally on
//! the case-declared base.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheduler::AevFleet;

/// Node identifier as it appears in case files.
pub type NodeId = u32;

/// Current case-file schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Errors raised while loading or validating a case.
#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("case file does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid case: {0}")]
    Invalid(String),
    #[error("scenario probabilities sum to {0}")]
    ProbabilitySum(f64),
    #[error("node {0} is not reachable from the substation through candidate lines")]
    UnreachableNode(NodeId),
    #[error("period index {0} out of range 1..={1}")]
    PeriodOutOfRange(usize, usize),
    #[error("total load energy is zero; penetration rate undefined")]
    ZeroTotalLoad,
    #[error("csv import error: {0}")]
    Csv(#[from] csv::Error),
}

/// Area tag used to couple station load to the fleet that produced it.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Residential,
    Commercial,
    Industrial,
    Office,
}

impl Region {
    /// All region tags, in a fixed order.
    pub const ALL: [Region; 4] = [
        Region::Residential,
        Region::Commercial,
        Region::Industrial,
        Region::Office,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Residential => "residential",
            Region::Commercial => "commercial",
            Region::Industrial => "industrial",
            Region::Office => "office",
        }
    }

    pub fn parse(s: &str) -> Option<Region> {
        match s.trim().to_ascii_lowercase().as_str() {
            "residential" => Some(Region::Residential),
            "commercial" => Some(Region::Commercial),
            "industrial" => Some(Region::Industrial),
            "office" => Some(Region::Office),
            _ => None,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-unit base shared by all electrical quantities of a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuBase {
    pub s_base_mva: f64,
    pub v_base_kv: f64,
}

impl Default for PuBase {
    fn default() -> Self {
        PuBase {
            s_base_mva: 10.0,
            v_base_kv: 10.0,
        }
    }
}

impl PuBase {
    pub fn s_base_kva(&self) -> f64 {
        self.s_base_mva * 1000.0
    }

    /// Impedance base in Ω (kV²/MVA).
    pub fn z_base_ohm(&self) -> f64 {
        self.v_base_kv * self.v_base_kv / self.s_base_mva
    }
}

/// Squared-voltage operating band, in per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageBounds {
    pub v_min_pu: f64,
    pub v_max_pu: f64,
}

impl Default for VoltageBounds {
    fn default() -> Self {
        VoltageBounds {
            v_min_pu: 0.9,
            v_max_pu: 1.1,
        }
    }
}

/// Substation import/export capability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstationSpec {
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
}

/// On-load tap changer at the substation. The device is pre-existing: it has
/// no build decision and no capex, only a tap schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OltcSpec {
    /// Number of tap increments spanning `[v_min_pu, v_max_pu]`.
    pub steps: u32,
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    /// Daily budget of tap movements.
    pub max_daily_switches: u32,
}

impl Default for OltcSpec {
    fn default() -> Self {
        OltcSpec {
            steps: 20,
            v_min_pu: 0.9,
            v_max_pu: 1.1,
            max_daily_switches: 6,
        }
    }
}

impl OltcSpec {
    /// Tap voltage (pu) at position `pos` ∈ 0..=steps.
    pub fn tap_voltage_pu(&self, pos: u32) -> f64 {
        let span = self.v_max_pu - self.v_min_pu;
        self.v_min_pu + span * pos as f64 / self.steps as f64
    }
}

/// How a node can acquire a V2G charging station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum V2gMode {
    Retrofit,
    New,
}

/// V2G charging-station candidate at a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct V2gCandidate {
    pub mode: V2gMode,
    /// Construction or retrofit cost, 10^4 CNY.
    pub capex: f64,
    /// Annual operation & maintenance cost, 10^4 CNY/yr.
    pub om_cost: f64,
    /// Apparent-power capacity of the station inverter bank, kVA.
    pub s_max_kva: f64,
    /// Optional minimum loading of a built station, kVA. Nonconvex as a
    /// model constraint, so it is checked post-hoc by the verifier instead.
    #[serde(default)]
    pub s_min_kva: f64,
}

/// Photovoltaic candidate. `p_max_kw` is the per-period availability ceiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvCandidate {
    pub capex: f64,
    pub om_cost: f64,
    pub p_max_kw: Vec<f64>,
}

/// Energy-storage candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssCandidate {
    pub capex: f64,
    pub om_cost: f64,
    pub e_min_kwh: f64,
    pub e_max_kwh: f64,
    pub p_ch_max_kw: f64,
    pub p_dis_max_kw: f64,
    /// Charging efficiency; stored energy gained per unit drawn.
    pub eta_ch: f64,
    /// Discharging efficiency; stored energy spent is `p_dis / eta_dis`.
    pub eta_dis: f64,
}

/// Capacitor-bank candidate (discrete reactive support).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbCandidate {
    pub capex: f64,
    pub om_cost: f64,
    pub banks: u32,
    pub bank_kvar: f64,
    /// Output with zero banks switched in.
    pub q_min_kvar: f64,
    pub max_daily_switches: u32,
}

/// Static var compensator candidate (continuous reactive support).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcCandidate {
    pub capex: f64,
    pub om_cost: f64,
    pub q_min_kvar: f64,
    pub q_max_kvar: f64,
}

/// Distributed-resource candidates available at a node.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DgrCandidates {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pv: Option<PvCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess: Option<EssCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cb: Option<CbCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svc: Option<SvcCandidate>,
}

impl DgrCandidates {
    pub fn is_empty(&self) -> bool {
        self.pv.is_none() && self.ess.is_none() && self.cb.is_none() && self.svc.is_none()
    }
}

/// A network node: load profile, region tag and device candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub region: Region,
    pub p_load_kw: Vec<f64>,
    pub q_load_kvar: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v2g_candidate: Option<V2gCandidate>,
    #[serde(default, skip_serializing_if = "DgrCandidates::is_empty")]
    pub dgr_candidates: DgrCandidates,
}

/// A candidate distribution line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub s_max_kva: f64,
    pub length_km: f64,
    /// Total construction cost, 10^4 CNY.
    pub capex: f64,
}

/// Time-of-use tariff faced by the fleet and priced into network losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    /// Energy price per period, CNY/kWh.
    pub price: Vec<f64>,
    /// Price charged to AEVs for charging; defaults to `price`.
    pub charge_price: Vec<f64>,
    /// Subsidy paid to AEVs for discharging; defaults to `price`.
    pub discharge_subsidy: Vec<f64>,
}

/// Three-tier time-of-use price, CNY/kWh, for a 1-based hour `t` in 1..=24.
///
/// Peak 1.1121 on t ∈ [9,15) ∪ [19,22), shoulder 0.6542 on
/// t ∈ [7,9) ∪ [15,19) ∪ [22,24), valley 0.2486 on t ∈ [1,7) ∪ {24}.
pub fn tou_price(t: usize) -> Result<f64, CaseError> {
    if !(1..=24).contains(&t) {
        return Err(CaseError::PeriodOutOfRange(t, 24));
    }
    Ok(if (9..15).contains(&t) || (19..22).contains(&t) {
        1.1121
    } else if (7..9).contains(&t) || (15..19).contains(&t) || (22..24).contains(&t) {
        0.6542
    } else {
        0.2486
    })
}

impl Tariff {
    /// The default 24-period three-tier time-of-use tariff, with charging
    /// priced at the tariff and discharging subsidised at the same rate.
    pub fn tou_default() -> Tariff {
        let price: Vec<f64> = (1..=24).map(|t| tou_price(t).unwrap()).collect();
        Tariff {
            charge_price: price.clone(),
            discharge_subsidy: price.clone(),
            price,
        }
    }

    /// Flat tariff, mostly for tests.
    pub fn flat(periods: usize, price: f64) -> Tariff {
        Tariff {
            price: vec![price; periods],
            charge_price: vec![price; periods],
            discharge_subsidy: vec![price; periods],
        }
    }

    pub fn periods(&self) -> usize {
        self.price.len()
    }

    fn validate(&self, periods: usize) -> Result<(), CaseError> {
        for (label, v) in [
            ("price", &self.price),
            ("charge_price", &self.charge_price),
            ("discharge_subsidy", &self.discharge_subsidy),
        ] {
            if v.len() != periods {
                return Err(CaseError::Invalid(format!(
                    "tariff.{label} has {} entries, expected {periods}",
                    v.len()
                )));
            }
        }
        if let Some(p) = self.price.iter().find(|p| **p <= 0.0) {
            return Err(CaseError::Invalid(format!(
                "tariff.price must be positive, found {p}"
            )));
        }
        Ok(())
    }
}

/// Economic lifetime per asset class, years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetLifetimes {
    pub v2gcs: u32,
    pub pv: u32,
    pub ess: u32,
    pub cb: u32,
    pub svc: u32,
    pub line: u32,
}

impl Default for AssetLifetimes {
    fn default() -> Self {
        AssetLifetimes {
            v2gcs: 10,
            pv: 15,
            ess: 20,
            cb: 15,
            svc: 20,
            line: 20,
        }
    }
}

/// Discounting and calendar parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomicParams {
    /// Inflation (discount) rate per year, as a fraction.
    pub inflation_rate: f64,
    #[serde(default)]
    pub lifetimes: AssetLifetimes,
    /// Length of one period in hours.
    pub hours_per_period: f64,
    pub days_per_year: f64,
}

impl Default for EconomicParams {
    fn default() -> Self {
        EconomicParams {
            inflation_rate: 0.08,
            lifetimes: AssetLifetimes::default(),
            hours_per_period: 1.0,
            days_per_year: 365.0,
        }
    }
}

/// Annualized cost coefficient `d(1+d)^y / ((1+d)^y - 1)` for rate `d` and an
/// asset life of `years`.
pub fn annualization_factor(d: f64, years: u32) -> f64 {
    assert!(d > 0.0, "annualization_factor requires d > 0");
    assert!(years >= 1, "annualization_factor requires years >= 1");
    let g = (1.0 + d).powi(years as i32);
    d * g / (g - 1.0)
}

/// Per-node load override inside a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOverride {
    pub p_load_kw: Vec<f64>,
    pub q_load_kvar: Vec<f64>,
}

/// One stochastic scenario: a probability mass, the fleet that materialises,
/// and optional load overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub probability: f64,
    #[serde(default)]
    pub fleet: AevFleet,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub load_overrides: BTreeMap<NodeId, LoadOverride>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            probability: 1.0,
            fleet: AevFleet::default(),
            load_overrides: BTreeMap::new(),
        }
    }
}

/// The full planning instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub base: PuBase,
    pub periods: usize,
    pub substation_node: NodeId,
    #[serde(default)]
    pub voltage_bounds: VoltageBounds,
    pub substation: SubstationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oltc: Option<OltcSpec>,
    #[serde(default)]
    pub economics: EconomicParams,
    #[serde(default = "Tariff::tou_default")]
    pub tariff: Tariff,
    pub nodes: Vec<NodeSpec>,
    pub candidate_lines: Vec<LineSpec>,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<Scenario>,
}

fn default_scenarios() -> Vec<Scenario> {
    vec![Scenario::default()]
}

impl NetworkCase {
    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Index of a node id within `self.nodes`.
    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Regions that have at least one V2GCS candidate.
    pub fn regions_with_stations(&self) -> BTreeSet<Region> {
        self.nodes
            .iter()
            .filter(|n| n.v2g_candidate.is_some())
            .map(|n| n.region)
            .collect()
    }

    /// Effective load at `node` in scenario `k`, honouring overrides.
    pub fn scenario_load<'a>(&'a self, k: usize, node: &'a NodeSpec) -> (&'a [f64], &'a [f64]) {
        if let Some(ov) = self.scenarios[k].load_overrides.get(&node.id) {
            (&ov.p_load_kw, &ov.q_load_kvar)
        } else {
            (&node.p_load_kw, &node.q_load_kvar)
        }
    }

    /// Total base-case load energy over the horizon, kWh.
    pub fn total_load_energy_kwh(&self) -> f64 {
        let dt = self.economics.hours_per_period;
        self.nodes
            .iter()
            .flat_map(|n| n.p_load_kw.iter())
            .sum::<f64>()
            * dt
    }

    /// Check every invariant of the data model.
    pub fn validate(&self) -> Result<(), CaseError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CaseError::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.periods == 0 {
            return Err(CaseError::Invalid("periods must be >= 1".into()));
        }
        if self.base.s_base_mva <= 0.0 || self.base.v_base_kv <= 0.0 {
            return Err(CaseError::Invalid("per-unit base must be positive".into()));
        }
        if self.voltage_bounds.v_min_pu <= 0.0
            || self.voltage_bounds.v_min_pu >= self.voltage_bounds.v_max_pu
        {
            return Err(CaseError::Invalid(
                "voltage bounds must satisfy 0 < v_min < v_max".into(),
            ));
        }
        if self.substation.p_max_kw <= 0.0 || self.substation.q_max_kvar <= 0.0 {
            return Err(CaseError::Invalid("substation capacity must be positive".into()));
        }
        if self.economics.inflation_rate <= 0.0 {
            return Err(CaseError::Invalid("inflation_rate must be > 0".into()));
        }
        let lt = &self.economics.lifetimes;
        if [lt.v2gcs, lt.pv, lt.ess, lt.cb, lt.svc, lt.line]
            .iter()
            .any(|y| *y < 1)
        {
            return Err(CaseError::Invalid("asset lifetimes must be >= 1 year".into()));
        }
        if self.economics.hours_per_period <= 0.0 || self.economics.days_per_year <= 0.0 {
            return Err(CaseError::Invalid("calendar parameters must be positive".into()));
        }
        self.tariff.validate(self.periods)?;

        // Nodes: unique ids, profile lengths, non-negative loads, candidate sanity.
        let mut seen = BTreeSet::new();
        for node in &self.nodes {
            if !seen.insert(node.id) {
                return Err(CaseError::Invalid(format!("duplicate node id {}", node.id)));
            }
            if node.p_load_kw.len() != self.periods || node.q_load_kvar.len() != self.periods {
                return Err(CaseError::Invalid(format!(
                    "node {}: load profile length must equal periods={}",
                    node.id, self.periods
                )));
            }
            if node.p_load_kw.iter().any(|p| *p < 0.0)
                || node.q_load_kvar.iter().any(|q| *q < 0.0)
            {
                return Err(CaseError::Invalid(format!(
                    "node {}: loads must be non-negative",
                    node.id
                )));
            }
            if let Some(v2g) = &node.v2g_candidate {
                if v2g.capex < 0.0 || v2g.om_cost < 0.0 {
                    return Err(CaseError::Invalid(format!(
                        "node {}: V2GCS costs must be non-negative",
                        node.id
                    )));
                }
                if v2g.s_max_kva <= 0.0 {
                    return Err(CaseError::Invalid(format!(
                        "node {}: V2GCS capacity must be positive",
                        node.id
                    )));
                }
            }
            validate_dgrs(node, self.periods)?;
        }
        if !seen.contains(&self.substation_node) {
            return Err(CaseError::Invalid(format!(
                "substation node {} is not a node of the case",
                self.substation_node
            )));
        }

        // Lines.
        for (idx, line) in self.candidate_lines.iter().enumerate() {
            if line.r_ohm <= 0.0 {
                return Err(CaseError::Invalid(format!("line #{idx}: r must be > 0")));
            }
            if line.x_ohm < 0.0 {
                return Err(CaseError::Invalid(format!("line #{idx}: x must be >= 0")));
            }
            if line.s_max_kva <= 0.0 {
                return Err(CaseError::Invalid(format!("line #{idx}: s_max must be > 0")));
            }
            if line.capex < 0.0 || line.length_km < 0.0 {
                return Err(CaseError::Invalid(format!(
                    "line #{idx}: capex and length must be non-negative"
                )));
            }
            if !seen.contains(&line.from) || !seen.contains(&line.to) {
                return Err(CaseError::Invalid(format!(
                    "line #{idx}: endpoint {} or {} is not a node",
                    line.from, line.to
                )));
            }
            if line.from == line.to {
                return Err(CaseError::Invalid(format!("line #{idx}: self-loop")));
            }
        }

        // Reachability from the substation through candidate lines.
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for line in &self.candidate_lines {
            adj.entry(line.from).or_default().push(line.to);
            adj.entry(line.to).or_default().push(line.from);
        }
        let mut visited = BTreeSet::new();
        let mut queue = vec![self.substation_node];
        visited.insert(self.substation_node);
        while let Some(n) = queue.pop() {
            for m in adj.get(&n).into_iter().flatten() {
                if visited.insert(*m) {
                    queue.push(*m);
                }
            }
        }
        for node in &self.nodes {
            if !visited.contains(&node.id) {
                return Err(CaseError::UnreachableNode(node.id));
            }
        }

        // Scenarios.
        if self.scenarios.is_empty() {
            return Err(CaseError::Invalid("at least one scenario is required".into()));
        }
        let psum: f64 = self.scenarios.iter().map(|s| s.probability).sum();
        if (psum - 1.0).abs() > 1e-9 {
            return Err(CaseError::ProbabilitySum(psum));
        }
        for (k, sc) in self.scenarios.iter().enumerate() {
            if sc.probability < 0.0 {
                return Err(CaseError::Invalid(format!(
                    "scenario {k}: probability must be non-negative"
                )));
            }
            sc.fleet
                .validate(self.periods)
                .map_err(|e| CaseError::Invalid(format!("scenario {k}: {e}")))?;
            for (id, ov) in &sc.load_overrides {
                if !seen.contains(id) {
                    return Err(CaseError::Invalid(format!(
                        "scenario {k}: load override for unknown node {id}"
                    )));
                }
                if ov.p_load_kw.len() != self.periods || ov.q_load_kvar.len() != self.periods {
                    return Err(CaseError::Invalid(format!(
                        "scenario {k}: override for node {id} has wrong profile length"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Serialize to pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialization cannot fail")
    }

    /// Write the case to a file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CaseError> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|source| CaseError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }
}

fn validate_dgrs(node: &NodeSpec, periods: usize) -> Result<(), CaseError> {
    let d = &node.dgr_candidates;
    let bad = |msg: String| Err(CaseError::Invalid(format!("node {}: {msg}", node.id)));
    if let Some(pv) = &d.pv {
        if pv.capex < 0.0 || pv.om_cost < 0.0 {
            return bad("PV costs must be non-negative".into());
        }
        if pv.p_max_kw.len() != periods {
            return bad(format!("PV profile length must equal periods={periods}"));
        }
        if pv.p_max_kw.iter().any(|p| *p < 0.0) {
            return bad("PV availability must be non-negative".into());
        }
    }
    if let Some(ess) = &d.ess {
        if ess.capex < 0.0 || ess.om_cost < 0.0 {
            return bad("ESS costs must be non-negative".into());
        }
        if ess.e_min_kwh > ess.e_max_kwh {
            return bad("ESS energy bounds must satisfy e_min <= e_max".into());
        }
        if ess.e_min_kwh < 0.0 || ess.p_ch_max_kw < 0.0 || ess.p_dis_max_kw < 0.0 {
            return bad("ESS limits must be non-negative".into());
        }
        if ess.eta_ch <= 0.0 || ess.eta_ch > 1.0 || ess.eta_dis <= 0.0 || ess.eta_dis > 1.0 {
            return bad("ESS efficiencies must lie in (0, 1]".into());
        }
    }
    if let Some(cb) = &d.cb {
        if cb.capex < 0.0 || cb.om_cost < 0.0 {
            return bad("CB costs must be non-negative".into());
        }
        if cb.banks == 0 || cb.bank_kvar <= 0.0 {
            return bad("CB must have at least one bank of positive size".into());
        }
    }
    if let Some(svc) = &d.svc {
        if svc.capex < 0.0 || svc.om_cost < 0.0 {
            return bad("SVC costs must be non-negative".into());
        }
        if svc.q_min_kvar > svc.q_max_kvar {
            return bad("SVC bounds must satisfy q_min <= q_max".into());
        }
    }
    Ok(())
}

/// Load and validate a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, CaseError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|source| CaseError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    let case: NetworkCase = serde_json::from_str(&text)?;
    case.validate()?;
    Ok(case)
}

/// Apply a CSV of load-profile rows `(node_id, t, p_kw, q_kvar)` on top of a
/// case's base loads. `t` is 1-based.
pub fn apply_load_csv(case: &mut NetworkCase, path: impl AsRef<Path>) -> Result<usize, CaseError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(CaseError::Csv)?;
    let periods = case.periods;
    let mut applied = 0usize;
    for record in rdr.deserialize::<LoadRow>() {
        let row = record?;
        if !(1..=periods).contains(&row.t) {
            return Err(CaseError::PeriodOutOfRange(row.t, periods));
        }
        let node = case
            .nodes
            .iter_mut()
            .find(|n| n.id == row.node_id)
            .ok_or_else(|| CaseError::Invalid(format!("unknown node id {}", row.node_id)))?;
        node.p_load_kw[row.t - 1] = row.p_kw;
        node.q_load_kvar[row.t - 1] = row.q_kvar;
        applied += 1;
    }
    case.validate()?;
    Ok(applied)
}

#[derive(Debug, Deserialize)]
struct LoadRow {
    node_id: NodeId,
    t: usize,
    p_kw: f64,
    q_kvar: f64,
}

/// Fleet energy capacity over connected periods divided by total load energy.
pub fn penetration_rate(fleet: &AevFleet, case: &NetworkCase) -> Result<f64, CaseError> {
    let denom = case.total_load_energy_kwh();
    if denom <= 0.0 {
        return Err(CaseError::ZeroTotalLoad);
    }
    let numer: f64 = fleet
        .vehicles
        .iter()
        .map(|v| v.e_max_kwh * v.window_len() as f64)
        .sum();
    Ok(numer / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::AevSpec;

    fn tiny_case() -> NetworkCase {
        let mk_node = |id: NodeId, region: Region, p: f64| NodeSpec {
            id,
            region,
            p_load_kw: vec![p; 24],
            q_load_kvar: vec![p * 0.4; 24],
            v2g_candidate: None,
            dgr_candidates: DgrCandidates::default(),
        };
        NetworkCase {
            schema_version: SCHEMA_VERSION,
            name: "tiny".into(),
            base: PuBase::default(),
            periods: 24,
            substation_node: 1,
            voltage_bounds: VoltageBounds::default(),
            substation: SubstationSpec {
                p_max_kw: 5000.0,
                q_max_kvar: 4000.0,
            },
            oltc: None,
            economics: EconomicParams::default(),
            tariff: Tariff::tou_default(),
            nodes: vec![
                mk_node(1, Region::Office, 0.0),
                mk_node(2, Region::Office, 100.0),
                mk_node(3, Region::Residential, 80.0),
            ],
            candidate_lines: vec![
                LineSpec {
                    from: 1,
                    to: 2,
                    r_ohm: 0.1,
                    x_ohm: 0.08,
                    s_max_kva: 1000.0,
                    length_km: 1.0,
                    capex: 23.30,
                },
                LineSpec {
                    from: 2,
                    to: 3,
                    r_ohm: 0.1,
                    x_ohm: 0.08,
                    s_max_kva: 1000.0,
                    length_km: 1.0,
                    capex: 23.30,
                },
            ],
            scenarios: vec![Scenario::default()],
        }
    }

    #[test]
    fn annualization_matches_hand_values() {
        assert!((annualization_factor(0.08, 10) - 0.149029).abs() < 1e-5);
        assert!((annualization_factor(0.08, 1) - 1.08).abs() < 1e-12);
        assert!((annualization_factor(0.10, 20) - 0.117460).abs() < 1e-5);
    }

    #[test]
    fn annualization_decreasing_and_limits_to_rate() {
        let d = 0.07;
        let mut prev = f64::INFINITY;
        for years in 1..=120 {
            let f = annualization_factor(d, years);
            assert!(f < prev, "must be strictly decreasing at years={years}");
            prev = f;
        }
        assert!((annualization_factor(d, 500) - d).abs() < 1e-6);
    }

    #[test]
    fn tou_published_prices() {
        assert_eq!(tou_price(10).unwrap(), 1.1121);
        assert_eq!(tou_price(8).unwrap(), 0.6542);
        assert_eq!(tou_price(24).unwrap(), 0.2486);
    }

    #[test]
    fn tou_covers_all_periods() {
        let mut peak = 0;
        let mut shoulder = 0;
        let mut valley = 0;
        for t in 1..=24 {
            match tou_price(t).unwrap() {
                p if p == 1.1121 => peak += 1,
                p if p == 0.6542 => shoulder += 1,
                p if p == 0.2486 => valley += 1,
                p => panic!("unexpected price {p} at t={t}"),
            }
        }
        assert_eq!((peak, shoulder, valley), (9, 8, 7));
        assert!(tou_price(0).is_err());
        assert!(tou_price(25).is_err());
    }

    #[test]
    fn probability_sum_enforced() {
        let mut case = tiny_case();
        case.scenarios = vec![
            Scenario {
                probability: 0.6,
                ..Default::default()
            },
            Scenario {
                probability: 0.5,
                ..Default::default()
            },
        ];
        match case.validate() {
            Err(CaseError::ProbabilitySum(p)) => assert!((p - 1.1).abs() < 1e-12),
            other => panic!("expected probability-sum error, got {other:?}"),
        }
        case.scenarios[1].probability = 0.4;
        case.validate().unwrap();
    }

    #[test]
    fn unreachable_node_rejected() {
        let mut case = tiny_case();
        case.candidate_lines.pop();
        match case.validate() {
            Err(CaseError::UnreachableNode(3)) => {}
            other => panic!("expected unreachable node 3, got {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_preserves_case() {
        let case = tiny_case();
        let text = case.to_json();
        let parsed: NetworkCase = serde_json::from_str(&text).unwrap();
        assert_eq!(case, parsed);
    }

    #[test]
    fn penetration_rate_examples() {
        let mut case = tiny_case();
        // Shape total load to exactly 132,353 kWh over the horizon.
        let total: f64 = case.total_load_energy_kwh();
        let scale = 132_353.0 / total;
        for node in &mut case.nodes {
            for p in &mut node.p_load_kw {
                *p *= scale;
            }
        }
        let fleet = AevFleet {
            vehicles: vec![AevSpec {
                id: 1,
                arrive: 8,
                depart: 17,
                e_initial_kwh: 30.0,
                e_target_kwh: 80.0,
                e_min_kwh: 9.0,
                e_max_kwh: 90.0,
                p_charge_max_kw: 12.0,
                p_discharge_max_kw: 12.0,
                region: Region::Office,
            }],
        };
        let pen = penetration_rate(&fleet, &case).unwrap();
        assert!((pen - 0.0068).abs() < 1e-4, "got {pen}");

        let empty = AevFleet::default();
        assert_eq!(penetration_rate(&empty, &case).unwrap(), 0.0);

        // Fleet energy equal to total load -> ratio 1.
        let window = 10.0;
        let one = AevFleet {
            vehicles: vec![AevSpec {
                e_max_kwh: 132_353.0 / window,
                ..fleet.vehicles[0].clone()
            }],
        };
        let pen = penetration_rate(&one, &case).unwrap();
        assert!((pen - 1.0).abs() < 1e-9);
    }

    #[test]
    fn load_csv_import() {
        let mut case = tiny_case();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loads.csv");
        std::fs::write(&path, "node_id,t,p_kw,q_kvar\n2,5,250.0,90.0\n").unwrap();
        let n = apply_load_csv(&mut case, &path).unwrap();
        assert_eq!(n, 1);
        assert_eq!(case.nodes[1].p_load_kw[4], 250.0);
        assert_eq!(case.nodes[1].q_load_kvar[4], 90.0);
    }
}
