//! Deterministic case and fleet generation.
//!
//! Ships the public IEEE 33-bus feeder dressed with candidate ties and
//! device candidates, a synthetic 47-node four-region system shaped like the
//! published region layout (the real network data is proprietary), small
//! oracle fixtures used by tests and demos, and a fleet generator that hits
//! a requested penetration rate.
//!
//! Everything here is keyed by explicit seeds; the same inputs always
//! produce byte-identical cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::case::{
    AssetLifetimes, CbCandidate, DgrCandidates, EconomicParams, EssCandidate, LineSpec,
    NetworkCase, NodeId, NodeSpec, OltcSpec, PuBase, PvCandidate, Region, Scenario,
    SubstationSpec, SvcCandidate, Tariff, V2gCandidate, V2gMode, VoltageBounds, SCHEMA_VERSION,
};
use crate::scheduler::{AevFleet, AevSpec};

#[derive(Debug, Error)]
pub enum CasegenError {
    #[error("target penetration must lie in (0, 1], got {0}")]
    BadPenetration(f64),
    #[error("target penetration {0} unreachable with the configured vehicle bounds")]
    Unreachable(f64),
    #[error("region mix must have positive total weight")]
    BadRegionMix,
}

/// Construction and O&M cost constants shared by the bundled cases
/// (10^4 CNY; stations in CNY ¥ 10^4 per unit, lines per km).
pub mod costs {
    pub const V2G_OM: f64 = 4.70;
    pub const V2G_RETROFIT: f64 = 84.97;
    pub const V2G_NEW: f64 = 194.36;
    pub const PV_OM: f64 = 0.50;
    pub const PV_CAPEX: f64 = 17.65;
    pub const ESS_OM: f64 = 1.34;
    pub const ESS_CAPEX: f64 = 24.94;
    pub const CB_OM: f64 = 0.55;
    pub const CB_CAPEX: f64 = 10.38;
    pub const SVC_OM: f64 = 0.65;
    pub const SVC_CAPEX: f64 = 11.85;
    pub const LINE_PER_KM: f64 = 23.30;
}

/// Diurnal load shape per region, 24 entries peaking at 1.0.
pub fn load_shape(region: Region) -> [f64; 24] {
    match region {
        Region::Office => [
            0.30, 0.30, 0.30, 0.30, 0.35, 0.45, 0.60, 0.80, 0.95, 1.00, 1.00, 0.95, 0.90, 0.95,
            1.00, 0.95, 0.85, 0.70, 0.50, 0.40, 0.35, 0.30, 0.30, 0.30,
        ],
        Region::Residential => [
            0.50, 0.45, 0.40, 0.40, 0.40, 0.45, 0.55, 0.65, 0.60, 0.55, 0.50, 0.55, 0.60, 0.55,
            0.50, 0.55, 0.65, 0.80, 0.95, 1.00, 0.95, 0.85, 0.70, 0.60,
        ],
        Region::Industrial => [
            0.60, 0.60, 0.60, 0.65, 0.70, 0.80, 0.90, 1.00, 1.00, 1.00, 0.95, 0.90, 0.95, 1.00,
            1.00, 0.95, 0.90, 0.80, 0.70, 0.65, 0.60, 0.60, 0.60, 0.60,
        ],
        Region::Commercial => [
            0.35, 0.30, 0.30, 0.30, 0.30, 0.35, 0.50, 0.70, 0.85, 0.95, 1.00, 1.00, 0.95, 0.95,
            1.00, 1.00, 0.95, 0.90, 0.90, 0.85, 0.70, 0.55, 0.45, 0.40,
        ],
    }
}

/// PV availability ceiling: a daylight bell over 06:00–22:00 peaking at
/// 14:00, scaled to `peak_kw`.
pub fn pv_profile(peak_kw: f64) -> Vec<f64> {
    (1..=24)
        .map(|t| {
            let arg = std::f64::consts::PI * (t as f64 - 14.0) / 16.0;
            let c = arg.cos();
            if (t as f64 - 14.0).abs() >= 8.0 || c <= 0.0 {
                0.0
            } else {
                peak_kw * c * c
            }
        })
        .collect()
}

fn profile(region: Region, peak_kw: f64) -> Vec<f64> {
    load_shape(region).iter().map(|s| s * peak_kw).collect()
}

fn default_dgrs() -> DgrCandidates {
    DgrCandidates::default()
}

fn pv_candidate(peak_kw: f64) -> PvCandidate {
    PvCandidate {
        capex: costs::PV_CAPEX,
        om_cost: costs::PV_OM,
        p_max_kw: pv_profile(peak_kw),
    }
}

fn ess_candidate() -> EssCandidate {
    EssCandidate {
        capex: costs::ESS_CAPEX,
        om_cost: costs::ESS_OM,
        e_min_kwh: 0.0,
        e_max_kwh: 800.0,
        p_ch_max_kw: 200.0,
        p_dis_max_kw: 300.0,
        eta_ch: 0.9,
        eta_dis: 1.0 / 1.1,
    }
}

fn cb_candidate() -> CbCandidate {
    CbCandidate {
        capex: costs::CB_CAPEX,
        om_cost: costs::CB_OM,
        banks: 5,
        bank_kvar: 75.0,
        q_min_kvar: 0.0,
        max_daily_switches: 5,
    }
}

fn svc_candidate() -> SvcCandidate {
    SvcCandidate {
        capex: costs::SVC_CAPEX,
        om_cost: costs::SVC_OM,
        q_min_kvar: -50.0,
        q_max_kvar: 250.0,
    }
}

fn v2g(mode: V2gMode, s_max_kva: f64) -> V2gCandidate {
    V2gCandidate {
        mode,
        capex: match mode {
            V2gMode::Retrofit => costs::V2G_RETROFIT,
            V2gMode::New => costs::V2G_NEW,
        },
        om_cost: costs::V2G_OM,
        s_max_kva,
        s_min_kva: 0.0,
    }
}

fn line(from: NodeId, to: NodeId, r: f64, x: f64, s_max_kva: f64) -> LineSpec {
    // Length synthesized from impedance magnitude at a nominal 0.6 Ω/km.
    let length_km = (r.hypot(x) / 0.6).clamp(0.2, 3.0);
    LineSpec {
        from,
        to,
        r_ohm: r,
        x_ohm: x,
        s_max_kva,
        length_km,
        capex: costs::LINE_PER_KM * length_km,
    }
}

fn base_case(name: &str, base: PuBase, substation: SubstationSpec, oltc: Option<OltcSpec>) -> NetworkCase {
    NetworkCase {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        base,
        periods: 24,
        substation_node: 1,
        voltage_bounds: VoltageBounds::default(),
        substation,
        oltc,
        economics: EconomicParams {
            inflation_rate: 0.08,
            lifetimes: AssetLifetimes::default(),
            hours_per_period: 1.0,
            days_per_year: 365.0,
        },
        tariff: Tariff::tou_default(),
        nodes: Vec::new(),
        candidate_lines: Vec::new(),
        scenarios: vec![Scenario::default()],
    }
}

/// Device candidate placement for the IEEE 33-node case.
#[derive(Debug, Clone)]
pub struct Ieee33Config {
    pub retrofit_stations: Vec<NodeId>,
    pub new_stations: Vec<NodeId>,
    pub station_s_max_kva: f64,
    pub pv_nodes: Vec<NodeId>,
    pub pv_peak_kw: f64,
    pub ess_nodes: Vec<NodeId>,
    pub cb_nodes: Vec<NodeId>,
    pub svc_nodes: Vec<NodeId>,
    pub line_s_max_kva: f64,
    pub with_oltc: bool,
}

impl Default for Ieee33Config {
    fn default() -> Self {
        Ieee33Config {
            retrofit_stations: vec![12, 17, 27],
            new_stations: vec![5, 22, 30],
            station_s_max_kva: 800.0,
            pv_nodes: vec![14, 25],
            pv_peak_kw: 75.0,
            ess_nodes: vec![30],
            cb_nodes: vec![30],
            svc_nodes: vec![30],
            line_s_max_kva: 7000.0,
            with_oltc: true,
        }
    }
}

/// Canonical IEEE 33-bus branch data `(from, to, r Ω, x Ω)`, branches 1–32
/// followed by the five standard tie lines.
const IEEE33_BRANCHES: [(NodeId, NodeId, f64, f64); 37] = [
    (1, 2, 0.0922, 0.0470),
    (2, 3, 0.4930, 0.2511),
    (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070),
    (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351),
    (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650),
    (11, 12, 0.3744, 0.1238),
    (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129),
    (14, 15, 0.5910, 0.5260),
    (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740),
    (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554),
    (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083),
    (23, 24, 0.8980, 0.7091),
    (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034),
    (26, 27, 0.2842, 0.1447),
    (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585),
    (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619),
    (32, 33, 0.3410, 0.5302),
    // Tie lines 33–37.
    (21, 8, 2.0000, 2.0000),
    (9, 15, 2.0000, 2.0000),
    (12, 22, 2.0000, 2.0000),
    (18, 33, 0.5000, 0.5000),
    (25, 29, 0.5000, 0.5000),
];

/// Canonical peak loads `(p kW, q kvar)` for nodes 1..=33.
const IEEE33_LOADS: [(f64, f64); 33] = [
    (0.0, 0.0),
    (100.0, 60.0),
    (90.0, 40.0),
    (120.0, 80.0),
    (60.0, 30.0),
    (60.0, 20.0),
    (200.0, 100.0),
    (200.0, 100.0),
    (60.0, 20.0),
    (60.0, 20.0),
    (45.0, 30.0),
    (60.0, 35.0),
    (60.0, 35.0),
    (120.0, 80.0),
    (60.0, 10.0),
    (60.0, 20.0),
    (60.0, 20.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 50.0),
    (420.0, 200.0),
    (420.0, 200.0),
    (60.0, 25.0),
    (60.0, 25.0),
    (60.0, 20.0),
    (120.0, 70.0),
    (200.0, 600.0),
    (150.0, 70.0),
    (210.0, 100.0),
    (60.0, 40.0),
];

fn ieee33_region(id: NodeId) -> Region {
    match id {
        1..=12 => Region::Office,
        13..=18 => Region::Industrial,
        _ => Region::Residential,
    }
}

/// The IEEE 33-node feeder: 33 nodes, the 32 existing branches plus the five
/// standard ties as candidates, canonical impedances and peak loads shaped
/// by per-region diurnal curves, and device candidates from `config`.
pub fn ieee33_case(config: &Ieee33Config) -> NetworkCase {
    let mut case = base_case(
        "ieee33",
        PuBase {
            s_base_mva: 10.0,
            v_base_kv: 12.66,
        },
        SubstationSpec {
            p_max_kw: 10_000.0,
            q_max_kvar: 8_000.0,
        },
        config.with_oltc.then(OltcSpec::default),
    );
    for id in 1..=33u32 {
        let region = ieee33_region(id);
        let (p_peak, q_peak) = IEEE33_LOADS[(id - 1) as usize];
        let mut dgrs = default_dgrs();
        if config.pv_nodes.contains(&id) {
            dgrs.pv = Some(pv_candidate(config.pv_peak_kw));
        }
        if config.ess_nodes.contains(&id) {
            dgrs.ess = Some(ess_candidate());
        }
        if config.cb_nodes.contains(&id) {
            dgrs.cb = Some(cb_candidate());
        }
        if config.svc_nodes.contains(&id) {
            dgrs.svc = Some(svc_candidate());
        }
        let v2g_candidate = if config.retrofit_stations.contains(&id) {
            Some(v2g(V2gMode::Retrofit, config.station_s_max_kva))
        } else if config.new_stations.contains(&id) {
            Some(v2g(V2gMode::New, config.station_s_max_kva))
        } else {
            None
        };
        case.nodes.push(NodeSpec {
            id,
            region,
            p_load_kw: profile(region, p_peak),
            q_load_kvar: profile(region, q_peak),
            v2g_candidate,
            dgr_candidates: dgrs,
        });
    }
    for (from, to, r, x) in IEEE33_BRANCHES {
        case.candidate_lines.push(line(from, to, r, x, config.line_s_max_kva));
    }
    case.validate().expect("ieee33 case must validate");
    case
}

/// Synthetic 47-node four-region system: offices at nodes 1–11, industry at
/// 12–17, residential at 18–33, commercial at 34–47. Retrofit candidates sit
/// at nodes 17, 26, 27, 33 and 47; every other node admits a new station.
/// Loads and line lengths are drawn deterministically from `seed`.
pub fn synth47_case(seed: u64) -> NetworkCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut case = base_case(
        "synth47",
        PuBase {
            s_base_mva: 10.0,
            v_base_kv: 10.0,
        },
        SubstationSpec {
            p_max_kw: 20_000.0,
            q_max_kvar: 15_000.0,
        },
        Some(OltcSpec::default()),
    );
    case.name = format!("synth47-seed{seed}");
    let retrofit: [NodeId; 5] = [17, 26, 27, 33, 47];

    for id in 1..=47u32 {
        let region = match id {
            1..=11 => Region::Office,
            12..=17 => Region::Industrial,
            18..=33 => Region::Residential,
            _ => Region::Commercial,
        };
        let peak_p = match region {
            Region::Office => rng.gen_range(150.0..400.0),
            Region::Industrial => rng.gen_range(200.0..500.0),
            Region::Residential => rng.gen_range(80.0..250.0),
            Region::Commercial => rng.gen_range(120.0..350.0),
        };
        let pf: f64 = rng.gen_range(0.85..0.95);
        let peak_q = peak_p * (1.0 / (pf * pf) - 1.0).sqrt();
        let mode = if retrofit.contains(&id) {
            V2gMode::Retrofit
        } else {
            V2gMode::New
        };
        case.nodes.push(NodeSpec {
            id,
            region,
            p_load_kw: if id == 1 { vec![0.0; 24] } else { profile(region, peak_p) },
            q_load_kvar: if id == 1 { vec![0.0; 24] } else { profile(region, peak_q) },
            v2g_candidate: Some(v2g(mode, 2000.0)),
            dgr_candidates: DgrCandidates {
                pv: Some(pv_candidate(75.0)),
                ess: Some(ess_candidate()),
                cb: Some(cb_candidate()),
                svc: Some(svc_candidate()),
            },
        });
    }

    // Backbone: region chains hanging off the substation, plus ties.
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    let chain = |edges: &mut Vec<(NodeId, NodeId)>, ids: std::ops::RangeInclusive<u32>| {
        let mut prev = None;
        for id in ids {
            if let Some(p) = prev {
                edges.push((p, id));
            }
            prev = Some(id);
        }
    };
    chain(&mut edges, 1..=11); // office spine
    edges.push((4, 12));
    chain(&mut edges, 12..=17); // industrial lateral
    edges.push((7, 18));
    chain(&mut edges, 18..=33); // residential spine
    edges.push((10, 34));
    chain(&mut edges, 34..=47); // commercial spine
    // Tie candidates between and within regions.
    for tie in [(11, 17), (17, 22), (25, 33), (33, 40), (47, 11), (28, 36), (14, 20), (6, 30)] {
        edges.push(tie);
    }
    for (from, to) in edges {
        let length: f64 = rng.gen_range(0.5..2.0);
        let r = length * rng.gen_range(0.40..0.55);
        let x = length * rng.gen_range(0.30..0.42);
        case.candidate_lines.push(LineSpec {
            from,
            to,
            r_ohm: r,
            x_ohm: x,
            s_max_kva: 8000.0,
            length_km: length,
            capex: costs::LINE_PER_KM * length,
        });
    }
    case.validate().expect("synth47 case must validate");
    case
}

/// The four-node example used by the feasibility-certificate discussion:
/// the substation feeds node 2, which feeds nodes 3 and 4; the single
/// station candidate sits at node 2. `line12_smax_kva` narrows the head
/// line to manufacture a worst-case capacity shortfall.
pub fn four_node_case(line12_smax_kva: Option<f64>) -> NetworkCase {
    let mut case = base_case(
        "four-node",
        PuBase::default(),
        SubstationSpec {
            p_max_kw: 3000.0,
            q_max_kvar: 2000.0,
        },
        None,
    );
    let mk = |id: NodeId, p: f64| NodeSpec {
        id,
        region: Region::Office,
        p_load_kw: vec![p; 24],
        q_load_kvar: vec![p * 0.4; 24],
        v2g_candidate: None,
        dgr_candidates: default_dgrs(),
    };
    case.nodes = vec![mk(1, 0.0), mk(2, 120.0), mk(3, 80.0), mk(4, 60.0)];
    case.nodes[1].v2g_candidate = Some(v2g(V2gMode::New, 400.0));
    case.candidate_lines = vec![
        line(1, 2, 0.20, 0.15, line12_smax_kva.unwrap_or(1500.0)),
        line(2, 3, 0.25, 0.18, 1000.0),
        line(2, 4, 0.25, 0.18, 1000.0),
    ];
    case.validate().expect("four-node case must validate");
    case
}

/// Variants of the six-node oracle fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SixNodeVariant {
    /// Even impedances and costs.
    Baseline,
    /// One tie is cheap to build but very lossy, the other expensive but
    /// clean, so capex and loss pull the tree choice in opposite ways.
    LossTradeoff,
    /// Line capacities close to the load, making capacity cones active.
    TightCapacity,
}

/// Six nodes, seven candidate lines, twelve spanning trees — small enough
/// for exhaustive tree enumeration against the planner.
pub fn six_node_case(variant: SixNodeVariant) -> NetworkCase {
    let mut case = base_case(
        "six-node",
        PuBase::default(),
        SubstationSpec {
            p_max_kw: 4000.0,
            q_max_kvar: 3000.0,
        },
        None,
    );
    case.name = format!("six-node-{variant:?}").to_lowercase();
    let mk = |id: NodeId, region: Region, p: f64| NodeSpec {
        id,
        region,
        p_load_kw: profile(region, p),
        q_load_kvar: profile(region, p * 0.45),
        v2g_candidate: None,
        dgr_candidates: default_dgrs(),
    };
    case.nodes = vec![
        mk(1, Region::Office, 0.0),
        mk(2, Region::Office, 220.0),
        mk(3, Region::Office, 180.0),
        mk(4, Region::Residential, 260.0),
        mk(5, Region::Industrial, 240.0),
        mk(6, Region::Industrial, 160.0),
    ];
    case.nodes[2].v2g_candidate = Some(v2g(V2gMode::Retrofit, 600.0));
    case.nodes[4].v2g_candidate = Some(v2g(V2gMode::New, 600.0));

    let s = 2500.0;
    let (tie25, tie36) = match variant {
        SixNodeVariant::Baseline => (line(2, 5, 0.40, 0.28, s), line(3, 6, 0.40, 0.28, s)),
        SixNodeVariant::LossTradeoff => {
            let mut cheap_lossy = line(2, 5, 1.60, 0.90, s);
            cheap_lossy.length_km = 0.25;
            cheap_lossy.capex = costs::LINE_PER_KM * cheap_lossy.length_km;
            let mut clean_dear = line(3, 6, 0.18, 0.14, s);
            clean_dear.length_km = 2.6;
            clean_dear.capex = costs::LINE_PER_KM * clean_dear.length_km;
            (cheap_lossy, clean_dear)
        }
        SixNodeVariant::TightCapacity => (line(2, 5, 0.40, 0.28, 700.0), line(3, 6, 0.40, 0.28, 700.0)),
    };
    let trunk = match variant {
        SixNodeVariant::TightCapacity => 1600.0,
        _ => s,
    };
    case.candidate_lines = vec![
        line(1, 2, 0.25, 0.18, trunk),
        line(2, 3, 0.30, 0.22, trunk),
        line(3, 4, 0.35, 0.25, trunk),
        line(4, 5, 0.30, 0.22, trunk),
        line(5, 6, 0.28, 0.20, trunk),
        tie25,
        tie36,
    ];
    case.validate().expect("six-node case must validate");
    case
}

/// A deliberately voltage-stressed feeder: heavy reactive load far from the
/// head, reactive resources and station headroom at the end. No OLTC, so
/// the head voltage is pinned and the voltage spread is determined by the
/// downstream flows alone.
pub fn stressed_case() -> NetworkCase {
    let mut case = base_case(
        "stressed",
        PuBase::default(),
        SubstationSpec {
            p_max_kw: 6000.0,
            q_max_kvar: 5000.0,
        },
        None,
    );
    let mk = |id: NodeId, region: Region, p: f64, q: f64| NodeSpec {
        id,
        region,
        p_load_kw: profile(region, p),
        q_load_kvar: profile(region, q),
        v2g_candidate: None,
        dgr_candidates: default_dgrs(),
    };
    case.nodes = vec![
        mk(1, Region::Office, 0.0, 0.0),
        mk(2, Region::Office, 280.0, 150.0),
        mk(3, Region::Office, 260.0, 140.0),
        mk(4, Region::Office, 240.0, 130.0),
        mk(5, Region::Residential, 420.0, 260.0),
        mk(6, Region::Residential, 520.0, 330.0),
        mk(7, Region::Residential, 620.0, 400.0),
        mk(8, Region::Residential, 460.0, 300.0),
    ];
    case.nodes[3].v2g_candidate = Some(v2g(V2gMode::New, 800.0));
    case.nodes[6].v2g_candidate = Some(v2g(V2gMode::Retrofit, 1200.0));
    case.nodes[5].dgr_candidates.pv = Some(pv_candidate(75.0));
    case.nodes[6].dgr_candidates.ess = Some(ess_candidate());
    case.nodes[6].dgr_candidates.cb = Some(cb_candidate());
    case.nodes[7].dgr_candidates.svc = Some(svc_candidate());
    case.candidate_lines = (1..=7)
        .map(|i| line(i, i + 1, 0.35, 0.25, 4000.0))
        .collect();
    case.validate().expect("stressed case must validate");
    case
}

/// Fleet counts proportional to the region shares of the published study.
pub fn paper_region_mix() -> Vec<(Region, f64)> {
    vec![
        (Region::Office, 0.59),
        (Region::Industrial, 0.27),
        (Region::Residential, 0.14),
    ]
}

/// Connection-window archetype per region. Residential and industrial
/// vehicles alternate between two blocks so the fleet covers both ends of
/// the day; all windows are contiguous within the 24-period horizon.
fn archetype_window(region: Region, index: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    match region {
        Region::Office => (rng.gen_range(8..=10), rng.gen_range(16..=18)),
        Region::Residential => {
            if index % 2 == 0 {
                (rng.gen_range(18..=19), 24)
            } else {
                (1, rng.gen_range(7..=8))
            }
        }
        Region::Industrial => {
            if index % 2 == 0 {
                (rng.gen_range(6..=7), rng.gen_range(14..=15))
            } else {
                (rng.gen_range(14..=15), rng.gen_range(22..=23))
            }
        }
        Region::Commercial => (rng.gen_range(10..=11), rng.gen_range(19..=20)),
    }
}

/// Default vehicle parameters: 12 kW charge/discharge, 90 kWh capacity.
const VEHICLE_P_KW: f64 = 12.0;
const VEHICLE_E_KWH: f64 = 90.0;
const MAX_VEHICLES: usize = 100_000;

/// Generate a fleet whose penetration rate lands within 2% relative of
/// `target`. Vehicles follow per-region window archetypes; the last
/// vehicle's battery capacity is trimmed to hit the target exactly.
pub fn gen_fleet(
    case: &NetworkCase,
    target_penetration: f64,
    region_mix: &[(Region, f64)],
    seed: u64,
) -> Result<AevFleet, CasegenError> {
    if !(target_penetration > 0.0 && target_penetration <= 1.0) {
        return Err(CasegenError::BadPenetration(target_penetration));
    }
    let total_weight: f64 = region_mix.iter().map(|(_, w)| w).sum();
    if total_weight <= 0.0 || region_mix.iter().any(|(_, w)| *w < 0.0) {
        return Err(CasegenError::BadRegionMix);
    }
    let denom = case.total_load_energy_kwh();
    if denom <= 0.0 {
        return Err(CasegenError::Unreachable(target_penetration));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target_energy = target_penetration * denom;
    let tolerance = 0.02 * target_energy;

    let mut vehicles: Vec<AevSpec> = Vec::new();
    let mut assigned: Vec<f64> = vec![0.0; region_mix.len()];
    let mut numer = 0.0;
    let mut per_region_index = vec![0usize; region_mix.len()];

    while numer + tolerance < target_energy {
        if vehicles.len() >= MAX_VEHICLES {
            return Err(CasegenError::Unreachable(target_penetration));
        }
        // Pick the region furthest behind its share.
        let next = (0..region_mix.len())
            .max_by(|a, b| {
                let da = region_mix[*a].1 / total_weight * (vehicles.len() + 1) as f64 - assigned[*a];
                let db = region_mix[*b].1 / total_weight * (vehicles.len() + 1) as f64 - assigned[*b];
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        let region = region_mix[next].0;
        let (arrive, depart) = archetype_window(region, per_region_index[next], &mut rng);
        per_region_index[next] += 1;
        let window_len = (depart + 1 - arrive) as f64;

        // Trim the final vehicle's capacity onto the remaining energy gap.
        let remaining = target_energy - numer;
        let full_contrib = VEHICLE_E_KWH * window_len;
        let e_max = if full_contrib > remaining {
            (remaining / window_len).clamp(20.0, VEHICLE_E_KWH)
        } else {
            VEHICLE_E_KWH
        };
        let e_initial = rng.gen_range(0.30..0.50) * e_max;
        let e_target = rng.gen_range(0.80..0.90) * e_max;
        vehicles.push(AevSpec {
            id: vehicles.len() as u32 + 1,
            arrive,
            depart,
            e_initial_kwh: e_initial,
            e_target_kwh: e_target,
            e_min_kwh: 0.1 * e_max,
            e_max_kwh: e_max,
            p_charge_max_kw: VEHICLE_P_KW,
            p_discharge_max_kw: VEHICLE_P_KW,
            region,
        });
        assigned[next] += 1.0;
        numer += e_max * window_len;
    }
    if vehicles.is_empty() || (numer - target_energy).abs() > tolerance {
        return Err(CasegenError::Unreachable(target_penetration));
    }
    let fleet = AevFleet { vehicles };
    fleet
        .validate(case.periods)
        .expect("generated fleet must satisfy its invariants");
    Ok(fleet)
}
