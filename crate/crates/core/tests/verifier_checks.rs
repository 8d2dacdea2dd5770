//! Verifier behaviour: solver plans pass, hand-corrupted plans are flagged
//! with the correct constraint family, and the worst-case certificate
//! implies feasibility for dominated fleets.

mod common;

use std::sync::OnceLock;

use common::backend;
use gridforge_core::case::{NetworkCase, Region};
use gridforge_core::casegen::{four_node_case, six_node_case, stressed_case, SixNodeVariant};
use gridforge_core::holistic::solve_decomposition;
use gridforge_core::mip::{OaOptions, SolveLimits};
use gridforge_core::planner::{solve_fixed_dispatch, PlanOptions, PlanSolution};
use gridforge_core::scheduler::{solve_sp1, AevFleet, AevSpec, RegionProfiles};
use gridforge_core::verifier::{verify_plan, verify_worst_case, ConstraintFamily, VerifyReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fleet(region: Region, n: u32, arrive: usize, depart: usize) -> AevFleet {
    AevFleet {
        vehicles: (1..=n)
            .map(|id| AevSpec {
                id,
                arrive,
                depart,
                e_initial_kwh: 40.0,
                e_target_kwh: 76.0,
                e_min_kwh: 9.0,
                e_max_kwh: 88.0,
                p_charge_max_kw: 12.0,
                p_discharge_max_kw: 12.0,
                region,
            })
            .collect(),
    }
}

struct Base {
    case: NetworkCase,
    profiles: Vec<RegionProfiles>,
    plan: PlanSolution,
}

fn base_a() -> &'static Base {
    static CELL: OnceLock<Base> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut case = six_node_case(SixNodeVariant::Baseline);
        case.scenarios[0].fleet = fleet(Region::Office, 3, 9, 17);
        let (schedules, plan) = solve_decomposition(
            &case,
            PlanOptions::case_a(),
            &backend(),
            &SolveLimits::default(),
            &OaOptions::default(),
        )
        .unwrap();
        let profiles = schedules.iter().map(|s| s.region_profiles.clone()).collect();
        Base {
            case,
            profiles,
            plan,
        }
    })
}

fn base_c() -> &'static Base {
    static CELL: OnceLock<Base> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut case = stressed_case();
        case.scenarios[0].fleet = fleet(Region::Residential, 4, 18, 24);
        let (schedules, plan) = solve_decomposition(
            &case,
            PlanOptions::case_c(),
            &backend(),
            &SolveLimits::default(),
            &OaOptions::default(),
        )
        .unwrap();
        let profiles = schedules.iter().map(|s| s.region_profiles.clone()).collect();
        Base {
            case,
            profiles,
            plan,
        }
    })
}

fn base_oltc() -> &'static Base {
    static CELL: OnceLock<Base> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut case = stressed_case();
        case.oltc = Some(gridforge_core::case::OltcSpec::default());
        case.scenarios[0].fleet = fleet(Region::Residential, 2, 18, 24);
        let (schedules, plan) = solve_decomposition(
            &case,
            PlanOptions::case_c(),
            &backend(),
            &SolveLimits::default(),
            &OaOptions::default(),
        )
        .unwrap();
        let profiles = schedules.iter().map(|s| s.region_profiles.clone()).collect();
        Base {
            case,
            profiles,
            plan,
        }
    })
}

fn expect_family(report: &VerifyReport, family: ConstraintFamily, label: &str) {
    assert!(
        report.violations.iter().any(|v| v.family == family),
        "{label}: expected {family} among {:?}",
        report.violated_families()
    );
}

#[test]
fn solver_plans_pass_verification() {
    for base in [base_a(), base_c(), base_oltc()] {
        let report = verify_plan(&base.plan, &base.case, &base.profiles);
        assert!(
            report.passed(),
            "solver plan flagged: {:#?}",
            report.violations.iter().take(5).collect::<Vec<_>>()
        );
    }
}

#[test]
fn corrupted_plans_are_flagged_with_the_right_family() {
    let a = base_a();
    let c = base_c();
    let o = base_oltc();
    let station_a = a.plan.station_nodes()[0];
    let idle_station: u32 = 5; // industrial candidate without demand
    assert!(!a.plan.built_v2gcs[&idle_station]);
    let s_max = a.case.node(station_a).unwrap().v2g_candidate.as_ref().unwrap().s_max_kva;
    let unbuilt_line = a.plan.built_lines.iter().position(|b| !b).unwrap();
    let built_line = a.plan.built_lines.iter().position(|b| *b).unwrap();

    type Corruption = (&'static str, ConstraintFamily, Box<dyn Fn(&mut PlanSolution)>);
    let mut corruptions: Vec<(&Base, Corruption)> = Vec::new();
    let mut push = |base: &'static Base,
                    label: &'static str,
                    family: ConstraintFamily,
                    f: Box<dyn Fn(&mut PlanSolution)>| {
        corruptions.push((base, (label, family, f)));
    };

    push(a, "flow bump", ConstraintFamily::NodalBalanceP, Box::new(|p| {
        p.scenarios[0].line_p_kw[0][5] += 1.0;
    }));
    push(a, "reactive bump", ConstraintFamily::NodalBalanceQ, Box::new(|p| {
        p.scenarios[0].line_q_kvar[1][3] += 2.0;
    }));
    push(a, "cycle injected", ConstraintFamily::Radiality, Box::new(move |p| {
        p.built_lines[unbuilt_line] = true;
    }));
    push(a, "line dropped", ConstraintFamily::Radiality, Box::new(move |p| {
        p.built_lines[built_line] = false;
    }));
    push(a, "overvoltage", ConstraintFamily::VoltageBounds, Box::new(|p| {
        p.scenarios[0].voltage_pu[5][10] = 1.2;
    }));
    push(a, "drop mismatch", ConstraintFamily::VoltageDrop, Box::new(|p| {
        p.scenarios[0].voltage_pu[3][7] += 0.01;
    }));
    push(a, "overloaded line", ConstraintFamily::LineCapacity, Box::new(|p| {
        p.scenarios[0].line_p_kw[0][9] = 2800.0;
    }));
    push(a, "flow on unbuilt line", ConstraintFamily::UnbuiltLineFlow, Box::new(move |p| {
        p.scenarios[0].line_p_kw[unbuilt_line][4] = 5.0;
    }));
    push(a, "power at unbuilt station", ConstraintFamily::V2gGating, Box::new(move |p| {
        p.scenarios[0]
            .station_p_kw
            .get_mut(&idle_station)
            .unwrap()[10] = 3.0;
    }));
    push(a, "station above capacity", ConstraintFamily::V2gCapacity, Box::new(move |p| {
        p.scenarios[0]
            .station_p_kw
            .get_mut(&station_a)
            .unwrap()[12] = s_max * 1.5;
    }));
    push(a, "coupling broken", ConstraintFamily::RegionalCoupling, Box::new(move |p| {
        for v in p.scenarios[0].station_p_kw.get_mut(&station_a).unwrap() {
            *v *= 1.5;
        }
    }));
    push(a, "substation overload", ConstraintFamily::SubstationLimit, Box::new(|p| {
        p.scenarios[0].sub_p_kw[4] = 9000.0;
    }));
    push(a, "head off nominal", ConstraintFamily::OltcPinning, Box::new(|p| {
        p.scenarios[0].voltage_pu[0][2] = 1.05;
    }));
    push(a, "total out of sum", ConstraintFamily::CostConsistency, Box::new(|p| {
        p.costs.total += 5.0;
    }));
    push(a, "loss misreported", ConstraintFamily::CostConsistency, Box::new(|p| {
        p.costs.network_loss += 5.0;
        p.costs.total += 5.0;
    }));

    push(c, "pv beyond ceiling", ConstraintFamily::PvLimit, Box::new(|p| {
        p.scenarios[0].pv_p_kw.get_mut(&6).unwrap()[11] = 400.0;
    }));
    push(c, "svc beyond band", ConstraintFamily::SvcLimit, Box::new(|p| {
        p.scenarios[0].svc_q_kvar.get_mut(&8).unwrap()[5] = 400.0;
    }));
    push(c, "ess power burst", ConstraintFamily::EssPower, Box::new(|p| {
        p.scenarios[0].ess.get_mut(&7).unwrap().p_ch_kw[10] = 500.0;
    }));
    push(c, "ess both modes", ConstraintFamily::EssExclusivity, Box::new(|p| {
        let e = p.scenarios[0].ess.get_mut(&7).unwrap();
        e.charging[5] = true;
        e.discharging[5] = true;
    }));
    push(c, "ess over-stuffed", ConstraintFamily::EssEnergy, Box::new(|p| {
        p.scenarios[0].ess.get_mut(&7).unwrap().e_kwh[7] = 1600.0;
    }));
    push(c, "ess cycle broken", ConstraintFamily::EssCycle, Box::new(|p| {
        p.scenarios[0].ess.get_mut(&7).unwrap().e_kwh[0] += 10.0;
    }));
    push(c, "cb value drift", ConstraintFamily::CbValue, Box::new(|p| {
        p.scenarios[0].cb.get_mut(&7).unwrap().q_kvar[3] += 75.0;
    }));
    push(c, "cb silent switch", ConstraintFamily::CbSwitching, Box::new(|p| {
        let cb = p.scenarios[0].cb.get_mut(&7).unwrap();
        let t = 12;
        cb.banks_on[t] = (cb.banks_on[t] + 1).min(5);
        cb.q_kvar[t] = cb.banks_on[t] as f64 * 75.0;
        cb.switch_in[t - 1] = false;
        cb.switch_out[t - 1] = false;
    }));
    push(o, "oltc silent tap move", ConstraintFamily::OltcSwitching, Box::new(|p| {
        let t = 9;
        let new_tap = {
            let oltc = p.scenarios[0].oltc.as_mut().unwrap();
            oltc.tap[t] = (oltc.tap[t] + 1).min(20);
            oltc.v_pu[t] = 0.9 + 0.01 * oltc.tap[t] as f64;
            oltc.switch_in[t - 1] = false;
            oltc.switch_out[t - 1] = false;
            oltc.tap[t]
        };
        // Keep the pinning consistent so only the switch flag trips.
        p.scenarios[0].voltage_pu[0][t] = 0.9 + 0.01 * new_tap as f64;
    }));

    assert!(corruptions.len() >= 20, "need at least 20 corruption cases");
    for (base, (label, family, mutate)) in corruptions {
        let mut plan = base.plan.clone();
        mutate(&mut plan);
        let report = verify_plan(&plan, &base.case, &base.profiles);
        assert!(!report.passed(), "{label}: corruption slipped through");
        expect_family(&report, family, label);
    }
}

#[test]
fn corrupted_cycle_names_the_closing_edge() {
    let a = base_a();
    let mut plan = a.plan.clone();
    let unbuilt = a.plan.built_lines.iter().position(|b| !b).unwrap();
    plan.built_lines[unbuilt] = true;
    let report = verify_plan(&plan, &a.case, &a.profiles);
    let line = &a.case.candidate_lines[unbuilt];
    let tag = format!("{}-{}", line.from, line.to);
    assert!(
        report
            .violations
            .iter()
            .any(|v| v.family == ConstraintFamily::Radiality && v.location.contains(&tag)),
        "cycle edge {tag} not named: {:?}",
        report.violations
    );
}

#[test]
fn worst_case_certificate_on_the_four_node_example() {
    let mut case = four_node_case(None);
    let f = fleet(Region::Office, 3, 9, 17);
    case.scenarios[0].fleet = f.clone();
    let (_, plan) = solve_decomposition(
        &case,
        PlanOptions::case_a(),
        &backend(),
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    let ok = verify_worst_case(
        &plan,
        &case,
        &f,
        &backend(),
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    assert!(ok.feasible);

    let mut tight = four_node_case(Some(230.0));
    tight.scenarios[0].fleet = f.clone();
    let bad = verify_worst_case(
        &plan,
        &tight,
        &f,
        &backend(),
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    assert!(!bad.feasible);
    assert!(
        bad.limiting
            .iter()
            .any(|l| l.contains("line_capacity") && l.contains("1-2")),
        "expected line (1,2) capacity named, got {:?}",
        bad.limiting
    );

    // Zero fleet is vacuously feasible.
    let empty = AevFleet::default();
    let vac = verify_worst_case(
        &plan,
        &case,
        &empty,
        &backend(),
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    assert!(vac.feasible);
}

#[test]
fn worst_case_feasible_implies_dominated_fleets_dispatch() {
    // Sampled form of the certificate's implication: any fleet whose
    // worst-case profile is dominated by the certified ceiling must yield a
    // servable dispatch on the fixed plan.
    let mut case = four_node_case(None);
    let ceiling_fleet = fleet(Region::Office, 3, 8, 20);
    case.scenarios[0].fleet = ceiling_fleet.clone();
    let solver = backend();
    let (_, plan) = solve_decomposition(
        &case,
        PlanOptions::case_a(),
        &solver,
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    let cert = verify_worst_case(
        &plan,
        &case,
        &ceiling_fleet,
        &solver,
        &SolveLimits::default(),
        &OaOptions::default(),
    )
    .unwrap();
    assert!(cert.feasible, "certificate must hold before sampling");

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for sample in 0..100 {
        let n = rng.gen_range(1..=3);
        let dominated = AevFleet {
            vehicles: (1..=n)
                .map(|id| {
                    let arrive = rng.gen_range(8..=14);
                    let depart = rng.gen_range(arrive.max(14)..=20);
                    let e_max = rng.gen_range(40.0..90.0f64);
                    let e_initial = rng.gen_range(0.3..0.5) * e_max;
                    let reachable: f64 =
                        e_initial + 12.0 * (depart + 1 - arrive) as f64;
                    AevSpec {
                        id,
                        arrive,
                        depart,
                        e_initial_kwh: e_initial,
                        e_target_kwh: reachable.min(0.9 * e_max),
                        e_min_kwh: 0.1 * e_max,
                        e_max_kwh: e_max,
                        p_charge_max_kw: 12.0,
                        p_discharge_max_kw: 12.0,
                        region: Region::Office,
                    }
                })
                .collect(),
        };
        let sched = solve_sp1(&dominated, &case.tariff, &solver, &SolveLimits::default())
            .unwrap_or_else(|e| panic!("sample {sample}: SP1 failed: {e}"));
        let profiles = vec![sched.region_profiles.clone()];
        let dispatched = solve_fixed_dispatch(
            &case,
            &profiles,
            &plan,
            &solver,
            &SolveLimits::default(),
            &OaOptions::default(),
        )
        .unwrap_or_else(|e| panic!("sample {sample}: dominated dispatch infeasible: {e}"));
        let report = verify_plan(&dispatched, &case, &profiles);
        assert!(
            report.passed(),
            "sample {sample}: dispatched plan failed verification: {:?}",
            report.violations.first()
        );
    }
}
