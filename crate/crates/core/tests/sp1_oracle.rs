//! Scheduling oracle equivalence: the MILP against literal enumeration over
//! per-period power levels, plus the price-scaling property.

mod common;

use common::{backend, brute_force_fleet_cost};
use gridforge_core::case::{Region, Tariff};
use gridforge_core::mip::SolveLimits;
use gridforge_core::scheduler::{solve_sp1, AevFleet, AevSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random instance on which an extreme-level optimum exists: every energy
/// bound is an integer number of full-power hours away from the start.
fn random_instance(rng: &mut ChaCha8Rng) -> (AevFleet, Tariff) {
    let periods = rng.gen_range(3..=6);
    let p_max = [6.0, 10.0, 12.0][rng.gen_range(0..3)];
    let n_vehicles = rng.gen_range(1..=2);
    let prices = match rng.gen_range(0..3) {
        0 => Tariff::flat(periods, rng.gen_range(0.2..1.2)),
        1 => {
            let mut t = Tariff::flat(periods, 0.0);
            for i in 0..periods {
                let p = rng.gen_range(0.2..1.3);
                t.price[i] = p;
                t.charge_price[i] = p;
                t.discharge_subsidy[i] = p;
            }
            t
        }
        _ => {
            let mut t = Tariff::flat(periods, 0.0);
            for i in 0..periods {
                let p = rng.gen_range(0.2..1.3);
                t.price[i] = p;
                t.charge_price[i] = p;
                t.discharge_subsidy[i] = 0.0;
            }
            t
        }
    };
    let regions = [Region::Office, Region::Residential, Region::Industrial];
    let mut vehicles = Vec::new();
    for id in 1..=n_vehicles {
        let arrive = rng.gen_range(1..=periods - 1);
        let depart = rng.gen_range(arrive..=periods);
        let window = (depart + 1 - arrive) as i64;
        // Keep every energy bound on the p_max grid around the start value,
        // so an optimum at the extreme power levels is guaranteed to exist
        // and the enumeration is exact.
        let e_initial: f64 = 40.0;
        let max_down = (e_initial / p_max).floor() as i64;
        let room_down = rng.gen_range(0..=window.min(max_down));
        let room_up = rng.gen_range(0..=window);
        let need = rng.gen_range(0..=room_up.min(window));
        let e_min = e_initial - room_down as f64 * p_max;
        let e_max = e_initial + room_up as f64 * p_max;
        let e_target = e_initial + need as f64 * p_max;
        vehicles.push(AevSpec {
            id: id as u32,
            arrive,
            depart,
            e_initial_kwh: e_initial,
            e_target_kwh: e_target,
            e_min_kwh: e_min,
            e_max_kwh: e_max,
            p_charge_max_kw: p_max,
            p_discharge_max_kw: p_max,
            region: regions[rng.gen_range(0..3)],
        });
    }
    (AevFleet { vehicles }, prices)
}

#[test]
fn milp_matches_enumeration_on_randomized_instances() {
    let solver = backend();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut checked = 0;
    while checked < 60 {
        let (fleet, tariff) = random_instance(&mut rng);
        if fleet.validate(tariff.periods()).is_err() {
            continue;
        }
        let oracle = brute_force_fleet_cost(&fleet, &tariff);
        assert!(oracle.is_finite(), "oracle must find a feasible schedule");
        let sol = solve_sp1(&fleet, &tariff, &solver, &SolveLimits::default()).unwrap();
        assert!(
            (sol.objective - oracle).abs() <= 1e-6,
            "instance {checked}: solver {} vs enumeration {oracle}\nfleet: {fleet:?}",
            sol.objective
        );
        checked += 1;
    }
}

#[test]
fn price_scaling_scales_objective_linearly() {
    let solver = backend();
    let tariff = Tariff::tou_default();
    let fleet = AevFleet {
        vehicles: vec![
            AevSpec {
                id: 1,
                arrive: 3,
                depart: 20,
                e_initial_kwh: 45.0,
                e_target_kwh: 81.0,
                e_min_kwh: 9.0,
                e_max_kwh: 87.0,
                p_charge_max_kw: 12.0,
                p_discharge_max_kw: 12.0,
                region: Region::Office,
            },
            AevSpec {
                id: 2,
                arrive: 1,
                depart: 24,
                e_initial_kwh: 51.0,
                e_target_kwh: 51.0,
                e_min_kwh: 15.0,
                e_max_kwh: 87.0,
                p_charge_max_kw: 12.0,
                p_discharge_max_kw: 12.0,
                region: Region::Residential,
            },
        ],
    };
    let base = solve_sp1(&fleet, &tariff, &solver, &SolveLimits::default()).unwrap();
    for lambda in [0.5, 2.0, 7.5] {
        let mut scaled = tariff.clone();
        for i in 0..24 {
            scaled.price[i] *= lambda;
            scaled.charge_price[i] *= lambda;
            scaled.discharge_subsidy[i] *= lambda;
        }
        let sol = solve_sp1(&fleet, &scaled, &solver, &SolveLimits::default()).unwrap();
        let ratio_err = (sol.objective - lambda * base.objective).abs()
            / base.objective.abs().max(1.0);
        assert!(
            ratio_err <= 1e-6,
            "λ={lambda}: {} vs {}",
            sol.objective,
            lambda * base.objective
        );
        // The schedules themselves stay optimal: same net profile.
        for (a, b) in base.vehicles.iter().zip(&sol.vehicles) {
            for t in 0..24 {
                assert!((a.net_kw(t) - b.net_kw(t)).abs() < 1e-6);
            }
        }
    }
}
