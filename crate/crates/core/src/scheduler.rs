//! Subproblem I: charge/discharge scheduling of the autonomous EV fleet.
//!
//! Each vehicle is connected during a contiguous window and must leave with
//! at least its target energy while staying inside its battery band every
//! period. Charging pays the tariff's charge price; discharging earns the
//! subsidy (discharge power is non-positive, so its cost term is a revenue).
//! A per-vehicle-period binary forbids simultaneous charge and discharge
//! through a big-M pair tightened to the vehicle's own power limits.
//!
//! The fleet problem separates by vehicle, so [`solve_sp1`] solves one small
//! MILP per vehicle and merges the results in vehicle-id order. The merged
//! per-region aggregate profile is the coupling quantity handed to the
//! network planner.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{Region, Tariff};
use crate::mip::{
    solve_milp, LinExpr, MilpBackend, MipError, MipModel, SolveLimits, SolveStatus, VarId,
};

/// Tie-break perturbation on the cost vector: earlier periods win among
/// equal-price schedules. Removed from every reported objective.
const TIE_EPS: f64 = 1e-9;

/// Period length in hours. Power in kW and energy in kWh merge numerically.
const DT_H: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("invalid fleet: {0}")]
    Invalid(String),
    #[error("vehicle {id}: scheduling subproblem is infeasible")]
    VehicleInfeasible { id: u32 },
    #[error(transparent)]
    Mip(#[from] MipError),
    #[error("fleet csv error: {0}")]
    Csv(String),
}

/// One autonomous EV: connection window, energy state and power limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AevSpec {
    pub id: u32,
    /// First connected period, 1-based.
    pub arrive: usize,
    /// Last connected period, inclusive.
    pub depart: usize,
    pub e_initial_kwh: f64,
    pub e_target_kwh: f64,
    pub e_min_kwh: f64,
    pub e_max_kwh: f64,
    pub p_charge_max_kw: f64,
    pub p_discharge_max_kw: f64,
    pub region: Region,
}

impl AevSpec {
    pub fn window(&self) -> std::ops::RangeInclusive<usize> {
        self.arrive..=self.depart
    }

    pub fn window_len(&self) -> usize {
        self.depart + 1 - self.arrive
    }

    pub fn connected(&self, t: usize) -> bool {
        t >= self.arrive && t <= self.depart
    }
}

/// The fleet of one scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AevFleet {
    pub vehicles: Vec<AevSpec>,
}

impl AevFleet {
    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    /// Regions that have at least one vehicle.
    pub fn regions(&self) -> Vec<Region> {
        let mut rs: Vec<Region> = self.vehicles.iter().map(|v| v.region).collect();
        rs.sort();
        rs.dedup();
        rs
    }

    pub fn validate(&self, periods: usize) -> Result<(), ScheduleError> {
        let mut ids = std::collections::BTreeSet::new();
        for v in &self.vehicles {
            let fail = |msg: String| Err(ScheduleError::Invalid(format!("vehicle {}: {msg}", v.id)));
            if !ids.insert(v.id) {
                return Err(ScheduleError::Invalid(format!("duplicate vehicle id {}", v.id)));
            }
            if v.arrive < 1 || v.depart > periods || v.arrive > v.depart {
                return fail(format!(
                    "window {}..={} must be contiguous within 1..={periods}",
                    v.arrive, v.depart
                ));
            }
            if v.e_min_kwh < 0.0 || v.p_charge_max_kw < 0.0 || v.p_discharge_max_kw < 0.0 {
                return fail("energy floor and power limits must be non-negative".into());
            }
            if !(v.e_min_kwh <= v.e_initial_kwh && v.e_initial_kwh <= v.e_max_kwh) {
                return fail(format!(
                    "initial energy {} outside [{}, {}]",
                    v.e_initial_kwh, v.e_min_kwh, v.e_max_kwh
                ));
            }
            if !(v.e_min_kwh <= v.e_target_kwh && v.e_target_kwh <= v.e_max_kwh) {
                return fail(format!(
                    "target energy {} outside [{}, {}]",
                    v.e_target_kwh, v.e_min_kwh, v.e_max_kwh
                ));
            }
            let reachable = v.p_charge_max_kw * v.window_len() as f64 * DT_H;
            if v.e_target_kwh - v.e_initial_kwh > reachable + 1e-9 {
                return fail(format!(
                    "target energy unreachable: needs {} kWh but window admits {} kWh",
                    v.e_target_kwh - v.e_initial_kwh,
                    reachable
                ));
            }
        }
        Ok(())
    }
}

/// Per-region aggregate station load, kW, indexed by 0-based period.
pub type RegionProfiles = BTreeMap<Region, Vec<f64>>;

/// All-zero profiles covering every region tag.
pub fn zero_profiles(periods: usize) -> RegionProfiles {
    Region::ALL
        .iter()
        .map(|r| (*r, vec![0.0; periods]))
        .collect()
}

/// Schedule of one vehicle. Power outside the window is zero by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleSchedule {
    pub id: u32,
    pub region: Region,
    pub p_ch_kw: Vec<f64>,
    /// Non-positive discharge power.
    pub p_dis_kw: Vec<f64>,
    /// Mode binary per period: true when the vehicle is allowed to discharge.
    pub discharging: Vec<bool>,
}

impl VehicleSchedule {
    /// Net grid draw per period (charge minus discharge magnitude).
    pub fn net_kw(&self, t: usize) -> f64 {
        self.p_ch_kw[t] + self.p_dis_kw[t]
    }

    /// Energy trajectory: entry `t` is the stored energy after period `t`
    /// (entry 0 is the initial energy).
    pub fn energy_trajectory(&self, e_initial: f64) -> Vec<f64> {
        let mut e = vec![e_initial];
        for t in 0..self.p_ch_kw.len() {
            e.push(e.last().unwrap() + self.net_kw(t) * DT_H);
        }
        e
    }
}

/// Output of SP1: per-vehicle schedules plus the per-region aggregate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub periods: usize,
    pub vehicles: Vec<VehicleSchedule>,
    /// `Σ_{u∈ω}(p_ch + p_dis)` per region and period, kW.
    pub region_profiles: RegionProfiles,
    /// Charging cost minus discharge subsidy, CNY per day, unperturbed.
    pub objective: f64,
    pub wall_time_s: f64,
}

impl ScheduleSolution {
    /// Write the per-vehicle schedule as `u,t,p_kw` rows (net power).
    pub fn write_schedule_csv(&self, path: impl AsRef<Path>) -> Result<(), ScheduleError> {
        let mut out = String::from("u,t,p_kw\n");
        for v in &self.vehicles {
            for t in 0..self.periods {
                out.push_str(&format!("{},{},{}\n", v.id, t + 1, v.net_kw(t)));
            }
        }
        std::fs::write(path, out).map_err(|e| ScheduleError::Csv(e.to_string()))
    }

    /// Write the aggregate profiles as `region,t,p_kw` rows.
    pub fn write_profile_csv(&self, path: impl AsRef<Path>) -> Result<(), ScheduleError> {
        write_profiles_csv(&self.region_profiles, path)
    }
}

/// Write any per-region profile set as `region,t,p_kw` rows.
pub fn write_profiles_csv(
    profiles: &RegionProfiles,
    path: impl AsRef<Path>,
) -> Result<(), ScheduleError> {
    let mut out = String::from("region,t,p_kw\n");
    for (region, profile) in profiles {
        for (t, p) in profile.iter().enumerate() {
            out.push_str(&format!("{region},{},{p}\n", t + 1));
        }
    }
    std::fs::write(path, out).map_err(|e| ScheduleError::Csv(e.to_string()))
}

/// Read per-region profiles from `region,t,p_kw` rows.
pub fn read_profiles_csv(
    path: impl AsRef<Path>,
    periods: usize,
) -> Result<RegionProfiles, ScheduleError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| ScheduleError::Csv(e.to_string()))?;
    let mut profiles = zero_profiles(periods);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ScheduleError::Csv(e.to_string()))?;
        let region = Region::parse(rec.get(0).unwrap_or(""))
            .ok_or_else(|| ScheduleError::Csv(format!("unknown region '{:?}'", rec.get(0))))?;
        let t: usize = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ScheduleError::Csv("bad period index".into()))?;
        let p: f64 = rec
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ScheduleError::Csv("bad power value".into()))?;
        if !(1..=periods).contains(&t) {
            return Err(ScheduleError::Csv(format!(
                "period {t} out of range 1..={periods}"
            )));
        }
        profiles.get_mut(&region).unwrap()[t - 1] = p;
    }
    Ok(profiles)
}

/// Variable handles of one vehicle inside a [`MipModel`]; `None` outside the
/// connection window.
#[derive(Debug, Clone)]
pub struct VehicleVars {
    pub p_ch: Vec<Option<VarId>>,
    pub p_dis: Vec<Option<VarId>>,
    pub mode: Vec<Option<VarId>>,
}

/// Add one vehicle's variables, constraints and cost terms to `model`.
///
/// Shared between the standalone SP1 path and the holistic model builder.
/// The holistic path disables the tie-break perturbation (network losses
/// already discriminate between schedules) and scales the energy-cost terms
/// onto its annualized objective via `cost_scale`.
pub fn add_vehicle(
    model: &mut MipModel,
    v: &AevSpec,
    tariff: &Tariff,
    perturb: bool,
    cost_scale: f64,
) -> VehicleVars {
    let periods = tariff.periods();
    let mut vars = VehicleVars {
        p_ch: vec![None; periods],
        p_dis: vec![None; periods],
        mode: vec![None; periods],
    };
    for t in v.window() {
        let i = t - 1;
        let p_ch = model.add_continuous(
            format!("aev_pch[{}][{t}]", v.id),
            0.0,
            v.p_charge_max_kw,
        );
        let p_dis = model.add_continuous(
            format!("aev_pdis[{}][{t}]", v.id),
            -v.p_discharge_max_kw,
            0.0,
        );
        let mode = model.add_binary(format!("aev_mode[{}][{t}]", v.id));
        // p_ch <= (1 - mode)·p̄_ch  and  p_dis >= -mode·p̄_dis, with the
        // tightest valid big-M (the vehicle's own limit).
        let mut ch_gate = LinExpr::var(p_ch);
        ch_gate.add_term(mode, v.p_charge_max_kw);
        model.add_le(format!("aev_ch_gate[{}][{t}]", v.id), ch_gate, v.p_charge_max_kw);
        let mut dis_gate = LinExpr::var(p_dis);
        dis_gate.add_term(mode, v.p_discharge_max_kw);
        model.add_ge(format!("aev_dis_gate[{}][{t}]", v.id), dis_gate, 0.0);

        let tie = if perturb { TIE_EPS * t as f64 } else { 0.0 };
        model.add_objective_term(p_ch, cost_scale * (tariff.charge_price[i] + tie));
        model.add_objective_term(p_dis, cost_scale * (tariff.discharge_subsidy[i] - tie));

        vars.p_ch[i] = Some(p_ch);
        vars.p_dis[i] = Some(p_dis);
        vars.mode[i] = Some(mode);
    }

    // Battery band on every prefix of the window, then the departure target.
    let mut prefix = LinExpr::default();
    for t in v.window() {
        let i = t - 1;
        prefix.add_term(vars.p_ch[i].unwrap(), DT_H);
        prefix.add_term(vars.p_dis[i].unwrap(), DT_H);
        model.add_ge(
            format!("aev_e_floor[{}][{t}]", v.id),
            prefix.clone(),
            v.e_min_kwh - v.e_initial_kwh,
        );
        model.add_le(
            format!("aev_e_ceiling[{}][{t}]", v.id),
            prefix.clone(),
            v.e_max_kwh - v.e_initial_kwh,
        );
    }
    model.add_ge(
        format!("aev_target[{}]", v.id),
        prefix,
        v.e_target_kwh - v.e_initial_kwh,
    );
    vars
}

/// Build the whole-fleet scheduling MILP.
pub fn build_sp1(fleet: &AevFleet, tariff: &Tariff) -> Result<MipModel, ScheduleError> {
    fleet.validate(tariff.periods())?;
    let mut model = MipModel::new();
    for v in &fleet.vehicles {
        add_vehicle(&mut model, v, tariff, true, 1.0);
    }
    Ok(model)
}

/// Solve SP1 by per-vehicle decomposition and merge in vehicle-id order.
///
/// Subproblems are solved to a zero relative gap — each one is a
/// 24-period-scale MILP, and downstream oracle comparisons need exact
/// optima. `limits.time_limit_s` still applies per vehicle.
pub fn solve_sp1(
    fleet: &AevFleet,
    tariff: &Tariff,
    backend: &dyn MilpBackend,
    limits: &SolveLimits,
) -> Result<ScheduleSolution, ScheduleError> {
    let periods = tariff.periods();
    fleet.validate(periods)?;
    let started = std::time::Instant::now();
    let vehicle_limits = SolveLimits {
        gap: 0.0,
        time_limit_s: limits.time_limit_s,
    };

    let mut ordered: Vec<&AevSpec> = fleet.vehicles.iter().collect();
    ordered.sort_by_key(|v| v.id);

    let mut vehicles = Vec::with_capacity(ordered.len());
    let mut region_profiles = zero_profiles(periods);
    let mut objective = 0.0;

    for v in ordered {
        let mut model = MipModel::new();
        let vars = add_vehicle(&mut model, v, tariff, true, 1.0);
        let report = solve_milp(backend, &model, &vehicle_limits)?;
        match report.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(ScheduleError::VehicleInfeasible { id: v.id })
            }
            _ => {
                return Err(ScheduleError::Mip(MipError::Backend(format!(
                    "vehicle {}: solver stopped with status {:?}",
                    v.id, report.status
                ))))
            }
        }
        let mut sched = VehicleSchedule {
            id: v.id,
            region: v.region,
            p_ch_kw: vec![0.0; periods],
            p_dis_kw: vec![0.0; periods],
            discharging: vec![false; periods],
        };
        for i in 0..periods {
            if let (Some(ch), Some(dis), Some(mode)) = (vars.p_ch[i], vars.p_dis[i], vars.mode[i]) {
                let pch = report.values[ch.index()].max(0.0);
                let pdis = report.values[dis.index()].min(0.0);
                sched.p_ch_kw[i] = pch;
                sched.p_dis_kw[i] = pdis;
                sched.discharging[i] = report.values[mode.index()] > 0.5;
                objective += tariff.charge_price[i] * pch + tariff.discharge_subsidy[i] * pdis;
                let agg = region_profiles.get_mut(&v.region).unwrap();
                agg[i] += pch + pdis;
            }
        }
        vehicles.push(sched);
    }

    Ok(ScheduleSolution {
        periods,
        vehicles,
        region_profiles,
        objective,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Ceiling profile: every connected vehicle charging at full power for its
/// whole window, ignoring state of charge. Used by the feasibility
/// certificate of the decomposition.
pub fn worst_case_profile(fleet: &AevFleet, periods: usize) -> RegionProfiles {
    let mut profiles = zero_profiles(periods);
    for v in &fleet.vehicles {
        let agg = profiles.get_mut(&v.region).unwrap();
        for t in v.window() {
            agg[t - 1] += v.p_charge_max_kw;
        }
    }
    profiles
}

#[derive(Debug, Deserialize)]
struct FleetRow {
    u: u32,
    arrive_t: usize,
    depart_t: usize,
    e0_kwh: f64,
    etarget_kwh: f64,
    emin_kwh: f64,
    emax_kwh: f64,
    pmax_kw: f64,
    region: String,
}

/// Read a fleet from CSV columns
/// `u,arrive_t,depart_t,e0_kwh,etarget_kwh,emin_kwh,emax_kwh,pmax_kw,region`.
/// `pmax_kw` bounds both charging and discharging.
pub fn read_fleet_csv(path: impl AsRef<Path>, periods: usize) -> Result<AevFleet, ScheduleError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| ScheduleError::Csv(e.to_string()))?;
    let mut vehicles = Vec::new();
    for rec in rdr.deserialize::<FleetRow>() {
        let row = rec.map_err(|e| ScheduleError::Csv(e.to_string()))?;
        let region = Region::parse(&row.region)
            .ok_or_else(|| ScheduleError::Csv(format!("unknown region '{}'", row.region)))?;
        vehicles.push(AevSpec {
            id: row.u,
            arrive: row.arrive_t,
            depart: row.depart_t,
            e_initial_kwh: row.e0_kwh,
            e_target_kwh: row.etarget_kwh,
            e_min_kwh: row.emin_kwh,
            e_max_kwh: row.emax_kwh,
            p_charge_max_kw: row.pmax_kw,
            p_discharge_max_kw: row.pmax_kw,
            region,
        });
    }
    let fleet = AevFleet { vehicles };
    fleet.validate(periods)?;
    Ok(fleet)
}

/// Write a fleet in the same CSV layout accepted by [`read_fleet_csv`].
pub fn write_fleet_csv(fleet: &AevFleet, path: impl AsRef<Path>) -> Result<(), ScheduleError> {
    let mut out =
        String::from("u,arrive_t,depart_t,e0_kwh,etarget_kwh,emin_kwh,emax_kwh,pmax_kw,region\n");
    for v in &fleet.vehicles {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            v.id,
            v.arrive,
            v.depart,
            v.e_initial_kwh,
            v.e_target_kwh,
            v.e_min_kwh,
            v.e_max_kwh,
            v.p_charge_max_kw,
            v.region
        ));
    }
    std::fs::write(path, out).map_err(|e| ScheduleError::Csv(e.to_string()))
}
