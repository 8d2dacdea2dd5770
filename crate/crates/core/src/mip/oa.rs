//! Outer-approximation loop: enforces registered cones and epigraphs by
//! accumulating linear cuts at MILP incumbents.
//!
//! Cone `x² + y² ≤ ρ²` (affine ρ ≥ 0) is exactly the intersection of the
//! half-spaces `x·cosθ + y·sinθ ≤ ρ` over all angles θ, so every tangent cut
//! is globally valid and the scheme never excludes a feasible point. For
//! `epi ≥ x² + y²` the gradient cut at `(x̂, ŷ)` is
//! `epi ≥ 2x̂·x + 2ŷ·y − (x̂² + ŷ²)`, the first-order underestimator of the
//! convex quadratic.

use std::time::Instant;

use super::{
    CmpSense, LinConstraint, MilpBackend, MipError, MipModel, OaRound, SolveLimits, SolveReport,
    SolveStatus,
};

/// Tuning knobs for [`solve_with_oa`].
#[derive(Debug, Clone)]
pub struct OaOptions {
    /// Termination tolerance on `x² + y² − ρ²` (cones) and
    /// `x² + y² − epi` (epigraphs).
    pub cone_tol: f64,
    pub max_rounds: usize,
    /// Evenly spaced tangents installed on every cone before round 1.
    pub seed_tangents: usize,
}

impl Default for OaOptions {
    fn default() -> Self {
        OaOptions {
            cone_tol: 1e-6,
            max_rounds: 50,
            seed_tangents: 8,
        }
    }
}

/// Solve a purely linear model through the backend.
pub fn solve_milp(
    backend: &dyn MilpBackend,
    model: &MipModel,
    limits: &SolveLimits,
) -> Result<SolveReport, MipError> {
    if !model.is_pure_milp() {
        return Err(MipError::NotPureMilp);
    }
    let start = Instant::now();
    let sol = backend.solve(model, &[], limits)?;
    let wall = start.elapsed().as_secs_f64();
    Ok(SolveReport {
        status: sol.status,
        objective: sol.objective,
        rounds: vec![OaRound {
            round: 1,
            elapsed_s: wall,
            objective: sol.objective,
            max_violation: 0.0,
            backend_gap: sol.gap,
            cuts_added: 0,
        }],
        values: sol.values,
        mip_gap: sol.gap,
        oa_iterations: 0,
        max_cone_violation: 0.0,
        wall_time_s: wall,
    })
}

/// Solve a model that may carry cone and epigraph terms.
///
/// Each round solves the MILP relaxation under the cuts accumulated so far,
/// measures every registered quadratic term at the incumbent, and adds one
/// tangent (cone) or gradient (epigraph) cut per violated term. Terminates
/// when the largest violation drops to `cone_tol` or `max_rounds` is hit.
pub fn solve_with_oa(
    backend: &dyn MilpBackend,
    model: &MipModel,
    limits: &SolveLimits,
    options: &OaOptions,
) -> Result<SolveReport, MipError> {
    let start = Instant::now();
    let mut cuts: Vec<LinConstraint> = Vec::new();
    let mut cone_angles: Vec<Vec<f64>> = vec![Vec::new(); model.cone_terms.len()];

    // Seed tangents stabilise round 1 and bound cone variables even when the
    // affine radius is zero at the incumbent.
    for ci in 0..model.cone_terms.len() {
        for m in 0..options.seed_tangents {
            let theta = 2.0 * std::f64::consts::PI * m as f64 / options.seed_tangents as f64;
            cuts.push(cone_cut(model, ci, theta));
            cone_angles[ci].push(theta);
        }
    }

    let mut rounds: Vec<OaRound> = Vec::new();
    let mut last: Option<super::BackendSolution> = None;

    for round in 1..=options.max_rounds {
        let remaining = limits.time_limit_s.map(|t| {
            let left = t - start.elapsed().as_secs_f64();
            left.max(0.05)
        });
        let round_limits = SolveLimits {
            gap: limits.gap,
            time_limit_s: remaining,
        };
        let sol = backend.solve(model, &cuts, &round_limits)?;
        match sol.status {
            SolveStatus::Infeasible => {
                // The cut set outer-approximates the true feasible region, so
                // infeasibility of the relaxation proves the conic model
                // infeasible.
                return Ok(SolveReport {
                    status: SolveStatus::Infeasible,
                    objective: f64::INFINITY,
                    values: Vec::new(),
                    mip_gap: f64::INFINITY,
                    oa_iterations: round,
                    max_cone_violation: 0.0,
                    wall_time_s: start.elapsed().as_secs_f64(),
                    rounds,
                });
            }
            SolveStatus::Limit => {
                return Ok(SolveReport {
                    status: SolveStatus::Limit,
                    objective: f64::NAN,
                    values: Vec::new(),
                    mip_gap: f64::INFINITY,
                    oa_iterations: round,
                    max_cone_violation: f64::NAN,
                    wall_time_s: start.elapsed().as_secs_f64(),
                    rounds,
                });
            }
            SolveStatus::Optimal | SolveStatus::Feasible => {}
        }

        let values = &sol.values;
        let mut max_violation: f64 = 0.0;
        let mut new_cuts: Vec<LinConstraint> = Vec::new();

        for (ci, cone) in model.cone_terms.iter().enumerate() {
            let x = values[cone.x.0];
            let y = values[cone.y.0];
            let rho = cone.radius.eval(values).max(0.0);
            let viol = x * x + y * y - rho * rho;
            max_violation = max_violation.max(viol);
            if viol > options.cone_tol {
                let norm = x.hypot(y);
                if norm > 1e-12 {
                    let theta = y.atan2(x);
                    if !is_duplicate_angle(&cone_angles[ci], theta) {
                        new_cuts.push(cone_cut(model, ci, theta));
                        cone_angles[ci].push(theta);
                    }
                }
            }
        }
        for epi in &model.epigraph_terms {
            let x = values[epi.x.0];
            let y = values[epi.y.0];
            let e = values[epi.epi.0];
            let viol = x * x + y * y - e;
            max_violation = max_violation.max(viol);
            if viol > options.cone_tol {
                // epi >= 2x̂·x + 2ŷ·y − (x̂² + ŷ²)
                new_cuts.push(LinConstraint {
                    name: format!("oa_grad[{}]", epi.name),
                    terms: vec![(epi.x, 2.0 * x), (epi.y, 2.0 * y), (epi.epi, -1.0)],
                    sense: CmpSense::Le,
                    rhs: x * x + y * y,
                });
            }
        }

        rounds.push(OaRound {
            round,
            elapsed_s: start.elapsed().as_secs_f64(),
            objective: sol.objective,
            max_violation,
            backend_gap: sol.gap,
            cuts_added: new_cuts.len(),
        });

        if max_violation <= options.cone_tol {
            return Ok(SolveReport {
                status: sol.status,
                objective: sol.objective,
                values: sol.values,
                mip_gap: sol.gap,
                oa_iterations: round,
                max_cone_violation: max_violation,
                wall_time_s: start.elapsed().as_secs_f64(),
                rounds,
            });
        }
        let stalled = new_cuts.is_empty();
        cuts.extend(new_cuts);
        last = Some(sol);
        if stalled {
            break;
        }
    }

    // Ran out of rounds (or stalled on duplicate cuts): report the final
    // incumbent with its residual so callers can diagnose.
    let (objective, values, gap) = match last {
        Some(sol) => (sol.objective, sol.values, sol.gap),
        None => (f64::NAN, Vec::new(), f64::INFINITY),
    };
    let max_violation = rounds.last().map(|r| r.max_violation).unwrap_or(f64::NAN);
    Ok(SolveReport {
        status: SolveStatus::Limit,
        objective,
        values,
        mip_gap: gap,
        oa_iterations: rounds.len(),
        max_cone_violation: max_violation,
        wall_time_s: start.elapsed().as_secs_f64(),
        rounds,
    })
}

/// Tangent half-space `x·cosθ + y·sinθ ≤ ρ` for cone `ci`.
fn cone_cut(model: &MipModel, ci: usize, theta: f64) -> LinConstraint {
    let cone = &model.cone_terms[ci];
    let (c, s) = (theta.cos(), theta.sin());
    let mut terms = vec![(cone.x, c), (cone.y, s)];
    for (v, coeff) in &cone.radius.terms {
        terms.push((*v, -coeff));
    }
    LinConstraint {
        name: format!("oa_tangent[{}]", cone.name),
        terms,
        sense: CmpSense::Le,
        rhs: cone.radius.constant,
    }
}

fn is_duplicate_angle(angles: &[f64], theta: f64) -> bool {
    angles.iter().any(|a| {
        let mut d = (a - theta).abs() % (2.0 * std::f64::consts::PI);
        if d > std::f64::consts::PI {
            d = 2.0 * std::f64::consts::PI - d;
        }
        d < 1e-9
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{HighsBackend, LinExpr};

    fn backend() -> HighsBackend {
        HighsBackend::new()
    }

    #[test]
    fn milp_min_x_with_lower_bound() {
        let mut m = MipModel::new();
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
        m.add_objective_term(x, 1.0);
        m.add_ge("x_min", LinExpr::var(x), 3.0);
        let rep = solve_milp(&backend(), &m, &SolveLimits::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!((rep.objective - 3.0).abs() < 1e-9);
        assert!((rep.values[x.0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn milp_binary_packing() {
        let mut m = MipModel::new();
        let x = m.add_binary("x");
        let y = m.add_binary("y");
        // max x + y  <=>  min −x − y
        m.add_objective_term(x, -1.0);
        m.add_objective_term(y, -1.0);
        let mut e = LinExpr::var(x);
        e.add_term(y, 1.0);
        m.add_le("cap", e, 1.0);
        let rep = solve_milp(&backend(), &m, &SolveLimits::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!((rep.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn milp_infeasible_is_status_not_error() {
        let mut m = MipModel::new();
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
        m.add_ge("ge3", LinExpr::var(x), 3.0);
        m.add_le("le2", LinExpr::var(x), 2.0);
        let rep = solve_milp(&backend(), &m, &SolveLimits::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Infeasible);
    }

    #[test]
    fn milp_rejects_conic_models() {
        let mut m = MipModel::new();
        let x = m.add_continuous("x", -1.0, 1.0);
        let y = m.add_continuous("y", -1.0, 1.0);
        m.add_cone("k", x, y, LinExpr::constant(1.0));
        assert!(matches!(
            solve_milp(&backend(), &m, &SolveLimits::default()),
            Err(MipError::NotPureMilp)
        ));
    }

    #[test]
    fn epigraph_converges_to_quadratic_value() {
        // min epi s.t. epi >= x² + y², x = y = 1 fixed: optimum epi = 2.
        let mut m = MipModel::new();
        let x = m.add_continuous("x", 1.0, 1.0);
        let y = m.add_continuous("y", 1.0, 1.0);
        let epi = m.add_continuous("epi", 0.0, f64::INFINITY);
        m.add_epigraph("sq", x, y, epi, 1.0);
        let rep = solve_with_oa(
            &backend(),
            &m,
            &SolveLimits::default(),
            &OaOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!(
            (rep.values[epi.0] - 2.0).abs() <= 1e-6,
            "epi = {}",
            rep.values[epi.0]
        );
    }

    #[test]
    fn cone_analytic_optimum_sqrt2_over_2() {
        // max x + y s.t. x² + y² <= 1 has optimum x = y = √2/2. The
        // objective converges like the violation; the coordinates converge
        // like its square root, so they need a tighter cone tolerance.
        let mut m = MipModel::new();
        let x = m.add_continuous("x", -2.0, 2.0);
        let y = m.add_continuous("y", -2.0, 2.0);
        m.add_objective_term(x, -1.0);
        m.add_objective_term(y, -1.0);
        m.add_cone("disc", x, y, LinExpr::constant(1.0));

        let rep = solve_with_oa(
            &backend(),
            &m,
            &SolveLimits::default(),
            &OaOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!(rep.max_cone_violation <= 1e-6);
        assert!(
            (-rep.objective - std::f64::consts::SQRT_2).abs() < 1e-4,
            "objective {}",
            rep.objective
        );

        let tight = OaOptions {
            cone_tol: 1e-9,
            max_rounds: 100,
            seed_tangents: 8,
        };
        let rep = solve_with_oa(&backend(), &m, &SolveLimits::default(), &tight).unwrap();
        let s = std::f64::consts::SQRT_2 / 2.0;
        assert!((rep.values[x.0] - s).abs() < 1e-4, "x = {}", rep.values[x.0]);
        assert!((rep.values[y.0] - s).abs() < 1e-4, "y = {}", rep.values[y.0]);
    }

    #[test]
    fn no_conic_terms_degenerates_to_single_round() {
        let mut m = MipModel::new();
        let x = m.add_continuous("x", 0.0, 10.0);
        m.add_objective_term(x, 1.0);
        m.add_ge("ge", LinExpr::var(x), 4.0);
        let oa = solve_with_oa(
            &backend(),
            &m,
            &SolveLimits::default(),
            &OaOptions::default(),
        )
        .unwrap();
        let direct = solve_milp(&backend(), &m, &SolveLimits::default()).unwrap();
        assert_eq!(oa.oa_iterations, 1);
        assert!((oa.objective - direct.objective).abs() < 1e-12);
        assert_eq!(oa.values, direct.values);
    }

    #[test]
    fn oa_proves_conic_infeasibility() {
        // x² + y² <= 1 with x >= 2 is infeasible.
        let mut m = MipModel::new();
        let x = m.add_continuous("x", 2.0, 5.0);
        let y = m.add_continuous("y", -5.0, 5.0);
        m.add_objective_term(x, 1.0);
        m.add_cone("disc", x, y, LinExpr::constant(1.0));
        let rep = solve_with_oa(
            &backend(),
            &m,
            &SolveLimits::default(),
            &OaOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.status, SolveStatus::Infeasible);
    }
}
