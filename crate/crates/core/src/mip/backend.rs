//! MILP backend contract and the HiGHS adapter.
//!
//! The contract is deliberately narrow — pass variables, rows and an
//! objective, solve, read values — so that any MILP engine can sit behind
//! it. The backend never sees cone terms; those are enforced by the
//! outer-approximation loop through the `extra_rows` argument.

use highs::{HighsModelStatus, RowProblem, Sense};

use super::{CmpSense, LinConstraint, MipError, MipModel, SolveLimits, SolveStatus, VarKind};

/// Raw result of one backend call.
#[derive(Debug, Clone)]
pub struct BackendSolution {
    pub status: SolveStatus,
    /// Variable values, empty when no incumbent is available.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Relative MIP gap of the incumbent; 0 for LPs solved to optimality.
    pub gap: f64,
}

/// A mixed-integer linear solver.
pub trait MilpBackend: Send + Sync {
    fn id(&self) -> &'static str;

    /// Solve the linear part of `model` plus `extra_rows` (cutting planes).
    fn solve(
        &self,
        model: &MipModel,
        extra_rows: &[LinConstraint],
        limits: &SolveLimits,
    ) -> Result<BackendSolution, MipError>;
}

/// Adapter over the HiGHS solver.
#[derive(Debug, Default, Clone)]
pub struct HighsBackend;

impl HighsBackend {
    pub fn new() -> HighsBackend {
        HighsBackend
    }
}

impl MilpBackend for HighsBackend {
    fn id(&self) -> &'static str {
        "highs"
    }

    fn solve(
        &self,
        model: &MipModel,
        extra_rows: &[LinConstraint],
        limits: &SolveLimits,
    ) -> Result<BackendSolution, MipError> {
        model.validate()?;
        if model.vars.is_empty() {
            return solve_empty(model, extra_rows);
        }

        let mut objective = vec![0.0; model.vars.len()];
        for (v, c) in &model.objective.terms {
            objective[v.0] += c;
        }

        let mut pb = RowProblem::default();
        let mut cols = Vec::with_capacity(model.vars.len());
        for (i, v) in model.vars.iter().enumerate() {
            let col = match v.kind {
                VarKind::Continuous => pb.add_column(objective[i], v.lb..=v.ub),
                VarKind::Binary => pb.add_integer_column(objective[i], v.lb..=v.ub),
            };
            cols.push(col);
        }
        let add_row = |pb: &mut RowProblem, c: &LinConstraint| {
            let factors: Vec<_> = c.terms.iter().map(|(v, coeff)| (cols[v.0], *coeff)).collect();
            match c.sense {
                CmpSense::Le => pb.add_row(..=c.rhs, &factors),
                CmpSense::Ge => pb.add_row(c.rhs.., &factors),
                CmpSense::Eq => pb.add_row(c.rhs..=c.rhs, &factors),
            };
        };
        for c in &model.constraints {
            add_row(&mut pb, c);
        }
        for c in extra_rows {
            add_row(&mut pb, c);
        }

        let is_mip = model.vars.iter().any(|v| v.kind == VarKind::Binary);
        let mut solver = pb
            .try_optimise(Sense::Minimise)
            .map_err(|e| MipError::Backend(format!("HiGHS rejected the model: {e:?}")))?;
        solver.set_option("threads", 1);
        solver.set_option("parallel", "off");
        solver.set_option("random_seed", 0);
        solver.set_option("primal_feasibility_tolerance", 1e-9);
        solver.set_option("dual_feasibility_tolerance", 1e-9);
        if is_mip {
            solver.set_option("mip_rel_gap", limits.gap);
            solver.set_option("mip_feasibility_tolerance", 1e-9);
        }
        if let Some(t) = limits.time_limit_s {
            solver.set_option("time_limit", t);
        }

        let solved = solver
            .try_solve()
            .map_err(|e| MipError::Backend(format!("HiGHS solve failed: {e:?}")))?;
        let status = solved.status();
        let raw_gap = solved.mip_gap();
        let gap = if raw_gap.is_finite() { raw_gap } else { 0.0 };

        match status {
            HighsModelStatus::Optimal => {
                let values = round_binaries(model, solved.get_solution().columns().to_vec());
                let objective = eval_objective(model, &values);
                Ok(BackendSolution {
                    status: SolveStatus::Optimal,
                    values,
                    objective,
                    gap,
                })
            }
            HighsModelStatus::Infeasible => Ok(BackendSolution {
                status: SolveStatus::Infeasible,
                values: Vec::new(),
                objective: f64::INFINITY,
                gap: f64::INFINITY,
            }),
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                Err(MipError::Unbounded)
            }
            HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
                // HiGHS only reports a finite gap when a MIP incumbent exists.
                if is_mip && raw_gap.is_finite() {
                    let values = round_binaries(model, solved.get_solution().columns().to_vec());
                    let objective = eval_objective(model, &values);
                    Ok(BackendSolution {
                        status: SolveStatus::Feasible,
                        values,
                        objective,
                        gap,
                    })
                } else {
                    Ok(BackendSolution {
                        status: SolveStatus::Limit,
                        values: Vec::new(),
                        objective: f64::NAN,
                        gap: f64::INFINITY,
                    })
                }
            }
            other => Err(MipError::Backend(format!(
                "unexpected HiGHS status {other:?}"
            ))),
        }
    }
}

/// A model without variables is decided by inspecting its constant rows.
fn solve_empty(
    model: &MipModel,
    extra_rows: &[LinConstraint],
) -> Result<BackendSolution, MipError> {
    let feasible = model
        .constraints
        .iter()
        .chain(extra_rows)
        .all(|c| c.violation(&[]) <= 1e-12);
    Ok(if feasible {
        BackendSolution {
            status: SolveStatus::Optimal,
            values: Vec::new(),
            objective: model.objective.constant,
            gap: 0.0,
        }
    } else {
        BackendSolution {
            status: SolveStatus::Infeasible,
            values: Vec::new(),
            objective: f64::INFINITY,
            gap: f64::INFINITY,
        }
    })
}

fn round_binaries(model: &MipModel, mut values: Vec<f64>) -> Vec<f64> {
    for (i, v) in model.vars.iter().enumerate() {
        if v.kind == VarKind::Binary {
            values[i] = values[i].round().clamp(0.0, 1.0);
        }
    }
    values
}

fn eval_objective(model: &MipModel, values: &[f64]) -> f64 {
    model.objective.eval(values)
}

/// Instantiate the backend selected by `GRIDFORGE_SOLVER` (default `highs`).
pub fn backend_from_env() -> Result<Box<dyn MilpBackend>, MipError> {
    let name = std::env::var("GRIDFORGE_SOLVER").unwrap_or_else(|_| "highs".into());
    match name.as_str() {
        "highs" => Ok(Box::new(HighsBackend::new())),
        other => Err(MipError::BackendUnavailable(format!(
            "unknown solver '{other}' (available: highs)"
        ))),
    }
}
