//! Backend-neutral mixed-integer model container plus the conic
//! outer-approximation engine that upgrades a plain MILP backend to
//! MISOCP-capable.
//!
//! A [`MipModel`] holds variables, sparse linear constraints and a linear
//! objective, together with two kinds of registered quadratic structure:
//!
//! * [`ConeTerm`] — a constraint `x² + y² ≤ radius²` with an affine,
//!   non-negative radius (line and station capacities), and
//! * [`QuadEpigraph`] — a variable `epi ≥ x² + y²` carrying positive
//!   objective weight (network-loss terms).
//!
//! [`solve_milp`] solves the purely linear part through a [`MilpBackend`];
//! [`solve_with_oa`] runs the cutting-plane loop that enforces the quadratic
//! terms by accumulating tangent and gradient cuts at MILP incumbents.

mod backend;
mod oa;

pub use backend::{backend_from_env, BackendSolution, HighsBackend, MilpBackend};
pub use oa::{solve_milp, solve_with_oa, OaOptions};

use std::fmt;

use thiserror::Error;

use crate::case::NetworkCase;

/// Handle to a variable of a [`MipModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct VarDef {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

/// Sparse affine expression `Σ coeff·var + constant`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> LinExpr {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> LinExpr {
        LinExpr {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn scaled(v: VarId, coeff: f64) -> LinExpr {
        LinExpr {
            terms: vec![(v, coeff)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, v: VarId, coeff: f64) -> &mut Self {
        self.terms.push((v, coeff));
        self
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(v, c)| c * values[v.0])
            .sum::<f64>()
            + self.constant
    }

    /// Merge duplicate variable entries and drop zero coefficients.
    fn compacted(&self) -> Vec<(usize, f64)> {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        let mut sorted: Vec<(usize, f64)> = self.terms.iter().map(|(v, c)| (v.0, *c)).collect();
        sorted.sort_by_key(|(v, _)| *v);
        for (v, c) in sorted {
            match merged.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        merged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpSense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for CmpSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpSense::Le => "<=",
            CmpSense::Ge => ">=",
            CmpSense::Eq => "=",
        })
    }
}

/// A linear constraint `terms sense rhs`.
#[derive(Debug, Clone)]
pub struct LinConstraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: CmpSense,
    pub rhs: f64,
}

impl LinConstraint {
    /// Signed violation at a point: positive means the constraint is broken.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs: f64 = self.terms.iter().map(|(v, c)| c * values[v.0]).sum();
        match self.sense {
            CmpSense::Le => lhs - self.rhs,
            CmpSense::Ge => self.rhs - lhs,
            CmpSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Registered second-order cone constraint `x² + y² ≤ radius²`.
///
/// The radius is affine (for example `z·S̄` with a binary build variable) and
/// must evaluate non-negative at every feasible point.
#[derive(Debug, Clone)]
pub struct ConeTerm {
    pub x: VarId,
    pub y: VarId,
    pub radius: LinExpr,
    pub name: String,
}

/// Registered epigraph variable `epi ≥ x² + y²`; `epi` must carry positive
/// objective weight so minimization presses it onto the quadratic.
#[derive(Debug, Clone)]
pub struct QuadEpigraph {
    pub x: VarId,
    pub y: VarId,
    pub epi: VarId,
    pub name: String,
}

/// Solver-independent mixed-integer model.
#[derive(Debug, Clone, Default)]
pub struct MipModel {
    pub vars: Vec<VarDef>,
    pub constraints: Vec<LinConstraint>,
    /// Objective, always minimized.
    pub objective: LinExpr,
    pub cone_terms: Vec<ConeTerm>,
    pub epigraph_terms: Vec<QuadEpigraph>,
}

impl MipModel {
    pub fn new() -> MipModel {
        MipModel::default()
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(VarDef {
            name: name.into(),
            kind: VarKind::Continuous,
            lb,
            ub,
        });
        id
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(VarDef {
            name: name.into(),
            kind: VarKind::Binary,
            lb: 0.0,
            ub: 1.0,
        });
        id
    }

    /// Add `expr sense rhs`; any constant in `expr` is folded into the rhs.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        expr: LinExpr,
        sense: CmpSense,
        rhs: f64,
    ) {
        self.constraints.push(LinConstraint {
            name: name.into(),
            rhs: rhs - expr.constant,
            terms: expr.terms,
            sense,
        });
    }

    pub fn add_le(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.add_constraint(name, expr, CmpSense::Le, rhs);
    }

    pub fn add_ge(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.add_constraint(name, expr, CmpSense::Ge, rhs);
    }

    pub fn add_eq(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.add_constraint(name, expr, CmpSense::Eq, rhs);
    }

    /// Accumulate an objective coefficient on a variable.
    pub fn add_objective_term(&mut self, v: VarId, coeff: f64) {
        self.objective.terms.push((v, coeff));
    }

    pub fn add_objective_constant(&mut self, c: f64) {
        self.objective.constant += c;
    }

    pub fn add_cone(&mut self, name: impl Into<String>, x: VarId, y: VarId, radius: LinExpr) {
        self.cone_terms.push(ConeTerm {
            x,
            y,
            radius,
            name: name.into(),
        });
    }

    /// Register `epi ≥ x² + y²` and give `epi` objective weight `weight`.
    pub fn add_epigraph(
        &mut self,
        name: impl Into<String>,
        x: VarId,
        y: VarId,
        epi: VarId,
        weight: f64,
    ) {
        assert!(weight > 0.0, "epigraph objective weight must be positive");
        self.add_objective_term(epi, weight);
        self.epigraph_terms.push(QuadEpigraph {
            x,
            y,
            epi,
            name: name.into(),
        });
    }

    pub fn is_pure_milp(&self) -> bool {
        self.cone_terms.is_empty() && self.epigraph_terms.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    /// Count variables whose name starts with `prefix`; used by structural
    /// tests and reporting.
    pub fn count_vars_with_prefix(&self, prefix: &str) -> usize {
        self.vars
            .iter()
            .filter(|v| v.name.starts_with(prefix))
            .count()
    }

    /// Structural sanity checks: referenced variables exist (guaranteed by
    /// construction through [`VarId`]) and binary bounds stay within [0, 1].
    pub fn validate(&self) -> Result<(), MipError> {
        for (i, v) in self.vars.iter().enumerate() {
            if v.lb > v.ub {
                return Err(MipError::InvalidModel(format!(
                    "variable {} has crossed bounds [{}, {}]",
                    v.name, v.lb, v.ub
                )));
            }
            if v.kind == VarKind::Binary && (v.lb < 0.0 || v.ub > 1.0) {
                return Err(MipError::InvalidModel(format!(
                    "binary variable {} (#{i}) has bounds outside [0, 1]",
                    v.name
                )));
            }
        }
        Ok(())
    }

    /// Dump the linear part in CPLEX LP format. Conic and epigraph terms are
    /// not expressible in LP format and are emitted as comments.
    pub fn write_lp(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        let var_name = |v: VarId| format!("x{}", v.0);
        writeln!(w, "\\ {} vars, {} rows", self.vars.len(), self.constraints.len())?;
        writeln!(w, "Minimize")?;
        let mut obj = String::from(" obj:");
        for (v, c) in self.objective.compacted() {
            obj.push_str(&format!(" {:+} {}", c, var_name(VarId(v))));
        }
        writeln!(w, "{obj}")?;
        writeln!(w, "Subject To")?;
        for (i, c) in self.constraints.iter().enumerate() {
            let mut row = format!(" c{i}:");
            let expr = LinExpr {
                terms: c.terms.clone(),
                constant: 0.0,
            };
            for (v, coeff) in expr.compacted() {
                row.push_str(&format!(" {:+} {}", coeff, var_name(VarId(v))));
            }
            row.push_str(&format!(" {} {}", c.sense, c.rhs));
            writeln!(w, "{row}")?;
        }
        for cone in &self.cone_terms {
            writeln!(
                w,
                "\\ cone {}: {}^2 + {}^2 <= radius^2",
                cone.name,
                var_name(cone.x),
                var_name(cone.y)
            )?;
        }
        for epi in &self.epigraph_terms {
            writeln!(
                w,
                "\\ epigraph {}: {} >= {}^2 + {}^2",
                epi.name,
                var_name(epi.epi),
                var_name(epi.x),
                var_name(epi.y)
            )?;
        }
        writeln!(w, "Bounds")?;
        for (i, v) in self.vars.iter().enumerate() {
            writeln!(w, " {} <= x{} <= {}", v.lb, i, v.ub)?;
        }
        let binaries: Vec<String> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| format!("x{i}"))
            .collect();
        if !binaries.is_empty() {
            writeln!(w, "Binaries")?;
            writeln!(w, " {}", binaries.join(" "))?;
        }
        writeln!(w, "End")
    }
}

/// Outcome class of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    /// Proven optimal within the gap, all registered cones satisfied.
    Optimal,
    /// An incumbent exists but optimality was not proven within limits.
    Feasible,
    Infeasible,
    /// A limit (time, rounds) was hit without a usable incumbent.
    Limit,
}

/// One outer-approximation round, for gap-versus-time reporting.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OaRound {
    pub round: usize,
    pub elapsed_s: f64,
    pub objective: f64,
    pub max_violation: f64,
    pub backend_gap: f64,
    pub cuts_added: usize,
}

/// Result of a solve, shared by the pure-MILP and OA paths.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    /// Values indexed by [`VarId`]; empty when no incumbent exists.
    pub values: Vec<f64>,
    /// Proven relative gap bound of the final incumbent.
    pub mip_gap: f64,
    pub oa_iterations: usize,
    pub max_cone_violation: f64,
    pub wall_time_s: f64,
    /// Per-round history (one entry for pure MILP solves).
    pub rounds: Vec<OaRound>,
}

impl SolveReport {
    pub fn has_solution(&self) -> bool {
        !self.values.is_empty()
    }
}

/// Limits forwarded to the MILP backend.
#[derive(Debug, Clone)]
pub struct SolveLimits {
    /// Relative MIP gap target.
    pub gap: f64,
    /// Wall-clock limit per backend call, seconds.
    pub time_limit_s: Option<f64>,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits {
            gap: 1e-4,
            time_limit_s: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum MipError {
    #[error("solver backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("model is unbounded")]
    Unbounded,
    #[error("model contains conic terms; use solve_with_oa")]
    NotPureMilp,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Context for big-M derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BigMContext {
    /// Disjunctive voltage-drop relaxation on squared voltages (per unit).
    VoltageDrop,
    /// Station active/reactive gating (kVA).
    V2gPower,
    /// Per-fleet vehicle power gating (kW).
    AevPower,
}

/// Smallest safe relaxation constant for the given constraint family.
///
/// * voltage-drop: `(V̄² − V̲²) + 2·max_l (R_l + X_l)·S̄_l / V̲` in per unit —
///   an upper bound on `|w_i − w_j − 2(R P + X Q)|` over the operating box;
/// * v2g-power: the largest station capacity in kVA;
/// * aev-power: the largest vehicle power limit in kW across scenarios.
pub fn derive_big_m(context: BigMContext, case: &NetworkCase) -> f64 {
    match context {
        BigMContext::VoltageDrop => {
            let vb = &case.voltage_bounds;
            let w_span = vb.v_max_pu * vb.v_max_pu - vb.v_min_pu * vb.v_min_pu;
            let z_base = case.base.z_base_ohm();
            let s_base = case.base.s_base_kva();
            let max_drop = case
                .candidate_lines
                .iter()
                .map(|l| {
                    let r_pu = l.r_ohm / z_base;
                    let x_pu = l.x_ohm / z_base;
                    let s_pu = l.s_max_kva / s_base;
                    (r_pu + x_pu) * s_pu
                })
                .fold(0.0, f64::max);
            w_span + 2.0 * max_drop / vb.v_min_pu
        }
        BigMContext::V2gPower => case
            .nodes
            .iter()
            .filter_map(|n| n.v2g_candidate.as_ref())
            .map(|c| c.s_max_kva)
            .fold(0.0, f64::max),
        BigMContext::AevPower => case
            .scenarios
            .iter()
            .flat_map(|s| s.fleet.vehicles.iter())
            .map(|v| v.p_charge_max_kw.max(v.p_discharge_max_kw))
            .fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_bounds_validated() {
        let mut m = MipModel::new();
        let b = m.add_binary("b");
        m.vars[b.0].ub = 2.0;
        assert!(matches!(m.validate(), Err(MipError::InvalidModel(_))));
    }

    #[test]
    fn constraint_constant_folds_into_rhs() {
        let mut m = MipModel::new();
        let x = m.add_continuous("x", 0.0, 10.0);
        let mut e = LinExpr::var(x);
        e.constant = 2.5;
        m.add_le("c", e, 4.0);
        assert_eq!(m.constraints[0].rhs, 1.5);
    }

    #[test]
    fn lp_dump_mentions_cones() {
        let mut m = MipModel::new();
        let x = m.add_continuous("x", -1.0, 1.0);
        let y = m.add_continuous("y", -1.0, 1.0);
        m.add_cone("k", x, y, LinExpr::constant(1.0));
        let mut buf = Vec::new();
        m.write_lp(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("cone k"));
        assert!(text.contains("Bounds"));
    }
}
