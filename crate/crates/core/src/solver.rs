//! Backend-agnostic LP/MILP model construction.
//!
//! Modeling code builds a [`ModelHandle`] (variables, rows, objective) and calls
//! [`solve`]. The only backend is HiGHS; it is rebuilt from the handle on every
//! solve, so rows and columns may be appended freely between solves.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use highs::{HighsModelStatus, RowProblem, Sense};

use crate::error::{HarsoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub integral: bool,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// Linear expression `Σ coef·var + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(id: VarId) -> Self {
        Self::term(id, 1.0)
    }

    pub fn term(id: VarId, coef: f64) -> Self {
        Self {
            terms: vec![(id, coef)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, id: VarId, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((id, coef));
        }
        self
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, other: &LinExpr, factor: f64) -> &mut Self {
        if factor == 0.0 {
            return self;
        }
        for &(id, c) in &other.terms {
            self.terms.push((id, c * factor));
        }
        self.constant += other.constant * factor;
        self
    }

    pub fn scaled(&self, factor: f64) -> LinExpr {
        let mut out = LinExpr::default();
        out.add_scaled(self, factor);
        out
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(id, c)| c * values[id.0]).sum::<f64>()
    }
}

/// A model under construction. Single owner; build and solve distinct models
/// from distinct threads if needed.
#[derive(Debug, Clone)]
pub struct ModelHandle {
    name: String,
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    var_names: HashMap<String, VarId>,
    row_names: HashMap<String, ConstraintId>,
    objective: Option<Objective>,
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub sense: ObjSense,
    pub coeffs: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl ModelHandle {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            variables: Vec::new(),
            constraints: Vec::new(),
            var_names: HashMap::new(),
            row_names: HashMap::new(),
            objective: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn add_variable(&mut self, lb: f64, ub: f64, integral: bool, name: impl Into<String>) -> Result<VarId> {
        let name = name.into();
        if lb.is_nan() || ub.is_nan() || lb > ub {
            return Err(HarsoError::InvalidBounds { name, lb, ub });
        }
        if self.var_names.contains_key(&name) {
            return Err(HarsoError::DuplicateName(name));
        }
        let id = VarId(self.variables.len());
        self.var_names.insert(name.clone(), id);
        self.variables.push(Variable { name, lb, ub, integral });
        Ok(id)
    }

    pub fn add_continuous(&mut self, lb: f64, ub: f64, name: impl Into<String>) -> Result<VarId> {
        self.add_variable(lb, ub, false, name)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId> {
        self.add_variable(0.0, 1.0, true, name)
    }

    /// Stores the row verbatim. Empty coefficient lists are accepted.
    pub fn add_constraint(
        &mut self,
        coeffs: Vec<(VarId, f64)>,
        sense: RowSense,
        rhs: f64,
        name: impl Into<String>,
    ) -> Result<ConstraintId> {
        let name = name.into();
        if let Some(&(bad, _)) = coeffs.iter().find(|(id, _)| id.0 >= self.variables.len()) {
            return Err(HarsoError::UnknownVariable {
                constraint: name,
                var: bad.0,
            });
        }
        if self.row_names.contains_key(&name) {
            return Err(HarsoError::DuplicateName(name));
        }
        let id = ConstraintId(self.constraints.len());
        self.row_names.insert(name.clone(), id);
        self.constraints.push(Constraint {
            name,
            coeffs,
            sense,
            rhs,
        });
        Ok(id)
    }

    /// `lhs (sense) rhs` with constants moved to the right-hand side.
    pub fn add_expr_constraint(
        &mut self,
        lhs: &LinExpr,
        sense: RowSense,
        rhs: &LinExpr,
        name: impl Into<String>,
    ) -> Result<ConstraintId> {
        let mut coeffs: Vec<(VarId, f64)> = lhs.terms.clone();
        coeffs.extend(rhs.terms.iter().map(|&(id, c)| (id, -c)));
        self.add_constraint(coeffs, sense, rhs.constant - lhs.constant, name)
    }

    /// Adds `coef·var` to an existing row.
    pub fn add_to_constraint(&mut self, row: ConstraintId, var: VarId, coef: f64) -> Result<()> {
        if var.0 >= self.variables.len() {
            return Err(HarsoError::UnknownVariable {
                constraint: self.constraints[row.0].name.clone(),
                var: var.0,
            });
        }
        self.constraints[row.0].coeffs.push((var, coef));
        Ok(())
    }

    pub fn set_objective(&mut self, sense: ObjSense, coeffs: Vec<(VarId, f64)>, constant: f64) {
        self.objective = Some(Objective {
            sense,
            coeffs,
            constant,
        });
    }

    pub fn set_objective_expr(&mut self, sense: ObjSense, expr: &LinExpr) {
        self.set_objective(sense, expr.terms.clone(), expr.constant);
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn variable_by_name(&self, name: &str) -> Option<VarId> {
        self.var_names.get(name).copied()
    }

    pub fn constraint(&self, id: ConstraintId) -> &Constraint {
        &self.constraints[id.0]
    }

    pub fn constraint_by_name(&self, name: &str) -> Option<ConstraintId> {
        self.row_names.get(name).copied()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> Option<&Objective> {
        self.objective.as_ref()
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_integral(&self) -> usize {
        self.variables.iter().filter(|v| v.integral).count()
    }

    pub fn is_mip(&self) -> bool {
        self.variables.iter().any(|v| v.integral)
    }

    /// Largest absolute violation of any row or variable bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (v, &val) in self.variables.iter().zip(x) {
            worst = worst.max(v.lb - val).max(val - v.ub);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(id, a)| a * x[id.0]).sum();
            let viol = match c.sense {
                RowSense::Le => lhs - c.rhs,
                RowSense::Ge => c.rhs - lhs,
                RowSense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Writes the model in CPLEX LP text format.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ model {}", self.name);
        let obj = self.objective.as_ref();
        let sense = match obj.map(|o| o.sense) {
            Some(ObjSense::Maximize) => "Maximize",
            _ => "Minimize",
        };
        let _ = writeln!(out, "{sense}");
        let mut line = String::from(" obj:");
        if let Some(o) = obj {
            for &(id, c) in &o.coeffs {
                push_term(&mut line, c, &self.variables[id.0].name);
            }
            if o.constant != 0.0 {
                let _ = write!(line, " {} {}", sign(o.constant), fmt_num(o.constant.abs()));
            }
        }
        let _ = writeln!(out, "{line}");
        let _ = writeln!(out, "Subject To");
        for c in &self.constraints {
            let mut line = format!(" {}:", c.name);
            if c.coeffs.is_empty() {
                // LP format needs at least one term; the zero multiple keeps the row vacuous
                line.push_str(" 0 __zero");
            }
            for &(id, a) in &c.coeffs {
                push_term(&mut line, a, &self.variables[id.0].name);
            }
            let op = match c.sense {
                RowSense::Le => "<=",
                RowSense::Ge => ">=",
                RowSense::Eq => "=",
            };
            let _ = writeln!(out, "{line} {op} {}", fmt_num(c.rhs));
        }
        let _ = writeln!(out, "Bounds");
        for v in &self.variables {
            let lb = fmt_bound(v.lb);
            let ub = fmt_bound(v.ub);
            let _ = writeln!(out, " {lb} <= {} <= {ub}", v.name);
        }
        let ints: Vec<&str> = self
            .variables
            .iter()
            .filter(|v| v.integral)
            .map(|v| v.name.as_str())
            .collect();
        if !ints.is_empty() {
            let _ = writeln!(out, "General");
            for name in ints {
                let _ = writeln!(out, " {name}");
            }
        }
        let _ = writeln!(out, "End");
        out
    }
}

fn sign(v: f64) -> &'static str {
    if v < 0.0 {
        "-"
    } else {
        "+"
    }
}

fn push_term(line: &mut String, coef: f64, name: &str) {
    let _ = write!(line, " {} {} {}", sign(coef), fmt_num(coef.abs()), name);
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        fmt_num(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Time limit, backend error, or any other early stop.
    Limit,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveParams {
    pub mip_gap: f64,
    pub time_limit: Option<f64>,
    pub want_duals: bool,
    pub feasibility_tol: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            mip_gap: 1e-6,
            time_limit: None,
            want_duals: false,
            feasibility_tol: 1e-6,
        }
    }
}

impl SolveParams {
    pub fn with_duals(mut self) -> Self {
        self.want_duals = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective: f64,
    /// Best proven bound on the optimum: the dual bound of a MIP search,
    /// the objective itself for an LP.
    pub bound: f64,
    pub primal: Vec<f64>,
    /// Row duals as the sensitivity of the objective to each right-hand side.
    /// Only filled for pure LPs solved with `want_duals`.
    pub duals: Option<Vec<f64>>,
    pub wall_time: f64,
    pub diagnostic: String,
}

impl SolveOutcome {
    pub fn value(&self, id: VarId) -> f64 {
        self.primal[id.0]
    }

    pub fn dual(&self, id: ConstraintId) -> Option<f64> {
        self.duals.as_ref().map(|d| d[id.0])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Ok(self) when optimal, otherwise the matching error.
    pub fn require_optimal(self, model: &str) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::Infeasible => Err(HarsoError::Infeasible {
                model: model.to_owned(),
                detail: self.diagnostic,
            }),
            SolveStatus::Unbounded => Err(HarsoError::Unbounded {
                model: model.to_owned(),
                detail: self.diagnostic,
            }),
            SolveStatus::Limit => Err(HarsoError::Solver {
                model: model.to_owned(),
                status: self.status,
                detail: self.diagnostic,
            }),
        }
    }
}

/// Sums repeated variables and drops zero coefficients, keeping first-seen order.
fn merged(coeffs: &[(VarId, f64)]) -> Vec<(VarId, f64)> {
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(coeffs.len());
    let mut slot: HashMap<VarId, usize> = HashMap::new();
    for &(id, a) in coeffs {
        match slot.get(&id) {
            Some(&k) => out[k].1 += a,
            None => {
                slot.insert(id, out.len());
                out.push((id, a));
            }
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

pub fn solve(model: &ModelHandle, params: &SolveParams) -> Result<SolveOutcome> {
    solve_with_start(model, params, None)
}

/// Like [`solve`], handing `hint` to the backend as an incumbent. The start
/// is only a hint; an infeasible or wrongly sized vector is ignored.
pub fn solve_with_start(model: &ModelHandle, params: &SolveParams, hint: Option<&[f64]>) -> Result<SolveOutcome> {
    let objective = model
        .objective
        .as_ref()
        .ok_or_else(|| HarsoError::InvalidInput(format!("model `{}` has no objective", model.name)))?;
    let start = Instant::now();

    let mut cost = vec![0.0; model.variables.len()];
    for &(id, c) in &objective.coeffs {
        cost[id.0] += c;
    }

    let mut pb = RowProblem::default();
    let cols: Vec<_> = model
        .variables
        .iter()
        .zip(&cost)
        .map(|(v, &c)| pb.add_column_with_integrality(c, v.lb..=v.ub, v.integral))
        .collect();
    for c in &model.constraints {
        let factors: Vec<_> = merged(&c.coeffs).into_iter().map(|(id, a)| (cols[id.0], a)).collect();
        match c.sense {
            RowSense::Le => pb.add_row(..=c.rhs, factors),
            RowSense::Ge => pb.add_row(c.rhs.., factors),
            RowSense::Eq => pb.add_row(c.rhs..=c.rhs, factors),
        }
    }

    let sense = match objective.sense {
        ObjSense::Minimize => Sense::Minimise,
        ObjSense::Maximize => Sense::Maximise,
    };
    let mut highs_model = pb.optimise(sense);
    highs_model.make_quiet();
    highs_model.set_option("threads", 1);
    highs_model.set_option("mip_rel_gap", params.mip_gap);
    highs_model.set_option("primal_feasibility_tolerance", params.feasibility_tol);
    highs_model.set_option("dual_feasibility_tolerance", params.feasibility_tol.min(1e-7));
    highs_model.set_option("mip_feasibility_tolerance", params.feasibility_tol);
    if let Some(x) = hint.filter(|x| x.len() == model.variables.len() && model.is_mip()) {
        let _ = highs_model.try_set_solution(Some(x), None, None, None);
        // the sub-MIP improvement heuristics rarely beat a supplied incumbent
        highs_model.set_option("mip_heuristic_run_rens", false);
        highs_model.set_option("mip_heuristic_run_rins", false);
    }
    if let Some(limit) = params.time_limit {
        highs_model.set_option("time_limit", limit);
    }

    let solved = match highs_model.try_solve() {
        Ok(s) => s,
        Err(e) => {
            return Ok(SolveOutcome {
                status: SolveStatus::Limit,
                objective: f64::NAN,
                bound: f64::NAN,
                primal: Vec::new(),
                duals: None,
                wall_time: start.elapsed().as_secs_f64(),
                diagnostic: format!("backend failure: {e:?}"),
            })
        }
    };

    let highs_status = solved.status();
    let status = match highs_status {
        HighsModelStatus::Optimal => SolveStatus::Optimal,
        // an empty model is trivially optimal at the objective constant
        HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
        HighsModelStatus::Infeasible => SolveStatus::Infeasible,
        HighsModelStatus::Unbounded => SolveStatus::Unbounded,
        HighsModelStatus::UnboundedOrInfeasible => classify_unbounded_or_infeasible(model),
        _ => SolveStatus::Limit,
    };

    let solution = solved.get_solution();
    let mut primal = solution.columns().to_vec();
    if primal.len() != model.variables.len() {
        primal = vec![0.0; model.variables.len()];
    }
    let mut diagnostic = format!("highs status {highs_status:?}");
    let objective_value = if primal.is_empty() && model.variables.is_empty() {
        objective.constant
    } else {
        objective.constant + cost.iter().zip(&primal).map(|(c, x)| c * x).sum::<f64>()
    };

    let duals = if params.want_duals && status == SolveStatus::Optimal && !model.is_mip() {
        let rows = solution.dual_rows();
        if rows.len() == model.constraints.len() {
            Some(rows.to_vec())
        } else {
            diagnostic.push_str("; dual values unavailable");
            None
        }
    } else {
        None
    };

    if status == SolveStatus::Optimal {
        let viol = model.max_violation(&primal);
        if viol > 10.0 * params.feasibility_tol {
            let _ = write!(diagnostic, "; max violation {viol:.3e}");
        }
    }

    let bound = if model.is_mip() {
        solved
            .double_info_value(c"mip_dual_bound")
            .map_or(f64::NAN, |b| objective.constant + b)
    } else {
        objective_value
    };

    Ok(SolveOutcome {
        status,
        objective: objective_value,
        bound,
        primal,
        duals,
        wall_time: start.elapsed().as_secs_f64(),
        diagnostic,
    })
}

/// Cheap incumbent for a MIP: solve the LP relaxation, let `round` choose
/// values for the integral columns from the relaxed point, then complete the
/// fixing with [`complete_fixed`]. Columns `round` leaves out are rounded to
/// the nearest integer.
pub fn rounded_incumbent(
    model: &ModelHandle,
    params: &SolveParams,
    round: impl Fn(&[f64]) -> Vec<(VarId, f64)>,
) -> Option<SolveOutcome> {
    if !model.is_mip() {
        return None;
    }
    let mut relaxed = model.clone();
    for v in &mut relaxed.variables {
        v.integral = false;
    }
    let lp = solve(&relaxed, params).ok().filter(|o| o.is_optimal())?;
    let mut fix: Vec<(VarId, f64)> = model
        .variables
        .iter()
        .zip(&lp.primal)
        .enumerate()
        .filter(|(_, (v, _))| v.integral)
        .map(|(i, (_, x))| (VarId(i), x.round()))
        .collect();
    let slot: HashMap<VarId, usize> = fix.iter().enumerate().map(|(k, &(id, _))| (id, k)).collect();
    for (id, x) in round(&lp.primal) {
        if let Some(&k) = slot.get(&id) {
            fix[k].1 = x;
        }
    }
    complete_fixed(model, params, &fix)
}

/// Fixes the listed columns, relaxes integrality everywhere else and solves
/// the resulting LP. None when that LP is not solved to optimality.
pub fn complete_fixed(model: &ModelHandle, params: &SolveParams, fix: &[(VarId, f64)]) -> Option<SolveOutcome> {
    let mut lp = model.clone();
    for v in &mut lp.variables {
        v.integral = false;
    }
    for &(id, x) in fix {
        let v = &mut lp.variables[id.0];
        let r = x.clamp(v.lb, v.ub);
        v.lb = r;
        v.ub = r;
    }
    solve(&lp, params).ok().filter(|o| o.is_optimal())
}

/// HiGHS may stop with "unbounded or infeasible" from presolve. Re-solving the
/// feasibility problem (zero objective) separates the two cases.
fn classify_unbounded_or_infeasible(model: &ModelHandle) -> SolveStatus {
    let mut feas = model.clone();
    feas.set_objective(ObjSense::Minimize, Vec::new(), 0.0);
    match solve(&feas, &SolveParams::default()) {
        Ok(out) if out.status == SolveStatus::Optimal => SolveStatus::Unbounded,
        Ok(out) if out.status == SolveStatus::Infeasible => SolveStatus::Infeasible,
        _ => SolveStatus::Limit,
    }
}

/// Duality certificate for an LP solved with `want_duals`.
#[derive(Debug, Clone, Copy)]
pub struct DualityReport {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Largest |dual · row slack| and |reduced cost · bound slack|.
    pub complementarity: f64,
    /// Largest violation of the dual sign conditions.
    pub dual_infeasibility: f64,
}

impl DualityReport {
    pub fn relative_gap(&self) -> f64 {
        (self.primal_objective - self.dual_objective).abs() / self.primal_objective.abs().max(1.0)
    }
}

/// Rebuilds the dual objective `rhsᵀy + Σ reduced-cost·active bound` from the
/// row duals alone, independently of the primal objective.
pub fn duality_report(model: &ModelHandle, outcome: &SolveOutcome) -> Option<DualityReport> {
    let duals = outcome.duals.as_ref()?;
    let objective = model.objective.as_ref()?;
    let minimize = objective.sense == ObjSense::Minimize;
    let n = model.variables.len();
    let x = &outcome.primal;

    let mut reduced = vec![0.0; n];
    for &(id, c) in &objective.coeffs {
        reduced[id.0] += c;
    }
    let mut dual_obj = objective.constant;
    let mut complementarity = 0.0_f64;
    let mut dual_infeas = 0.0_f64;
    for (row, &y) in model.constraints.iter().zip(duals) {
        dual_obj += row.rhs * y;
        for &(id, a) in &row.coeffs {
            reduced[id.0] -= a * y;
        }
        let lhs: f64 = row.coeffs.iter().map(|&(id, a)| a * x[id.0]).sum();
        complementarity = complementarity.max((y * (lhs - row.rhs)).abs());
        // minimize: y ≥ 0 on ≥ rows, y ≤ 0 on ≤ rows; maximize flips both
        let wrong_sign = match (row.sense, minimize) {
            (RowSense::Ge, true) | (RowSense::Le, false) => (-y).max(0.0),
            (RowSense::Le, true) | (RowSense::Ge, false) => y.max(0.0),
            (RowSense::Eq, _) => 0.0,
        };
        dual_infeas = dual_infeas.max(wrong_sign);
    }
    for (j, v) in model.variables.iter().enumerate() {
        let r = reduced[j];
        // which bound the reduced cost prices: lower when pushing up costs objective
        let at_lower = if minimize { r > 0.0 } else { r < 0.0 };
        let bound = if r == 0.0 {
            0.0
        } else if at_lower {
            v.lb
        } else {
            v.ub
        };
        if bound.is_infinite() {
            dual_infeas = dual_infeas.max(r.abs());
            continue;
        }
        dual_obj += r * bound;
        if r != 0.0 {
            complementarity = complementarity.max((r * (x[j] - bound)).abs());
        }
    }
    Some(DualityReport {
        primal_objective: outcome.objective,
        dual_objective: dual_obj,
        complementarity,
        dual_infeasibility: dual_infeas,
    })
}

/// Explicit LP dual of a minimization model whose variables all live on
/// `[0, ∞)`: one dual variable per row (sign from the row sense) and one
/// `≤` row per primal column.
#[derive(Debug, Clone)]
pub struct LpDual {
    pub model: ModelHandle,
    /// Dual variable of each primal row, indexed by `ConstraintId`.
    pub row_duals: Vec<VarId>,
    /// Dual row of each primal column, indexed by `VarId`.
    pub column_rows: Vec<ConstraintId>,
}

pub fn lp_dual(primal: &ModelHandle, name: impl Into<String>) -> Result<LpDual> {
    let objective = primal
        .objective
        .as_ref()
        .ok_or_else(|| HarsoError::InvalidInput(format!("model `{}` has no objective", primal.name)))?;
    if objective.sense != ObjSense::Minimize {
        return Err(HarsoError::InvalidInput("dualization expects a minimization".into()));
    }
    if let Some(v) = primal
        .variables
        .iter()
        .find(|v| v.integral || v.lb != 0.0 || v.ub != f64::INFINITY)
    {
        return Err(HarsoError::InvalidInput(format!(
            "dualization expects continuous variables on [0, inf), `{}` is not",
            v.name
        )));
    }
    let mut dual = ModelHandle::new(name);
    let inf = f64::INFINITY;
    let mut row_duals = Vec::with_capacity(primal.constraints.len());
    let mut columns: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); primal.variables.len()];
    let mut obj = Vec::new();
    for row in &primal.constraints {
        let (lb, ub) = match row.sense {
            RowSense::Le => (-inf, 0.0),
            RowSense::Ge => (0.0, inf),
            RowSense::Eq => (-inf, inf),
        };
        let y = dual.add_continuous(lb, ub, format!("y_{}", row.name))?;
        for &(id, a) in &row.coeffs {
            columns[id.0].push((y, a));
        }
        if row.rhs != 0.0 {
            obj.push((y, row.rhs));
        }
        row_duals.push(y);
    }
    let mut cost = vec![0.0; primal.variables.len()];
    for &(id, c) in &objective.coeffs {
        cost[id.0] += c;
    }
    let mut column_rows = Vec::with_capacity(columns.len());
    for ((col, c), v) in columns.into_iter().zip(cost).zip(&primal.variables) {
        column_rows.push(dual.add_constraint(merged(&col), RowSense::Le, c, format!("col_{}", v.name))?);
    }
    dual.set_objective(ObjSense::Maximize, obj, objective.constant);
    Ok(LpDual {
        model: dual,
        row_duals,
        column_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_x_ge_3() -> (ModelHandle, VarId, ConstraintId) {
        let mut m = ModelHandle::new("t");
        let x = m.add_continuous(0.0, f64::INFINITY, "x").unwrap();
        let c = m.add_constraint(vec![(x, 1.0)], RowSense::Ge, 3.0, "c").unwrap();
        m.set_objective(ObjSense::Minimize, vec![(x, 1.0)], 0.0);
        (m, x, c)
    }

    #[test]
    fn first_variable_gets_id_zero() {
        let mut m = ModelHandle::new("t");
        let x = m.add_continuous(0.0, f64::INFINITY, "x").unwrap();
        assert_eq!(x, VarId(0));
        let b = m.add_binary("b").unwrap();
        assert!(m.variable(b).integral);
        assert_eq!((m.variable(b).lb, m.variable(b).ub), (0.0, 1.0));
        assert_eq!(m.variable_by_name("b"), Some(b));
    }

    #[test]
    fn rejects_inverted_bounds_and_duplicates() {
        let mut m = ModelHandle::new("t");
        assert!(matches!(
            m.add_continuous(3.0, 2.0, "x"),
            Err(HarsoError::InvalidBounds { .. })
        ));
        m.add_continuous(0.0, 1.0, "x").unwrap();
        assert!(matches!(
            m.add_continuous(0.0, 1.0, "x"),
            Err(HarsoError::DuplicateName(_))
        ));
    }

    #[test]
    fn rejects_unknown_variable_in_row() {
        let mut m = ModelHandle::new("t");
        let x = m.add_continuous(0.0, 5.0, "x").unwrap();
        let y = m.add_continuous(0.0, 5.0, "y").unwrap();
        m.add_constraint(vec![(x, 1.0), (y, 1.0)], RowSense::Le, 5.0, "sum")
            .unwrap();
        let err = m.add_constraint(vec![(VarId(7), 1.0)], RowSense::Le, 1.0, "bad");
        assert!(matches!(err, Err(HarsoError::UnknownVariable { var: 7, .. })));
    }

    #[test]
    fn vacuous_row_makes_model_infeasible() {
        let mut m = ModelHandle::new("t");
        let x = m.add_continuous(0.0, 1.0, "x").unwrap();
        m.add_constraint(Vec::new(), RowSense::Le, -1.0, "vacuous").unwrap();
        m.set_objective(ObjSense::Minimize, vec![(x, 1.0)], 0.0);
        let out = solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn one_variable_lp_and_its_dual() {
        let (m, x, c) = min_x_ge_3();
        let out = solve(&m, &SolveParams::default().with_duals()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective - 3.0).abs() < 1e-9);
        assert!((out.value(x) - 3.0).abs() < 1e-9);
        assert!((out.dual(c).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn integrality_rounds_up() {
        let mut m = ModelHandle::new("t");
        let x = m.add_variable(0.0, f64::INFINITY, true, "x").unwrap();
        m.add_constraint(vec![(x, 1.0)], RowSense::Le, 5.0, "cap").unwrap();
        m.add_constraint(vec![(x, 1.0)], RowSense::Ge, 4.2, "floor").unwrap();
        m.set_objective(ObjSense::Maximize, vec![(x, 1.0)], 0.0);
        let out = solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective - 5.0).abs() < 1e-9);
        assert!(out.duals.is_none());
    }

    #[test]
    fn infeasible_bounds_detected() {
        let mut m = ModelHandle::new("t");
        let x = m.add_continuous(0.0, f64::INFINITY, "x").unwrap();
        m.add_constraint(vec![(x, 1.0)], RowSense::Le, -1.0, "neg").unwrap();
        m.set_objective(ObjSense::Minimize, Vec::new(), 0.0);
        let out = solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut m = ModelHandle::new("t");
        let x = m.add_continuous(0.0, f64::INFINITY, "x").unwrap();
        m.add_constraint(vec![(x, 1.0)], RowSense::Ge, 1.0, "floor").unwrap();
        m.set_objective(ObjSense::Maximize, vec![(x, 1.0)], 0.0);
        let out = solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Unbounded);
    }

    #[test]
    fn missing_objective_is_an_error() {
        let m = ModelHandle::new("t");
        assert!(solve(&m, &SolveParams::default()).is_err());
    }

    #[test]
    fn maximize_duals_follow_rhs_sensitivity() {
        // max 3x + 2y  s.t. x + y ≤ 4, x + 3y ≤ 7, x ≤ 3
        let mut m = ModelHandle::new("t");
        let x = m.add_continuous(0.0, f64::INFINITY, "x").unwrap();
        let y = m.add_continuous(0.0, f64::INFINITY, "y").unwrap();
        let r1 = m
            .add_constraint(vec![(x, 1.0), (y, 1.0)], RowSense::Le, 4.0, "r1")
            .unwrap();
        m.add_constraint(vec![(x, 1.0), (y, 3.0)], RowSense::Le, 7.0, "r2")
            .unwrap();
        let r3 = m.add_constraint(vec![(x, 1.0)], RowSense::Le, 3.0, "r3").unwrap();
        m.set_objective(ObjSense::Maximize, vec![(x, 3.0), (y, 2.0)], 1.5);
        let out = solve(&m, &SolveParams::default().with_duals()).unwrap();
        assert!((out.objective - 12.5).abs() < 1e-9);
        // x = 3, y = 1: r1 and r3 bind with shadow prices 2 and 1
        assert!((out.dual(r1).unwrap() - 2.0).abs() < 1e-9);
        assert!((out.dual(r3).unwrap() - 1.0).abs() < 1e-9);
        let rep = duality_report(&m, &out).unwrap();
        assert!(rep.relative_gap() < 1e-9, "{rep:?}");
        assert!(rep.dual_infeasibility < 1e-9);
        assert!(rep.complementarity < 1e-9);
    }

    #[test]
    fn explicit_dual_matches_primal() {
        // min 2x + 3y + 1  s.t. x + y ≥ 2, x - y = 0.5, x ≤ 4
        let mut m = ModelHandle::new("p");
        let x = m.add_continuous(0.0, f64::INFINITY, "x").unwrap();
        let y = m.add_continuous(0.0, f64::INFINITY, "y").unwrap();
        m.add_constraint(vec![(x, 1.0), (y, 1.0)], RowSense::Ge, 2.0, "cover")
            .unwrap();
        m.add_constraint(vec![(x, 1.0), (y, -1.0)], RowSense::Eq, 0.5, "split")
            .unwrap();
        m.add_constraint(vec![(x, 1.0)], RowSense::Le, 4.0, "cap").unwrap();
        m.set_objective(ObjSense::Minimize, vec![(x, 2.0), (y, 3.0)], 1.0);
        let p = solve(&m, &SolveParams::default()).unwrap();
        // x = 1.25, y = 0.75
        assert!((p.objective - 5.75).abs() < 1e-9);
        let d = lp_dual(&m, "d").unwrap();
        assert_eq!(d.row_duals.len(), 3);
        assert_eq!(d.column_rows.len(), 2);
        let dv = solve(&d.model, &SolveParams::default()).unwrap();
        assert!((dv.objective - p.objective).abs() < 1e-9);
        assert!((dv.value(d.row_duals[0]) - 2.5).abs() < 1e-9);
    }

    #[test]
    fn dualization_rejects_bounded_columns() {
        let mut m = ModelHandle::new("p");
        let x = m.add_continuous(-1.0, f64::INFINITY, "x").unwrap();
        m.set_objective(ObjSense::Minimize, vec![(x, 1.0)], 0.0);
        assert!(lp_dual(&m, "d").is_err());
    }

    #[test]
    fn repeated_terms_are_summed() {
        let mut m = ModelHandle::new("p");
        let x = m.add_continuous(0.0, f64::INFINITY, "x").unwrap();
        m.add_constraint(vec![(x, 1.0), (x, 1.0)], RowSense::Ge, 4.0, "twice")
            .unwrap();
        m.set_objective(ObjSense::Minimize, vec![(x, 1.0)], 0.0);
        let out = solve(&m, &SolveParams::default()).unwrap();
        assert!((out.value(x) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn resolve_is_stable() {
        let (m, _, _) = min_x_ge_3();
        let a = solve(&m, &SolveParams::default()).unwrap();
        let b = solve(&m, &SolveParams::default()).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-9);
    }

    #[test]
    fn lp_export_lists_every_row() {
        let (m, _, _) = min_x_ge_3();
        let lp = m.to_lp_string();
        assert!(lp.contains("Minimize"));
        assert!(lp.contains(" c: + 1 x >= 3"));
        assert!(lp.contains("0 <= x <= +inf"));
        assert!(lp.trim_end().ends_with("End"));
    }

    #[test]
    fn expr_constraint_moves_constants() {
        let mut m = ModelHandle::new("t");
        let x = m.add_continuous(0.0, 10.0, "x").unwrap();
        let y = m.add_continuous(0.0, 10.0, "y").unwrap();
        let mut lhs = LinExpr::var(x);
        lhs.constant = 2.0;
        let mut rhs = LinExpr::term(y, 3.0);
        rhs.constant = 5.0;
        let c = m.add_expr_constraint(&lhs, RowSense::Le, &rhs, "c").unwrap();
        let row = m.constraint(c);
        assert_eq!(row.coeffs, vec![(x, 1.0), (y, -3.0)]);
        assert_eq!(row.rhs, 3.0);
    }
}
