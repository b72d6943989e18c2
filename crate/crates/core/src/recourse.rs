//! The operational (recourse) constraint block shared by every model: the
//! deterministic planner, the extensive form, master cut blocks and the primal
//! subproblem. First-stage quantities enter as linear expressions, so the same
//! builder serves both variable and frozen investments.

use serde::{Deserialize, Serialize};

use crate::domain::{HourlyMatrix, PlanningInstance};
use crate::error::Result;
use crate::solver::{ConstraintId, LinExpr, ModelHandle, RowSense, SolveOutcome, VarId};

/// Charging-mode binaries `w`, indexed (j, t, y, s). When not per-scenario
/// the scenario axis has length one and every scenario reads index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeModes<T> {
    pub techs: usize,
    pub hours: usize,
    pub years: usize,
    pub scenarios: usize,
    pub values: Vec<T>,
}

impl<T: Clone> ChargeModes<T> {
    pub fn new(techs: usize, hours: usize, years: usize, scenarios: usize, fill: T) -> Self {
        Self {
            techs,
            hours,
            years,
            scenarios,
            values: vec![fill; techs * hours * years * scenarios],
        }
    }

    pub fn from_fn(
        techs: usize,
        hours: usize,
        years: usize,
        scenarios: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let mut values = Vec::with_capacity(techs * hours * years * scenarios);
        for j in 0..techs {
            for s in 0..scenarios {
                for y in 0..years {
                    for t in 0..hours {
                        values.push(f(j, t, y, s));
                    }
                }
            }
        }
        Self {
            techs,
            hours,
            years,
            scenarios,
            values,
        }
    }

    #[inline]
    pub fn index(&self, j: usize, t: usize, y: usize, s: usize) -> usize {
        let s = if self.scenarios == 1 { 0 } else { s };
        ((j * self.scenarios + s) * self.years + y) * self.hours + t
    }

    #[inline]
    pub fn get(&self, j: usize, t: usize, y: usize, s: usize) -> &T {
        &self.values[self.index(j, t, y, s)]
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> ChargeModes<U> {
        ChargeModes {
            techs: self.techs,
            hours: self.hours,
            years: self.years,
            scenarios: self.scenarios,
            values: self.values.iter().map(f).collect(),
        }
    }
}

/// First-stage quantities as they appear inside the recourse rows.
#[derive(Debug, Clone)]
pub struct FirstStageTerms {
    pub pv_capacity: LinExpr,
    pub bess_capacity: Vec<LinExpr>,
    pub tech_selected: Vec<LinExpr>,
    pub charge_mode: ChargeModes<LinExpr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degradation {
    /// Capacity scaled by the per-year state of health.
    PerYear,
    /// Health fixed at one (used before degradation is known).
    Ignore,
}

/// Variables and rows of one operational block, indexed [s][y][t] or
/// [s][j][y][t] through the accessors.
#[derive(Debug, Clone)]
pub struct RecourseBlock {
    pub scenarios: usize,
    pub techs: usize,
    pub years: usize,
    pub hours: usize,
    pub pg: Vec<VarId>,
    pub p_buy: Vec<VarId>,
    pub p_sell: Vec<VarId>,
    pub charge: Vec<VarId>,
    pub discharge: Vec<VarId>,
    pub soc: Vec<VarId>,
    pub balance_rows: Vec<ConstraintId>,
    pub pv_rows: Vec<ConstraintId>,
    pub soc_rows: Vec<ConstraintId>,
    pub soc_min_rows: Vec<ConstraintId>,
    pub soc_max_rows: Vec<ConstraintId>,
    pub charge_rows: Vec<ConstraintId>,
    pub discharge_rows: Vec<ConstraintId>,
    /// Probability-weighted operational cost.
    pub op_cost: LinExpr,
}

impl RecourseBlock {
    #[inline]
    pub fn hour_index(&self, s: usize, y: usize, t: usize) -> usize {
        (s * self.years + y) * self.hours + t
    }

    #[inline]
    pub fn tech_index(&self, s: usize, j: usize, y: usize, t: usize) -> usize {
        ((s * self.techs + j) * self.years + y) * self.hours + t
    }

    pub fn values(&self, ids: &[VarId], out: &SolveOutcome) -> Vec<f64> {
        ids.iter().map(|&id| out.value(id)).collect()
    }
}

/// Scenario data for one block: PV availability and weight.
pub struct ScenarioSlice<'a> {
    pub profile: &'a HourlyMatrix,
    pub probability: f64,
}

pub fn scenario_slices(inst: &PlanningInstance) -> Vec<ScenarioSlice<'_>> {
    inst.pv
        .profiles
        .iter()
        .zip(&inst.pv.probabilities)
        .map(|(profile, &probability)| ScenarioSlice { profile, probability })
        .collect()
}

/// Appends one full operational block to `model`. `tag` keeps names unique
/// when several blocks share a model.
pub fn add_recourse_block(
    model: &mut ModelHandle,
    inst: &PlanningInstance,
    demand: &HourlyMatrix,
    scenarios: &[ScenarioSlice<'_>],
    first: &FirstStageTerms,
    degradation: Degradation,
    tag: &str,
) -> Result<RecourseBlock> {
    let hours = inst.hours();
    let years = inst.years();
    let techs = inst.techs();
    let n_s = scenarios.len();
    let inf = f64::INFINITY;

    let mut block = RecourseBlock {
        scenarios: n_s,
        techs,
        years,
        hours,
        pg: Vec::with_capacity(n_s * years * hours),
        p_buy: Vec::with_capacity(n_s * years * hours),
        p_sell: Vec::with_capacity(n_s * years * hours),
        charge: Vec::with_capacity(n_s * techs * years * hours),
        discharge: Vec::with_capacity(n_s * techs * years * hours),
        soc: Vec::with_capacity(n_s * techs * years * hours),
        balance_rows: Vec::new(),
        pv_rows: Vec::new(),
        soc_rows: Vec::new(),
        soc_min_rows: Vec::new(),
        soc_max_rows: Vec::new(),
        charge_rows: Vec::new(),
        discharge_rows: Vec::new(),
        op_cost: LinExpr::default(),
    };

    for s in 0..n_s {
        for y in 0..years {
            for t in 0..hours {
                block
                    .pg
                    .push(model.add_continuous(0.0, inf, format!("{tag}pg_s{s}_y{y}_t{t}"))?);
                block
                    .p_buy
                    .push(model.add_continuous(0.0, inf, format!("{tag}pbg_s{s}_y{y}_t{t}"))?);
                block
                    .p_sell
                    .push(model.add_continuous(0.0, inf, format!("{tag}psg_s{s}_y{y}_t{t}"))?);
            }
        }
        for j in 0..techs {
            for y in 0..years {
                for t in 0..hours {
                    block
                        .charge
                        .push(model.add_continuous(0.0, inf, format!("{tag}ch_s{s}_j{j}_y{y}_t{t}"))?);
                    block
                        .discharge
                        .push(model.add_continuous(0.0, inf, format!("{tag}ds_s{s}_j{j}_y{y}_t{t}"))?);
                    block
                        .soc
                        .push(model.add_continuous(0.0, inf, format!("{tag}soc_s{s}_j{j}_y{y}_t{t}"))?);
                }
            }
        }
    }

    let tariff = &inst.tariff;
    let pv_op = inst.config.pv_op_cost;
    for (s, sc) in scenarios.iter().enumerate() {
        let rho = sc.probability;
        for y in 0..years {
            for t in 0..hours {
                let h = block.hour_index(s, y, t);
                let (pg, pbg, psg) = (block.pg[h], block.p_buy[h], block.p_sell[h]);

                let mut coeffs = vec![(pg, 1.0), (psg, -1.0), (pbg, 1.0)];
                for j in 0..techs {
                    let k = block.tech_index(s, j, y, t);
                    coeffs.push((block.discharge[k], 1.0));
                    coeffs.push((block.charge[k], -1.0));
                }
                block.balance_rows.push(model.add_constraint(
                    coeffs,
                    RowSense::Eq,
                    demand.get(y, t),
                    format!("{tag}balance_s{s}_y{y}_t{t}"),
                )?);

                let cap = first.pv_capacity.scaled(sc.profile.get(y, t));
                block.pv_rows.push(model.add_expr_constraint(
                    &LinExpr::var(pg),
                    RowSense::Le,
                    &cap,
                    format!("{tag}pvcap_s{s}_y{y}_t{t}"),
                )?);

                block
                    .op_cost
                    .add_term(pbg, rho * tariff.buy_price[t])
                    .add_term(psg, -rho * tariff.sell_price[t])
                    .add_term(pg, rho * pv_op);
            }
        }

        for (j, tech) in inst.batteries.iter().enumerate() {
            let phi = tech.efficiency;
            let gamma = &first.bess_capacity[j];
            for y in 0..years {
                let dg = match degradation {
                    Degradation::PerYear => tech.soh_by_year[y],
                    Degradation::Ignore => 1.0,
                };
                for t in 0..hours {
                    let k = block.tech_index(s, j, y, t);
                    let (ch, ds, soc) = (block.charge[k], block.discharge[k], block.soc[k]);

                    // soc recursion: the last hour is pinned to the final level
                    // and carries no charge/discharge term
                    let mut lhs = LinExpr::var(soc);
                    let rhs = if t == hours - 1 {
                        gamma.scaled(tech.soc_final_frac)
                    } else {
                        lhs.add_term(ch, -phi).add_term(ds, 1.0 / phi);
                        if t == 0 {
                            gamma.scaled(tech.soc_initial_frac)
                        } else {
                            lhs.add_term(block.soc[k - 1], -1.0);
                            LinExpr::default()
                        }
                    };
                    block.soc_rows.push(model.add_expr_constraint(
                        &lhs,
                        RowSense::Eq,
                        &rhs,
                        format!("{tag}soc_s{s}_j{j}_y{y}_t{t}"),
                    )?);

                    block.soc_min_rows.push(model.add_expr_constraint(
                        &LinExpr::var(soc),
                        RowSense::Ge,
                        &gamma.scaled(dg * tech.soc_min_frac),
                        format!("{tag}socmin_s{s}_j{j}_y{y}_t{t}"),
                    )?);
                    block.soc_max_rows.push(model.add_expr_constraint(
                        &LinExpr::var(soc),
                        RowSense::Le,
                        &gamma.scaled(dg * tech.soc_max_frac),
                        format!("{tag}socmax_s{s}_j{j}_y{y}_t{t}"),
                    )?);

                    let w = first.charge_mode.get(j, t, y, s);
                    block.charge_rows.push(model.add_expr_constraint(
                        &LinExpr::var(ch),
                        RowSense::Le,
                        &w.scaled(tech.power_rate),
                        format!("{tag}chcap_s{s}_j{j}_y{y}_t{t}"),
                    )?);
                    let mut ds_cap = first.tech_selected[j].scaled(tech.power_rate);
                    ds_cap.add_scaled(w, -tech.power_rate);
                    block.discharge_rows.push(model.add_expr_constraint(
                        &LinExpr::var(ds),
                        RowSense::Le,
                        &ds_cap,
                        format!("{tag}dscap_s{s}_j{j}_y{y}_t{t}"),
                    )?);

                    block.op_cost.add_term(ds, rho * tech.op_cost);
                }
            }
        }
    }
    Ok(block)
}
