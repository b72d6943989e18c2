//! Deterministic sizing MILP and the fixed-capacity self-consumption variant
//! used to produce SOC traces for the external aging simulator.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{BatteryTech, HourlyMatrix, PlanningInstance};
use crate::error::{HarsoError, Result};
use crate::recourse::{add_recourse_block, ChargeModes, Degradation, FirstStageTerms, RecourseBlock, ScenarioSlice};
use crate::solver::{solve, LinExpr, ModelHandle, ObjSense, RowSense, SolveOutcome, SolveParams, SolveStatus, VarId};

/// Investment decision: PV size, battery size per technology, technology
/// flags and charging-mode binaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageDecision {
    pub pv_capacity: f64,
    pub bess_capacity: Vec<f64>,
    pub tech_selected: Vec<bool>,
    pub charge_mode: ChargeModes<bool>,
}

impl FirstStageDecision {
    /// No PV, no battery, every charging flag off.
    pub fn empty(inst: &PlanningInstance, per_scenario: bool) -> Self {
        let scenarios = if per_scenario { inst.scenarios() } else { 1 };
        Self {
            pv_capacity: 0.0,
            bess_capacity: vec![0.0; inst.techs()],
            tech_selected: vec![false; inst.techs()],
            charge_mode: ChargeModes::new(inst.techs(), inst.hours(), inst.years(), scenarios, false),
        }
    }

    pub fn selected_tech(&self) -> Option<usize> {
        self.tech_selected.iter().position(|&b| b)
    }

    pub fn total_bess(&self) -> f64 {
        self.bess_capacity.iter().sum()
    }

    pub fn investment_cost(&self, inst: &PlanningInstance) -> f64 {
        inst.config.pv_invest_cost * self.pv_capacity
            + inst
                .batteries
                .iter()
                .zip(&self.bess_capacity)
                .map(|(b, g)| b.invest_cost * g)
                .sum::<f64>()
    }

    /// First-stage quantities as constants inside recourse rows.
    pub fn as_terms(&self) -> FirstStageTerms {
        FirstStageTerms {
            pv_capacity: LinExpr::constant(self.pv_capacity),
            bess_capacity: self.bess_capacity.iter().map(|&g| LinExpr::constant(g)).collect(),
            tech_selected: self
                .tech_selected
                .iter()
                .map(|&b| LinExpr::constant(f64::from(u8::from(b))))
                .collect(),
            charge_mode: self.charge_mode.map(|&b| LinExpr::constant(f64::from(u8::from(b)))),
        }
    }

    /// Restricts the charging flags to year `y`.
    pub fn year_slice(&self, y: usize) -> Self {
        let cm = &self.charge_mode;
        Self {
            pv_capacity: self.pv_capacity,
            bess_capacity: self.bess_capacity.clone(),
            tech_selected: self.tech_selected.clone(),
            charge_mode: ChargeModes::from_fn(cm.techs, cm.hours, 1, cm.scenarios, |j, t, _, s| *cm.get(j, t, y, s)),
        }
    }

    /// Checks the investment-side rules; returns a description per failure.
    pub fn violations(&self, inst: &PlanningInstance) -> Vec<String> {
        let mut v = Vec::new();
        let tol = 1e-6;
        if self.tech_selected.iter().filter(|&&b| b).count() > 1 {
            v.push("more than one battery technology selected".to_string());
        }
        if self.pv_capacity > inst.config.pv_cap_max + tol {
            v.push(format!("pv capacity {} above cap", self.pv_capacity));
        }
        for (j, (&g, &sel)) in self.bess_capacity.iter().zip(&self.tech_selected).enumerate() {
            if g > inst.config.bess_cap_max + tol {
                v.push(format!("battery {j} capacity {g} above cap"));
            }
            if !sel && g > tol {
                v.push(format!("battery {j} sized {g} but not selected"));
            }
        }
        let cm = &self.charge_mode;
        for j in 0..cm.techs {
            if !self.tech_selected[j] {
                for s in 0..cm.scenarios {
                    for y in 0..cm.years {
                        if (0..cm.hours).any(|t| *cm.get(j, t, y, s)) {
                            v.push(format!("charging flag set for unselected battery {j}"));
                        }
                    }
                }
            }
        }
        v.dedup();
        v
    }
}

/// Investment variables of a sizing model.
#[derive(Debug, Clone)]
pub struct FirstStageVars {
    pub pv_capacity: VarId,
    pub bess_capacity: Vec<VarId>,
    pub tech_selected: Vec<VarId>,
    pub charge_mode: ChargeModes<VarId>,
}

impl FirstStageVars {
    /// Adds γ^pv, γ^bt, ν, w and the investment rows: PV cap, w ≤ ν,
    /// γ^bt ≤ ν·cap, Σν ≤ 1.
    pub fn add_to(model: &mut ModelHandle, inst: &PlanningInstance, mode_scenarios: usize) -> Result<Self> {
        let cfg = &inst.config;
        let pv_capacity = model.add_continuous(0.0, f64::INFINITY, "gamma_pv")?;
        let bess_capacity = (0..inst.techs())
            .map(|j| model.add_continuous(0.0, f64::INFINITY, format!("gamma_bt_j{j}")))
            .collect::<Result<Vec<_>>>()?;
        let tech_selected = (0..inst.techs())
            .map(|j| model.add_binary(format!("nu_j{j}")))
            .collect::<Result<Vec<_>>>()?;
        let mut ids = Vec::with_capacity(inst.techs() * inst.hours() * inst.years() * mode_scenarios);
        for j in 0..inst.techs() {
            for s in 0..mode_scenarios {
                for y in 0..inst.years() {
                    for t in 0..inst.hours() {
                        ids.push(model.add_binary(format!("w_j{j}_s{s}_y{y}_t{t}"))?);
                    }
                }
            }
        }
        let charge_mode = ChargeModes {
            techs: inst.techs(),
            hours: inst.hours(),
            years: inst.years(),
            scenarios: mode_scenarios,
            values: ids,
        };

        model.add_constraint(vec![(pv_capacity, 1.0)], RowSense::Le, cfg.pv_cap_max, "pv_cap")?;
        for j in 0..inst.techs() {
            for s in 0..mode_scenarios {
                for y in 0..inst.years() {
                    for t in 0..inst.hours() {
                        let w = *charge_mode.get(j, t, y, s);
                        model.add_constraint(
                            vec![(w, 1.0), (tech_selected[j], -1.0)],
                            RowSense::Le,
                            0.0,
                            format!("w_le_nu_j{j}_s{s}_y{y}_t{t}"),
                        )?;
                    }
                }
            }
            model.add_constraint(
                vec![(bess_capacity[j], 1.0), (tech_selected[j], -cfg.bess_cap_max)],
                RowSense::Le,
                0.0,
                format!("bess_cap_j{j}"),
            )?;
        }
        model.add_constraint(
            tech_selected.iter().map(|&id| (id, 1.0)).collect(),
            RowSense::Le,
            1.0,
            "one_tech",
        )?;
        Ok(Self {
            pv_capacity,
            bess_capacity,
            tech_selected,
            charge_mode,
        })
    }

    pub fn as_terms(&self) -> FirstStageTerms {
        FirstStageTerms {
            pv_capacity: LinExpr::var(self.pv_capacity),
            bess_capacity: self.bess_capacity.iter().map(|&id| LinExpr::var(id)).collect(),
            tech_selected: self.tech_selected.iter().map(|&id| LinExpr::var(id)).collect(),
            charge_mode: self.charge_mode.map(|&id| LinExpr::var(id)),
        }
    }

    pub fn investment_cost(&self, inst: &PlanningInstance) -> LinExpr {
        let mut e = LinExpr::term(self.pv_capacity, inst.config.pv_invest_cost);
        for (b, &id) in inst.batteries.iter().zip(&self.bess_capacity) {
            e.add_term(id, b.invest_cost);
        }
        e
    }

    /// Reads the decision back, rounding binaries and clearing capacity on
    /// unselected technologies.
    pub fn extract(&self, out: &SolveOutcome, inst: &PlanningInstance) -> FirstStageDecision {
        let tech_selected: Vec<bool> = self.tech_selected.iter().map(|&id| out.value(id) > 0.5).collect();
        let bess_capacity = self
            .bess_capacity
            .iter()
            .zip(&tech_selected)
            .map(|(&id, &sel)| {
                if sel {
                    out.value(id).clamp(0.0, inst.config.bess_cap_max)
                } else {
                    0.0
                }
            })
            .collect();
        FirstStageDecision {
            pv_capacity: out.value(self.pv_capacity).clamp(0.0, inst.config.pv_cap_max),
            bess_capacity,
            tech_selected,
            charge_mode: self.charge_mode.map(|&id| out.value(id) > 0.5),
        }
    }
}

/// Dispatch values; per-hour series are indexed [scenario], per-battery
/// series [scenario][tech].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchPlan {
    pub pv_output: Vec<HourlyMatrix>,
    pub grid_buy: Vec<HourlyMatrix>,
    pub grid_sell: Vec<HourlyMatrix>,
    pub charge: Vec<Vec<HourlyMatrix>>,
    pub discharge: Vec<Vec<HourlyMatrix>>,
    pub soc: Vec<Vec<HourlyMatrix>>,
}

impl DispatchPlan {
    pub fn extract(block: &RecourseBlock, out: &SolveOutcome) -> Self {
        let hourly = |ids: &[VarId], s: usize| {
            HourlyMatrix::from_fn(block.years, block.hours, |y, t| {
                out.value(ids[block.hour_index(s, y, t)])
            })
        };
        let per_tech = |ids: &[VarId], s: usize| {
            (0..block.techs)
                .map(|j| {
                    HourlyMatrix::from_fn(block.years, block.hours, |y, t| {
                        out.value(ids[block.tech_index(s, j, y, t)])
                    })
                })
                .collect::<Vec<_>>()
        };
        let scen = 0..block.scenarios;
        Self {
            pv_output: scen.clone().map(|s| hourly(&block.pg, s)).collect(),
            grid_buy: scen.clone().map(|s| hourly(&block.p_buy, s)).collect(),
            grid_sell: scen.clone().map(|s| hourly(&block.p_sell, s)).collect(),
            charge: scen.clone().map(|s| per_tech(&block.charge, s)).collect(),
            discharge: scen.clone().map(|s| per_tech(&block.discharge, s)).collect(),
            soc: scen.map(|s| per_tech(&block.soc, s)).collect(),
        }
    }

    /// Probability-weighted operational cost of this plan.
    pub fn operational_cost(&self, inst: &PlanningInstance, probabilities: &[f64]) -> f64 {
        let tariff = &inst.tariff;
        let mut total = 0.0;
        for (s, &rho) in probabilities.iter().enumerate() {
            for (y, t, buy) in self.grid_buy[s].iter() {
                total += rho
                    * (tariff.buy_price[t] * buy - tariff.sell_price[t] * self.grid_sell[s].get(y, t)
                        + inst.config.pv_op_cost * self.pv_output[s].get(y, t));
            }
            for (j, tech) in inst.batteries.iter().enumerate() {
                total += rho * tech.op_cost * self.discharge[s][j].iter().map(|(_, _, d)| d).sum::<f64>();
            }
        }
        total
    }

    /// Largest residual over the balance, SOC band and power-cap rules.
    pub fn max_residual(
        &self,
        inst: &PlanningInstance,
        decision: &FirstStageDecision,
        demand: &HourlyMatrix,
        degradation: Degradation,
    ) -> f64 {
        let mut worst = 0.0_f64;
        for s in 0..self.pv_output.len() {
            for (y, t, pg) in self.pv_output[s].iter() {
                let mut bal = pg - demand.get(y, t) - self.grid_sell[s].get(y, t) + self.grid_buy[s].get(y, t);
                for j in 0..inst.techs() {
                    bal += self.discharge[s][j].get(y, t) - self.charge[s][j].get(y, t);
                }
                worst = worst.max(bal.abs());
            }
            for (j, tech) in inst.batteries.iter().enumerate() {
                let g = decision.bess_capacity[j];
                let nu = f64::from(u8::from(decision.tech_selected[j]));
                for (y, t, soc) in self.soc[s][j].iter() {
                    let dg = match degradation {
                        Degradation::PerYear => tech.soh_by_year[y],
                        Degradation::Ignore => 1.0,
                    };
                    worst = worst
                        .max(tech.soc_min_frac * dg * g - soc)
                        .max(soc - tech.soc_max_frac * dg * g);
                    let w = f64::from(u8::from(*decision.charge_mode.get(j, t, y, s)));
                    worst = worst
                        .max(self.charge[s][j].get(y, t) - tech.power_rate * w)
                        .max(self.discharge[s][j].get(y, t) - tech.power_rate * (nu - w));
                }
            }
        }
        worst
    }

    /// Largest `min(ch, ds)` over every index.
    pub fn max_simultaneous(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (ch_s, ds_s) in self.charge.iter().zip(&self.discharge) {
            for (ch, ds) in ch_s.iter().zip(ds_s) {
                for (y, t, c) in ch.iter() {
                    worst = worst.max(c.min(ds.get(y, t)));
                }
            }
        }
        worst
    }
}

/// A sizing model with its variable handles.
#[derive(Debug, Clone)]
pub struct SizingModel {
    pub model: ModelHandle,
    pub first_stage: FirstStageVars,
    pub recourse: RecourseBlock,
}

pub(crate) fn check_matrix(name: &str, m: &HourlyMatrix, inst: &PlanningInstance) -> Result<()> {
    if m.has_shape(inst.years(), inst.hours()) {
        Ok(())
    } else {
        Err(HarsoError::Dimension(format!(
            "{name} is {}x{}, expected {}x{}",
            m.years(),
            m.hours(),
            inst.years(),
            inst.hours()
        )))
    }
}

/// Monolithic sizing model over the given scenarios. With `per_scenario_modes`
/// the charging binaries carry a scenario index.
pub fn build_sizing_model(
    inst: &PlanningInstance,
    demand: &HourlyMatrix,
    scenarios: &[ScenarioSlice<'_>],
    per_scenario_modes: bool,
    name: &str,
) -> Result<SizingModel> {
    check_matrix("demand", demand, inst)?;
    for (s, sc) in scenarios.iter().enumerate() {
        check_matrix(&format!("pv profile {s}"), sc.profile, inst)?;
    }
    let mut model = ModelHandle::new(name);
    let mode_scenarios = if per_scenario_modes { scenarios.len() } else { 1 };
    let first_stage = FirstStageVars::add_to(&mut model, inst, mode_scenarios)?;
    let recourse = add_recourse_block(
        &mut model,
        inst,
        demand,
        scenarios,
        &first_stage.as_terms(),
        Degradation::PerYear,
        "",
    )?;
    let mut objective = first_stage.investment_cost(inst);
    objective.add_scaled(&recourse.op_cost, 1.0);
    model.set_objective_expr(ObjSense::Minimize, &objective);
    Ok(SizingModel {
        model,
        first_stage,
        recourse,
    })
}

/// Deterministic sizing MILP for one demand matrix and one PV profile.
pub fn build_deterministic(
    inst: &PlanningInstance,
    demand: &HourlyMatrix,
    pv_profile: &HourlyMatrix,
) -> Result<SizingModel> {
    let slice = [ScenarioSlice {
        profile: pv_profile,
        probability: 1.0,
    }];
    build_sizing_model(inst, demand, &slice, false, "deterministic")
}

#[derive(Debug, Clone)]
pub struct SizingSolution {
    pub decision: FirstStageDecision,
    pub plan: DispatchPlan,
    pub objective: f64,
}

/// Solves a sizing model; infeasibility is diagnosed with elastic balance rows.
pub fn solve_sizing_model(sm: &SizingModel, inst: &PlanningInstance, params: &SolveParams) -> Result<SizingSolution> {
    let out = solve(&sm.model, params)?;
    if out.status == SolveStatus::Infeasible {
        return Err(HarsoError::Infeasible {
            model: sm.model.name().to_owned(),
            detail: diagnose_balance(&sm.model, &sm.recourse, params),
        });
    }
    let out = out.require_optimal(sm.model.name())?;
    Ok(SizingSolution {
        decision: sm.first_stage.extract(&out, inst),
        plan: DispatchPlan::extract(&sm.recourse, &out),
        objective: out.objective,
    })
}

pub fn solve_deterministic(
    inst: &PlanningInstance,
    demand: &HourlyMatrix,
    pv_profile: &HourlyMatrix,
) -> Result<SizingSolution> {
    let sm = build_deterministic(inst, demand, pv_profile)?;
    solve_sizing_model(&sm, inst, &SolveParams::default())
}

/// Re-solves with nonnegative slack on both sides of every balance row and
/// names the index carrying the largest slack.
pub(crate) fn diagnose_balance(model: &ModelHandle, block: &RecourseBlock, params: &SolveParams) -> String {
    let mut elastic = model.clone();
    let mut slack_cost = Vec::new();
    let mut slacks = Vec::new();
    for (i, &row) in block.balance_rows.iter().enumerate() {
        let up = elastic.add_continuous(0.0, f64::INFINITY, format!("elastic_up_{i}"));
        let down = elastic.add_continuous(0.0, f64::INFINITY, format!("elastic_down_{i}"));
        let (Ok(up), Ok(down)) = (up, down) else {
            return "infeasible (elastic model could not be built)".into();
        };
        if elastic.add_to_constraint(row, up, 1.0).is_err() || elastic.add_to_constraint(row, down, -1.0).is_err() {
            return "infeasible (elastic model could not be built)".into();
        }
        slack_cost.push((up, 1.0));
        slack_cost.push((down, 1.0));
        slacks.push((i, up, down));
    }
    elastic.set_objective(ObjSense::Minimize, slack_cost, 0.0);
    match solve(&elastic, params) {
        Ok(out) if out.is_optimal() => {
            let worst = slacks
                .iter()
                .map(|&(i, up, down)| (i, out.value(up) + out.value(down)))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((i, amount)) if amount > 1e-9 => {
                    let t = i % block.hours;
                    let y = (i / block.hours) % block.years;
                    let s = i / (block.hours * block.years);
                    format!(
                        "balance violated at scenario {s}, year {}, hour {t} by {amount:.6} kWh",
                        y + 1
                    )
                }
                _ => "infeasible outside the balance rows (SOC limits or fixed capacities)".into(),
            }
        }
        _ => "infeasible outside the balance rows (SOC limits or fixed capacities)".into(),
    }
}

/// Runs the sizing constraints with capacities frozen and degradation off,
/// returning the SOC trace (kWh) of `tech`.
pub fn solve_self_consumption(
    inst: &PlanningInstance,
    demand: &HourlyMatrix,
    pv_profile: &HourlyMatrix,
    fixed_pv_kw: f64,
    fixed_bess_kwh: f64,
    tech: &BatteryTech,
) -> Result<HourlyMatrix> {
    if !(fixed_pv_kw >= 0.0 && fixed_bess_kwh >= 0.0) {
        return Err(HarsoError::InvalidInput(format!(
            "fixed capacities must be nonnegative, got pv {fixed_pv_kw}, bess {fixed_bess_kwh}"
        )));
    }
    let mut single = inst.clone();
    single.batteries = vec![tech.clone()];
    if tech.soh_by_year.len() != inst.years() {
        single.batteries[0].soh_by_year = vec![1.0; inst.years()];
    }
    check_matrix("demand", demand, &single)?;
    check_matrix("pv profile", pv_profile, &single)?;

    let mut model = ModelHandle::new("self_consumption");
    let selected = if fixed_bess_kwh > 0.0 { 1.0 } else { 0.0 };
    let mut ids = Vec::with_capacity(inst.hours() * inst.years());
    for y in 0..inst.years() {
        for t in 0..inst.hours() {
            let w = model.add_binary(format!("w_y{y}_t{t}"))?;
            model.add_constraint(vec![(w, 1.0)], RowSense::Le, selected, format!("w_le_nu_y{y}_t{t}"))?;
            ids.push(w);
        }
    }
    let terms = FirstStageTerms {
        pv_capacity: LinExpr::constant(fixed_pv_kw),
        bess_capacity: vec![LinExpr::constant(fixed_bess_kwh)],
        tech_selected: vec![LinExpr::constant(selected)],
        charge_mode: ChargeModes {
            techs: 1,
            hours: inst.hours(),
            years: inst.years(),
            scenarios: 1,
            values: ids,
        }
        .map(|&id| LinExpr::var(id)),
    };
    let slice = [ScenarioSlice {
        profile: pv_profile,
        probability: 1.0,
    }];
    let block = add_recourse_block(&mut model, &single, demand, &slice, &terms, Degradation::Ignore, "")?;
    model.set_objective_expr(ObjSense::Minimize, &block.op_cost);
    let params = SolveParams::default();
    let out = solve(&model, &params)?;
    if out.status == SolveStatus::Infeasible {
        return Err(HarsoError::Infeasible {
            model: "self_consumption".into(),
            detail: diagnose_balance(&model, &block, &params),
        });
    }
    let out = out.require_optimal("self_consumption")?;
    Ok(HourlyMatrix::from_fn(inst.years(), inst.hours(), |y, t| {
        out.value(block.soc[block.tech_index(0, 0, y, t)]).max(0.0)
    }))
}

/// SOC trace as `year,hour,soc_kwh` (year from 1, hour from 0).
pub fn write_soc_trace<W: Write>(trace: &HourlyMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["year", "hour", "soc_kwh"])?;
    for (y, t, v) in trace.iter() {
        w.write_record([(y + 1).to_string(), t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_soc_trace(trace: &HourlyMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_soc_trace(trace, std::fs::File::create(path)?)
}
