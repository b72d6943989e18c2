//! Adversarial stage: the dual of the recourse LP joined to the budgeted
//! demand set through a Big-M product linearization, the primal recourse LP,
//! and an exhaustive vertex enumerator used as a test oracle.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{HourlyMatrix, PlanningInstance};
use crate::error::{HarsoError, Result};
use crate::par::Execution;
use crate::planner::{check_matrix, diagnose_balance, DispatchPlan, FirstStageDecision};
use crate::recourse::{add_recourse_block, scenario_slices, Degradation, RecourseBlock};
use crate::solver::{lp_dual, solve, LpDual, ModelHandle, ObjSense, RowSense, SolveParams, SolveStatus, VarId};

/// Per-year vertex budget of the enumerator.
pub const ENUMERATION_LIMIT: u128 = 100_000;

/// First-stage snapshot handed from the master to the subproblem.
pub type FixedFirstStage = FirstStageDecision;

/// A vertex of the demand uncertainty set together with its adversarial value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseDemand {
    pub realization: HourlyMatrix,
    /// Upward deviation flags, [year][hour].
    pub v_plus: Vec<Vec<bool>>,
    /// Downward deviation flags, [year][hour].
    pub v_minus: Vec<Vec<bool>>,
    pub objective: f64,
}

impl WorstCaseDemand {
    pub fn from_flags(
        inst: &PlanningInstance,
        v_plus: Vec<Vec<bool>>,
        v_minus: Vec<Vec<bool>>,
        objective: f64,
    ) -> Self {
        let realization = HourlyMatrix::from_fn(inst.years(), inst.hours(), |y, t| {
            inst.demand.realization(y, t, v_plus[y][t], v_minus[y][t])
        });
        Self {
            realization,
            v_plus,
            v_minus,
            objective,
        }
    }

    /// The nominal demand, no deviation anywhere.
    pub fn nominal(inst: &PlanningInstance) -> Self {
        let flags = vec![vec![false; inst.hours()]; inst.years()];
        Self::from_flags(inst, flags.clone(), flags, f64::NAN)
    }

    /// Hour codes per year: 0 nominal, 1 up, 2 down.
    pub fn pattern(&self) -> Vec<Vec<u8>> {
        self.v_plus
            .iter()
            .zip(&self.v_minus)
            .map(|(p, m)| p.iter().zip(m).map(|(&p, &m)| u8::from(p) + 2 * u8::from(m)).collect())
            .collect()
    }

    pub fn deviating_hours(&self, y: usize) -> usize {
        self.v_plus[y]
            .iter()
            .zip(&self.v_minus[y])
            .filter(|(p, m)| **p || **m)
            .count()
    }

    pub fn violations(&self, inst: &PlanningInstance) -> Vec<String> {
        let mut v = Vec::new();
        if !self.realization.has_shape(inst.years(), inst.hours()) {
            v.push("realization has the wrong shape".to_string());
            return v;
        }
        for y in 0..inst.years() {
            for t in 0..inst.hours() {
                if self.v_plus[y][t] && self.v_minus[y][t] {
                    v.push(format!("both deviation flags set at year {}, hour {t}", y + 1));
                }
                let expect = inst.demand.realization(y, t, self.v_plus[y][t], self.v_minus[y][t]);
                if self.realization.get(y, t) != expect {
                    v.push(format!("realization off its vertex at year {}, hour {t}", y + 1));
                }
            }
            if self.deviating_hours(y) as f64 > inst.budget() {
                v.push(format!("year {} deviates in more than {} hours", y + 1, inst.budget()));
            }
        }
        v
    }

    /// `year,hour,nominal,realization,v_plus,v_minus`
    pub fn write_csv<W: Write>(&self, inst: &PlanningInstance, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["year", "hour", "nominal", "realization", "v_plus", "v_minus"])?;
        for (y, t, real) in self.realization.iter() {
            w.write_record([
                (y + 1).to_string(),
                t.to_string(),
                inst.demand.nominal.get(y, t).to_string(),
                real.to_string(),
                u8::from(self.v_plus[y][t]).to_string(),
                u8::from(self.v_minus[y][t]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, inst: &PlanningInstance, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(inst, std::fs::File::create(path)?)
    }
}

/// Dual values of the recourse rows at the subproblem optimum, laid out like
/// the primal block: per (s, y, t) for `a`, `b`, per (s, j, y, t) otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub scenarios: usize,
    pub techs: usize,
    pub years: usize,
    pub hours: usize,
    /// Balance rows (free).
    pub a: Vec<f64>,
    /// PV availability rows (≤ 0).
    pub b: Vec<f64>,
    /// SOC recursion rows (free).
    pub c: Vec<f64>,
    /// SOC lower bounds (≥ 0).
    pub d_minus: Vec<f64>,
    /// SOC upper bounds (≤ 0).
    pub d_plus: Vec<f64>,
    /// Charge caps (≤ 0).
    pub f: Vec<f64>,
    /// Discharge caps (≤ 0).
    pub g: Vec<f64>,
    /// Linearized products a·V⁺ and a·V⁻.
    pub p_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
}

impl DualSolution {
    pub fn hour_index(&self, s: usize, y: usize, t: usize) -> usize {
        (s * self.years + y) * self.hours + t
    }

    pub fn tech_index(&self, s: usize, j: usize, y: usize, t: usize) -> usize {
        ((s * self.techs + j) * self.years + y) * self.hours + t
    }

    /// Largest violation of the sign restrictions.
    pub fn sign_violation(&self) -> f64 {
        let pos = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(*x));
        let neg = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(-*x));
        pos(&self.b)
            .max(neg(&self.d_minus))
            .max(pos(&self.d_plus))
            .max(pos(&self.f))
            .max(pos(&self.g))
    }
}

/// The dual subproblem model with handles into its parts.
#[derive(Debug, Clone)]
pub struct DualSubproblem {
    pub model: ModelHandle,
    /// Nominal-demand primal block the dual was transposed from.
    pub primal_block: RecourseBlock,
    pub dual: LpDual,
    /// Deviation binaries per y·T + t.
    pub v_plus: Vec<VarId>,
    pub v_minus: Vec<VarId>,
    /// Products per (s, y, t).
    pub p_plus: Vec<VarId>,
    pub p_minus: Vec<VarId>,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub worst_case: WorstCaseDemand,
    pub duals: DualSolution,
    pub objective: f64,
    pub wall_time: f64,
}

fn check_fixed(inst: &PlanningInstance, fixed: &FixedFirstStage) -> Result<()> {
    let cm = &fixed.charge_mode;
    let ok = fixed.bess_capacity.len() == inst.techs()
        && fixed.tech_selected.len() == inst.techs()
        && cm.techs == inst.techs()
        && cm.hours == inst.hours()
        && cm.years == inst.years()
        && (cm.scenarios == 1 || cm.scenarios == inst.scenarios());
    if ok {
        Ok(())
    } else {
        Err(HarsoError::Dimension(format!(
            "first stage has {} techs, charge modes {}x{}x{}x{}; instance is J={} T={} Y={} S={}",
            fixed.bess_capacity.len(),
            cm.techs,
            cm.hours,
            cm.years,
            cm.scenarios,
            inst.techs(),
            inst.hours(),
            inst.years(),
            inst.scenarios()
        )))
    }
}

fn primal_model(
    inst: &PlanningInstance,
    fixed: &FixedFirstStage,
    demand: &HourlyMatrix,
    name: &str,
) -> Result<(ModelHandle, RecourseBlock)> {
    check_fixed(inst, fixed)?;
    check_matrix("demand realization", demand, inst)?;
    let mut model = ModelHandle::new(name);
    let block = add_recourse_block(
        &mut model,
        inst,
        demand,
        &scenario_slices(inst),
        &fixed.as_terms(),
        Degradation::PerYear,
        "",
    )?;
    model.set_objective_expr(ObjSense::Minimize, &block.op_cost);
    Ok((model, block))
}

/// Max-sense MILP: transposed recourse LP at nominal demand plus the
/// deviation terms Δ·(p⁺ − p⁻), with p± = a·V± linearized under the
/// index-specific bound M = ρ_s·λ^bg_t.
pub fn build_dual_sp(inst: &PlanningInstance, fixed: &FixedFirstStage) -> Result<DualSubproblem> {
    let (primal, block) = primal_model(inst, fixed, &inst.demand.nominal, "primal_sp_nominal")?;
    let dual = lp_dual(&primal, "dual_sp")?;
    let mut model = dual.model.clone();
    let (hours, years) = (inst.hours(), inst.years());

    let mut v_plus = Vec::with_capacity(hours * years);
    let mut v_minus = Vec::with_capacity(hours * years);
    for y in 0..years {
        let mut budget = Vec::with_capacity(2 * hours);
        for t in 0..hours {
            let vp = model.add_binary(format!("vplus_y{y}_t{t}"))?;
            let vm = model.add_binary(format!("vminus_y{y}_t{t}"))?;
            model.add_constraint(
                vec![(vp, 1.0), (vm, 1.0)],
                RowSense::Le,
                1.0,
                format!("one_side_y{y}_t{t}"),
            )?;
            budget.push((vp, 1.0));
            budget.push((vm, 1.0));
            v_plus.push(vp);
            v_minus.push(vm);
        }
        model.add_constraint(budget, RowSense::Le, inst.budget(), format!("budget_y{y}"))?;
    }

    let mut objective = model.objective().map(|o| o.coeffs.clone()).unwrap_or_default();
    let constant = model.objective().map_or(0.0, |o| o.constant);
    let mut p_plus = Vec::with_capacity(block.pg.len());
    let mut p_minus = Vec::with_capacity(block.pg.len());
    for (s, rho) in inst.pv.probabilities.iter().enumerate() {
        for y in 0..years {
            for t in 0..hours {
                let h = block.hour_index(s, y, t);
                let a = dual.row_duals[block.balance_rows[h].0];
                let big_m = rho * inst.tariff.buy_price[t];
                let delta = inst.demand.deviation.get(y, t);
                for (side, flags, out, sign) in [
                    ("plus", &v_plus, &mut p_plus, 1.0),
                    ("minus", &v_minus, &mut p_minus, -1.0),
                ] {
                    let v = flags[y * hours + t];
                    let p = model.add_continuous(0.0, big_m, format!("p{side}_s{s}_y{y}_t{t}"))?;
                    model.add_constraint(
                        vec![(p, 1.0), (v, -big_m)],
                        RowSense::Le,
                        0.0,
                        format!("p{side}_on_s{s}_y{y}_t{t}"),
                    )?;
                    model.add_constraint(
                        vec![(p, 1.0), (a, -1.0), (v, -big_m)],
                        RowSense::Ge,
                        -big_m,
                        format!("p{side}_lo_s{s}_y{y}_t{t}"),
                    )?;
                    model.add_constraint(
                        vec![(p, 1.0), (a, -1.0), (v, big_m)],
                        RowSense::Le,
                        big_m,
                        format!("p{side}_hi_s{s}_y{y}_t{t}"),
                    )?;
                    model.add_constraint(
                        vec![(p, 1.0), (v, big_m)],
                        RowSense::Ge,
                        0.0,
                        format!("p{side}_off_s{s}_y{y}_t{t}"),
                    )?;
                    if delta != 0.0 {
                        objective.push((p, sign * delta));
                    }
                    out.push(p);
                }
            }
        }
    }
    model.set_objective(ObjSense::Maximize, objective, constant);
    Ok(DualSubproblem {
        model,
        primal_block: block,
        dual,
        v_plus,
        v_minus,
        p_plus,
        p_minus,
    })
}

/// Solves the dual subproblem for the worst-case demand vertex.
pub fn solve_dual_sp(
    inst: &PlanningInstance,
    fixed: &FixedFirstStage,
    params: &SolveParams,
) -> Result<SubproblemSolution> {
    let sp = build_dual_sp(inst, fixed)?;
    let out = solve(&sp.model, params)?;
    if out.status == SolveStatus::Unbounded {
        let (primal, block) = primal_model(inst, fixed, &inst.demand.nominal, "primal_sp_nominal")?;
        return Err(HarsoError::Infeasible {
            model: "primal_sp".into(),
            detail: format!(
                "dual subproblem unbounded, the fixed first stage admits no recourse: {}",
                diagnose_balance(&primal, &block, params)
            ),
        });
    }
    let out = out.require_optimal("dual_sp")?;
    let (hours, years) = (inst.hours(), inst.years());
    let flags = |ids: &[VarId]| -> Vec<Vec<bool>> {
        (0..years)
            .map(|y| (0..hours).map(|t| out.value(ids[y * hours + t]) > 0.5).collect())
            .collect()
    };
    let worst_case = WorstCaseDemand::from_flags(inst, flags(&sp.v_plus), flags(&sp.v_minus), out.objective);

    let block = &sp.primal_block;
    let dual_of = |rows: &[crate::solver::ConstraintId]| -> Vec<f64> {
        rows.iter().map(|r| out.value(sp.dual.row_duals[r.0])).collect()
    };
    let duals = DualSolution {
        scenarios: block.scenarios,
        techs: block.techs,
        years,
        hours,
        a: dual_of(&block.balance_rows),
        b: dual_of(&block.pv_rows),
        c: dual_of(&block.soc_rows),
        d_minus: dual_of(&block.soc_min_rows),
        d_plus: dual_of(&block.soc_max_rows),
        f: dual_of(&block.charge_rows),
        g: dual_of(&block.discharge_rows),
        p_plus: sp.p_plus.iter().map(|&p| out.value(p)).collect(),
        p_minus: sp.p_minus.iter().map(|&p| out.value(p)).collect(),
    };
    Ok(SubproblemSolution {
        worst_case,
        duals,
        objective: out.objective,
        wall_time: out.wall_time,
    })
}

/// Recourse LP at a fixed demand matrix; returns the dispatch and the
/// expected operational cost.
pub fn solve_primal_sp(
    inst: &PlanningInstance,
    fixed: &FixedFirstStage,
    demand: &HourlyMatrix,
) -> Result<(DispatchPlan, f64)> {
    let (model, block) = primal_model(inst, fixed, demand, "primal_sp")?;
    let params = SolveParams::default();
    let out = solve(&model, &params)?;
    if out.status == SolveStatus::Infeasible {
        return Err(HarsoError::Infeasible {
            model: "primal_sp".into(),
            detail: diagnose_balance(&model, &block, &params),
        });
    }
    let out = out.require_optimal("primal_sp")?;
    Ok((DispatchPlan::extract(&block, &out), out.objective))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Vertices per year: Σ_{k ≤ ⌊Γ⌋} C(T, k)·2^k.
pub fn pattern_count(hours: usize, budget: f64) -> u128 {
    let kmax = (budget.max(0.0).floor() as usize).min(hours);
    (0..=kmax).map(|k| binomial(hours, k) << k).sum()
}

/// Every hour-code sequence with at most `kmax` nonzero entries, in
/// lexicographic order.
pub fn patterns(hours: usize, kmax: usize) -> Vec<Vec<u8>> {
    fn walk(prefix: &mut Vec<u8>, hours: usize, left: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == hours {
            out.push(prefix.clone());
            return;
        }
        for code in 0..3u8 {
            if code > 0 && left == 0 {
                break;
            }
            prefix.push(code);
            walk(prefix, hours, left - usize::from(code > 0), out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    walk(&mut Vec::with_capacity(hours), hours, kmax, &mut out);
    out
}

/// Exhaustive adversary: per year, the primal LP at every vertex of the
/// budgeted set; the year maxima add up because the recourse separates by
/// year once the first stage is fixed. Ties go to the lexicographically
/// smallest pattern.
pub fn enumerate_worst_case(
    inst: &PlanningInstance,
    fixed: &FixedFirstStage,
    exec: Execution,
) -> Result<WorstCaseDemand> {
    check_fixed(inst, fixed)?;
    let hours = inst.hours();
    let count = pattern_count(hours, inst.budget());
    if count > ENUMERATION_LIMIT {
        return Err(HarsoError::EnumerationBudget {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let kmax = (inst.budget().floor() as usize).min(hours);
    let all = patterns(hours, kmax);
    let mut v_plus = Vec::with_capacity(inst.years());
    let mut v_minus = Vec::with_capacity(inst.years());
    let mut total = 0.0;
    for y in 0..inst.years() {
        let year = inst.year_slice(y);
        let year_fixed = fixed.year_slice(y);
        let values = exec.map(all.iter().collect(), |pat| -> Result<f64> {
            let demand = HourlyMatrix(vec![(0..hours)
                .map(|t| year.demand.realization(0, t, pat[t] == 1, pat[t] == 2))
                .collect()]);
            Ok(solve_primal_sp(&year, &year_fixed, &demand)?.1)
        });
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in values.into_iter().enumerate() {
            let v = v?;
            match best {
                Some((_, b)) if v <= b + 1e-9 * b.abs().max(1.0) => {}
                _ => best = Some((i, v)),
            }
        }
        let (i, v) = best.expect("at least the nominal pattern");
        v_plus.push(all[i].iter().map(|&c| c == 1).collect());
        v_minus.push(all[i].iter().map(|&c| c == 2).collect());
        total += v;
    }
    Ok(WorstCaseDemand::from_flags(inst, v_plus, v_minus, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::planner::solve_deterministic;
    use crate::recourse::ChargeModes;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    fn sized(inst: &PlanningInstance, pv: f64, bess: f64, charge_hours: &[usize]) -> FixedFirstStage {
        let mut fixed = FirstStageDecision::empty(inst, true);
        fixed.pv_capacity = pv;
        fixed.bess_capacity[0] = bess;
        fixed.tech_selected[0] = true;
        fixed.charge_mode = ChargeModes::from_fn(
            inst.techs(),
            inst.hours(),
            inst.years(),
            inst.scenarios(),
            |j, t, _, _| j == 0 && charge_hours.contains(&t),
        );
        fixed
    }

    #[test]
    fn vertex_counts() {
        assert_eq!(pattern_count(4, 2.0), 33);
        assert_eq!(pattern_count(3, 3.0), 27);
        assert_eq!(pattern_count(24, 0.0), 1);
        assert_eq!(pattern_count(4, 2.0), patterns(4, 2).len() as u128);
        assert_eq!(pattern_count(5, 3.0), patterns(5, 3).len() as u128);
        let p = patterns(3, 1);
        assert_eq!(p[0], vec![0, 0, 0]);
        assert_eq!(p[1], vec![0, 0, 1]);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn big_m_reads_off_the_price_bound() {
        let mut inst = fixtures::tiny_instance(4, 1, 4, 1);
        inst.tariff.buy_price[2] = 0.20;
        let fixed = FirstStageDecision::empty(&inst, true);
        let sp = build_dual_sp(&inst, &fixed).unwrap();
        let p = sp.p_plus[sp.primal_block.hour_index(1, 0, 2)];
        assert!((sp.model.variable(p).ub - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_budget_gives_nominal_recourse_cost() {
        let inst = fixtures::tiny_instance(4, 2, 2, 2).with_budget(0.0);
        let fixed = sized(&inst, 2.0, 1.5, &[1, 2]);
        let sp = solve_dual_sp(&inst, &fixed, &SolveParams::default()).unwrap();
        let (_, primal) = solve_primal_sp(&inst, &fixed, &inst.demand.nominal).unwrap();
        assert!(rel(sp.objective, primal) < 1e-6, "{} vs {primal}", sp.objective);
        assert_eq!(sp.worst_case.realization, inst.demand.nominal);
    }

    #[test]
    fn no_assets_full_budget_buys_peak_demand() {
        let inst = fixtures::tiny_instance(4, 1, 2, 1).with_budget(4.0);
        let fixed = FirstStageDecision::empty(&inst, true);
        let sp = solve_dual_sp(&inst, &fixed, &SolveParams::default()).unwrap();
        let closed: f64 = inst
            .demand
            .nominal
            .iter()
            .map(|(y, t, n)| inst.tariff.buy_price[t] * (n + inst.demand.deviation.get(y, t)))
            .sum();
        assert!(rel(sp.objective, closed) < 1e-6, "{} vs {closed}", sp.objective);
    }

    #[test]
    fn single_purchase() {
        let mut inst = fixtures::tiny_instance(2, 1, 1, 1);
        inst.tariff.buy_price = vec![0.3, 0.3];
        let fixed = FirstStageDecision::empty(&inst, false);
        let demand = HourlyMatrix(vec![vec![1.0, 0.0]]);
        let (plan, obj) = solve_primal_sp(&inst, &fixed, &demand).unwrap();
        assert!((obj - 0.3).abs() < 1e-9);
        assert!((plan.grid_buy[0].get(0, 0) - 1.0).abs() < 1e-9);
        let (_, zero) = solve_primal_sp(&inst, &fixed, &HourlyMatrix::zeros(1, 2)).unwrap();
        assert!(zero.abs() < 1e-12);
    }

    #[test]
    fn dual_sp_matches_enumeration_and_primal() {
        let inst = fixtures::tiny_instance(4, 2, 2, 2).with_budget(2.0);
        let fixed = sized(&inst, 1.5, 2.0, &[1]);
        let sp = solve_dual_sp(&inst, &fixed, &SolveParams::default()).unwrap();
        assert!(sp.worst_case.violations(&inst).is_empty());
        let (_, primal) = solve_primal_sp(&inst, &fixed, &sp.worst_case.realization).unwrap();
        assert!(rel(sp.objective, primal) < 1e-5, "{} vs {primal}", sp.objective);
        let brute = enumerate_worst_case(&inst, &fixed, Execution::Sequential).unwrap();
        assert!(
            rel(sp.objective, brute.objective) < 1e-5,
            "{} vs {}",
            sp.objective,
            brute.objective
        );
        assert!(sp.duals.sign_violation() < 1e-7);
        for (i, (&pp, &pm)) in sp.duals.p_plus.iter().zip(&sp.duals.p_minus).enumerate() {
            let (s, rest) = (i / (inst.years() * 4), i % (inst.years() * 4));
            let (y, t) = (rest / 4, rest % 4);
            let a = sp.duals.a[sp.duals.hour_index(s, y, t)];
            let vp = f64::from(u8::from(sp.worst_case.v_plus[y][t]));
            let vm = f64::from(u8::from(sp.worst_case.v_minus[y][t]));
            assert!((pp - a * vp).abs() < 1e-6);
            assert!((pm - a * vm).abs() < 1e-6);
        }
    }

    #[test]
    fn budget_monotonicity() {
        let base = fixtures::tiny_instance(5, 1, 2, 1);
        let fixed = sized(&base, 1.0, 1.0, &[2]);
        let mut last = f64::NEG_INFINITY;
        for gamma in 0..=5 {
            let z = solve_dual_sp(&base.with_budget(gamma as f64), &fixed, &SolveParams::default())
                .unwrap()
                .objective;
            assert!(z >= last - 1e-7);
            last = z;
        }
    }

    #[test]
    fn covered_demand_costs_nothing() {
        let mut inst = fixtures::tiny_instance(3, 1, 1, 1).with_budget(1.0);
        inst.pv.profiles[0] = HourlyMatrix::filled(1, 3, 1.0);
        inst.tariff.sell_price = vec![0.0; 3];
        inst.config.pv_op_cost = 0.0;
        inst.config.pv_cap_max = 100.0;
        let mut fixed = FirstStageDecision::empty(&inst, false);
        fixed.pv_capacity = 100.0;
        let sp = solve_dual_sp(&inst, &fixed, &SolveParams::default()).unwrap();
        assert!(sp.objective.abs() < 1e-9);
    }

    #[test]
    fn enumeration_budget_enforced() {
        let inst = fixtures::tiny_instance(24, 1, 1, 1).with_budget(6.0);
        let fixed = FirstStageDecision::empty(&inst, false);
        assert!(matches!(
            enumerate_worst_case(&inst, &fixed, Execution::Sequential),
            Err(HarsoError::EnumerationBudget { .. })
        ));
    }

    #[test]
    fn enumeration_at_zero_budget_is_nominal() {
        let inst = fixtures::tiny_instance(4, 1, 1, 1).with_budget(0.0);
        let fixed = FirstStageDecision::empty(&inst, false);
        let wc = enumerate_worst_case(&inst, &fixed, Execution::Parallel).unwrap();
        assert_eq!(wc.realization, inst.demand.nominal);
    }

    #[test]
    fn deterministic_plan_cost_matches_primal_sp() {
        let inst = fixtures::tiny_instance(6, 1, 1, 1);
        let sol = solve_deterministic(&inst, &inst.demand.nominal, &inst.pv.profiles[0]).unwrap();
        let (_, op) = solve_primal_sp(&inst, &sol.decision, &inst.demand.nominal).unwrap();
        let total = sol.decision.investment_cost(&inst) + op;
        assert!(rel(total, sol.objective) < 1e-6);
    }

    #[test]
    fn worst_case_csv() {
        let inst = fixtures::tiny_instance(2, 1, 1, 1);
        let wc = WorstCaseDemand::from_flags(&inst, vec![vec![true, false]], vec![vec![false, false]], 1.0);
        let mut buf = Vec::new();
        wc.write_csv(&inst, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("year,hour,nominal,realization,v_plus,v_minus"));
        assert!(lines.next().unwrap().ends_with(",1,0"));
        assert_eq!(wc.pattern(), vec![vec![1, 0]]);
    }
}
