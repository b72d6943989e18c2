//! Master problem: investment variables, one shared block of charging-mode
//! binaries, the recourse bound θ, and one recourse copy plus cut per
//! identified worst-case demand.

use std::path::PathBuf;
use std::time::Instant;

use log::warn;

use crate::domain::{HourlyMatrix, PlanningInstance};
use crate::error::{HarsoError, Result};
use crate::planner::{FirstStageDecision, FirstStageVars};
use crate::recourse::{add_recourse_block, scenario_slices, Degradation, RecourseBlock};
use crate::solver::{
    complete_fixed, rounded_incumbent, solve_with_start, ConstraintId, LinExpr, ModelHandle, ObjSense, RowSense,
    SolveParams, SolveStatus, VarId,
};
use crate::subproblem::WorstCaseDemand;

/// How cuts reach the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MasterMode {
    /// Rows and columns appended to the live model.
    #[default]
    Append,
    /// The whole model rebuilt from the instance and the stored demands
    /// before every solve.
    FullRebuild,
}

#[derive(Debug, Clone)]
pub struct CutBlock {
    pub iteration: usize,
    pub demand: HourlyMatrix,
    pub pattern: Vec<Vec<u8>>,
    pub recourse: RecourseBlock,
    pub cut_row: ConstraintId,
}

#[derive(Debug, Clone)]
pub struct MasterState {
    pub model: ModelHandle,
    pub first_stage: FirstStageVars,
    pub theta: VarId,
    pub theta_min: f64,
    pub blocks: Vec<CutBlock>,
    pub decision: Option<FirstStageDecision>,
    pub mode: MasterMode,
    /// Writes `master_iter{k}.lp` before each solve when set.
    pub lp_dump_dir: Option<PathBuf>,
    instance: PlanningInstance,
    /// ν then w values of the last solve, in `integer_columns` order.
    last_integers: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub decision: FirstStageDecision,
    pub theta: f64,
    pub objective: f64,
    /// Proven lower bound on the master optimum; equals `objective` up to
    /// the MIP gap.
    pub bound: f64,
    pub status: SolveStatus,
    pub wall_time: f64,
}

fn fresh_model(inst: &PlanningInstance) -> Result<(ModelHandle, FirstStageVars, VarId, f64)> {
    let mut model = ModelHandle::new("master");
    let first_stage = FirstStageVars::add_to(&mut model, inst, inst.scenarios())?;
    let theta_min = inst.theta_lower_bound();
    if !theta_min.is_finite() {
        return Err(HarsoError::InvalidInput(format!(
            "recourse lower bound {theta_min} is not finite"
        )));
    }
    let theta = model.add_continuous(theta_min, f64::INFINITY, "theta")?;
    let mut objective = first_stage.investment_cost(inst);
    objective.add_term(theta, 1.0);
    model.set_objective_expr(ObjSense::Minimize, &objective);
    Ok((model, first_stage, theta, theta_min))
}

/// Master with the investment rows and θ ≥ Θ_min, no cuts yet.
pub fn init_master(inst: &PlanningInstance) -> Result<MasterState> {
    let (model, first_stage, theta, theta_min) = fresh_model(inst)?;
    Ok(MasterState {
        model,
        first_stage,
        theta,
        theta_min,
        blocks: Vec::new(),
        decision: None,
        mode: MasterMode::Append,
        lp_dump_dir: None,
        instance: inst.clone(),
        last_integers: None,
    })
}

fn append_block(
    model: &mut ModelHandle,
    first_stage: &FirstStageVars,
    theta: VarId,
    inst: &PlanningInstance,
    demand: &HourlyMatrix,
    k: usize,
) -> Result<(RecourseBlock, ConstraintId)> {
    let recourse = add_recourse_block(
        model,
        inst,
        demand,
        &scenario_slices(inst),
        &first_stage.as_terms(),
        Degradation::PerYear,
        &format!("k{k}_"),
    )?;
    let cut_row = model.add_expr_constraint(
        &LinExpr::var(theta),
        RowSense::Ge,
        &recourse.op_cost,
        format!("cut_k{k}"),
    )?;
    Ok((recourse, cut_row))
}

impl MasterState {
    /// Appends a recourse copy at `worst_case` and the cut θ ≥ its
    /// operational cost. A repeated demand is accepted with a warning.
    pub fn add_cut_block(&mut self, worst_case: &WorstCaseDemand) -> Result<()> {
        let problems = worst_case.violations(&self.instance);
        if !problems.is_empty() {
            return Err(HarsoError::InvalidInput(format!(
                "worst-case demand rejected: {}",
                problems.join("; ")
            )));
        }
        let pattern = worst_case.pattern();
        if let Some(prev) = self.blocks.iter().find(|b| b.pattern == pattern) {
            warn!(
                "worst-case demand of iteration {} repeats the block of iteration {}",
                self.blocks.len() + 1,
                prev.iteration
            );
        }
        let k = self.blocks.len() + 1;
        let (recourse, cut_row) = append_block(
            &mut self.model,
            &self.first_stage,
            self.theta,
            &self.instance,
            &worst_case.realization,
            k,
        )?;
        self.blocks.push(CutBlock {
            iteration: k,
            demand: worst_case.realization.clone(),
            pattern,
            recourse,
            cut_row,
        });
        Ok(())
    }

    pub fn has_pattern(&self, worst_case: &WorstCaseDemand) -> bool {
        let pattern = worst_case.pattern();
        self.blocks.iter().any(|b| b.pattern == pattern)
    }

    /// Reconstructs the model from the instance and the stored demands.
    pub fn rebuild(&mut self) -> Result<()> {
        let (mut model, first_stage, theta, theta_min) = fresh_model(&self.instance)?;
        for block in &mut self.blocks {
            let (recourse, cut_row) = append_block(
                &mut model,
                &first_stage,
                theta,
                &self.instance,
                &block.demand,
                block.iteration,
            )?;
            block.recourse = recourse;
            block.cut_row = cut_row;
        }
        self.model = model;
        self.first_stage = first_stage;
        self.theta = theta;
        self.theta_min = theta_min;
        Ok(())
    }

    fn integer_columns(&self) -> Vec<VarId> {
        let fs = &self.first_stage;
        fs.tech_selected.iter().chain(&fs.charge_mode.values).copied().collect()
    }

    /// Integer fixings read off a relaxed master point: the technology with
    /// the largest ν, and for it the charging mode that carries more energy
    /// summed over all blocks.
    fn round_relaxation(&self, x: &[f64]) -> Vec<(VarId, f64)> {
        let fs = &self.first_stage;
        let chosen = fs
            .tech_selected
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, v)| {
                if x[v.0] > best.1 + 1e-9 {
                    (j, x[v.0])
                } else {
                    best
                }
            })
            .0;
        let mut fix: Vec<(VarId, f64)> = fs
            .tech_selected
            .iter()
            .enumerate()
            .map(|(j, &v)| (v, f64::from(u8::from(j == chosen))))
            .collect();
        let modes = &fs.charge_mode;
        for j in 0..modes.techs {
            for s in 0..modes.scenarios {
                for y in 0..modes.years {
                    for t in 0..modes.hours {
                        let mut net = 0.0;
                        for b in &self.blocks {
                            let k = b.recourse.tech_index(s, j, y, t);
                            net += x[b.recourse.charge[k].0] - x[b.recourse.discharge[k].0];
                        }
                        let on = j == chosen && net > 1e-9;
                        fix.push((*modes.get(j, t, y, s), f64::from(u8::from(on))));
                    }
                }
            }
        }
        fix
    }

    /// Solves the master. A time limit with an incumbent returns that
    /// incumbent under `SolveStatus::Limit`.
    pub fn solve(&mut self, params: &SolveParams) -> Result<MasterSolution> {
        let start = Instant::now();
        if self.mode == MasterMode::FullRebuild {
            self.rebuild()?;
        }
        if let Some(dir) = &self.lp_dump_dir {
            std::fs::create_dir_all(dir)?;
            std::fs::write(
                dir.join(format!("master_iter{}.lp", self.blocks.len() + 1)),
                self.model.to_lp_string(),
            )?;
        }
        // Two incumbent candidates: the rounded relaxation and the last
        // integer assignment completed against the current cuts.
        let rounded = rounded_incumbent(&self.model, params, |x| self.round_relaxation(x));
        let previous = self.last_integers.as_ref().and_then(|vals| {
            let fix: Vec<(VarId, f64)> = self.integer_columns().into_iter().zip(vals.iter().copied()).collect();
            complete_fixed(&self.model, params, &fix)
        });
        let hint = [rounded, previous]
            .into_iter()
            .flatten()
            .min_by(|a, b| a.objective.total_cmp(&b.objective));
        let out = solve_with_start(&self.model, params, hint.as_ref().map(|h| h.primal.as_slice()))?;
        let usable = match out.status {
            SolveStatus::Optimal => true,
            SolveStatus::Limit => out.objective.is_finite() && !out.primal.is_empty(),
            _ => false,
        };
        if !usable {
            return Err(HarsoError::Solver {
                model: "master".into(),
                status: out.status,
                detail: out.diagnostic,
            });
        }
        self.last_integers = Some(self.integer_columns().iter().map(|&id| out.value(id).round()).collect());
        let decision = self.first_stage.extract(&out, &self.instance);
        let theta = out.value(self.theta);
        self.decision = Some(decision.clone());
        Ok(MasterSolution {
            decision,
            theta,
            objective: out.objective,
            bound: if out.bound.is_finite() {
                out.bound.min(out.objective)
            } else {
                out.objective
            },
            status: out.status,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }
}

pub fn add_cut_block(state: &mut MasterState, worst_case: &WorstCaseDemand) -> Result<()> {
    state.add_cut_block(worst_case)
}

pub fn solve_master(state: &mut MasterState, params: &SolveParams) -> Result<MasterSolution> {
    state.solve(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::planner::solve_deterministic;

    #[test]
    fn binary_count_follows_index_arithmetic() {
        let mut inst = fixtures::desk_instance();
        inst.grid.years = 10;
        for p in &mut inst.pv.profiles {
            p.0 = vec![p.0[0].clone(); 10];
        }
        for b in &mut inst.batteries {
            b.soh_by_year = vec![b.soh_by_year[0]; 10];
        }
        let m = init_master(&inst).unwrap();
        // J + J·T·Y·S with J = 4, T = 24, Y = 10, S = 4
        assert_eq!(m.model.num_integral(), 4 + 4 * 24 * 10 * 4);
        assert_eq!(m.model.num_integral(), 3844);
    }

    #[test]
    fn empty_master_sits_at_theta_min() {
        let inst = fixtures::tiny_instance(4, 1, 2, 2);
        let mut m = init_master(&inst).unwrap();
        let sol = m.solve(&SolveParams::default()).unwrap();
        assert_eq!(sol.decision.pv_capacity, 0.0);
        assert!(sol.decision.bess_capacity.iter().all(|&g| g == 0.0));
        assert!((sol.objective - m.theta_min).abs() < 1e-9);
        assert!(m.theta_min.is_finite() && m.theta_min < 0.0);
    }

    #[test]
    fn single_block_matches_deterministic_model() {
        let inst = fixtures::tiny_instance(5, 2, 1, 2);
        let mut m = init_master(&inst).unwrap();
        m.add_cut_block(&WorstCaseDemand::nominal(&inst)).unwrap();
        let sol = m.solve(&SolveParams::default()).unwrap();
        let det = solve_deterministic(&inst, &inst.demand.nominal, &inst.pv.profiles[0]).unwrap();
        assert!((sol.objective - det.objective).abs() <= 1e-6 * det.objective.abs().max(1.0));
        assert!(sol.decision.violations(&inst).is_empty());
    }

    #[test]
    fn duplicate_block_changes_nothing() {
        let inst = fixtures::tiny_instance(4, 1, 2, 1);
        let wc = WorstCaseDemand::nominal(&inst);
        let mut once = init_master(&inst).unwrap();
        once.add_cut_block(&wc).unwrap();
        let mut twice = once.clone();
        twice.add_cut_block(&wc).unwrap();
        let a = once.solve(&SolveParams::default()).unwrap().objective;
        let b = twice.solve(&SolveParams::default()).unwrap().objective;
        assert!((a - b).abs() < 1e-7);
        assert!(twice.has_pattern(&wc));
    }

    #[test]
    fn zero_demand_block_lets_theta_go_negative() {
        let mut inst = fixtures::tiny_instance(4, 1, 1, 1);
        inst.demand.nominal = HourlyMatrix::zeros(1, 4);
        inst.demand.deviation = HourlyMatrix::zeros(1, 4);
        let mut m = init_master(&inst).unwrap();
        m.add_cut_block(&WorstCaseDemand::nominal(&inst)).unwrap();
        let sol = m.solve(&SolveParams::default()).unwrap();
        assert!(sol.theta <= 1e-9);
    }

    #[test]
    fn no_caps_means_grid_only() {
        let mut inst = fixtures::tiny_instance(4, 1, 2, 1);
        inst.config.pv_cap_max = 1e-9;
        inst.config.bess_cap_max = 1e-9;
        for b in &mut inst.batteries {
            b.power_rate = 0.0;
        }
        let mut m = init_master(&inst).unwrap();
        m.add_cut_block(&WorstCaseDemand::nominal(&inst)).unwrap();
        let sol = m.solve(&SolveParams::default()).unwrap();
        let closed: f64 = inst
            .demand
            .nominal
            .iter()
            .map(|(_, t, d)| inst.tariff.buy_price[t] * d)
            .sum();
        assert!((sol.theta - closed).abs() < 1e-6, "{} vs {closed}", sol.theta);
    }

    #[test]
    fn rebuild_reproduces_the_live_model() {
        let inst = fixtures::tiny_instance(4, 1, 2, 1).with_budget(2.0);
        let mut live = init_master(&inst).unwrap();
        live.add_cut_block(&WorstCaseDemand::nominal(&inst)).unwrap();
        let mut rebuilt = live.clone();
        rebuilt.mode = MasterMode::FullRebuild;
        let a = live.solve(&SolveParams::default()).unwrap();
        let b = rebuilt.solve(&SolveParams::default()).unwrap();
        assert_eq!(live.model.to_lp_string(), rebuilt.model.to_lp_string());
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn invalid_worst_case_rejected() {
        let inst = fixtures::tiny_instance(4, 1, 1, 1);
        let mut wc = WorstCaseDemand::nominal(&inst);
        wc.realization.set(0, 0, 123.0);
        let mut m = init_master(&inst).unwrap();
        assert!(m.add_cut_block(&wc).is_err());
    }

    #[test]
    fn lp_dump_written() {
        let dir = tempfile::tempdir().unwrap();
        let inst = fixtures::tiny_instance(3, 1, 1, 1);
        let mut m = init_master(&inst).unwrap();
        m.lp_dump_dir = Some(dir.path().to_path_buf());
        m.solve(&SolveParams::default()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("master_iter1.lp")).unwrap();
        assert!(text.contains("theta"));
    }
}
