//! Column-and-constraint generation loop and its reference solvers.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::domain::{HourlyMatrix, PlanningInstance};
use crate::error::{HarsoError, Result};
use crate::master::{init_master, MasterMode};
use crate::par::Execution;
use crate::planner::{build_sizing_model, solve_sizing_model, FirstStageDecision};
use crate::recourse::scenario_slices;
use crate::solver::SolveParams;
use crate::subproblem::{enumerate_worst_case, solve_dual_sp, WorstCaseDemand};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcgConfig {
    /// Relative gap tolerance.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub master_time_limit: Option<f64>,
    pub subproblem_time_limit: Option<f64>,
    pub mip_gap: f64,
    /// Seeds the master with the nominal-demand block before iteration 1.
    pub seed_nominal: bool,
    /// Rebuilds the master from scratch before every solve.
    pub full_rebuild: bool,
    /// Writes zero timings so repeated runs give identical trace files.
    pub reproducible: bool,
    pub lp_dump_dir: Option<PathBuf>,
}

impl Default for CcgConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iterations: 50,
            master_time_limit: None,
            subproblem_time_limit: None,
            mip_gap: 1e-4,
            seed_nominal: false,
            full_rebuild: false,
            reproducible: false,
            lp_dump_dir: None,
        }
    }
}

impl CcgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(HarsoError::InvalidInput(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(HarsoError::InvalidInput("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    fn params(&self, limit: Option<f64>) -> SolveParams {
        SolveParams {
            mip_gap: self.mip_gap,
            time_limit: limit,
            ..SolveParams::default()
        }
    }
}

/// Which adversary the loop queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adversary {
    /// Big-M dual subproblem MILP.
    DualMilp,
    /// Exhaustive vertex enumeration (tiny instances only).
    BruteForce(Execution),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcgIteration {
    pub iter: usize,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub z_mp: f64,
    pub z_sp: f64,
    pub theta: f64,
    pub t_mp_sec: f64,
    pub t_sp_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcgTrace {
    pub records: Vec<CcgIteration>,
    /// First stage attaining the final upper bound.
    pub decision: FirstStageDecision,
    pub worst_cases: Vec<WorstCaseDemand>,
    pub converged: bool,
    /// Iteration at which the adversary returned an already present demand.
    pub repeated_at: Option<usize>,
    pub wall_time: f64,
}

impl CcgTrace {
    pub fn objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.ub)
    }

    pub fn lower_bound(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.lb)
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_gap(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.gap)
    }

    /// Failures of the bound discipline: LB nondecreasing, UB
    /// nonincreasing, LB ≤ UB, and a closed gap unless flagged.
    pub fn bound_violations(&self, epsilon: f64) -> Vec<String> {
        let mut v = Vec::new();
        let tol = |x: f64| 1e-6 * x.abs().max(1.0);
        for w in self.records.windows(2) {
            if w[1].lb < w[0].lb - tol(w[0].lb) {
                v.push(format!("LB decreases at iteration {}", w[1].iter));
            }
            if w[1].ub > w[0].ub + tol(w[0].ub) {
                v.push(format!("UB increases at iteration {}", w[1].iter));
            }
        }
        for r in &self.records {
            if r.lb > r.ub + tol(r.ub) {
                v.push(format!("LB above UB at iteration {}", r.iter));
            }
        }
        if self.converged && !(self.final_gap() <= epsilon) {
            v.push(format!("flagged converged with gap {}", self.final_gap()));
        }
        v
    }

    /// `iter,lb,ub,gap,z_mp,z_sp,theta,t_mp_sec,t_sp_sec`
    pub fn write_csv<W: Write>(&self, writer: W, zero_timings: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "iter", "lb", "ub", "gap", "z_mp", "z_sp", "theta", "t_mp_sec", "t_sp_sec",
        ])?;
        for r in &self.records {
            let (tm, ts) = if zero_timings {
                (0.0, 0.0)
            } else {
                (r.t_mp_sec, r.t_sp_sec)
            };
            w.write_record([
                r.iter.to_string(),
                r.lb.to_string(),
                r.ub.to_string(),
                r.gap.to_string(),
                r.z_mp.to_string(),
                r.z_sp.to_string(),
                r.theta.to_string(),
                tm.to_string(),
                ts.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, zero_timings: bool) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?, zero_timings)
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<CcgIteration>> {
        let mut rdr = csv::Reader::from_reader(reader);
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<CcgIteration>, _>>()?;
        Ok(rows)
    }
}

/// Relative gap |1 − LB/UB|, or |UB − LB| when UB is numerically zero.
pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if ub.abs() < 1e-8 {
        (ub - lb).abs()
    } else {
        (1.0 - lb / ub).abs()
    }
}

/// Candidate upper bound: investment part of the master objective plus the
/// adversarial recourse value.
pub fn candidate_upper_bound(z_mp: f64, theta: f64, z_sp: f64) -> f64 {
    z_mp - theta + z_sp
}

pub fn run_ccg(inst: &PlanningInstance, config: &CcgConfig) -> Result<CcgTrace> {
    run_ccg_with(inst, config, Adversary::DualMilp)
}

pub fn run_ccg_bruteforce(inst: &PlanningInstance, config: &CcgConfig) -> Result<CcgTrace> {
    run_ccg_with(inst, config, Adversary::BruteForce(Execution::Sequential))
}

pub fn run_ccg_with(inst: &PlanningInstance, config: &CcgConfig, adversary: Adversary) -> Result<CcgTrace> {
    config.validate()?;
    inst.ensure_valid()?;
    let start = Instant::now();
    let mut master = init_master(inst)?;
    master.mode = if config.full_rebuild {
        MasterMode::FullRebuild
    } else {
        MasterMode::Append
    };
    master.lp_dump_dir = config.lp_dump_dir.clone();
    if config.seed_nominal {
        master.add_cut_block(&WorstCaseDemand::nominal(inst))?;
    }
    let mp_params = config.params(config.master_time_limit);
    let sp_params = config.params(config.subproblem_time_limit);

    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut records = Vec::new();
    let mut worst_cases = Vec::new();
    let mut incumbent: Option<FirstStageDecision> = None;
    let mut converged = false;
    let mut repeated_at = None;

    for k in 1..=config.max_iterations {
        let abort = |e: HarsoError| HarsoError::CcgAborted {
            iteration: k,
            source: Box::new(e),
        };
        let mp = master.solve(&mp_params).map_err(abort)?;
        lb = lb.max(mp.bound);

        let t_sp = Instant::now();
        let wc = match adversary {
            Adversary::DualMilp => solve_dual_sp(inst, &mp.decision, &sp_params).map(|s| s.worst_case),
            Adversary::BruteForce(exec) => enumerate_worst_case(inst, &mp.decision, exec),
        }
        .map_err(abort)?;
        let t_sp_sec = t_sp.elapsed().as_secs_f64();

        let candidate = candidate_upper_bound(mp.objective, mp.theta, wc.objective);
        if candidate < ub {
            ub = candidate;
            incumbent = Some(mp.decision.clone());
        }
        let gap = relative_gap(lb, ub);
        records.push(CcgIteration {
            iter: k,
            lb,
            ub,
            gap,
            z_mp: mp.objective,
            z_sp: wc.objective,
            theta: mp.theta,
            t_mp_sec: mp.wall_time,
            t_sp_sec,
        });
        debug!("ccg iter {k}: lb {lb} ub {ub} gap {gap}");
        if gap <= config.epsilon {
            converged = true;
            break;
        }
        if master.has_pattern(&wc) {
            info!("ccg iter {k}: adversary repeated a known demand with gap {gap}; stopping");
            repeated_at = Some(k);
            worst_cases.push(wc);
            break;
        }
        master.add_cut_block(&wc).map_err(abort)?;
        worst_cases.push(wc);
    }

    Ok(CcgTrace {
        records,
        decision: incumbent.expect("at least one iteration ran"),
        worst_cases,
        converged,
        repeated_at,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Monolithic scenario-indexed sizing MILP at a fixed demand matrix.
pub fn solve_extensive_stochastic(inst: &PlanningInstance, demand: &HourlyMatrix) -> Result<(FirstStageDecision, f64)> {
    let sm = build_sizing_model(inst, demand, &scenario_slices(inst), true, "extensive")?;
    let sol = solve_sizing_model(&sm, inst, &SolveParams::default())?;
    Ok((sol.decision, sol.objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::planner::solve_deterministic;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    fn tight() -> CcgConfig {
        CcgConfig {
            epsilon: 1e-7,
            ..CcgConfig::default()
        }
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(candidate_upper_bound(100.0, 40.0, 45.0), 105.0);
        assert!((relative_gap(95.0, 100.0) - 0.05).abs() < 1e-15);
        assert_eq!(relative_gap(-1e-3, 0.0), 1e-3);
    }

    #[test]
    fn invalid_config_rejected() {
        let inst = fixtures::tiny_instance(3, 1, 1, 1);
        let bad = CcgConfig {
            epsilon: 0.0,
            ..CcgConfig::default()
        };
        assert!(run_ccg(&inst, &bad).is_err());
        let bad = CcgConfig {
            max_iterations: 0,
            ..CcgConfig::default()
        };
        assert!(run_ccg(&inst, &bad).is_err());
    }

    #[test]
    fn zero_budget_matches_extensive_form_in_two_iterations() {
        let inst = fixtures::tiny_instance(4, 2, 2, 2).with_budget(0.0);
        let trace = run_ccg(&inst, &tight()).unwrap();
        let (_, ext) = solve_extensive_stochastic(&inst, &inst.demand.nominal).unwrap();
        assert!(trace.converged);
        assert!(trace.iterations() <= 2, "{} iterations", trace.iterations());
        assert!(rel(trace.objective(), ext) < 1e-5, "{} vs {ext}", trace.objective());
    }

    #[test]
    fn single_scenario_extensive_equals_deterministic() {
        let inst = fixtures::tiny_instance(5, 1, 1, 2);
        let (_, ext) = solve_extensive_stochastic(&inst, &inst.demand.nominal).unwrap();
        let det = solve_deterministic(&inst, &inst.demand.nominal, &inst.pv.profiles[0]).unwrap();
        assert!(rel(ext, det.objective) < 1e-7);
    }

    #[test]
    fn duplicated_scenarios_leave_objective_unchanged() {
        let inst = fixtures::tiny_instance(4, 1, 2, 1);
        let mut doubled = inst.clone();
        doubled.pv.profiles = vec![
            inst.pv.profiles[0].clone(),
            inst.pv.profiles[0].clone(),
            inst.pv.profiles[1].clone(),
            inst.pv.profiles[1].clone(),
        ];
        doubled.pv.probabilities = vec![0.25; 4];
        let (_, a) = solve_extensive_stochastic(&inst, &inst.demand.nominal).unwrap();
        let (_, b) = solve_extensive_stochastic(&doubled, &doubled.demand.nominal).unwrap();
        assert!(rel(a, b) < 1e-6);
    }

    #[test]
    fn milp_and_bruteforce_agree() {
        let inst = fixtures::tiny_instance(4, 1, 2, 1).with_budget(1.0);
        let a = run_ccg(&inst, &tight()).unwrap();
        let b = run_ccg_bruteforce(&inst, &tight()).unwrap();
        assert!(
            rel(a.objective(), b.objective()) < 1e-5,
            "{} vs {}",
            a.objective(),
            b.objective()
        );
        assert!(a.bound_violations(1e-7).is_empty(), "{:?}", a.bound_violations(1e-7));
        assert!(b.bound_violations(1e-7).is_empty());
        assert!(a.iterations() as u128 <= crate::subproblem::pattern_count(4, 1.0) + 1);
    }

    #[test]
    fn full_budget_costs_at_least_nominal() {
        let inst = fixtures::tiny_instance(4, 1, 2, 1);
        let full = run_ccg(&inst.with_budget(4.0), &tight()).unwrap();
        let brute = run_ccg_bruteforce(&inst.with_budget(4.0), &tight()).unwrap();
        let zero = run_ccg(&inst.with_budget(0.0), &tight()).unwrap();
        assert!(rel(full.objective(), brute.objective()) < 1e-5);
        assert!(full.objective() >= zero.objective() - 1e-6);
    }

    #[test]
    fn bounds_sandwich_final_objective() {
        let inst = fixtures::tiny_instance(5, 2, 2, 2).with_budget(2.0);
        let trace = run_ccg(&inst, &CcgConfig::default()).unwrap();
        let obj = trace.objective();
        for r in &trace.records {
            assert!(r.lb <= obj + 1e-6 * obj.abs().max(1.0));
            assert!(r.ub >= obj - 1e-6 * obj.abs().max(1.0));
        }
        assert!(trace.decision.violations(&inst).is_empty());
    }

    #[test]
    fn trace_csv_round_trips() {
        let inst = fixtures::tiny_instance(4, 1, 1, 1);
        let trace = run_ccg(&inst, &CcgConfig::default()).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, false).unwrap();
        let back = CcgTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, trace.records);
        let mut zeroed = Vec::new();
        trace.write_csv(&mut zeroed, true).unwrap();
        let text = String::from_utf8(zeroed).unwrap();
        assert!(text.starts_with("iter,lb,ub,gap,z_mp,z_sp,theta,t_mp_sec,t_sp_sec\n"));
        assert!(text.lines().skip(1).all(|l| l.ends_with(",0,0")));
    }

    #[test]
    fn seeded_and_rebuilt_runs_agree() {
        let inst = fixtures::tiny_instance(4, 1, 2, 1).with_budget(2.0);
        let plain = run_ccg(&inst, &tight()).unwrap();
        let seeded = run_ccg(
            &inst,
            &CcgConfig {
                seed_nominal: true,
                full_rebuild: true,
                ..tight()
            },
        )
        .unwrap();
        assert!(rel(plain.objective(), seeded.objective()) < 1e-5);
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let inst = fixtures::tiny_instance(4, 1, 2, 1).with_budget(2.0);
        let trace = run_ccg(
            &inst,
            &CcgConfig {
                max_iterations: 1,
                ..CcgConfig::default()
            },
        )
        .unwrap();
        assert_eq!(trace.iterations(), 1);
        assert!(!trace.converged);
    }
}
