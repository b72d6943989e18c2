//! Budget and scenario-count sweeps, marginal cost of robustness, and the
//! CSV/plot-data bundle written after a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use crate::ccg::{run_ccg_with, Adversary, CcgConfig, CcgTrace};
use crate::domain::PlanningInstance;
use crate::error::{HarsoError, Result};
use crate::forge::{sample_pv_scenarios, ArmaSpec};
use crate::par::{map_with_workers, Execution};

/// PV model used to resample scenarios once per sweep seed.
#[derive(Debug, Clone)]
pub struct PvResample {
    pub arma: ArmaSpec,
    pub shapes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub budgets: Vec<f64>,
    pub scenario_counts: Vec<usize>,
    /// Empty: the instance scenarios are used as given. Otherwise every
    /// seed resamples PV through `resample`.
    pub seeds: Vec<u64>,
    pub resample: Option<PvResample>,
    pub out_dir: Option<PathBuf>,
    pub workers: usize,
    pub ccg: CcgConfig,
    pub adversary: Adversary,
}

impl SweepSpec {
    pub fn new(budgets: Vec<f64>, scenario_counts: Vec<usize>) -> Self {
        Self {
            budgets,
            scenario_counts,
            seeds: Vec::new(),
            resample: None,
            out_dir: None,
            workers: 1,
            ccg: CcgConfig::default(),
            adversary: Adversary::DualMilp,
        }
    }

    pub fn validate(&self, inst: &PlanningInstance) -> Result<()> {
        let hours = inst.hours() as f64;
        let mut problems = Vec::new();
        for &g in &self.budgets {
            if !(0.0..=hours).contains(&g) {
                problems.push(format!("budget {g} outside [0, {hours}]"));
            }
        }
        for &s in &self.scenario_counts {
            if s == 0 {
                problems.push("scenario count must be at least 1".to_owned());
            } else if self.resample.is_none() && s > inst.scenarios() {
                problems.push(format!(
                    "scenario count {s} exceeds the {} in the instance",
                    inst.scenarios()
                ));
            }
        }
        if !self.seeds.is_empty() && self.resample.is_none() {
            problems.push("seeds given without a PV model to resample".to_owned());
        }
        if self.workers == 0 {
            problems.push("workers must be at least 1".to_owned());
        }
        if let Err(e) = self.ccg.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(HarsoError::InvalidInput(problems.join("; ")))
        }
    }
}

/// One sweep point. Failed points keep their keys and carry the error text.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub budget: f64,
    pub scenarios: usize,
    pub seed: Option<u64>,
    pub objective: f64,
    /// Objective divided by the number of representative days (years).
    pub objective_per_day: f64,
    pub pv_capacity: f64,
    pub bess_capacity: Vec<f64>,
    pub selected_tech: Option<String>,
    pub iterations: usize,
    pub converged: bool,
    pub final_gap: f64,
    pub wall_time: f64,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    fn failure(budget: f64, scenarios: usize, seed: Option<u64>, techs: usize, error: String) -> Self {
        Self {
            budget,
            scenarios,
            seed,
            objective: f64::NAN,
            objective_per_day: f64::NAN,
            pv_capacity: f64::NAN,
            bess_capacity: vec![f64::NAN; techs],
            selected_tech: None,
            iterations: 0,
            converged: false,
            final_gap: f64::NAN,
            wall_time: 0.0,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub tech_ids: Vec<String>,
    pub records: Vec<SweepRecord>,
    /// Trace of every successful point, aligned with `records`.
    pub traces: Vec<Option<CcgTrace>>,
}

impl SweepResult {
    pub fn failures(&self) -> Vec<&SweepRecord> {
        self.records.iter().filter(|r| r.failed()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Successful records at one scenario count (and seed), sorted by Γ.
    pub fn series(&self, scenarios: usize, seed: Option<u64>) -> Vec<&SweepRecord> {
        let mut out: Vec<&SweepRecord> = self
            .records
            .iter()
            .filter(|r| r.scenarios == scenarios && r.seed == seed && !r.failed())
            .collect();
        out.sort_by(|a, b| a.budget.total_cmp(&b.budget));
        out
    }

    /// `gamma,scenarios,seed,objective,objective_per_day,pv_kw,bess_<id>...,
    /// selected_tech,iterations,converged,final_gap,wall_time_sec,error`
    pub fn write_csv<W: std::io::Write>(&self, writer: W, zero_timings: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["gamma", "scenarios", "seed", "objective", "objective_per_day", "pv_kw"]
            .map(String::from)
            .to_vec();
        header.extend(self.tech_ids.iter().map(|id| format!("bess_{id}")));
        header.extend(
            [
                "selected_tech",
                "iterations",
                "converged",
                "final_gap",
                "wall_time_sec",
                "error",
            ]
            .map(String::from),
        );
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.budget.to_string(),
                r.scenarios.to_string(),
                r.seed.map(|s| s.to_string()).unwrap_or_default(),
                r.objective.to_string(),
                r.objective_per_day.to_string(),
                r.pv_capacity.to_string(),
            ];
            row.extend(r.bess_capacity.iter().map(f64::to_string));
            row.push(r.selected_tech.clone().unwrap_or_default());
            row.push(r.iterations.to_string());
            row.push(r.converged.to_string());
            row.push(r.final_gap.to_string());
            row.push(if zero_timings { 0.0 } else { r.wall_time }.to_string());
            row.push(r.error.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses what [`SweepResult::write_csv`] produced. Traces are not part
    /// of the table and come back empty.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let tech_ids: Vec<String> = header
            .iter()
            .filter_map(|h| h.strip_prefix("bess_").map(String::from))
            .collect();
        let col = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| HarsoError::InvalidInput(format!("sweep table lacks column `{name}`")))
        };
        let (c_gamma, c_s, c_seed, c_obj, c_day, c_pv) = (
            col("gamma")?,
            col("scenarios")?,
            col("seed")?,
            col("objective")?,
            col("objective_per_day")?,
            col("pv_kw")?,
        );
        let c_bess: Vec<usize> = tech_ids
            .iter()
            .map(|id| col(&format!("bess_{id}")))
            .collect::<Result<_>>()?;
        let (c_sel, c_it, c_conv, c_gap, c_wall, c_err) = (
            col("selected_tech")?,
            col("iterations")?,
            col("converged")?,
            col("final_gap")?,
            col("wall_time_sec")?,
            col("error")?,
        );

        let bad = |field: &str, value: &str| HarsoError::InvalidInput(format!("bad {field} value `{value}`"));
        let num = |row: &csv::StringRecord, c: usize, field: &str| -> Result<f64> {
            row[c].parse::<f64>().map_err(|_| bad(field, &row[c]))
        };
        let text =
            |row: &csv::StringRecord, c: usize| -> Option<String> { Some(row[c].to_owned()).filter(|s| !s.is_empty()) };

        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            records.push(SweepRecord {
                budget: num(&row, c_gamma, "gamma")?,
                scenarios: row[c_s].parse().map_err(|_| bad("scenarios", &row[c_s]))?,
                seed: match text(&row, c_seed) {
                    Some(s) => Some(s.parse().map_err(|_| bad("seed", &s))?),
                    None => None,
                },
                objective: num(&row, c_obj, "objective")?,
                objective_per_day: num(&row, c_day, "objective_per_day")?,
                pv_capacity: num(&row, c_pv, "pv_kw")?,
                bess_capacity: c_bess.iter().map(|&c| num(&row, c, "bess")).collect::<Result<_>>()?,
                selected_tech: text(&row, c_sel),
                iterations: row[c_it].parse().map_err(|_| bad("iterations", &row[c_it]))?,
                converged: row[c_conv].parse().map_err(|_| bad("converged", &row[c_conv]))?,
                final_gap: num(&row, c_gap, "final_gap")?,
                wall_time: num(&row, c_wall, "wall_time_sec")?,
                error: text(&row, c_err),
            });
        }
        let traces = vec![None; records.len()];
        Ok(Self {
            tech_ids,
            records,
            traces,
        })
    }
}

struct SweepPoint {
    budget: f64,
    scenarios: usize,
    seed: Option<u64>,
}

fn point_instance(base: &PlanningInstance, spec: &SweepSpec, p: &SweepPoint) -> Result<PlanningInstance> {
    let mut inst = base.with_budget(p.budget);
    if let (Some(seed), Some(model)) = (p.seed, &spec.resample) {
        let arma = ArmaSpec {
            seed,
            ..model.arma.clone()
        };
        inst.pv = sample_pv_scenarios(&arma, &model.shapes, inst.grid, Execution::Sequential)?;
    }
    if p.scenarios < inst.scenarios() {
        inst = inst.with_scenario_count(p.scenarios)?;
    } else if p.scenarios > inst.scenarios() {
        return Err(HarsoError::InvalidInput(format!(
            "scenario count {} exceeds the {} available",
            p.scenarios,
            inst.scenarios()
        )));
    }
    Ok(inst)
}

/// Runs one CCG solve per (seed, S, Γ). A failing point is recorded with its
/// error and the sweep continues. With `out_dir` set the table is written to
/// `sweep.csv` there.
pub fn run_sweep(base: &PlanningInstance, spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate(base)?;
    let seeds: Vec<Option<u64>> = if spec.seeds.is_empty() {
        vec![None]
    } else {
        spec.seeds.iter().copied().map(Some).collect()
    };
    let mut points = Vec::new();
    for &seed in &seeds {
        for &scenarios in &spec.scenario_counts {
            for &budget in &spec.budgets {
                points.push(SweepPoint {
                    budget,
                    scenarios,
                    seed,
                });
            }
        }
    }
    info!("sweep: {} points on {} workers", points.len(), spec.workers);

    let techs = base.techs();
    let outcomes = map_with_workers(spec.workers, points, |p| {
        let start = Instant::now();
        let run = point_instance(base, spec, &p)
            .and_then(|inst| run_ccg_with(&inst, &spec.ccg, spec.adversary).map(|trace| (inst, trace)));
        match run {
            Ok((inst, trace)) => {
                let d = &trace.decision;
                let record = SweepRecord {
                    budget: p.budget,
                    scenarios: p.scenarios,
                    seed: p.seed,
                    objective: trace.objective(),
                    objective_per_day: trace.objective() / inst.years() as f64,
                    pv_capacity: d.pv_capacity,
                    bess_capacity: d.bess_capacity.clone(),
                    selected_tech: d
                        .selected_tech()
                        .filter(|&j| d.bess_capacity[j] > 1e-9)
                        .map(|j| inst.batteries[j].id.clone()),
                    iterations: trace.iterations(),
                    converged: trace.converged,
                    final_gap: trace.final_gap(),
                    wall_time: start.elapsed().as_secs_f64(),
                    error: None,
                };
                info!(
                    "sweep point Γ={} S={} objective {:.6}",
                    p.budget, p.scenarios, record.objective
                );
                (record, Some(trace))
            }
            Err(e) => {
                warn!("sweep point Γ={} S={} failed: {e}", p.budget, p.scenarios);
                (
                    SweepRecord::failure(p.budget, p.scenarios, p.seed, techs, e.to_string()),
                    None,
                )
            }
        }
    });

    let (records, traces) = outcomes.into_iter().unzip();
    let result = SweepResult {
        tech_ids: base.batteries.iter().map(|b| b.id.clone()).collect(),
        records,
        traces,
    };
    if let Some(dir) = &spec.out_dir {
        std::fs::create_dir_all(dir)?;
        result.write_csv(std::fs::File::create(dir.join("sweep.csv"))?, spec.ccg.reproducible)?;
    }
    Ok(result)
}

/// First differences of a series: `out[i] = values[i + 1] − values[i]`.
pub fn finite_differences(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McrPoint {
    pub budget: f64,
    pub objective: f64,
    /// objective(Γ) − objective(Γ−1); None at the first grid point.
    pub mcr: Option<f64>,
}

/// MCR series at one scenario count. The successful budgets must form a
/// contiguous unit-step grid.
pub fn marginal_cost_of_robustness(result: &SweepResult, scenarios: usize, seed: Option<u64>) -> Result<Vec<McrPoint>> {
    let series = result.series(scenarios, seed);
    if series.is_empty() {
        return Err(HarsoError::InvalidInput(format!("no successful runs at S={scenarios}")));
    }
    for w in series.windows(2) {
        if (w[1].budget - w[0].budget - 1.0).abs() > 1e-9 {
            return Err(HarsoError::InvalidInput(format!(
                "budget grid is not contiguous between {} and {}",
                w[0].budget, w[1].budget
            )));
        }
    }
    let objectives: Vec<f64> = series.iter().map(|r| r.objective).collect();
    let diffs = finite_differences(&objectives);
    Ok(series
        .iter()
        .enumerate()
        .map(|(i, r)| McrPoint {
            budget: r.budget,
            objective: r.objective,
            mcr: i.checked_sub(1).map(|k| diffs[k]),
        })
        .collect())
}

/// Short description of one solved design.
pub fn solution_summary(inst: &PlanningInstance, trace: &CcgTrace) -> String {
    let d = &trace.decision;
    let mut s = String::new();
    let _ = writeln!(s, "objective: {:.6}", trace.objective());
    let _ = writeln!(
        s,
        "objective per representative day: {:.6}",
        trace.objective() / inst.years() as f64
    );
    let _ = writeln!(s, "pv capacity: {:.4}", d.pv_capacity);
    match d.selected_tech().filter(|&j| d.bess_capacity[j] > 1e-9) {
        Some(j) => {
            let _ = writeln!(s, "battery technology: {}", inst.batteries[j].id);
            let _ = writeln!(s, "battery capacity: {:.4}", d.bess_capacity[j]);
        }
        None => {
            let _ = writeln!(s, "battery technology: none");
        }
    }
    let _ = writeln!(
        s,
        "iterations: {} ({}), final gap {:.3e}",
        trace.iterations(),
        if trace.converged { "converged" } else { "not converged" },
        trace.final_gap()
    );
    s
}

/// Human-readable overview of a sweep.
pub fn sweep_summary(result: &SweepResult) -> String {
    let mut s = String::new();
    if result.is_empty() {
        s.push_str("no runs\n");
        return s;
    }
    let ok = result.records.len() - result.failures().len();
    let _ = writeln!(s, "{} runs, {} succeeded", result.records.len(), ok);
    let mut groups: BTreeMap<(usize, Option<u64>), usize> = BTreeMap::new();
    for r in result.records.iter().filter(|r| !r.failed()) {
        *groups.entry((r.scenarios, r.seed)).or_default() += 1;
    }
    for &(scenarios, seed) in groups.keys() {
        let series = result.series(scenarios, seed);
        let (first, last) = (series[0], series[series.len() - 1]);
        let tag = seed.map(|v| format!(" seed {v}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "S={scenarios}{tag}: Γ {}..{} objective {:.6} .. {:.6}",
            first.budget, last.budget, first.objective, last.objective
        );
    }
    let failures = result.failures();
    if !failures.is_empty() {
        s.push_str("failures:\n");
        for r in failures {
            let _ = writeln!(
                s,
                "  Γ={} S={}: {}",
                r.budget,
                r.scenarios,
                r.error.as_deref().unwrap_or_default()
            );
        }
    }
    s
}

fn write_xy(path: &Path, x: &str, y: &str, rows: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([x, y])?;
    for (a, b) in rows {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the sweep table, one trace per point, plot-ready x,y files per
/// scenario count and `summary.txt`. Returns the summary text.
pub fn report(result: &SweepResult, dir: &Path, zero_timings: bool) -> Result<String> {
    std::fs::create_dir_all(dir)?;
    result.write_csv(std::fs::File::create(dir.join("sweep.csv"))?, zero_timings)?;

    let traces_dir = dir.join("traces");
    for (r, t) in result.records.iter().zip(&result.traces) {
        if let Some(trace) = t {
            std::fs::create_dir_all(&traces_dir)?;
            let seed = r.seed.map(|v| format!("_seed{v}")).unwrap_or_default();
            trace.save_csv(
                traces_dir.join(format!("trace_g{}_s{}{seed}.csv", r.budget, r.scenarios)),
                zero_timings,
            )?;
        }
    }

    let plots = dir.join("plots");
    let mut groups: Vec<(usize, Option<u64>)> = result
        .records
        .iter()
        .filter(|r| !r.failed())
        .map(|r| (r.scenarios, r.seed))
        .collect();
    groups.sort();
    groups.dedup();
    for (scenarios, seed) in groups {
        std::fs::create_dir_all(&plots)?;
        let series = result.series(scenarios, seed);
        let tag = format!("s{scenarios}{}", seed.map(|v| format!("_seed{v}")).unwrap_or_default());
        let pick =
            |f: fn(&SweepRecord) -> f64| -> Vec<(f64, f64)> { series.iter().map(|r| (r.budget, f(r))).collect() };
        write_xy(
            &plots.join(format!("objective_vs_gamma_{tag}.csv")),
            "gamma",
            "objective",
            &pick(|r| r.objective),
        )?;
        write_xy(
            &plots.join(format!("pv_vs_gamma_{tag}.csv")),
            "gamma",
            "pv_kw",
            &pick(|r| r.pv_capacity),
        )?;
        write_xy(
            &plots.join(format!("bess_vs_gamma_{tag}.csv")),
            "gamma",
            "bess_kwh",
            &pick(|r| r.bess_capacity.iter().sum()),
        )?;
        let wall = if zero_timings {
            pick(|_| 0.0)
        } else {
            pick(|r| r.wall_time)
        };
        write_xy(
            &plots.join(format!("runtime_vs_gamma_{tag}.csv")),
            "gamma",
            "wall_time_sec",
            &wall,
        )?;
        if let Ok(mcr) = marginal_cost_of_robustness(result, scenarios, seed) {
            let rows: Vec<(f64, f64)> = mcr.iter().filter_map(|p| p.mcr.map(|m| (p.budget, m))).collect();
            write_xy(&plots.join(format!("mcr_vs_gamma_{tag}.csv")), "gamma", "mcr", &rows)?;
        }
    }

    let summary = sweep_summary(result);
    std::fs::write(dir.join("summary.txt"), &summary)?;
    Ok(summary)
}
