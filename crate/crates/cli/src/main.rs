use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use harso_core::ccg::{run_ccg_with, solve_extensive_stochastic, Adversary, CcgConfig};
use harso_core::experiment::{report, run_sweep, solution_summary, PvResample, SweepSpec};
use harso_core::{fixtures, Execution, PlanningInstance};

/// PV and battery sizing under stochastic PV and budgeted demand uncertainty.
#[derive(Parser)]
#[command(name = "harso", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance, or sweep the budget of uncertainty.
    Solve(SolveArgs),
    /// Write a bundled instance as JSON.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file, or `builtin:<name>` for a bundled fixture.
    instance: String,
    /// Budget of uncertainty Γ (overrides the instance value).
    #[arg(long, conflicts_with = "budget_sweep")]
    budget: Option<f64>,
    /// Budget grid: `start:end[:step]` or a comma list.
    #[arg(long)]
    budget_sweep: Option<String>,
    /// Scenario counts; the first S scenarios are kept and reweighted.
    #[arg(long, value_delimiter = ',')]
    scenarios: Vec<usize>,
    /// Keep only the first Y years.
    #[arg(long)]
    years: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Seeds for the desk PV model; only valid with `builtin:desk` or
    /// `builtin:regime`. Several seeds resample the scenarios per seed.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory for traces, tables and plot data.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use exhaustive enumeration as the adversary (tiny instances only).
    #[arg(long)]
    oracle: bool,
    /// Also solve the Γ=0 extensive stochastic program as a reference.
    #[arg(long)]
    extensive: bool,
    /// Parallel sweep workers.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Rebuild the master each iteration and write zero timings, so reruns
    /// give byte-identical files.
    #[arg(long)]
    reproducible: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureName {
    Desk,
    Regime,
    Tiny,
    Solar,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(value_enum)]
    name: FixtureName,
    /// Destination JSON file.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the desk demand ensemble and PV noise.
    #[arg(long)]
    seed: Option<u64>,
}

fn builtin(name: &str, seed: Option<u64>) -> Result<PlanningInstance> {
    let seed = seed.unwrap_or(fixtures::DESK_SEED);
    Ok(match name {
        "desk" => fixtures::desk_instance_seeded(seed),
        "regime" => fixtures::regime_shift_instance_seeded(seed),
        "tiny" => fixtures::tiny_instance(4, 1, 2, 2),
        "solar" => fixtures::solar_day_instance(),
        other => bail!("unknown builtin instance `{other}` (desk, regime, tiny, solar)"),
    })
}

fn parse_budgets(spec: &str) -> Result<Vec<f64>> {
    if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad budget bound `{p}`"))
            })
            .collect::<Result<_>>()?;
        let (start, end, step) = match parts.as_slice() {
            [a, b] => (*a, *b, 1.0),
            [a, b, c] => (*a, *b, *c),
            _ => bail!("budget sweep `{spec}` is not start:end[:step]"),
        };
        if !(step > 0.0) || end < start {
            bail!("budget sweep `{spec}` needs start ≤ end and a positive step");
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| start + k as f64 * step).collect())
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad budget `{p}`")))
            .collect()
    }
}

fn load_instance(args: &SolveArgs) -> Result<(PlanningInstance, bool)> {
    let (mut inst, resamplable) = match args.instance.strip_prefix("builtin:") {
        Some(name) => {
            let inst = builtin(name, args.seed.first().copied())?;
            (inst, matches!(name, "desk" | "regime"))
        }
        None => {
            let inst = PlanningInstance::load_validated(&args.instance)
                .with_context(|| format!("loading instance {}", args.instance))?;
            (inst, false)
        }
    };
    if let Some(y) = args.years {
        inst = inst.with_years(y)?;
    }
    if let Some(g) = args.budget {
        inst = inst.with_budget(g);
    }
    Ok((inst, resamplable))
}

fn ccg_config(args: &SolveArgs) -> CcgConfig {
    CcgConfig {
        epsilon: args.epsilon,
        max_iterations: args.max_iters,
        full_rebuild: args.reproducible,
        reproducible: args.reproducible,
        ..CcgConfig::default()
    }
}

fn adversary(args: &SolveArgs) -> Adversary {
    if args.oracle {
        Adversary::BruteForce(Execution::Parallel)
    } else {
        Adversary::DualMilp
    }
}

fn run_extensive(inst: &PlanningInstance, out: Option<&Path>) -> Result<()> {
    let (decision, objective) = solve_extensive_stochastic(inst, &inst.demand.nominal)?;
    println!(
        "extensive stochastic (nominal demand): objective {objective:.6}, per day {:.6}, pv {:.4}, bess {:.4}",
        objective / inst.years() as f64,
        decision.pv_capacity,
        decision.total_bess()
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let body = serde_json::json!({
            "objective": objective,
            "pv_capacity": decision.pv_capacity,
            "bess_capacity": decision.bess_capacity,
            "selected_tech": decision.selected_tech().map(|j| inst.batteries[j].id.clone()),
        });
        std::fs::write(dir.join("extensive.json"), serde_json::to_string_pretty(&body)? + "\n")?;
    }
    Ok(())
}

/// Returns true when every requested run succeeded.
fn solve_command(args: &SolveArgs) -> Result<bool> {
    let (inst, resamplable) = load_instance(args)?;
    if !args.seed.is_empty() && !resamplable {
        bail!("--seed needs a builtin desk or regime instance");
    }
    let config = ccg_config(args);
    let out = args.out.as_deref();

    if args.extensive {
        run_extensive(&inst, out)?;
    }

    let sweeping = args.budget_sweep.is_some() || args.scenarios.len() > 1 || args.seed.len() > 1;
    if !sweeping {
        let inst = match args.scenarios.first() {
            Some(&s) => inst.with_scenario_count(s)?,
            None => inst,
        };
        let trace = run_ccg_with(&inst, &config, adversary(args))?;
        let summary = solution_summary(&inst, &trace);
        print!("{summary}");
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            trace.save_csv(dir.join("trace.csv"), config.reproducible)?;
            for (k, wc) in trace.worst_cases.iter().enumerate() {
                wc.save_csv(&inst, dir.join(format!("worst_case_{}.csv", k + 1)))?;
            }
            std::fs::write(dir.join("summary.txt"), &summary)?;
        }
        return Ok(true);
    }

    let budgets = match &args.budget_sweep {
        Some(s) => parse_budgets(s)?,
        None => vec![inst.budget()],
    };
    let scenario_counts = if args.scenarios.is_empty() {
        vec![inst.scenarios()]
    } else {
        args.scenarios.clone()
    };
    let mut spec = SweepSpec::new(budgets, scenario_counts);
    spec.workers = args.workers;
    spec.ccg = config;
    spec.adversary = adversary(args);
    if args.seed.len() > 1 {
        spec.seeds = args.seed.clone();
        spec.resample = Some(PvResample {
            arma: fixtures::desk_arma(args.seed[0]),
            shapes: fixtures::desk_pv_shapes(),
        });
    }
    info!("sweeping {} budgets", spec.budgets.len());
    let result = run_sweep(&inst, &spec)?;
    let summary = match out {
        Some(dir) => report(&result, dir, args.reproducible)?,
        None => harso_core::experiment::sweep_summary(&result),
    };
    print!("{summary}");
    Ok(result.failures().is_empty())
}

fn fixture_command(args: &FixtureArgs) -> Result<()> {
    let name = match args.name {
        FixtureName::Desk => "desk",
        FixtureName::Regime => "regime",
        FixtureName::Tiny => "tiny",
        FixtureName::Solar => "solar",
    };
    let inst = builtin(name, args.seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    inst.save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(args) => solve_command(args),
        Command::Fixture(args) => fixture_command(args).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some sweep points failed; see the summary");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
