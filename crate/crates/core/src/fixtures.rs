//! Deterministic instances used by tests, benches and the CLI `fixture`
//! command. Investment costs are quoted for the modeled horizon of Y
//! representative days, so they are comparable to the daily operating terms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{
    BatteryTech, DemandUncertainty, HourlyMatrix, PlanningInstance, PvScenarioSet, SystemConfig, Tariff, TimeGrid,
    DEFAULT_SOC_BOUNDARY,
};
use crate::forge::{extract_demand_intervals, project_demand, sample_pv_scenarios, ArmaSpec, DemandForecast};
use crate::par::Execution;

/// Residential base-year load, kWh per hour.
pub const DESK_BASE_LOAD: [f64; 24] = [
    0.32, 0.28, 0.26, 0.25, 0.25, 0.28, 0.40, 0.62, 0.70, 0.55, 0.45, 0.42, //
    0.48, 0.55, 0.50, 0.42, 0.45, 0.58, 0.80, 1.05, 1.15, 1.00, 0.72, 0.45,
];

/// Day-ahead style purchase price by hour.
pub const DESK_BUY_PRICE: [f64; 24] = [
    0.12, 0.11, 0.10, 0.10, 0.10, 0.11, 0.14, 0.20, 0.24, 0.22, 0.18, 0.16, //
    0.15, 0.15, 0.16, 0.17, 0.19, 0.23, 0.28, 0.31, 0.32, 0.29, 0.22, 0.16,
];

pub const DESK_NIGHT_HOURS: [usize; 11] = [0, 1, 2, 3, 4, 5, 6, 20, 21, 22, 23];

pub const DESK_SEED: u64 = 20_240_601;

/// Four seasonal PV shapes (spring, summer, autumn, winter), fraction of
/// nameplate per hour.
pub fn desk_pv_shapes() -> Vec<Vec<f64>> {
    let season = |sunrise: f64, sunset: f64, peak: f64| -> Vec<f64> {
        (0..24)
            .map(|t| {
                let mid = t as f64 + 0.5;
                if mid <= sunrise || mid >= sunset || DESK_NIGHT_HOURS.contains(&t) {
                    0.0
                } else {
                    peak * (std::f64::consts::PI * (mid - sunrise) / (sunset - sunrise)).sin()
                }
            })
            .collect()
    };
    vec![
        season(7.0, 19.5, 0.72),
        season(7.0, 20.0, 0.85),
        season(7.5, 18.5, 0.58),
        season(8.0, 18.0, 0.42),
    ]
}

fn desk_catalog(years: usize) -> Vec<BatteryTech> {
    let fade = |start: f64, rate: f64| -> Vec<f64> { (0..years).map(|y| start - rate * y as f64).collect() };
    let tech = |id: &str, invest: f64, op: f64, soh: Vec<f64>, min: f64, max: f64, eff: f64| BatteryTech {
        id: id.into(),
        invest_cost: invest * years as f64,
        op_cost: op,
        soh_by_year: soh,
        soc_min_frac: min,
        soc_max_frac: max,
        efficiency: eff,
        power_rate: 3.0,
        soc_initial_frac: DEFAULT_SOC_BOUNDARY,
        soc_final_frac: DEFAULT_SOC_BOUNDARY,
    };
    vec![
        tech("lfp_gr_fl", 0.100, 0.004, fade(1.00, 0.012), 0.10, 0.95, 0.96),
        tech("lmo_gr_sl", 0.085, 0.006, fade(0.70, 0.030), 0.10, 0.95, 0.93),
        tech("nmc_gr_fl", 0.110, 0.005, fade(1.00, 0.020), 0.10, 0.95, 0.95),
        tech("nmc_lto_fl", 0.140, 0.004, fade(1.00, 0.005), 0.05, 0.95, 0.97),
    ]
}

/// ARMA(1,1) noise model behind the desk PV scenarios.
pub fn desk_arma(seed: u64) -> ArmaSpec {
    let mut arma = ArmaSpec::arma11(0.7, 0.2, 0.08, seed);
    arma.night_hours = DESK_NIGHT_HOURS.to_vec();
    arma
}

/// Desk-scale instance: T=24, Y=3, S=4, J=4, Γ=5. Demand follows a 2 %
/// compound growth; PV scenarios come from ARMA(1,1) noise on four seasonal
/// shapes; demand intervals are read off a synthetic 30-day ensemble.
pub fn desk_instance() -> PlanningInstance {
    desk_instance_seeded(DESK_SEED)
}

/// [`desk_instance`] with another seed for the demand ensemble and PV noise.
pub fn desk_instance_seeded(seed: u64) -> PlanningInstance {
    let years = 3;
    let grid = TimeGrid {
        hours_per_day: 24,
        years,
    };
    let projected = project_demand(&DemandForecast {
        base_profile: DESK_BASE_LOAD.to_vec(),
        growth_rate: 0.02,
        horizon: years,
    })
    .expect("valid forecast");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.18).expect("valid std");
    let history: Vec<Vec<Vec<f64>>> = (0..years)
        .map(|y| {
            (0..30)
                .map(|_| {
                    (0..24)
                        .map(|t| projected.get(y, t) * f64::exp(noise.sample(&mut rng)))
                        .collect()
                })
                .collect()
        })
        .collect();
    let demand = extract_demand_intervals(&history, 5.0).expect("rectangular ensemble");

    let pv =
        sample_pv_scenarios(&desk_arma(seed), &desk_pv_shapes(), grid, Execution::Sequential).expect("stationary ARMA");

    PlanningInstance {
        grid,
        tariff: Tariff {
            buy_price: DESK_BUY_PRICE.to_vec(),
            sell_price: vec![0.04; 24],
        },
        pv,
        demand,
        batteries: desk_catalog(years),
        config: SystemConfig {
            pv_invest_cost: 0.30 * years as f64,
            pv_op_cost: 0.002,
            pv_cap_max: 12.0,
            bess_cap_max: 15.0,
        },
    }
}

/// Desk instance where PV energy costs more than night grid energy but less
/// than daytime grid energy, with a low flat feed-in price. Storage is then
/// charged from the grid and PV only serves daytime load. Used for the
/// capacity-versus-budget ordering check.
pub fn regime_shift_instance() -> PlanningInstance {
    regime_shift_instance_seeded(DESK_SEED)
}

pub fn regime_shift_instance_seeded(seed: u64) -> PlanningInstance {
    let mut inst = desk_instance_seeded(seed);
    let years = inst.years() as f64;
    inst.config.pv_invest_cost = 0.66 * years;
    inst.tariff.sell_price = vec![0.03; 24];
    inst
}

/// Small synthetic instance with T hours, Y years, S scenarios and J
/// technologies. Technology 1 (when present) is a second-life pack.
pub fn tiny_instance(hours: usize, years: usize, scenarios: usize, techs: usize) -> PlanningInstance {
    let angle = |t: usize| std::f64::consts::PI * (t as f64 + 0.5) / hours as f64;
    let nominal = HourlyMatrix::from_fn(years, hours, |y, t| {
        (1.0 + 0.5 * (2.0 * angle(t)).cos().abs() + 0.1 * (t % 3) as f64) * 1.02f64.powi(y as i32)
    });
    let deviation = nominal.map(|d| 0.3 * d);
    let profiles = (0..scenarios)
        .map(|s| {
            let peak = 0.9 - 0.25 * s as f64 / scenarios.max(1) as f64;
            HourlyMatrix::from_fn(years, hours, |y, t| {
                (peak * angle(t).sin() * (1.0 - 0.03 * y as f64)).clamp(0.0, 1.0)
            })
        })
        .collect();
    let batteries = (0..techs)
        .map(|j| {
            let (start, rate) = if j == 1 {
                (0.70, 0.03)
            } else {
                (1.0, 0.01 * (j + 1) as f64)
            };
            BatteryTech {
                id: format!("b{j}"),
                invest_cost: (0.12 + 0.03 * j as f64) * years as f64,
                op_cost: 0.005 * (j + 1) as f64,
                soh_by_year: (0..years).map(|y| start - rate * y as f64).collect(),
                soc_min_frac: 0.1,
                soc_max_frac: 0.9,
                efficiency: 0.95 - 0.02 * j as f64,
                power_rate: 1.0 + 0.25 * j as f64,
                soc_initial_frac: DEFAULT_SOC_BOUNDARY,
                soc_final_frac: DEFAULT_SOC_BOUNDARY,
            }
        })
        .collect();
    PlanningInstance {
        grid: TimeGrid {
            hours_per_day: hours,
            years,
        },
        tariff: Tariff {
            buy_price: (0..hours).map(|t| 0.2 + 0.1 * (t % 2) as f64).collect(),
            sell_price: vec![0.05; hours],
        },
        pv: PvScenarioSet::uniform(profiles),
        demand: DemandUncertainty {
            nominal,
            deviation,
            budget: 1.0_f64.min(hours as f64),
        },
        batteries,
        config: SystemConfig {
            pv_invest_cost: 0.25 * years as f64,
            pv_op_cost: 0.005,
            pv_cap_max: 5.0,
            bess_cap_max: 5.0,
        },
    }
}

/// One-day instance: strong midday sun, cheap midday and expensive evening
/// grid power.
pub fn solar_day_instance() -> PlanningInstance {
    let shape: Vec<f64> = (0..24)
        .map(|t| {
            let mid = t as f64 + 0.5;
            if (7.0..19.0).contains(&mid) {
                0.9 * (std::f64::consts::PI * (mid - 7.0) / 12.0).sin()
            } else {
                0.0
            }
        })
        .collect();
    let load: Vec<f64> = (0..24)
        .map(|t| match t {
            18..=22 => 1.4,
            7..=9 => 0.6,
            _ => 0.3,
        })
        .collect();
    let buy: Vec<f64> = (0..24)
        .map(|t| match t {
            10..=16 => 0.08,
            17..=22 => 0.35,
            _ => 0.15,
        })
        .collect();
    let nominal = HourlyMatrix(vec![load]);
    PlanningInstance {
        grid: TimeGrid {
            hours_per_day: 24,
            years: 1,
        },
        tariff: Tariff {
            buy_price: buy,
            sell_price: vec![0.02; 24],
        },
        pv: PvScenarioSet::uniform(vec![HourlyMatrix(vec![shape])]),
        demand: DemandUncertainty {
            deviation: nominal.map(|_| 0.0),
            nominal,
            budget: 0.0,
        },
        batteries: vec![BatteryTech {
            id: "lfp".into(),
            invest_cost: 0.1,
            op_cost: 0.005,
            soh_by_year: vec![1.0],
            soc_min_frac: 0.1,
            soc_max_frac: 0.95,
            efficiency: 0.95,
            power_rate: 2.5,
            soc_initial_frac: DEFAULT_SOC_BOUNDARY,
            soc_final_frac: DEFAULT_SOC_BOUNDARY,
        }],
        config: SystemConfig {
            pv_invest_cost: 0.2,
            pv_op_cost: 0.0,
            pv_cap_max: 10.0,
            bess_cap_max: 10.0,
        },
    }
}
