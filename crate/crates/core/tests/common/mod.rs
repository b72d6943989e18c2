#![allow(dead_code)]

use harso_core::fixtures::tiny_instance;
use harso_core::recourse::ChargeModes;
use harso_core::{FirstStageDecision, PlanningInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Random tiny instance: T in 3..=6, Y in 1..=2, S in 1..=2, J in 1..=2,
/// with prices, demand, deviations and PV perturbed from the synthetic base.
pub fn random_instance(seed: u64, max_budget: usize) -> PlanningInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hours = rng.random_range(3..=6);
    let years = rng.random_range(1..=2);
    let scenarios = rng.random_range(1..=2);
    let techs = rng.random_range(1..=2);
    let mut inst = tiny_instance(hours, years, scenarios, techs);

    let sell = rng.random_range(0.0..0.08);
    inst.tariff.buy_price = (0..hours).map(|_| rng.random_range(0.1..0.4)).collect();
    inst.tariff.sell_price = vec![sell; hours];
    let scale = rng.random_range(0.7..1.3);
    let frac = rng.random_range(0.1..0.4);
    inst.demand.nominal = inst.demand.nominal.map(|d| d * scale);
    inst.demand.deviation = inst.demand.nominal.map(|d| d * frac);
    for p in &mut inst.pv.profiles {
        let damp = rng.random_range(0.6..1.0);
        *p = p.map(|x| (x * damp).clamp(0.0, 1.0));
    }
    inst.demand.budget = rng.random_range(0..=max_budget.min(hours)) as f64;
    inst.ensure_valid().expect("random instance is valid");
    inst
}

/// Random but feasible first stage for `inst`.
pub fn random_first_stage(inst: &PlanningInstance, seed: u64) -> FirstStageDecision {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut d = FirstStageDecision::empty(inst, true);
    d.pv_capacity = rng.random_range(0.0..inst.config.pv_cap_max);
    if rng.random_bool(0.8) {
        let j = rng.random_range(0..inst.techs());
        d.tech_selected[j] = true;
        d.bess_capacity[j] = rng.random_range(0.0..inst.config.bess_cap_max);
        let flags: Vec<bool> = (0..inst.hours() * inst.years() * inst.scenarios())
            .map(|_| rng.random_bool(0.5))
            .collect();
        let (hours, years) = (inst.hours(), inst.years());
        d.charge_mode = ChargeModes::from_fn(inst.techs(), hours, years, inst.scenarios(), |jj, t, y, s| {
            jj == j && flags[(s * years + y) * hours + t]
        });
    }
    d
}
