//! Problem data for the sizing model: time grid, tariffs, PV scenarios, demand
//! uncertainty set, battery catalog and system caps.
//!
//! Every matrix is stored year-major: `m.get(y, t)` with `y` in `0..years` and
//! `t` in `0..hours_per_day`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarsoError, Result};

/// Default initial and final SOC fraction for the daily boundary conditions.
pub const DEFAULT_SOC_BOUNDARY: f64 = 0.25;

const PROBABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub hours_per_day: usize,
    pub years: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            hours_per_day: 24,
            years: 1,
        }
    }
}

/// Year-by-hour matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HourlyMatrix(pub Vec<Vec<f64>>);

impl HourlyMatrix {
    pub fn zeros(years: usize, hours: usize) -> Self {
        Self(vec![vec![0.0; hours]; years])
    }

    pub fn filled(years: usize, hours: usize, value: f64) -> Self {
        Self(vec![vec![value; hours]; years])
    }

    pub fn from_fn(years: usize, hours: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self((0..years).map(|y| (0..hours).map(|t| f(y, t)).collect()).collect())
    }

    pub fn years(&self) -> usize {
        self.0.len()
    }

    /// Hours of the first year; `is_rectangular` checks the rest.
    pub fn hours(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    pub fn is_rectangular(&self) -> bool {
        let h = self.hours();
        self.0.iter().all(|row| row.len() == h)
    }

    pub fn has_shape(&self, years: usize, hours: usize) -> bool {
        self.years() == years && self.0.iter().all(|row| row.len() == hours)
    }

    #[inline]
    pub fn get(&self, y: usize, t: usize) -> f64 {
        self.0[y][t]
    }

    #[inline]
    pub fn set(&mut self, y: usize, t: usize, v: f64) {
        self.0[y][t] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(y, row)| row.iter().enumerate().map(move |(t, &v)| (y, t, v)))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|row| row.iter().map(|&v| f(v)).collect()).collect())
    }

    pub fn year(&self, y: usize) -> Self {
        Self(vec![self.0[y].clone()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    pub buy_price: Vec<f64>,
    pub sell_price: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvScenarioSet {
    /// One year-by-hour matrix per scenario, in kW per installed kW.
    pub profiles: Vec<HourlyMatrix>,
    /// Scenario weights; an empty list in the input file means uniform.
    #[serde(default)]
    pub probabilities: Vec<f64>,
    /// Hours where every profile must be exactly zero.
    #[serde(default)]
    pub night_hours: Vec<usize>,
}

impl PvScenarioSet {
    pub fn uniform(profiles: Vec<HourlyMatrix>) -> Self {
        let n = profiles.len();
        Self {
            profiles,
            probabilities: vec![1.0 / n as f64; n],
            night_hours: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Fills uniform weights when none were given.
    pub fn normalize_defaults(&mut self) {
        if self.probabilities.is_empty() && !self.profiles.is_empty() {
            let n = self.profiles.len();
            self.probabilities = vec![1.0 / n as f64; n];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandUncertainty {
    pub nominal: HourlyMatrix,
    pub deviation: HourlyMatrix,
    /// Budget of uncertainty: deviating hours allowed per year.
    pub budget: f64,
}

impl DemandUncertainty {
    /// `nominal + Δ·(v⁺ − v⁻)`.
    pub fn realization(&self, y: usize, t: usize, plus: bool, minus: bool) -> f64 {
        let d = self.deviation.get(y, t);
        self.nominal.get(y, t) + if plus { d } else { 0.0 } - if minus { d } else { 0.0 }
    }
}

fn default_soc_boundary() -> f64 {
    DEFAULT_SOC_BOUNDARY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryTech {
    pub id: String,
    /// Investment cost per kWh installed.
    pub invest_cost: f64,
    /// Operating cost per kWh discharged.
    pub op_cost: f64,
    /// State of health per year, the capacity derating factor.
    pub soh_by_year: Vec<f64>,
    pub soc_min_frac: f64,
    pub soc_max_frac: f64,
    pub efficiency: f64,
    /// Charge and discharge power limit, kW.
    pub power_rate: f64,
    #[serde(default = "default_soc_boundary")]
    pub soc_initial_frac: f64,
    #[serde(default = "default_soc_boundary")]
    pub soc_final_frac: f64,
}

impl BatteryTech {
    /// Second-life packs start below full health.
    pub fn is_second_life(&self) -> bool {
        self.soh_by_year.first().is_some_and(|&s| s < 1.0)
    }

    /// Invest cost per kWh of usable capacity summed over the horizon.
    pub fn invest_cost_per_usable_kwh_year(&self) -> f64 {
        let usable: f64 = self
            .soh_by_year
            .iter()
            .map(|soh| soh * (self.soc_max_frac - self.soc_min_frac))
            .sum();
        if usable > 0.0 {
            self.invest_cost / usable
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// PV investment cost per kW.
    pub pv_invest_cost: f64,
    /// PV operating cost per kWh generated.
    pub pv_op_cost: f64,
    pub pv_cap_max: f64,
    pub bess_cap_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningInstance {
    pub grid: TimeGrid,
    pub tariff: Tariff,
    pub pv: PvScenarioSet,
    pub demand: DemandUncertainty,
    pub batteries: Vec<BatteryTech>,
    pub config: SystemConfig,
}

impl PlanningInstance {
    pub fn hours(&self) -> usize {
        self.grid.hours_per_day
    }

    pub fn years(&self) -> usize {
        self.grid.years
    }

    pub fn scenarios(&self) -> usize {
        self.pv.len()
    }

    pub fn techs(&self) -> usize {
        self.batteries.len()
    }

    pub fn budget(&self) -> f64 {
        self.demand.budget
    }

    pub fn max_power_rate(&self) -> f64 {
        self.batteries.iter().map(|b| b.power_rate).fold(0.0, f64::max)
    }

    pub fn with_budget(&self, budget: f64) -> Self {
        let mut out = self.clone();
        out.demand.budget = budget;
        out
    }

    /// Keeps the first `count` scenarios with their weights renormalized.
    pub fn with_scenario_count(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.scenarios() {
            return Err(HarsoError::InvalidInput(format!(
                "requested {count} scenarios, instance has {}",
                self.scenarios()
            )));
        }
        let mut out = self.clone();
        out.pv.profiles.truncate(count);
        out.pv.probabilities.truncate(count);
        let total: f64 = out.pv.probabilities.iter().sum();
        for p in &mut out.pv.probabilities {
            *p /= total;
        }
        Ok(out)
    }

    /// Keeps the first `count` years. Investment costs are quoted for the
    /// whole modeled horizon, so they are scaled by `count / Y`.
    pub fn with_years(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.years() {
            return Err(HarsoError::InvalidInput(format!(
                "requested {count} years, instance has {}",
                self.years()
            )));
        }
        let scale = count as f64 / self.years() as f64;
        let keep = |m: &HourlyMatrix| HourlyMatrix(m.0[..count].to_vec());
        let mut out = self.clone();
        out.grid.years = count;
        out.pv.profiles = self.pv.profiles.iter().map(keep).collect();
        out.demand.nominal = keep(&self.demand.nominal);
        out.demand.deviation = keep(&self.demand.deviation);
        for b in &mut out.batteries {
            b.soh_by_year.truncate(count);
            b.invest_cost *= scale;
        }
        out.config.pv_invest_cost *= scale;
        Ok(out)
    }

    /// Single-year sub-instance; every model decomposes by year once the first
    /// stage is fixed.
    pub fn year_slice(&self, y: usize) -> Self {
        let mut out = self.clone();
        out.grid.years = 1;
        out.pv.profiles = self.pv.profiles.iter().map(|p| p.year(y)).collect();
        out.demand.nominal = self.demand.nominal.year(y);
        out.demand.deviation = self.demand.deviation.year(y);
        for (b, orig) in out.batteries.iter_mut().zip(&self.batteries) {
            b.soh_by_year = vec![orig.soh_by_year[y]];
        }
        out
    }

    /// Valid lower bound on expected operational cost: at most full PV
    /// output plus one battery's power can be sold in any hour.
    pub fn theta_lower_bound(&self) -> f64 {
        let per_hour = self.config.pv_cap_max + self.max_power_rate();
        let sold: f64 = self
            .pv
            .probabilities
            .iter()
            .map(|rho| rho * self.tariff.sell_price.iter().sum::<f64>())
            .sum::<f64>()
            * self.years() as f64;
        -sold * per_hour
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let mut inst: PlanningInstance = serde_json::from_str(s)?;
        inst.pv.normalize_defaults();
        Ok(inst)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }

    /// Loads and rejects any instance with violations.
    pub fn load_validated(path: impl AsRef<Path>) -> Result<Self> {
        let inst = Self::load(path)?;
        inst.ensure_valid()?;
        Ok(inst)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(HarsoError::InvalidInstance(violations))
        }
    }
}

/// Lists every violated invariant; empty when the instance is consistent.
pub fn validate(inst: &PlanningInstance) -> Vec<String> {
    let mut v = Vec::new();
    let hours = inst.grid.hours_per_day;
    let years = inst.grid.years;

    if hours < 2 {
        v.push(format!("grid.hours_per_day {hours} < 2"));
    }
    if years < 1 {
        v.push("grid.years must be at least 1".to_string());
    }

    let tariff = &inst.tariff;
    for (field, prices) in [("buy_price", &tariff.buy_price), ("sell_price", &tariff.sell_price)] {
        if prices.len() != hours {
            v.push(format!(
                "tariff.{field} has {} entries, expected hours_per_day {hours}",
                prices.len()
            ));
        }
        if let Some((t, p)) = prices.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
            v.push(format!("tariff.{field}[{t}] = {p} is negative"));
        }
    }
    for (t, (b, s)) in tariff.buy_price.iter().zip(&tariff.sell_price).enumerate() {
        if b < s {
            v.push(format!("tariff buy_price[{t}] = {b} below sell_price[{t}] = {s}"));
        }
    }

    let pv = &inst.pv;
    if pv.profiles.is_empty() {
        v.push("pv.profiles is empty".to_string());
    }
    for (s, prof) in pv.profiles.iter().enumerate() {
        if !prof.has_shape(years, hours) {
            v.push(format!("pv.profiles[{s}] is not {years}x{hours}"));
            continue;
        }
        if let Some((y, t, x)) = prof.iter().find(|&(_, _, x)| !(0.0..=1.0).contains(&x)) {
            v.push(format!("pv.profiles[{s}][{y}][{t}] = {x} outside [0, 1]"));
        }
        for &t in &pv.night_hours {
            if t < hours && (0..years).any(|y| prof.get(y, t) != 0.0) {
                v.push(format!("pv.profiles[{s}] nonzero at night hour {t}"));
            }
        }
    }
    if pv.probabilities.len() != pv.profiles.len() {
        v.push(format!(
            "pv.probabilities has {} entries for {} scenarios",
            pv.probabilities.len(),
            pv.profiles.len()
        ));
    }
    if let Some((s, p)) = pv.probabilities.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
        v.push(format!("pv.probabilities[{s}] = {p} not strictly positive"));
    }
    let total: f64 = pv.probabilities.iter().sum();
    if !pv.probabilities.is_empty() && (total - 1.0).abs() > PROBABILITY_TOL {
        v.push(format!("probabilities sum {total} ≠ 1"));
    }

    let demand = &inst.demand;
    if !demand.nominal.has_shape(years, hours) {
        v.push(format!("demand.nominal is not {years}x{hours}"));
    }
    if !demand.deviation.has_shape(years, hours) {
        v.push(format!("demand.deviation is not {years}x{hours}"));
    }
    if demand.nominal.has_shape(years, hours) && demand.deviation.has_shape(years, hours) {
        for (y, t, d) in demand.deviation.iter() {
            if !(d >= 0.0) {
                v.push(format!("demand.deviation[{y}][{t}] = {d} is negative"));
            } else if demand.nominal.get(y, t) - d < 0.0 {
                v.push(format!(
                    "demand.nominal[{y}][{t}] - deviation = {} is negative",
                    demand.nominal.get(y, t) - d
                ));
            }
        }
    }
    if !(demand.budget >= 0.0) {
        v.push(format!("demand.budget {} is negative", demand.budget));
    } else if demand.budget > hours as f64 {
        v.push(format!("demand.budget {} exceeds hours_per_day {hours}", demand.budget));
    }

    if inst.batteries.is_empty() {
        v.push("batteries: at least one technology required".to_string());
    }
    let mut ids = std::collections::HashSet::new();
    for b in &inst.batteries {
        let id = &b.id;
        if !ids.insert(id.as_str()) {
            v.push(format!("battery `{id}`: duplicate id"));
        }
        if !(b.efficiency > 0.0 && b.efficiency <= 1.0) {
            v.push(format!("battery `{id}`: efficiency {} outside (0, 1]", b.efficiency));
        }
        if !(0.0 <= b.soc_min_frac && b.soc_min_frac < b.soc_max_frac && b.soc_max_frac <= 1.0) {
            v.push(format!(
                "battery `{id}`: soc bounds [{}, {}] violate 0 ≤ min < max ≤ 1",
                b.soc_min_frac, b.soc_max_frac
            ));
        }
        for (name, f) in [
            ("soc_initial_frac", b.soc_initial_frac),
            ("soc_final_frac", b.soc_final_frac),
        ] {
            if !(b.soc_min_frac <= f && f <= b.soc_max_frac) {
                v.push(format!("battery `{id}`: {name} {f} outside soc bounds"));
            }
        }
        if b.soh_by_year.len() != years {
            v.push(format!(
                "battery `{id}`: soh_by_year has {} entries for {years} years",
                b.soh_by_year.len()
            ));
        }
        if let Some(s) = b.soh_by_year.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            v.push(format!("battery `{id}`: soh {s} outside (0, 1]"));
        }
        if b.soh_by_year.windows(2).any(|w| w[1] > w[0]) {
            v.push(format!("battery `{id}`: soh_by_year is not nonincreasing"));
        }
        if !(b.invest_cost >= 0.0 && b.op_cost >= 0.0) {
            v.push(format!("battery `{id}`: negative cost"));
        }
        if !(b.power_rate >= 0.0) {
            v.push(format!("battery `{id}`: power_rate {} is negative", b.power_rate));
        }
    }

    let c = &inst.config;
    if !(c.pv_invest_cost >= 0.0 && c.pv_op_cost >= 0.0) {
        v.push("config: negative PV cost".to_string());
    }
    if !(c.pv_cap_max > 0.0) {
        v.push(format!("config.pv_cap_max {} must be positive", c.pv_cap_max));
    }
    if !(c.bess_cap_max > 0.0) {
        v.push(format!("config.bess_cap_max {} must be positive", c.bess_cap_max));
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn desk_fixture_is_valid() {
        assert_eq!(validate(&fixtures::desk_instance()), Vec::<String>::new());
    }

    #[test]
    fn probability_sum_violation() {
        let mut inst = fixtures::tiny_instance(4, 1, 3, 1);
        inst.pv.probabilities = vec![0.5, 0.5, 0.1];
        let v = validate(&inst);
        assert!(v.iter().any(|m| m.contains("probabilities sum 1.1 ≠ 1")), "{v:?}");
    }

    #[test]
    fn budget_bound_violation() {
        let inst = fixtures::desk_instance().with_budget(30.0);
        let v = validate(&inst);
        assert!(
            v.iter().any(|m| m.contains("budget 30 exceeds hours_per_day 24")),
            "{v:?}"
        );
    }

    #[test]
    fn arbitrage_tariff_rejected() {
        let mut inst = fixtures::tiny_instance(4, 1, 1, 1);
        inst.tariff.sell_price[2] = inst.tariff.buy_price[2] + 0.01;
        assert!(validate(&inst).iter().any(|m| m.contains("below sell_price[2]")));
    }

    #[test]
    fn soh_must_not_increase() {
        let mut inst = fixtures::tiny_instance(4, 2, 1, 1);
        inst.batteries[0].soh_by_year = vec![0.9, 0.95];
        assert!(validate(&inst).iter().any(|m| m.contains("not nonincreasing")));
    }

    #[test]
    fn negative_demand_floor_rejected() {
        let mut inst = fixtures::tiny_instance(4, 1, 1, 1);
        inst.demand.deviation.set(0, 1, inst.demand.nominal.get(0, 1) + 1.0);
        assert!(validate(&inst).iter().any(|m| m.contains("is negative")));
    }

    #[test]
    fn missing_probabilities_default_to_uniform() {
        let inst = fixtures::tiny_instance(3, 1, 2, 1);
        let mut json: serde_json::Value = serde_json::from_str(&inst.to_json_string().unwrap()).unwrap();
        json["pv"].as_object_mut().unwrap().remove("probabilities");
        let back = PlanningInstance::from_json_str(&json.to_string()).unwrap();
        assert_eq!(back.pv.probabilities, vec![0.5, 0.5]);
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let inst = fixtures::desk_instance();
        let first = inst.to_json_string().unwrap();
        let second = PlanningInstance::from_json_str(&first)
            .unwrap()
            .to_json_string()
            .unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn validate_is_pure() {
        let mut inst = fixtures::tiny_instance(4, 1, 3, 1);
        inst.pv.probabilities = vec![0.5, 0.5, 0.1];
        let before = inst.clone();
        assert_eq!(validate(&inst), validate(&inst));
        assert_eq!(inst, before);
    }

    #[test]
    fn year_slice_keeps_one_year() {
        let inst = fixtures::tiny_instance(4, 2, 2, 2);
        let s = inst.year_slice(1);
        assert_eq!(s.years(), 1);
        assert_eq!(s.demand.nominal.0[0], inst.demand.nominal.0[1]);
        assert_eq!(s.batteries[1].soh_by_year, vec![inst.batteries[1].soh_by_year[1]]);
        assert!(validate(&s).is_empty());
    }
}
