//! Input preparation: compound-growth demand projection, ARMA-perturbed PV
//! scenarios, demand intervals from an hourly ensemble, and degradation tables.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{DemandUncertainty, HourlyMatrix, PlanningInstance, PvScenarioSet, Tariff, TimeGrid};
use crate::error::{HarsoError, Result};
use crate::par::Execution;

const ARMA_BURN_IN: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandForecast {
    /// Base-year hourly demand, kWh.
    pub base_profile: Vec<f64>,
    /// Compound annual growth rate.
    pub growth_rate: f64,
    pub horizon: usize,
}

/// `D_y = D_0 · (1 + r)^y` for `y = 1..=horizon`; row `y - 1` holds year `y`.
pub fn project_demand(forecast: &DemandForecast) -> Result<HourlyMatrix> {
    if !(forecast.growth_rate > -1.0) {
        return Err(HarsoError::InvalidInput(format!(
            "growth rate {} must exceed -1",
            forecast.growth_rate
        )));
    }
    if forecast.base_profile.iter().any(|d| !(*d >= 0.0)) {
        return Err(HarsoError::InvalidInput("base profile has negative demand".into()));
    }
    let growth = 1.0 + forecast.growth_rate;
    Ok(HourlyMatrix::from_fn(
        forecast.horizon,
        forecast.base_profile.len(),
        |y, t| forecast.base_profile[t] * growth.powi(y as i32 + 1),
    ))
}

/// Least-squares fit of `ln D` against year; the slope gives `r = e^b - 1`.
/// With two anchors this is the closed-form compound growth rate.
pub fn fit_growth_rate(anchors: &[(f64, f64)]) -> Result<f64> {
    if anchors.len() < 2 {
        return Err(HarsoError::InvalidInput("need at least two anchors".into()));
    }
    if anchors.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(HarsoError::InvalidInput("anchor years must strictly increase".into()));
    }
    if let Some(&(year, d)) = anchors.iter().find(|(_, d)| !(*d > 0.0)) {
        return Err(HarsoError::InvalidInput(format!(
            "non-positive demand {d} at year {year}"
        )));
    }
    let n = anchors.len() as f64;
    let mean_x = anchors.iter().map(|a| a.0).sum::<f64>() / n;
    let mean_y = anchors.iter().map(|a| a.1.ln()).sum::<f64>() / n;
    let sxy: f64 = anchors.iter().map(|a| (a.0 - mean_x) * (a.1.ln() - mean_y)).sum();
    let sxx: f64 = anchors.iter().map(|a| (a.0 - mean_x).powi(2)).sum();
    Ok((sxy / sxx).exp() - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaSpec {
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
    #[serde(default)]
    pub night_hours: Vec<usize>,
}

impl ArmaSpec {
    /// ARMA(1,1) with the given coefficients.
    pub fn arma11(ar: f64, ma: f64, noise_std: f64, seed: u64) -> Self {
        Self {
            ar_coeffs: vec![ar],
            ma_coeffs: vec![ma],
            noise_std,
            seed,
            night_hours: Vec::new(),
        }
    }

    pub fn is_stationary(&self) -> bool {
        ar_is_stationary(&self.ar_coeffs)
    }
}

/// Roots of `1 - Σ φ_i z^i` outside the unit circle, checked through the
/// step-down recursion: every partial autocorrelation must lie in (-1, 1).
pub fn ar_is_stationary(ar: &[f64]) -> bool {
    let mut a = ar.to_vec();
    while let Some(&kappa) = a.last() {
        if !(kappa.abs() < 1.0) {
            return false;
        }
        let p = a.len();
        let denom = 1.0 - kappa * kappa;
        let next: Vec<f64> = (0..p - 1).map(|i| (a[i] + kappa * a[p - 2 - i]) / denom).collect();
        a = next;
    }
    true
}

/// One ARMA sample path of length `len` after a burn-in.
pub fn arma_path(spec: &ArmaSpec, len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !spec.is_stationary() {
        return Err(HarsoError::InvalidInput(format!(
            "AR coefficients {:?} are not stationary",
            spec.ar_coeffs
        )));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(HarsoError::InvalidInput(format!(
            "noise std {} is negative",
            spec.noise_std
        )));
    }
    if spec.noise_std == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let normal =
        Normal::new(0.0, spec.noise_std).map_err(|e| HarsoError::InvalidInput(format!("noise distribution: {e}")))?;
    let p = spec.ar_coeffs.len();
    let q = spec.ma_coeffs.len();
    let total = ARMA_BURN_IN + len;
    let mut x = vec![0.0; total];
    let mut eps = vec![0.0; total];
    for t in 0..total {
        eps[t] = normal.sample(rng);
        let mut v = eps[t];
        for i in 1..=p.min(t) {
            v += spec.ar_coeffs[i - 1] * x[t - i];
        }
        for i in 1..=q.min(t) {
            v += spec.ma_coeffs[i - 1] * eps[t - i];
        }
        x[t] = v;
    }
    Ok(x.split_off(ARMA_BURN_IN))
}

/// Sample autocorrelation at `lag`.
pub fn autocorrelation(series: &[f64], lag: usize) -> f64 {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    let cov: f64 = (lag..n).map(|t| (series[t] - mean) * (series[t - lag] - mean)).sum();
    cov / var
}

/// Each scenario is its seasonal shape times `1 + noise` along one ARMA path
/// spanning every year, clipped to [0, 1] and zeroed at night hours. Scenario
/// `s` draws from seed `seed ^ s`.
pub fn sample_pv_scenarios(
    spec: &ArmaSpec,
    seasonal_shapes: &[Vec<f64>],
    grid: TimeGrid,
    exec: Execution,
) -> Result<PvScenarioSet> {
    if !spec.is_stationary() {
        return Err(HarsoError::InvalidInput(format!(
            "AR coefficients {:?} are not stationary",
            spec.ar_coeffs
        )));
    }
    for (s, shape) in seasonal_shapes.iter().enumerate() {
        if shape.len() != grid.hours_per_day {
            return Err(HarsoError::Dimension(format!(
                "shape {s} has {} hours, grid has {}",
                shape.len(),
                grid.hours_per_day
            )));
        }
        if shape.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(HarsoError::InvalidInput(format!("shape {s} leaves [0, 1]")));
        }
    }
    let jobs: Vec<(usize, &Vec<f64>)> = seasonal_shapes.iter().enumerate().collect();
    let profiles = exec.map(jobs, |(s, shape)| -> Result<HourlyMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ s as u64);
        let path = arma_path(spec, grid.years * grid.hours_per_day, &mut rng)?;
        Ok(HourlyMatrix::from_fn(grid.years, grid.hours_per_day, |y, t| {
            if spec.night_hours.contains(&t) {
                0.0
            } else {
                (shape[t] * (1.0 + path[y * grid.hours_per_day + t])).clamp(0.0, 1.0)
            }
        }))
    });
    let profiles = profiles.into_iter().collect::<Result<Vec<_>>>()?;
    let mut set = PvScenarioSet::uniform(profiles);
    set.night_hours = spec.night_hours.clone();
    Ok(set)
}

/// Interval per (year, hour) from an ensemble of daily profiles:
/// nominal is the mean, deviation the larger one-sided range.
/// `history[y][d][t]` is day `d` of year `y`.
pub fn extract_demand_intervals(history: &[Vec<Vec<f64>>], budget: f64) -> Result<DemandUncertainty> {
    let hours = history
        .iter()
        .flat_map(|days| days.first())
        .map(Vec::len)
        .next()
        .unwrap_or(0);
    let mut nominal = HourlyMatrix::zeros(history.len(), hours);
    let mut deviation = HourlyMatrix::zeros(history.len(), hours);
    for (y, days) in history.iter().enumerate() {
        if days.is_empty() {
            return Err(HarsoError::InvalidInput(format!("year {} has no days", y + 1)));
        }
        if days.iter().any(|d| d.len() != hours) {
            return Err(HarsoError::Dimension(format!("year {} has ragged days", y + 1)));
        }
        for t in 0..hours {
            let values = days.iter().map(|d| d[t]);
            let mean = values.clone().sum::<f64>() / days.len() as f64;
            let lo = values.clone().fold(f64::INFINITY, f64::min);
            let hi = values.fold(f64::NEG_INFINITY, f64::max);
            nominal.set(y, t, mean);
            deviation.set(y, t, (mean - lo).max(hi - mean).max(0.0));
        }
    }
    Ok(DemandUncertainty {
        nominal,
        deviation,
        budget,
    })
}

/// Reads `tech,year,soh` rows. Years must run 1, 2, ... per technology, each
/// SOH in (0, 1] and never rising.
pub fn ingest_degradation<R: Read>(reader: R) -> Result<BTreeMap<String, Vec<f64>>> {
    #[derive(Deserialize)]
    struct Row {
        tech: String,
        year: usize,
        soh: f64,
    }
    let mut table: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(reader);
    for row in rdr.deserialize() {
        let row: Row = row?;
        let series = table.entry(row.tech.clone()).or_default();
        if row.year != series.len() + 1 {
            return Err(HarsoError::InvalidInput(format!(
                "tech `{}`: year {} out of sequence (expected {})",
                row.tech,
                row.year,
                series.len() + 1
            )));
        }
        if !(row.soh > 0.0 && row.soh <= 1.0) {
            return Err(HarsoError::InvalidInput(format!(
                "tech `{}`: soh {} at year {} outside (0, 1]",
                row.tech, row.soh, row.year
            )));
        }
        if let Some(&prev) = series.last() {
            if row.soh > prev {
                return Err(HarsoError::InvalidInput(format!(
                    "tech `{}`: soh rises from {prev} to {} at year {}",
                    row.tech, row.soh, row.year
                )));
            }
        }
        series.push(row.soh);
    }
    Ok(table)
}

/// Stores ingested SOH series on the matching batteries.
pub fn apply_degradation(inst: &mut PlanningInstance, table: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    for b in &mut inst.batteries {
        let series = table
            .get(&b.id)
            .ok_or_else(|| HarsoError::InvalidInput(format!("no degradation table for `{}`", b.id)))?;
        if series.len() < inst.grid.years {
            return Err(HarsoError::Dimension(format!(
                "`{}` has {} years of SOH, horizon is {}",
                b.id,
                series.len(),
                inst.grid.years
            )));
        }
        b.soh_by_year = series[..inst.grid.years].to_vec();
    }
    Ok(())
}

pub fn write_degradation<W: Write>(inst: &PlanningInstance, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tech", "year", "soh"])?;
    for b in &inst.batteries {
        for (y, soh) in b.soh_by_year.iter().enumerate() {
            w.write_record([b.id.clone(), (y + 1).to_string(), soh.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `hour,kwh`
pub fn read_base_profile<R: Read>(reader: R) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    struct Row {
        hour: usize,
        kwh: f64,
    }
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: Row = row?;
        if row.hour != out.len() {
            return Err(HarsoError::InvalidInput(format!("hour {} out of sequence", row.hour)));
        }
        out.push(row.kwh);
    }
    Ok(out)
}

/// `scenario,hour,frac`
pub fn read_pv_shapes<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    #[derive(Deserialize)]
    struct Row {
        scenario: usize,
        hour: usize,
        frac: f64,
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: Row = row?;
        if row.scenario == out.len() {
            out.push(Vec::new());
        }
        let shape = out
            .get_mut(row.scenario)
            .filter(|s| s.len() == row.hour)
            .ok_or_else(|| {
                HarsoError::InvalidInput(format!("scenario {} hour {} out of sequence", row.scenario, row.hour))
            })?;
        shape.push(row.frac);
    }
    Ok(out)
}

/// `hour,buy,sell`
pub fn read_tariff<R: Read>(reader: R) -> Result<Tariff> {
    #[derive(Deserialize)]
    struct Row {
        hour: usize,
        buy: f64,
        sell: f64,
    }
    let mut tariff = Tariff {
        buy_price: Vec::new(),
        sell_price: Vec::new(),
    };
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: Row = row?;
        if row.hour != tariff.buy_price.len() {
            return Err(HarsoError::InvalidInput(format!("hour {} out of sequence", row.hour)));
        }
        tariff.buy_price.push(row.buy);
        tariff.sell_price.push(row.sell);
    }
    Ok(tariff)
}

pub fn write_tariff<W: Write>(tariff: &Tariff, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["hour", "buy", "sell"])?;
    for (t, (b, s)) in tariff.buy_price.iter().zip(&tariff.sell_price).enumerate() {
        w.write_record([t.to_string(), b.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `year,hour,nominal,deviation`
pub fn write_demand_intervals<W: Write>(demand: &DemandUncertainty, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["year", "hour", "nominal", "deviation"])?;
    for (y, t, nom) in demand.nominal.iter() {
        w.write_record([
            (y + 1).to_string(),
            t.to_string(),
            nom.to_string(),
            demand.deviation.get(y, t).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_demand_intervals<R: Read>(reader: R, budget: f64) -> Result<DemandUncertainty> {
    #[derive(Deserialize)]
    struct Row {
        year: usize,
        hour: usize,
        nominal: f64,
        deviation: f64,
    }
    let mut nominal: Vec<Vec<f64>> = Vec::new();
    let mut deviation: Vec<Vec<f64>> = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: Row = row?;
        if row.year == nominal.len() + 1 {
            nominal.push(Vec::new());
            deviation.push(Vec::new());
        }
        match nominal.len().checked_sub(1) {
            Some(y) if y + 1 == row.year && nominal[y].len() == row.hour => {
                nominal[y].push(row.nominal);
                deviation[y].push(row.deviation);
            }
            _ => {
                return Err(HarsoError::InvalidInput(format!(
                    "year {} hour {} out of sequence",
                    row.year, row.hour
                )))
            }
        }
    }
    Ok(DemandUncertainty {
        nominal: HourlyMatrix(nominal),
        deviation: HourlyMatrix(deviation),
        budget,
    })
}

/// `scenario,year,hour,frac` with an optional `probability` column
/// (`scenario,probability` rows go to a separate file; see `write_probabilities`).
pub fn write_scenarios<W: Write>(set: &PvScenarioSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "year", "hour", "frac"])?;
    for (s, prof) in set.profiles.iter().enumerate() {
        for (y, t, v) in prof.iter() {
            w.write_record([s.to_string(), (y + 1).to_string(), t.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a scenario tensor; weights default to uniform.
pub fn read_scenarios<R: Read>(reader: R) -> Result<PvScenarioSet> {
    #[derive(Deserialize)]
    struct Row {
        scenario: usize,
        year: usize,
        hour: usize,
        frac: f64,
    }
    let mut profiles: Vec<Vec<Vec<f64>>> = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: Row = row?;
        if row.scenario == profiles.len() {
            profiles.push(Vec::new());
        }
        let years = profiles
            .get_mut(row.scenario)
            .ok_or_else(|| HarsoError::InvalidInput(format!("scenario {} out of sequence", row.scenario)))?;
        if row.year == years.len() + 1 {
            years.push(Vec::new());
        }
        match years.len().checked_sub(1) {
            Some(y) if y + 1 == row.year && years[y].len() == row.hour => years[y].push(row.frac),
            _ => {
                return Err(HarsoError::InvalidInput(format!(
                    "scenario {} year {} hour {} out of sequence",
                    row.scenario, row.year, row.hour
                )))
            }
        }
    }
    Ok(PvScenarioSet::uniform(profiles.into_iter().map(HourlyMatrix).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cagr_ten_years_at_two_percent() {
        let d = project_demand(&DemandForecast {
            base_profile: vec![100.0],
            growth_rate: 0.02,
            horizon: 10,
        })
        .unwrap();
        assert!((d.get(9, 0) - 121.899).abs() < 1e-3);
    }

    #[test]
    fn zero_growth_repeats_base() {
        let base = vec![1.0, 2.5, 0.0];
        let d = project_demand(&DemandForecast {
            base_profile: base.clone(),
            growth_rate: 0.0,
            horizon: 4,
        })
        .unwrap();
        assert!(d.0.iter().all(|row| *row == base));
    }

    #[test]
    fn growth_rate_round_trips_anchor() {
        let r = fit_growth_rate(&[(0.0, 100.0), (5.0, 110.0)]).unwrap();
        assert!((r - (1.1f64.powf(0.2) - 1.0)).abs() < 1e-12);
        assert!((r - 0.01924).abs() < 1e-5);
        let d = project_demand(&DemandForecast {
            base_profile: vec![100.0],
            growth_rate: r,
            horizon: 5,
        })
        .unwrap();
        assert!((d.get(4, 0) - 110.0).abs() < 1e-9);
    }

    #[test]
    fn doubling_over_a_decade() {
        let r = fit_growth_rate(&[(0.0, 100.0), (10.0, 200.0)]).unwrap();
        assert!((r - (2f64.powf(0.1) - 1.0)).abs() < 1e-12);
        assert!((r - 0.07177).abs() < 1e-5);
    }

    #[test]
    fn flat_series_has_zero_growth() {
        let r = fit_growth_rate(&[(0.0, 100.0), (5.0, 100.0), (10.0, 100.0)]).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn regression_matches_grid_search() {
        let anchors = [(0.0, 100.0), (5.0, 115.0), (15.0, 160.0)];
        let r = fit_growth_rate(&anchors).unwrap();
        // brute force: minimize Σ (ln D - ln D0 - y·ln(1+r))² over r with the
        // intercept profiled out
        let sse = |rate: f64| {
            let b = (1.0 + rate).ln();
            let a = anchors.iter().map(|(y, d)| d.ln() - b * y).sum::<f64>() / anchors.len() as f64;
            anchors.iter().map(|(y, d)| (d.ln() - a - b * y).powi(2)).sum::<f64>()
        };
        let (mut best, mut best_sse) = (0.0, f64::INFINITY);
        for i in 0..=200_000 {
            let cand = i as f64 * 1e-6;
            let e = sse(cand);
            if e < best_sse {
                best_sse = e;
                best = cand;
            }
        }
        assert!((r - best).abs() < 2e-6, "fit {r} grid {best}");
        // residuals orthogonal to the year column
        let b = (1.0 + r).ln();
        let a = anchors.iter().map(|(y, d)| d.ln() - b * y).sum::<f64>() / 3.0;
        let dot: f64 = anchors.iter().map(|(y, d)| (d.ln() - a - b * y) * y).sum();
        assert!(dot.abs() < 1e-10);
    }

    #[test]
    fn fit_rejects_bad_anchors() {
        assert!(fit_growth_rate(&[(0.0, 100.0)]).is_err());
        assert!(fit_growth_rate(&[(0.0, 100.0), (5.0, 0.0)]).is_err());
        assert!(fit_growth_rate(&[(5.0, 100.0), (5.0, 110.0)]).is_err());
    }

    #[test]
    fn stationarity_check() {
        assert!(ar_is_stationary(&[0.7]));
        assert!(!ar_is_stationary(&[1.0]));
        assert!(!ar_is_stationary(&[-1.2]));
        assert!(ar_is_stationary(&[0.5, 0.3]));
        assert!(ar_is_stationary(&[1.2, -0.5]));
        assert!(!ar_is_stationary(&[0.6, 0.5]));
        assert!(!ar_is_stationary(&[0.2, 1.1]));
        assert!(ar_is_stationary(&[]));
    }

    #[test]
    fn non_stationary_spec_rejected() {
        let spec = ArmaSpec::arma11(1.05, 0.0, 0.1, 1);
        let grid = TimeGrid {
            hours_per_day: 4,
            years: 1,
        };
        assert!(sample_pv_scenarios(&spec, &[vec![0.5; 4]], grid, Execution::Sequential).is_err());
    }

    #[test]
    fn zero_noise_reproduces_shapes() {
        let spec = ArmaSpec::arma11(0.7, 0.2, 0.0, 9);
        let shapes = vec![vec![0.0, 0.3, 0.9, 0.1], vec![0.0, 0.5, 1.0, 0.2]];
        let grid = TimeGrid {
            hours_per_day: 4,
            years: 3,
        };
        let set = sample_pv_scenarios(&spec, &shapes, grid, Execution::Sequential).unwrap();
        for (s, prof) in set.profiles.iter().enumerate() {
            for y in 0..3 {
                assert_eq!(prof.0[y], shapes[s]);
            }
        }
        assert_eq!(set.probabilities, vec![0.5, 0.5]);
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let mut spec = ArmaSpec::arma11(0.7, 0.2, 0.15, 42);
        spec.night_hours = vec![0, 1];
        let shapes = vec![vec![0.0, 0.0, 0.8, 0.6]; 3];
        let grid = TimeGrid {
            hours_per_day: 4,
            years: 5,
        };
        let a = sample_pv_scenarios(&spec, &shapes, grid, Execution::Sequential).unwrap();
        let b = sample_pv_scenarios(&spec, &shapes, grid, Execution::Parallel).unwrap();
        let bits = |set: &PvScenarioSet| -> Vec<u64> {
            set.profiles
                .iter()
                .flat_map(|p| p.iter().map(|(_, _, v)| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert!(a
            .profiles
            .iter()
            .all(|p| (0..5).all(|y| p.get(y, 0) == 0.0 && p.get(y, 1) == 0.0)));
    }

    #[test]
    fn arma11_lag_one_autocorrelation() {
        let (phi, theta) = (0.7, 0.2);
        let spec = ArmaSpec::arma11(phi, theta, 0.1, 2024);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let path = arma_path(&spec, 10_000, &mut rng).unwrap();
        let analytic = (1.0 + phi * theta) * (phi + theta) / (1.0 + 2.0 * phi * theta + theta * theta);
        assert!((analytic - 0.7773).abs() < 1e-4);
        let sample = autocorrelation(&path, 1);
        assert!((sample - analytic).abs() < 0.05, "sample {sample} analytic {analytic}");
    }

    #[test]
    fn constant_history_has_no_deviation() {
        let hist = vec![vec![vec![2.0, 3.0]; 5]; 2];
        let d = extract_demand_intervals(&hist, 1.0).unwrap();
        assert!(d.deviation.iter().all(|(_, _, v)| v == 0.0));
        assert_eq!(d.nominal.0, vec![vec![2.0, 3.0]; 2]);
    }

    #[test]
    fn interval_arithmetic_single_hour() {
        let hist = vec![vec![vec![2.0], vec![4.0], vec![9.0]]];
        let d = extract_demand_intervals(&hist, 0.0).unwrap();
        assert_eq!(d.nominal.get(0, 0), 5.0);
        assert_eq!(d.deviation.get(0, 0), 4.0);
    }

    #[test]
    fn empty_year_rejected() {
        let hist = vec![vec![vec![1.0, 1.0]], vec![]];
        assert!(extract_demand_intervals(&hist, 0.0).is_err());
    }

    #[test]
    fn degradation_tables() {
        let sl = "tech,year,soh\nsl,1,0.70\nsl,2,0.66\nsl,3,0.61\n";
        let t = ingest_degradation(sl.as_bytes()).unwrap();
        assert_eq!(t["sl"], vec![0.70, 0.66, 0.61]);
        let fl = "tech,year,soh\nfl,1,1.00\nfl,2,0.98\n";
        assert_eq!(ingest_degradation(fl.as_bytes()).unwrap()["fl"], vec![1.0, 0.98]);
        let rising = "tech,year,soh\nx,1,0.9\nx,2,0.88\nx,3,0.87\nx,4,0.89\n";
        assert!(ingest_degradation(rising.as_bytes()).is_err());
        let gap = "tech,year,soh\nx,1,0.9\nx,3,0.88\n";
        assert!(ingest_degradation(gap.as_bytes()).is_err());
        let over = "tech,year,soh\nx,1,1.2\n";
        assert!(ingest_degradation(over.as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let tariff = Tariff {
            buy_price: vec![0.2, 0.31, 0.123456789],
            sell_price: vec![0.05, 0.0, 0.1],
        };
        let mut buf = Vec::new();
        write_tariff(&tariff, &mut buf).unwrap();
        assert_eq!(read_tariff(buf.as_slice()).unwrap(), tariff);

        let demand = DemandUncertainty {
            nominal: HourlyMatrix(vec![vec![1.0, 2.0], vec![1.5, 2.5]]),
            deviation: HourlyMatrix(vec![vec![0.1, 0.2], vec![0.3, 1.0 / 3.0]]),
            budget: 1.0,
        };
        let mut buf = Vec::new();
        write_demand_intervals(&demand, &mut buf).unwrap();
        assert_eq!(read_demand_intervals(buf.as_slice(), 1.0).unwrap(), demand);

        let set = PvScenarioSet::uniform(vec![
            HourlyMatrix(vec![vec![0.0, 0.7], vec![0.1, 0.2]]),
            HourlyMatrix(vec![vec![0.0, 0.9], vec![0.3, 0.4]]),
        ]);
        let mut buf = Vec::new();
        write_scenarios(&set, &mut buf).unwrap();
        assert_eq!(read_scenarios(buf.as_slice()).unwrap(), set);
    }

    #[test]
    fn shape_and_profile_readers() {
        let shapes = read_pv_shapes("scenario,hour,frac\n0,0,0\n0,1,0.5\n1,0,0\n1,1,0.8\n".as_bytes()).unwrap();
        assert_eq!(shapes, vec![vec![0.0, 0.5], vec![0.0, 0.8]]);
        let base = read_base_profile("hour,kwh\n0,0.4\n1,0.6\n".as_bytes()).unwrap();
        assert_eq!(base, vec![0.4, 0.6]);
        assert!(read_base_profile("hour,kwh\n1,0.4\n".as_bytes()).is_err());
    }
}
