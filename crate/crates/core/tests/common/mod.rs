#![allow(dead_code)]

use std::collections::BTreeMap;

use aadtt::counts::{normalize_station_years, HourlyCount};
use aadtt::factors::{rows_from_normalized, FactorRow, TimeKey};
use aadtt::synth::{gen_hourly, year_hours, Schedule, TrafficWorld};

/// E|N − λ| for N ~ Poisson(λ), summed from the pmf in log space.
pub fn poisson_mean_abs_dev(lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let upper = (lambda + 40.0 * lambda.sqrt() + 50.0) as u64;
    let ln_lambda = lambda.ln();
    let mut ln_fact = 0.0;
    let mut total = 0.0;
    for n in 0..=upper {
        if n > 0 {
            ln_fact += (n as f64).ln();
        }
        let ln_p = -lambda + n as f64 * ln_lambda - ln_fact;
        total += (n as f64 - lambda).abs() * ln_p.exp();
    }
    total
}

/// Expected MAE of the true factor against Poisson-noised normalized
/// counts, averaged over the hours of the world's year.
pub fn noise_floor(world: &TrafficWorld) -> f64 {
    let mu = world.aadtt_true / 24.0;
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    let (mut sum, mut n) = (0.0, 0usize);
    for t in year_hours(world.year) {
        let key = TimeKey::from_datetime(t);
        let d = *cache
            .entry(key.index())
            .or_insert_with(|| poisson_mean_abs_dev(mu * world.factor(key)) / mu);
        sum += d;
        n += 1;
    }
    sum / n as f64
}

pub fn factor_rows(counts: &[HourlyCount]) -> Vec<FactorRow> {
    normalize_station_years(counts)
        .into_iter()
        .flat_map(|(_, n)| rows_from_normalized(&n.expect("positive counts")))
        .collect()
}

pub fn region_counts(world: &TrafficWorld, region: &str, stations: usize, seed: u64) -> Vec<HourlyCount> {
    gen_hourly(world, region, stations, &Schedule::Full, seed).expect("valid world")
}
