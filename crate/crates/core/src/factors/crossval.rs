use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_factor_model, mean_absolute_error, FactorError, FactorRow, FitOptions, ModelSpec};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecScore {
    pub spec: ModelSpec,
    /// Held-out MAE per region, computed even for infeasible fits.
    pub per_region: BTreeMap<String, f64>,
    /// Equal-weight mean of `per_region`.
    pub raw_mean_mae: f64,
    /// Regions whose fold produced a negative prediction somewhere on the grid.
    pub infeasible_folds: Vec<String>,
    /// `None` when any fold was infeasible.
    pub mean_mae: Option<f64>,
}

impl SpecScore {
    pub fn excluded(&self) -> bool {
        self.mean_mae.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub scores: Vec<SpecScore>,
    pub skipped_regions: Vec<String>,
}

impl CrossValidation {
    pub fn score(&self, spec: ModelSpec) -> Option<&SpecScore> {
        self.scores.iter().find(|s| s.spec == spec)
    }

    /// Lowest mean MAE among feasible specs.
    pub fn best(&self) -> Option<&SpecScore> {
        self.scores
            .iter()
            .filter(|s| !s.excluded())
            .min_by(|a, b| a.mean_mae.unwrap().total_cmp(&b.mean_mae.unwrap()))
    }
}

/// Leave-one-region-out cross-validation. Each fold trains on the other
/// regions' rows (concatenated in region-name order) and scores MAE on the
/// held-out region.
pub fn cross_validate(
    rows_by_region: &BTreeMap<String, Vec<FactorRow>>,
    specs: &[ModelSpec],
    opts: &FitOptions,
) -> Result<CrossValidation, FactorError> {
    let mut skipped = Vec::new();
    let mut regions = Vec::new();
    for (region, rows) in rows_by_region {
        if rows.is_empty() {
            log::warn!("region `{region}` has no rows; fold skipped");
            skipped.push(region.clone());
        } else {
            regions.push(region.as_str());
        }
    }
    if regions.len() < 2 {
        return Err(FactorError::TooFewRegions(regions.len()));
    }

    let jobs: Vec<(ModelSpec, &str)> = specs
        .iter()
        .flat_map(|&s| regions.iter().map(move |&r| (s, r)))
        .collect();
    let results: Vec<Result<(f64, bool), FactorError>> = jobs
        .par_iter()
        .map(|&(spec, held_out)| {
            let train_regions: Vec<String> = regions
                .iter()
                .filter(|&&r| r != held_out)
                .map(|r| r.to_string())
                .collect();
            let train: Vec<FactorRow> = train_regions
                .iter()
                .flat_map(|r| rows_by_region[r].iter().copied())
                .collect();
            let fold_opts = FitOptions {
                seed: rng::substream_seed(opts.seed, &format!("crossval/{spec}/{held_out}")),
                ..opts.clone()
            };
            let model = fit_factor_model(spec, &train, &train_regions, &fold_opts)?;
            Ok((mean_absolute_error(&model, &rows_by_region[held_out]), model.feasible))
        })
        .collect();

    let mut scores = Vec::new();
    for (chunk, &spec) in results.chunks(regions.len()).zip(specs) {
        let mut per_region = BTreeMap::new();
        let mut infeasible_folds = Vec::new();
        for (res, &region) in chunk.iter().zip(&regions) {
            let (mae, feasible) = res.clone()?;
            per_region.insert(region.to_string(), mae);
            if !feasible {
                infeasible_folds.push(region.to_string());
            }
        }
        let raw_mean_mae = per_region.values().sum::<f64>() / per_region.len() as f64;
        if !infeasible_folds.is_empty() {
            log::info!("{spec} excluded: negative predictions in folds {infeasible_folds:?}");
        }
        scores.push(SpecScore {
            spec,
            mean_mae: infeasible_folds.is_empty().then_some(raw_mean_mae),
            per_region,
            raw_mean_mae,
            infeasible_folds,
        });
    }
    Ok(CrossValidation {
        scores,
        skipped_regions: skipped,
    })
}
