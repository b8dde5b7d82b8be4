//! Logistic price discretization.
//!
//! Raw prices are mapped to a small number of levels per *category*,
//! because "cheap" and "expensive" only mean something relative to
//! comparable items. Instead of slicing the price range uniformly, the
//! default mode slices the CDF of a logistic distribution fitted to
//! the category's prices, so every level covers an equal share of the
//! probability mass and extreme prices do not crowd all items into a
//! couple of interior buckets. Uniform slicing is kept as an
//! alternative mode for comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ItemCatalog;
use crate::error::ConfigError;

/// Fitted logistic parameters and observed price range of a category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceStats {
    pub category: String,
    /// Mean of the distinct prices.
    pub mu: f64,
    /// Population standard deviation of the distinct prices; coerced
    /// to 1 when all prices are equal.
    pub delta: f64,
    pub min: f64,
    pub max: f64,
}

/// How raw prices map to levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceMode {
    /// Equal shares of logistic CDF mass (the default).
    Logistic,
    /// Equal shares of the raw price range.
    Uniform,
}

/// Fit [`PriceStats`] for every category over the *distinct* prices of
/// its items, so one heavily-observed item cannot skew the mean.
pub fn fit_price_stats(catalog: &ItemCatalog) -> BTreeMap<String, PriceStats> {
    let mut prices_by_category: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for item in &catalog.items {
        prices_by_category
            .entry(item.category)
            .or_default()
            .push(item.price);
    }
    let mut out = BTreeMap::new();
    for (cat, mut prices) in prices_by_category {
        prices.sort_by(|a, b| a.partial_cmp(b).expect("prices are finite"));
        prices.dedup();
        let n = prices.len() as f64;
        let mu = prices.iter().sum::<f64>() / n;
        let variance = prices.iter().map(|p| (p - mu).powi(2)).sum::<f64>() / n;
        let delta = variance.sqrt();
        let name = catalog.categories[cat].clone();
        out.insert(
            name.clone(),
            PriceStats {
                category: name,
                mu,
                delta: if delta == 0.0 { 1.0 } else { delta },
                min: prices[0],
                max: *prices.last().expect("non-empty category"),
            },
        );
    }
    out
}

/// CDF of the logistic distribution parameterized by mean `μ` and
/// standard deviation `δ`: `1 / (1 + exp(−π(x−μ)/(√3·δ)))`.
pub fn logistic_cdf(x: f64, stats: &PriceStats) -> f64 {
    let z = -std::f64::consts::PI * (x - stats.mu) / (3.0_f64.sqrt() * stats.delta);
    1.0 / (1.0 + z.exp())
}

/// Absolute slack when flooring a level fraction. A price exactly on a
/// mathematical bucket boundary can evaluate a few ulps below it in
/// floating point; nudging before the floor keeps such prices in the
/// upper bucket instead of making the level depend on rounding noise.
const BOUNDARY_EPS: f64 = 1e-9;

/// Price level in `[0, rho)` by equal CDF mass:
/// `⌊(Φ(x) − Φ(min)) / (Φ(max) − Φ(min)) × ρ⌋`, clamped into range. A
/// degenerate category (single price) maps to the middle level
/// `⌊ρ/2⌋`.
pub fn discretize_price(x: f64, stats: &PriceStats, rho: usize) -> Result<usize, ConfigError> {
    let (lo, hi) = (logistic_cdf(stats.min, stats), logistic_cdf(stats.max, stats));
    discretize_fraction(logistic_cdf(x, stats), lo, hi, rho)
}

/// Price level by equal shares of the raw range:
/// `⌊(x − min) / (max − min) × ρ⌋`, with the same clamping and
/// degenerate-category rules as [`discretize_price`].
pub fn discretize_price_uniform(
    x: f64,
    stats: &PriceStats,
    rho: usize,
) -> Result<usize, ConfigError> {
    discretize_fraction(x, stats.min, stats.max, rho)
}

fn discretize_fraction(value: f64, lo: f64, hi: f64, rho: usize) -> Result<usize, ConfigError> {
    if rho < 2 {
        return Err(ConfigError::Invalid(format!(
            "price level count must be at least 2, got {rho}"
        )));
    }
    if lo == hi {
        return Ok(rho / 2);
    }
    let fraction = (value - lo) / (hi - lo);
    let level = (fraction * rho as f64 + BOUNDARY_EPS).floor() as i64;
    Ok(level.clamp(0, rho as i64 - 1) as usize)
}

/// Fit stats and assign every item's price level in place.
pub fn assign_price_levels(
    catalog: &mut ItemCatalog,
    rho: usize,
    mode: PriceMode,
) -> Result<(), ConfigError> {
    let stats = fit_price_stats(catalog);
    for item in &mut catalog.items {
        let s = &stats[&catalog.categories[item.category]];
        item.price_level = match mode {
            PriceMode::Logistic => discretize_price(item.price, s, rho)?,
            PriceMode::Uniform => discretize_price_uniform(item.price, s, rho)?,
        };
    }
    catalog.price_levels = rho;
    catalog.stats = stats;
    Ok(())
}
