use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery_data::CellHistory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Cycles pooled across every cell and shuffled.
    RandomWindows,
    /// Whole cells assigned per charge-rate stratum.
    StratifiedCells,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::RandomWindows => "random",
            SplitMode::StratifiedCells => "stratified",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "random_windows" => Ok(SplitMode::RandomWindows),
            "stratified" | "stratified_cells" => Ok(SplitMode::StratifiedCells),
            other => Err(Error::Usage(format!("unknown split mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(mode: SplitMode, seed: u64) -> Self {
        Self {
            mode,
            train_fraction: 0.8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )))
        }
    }
}

/// `round(fraction * n)` (half away from zero), kept inside `1..=n-1`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Seeded shuffle, then the first [`train_count`] items go to train.
pub fn split_random<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    spec.validate()?;
    if items.len() < 2 {
        return Err(Error::Data(format!(
            "random split needs at least 2 items, got {}",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let k = train_count(items.len(), spec.train_fraction);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok((pick(&order[..k]), pick(&order[k..])))
}

/// Splits cell ids within each condition stratum. Strata are visited in
/// label order and cells sorted by id before the seeded shuffle, so the
/// assignment does not depend on input order.
pub fn split_stratified_ids(cells: &[(String, String)], spec: &SplitSpec) -> Result<(Vec<String>, Vec<String>)> {
    spec.validate()?;
    let mut strata: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, condition) in cells {
        strata.entry(condition.as_str()).or_default().push(id.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (condition, mut ids) in strata {
        if ids.len() < 2 {
            return Err(Error::Stratification(format!(
                "stratum {condition} has {} cell(s), need at least 2",
                ids.len()
            )));
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let k = train_count(ids.len(), spec.train_fraction);
        train.extend(ids[..k].iter().map(|s| s.to_string()));
        test.extend(ids[k..].iter().map(|s| s.to_string()));
    }
    Ok((train, test))
}

pub fn split_stratified(cells: &[CellHistory], spec: &SplitSpec) -> Result<(Vec<CellHistory>, Vec<CellHistory>)> {
    let tags: Vec<(String, String)> = cells.iter().map(|c| (c.cell_id.clone(), c.condition())).collect();
    let (train_ids, _) = split_stratified_ids(&tags, spec)?;
    Ok(cells.iter().cloned().partition(|c| train_ids.contains(&c.cell_id)))
}
