use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::debug;

use super::split::{split_random, split_stratified_ids, train_count, SplitMode, SplitSpec};
use crate::battery_data::{
    build_cell_history, coulomb_count_discharge, extract_relaxation, parse_cycling_csv, CellHistory, CycleRecord,
    RelaxationCurve, RelaxationKind, NOMINAL_CAPACITY_AH,
};
use crate::cerberus::CycleBundle;
use crate::error::{Error, Result};
use crate::featurize::{
    downsample, fit_normalizer, history_window, slide_windows, window_size, Normalizer, WindowSample, TARGET_INTERVAL_S,
};

/// One cell's cycles, sorted, with capacities measured.
#[derive(Debug, Clone, PartialEq)]
pub struct CellData {
    pub history: CellHistory,
    pub cycles: Vec<CycleRecord>,
}

impl CellData {
    /// Coulomb-counts every cycle and builds the capacity history.
    pub fn from_records(mut cycles: Vec<CycleRecord>) -> Result<Self> {
        for c in &mut cycles {
            coulomb_count_discharge(c)?;
        }
        cycles.sort_by_key(|c| c.cycle_index);
        let history = build_cell_history(&cycles)?;
        Ok(Self { history, cycles })
    }

    pub fn cell_id(&self) -> &str {
        &self.history.cell_id
    }

    pub fn condition(&self) -> String {
        self.history.condition()
    }

    /// The rest curve of cycle `pos` at the model sampling interval, or
    /// `None` when the cycle has no such rest.
    pub fn curve(&self, pos: usize, kind: RelaxationKind) -> Result<Option<RelaxationCurve>> {
        match extract_relaxation(&self.cycles[pos], kind) {
            Ok(c) => downsample(&c, TARGET_INTERVAL_S).map(Some),
            Err(Error::MissingStep(m)) => {
                debug!("{m}; skipping {kind} windows");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn windows(&self, pos: usize, kind: RelaxationKind, norm: &Normalizer) -> Result<Vec<WindowSample>> {
        let label = self.history.capacities[pos].1;
        Ok(self
            .curve(pos, kind)?
            .map(|c| slide_windows(&c, window_size(kind), label, norm))
            .unwrap_or_default())
    }

    /// Bundle for the cycle at sorted position `pos`.
    pub fn bundle(&self, pos: usize, norm: &Normalizer) -> Result<CycleBundle> {
        let (cycle_index, capacity) = self.history.capacities[pos];
        Ok(CycleBundle {
            cell_id: self.cell_id().to_string(),
            condition: self.condition(),
            cycle_index,
            charge_windows: self.windows(pos, RelaxationKind::Charge, norm)?,
            discharge_windows: self.windows(pos, RelaxationKind::Discharge, norm)?,
            history: if pos == 0 {
                None
            } else {
                Some(history_window(&self.history, pos, norm)?)
            },
            label: Some(norm.capacity_to_unit(capacity)),
        })
    }

    pub fn bundles(&self, norm: &Normalizer) -> Result<Vec<CycleBundle>> {
        (0..self.cycles.len()).map(|pos| self.bundle(pos, norm)).collect()
    }
}

/// Cycling CSV files in `dir`, sorted by name. `manifest.csv` is skipped.
pub fn cycling_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let is_csv = path.extension().is_some_and(|e| e == "csv");
        if is_csv && path.file_name().is_some_and(|n| n != "manifest.csv") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no cycling CSV files in {}", dir.display())));
    }
    Ok(files)
}

/// Parses every cycling file in `dir`. Errors name the offending file.
pub fn read_cycling_dir(dir: &Path) -> Result<Vec<CycleRecord>> {
    let mut out = Vec::new();
    for path in cycling_files(dir)? {
        let text = std::fs::read_to_string(&path)?;
        out.extend(parse_cycling_csv(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}

/// Groups records by cell (sorted by id) and prepares each cell.
pub fn cells_from_records(records: Vec<CycleRecord>) -> Result<Vec<CellData>> {
    let mut by_cell: BTreeMap<String, Vec<CycleRecord>> = BTreeMap::new();
    for r in records {
        by_cell.entry(r.cell_id.clone()).or_default().push(r);
    }
    by_cell.into_values().map(CellData::from_records).collect()
}

/// A `(cell index, cycle position)` reference into a cell list.
pub type CycleKey = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub train: Vec<CycleKey>,
    pub test: Vec<CycleKey>,
}

fn all_keys(cells: &[CellData], include: impl Fn(&CellData) -> bool) -> Vec<CycleKey> {
    cells
        .iter()
        .enumerate()
        .filter(|(_, c)| include(c))
        .flat_map(|(ci, c)| (0..c.cycles.len()).map(move |p| (ci, p)))
        .collect()
}

/// Assigns every cycle to train or test. Both sides come back sorted.
pub fn partition(cells: &[CellData], spec: &SplitSpec) -> Result<Partition> {
    let (mut train, mut test) = match spec.mode {
        SplitMode::RandomWindows => split_random(&all_keys(cells, |_| true), spec)?,
        SplitMode::StratifiedCells => {
            let tags: Vec<(String, String)> = cells.iter().map(|c| (c.cell_id().to_string(), c.condition())).collect();
            let (train_ids, _) = split_stratified_ids(&tags, spec)?;
            let train_ids: BTreeSet<String> = train_ids.into_iter().collect();
            (
                all_keys(cells, |c| train_ids.contains(c.cell_id())),
                all_keys(cells, |c| !train_ids.contains(c.cell_id())),
            )
        }
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok(Partition { train, test })
}

/// Seeded hold-out of `round(fraction * n)` keys for validation; the
/// remainder stays for training. Fewer than two keys yields no hold-out.
pub fn carve_validation(keys: &[CycleKey], fraction: f64, seed: u64) -> Result<(Vec<CycleKey>, Vec<CycleKey>)> {
    if keys.len() < 2 || fraction <= 0.0 {
        return Ok((keys.to_vec(), Vec::new()));
    }
    let n_val = train_count(keys.len(), fraction);
    let spec = SplitSpec {
        mode: SplitMode::RandomWindows,
        train_fraction: 1.0 - n_val as f64 / keys.len() as f64,
        seed,
    };
    let (mut rest, mut val) = split_random(keys, &spec)?;
    rest.sort_unstable();
    val.sort_unstable();
    Ok((rest, val))
}

/// Fits the voltage normalizer on the rest curves of the given cycles.
pub fn fit_normalizer_on(cells: &[CellData], keys: &[CycleKey]) -> Result<Normalizer> {
    let mut curves = Vec::new();
    for &(ci, pos) in keys {
        for kind in [RelaxationKind::Charge, RelaxationKind::Discharge] {
            curves.extend(cells[ci].curve(pos, kind)?);
        }
    }
    fit_normalizer(&curves, NOMINAL_CAPACITY_AH)
}

pub fn bundles_for(cells: &[CellData], keys: &[CycleKey], norm: &Normalizer) -> Result<Vec<CycleBundle>> {
    keys.iter().map(|&(ci, pos)| cells[ci].bundle(pos, norm)).collect()
}

/// Everything a training run needs, derived from one split.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub partition: Partition,
    pub normalizer: Normalizer,
    pub train: Vec<CycleBundle>,
    pub val: Vec<CycleBundle>,
    pub test: Vec<CycleBundle>,
}

/// Splits the cells, holds out a validation share of the training side,
/// fits the normalizer on the whole training side and builds all bundles.
pub fn prepare(cells: &[CellData], split: &SplitSpec, validation_fraction: f64) -> Result<PreparedData> {
    let partition = partition(cells, split)?;
    let (train_keys, val_keys) = carve_validation(&partition.train, validation_fraction, split.seed.wrapping_add(1))?;
    let normalizer = fit_normalizer_on(cells, &partition.train)?;
    Ok(PreparedData {
        train: bundles_for(cells, &train_keys, &normalizer)?,
        val: bundles_for(cells, &val_keys, &normalizer)?,
        test: bundles_for(cells, &partition.test, &normalizer)?,
        partition,
        normalizer,
    })
}
