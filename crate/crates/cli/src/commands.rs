use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use cerberus_core::cerberus::{load_checkpoint, predict_trajectory, save_checkpoint, Checkpoint};
use cerberus_core::featurize::history_window;
use cerberus_core::harness::{
    bundles_for, cells_from_records, cycle_rows_csv, evaluate_bundle, partition, prepare, read_cycling_dir,
    train as fit, CellData, CycleKey, CycleRow,
};
use cerberus_core::synthcell::{default_fleet, write_fleet};
use cerberus_core::{parse_cycling_csv, SplitMode, SplitSpec};
use log::info;

use crate::config::RunSettings;
use crate::{EstimateArgs, EvaluateArgs, Failure, IngestArgs, PredictArgs, Subset, SynthArgs, TrainArgs};

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn require_dir(p: &Path) -> Outcome {
    if p.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{} is not a directory", p.display())))
    }
}

fn require_file(p: &Path) -> Outcome {
    if p.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{} is not a file", p.display())))
    }
}

/// The directory an output file goes into must already exist.
fn require_parent(p: &Path) -> Outcome {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(usage(format!("output directory {} does not exist", d.display())))
        }
        _ => Ok(()),
    }
}

fn write_file(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("writing {}: {e}", path.display())))
}

fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => write_file(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Data(format!("writing standard output: {e}"))),
    }
}

fn load_cells(dir: &Path) -> Result<Vec<CellData>, Failure> {
    let cells = cells_from_records(read_cycling_dir(dir)?)?;
    info!("loaded {} cells from {}", cells.len(), dir.display());
    Ok(cells)
}

/// The single cell stored in a cycling file.
fn load_cell(path: &Path) -> Result<CellData, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let records = parse_cycling_csv(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let mut cells = cells_from_records(records)?;
    if cells.len() != 1 {
        return Err(Failure::Data(format!(
            "{} holds {} cells, expected one",
            path.display(),
            cells.len()
        )));
    }
    Ok(cells.remove(0))
}

pub fn synth(a: SynthArgs) -> Outcome {
    if a.cells == 0 || a.cycles == 0 {
        return Err(usage("--cells and --cycles must be at least 1"));
    }
    let mut specs = default_fleet(a.cells, a.cycles, a.seed);
    if let Some(sigma) = a.noise {
        for s in &mut specs {
            s.noise_sigma = sigma;
        }
    }
    for s in &specs {
        s.validate().map_err(|e| usage(e.to_string()))?;
    }
    write_fleet(&a.out, &specs)?;
    info!("wrote {} cells x {} cycles to {}", a.cells, a.cycles, a.out.display());
    Ok(())
}

pub fn ingest(a: IngestArgs) -> Outcome {
    require_dir(&a.data)?;
    if let Some(out) = &a.out {
        require_parent(out)?;
    }
    let cells = load_cells(&a.data)?;
    let mut text = String::from("cell_id,condition,cycle_index,capacity_ah\n");
    for cell in &cells {
        let condition = cell.condition();
        for &(index, q) in &cell.history.capacities {
            let _ = writeln!(text, "{},{condition},{index},{q}", cell.cell_id());
        }
    }
    emit(a.out.as_deref(), &text)
}

fn settings_for(a: &TrainArgs) -> Result<RunSettings, Failure> {
    let mut s = RunSettings::default();
    if let Some(path) = &a.config {
        require_file(path)?;
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        s.apply_text(&text)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    let flags = [
        ("split", a.split.clone()),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("batch_size", a.batch_size.map(|v| v.to_string())),
        ("lr", a.lr.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            s.set(key, &v).map_err(usage)?;
        }
    }
    if a.nondeterministic {
        s.train.deterministic = false;
    }
    s.validate().map_err(usage)?;
    Ok(s)
}

fn loss_path(a: &TrainArgs) -> PathBuf {
    a.loss_out.clone().unwrap_or_else(|| a.out.with_extension("loss.csv"))
}

pub fn train(a: TrainArgs) -> Outcome {
    require_dir(&a.data)?;
    require_parent(&a.out)?;
    let loss_out = loss_path(&a);
    require_parent(&loss_out)?;
    let s = settings_for(&a)?;

    let cells = load_cells(&a.data)?;
    let data = prepare(&cells, &s.split, s.train.validation_fraction)?;
    info!(
        "{} split: {} train, {} validation, {} test cycles",
        s.split.mode,
        data.train.len(),
        data.val.len(),
        data.test.len()
    );
    let outcome = fit(&data.train, &data.val, data.normalizer, &s.train)?;

    let meta = BTreeMap::from([
        ("split.mode".to_string(), s.split.mode.to_string()),
        ("split.seed".to_string(), s.split.seed.to_string()),
        ("split.train_fraction".to_string(), s.split.train_fraction.to_string()),
        (
            "train.validation_fraction".to_string(),
            s.train.validation_fraction.to_string(),
        ),
        ("train.epochs_run".to_string(), outcome.history.len().to_string()),
        ("train.best_epoch".to_string(), outcome.best_epoch.to_string()),
        ("train.deterministic".to_string(), s.train.deterministic.to_string()),
        ("train.lr".to_string(), s.train.adam.lr.to_string()),
        ("train.batch_size".to_string(), s.train.batch_size.to_string()),
    ]);
    save_checkpoint(&a.out, &outcome.params, &meta)?;
    write_file(&loss_out, &outcome.loss_csv())?;
    info!(
        "best epoch {} of {}; wrote {} and {}",
        outcome.best_epoch,
        outcome.history.len(),
        a.out.display(),
        loss_out.display()
    );
    Ok(())
}

/// The split a checkpoint was trained with, if it records one.
fn recorded_split(ckpt: &Checkpoint) -> Result<Option<SplitSpec>, Failure> {
    let m = &ckpt.metadata;
    let Some(mode) = m.get("split.mode") else {
        return Ok(None);
    };
    let bad = |k: &str| Failure::Data(format!("checkpoint metadata {k} is malformed"));
    let mode: SplitMode = mode.parse().map_err(|_| bad("split.mode"))?;
    let seed = m
        .get("split.seed")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("split.seed"))?;
    let train_fraction = m
        .get("split.train_fraction")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("split.train_fraction"))?;
    Ok(Some(SplitSpec {
        mode,
        train_fraction,
        seed,
    }))
}

fn subset_keys(cells: &[CellData], ckpt: &Checkpoint, subset: Option<Subset>) -> Result<Vec<CycleKey>, Failure> {
    let split = recorded_split(ckpt)?;
    let subset = subset.unwrap_or(if split.is_some() { Subset::Test } else { Subset::All });
    if subset == Subset::All {
        return Ok(cells
            .iter()
            .enumerate()
            .flat_map(|(ci, c)| (0..c.cycles.len()).map(move |p| (ci, p)))
            .collect());
    }
    let split = split.ok_or_else(|| usage("checkpoint records no split; use --subset all"))?;
    let p = partition(cells, &split)?;
    Ok(if subset == Subset::Train { p.train } else { p.test })
}

pub fn evaluate(a: EvaluateArgs) -> Outcome {
    require_file(&a.model)?;
    require_dir(&a.data)?;
    if let Some(r) = &a.report {
        require_parent(r)?;
    }
    let ckpt = load_checkpoint(&a.model)?;
    let cells = load_cells(&a.data)?;
    let keys = subset_keys(&cells, &ckpt, a.subset)?;
    let bundles = bundles_for(&cells, &keys, &ckpt.params.normalizer)?;
    let report = cerberus_core::harness::evaluate(&ckpt.params, &bundles)?;
    info!("{} cycles, fused MAPE {:.4}%", report.cycles, report.overall.fused);
    emit(a.report.as_deref(), &report.to_text())?;
    if let Some(dir) = &a.plots {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
        for (cell, csv) in report.per_cell_csv() {
            write_file(&dir.join(format!("{cell}.csv")), &csv)?;
        }
    }
    Ok(())
}

/// One row in the layout of the report's `[cycles]` table.
fn row_line(row: &CycleRow) -> String {
    let body = cycle_rows_csv([row]);
    let mut lines = body.lines();
    let header = lines.next().unwrap_or_default();
    let values = lines.next().unwrap_or_default();
    format!(
        "cell_id,condition,{header}\n{},{},{values}\n",
        row.cell_id, row.condition
    )
}

pub fn estimate(a: EstimateArgs) -> Outcome {
    require_file(&a.model)?;
    require_file(&a.cycles)?;
    let ckpt = load_checkpoint(&a.model)?;
    let cell = load_cell(&a.cycles)?;
    let caps = &cell.history.capacities;
    let pos = match a.cycle_index {
        None => caps.len() - 1,
        Some(n) => caps
            .iter()
            .position(|&(i, _)| i == n)
            .ok_or_else(|| Failure::Data(format!("cycle {n} not in {}", a.cycles.display())))?,
    };
    let bundle = cell.bundle(pos, &ckpt.params.normalizer)?;
    let row = evaluate_bundle(&ckpt.params, &bundle)?;
    emit(None, &row_line(&row))
}

pub fn predict(a: PredictArgs) -> Outcome {
    require_file(&a.model)?;
    require_file(&a.cycles)?;
    if a.horizon == 0 {
        return Err(usage("--horizon must be at least 1"));
    }
    let ckpt = load_checkpoint(&a.model)?;
    let cell = load_cell(&a.cycles)?;
    let len = a.from.unwrap_or(cell.history.len());
    let window = history_window(&cell.history, len, &ckpt.params.normalizer)?;
    let path = predict_trajectory(&ckpt.params, &window, a.horizon)?;
    let mut text = String::from("step,cycle_index,capacity_ah\n");
    for (k, q) in path.iter().enumerate() {
        let _ = writeln!(text, "{},{},{q}", k + 1, window.end_cycle as usize + k + 1);
    }
    emit(None, &text)
}
