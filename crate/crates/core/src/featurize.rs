//! Model-ready features: downsampled and z-scored rest-curve windows, and
//! expanding capacity-history windows.

use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::battery_data::{CellHistory, RelaxationCurve, RelaxationKind};
use crate::error::{Error, Result};

/// Sampling interval the windows are built at, in seconds.
pub const TARGET_INTERVAL_S: f64 = 120.0;
/// Samples per charge-rest window (20 minutes at 120 s).
pub const CHARGE_WINDOW: usize = 10;
/// Samples per discharge-rest window (30 minutes at 120 s).
pub const DISCHARGE_WINDOW: usize = 15;
/// Shortest history fed to the forecaster; shorter ones are extrapolated.
pub const MIN_HISTORY: usize = 10;

pub fn window_size(kind: RelaxationKind) -> usize {
    match kind {
        RelaxationKind::Charge => CHARGE_WINDOW,
        RelaxationKind::Discharge => DISCHARGE_WINDOW,
    }
}

/// Per-kind voltage z-score statistics plus the capacity scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean_charge: f64,
    pub std_charge: f64,
    pub mean_discharge: f64,
    pub std_discharge: f64,
    pub capacity_scale: f64,
}

impl Normalizer {
    pub fn validate(&self) -> Result<()> {
        let ok = self.std_charge > 0.0
            && self.std_discharge > 0.0
            && self.capacity_scale > 0.0
            && [self.mean_charge, self.mean_discharge].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Degenerate(format!("invalid normalizer {self:?}")))
        }
    }

    fn stats(&self, kind: RelaxationKind) -> (f64, f64) {
        match kind {
            RelaxationKind::Charge => (self.mean_charge, self.std_charge),
            RelaxationKind::Discharge => (self.mean_discharge, self.std_discharge),
        }
    }

    pub fn z_score(&self, kind: RelaxationKind, volts: f64) -> f64 {
        let (mean, std) = self.stats(kind);
        (volts - mean) / std
    }

    pub fn inverse_z_score(&self, kind: RelaxationKind, z: f64) -> f64 {
        let (mean, std) = self.stats(kind);
        z * std + mean
    }

    pub fn capacity_to_unit(&self, ah: f64) -> f64 {
        ah / self.capacity_scale
    }

    pub fn unit_to_capacity(&self, unit: f64) -> f64 {
        unit * self.capacity_scale
    }
}

/// A fixed-length z-scored voltage window labelled with its cycle's capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub kind: RelaxationKind,
    pub values: Vec<f64>,
    pub cell_id: String,
    pub cycle_index: u32,
    /// Capacity divided by the normalizer's capacity scale.
    pub label: f64,
}

/// An expanding capacity window anchored at the first recorded cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    pub cell_id: String,
    /// Cycle index of the last real element.
    pub end_cycle: u32,
    /// Normalized capacities, at least [`MIN_HISTORY`] long after padding.
    pub values: Vec<f64>,
    /// Number of trailing entries in `values` that are measured, not extrapolated.
    pub real_len: usize,
    /// Normalized capacity of the following cycle, when known.
    pub target: Option<f64>,
}

/// False for NaN as well as non-positive values.
fn positive(x: f64) -> bool {
    x > 0.0
}

/// Keeps every k-th sample so the spacing becomes `target_interval`.
/// No interpolation: the ratio to the native interval must be an integer.
pub fn downsample(curve: &RelaxationCurve, target_interval: f64) -> Result<RelaxationCurve> {
    if !positive(target_interval) || !positive(curve.native_interval) {
        return Err(Error::Resampling(format!(
            "intervals must be positive (native {}, target {target_interval})",
            curve.native_interval
        )));
    }
    let ratio = target_interval / curve.native_interval;
    let step = ratio.round();
    if step < 1.0 || (ratio - step).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Resampling(format!(
            "target interval {target_interval} s is not an integer multiple of {} s",
            curve.native_interval
        )));
    }
    let step = step as usize;
    Ok(RelaxationCurve {
        cell_id: curve.cell_id.clone(),
        cycle_index: curve.cycle_index,
        kind: curve.kind,
        samples: curve.samples.iter().copied().step_by(step).collect(),
        native_interval: target_interval,
    })
}

fn population_stats(values: &[f64]) -> (usize, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (n, mean, var.sqrt())
}

/// Fits per-kind voltage statistics over the pooled training curves
/// (population standard deviation).
pub fn fit_normalizer(training_curves: &[RelaxationCurve], nominal_capacity: f64) -> Result<Normalizer> {
    if !positive(nominal_capacity) {
        return Err(Error::Degenerate(format!(
            "nominal capacity must be positive, got {nominal_capacity}"
        )));
    }
    let pool = |kind: RelaxationKind| {
        training_curves
            .iter()
            .filter(move |c| c.kind == kind)
            .flat_map(|c| c.voltages())
            .collect::<Vec<f64>>()
    };
    let mut stats = [(0.0, 0.0); 2];
    for (slot, kind) in [RelaxationKind::Charge, RelaxationKind::Discharge]
        .into_iter()
        .enumerate()
    {
        let (n, mean, std) = population_stats(&pool(kind));
        if n == 0 {
            return Err(Error::Degenerate(format!("no {kind} relaxation samples to fit")));
        }
        if !positive(std) || !std.is_finite() {
            return Err(Error::Degenerate(format!(
                "{kind} relaxation voltages have zero variance"
            )));
        }
        stats[slot] = (mean, std);
    }
    Ok(Normalizer {
        mean_charge: stats[0].0,
        std_charge: stats[0].1,
        mean_discharge: stats[1].0,
        std_discharge: stats[1].1,
        capacity_scale: nominal_capacity,
    })
}

/// Cuts a downsampled curve into stride-1 windows of `size` samples.
/// Curves shorter than one window produce no windows and a warning.
pub fn slide_windows(curve: &RelaxationCurve, size: usize, label_ah: f64, norm: &Normalizer) -> Vec<WindowSample> {
    if size == 0 || curve.len() < size {
        warn!(
            "cell {} cycle {}: {} rest has {} samples, fewer than one window of {size}",
            curve.cell_id,
            curve.cycle_index,
            curve.kind,
            curve.len()
        );
        return Vec::new();
    }
    let z: Vec<f64> = curve.voltages().map(|v| norm.z_score(curve.kind, v)).collect();
    let label = norm.capacity_to_unit(label_ah);
    z.windows(size)
        .map(|w| WindowSample {
            kind: curve.kind,
            values: w.to_vec(),
            cell_id: curve.cell_id.clone(),
            cycle_index: curve.cycle_index,
            label,
        })
        .collect()
}

/// Pads a short history to `min_len` by extending its least-squares line
/// backwards in time. Histories already long enough are returned unchanged.
pub fn linear_extrapolate_history(capacities: &[f64], min_len: usize) -> Result<Vec<f64>> {
    let n = capacities.len();
    if n == 0 {
        return Err(Error::Data("cannot extrapolate an empty history".into()));
    }
    if n >= min_len {
        return Ok(capacities.to_vec());
    }
    let nf = n as f64;
    let x_mean = (nf - 1.0) / 2.0;
    let y_mean = capacities.iter().sum::<f64>() / nf;
    let (sxy, sxx) = capacities.iter().enumerate().fold((0.0, 0.0), |(sxy, sxx), (i, &y)| {
        let dx = i as f64 - x_mean;
        (sxy + dx * (y - y_mean), sxx + dx * dx)
    });
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = y_mean - slope * x_mean;

    let pad = min_len - n;
    let mut out = Vec::with_capacity(min_len);
    for k in (1..=pad).rev() {
        let v = intercept - slope * k as f64;
        out.push(v.max(1e-6));
    }
    out.extend_from_slice(capacities);
    Ok(out)
}

/// Builds the window over the first `real_len` entries of a history, padded
/// to [`MIN_HISTORY`]. The target is the following entry when one exists.
pub fn history_window(history: &CellHistory, real_len: usize, norm: &Normalizer) -> Result<HistoryWindow> {
    if real_len == 0 || real_len > history.len() {
        return Err(Error::Data(format!(
            "cell {}: history prefix of {real_len} out of range 1..={}",
            history.cell_id,
            history.len()
        )));
    }
    let real: Vec<f64> = history.capacities[..real_len]
        .iter()
        .map(|&(_, q)| norm.capacity_to_unit(q))
        .collect();
    let values = linear_extrapolate_history(&real, MIN_HISTORY)?;
    Ok(HistoryWindow {
        cell_id: history.cell_id.clone(),
        end_cycle: history.capacities[real_len - 1].0,
        values,
        real_len,
        target: history.capacities.get(real_len).map(|&(_, q)| norm.capacity_to_unit(q)),
    })
}

/// Every expanding window of a history that has a next-cycle target.
pub fn expand_history(history: &CellHistory, norm: &Normalizer) -> Result<Vec<HistoryWindow>> {
    if history.len() < 2 {
        return Err(Error::Data(format!(
            "cell {}: need at least 2 cycles to form a history window, have {}",
            history.cell_id,
            history.len()
        )));
    }
    (1..history.len())
        .map(|real_len| history_window(history, real_len, norm))
        .collect()
}

/// Featurized window export: `kind,cell_id,cycle_index,label,v0..v14`.
pub fn write_windows_csv(windows: &[WindowSample]) -> String {
    let mut out = String::from("kind,cell_id,cycle_index,label");
    for i in 0..DISCHARGE_WINDOW {
        let _ = write!(out, ",v{i}");
    }
    out.push('\n');
    for w in windows {
        let _ = write!(out, "{},{},{},{}", w.kind, w.cell_id, w.cycle_index, w.label);
        for i in 0..DISCHARGE_WINDOW {
            match w.values.get(i) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
