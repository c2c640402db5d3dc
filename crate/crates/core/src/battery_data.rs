//! Canonical cycling telemetry: parsing, coulomb counting and rest-curve
//! extraction.
//!
//! The only ingestion format is the canonical CSV:
//!
//! ```text
//! cell_id,cycle_index,step_kind,time_s,current_a,voltage_v
//! ```
//!
//! Discharge current is negative. Rows may arrive in any order across
//! `(cell_id, cycle_index, step_kind)` groups; within a group, row order is
//! time order and must be strictly increasing.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal capacity of the NCA 18650 cells the model targets, in Ah.
pub const NOMINAL_CAPACITY_AH: f64 = 3.5;

/// Maximum |current| tolerated during a rest step, in amperes.
pub const REST_CURRENT_TOLERANCE_A: f64 = 0.001;

pub const VOLTAGE_MIN_V: f64 = 2.0;
pub const VOLTAGE_MAX_V: f64 = 4.5;

pub const CSV_HEADER: [&str; 6] = [
    "cell_id",
    "cycle_index",
    "step_kind",
    "time_s",
    "current_a",
    "voltage_v",
];

/// Protocol step. Declaration order is protocol order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    ChargeCc,
    ChargeCv,
    RestAfterCharge,
    DischargeCc,
    RestAfterDischarge,
}

impl StepKind {
    pub const ALL: [StepKind; 5] = [
        StepKind::ChargeCc,
        StepKind::ChargeCv,
        StepKind::RestAfterCharge,
        StepKind::DischargeCc,
        StepKind::RestAfterDischarge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::ChargeCc => "charge_cc",
            StepKind::ChargeCv => "charge_cv",
            StepKind::RestAfterCharge => "rest_after_charge",
            StepKind::DischargeCc => "discharge_cc",
            StepKind::RestAfterDischarge => "rest_after_discharge",
        }
    }

    pub fn is_rest(self) -> bool {
        matches!(self, StepKind::RestAfterCharge | StepKind::RestAfterDischarge)
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        StepKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown step_kind {s:?}"))
    }
}

/// Which rest phase a relaxation curve comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationKind {
    Charge,
    Discharge,
}

impl RelaxationKind {
    pub fn rest_step(self) -> StepKind {
        match self {
            RelaxationKind::Charge => StepKind::RestAfterCharge,
            RelaxationKind::Discharge => StepKind::RestAfterDischarge,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelaxationKind::Charge => "charge",
            RelaxationKind::Discharge => "discharge",
        }
    }
}

impl fmt::Display for RelaxationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelaxationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "charge" => Ok(RelaxationKind::Charge),
            "discharge" => Ok(RelaxationKind::Discharge),
            other => Err(format!("unknown relaxation kind {other:?}")),
        }
    }
}

/// One telemetry sample. `time_s` counts from the start of the cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryPoint {
    pub time_s: f64,
    pub current_a: f64,
    pub voltage_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub kind: StepKind,
    pub points: Vec<TelemetryPoint>,
}

/// One full charge/rest/discharge/rest cycle of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cell_id: String,
    pub cycle_index: u32,
    /// Steps in protocol order; absent steps are simply missing.
    pub steps: Vec<Step>,
    /// Charge C-rate inferred from the mean constant-current charge current.
    pub charge_rate: Option<f64>,
    /// Discharge capacity in Ah, filled by [`coulomb_count_discharge`].
    pub capacity: Option<f64>,
}

impl CycleRecord {
    pub fn step(&self, kind: StepKind) -> Option<&Step> {
        self.steps.iter().find(|s| s.kind == kind)
    }
}

/// A zero-current rest curve rebased to start at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationCurve {
    pub cell_id: String,
    pub cycle_index: u32,
    pub kind: RelaxationKind,
    /// `(time_s, voltage_v)` pairs.
    pub samples: Vec<(f64, f64)>,
    pub native_interval: f64,
}

impl RelaxationCurve {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn voltages(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|&(_, v)| v)
    }
}

/// Ordered discharge-capacity trajectory of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellHistory {
    pub cell_id: String,
    pub charge_rate: Option<f64>,
    /// `(cycle_index, capacity_ah)`, strictly increasing in cycle index.
    pub capacities: Vec<(u32, f64)>,
}

impl CellHistory {
    pub fn len(&self) -> usize {
        self.capacities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacities.is_empty()
    }

    /// Stratum label such as `0.25C`, or `unknown` when no charge step was seen.
    pub fn condition(&self) -> String {
        condition_label(self.charge_rate)
    }
}

/// Formats a charge rate as a condition label: `0.25C`, `0.5C`, `1C`.
pub fn condition_label(rate: Option<f64>) -> String {
    match rate {
        Some(r) if r.is_finite() => {
            let s = format!("{:.2}", r);
            let s = s.trim_end_matches('0').trim_end_matches('.');
            format!("{s}C")
        }
        _ => "unknown".to_string(),
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    cell_id: String,
    cycle_index: u32,
    step_kind: String,
    time_s: f64,
    current_a: f64,
    voltage_v: f64,
}

/// Parses a canonical cycling CSV document into cycle records, one per
/// distinct `(cell_id, cycle_index)`, sorted by cell then cycle.
///
/// Row numbers in errors are 1-based file lines (the header is line 1).
pub fn parse_cycling_csv(text: &str) -> Result<Vec<CycleRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());

    let headers = reader.headers()?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != CSV_HEADER {
        let missing: Vec<&str> = CSV_HEADER.iter().copied().filter(|c| !found.contains(c)).collect();
        return Err(if missing.is_empty() {
            Error::Schema(format!(
                "header must be exactly `{}`, found `{}`",
                CSV_HEADER.join(","),
                found.join(",")
            ))
        } else {
            Error::Schema(format!("missing column(s): {}", missing.join(", ")))
        });
    }

    type Group = BTreeMap<StepKind, Vec<(usize, TelemetryPoint)>>;
    let mut groups: BTreeMap<(String, u32), Group> = BTreeMap::new();

    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let raw: RawRow = record.deserialize(Some(&headers)).map_err(|e| Error::DataRow {
            row,
            message: e.to_string(),
        })?;
        let kind: StepKind = raw
            .step_kind
            .parse()
            .map_err(|message| Error::DataRow { row, message })?;
        if raw.cycle_index == 0 {
            return Err(Error::DataRow {
                row,
                message: "cycle_index must be positive".into(),
            });
        }
        for (name, v) in [
            ("time_s", raw.time_s),
            ("current_a", raw.current_a),
            ("voltage_v", raw.voltage_v),
        ] {
            if !v.is_finite() {
                return Err(Error::DataRow {
                    row,
                    message: format!("{name} is not finite"),
                });
            }
        }
        if !(VOLTAGE_MIN_V..=VOLTAGE_MAX_V).contains(&raw.voltage_v) {
            return Err(Error::DataRow {
                row,
                message: format!(
                    "voltage {} V outside [{VOLTAGE_MIN_V}, {VOLTAGE_MAX_V}] V",
                    raw.voltage_v
                ),
            });
        }
        groups
            .entry((raw.cell_id, raw.cycle_index))
            .or_default()
            .entry(kind)
            .or_default()
            .push((
                row,
                TelemetryPoint {
                    time_s: raw.time_s,
                    current_a: raw.current_a,
                    voltage_v: raw.voltage_v,
                },
            ));
    }

    let mut records = Vec::with_capacity(groups.len());
    for ((cell_id, cycle_index), steps) in groups {
        let mut out_steps = Vec::with_capacity(steps.len());
        for (kind, rows) in steps {
            for pair in rows.windows(2) {
                let (_, prev) = pair[0];
                let (row, cur) = pair[1];
                if cur.time_s <= prev.time_s {
                    return Err(Error::DataRow {
                        row,
                        message: format!(
                            "time {} s does not increase within step {kind} (previous {} s)",
                            cur.time_s, prev.time_s
                        ),
                    });
                }
            }
            out_steps.push(Step {
                kind,
                points: rows.into_iter().map(|(_, p)| p).collect(),
            });
        }
        let charge_rate = out_steps
            .iter()
            .find(|s| s.kind == StepKind::ChargeCc)
            .filter(|s| !s.points.is_empty())
            .map(|s| {
                let mean = s.points.iter().map(|p| p.current_a.abs()).sum::<f64>() / s.points.len() as f64;
                mean / NOMINAL_CAPACITY_AH
            });
        records.push(CycleRecord {
            cell_id,
            cycle_index,
            steps: out_steps,
            charge_rate,
            capacity: None,
        });
    }
    Ok(records)
}

/// Serializes records back to the canonical CSV. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_cycling_csv(records: &[CycleRecord]) -> String {
    let mut out = String::new();
    out.push_str(&CSV_HEADER.join(","));
    out.push('\n');
    for rec in records {
        for step in &rec.steps {
            for p in &step.points {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    rec.cell_id, rec.cycle_index, step.kind, p.time_s, p.current_a, p.voltage_v
                );
            }
        }
    }
    out
}

/// Integrates |I| over the constant-current discharge step with the
/// trapezoidal rule and stores the result, in Ah, into `cycle.capacity`.
pub fn coulomb_count_discharge(cycle: &mut CycleRecord) -> Result<f64> {
    let step = cycle.step(StepKind::DischargeCc).ok_or_else(|| {
        Error::MissingStep(format!(
            "cell {} cycle {} has no discharge_cc step",
            cycle.cell_id, cycle.cycle_index
        ))
    })?;
    if step.points.len() < 2 {
        return Err(Error::MissingStep(format!(
            "cell {} cycle {}: discharge_cc step has {} point(s), need at least 2",
            cycle.cell_id,
            cycle.cycle_index,
            step.points.len()
        )));
    }
    let amp_seconds: f64 = step
        .points
        .windows(2)
        .map(|w| 0.5 * (w[0].current_a.abs() + w[1].current_a.abs()) * (w[1].time_s - w[0].time_s))
        .sum();
    let capacity = amp_seconds / 3600.0;
    cycle.capacity = Some(capacity);
    Ok(capacity)
}

/// Returns the rest curve that follows charge or discharge, rebased so the
/// first sample sits at t = 0. The native interval is the median spacing.
pub fn extract_relaxation(cycle: &CycleRecord, kind: RelaxationKind) -> Result<RelaxationCurve> {
    let step_kind = kind.rest_step();
    let step = cycle.step(step_kind).ok_or_else(|| {
        Error::MissingStep(format!(
            "cell {} cycle {} has no {step_kind} step",
            cycle.cell_id, cycle.cycle_index
        ))
    })?;
    if step.points.len() < 2 {
        return Err(Error::MissingStep(format!(
            "cell {} cycle {}: {step_kind} has {} sample(s), need at least 2",
            cycle.cell_id,
            cycle.cycle_index,
            step.points.len()
        )));
    }
    if let Some(p) = step
        .points
        .iter()
        .find(|p| p.current_a.abs() > REST_CURRENT_TOLERANCE_A)
    {
        return Err(Error::Data(format!(
            "cell {} cycle {}: {step_kind} carries {} A at t={} s (rest tolerance {} A)",
            cycle.cell_id, cycle.cycle_index, p.current_a, p.time_s, REST_CURRENT_TOLERANCE_A
        )));
    }

    let t0 = step.points[0].time_s;
    let samples: Vec<(f64, f64)> = step.points.iter().map(|p| (p.time_s - t0, p.voltage_v)).collect();

    let mut spacings: Vec<f64> = samples.windows(2).map(|w| w[1].0 - w[0].0).collect();
    spacings.sort_by(f64::total_cmp);
    let mid = spacings.len() / 2;
    let native_interval = if spacings.len() % 2 == 1 {
        spacings[mid]
    } else {
        0.5 * (spacings[mid - 1] + spacings[mid])
    };
    if let Some(w) = samples
        .windows(2)
        .find(|w| ((w[1].0 - w[0].0) - native_interval).abs() > 1.0)
    {
        return Err(Error::Data(format!(
            "cell {} cycle {}: irregular {step_kind} spacing {} s vs native {} s",
            cycle.cell_id,
            cycle.cycle_index,
            w[1].0 - w[0].0,
            native_interval
        )));
    }

    Ok(RelaxationCurve {
        cell_id: cycle.cell_id.clone(),
        cycle_index: cycle.cycle_index,
        kind,
        samples,
        native_interval,
    })
}

/// Collects the per-cycle capacities of one cell into an ordered history.
pub fn build_cell_history(cycles: &[CycleRecord]) -> Result<CellHistory> {
    let first = cycles
        .first()
        .ok_or_else(|| Error::Data("cannot build a history from zero cycles".into()))?;
    let cell_id = first.cell_id.clone();

    let mut capacities = Vec::with_capacity(cycles.len());
    let mut rates = Vec::new();
    for c in cycles {
        if c.cell_id != cell_id {
            return Err(Error::Data(format!(
                "mixed cells in one history: {} and {}",
                cell_id, c.cell_id
            )));
        }
        let cap = c.capacity.ok_or_else(|| {
            Error::Data(format!(
                "cell {} cycle {}: capacity not computed",
                c.cell_id, c.cycle_index
            ))
        })?;
        if !(cap > 0.0 && cap <= 1.2 * NOMINAL_CAPACITY_AH) {
            return Err(Error::Data(format!(
                "cell {} cycle {}: capacity {cap} Ah outside (0, {}]",
                c.cell_id,
                c.cycle_index,
                1.2 * NOMINAL_CAPACITY_AH
            )));
        }
        capacities.push((c.cycle_index, cap));
        rates.extend(c.charge_rate);
    }
    capacities.sort_by_key(|&(i, _)| i);
    if let Some(w) = capacities.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Data(format!("cell {cell_id}: duplicate cycle_index {}", w[0].0)));
    }
    let charge_rate = if rates.is_empty() {
        None
    } else {
        Some(rates.iter().sum::<f64>() / rates.len() as f64)
    };
    Ok(CellHistory {
        cell_id,
        charge_rate,
        capacities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        CSV_HEADER.join(",") + "\n"
    }

    fn record_with(kind: StepKind, points: Vec<TelemetryPoint>) -> CycleRecord {
        CycleRecord {
            cell_id: "c0".into(),
            cycle_index: 1,
            steps: vec![Step { kind, points }],
            charge_rate: None,
            capacity: None,
        }
    }

    fn constant_discharge(current: f64, duration: f64, dt: f64) -> CycleRecord {
        let n = (duration / dt).round() as usize;
        let points = (0..=n)
            .map(|k| TelemetryPoint {
                time_s: k as f64 * dt,
                current_a: -current,
                voltage_v: 3.6,
            })
            .collect();
        record_with(StepKind::DischargeCc, points)
    }

    fn rest(kind: StepKind, n: usize, dt: f64, current: f64) -> CycleRecord {
        let points = (0..n)
            .map(|k| TelemetryPoint {
                time_s: 5000.0 + k as f64 * dt,
                current_a: current,
                voltage_v: 4.1 - 0.001 * k as f64,
            })
            .collect();
        record_with(kind, points)
    }

    #[test]
    fn parses_single_discharge_step() {
        let mut text = header();
        for k in 0..5 {
            text += &format!("cellA,1,discharge_cc,{},-3.5,{}\n", 2 * k, 4.0 - 0.01 * k as f64);
        }
        let recs = parse_cycling_csv(&text).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].steps.len(), 1);
        assert_eq!(recs[0].steps[0].kind, StepKind::DischargeCc);
        assert_eq!(recs[0].steps[0].points.len(), 5);
        assert_eq!(recs[0].charge_rate, None);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_cycling_csv(&header()).unwrap().is_empty());
    }

    #[test]
    fn time_going_backwards_names_the_row() {
        let text = header()
            + "a,1,discharge_cc,0,-1,3.9\n\
               a,1,discharge_cc,2,-1,3.9\n\
               a,1,discharge_cc,1,-1,3.9\n";
        match parse_cycling_csv(&text) {
            Err(Error::DataRow { row, .. }) => assert_eq!(row, 4),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = "cell_id,cycle_index,step_kind,time_s,current_a\na,1,charge_cc,0,1\n";
        assert!(matches!(parse_cycling_csv(text), Err(Error::Schema(_))));
    }

    #[test]
    fn groups_out_of_order_rows_and_orders_steps() {
        let text = header()
            + "b,2,rest_after_charge,100,0,4.1\n\
               a,1,discharge_cc,0,-1,3.9\n\
               b,2,charge_cc,0,0.875,3.8\n\
               b,1,charge_cc,0,0.875,3.8\n\
               a,1,discharge_cc,2,-1,3.8\n\
               b,2,rest_after_charge,160,0,4.09\n";
        let recs = parse_cycling_csv(&text).unwrap();
        let keys: Vec<_> = recs.iter().map(|r| (r.cell_id.as_str(), r.cycle_index)).collect();
        assert_eq!(keys, vec![("a", 1), ("b", 1), ("b", 2)]);
        let kinds: Vec<_> = recs[2].steps.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, vec![StepKind::ChargeCc, StepKind::RestAfterCharge]);
        assert!((recs[2].charge_rate.unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn voltage_outside_band_is_rejected() {
        let text = header() + "a,1,discharge_cc,0,-1,5.1\n";
        assert!(matches!(parse_cycling_csv(&text), Err(Error::DataRow { row: 2, .. })));
    }

    #[test]
    fn coulomb_count_constant_current() {
        let mut c = constant_discharge(3.5, 3600.0, 2.0);
        assert!((coulomb_count_discharge(&mut c).unwrap() - 3.5).abs() < 1e-12);
        assert_eq!(c.capacity, Some(c.capacity.unwrap()));

        let mut c = constant_discharge(1.75, 7200.0, 2.0);
        assert!((coulomb_count_discharge(&mut c).unwrap() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn coulomb_count_single_point_is_missing_step() {
        let mut c = record_with(
            StepKind::DischargeCc,
            vec![TelemetryPoint {
                time_s: 0.0,
                current_a: -1.0,
                voltage_v: 3.9,
            }],
        );
        assert!(matches!(coulomb_count_discharge(&mut c), Err(Error::MissingStep(_))));
        let mut none = rest(StepKind::RestAfterCharge, 3, 60.0, 0.0);
        assert!(matches!(coulomb_count_discharge(&mut none), Err(Error::MissingStep(_))));
    }

    #[test]
    fn coulomb_count_is_linear_in_current() {
        let mut c = constant_discharge(1.3, 3000.0, 2.0);
        for (k, p) in c.steps[0].points.iter_mut().enumerate() {
            p.current_a *= 1.0 + 0.1 * (k as f64 * 0.01).sin();
        }
        let mut doubled = c.clone();
        for p in &mut doubled.steps[0].points {
            p.current_a *= 2.0;
        }
        let a = coulomb_count_discharge(&mut c).unwrap();
        let b = coulomb_count_discharge(&mut doubled).unwrap();
        assert!(((b - 2.0 * a) / (2.0 * a)).abs() < 1e-12);
    }

    #[test]
    fn thirty_minute_rest_at_sixty_seconds() {
        let c = rest(StepKind::RestAfterCharge, 31, 60.0, 0.0);
        let curve = extract_relaxation(&c, RelaxationKind::Charge).unwrap();
        assert_eq!(curve.len(), 31);
        assert_eq!(curve.native_interval, 60.0);
        assert_eq!(curve.samples[0].0, 0.0);
        assert_eq!(curve.samples[30].0, 1800.0);
    }

    #[test]
    fn rest_with_current_is_rejected() {
        let c = rest(StepKind::RestAfterCharge, 31, 60.0, 0.1);
        assert!(matches!(
            extract_relaxation(&c, RelaxationKind::Charge),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn two_sample_rest_is_valid_and_one_is_not() {
        let c = rest(StepKind::RestAfterDischarge, 2, 60.0, 0.0);
        let curve = extract_relaxation(&c, RelaxationKind::Discharge).unwrap();
        assert_eq!(curve.len(), 2);

        let c = rest(StepKind::RestAfterDischarge, 1, 60.0, 0.0);
        assert!(matches!(
            extract_relaxation(&c, RelaxationKind::Discharge),
            Err(Error::MissingStep(_))
        ));
        assert!(matches!(
            extract_relaxation(&c, RelaxationKind::Charge),
            Err(Error::MissingStep(_))
        ));
    }

    #[test]
    fn extracted_voltages_survive_reserialization() {
        let mut c = rest(StepKind::RestAfterCharge, 31, 60.0, 0.0);
        for (k, p) in c.steps[0].points.iter_mut().enumerate() {
            p.voltage_v = 4.08 + 0.12 * (-(k as f64) / 7.3).exp() + 1e-7 / (k + 3) as f64;
        }
        let before = extract_relaxation(&c, RelaxationKind::Charge).unwrap();
        let text = write_cycling_csv(std::slice::from_ref(&c));
        let back = parse_cycling_csv(&text).unwrap();
        let after = extract_relaxation(&back[0], RelaxationKind::Charge).unwrap();
        let bits = |c: &RelaxationCurve| c.voltages().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(&before), bits(&after));
    }

    fn with_capacity(idx: u32, cap: f64) -> CycleRecord {
        CycleRecord {
            cell_id: "c".into(),
            cycle_index: idx,
            steps: vec![],
            charge_rate: Some(0.5),
            capacity: Some(cap),
        }
    }

    #[test]
    fn history_is_sorted() {
        let h = build_cell_history(&[with_capacity(1, 3.5), with_capacity(3, 3.49), with_capacity(2, 3.495)]).unwrap();
        assert_eq!(h.capacities, vec![(1, 3.5), (2, 3.495), (3, 3.49)]);
        assert_eq!(h.condition(), "0.5C");

        let single = build_cell_history(&[with_capacity(4, 3.4)]).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn duplicate_cycle_is_rejected() {
        let r = build_cell_history(&[with_capacity(2, 3.5), with_capacity(2, 3.4)]);
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn condition_labels() {
        assert_eq!(condition_label(Some(0.25)), "0.25C");
        assert_eq!(condition_label(Some(0.5)), "0.5C");
        assert_eq!(condition_label(Some(1.0)), "1C");
        assert_eq!(condition_label(None), "unknown");
    }
}
