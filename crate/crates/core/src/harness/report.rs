use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::cerberus::{fuse_estimate, CerberusParams, CycleBundle};
use crate::error::{Error, Result};

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::Metric(format!(
            "mape over {} predictions and {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if let Some(t) = truth.iter().find(|t| t.is_nan() || **t <= 0.0) {
        return Err(Error::Metric(format!("truth value {t} is not positive")));
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs() / t).sum();
    Ok(100.0 * sum / pred.len() as f64)
}

/// One evaluated cycle, capacities in Ah.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRow {
    pub cell_id: String,
    pub condition: String,
    pub cycle_index: u32,
    pub truth_ah: f64,
    pub fused_ah: f64,
    pub head_a_ah: Option<f64>,
    pub head_b_ah: Option<f64>,
    pub head_c_ah: Option<f64>,
}

/// Fused and head-only MAPE over a group of cycles. A head-only MAPE covers
/// the cycles where that head has input and is `None` when there are none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapeSet {
    pub cycles: usize,
    pub fused: f64,
    pub head_a: Option<f64>,
    pub head_b: Option<f64>,
    pub head_c: Option<f64>,
}

impl MapeSet {
    fn from_rows<'a>(rows: impl Iterator<Item = &'a CycleRow> + Clone) -> Result<Self> {
        let truth: Vec<f64> = rows.clone().map(|r| r.truth_ah).collect();
        let fused: Vec<f64> = rows.clone().map(|r| r.fused_ah).collect();
        let head = |get: fn(&CycleRow) -> Option<f64>| -> Result<Option<f64>> {
            let (p, t): (Vec<f64>, Vec<f64>) = rows.clone().filter_map(|r| get(r).map(|v| (v, r.truth_ah))).unzip();
            if p.is_empty() {
                Ok(None)
            } else {
                mape(&p, &t).map(Some)
            }
        };
        Ok(Self {
            cycles: truth.len(),
            fused: mape(&fused, &truth)?,
            head_a: head(|r| r.head_a_ah)?,
            head_b: head(|r| r.head_b_ah)?,
            head_c: head(|r| r.head_c_ah)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cycles: usize,
    pub windows: usize,
    pub overall: MapeSet,
    pub by_condition: BTreeMap<String, MapeSet>,
    pub by_cell: BTreeMap<String, MapeSet>,
    /// Rows sorted by cell then cycle.
    pub rows: Vec<CycleRow>,
    pub config: BTreeMap<String, String>,
}

fn config_echo(p: &CerberusParams) -> BTreeMap<String, String> {
    let c = &p.config;
    let sizes = |v: &[usize]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("-");
    BTreeMap::from([
        ("model_version".into(), p.version.clone()),
        ("gru_hidden".into(), c.gru_hidden.to_string()),
        ("gru_layers".into(), c.gru_layers.to_string()),
        ("lstm_hidden".into(), c.lstm_hidden.to_string()),
        ("lstm_layers".into(), c.lstm_layers.to_string()),
        ("relaxation_mlp".into(), sizes(&c.relaxation_mlp)),
        ("history_mlp".into(), sizes(&c.history_mlp)),
        ("schedule_n0".into(), c.schedule.n0.to_string()),
        ("schedule_n_ramp".into(), c.schedule.n_ramp.to_string()),
        ("schedule_w_min".into(), c.schedule.w_min.to_string()),
        ("schedule_w_max".into(), c.schedule.w_max.to_string()),
        ("capacity_scale".into(), p.normalizer.capacity_scale.to_string()),
    ])
}

/// Estimates the fused capacity of one labelled bundle.
pub fn evaluate_bundle(params: &CerberusParams, b: &CycleBundle) -> Result<CycleRow> {
    let label = b.label.ok_or_else(|| {
        Error::Input(format!(
            "cell {} cycle {}: no ground-truth capacity",
            b.cell_id, b.cycle_index
        ))
    })?;
    let est = fuse_estimate(params, b)?;
    Ok(CycleRow {
        cell_id: b.cell_id.clone(),
        condition: b.condition.clone(),
        cycle_index: b.cycle_index,
        truth_ah: params.normalizer.unit_to_capacity(label),
        fused_ah: est.capacity_ah,
        head_a_ah: est.head_a_ah,
        head_b_ah: est.head_b_ah,
        head_c_ah: est.head_c_ah,
    })
}

/// Fused per-cycle MAPE overall, per condition and per cell, with the
/// head-only ablations alongside.
pub fn evaluate(params: &CerberusParams, bundles: &[CycleBundle]) -> Result<EvalReport> {
    if bundles.is_empty() {
        return Err(Error::Input("nothing to evaluate".into()));
    }
    let mut rows = bundles
        .iter()
        .map(|b| evaluate_bundle(params, b))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| (&a.cell_id, a.cycle_index).cmp(&(&b.cell_id, b.cycle_index)));

    let mut groups: BTreeMap<&str, Vec<&CycleRow>> = BTreeMap::new();
    let mut cells: BTreeMap<&str, Vec<&CycleRow>> = BTreeMap::new();
    for r in &rows {
        groups.entry(&r.condition).or_default().push(r);
        cells.entry(&r.cell_id).or_default().push(r);
    }
    let summarize = |m: BTreeMap<&str, Vec<&CycleRow>>| -> Result<BTreeMap<String, MapeSet>> {
        m.into_iter()
            .map(|(k, v)| Ok((k.to_string(), MapeSet::from_rows(v.into_iter())?)))
            .collect()
    };
    Ok(EvalReport {
        cycles: rows.len(),
        windows: bundles.iter().map(CycleBundle::window_count).sum(),
        overall: MapeSet::from_rows(rows.iter())?,
        by_condition: summarize(groups)?,
        by_cell: summarize(cells)?,
        config: config_echo(params),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mape_table(out: &mut String, key: &str, sets: &BTreeMap<String, MapeSet>) {
    let _ = writeln!(out, "{key},cycles,mape_fused,mape_head_a,mape_head_b,mape_head_c");
    for (k, m) in sets {
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{}",
            m.cycles,
            m.fused,
            opt(m.head_a),
            opt(m.head_b),
            opt(m.head_c)
        );
    }
}

/// Plot-ready rows `cycle_index,truth_ah,fused_ah,head_a_ah,head_b_ah,head_c_ah`.
pub fn cycle_rows_csv<'a>(rows: impl IntoIterator<Item = &'a CycleRow>) -> String {
    let mut out = String::from("cycle_index,truth_ah,fused_ah,head_a_ah,head_b_ah,head_c_ah\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.cycle_index,
            r.truth_ah,
            r.fused_ah,
            opt(r.head_a_ah),
            opt(r.head_b_ah),
            opt(r.head_c_ah)
        );
    }
    out
}

impl EvalReport {
    pub fn condition(&self, label: &str) -> Option<&MapeSet> {
        self.by_condition.get(label)
    }

    /// Key/value header followed by `[section]` CSV tables.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# evaluation report\n");
        let o = &self.overall;
        let _ = writeln!(out, "cycles = {}", self.cycles);
        let _ = writeln!(out, "windows = {}", self.windows);
        let _ = writeln!(out, "mape_fused = {}", o.fused);
        let _ = writeln!(out, "mape_head_a = {}", opt(o.head_a));
        let _ = writeln!(out, "mape_head_b = {}", opt(o.head_b));
        let _ = writeln!(out, "mape_head_c = {}", opt(o.head_c));
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k} = {v}");
        }
        out.push_str("\n[by_condition]\n");
        mape_table(&mut out, "condition", &self.by_condition);
        out.push_str("\n[by_cell]\n");
        mape_table(&mut out, "cell_id", &self.by_cell);
        out.push_str("\n[cycles]\n");
        out.push_str("cell_id,condition,");
        let body = cycle_rows_csv(&self.rows);
        let mut lines = body.lines();
        let _ = writeln!(out, "{}", lines.next().unwrap_or_default());
        for (r, line) in self.rows.iter().zip(lines) {
            let _ = writeln!(out, "{},{},{line}", r.cell_id, r.condition);
        }
        out
    }

    /// Plot-ready CSV per cell, keyed by cell id.
    pub fn per_cell_csv(&self) -> BTreeMap<String, String> {
        let mut by: BTreeMap<&str, Vec<&CycleRow>> = BTreeMap::new();
        for r in &self.rows {
            by.entry(&r.cell_id).or_default().push(r);
        }
        by.into_iter()
            .map(|(k, rows)| (k.to_string(), cycle_rows_csv(rows)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[3.5, 3.0], &[3.5, 3.0]).unwrap(), 0.0);
        assert!((mape(&[3.43], &[3.50]).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(mape(&[1.0], &[0.0]), Err(Error::Metric(_))));
        assert!(mape(&[], &[]).is_err());
        assert!(mape(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn mape_is_scale_invariant(
            pairs in proptest::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..50),
            k in 0.01f64..100.0,
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let ps: Vec<f64> = p.iter().map(|v| v * k).collect();
            let ts: Vec<f64> = t.iter().map(|v| v * k).collect();
            let a = mape(&p, &t).unwrap();
            let b = mape(&ps, &ts).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
