//! Seeded synthetic cells with analytic capacity fade and exponential rest
//! curves whose asymptote and time constant drift with state of health.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::battery_data::{
    write_cycling_csv, CycleRecord, RelaxationCurve, RelaxationKind, Step, StepKind, TelemetryPoint,
    NOMINAL_CAPACITY_AH,
};
use crate::error::{Error, Result};

/// Sampling interval of the synthetic rest curves, seconds.
pub const REST_INTERVAL_S: f64 = 60.0;
/// Length of each synthetic rest, seconds.
pub const REST_DURATION_S: f64 = 1800.0;
/// Sampling interval of the synthetic discharge, seconds.
pub const DISCHARGE_INTERVAL_S: f64 = 2.0;

const CHARGE_START_V: f64 = 4.2;
const DISCHARGE_END_V: f64 = 2.65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadeMode {
    Linear,
    Knee,
}

impl fmt::Display for FadeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FadeMode::Linear => "linear",
            FadeMode::Knee => "knee",
        })
    }
}

impl FromStr for FadeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FadeMode::Linear),
            "knee" => Ok(FadeMode::Knee),
            other => Err(Error::Spec(format!("unknown fade mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCellSpec {
    pub cell_id: String,
    pub nominal_capacity: f64,
    pub cycles: u32,
    pub fade_mode: FadeMode,
    /// Fractional capacity lost per cycle.
    pub linear_rate: f64,
    pub knee_cycle: u32,
    /// Extra fractional loss per squared cycle past the knee.
    pub knee_quadratic: f64,
    /// Charge C-rate.
    pub charge_rate: f64,
    pub relax_tau_charge: f64,
    pub relax_tau_discharge: f64,
    pub aging_tau_slope: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthCellSpec {
    pub fn new(cell_id: impl Into<String>) -> Self {
        Self {
            cell_id: cell_id.into(),
            nominal_capacity: NOMINAL_CAPACITY_AH,
            cycles: 300,
            fade_mode: FadeMode::Linear,
            linear_rate: 0.0006,
            knee_cycle: u32::MAX,
            knee_quadratic: 0.0,
            charge_rate: 0.5,
            relax_tau_charge: 300.0,
            relax_tau_discharge: 600.0,
            aging_tau_slope: 0.5,
            noise_sigma: 0.002,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nominal_capacity", self.nominal_capacity),
            ("charge_rate", self.charge_rate),
            ("relax_tau_charge", self.relax_tau_charge),
            ("relax_tau_discharge", self.relax_tau_discharge),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Spec(format!(
                "{}: {name} must be positive, got {v}",
                self.cell_id
            )));
        }
        let non_negative = [
            ("linear_rate", self.linear_rate),
            ("knee_quadratic", self.knee_quadratic),
            ("aging_tau_slope", self.aging_tau_slope),
            ("noise_sigma", self.noise_sigma),
        ];
        if let Some((name, v)) = non_negative.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Spec(format!(
                "{}: {name} must be non-negative, got {v}",
                self.cell_id
            )));
        }
        if self.cycles == 0 {
            return Err(Error::Spec(format!("{}: zero cycles", self.cell_id)));
        }
        if self.cell_id.is_empty() || self.cell_id.contains([',', '/', '\\', '\n']) {
            return Err(Error::Spec(format!("unusable cell id {:?}", self.cell_id)));
        }
        Ok(())
    }

    /// Capacity in Ah at cycle `n`, and whether the lower clip was hit.
    pub fn capacity_at(&self, n: u32) -> (f64, bool) {
        let n = f64::from(n);
        let mut frac = 1.0 - self.linear_rate * n;
        if self.fade_mode == FadeMode::Knee {
            let past = (n - f64::from(self.knee_cycle)).max(0.0);
            frac -= self.knee_quadratic * past * past;
        }
        let q0 = self.nominal_capacity;
        let q = q0 * frac;
        if q < 0.5 * q0 {
            (0.5 * q0, true)
        } else {
            (q, false)
        }
    }
}

/// Capacity of cycles `1..=cycles`, in Ah. Element `i` is cycle `i + 1`.
pub fn soh_trajectory(spec: &SynthCellSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let out: Vec<(f64, bool)> = (1..=spec.cycles).map(|n| spec.capacity_at(n)).collect();
    if let Some(i) = out.iter().position(|&(_, clipped)| clipped) {
        warn!(
            "{}: capacity clipped at half nominal from cycle {} on",
            spec.cell_id,
            i + 1
        );
    }
    Ok(out.into_iter().map(|(q, _)| q).collect())
}

fn relaxation_voltage(spec: &SynthCellSpec, soh: f64, kind: RelaxationKind, t: f64) -> f64 {
    let aged = 1.0 - soh;
    match kind {
        RelaxationKind::Charge => {
            let tau = spec.relax_tau_charge * (1.0 + spec.aging_tau_slope * aged);
            let v_inf = 4.08 - 0.04 * aged / 0.2;
            v_inf + (CHARGE_START_V - v_inf) * (-t / tau).exp()
        }
        RelaxationKind::Discharge => {
            let tau = spec.relax_tau_discharge * (1.0 + spec.aging_tau_slope * aged);
            let v_inf = 3.20 + 0.08 * aged / 0.2;
            v_inf - (v_inf - DISCHARGE_END_V) * (-t / tau).exp()
        }
    }
}

fn noise_rng(spec: &SynthCellSpec, cycle_index: u32, kind: RelaxationKind) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lane = match kind {
        RelaxationKind::Charge => 0,
        RelaxationKind::Discharge => 1,
    };
    rng.set_stream(2 * u64::from(cycle_index) + lane);
    rng
}

/// A 30-minute rest at 60 s sampling for the given state of health.
/// Noise is seeded from the spec seed, the cycle index and the kind.
pub fn relaxation_curve(
    spec: &SynthCellSpec,
    soh: f64,
    kind: RelaxationKind,
    cycle_index: u32,
) -> Result<RelaxationCurve> {
    if !(soh > 0.0 && soh <= 1.0) {
        return Err(Error::Input(format!("state of health {soh} outside (0, 1]")));
    }
    let n = (REST_DURATION_S / REST_INTERVAL_S) as usize + 1;
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Spec(e.to_string()))?;
    let mut rng = noise_rng(spec, cycle_index, kind);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * REST_INTERVAL_S;
            let v = relaxation_voltage(spec, soh, kind, t);
            let e = if spec.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            (t, v + e)
        })
        .collect();
    Ok(RelaxationCurve {
        cell_id: spec.cell_id.clone(),
        cycle_index,
        kind,
        samples,
        native_interval: REST_INTERVAL_S,
    })
}

fn points(start: f64, interval: f64, n: usize, f: impl Fn(f64) -> (f64, f64)) -> Vec<TelemetryPoint> {
    (0..n)
        .map(|i| {
            let dt = i as f64 * interval;
            let (current_a, voltage_v) = f(dt);
            TelemetryPoint {
                time_s: start + dt,
                current_a,
                voltage_v,
            }
        })
        .collect()
}

fn rest_step(kind: StepKind, start: f64, curve: &RelaxationCurve) -> Step {
    Step {
        kind,
        points: curve
            .samples
            .iter()
            .map(|&(t, v)| TelemetryPoint {
                time_s: start + t,
                current_a: 0.0,
                voltage_v: v,
            })
            .collect(),
    }
}

fn build_cycle(spec: &SynthCellSpec, n: u32, capacity: f64) -> Result<CycleRecord> {
    let soh = capacity / spec.nominal_capacity;
    let i_charge = spec.charge_rate * NOMINAL_CAPACITY_AH;

    // constant current up to 80 % state of charge, then a decaying CV tail
    let cc_len = ((0.8 * capacity / i_charge * 3600.0 / 60.0).round() as usize).max(2);
    let cc = points(0.0, 60.0, cc_len, |dt| {
        let frac = dt / (60.0 * (cc_len - 1) as f64);
        (i_charge, 3.45 + 0.75 * frac)
    });
    let mut t = cc.last().map_or(0.0, |p| p.time_s) + 60.0;
    let cv = points(t, 60.0, 31, |dt| (i_charge * (-dt / 600.0).exp(), CHARGE_START_V));
    t = cv.last().map_or(t, |p| p.time_s) + 60.0;

    let rest_c = relaxation_curve(spec, soh, RelaxationKind::Charge, n)?;
    let rest_charge = rest_step(StepKind::RestAfterCharge, t, &rest_c);
    t = rest_charge.points.last().map_or(t, |p| p.time_s) + 60.0;

    let i_dis = capacity;
    let dis_len = (3600.0 / DISCHARGE_INTERVAL_S) as usize + 1;
    let discharge = points(t, DISCHARGE_INTERVAL_S, dis_len, |dt| {
        (-i_dis, 3.95 - 1.25 * dt / 3600.0)
    });
    t = discharge.last().map_or(t, |p| p.time_s) + 60.0;

    let rest_d = relaxation_curve(spec, soh, RelaxationKind::Discharge, n)?;
    let rest_discharge = rest_step(StepKind::RestAfterDischarge, t, &rest_d);

    Ok(CycleRecord {
        cell_id: spec.cell_id.clone(),
        cycle_index: n,
        steps: vec![
            Step {
                kind: StepKind::ChargeCc,
                points: cc,
            },
            Step {
                kind: StepKind::ChargeCv,
                points: cv,
            },
            rest_charge,
            Step {
                kind: StepKind::DischargeCc,
                points: discharge,
            },
            rest_discharge,
        ],
        charge_rate: Some(spec.charge_rate),
        capacity: None,
    })
}

/// Every cycle of one cell, as it would be parsed from its CSV.
pub fn generate_cell(spec: &SynthCellSpec) -> Result<Vec<CycleRecord>> {
    let caps = soh_trajectory(spec)?;
    caps.iter()
        .enumerate()
        .map(|(i, &q)| build_cycle(spec, i as u32 + 1, q))
        .collect()
}

/// Generated documents: one cycling CSV per cell and a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFleet {
    /// `(file name, CSV text)` in spec order.
    pub files: Vec<(String, String)>,
    pub manifest: String,
}

pub fn cell_file_name(cell_id: &str) -> String {
    format!("{cell_id}.csv")
}

pub const MANIFEST_FILE: &str = "manifest.csv";

pub fn generate_fleet(specs: &[SynthCellSpec]) -> Result<SynthFleet> {
    if specs.is_empty() {
        return Err(Error::Spec("empty fleet".into()));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = specs.iter().find(|s| !seen.insert(s.cell_id.as_str())) {
        return Err(Error::Spec(format!("duplicate cell_id {}", dup.cell_id)));
    }
    let mut files = Vec::with_capacity(specs.len());
    for spec in specs {
        files.push((cell_file_name(&spec.cell_id), write_cycling_csv(&generate_cell(spec)?)));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for spec in specs {
        w.serialize(spec)?;
    }
    let manifest =
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv writer emits UTF-8");
    Ok(SynthFleet { files, manifest })
}

/// Writes the fleet into `dir`, creating it when needed.
pub fn write_fleet(dir: &Path, specs: &[SynthCellSpec]) -> Result<()> {
    let fleet = generate_fleet(specs)?;
    std::fs::create_dir_all(dir)?;
    for (name, text) in &fleet.files {
        std::fs::write(dir.join(name), text)?;
    }
    std::fs::write(dir.join(MANIFEST_FILE), &fleet.manifest)?;
    Ok(())
}

pub fn read_manifest(text: &str) -> Result<Vec<SynthCellSpec>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<SynthCellSpec>, _>>()?)
}

/// The charge-rate tags of the default fleet, assigned round robin.
pub const FLEET_RATES: [f64; 3] = [0.25, 0.5, 1.0];

/// `cells` cells, tagged 0.25C/0.5C/1C in turn. Faster charging fades
/// faster, and the 0.5C and 1C cells develop a knee late in life.
pub fn default_fleet(cells: usize, cycles: u32, seed: u64) -> Vec<SynthCellSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cells)
        .map(|i| {
            let tag = i % FLEET_RATES.len();
            let jitter = |rng: &mut ChaCha8Rng| 1.0 + rng.random_range(-0.1..0.1);
            let mut spec = SynthCellSpec::new(format!("cell{i:02}"));
            spec.cycles = cycles;
            spec.charge_rate = FLEET_RATES[tag];
            spec.linear_rate = [0.0005, 0.0006, 0.0007][tag] * jitter(&mut rng);
            if tag > 0 {
                spec.fade_mode = FadeMode::Knee;
                spec.knee_cycle = [0, 220, 160][tag];
                spec.knee_quadratic = [0.0, 1.5e-6, 2.0e-6][tag] * jitter(&mut rng);
            }
            spec.relax_tau_charge *= jitter(&mut rng);
            spec.relax_tau_discharge *= jitter(&mut rng);
            spec.seed = rng.random();
            spec
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery_data::{coulomb_count_discharge, extract_relaxation, parse_cycling_csv};
    use proptest::prelude::*;

    fn quiet(id: &str) -> SynthCellSpec {
        SynthCellSpec {
            noise_sigma: 0.0,
            ..SynthCellSpec::new(id)
        }
    }

    #[test]
    fn linear_midpoint_and_start() {
        let spec = SynthCellSpec {
            linear_rate: 0.2 / 300.0,
            ..quiet("a")
        };
        assert_eq!(spec.capacity_at(0).0, 3.5);
        assert!((spec.capacity_at(150).0 - 3.15).abs() < 1e-12);
        assert!((spec.capacity_at(300).0 - 2.8).abs() < 1e-12);
    }

    #[test]
    fn knee_beyond_range_is_linear() {
        let lin = SynthCellSpec {
            cycles: 50,
            ..quiet("a")
        };
        let knee = SynthCellSpec {
            fade_mode: FadeMode::Knee,
            knee_cycle: 80,
            knee_quadratic: 1e-4,
            ..lin.clone()
        };
        assert_eq!(soh_trajectory(&lin).unwrap(), soh_trajectory(&knee).unwrap());
    }

    #[test]
    fn clip_at_half_nominal() {
        let spec = SynthCellSpec {
            linear_rate: 0.01,
            cycles: 80,
            ..quiet("a")
        };
        let q = soh_trajectory(&spec).unwrap();
        assert_eq!(*q.last().unwrap(), 1.75);
        assert!(q.iter().all(|&v| v > 0.0 && v <= 3.5));
    }

    #[test]
    fn charge_curve_endpoints() {
        let spec = quiet("a");
        let fresh = relaxation_curve(&spec, 1.0, RelaxationKind::Charge, 0).unwrap();
        assert_eq!(fresh.samples[0], (0.0, 4.2));
        assert_eq!(fresh.len(), 31);
        assert!((relaxation_voltage(&spec, 1.0, RelaxationKind::Charge, 1e9) - 4.08).abs() < 1e-12);
        assert!((relaxation_voltage(&spec, 0.8, RelaxationKind::Charge, 1e9) - 4.04).abs() < 1e-12);
        assert!(relaxation_curve(&spec, 0.0, RelaxationKind::Charge, 0).is_err());
        assert!(relaxation_curve(&spec, 1.01, RelaxationKind::Charge, 0).is_err());
    }

    #[test]
    fn noise_is_seeded_per_cycle_and_kind() {
        let spec = SynthCellSpec::new("a");
        let a = relaxation_curve(&spec, 0.9, RelaxationKind::Charge, 4).unwrap();
        assert_eq!(a, relaxation_curve(&spec, 0.9, RelaxationKind::Charge, 4).unwrap());
        assert_ne!(a, relaxation_curve(&spec, 0.9, RelaxationKind::Charge, 5).unwrap());
    }

    #[test]
    fn ingest_recovers_the_trajectory() {
        let spec = SynthCellSpec {
            cycles: 3,
            linear_rate: 0.01,
            ..SynthCellSpec::new("a")
        };
        let fleet = generate_fleet(std::slice::from_ref(&spec)).unwrap();
        let mut records = parse_cycling_csv(&fleet.files[0].1).unwrap();
        assert_eq!(records.len(), 3);
        let truth = soh_trajectory(&spec).unwrap();
        for (rec, q) in records.iter_mut().zip(truth) {
            let measured = coulomb_count_discharge(rec).unwrap();
            assert!((measured - q).abs() / q < 0.002);
            assert_eq!(crate::battery_data::condition_label(rec.charge_rate), "0.5C");
            let rest = extract_relaxation(rec, RelaxationKind::Charge).unwrap();
            assert_eq!(rest.len(), 31);
            assert_eq!(rest.native_interval, 60.0);
        }
    }

    #[test]
    fn fleet_is_deterministic_and_rejects_duplicates() {
        let specs = default_fleet(3, 4, 7);
        assert_eq!(generate_fleet(&specs).unwrap(), generate_fleet(&specs).unwrap());
        assert_eq!(read_manifest(&generate_fleet(&specs).unwrap().manifest).unwrap(), specs);
        let dup = vec![quiet("x"), quiet("x")];
        assert!(matches!(generate_fleet(&dup), Err(Error::Spec(_))));
        assert!(generate_fleet(&[]).is_err());
    }

    #[test]
    fn default_fleet_has_three_tags_and_valid_fade() {
        let specs = default_fleet(12, 300, 7);
        let tags: BTreeSet<String> = specs.iter().map(|s| format!("{}", s.charge_rate)).collect();
        assert_eq!(tags.len(), 3);
        for s in &specs {
            let q = soh_trajectory(s).unwrap();
            assert!(q
                .iter()
                .all(|&v| v > 0.5 * s.nominal_capacity && v <= s.nominal_capacity));
        }
    }

    proptest! {
        #[test]
        fn quiet_curves_are_strictly_monotone(soh in 0.5f64..=1.0, tau in 60.0f64..2000.0) {
            let spec = SynthCellSpec { relax_tau_charge: tau, relax_tau_discharge: tau, ..quiet("a") };
            let c = relaxation_curve(&spec, soh, RelaxationKind::Charge, 0).unwrap();
            prop_assert!(c.samples.windows(2).all(|w| w[1].1 < w[0].1));
            let d = relaxation_curve(&spec, soh, RelaxationKind::Discharge, 0).unwrap();
            prop_assert!(d.samples.windows(2).all(|w| w[1].1 > w[0].1));
        }

        #[test]
        fn rest_voltage_is_monotone_in_soh(lo in 0.5f64..1.0, gap in 0.001f64..0.5, i in 1usize..31) {
            let hi = (lo + gap).min(1.0);
            prop_assume!(hi > lo);
            let spec = quiet("a");
            let t = i as f64 * REST_INTERVAL_S;
            let (cl, ch) = (
                relaxation_voltage(&spec, lo, RelaxationKind::Charge, t),
                relaxation_voltage(&spec, hi, RelaxationKind::Charge, t),
            );
            prop_assert!(ch > cl);
            let (dl, dh) = (
                relaxation_voltage(&spec, lo, RelaxationKind::Discharge, t),
                relaxation_voltage(&spec, hi, RelaxationKind::Discharge, t),
            );
            prop_assert!(dh < dl);
        }
    }
}
