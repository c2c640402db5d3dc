use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamped linear ramp of the history head's confidence over history length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionSchedule {
    pub n0: f64,
    pub n_ramp: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for FusionSchedule {
    fn default() -> Self {
        Self {
            n0: 10.0,
            n_ramp: 200.0,
            w_min: 0.2,
            w_max: 0.7,
        }
    }
}

impl FusionSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n0.is_finite()
            && self.n_ramp.is_finite()
            && self.n_ramp > 0.0
            && 0.0 <= self.w_min
            && self.w_min <= self.w_max
            && self.w_max <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid fusion schedule {self:?}")))
        }
    }
}

/// Confidence of heads a, b and c. `alpha + beta + gamma == 1.0` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl FusionWeights {
    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    /// Drops absent heads and rescales the rest to sum to one.
    /// Falls back to equal shares when every present head has zero weight.
    pub fn renormalize(&self, present: [bool; 3]) -> Result<[f64; 3]> {
        let count = present.iter().filter(|&&p| p).count();
        if count == 0 {
            return Err(Error::Input("no modality present".into()));
        }
        let raw = self.as_array();
        let mass: f64 = raw.iter().zip(present).filter(|(_, p)| *p).map(|(w, _)| w).sum();
        let mut out = [0.0; 3];
        for i in 0..3 {
            if present[i] {
                out[i] = if mass > 0.0 { raw[i] / mass } else { 1.0 / count as f64 };
            }
        }
        Ok(out)
    }
}

/// Weights for a cycle whose history holds `n` real capacities.
pub fn fusion_weights(n: usize, s: &FusionSchedule) -> FusionWeights {
    let ramp = (n as f64 - s.n0) / s.n_ramp;
    let gamma = (s.w_min + (s.w_max - s.w_min) * ramp).clamp(s.w_min, s.w_max);
    let rest = 1.0 - gamma;
    let alpha = rest / 2.0;
    FusionWeights {
        alpha,
        beta: rest - alpha,
        gamma,
    }
}
