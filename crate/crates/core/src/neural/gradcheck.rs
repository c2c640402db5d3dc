//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Models with more coordinates than this are checked on a random subset
    /// of `sample_size` coordinates.
    pub full_check_limit: usize,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            full_check_limit: 4000,
            sample_size: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// `(tensor name, flat index)` of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Compares `analytic` (aligned with `params.tensors()`) against central
/// differences of `loss`. Relative error per coordinate is
/// `|a - n| / max(|a|, |n|, 1e-8)`; the maximum is reported.
pub fn grad_check<P, F>(params: &P, loss: F, analytic: &[Vec<f64>], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    F: Fn(&P) -> Result<f64>,
{
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    if analytic.len() != shapes.len() || analytic.iter().zip(&shapes).any(|(g, &n)| g.len() != n) {
        return Err(Error::Shape("analytic gradients do not align with parameters".into()));
    }
    if analytic.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("analytic gradient is not finite".into()));
    }

    let total: usize = shapes.iter().sum();
    let coords: Vec<usize> = if total <= opts.full_check_limit {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picked = sample(&mut rng, total, opts.sample_size.min(total)).into_vec();
        picked.sort_unstable();
        picked
    };

    let names = params.names();
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates_checked: coords.len(),
        worst: None,
    };
    for flat in coords {
        let (mut tensor, mut offset) = (0, flat);
        while offset >= shapes[tensor] {
            offset -= shapes[tensor];
            tensor += 1;
        }
        let original = work.tensors()[tensor].data[offset];
        work.tensors_mut()[tensor].data[offset] = original + opts.step;
        let plus = loss(&work)?;
        work.tensors_mut()[tensor].data[offset] = original - opts.step;
        let minus = loss(&work)?;
        work.tensors_mut()[tensor].data[offset] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "loss not finite near {}[{offset}]",
                names[tensor]
            )));
        }
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[tensor][offset];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if report.worst.is_none() || rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst = Some((names[tensor].clone(), offset));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::DenseMatrix;

    #[test]
    fn quadratic_is_exact_enough() {
        let w = DenseMatrix::column(vec![3.0]);
        let r = grad_check(
            &w,
            |p: &DenseMatrix| Ok(p.data[0] * p.data[0]),
            &[vec![6.0]],
            Default::default(),
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-8, "{r:?}");
        assert_eq!(r.coordinates_checked, 1);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let w = DenseMatrix::column(vec![3.0, 1.0]);
        let loss = |p: &DenseMatrix| Ok(p.data[0] * p.data[0] + p.data[1]);
        let r = grad_check(&w, loss, &[vec![6.0, 2.0]], Default::default()).unwrap();
        assert!((r.max_relative_error - 0.5).abs() < 1e-6);
        assert_eq!(r.worst, Some(("value".to_string(), 1)));
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let w = DenseMatrix::column(vec![0.0]);
        let loss = |p: &DenseMatrix| Ok(1.0 / p.data[0].abs().min(0.0));
        assert!(matches!(
            grad_check(&w, loss, &[vec![0.0]], Default::default()),
            Err(Error::Numeric(_))
        ));
    }
}
