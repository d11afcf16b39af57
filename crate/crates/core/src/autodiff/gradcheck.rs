use super::tensor::Tensor;
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Lower bound on the denominator of the relative error.
    pub floor: f64,
    /// Largest number of entries probed per input; `None` probes all.
    pub max_entries: Option<usize>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            step: 1e-5,
            floor: 1e-6,
            max_entries: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Input index and flat entry of the worst relative error.
    pub worst: Option<(usize, usize)>,
}

impl GradcheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    pub fn merge(&mut self, other: &GradcheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.checked += other.checked;
    }
}

/// Compares analytic gradients with central differences.
///
/// `f` evaluates the scalar output for the given inputs; when `with_grad`
/// is set it must also return one gradient per input.
pub fn gradcheck<F>(inputs: &[Tensor], cfg: &GradcheckConfig, mut f: F) -> Result<GradcheckReport>
where
    F: FnMut(&[Tensor], bool) -> Result<(f64, Option<Vec<Vec<f64>>>)>,
{
    let (_, grads) = f(inputs, true)?;
    let grads = grads.expect("gradient requested");
    let mut probe = inputs.to_vec();
    let mut report = GradcheckReport::default();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let count = cfg.max_entries.map_or(n, |m| m.min(n));
        for s in 0..count {
            // Evenly spread probes when sampling.
            let j = if count == n { s } else { s * n / count };
            let orig = input.data()[j];
            probe[i].data_mut()[j] = orig + cfg.step;
            let (fp, _) = f(&probe, false)?;
            probe[i].data_mut()[j] = orig - cfg.step;
            let (fm, _) = f(&probe, false)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * cfg.step);
            let analytic = grads[i][j];
            let abs = (numeric - analytic).abs();
            let rel = abs / numeric.abs().max(analytic.abs()).max(cfg.floor);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}
