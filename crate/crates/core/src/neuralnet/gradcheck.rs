use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8)` over checked entries.
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
}

/// Compare an analytic gradient against central finite differences of
/// `loss`, using the fourth-order five-point stencil
/// `(-f(x+2ε) + 8f(x+ε) - 8f(x-ε) + f(x-2ε)) / 12ε`. Its truncation error is
/// small enough to allow a step where roundoff no longer swamps tiny
/// gradient entries. When `max_params` is set and smaller than the parameter count, a
/// seeded random subset of that size is checked.
pub fn grad_check<F>(
    params: &mut [f64],
    analytic: &[f64],
    mut loss: F,
    eps: f64,
    max_params: Option<(usize, u64)>,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::LengthMismatch {
            expected: params.len(),
            found: analytic.len(),
        });
    }
    let indices: Vec<usize> = match max_params {
        Some((k, seed)) if k < params.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = sample(&mut rng, params.len(), k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..params.len()).collect(),
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: indices.len(),
    };
    for i in indices {
        let orig = params[i];
        let mut at = |delta: f64| {
            params[i] = orig + delta;
            loss(params)
        };
        let f = [at(2.0 * eps), at(eps), at(-eps), at(-2.0 * eps)];
        params[i] = orig;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("loss while perturbing parameter {i}")));
        }
        let fd = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * eps);
        let ad = analytic[i];
        let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-8);
        if rel > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        // loss = ½‖Ax − y‖² for a fixed 3x2 A
        let a = [[1.0, 2.0], [-0.5, 0.3], [2.0, -1.0]];
        let y = [0.2, -1.0, 0.7];
        let loss = |x: &[f64]| -> f64 {
            a.iter()
                .zip(&y)
                .map(|(row, yi)| {
                    let r = row[0] * x[0] + row[1] * x[1] - yi;
                    0.5 * r * r
                })
                .sum()
        };
        let mut x = vec![0.4, -0.9];
        let mut g = vec![0.0; 2];
        for (row, yi) in a.iter().zip(&y) {
            let r = row[0] * x[0] + row[1] * x[1] - yi;
            g[0] += r * row[0];
            g[1] += r * row[1];
        }
        let rep = grad_check(&mut x, &g, loss, 1e-4, None).unwrap();
        assert!(rep.max_rel_error < 1e-7, "{rep:?}");
        assert_eq!(rep.checked, 2);
    }

    #[test]
    fn empty_model_passes_vacuously() {
        let rep = grad_check(&mut [], &[], |_| 0.0, 1e-5, None).unwrap();
        assert_eq!(rep.max_rel_error, 0.0);
        assert_eq!(rep.checked, 0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut x = vec![1.0];
        let rep = grad_check(&mut x, &[3.0], |x| x[0] * x[0], 1e-5, None).unwrap();
        assert!(rep.max_rel_error > 0.3);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut x = vec![0.0];
        let r = grad_check(&mut x, &[0.0], |x| (x[0]).ln(), 1e-5, None);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn sampling_limits_work() {
        let mut x = vec![0.5; 50];
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let rep = grad_check(&mut x, &g, |x| x.iter().map(|v| v * v).sum(), 1e-5, Some((10, 1))).unwrap();
        assert_eq!(rep.checked, 10);
        assert!(rep.max_rel_error < 1e-8);
    }
}
