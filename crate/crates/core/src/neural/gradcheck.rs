use rand::Rng;

use super::Parameters;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `loss` at `n_samples`
/// uniformly drawn parameter coordinates of `model`.
///
/// Relative error is `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn grad_check<M: Parameters>(
    model: &M,
    analytic: &M,
    loss: impl Fn(&M) -> f64,
    n_samples: usize,
    epsilon: f64,
    rng: &mut impl Rng,
) -> GradCheckReport {
    let sizes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
    let total: usize = sizes.iter().sum();
    let grads: Vec<f64> = analytic
        .param_slices()
        .iter()
        .flat_map(|s| s.iter().copied())
        .collect();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let n = n_samples.min(total);
    for _ in 0..n {
        let flat = rng.gen_range(0..total);
        let (mut slice, mut idx) = (0, flat);
        while idx >= sizes[slice] {
            idx -= sizes[slice];
            slice += 1;
        }
        let orig = model.param_slices()[slice][idx];
        probe.param_slices_mut()[slice][idx] = orig + epsilon;
        let up = loss(&probe);
        probe.param_slices_mut()[slice][idx] = orig - epsilon;
        let down = loss(&probe);
        probe.param_slices_mut()[slice][idx] = orig;
        let fd = (up - down) / (2.0 * epsilon);
        let a = grads[flat];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    GradCheckReport {
        max_relative_error: worst,
        checked: n,
    }
}
