use rand::seq::index::sample;
use rand::Rng;

use super::ParameterStore;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose centred stencil straddles a non-differentiable
    /// point (ReLU or hinge kink); these are excluded from the maximum.
    pub skipped_kinks: usize,
    /// `(parameter name, flat index)` of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Picks up to `per_param` distinct coordinates from every parameter.
pub fn sample_coordinates<R: Rng + ?Sized>(
    store: &ParameterStore<f64>,
    per_param: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let mut coords = Vec::new();
    for (slot, p) in store.iter().enumerate() {
        let n = p.value.len();
        let mut picked = sample(rng, n, per_param.min(n)).into_vec();
        picked.sort_unstable();
        coords.extend(picked.into_iter().map(|i| (slot, i)));
    }
    coords
}

/// Compares the analytic gradients already stored in `params` against
/// centred finite differences of `loss` at the given `(slot, index)`
/// coordinates, returning the maximum of
/// `|analytic − fd| / max(|analytic|, |fd|, 1e-6)`.
///
/// A coordinate is treated as a kink and skipped when its forward and
/// backward one-sided differences disagree by more than `1e-3` relative,
/// which a smooth loss cannot produce at the step sizes used here.
pub fn gradient_check<F>(
    params: &mut ParameterStore<f64>,
    mut loss: F,
    epsilon: f64,
    coords: &[(usize, usize)],
) -> GradCheckReport
where
    F: FnMut(&ParameterStore<f64>) -> f64,
{
    let base = loss(params);
    let mut report = GradCheckReport::default();
    for &(slot, idx) in coords {
        let analytic = params.grad(slot).as_slice()[idx];
        let original = params.value(slot).as_slice()[idx];
        params.get_mut(slot).value.as_mut_slice()[idx] = original + epsilon;
        let plus = loss(params);
        params.get_mut(slot).value.as_mut_slice()[idx] = original - epsilon;
        let minus = loss(params);
        params.get_mut(slot).value.as_mut_slice()[idx] = original;

        let forward = (plus - base) / epsilon;
        let backward = (base - minus) / epsilon;
        let scale = forward.abs().max(backward.abs()).max(1.0);
        if (forward - backward).abs() > 1e-3 * scale {
            report.skipped_kinks += 1;
            continue;
        }
        let fd = (plus - minus) / (2.0 * epsilon);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((params.get(slot).name.clone(), idx));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_gradient_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParameterStore::new();
        store.add("theta", DenseMatrix::<f64>::uniform(3, 4, 2.0, &mut rng));
        let g: Vec<f64> = store.value(0).as_slice().iter().map(|v| 2.0 * v).collect();
        store.grad_mut(0).as_mut_slice().copy_from_slice(&g);
        let coords = sample_coordinates(&store, 12, &mut rng);
        let report = gradient_check(&mut store, |s| s.value(0).as_slice().iter().map(|v| v * v).sum(), 1e-5, &coords);
        assert_eq!(report.checked, 12);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn relu_kink_is_skipped() {
        let mut store = ParameterStore::new();
        store.add("x", DenseMatrix::from_vec(1, 2, vec![0.0f64, 1.5]).unwrap());
        store.grad_mut(0).as_mut_slice().copy_from_slice(&[0.0, 1.0]);
        let report = gradient_check(&mut store, |s| s.value(0).as_slice().iter().map(|v| v.max(0.0)).sum(), 1e-5, &[(0, 0), (0, 1)]);
        assert_eq!(report.skipped_kinks, 1);
        assert_eq!(report.checked, 1);
        assert!(report.max_rel_error < 1e-9);
    }

    #[test]
    fn wrong_gradient_detected() {
        let mut store = ParameterStore::new();
        store.add("x", DenseMatrix::from_vec(1, 1, vec![0.5f64]).unwrap());
        store.grad_mut(0).as_mut_slice()[0] = 3.0;
        let report = gradient_check(&mut store, |s| s.value(0).as_slice()[0].powi(2), 1e-5, &[(0, 0)]);
        assert!(report.max_rel_error > 0.5);
        assert_eq!(report.worst, Some(("x".to_string(), 0)));
    }
}
