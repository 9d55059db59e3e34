//! Central finite-difference check of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamId, ParamStore, ParamValues, Tensor};
use crate::error::Result;

/// Gradient magnitudes below this are compared absolutely: the relative
/// error divides by `max(|analytic|, |numeric|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-6;

/// One evaluation of the checked function: its value and the signature of
/// the piecewise-linear decisions taken (see `Graph::signature`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub loss: f64,
    pub signature: u64,
}

impl Probe {
    pub fn smooth(loss: f64) -> Self {
        Probe { loss, signature: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates whose ±ε perturbation crossed a ReLU or pooling kink.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the gradient that `f` accumulates (when handed a gradient
/// buffer) against central differences `(f(w+ε) − f(w−ε)) / 2ε` on up to
/// `per_tensor` sampled coordinates of every trainable parameter.
///
/// Coordinates whose perturbed evaluations change the probe signature are
/// skipped, since the function is not differentiable between them.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut f: F,
    eps: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamValues, Option<&mut Gradients>) -> Result<Probe>,
{
    store.zero_grads();
    let base = {
        let (values, grads) = store.split();
        f(values, Some(grads))?
    };
    let analytic = store.grads().clone();
    store.zero_grads();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let Some(grad) = analytic.get(id) else {
            continue;
        };
        let len = store.value(id).len();
        let picks = sample(&mut rng, len, per_tensor.min(len));
        for flat in picks.iter() {
            let original = flat_slice(store.value(id))[flat];
            set_flat(store, id, flat, original + eps);
            let plus = f(store.values(), None)?;
            set_flat(store, id, flat, original - eps);
            let minus = f(store.values(), None)?;
            set_flat(store, id, flat, original);
            if plus.signature != base.signature || minus.signature != base.signature {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * eps);
            let a = flat_slice(grad)[flat];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err >= report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.values().entry(id).name.clone(), flat));
            }
        }
    }
    Ok(report)
}

fn flat_slice(t: &Tensor) -> &[f64] {
    t.as_slice().expect("parameters are kept in standard layout")
}

fn set_flat(store: &mut ParamStore, id: ParamId, flat: usize, v: f64) {
    store
        .value_mut(id)
        .as_slice_mut()
        .expect("parameters are kept in standard layout")[flat] = v;
}

#[cfg(test)]
mod tests {
    use ndarray::arr1;

    use super::*;
    use crate::nd::params::ParamKind;

    fn quadratic_store() -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", ParamKind::Weight, arr1(&[0.3, -1.2, 2.5, 0.8]).into_dyn());
        (store, id)
    }

    // f(w) = Σ c_i w_i², gradient 2 c_i w_i
    fn quadratic(id: ParamId, flip: bool) -> impl FnMut(&ParamValues, Option<&mut Gradients>) -> Result<Probe> {
        let c = [1.0, 2.0, 0.5, 3.0];
        move |values, grads| {
            let w = values.get(id);
            let loss = w.iter().zip(c).map(|(w, c)| c * w * w).sum();
            if let Some(grads) = grads {
                let g = grads.slot(id).unwrap();
                for (i, (gv, wv)) in g.iter_mut().zip(w.iter()).enumerate() {
                    let d = 2.0 * c[i] * wv;
                    *gv += if flip { -d } else { d };
                }
            }
            Ok(Probe::smooth(loss))
        }
    }

    #[test]
    fn quadratic_is_exact() {
        let (mut store, id) = quadratic_store();
        let report = grad_check(&mut store, quadratic(id, false), 1e-5, 20, 0).unwrap();
        assert_eq!(report.checked, 4);
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn sign_flip_is_caught() {
        let (mut store, id) = quadratic_store();
        let report = grad_check(&mut store, quadratic(id, true), 1e-5, 20, 0).unwrap();
        assert!(report.max_rel_error > 0.1);
    }

    #[test]
    fn parameters_are_restored() {
        let (mut store, id) = quadratic_store();
        let before = store.value(id).clone();
        grad_check(&mut store, quadratic(id, false), 1e-3, 20, 1).unwrap();
        assert_eq!(store.value(id), &before);
    }
}
