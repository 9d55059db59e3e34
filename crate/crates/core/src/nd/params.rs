//! Named parameters with gradients and Adam moments.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Tensor = ArrayD<f64>;

/// Handle to one parameter of a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Role of a parameter, which decides whether it is updated and whether
/// the L2 penalty applies to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// Convolution filters and fully-connected weights: trained and decayed.
    Weight,
    /// Trained, never decayed.
    Bias,
    /// Lookup table, never decayed; trained only when the flag is set.
    Embedding { trainable: bool },
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::Embedding { trainable: false })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// The values side of a store, borrowed by graphs during a forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamValues {
    entries: Vec<ParamEntry>,
}

impl ParamValues {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Gradient accumulators; `None` for parameters that are not trained.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    tensors: Vec<Option<Tensor>>,
    populated: bool,
}

impl Gradients {
    /// Accumulator of `id`, or `None` when the parameter is frozen. Marks
    /// the gradients as populated.
    pub fn slot(&mut self, id: ParamId) -> Option<&mut Tensor> {
        self.populated = true;
        self.tensors[id.0].as_mut()
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.tensors[id.0].as_ref()
    }

    pub fn is_populated(&self) -> bool {
        self.populated
    }

    pub fn zero(&mut self) {
        for g in self.tensors.iter_mut().flatten() {
            g.fill(0.0);
        }
        self.populated = false;
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Tensor,
    v: Tensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    values: ParamValues,
    grads: Gradients,
    moments: Vec<Option<Moments>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.id(&name).is_none(), "duplicate parameter `{name}`");
        let id = ParamId(self.values.entries.len());
        let (grad, moments) = if kind.trainable() {
            let zeros = Tensor::zeros(value.raw_dim());
            (
                Some(zeros.clone()),
                Some(Moments {
                    m: zeros.clone(),
                    v: zeros,
                }),
            )
        } else {
            (None, None)
        };
        self.values.entries.push(ParamEntry { name, kind, value });
        self.grads.tensors.push(grad);
        self.moments.push(moments);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.values
            .entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn values(&self) -> &ParamValues {
        &self.values
    }

    pub fn grads(&self) -> &Gradients {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Gradients {
        &mut self.grads
    }

    /// Simultaneous read access to values and write access to gradients.
    pub fn split(&mut self) -> (&ParamValues, &mut Gradients) {
        (&self.values, &mut self.grads)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        self.values.get(id)
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values.entries[id.0].value
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.entries.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grads(&mut self) {
        self.grads.zero();
    }

    /// Copy of all parameter values, for checkpointing.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.values.entries.iter().map(|e| e.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: Vec<Tensor>) {
        assert_eq!(snapshot.len(), self.values.entries.len());
        for (e, v) in self.values.entries.iter_mut().zip(snapshot) {
            assert_eq!(e.value.shape(), v.shape());
            e.value = v;
        }
    }

    /// Frobenius norm of every parameter, formatted `name=norm`.
    pub fn norms(&self) -> String {
        self.values
            .entries
            .iter()
            .map(|e| format!("{}={:.4e}", e.name, e.value.iter().map(|v| v * v).sum::<f64>().sqrt()))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn parameter_count(&self) -> usize {
        self.values.entries.iter().map(|e| e.value.len()).sum()
    }
}

/// Adam settings and step counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
        }
    }
}

impl AdamHyper {
    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0
            && self.epsilon > 0.0
            && in_unit(self.beta1)
            && in_unit(self.beta2))
        {
            return Err(Error::Config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of every trainable parameter, followed
/// by zeroing the gradients.
pub fn adam_step(store: &mut ParamStore, hyper: &mut AdamHyper) -> Result<()> {
    if !store.grads.populated {
        return Err(Error::GradientsUnset);
    }
    hyper.step += 1;
    let t = hyper.step as i32;
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = hyper.learning_rate;
    let eps = hyper.epsilon;
    for ((entry, grad), moments) in store
        .values
        .entries
        .iter_mut()
        .zip(&store.grads.tensors)
        .zip(&mut store.moments)
    {
        let (Some(g), Some(mo)) = (grad, moments) else {
            continue;
        };
        ndarray::Zip::from(&mut entry.value)
            .and(&mut mo.m)
            .and(&mut mo.v)
            .and(g)
            .for_each(|w, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    store.grads.zero();
    Ok(())
}

/// Whether the L2 penalty covers a parameter: weights only.
pub fn decays(entry: &ParamEntry) -> bool {
    entry.kind == ParamKind::Weight
}

/// `loss + λ Σ ‖w‖²` over the parameters selected by `include`.
pub fn add_l2(
    loss: f64,
    params: &ParamValues,
    lambda: f64,
    include: impl Fn(&ParamEntry) -> bool,
) -> f64 {
    if lambda == 0.0 {
        return loss;
    }
    let penalty: f64 = params
        .entries
        .iter()
        .filter(|e| include(e))
        .map(|e| e.value.iter().map(|v| v * v).sum::<f64>())
        .sum();
    loss + lambda * penalty
}

/// Adds the penalty gradient `2λw` for the selected parameters.
pub fn add_l2_grad(store: &mut ParamStore, lambda: f64, include: impl Fn(&ParamEntry) -> bool) {
    if lambda == 0.0 {
        return;
    }
    let (values, grads) = store.split();
    for (i, entry) in values.entries.iter().enumerate() {
        if !include(entry) {
            continue;
        }
        if let Some(g) = grads.slot(ParamId(i)) {
            g.scaled_add(2.0 * lambda, &entry.value);
        }
    }
}

#[cfg(test)]
mod tests {
    use ndarray::arr1;

    use super::*;

    fn scalar_store(w: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", ParamKind::Weight, arr1(&[w]).into_dyn());
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut store, id) = scalar_store(1.5);
        store.grads_mut().slot(id);
        let mut hyper = AdamHyper::default();
        adam_step(&mut store, &mut hyper).unwrap();
        assert_eq!(store.value(id)[[0]], 1.5);
    }

    #[test]
    fn step_without_gradients_fails() {
        let (mut store, _) = scalar_store(1.0);
        assert!(matches!(
            adam_step(&mut store, &mut AdamHyper::default()),
            Err(Error::GradientsUnset)
        ));
    }

    #[test]
    fn first_step_is_normalized() {
        let g = 0.37;
        let (mut store, id) = scalar_store(0.0);
        store.grads_mut().slot(id).unwrap()[[0]] = g;
        let mut hyper = AdamHyper::default();
        adam_step(&mut store, &mut hyper).unwrap();
        let expected = -hyper.learning_rate * g / (g.abs() + hyper.epsilon);
        assert!((store.value(id)[[0]] - expected).abs() < 1e-15);
        assert_eq!(hyper.step, 1);
        assert!(store.grads().get(id).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_gradient_steps() {
        let g = -2.0;
        let (mut store, id) = scalar_store(0.0);
        let mut hyper = AdamHyper::default();
        let mut prev = 0.0;
        let mut deltas = Vec::new();
        for _ in 0..2 {
            store.grads_mut().slot(id).unwrap()[[0]] = g;
            adam_step(&mut store, &mut hyper).unwrap();
            let now = store.value(id)[[0]];
            deltas.push(now - prev);
            prev = now;
        }
        // with a constant gradient m̂ = g and v̂ = g² at every step
        for d in &deltas {
            assert!((d - hyper.learning_rate).abs() < 1e-9);
        }
        assert!(deltas[1].abs() <= deltas[0].abs() * (1.0 + 1e-9));
    }

    #[test]
    fn frozen_parameters_are_untouched() {
        let mut store = ParamStore::new();
        let e = store.add(
            "emb",
            ParamKind::Embedding { trainable: false },
            arr1(&[1.0, 2.0]).into_dyn(),
        );
        let w = store.add("w", ParamKind::Weight, arr1(&[1.0]).into_dyn());
        assert!(store.grads_mut().slot(e).is_none());
        store.grads_mut().slot(w).unwrap()[[0]] = 1.0;
        adam_step(&mut store, &mut AdamHyper::default()).unwrap();
        assert_eq!(store.value(e).as_slice().unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn l2_examples() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Weight, arr1(&[3.0, 4.0]).into_dyn());
        store.add("b", ParamKind::Bias, arr1(&[10.0]).into_dyn());
        assert_eq!(add_l2(0.7, store.values(), 0.0, decays), 0.7);
        assert_eq!(add_l2(0.0, store.values(), 1.0, decays), 25.0);
        add_l2_grad(&mut store, 0.5, decays);
        assert_eq!(store.grads().get(w).unwrap().as_slice().unwrap(), &[3.0, 4.0]);
    }
}
