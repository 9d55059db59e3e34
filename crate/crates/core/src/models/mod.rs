//! Classifier architectures and the [`Network`] wrapper that trains and
//! runs them.

mod charcnn;
mod config;
mod hybrid;
mod wordcnn;

use std::fmt;

use ndarray::{Array1, Ix1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use charcnn::CharCnn;
pub use config::{CharStack, Channel, ModelConfig, ModelKind};
pub use hybrid::HybridCnn;
pub use wordcnn::WordCnn;

use crate::baselines::SparseVec;
use crate::error::{Error, Result};
use crate::nd::{
    adam_step, add_l2, add_l2_grad, decays, grad_check, softmax, AdamHyper, Fault, GradCheckReport,
    Graph, Mode, NodeId, ParamStore, Probe, Tensor,
};
use crate::textprep::{CharGrid, WordIds};

/// An encoded example, in whatever form its model consumes.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Chars(CharGrid),
    Words(WordIds),
    Hybrid(CharGrid, WordIds),
    Sparse(SparseVec),
    Tokens(Vec<usize>),
}

impl Input {
    pub fn kind(&self) -> &'static str {
        match self {
            Input::Chars(_) => "characters",
            Input::Words(_) => "words",
            Input::Hybrid(..) => "characters+words",
            Input::Sparse(_) => "sparse features",
            Input::Tokens(_) => "tokens",
        }
    }
}

pub(crate) fn wrong_input(model: &str, input: &Input) -> Error {
    Error::Invalid(format!("{model} cannot consume {} input", input.kind()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SoftmaxXent,
    SquaredHinge,
}

/// A differentiable map from an [`Input`] to class scores whose
/// parameters live in a separate [`ParamStore`].
pub trait Architecture: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn n_classes(&self) -> usize;

    /// Records the forward pass on `g` and returns the logits node.
    fn forward(
        &self,
        g: &mut Graph<'_>,
        input: &Input,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeId>;

    fn loss_kind(&self) -> LossKind {
        LossKind::SoftmaxXent
    }

    /// Coefficient of the L2 penalty on weight parameters.
    fn l2(&self) -> f64;
}

/// Glorot-uniform tensor: entries in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_shape_fn(shape, |_| rng.random_range(-limit..limit))
}

pub fn zeros(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape)
}

/// An architecture together with its parameters.
#[derive(Debug)]
pub struct Network {
    arch: Box<dyn Architecture>,
    store: ParamStore,
}

impl Network {
    pub fn new(arch: Box<dyn Architecture>, store: ParamStore) -> Self {
        Network { arch, store }
    }

    pub fn arch(&self) -> &dyn Architecture {
        self.arch.as_ref()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes()
    }

    /// Inference-mode class scores.
    pub fn logits(&self, input: &Input) -> Result<Array1<f64>> {
        let mut g = Graph::new(self.store.values());
        // inference draws no random numbers
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.arch.forward(&mut g, input, Mode::Infer, &mut rng)?;
        Ok(g.value(out)
            .view()
            .into_dimensionality::<Ix1>()
            .map_err(|e| Error::Shape(e.to_string()))?
            .to_owned())
    }

    /// Softmax of the inference-mode scores.
    pub fn probabilities(&self, input: &Input) -> Result<Vec<f64>> {
        Ok(softmax(self.logits(input)?.view()).to_vec())
    }

    pub fn predict(&self, input: &Input) -> Result<usize> {
        Ok(argmax(self.logits(input)?.as_slice().expect("contiguous")))
    }

    /// Unregularized inference-mode loss of one example.
    pub fn example_loss(&self, input: &Input, gold: usize) -> Result<f64> {
        let mut g = Graph::new(self.store.values());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.arch.forward(&mut g, input, Mode::Infer, &mut rng)?;
        let loss = loss_node(&mut g, self.arch.loss_kind(), logits, gold)?;
        Ok(g.value(loss).iter().copied().next().unwrap_or(0.0))
    }

    /// Zeroes the gradients, then accumulates those of the mean
    /// unregularized loss over `batch`. Returns that mean loss.
    pub fn accumulate_gradients(
        &mut self,
        batch: &[(&Input, usize)],
        mode: Mode,
        seed: u64,
    ) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.store.zero_grads();
        self.accumulate(batch, mode, &mut rng)
    }

    fn accumulate(&mut self, batch: &[(&Input, usize)], mode: Mode, rng: &mut ChaCha8Rng) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let (values, grads) = self.store.split();
        for &(input, gold) in batch {
            let mut g = Graph::new(values);
            let logits = self.arch.forward(&mut g, input, mode, rng)?;
            let loss = loss_node(&mut g, self.arch.loss_kind(), logits, gold)?;
            total += g.value(loss).iter().copied().next().unwrap_or(0.0);
            g.backward(loss, scale, grads)?;
        }
        Ok(total * scale)
    }

    /// One optimizer step on a mini-batch: mean training-mode loss plus
    /// the L2 penalty, then Adam. Returns the regularized batch objective.
    pub fn train_step(
        &mut self,
        batch: &[(&Input, usize)],
        hyper: &mut AdamHyper,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        self.store.zero_grads();
        let mean = self.accumulate(batch, Mode::Train, rng)?;
        let lambda = self.arch.l2();
        let objective = add_l2(mean, self.store.values(), lambda, decays);
        add_l2_grad(&mut self.store, lambda, decays);
        adam_step(&mut self.store, hyper)?;
        Ok(objective)
    }

    /// Finite-difference check of the regularized training objective over
    /// `examples` (dropout masks are held fixed across evaluations).
    pub fn grad_check(
        &mut self,
        examples: &[(&Input, usize)],
        eps: f64,
        per_tensor: usize,
        seed: u64,
        fault: Option<Fault>,
    ) -> Result<GradCheckReport> {
        let arch = self.arch.as_ref();
        let lambda = arch.l2();
        let objective = |values: &crate::nd::ParamValues,
                         grads: Option<&mut crate::nd::Gradients>|
         -> Result<Probe> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut total = 0.0;
            let mut signature = 0u64;
            let mut grads = grads;
            for &(input, gold) in examples {
                let mut g = Graph::new(values).with_fault(fault);
                let logits = arch.forward(&mut g, input, Mode::Train, &mut rng)?;
                let loss = loss_node(&mut g, arch.loss_kind(), logits, gold)?;
                total += g.value(loss).iter().copied().next().unwrap_or(0.0);
                signature = signature.rotate_left(7) ^ g.signature();
                if let Some(gr) = grads.as_deref_mut() {
                    g.backward(loss, 1.0, gr)?;
                }
            }
            if let Some(gr) = grads {
                for (i, entry) in values.entries().iter().enumerate() {
                    if decays(entry) && lambda != 0.0 {
                        if let Some(slot) = gr.slot(crate::nd::ParamId(i)) {
                            slot.scaled_add(2.0 * lambda, &entry.value);
                        }
                    }
                }
            }
            Ok(Probe {
                loss: add_l2(total, values, lambda, decays),
                signature,
            })
        };
        grad_check(&mut self.store, objective, eps, per_tensor, seed)
    }
}

fn loss_node(g: &mut Graph<'_>, kind: LossKind, logits: NodeId, gold: usize) -> Result<NodeId> {
    match kind {
        LossKind::SoftmaxXent => g.softmax_xent(logits, gold),
        LossKind::SquaredHinge => g.squared_hinge(logits, gold),
    }
}

/// Index of the largest value (first on ties).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
