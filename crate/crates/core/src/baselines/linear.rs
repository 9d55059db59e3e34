use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{wrong_input, zeros, Architecture, Input, LossKind, Network};
use crate::nd::{Graph, Mode, NodeId, ParamId, ParamKind, ParamStore};

/// A linear map over sparse features: multinomial logistic regression or a
/// one-vs-rest squared-hinge SVM.
#[derive(Debug, Clone)]
pub struct Linear {
    name: &'static str,
    n_classes: usize,
    loss: LossKind,
    lambda: f64,
    weight: ParamId,
    bias: ParamId,
}

/// Per-batch weight penalty equivalent to the SVM objective
/// `½‖W‖² + C·Σ hinge` divided by `C·n_train`.
pub fn svm_lambda(c: f64, n_train: usize) -> Result<f64> {
    if !(c > 0.0) || n_train == 0 {
        return Err(Error::Config(format!("SVM needs C > 0 and training data, got C={c}")));
    }
    Ok(1.0 / (2.0 * c * n_train as f64))
}

impl Linear {
    /// Softmax regression with an additive `lambda·‖W‖²` penalty.
    pub fn logreg(n_features: usize, n_classes: usize, lambda: f64) -> Result<Network> {
        Self::build("LR", LossKind::SoftmaxXent, n_features, n_classes, lambda)
    }

    pub fn svm(n_features: usize, n_classes: usize, c: f64, n_train: usize) -> Result<Network> {
        Self::build(
            "SVM",
            LossKind::SquaredHinge,
            n_features,
            n_classes,
            svm_lambda(c, n_train)?,
        )
    }

    /// Either model with an explicit per-batch penalty.
    pub fn with_lambda(svm: bool, n_features: usize, n_classes: usize, lambda: f64) -> Result<Network> {
        if svm {
            Self::build("SVM", LossKind::SquaredHinge, n_features, n_classes, lambda)
        } else {
            Self::build("LR", LossKind::SoftmaxXent, n_features, n_classes, lambda)
        }
    }

    fn build(
        name: &'static str,
        loss: LossKind,
        n_features: usize,
        n_classes: usize,
        lambda: f64,
    ) -> Result<Network> {
        if n_classes < 2 {
            return Err(Error::Config(format!("{name} needs at least 2 classes")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("{name} penalty must be ≥ 0")));
        }
        // the objective is convex, so a zero start loses nothing
        let mut store = ParamStore::new();
        let weight = store.add("linear.w", ParamKind::Weight, zeros(&[n_features, n_classes]));
        let bias = store.add("linear.b", ParamKind::Bias, zeros(&[n_classes]));
        let arch = Linear {
            name,
            n_classes,
            loss,
            lambda,
            weight,
            bias,
        };
        Ok(Network::new(Box::new(arch), store))
    }
}

impl Architecture for Linear {
    fn name(&self) -> &'static str {
        self.name
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn forward(
        &self,
        g: &mut Graph<'_>,
        input: &Input,
        _mode: Mode,
        _rng: &mut ChaCha8Rng,
    ) -> Result<NodeId> {
        let Input::Sparse(x) = input else {
            return Err(wrong_input(self.name, input));
        };
        g.sparse_dense(x.entries(), self.weight, self.bias)
    }

    fn loss_kind(&self) -> LossKind {
        self.loss
    }

    fn l2(&self) -> f64 {
        self.lambda
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::baselines::SparseVec;
    use crate::nd::AdamHyper;

    fn sparse(entries: &[(usize, f64)]) -> Input {
        Input::Sparse(SparseVec::from_entries(entries.to_vec()).unwrap())
    }

    fn fit(net: &mut Network, data: &[(Input, usize)], steps: usize, lr: f64) {
        let mut hyper = AdamHyper::default().with_learning_rate(lr);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch: Vec<(&Input, usize)> = data.iter().map(|(x, y)| (x, *y)).collect();
        for _ in 0..steps {
            net.train_step(&batch, &mut hyper, &mut rng).unwrap();
        }
    }

    fn toy() -> Vec<(Input, usize)> {
        vec![
            (sparse(&[(0, 2.0), (2, 1.0)]), 0),
            (sparse(&[(0, 1.0)]), 0),
            (sparse(&[(1, 2.0), (2, 1.0)]), 1),
            (sparse(&[(1, 1.0), (3, 1.0)]), 1),
        ]
    }

    #[test]
    fn separable_points_are_learned() {
        let data = vec![(sparse(&[(0, 1.0)]), 0), (sparse(&[(1, 1.0)]), 1)];
        let mut net = Linear::logreg(2, 2, 1e-4).unwrap();
        fit(&mut net, &data, 200, 0.05);
        for (x, y) in &data {
            assert_eq!(net.predict(x).unwrap(), *y);
        }
    }

    #[test]
    fn huge_penalty_shrinks_weights() {
        let mut net = Linear::logreg(4, 2, 1e3).unwrap();
        fit(&mut net, &toy(), 500, 0.01);
        let w = net.store().value(net.store().id("linear.w").unwrap());
        let max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-2, "max |w| = {max}");
    }

    #[test]
    fn logreg_gradients_match_finite_differences() {
        let mut net = Linear::logreg(4, 3, 0.1).unwrap();
        fit(&mut net, &toy(), 5, 0.1);
        let data = toy();
        let batch: Vec<(&Input, usize)> = data.iter().map(|(x, y)| (x, *y)).collect();
        let report = net.grad_check(&batch, 1e-5, 20, 0, None).unwrap();
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn svm_reaches_unit_margins() {
        let data = toy();
        let mut net = Linear::svm(4, 2, 100.0, data.len()).unwrap();
        fit(&mut net, &data, 2000, 0.02);
        for (x, y) in &data {
            let s = net.logits(x).unwrap();
            let margin = if *y == 0 { s[0] - s[1] } else { s[1] - s[0] };
            // one-vs-rest: each correct score ≥ 1, each wrong ≤ −1
            assert!(s[*y] >= 1.0 - 0.05 && s[1 - y] <= -1.0 + 0.05, "{s:?}");
            assert!(margin >= 2.0 - 0.1);
            assert!(net.example_loss(x, *y).unwrap() < 1e-2);
        }
    }

    #[test]
    fn doubling_features_with_quarter_c_keeps_predictions() {
        let data = toy();
        let doubled: Vec<(Input, usize)> = data
            .iter()
            .map(|(x, y)| match x {
                Input::Sparse(v) => (Input::Sparse(v.scaled(2.0)), *y),
                _ => unreachable!(),
            })
            .collect();
        let probes = [
            sparse(&[(0, 1.0), (1, 1.0)]),
            sparse(&[(2, 3.0)]),
            sparse(&[(0, 1.0), (3, 2.0)]),
            sparse(&[(1, 1.0), (2, 2.0)]),
        ];
        let mut a = Linear::svm(4, 2, 0.5, 4).unwrap();
        let mut b = Linear::svm(4, 2, 0.125, 4).unwrap();
        fit(&mut a, &data, 3000, 0.01);
        fit(&mut b, &doubled, 3000, 0.01);
        for p in &probes {
            let Input::Sparse(v) = p else { unreachable!() };
            assert_eq!(a.predict(p).unwrap(), b.predict(&Input::Sparse(v.scaled(2.0))).unwrap());
        }
    }

    #[test]
    fn bad_svm_constants() {
        assert!(svm_lambda(0.0, 10).is_err());
        assert!(svm_lambda(1.0, 0).is_err());
        assert_eq!(svm_lambda(0.5, 4).unwrap(), 0.25);
    }
}
