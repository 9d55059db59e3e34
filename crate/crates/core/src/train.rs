//! Mini-batch training with class-balanced sampling, early stopping on a
//! held-out loss, and best-checkpoint restoration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{stratified_holdout, BalancedBatches, Label};
use crate::error::{Error, Result};
use crate::eval::{confusion, prf};
use crate::models::{Input, Network};
use crate::nd::AdamHyper;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best held-out loss before stopping.
    pub patience: usize,
    /// Stratified share of the training data held out for early stopping.
    pub eval_fraction: f64,
    pub seed: u64,
    pub adam: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 30,
            patience: 3,
            eval_fraction: 0.1,
            seed: 0,
            adam: AdamHyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and max epochs must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 0.5) {
            return Err(Error::Config(format!(
                "eval fraction must lie in (0, 0.5), got {}",
                self.eval_fraction
            )));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best held-out loss; stops after `patience` consecutive
/// epochs without a strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if loss >= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, loss));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    /// Epoch (1-based) and loss of the best observation.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub eval_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_eval_loss: f64,
    pub total_batches: usize,
    pub stopped_early: bool,
}

/// Number of balanced batches in one epoch over `n` examples.
pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Mean inference-mode loss and weighted F1 of `net` on `indices`.
pub fn evaluate(
    net: &Network,
    inputs: &[Input],
    golds: &[usize],
    indices: &[usize],
    classes: &[Label],
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut preds = Vec::with_capacity(indices.len());
    let mut gold = Vec::with_capacity(indices.len());
    for &i in indices {
        loss += net.example_loss(&inputs[i], golds[i])?;
        preds.push(net.predict(&inputs[i])?);
        gold.push(golds[i]);
    }
    let f1 = prf(&confusion(&gold, &preds, classes)?).weighted.f1;
    Ok((loss / indices.len().max(1) as f64, f1))
}

fn check_classes(golds: &[usize], n_classes: usize) -> Result<()> {
    let mut seen = vec![false; n_classes];
    for &g in golds {
        if g >= n_classes {
            return Err(Error::Invalid(format!("class {g} outside {n_classes} classes")));
        }
        seen[g] = true;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::TooFewExamples {
            class: format!("class {c}"),
            count: 0,
            needed: 1,
        });
    }
    Ok(())
}

fn groups(indices: &[usize], golds: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut g = vec![Vec::new(); n_classes];
    for &i in indices {
        g[golds[i]].push(i);
    }
    g
}

fn run_batch(
    net: &mut Network,
    inputs: &[Input],
    golds: &[usize],
    batch: &[usize],
    adam: &mut AdamHyper,
    rng: &mut ChaCha8Rng,
    epoch: usize,
    batch_no: usize,
) -> Result<f64> {
    let items: Vec<(&Input, usize)> = batch.iter().map(|&i| (&inputs[i], golds[i])).collect();
    let loss = net.train_step(&items, adam, rng)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            epoch,
            batch: batch_no,
            norms: net.store().norms(),
        });
    }
    Ok(loss)
}

/// Trains `net` on (`inputs`, `golds`) and leaves it at the parameters of
/// the epoch with the lowest held-out loss.
///
/// A stratified `eval_fraction` of the data is held out; an epoch is
/// `⌈n/batch_size⌉` balanced batches where `n` counts the remaining
/// examples.
pub fn train(
    net: &mut Network,
    inputs: &[Input],
    golds: &[usize],
    classes: &[Label],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    let k = net.n_classes();
    if inputs.len() != golds.len() || inputs.is_empty() {
        return Err(Error::Invalid("training data must be nonempty with one label per input".into()));
    }
    if classes.len() != k {
        return Err(Error::Invalid(format!("{} class names for {k} classes", classes.len())));
    }
    check_classes(golds, k)?;

    let (held, kept) = stratified_holdout(golds, k, config.eval_fraction, config.seed);
    let mut batches = BalancedBatches::from_groups(
        groups(&kept, golds, k),
        config.batch_size,
        config.seed.wrapping_add(1),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut adam = config.adam.clone();
    let per_epoch = batches_per_epoch(kept.len(), config.batch_size);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best = net.store().snapshot();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_eval_loss: f64::INFINITY,
        total_batches: 0,
        stopped_early: false,
    };
    for epoch in 1..=config.max_epochs {
        let mut train_loss = 0.0;
        for b in 0..per_epoch {
            let batch = batches.next().expect("balanced batches never end");
            train_loss += run_batch(net, inputs, golds, &batch.indices, &mut adam, &mut rng, epoch, b + 1)?;
            report.total_batches += 1;
        }
        let (eval_loss, eval_f1) = evaluate(net, inputs, golds, &held, classes)?;
        if !eval_loss.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                batch: per_epoch,
                norms: net.store().norms(),
            });
        }
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: train_loss / per_epoch as f64,
            eval_loss,
            eval_f1,
        });
        match stopper.observe(epoch, eval_loss) {
            StopDecision::Improved => best = net.store().snapshot(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                report.stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_loss) = stopper.best().expect("at least one epoch ran");
    net.store_mut().restore(best);
    report.best_epoch = best_epoch;
    report.best_eval_loss = best_loss;
    Ok(report)
}

/// Balanced training on all of (`inputs`, `golds`) until every example is
/// classified correctly or `max_batches` is reached. Returns the number of
/// batches used and the final training accuracy.
pub fn fit_until_separated(
    net: &mut Network,
    inputs: &[Input],
    golds: &[usize],
    batch_size: usize,
    max_batches: usize,
    adam: AdamHyper,
    seed: u64,
) -> Result<(usize, f64)> {
    let k = net.n_classes();
    check_classes(golds, k)?;
    let all: Vec<usize> = (0..inputs.len()).collect();
    let mut batches = BalancedBatches::from_groups(groups(&all, golds, k), batch_size, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut adam = adam;
    let accuracy = |net: &Network| -> Result<f64> {
        let mut right = 0;
        for (x, &y) in inputs.iter().zip(golds) {
            right += usize::from(net.predict(x)? == y);
        }
        Ok(right as f64 / inputs.len() as f64)
    };
    for b in 1..=max_batches {
        let batch = batches.next().expect("balanced batches never end");
        run_batch(net, inputs, golds, &batch.indices, &mut adam, &mut rng, 1, b)?;
        if b % 10 == 0 || b == max_batches {
            let acc = accuracy(net)?;
            if acc == 1.0 {
                return Ok((b, acc));
            }
        }
    }
    Ok((max_batches, accuracy(net)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{Linear, SparseVec};

    #[test]
    fn stopping_rule_example() {
        let mut s = EarlyStopper::new(3);
        let losses = [1.0, 0.9, 0.95, 0.97, 0.99];
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            if s.observe(i + 1, l) == StopDecision::Stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(5));
        assert_eq!(s.best(), Some((2, 0.9)));
    }

    #[test]
    fn never_stops_before_patience_plus_one() {
        let mut s = EarlyStopper::new(2);
        assert_eq!(s.observe(1, 1.0), StopDecision::Improved);
        assert_eq!(s.observe(2, 2.0), StopDecision::Continue);
        assert_eq!(s.observe(3, 2.0), StopDecision::Stop);
    }

    fn toy(n: usize) -> (Vec<Input>, Vec<usize>) {
        let mut inputs = Vec::new();
        let mut golds = Vec::new();
        for i in 0..n {
            let y = i % 2;
            let x = SparseVec::from_entries(vec![(y, 1.0 + (i % 3) as f64), (2 + i % 4, 1.0)]).unwrap();
            inputs.push(Input::Sparse(x));
            golds.push(y);
        }
        (inputs, golds)
    }

    const TWO: [Label; 2] = [Label::None, Label::Abusive];

    #[test]
    fn one_epoch_runs_ceil_n_over_b_batches() {
        let (inputs, golds) = toy(100);
        let mut net = Linear::logreg(6, 2, 1e-4).unwrap();
        let config = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let report = train(&mut net, &inputs, &golds, &TWO, &config).unwrap();
        // 10 held out, 90 remain
        assert_eq!(report.total_batches, 3);
        assert_eq!(report.epochs.len(), 1);
    }

    #[test]
    fn restored_parameters_reproduce_best_loss() {
        let (inputs, golds) = toy(80);
        let mut net = Linear::logreg(6, 2, 1e-4).unwrap();
        let config = TrainConfig {
            max_epochs: 8,
            seed: 4,
            adam: AdamHyper::default().with_learning_rate(0.05),
            ..TrainConfig::default()
        };
        let report = train(&mut net, &inputs, &golds, &TWO, &config).unwrap();
        let (held, _) = stratified_holdout(&golds, 2, config.eval_fraction, config.seed);
        let (loss, _) = evaluate(&net, &inputs, &golds, &held, &TWO).unwrap();
        assert_eq!(loss, report.best_eval_loss);
        let best = report.epochs.iter().map(|e| e.eval_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(best, report.best_eval_loss);
        assert!(report.best_eval_loss < (2f64).ln() / 2.0);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (inputs, golds) = toy(60);
        let config = TrainConfig {
            max_epochs: 4,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut a = Linear::logreg(6, 2, 1e-4).unwrap();
        let mut b = Linear::logreg(6, 2, 1e-4).unwrap();
        let ra = train(&mut a, &inputs, &golds, &TWO, &config).unwrap();
        let rb = train(&mut b, &inputs, &golds, &TWO, &config).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.store().snapshot(), b.store().snapshot());
    }

    #[test]
    fn single_class_data_is_rejected() {
        let (inputs, _) = toy(10);
        let golds = vec![0; 10];
        let mut net = Linear::logreg(6, 2, 0.0).unwrap();
        let err = train(&mut net, &inputs, &golds, &TWO, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::TooFewExamples { .. }));
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let (inputs, golds) = toy(40);
        let mut net = Linear::logreg(6, 2, 0.0).unwrap();
        let id = net.store().id("linear.w").unwrap();
        net.store_mut().value_mut(id).fill(f64::NAN);
        let err = train(&mut net, &inputs, &golds, &TWO, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { epoch: 1, batch: 1, .. }));
    }

    #[test]
    fn config_bounds() {
        let bad = TrainConfig {
            eval_fraction: 0.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
