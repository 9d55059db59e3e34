//! Confusion matrices, precision/recall/F1 with support weighting, and
//! fold aggregation.

mod report;

pub use report::{render_text, render_tsv, Table, TableRow};

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

/// `counts[gold][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<Label>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: &[Label]) -> Self {
        ConfusionMatrix {
            classes: classes.to_vec(),
            counts: vec![vec![0; classes.len()]; classes.len()],
        }
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, gold: usize) -> u64 {
        self.counts[gold].iter().sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        self.counts.iter().map(|r| r[pred]).sum()
    }
}

pub fn confusion(golds: &[usize], preds: &[usize], classes: &[Label]) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::Invalid(format!(
            "{} gold labels but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (&g, &p) in golds.iter().zip(preds) {
        if g >= cm.k() || p >= cm.k() {
            return Err(Error::Invalid(format!("label index outside {} classes", cm.k())));
        }
        cm.counts[g][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        Scores {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

/// Per-class scores plus their support-weighted average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub classes: Vec<Label>,
    pub per_class: Vec<Scores>,
    pub support: Vec<f64>,
    pub weighted: Scores,
}

impl Prf {
    pub fn class(&self, label: Label) -> Option<&Scores> {
        self.classes.iter().position(|&l| l == label).map(|i| &self.per_class[i])
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 per class (0 when a denominator is 0) and
/// their support-weighted means. The weighted F1 is the mean of per-class
/// F1 values, so it need not lie between weighted precision and recall.
pub fn prf(cm: &ConfusionMatrix) -> Prf {
    let k = cm.k();
    let mut per_class = Vec::with_capacity(k);
    let mut support = Vec::with_capacity(k);
    for c in 0..k {
        let tp = cm.counts[c][c];
        per_class.push(Scores::from_pr(ratio(tp, cm.col_sum(c)), ratio(tp, cm.row_sum(c))));
        support.push(cm.row_sum(c) as f64);
    }
    let total: f64 = support.iter().sum();
    let weigh = |get: fn(&Scores) -> f64| {
        if total == 0.0 {
            0.0
        } else {
            per_class.iter().zip(&support).map(|(s, &n)| n * get(s)).sum::<f64>() / total
        }
    };
    let weighted = Scores {
        precision: weigh(|s| s.precision),
        recall: weigh(|s| s.recall),
        f1: weigh(|s| s.f1),
    };
    Prf {
        classes: cm.classes.clone(),
        per_class,
        support,
        weighted,
    }
}

/// Unweighted mean over folds of every reported number.
pub fn aggregate_folds(folds: &[Prf]) -> Result<Prf> {
    let first = folds
        .first()
        .ok_or_else(|| Error::Invalid("no folds to aggregate".into()))?;
    if folds.iter().any(|f| f.classes != first.classes) {
        return Err(Error::Invalid("folds disagree on the class list".into()));
    }
    let n = folds.len() as f64;
    let mean_scores = |get: &dyn Fn(&Prf) -> Scores| {
        let mut s = Scores {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
        for f in folds {
            let v = get(f);
            s.precision += v.precision;
            s.recall += v.recall;
            s.f1 += v.f1;
        }
        Scores {
            precision: s.precision / n,
            recall: s.recall / n,
            f1: s.f1 / n,
        }
    };
    let k = first.classes.len();
    Ok(Prf {
        classes: first.classes.clone(),
        per_class: (0..k).map(|c| mean_scores(&|f| f.per_class[c])).collect(),
        support: (0..k)
            .map(|c| folds.iter().map(|f| f.support[c]).sum::<f64>() / n)
            .collect(),
        weighted: mean_scores(&|f| f.weighted),
    })
}
