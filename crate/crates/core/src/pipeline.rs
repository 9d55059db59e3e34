//! Cross-validated one-step and two-step experiments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{segment_datasets, stratified_folds, FoldPlan, Label, LabeledCorpus, Schema};
use crate::error::{Error, Result};
use crate::eval::{aggregate_folds, confusion, prf, ConfusionMatrix, Prf, Table, TableRow};
use crate::models::argmax;
use crate::system::{Classifier, SystemFactory, SystemKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    OneStep,
    TwoStep,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::OneStep => "one_step",
            RunMode::TwoStep => "two_step",
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "one_step" => Ok(RunMode::OneStep),
            "two_step" => Ok(RunMode::TwoStep),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub mode: RunMode,
    /// The one-step system, or the abusive detector of the two-step run.
    pub step1: SystemKind,
    /// Racism/sexism classifier of the two-step run.
    pub step2: Option<SystemKind>,
    pub folds: usize,
    pub seed: u64,
    /// Minimum abusive probability for a two-step example to reach step 2.
    pub threshold: f64,
}

impl PipelineSpec {
    pub fn one_step(system: SystemKind, folds: usize, seed: u64) -> Self {
        PipelineSpec {
            mode: RunMode::OneStep,
            step1: system,
            step2: None,
            folds,
            seed,
            threshold: 0.5,
        }
    }

    pub fn two_step(step1: SystemKind, step2: SystemKind, folds: usize, seed: u64) -> Self {
        PipelineSpec {
            mode: RunMode::TwoStep,
            step1,
            step2: Some(step2),
            folds,
            seed,
            threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == RunMode::TwoStep && self.step2.is_none() {
            return Err(Error::Config("two-step runs need a step-2 system".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Row label in the result tables, e.g. `HybridCNN + LR`.
    pub fn system_name(&self) -> String {
        match (self.mode, self.step2) {
            (RunMode::TwoStep, Some(s2)) => format!("{} + {}", self.step1, s2),
            _ => self.step1.to_string(),
        }
    }
}

/// Three-class label from a step-1 abusive probability and step-2 scores
/// ordered [Racism, Sexism].
pub fn compose_two_step(p_abusive: f64, step2_scores: &[f64], threshold: f64) -> Label {
    if p_abusive < threshold {
        return Label::None;
    }
    Schema::RacismSexism
        .label_at(argmax(step2_scores))
        .unwrap_or(Label::Racism)
}

/// Digest of a state fit on training data, tagged with its step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    pub step: &'static str,
    pub name: &'static str,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_ids: Vec<String>,
    pub three_class: ConfusionMatrix,
    pub step1: Option<ConfusionMatrix>,
    pub step2: Option<ConfusionMatrix>,
    pub fingerprints: Vec<Fingerprint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: PipelineSpec,
    pub folds: Vec<FoldOutcome>,
    pub three_class: Prf,
    pub step1: Option<Prf>,
    pub step2: Option<Prf>,
}

fn fingerprints(step: &'static str, c: &dyn Classifier) -> Vec<Fingerprint> {
    c.fingerprints()
        .into_iter()
        .map(|(name, digest)| Fingerprint { step, name, digest })
        .collect()
}

fn predict_all(c: &dyn Classifier, corpus: &LabeledCorpus, indices: &[usize]) -> Result<Vec<usize>> {
    indices
        .iter()
        .map(|&i| c.predict(&corpus.examples()[i].text))
        .collect()
}

fn check_classes(c: &dyn Classifier, expected: Schema) -> Result<()> {
    if c.classes() != expected.classes() {
        return Err(Error::Invalid(format!(
            "classifier reports classes {:?}, expected {}",
            c.classes(),
            expected.name()
        )));
    }
    Ok(())
}

/// Runs `spec` over a three-class corpus. Both modes draw the same
/// [`FoldPlan`] for the same seed, and fold `f` trains with seed
/// `seed + f`.
pub fn run_experiment(
    corpus: &LabeledCorpus,
    spec: &PipelineSpec,
    factory: &dyn SystemFactory,
) -> Result<ExperimentResult> {
    spec.validate()?;
    if corpus.schema() != Schema::ThreeClass {
        return Err(Error::Invalid("experiments need a three-class corpus".into()));
    }
    let plan = stratified_folds(corpus, spec.folds, spec.seed)?;
    let mut folds = Vec::with_capacity(spec.folds);
    for fold in 0..spec.folds {
        folds.push(run_fold(corpus, &plan, fold, spec, factory)?);
    }
    let three: Vec<Prf> = folds.iter().map(|f| prf(&f.three_class)).collect();
    let mut result = ExperimentResult {
        spec: spec.clone(),
        three_class: aggregate_folds(&three)?,
        step1: None,
        step2: None,
        folds,
    };
    if spec.mode == RunMode::TwoStep {
        let s1: Vec<Prf> = result.folds.iter().filter_map(|f| f.step1.as_ref()).map(prf).collect();
        let s2: Vec<Prf> = result.folds.iter().filter_map(|f| f.step2.as_ref()).map(prf).collect();
        result.step1 = Some(aggregate_folds(&s1)?);
        result.step2 = Some(aggregate_folds(&s2)?);
    }
    Ok(result)
}

pub fn run_one_step(
    corpus: &LabeledCorpus,
    system: SystemKind,
    folds: usize,
    seed: u64,
    factory: &dyn SystemFactory,
) -> Result<ExperimentResult> {
    run_experiment(corpus, &PipelineSpec::one_step(system, folds, seed), factory)
}

pub fn run_two_step(
    corpus: &LabeledCorpus,
    step1: SystemKind,
    step2: SystemKind,
    folds: usize,
    seed: u64,
    factory: &dyn SystemFactory,
) -> Result<ExperimentResult> {
    run_experiment(corpus, &PipelineSpec::two_step(step1, step2, folds, seed), factory)
}

fn run_fold(
    corpus: &LabeledCorpus,
    plan: &FoldPlan,
    fold: usize,
    spec: &PipelineSpec,
    factory: &dyn SystemFactory,
) -> Result<FoldOutcome> {
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let seed = spec.seed.wrapping_add(fold as u64);
    let train = corpus.subset(&train_idx);
    let test = corpus.subset(&test_idx);
    let all: Vec<usize> = (0..test.len()).collect();
    let golds = test.class_indices();
    let three = Schema::ThreeClass.classes();
    let test_ids = test.examples().iter().map(|e| e.id.clone()).collect();

    if spec.mode == RunMode::OneStep {
        let model = factory.fit(spec.step1, &train, seed)?;
        check_classes(model.as_ref(), Schema::ThreeClass)?;
        let preds = predict_all(model.as_ref(), &test, &all)?;
        return Ok(FoldOutcome {
            fold,
            test_ids,
            three_class: confusion(&golds, &preds, three)?,
            step1: None,
            step2: None,
            fingerprints: fingerprints("one_step", model.as_ref()),
        });
    }

    let step2_kind = spec.step2.expect("validated");
    let train_views = segment_datasets(&train)?;
    if train_views.two_step_2.is_empty() {
        return Err(Error::TooFewExamples {
            class: "abusive".into(),
            count: 0,
            needed: 1,
        });
    }
    let detector = factory.fit(spec.step1, &train_views.two_step_1, seed)?;
    check_classes(detector.as_ref(), Schema::NoneAbusive)?;
    let typer = factory.fit(step2_kind, &train_views.two_step_2, seed)?;
    check_classes(typer.as_ref(), Schema::RacismSexism)?;
    let abusive_at = Schema::NoneAbusive.index_of(Label::Abusive).expect("abusive class");

    let mut composed = Vec::with_capacity(test.len());
    let mut step1_preds = Vec::with_capacity(test.len());
    for e in test.examples() {
        let p = detector.probabilities(&e.text)?;
        step1_preds.push(argmax(&p));
        let label = if p[abusive_at] < spec.threshold {
            Label::None
        } else {
            compose_two_step(p[abusive_at], &typer.probabilities(&e.text)?, spec.threshold)
        };
        composed.push(Schema::ThreeClass.index_of(label).expect("three-class label"));
    }
    let test_views = segment_datasets(&test)?;
    let step1_gold = test_views.two_step_1.class_indices();
    let abusive_idx: Vec<usize> = (0..test_views.two_step_2.len()).collect();
    let step2_preds = predict_all(typer.as_ref(), &test_views.two_step_2, &abusive_idx)?;

    let mut prints = fingerprints("step1", detector.as_ref());
    prints.extend(fingerprints("step2", typer.as_ref()));
    Ok(FoldOutcome {
        fold,
        test_ids,
        three_class: confusion(&golds, &composed, three)?,
        step1: Some(confusion(&step1_gold, &step1_preds, Schema::NoneAbusive.classes())?),
        step2: Some(confusion(
            &test_views.two_step_2.class_indices(),
            &step2_preds,
            Schema::RacismSexism.classes(),
        )?),
        fingerprints: prints,
    })
}

pub const THREE_CLASS_COLUMNS: [&str; 4] = ["None", "Racism", "Sexism", "Total"];
pub const STEP1_COLUMNS: [&str; 2] = ["Abusive", "Weighted"];
pub const STEP2_COLUMNS: [&str; 3] = ["Racism", "Sexism", "Total"];

impl ExperimentResult {
    pub fn three_class_row(&self) -> TableRow {
        TableRow::from_prf(self.spec.system_name(), &self.three_class, Schema::ThreeClass.classes(), true)
    }

    pub fn step1_row(&self) -> Option<TableRow> {
        let p = self.step1.as_ref()?;
        Some(TableRow::from_prf(self.spec.step1.to_string(), p, &[Label::Abusive], true))
    }

    pub fn step2_row(&self) -> Option<TableRow> {
        let p = self.step2.as_ref()?;
        let name = self.spec.step2?.to_string();
        Some(TableRow::from_prf(name, p, Schema::RacismSexism.classes(), true))
    }

    /// Result tables keyed by their report file stem.
    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        let mut out = Vec::new();
        let mut three = match self.spec.mode {
            RunMode::OneStep => Table::new("One-step classification", &THREE_CLASS_COLUMNS),
            RunMode::TwoStep => Table::new("Two-step classification (composed)", &THREE_CLASS_COLUMNS),
        };
        three.push(self.three_class_row());
        out.push((
            match self.spec.mode {
                RunMode::OneStep => "results_one_step",
                RunMode::TwoStep => "results_two_step",
            },
            three,
        ));
        if let Some(row) = self.step1_row() {
            let mut t = Table::new("Step 1: abusive language detection", &STEP1_COLUMNS);
            t.push(row);
            out.push(("results_step1", t));
        }
        if let Some(row) = self.step2_row() {
            let mut t = Table::new("Step 2: racism/sexism classification", &STEP2_COLUMNS);
            t.push(row);
            out.push(("results_step2", t));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::corpus::Example;
    use crate::synth::{synth_corpus, SynthSpec};

    #[test]
    fn threshold_rule() {
        assert_eq!(compose_two_step(0.2, &[0.0, 5.0], 0.5), Label::None);
        assert_eq!(compose_two_step(0.9, &[0.1, 0.9], 0.5), Label::Sexism);
        assert_eq!(compose_two_step(0.5, &[0.7, 0.3], 0.5), Label::Racism);
    }

    #[test]
    fn composition_grid() {
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            for (scores, typed) in [([1.0, 0.0], Label::Racism), ([0.0, 1.0], Label::Sexism)] {
                let expected = if p < 0.5 { Label::None } else { typed };
                assert_eq!(compose_two_step(p, &scores, 0.5), expected);
            }
        }
    }

    /// Looks texts up in a table of gold labels.
    struct Oracle {
        gold: HashMap<String, Label>,
        majority_step2: bool,
    }

    struct Fixed {
        classes: Vec<Label>,
        answer: Box<dyn Fn(&str) -> Label + Send + Sync>,
    }

    impl Classifier for Fixed {
        fn classes(&self) -> &[Label] {
            &self.classes
        }

        fn probabilities(&self, text: &str) -> Result<Vec<f64>> {
            let label = (self.answer)(text);
            Ok(self.classes.iter().map(|&c| if c == label { 1.0 } else { 0.0 }).collect())
        }
    }

    impl SystemFactory for Oracle {
        fn fit(&self, _kind: SystemKind, train: &LabeledCorpus, _seed: u64) -> Result<Box<dyn Classifier>> {
            let schema = train.schema();
            let gold = self.gold.clone();
            let majority = self.majority_step2 && schema == Schema::RacismSexism;
            let top = schema
                .classes()
                .iter()
                .copied()
                .max_by_key(|&l| (train.count(l), std::cmp::Reverse(l as u8)))
                .unwrap();
            Ok(Box::new(Fixed {
                classes: schema.classes().to_vec(),
                answer: Box::new(move |text| {
                    let g = gold[text];
                    if majority {
                        top
                    } else if schema == Schema::NoneAbusive {
                        crate::corpus::to_step1(g)
                    } else {
                        g
                    }
                }),
            }))
        }
    }

    fn corpus() -> LabeledCorpus {
        synth_corpus(&SynthSpec::three_class(60, 20, 30), 1).unwrap()
    }

    fn oracle(c: &LabeledCorpus, majority_step2: bool) -> Oracle {
        Oracle {
            gold: c.examples().iter().map(|e| (e.text.clone(), e.label)).collect(),
            majority_step2,
        }
    }

    #[test]
    fn oracles_score_one() {
        let c = corpus();
        let one = run_one_step(&c, SystemKind::Lr, 5, 3, &oracle(&c, false)).unwrap();
        assert_eq!(one.three_class.weighted.f1, 1.0);
        let two = run_two_step(&c, SystemKind::Lr, SystemKind::Lr, 5, 3, &oracle(&c, false)).unwrap();
        assert_eq!(two.three_class.weighted.f1, 1.0);
        assert_eq!(two.step1.unwrap().weighted.f1, 1.0);
        assert_eq!(two.step2.unwrap().weighted.f1, 1.0);
        for (a, b) in one.folds.iter().zip(&two.folds) {
            assert_eq!(a.test_ids, b.test_ids);
        }
    }

    #[test]
    fn majority_step2_errors_stay_in_abusive_rows() {
        let c = corpus();
        let r = run_two_step(&c, SystemKind::Lr, SystemKind::Lr, 5, 3, &oracle(&c, true)).unwrap();
        for f in &r.folds {
            let none_row = &f.three_class.counts[0];
            assert_eq!(none_row[1] + none_row[2], 0);
            assert_eq!(f.three_class.col_sum(0), none_row[0]);
        }
        assert!(r.three_class.weighted.f1 < 1.0);
    }

    #[test]
    fn majority_class_matches_its_share() {
        // constant "None" predictor on Table 1 proportions
        struct Majority;
        impl SystemFactory for Majority {
            fn fit(&self, _: SystemKind, train: &LabeledCorpus, _: u64) -> Result<Box<dyn Classifier>> {
                Ok(Box::new(Fixed {
                    classes: train.schema().classes().to_vec(),
                    answer: Box::new(|_| Label::None),
                }))
            }
        }
        let c = synth_corpus(&SynthSpec::three_class(12427, 2059, 3864), 0).unwrap();
        let r = run_one_step(&c, SystemKind::Lr, 10, 0, &Majority).unwrap();
        let share = 12427.0 / 18350.0;
        // None: P = share, R = 1; others score zero
        let expected = share * (2.0 * share / (share + 1.0));
        assert!((r.three_class.weighted.f1 - expected).abs() < 1e-3, "{}", r.three_class.weighted.f1);
    }

    #[test]
    fn two_step_without_abusive_training_data_fails() {
        let examples: Vec<Example> = (0..10)
            .map(|i| Example::new(format!("{i}"), Label::None, format!("text {i}")))
            .collect();
        let c = LabeledCorpus::new(Schema::ThreeClass, examples).unwrap();
        let spec = PipelineSpec::two_step(SystemKind::Lr, SystemKind::Lr, 2, 0);
        assert!(run_experiment(&c, &spec, &oracle(&c, false)).is_err());
    }

    #[test]
    fn two_step_spec_needs_step2() {
        let mut spec = PipelineSpec::two_step(SystemKind::Lr, SystemKind::Lr, 5, 0);
        spec.step2 = None;
        assert!(spec.validate().is_err());
        assert_eq!(
            PipelineSpec::two_step(SystemKind::HybridCnn, SystemKind::Lr, 5, 0).system_name(),
            "HybridCNN + LR"
        );
    }
}
