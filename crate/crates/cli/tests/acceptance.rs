//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! (or SKIP) line with the measured values.
//!
//! Run with `cargo test --release -p twostep-cli --test acceptance -- --nocapture`
//! to see the lines; the test profile is optimized as well.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use twostep::corpus::{load_dataset, segment_datasets, Example, Label, LabeledCorpus, Schema};
use twostep::eval::{confusion, prf};
use twostep::models::{Input, ModelConfig, ModelKind};
use twostep::nd::AdamHyper;
use twostep::pipeline::{run_experiment, PipelineSpec};
use twostep::synth::{synth_corpus, SynthSpec};
use twostep::system::{build_system, fit_system, EmbeddingSource, SystemConfig, SystemKind, Trainer};
use twostep::textprep::{segment_hashtag, EmbeddingTable, UnigramModel};
use twostep::train::{fit_until_separated, TrainConfig};
use twostep_cli::commands::{gradcheck_config, gradcheck_system, GRADCHECK_COORDS, GRADCHECK_TOLERANCE};

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[{verdict}] criterion {criterion:>2}: {name}: {detail}");
}

fn skip(criterion: u32, name: &str, why: &str) {
    println!("[SKIP] criterion {criterion:>2}: {name}: {why}");
}

// ---------------------------------------------------------------------------
// 1. gradient fidelity

const GRAD_SYSTEMS: [SystemKind; 5] = [
    SystemKind::CharCnn,
    SystemKind::WordCnn,
    SystemKind::HybridCnn,
    SystemKind::Lr,
    SystemKind::FastText,
];
const GRAD_BUDGET: Duration = Duration::from_secs(60);

#[test]
fn criterion_01_gradient_fidelity() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for kind in GRAD_SYSTEMS {
        let r = gradcheck_system(kind, None, 0).unwrap();
        // every trainable tensor contributes min(GRADCHECK_COORDS, size) samples
        let corpus = synth_corpus(&SynthSpec::three_class(2, 2, 2), 0).unwrap();
        let texts: Vec<&str> = corpus.examples().iter().map(|e| e.text.as_str()).collect();
        let (_, _, net) = build_system(kind, &gradcheck_config(), &texts, 3, 0).unwrap();
        let store = net.store();
        let expected: usize = store
            .ids()
            .filter(|&id| store.values().entry(id).kind.trainable())
            .map(|id| store.value(id).len().min(GRADCHECK_COORDS))
            .sum();
        let ok = r.passes(GRADCHECK_TOLERANCE) && r.checked + r.skipped == expected && r.skipped * 10 <= expected;
        pass &= ok;
        details.push(format!("{kind} {:.1e} ({} coords)", r.max_rel_error, r.checked));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < GRAD_BUDGET;
    report(1, "gradient fidelity", pass, &format!("{} in {elapsed:.1?}", details.join(", ")));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 2. segmentation counts

const TABLE_ONE: [usize; 4] = [12_427, 2_059, 3_864, 5_923];
const SEGMENTATION_TRIALS: u64 = 50;

#[test]
fn criterion_02_segmentation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pass = true;
    for seed in 0..SEGMENTATION_TRIALS {
        let sizes = [rng.random_range(0..40), rng.random_range(0..40), rng.random_range(0..40)];
        let c = synth_corpus(&SynthSpec::three_class(sizes[0], sizes[1], sizes[2]), seed).unwrap();
        let seg = segment_datasets(&c).unwrap();
        let abusive = seg.two_step_1.count(Label::Abusive);
        pass &= abusive == c.count(Label::Racism) + c.count(Label::Sexism)
            && abusive == seg.two_step_2.len()
            && seg.two_step_1.count(Label::None) == sizes[0];
    }
    report(
        2,
        "segmentation oracle",
        pass,
        &format!("|abusive| = |racism| + |sexism| on {SEGMENTATION_TRIALS} synthetic corpora"),
    );
    assert!(pass);
    match std::env::var_os("TWOSTEP_REAL_DATA") {
        Some(path) => {
            let c = load_dataset(Path::new(&path), Schema::ThreeClass).unwrap();
            let seg = segment_datasets(&c).unwrap();
            let got = [
                c.count(Label::None),
                c.count(Label::Racism),
                c.count(Label::Sexism),
                seg.two_step_1.count(Label::Abusive),
            ];
            let ok = got == TABLE_ONE;
            report(2, "published corpus counts", ok, &format!("{got:?} vs {TABLE_ONE:?}"));
            assert!(ok);
        }
        None => skip(2, "published corpus counts", "TWOSTEP_REAL_DATA not set"),
    }
}

// ---------------------------------------------------------------------------
// 3. hashtag DP vs exhaustive search

const DP_STRINGS: usize = 500;
const DP_MAX_LEN: usize = 12;
const DP_BUDGET: Duration = Duration::from_secs(30);
const DP_WORDS: [(&str, u64); 8] = [
    ("no", 6),
    ("on", 4),
    ("one", 3),
    ("ne", 1),
    ("o", 2),
    ("n", 1),
    ("eon", 2),
    ("noon", 1),
];

/// Exact `(num, den)` word probability from the word list.
fn dp_prob(word: &str) -> (u128, u128) {
    let total: u64 = DP_WORDS.iter().map(|w| w.1).sum();
    match DP_WORDS.iter().find(|w| w.0 == word) {
        Some(&(_, c)) => (c as u128, total as u128),
        None => (1, total as u128 * 10u128.pow(word.chars().count() as u32 - 1)),
    }
}

/// Argmax over all 2^(n−1) splits under the documented total order:
/// probability desc, word count asc, word starts read from the end asc.
fn exhaustive(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let n = chars.len();
    if n == 0 {
        return Vec::new();
    }
    let mut best: Option<(u128, u128, Vec<usize>, Vec<String>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut starts = vec![0];
        starts.extend((1..n).filter(|i| mask & (1 << (i - 1)) != 0));
        let (mut num, mut den) = (1u128, 1u128);
        let mut words = Vec::new();
        for (j, &a) in starts.iter().enumerate() {
            let b = starts.get(j + 1).copied().unwrap_or(n);
            let w: String = chars[a..b].iter().collect();
            let (p, q) = dp_prob(&w);
            num *= p;
            den *= q;
            words.push(w);
        }
        let rev: Vec<usize> = starts.iter().rev().copied().collect();
        let better = match &best {
            None => true,
            Some((bn, bd, brev, bw)) => {
                let (l, r) = (num * bd, bn * den);
                l > r || (l == r && (words.len() < bw.len() || (words.len() == bw.len() && rev < *brev)))
            }
        };
        if better {
            best = Some((num, den, rev, words));
        }
    }
    best.expect("nonempty").3
}

#[test]
fn criterion_03_hashtag_dp_equivalence() {
    let model = UnigramModel::from_counts(DP_WORDS);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let alphabet = ['n', 'o', 'e'];
    let start = Instant::now();
    let mut mismatches = 0;
    for _ in 0..DP_STRINGS {
        let len = rng.random_range(0..=DP_MAX_LEN);
        let s: String = (0..len).map(|_| alphabet[rng.random_range(0..3)]).collect();
        if segment_hashtag(&s, &model) != exhaustive(&s) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < DP_BUDGET;
    report(
        3,
        "hashtag DP equivalence",
        pass,
        &format!("{mismatches} mismatches over {DP_STRINGS} strings in {elapsed:.1?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4. metric oracle

const METRIC_PAIRS: usize = 1000;
const WORKED_EXAMPLE_TOL: f64 = 1e-12;
const LABELS: [Label; 3] = [Label::None, Label::Racism, Label::Sexism];

#[test]
fn criterion_04_metric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..METRIC_PAIRS {
        let k = rng.random_range(2..=3);
        let n = rng.random_range(0..30);
        let golds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let got = prf(&confusion(&golds, &preds, &LABELS[..k]).unwrap());
        for c in 0..k {
            let tp = (0..n).filter(|&i| golds[i] == c && preds[i] == c).count();
            let np = preds.iter().filter(|&&p| p == c).count();
            let ng = golds.iter().filter(|&&g| g == c).count();
            let p = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
            let r = if ng == 0 { 0.0 } else { tp as f64 / ng as f64 };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            let s = got.per_class[c];
            if s.precision != p || s.recall != r || s.f1 != f || got.support[c] != ng as f64 {
                mismatches += 1;
            }
        }
    }
    // golds [0,0,1,2], preds [0,1,1,1]: F1 = 2/3, 1/2, 0 with supports 2, 1, 1
    let worked = prf(&confusion(&[0, 0, 1, 2], &[0, 1, 1, 1], &LABELS).unwrap());
    let expected = (2.0 * (2.0 / 3.0) + 0.5) / 4.0;
    let err = (worked.weighted.f1 - expected).abs();
    let pass = mismatches == 0 && err < WORKED_EXAMPLE_TOL;
    report(
        4,
        "metric oracle",
        pass,
        &format!(
            "{mismatches} mismatches over {METRIC_PAIRS} pairs; worked weighted F1 {:.6} (error {err:.1e})",
            worked.weighted.f1
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5. overfit

const OVERFIT_EXAMPLES: [usize; 3] = [11, 11, 10];
const OVERFIT_MAX_BATCHES: usize = 500;
const OVERFIT_BATCH: usize = 32;
const OVERFIT_LEARNING_RATE: f64 = 0.01;
const OVERFIT_CNN_BUDGET: Duration = Duration::from_secs(120);

fn overfit_config() -> SystemConfig {
    let mut c = SystemConfig {
        cnn: ModelConfig::reduced(ModelKind::HybridCnn, 3),
        ngram_min_df: 1,
        ..SystemConfig::default()
    };
    c.cnn.l2 = 1e-4;
    c
}

#[test]
fn criterion_05_overfit() {
    let [a, b, c] = OVERFIT_EXAMPLES;
    let corpus = synth_corpus(&SynthSpec::three_class(a, b, c), 5).unwrap();
    assert_eq!(corpus.len(), 32);
    let texts: Vec<&str> = corpus.examples().iter().map(|e| e.text.as_str()).collect();
    let golds = corpus.class_indices();
    let mut pass = true;
    let mut details = Vec::new();
    for kind in SystemKind::ALL {
        let start = Instant::now();
        let (featurizer, _, mut net) = build_system(kind, &overfit_config(), &texts, 3, 5).unwrap();
        let inputs: Vec<Input> = texts.iter().map(|t| featurizer.encode(t)).collect();
        let adam = AdamHyper::default().with_learning_rate(OVERFIT_LEARNING_RATE);
        let (batches, acc) =
            fit_until_separated(&mut net, &inputs, &golds, OVERFIT_BATCH, OVERFIT_MAX_BATCHES, adam, 5).unwrap();
        let elapsed = start.elapsed();
        let in_time = kind.model_kind().is_none() || elapsed < OVERFIT_CNN_BUDGET;
        pass &= acc == 1.0 && batches <= OVERFIT_MAX_BATCHES && in_time;
        details.push(format!("{kind} {:.0}% @{batches} ({elapsed:.1?})", acc * 100.0));
    }
    report(5, "overfit 32 examples", pass, &details.join(", "));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 6. desk-scale experiment

const DESK_EXAMPLES: usize = 2000;
const DESK_FOLDS: usize = 5;
const DESK_MIN_F1: f64 = 0.90;
const DESK_PARITY: f64 = 0.05;
const DESK_BUDGET: Duration = Duration::from_secs(15 * 60);
/// Epoch cap for the desk-scale run; validation loss on separable data
/// keeps creeping down, so patience alone would run the full default.
const DESK_MAX_EPOCHS: usize = 10;

#[test]
fn criterion_06_desk_scale_experiment() {
    let corpus = synth_corpus(&SynthSpec::table_one_shares(DESK_EXAMPLES), 0).unwrap();
    let mut config = SystemConfig::default();
    config.train.max_epochs = DESK_MAX_EPOCHS;
    let trainer = Trainer { config };
    let start = Instant::now();
    let one = run_experiment(&corpus, &PipelineSpec::one_step(SystemKind::HybridCnn, DESK_FOLDS, 0), &trainer)
        .unwrap();
    let two = run_experiment(
        &corpus,
        &PipelineSpec::two_step(SystemKind::Lr, SystemKind::Lr, DESK_FOLDS, 0),
        &trainer,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let (f_one, f_two) = (one.three_class.weighted.f1, two.three_class.weighted.f1);
    let pass =
        f_one > DESK_MIN_F1 && f_two > DESK_MIN_F1 && (f_one - f_two).abs() <= DESK_PARITY && elapsed < DESK_BUDGET;
    report(
        6,
        "desk-scale experiment",
        pass,
        &format!("one-step HybridCNN F1 {f_one:.4}, two-step LR+LR F1 {f_two:.4}, {elapsed:.1?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 7. frozen embeddings

#[test]
fn criterion_07_static_embeddings() {
    let corpus = synth_corpus(&SynthSpec::three_class(30, 30, 30), 7).unwrap();
    let mut config = overfit_config();
    config.train = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    config.embeddings = EmbeddingSource::Hashed { seed: 77 };
    let mut pass = true;
    let mut details = Vec::new();
    for kind in [SystemKind::WordCnn, SystemKind::HybridCnn] {
        let trained = fit_system(kind, &config, &corpus, 1).unwrap();
        let vocab = match &trained.featurizer {
            twostep::system::Featurizer::Words(w) | twostep::system::Featurizer::Hybrid { words: w, .. } => &w.vocab,
            other => panic!("unexpected featurizer {other:?}"),
        };
        let before = EmbeddingTable::hashed_random(vocab, config.cnn.embedding_dim, 77).digest();
        let after = trained.embedding_digest().unwrap();
        let steps = trained.report.as_ref().map_or(0, |r| r.total_batches);
        pass &= before == after && steps > 0;
        details.push(format!("{kind} {} after {steps} batches", &after[..12]));
    }
    report(7, "static embeddings", pass, &details.join(", "));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8. determinism of `cv`

fn run_cv(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["cv", "--dataset", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "8"];
    args.extend_from_slice(extra);
    let o = Command::new(env!("CARGO_BIN_EXE_twostep")).args(&args).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn dir_contents(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (PathBuf::from(p.file_name().unwrap()), fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn criterion_08_deterministic_reports() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("synth.tsv");
    synth_corpus(&SynthSpec::table_one_shares(300), 8).unwrap().write_tsv(&data).unwrap();
    let runs: [&[&str]; 2] = [
        &["--mode", "two_step", "--step1", "lr", "--step2", "lr", "--folds", "3"],
        &["--mode", "one_step", "--model", "hybridcnn", "--size", "reduced", "--folds", "3", "--set", "l2=0.0001"],
    ];
    let mut pass = true;
    let mut files = 0;
    for (i, extra) in runs.iter().enumerate() {
        let a = tmp.path().join(format!("a{i}"));
        let b = tmp.path().join(format!("b{i}"));
        run_cv(&data, &a, extra);
        run_cv(&data, &b, extra);
        let (ca, cb) = (dir_contents(&a), dir_contents(&b));
        files += ca.len();
        pass &= !ca.is_empty() && ca == cb;
    }
    report(8, "deterministic cv", pass, &format!("{files} report files byte-identical across two runs"));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 9. leakage audit

const AUDIT_FOLDS: usize = 3;

fn mutate_fold(corpus: &LabeledCorpus, test_ids: &[String]) -> LabeledCorpus {
    let examples = corpus
        .examples()
        .iter()
        .map(|e| {
            if test_ids.contains(&e.id) {
                Example::new(e.id.clone(), e.label, format!("zqx{} leaked words #hiddenleak {}", e.id, e.text))
            } else {
                e.clone()
            }
        })
        .collect();
    LabeledCorpus::new(corpus.schema(), examples).unwrap()
}

#[test]
fn criterion_09_leakage_audit() {
    let corpus = synth_corpus(&SynthSpec::table_one_shares(150), 9).unwrap();
    let mut config = overfit_config();
    config.train = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };
    let trainer = Trainer { config };
    let specs = [
        PipelineSpec::two_step(SystemKind::HybridCnn, SystemKind::Lr, AUDIT_FOLDS, 9),
        PipelineSpec::one_step(SystemKind::FastText, AUDIT_FOLDS, 9),
    ];
    let mut pass = true;
    let mut compared = 0;
    let mut sensitive = true;
    for spec in &specs {
        let base = run_experiment(&corpus, spec, &trainer).unwrap();
        for fold in 0..AUDIT_FOLDS {
            let mutated = mutate_fold(&corpus, &base.folds[fold].test_ids);
            let other = run_experiment(&mutated, spec, &trainer).unwrap();
            pass &= other.folds[fold].test_ids == base.folds[fold].test_ids;
            pass &= other.folds[fold].fingerprints == base.folds[fold].fingerprints;
            compared += base.folds[fold].fingerprints.len();
            // the same texts are training data for the other folds
            let next = (fold + 1) % AUDIT_FOLDS;
            sensitive &= other.folds[next].fingerprints != base.folds[next].fingerprints;
        }
    }
    pass &= compared > 0 && sensitive;
    report(
        9,
        "leakage audit",
        pass,
        &format!("{compared} fingerprints unchanged under test-fold mutation; training-fold mutation detected: {sensitive}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 10. published-data stretch goal

const STRETCH_ONE_STEP: f64 = 0.827;
const STRETCH_TWO_STEP: f64 = 0.824;
const STRETCH_TOL: f64 = 0.05;
const STRETCH_FOLDS: usize = 10;

#[test]
fn criterion_10_published_data_stretch() {
    let (Some(data), Some(emb)) = (std::env::var_os("TWOSTEP_REAL_DATA"), std::env::var_os("TWOSTEP_REAL_EMBEDDINGS"))
    else {
        skip(10, "published-data stretch", "TWOSTEP_REAL_DATA / TWOSTEP_REAL_EMBEDDINGS not set");
        return;
    };
    let corpus = load_dataset(Path::new(&data), Schema::ThreeClass).unwrap();
    let trainer = Trainer {
        config: SystemConfig {
            embeddings: EmbeddingSource::File(PathBuf::from(emb)),
            ..SystemConfig::default()
        },
    };
    let one = run_experiment(&corpus, &PipelineSpec::one_step(SystemKind::HybridCnn, STRETCH_FOLDS, 0), &trainer)
        .unwrap();
    let two = run_experiment(
        &corpus,
        &PipelineSpec::two_step(SystemKind::Lr, SystemKind::Lr, STRETCH_FOLDS, 0),
        &trainer,
    )
    .unwrap();
    let (a, b) = (one.three_class.weighted.f1, two.three_class.weighted.f1);
    let pass = (a - STRETCH_ONE_STEP).abs() <= STRETCH_TOL && (b - STRETCH_TWO_STEP).abs() <= STRETCH_TOL;
    report(10, "published-data stretch", pass, &format!("one-step {a:.3}, two-step {b:.3}"));
    assert!(pass);
}
