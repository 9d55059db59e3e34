//! The subcommands. Each writes its files under the output directory and
//! its human-readable output to `out`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use twostep::corpus::{load_dataset, segment_datasets, Label, LabeledCorpus, Schema};
use twostep::eval::{render_text, render_tsv, Table};
use twostep::models::{Input, ModelConfig, ModelKind};
use twostep::nd::{Fault, GradCheckReport};
use twostep::pipeline::{run_experiment, ExperimentResult, PipelineSpec, RunMode, THREE_CLASS_COLUMNS};
use twostep::synth::{synth_corpus, SynthSpec};
use twostep::system::{build_system, fit_system, SystemConfig, SystemKind, Trainer};
use twostep::{Error, Result};

use crate::artifact::{self, Model, OUTPUT_LABELS};
use crate::config::RunConfig;

/// File name of the model written by `train`.
pub const MODEL_FILE: &str = "model.twostep";
/// File name of the corpus written by `synth`.
pub const SYNTH_FILE: &str = "synth.tsv";
/// Tolerance `gradcheck` applies to the maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Coordinates sampled per parameter tensor by `gradcheck`.
pub const GRADCHECK_COORDS: usize = 20;
/// Central-difference step used by `gradcheck`.
pub const GRADCHECK_EPS: f64 = 1e-5;

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn three_class(path: &Path) -> Result<LabeledCorpus> {
    load_dataset(path, Schema::ThreeClass)
}

/// Writes the three segmented corpora and a counts summary.
pub fn prepare(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let corpus = three_class(config.dataset()?)?;
    let seg = segment_datasets(&corpus)?;
    fs::create_dir_all(&config.out)?;
    seg.one_step.write_tsv(&config.out.join("one_step.tsv"))?;
    seg.two_step_1.write_tsv(&config.out.join("two_step_1.tsv"))?;
    seg.two_step_2.write_tsv(&config.out.join("two_step_2.tsv"))?;
    let mut summary = String::from("dataset\tlabel\tcount\n");
    for (name, c) in [
        ("one_step", &seg.one_step),
        ("two_step_1", &seg.two_step_1),
        ("two_step_2", &seg.two_step_2),
    ] {
        for &label in c.schema().classes() {
            summary.push_str(&format!("{name}\t{label}\t{}\n", c.count(label)));
        }
        summary.push_str(&format!("{name}\ttotal\t{}\n", c.len()));
    }
    fs::write(config.out.join("counts.tsv"), &summary)?;
    write_out(out, &summary)
}

/// Writes a synthetic three-class corpus with the published label shares.
pub fn synth(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let corpus = synth_corpus(&SynthSpec::table_one_shares(config.synth_size), config.seed)?;
    fs::create_dir_all(&config.out)?;
    let path = config.out.join(SYNTH_FILE);
    corpus.write_tsv(&path)?;
    let counts: Vec<String> = corpus
        .label_counts()
        .iter()
        .map(|(l, n)| format!("{l}={n}"))
        .collect();
    write_out(out, &format!("wrote {} ({})\n", path.display(), counts.join(", ")))
}

/// Trains the configured model on the whole dataset and saves it.
pub fn train(config: &RunConfig, out: &mut dyn Write) -> Result<PathBuf> {
    let corpus = three_class(config.dataset()?)?;
    let model = train_model(config, &corpus)?;
    fs::create_dir_all(&config.out)?;
    let path = config.out.join(MODEL_FILE);
    artifact::save(&model, &path)?;
    write_out(out, &format!("wrote {}\n", path.display()))?;
    Ok(path)
}

pub fn train_model(config: &RunConfig, corpus: &LabeledCorpus) -> Result<Model> {
    let s = &config.system;
    match config.mode {
        RunMode::OneStep => Ok(Model::OneStep(fit_system(config.model, s, corpus, config.seed)?)),
        RunMode::TwoStep => {
            let seg = segment_datasets(corpus)?;
            Ok(Model::TwoStep {
                step1: fit_system(config.step1, s, &seg.two_step_1, config.seed)?,
                step2: fit_system(config.step2, s, &seg.two_step_2, config.seed)?,
                threshold: config.threshold,
            })
        }
    }
}

/// Reads `id<TAB>text` rows; a middle column holding a label is skipped.
pub fn read_inputs(path: &Path) -> Result<Vec<(String, String)>> {
    let raw = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (n, line) in raw.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, rest)) = line.split_once('\t') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: "expected `id<TAB>text`".into(),
            });
        };
        let text = match rest.split_once('\t') {
            Some((label, text)) if label.trim().parse::<Label>().is_ok() => text,
            _ => rest,
        };
        rows.push((id.to_string(), text.to_string()));
    }
    Ok(rows)
}

/// Predicts every row of `--input` with the saved model. Output is only
/// written once every row has been scored.
pub fn predict(artifact_path: &Path, input: &Path, out: &mut dyn Write) -> Result<()> {
    let model = artifact::load(artifact_path)?;
    let rows = read_inputs(input)?;
    let mut text = String::from("id\tlabel");
    for l in OUTPUT_LABELS {
        text.push_str(&format!("\tp_{l}"));
    }
    text.push('\n');
    for (id, body) in &rows {
        let (label, p) = model.scores(body)?;
        text.push_str(&format!("{id}\t{label}\t{:.6}\t{:.6}\t{:.6}\n", p[0], p[1], p[2]));
    }
    write_out(out, &text)
}

fn write_tables(dir: &Path, tables: &[(&str, Table)]) -> Result<String> {
    fs::create_dir_all(dir)?;
    let mut report = String::new();
    for (stem, table) in tables {
        fs::write(dir.join(format!("{stem}.tsv")), render_tsv(table))?;
        if !report.is_empty() {
            report.push('\n');
        }
        report.push_str(&render_text(table));
    }
    Ok(report)
}

fn write_fingerprints(dir: &Path, name: &str, result: &ExperimentResult) -> Result<()> {
    let mut text = String::from("fold\tstep\tname\tsha256\n");
    for f in &result.folds {
        for fp in &f.fingerprints {
            text.push_str(&format!("{}\t{}\t{}\t{}\n", f.fold, fp.step, fp.name, fp.digest));
        }
    }
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn experiment(config: &RunConfig, spec: &PipelineSpec) -> Result<ExperimentResult> {
    let corpus = three_class(config.dataset()?)?;
    run_experiment(&corpus, spec, &Trainer { config: config.system.clone() })
}

/// Cross-validates the configured pipeline and writes its reports.
pub fn cv(config: &RunConfig, out: &mut dyn Write) -> Result<ExperimentResult> {
    let result = experiment(config, &config.pipeline_spec())?;
    let report = write_tables(&config.out, &result.tables())?;
    fs::write(config.out.join("report.txt"), &report)?;
    write_fingerprints(&config.out, "fingerprints.tsv", &result)?;
    write_out(out, &report)?;
    Ok(result)
}

/// Runs the one-step model and the two-step pair on the same folds and
/// reports them side by side.
pub fn compare(config: &RunConfig, out: &mut dyn Write) -> Result<(ExperimentResult, ExperimentResult)> {
    let mut one = config.clone();
    one.mode = RunMode::OneStep;
    let mut two = config.clone();
    two.mode = RunMode::TwoStep;
    let a = experiment(&one, &one.pipeline_spec())?;
    let b = experiment(&two, &two.pipeline_spec())?;
    let mut side = Table::new("One-step vs two-step", &THREE_CLASS_COLUMNS);
    let mut row_a = a.three_class_row();
    row_a.system = format!("{} (one)", row_a.system);
    let mut row_b = b.three_class_row();
    row_b.system = format!("{} (two)", row_b.system);
    side.push(row_a);
    side.push(row_b);
    let mut tables = vec![("compare", side)];
    tables.extend(a.tables());
    tables.extend(b.tables());
    let report = write_tables(&config.out, &tables)?;
    fs::write(config.out.join("report.txt"), &report)?;
    write_out(out, &report)?;
    Ok((a, b))
}

/// Settings `gradcheck` uses: reduced sizes, a small FastText embedding
/// and a nonzero penalty so the L2 gradient is covered too.
pub fn gradcheck_config() -> SystemConfig {
    let mut c = SystemConfig {
        cnn: ModelConfig::reduced(ModelKind::HybridCnn, 3),
        ngram_min_df: 1,
        lr_lambda: 1e-3,
        ..SystemConfig::default()
    };
    c.cnn.l2 = 1e-3;
    c.fasttext.dim = 8;
    c.fasttext.l2 = 1e-3;
    c
}

/// Finite-difference check of one system at reduced size on a few
/// synthetic examples.
pub fn gradcheck_system(kind: SystemKind, fault: Option<Fault>, seed: u64) -> Result<GradCheckReport> {
    let corpus = synth_corpus(&SynthSpec::three_class(2, 2, 2), seed)?;
    let texts: Vec<&str> = corpus.examples().iter().map(|e| e.text.as_str()).collect();
    let config = gradcheck_config();
    let (featurizer, _, mut net) = build_system(kind, &config, &texts, 3, seed)?;
    let inputs: Vec<Input> = texts.iter().map(|t| featurizer.encode(t)).collect();
    let golds = corpus.class_indices();
    let batch: Vec<(&Input, usize)> = inputs.iter().zip(golds).collect();
    net.grad_check(&batch, GRADCHECK_EPS, GRADCHECK_COORDS, seed, fault)
}

/// Outcome of the `gradcheck` command.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSummary {
    pub reports: Vec<(SystemKind, GradCheckReport)>,
}

impl GradCheckSummary {
    pub fn passes(&self) -> bool {
        self.reports.iter().all(|(_, r)| r.passes(GRADCHECK_TOLERANCE))
    }
}

pub fn gradcheck(
    kinds: &[SystemKind],
    fault: Option<Fault>,
    seed: u64,
    out: &mut dyn Write,
) -> Result<GradCheckSummary> {
    let mut reports = Vec::new();
    let mut text = String::from("system\tmax_rel_error\tchecked\tskipped\tresult\n");
    for &kind in kinds {
        let r = gradcheck_system(kind, fault, seed)?;
        let verdict = if r.passes(GRADCHECK_TOLERANCE) { "pass" } else { "FAIL" };
        text.push_str(&format!(
            "{kind}\t{:.3e}\t{}\t{}\t{verdict}\n",
            r.max_rel_error, r.checked, r.skipped
        ));
        reports.push((kind, r));
    }
    write_out(out, &text)?;
    Ok(GradCheckSummary { reports })
}
