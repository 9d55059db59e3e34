//! Labeled tweet corpora, dataset segmentation, stratified folds and
//! class-balanced mini-batches.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gold label of one example.
///
/// `Abusive` only appears in the binary none/abusive schema and stands for
/// the union of `Racism` and `Sexism`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    None,
    Racism,
    Sexism,
    Abusive,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::None => "none",
            Label::Racism => "racism",
            Label::Sexism => "sexism",
            Label::Abusive => "abusive",
        }
    }

    pub fn is_abusive(self) -> bool {
        !matches!(self, Label::None)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Label::None),
            "racism" => Ok(Label::Racism),
            "sexism" => Ok(Label::Sexism),
            "abusive" => Ok(Label::Abusive),
            other => Err(Error::Invalid(format!("unknown label `{other}`"))),
        }
    }
}

/// The label set a corpus is annotated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Schema {
    /// none / racism / sexism
    ThreeClass,
    /// none / abusive (first step of the two-step approach)
    NoneAbusive,
    /// racism / sexism, abusive examples only (second step)
    RacismSexism,
}

impl Schema {
    /// Classes in canonical order; a class's position is its class index.
    pub fn classes(self) -> &'static [Label] {
        match self {
            Schema::ThreeClass => &[Label::None, Label::Racism, Label::Sexism],
            Schema::NoneAbusive => &[Label::None, Label::Abusive],
            Schema::RacismSexism => &[Label::Racism, Label::Sexism],
        }
    }

    pub fn n_classes(self) -> usize {
        self.classes().len()
    }

    pub fn index_of(self, label: Label) -> Option<usize> {
        self.classes().iter().position(|&l| l == label)
    }

    pub fn label_at(self, index: usize) -> Option<Label> {
        self.classes().get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Schema::ThreeClass => "three-class",
            Schema::NoneAbusive => "none/abusive",
            Schema::RacismSexism => "racism/sexism",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub label: Label,
    pub text: String,
}

impl Example {
    pub fn new(id: impl Into<String>, label: Label, text: impl Into<String>) -> Self {
        Example {
            id: id.into(),
            label,
            text: text.into(),
        }
    }
}

/// An ordered, immutable collection of labeled examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    schema: Schema,
    examples: Vec<Example>,
}

impl LabeledCorpus {
    /// Builds a corpus, checking id uniqueness and label validity.
    pub fn new(schema: Schema, examples: Vec<Example>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for (i, ex) in examples.iter().enumerate() {
            if schema.index_of(ex.label).is_none() {
                return Err(Error::InvalidLabel {
                    label: ex.label.to_string(),
                    schema: schema.name().to_string(),
                });
            }
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: ex.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(LabeledCorpus { schema, examples })
    }

    pub fn empty(schema: Schema) -> Self {
        LabeledCorpus {
            schema,
            examples: Vec::new(),
        }
    }

    pub fn schema(&self) -> Schema {
        self.schema
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Example> {
        self.examples.get(index)
    }

    /// Class index of example `index` under this corpus's schema.
    pub fn class_of(&self, index: usize) -> usize {
        self.schema
            .index_of(self.examples[index].label)
            .expect("labels validated at construction")
    }

    /// Class indices of all examples, in corpus order.
    pub fn class_indices(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.class_of(i)).collect()
    }

    /// Per-class counts in schema order.
    pub fn label_counts(&self) -> Vec<(Label, usize)> {
        let mut counts = vec![0usize; self.schema.n_classes()];
        for i in 0..self.len() {
            counts[self.class_of(i)] += 1;
        }
        self.schema
            .classes()
            .iter()
            .copied()
            .zip(counts)
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    /// A new corpus holding the examples at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledCorpus {
        LabeledCorpus {
            schema: self.schema,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    /// Writes the corpus as `id<TAB>label<TAB>text` rows. Tabs and newlines
    /// inside the text are replaced by spaces so the row structure survives.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for ex in &self.examples {
            let text: String = ex
                .text
                .chars()
                .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
                .collect();
            writeln!(out, "{}\t{}\t{}", ex.id, ex.label, text)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads a `id<TAB>label<TAB>text` file. Blank lines are skipped; an empty
/// file yields an empty corpus.
pub fn load_dataset(path: &Path, schema: Schema) -> Result<LabeledCorpus> {
    let raw = fs::read_to_string(path)?;
    parse_dataset(&raw, path, schema)
}

pub(crate) fn parse_dataset(raw: &str, path: &Path, schema: Schema) -> Result<LabeledCorpus> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in raw.lines().enumerate() {
        let line_no = n + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (Some(id), Some(label), Some(text)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(parse_err(line_no, "expected three tab-separated fields".into()));
        };
        let label: Label = label
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("unknown label `{}`", label.trim())))?;
        if schema.index_of(label).is_none() {
            return Err(parse_err(
                line_no,
                format!("label `{label}` is not valid under the {} schema", schema.name()),
            ));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId {
                id: id.to_string(),
                line: line_no,
            });
        }
        examples.push(Example::new(id, label, text));
    }
    Ok(LabeledCorpus { schema, examples })
}

/// The three corpora used by the one-step and two-step experiments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub one_step: LabeledCorpus,
    pub two_step_1: LabeledCorpus,
    pub two_step_2: LabeledCorpus,
}

/// Relabels a three-class example for the first step (none vs abusive).
pub fn to_step1(label: Label) -> Label {
    if label.is_abusive() {
        Label::Abusive
    } else {
        Label::None
    }
}

/// Splits a three-class corpus into the one-step corpus (unchanged), the
/// none/abusive corpus and the abusive-only racism/sexism corpus.
pub fn segment_datasets(corpus: &LabeledCorpus) -> Result<Segmentation> {
    if corpus.schema() != Schema::ThreeClass {
        return Err(Error::Invalid(format!(
            "segmentation needs a three-class corpus, got {}",
            corpus.schema().name()
        )));
    }
    let two_step_1 = corpus
        .examples()
        .iter()
        .map(|e| Example::new(e.id.clone(), to_step1(e.label), e.text.clone()))
        .collect();
    let two_step_2 = corpus
        .examples()
        .iter()
        .filter(|e| e.label.is_abusive())
        .cloned()
        .collect();
    Ok(Segmentation {
        one_step: corpus.clone(),
        two_step_1: LabeledCorpus {
            schema: Schema::NoneAbusive,
            examples: two_step_1,
        },
        two_step_2: LabeledCorpus {
            schema: Schema::RacismSexism,
            examples: two_step_2,
        },
    })
}

/// Assignment of every corpus example to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    seed: u64,
    assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn fold_of(&self, index: usize) -> usize {
        self.assignments[index]
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.indices_where(|f| f == fold)
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.indices_where(|f| f != fold)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    fn indices_where(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &f)| keep(f))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Deals class members round-robin over folds. Each class is shuffled with
/// the seeded generator; the dealing position carries over from one class
/// to the next (in schema order) so that remainders spread evenly and fold
/// sizes differ by at most one.
pub fn stratified_folds(corpus: &LabeledCorpus, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    let groups = class_groups(corpus, 0..corpus.len());
    for (label, group) in corpus.schema().classes().iter().zip(&groups) {
        if group.len() < k {
            return Err(Error::TooFewExamples {
                class: label.to_string(),
                count: group.len(),
                needed: k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; corpus.len()];
    let mut cursor = 0;
    for mut group in groups {
        group.shuffle(&mut rng);
        for idx in group {
            assignments[idx] = cursor % k;
            cursor += 1;
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments,
    })
}

/// Splits `indices` into a stratified (held-out, remaining) pair with
/// `round(fraction * n_c)` examples of every class held out, keeping at
/// least one example of each class on the remaining side.
pub fn stratified_holdout(
    classes: &[usize],
    n_classes: usize,
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut groups = vec![Vec::new(); n_classes];
    for (i, &c) in classes.iter().enumerate() {
        groups[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = Vec::new();
    let mut kept = Vec::new();
    for mut group in groups {
        group.shuffle(&mut rng);
        let n = group.len();
        let take = ((fraction * n as f64).round() as usize).min(n.saturating_sub(1));
        held.extend_from_slice(&group[..take]);
        kept.extend_from_slice(&group[take..]);
    }
    held.sort_unstable();
    kept.sort_unstable();
    (held, kept)
}

fn class_groups(corpus: &LabeledCorpus, indices: impl Iterator<Item = usize>) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); corpus.schema().n_classes()];
    for i in indices {
        groups[corpus.class_of(i)].push(i);
    }
    groups
}

/// Indices of one mini-batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

#[derive(Debug, Clone)]
struct ClassPool {
    items: Vec<usize>,
    cursor: usize,
}

impl ClassPool {
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.cursor == self.items.len() {
            self.items.shuffle(rng);
            self.cursor = 0;
        }
        let item = self.items[self.cursor];
        self.cursor += 1;
        item
    }
}

/// Infinite stream of class-balanced batches.
///
/// Each class keeps its own shuffled queue that is reshuffled whenever it
/// runs out, so small classes are revisited (sampled with replacement
/// across passes). Every batch shuffles the class order, gives each class
/// `batch_size / n_classes` slots and hands the remainder to the first
/// classes of that order, then fills the batch round-robin.
#[derive(Debug, Clone)]
pub struct BalancedBatches {
    pools: Vec<ClassPool>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BalancedBatches {
    /// `groups[c]` lists the items of class `c`; every group must be
    /// nonempty.
    pub fn from_groups(groups: Vec<Vec<usize>>, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size < groups.len() {
            return Err(Error::Config(format!(
                "batch size {batch_size} is smaller than the number of classes {}",
                groups.len()
            )));
        }
        if let Some(c) = groups.iter().position(Vec::is_empty) {
            return Err(Error::TooFewExamples {
                class: format!("class {c}"),
                count: 0,
                needed: 1,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pools = groups
            .into_iter()
            .map(|mut items| {
                items.shuffle(&mut rng);
                ClassPool { items, cursor: 0 }
            })
            .collect();
        Ok(BalancedBatches {
            pools,
            batch_size,
            rng,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}

impl Iterator for BalancedBatches {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let n_classes = self.pools.len();
        let mut order: Vec<usize> = (0..n_classes).collect();
        order.shuffle(&mut self.rng);
        let mut indices = Vec::with_capacity(self.batch_size);
        let mut slot = 0;
        while indices.len() < self.batch_size {
            let class = order[slot % n_classes];
            indices.push(self.pools[class].draw(&mut self.rng));
            slot += 1;
        }
        Some(Batch { indices })
    }
}

/// Balanced batches over `corpus`, optionally leaving out one fold of a
/// plan. Yielded indices refer to `corpus`.
pub fn balanced_batches(
    corpus: &LabeledCorpus,
    excluded: Option<(&FoldPlan, usize)>,
    batch_size: usize,
    seed: u64,
) -> Result<BalancedBatches> {
    let indices = (0..corpus.len()).filter(|&i| match excluded {
        Some((plan, fold)) => plan.fold_of(i) != fold,
        None => true,
    });
    let groups = class_groups(corpus, indices);
    for (label, group) in corpus.schema().classes().iter().zip(&groups) {
        if group.is_empty() {
            return Err(Error::TooFewExamples {
                class: label.to_string(),
                count: 0,
                needed: 1,
            });
        }
    }
    BalancedBatches::from_groups(groups, batch_size, seed)
}
