use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{glorot, wrong_input, zeros, Architecture, Channel, Input, ModelConfig, ModelKind, Network};
use crate::error::{Error, Result};
use crate::nd::{Graph, Mode, NodeId, ParamId, ParamKind, ParamStore};
use crate::textprep::{EmbeddingTable, PAD};

/// Frozen word embeddings followed by parallel convolutions and 1-max
/// pooling. Shared by WordCNN and HybridCNN.
#[derive(Debug, Clone)]
pub(crate) struct WordChannel {
    table: ParamId,
    widths: Vec<usize>,
    filters: Vec<(ParamId, ParamId)>,
}

impl WordChannel {
    pub(crate) fn build(
        channel: &Channel,
        dim: usize,
        embeddings: &EmbeddingTable,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if embeddings.dim() != dim {
            return Err(Error::EmbeddingDim {
                expected: dim,
                found: embeddings.dim(),
            });
        }
        let table = store.add(
            "word.embedding",
            ParamKind::Embedding { trainable: false },
            embeddings.rows().clone().into_dyn(),
        );
        let filters = channel
            .widths
            .iter()
            .map(|&w| {
                let f = store.add(
                    format!("word.conv{w}.w"),
                    ParamKind::Weight,
                    glorot(&[w, dim, channel.maps], w * dim, w * channel.maps, rng),
                );
                let b = store.add(format!("word.conv{w}.b"), ParamKind::Bias, zeros(&[channel.maps]));
                (f, b)
            })
            .collect();
        Ok(WordChannel {
            table,
            widths: channel.widths.clone(),
            filters,
        })
    }

    /// One pooled vector per filter width.
    pub(crate) fn forward(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Vec<NodeId>> {
        let widest = self.widths.iter().copied().max().unwrap_or(1);
        let mut padded = ids.to_vec();
        if padded.len() < widest {
            padded.resize(widest, PAD);
        }
        let embedded = g.embed(&padded, self.table)?;
        self.filters
            .iter()
            .map(|&(f, b)| {
                let conv = g.conv1d(embedded, f, b)?;
                let act = g.relu(conv);
                g.global_maxpool(act)
            })
            .collect()
    }

    pub(crate) fn table(&self) -> ParamId {
        self.table
    }
}

/// Static-embedding word CNN.
#[derive(Debug, Clone)]
pub struct WordCnn {
    config: ModelConfig,
    channel: WordChannel,
    out: (ParamId, ParamId),
}

impl WordCnn {
    pub fn build(config: &ModelConfig, embeddings: &EmbeddingTable, seed: u64) -> Result<Network> {
        if config.kind != ModelKind::WordCnn {
            return Err(Error::Config(format!("WordCnn built from a {} config", config.kind)));
        }
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let channel = WordChannel::build(
            &config.word_channel,
            config.embedding_dim,
            embeddings,
            &mut store,
            &mut rng,
        )?;
        let features = config.word_channel.features();
        let out = (
            store.add(
                "out.w",
                ParamKind::Weight,
                glorot(&[features, config.n_classes], features, config.n_classes, &mut rng),
            ),
            store.add("out.b", ParamKind::Bias, zeros(&[config.n_classes])),
        );
        let arch = WordCnn {
            config: config.clone(),
            channel,
            out,
        };
        Ok(Network::new(Box::new(arch), store))
    }

    pub fn embedding_param(&self) -> ParamId {
        self.channel.table()
    }
}

impl Architecture for WordCnn {
    fn name(&self) -> &'static str {
        "WordCNN"
    }

    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn forward(
        &self,
        g: &mut Graph<'_>,
        input: &Input,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeId> {
        let Input::Words(ids) = input else {
            return Err(wrong_input(self.name(), input));
        };
        let pooled = self.channel.forward(g, ids.ids())?;
        let features = g.concat(&pooled)?;
        let dropped = g.dropout(features, self.config.dropout, mode, rng)?;
        g.dense(dropped, self.out.0, self.out.1)
    }

    fn l2(&self) -> f64 {
        self.config.l2
    }
}
