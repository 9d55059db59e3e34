use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::wordcnn::WordChannel;
use super::{glorot, wrong_input, zeros, Architecture, Input, ModelConfig, ModelKind, Network};
use crate::error::{Error, Result};
use crate::nd::{Graph, Mode, NodeId, ParamId, ParamKind, ParamStore};
use crate::textprep::EmbeddingTable;

/// Two-channel CNN: 1-max-pooled character and word feature maps are
/// concatenated before a single dropout and output layer.
#[derive(Debug, Clone)]
pub struct HybridCnn {
    config: ModelConfig,
    char_filters: Vec<(ParamId, ParamId)>,
    words: WordChannel,
    out: (ParamId, ParamId),
}

impl HybridCnn {
    pub fn build(config: &ModelConfig, embeddings: &EmbeddingTable, seed: u64) -> Result<Network> {
        if config.kind != ModelKind::HybridCnn {
            return Err(Error::Config(format!("HybridCnn built from a {} config", config.kind)));
        }
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ch = &config.char_channel;
        let v = config.alphabet_size();
        let char_filters = ch
            .widths
            .iter()
            .map(|&w| {
                let f = store.add(
                    format!("char.conv{w}.w"),
                    ParamKind::Weight,
                    glorot(&[w, v, ch.maps], w * v, w * ch.maps, &mut rng),
                );
                let b = store.add(format!("char.conv{w}.b"), ParamKind::Bias, zeros(&[ch.maps]));
                (f, b)
            })
            .collect();
        let words = WordChannel::build(
            &config.word_channel,
            config.embedding_dim,
            embeddings,
            &mut store,
            &mut rng,
        )?;
        let features = ch.features() + config.word_channel.features();
        let out = (
            store.add(
                "out.w",
                ParamKind::Weight,
                glorot(&[features, config.n_classes], features, config.n_classes, &mut rng),
            ),
            store.add("out.b", ParamKind::Bias, zeros(&[config.n_classes])),
        );
        let arch = HybridCnn {
            config: config.clone(),
            char_filters,
            words,
            out,
        };
        Ok(Network::new(Box::new(arch), store))
    }
}

impl Architecture for HybridCnn {
    fn name(&self) -> &'static str {
        "HybridCNN"
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
        let Input::Hybrid(grid, ids) = input else {
            return Err(wrong_input(self.name(), input));
        };
        let widest = self.config.char_channel.max_width();
        let mut chars = grid.indices().to_vec();
        if chars.len() < widest {
            chars.resize(widest, None);
        }
        let mut pooled = Vec::with_capacity(self.char_filters.len() + 3);
        for &(f, b) in &self.char_filters {
            let conv = g.onehot_conv1d(&chars, f, b)?;
            let act = g.relu(conv);
            pooled.push(g.global_maxpool(act)?);
        }
        pooled.extend(self.words.forward(g, ids.ids())?);
        let features = g.concat(&pooled)?;
        let dropped = g.dropout(features, self.config.dropout, mode, rng)?;
        g.dense(dropped, self.out.0, self.out.1)
    }

    fn l2(&self) -> f64 {
        self.config.l2
    }
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use rand::Rng;

    use super::*;
    use crate::textprep::{quantize_chars, CharAlphabet, WordIds, PAD};

    fn table(vocab: usize, dim: usize) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Array2::from_shape_fn((vocab, dim), |_| rng.random_range(-0.5..0.5));
        rows.row_mut(PAD).fill(0.0);
        EmbeddingTable::from_rows(rows, false)
    }

    fn build() -> (Network, ModelConfig) {
        let mut c = ModelConfig::reduced(ModelKind::HybridCnn, 2);
        c.l2 = 1e-3;
        (HybridCnn::build(&c, &table(16, c.embedding_dim), 9).unwrap(), c)
    }

    fn input(text: &str, ids: Vec<usize>, c: &ModelConfig) -> Input {
        Input::Hybrid(
            quantize_chars(text, &CharAlphabet::standard(), c.char_len),
            WordIds::from_ids(ids),
        )
    }

    #[test]
    fn concatenated_width() {
        let c = ModelConfig::paper(ModelKind::HybridCnn, 3);
        assert_eq!(c.char_channel.features() + c.word_channel.features(), 300);
        let (net, c) = build();
        let w = net.store().value(net.store().id("out.w").unwrap());
        assert_eq!(w.shape(), &[6 * 4, 2]);
        assert_eq!(net.logits(&input("hi there", vec![2, 3], &c)).unwrap().len(), 2);
    }

    #[test]
    fn zeroed_word_channel_leaves_only_characters() {
        let (mut net, c) = build();
        let store = net.store_mut();
        for w in [1, 2, 3] {
            let id = store.id(&format!("word.conv{w}.w")).unwrap();
            store.value_mut(id).fill(0.0);
            let id = store.id(&format!("word.conv{w}.b")).unwrap();
            store.value_mut(id).fill(0.0);
        }
        let a = net.logits(&input("same chars", vec![2, 3, 4, 5, 6, 7, 8, 9], &c)).unwrap();
        let b = net.logits(&input("same chars", vec![9, 8, 7, 6, 5, 4, 3, 2], &c)).unwrap();
        assert_eq!(a, b);

        let x = input("same chars", vec![2, 3, 4, 5, 6, 7, 8, 9], &c);
        net.accumulate_gradients(&[(&x, 1)], Mode::Infer, 0).unwrap();
        let store = net.store();
        for w in [1, 2, 3] {
            let id = store.id(&format!("word.conv{w}.w")).unwrap();
            assert!(store.grads().get(id).unwrap().iter().all(|&v| v == 0.0));
        }
        let id = store.id("char.conv3.w").unwrap();
        assert!(store.grads().get(id).unwrap().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut net, c) = build();
        let x = input("#killallmen they said", vec![2, 5, 7, 11, 3, 1, PAD, PAD], &c);
        let report = net.grad_check(&[(&x, 0)], 1e-5, 20, 8, None).unwrap();
        assert!(report.passes(1e-4), "{report:?}");
    }
}
