use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{glorot, wrong_input, zeros, Architecture, Input, ModelConfig, ModelKind, Network};
use crate::error::{Error, Result};
use crate::nd::{Graph, Mode, NodeId, ParamId, ParamKind, ParamStore};

/// Shallow character CNN: conv/pool stages over the one-hot grid, one
/// hidden fully-connected layer, dropout, and the output layer.
#[derive(Debug, Clone)]
pub struct CharCnn {
    config: ModelConfig,
    convs: Vec<(ParamId, ParamId)>,
    hidden: (ParamId, ParamId),
    out: (ParamId, ParamId),
}

impl CharCnn {
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Network> {
        if config.kind != ModelKind::CharCnn {
            return Err(Error::Config(format!("CharCnn built from a {} config", config.kind)));
        }
        config.validate()?;
        let s = &config.char_stack;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut convs = Vec::with_capacity(s.layers);
        let mut depth = config.alphabet_size();
        for layer in 0..s.layers {
            let f = store.add(
                format!("char.conv{layer}.w"),
                ParamKind::Weight,
                glorot(&[s.width, depth, s.maps], s.width * depth, s.width * s.maps, &mut rng),
            );
            let b = store.add(format!("char.conv{layer}.b"), ParamKind::Bias, zeros(&[s.maps]));
            convs.push((f, b));
            depth = s.maps;
        }
        let flat = config.char_flat_features()?;
        let hidden = (
            store.add(
                "fc.w",
                ParamKind::Weight,
                glorot(&[flat, s.fc_units], flat, s.fc_units, &mut rng),
            ),
            store.add("fc.b", ParamKind::Bias, zeros(&[s.fc_units])),
        );
        let out = (
            store.add(
                "out.w",
                ParamKind::Weight,
                glorot(&[s.fc_units, config.n_classes], s.fc_units, config.n_classes, &mut rng),
            ),
            store.add("out.b", ParamKind::Bias, zeros(&[config.n_classes])),
        );
        let arch = CharCnn {
            config: config.clone(),
            convs,
            hidden,
            out,
        };
        Ok(Network::new(Box::new(arch), store))
    }
}

impl Architecture for CharCnn {
    fn name(&self) -> &'static str {
        "CharCNN"
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
        let Input::Chars(grid) = input else {
            return Err(wrong_input(self.name(), input));
        };
        if grid.len() != self.config.char_len {
            return Err(Error::Shape(format!(
                "character grid of length {}, model expects {}",
                grid.len(),
                self.config.char_len
            )));
        }
        let pool = self.config.char_stack.pool;
        let mut x = None;
        for &(f, b) in &self.convs {
            let conv = match x {
                None => g.onehot_conv1d(grid.indices(), f, b)?,
                Some(prev) => g.conv1d(prev, f, b)?,
            };
            let act = g.relu(conv);
            x = Some(g.maxpool1d(act, pool, pool)?);
        }
        let flat = g.flatten(x.expect("at least one stage"));
        let hidden = g.dense(flat, self.hidden.0, self.hidden.1)?;
        let hidden = g.relu(hidden);
        let dropped = g.dropout(hidden, self.config.dropout, mode, rng)?;
        g.dense(dropped, self.out.0, self.out.1)
    }

    fn l2(&self) -> f64 {
        self.config.l2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::{quantize_chars, CharAlphabet};

    fn config() -> ModelConfig {
        let mut c = ModelConfig::reduced(ModelKind::CharCnn, 3);
        c.l2 = 1e-3;
        c
    }

    fn grid(text: &str, len: usize) -> Input {
        Input::Chars(quantize_chars(text, &CharAlphabet::standard(), len))
    }

    #[test]
    fn parameter_shapes_follow_the_stage_lengths() {
        let c = config();
        let net = CharCnn::build(&c, 0).unwrap();
        let s = net.store();
        assert_eq!(s.value(s.id("char.conv0.w").unwrap()).shape(), &[4, 70, 6]);
        assert_eq!(s.value(s.id("char.conv1.w").unwrap()).shape(), &[4, 6, 6]);
        // 40 → 37 → 12 → 9 → 3
        assert_eq!(s.value(s.id("fc.w").unwrap()).shape(), &[3 * 6, 8]);
        assert_eq!(net.logits(&grid("hello", c.char_len)).unwrap().len(), 3);
    }

    #[test]
    fn inference_is_deterministic() {
        let c = config();
        let net = CharCnn::build(&c, 1).unwrap();
        let x = grid("the same tweet", c.char_len);
        assert_eq!(net.logits(&x).unwrap(), net.logits(&x).unwrap());
    }

    #[test]
    fn out_of_alphabet_characters_do_not_matter() {
        let c = config();
        let net = CharCnn::build(&c, 1).unwrap();
        let a = net.logits(&grid("abc def", c.char_len)).unwrap();
        let b = net.logits(&grid("abc\u{1F600} dée\u{e8}f", c.char_len)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_grid_length_is_rejected() {
        let c = config();
        let net = CharCnn::build(&c, 1).unwrap();
        assert!(matches!(net.logits(&grid("x", c.char_len + 1)), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let c = config();
        let mut net = CharCnn::build(&c, 2).unwrap();
        let x = grid("you are all idiots #wtf http://t.co/x", c.char_len);
        let report = net.grad_check(&[(&x, 2)], 1e-5, 20, 4, None).unwrap();
        assert!(report.passes(1e-4), "{report:?}");
    }
}
