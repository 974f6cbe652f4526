//! Abstract prompt → detailed description → pose tokens → pose → joints.

use ndarray::ArrayView1;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{forward_kinematics, JointPositions, PoseParams, Skeleton};
use crate::nn::argmax;
use crate::reasoner::{forward, ReasonerState};
use crate::registry::Registry;
use crate::text::{SharedVocabulary, BOS, SPQ};
use crate::tokenizer::{PoseTokenSequence, TokenizerParams};

pub const DEFAULT_MAX_LEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Decoding strategy registry key: `greedy` or `temperature`.
    pub decoding: String,
    pub temperature: f64,
    pub seed: u64,
    /// Maximum number of reasoning tokens before giving up.
    pub max_len: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            decoding: "greedy".into(),
            temperature: 1.0,
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

/// Picks the next text token from a row of logits.
pub trait TextDecoder: Send {
    fn name(&self) -> &'static str;
    fn choose(&mut self, logits: ArrayView1<f64>) -> usize;
}

pub struct Greedy;

impl TextDecoder for Greedy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn choose(&mut self, logits: ArrayView1<f64>) -> usize {
        argmax(&logits.to_vec())
    }
}

/// Samples from `softmax(logits / t)`; `t = 0` degenerates to greedy.
pub struct Temperature {
    pub temperature: f64,
    rng: ChaCha8Rng,
}

impl Temperature {
    pub fn new(temperature: f64, seed: u64) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bad temperature {temperature}"
            )));
        }
        Ok(Self {
            temperature,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl TextDecoder for Temperature {
    fn name(&self) -> &'static str {
        "temperature"
    }

    fn choose(&mut self, logits: ArrayView1<f64>) -> usize {
        if self.temperature == 0.0 {
            return argmax(&logits.to_vec());
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits
            .iter()
            .map(|&l| ((l - max) / self.temperature).exp())
            .collect();
        match WeightedIndex::new(&weights) {
            Ok(dist) => dist.sample(&mut self.rng),
            Err(_) => argmax(&logits.to_vec()),
        }
    }
}

pub fn decoder_registry() -> Registry<GenerationConfig, dyn TextDecoder> {
    let mut reg: Registry<GenerationConfig, dyn TextDecoder> = Registry::new("decoding strategy");
    reg.register("greedy", |_: &GenerationConfig| Ok(Box::new(Greedy)));
    reg.register("temperature", |c: &GenerationConfig| {
        Ok(Box::new(Temperature::new(c.temperature, c.seed)?))
    });
    reg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub abstract_prompt: String,
    pub detailed_prompt: String,
    pub pose_tokens: PoseTokenSequence,
    pub pose: PoseParams,
    pub joints: JointPositions,
}

impl GenerationResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Autoregressively writes the detailed description for `abstract_prompt`.
///
/// Returns the full text sequence `BOS abstract detailed SPQ`. Only words and
/// `SPQ` can be emitted.
pub fn reason(
    state: &ReasonerState,
    vocab: &SharedVocabulary,
    abstract_prompt: &str,
    decoder: &mut dyn TextDecoder,
    max_len: usize,
) -> Result<Vec<usize>> {
    let mut ids = vec![BOS];
    ids.extend(vocab.encode_words(abstract_prompt));
    let prefix = ids.len();
    for _ in 0..max_len {
        let out = forward(&state.model, state.adapters.as_ref(), &ids, 0)?;
        let mut row = out.text_logits.row(ids.len() - 1).to_owned();
        for (id, v) in row.iter_mut().enumerate() {
            if id != SPQ && !vocab.is_word(id) {
                *v = f64::NEG_INFINITY;
            }
        }
        let next = decoder.choose(row.view());
        ids.push(next);
        if next == SPQ {
            return Ok(ids);
        }
    }
    Err(Error::ReasoningOverflow {
        max_len,
        partial: vocab.detokenize(&ids[prefix..]),
    })
}

/// Appends the query slots after `text_ids` and takes each slot's argmax.
pub fn predict_pose_tokens(state: &ReasonerState, text_ids: &[usize]) -> Result<PoseTokenSequence> {
    let nq = state.model.arch.num_queries;
    let out = forward(&state.model, state.adapters.as_ref(), text_ids, nq)?;
    let tokens = out
        .pose_logits
        .rows()
        .into_iter()
        .map(|r| argmax(&r.to_vec()))
        .collect();
    Ok(PoseTokenSequence { tokens })
}

/// Everything needed to turn an abstract prompt into a pose.
pub struct Generator<'a> {
    pub state: &'a ReasonerState,
    pub vocab: &'a SharedVocabulary,
    pub tokenizer: &'a TokenizerParams,
    pub skeleton: &'a Skeleton,
    pub config: GenerationConfig,
}

impl Generator<'_> {
    pub fn generate(&self, abstract_prompt: &str) -> Result<GenerationResult> {
        let mut decoder = decoder_registry().build(&self.config.decoding, &self.config)?;
        let ids = reason(
            self.state,
            self.vocab,
            abstract_prompt,
            decoder.as_mut(),
            self.config.max_len,
        )?;
        let prefix = 1 + self.vocab.encode_words(abstract_prompt).len();
        let detailed_prompt = self.vocab.detokenize(&ids[prefix..]);
        if detailed_prompt.is_empty() {
            return Err(Error::Validation(
                "model produced an empty detailed prompt".into(),
            ));
        }
        let pose_tokens = predict_pose_tokens(self.state, &ids)?;
        let pose = self.tokenizer.decode(&pose_tokens)?;
        let joints = forward_kinematics(&pose, self.skeleton)?;
        Ok(GenerationResult {
            abstract_prompt: abstract_prompt.to_string(),
            detailed_prompt,
            pose_tokens,
            pose,
            joints,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn greedy_picks_lowest_index_on_ties() {
        assert_eq!(Greedy.choose(arr1(&[0.1, 0.9, 0.9]).view()), 1);
    }

    #[test]
    fn zero_temperature_is_greedy() {
        let mut t = Temperature::new(0.0, 5).unwrap();
        let logits = arr1(&[0.3, -1.0, 2.5, 2.4]);
        for _ in 0..10 {
            assert_eq!(t.choose(logits.view()), Greedy.choose(logits.view()));
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let logits = arr1(&[0.0, 0.1, 0.2, 0.3, 0.4]);
        let draw = |seed| {
            let mut t = Temperature::new(1.0, seed).unwrap();
            (0..30).map(|_| t.choose(logits.view())).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert!(draw(3).iter().any(|&i| i != 4));
    }

    #[test]
    fn masked_entries_are_never_sampled() {
        let mut t = Temperature::new(2.0, 1).unwrap();
        let logits = arr1(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 0.0]);
        for _ in 0..50 {
            let i = t.choose(logits.view());
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn registry_lists_strategies() {
        let reg = decoder_registry();
        assert_eq!(
            reg.names().collect::<Vec<_>>(),
            vec!["greedy", "temperature"]
        );
        let cfg = GenerationConfig {
            decoding: "beam".into(),
            ..Default::default()
        };
        assert!(reg.build(&cfg.decoding, &cfg).is_err());
    }
}
