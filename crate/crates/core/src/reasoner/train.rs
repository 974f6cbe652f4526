use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ArchConfig, LoraConfig, TrainConfig};
use super::loss::{loss_pose, loss_text, TextTargets};
use super::model::{backward, forward_train, LoraAdapters, ModelParams};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::optim::build_optimizer;
use crate::nn::{accumulate, scale_all, Params};
use crate::text::{SharedVocabulary, BOS, SPQ};
use crate::tokenizer::PoseTokenSequence;

const CHECKPOINT_KIND: &str = "reasoner";

/// One training example laid out as `BOS abstract detailed SPQ` plus pose targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub text_ids: Vec<usize>,
    pub targets: TextTargets,
    pub pose_tokens: PoseTokenSequence,
}

impl Example {
    pub fn from_ids(
        abstract_ids: &[usize],
        detailed_ids: &[usize],
        pose_tokens: PoseTokenSequence,
    ) -> Result<Self> {
        if detailed_ids.is_empty() {
            return Err(Error::Precondition("empty detailed segment".into()));
        }
        let mut text_ids = Vec::with_capacity(abstract_ids.len() + detailed_ids.len() + 2);
        text_ids.push(BOS);
        text_ids.extend_from_slice(abstract_ids);
        text_ids.extend_from_slice(detailed_ids);
        text_ids.push(SPQ);
        let first = abstract_ids.len();
        let positions: Vec<usize> = (first..first + detailed_ids.len() + 1).collect();
        let ids = positions.iter().map(|&p| text_ids[p + 1]).collect();
        Ok(Self {
            text_ids,
            targets: TextTargets { positions, ids },
            pose_tokens,
        })
    }

    pub fn new(
        vocab: &SharedVocabulary,
        abstract_prompt: &str,
        detailed_prompt: &str,
        pose_tokens: PoseTokenSequence,
    ) -> Result<Self> {
        Self::from_ids(
            &vocab.encode_words(abstract_prompt),
            &vocab.encode_words(detailed_prompt),
            pose_tokens,
        )
    }
}

/// Base weights plus optional adapters, visited as one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasonerState {
    pub model: ModelParams,
    pub adapters: Option<LoraAdapters>,
}

impl Params for ReasonerState {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Array2<f64>)) {
        self.model.visit(&mut |n, a| f(&format!("model.{n}"), a));
        if let Some(ad) = &self.adapters {
            ad.visit(&mut |n, a| f(&format!("lora.{n}"), a));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Array2<f64>)) {
        self.model
            .visit_mut(&mut |n, a| f(&format!("model.{n}"), a));
        if let Some(ad) = &mut self.adapters {
            ad.visit_mut(&mut |n, a| f(&format!("lora.{n}"), a));
        }
    }
}

impl ReasonerState {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new()
            .with_metadata("kind", CHECKPOINT_KIND)
            .with_metadata("arch", serde_json::to_string(&self.model.arch)?)
            .with_metadata("vocab_size", self.model.vocab_size.to_string())
            .with_metadata("codebook_size", self.model.codebook_size.to_string());
        if let Some(ad) = &self.adapters {
            ck = ck.with_metadata("lora", serde_json::to_string(&ad.config)?);
        }
        ck.push_params("", self);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = |k: &str| {
            ck.metadata
                .get(k)
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{k}`")))
        };
        if meta("kind")? != CHECKPOINT_KIND {
            return Err(Error::Checkpoint("not a reasoner checkpoint".into()));
        }
        let arch: ArchConfig = serde_json::from_str(meta("arch")?)?;
        let parse = |k: &str| -> Result<usize> {
            meta(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad `{k}`")))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = ModelParams::new(
            arch,
            parse("vocab_size")?,
            parse("codebook_size")?,
            &mut rng,
        )?;
        let adapters = match ck.metadata.get("lora") {
            Some(s) => {
                let cfg: LoraConfig = serde_json::from_str(s)?;
                Some(LoraAdapters::new(cfg, &model.arch, &mut rng)?)
            }
            None => None,
        };
        let mut state = Self { model, adapters };
        ck.load_params("", &mut state)?;
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerEpochLog {
    pub epoch: usize,
    pub text_loss: f64,
    pub pose_loss: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedReasoner {
    pub state: ReasonerState,
    pub log: Vec<ReasonerEpochLog>,
}

/// Names the optimizer may update. With LoRA on, only adapters and heads train.
pub fn is_trainable(name: &str, lora_on: bool) -> bool {
    !lora_on || name.starts_with("lora.") || name == "model.text_head" || name == "model.pose_head"
}

/// Trains from a fresh initialization drawn from `config.seed`.
pub fn train_reasoner(
    examples: &[Example],
    vocab_size: usize,
    codebook_size: usize,
    config: &TrainConfig,
) -> Result<TrainedReasoner> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = ModelParams::new(config.arch.clone(), vocab_size, codebook_size, &mut rng)?;
    train_reasoner_from(model, examples, config)
}

/// Trains starting from `base`. With `config.lora.on`, fresh adapters are attached
/// and the base weights stay bitwise unchanged.
pub fn train_reasoner_from(
    base: ModelParams,
    examples: &[Example],
    config: &TrainConfig,
) -> Result<TrainedReasoner> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Precondition("training set is empty".into()));
    }
    let nq = base.arch.num_queries;
    for ex in examples {
        ex.pose_tokens.check(nq, base.codebook_size)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let adapters = if config.lora.on {
        Some(LoraAdapters::new(
            config.lora.clone(),
            &base.arch,
            &mut rng,
        )?)
    } else {
        None
    };
    let mut state = ReasonerState {
        model: base,
        adapters,
    };
    let mut optimizer = build_optimizer(&config.optimizer_config())?;
    let lora_on = config.lora.on;
    let trainable = move |n: &str| is_trainable(n, lora_on);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut last_good = state.clone();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut text_sum, mut pose_sum) = (0.0, 0.0);
        for batch in order.chunks(config.batch) {
            let mut grads = ReasonerState {
                model: state.model.zeros_like(),
                adapters: state.adapters.as_ref().map(LoraAdapters::zeros_like),
            };
            for &i in batch {
                let ex = &examples[i];
                let (out, cache) = forward_train(
                    &state.model,
                    state.adapters.as_ref(),
                    &ex.text_ids,
                    nq,
                    Some(&mut rng),
                )?;
                let (lt, mut dt) = loss_text(&out.text_logits, &ex.targets)?;
                let (lp, mut dp) = loss_pose(&out.pose_logits, &ex.pose_tokens)?;
                if !(lt.is_finite() && lp.is_finite()) {
                    return Err(divergence(epoch, &last_good)?);
                }
                text_sum += lt;
                pose_sum += lp;
                dt.mapv_inplace(|v| v * config.w_text);
                dp.mapv_inplace(|v| v * config.w_pose);
                let mut g = ReasonerState {
                    model: state.model.zeros_like(),
                    adapters: state.adapters.as_ref().map(LoraAdapters::zeros_like),
                };
                backward(
                    &state.model,
                    state.adapters.as_ref(),
                    &cache,
                    &dt,
                    &dp,
                    &mut g.model,
                    g.adapters.as_mut(),
                );
                accumulate(&mut grads, &g, 1.0);
            }
            scale_all(&mut grads, 1.0 / batch.len() as f64);
            optimizer.step(&mut state, &grads, &trainable);
            if !state.all_finite() {
                return Err(divergence(epoch, &last_good)?);
            }
        }
        let n = examples.len() as f64;
        let entry = ReasonerEpochLog {
            epoch,
            text_loss: text_sum / n,
            pose_loss: pose_sum / n,
            total: config.w_text * text_sum / n + config.w_pose * pose_sum / n,
        };
        log::debug!("reasoner epoch {epoch}: {entry:?}");
        log.push(entry);
        last_good = state.clone();
    }
    Ok(TrainedReasoner { state, log })
}

fn divergence(epoch: usize, last_good: &ReasonerState) -> Result<Error> {
    Ok(Error::Divergence {
        epoch,
        last_good: Box::new(last_good.to_checkpoint()?),
    })
}
