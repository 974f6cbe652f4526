//! Decoder-only transformer that writes a detailed description causally and
//! then predicts every pose token in one bidirectional step.

mod config;
mod loss;
mod mask;
mod model;
mod train;

pub use config::{ArchConfig, LoraConfig, TrainConfig};
pub use loss::{loss_pose, loss_text, TextTargets};
pub use mask::{build_mask, AttentionMask};
pub use model::{
    backward, effective_weight, forward, forward_embedded, forward_train, merge_adapters, Adapted,
    ForwardCache, LayerAdapters, LayerParams, LoraAdapters, LoraFactor, ModelOutput, ModelParams,
};
pub use train::{
    is_trainable, train_reasoner, train_reasoner_from, Example, ReasonerEpochLog, ReasonerState,
    TrainedReasoner,
};
