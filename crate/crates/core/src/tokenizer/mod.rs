//! VQ-VAE pose tokenizer: a 72-value pose becomes `L` codebook indices and back.

mod model;
mod train;
mod vq;

pub use model::{
    pose_batch, Codebook, DecoderPass, EncoderPass, PoseTokenSequence, TokenizerConfig,
    TokenizerParams, DEFAULT_NUM_TOKENS,
};
pub use train::{
    recount_usage, roundtrip_mse, train_tokenizer, TokenizerEpochLog, TrainedTokenizer,
};
pub use vq::{vq_forward_backward, vq_losses, zeros_like, StraightThroughTrace, VqLosses, VqStep};

/// Free-function form of [`TokenizerParams::encode`].
pub fn encode(
    pose: &crate::geometry::PoseParams,
    params: &TokenizerParams,
) -> crate::Result<PoseTokenSequence> {
    params.encode(pose)
}

/// Free-function form of [`TokenizerParams::decode`].
pub fn decode(
    tokens: &PoseTokenSequence,
    params: &TokenizerParams,
) -> crate::Result<crate::geometry::PoseParams> {
    params.decode(tokens)
}
