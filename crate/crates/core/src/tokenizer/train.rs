use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{pose_batch, TokenizerConfig, TokenizerParams};
use super::vq::vq_forward_backward;
use crate::error::{Error, Result};
use crate::geometry::PoseParams;
use crate::nn::optim::build_optimizer;

#[derive(Debug, Clone, Serialize)]
pub struct TokenizerEpochLog {
    pub epoch: usize,
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
    /// Mean squared error of `decode(encode(p))` over the corpus.
    pub roundtrip_mse: f64,
    /// Best round-trip error seen so far; the returned parameters achieve it.
    pub best_roundtrip_mse: f64,
    pub reseeded: usize,
}

pub struct TrainedTokenizer {
    pub params: TokenizerParams,
    pub log: Vec<TokenizerEpochLog>,
}

/// Mean squared error between each pose and its tokenized reconstruction.
pub fn roundtrip_mse(params: &TokenizerParams, x: &Array2<f64>) -> f64 {
    let enc = params.encoder(x);
    let (_, q) = params.quantize(&enc.latents);
    let out = params.decoder(&q).output;
    (&out - x).mapv(|v| v * v).mean().unwrap_or(0.0)
}

/// Recounts codebook usage over `x` under the current parameters.
pub fn recount_usage(params: &mut TokenizerParams, x: &Array2<f64>) {
    let enc = params.encoder(x);
    let (indices, _) = params.quantize(&enc.latents);
    let mut counts = vec![0u64; params.codebook.len()];
    indices.iter().flatten().for_each(|&k| counts[k] += 1);
    params.codebook.usage_counts = counts;
}

fn reseed_dead(
    params: &mut TokenizerParams,
    used: &[bool],
    x: &Array2<f64>,
    rng: &mut impl Rng,
) -> usize {
    let dead: Vec<usize> = (0..used.len()).filter(|&k| !used[k]).collect();
    if dead.is_empty() {
        return 0;
    }
    let d = params.config.code_dim;
    let latents = params.encoder(x).latents;
    for k in &dead {
        let b = rng.gen_range(0..latents.nrows());
        let l = rng.gen_range(0..params.config.num_tokens);
        let src = latents.slice(s![b, l * d..(l + 1) * d]).to_owned();
        let mut row = params.codebook.entries.row_mut(*k);
        for (dst, v) in row.iter_mut().zip(src.iter()) {
            *dst = v + rng.gen_range(-1e-3..1e-3);
        }
    }
    dead.len()
}

/// Trains a tokenizer on `corpus`.
///
/// The codebook is bootstrapped from the encoder latents of the first batch.
/// The parameters with the lowest round-trip error over all epochs are
/// returned, so the logged `best_roundtrip_mse` never increases. A non-finite
/// loss aborts with [`Error::Divergence`] carrying the best checkpoint so far.
pub fn train_tokenizer(
    corpus: &[PoseParams],
    config: &TokenizerConfig,
) -> Result<TrainedTokenizer> {
    if corpus.is_empty() {
        return Err(Error::Precondition("tokenizer corpus is empty".into()));
    }
    for p in corpus {
        p.validate()?;
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = TokenizerParams::new(config.clone(), &mut rng)?;
    let mut optimizer = build_optimizer(&config.optimizer)?;

    let refs: Vec<&PoseParams> = corpus.iter().collect();
    let all = pose_batch(&refs);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);

    let first: Vec<usize> = order.iter().take(config.batch_size).copied().collect();
    params.bootstrap_codebook(&all.select(Axis(0), &first), &mut rng);

    let mut best = params.clone();
    let mut best_mse = roundtrip_mse(&params, &all);
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if epoch > 0 {
            order.shuffle(&mut rng);
        }
        let mut used = vec![false; params.codebook.len()];
        let mut sums = [0.0; 3];
        let mut batches = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = all.select(Axis(0), chunk);
            let step = vq_forward_backward(&params, &x);
            if !step.losses.total().is_finite() {
                let mut ck = best.clone();
                recount_usage(&mut ck, &all);
                return Err(Error::Divergence {
                    epoch,
                    last_good: Box::new(ck.to_checkpoint()?),
                });
            }
            step.indices.iter().flatten().for_each(|&k| used[k] = true);
            sums[0] += step.losses.reconstruction;
            sums[1] += step.losses.codebook;
            sums[2] += step.losses.commitment;
            batches += 1.0;
            optimizer.step(&mut params, &step.grads, &|_| true);
        }
        let reseeded = if config.reseed_dead {
            reseed_dead(&mut params, &used, &all, &mut rng)
        } else {
            0
        };
        let mse = roundtrip_mse(&params, &all);
        if mse.is_finite() && mse < best_mse {
            best_mse = mse;
            best = params.clone();
        }
        let entry = TokenizerEpochLog {
            epoch,
            reconstruction: sums[0] / batches,
            codebook: sums[1] / batches,
            commitment: sums[2] / batches,
            roundtrip_mse: mse,
            best_roundtrip_mse: best_mse,
            reseeded,
        };
        log::debug!("tokenizer epoch {epoch}: {entry:?}");
        log.push(entry);
    }
    recount_usage(&mut best, &all);
    Ok(TrainedTokenizer { params: best, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::optim::OptimizerConfig;

    fn cfg() -> TokenizerConfig {
        TokenizerConfig {
            num_tokens: 8,
            code_dim: 4,
            codebook_size: 16,
            hidden: 32,
            epochs: 300,
            batch_size: 8,
            optimizer: OptimizerConfig {
                name: "adam".into(),
                lr: 3e-3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn empty_corpus_is_a_precondition_error() {
        assert!(matches!(
            train_tokenizer(&[], &cfg()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn overfits_one_repeated_pose() {
        let v: Vec<f64> = (0..72).map(|k| 0.4 * (k as f64 * 0.3).sin()).collect();
        let pose = PoseParams::from_flat(&v).unwrap();
        let corpus = vec![pose; 4];
        let mut c = cfg();
        c.epochs = 1500;
        let trained = train_tokenizer(&corpus, &c).unwrap();
        let last = trained.log.last().unwrap();
        assert!(last.best_roundtrip_mse < 1e-6, "{last:?}");
        let best: Vec<f64> = trained.log.iter().map(|e| e.best_roundtrip_mse).collect();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn two_clusters_use_both_entries() {
        let mut corpus = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..8 {
            let center = if i % 2 == 0 { 1.0 } else { -1.0 };
            let v: Vec<f64> = (0..72)
                .map(|_| center + rng.gen_range(-0.05..0.05))
                .collect();
            corpus.push(PoseParams::from_flat(&v).unwrap());
        }
        let mut c = cfg();
        c.codebook_size = 2;
        c.num_tokens = 4;
        c.epochs = 50;
        let trained = train_tokenizer(&corpus, &c).unwrap();
        assert!(trained.params.codebook.usage_counts.iter().all(|&n| n > 0));
    }

    #[test]
    fn divergence_returns_last_good_checkpoint() {
        let v: Vec<f64> = (0..72).map(|k| (k as f64).cos()).collect();
        let corpus = vec![PoseParams::from_flat(&v).unwrap(); 2];
        let mut c = cfg();
        c.optimizer = OptimizerConfig {
            name: "sgd".into(),
            lr: 1e6,
            ..Default::default()
        };
        c.epochs = 50;
        match train_tokenizer(&corpus, &c) {
            Err(Error::Divergence { last_good, .. }) => {
                let back = TokenizerParams::from_checkpoint(&last_good).unwrap();
                assert!(back.initialized);
            }
            Ok(_) => panic!("expected divergence"),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
