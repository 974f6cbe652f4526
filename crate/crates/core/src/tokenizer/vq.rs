//! Three-term VQ-VAE objective and its gradient.
//!
//! For encoder latents `z_e`, their nearest codebook entries `e` and the
//! decoder output `x̂`:
//!
//! ```text
//! reconstruction = mean((x̂ - x)^2)            over the 72 pose values
//! codebook       = mean((sg(z_e) - e)^2)       over all L*d latent values
//! commitment     = beta * mean((z_e - sg(e))^2)
//! ```
//!
//! The decoder reads `z_q = z_e + sg(e - z_e)`, so the gradient that reaches
//! `z_q` is copied unchanged onto `z_e` (straight-through estimator).

use ndarray::{s, Array2, Axis};

use super::model::{pose_batch, silu_backward, TokenizerParams};
use crate::error::Result;
use crate::geometry::PoseParams;
use crate::nn::Params;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VqLosses {
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
}

impl VqLosses {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.codebook + self.commitment
    }
}

/// Gradients observed on both sides of the quantization bottleneck.
#[derive(Debug, Clone)]
pub struct StraightThroughTrace {
    /// d reconstruction / d z_q.
    pub grad_quantized: Array2<f64>,
    /// Reconstruction part of d loss / d z_e.
    pub grad_latent_reconstruction: Array2<f64>,
}

pub struct VqStep {
    pub losses: VqLosses,
    pub grads: TokenizerParams,
    pub indices: Vec<Vec<usize>>,
    pub trace: StraightThroughTrace,
}

pub fn zeros_like(params: &TokenizerParams) -> TokenizerParams {
    let mut g = params.clone();
    g.fill_zero();
    g
}

/// Loss terms for a single pose.
pub fn vq_losses(pose: &PoseParams, params: &TokenizerParams) -> Result<VqLosses> {
    pose.validate()?;
    if !params.initialized {
        return Err(crate::Error::NotTrained);
    }
    Ok(forward_losses(params, &pose_batch(&[pose])).0)
}

fn forward_losses(
    params: &TokenizerParams,
    x: &Array2<f64>,
) -> (VqLosses, Vec<Vec<usize>>, Array2<f64>, Array2<f64>) {
    let enc = params.encoder(x);
    let (indices, quantized) = params.quantize(&enc.latents);
    let dec = params.decoder(&quantized);
    let recon = (&dec.output - x).mapv(|v| v * v).mean().unwrap_or(0.0);
    let gap = (&enc.latents - &quantized)
        .mapv(|v| v * v)
        .mean()
        .unwrap_or(0.0);
    let losses = VqLosses {
        reconstruction: recon,
        codebook: gap,
        commitment: params.config.beta * gap,
    };
    (losses, indices, enc.latents, quantized)
}

/// Losses averaged over the batch and their gradients with respect to every
/// parameter.
pub fn vq_forward_backward(params: &TokenizerParams, x: &Array2<f64>) -> VqStep {
    let cfg = &params.config;
    let d = cfg.code_dim;
    let enc = params.encoder(x);
    let (indices, quantized) = params.quantize(&enc.latents);
    let dec = params.decoder(&quantized);

    let diff_out = &dec.output - x;
    let n_out = diff_out.len() as f64;
    let recon = diff_out.iter().map(|v| v * v).sum::<f64>() / n_out;
    let diff_lat = &enc.latents - &quantized;
    let n_lat = diff_lat.len() as f64;
    let gap = diff_lat.iter().map(|v| v * v).sum::<f64>() / n_lat;
    let losses = VqLosses {
        reconstruction: recon,
        codebook: gap,
        commitment: cfg.beta * gap,
    };

    let mut grads = zeros_like(params);

    // decoder
    let d_out = diff_out.mapv(|v| 2.0 * v / n_out);
    grads.dec_w2 = dec.hidden.t().dot(&d_out);
    grads.dec_b2 = d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_hidden = d_out.dot(&params.dec_w2.t());
    let d_pre = silu_backward(&d_hidden, &dec.pre);
    grads.dec_w1 = quantized.t().dot(&d_pre);
    grads.dec_b1 = d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_quantized = d_pre.dot(&params.dec_w1.t());

    // straight-through: z_q's gradient lands on z_e untouched
    let d_latent_recon = d_quantized.clone();
    let mut d_latent = d_latent_recon.clone();
    d_latent.scaled_add(2.0 * cfg.beta / n_lat, &diff_lat);

    // codebook term pulls selected entries toward the (stopped) latents
    for (b, idx) in indices.iter().enumerate() {
        for (l, &k) in idx.iter().enumerate() {
            let lat = diff_lat.slice(s![b, l * d..(l + 1) * d]);
            let mut row = grads.codebook.entries.row_mut(k);
            row.scaled_add(-2.0 / n_lat, &lat);
        }
    }

    // encoder
    grads.enc_w2 = enc.hidden.t().dot(&d_latent);
    grads.enc_b2 = d_latent.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_hidden = d_latent.dot(&params.enc_w2.t());
    let d_pre = silu_backward(&d_hidden, &enc.pre);
    grads.enc_w1 = x.t().dot(&d_pre);
    grads.enc_b1 = d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));

    VqStep {
        losses,
        grads,
        indices,
        trace: StraightThroughTrace {
            grad_quantized: d_quantized,
            grad_latent_reconstruction: d_latent_recon,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::POSE_DIM;
    use crate::tokenizer::model::TokenizerConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (TokenizerParams, Vec<PoseParams>) {
        let cfg = TokenizerConfig {
            num_tokens: 3,
            code_dim: 2,
            codebook_size: 4,
            hidden: 5,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = TokenizerParams::new(cfg, &mut rng).unwrap();
        let poses: Vec<PoseParams> = (0..2)
            .map(|i| {
                let v: Vec<f64> = (0..POSE_DIM)
                    .map(|k| 0.3 * ((i * 13 + k) as f64).cos())
                    .collect();
                PoseParams::from_flat(&v).unwrap()
            })
            .collect();
        let refs: Vec<&PoseParams> = poses.iter().collect();
        p.bootstrap_codebook(&pose_batch(&refs), &mut rng);
        (p, poses)
    }

    #[test]
    fn latent_on_codebook_entry_zeroes_vq_terms() {
        let (mut p, poses) = setup();
        let lat = p.encoder(&pose_batch(&[&poses[0]])).latents;
        for l in 0..3 {
            for c in 0..2 {
                p.codebook.entries[[l, c]] = lat[[0, l * 2 + c]];
            }
        }
        p.codebook.entries.row_mut(3).fill(1e3);
        let losses = vq_losses(&poses[0], &p).unwrap();
        assert_eq!(losses.codebook, 0.0);
        assert_eq!(losses.commitment, 0.0);
    }

    #[test]
    fn perfect_reconstruction_has_zero_reconstruction_term() {
        let (mut p, poses) = setup();
        let tokens = p.encode(&poses[0]).unwrap();
        let decoded = p.decode(&tokens).unwrap();
        // shift the output bias so the decoder reproduces the pose exactly
        for (k, (t, d)) in poses[0].to_flat().iter().zip(decoded.to_flat()).enumerate() {
            p.dec_b2[[0, k]] += t - d;
        }
        let losses = vq_losses(&poses[0], &p).unwrap();
        assert!(losses.reconstruction < 1e-28, "{losses:?}");
        assert!(losses.codebook >= 0.0 && losses.commitment >= 0.0);
    }

    #[test]
    fn straight_through_copies_gradient_bitwise() {
        let (p, poses) = setup();
        let refs: Vec<&PoseParams> = poses.iter().collect();
        let step = vq_forward_backward(&p, &pose_batch(&refs));
        assert_eq!(
            step.trace.grad_quantized,
            step.trace.grad_latent_reconstruction
        );
        assert!(step.trace.grad_quantized.iter().any(|v| *v != 0.0));
    }
}
