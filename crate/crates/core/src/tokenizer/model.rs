use ndarray::{s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::geometry::{PoseParams, POSE_DIM};
use crate::nn::{init_linear, optim::OptimizerConfig, silu, silu_grad, Params};

pub const DEFAULT_NUM_TOKENS: usize = 80;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    /// Tokens per pose (L).
    pub num_tokens: usize,
    /// Latent width per token (d).
    pub code_dim: usize,
    /// Codebook entries (K).
    pub codebook_size: usize,
    /// Hidden width of the encoder and decoder perceptrons.
    pub hidden: usize,
    /// Commitment weight.
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Reseed entries unused for a whole epoch.
    pub reseed_dead: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            num_tokens: DEFAULT_NUM_TOKENS,
            code_dim: 32,
            codebook_size: 256,
            hidden: 256,
            beta: 0.25,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            reseed_dead: true,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.codebook_size < 2 {
            return Err(Error::InvalidArgument(
                "codebook needs at least 2 entries".into(),
            ));
        }
        if self.num_tokens == 0 || self.code_dim == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "tokenizer dimensions must be positive".into(),
            ));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument("beta must be non-negative".into()));
        }
        Ok(())
    }

    pub fn latent_width(&self) -> usize {
        self.num_tokens * self.code_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// `K x d`.
    pub entries: Array2<f64>,
    pub usage_counts: Vec<u64>,
}

impl Codebook {
    pub fn from_entries(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() < 2 {
            return Err(Error::InvalidArgument(
                "codebook needs at least 2 entries".into(),
            ));
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "codebook entries must be finite".into(),
            ));
        }
        let k = entries.nrows();
        Ok(Self {
            entries,
            usage_counts: vec![0; k],
        })
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.entries.ncols()
    }

    /// Index of the entry closest to `latent` in Euclidean distance; ties go to
    /// the lowest index.
    pub fn nearest(&self, latent: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, e) in self.entries.axis_iter(Axis(0)).enumerate() {
            let d: f64 = e.iter().zip(latent).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }
}

/// The `L` codebook indices representing one pose.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoseTokenSequence {
    pub tokens: Vec<usize>,
}

impl PoseTokenSequence {
    pub fn new(tokens: Vec<usize>) -> Self {
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn check(&self, num_tokens: usize, codebook_size: usize) -> Result<()> {
        if self.tokens.len() != num_tokens {
            return Err(Error::InvalidArgument(format!(
                "expected {num_tokens} pose tokens, got {}",
                self.tokens.len()
            )));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t >= codebook_size) {
            return Err(Error::InvalidToken {
                index: bad,
                size: codebook_size,
            });
        }
        Ok(())
    }
}

/// Encoder `72 -> hidden -> L*d`, codebook `K x d`, decoder `L*d -> hidden -> 72`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerParams {
    pub config: TokenizerConfig,
    pub enc_w1: Array2<f64>,
    pub enc_b1: Array2<f64>,
    pub enc_w2: Array2<f64>,
    pub enc_b2: Array2<f64>,
    pub dec_w1: Array2<f64>,
    pub dec_b1: Array2<f64>,
    pub dec_w2: Array2<f64>,
    pub dec_b2: Array2<f64>,
    pub codebook: Codebook,
    /// False until the codebook has been bootstrapped from encoder latents.
    pub initialized: bool,
}

impl Params for TokenizerParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Array2<f64>)) {
        f("enc_w1", &self.enc_w1);
        f("enc_b1", &self.enc_b1);
        f("enc_w2", &self.enc_w2);
        f("enc_b2", &self.enc_b2);
        f("dec_w1", &self.dec_w1);
        f("dec_b1", &self.dec_b1);
        f("dec_w2", &self.dec_w2);
        f("dec_b2", &self.dec_b2);
        f("codebook", &self.codebook.entries);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Array2<f64>)) {
        f("enc_w1", &mut self.enc_w1);
        f("enc_b1", &mut self.enc_b1);
        f("enc_w2", &mut self.enc_w2);
        f("enc_b2", &mut self.enc_b2);
        f("dec_w1", &mut self.dec_w1);
        f("dec_b1", &mut self.dec_b1);
        f("dec_w2", &mut self.dec_w2);
        f("dec_b2", &mut self.dec_b2);
        f("codebook", &mut self.codebook.entries);
    }
}

/// Intermediate values of an encoder pass over a batch.
pub struct EncoderPass {
    pub pre: Array2<f64>,
    pub hidden: Array2<f64>,
    /// `B x (L*d)`.
    pub latents: Array2<f64>,
}

/// Intermediate values of a decoder pass over a batch.
pub struct DecoderPass {
    pub pre: Array2<f64>,
    pub hidden: Array2<f64>,
    /// `B x 72`.
    pub output: Array2<f64>,
}

impl TokenizerParams {
    /// Random encoder/decoder weights and a placeholder codebook; the result
    /// refuses to encode until [`TokenizerParams::bootstrap_codebook`] runs.
    pub fn new(config: TokenizerConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (h, lw) = (config.hidden, config.latent_width());
        let k = config.codebook_size;
        Ok(Self {
            enc_w1: init_linear(POSE_DIM, h, rng),
            enc_b1: Array2::zeros((1, h)),
            enc_w2: init_linear(h, lw, rng),
            enc_b2: Array2::zeros((1, lw)),
            dec_w1: init_linear(lw, h, rng),
            dec_b1: Array2::zeros((1, h)),
            dec_w2: init_linear(h, POSE_DIM, rng),
            dec_b2: Array2::zeros((1, POSE_DIM)),
            codebook: Codebook {
                entries: Array2::zeros((k, config.code_dim)),
                usage_counts: vec![0; k],
            },
            initialized: false,
            config,
        })
    }

    pub fn num_tokens(&self) -> usize {
        self.config.num_tokens
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook.len()
    }

    pub fn encoder(&self, poses: &Array2<f64>) -> EncoderPass {
        let pre = poses.dot(&self.enc_w1) + &self.enc_b1;
        let hidden = pre.mapv(silu);
        let latents = hidden.dot(&self.enc_w2) + &self.enc_b2;
        EncoderPass {
            pre,
            hidden,
            latents,
        }
    }

    pub fn decoder(&self, quantized: &Array2<f64>) -> DecoderPass {
        let pre = quantized.dot(&self.dec_w1) + &self.dec_b1;
        let hidden = pre.mapv(silu);
        let output = hidden.dot(&self.dec_w2) + &self.dec_b2;
        DecoderPass {
            pre,
            hidden,
            output,
        }
    }

    /// Nearest-entry indices for every `d`-wide slice of each latent row, plus
    /// the quantized latents (`B x (L*d)`).
    pub fn quantize(&self, latents: &Array2<f64>) -> (Vec<Vec<usize>>, Array2<f64>) {
        let d = self.config.code_dim;
        let mut quantized = Array2::zeros(latents.raw_dim());
        let mut indices = Vec::with_capacity(latents.nrows());
        for (b, row) in latents.axis_iter(Axis(0)).enumerate() {
            let mut idx = Vec::with_capacity(self.config.num_tokens);
            for l in 0..self.config.num_tokens {
                let slice = row.slice(s![l * d..(l + 1) * d]);
                let k = self
                    .codebook
                    .nearest(slice.as_slice().expect("contiguous row"));
                quantized
                    .slice_mut(s![b, l * d..(l + 1) * d])
                    .assign(&self.codebook.entries.row(k));
                idx.push(k);
            }
            indices.push(idx);
        }
        (indices, quantized)
    }

    /// Embeds token indices into the flat decoder input row.
    pub fn embed_tokens(&self, tokens: &PoseTokenSequence) -> Result<Array2<f64>> {
        tokens.check(self.config.num_tokens, self.codebook.len())?;
        let d = self.config.code_dim;
        let mut q = Array2::zeros((1, self.config.latent_width()));
        for (l, &k) in tokens.tokens.iter().enumerate() {
            q.slice_mut(s![0, l * d..(l + 1) * d])
                .assign(&self.codebook.entries.row(k));
        }
        Ok(q)
    }

    /// Initializes the codebook with distinct encoder latents drawn from `batch`.
    pub fn bootstrap_codebook(&mut self, batch: &Array2<f64>, rng: &mut impl Rng) {
        let d = self.config.code_dim;
        let latents = self.encoder(batch).latents;
        let rows: Vec<Vec<f64>> = latents
            .axis_iter(Axis(0))
            .flat_map(|r| {
                (0..self.config.num_tokens)
                    .map(move |l| r.slice(s![l * d..(l + 1) * d]).to_vec())
                    .collect::<Vec<_>>()
            })
            .collect();
        let k = self.codebook.len();
        let picks: Vec<usize> = if rows.len() >= k {
            rand::seq::index::sample(rng, rows.len(), k).into_vec()
        } else {
            (0..k).map(|i| i % rows.len()).collect()
        };
        let scale = latents.iter().map(|v| v.abs()).sum::<f64>() / latents.len().max(1) as f64;
        for (i, &p) in picks.iter().enumerate() {
            let mut row = self.codebook.entries.row_mut(i);
            for (c, v) in row.iter_mut().zip(&rows[p]) {
                *c = *v;
            }
        }
        // Jitter any duplicates so the entries start distinct.
        for i in 0..k {
            while (0..i).any(|j| self.codebook.entries.row(j) == self.codebook.entries.row(i)) {
                for c in self.codebook.entries.row_mut(i).iter_mut() {
                    *c += rng.gen_range(-1e-3..1e-3) * scale.max(1e-3);
                }
            }
        }
        self.codebook.usage_counts = vec![0; k];
        self.initialized = true;
    }

    fn require_initialized(&self) -> Result<()> {
        if self.initialized {
            Ok(())
        } else {
            Err(Error::NotTrained)
        }
    }

    pub fn encode(&self, pose: &PoseParams) -> Result<PoseTokenSequence> {
        self.require_initialized()?;
        pose.validate()?;
        let x = Array2::from_shape_vec((1, POSE_DIM), pose.to_flat()).expect("pose width");
        let (mut idx, _) = self.quantize(&self.encoder(&x).latents);
        Ok(PoseTokenSequence::new(idx.remove(0)))
    }

    pub fn decode(&self, tokens: &PoseTokenSequence) -> Result<PoseParams> {
        self.require_initialized()?;
        let q = self.embed_tokens(tokens)?;
        let out = self.decoder(&q).output;
        PoseParams::from_flat(out.as_slice().expect("contiguous output"))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new()
            .with_metadata("kind", "pose-tokenizer")
            .with_metadata("config", serde_json::to_string(&self.config)?)
            .with_metadata("initialized", self.initialized.to_string())
            .with_metadata(
                "usage_counts",
                serde_json::to_string(&self.codebook.usage_counts)?,
            );
        ck.push_params("", self);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.metadata.get("kind").map(String::as_str) != Some("pose-tokenizer") {
            return Err(Error::Checkpoint("not a pose-tokenizer checkpoint".into()));
        }
        let config: TokenizerConfig = serde_json::from_str(
            ck.metadata
                .get("config")
                .ok_or_else(|| Error::Checkpoint("missing config".into()))?,
        )?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut params = Self::new(config, &mut rng)?;
        ck.load_params("", &mut params)?;
        params.initialized = ck.metadata.get("initialized").map(String::as_str) == Some("true");
        if let Some(u) = ck.metadata.get("usage_counts") {
            params.codebook.usage_counts = serde_json::from_str(u)?;
        }
        Ok(params)
    }
}

/// Stacks poses into a `B x 72` matrix.
pub fn pose_batch(poses: &[&PoseParams]) -> Array2<f64> {
    let mut x = Array2::zeros((poses.len(), POSE_DIM));
    for (b, p) in poses.iter().enumerate() {
        x.row_mut(b)
            .iter_mut()
            .zip(p.to_flat())
            .for_each(|(d, v)| *d = v);
    }
    x
}

pub(crate) fn silu_backward(upstream: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = upstream.clone();
    out.zip_mut_with(pre, |g, &x| *g *= silu_grad(x));
    out
}
