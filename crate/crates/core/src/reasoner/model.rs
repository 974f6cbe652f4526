use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{ArchConfig, LoraConfig};
use super::mask::{build_mask, AttentionMask};
use crate::error::{Error, Result};
use crate::nn::{init_linear, randn, rmsnorm, rmsnorm_backward, silu, silu_grad, Params};
use crate::text::PQ;

const EMBED_STD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub attn_norm: Array2<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub mlp_norm: Array2<f64>,
    pub up: Array2<f64>,
    pub gate: Array2<f64>,
    pub down: Array2<f64>,
}

/// Base transformer weights. Linear maps are stored `in x out` and applied as `x·W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ArchConfig,
    pub vocab_size: usize,
    pub codebook_size: usize,
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    /// Per-slot pose-query embeddings, added to the shared `PQ` token embedding.
    pub query_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_norm: Array2<f64>,
    pub text_head: Array2<f64>,
    pub pose_head: Array2<f64>,
}

impl ModelParams {
    pub fn new(
        arch: ArchConfig,
        vocab_size: usize,
        codebook_size: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        arch.validate()?;
        if vocab_size <= PQ || codebook_size == 0 {
            return Err(Error::InvalidArgument(
                "vocabulary or codebook too small".into(),
            ));
        }
        let w = arch.width;
        let h = arch.mlp_hidden;
        let layers = (0..arch.layers)
            .map(|_| LayerParams {
                attn_norm: Array2::ones((1, w)),
                wq: init_linear(w, w, rng),
                wk: init_linear(w, w, rng),
                wv: init_linear(w, w, rng),
                wo: init_linear(w, w, rng),
                mlp_norm: Array2::ones((1, w)),
                up: init_linear(w, h, rng),
                gate: init_linear(w, h, rng),
                down: init_linear(h, w, rng),
            })
            .collect();
        Ok(Self {
            tok_emb: randn(vocab_size, w, EMBED_STD, rng),
            pos_emb: randn(arch.context, w, EMBED_STD, rng),
            query_emb: randn(arch.num_queries, w, EMBED_STD, rng),
            layers,
            final_norm: Array2::ones((1, w)),
            text_head: init_linear(w, vocab_size, rng),
            pose_head: init_linear(w, codebook_size, rng),
            arch,
            vocab_size,
            codebook_size,
        })
    }

    /// A same-shaped parameter set filled with zeros (gradient buffer).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    /// Input embeddings: token + position for text, `PQ` + slot embedding for queries.
    pub fn embed(&self, text_ids: &[usize], n_queries: usize) -> Result<Array2<f64>> {
        self.check_lengths(text_ids.len(), n_queries)?;
        let mut x = Array2::zeros((text_ids.len() + n_queries, self.arch.width));
        for (i, &id) in text_ids.iter().enumerate() {
            if id >= self.vocab_size {
                return Err(Error::InvalidToken {
                    index: id,
                    size: self.vocab_size,
                });
            }
            let mut row = x.row_mut(i);
            row += &self.tok_emb.row(id);
            row += &self.pos_emb.row(i);
        }
        for s in 0..n_queries {
            let mut row = x.row_mut(text_ids.len() + s);
            row += &self.tok_emb.row(PQ);
            row += &self.query_emb.row(s);
        }
        Ok(x)
    }

    fn check_lengths(&self, text_len: usize, n_queries: usize) -> Result<()> {
        if text_len == 0 {
            return Err(Error::InvalidArgument("empty text sequence".into()));
        }
        if n_queries > self.arch.num_queries {
            return Err(Error::InvalidArgument(format!(
                "{n_queries} pose queries requested, model has {}",
                self.arch.num_queries
            )));
        }
        let len = text_len + n_queries;
        if len > self.arch.context {
            return Err(Error::ContextOverflow {
                len,
                context: self.arch.context,
            });
        }
        Ok(())
    }
}

impl Params for ModelParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Array2<f64>)) {
        f("tok_emb", &self.tok_emb);
        f("pos_emb", &self.pos_emb);
        f("query_emb", &self.query_emb);
        for (i, l) in self.layers.iter().enumerate() {
            for (name, a) in layer_arrays(l) {
                f(&format!("layers.{i}.{name}"), a);
            }
        }
        f("final_norm", &self.final_norm);
        f("text_head", &self.text_head);
        f("pose_head", &self.pose_head);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Array2<f64>)) {
        f("tok_emb", &mut self.tok_emb);
        f("pos_emb", &mut self.pos_emb);
        f("query_emb", &mut self.query_emb);
        for (i, l) in self.layers.iter_mut().enumerate() {
            let LayerParams {
                attn_norm,
                wq,
                wk,
                wv,
                wo,
                mlp_norm,
                up,
                gate,
                down,
            } = l;
            for (name, a) in [
                ("attn_norm", attn_norm),
                ("wq", wq),
                ("wk", wk),
                ("wv", wv),
                ("wo", wo),
                ("mlp_norm", mlp_norm),
                ("up", up),
                ("gate", gate),
                ("down", down),
            ] {
                f(&format!("layers.{i}.{name}"), a);
            }
        }
        f("final_norm", &mut self.final_norm);
        f("text_head", &mut self.text_head);
        f("pose_head", &mut self.pose_head);
    }
}

fn layer_arrays(l: &LayerParams) -> [(&'static str, &Array2<f64>); 9] {
    [
        ("attn_norm", &l.attn_norm),
        ("wq", &l.wq),
        ("wk", &l.wk),
        ("wv", &l.wv),
        ("wo", &l.wo),
        ("mlp_norm", &l.mlp_norm),
        ("up", &l.up),
        ("gate", &l.gate),
        ("down", &l.down),
    ]
}

/// The seven adapted projections of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adapted {
    Q,
    K,
    V,
    O,
    Up,
    Down,
    Gate,
}

impl Adapted {
    pub const ALL: [Adapted; 7] = [
        Adapted::Q,
        Adapted::K,
        Adapted::V,
        Adapted::O,
        Adapted::Up,
        Adapted::Down,
        Adapted::Gate,
    ];
}

/// Low-rank factors `A` (`r x in`) and `B` (`out x r`).
#[derive(Debug, Clone, PartialEq)]
pub struct LoraFactor {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

impl LoraFactor {
    fn new(fan_in: usize, fan_out: usize, r: usize, rng: &mut impl Rng) -> Self {
        Self {
            a: randn(r, fan_in, 1.0 / (fan_in as f64).sqrt(), rng),
            b: Array2::zeros((fan_out, r)),
        }
    }

    /// `B·A`, shaped `out x in`.
    pub fn delta(&self) -> Array2<f64> {
        self.b.dot(&self.a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerAdapters {
    pub wq: LoraFactor,
    pub wk: LoraFactor,
    pub wv: LoraFactor,
    pub wo: LoraFactor,
    pub up: LoraFactor,
    pub down: LoraFactor,
    pub gate: LoraFactor,
}

impl LayerAdapters {
    pub fn get(&self, which: Adapted) -> &LoraFactor {
        match which {
            Adapted::Q => &self.wq,
            Adapted::K => &self.wk,
            Adapted::V => &self.wv,
            Adapted::O => &self.wo,
            Adapted::Up => &self.up,
            Adapted::Down => &self.down,
            Adapted::Gate => &self.gate,
        }
    }

    fn get_mut(&mut self, which: Adapted) -> &mut LoraFactor {
        match which {
            Adapted::Q => &mut self.wq,
            Adapted::K => &mut self.wk,
            Adapted::V => &mut self.wv,
            Adapted::O => &mut self.wo,
            Adapted::Up => &mut self.up,
            Adapted::Down => &mut self.down,
            Adapted::Gate => &mut self.gate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapters {
    pub config: LoraConfig,
    pub layers: Vec<LayerAdapters>,
}

impl LoraAdapters {
    pub fn new(config: LoraConfig, arch: &ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (w, h, r) = (arch.width, arch.mlp_hidden, config.r);
        let layers = (0..arch.layers)
            .map(|_| LayerAdapters {
                wq: LoraFactor::new(w, w, r, rng),
                wk: LoraFactor::new(w, w, r, rng),
                wv: LoraFactor::new(w, w, r, rng),
                wo: LoraFactor::new(w, w, r, rng),
                up: LoraFactor::new(w, h, r, rng),
                down: LoraFactor::new(h, w, r, rng),
                gate: LoraFactor::new(w, h, r, rng),
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn scale(&self) -> f64 {
        self.config.scale()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }
}

impl Params for LoraAdapters {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Array2<f64>)) {
        for (i, l) in self.layers.iter().enumerate() {
            for which in Adapted::ALL {
                let fac = l.get(which);
                f(&format!("layers.{i}.{}.a", adapted_name(which)), &fac.a);
                f(&format!("layers.{i}.{}.b", adapted_name(which)), &fac.b);
            }
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Array2<f64>)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            for which in Adapted::ALL {
                let fac = l.get_mut(which);
                f(&format!("layers.{i}.{}.a", adapted_name(which)), &mut fac.a);
                f(&format!("layers.{i}.{}.b", adapted_name(which)), &mut fac.b);
            }
        }
    }
}

fn adapted_name(which: Adapted) -> &'static str {
    match which {
        Adapted::Q => "wq",
        Adapted::K => "wk",
        Adapted::V => "wv",
        Adapted::O => "wo",
        Adapted::Up => "up",
        Adapted::Down => "down",
        Adapted::Gate => "gate",
    }
}

fn base_weight(l: &LayerParams, which: Adapted) -> &Array2<f64> {
    match which {
        Adapted::Q => &l.wq,
        Adapted::K => &l.wk,
        Adapted::V => &l.wv,
        Adapted::O => &l.wo,
        Adapted::Up => &l.up,
        Adapted::Down => &l.down,
        Adapted::Gate => &l.gate,
    }
}

fn base_weight_mut(l: &mut LayerParams, which: Adapted) -> &mut Array2<f64> {
    match which {
        Adapted::Q => &mut l.wq,
        Adapted::K => &mut l.wk,
        Adapted::V => &mut l.wv,
        Adapted::O => &mut l.wo,
        Adapted::Up => &mut l.up,
        Adapted::Down => &mut l.down,
        Adapted::Gate => &mut l.gate,
    }
}

/// Base weight plus `(alpha/r)·(B·A)`, in the stored `in x out` orientation.
pub fn effective_weight(
    params: &ModelParams,
    adapters: &LoraAdapters,
    layer: usize,
    which: Adapted,
) -> Array2<f64> {
    let base = base_weight(&params.layers[layer], which);
    let delta = adapters.layers[layer].get(which).delta();
    base + &(delta.t().mapv(|v| v * adapters.scale()))
}

/// Folds the adapters into a copy of the base weights.
pub fn merge_adapters(params: &ModelParams, adapters: &LoraAdapters) -> ModelParams {
    let mut merged = params.clone();
    for i in 0..params.layers.len() {
        for which in Adapted::ALL {
            *base_weight_mut(&mut merged.layers[i], which) =
                effective_weight(params, adapters, i, which);
        }
    }
    merged
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// `text_len x vocab_size`.
    pub text_logits: Array2<f64>,
    /// `n_queries x codebook_size`.
    pub pose_logits: Array2<f64>,
}

struct LinearCache {
    x: Array2<f64>,
    mask: Option<Array2<f64>>,
    xa: Option<Array2<f64>>,
}

struct LayerCache {
    x_in: Array2<f64>,
    inv1: Vec<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    lin_q: LinearCache,
    lin_k: LinearCache,
    lin_v: LinearCache,
    lin_o: LinearCache,
    x_mid: Array2<f64>,
    inv2: Vec<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
    lin_up: LinearCache,
    lin_gate: LinearCache,
    lin_down: LinearCache,
}

/// Activations kept by [`forward_train`] for [`backward`].
pub struct ForwardCache {
    text_ids: Option<Vec<usize>>,
    mask: AttentionMask,
    layers: Vec<LayerCache>,
    x_final: Array2<f64>,
    inv_final: Vec<f64>,
    hf: Array2<f64>,
}

struct Ctx<'a> {
    adapters: Option<&'a LoraAdapters>,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Ctx<'_> {
    fn linear(
        &mut self,
        x: &Array2<f64>,
        layer: usize,
        which: Adapted,
        w: &Array2<f64>,
    ) -> (Array2<f64>, LinearCache) {
        let mut y = x.dot(w);
        let mut cache = LinearCache {
            x: x.clone(),
            mask: None,
            xa: None,
        };
        if let Some(ad) = self.adapters {
            let fac = ad.layers[layer].get(which);
            let p = ad.config.dropout;
            let dropped = match self.rng.as_deref_mut() {
                Some(rng) if p > 0.0 => {
                    let keep = 1.0 / (1.0 - p);
                    let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
                        if rng.gen::<f64>() < p {
                            0.0
                        } else {
                            keep
                        }
                    });
                    let d = x * &mask;
                    cache.mask = Some(mask);
                    d
                }
                _ => x.clone(),
            };
            let xa = dropped.dot(&fac.a.t());
            y.scaled_add(ad.scale(), &xa.dot(&fac.b.t()));
            cache.xa = Some(xa);
        }
        (y, cache)
    }
}

fn linear_backward(
    dy: &Array2<f64>,
    cache: &LinearCache,
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    adapter: Option<(&LoraFactor, &mut LoraFactor, f64)>,
) -> Array2<f64> {
    *dw += &cache.x.t().dot(dy);
    let mut dx = dy.dot(&w.t());
    if let (Some((fac, dfac, scale)), Some(xa)) = (adapter, cache.xa.as_ref()) {
        let dxa = dy.dot(&fac.b).mapv(|v| v * scale);
        dfac.b.scaled_add(scale, &dy.t().dot(xa));
        let dropped = match &cache.mask {
            Some(m) => &cache.x * m,
            None => cache.x.clone(),
        };
        dfac.a += &dxa.t().dot(&dropped);
        let mut dl = dxa.dot(&fac.a);
        if let Some(m) = &cache.mask {
            dl *= m;
        }
        dx += &dl;
    }
    dx
}

fn ad<'a>(
    adapters: Option<&'a LoraAdapters>,
    grads: Option<&'a mut LoraAdapters>,
    layer: usize,
    which: Adapted,
) -> Option<(&'a LoraFactor, &'a mut LoraFactor, f64)> {
    let a = adapters?;
    Some((
        a.layers[layer].get(which),
        grads?.layers[layer].get_mut(which),
        a.scale(),
    ))
}

/// Inference forward pass (dropout disabled).
pub fn forward(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    text_ids: &[usize],
    n_queries: usize,
) -> Result<ModelOutput> {
    forward_train(params, adapters, text_ids, n_queries, None).map(|(o, _)| o)
}

/// Forward pass from precomputed input embeddings; the first `text_len` rows
/// are text positions, the rest pose queries.
pub fn forward_embedded(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    x0: Array2<f64>,
    text_len: usize,
) -> Result<ModelOutput> {
    if x0.ncols() != params.arch.width || text_len > x0.nrows() {
        return Err(Error::InvalidArgument(
            "embedding matrix has the wrong shape".into(),
        ));
    }
    params.check_lengths(text_len, x0.nrows() - text_len)?;
    let mut ctx = Ctx {
        adapters,
        rng: None,
    };
    Ok(run(params, &mut ctx, x0, text_len, None).0)
}

/// Forward pass that keeps activations. Passing `dropout` enables LoRA dropout.
pub fn forward_train(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    text_ids: &[usize],
    n_queries: usize,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<(ModelOutput, ForwardCache)> {
    let x0 = params.embed(text_ids, n_queries)?;
    let mut ctx = Ctx {
        adapters,
        rng: dropout,
    };
    Ok(run(
        params,
        &mut ctx,
        x0,
        text_ids.len(),
        Some(text_ids.to_vec()),
    ))
}

fn run(
    params: &ModelParams,
    ctx: &mut Ctx,
    x0: Array2<f64>,
    text_len: usize,
    text_ids: Option<Vec<usize>>,
) -> (ModelOutput, ForwardCache) {
    let n = x0.nrows();
    let mask = build_mask(text_len, n - text_len);
    let heads = params.arch.heads;
    let dh = params.arch.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut x = x0;
    let mut caches = Vec::with_capacity(params.layers.len());
    for (li, l) in params.layers.iter().enumerate() {
        let (h1, inv1) = rmsnorm(&x, &l.attn_norm);
        let (q, lin_q) = ctx.linear(&h1, li, Adapted::Q, &l.wq);
        let (k, lin_k) = ctx.linear(&h1, li, Adapted::K, &l.wk);
        let (v, lin_v) = ctx.linear(&h1, li, Adapted::V, &l.wv);
        let mut attn = Array2::zeros((n, params.arch.width));
        let mut probs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let scores = q.slice(cols).dot(&k.slice(cols).t());
            let mut p = Array2::zeros((n, n));
            for i in 0..n {
                let vis = mask.visible(i);
                let row = scores.row(i);
                let max = vis
                    .clone()
                    .map(|j| row[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in vis.clone() {
                    let e = ((row[j] - max) * scale).exp();
                    p[[i, j]] = e;
                    sum += e;
                }
                for j in vis {
                    p[[i, j]] /= sum;
                }
            }
            attn.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let (a, lin_o) = ctx.linear(&attn, li, Adapted::O, &l.wo);
        let x_mid = &x + &a;
        let (h2, inv2) = rmsnorm(&x_mid, &l.mlp_norm);
        let (u, lin_up) = ctx.linear(&h2, li, Adapted::Up, &l.up);
        let (g, lin_gate) = ctx.linear(&h2, li, Adapted::Gate, &l.gate);
        let m = &g.mapv(silu) * &u;
        let (d, lin_down) = ctx.linear(&m, li, Adapted::Down, &l.down);
        let x_out = &x_mid + &d;
        caches.push(LayerCache {
            x_in: x,
            inv1,
            q,
            k,
            v,
            probs,
            lin_q,
            lin_k,
            lin_v,
            lin_o,
            x_mid,
            inv2,
            u,
            g,
            lin_up,
            lin_gate,
            lin_down,
        });
        x = x_out;
    }
    let (hf, inv_final) = rmsnorm(&x, &params.final_norm);
    let text_logits = hf.slice(s![..text_len, ..]).dot(&params.text_head);
    let pose_logits = hf.slice(s![text_len.., ..]).dot(&params.pose_head);
    (
        ModelOutput {
            text_logits,
            pose_logits,
        },
        ForwardCache {
            text_ids,
            mask,
            layers: caches,
            x_final: x,
            inv_final,
            hf,
        },
    )
}

/// Accumulates parameter gradients of `sum(d_text ⊙ text_logits) + sum(d_pose ⊙ pose_logits)`.
///
/// Returns the gradient with respect to the input embeddings.
pub fn backward(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    cache: &ForwardCache,
    d_text: &Array2<f64>,
    d_pose: &Array2<f64>,
    grads: &mut ModelParams,
    mut adapter_grads: Option<&mut LoraAdapters>,
) -> Array2<f64> {
    let t = cache.mask.text_len();
    let n = cache.mask.size();
    let heads = params.arch.heads;
    let dh = params.arch.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    grads.text_head += &cache.hf.slice(s![..t, ..]).t().dot(d_text);
    grads.pose_head += &cache.hf.slice(s![t.., ..]).t().dot(d_pose);
    let mut dhf = Array2::zeros((n, params.arch.width));
    dhf.slice_mut(s![..t, ..])
        .assign(&d_text.dot(&params.text_head.t()));
    dhf.slice_mut(s![t.., ..])
        .assign(&d_pose.dot(&params.pose_head.t()));
    let mut dx = rmsnorm_backward(
        &dhf,
        &cache.x_final,
        &params.final_norm,
        &cache.inv_final,
        &mut grads.final_norm,
    );

    for (li, (l, c)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        let gl = &mut grads.layers[li];
        // MLP block
        let dm = linear_backward(
            &dx,
            &c.lin_down,
            &l.down,
            &mut gl.down,
            ad(adapters, adapter_grads.as_deref_mut(), li, Adapted::Down),
        );
        let du = &dm * &c.g.mapv(silu);
        let dg = &dm * &c.u * &c.g.mapv(silu_grad);
        let mut dh2 = linear_backward(
            &du,
            &c.lin_up,
            &l.up,
            &mut gl.up,
            ad(adapters, adapter_grads.as_deref_mut(), li, Adapted::Up),
        );
        dh2 += &linear_backward(
            &dg,
            &c.lin_gate,
            &l.gate,
            &mut gl.gate,
            ad(adapters, adapter_grads.as_deref_mut(), li, Adapted::Gate),
        );
        let dx_mid =
            &dx + &rmsnorm_backward(&dh2, &c.x_mid, &l.mlp_norm, &c.inv2, &mut gl.mlp_norm);

        // attention block
        let dattn = linear_backward(
            &dx_mid,
            &c.lin_o,
            &l.wo,
            &mut gl.wo,
            ad(adapters, adapter_grads.as_deref_mut(), li, Adapted::O),
        );
        let mut dq = Array2::zeros((n, params.arch.width));
        let mut dk = Array2::zeros((n, params.arch.width));
        let mut dv = Array2::zeros((n, params.arch.width));
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let p = &c.probs[hd];
            let d_out = dattn.slice(cols);
            let dp = d_out.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&d_out));
            let mut ds = Array2::zeros((n, n));
            for i in 0..n {
                let vis = cache.mask.visible(i);
                let dot: f64 = vis.clone().map(|j| dp[[i, j]] * p[[i, j]]).sum();
                for j in vis {
                    ds[[i, j]] = p[[i, j]] * (dp[[i, j]] - dot) * scale;
                }
            }
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let mut dh1 = linear_backward(
            &dq,
            &c.lin_q,
            &l.wq,
            &mut gl.wq,
            ad(adapters, adapter_grads.as_deref_mut(), li, Adapted::Q),
        );
        dh1 += &linear_backward(
            &dk,
            &c.lin_k,
            &l.wk,
            &mut gl.wk,
            ad(adapters, adapter_grads.as_deref_mut(), li, Adapted::K),
        );
        dh1 += &linear_backward(
            &dv,
            &c.lin_v,
            &l.wv,
            &mut gl.wv,
            ad(adapters, adapter_grads.as_deref_mut(), li, Adapted::V),
        );
        dx = &dx_mid + &rmsnorm_backward(&dh1, &c.x_in, &l.attn_norm, &c.inv1, &mut gl.attn_norm);
    }

    if let Some(ids) = &cache.text_ids {
        for (i, &id) in ids.iter().enumerate() {
            let row = dx.row(i);
            let mut te = grads.tok_emb.row_mut(id);
            te += &row;
            let mut pe = grads.pos_emb.row_mut(i);
            pe += &row;
        }
        for s in 0..n - t {
            let row = dx.row(t + s);
            let mut te = grads.tok_emb.row_mut(PQ);
            te += &row;
            let mut qe = grads.query_emb.row_mut(s);
            qe += &row;
        }
    }
    dx
}
