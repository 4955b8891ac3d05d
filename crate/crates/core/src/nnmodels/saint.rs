//! SAINT: per-feature token embeddings, transformer blocks attending across
//! the feature tokens of a row and (optionally) across the rows of a batch,
//! then mean pooling over tokens and a sigmoid head.

use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{
    add_linear, add_output, linear, param, predict_proba, sigmoid_head, AttentionScope,
    AttentionTrace, Forward, Mode, ModelKind, SaintConfig, TrainedModel, NORM_EPS,
};

fn add_norm(params: &mut ParamStore, prefix: &str, width: usize) -> Result<()> {
    params.add_ones(&format!("{prefix}.gain"), &[width])?;
    params.add_zeros(&format!("{prefix}.bias"), &[width])?;
    Ok(())
}

fn add_attention(params: &mut ParamStore, prefix: &str, width: usize, rng: &mut Rng) -> Result<()> {
    for proj in ["q", "k", "v", "o"] {
        add_linear(params, &format!("{prefix}.{proj}"), width, width, rng)?;
    }
    Ok(())
}

fn add_block(
    params: &mut ParamStore,
    prefix: &str,
    attn_width: usize,
    cfg: &SaintConfig,
    rng: &mut Rng,
) -> Result<()> {
    add_attention(params, &format!("{prefix}.attn"), attn_width, rng)?;
    add_norm(params, &format!("{prefix}.norm1"), cfg.d_emb)?;
    add_linear(
        params,
        &format!("{prefix}.ff1"),
        cfg.d_emb,
        cfg.d_emb * cfg.ff_multiplier,
        rng,
    )?;
    add_linear(
        params,
        &format!("{prefix}.ff2"),
        cfg.d_emb * cfg.ff_multiplier,
        cfg.d_emb,
        rng,
    )?;
    add_norm(params, &format!("{prefix}.norm2"), cfg.d_emb)
}

pub(super) fn init(
    params: &mut ParamStore,
    cfg: &SaintConfig,
    n_features: usize,
    rng: &mut Rng,
) -> Result<()> {
    // Each feature's embedding is an affine map of one scalar, so fan_in is 1.
    params.add_uniform_shaped("saint.embed.W", &[n_features, cfg.d_emb], 1, rng)?;
    params.add_zeros("saint.embed.b", &[n_features, cfg.d_emb])?;
    for l in 0..cfg.n_layers {
        add_block(params, &format!("saint.layer{l}.self"), cfg.d_emb, cfg, rng)?;
        if cfg.use_intersample {
            add_block(
                params,
                &format!("saint.layer{l}.inter"),
                n_features * cfg.d_emb,
                cfg,
                rng,
            )?;
        }
    }
    add_output(params, "saint.out", cfg.d_emb)
}

fn dropout(g: &mut Graph, x: NodeId, p: f64, mode: &mut Mode<'_>) -> Result<NodeId> {
    match mode {
        Mode::Train(rng) => g.dropout(x, p, rng),
        Mode::Eval => Ok(x),
    }
}

fn norm(g: &mut Graph, params: &ParamStore, prefix: &str, x: NodeId) -> Result<NodeId> {
    let gain = param(g, params, &format!("{prefix}.gain"))?;
    let bias = param(g, params, &format!("{prefix}.bias"))?;
    g.layer_norm(x, gain, bias, NORM_EPS)
}

/// Multi-head scaled dot-product attention. `x` is `[groups * seq, width]`;
/// attention runs over the `seq` positions inside each group.
#[allow(clippy::too_many_arguments)]
fn multi_head(
    g: &mut Graph,
    params: &ParamStore,
    prefix: &str,
    x: NodeId,
    groups: usize,
    seq: usize,
    heads: usize,
    drop_p: f64,
    mode: &mut Mode<'_>,
) -> Result<(NodeId, NodeId)> {
    let width = g.value(x).cols();
    let dh = width / heads;
    let split = |g: &mut Graph, node: NodeId, axes: &[usize], shape: &[usize]| -> Result<NodeId> {
        let r = g.reshape(node, &[groups, seq, heads, dh])?;
        let p = g.permute(r, axes)?;
        g.reshape(p, shape)
    };
    let q = linear(g, params, &format!("{prefix}.q"), x)?;
    let k = linear(g, params, &format!("{prefix}.k"), x)?;
    let v = linear(g, params, &format!("{prefix}.v"), x)?;
    let q = split(g, q, &[0, 2, 1, 3], &[groups * heads, seq, dh])?;
    let kt = split(g, k, &[0, 2, 3, 1], &[groups * heads, dh, seq])?;
    let v = split(g, v, &[0, 2, 1, 3], &[groups * heads, seq, dh])?;
    let scores = g.batch_matmul(q, kt)?;
    let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
    let weights = g.softmax_rows(scores);
    let dropped = dropout(g, weights, drop_p, mode)?;
    let ctx = g.batch_matmul(dropped, v)?;
    let ctx = g.reshape(ctx, &[groups, heads, seq, dh])?;
    let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = g.reshape(ctx, &[groups * seq, width])?;
    Ok((linear(g, params, &format!("{prefix}.o"), ctx)?, weights))
}

/// Position-wise `ReLU(z W1 + b1) W2 + b2` with dropout on the hidden layer.
fn feed_forward(
    g: &mut Graph,
    params: &ParamStore,
    prefix: &str,
    z: NodeId,
    p: f64,
    mode: &mut Mode<'_>,
) -> Result<NodeId> {
    let h = linear(g, params, &format!("{prefix}.ff1"), z)?;
    let h = g.relu(h);
    let h = dropout(g, h, p, mode)?;
    linear(g, params, &format!("{prefix}.ff2"), h)
}

/// `[n, t]` features to `[n, t, d_emb]` tokens, `x_ij * w_j + b_j`.
pub fn saint_embed(g: &mut Graph, params: &ParamStore, x: NodeId) -> Result<NodeId> {
    let w = param(g, params, "saint.embed.W")?;
    let b = param(g, params, "saint.embed.b")?;
    g.feature_embed(x, w, b)
}

fn check_tokens(g: &Graph, h: NodeId, cfg: &SaintConfig) -> Result<(usize, usize, usize)> {
    let s = g.value(h).shape();
    if s.len() != 3 || s[2] != cfg.d_emb || s[0] == 0 {
        return Err(Error::dim("saint block", s, &[cfg.d_emb]));
    }
    Ok((s[0], s[1], s[2]))
}

/// Attention across the feature tokens of each row, then post-norm residual
/// and feed-forward sublayers. Shape-preserving on `[n, t, d]`.
pub fn self_attention_block(
    g: &mut Graph,
    params: &ParamStore,
    cfg: &SaintConfig,
    layer: usize,
    h: NodeId,
    mode: &mut Mode<'_>,
    traces: &mut Vec<AttentionTrace>,
) -> Result<NodeId> {
    let (n, t, d) = check_tokens(g, h, cfg)?;
    let prefix = format!("saint.layer{layer}.self");
    let x = g.reshape(h, &[n * t, d])?;
    let (attn, weights) = multi_head(
        g,
        params,
        &format!("{prefix}.attn"),
        x,
        n,
        t,
        cfg.n_heads,
        cfg.dropout,
        mode,
    )?;
    traces.push(AttentionTrace {
        scope: AttentionScope::Feature,
        layer,
        node: weights,
    });
    let r = g.add(x, attn)?;
    let z = norm(g, params, &format!("{prefix}.norm1"), r)?;
    let f = feed_forward(g, params, &prefix, z, cfg.dropout, mode)?;
    let r2 = g.add(z, f)?;
    let out = norm(g, params, &format!("{prefix}.norm2"), r2)?;
    g.reshape(out, &[n, t, d])
}

/// Attention across the rows of the batch, each row flattened to one
/// `t * d` vector. The norms and feed-forward act per token afterwards.
pub fn intersample_attention_block(
    g: &mut Graph,
    params: &ParamStore,
    cfg: &SaintConfig,
    layer: usize,
    h: NodeId,
    mode: &mut Mode<'_>,
    traces: &mut Vec<AttentionTrace>,
) -> Result<NodeId> {
    let (n, t, d) = check_tokens(g, h, cfg)?;
    let prefix = format!("saint.layer{layer}.inter");
    let rows = g.reshape(h, &[n, t * d])?;
    let (attn, weights) = multi_head(
        g,
        params,
        &format!("{prefix}.attn"),
        rows,
        1,
        n,
        cfg.n_heads,
        cfg.dropout,
        mode,
    )?;
    traces.push(AttentionTrace {
        scope: AttentionScope::Sample,
        layer,
        node: weights,
    });
    let r = g.add(rows, attn)?;
    let r = g.reshape(r, &[n * t, d])?;
    let z = norm(g, params, &format!("{prefix}.norm1"), r)?;
    let f = feed_forward(g, params, &prefix, z, cfg.dropout, mode)?;
    let r2 = g.add(z, f)?;
    let out = norm(g, params, &format!("{prefix}.norm2"), r2)?;
    g.reshape(out, &[n, t, d])
}

pub(super) fn forward(
    g: &mut Graph,
    params: &ParamStore,
    cfg: &SaintConfig,
    x: NodeId,
    mode: &mut Mode<'_>,
) -> Result<Forward> {
    let mut traces = Vec::new();
    let mut h = saint_embed(g, params, x)?;
    for l in 0..cfg.n_layers {
        h = self_attention_block(g, params, cfg, l, h, mode, &mut traces)?;
        if cfg.use_intersample {
            h = intersample_attention_block(g, params, cfg, l, h, mode, &mut traces)?;
        }
    }
    let pooled = g.mean_tokens(h)?;
    let logits = linear(g, params, "saint.out", pooled)?;
    Ok(Forward {
        prob: sigmoid_head(g, logits)?,
        attention: traces,
        batch_stats: Vec::new(),
    })
}

pub fn saint_forward(model: &TrainedModel, x: &Tensor) -> Result<Vec<f64>> {
    if model.kind() != ModelKind::Saint {
        return Err(Error::Usage(format!(
            "saint_forward given a {} model",
            model.kind().name()
        )));
    }
    predict_proba(model, x)
}
