//! Single-mask attentive classifier: a learned linear map of the input gives
//! per-row logits whose softmax reweights the features before a one-hidden
//! layer head with ghost batch normalization.

use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{
    add_linear, add_output, linear, param, predict_proba, sigmoid_head, AttentionScope,
    AttentionTrace, AttentiveConfig, Forward, Mode, ModelKind, RunningStats, TrainedModel,
    NORM_EPS,
};

pub(super) fn init(
    params: &mut ParamStore,
    cfg: &AttentiveConfig,
    n_features: usize,
    rng: &mut Rng,
) -> Result<()> {
    add_linear(params, "attentive.mask", n_features, n_features, rng)?;
    // No hidden bias: batch norm removes it anyway.
    params.add_uniform("attentive.hidden.W", n_features, cfg.head_hidden, rng)?;
    params.add_ones("attentive.bn.gamma", &[cfg.head_hidden])?;
    params.add_zeros("attentive.bn.beta", &[cfg.head_hidden])?;
    add_output(params, "attentive.out", cfg.head_hidden)
}

struct Parts {
    mask: NodeId,
    masked: NodeId,
    forward: Forward,
}

fn forward_parts(
    g: &mut Graph,
    params: &ParamStore,
    cfg: &AttentiveConfig,
    running: Option<&RunningStats>,
    x: NodeId,
    mode: &Mode<'_>,
) -> Result<Parts> {
    let logits = linear(g, params, "attentive.mask", x)?;
    let mask = g.softmax_rows(logits);
    let masked = g.mul(mask, x)?;
    let w = param(g, params, "attentive.hidden.W")?;
    let h = g.matmul(masked, w)?;
    let (normed, batch_stats) = if mode.is_train() {
        g.ghost_batch_norm(h, cfg.virtual_batch, NORM_EPS)?
    } else {
        let stats = running
            .ok_or_else(|| Error::Usage("attentive model has no running statistics".into()))?;
        let shift = g.constant(Tensor::vector(stats.mean.iter().map(|m| -m).collect()));
        let inv = g.constant(Tensor::vector(
            stats
                .var
                .iter()
                .map(|v| 1.0 / (v + NORM_EPS).sqrt())
                .collect(),
        ));
        let centered = g.add_bias(h, shift)?;
        (g.mul_bias(centered, inv)?, Vec::new())
    };
    let gamma = param(g, params, "attentive.bn.gamma")?;
    let beta = param(g, params, "attentive.bn.beta")?;
    let scaled = g.mul_bias(normed, gamma)?;
    let shifted = g.add_bias(scaled, beta)?;
    let hidden = g.relu(shifted);
    let out = linear(g, params, "attentive.out", hidden)?;
    Ok(Parts {
        mask,
        masked,
        forward: Forward {
            prob: sigmoid_head(g, out)?,
            attention: vec![AttentionTrace {
                scope: AttentionScope::Mask,
                layer: 0,
                node: mask,
            }],
            batch_stats,
        },
    })
}

pub(super) fn forward(
    g: &mut Graph,
    params: &ParamStore,
    cfg: &AttentiveConfig,
    running: Option<&RunningStats>,
    x: NodeId,
    mode: &mut Mode<'_>,
) -> Result<Forward> {
    Ok(forward_parts(g, params, cfg, running, x, mode)?.forward)
}

pub fn attentive_forward(model: &TrainedModel, x: &Tensor) -> Result<Vec<f64>> {
    if model.kind() != ModelKind::Attentive {
        return Err(Error::Usage(format!(
            "attentive_forward given a {} model",
            model.kind().name()
        )));
    }
    predict_proba(model, x)
}

/// Inference-mode intermediates of the attentive classifier.
#[derive(Debug, Clone)]
pub struct AttentiveInspection {
    /// Softmaxed feature weights, `[n, features]`.
    pub mask: Tensor,
    /// `mask ⊙ x`.
    pub masked_input: Tensor,
    pub probabilities: Vec<f64>,
}

pub fn attentive_inspect(model: &TrainedModel, x: &Tensor) -> Result<AttentiveInspection> {
    let super::ModelConfig::Attentive(cfg) = &model.config else {
        return Err(Error::Usage(format!(
            "attentive_inspect given a {} model",
            model.kind().name()
        )));
    };
    if x.rank() != 2 || x.cols() != model.n_features {
        return Err(Error::dim(
            "attentive input",
            x.shape(),
            &[model.n_features],
        ));
    }
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let parts = forward_parts(
        &mut g,
        &model.params,
        cfg,
        model.running_stats.as_ref(),
        xn,
        &Mode::Eval,
    )?;
    Ok(AttentiveInspection {
        mask: g.value(parts.mask).clone(),
        masked_input: g.value(parts.masked).clone(),
        probabilities: g.value(parts.forward.prob).data().to_vec(),
    })
}
