//! Gradient-trained classifiers (MLP, attentive feature masking, SAINT) and
//! their shared training loop.

mod attentive;
mod mlp;
mod saint;
mod train;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ChunkStats, Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

pub use attentive::{attentive_forward, attentive_inspect, AttentiveInspection};
pub use mlp::mlp_forward;
pub use saint::{intersample_attention_block, saint_embed, saint_forward, self_attention_block};
pub use train::{train, TrainConfig};

/// Epsilon shared by layer norm and ghost batch norm.
pub const NORM_EPS: f64 = 1e-5;

/// Momentum of the running statistics kept for inference-time batch norm.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Attentive,
    Saint,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Attentive => "attentive",
            ModelKind::Saint => "saint",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_sizes: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_sizes: vec![64, 32],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentiveConfig {
    pub head_hidden: usize,
    pub virtual_batch: usize,
}

impl Default for AttentiveConfig {
    fn default() -> Self {
        AttentiveConfig {
            head_hidden: 32,
            virtual_batch: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaintConfig {
    pub d_emb: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_multiplier: usize,
    pub dropout: f64,
    pub use_intersample: bool,
}

impl Default for SaintConfig {
    fn default() -> Self {
        SaintConfig {
            d_emb: 16,
            n_layers: 2,
            n_heads: 2,
            ff_multiplier: 2,
            dropout: 0.1,
            use_intersample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Mlp(MlpConfig),
    Attentive(AttentiveConfig),
    Saint(SaintConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Mlp(_) => ModelKind::Mlp,
            ModelConfig::Attentive(_) => ModelKind::Attentive,
            ModelConfig::Saint(_) => ModelKind::Saint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            ModelConfig::Mlp(c) => {
                if c.hidden_sizes.contains(&0) {
                    return bad(format!(
                        "mlp.hidden_sizes must be positive, got {:?}",
                        c.hidden_sizes
                    ));
                }
            }
            ModelConfig::Attentive(c) => {
                if c.head_hidden == 0 || c.virtual_batch == 0 {
                    return bad(
                        "attentive.head_hidden and attentive.virtual_batch must be at least 1"
                            .into(),
                    );
                }
            }
            ModelConfig::Saint(c) => {
                if c.d_emb == 0 || c.n_heads == 0 || c.d_emb % c.n_heads != 0 {
                    return bad(format!(
                        "saint.d_emb ({}) must be a positive multiple of saint.n_heads ({})",
                        c.d_emb, c.n_heads
                    ));
                }
                if c.ff_multiplier == 0 {
                    return bad("saint.ff_multiplier must be at least 1".into());
                }
                if !(0.0..1.0).contains(&c.dropout) {
                    return bad(format!("saint.dropout {} outside [0, 1)", c.dropout));
                }
            }
        }
        Ok(())
    }
}

/// Running per-unit statistics used by batch norm at inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(width: usize) -> Self {
        RunningStats {
            mean: vec![0.0; width],
            var: vec![1.0; width],
        }
    }

    /// Folds in each virtual batch's statistics in order.
    pub fn update(&mut self, chunks: &[ChunkStats]) {
        for c in chunks {
            for (r, m) in self.mean.iter_mut().zip(&c.mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
            }
            for (r, v) in self.var.iter_mut().zip(&c.var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
            }
        }
    }
}

/// Training mode carries the dropout stream; evaluation mode disables
/// dropout and uses running normalization statistics.
pub enum Mode<'a> {
    Train(&'a mut Rng),
    Eval,
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionScope {
    /// Attentive feature mask, `[n, features]`.
    Mask,
    /// SAINT attention among a row's feature tokens, `[n * heads, t, t]`.
    Feature,
    /// SAINT attention among the rows of a batch, `[heads, n, n]`.
    Sample,
}

/// An attention distribution recorded during a forward pass. Every slice
/// along the last axis is a probability distribution.
#[derive(Debug, Clone, Copy)]
pub struct AttentionTrace {
    pub scope: AttentionScope,
    pub layer: usize,
    pub node: NodeId,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// Probabilities, shape `[n]`.
    pub prob: NodeId,
    pub attention: Vec<AttentionTrace>,
    pub batch_stats: Vec<ChunkStats>,
}

/// Materialized attention distribution.
#[derive(Debug, Clone)]
pub struct AttentionMap {
    pub scope: AttentionScope,
    pub layer: usize,
    pub weights: Tensor,
}

/// A model's parameters, configuration and training record. Immutable once
/// [`train`] returns it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub train_config: TrainConfig,
    pub n_features: usize,
    pub params: ParamStore,
    pub running_stats: Option<RunningStats>,
    pub training_loss_curve: Vec<f64>,
}

impl TrainedModel {
    /// Freshly initialized, untrained model: uniform weights with bound
    /// `sqrt(1/fan_in)`, zero biases, unit norm gains, and a zero output
    /// layer so every untrained prediction is exactly 0.5.
    pub fn init(config: ModelConfig, n_features: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_features == 0 {
            return Err(Error::Usage("model needs at least one feature".into()));
        }
        let kind = config.kind();
        let mut rng = rng::stream(seed, &format!("init.{}", kind.name()));
        let mut params = ParamStore::new();
        let running_stats = match &config {
            ModelConfig::Mlp(c) => {
                mlp::init(&mut params, c, n_features, &mut rng)?;
                None
            }
            ModelConfig::Attentive(c) => {
                attentive::init(&mut params, c, n_features, &mut rng)?;
                Some(RunningStats::new(c.head_hidden))
            }
            ModelConfig::Saint(c) => {
                saint::init(&mut params, c, n_features, &mut rng)?;
                None
            }
        };
        Ok(TrainedModel {
            config,
            train_config: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            n_features,
            params,
            running_stats,
            training_loss_curve: Vec::new(),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    /// Records the forward pass for `x` (a `[n, n_features]` graph node)
    /// using the parameters in `params`, which must share this model's
    /// layout. Passing a store other than `self.params` is how gradient
    /// checks perturb weights.
    pub fn forward_with(
        &self,
        params: &ParamStore,
        g: &mut Graph,
        x: NodeId,
        mode: &mut Mode<'_>,
    ) -> Result<Forward> {
        let shape = g.value(x).shape();
        if shape.len() != 2 || shape[1] != self.n_features || shape[0] == 0 {
            return Err(Error::dim(
                "model input",
                shape,
                &[shape.first().copied().unwrap_or(0), self.n_features],
            ));
        }
        match &self.config {
            ModelConfig::Mlp(c) => mlp::forward(g, params, c, x),
            ModelConfig::Attentive(c) => {
                attentive::forward(g, params, c, self.running_stats.as_ref(), x, mode)
            }
            ModelConfig::Saint(c) => saint::forward(g, params, c, x, mode),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId, mode: &mut Mode<'_>) -> Result<Forward> {
        self.forward_with(&self.params, g, x, mode)
    }

    /// Every attention distribution of an inference pass over `x`.
    pub fn attention_maps(&self, x: &Tensor) -> Result<Vec<AttentionMap>> {
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let out = self.forward(&mut g, xn, &mut Mode::Eval)?;
        Ok(out
            .attention
            .iter()
            .map(|t| AttentionMap {
                scope: t.scope,
                layer: t.layer,
                weights: g.value(t.node).clone(),
            })
            .collect())
    }
}

/// Inference-mode probabilities for every row of `x`. SAINT with intersample
/// attention sees the whole of `x` as one batch.
pub fn predict_proba(model: &TrainedModel, x: &Tensor) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let out = model.forward(&mut g, xn, &mut Mode::Eval)?;
    Ok(g.value(out.prob).data().to_vec())
}

/// `x W + b` with parameters `<prefix>.W` and `<prefix>.b`, for a 2-D `x`.
pub(crate) fn linear(
    g: &mut Graph,
    params: &ParamStore,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    let w = param(g, params, &format!("{prefix}.W"))?;
    let b = param(g, params, &format!("{prefix}.b"))?;
    let xw = g.matmul(x, w)?;
    g.add_bias(xw, b)
}

pub(crate) fn param(g: &mut Graph, params: &ParamStore, name: &str) -> Result<NodeId> {
    let id: ParamId = params.id(name)?;
    Ok(g.param(params, id))
}

pub(crate) fn add_linear(
    params: &mut ParamStore,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) -> Result<()> {
    params.add_uniform(&format!("{prefix}.W"), fan_in, fan_out, rng)?;
    params.add_zeros(&format!("{prefix}.b"), &[fan_out])?;
    Ok(())
}

/// Zero-initialized `[fan_in, 1]` output unit `<prefix>.W`, `<prefix>.b`.
pub(crate) fn add_output(params: &mut ParamStore, prefix: &str, fan_in: usize) -> Result<()> {
    params.add_zeros(&format!("{prefix}.W"), &[fan_in, 1])?;
    params.add_zeros(&format!("{prefix}.b"), &[1])?;
    Ok(())
}

/// `[n, 1]` logits to `[n]` probabilities.
pub(crate) fn sigmoid_head(g: &mut Graph, logits: NodeId) -> Result<NodeId> {
    let n = g.value(logits).rows();
    let p = g.sigmoid(logits);
    g.reshape(p, &[n])
}
