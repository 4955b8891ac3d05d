use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{
    add_linear, add_output, linear, predict_proba, sigmoid_head, Forward, MlpConfig, ModelKind,
    TrainedModel,
};

pub(super) fn init(
    params: &mut ParamStore,
    cfg: &MlpConfig,
    n_features: usize,
    rng: &mut Rng,
) -> Result<()> {
    let mut fan_in = n_features;
    for (l, &width) in cfg.hidden_sizes.iter().enumerate() {
        add_linear(params, &format!("mlp.layer{l}"), fan_in, width, rng)?;
        fan_in = width;
    }
    add_output(params, "mlp.out", fan_in)
}

/// `h = ReLU(h W + b)` per hidden layer, then a sigmoid output unit.
pub(super) fn forward(
    g: &mut Graph,
    params: &ParamStore,
    cfg: &MlpConfig,
    x: NodeId,
) -> Result<Forward> {
    let mut h = x;
    for l in 0..cfg.hidden_sizes.len() {
        let z = linear(g, params, &format!("mlp.layer{l}"), h)?;
        h = g.relu(z);
    }
    let logits = linear(g, params, "mlp.out", h)?;
    Ok(Forward {
        prob: sigmoid_head(g, logits)?,
        attention: Vec::new(),
        batch_stats: Vec::new(),
    })
}

pub fn mlp_forward(model: &TrainedModel, x: &Tensor) -> Result<Vec<f64>> {
    if model.kind() != ModelKind::Mlp {
        return Err(Error::Usage(format!(
            "mlp_forward given a {} model",
            model.kind().name()
        )));
    }
    predict_proba(model, x)
}
