//! Content losses (pixelwise MSE and BCE), saliency-map downsampling for the
//! downsampled-BCE objective, and the adversarial losses for generator and
//! discriminator.
//!
//! All losses are natural-log, scalar graph nodes; predictions are clamped
//! to [1e-7, 1 - 1e-7] before logarithms.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A scalar loss: its value in nats and the graph node to backpropagate from.
#[derive(Debug, Clone, Copy)]
pub struct LossValue {
    pub value: f64,
    pub node: NodeId,
}

fn loss_value(graph: &Graph, node: NodeId) -> Result<LossValue> {
    Ok(LossValue {
        value: graph.scalar(node)?,
        node,
    })
}

/// Mean squared error between prediction and target maps.
pub fn mse(graph: &mut Graph, pred: NodeId, target: NodeId) -> Result<LossValue> {
    let node = graph.mse(pred, target)?;
    loss_value(graph, node)
}

/// Mean binary cross entropy between prediction and target maps.
pub fn bce(graph: &mut Graph, pred: NodeId, target: NodeId) -> Result<LossValue> {
    let node = graph.bce(pred, target)?;
    loss_value(graph, node)
}

/// Average-pools a saliency map node by `factor` (allowed: 1, 2, 4, 8).
/// Factor 1 is the identity. Average pooling keeps values in [0,1] and
/// preserves the global mean exactly.
pub fn downsample_map(graph: &mut Graph, map: NodeId, factor: usize) -> Result<NodeId> {
    if ![1, 2, 4, 8].contains(&factor) {
        return Err(Error::InvalidArgument(format!(
            "downsample factor must be one of 1, 2, 4, 8, got {factor}"
        )));
    }
    graph.avgpool2(map, factor)
}

/// Generator objective during adversarial training:
/// `alpha * content_bce + BCE(disc_out, 1)`, i.e. the content term plus
/// `-ln(disc_out)` pushing the discriminator output toward "real".
pub fn generator_adv_loss(
    graph: &mut Graph,
    disc_out: NodeId,
    content_bce: LossValue,
    alpha: f64,
) -> Result<LossValue> {
    if alpha < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    let ones = Tensor::filled(graph.value(disc_out).shape(), 1.0);
    let ones = graph.leaf(ones);
    let adv = graph.bce(disc_out, ones)?;
    let weighted = graph.scale(content_bce.node, alpha)?;
    let node = graph.add(weighted, adv)?;
    loss_value(graph, node)
}

/// Discriminator objective: `BCE(d_real, 1) + BCE(d_fake, 0)`, i.e.
/// `-ln(d_real) - ln(1 - d_fake)`. The fake prediction must be fed in as a
/// constant (detached) node so no gradient reaches the generator.
pub fn discriminator_loss(graph: &mut Graph, d_real: NodeId, d_fake: NodeId) -> Result<LossValue> {
    let ones = Tensor::filled(graph.value(d_real).shape(), 1.0);
    let zeros = Tensor::zeros(graph.value(d_fake).shape());
    let ones = graph.leaf(ones);
    let zeros = graph.leaf(zeros);
    let real_term = graph.bce(d_real, ones)?;
    let fake_term = graph.bce(d_fake, zeros)?;
    let node = graph.add(real_term, fake_term)?;
    loss_value(graph, node)
}
