//! Reverse-mode automatic differentiation over the tensor kernels, plus a
//! finite-difference gradient checker.
//!
//! A [`Graph`] is an append-only tape: node ids are assigned in insertion
//! order, so parents always precede children and the backward pass is a
//! single reverse sweep. Values are computed eagerly at insertion.
//! Gradients accumulate additively into each node's grad buffer and must be
//! zeroed explicitly (or a fresh graph built) between batches.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{self, Activation, Tensor};

/// Clamp applied to predictions before logarithms in the cross-entropy ops.
pub const BCE_EPSILON: f64 = 1e-7;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        stride: usize,
        pad: usize,
    },
    MaxPool2 {
        argmax: Vec<usize>,
    },
    Upsample2,
    AvgPool2 {
        factor: usize,
    },
    Dense,
    Activate(Activation),
    Flatten,
    ConcatChannels {
        left_channels: usize,
        right_channels: usize,
    },
    Add,
    Scale(f64),
    Sum,
    Mse,
    Bce,
}

#[derive(Debug)]
struct Node {
    op: Op,
    parents: Vec<NodeId>,
    value: Tensor,
    grad: Tensor,
}

/// Computation tape with a set of trainable leaf nodes.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    trainable: Vec<bool>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, parents: Vec<NodeId>, value: Tensor) -> NodeId {
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node {
            op,
            parents,
            value,
            grad,
        });
        self.trainable.push(false);
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::Graph(format!("node id {} not in graph", id.0)));
        }
        Ok(())
    }

    /// Inserts a constant leaf. No gradient is requested for it.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, vec![], value)
    }

    /// Inserts a trainable parameter leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        let id = self.push(Op::Leaf, vec![], value);
        self.trainable[id.0] = true;
        id
    }

    /// Adds or removes a leaf from the trainable set. Freezing a node this
    /// way never changes the gradients computed for other nodes.
    pub fn set_trainable(&mut self, id: NodeId, trainable: bool) -> Result<()> {
        self.check(id)?;
        self.trainable[id.0] = trainable;
        Ok(())
    }

    pub fn is_trainable(&self, id: NodeId) -> bool {
        self.trainable.get(id.0).copied().unwrap_or(false)
    }

    /// Ids of all trainable leaves in insertion order.
    pub fn trainable_ids(&self) -> Vec<NodeId> {
        self.trainable
            .iter()
            .enumerate()
            .filter_map(|(i, &t)| t.then_some(NodeId(i)))
            .collect()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].grad
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        self.nodes[id.0].value.item()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad.fill(0.0);
        }
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        self.check(input)?;
        self.check(kernel)?;
        self.check(bias)?;
        let value = tensor::conv2d(
            self.value(input),
            self.value(kernel),
            self.value(bias),
            stride,
            pad,
        )?;
        Ok(self.push(Op::Conv2d { stride, pad }, vec![input, kernel, bias], value))
    }

    pub fn maxpool2(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        let (value, argmax) = tensor::maxpool2(self.value(input))?;
        Ok(self.push(Op::MaxPool2 { argmax }, vec![input], value))
    }

    pub fn upsample2(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        let value = tensor::upsample2(self.value(input))?;
        Ok(self.push(Op::Upsample2, vec![input], value))
    }

    pub fn avgpool2(&mut self, input: NodeId, factor: usize) -> Result<NodeId> {
        self.check(input)?;
        let value = tensor::avgpool2(self.value(input), factor)?;
        Ok(self.push(Op::AvgPool2 { factor }, vec![input], value))
    }

    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        self.check(input)?;
        self.check(weight)?;
        self.check(bias)?;
        let value = tensor::dense(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(Op::Dense, vec![input, weight, bias], value))
    }

    pub fn activate(&mut self, input: NodeId, kind: Activation) -> Result<NodeId> {
        self.check(input)?;
        let value = tensor::activate(self.value(input), kind);
        Ok(self.push(Op::Activate(kind), vec![input], value))
    }

    /// Reshapes (B, C, H, W) to (B, C*H*W) for the dense head.
    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        let shape = self.value(input).shape();
        if shape.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "flatten: expected rank >= 2, got {shape:?}"
            )));
        }
        let b = shape[0];
        let rest: usize = shape[1..].iter().product();
        let value = self.value(input).reshape(&[b, rest])?;
        Ok(self.push(Op::Flatten, vec![input], value))
    }

    pub fn concat_channels(&mut self, left: NodeId, right: NodeId) -> Result<NodeId> {
        self.check(left)?;
        self.check(right)?;
        let value = tensor::concat_channels(self.value(left), self.value(right))?;
        let lc = self.value(left).shape()[1];
        let rc = self.value(right).shape()[1];
        Ok(self.push(
            Op::ConcatChannels {
                left_channels: lc,
                right_channels: rc,
            },
            vec![left, right],
            value,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add, vec![a, b], value))
    }

    pub fn scale(&mut self, input: NodeId, c: f64) -> Result<NodeId> {
        self.check(input)?;
        let value = self.value(input).scale(c);
        Ok(self.push(Op::Scale(c), vec![input], value))
    }

    pub fn sum(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        let value = Tensor::scalar(self.value(input).sum());
        Ok(self.push(Op::Sum, vec![input], value))
    }

    /// Mean squared error between two same-shape nodes, as a scalar node.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.check(pred)?;
        self.check(target)?;
        let p = self.value(pred);
        let t = self.value(target);
        if p.shape() != t.shape() {
            return Err(Error::ShapeMismatch(format!(
                "mse: {:?} vs {:?}",
                p.shape(),
                t.shape()
            )));
        }
        let n = p.len() as f64;
        let v = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        Ok(self.push(Op::Mse, vec![pred, target], Tensor::scalar(v)))
    }

    /// Mean binary cross entropy between two same-shape nodes (natural log,
    /// predictions clamped to [BCE_EPSILON, 1 - BCE_EPSILON]).
    pub fn bce(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.check(pred)?;
        self.check(target)?;
        let p = self.value(pred);
        let t = self.value(target);
        if p.shape() != t.shape() {
            return Err(Error::ShapeMismatch(format!(
                "bce: {:?} vs {:?}",
                p.shape(),
                t.shape()
            )));
        }
        let n = p.len() as f64;
        let mut acc = 0.0;
        for (&pv, &tv) in p.data().iter().zip(t.data()) {
            let pc = pv.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            acc += tv * pc.ln() + (1.0 - tv) * (1.0 - pc).ln();
        }
        Ok(self.push(Op::Bce, vec![pred, target], Tensor::scalar(-acc / n)))
    }

    /// Marks which nodes carry gradient toward a trainable leaf. A node
    /// needs a gradient iff it is trainable or any of its inputs does.
    fn needs_grad(&self) -> Vec<bool> {
        let mut needs = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            needs[i] = self.trainable[i] || node.parents.iter().any(|p| needs[p.0]);
        }
        needs
    }

    /// Accumulates d(loss)/d(node) into every node's grad buffer, walking the
    /// tape in reverse. Returns the gradients of the trainable leaves.
    /// Repeated calls without `zero_grads` accumulate.
    pub fn backward(&mut self, loss: NodeId) -> Result<HashMap<NodeId, Tensor>> {
        self.check(loss)?;
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Graph(format!(
                "backward: loss node must be scalar, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let needs = self.needs_grad();

        // Local upstream buffers for this pass; node.grad keeps the running
        // accumulation across passes.
        let mut upstream: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        upstream[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !needs[i] {
                continue;
            }
            let Some(g) = upstream[i].take() else {
                continue;
            };
            self.nodes[i].grad.add_scaled(&g, 1.0)?;

            let parents = self.nodes[i].parents.clone();
            if parents.is_empty() {
                continue;
            }
            let contribs = self.backward_op(i, &g, &needs)?;
            for (pid, contrib) in parents.iter().zip(contribs) {
                let Some(contrib) = contrib else { continue };
                match upstream[pid.0].as_mut() {
                    Some(existing) => existing.add_scaled(&contrib, 1.0)?,
                    None => upstream[pid.0] = Some(contrib),
                }
            }
        }

        let mut out = HashMap::new();
        for id in self.trainable_ids() {
            out.insert(id, self.nodes[id.0].grad.clone());
        }
        Ok(out)
    }

    /// Per-op chain rule: gradient contributions for each parent (None for
    /// parents that do not need a gradient).
    fn backward_op(&self, i: usize, g: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let node = &self.nodes[i];
        let parent_val = |k: usize| &self.nodes[node.parents[k].0].value;
        let parent_needs = |k: usize| needs[node.parents[k].0];
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d { stride, pad } => {
                let (di, dk, db) = tensor::conv2d_backward(
                    parent_val(0),
                    parent_val(1),
                    g,
                    *stride,
                    *pad,
                    parent_needs(0),
                    parent_needs(1),
                    parent_needs(2),
                )?;
                vec![di, dk, db]
            }
            Op::MaxPool2 { argmax } => {
                vec![parent_needs(0)
                    .then(|| tensor::maxpool2_backward(parent_val(0).shape(), argmax, g))]
            }
            Op::Upsample2 => {
                vec![parent_needs(0).then(|| tensor::upsample2_backward(parent_val(0).shape(), g))]
            }
            Op::AvgPool2 { factor } => {
                vec![parent_needs(0)
                    .then(|| tensor::avgpool2_backward(parent_val(0).shape(), *factor, g))]
            }
            Op::Dense => {
                let (di, dw, db) = tensor::dense_backward(
                    parent_val(0),
                    parent_val(1),
                    g,
                    parent_needs(0),
                    parent_needs(1),
                    parent_needs(2),
                )?;
                vec![di, dw, db]
            }
            Op::Activate(kind) => {
                vec![parent_needs(0).then(|| tensor::activate_backward(&node.value, g, *kind))]
            }
            Op::Flatten => {
                vec![if parent_needs(0) {
                    Some(g.reshape(parent_val(0).shape())?)
                } else {
                    None
                }]
            }
            Op::ConcatChannels {
                left_channels,
                right_channels,
            } => {
                let (dl, dr) = tensor::concat_channels_backward(g, *left_channels, *right_channels);
                vec![parent_needs(0).then_some(dl), parent_needs(1).then_some(dr)]
            }
            Op::Add => vec![
                parent_needs(0).then(|| g.clone()),
                parent_needs(1).then(|| g.clone()),
            ],
            Op::Scale(c) => vec![parent_needs(0).then(|| g.scale(*c))],
            Op::Sum => {
                let gv = g.data()[0];
                vec![parent_needs(0).then(|| Tensor::filled(parent_val(0).shape(), gv))]
            }
            Op::Mse => {
                let gv = g.data()[0];
                let p = parent_val(0);
                let t = parent_val(1);
                let n = p.len() as f64;
                let dp = parent_needs(0).then(|| {
                    let data = p
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(a, b)| gv * 2.0 * (a - b) / n)
                        .collect();
                    Tensor::from_vec(p.shape(), data).expect("mse grad shape")
                });
                let dt = parent_needs(1).then(|| {
                    let data = p
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(a, b)| -gv * 2.0 * (a - b) / n)
                        .collect();
                    Tensor::from_vec(t.shape(), data).expect("mse grad shape")
                });
                vec![dp, dt]
            }
            Op::Bce => {
                let gv = g.data()[0];
                let p = parent_val(0);
                let t = parent_val(1);
                let n = p.len() as f64;
                let dp = parent_needs(0).then(|| {
                    let data = p
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(&pv, &tv)| {
                            // The clamp has zero slope outside its range.
                            if pv < BCE_EPSILON || pv > 1.0 - BCE_EPSILON {
                                0.0
                            } else {
                                -gv * (tv / pv - (1.0 - tv) / (1.0 - pv)) / n
                            }
                        })
                        .collect();
                    Tensor::from_vec(p.shape(), data).expect("bce grad shape")
                });
                let dt = parent_needs(1).then(|| {
                    let data = p
                        .data()
                        .iter()
                        .map(|&pv| {
                            let pc = pv.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
                            -gv * (pc.ln() - (1.0 - pc).ln()) / n
                        })
                        .collect();
                    Tensor::from_vec(t.shape(), data).expect("bce grad shape")
                });
                vec![dp, dt]
            }
        })
    }
}

/// One row of a gradient-check report.
#[derive(Debug, Clone)]
pub struct GradCheckRow {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Result of checking one graph builder's analytic gradients against central
/// finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// A named set of parameter tensors together with a function that builds a
/// scalar loss graph over them. The builder receives the parameters already
/// inserted as trainable leaves, in declaration order.
pub struct GradCheckCase<'a> {
    pub params: Vec<(String, Tensor)>,
    pub build: Box<dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId> + 'a>,
}

/// Compares analytic gradients against central differences
/// `(L(p + h) - L(p - h)) / 2h` for every parameter of the case.
///
/// Relative error uses the denominator `max(|analytic|, |fd|, 1e-8)`. Up to
/// `max_coords` coordinates per parameter are sampled with the seeded RNG
/// (all coordinates when the parameter is small enough). The builder must be
/// deterministic; this is verified by building twice and comparing losses
/// bitwise.
pub fn gradcheck(
    case: &GradCheckCase,
    seed: u64,
    h: f64,
    tol: f64,
    max_coords: usize,
) -> Result<GradCheckReport> {
    use rand::Rng;
    use rand::SeedableRng;

    if h <= 0.0 {
        return Err(Error::InvalidArgument("gradcheck: h must be > 0".into()));
    }

    let eval = |params: &[(String, Tensor)]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = params.iter().map(|(_, t)| g.param(t.clone())).collect();
        let loss = (case.build)(&mut g, &ids)?;
        g.scalar(loss)
    };

    let l0 = eval(&case.params)?;
    let l1 = eval(&case.params)?;
    if l0.to_bits() != l1.to_bits() {
        return Err(Error::Graph(
            "gradcheck: builder is non-deterministic (losses differ bitwise)".into(),
        ));
    }

    // Analytic gradients from one forward/backward pass.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = case
        .params
        .iter()
        .map(|(_, t)| g.param(t.clone()))
        .collect();
    let loss = (case.build)(&mut g, &ids)?;
    if g.value(loss).len() != 1 {
        return Err(Error::Graph(
            "gradcheck: builder must produce a scalar loss".into(),
        ));
    }
    let grads = g.backward(loss)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(case.params.len());
    let mut work = case.params.clone();
    for (pi, (name, tensor)) in case.params.iter().enumerate() {
        let n = tensor.len();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            (0..max_coords).map(|_| rng.gen_range(0..n)).collect()
        };
        let analytic = &grads[&ids[pi]];
        let mut max_rel: f64 = 0.0;
        for &ci in &coords {
            let orig = work[pi].1.data()[ci];
            work[pi].1.data_mut()[ci] = orig + h;
            let lp = eval(&work)?;
            work[pi].1.data_mut()[ci] = orig - h;
            let lm = eval(&work)?;
            work[pi].1.data_mut()[ci] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let a = analytic.data()[ci];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        rows.push(GradCheckRow {
            name: name.clone(),
            max_rel_error: max_rel,
            passed: max_rel < tol,
        });
    }
    Ok(GradCheckReport {
        rows,
        tolerance: tol,
    })
}
