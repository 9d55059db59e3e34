//! Tape-based reverse-mode differentiation over the operations the models
//! need.
//!
//! A [`Graph`] borrows parameter values for the length of one forward
//! pass. Every method appends a node holding its output; [`Graph::backward`]
//! walks the nodes in reverse and adds parameter gradients into a
//! [`Gradients`] buffer, skipping frozen parameters.

use std::hash::{DefaultHasher, Hash, Hasher};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayView3, Axis, Ix1, Ix2, Ix3};
use rand::Rng;

use super::ops::{self, Mode};
use super::params::{Gradients, ParamId, ParamValues, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Deliberate backward-pass defects used to test the gradient checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negate weight gradients of fully-connected layers.
    FlipWeightGrad,
}

#[derive(Debug)]
enum Op {
    Input,
    Conv1d {
        input: NodeId,
        filters: ParamId,
        bias: ParamId,
    },
    OneHotConv1d {
        indices: Vec<Option<u8>>,
        filters: ParamId,
        bias: ParamId,
    },
    Embed {
        ids: Vec<usize>,
        table: ParamId,
    },
    EmbedMean {
        ids: Vec<usize>,
        table: ParamId,
    },
    SparseDense {
        features: Vec<(usize, f64)>,
        weight: ParamId,
        bias: ParamId,
    },
    Dense {
        input: NodeId,
        weight: ParamId,
        bias: ParamId,
    },
    MaxPool {
        input: NodeId,
        argmax: Array2<usize>,
    },
    GlobalMaxPool {
        input: NodeId,
        argmax: Vec<usize>,
    },
    Flatten {
        input: NodeId,
    },
    Relu {
        input: NodeId,
    },
    Dropout {
        input: NodeId,
        mask: Vec<f64>,
    },
    Concat {
        inputs: Vec<NodeId>,
    },
    SoftmaxXent {
        logits: NodeId,
        gold: usize,
        probs: Array1<f64>,
    },
    SquaredHinge {
        scores: NodeId,
        grad: Array1<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamValues,
    nodes: Vec<Node>,
    fault: Option<Fault>,
    signature: DefaultHasher,
}

fn view1(t: &Tensor) -> ArrayView1<'_, f64> {
    t.view().into_dimensionality::<Ix1>().expect("rank-1 tensor")
}

fn view2(t: &Tensor) -> ArrayView2<'_, f64> {
    t.view().into_dimensionality::<Ix2>().expect("rank-2 tensor")
}

fn view3(t: &Tensor) -> ArrayView3<'_, f64> {
    t.view().into_dimensionality::<Ix3>().expect("rank-3 tensor")
}

fn rank_check(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.ndim() != rank {
        return Err(Error::Shape(format!(
            "{what} expects rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamValues) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            fault: None,
            signature: DefaultHasher::new(),
        }
    }

    pub fn with_fault(mut self, fault: Option<Fault>) -> Self {
        self.fault = fault;
        self
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hash of every piecewise-linear decision taken so far (ReLU signs and
    /// pooling argmaxes). Two forward passes with equal signatures lie on
    /// the same linear piece.
    pub fn signature(&self) -> u64 {
        self.signature.finish()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn param(&self, id: ParamId) -> &'p Tensor {
        self.params.get(id)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    /// `L × D` node convolved with `W × D × M` filters.
    pub fn conv1d(&mut self, input: NodeId, filters: ParamId, bias: ParamId) -> Result<NodeId> {
        let x = self.value(input);
        rank_check(x, 2, "conv1d input")?;
        rank_check(self.param(filters), 3, "conv1d filters")?;
        let out = ops::conv1d(view2(x), view3(self.param(filters)), view1(self.param(bias)))?;
        Ok(self.push(out.into_dyn(), Op::Conv1d { input, filters, bias }))
    }

    /// Convolution over a one-hot symbol sequence.
    pub fn onehot_conv1d(
        &mut self,
        indices: &[Option<u8>],
        filters: ParamId,
        bias: ParamId,
    ) -> Result<NodeId> {
        rank_check(self.param(filters), 3, "conv1d filters")?;
        let out = ops::onehot_conv1d(indices, view3(self.param(filters)), view1(self.param(bias)))?;
        Ok(self.push(
            out.into_dyn(),
            Op::OneHotConv1d {
                indices: indices.to_vec(),
                filters,
                bias,
            },
        ))
    }

    /// Rows of a `V × D` table, giving `L × D`.
    pub fn embed(&mut self, ids: &[usize], table: ParamId) -> Result<NodeId> {
        let t = self.param(table);
        rank_check(t, 2, "embedding table")?;
        let t = view2(t);
        if let Some(&bad) = ids.iter().find(|&&i| i >= t.nrows()) {
            return Err(Error::Shape(format!("token id {bad} outside table of {}", t.nrows())));
        }
        let out = t.select(Axis(0), ids);
        Ok(self.push(
            out.into_dyn(),
            Op::Embed {
                ids: ids.to_vec(),
                table,
            },
        ))
    }

    /// Mean of the table rows at `ids`; zero vector for an empty list.
    pub fn embed_mean(&mut self, ids: &[usize], table: ParamId) -> Result<NodeId> {
        let t = self.param(table);
        rank_check(t, 2, "embedding table")?;
        let t = view2(t);
        let mut out = Array1::zeros(t.ncols());
        for &i in ids {
            if i >= t.nrows() {
                return Err(Error::Shape(format!("token id {i} outside table of {}", t.nrows())));
            }
            out += &t.row(i);
        }
        if !ids.is_empty() {
            out /= ids.len() as f64;
        }
        Ok(self.push(
            out.into_dyn(),
            Op::EmbedMean {
                ids: ids.to_vec(),
                table,
            },
        ))
    }

    /// Affine map of a sparse `(index, value)` vector by an `F × K` weight.
    pub fn sparse_dense(
        &mut self,
        features: &[(usize, f64)],
        weight: ParamId,
        bias: ParamId,
    ) -> Result<NodeId> {
        let w = self.param(weight);
        rank_check(w, 2, "sparse dense weight")?;
        let w = view2(w);
        let b = view1(self.param(bias));
        if b.len() != w.ncols() {
            return Err(Error::Shape(format!("bias {} for {} outputs", b.len(), w.ncols())));
        }
        let mut out = b.to_owned();
        for &(f, v) in features {
            if f >= w.nrows() {
                return Err(Error::Shape(format!("feature {f} outside {} rows", w.nrows())));
            }
            out.scaled_add(v, &w.row(f));
        }
        Ok(self.push(
            out.into_dyn(),
            Op::SparseDense {
                features: features.to_vec(),
                weight,
                bias,
            },
        ))
    }

    pub fn dense(&mut self, input: NodeId, weight: ParamId, bias: ParamId) -> Result<NodeId> {
        let x = self.value(input);
        rank_check(x, 1, "dense input")?;
        rank_check(self.param(weight), 2, "dense weight")?;
        let out = ops::dense(view1(x), view2(self.param(weight)), view1(self.param(bias)))?;
        Ok(self.push(out.into_dyn(), Op::Dense { input, weight, bias }))
    }

    pub fn maxpool1d(&mut self, input: NodeId, width: usize, stride: usize) -> Result<NodeId> {
        let x = self.value(input);
        rank_check(x, 2, "max pool input")?;
        let (out, argmax) = ops::maxpool1d(view2(x), width, stride)?;
        argmax.as_slice().hash(&mut self.signature);
        Ok(self.push(out.into_dyn(), Op::MaxPool { input, argmax }))
    }

    pub fn global_maxpool(&mut self, input: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        rank_check(x, 2, "global max pool input")?;
        let (out, argmax) = ops::global_maxpool(view2(x))?;
        argmax.hash(&mut self.signature);
        Ok(self.push(out.into_dyn(), Op::GlobalMaxPool { input, argmax }))
    }

    pub fn flatten(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let flat = Array1::from_iter(x.iter().copied());
        self.push(flat.into_dyn(), Op::Flatten { input })
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let x = &self.nodes[input.0].value;
        for v in x.iter() {
            (*v > 0.0).hash(&mut self.signature);
        }
        let out = ops::relu(x);
        self.push(out, Op::Relu { input })
    }

    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: NodeId,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeId> {
        let x = self.value(input);
        let mask = ops::dropout_mask(x.len(), rate, mode, rng)?;
        let mut out = x.clone();
        for (o, m) in out.iter_mut().zip(&mask) {
            *o *= m;
        }
        Ok(self.push(out, Op::Dropout { input, mask }))
    }

    /// Concatenation of rank-1 nodes.
    pub fn concat(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        let mut out = Vec::new();
        for &i in inputs {
            let x = self.value(i);
            rank_check(x, 1, "concat input")?;
            out.extend(x.iter().copied());
        }
        Ok(self.push(
            Array1::from(out).into_dyn(),
            Op::Concat {
                inputs: inputs.to_vec(),
            },
        ))
    }

    /// Scalar softmax cross-entropy node.
    pub fn softmax_xent(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let x = self.value(logits);
        rank_check(x, 1, "softmax logits")?;
        let (loss, probs) = ops::softmax_xent(view1(x), gold)?;
        Ok(self.push(
            ndarray::arr0(loss).into_dyn(),
            Op::SoftmaxXent { logits, gold, probs },
        ))
    }

    /// Scalar one-vs-rest squared hinge node.
    pub fn squared_hinge(&mut self, scores: NodeId, gold: usize) -> Result<NodeId> {
        let x = self.value(scores);
        rank_check(x, 1, "hinge scores")?;
        let (loss, grad) = ops::squared_hinge(view1(x), gold)?;
        Ok(self.push(ndarray::arr0(loss).into_dyn(), Op::SquaredHinge { scores, grad }))
    }

    /// Propagates `scale · ∂loss` back through the tape and adds parameter
    /// gradients into `grads`.
    pub fn backward(&self, loss: NodeId, scale: f64, grads: &mut Gradients) -> Result<()> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::Backward("no forward pass recorded for this node".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Backward(format!(
                "loss node has shape {:?}, expected a scalar",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut upstream: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        upstream[loss.0] = Some(Tensor::from_elem(self.nodes[loss.0].value.raw_dim(), scale));
        for idx in (0..=loss.0).rev() {
            let Some(dy) = upstream[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Conv1d { input, filters, bias } => {
                    let x = view2(self.value(*input));
                    let f = view3(self.param(*filters));
                    let dy = view2(&dy);
                    let width = f.dim().0;
                    let out_len = dy.nrows();
                    if let Some(gf) = grads.slot(*filters) {
                        let mut gf = gf.view_mut().into_dimensionality::<Ix3>().expect("rank 3");
                        for w in 0..width {
                            let xw = x.slice(s![w..w + out_len, ..]);
                            ndarray::linalg::general_mat_mul(
                                1.0,
                                &xw.t(),
                                &dy,
                                1.0,
                                &mut gf.index_axis_mut(Axis(0), w),
                            );
                        }
                    }
                    add_bias_grad(grads, *bias, dy.sum_axis(Axis(0)).view());
                    let mut dx = Array2::<f64>::zeros(x.raw_dim());
                    for w in 0..width {
                        let mut dxw = dx.slice_mut(s![w..w + out_len, ..]);
                        ndarray::linalg::general_mat_mul(
                            1.0,
                            &dy,
                            &f.index_axis(Axis(0), w).t(),
                            1.0,
                            &mut dxw,
                        );
                    }
                    accumulate(&mut upstream, *input, dx.into_dyn());
                }
                Op::OneHotConv1d { indices, filters, bias } => {
                    let dy = view2(&dy);
                    if let Some(gf) = grads.slot(*filters) {
                        let mut gf = gf.view_mut().into_dimensionality::<Ix3>().expect("rank 3");
                        let width = gf.dim().0;
                        for (t, row) in dy.outer_iter().enumerate() {
                            for w in 0..width {
                                if let Some(c) = indices[t + w] {
                                    let mut g = gf.slice_mut(s![w, c as usize, ..]);
                                    g += &row;
                                }
                            }
                        }
                    }
                    add_bias_grad(grads, *bias, dy.sum_axis(Axis(0)).view());
                }
                Op::Embed { ids, table } => {
                    if let Some(gt) = grads.slot(*table) {
                        let mut gt = gt.view_mut().into_dimensionality::<Ix2>().expect("rank 2");
                        for (row, &i) in view2(&dy).outer_iter().zip(ids) {
                            let mut g = gt.row_mut(i);
                            g += &row;
                        }
                    }
                }
                Op::EmbedMean { ids, table } => {
                    if ids.is_empty() {
                        continue;
                    }
                    if let Some(gt) = grads.slot(*table) {
                        let mut gt = gt.view_mut().into_dimensionality::<Ix2>().expect("rank 2");
                        let share = 1.0 / ids.len() as f64;
                        for &i in ids {
                            gt.row_mut(i).scaled_add(share, &view1(&dy));
                        }
                    }
                }
                Op::SparseDense { features, weight, bias } => {
                    let dy = view1(&dy);
                    let sign = self.weight_sign();
                    if let Some(gw) = grads.slot(*weight) {
                        let mut gw = gw.view_mut().into_dimensionality::<Ix2>().expect("rank 2");
                        for &(f, v) in features {
                            gw.row_mut(f).scaled_add(sign * v, &dy);
                        }
                    }
                    add_bias_grad(grads, *bias, dy);
                }
                Op::Dense { input, weight, bias } => {
                    let x = view1(self.value(*input));
                    let w = view2(self.param(*weight));
                    let dy = view1(&dy);
                    let sign = self.weight_sign();
                    if let Some(gw) = grads.slot(*weight) {
                        let mut gw = gw.view_mut().into_dimensionality::<Ix2>().expect("rank 2");
                        let outer = x.insert_axis(Axis(1));
                        let dyr = dy.insert_axis(Axis(0));
                        ndarray::linalg::general_mat_mul(sign, &outer, &dyr, 1.0, &mut gw);
                    }
                    add_bias_grad(grads, *bias, dy);
                    accumulate(&mut upstream, *input, w.dot(&dy).into_dyn());
                }
                Op::MaxPool { input, argmax } => {
                    let mut dx = Tensor::zeros(self.value(*input).raw_dim());
                    let dy = view2(&dy);
                    for ((o, m), &src) in argmax.indexed_iter() {
                        dx[[src, m]] += dy[[o, m]];
                    }
                    accumulate(&mut upstream, *input, dx);
                }
                Op::GlobalMaxPool { input, argmax } => {
                    let mut dx = Tensor::zeros(self.value(*input).raw_dim());
                    for (m, (&src, &g)) in argmax.iter().zip(dy.iter()).enumerate() {
                        dx[[src, m]] += g;
                    }
                    accumulate(&mut upstream, *input, dx);
                }
                Op::Flatten { input } => {
                    let shape = self.value(*input).raw_dim();
                    let dx = Tensor::from_shape_vec(shape, dy.iter().copied().collect())
                        .expect("same element count");
                    accumulate(&mut upstream, *input, dx);
                }
                Op::Relu { input } => {
                    let mut dx = dy;
                    ndarray::Zip::from(&mut dx)
                        .and(&node.value)
                        .for_each(|d, &y| {
                            if y <= 0.0 {
                                *d = 0.0;
                            }
                        });
                    accumulate(&mut upstream, *input, dx);
                }
                Op::Dropout { input, mask } => {
                    let mut dx = dy;
                    for (d, m) in dx.iter_mut().zip(mask) {
                        *d *= m;
                    }
                    accumulate(&mut upstream, *input, dx);
                }
                Op::Concat { inputs } => {
                    let mut offset = 0;
                    let dy = view1(&dy);
                    for &i in inputs {
                        let n = self.value(i).len();
                        let part = dy.slice(s![offset..offset + n]).to_owned();
                        accumulate(&mut upstream, i, part.into_dyn());
                        offset += n;
                    }
                }
                Op::SoftmaxXent { logits, gold, probs } => {
                    let g = dy.iter().next().copied().unwrap_or(0.0);
                    let mut dx = probs.clone();
                    dx[*gold] -= 1.0;
                    dx *= g;
                    accumulate(&mut upstream, *logits, dx.into_dyn());
                }
                Op::SquaredHinge { scores, grad } => {
                    let g = dy.iter().next().copied().unwrap_or(0.0);
                    accumulate(&mut upstream, *scores, (grad * g).into_dyn());
                }
            }
        }
        Ok(())
    }

    fn weight_sign(&self) -> f64 {
        match self.fault {
            Some(Fault::FlipWeightGrad) => -1.0,
            None => 1.0,
        }
    }
}

fn add_bias_grad(grads: &mut Gradients, bias: ParamId, dy: ArrayView1<f64>) {
    if let Some(gb) = grads.slot(bias) {
        let mut gb = gb.view_mut().into_dimensionality::<Ix1>().expect("rank 1");
        gb += &dy;
    }
}

fn accumulate(upstream: &mut [Option<Tensor>], node: NodeId, grad: Tensor) {
    match &mut upstream[node.0] {
        Some(existing) => *existing += &grad,
        slot @ None => *slot = Some(grad),
    }
}
