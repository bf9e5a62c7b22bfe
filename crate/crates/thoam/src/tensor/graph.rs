use super::{Tensor, TensorError};

/// Handle to a node in a [`Graph`]. Ids are assigned in insertion order, so
/// every input id precedes its consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: usize, b: usize },
    Bmm { a: usize, b: usize },
    BmmNt { a: usize, b: usize },
    SoftmaxRows { x: usize },
    Gap { x: usize },
    ConcatCols { a: usize, b: usize, split: usize },
    Relu { x: usize },
    CrossEntropy { logits: usize, labels: Vec<usize> },
    Add { a: usize, b: usize },
    AddRowBias { x: usize, bias: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, factor: f64 },
    SumAll { x: usize },
    Reshape { x: usize },
    EmbedMean { table: usize, token_lists: Vec<Vec<usize>> },
    Conv2d { x: usize, weight: usize, bias: usize, stride: usize, padding: usize },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// Tape of forward operations over tensors.
///
/// Operations append nodes in topological order; [`Graph::backward`] replays
/// the tape in reverse, accumulating gradients in a fixed sequential order so
/// repeated runs are bit-identical. Calling `backward` a second time resets
/// all gradients first and therefore produces identical results rather than
/// double-accumulating.
pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    /// Insert an input tensor. Its `requires_grad` flag decides whether
    /// `backward` computes a gradient for it.
    pub fn leaf(&mut self, tensor: Tensor) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            tensor,
            op: Op::Leaf,
        });
        NodeId(id)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    /// Gradient of the last `backward` target with respect to this node, if
    /// the node participates in differentiation.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].tensor.grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op_name: &'static str, shape: Vec<usize>, data: Vec<f64>, op: Op, requires: bool) -> Result<NodeId, TensorError> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let mut tensor = Tensor::new(shape, data)?;
        tensor.requires_grad = requires;
        let id = self.nodes.len();
        self.nodes.push(Node { tensor, op });
        Ok(NodeId(id))
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].tensor.requires_grad
    }

    fn shape_of(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].tensor.shape()
    }

    fn data_of(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].tensor.data()
    }

    // ---- forward operations -------------------------------------------------

    /// Matrix product `[N×K]·[K×M] -> [N×M]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape_of(a).to_vec(), self.shape_of(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        mm_accum(self.data_of(a), self.data_of(b), n, k, m, &mut out);
        let req = self.requires(a) || self.requires(b);
        self.push("matmul", vec![n, m], out, Op::Matmul { a: a.0, b: b.0 }, req)
    }

    /// Per-sample matrix product `[N×T×K]·[N×K×M] -> [N×T×M]`.
    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape_of(a).to_vec(), self.shape_of(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(TensorError::ShapeMismatch {
                op: "bmm",
                lhs: sa,
                rhs: sb,
            });
        }
        let (n, t, k, m) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; n * t * m];
        for i in 0..n {
            mm_accum(
                &self.data_of(a)[i * t * k..(i + 1) * t * k],
                &self.data_of(b)[i * k * m..(i + 1) * k * m],
                t,
                k,
                m,
                &mut out[i * t * m..(i + 1) * t * m],
            );
        }
        let req = self.requires(a) || self.requires(b);
        self.push("bmm", vec![n, t, m], out, Op::Bmm { a: a.0, b: b.0 }, req)
    }

    /// Per-sample product with the second operand transposed:
    /// `[N×T×K]·[N×U×K]ᵀ -> [N×T×U]`.
    pub fn bmm_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape_of(a).to_vec(), self.shape_of(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(TensorError::ShapeMismatch {
                op: "bmm_nt",
                lhs: sa,
                rhs: sb,
            });
        }
        let (n, t, k, u) = (sa[0], sa[1], sa[2], sb[1]);
        let mut out = vec![0.0; n * t * u];
        for i in 0..n {
            mm_nt_accum(
                &self.data_of(a)[i * t * k..(i + 1) * t * k],
                &self.data_of(b)[i * u * k..(i + 1) * u * k],
                t,
                k,
                u,
                &mut out[i * t * u..(i + 1) * t * u],
            );
        }
        let req = self.requires(a) || self.requires(b);
        self.push("bmm_nt", vec![n, t, u], out, Op::BmmNt { a: a.0, b: b.0 }, req)
    }

    /// Softmax over the trailing axis, computed with row-max subtraction.
    /// Every output row is non-negative and sums to 1.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let shape = self.shape_of(x).to_vec();
        if shape.is_empty() {
            return Err(TensorError::RankMismatch {
                op: "softmax_rows",
                expected: 2,
                shape,
            });
        }
        let m = shape[shape.len() - 1];
        if m == 0 {
            return Err(TensorError::BadDimension {
                op: "softmax_rows",
                detail: "empty rows".into(),
            });
        }
        let mut out = self.data_of(x).to_vec();
        for row in out.chunks_mut(m) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let req = self.requires(x);
        self.push("softmax_rows", shape, out, Op::SoftmaxRows { x: x.0 }, req)
    }

    /// Global average pooling `[N×C×H×W] -> [N×C]`: the mean over the two
    /// spatial axes per channel. The spatial reduction is a fixed pairwise
    /// tree, so a spatially constant map pools to the constant bit-for-bit
    /// whenever `H·W` is a power of two.
    pub fn gap(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let shape = self.shape_of(x).to_vec();
        if shape.len() != 4 {
            return Err(TensorError::RankMismatch {
                op: "gap",
                expected: 4,
                shape,
            });
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let hw = h * w;
        if hw == 0 {
            return Err(TensorError::BadDimension {
                op: "gap",
                detail: "zero spatial extent".into(),
            });
        }
        let data = self.data_of(x);
        let mut out = vec![0.0; n * c];
        for i in 0..n * c {
            out[i] = pairwise_sum(&data[i * hw..(i + 1) * hw]) / hw as f64;
        }
        let req = self.requires(x);
        self.push("gap", vec![n, c], out, Op::Gap { x: x.0 }, req)
    }

    /// Column-wise concatenation `[N×C1],[N×C2] -> [N×(C1+C2)]`.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape_of(a).to_vec(), self.shape_of(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                lhs: sa,
                rhs: sb,
            });
        }
        let (n, c1, c2) = (sa[0], sa[1], sb[1]);
        let mut out = Vec::with_capacity(n * (c1 + c2));
        for i in 0..n {
            out.extend_from_slice(&self.data_of(a)[i * c1..(i + 1) * c1]);
            out.extend_from_slice(&self.data_of(b)[i * c2..(i + 1) * c2]);
        }
        let req = self.requires(a) || self.requires(b);
        self.push(
            "concat_cols",
            vec![n, c1 + c2],
            out,
            Op::ConcatCols {
                a: a.0,
                b: b.0,
                split: c1,
            },
            req,
        )
    }

    /// Element-wise `max(0, x)`. The gradient at exactly 0 is defined as 0.
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let shape = self.shape_of(x).to_vec();
        let out: Vec<f64> = self.data_of(x).iter().map(|v| v.max(0.0)).collect();
        let req = self.requires(x);
        self.push("relu", shape, out, Op::Relu { x: x.0 }, req)
    }

    /// Mean multi-class cross-entropy of `logits [N×C]` against class
    /// indices. Returns a scalar node; the gradient is
    /// `(softmax - one_hot) / N`.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId, TensorError> {
        let shape = self.shape_of(logits).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::RankMismatch {
                op: "cross_entropy",
                expected: 2,
                shape,
            });
        }
        let (n, c) = (shape[0], shape[1]);
        if labels.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: shape,
                rhs: vec![labels.len()],
            });
        }
        for &l in labels {
            if l >= c {
                return Err(TensorError::LabelOutOfRange { label: l, classes: c });
            }
        }
        let data = self.data_of(logits);
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = &data[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
        }
        let req = self.requires(logits);
        self.push(
            "cross_entropy",
            vec![],
            vec![total / n as f64],
            Op::CrossEntropy {
                logits: logits.0,
                labels: labels.to_vec(),
            },
            req,
        )
    }

    /// Element-wise sum of two same-shape tensors.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape_of(a).to_vec(), self.shape_of(b).to_vec());
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: sa,
                rhs: sb,
            });
        }
        let out: Vec<f64> = self
            .data_of(a)
            .iter()
            .zip(self.data_of(b))
            .map(|(x, y)| x + y)
            .collect();
        let req = self.requires(a) || self.requires(b);
        self.push("add", sa, out, Op::Add { a: a.0, b: b.0 }, req)
    }

    /// Add a bias row to every row of a matrix: `[N×M] + [M] -> [N×M]`.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (sx, sb) = (self.shape_of(x).to_vec(), self.shape_of(bias).to_vec());
        if sx.len() != 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_bias",
                lhs: sx,
                rhs: sb,
            });
        }
        let m = sx[1];
        let bdata = self.data_of(bias).to_vec();
        let out: Vec<f64> = self
            .data_of(x)
            .iter()
            .enumerate()
            .map(|(i, v)| v + bdata[i % m])
            .collect();
        let req = self.requires(x) || self.requires(bias);
        self.push(
            "add_row_bias",
            sx,
            out,
            Op::AddRowBias {
                x: x.0,
                bias: bias.0,
            },
            req,
        )
    }

    /// Element-wise product of two same-shape tensors.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape_of(a).to_vec(), self.shape_of(b).to_vec());
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                lhs: sa,
                rhs: sb,
            });
        }
        let out: Vec<f64> = self
            .data_of(a)
            .iter()
            .zip(self.data_of(b))
            .map(|(x, y)| x * y)
            .collect();
        let req = self.requires(a) || self.requires(b);
        self.push("mul", sa, out, Op::Mul { a: a.0, b: b.0 }, req)
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, TensorError> {
        let shape = self.shape_of(x).to_vec();
        let out: Vec<f64> = self.data_of(x).iter().map(|v| v * factor).collect();
        let req = self.requires(x);
        self.push("scale", shape, out, Op::Scale { x: x.0, factor }, req)
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let total: f64 = self.data_of(x).iter().sum();
        let req = self.requires(x);
        self.push("sum_all", vec![], vec![total], Op::SumAll { x: x.0 }, req)
    }

    /// Reinterpret the row-major data under a new shape with equal element
    /// count.
    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId, TensorError> {
        let from = self.shape_of(x).to_vec();
        let numel: usize = shape.iter().product();
        if numel != self.data_of(x).len() {
            return Err(TensorError::BadReshape { from, to: shape });
        }
        let out = self.data_of(x).to_vec();
        let req = self.requires(x);
        self.push("reshape", shape, out, Op::Reshape { x: x.0 }, req)
    }

    /// Mean of embedding rows per sample: `table [V×C]` gathered by each
    /// sample's token ids, averaged. An empty token list yields a zero row
    /// (and contributes no gradient).
    pub fn embed_mean(&mut self, table: NodeId, token_lists: &[Vec<usize>]) -> Result<NodeId, TensorError> {
        let ts = self.shape_of(table).to_vec();
        if ts.len() != 2 {
            return Err(TensorError::RankMismatch {
                op: "embed_mean",
                expected: 2,
                shape: ts,
            });
        }
        let (v, c) = (ts[0], ts[1]);
        for list in token_lists {
            for &t in list {
                if t >= v {
                    return Err(TensorError::TokenOutOfRange { token: t, vocab: v });
                }
            }
        }
        let n = token_lists.len();
        let data = self.data_of(table);
        let mut out = vec![0.0; n * c];
        for (i, list) in token_lists.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let row = &mut out[i * c..(i + 1) * c];
            for &t in list {
                let emb = &data[t * c..(t + 1) * c];
                for (o, e) in row.iter_mut().zip(emb) {
                    *o += e;
                }
            }
            let inv = 1.0 / list.len() as f64;
            for o in row.iter_mut() {
                *o *= inv;
            }
        }
        let req = self.requires(table);
        self.push(
            "embed_mean",
            vec![n, c],
            out,
            Op::EmbedMean {
                table: table.0,
                token_lists: token_lists.to_vec(),
            },
            req,
        )
    }

    /// 2-D convolution `x [N×Ci×H×W]` with `weight [Co×Ci×Kh×Kw]` and
    /// `bias [Co]`, implemented via im2col and the shared matmul kernels.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId, TensorError> {
        let (sx, sw, sb) = (
            self.shape_of(x).to_vec(),
            self.shape_of(weight).to_vec(),
            self.shape_of(bias).to_vec(),
        );
        if sx.len() != 4 {
            return Err(TensorError::RankMismatch {
                op: "conv2d",
                expected: 4,
                shape: sx,
            });
        }
        if sw.len() != 4 || sw[1] != sx[1] || sb.len() != 1 || sb[0] != sw[0] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: sx,
                rhs: sw,
            });
        }
        if stride == 0 {
            return Err(TensorError::BadDimension {
                op: "conv2d",
                detail: "stride must be positive".into(),
            });
        }
        let geom = ConvGeom::new(&sx, &sw, stride, padding)?;
        let col = im2col(self.data_of(x), &geom);
        // out_mat [R×Co] = col [R×K] · weightᵀ, weight stored [Co×K] row-major
        let mut out_mat = vec![0.0; geom.rows * geom.c_out];
        mm_nt_accum(&col, self.data_of(weight), geom.rows, geom.kdim, geom.c_out, &mut out_mat);
        let bias_data = self.data_of(bias);
        let mut out = vec![0.0; geom.n * geom.c_out * geom.h_out * geom.w_out];
        let plane = geom.h_out * geom.w_out;
        for r in 0..geom.rows {
            let (n, pos) = (r / plane, r % plane);
            for co in 0..geom.c_out {
                out[(n * geom.c_out + co) * plane + pos] = out_mat[r * geom.c_out + co] + bias_data[co];
            }
        }
        let req = self.requires(x) || self.requires(weight) || self.requires(bias);
        self.push(
            "conv2d",
            vec![geom.n, geom.c_out, geom.h_out, geom.w_out],
            out,
            Op::Conv2d {
                x: x.0,
                weight: weight.0,
                bias: bias.0,
                stride,
                padding,
            },
            req,
        )
    }

    // ---- backward -----------------------------------------------------------

    /// Reverse-mode differentiation from a scalar loss node.
    ///
    /// Gradients of every `requires_grad` node are reset to zero and then
    /// accumulated in one reverse pass over the tape, visiting each node
    /// exactly once. Calling `backward` again on the same graph repeats the
    /// reset and produces identical gradients (no double accumulation).
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        if self.nodes[loss.0].tensor.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.nodes[loss.0].tensor.shape().to_vec(),
            });
        }
        for i in 0..=loss.0 {
            let node = &mut self.nodes[i];
            node.tensor.grad = if node.tensor.requires_grad {
                Some(vec![0.0; node.tensor.numel()])
            } else {
                None
            };
        }
        if !self.nodes[loss.0].tensor.requires_grad {
            // Loss does not depend on any differentiable leaf; nothing to do.
            return Ok(());
        }
        if let Some(g) = self.nodes[loss.0].tensor.grad.as_mut() {
            g[0] = 1.0;
        }
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tensor.requires_grad {
                continue;
            }
            let grad = match self.nodes[i].tensor.grad.as_ref() {
                Some(g) => g.clone(),
                None => continue,
            };
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &grad);
        }
        Ok(())
    }

    fn accum(&mut self, id: usize, delta: &[f64]) {
        if let Some(g) = self.nodes[id].tensor.grad.as_mut() {
            for (a, d) in g.iter_mut().zip(delta) {
                *a += d;
            }
        }
    }

    fn propagate(&mut self, out: usize, op: &Op, grad: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (n, k) = {
                    let s = self.nodes[a].tensor.shape();
                    (s[0], s[1])
                };
                let m = self.nodes[b].tensor.shape()[1];
                if self.nodes[a].tensor.requires_grad {
                    let mut da = vec![0.0; n * k];
                    mm_nt_accum(grad, self.nodes[b].tensor.data(), n, m, k, &mut da);
                    self.accum(a, &da);
                }
                if self.nodes[b].tensor.requires_grad {
                    let mut db = vec![0.0; k * m];
                    mm_tn_accum(self.nodes[a].tensor.data(), grad, k, n, m, &mut db);
                    self.accum(b, &db);
                }
            }
            Op::Bmm { a, b } => {
                let (n, t, k) = {
                    let s = self.nodes[a].tensor.shape();
                    (s[0], s[1], s[2])
                };
                let m = self.nodes[b].tensor.shape()[2];
                if self.nodes[a].tensor.requires_grad {
                    let mut da = vec![0.0; n * t * k];
                    for i in 0..n {
                        mm_nt_accum(
                            &grad[i * t * m..(i + 1) * t * m],
                            &self.nodes[b].tensor.data()[i * k * m..(i + 1) * k * m],
                            t,
                            m,
                            k,
                            &mut da[i * t * k..(i + 1) * t * k],
                        );
                    }
                    self.accum(a, &da);
                }
                if self.nodes[b].tensor.requires_grad {
                    let mut db = vec![0.0; n * k * m];
                    for i in 0..n {
                        mm_tn_accum(
                            &self.nodes[a].tensor.data()[i * t * k..(i + 1) * t * k],
                            &grad[i * t * m..(i + 1) * t * m],
                            k,
                            t,
                            m,
                            &mut db[i * k * m..(i + 1) * k * m],
                        );
                    }
                    self.accum(b, &db);
                }
            }
            Op::BmmNt { a, b } => {
                let (n, t, k) = {
                    let s = self.nodes[a].tensor.shape();
                    (s[0], s[1], s[2])
                };
                let u = self.nodes[b].tensor.shape()[1];
                if self.nodes[a].tensor.requires_grad {
                    let mut da = vec![0.0; n * t * k];
                    for i in 0..n {
                        mm_accum(
                            &grad[i * t * u..(i + 1) * t * u],
                            &self.nodes[b].tensor.data()[i * u * k..(i + 1) * u * k],
                            t,
                            u,
                            k,
                            &mut da[i * t * k..(i + 1) * t * k],
                        );
                    }
                    self.accum(a, &da);
                }
                if self.nodes[b].tensor.requires_grad {
                    let mut db = vec![0.0; n * u * k];
                    for i in 0..n {
                        mm_tn_accum(
                            &grad[i * t * u..(i + 1) * t * u],
                            &self.nodes[a].tensor.data()[i * t * k..(i + 1) * t * k],
                            u,
                            t,
                            k,
                            &mut db[i * u * k..(i + 1) * u * k],
                        );
                    }
                    self.accum(b, &db);
                }
            }
            Op::SoftmaxRows { x } => {
                if !self.nodes[x].tensor.requires_grad {
                    return;
                }
                let s = self.nodes[out].tensor.data();
                let shape = self.nodes[out].tensor.shape();
                let m = shape[shape.len() - 1];
                let mut dx = vec![0.0; s.len()];
                for r in 0..s.len() / m {
                    let srow = &s[r * m..(r + 1) * m];
                    let grow = &grad[r * m..(r + 1) * m];
                    let dot: f64 = srow.iter().zip(grow).map(|(si, gi)| si * gi).sum();
                    for j in 0..m {
                        dx[r * m + j] = srow[j] * (grow[j] - dot);
                    }
                }
                self.accum(x, &dx);
            }
            Op::Gap { x } => {
                if !self.nodes[x].tensor.requires_grad {
                    return;
                }
                let s = self.nodes[x].tensor.shape();
                let hw = s[2] * s[3];
                let inv = 1.0 / hw as f64;
                let mut dx = vec![0.0; self.nodes[x].tensor.numel()];
                for (i, g) in grad.iter().enumerate() {
                    let gs = g * inv;
                    for v in dx[i * hw..(i + 1) * hw].iter_mut() {
                        *v = gs;
                    }
                }
                self.accum(x, &dx);
            }
            Op::ConcatCols { a, b, split } => {
                let n = self.nodes[out].tensor.shape()[0];
                let total = self.nodes[out].tensor.shape()[1];
                let c2 = total - split;
                if self.nodes[a].tensor.requires_grad {
                    let mut da = vec![0.0; n * split];
                    for i in 0..n {
                        da[i * split..(i + 1) * split]
                            .copy_from_slice(&grad[i * total..i * total + split]);
                    }
                    self.accum(a, &da);
                }
                if self.nodes[b].tensor.requires_grad {
                    let mut db = vec![0.0; n * c2];
                    for i in 0..n {
                        db[i * c2..(i + 1) * c2]
                            .copy_from_slice(&grad[i * total + split..(i + 1) * total]);
                    }
                    self.accum(b, &db);
                }
            }
            Op::Relu { x } => {
                if !self.nodes[x].tensor.requires_grad {
                    return;
                }
                let dx: Vec<f64> = self.nodes[x]
                    .tensor
                    .data()
                    .iter()
                    .zip(grad)
                    .map(|(v, g)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accum(x, &dx);
            }
            Op::CrossEntropy { logits, ref labels } => {
                if !self.nodes[logits].tensor.requires_grad {
                    return;
                }
                let shape = self.nodes[logits].tensor.shape();
                let (n, c) = (shape[0], shape[1]);
                let data = self.nodes[logits].tensor.data();
                let scale = grad[0] / n as f64;
                let mut dl = vec![0.0; n * c];
                for (i, &label) in labels.iter().enumerate() {
                    let row = &data[i * c..(i + 1) * c];
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    for j in 0..c {
                        let p = exps[j] / sum;
                        let target = if j == label { 1.0 } else { 0.0 };
                        dl[i * c + j] = scale * (p - target);
                    }
                }
                self.accum(logits, &dl);
            }
            Op::Add { a, b } => {
                if self.nodes[a].tensor.requires_grad {
                    self.accum(a, grad);
                }
                if self.nodes[b].tensor.requires_grad {
                    self.accum(b, grad);
                }
            }
            Op::AddRowBias { x, bias } => {
                if self.nodes[x].tensor.requires_grad {
                    self.accum(x, grad);
                }
                if self.nodes[bias].tensor.requires_grad {
                    let m = self.nodes[bias].tensor.numel();
                    let mut db = vec![0.0; m];
                    for (i, g) in grad.iter().enumerate() {
                        db[i % m] += g;
                    }
                    self.accum(bias, &db);
                }
            }
            Op::Mul { a, b } => {
                if self.nodes[a].tensor.requires_grad {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(self.nodes[b].tensor.data())
                        .map(|(g, v)| g * v)
                        .collect();
                    self.accum(a, &da);
                }
                if self.nodes[b].tensor.requires_grad {
                    let db: Vec<f64> = grad
                        .iter()
                        .zip(self.nodes[a].tensor.data())
                        .map(|(g, v)| g * v)
                        .collect();
                    self.accum(b, &db);
                }
            }
            Op::Scale { x, factor } => {
                if !self.nodes[x].tensor.requires_grad {
                    return;
                }
                let dx: Vec<f64> = grad.iter().map(|g| g * factor).collect();
                self.accum(x, &dx);
            }
            Op::SumAll { x } => {
                if !self.nodes[x].tensor.requires_grad {
                    return;
                }
                let dx = vec![grad[0]; self.nodes[x].tensor.numel()];
                self.accum(x, &dx);
            }
            Op::Reshape { x } => {
                if self.nodes[x].tensor.requires_grad {
                    self.accum(x, grad);
                }
            }
            Op::EmbedMean { table, ref token_lists } => {
                if !self.nodes[table].tensor.requires_grad {
                    return;
                }
                let c = self.nodes[table].tensor.shape()[1];
                let mut dt = vec![0.0; self.nodes[table].tensor.numel()];
                for (i, list) in token_lists.iter().enumerate() {
                    if list.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / list.len() as f64;
                    let grow = &grad[i * c..(i + 1) * c];
                    for &t in list {
                        let drow = &mut dt[t * c..(t + 1) * c];
                        for (d, g) in drow.iter_mut().zip(grow) {
                            *d += g * inv;
                        }
                    }
                }
                self.accum(table, &dt);
            }
            Op::Conv2d {
                x,
                weight,
                bias,
                stride,
                padding,
            } => {
                let geom = ConvGeom::new(
                    self.nodes[x].tensor.shape(),
                    self.nodes[weight].tensor.shape(),
                    stride,
                    padding,
                )
                .expect("geometry validated in forward");
                // Gather the output gradient into [R×Co] layout.
                let plane = geom.h_out * geom.w_out;
                let mut dout_mat = vec![0.0; geom.rows * geom.c_out];
                for r in 0..geom.rows {
                    let (n, pos) = (r / plane, r % plane);
                    for co in 0..geom.c_out {
                        dout_mat[r * geom.c_out + co] = grad[(n * geom.c_out + co) * plane + pos];
                    }
                }
                if self.nodes[bias].tensor.requires_grad {
                    let mut db = vec![0.0; geom.c_out];
                    for r in 0..geom.rows {
                        for co in 0..geom.c_out {
                            db[co] += dout_mat[r * geom.c_out + co];
                        }
                    }
                    self.accum(bias, &db);
                }
                if self.nodes[weight].tensor.requires_grad {
                    let col = im2col(self.nodes[x].tensor.data(), &geom);
                    let mut dw = vec![0.0; geom.c_out * geom.kdim];
                    mm_tn_accum(&dout_mat, &col, geom.c_out, geom.rows, geom.kdim, &mut dw);
                    self.accum(weight, &dw);
                }
                if self.nodes[x].tensor.requires_grad {
                    let mut dcol = vec![0.0; geom.rows * geom.kdim];
                    mm_accum(
                        &dout_mat,
                        self.nodes[weight].tensor.data(),
                        geom.rows,
                        geom.c_out,
                        geom.kdim,
                        &mut dcol,
                    );
                    let dx = col2im(&dcol, &geom);
                    self.accum(x, &dx);
                }
            }
        }
    }
}

// ---- kernels ----------------------------------------------------------------

/// `out[n×m] += a[n×k] · b[k×m]`
fn mm_accum(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[n×m] += a[n×k] · b[m×k]ᵀ`
fn mm_nt_accum(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// `out[n×m] += a[k×n]ᵀ · b[k×m]`
fn mm_tn_accum(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for p in 0..k {
        let arow = &a[p * n..(p + 1) * n];
        let brow = &b[p * m..(p + 1) * m];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Fixed-structure pairwise summation; exact for 2^k copies of one value.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

struct ConvGeom {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
    /// rows of the im2col matrix: N·h_out·w_out
    rows: usize,
    /// columns of the im2col matrix: c_in·kh·kw
    kdim: usize,
}

impl ConvGeom {
    fn new(x_shape: &[usize], w_shape: &[usize], stride: usize, padding: usize) -> Result<Self, TensorError> {
        let (n, c_in, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
        let (c_out, kh, kw) = (w_shape[0], w_shape[2], w_shape[3]);
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(TensorError::BadDimension {
                op: "conv2d",
                detail: format!("kernel {}x{} exceeds padded input {}x{}", kh, kw, h + 2 * padding, w + 2 * padding),
            });
        }
        let h_out = (h + 2 * padding - kh) / stride + 1;
        let w_out = (w + 2 * padding - kw) / stride + 1;
        Ok(ConvGeom {
            n,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            padding,
            h_out,
            w_out,
            rows: n * h_out * w_out,
            kdim: c_in * kh * kw,
        })
    }
}

/// Lay out every receptive field as one row: `[N·H'·W' × Ci·Kh·Kw]`.
/// Out-of-bounds (padding) positions stay zero.
fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut col = vec![0.0; g.rows * g.kdim];
    let plane = g.h * g.w;
    for n in 0..g.n {
        for oh in 0..g.h_out {
            for ow in 0..g.w_out {
                let r = (n * g.h_out + oh) * g.w_out + ow;
                let crow = &mut col[r * g.kdim..(r + 1) * g.kdim];
                for ci in 0..g.c_in {
                    let base = (n * g.c_in + ci) * plane;
                    for ki in 0..g.kh {
                        let ih = (oh * g.stride + ki) as isize - g.padding as isize;
                        if ih < 0 || ih >= g.h as isize {
                            continue;
                        }
                        let xrow = base + ih as usize * g.w;
                        for kj in 0..g.kw {
                            let iw = (ow * g.stride + kj) as isize - g.padding as isize;
                            if iw < 0 || iw >= g.w as isize {
                                continue;
                            }
                            crow[(ci * g.kh + ki) * g.kw + kj] = x[xrow + iw as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add the im2col-layout gradient back onto the input tensor.
fn col2im(dcol: &[f64], g: &ConvGeom) -> Vec<f64> {
    let plane = g.h * g.w;
    let mut dx = vec![0.0; g.n * g.c_in * plane];
    for n in 0..g.n {
        for oh in 0..g.h_out {
            for ow in 0..g.w_out {
                let r = (n * g.h_out + oh) * g.w_out + ow;
                let crow = &dcol[r * g.kdim..(r + 1) * g.kdim];
                for ci in 0..g.c_in {
                    let base = (n * g.c_in + ci) * plane;
                    for ki in 0..g.kh {
                        let ih = (oh * g.stride + ki) as isize - g.padding as isize;
                        if ih < 0 || ih >= g.h as isize {
                            continue;
                        }
                        let xrow = base + ih as usize * g.w;
                        for kj in 0..g.kw {
                            let iw = (ow * g.stride + kj) as isize - g.padding as isize;
                            if iw < 0 || iw >= g.w as isize {
                                continue;
                            }
                            dx[xrow + iw as usize] += crow[(ci * g.kh + ki) * g.kw + kj];
                        }
                    }
                }
            }
        }
    }
    dx
}
