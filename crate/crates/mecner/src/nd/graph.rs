//! Reverse-mode autodiff over a per-sentence computation graph.
//!
//! Every builder method runs the forward kernel eagerly and records an
//! op node; nodes are therefore in topological order by construction
//! and [`Graph::backward`] walks them in exact reverse order. Leaf
//! nodes bound to a [`ParamId`] accumulate their gradient into the
//! parameter store at the end of the backward pass, so the caller is
//! responsible for zeroing parameter gradients between steps.

#![allow(clippy::needless_range_loop)]

use rand::Rng;

use super::tensor::{ParamId, ParamStore};

pub type NodeId = usize;

/// Dropout switch: sampling in training, identity in evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    /// Values supplied directly; `param` set when they mirror a stored
    /// parameter whose gradient should receive this node's gradient.
    Leaf { param: Option<ParamId> },
    /// Row gather from a stored parameter matrix. Repeated ids are
    /// allowed; their gradients accumulate into the same row.
    Rows { param: ParamId, ids: Vec<usize> },
    Matmul,
    Add,
    Sub,
    Mul,
    /// `[m, n] + [n]`, bias broadcast over rows.
    AddBias,
    Sigmoid,
    Tanh,
    Scale { c: f64 },
    /// Last-dimension concatenation of any number of inputs.
    Concat,
    /// Extract row `i` of a rank-2 tensor as `[1, n]`.
    Row { i: usize },
    /// Stack `[1, n]` rows into `[k, n]`.
    StackRows,
    Transpose,
    Reshape,
    Conv1dSame { k: usize, d_in: usize, d_out: usize },
    Dropout { mask: Vec<f64> },
    /// log(sum(exp(x))) over all elements, max-shifted.
    LogSumExp,
    /// Flat-index gather; repeated indices accumulate on backward.
    Select { indices: Vec<usize> },
    Sum,
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
}

/// Op tape for one forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].values
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let n = &self.nodes[id];
        assert_eq!(n.values.len(), 1, "node {id} is not scalar: {:?}", n.shape);
        n.values[0]
    }

    /// Node gradient after [`Graph::backward`]. Empty before that.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].grad
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, shape: Vec<usize>, values: Vec<f64>) -> NodeId {
        debug_assert_eq!(numel(&shape), values.len());
        debug_assert!(
            values.iter().all(|v| v.is_finite()),
            "non-finite forward value from {op:?}"
        );
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            inputs,
            shape,
            values,
            grad: Vec::new(),
        });
        id
    }

    // ----- leaves ---------------------------------------------------

    pub fn constant(&mut self, shape: &[usize], values: Vec<f64>) -> NodeId {
        assert_eq!(numel(shape), values.len(), "constant shape/value mismatch");
        self.push(Op::Leaf { param: None }, vec![], shape.to_vec(), values)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> NodeId {
        self.constant(shape, vec![0.0; numel(shape)])
    }

    /// Leaf mirroring a stored parameter; copies its current values.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let t = store.get(id);
        self.push(
            Op::Leaf { param: Some(id) },
            vec![],
            t.shape().to_vec(),
            t.values().to_vec(),
        )
    }

    /// Gathers `ids` rows of a stored `[V, d]` parameter into `[len(ids), d]`.
    pub fn param_rows(&mut self, store: &ParamStore, id: ParamId, ids: &[usize]) -> NodeId {
        let t = store.get(id);
        assert_eq!(t.shape().len(), 2, "param_rows needs a rank-2 parameter");
        let (v, d) = (t.shape()[0], t.shape()[1]);
        let mut values = Vec::with_capacity(ids.len() * d);
        for &r in ids {
            assert!(r < v, "row {r} out of range for {} rows", v);
            values.extend_from_slice(t.row(r));
        }
        self.push(
            Op::Rows {
                param: id,
                ids: ids.to_vec(),
            },
            vec![],
            vec![ids.len(), d],
            values,
        )
    }

    // ----- arithmetic -----------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa.len(), 2, "matmul lhs must be rank-2, got {sa:?}");
        assert_eq!(sb.len(), 2, "matmul rhs must be rank-2, got {sb:?}");
        assert_eq!(
            sa[1], sb[0],
            "matmul inner dims differ: {sa:?} x {sb:?}"
        );
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let values = matmul_kernel(self.value(a), self.value(b), m, k, n);
        self.push(Op::Matmul, vec![a, b], vec![m, n], values)
    }

    fn ewise_binary(&mut self, op: Op, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> NodeId {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "elementwise shapes differ: {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
        let values = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(op, vec![a, b], shape, values)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ewise_binary(Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ewise_binary(Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ewise_binary(Op::Mul, a, b, |x, y| x * y)
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(bias).to_vec());
        assert_eq!(sa.len(), 2, "add_bias lhs must be rank-2, got {sa:?}");
        assert_eq!(sb, vec![sa[1]], "bias shape {sb:?} does not match columns of {sa:?}");
        let n = sa[1];
        let bv = self.value(bias).to_vec();
        let values = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bv[i % n])
            .collect();
        self.push(Op::AddBias, vec![a, bias], sa, values)
    }

    fn ewise_unary(&mut self, op: Op, a: NodeId, f: impl Fn(f64) -> f64) -> NodeId {
        let values = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(op, vec![a], shape, values)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.ewise_unary(Op::Sigmoid, a, |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.ewise_unary(Op::Tanh, a, f64::tanh)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.ewise_unary(Op::Scale { c }, a, |x| c * x)
    }

    // ----- structure ------------------------------------------------

    /// Concatenates along the last dimension. All leading dimensions
    /// must agree; an input with last extent 0 is skipped (identity
    /// contribution).
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let rank = self.shape(parts[0]).len();
        let lead = self.shape(parts[0])[..rank - 1].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            assert_eq!(s.len(), rank, "concat rank mismatch: {s:?}");
            assert_eq!(&s[..rank - 1], &lead[..], "concat leading dims differ: {s:?}");
            widths.push(s[rank - 1]);
        }
        let total: usize = widths.iter().sum();
        let rows = numel(&lead);
        let mut values = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                values.extend_from_slice(&self.value(p)[r * w..r * w + w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        self.push(Op::Concat, parts.to_vec(), shape, values)
    }

    pub fn row(&mut self, a: NodeId, i: usize) -> NodeId {
        let s = self.shape(a);
        assert_eq!(s.len(), 2, "row() needs a rank-2 node, got {s:?}");
        assert!(i < s[0], "row {i} out of range for {} rows", s[0]);
        let n = s[1];
        let values = self.value(a)[i * n..(i + 1) * n].to_vec();
        self.push(Op::Row { i }, vec![a], vec![1, n], values)
    }

    /// Stacks `[1, n]` rows into `[k, n]`.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> NodeId {
        assert!(!rows.is_empty(), "stack_rows of zero rows");
        let n = {
            let s = self.shape(rows[0]);
            assert_eq!(s.len(), 2, "stack_rows wants [1, n] inputs, got {s:?}");
            assert_eq!(s[0], 1, "stack_rows wants [1, n] inputs, got {s:?}");
            s[1]
        };
        let mut values = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            assert_eq!(self.shape(r), &[1, n], "stack_rows width mismatch");
            values.extend_from_slice(self.value(r));
        }
        self.push(Op::StackRows, rows.to_vec(), vec![rows.len(), n], values)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        assert_eq!(s.len(), 2, "transpose needs a rank-2 node, got {s:?}");
        let (m, n) = (s[0], s[1]);
        let av = self.value(a);
        let mut values = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                values[j * m + i] = av[i * n + j];
            }
        }
        self.push(Op::Transpose, vec![a], vec![n, m], values)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        assert_eq!(
            numel(shape),
            self.value(a).len(),
            "reshape to {shape:?} changes element count"
        );
        let values = self.value(a).to_vec();
        self.push(Op::Reshape, vec![a], shape.to_vec(), values)
    }

    // ----- model ops ------------------------------------------------

    /// Same-padded 1-D convolution over the sequence axis.
    ///
    /// `x` is `[L, d_in]`, `kernels` is `[k, d_in, d_out]` with odd `k`,
    /// `bias` is `[d_out]`. Output is `[L, d_out]`; position `t` sees
    /// inputs `t-(k-1)/2 ..= t+(k-1)/2` with zeros outside.
    pub fn conv1d_same(&mut self, x: NodeId, kernels: NodeId, bias: NodeId) -> NodeId {
        let sx = self.shape(x).to_vec();
        let sk = self.shape(kernels).to_vec();
        assert_eq!(sx.len(), 2, "conv input must be rank-2, got {sx:?}");
        assert_eq!(sk.len(), 3, "conv kernels must be rank-3, got {sk:?}");
        let (l, d_in) = (sx[0], sx[1]);
        let (k, kd_in, d_out) = (sk[0], sk[1], sk[2]);
        assert!(l >= 1, "conv input length must be >= 1");
        assert!(k % 2 == 1, "conv kernel width must be odd, got {k}");
        assert_eq!(kd_in, d_in, "kernel d_in {kd_in} != input width {d_in}");
        assert_eq!(self.shape(bias), &[d_out], "conv bias shape mismatch");
        let values = conv1d_kernel(
            self.value(x),
            self.value(kernels),
            self.value(bias),
            l,
            d_in,
            k,
            d_out,
        );
        self.push(
            Op::Conv1dSame { k, d_in, d_out },
            vec![x, kernels, bias],
            vec![l, d_out],
            values,
        )
    }

    /// Inverted dropout: in train mode each element is kept with
    /// probability `keep_prob` and scaled by `1/keep_prob`; eval mode
    /// returns the input node unchanged (bit-exact identity).
    pub fn dropout<R: Rng>(
        &mut self,
        x: NodeId,
        keep_prob: f64,
        mode: Mode,
        rng: &mut R,
    ) -> NodeId {
        assert!(
            keep_prob > 0.0 && keep_prob <= 1.0,
            "keep_prob must be in (0, 1], got {keep_prob}"
        );
        if mode == Mode::Eval {
            return x;
        }
        let inv = 1.0 / keep_prob;
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < keep_prob { inv } else { 0.0 })
            .collect();
        let values = self
            .value(x)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Dropout { mask }, vec![x], shape, values)
    }

    /// `log(sum(exp(x)))` over all elements, computed with max-shift
    /// stabilization. Exact for a single element.
    pub fn log_sum_exp(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        assert!(!xv.is_empty(), "log_sum_exp of an empty tensor");
        let v = log_sum_exp_kernel(xv);
        self.push(Op::LogSumExp, vec![x], vec![1], vec![v])
    }

    /// Gathers flat indices into a rank-1 tensor.
    pub fn select(&mut self, x: NodeId, indices: Vec<usize>) -> NodeId {
        let xv = self.value(x);
        let values: Vec<f64> = indices
            .iter()
            .map(|&i| {
                assert!(i < xv.len(), "select index {i} out of range {}", xv.len());
                xv[i]
            })
            .collect();
        let n = indices.len();
        self.push(Op::Select { indices }, vec![x], vec![n], values)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).iter().sum();
        self.push(Op::Sum, vec![x], vec![1], vec![v])
    }

    // ----- backward -------------------------------------------------

    /// Backpropagates from a scalar loss node, visiting nodes in exact
    /// reverse construction order. Gradients of parameter-bound leaves
    /// are accumulated into `store`.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) {
        assert_eq!(
            self.nodes[loss].values.len(),
            1,
            "backward needs a scalar loss node"
        );
        for n in &mut self.nodes {
            n.grad = vec![0.0; n.values.len()];
        }
        self.nodes[loss].grad[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            // Split off the current node so input grads can be borrowed mutably.
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if node.grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            match &node.op {
                Op::Leaf { param } => {
                    if let Some(pid) = param {
                        let g = store.get_mut(*pid).grad_mut();
                        for (dst, src) in g.iter_mut().zip(&node.grad) {
                            *dst += src;
                        }
                    }
                }
                Op::Rows { param, ids } => {
                    let d = node.shape[1];
                    let g = store.get_mut(*param).grad_mut();
                    for (j, &r) in ids.iter().enumerate() {
                        for c in 0..d {
                            g[r * d + c] += node.grad[j * d + c];
                        }
                    }
                }
                Op::Matmul => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let (m, k) = (before[a].shape[0], before[a].shape[1]);
                    let n = before[b].shape[1];
                    // dA += dC . B^T
                    let da = matmul_nt(&node.grad, &before[b].values, m, n, k);
                    // dB += A^T . dC
                    let db = matmul_tn(&before[a].values, &node.grad, m, k, n);
                    accumulate(&mut before[a].grad, &da);
                    accumulate(&mut before[b].grad, &db);
                }
                Op::Add => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    accumulate(&mut before[a].grad, &node.grad);
                    accumulate(&mut before[b].grad, &node.grad);
                }
                Op::Sub => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    accumulate(&mut before[a].grad, &node.grad);
                    for (dst, src) in before[b].grad.iter_mut().zip(&node.grad) {
                        *dst -= src;
                    }
                }
                Op::Mul => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    debug_assert!(a != b, "mul with aliased inputs needs two nodes");
                    let (la, lb) = before.split_at_mut(a.max(b));
                    let (na, nb) = if a < b {
                        (&mut la[a], &mut lb[0])
                    } else {
                        (&mut lb[0], &mut la[b])
                    };
                    for j in 0..node.grad.len() {
                        na.grad[j] += node.grad[j] * nb.values[j];
                        nb.grad[j] += node.grad[j] * na.values[j];
                    }
                }
                Op::AddBias => {
                    let (a, bias) = (node.inputs[0], node.inputs[1]);
                    let n = node.shape[1];
                    accumulate(&mut before[a].grad, &node.grad);
                    for (j, g) in node.grad.iter().enumerate() {
                        before[bias].grad[j % n] += g;
                    }
                }
                Op::Sigmoid => {
                    let a = node.inputs[0];
                    for j in 0..node.grad.len() {
                        let y = node.values[j];
                        before[a].grad[j] += node.grad[j] * y * (1.0 - y);
                    }
                }
                Op::Tanh => {
                    let a = node.inputs[0];
                    for j in 0..node.grad.len() {
                        let y = node.values[j];
                        before[a].grad[j] += node.grad[j] * (1.0 - y * y);
                    }
                }
                Op::Scale { c } => {
                    let a = node.inputs[0];
                    for j in 0..node.grad.len() {
                        before[a].grad[j] += node.grad[j] * c;
                    }
                }
                Op::Concat => {
                    let rank = node.shape.len();
                    let total = node.shape[rank - 1];
                    let rows = node.values.len() / total.max(1);
                    let mut off = 0;
                    for &p in &node.inputs {
                        let w = before[p].shape[rank - 1];
                        for r in 0..rows {
                            for c in 0..w {
                                before[p].grad[r * w + c] += node.grad[r * total + off + c];
                            }
                        }
                        off += w;
                    }
                }
                Op::Row { i } => {
                    let a = node.inputs[0];
                    let n = node.shape[1];
                    for c in 0..n {
                        before[a].grad[i * n + c] += node.grad[c];
                    }
                }
                Op::StackRows => {
                    let n = node.shape[1];
                    for (j, &p) in node.inputs.iter().enumerate() {
                        for c in 0..n {
                            before[p].grad[c] += node.grad[j * n + c];
                        }
                    }
                }
                Op::Transpose => {
                    let a = node.inputs[0];
                    let (n, m) = (node.shape[0], node.shape[1]);
                    for i in 0..n {
                        for j in 0..m {
                            before[a].grad[j * n + i] += node.grad[i * m + j];
                        }
                    }
                }
                Op::Reshape => {
                    let a = node.inputs[0];
                    accumulate(&mut before[a].grad, &node.grad);
                }
                Op::Conv1dSame { k, d_in, d_out } => {
                    let (x, ker, bias) = (node.inputs[0], node.inputs[1], node.inputs[2]);
                    let l = node.shape[0];
                    let c = (k - 1) / 2;
                    for t in 0..l {
                        for a in 0..*k {
                            let s = t + a;
                            if s < c || s - c >= l {
                                continue;
                            }
                            let s = s - c;
                            for i in 0..*d_in {
                                let xv = before[x].values[s * d_in + i];
                                for o in 0..*d_out {
                                    let go = node.grad[t * d_out + o];
                                    let kidx = (a * d_in + i) * d_out + o;
                                    before[x].grad[s * d_in + i] +=
                                        go * before[ker].values[kidx];
                                    before[ker].grad[kidx] += go * xv;
                                }
                            }
                        }
                    }
                    for t in 0..l {
                        for o in 0..*d_out {
                            before[bias].grad[o] += node.grad[t * d_out + o];
                        }
                    }
                }
                Op::Dropout { mask } => {
                    let a = node.inputs[0];
                    for j in 0..node.grad.len() {
                        before[a].grad[j] += node.grad[j] * mask[j];
                    }
                }
                Op::LogSumExp => {
                    let a = node.inputs[0];
                    let y = node.values[0];
                    let g = node.grad[0];
                    for j in 0..before[a].values.len() {
                        before[a].grad[j] += g * (before[a].values[j] - y).exp();
                    }
                }
                Op::Select { indices } => {
                    let a = node.inputs[0];
                    for (j, &idx) in indices.iter().enumerate() {
                        before[a].grad[idx] += node.grad[j];
                    }
                }
                Op::Sum => {
                    let a = node.inputs[0];
                    let g = node.grad[0];
                    for dst in before[a].grad.iter_mut() {
                        *dst += g;
                    }
                }
            }
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// C[m,n] = A[m,k] . B[k,n]
pub(crate) fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    c
}

/// C[m,k] = A[m,n] . B[k,n]^T
fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += arow[j] * brow[j];
            }
            c[i * k + p] = s;
        }
    }
    c
}

/// C[k,n] = A[m,k]^T . B[m,n]
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    c
}

pub(crate) fn conv1d_kernel(
    x: &[f64],
    kernels: &[f64],
    bias: &[f64],
    l: usize,
    d_in: usize,
    k: usize,
    d_out: usize,
) -> Vec<f64> {
    let c = (k - 1) / 2;
    let mut out = vec![0.0; l * d_out];
    for t in 0..l {
        let orow = &mut out[t * d_out..(t + 1) * d_out];
        orow.copy_from_slice(bias);
        for a in 0..k {
            let s = t + a;
            if s < c || s - c >= l {
                continue;
            }
            let s = s - c;
            for i in 0..d_in {
                let xv = x[s * d_in + i];
                if xv == 0.0 {
                    continue;
                }
                let krow = &kernels[(a * d_in + i) * d_out..(a * d_in + i + 1) * d_out];
                for o in 0..d_out {
                    orow[o] += xv * krow[o];
                }
            }
        }
    }
    out
}

pub(crate) fn log_sum_exp_kernel(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = x.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nd::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(name: &str, shape: &[usize], values: Vec<f64>) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.register(name, Tensor::new(shape, values));
        (s, id)
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let i = g.constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b = g.constant(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]);
        let c = g.matmul(i, b);
        assert_eq!(g.value(c), &[5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn matmul_1x2_2x1() {
        let mut g = Graph::new();
        let a = g.constant(&[1, 2], vec![1.0, 2.0]);
        let b = g.constant(&[2, 1], vec![3.0, 4.0]);
        let c = g.matmul(a, b);
        assert_eq!(g.value(c), &[11.0]);
    }

    #[test]
    #[should_panic(expected = "inner dims differ")]
    fn matmul_shape_mismatch_panics() {
        let mut g = Graph::new();
        let a = g.constant(&[1, 2], vec![1.0, 2.0]);
        let b = g.constant(&[3, 1], vec![1.0, 2.0, 3.0]);
        g.matmul(a, b);
    }

    #[test]
    fn ewise_values() {
        let mut g = Graph::new();
        let z = g.constant(&[1], vec![0.0]);
        let s = g.sigmoid(z);
        let t = g.tanh(z);
        assert_eq!(g.scalar(s), 0.5);
        assert_eq!(g.scalar(t), 0.0);
        let a = g.constant(&[2], vec![1.0, 2.0]);
        let b = g.constant(&[2], vec![3.0, 4.0]);
        let c = g.add(a, b);
        assert_eq!(g.value(c), &[4.0, 6.0]);
    }

    #[test]
    fn concat_rank1_and_identity() {
        let mut g = Graph::new();
        let a = g.constant(&[2], vec![1.0, 2.0]);
        let b = g.constant(&[1], vec![3.0]);
        let c = g.concat(&[a, b]);
        assert_eq!(g.value(c), &[1.0, 2.0, 3.0]);
        assert_eq!(g.shape(c), &[3]);

        // Concat with a zero-width tensor is the identity.
        let e = g.constant(&[2, 0], vec![]);
        let x = g.constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = g.concat(&[x, e]);
        assert_eq!(g.value(y), g.value(x));
        assert_eq!(g.shape(y), &[2, 2]);
    }

    #[test]
    fn concat_grad_is_split() {
        let (mut store, pa) = store_with("a", &[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let pb = store.register("b", Tensor::new(&[2, 1], vec![5.0, 6.0]));
        let mut g = Graph::new();
        let a = g.param(&store, pa);
        let b = g.param(&store, pb);
        let c = g.concat(&[a, b]);
        let loss = g.sum(c);
        g.backward(loss, &mut store);
        assert_eq!(store.get(pa).grad().unwrap(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(store.get(pb).grad().unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        // k=3, center tap = identity matrix, side taps zero.
        let d = 2;
        let mut ker = vec![0.0; 3 * d * d];
        for i in 0..d {
            let center = 1;
            ker[(center * d + i) * d + i] = 1.0;
        }
        let mut g = Graph::new();
        let x = g.constant(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let kn = g.constant(&[3, d, d], ker);
        let b = g.zeros(&[d]);
        let y = g.conv1d_same(x, kn, b);
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn conv_box_kernel_hand_case() {
        // k=3, d_in = d_out = 1, kernel [1,1,1], input [1,2,3] -> [3,6,5].
        let mut g = Graph::new();
        let x = g.constant(&[3, 1], vec![1.0, 2.0, 3.0]);
        let kn = g.constant(&[3, 1, 1], vec![1.0, 1.0, 1.0]);
        let b = g.zeros(&[1]);
        let y = g.conv1d_same(x, kn, b);
        assert_eq!(g.value(y), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv_preserves_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in 1..8 {
            for k in [1usize, 3, 5] {
                let mut g = Graph::new();
                let xt = Tensor::uniform(&[l, 2], -1.0, 1.0, &mut rng);
                let kt = Tensor::uniform(&[k, 2, 3], -1.0, 1.0, &mut rng);
                let x = g.constant(&[l, 2], xt.values().to_vec());
                let kn = g.constant(&[k, 2, 3], kt.values().to_vec());
                let b = g.zeros(&[3]);
                let y = g.conv1d_same(x, kn, b);
                assert_eq!(g.shape(y), &[l, 3]);
            }
        }
    }

    #[test]
    #[should_panic(expected = "must be odd")]
    fn conv_even_kernel_panics() {
        let mut g = Graph::new();
        let x = g.constant(&[2, 1], vec![1.0, 2.0]);
        let kn = g.constant(&[2, 1, 1], vec![1.0, 1.0]);
        let b = g.zeros(&[1]);
        g.conv1d_same(x, kn, b);
    }

    #[test]
    #[should_panic(expected = "length must be >= 1")]
    fn conv_empty_sequence_panics() {
        let mut g = Graph::new();
        let x = g.constant(&[0, 1], vec![]);
        let kn = g.constant(&[3, 1, 1], vec![1.0, 1.0, 1.0]);
        let b = g.zeros(&[1]);
        g.conv1d_same(x, kn, b);
    }

    #[test]
    #[should_panic(expected = "leading dims differ")]
    fn concat_leading_dim_mismatch_panics() {
        let mut g = Graph::new();
        let a = g.constant(&[2, 1], vec![1.0, 2.0]);
        let b = g.constant(&[3, 1], vec![1.0, 2.0, 3.0]);
        g.concat(&[a, b]);
    }

    #[test]
    #[should_panic(expected = "empty tensor")]
    fn log_sum_exp_of_empty_tensor_panics() {
        let mut g = Graph::new();
        let x = g.constant(&[2, 0], vec![]);
        g.log_sum_exp(x);
    }

    #[test]
    fn dropout_eval_is_bit_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let x = g.constant(&[4], vec![0.1, -0.2, 0.3, -0.4]);
        let y = g.dropout(x, 0.5, Mode::Eval, &mut rng);
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_keep_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let x = g.constant(&[4], vec![0.1, -0.2, 0.3, -0.4]);
        let y = g.dropout(x, 1.0, Mode::Train, &mut rng);
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn dropout_mean_is_preserved() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut g = Graph::new();
        let x = g.constant(&[n], vec![1.0; n]);
        let y = g.dropout(x, 0.8, Mode::Train, &mut rng);
        let mean: f64 = g.value(y).iter().sum::<f64>() / n as f64;
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
    }

    #[test]
    #[should_panic(expected = "keep_prob")]
    fn dropout_rejects_bad_keep_prob() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let x = g.constant(&[1], vec![1.0]);
        g.dropout(x, 0.0, Mode::Train, &mut rng);
    }

    #[test]
    fn log_sum_exp_cases() {
        let mut g = Graph::new();
        let single = g.constant(&[1], vec![3.25]);
        let s = g.log_sum_exp(single);
        assert_eq!(g.scalar(s), 3.25);

        let two = g.constant(&[2], vec![0.0, 0.0]);
        let t = g.log_sum_exp(two);
        assert!((g.scalar(t) - 2.0f64.ln()).abs() < 1e-12);

        let big = g.constant(&[2], vec![1000.0, 1000.0]);
        let b = g.log_sum_exp(big);
        assert!((g.scalar(b) - (1000.0 + 2.0f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..8);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = log_sum_exp_kernel(&v);
            assert!(lse >= m - 1e-12);
            assert!(lse <= m + (n as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let (mut store, px) = store_with("x", &[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let mut g = Graph::new();
        let x = g.param(&store, px);
        let loss = g.sum(x);
        g.backward(loss, &mut store);
        assert_eq!(store.get(px).grad().unwrap(), &[1.0; 4]);
    }

    #[test]
    fn backward_elementwise_square_gives_two_x() {
        let (mut store, px) = store_with("x", &[3], vec![1.0, -2.0, 0.5]);
        let mut g = Graph::new();
        let x = g.param(&store, px);
        let x2 = g.param(&store, px);
        let sq = g.mul(x, x2);
        let loss = g.sum(sq);
        g.backward(loss, &mut store);
        assert_eq!(store.get(px).grad().unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_rejects_non_scalar_loss() {
        let (mut store, px) = store_with("x", &[2], vec![1.0, 2.0]);
        let mut g = Graph::new();
        let x = g.param(&store, px);
        g.backward(x, &mut store);
    }

    #[test]
    fn backward_is_deterministic_across_runs() {
        let run = || {
            let (mut store, px) = store_with("x", &[2, 3], vec![0.3, -0.1, 0.7, 0.2, -0.9, 0.4]);
            let pw = store.register("w", Tensor::new(&[3, 2], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
            let mut g = Graph::new();
            let x = g.param(&store, px);
            let w = g.param(&store, pw);
            let h = g.matmul(x, w);
            let a = g.tanh(h);
            let loss = g.sum(a);
            g.backward(loss, &mut store);
            (
                store.get(px).grad().unwrap().to_vec(),
                store.get(pw).grad().unwrap().to_vec(),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rows_gather_accumulates_repeated_ids() {
        let (mut store, pe) = store_with("emb", &[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut g = Graph::new();
        let r = g.param_rows(&store, pe, &[1, 1, 2]);
        assert_eq!(g.value(r), &[3.0, 4.0, 3.0, 4.0, 5.0, 6.0]);
        let loss = g.sum(r);
        g.backward(loss, &mut store);
        assert_eq!(
            store.get(pe).grad().unwrap(),
            &[0.0, 0.0, 2.0, 2.0, 1.0, 1.0]
        );
    }

    #[test]
    fn grads_accumulate_until_zeroed() {
        let (mut store, px) = store_with("x", &[2], vec![1.0, 2.0]);
        for _ in 0..2 {
            let mut g = Graph::new();
            let x = g.param(&store, px);
            let loss = g.sum(x);
            g.backward(loss, &mut store);
        }
        assert_eq!(store.get(px).grad().unwrap(), &[2.0, 2.0]);
        store.zero_grads();
        assert_eq!(store.get(px).grad().unwrap(), &[0.0, 0.0]);
    }
}
