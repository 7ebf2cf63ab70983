//! Reverse-mode automatic differentiation over flat f64 tensors.
//!
//! A [`Tape`] records every operation of a forward pass; [`Tape::backward`]
//! replays it once in reverse and accumulates exact gradients into every
//! node that (transitively) depends on a `requires_grad` leaf. Tapes are
//! single-use: after `backward` the tape only serves reads.
//!
//! Layout conventions: images are `[N, H, W, C]`, token sequences are
//! `[B, T, D]` (or `[T, D]`), convolution kernels are `[kh, kw, Cin, Cout]`.

use crate::error::{Error, Result};

/// Padding scheme for spatial convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output spatial size is `ceil(in / stride)`; zero padding split evenly
    /// (extra row/column at the bottom/right).
    Same,
    /// No padding; output size is `(in - k) / stride + 1`.
    Valid,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    Scale(TensorId, f64),
    AddScalar(TensorId),
    Relu(TensorId),
    Sigmoid(TensorId),
    Abs(TensorId),
    BiasAdd(TensorId, TensorId),
    MatMul(TensorId, TensorId),
    Softmax(TensorId, usize),
    LayerNorm { x: TensorId, gamma: TensorId, beta: TensorId, eps: f64 },
    Concat { inputs: Vec<TensorId>, axis: usize },
    Slice { x: TensorId, axis: usize, start: usize, len: usize },
    Reshape(TensorId),
    Permute { x: TensorId, perm: Vec<usize> },
    Conv2d { x: TensorId, kernel: TensorId, stride: usize, padding: Padding },
    ConvTranspose2d { x: TensorId, kernel: TensorId, stride: usize },
    SumAll(TensorId),
    MeanAll(TensorId),
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::Relu(..) => "relu",
        Op::Sigmoid(..) => "sigmoid",
        Op::Abs(..) => "abs",
        Op::BiasAdd(..) => "bias_add",
        Op::MatMul(..) => "matmul",
        Op::Softmax(..) => "softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Concat { .. } => "concat",
        Op::Slice { .. } => "slice",
        Op::Reshape(..) => "reshape",
        Op::Permute { .. } => "permute",
        Op::Conv2d { .. } => "conv2d",
        Op::ConvTranspose2d { .. } => "transposed_conv2d",
        Op::SumAll(..) => "sum",
        Op::MeanAll(..) => "mean",
    }
}

/// A node on the tape: value, shape and (after backward) its gradient.
#[derive(Debug)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
    op: Op,
    needs_grad: bool,
}

/// Single-use operation tape.
pub struct Tape {
    nodes: Vec<Tensor>,
    consumed: bool,
    #[cfg(debug_assertions)]
    first_nonfinite: Option<(TensorId, &'static str)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
            #[cfg(debug_assertions)]
            first_nonfinite: None,
        }
    }

    /// Number of recorded nodes.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// True once `backward` has run.
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0]
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Value of a scalar (single-element) node.
    pub fn value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    /// First node holding a NaN/Inf, with the producing op's name.
    ///
    /// In debug builds this is tracked as ops are recorded; the scan here
    /// works in release builds too.
    pub fn first_nonfinite(&self) -> Option<(TensorId, &'static str)> {
        #[cfg(debug_assertions)]
        if let Some(hit) = self.first_nonfinite {
            return Some(hit);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.data.iter().any(|v| !v.is_finite()) {
                return Some((TensorId(i), op_name(&node.op)));
            }
        }
        None
    }

    fn check_open(&self) -> Result<()> {
        if self.consumed {
            Err(Error::contract("tape already consumed by backward"))
        } else {
            Ok(())
        }
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, op: Op, needs_grad: bool) -> TensorId {
        let id = TensorId(self.nodes.len());
        #[cfg(debug_assertions)]
        if self.first_nonfinite.is_none() && data.iter().any(|v| !v.is_finite()) {
            self.first_nonfinite = Some((id, op_name(&op)));
        }
        self.nodes.push(Tensor { shape, data, requires_grad: false, grad: None, op, needs_grad });
        id
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ── Leaves ──────────────────────────────────────────────────────────

    /// Record an input tensor. `requires_grad` marks it as a differentiation
    /// target for `backward`.
    pub fn leaf(&mut self, data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<TensorId> {
        self.check_open()?;
        let numel: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(Error::shape(format!("leaf shape {shape:?} has a zero dimension")));
        }
        if data.len() != numel {
            return Err(Error::shape(format!(
                "leaf data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                numel
            )));
        }
        let id = self.push(data, shape.to_vec(), Op::Leaf, requires_grad);
        self.nodes[id.0].requires_grad = requires_grad;
        Ok(id)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<TensorId> {
        self.leaf(data, shape, false)
    }

    /// Single-element constant.
    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.constant(vec![v], &[1]).expect("scalar leaf")
    }

    // ── Elementwise ─────────────────────────────────────────────────────

    fn binary_same_shape(
        &mut self,
        a: TensorId,
        b: TensorId,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        self.check_open()?;
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::shape(format!(
                "{name}: operand shapes {:?} and {:?} differ",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, shape, op, ng))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    fn unary(&mut self, a: TensorId, f: impl Fn(f64) -> f64, op: Op) -> TensorId {
        assert!(!self.consumed, "tape already consumed by backward");
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|&x| f(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, op, ng)
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    /// Elementwise max(0, x); the subgradient at exactly 0 is 0.
    /// NaN inputs pass through (f64::max would launder them to 0, hiding
    /// divergence from the non-finite diagnostics).
    pub fn relu(&mut self, a: TensorId) -> TensorId {
        self.unary(a, |x| if x.is_nan() { x } else { x.max(0.0) }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        self.unary(a, sigmoid_stable, Op::Sigmoid(a))
    }

    /// Elementwise |x|; the subgradient at exactly 0 is 0.
    pub fn abs(&mut self, a: TensorId) -> TensorId {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    /// Add a rank-1 bias over the last axis.
    pub fn bias_add(&mut self, x: TensorId, b: TensorId) -> Result<TensorId> {
        self.check_open()?;
        let bshape = &self.nodes[b.0].shape;
        let xshape = &self.nodes[x.0].shape;
        let last = *xshape.last().expect("bias_add on scalarless tensor");
        if bshape.len() != 1 || bshape[0] != last {
            return Err(Error::shape(format!(
                "bias_add: bias shape {bshape:?} does not match last axis of {xshape:?}"
            )));
        }
        let bdata = &self.nodes[b.0].data;
        let data: Vec<f64> = self.nodes[x.0]
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bdata[i % last])
            .collect();
        let shape = xshape.clone();
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(data, shape, Op::BiasAdd(x, b), ng))
    }

    // ── Contractions ────────────────────────────────────────────────────

    /// Matrix product over the trailing two axes. Operands must have the
    /// same rank; leading (batch) dimensions must match exactly.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check_open()?;
        let ashape = self.nodes[a.0].shape.clone();
        let bshape = self.nodes[b.0].shape.clone();
        if ashape.len() < 2 || bshape.len() < 2 || ashape.len() != bshape.len() {
            return Err(Error::shape(format!(
                "matmul: ranks {} and {} are not both >= 2 and equal",
                ashape.len(),
                bshape.len()
            )));
        }
        let nd = ashape.len();
        if ashape[..nd - 2] != bshape[..nd - 2] {
            return Err(Error::shape(format!(
                "matmul: batch dims {:?} vs {:?}",
                &ashape[..nd - 2],
                &bshape[..nd - 2]
            )));
        }
        let (m, k) = (ashape[nd - 2], ashape[nd - 1]);
        let (k2, n) = (bshape[nd - 2], bshape[nd - 1]);
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul: inner dimensions differ ({k} vs {k2}) for shapes {ashape:?} x {bshape:?}"
            )));
        }
        let batch: usize = ashape[..nd - 2].iter().product();
        let mut out = vec![0.0; batch * m * n];
        for bi in 0..batch {
            matmul_2d(
                &self.nodes[a.0].data[bi * m * k..(bi + 1) * m * k],
                &self.nodes[b.0].data[bi * k * n..(bi + 1) * k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut shape = ashape[..nd - 2].to_vec();
        shape.push(m);
        shape.push(n);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, shape, Op::MatMul(a, b), ng))
    }

    // ── Normalizations ──────────────────────────────────────────────────

    /// Numerically stable softmax along `axis`; slices sum to 1.
    pub fn softmax(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.check_open()?;
        let shape = self.nodes[a.0].shape.clone();
        if axis >= shape.len() {
            return Err(Error::contract(format!(
                "softmax: axis {axis} out of range for shape {shape:?}"
            )));
        }
        let (outer, mid, inner) = axis_split(&shape, axis);
        let src = &self.nodes[a.0].data;
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * mid * inner + j * inner + i;
                let mut max = f64::NEG_INFINITY;
                for j in 0..mid {
                    max = max.max(src[at(j)]);
                }
                let mut sum = 0.0;
                for j in 0..mid {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    sum += e;
                }
                for j in 0..mid {
                    out[at(j)] /= sum;
                }
            }
        }
        let ng = self.needs(a);
        Ok(self.push(out, shape, Op::Softmax(a, axis), ng))
    }

    /// Standardize along the last axis, then apply the affine (gamma, beta).
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    ) -> Result<TensorId> {
        self.check_open()?;
        let shape = self.nodes[x.0].shape.clone();
        let d = *shape.last().expect("layer_norm on rank-0 tensor");
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            let s = &self.nodes[id.0].shape;
            if s.len() != 1 || s[0] != d {
                return Err(Error::shape(format!(
                    "layer_norm: {name} shape {s:?} does not match feature dim {d}"
                )));
            }
        }
        let src = &self.nodes[x.0].data;
        let g = &self.nodes[gamma.0].data;
        let b = &self.nodes[beta.0].data;
        let mut out = vec![0.0; src.len()];
        for v in 0..src.len() / d {
            let row = &src[v * d..(v + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                out[v * d + j] = (row[j] - mean) * inv_std * g[j] + b[j];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(out, shape, Op::LayerNorm { x, gamma, beta, eps }, ng))
    }

    // ── Shape manipulation ──────────────────────────────────────────────

    /// Concatenate along an existing axis; all other dims must agree.
    pub fn concat(&mut self, inputs: &[TensorId], axis: usize) -> Result<TensorId> {
        self.check_open()?;
        if inputs.is_empty() {
            return Err(Error::contract("concat: no inputs"));
        }
        let first = self.nodes[inputs[0].0].shape.clone();
        if axis >= first.len() {
            return Err(Error::contract(format!(
                "concat: axis {axis} out of range for shape {first:?}"
            )));
        }
        let mut axis_total = 0;
        for &id in inputs {
            let s = &self.nodes[id.0].shape;
            if s.len() != first.len() {
                return Err(Error::shape(format!("concat: rank {} vs {}", s.len(), first.len())));
            }
            for (d, (&a, &b)) in s.iter().zip(&first).enumerate() {
                if d != axis && a != b {
                    return Err(Error::shape(format!(
                        "concat: dim {d} differs ({a} vs {b}) between inputs {s:?} and {first:?}"
                    )));
                }
            }
            axis_total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let numel: usize = shape.iter().product();
        let mut out = vec![0.0; numel];
        let mut write = 0;
        for o in 0..outer {
            for &id in inputs {
                let node = &self.nodes[id.0];
                let block = node.shape[axis] * inner;
                out[write..write + block].copy_from_slice(&node.data[o * block..(o + 1) * block]);
                write += block;
            }
        }
        let ng = inputs.iter().any(|&id| self.needs(id));
        Ok(self.push(out, shape, Op::Concat { inputs: inputs.to_vec(), axis }, ng))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn slice(&mut self, x: TensorId, axis: usize, start: usize, len: usize) -> Result<TensorId> {
        self.check_open()?;
        let shape = self.nodes[x.0].shape.clone();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(Error::contract(format!(
                "slice: range {start}..{} along axis {axis} invalid for shape {shape:?}",
                start + len
            )));
        }
        let (outer, mid, inner) = axis_split(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut out = vec![0.0; outer * len * inner];
        let src = &self.nodes[x.0].data;
        for o in 0..outer {
            let src_off = (o * mid + start) * inner;
            let dst_off = o * len * inner;
            out[dst_off..dst_off + len * inner]
                .copy_from_slice(&src[src_off..src_off + len * inner]);
        }
        let ng = self.needs(x);
        Ok(self.push(out, out_shape, Op::Slice { x, axis, start, len }, ng))
    }

    pub fn reshape(&mut self, x: TensorId, new_shape: &[usize]) -> Result<TensorId> {
        self.check_open()?;
        let numel: usize = new_shape.iter().product();
        if numel != self.nodes[x.0].data.len() {
            return Err(Error::shape(format!(
                "reshape: {:?} ({} elements) -> {:?} ({} elements)",
                self.nodes[x.0].shape,
                self.nodes[x.0].data.len(),
                new_shape,
                numel
            )));
        }
        let data = self.nodes[x.0].data.clone();
        let ng = self.needs(x);
        Ok(self.push(data, new_shape.to_vec(), Op::Reshape(x), ng))
    }

    /// Reorder axes: output axis `i` takes input axis `perm[i]`.
    pub fn permute(&mut self, x: TensorId, perm: &[usize]) -> Result<TensorId> {
        self.check_open()?;
        let shape = self.nodes[x.0].shape.clone();
        let nd = shape.len();
        let mut seen = vec![false; nd];
        if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::contract(format!(
                "permute: {perm:?} is not a permutation of 0..{nd}"
            )));
        }
        let out = permute_data(&self.nodes[x.0].data, &shape, perm);
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let ng = self.needs(x);
        Ok(self.push(out, out_shape, Op::Permute { x, perm: perm.to_vec() }, ng))
    }

    // ── Convolutions ────────────────────────────────────────────────────

    /// 2-D convolution, `x: [N,H,W,Cin]`, `kernel: [kh,kw,Cin,Cout]`.
    pub fn conv2d(
        &mut self,
        x: TensorId,
        kernel: TensorId,
        stride: usize,
        padding: Padding,
    ) -> Result<TensorId> {
        self.check_open()?;
        let geom = ConvGeom::new(&self.nodes[x.0].shape, &self.nodes[kernel.0].shape, stride, padding)?;
        let out = conv_forward(&self.nodes[x.0].data, &self.nodes[kernel.0].data, &geom);
        let shape = vec![geom.n, geom.oh, geom.ow, geom.co];
        let ng = self.needs(x) || self.needs(kernel);
        Ok(self.push(out, shape, Op::Conv2d { x, kernel, stride, padding }, ng))
    }

    /// Transposed 2-D convolution: the exact adjoint of a same-padded
    /// [`Tape::conv2d`] with the given stride. `x: [N,H,W,Cin]`,
    /// `kernel: [kh,kw,Cout,Cin]`, output `[N, H*stride, W*stride, Cout]`.
    pub fn conv2d_transpose(
        &mut self,
        x: TensorId,
        kernel: TensorId,
        stride: usize,
    ) -> Result<TensorId> {
        self.check_open()?;
        let geom = transpose_geom(&self.nodes[x.0].shape, &self.nodes[kernel.0].shape, stride)?;
        let out = conv_backward_input(&self.nodes[x.0].data, &self.nodes[kernel.0].data, &geom);
        let shape = vec![geom.n, geom.h, geom.w, geom.ci];
        let ng = self.needs(x) || self.needs(kernel);
        Ok(self.push(out, shape, Op::ConvTranspose2d { x, kernel, stride }, ng))
    }

    // ── Reductions ──────────────────────────────────────────────────────

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        assert!(!self.consumed, "tape already consumed by backward");
        let s: f64 = self.nodes[a.0].data.iter().sum();
        let ng = self.needs(a);
        self.push(vec![s], vec![1], Op::SumAll(a), ng)
    }

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        assert!(!self.consumed, "tape already consumed by backward");
        let n = self.nodes[a.0].data.len() as f64;
        let s: f64 = self.nodes[a.0].data.iter().sum();
        let ng = self.needs(a);
        self.push(vec![s / n], vec![1], Op::MeanAll(a), ng)
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Populates `grad` on every node the
    /// loss depends on (notably all `requires_grad` leaves) and consumes the
    /// tape: no further ops may be recorded.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        self.check_open()?;
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        self.consumed = true;
        if !self.nodes[loss.0].needs_grad {
            // Loss does not depend on any requires_grad leaf; nothing to do.
            return Ok(());
        }
        for node in &mut self.nodes {
            if node.needs_grad {
                node.grad = Some(vec![0.0; node.data.len()]);
            }
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match &self.nodes[i].grad {
                Some(g) => g.clone(),
                None => continue,
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accum(a, &g);
                    self.accum(b, &g);
                }
                Op::Sub(a, b) => {
                    self.accum(a, &g);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    self.accum(b, &neg);
                }
                Op::Mul(a, b) => {
                    if self.needs(a) {
                        let da: Vec<f64> =
                            g.iter().zip(&self.nodes[b.0].data).map(|(gv, bv)| gv * bv).collect();
                        self.accum(a, &da);
                    }
                    if self.needs(b) {
                        let db: Vec<f64> =
                            g.iter().zip(&self.nodes[a.0].data).map(|(gv, av)| gv * av).collect();
                        self.accum(b, &db);
                    }
                }
                Op::Div(a, b) => {
                    if self.needs(a) {
                        let da: Vec<f64> =
                            g.iter().zip(&self.nodes[b.0].data).map(|(gv, bv)| gv / bv).collect();
                        self.accum(a, &da);
                    }
                    if self.needs(b) {
                        let db: Vec<f64> = g
                            .iter()
                            .zip(self.nodes[a.0].data.iter().zip(&self.nodes[b.0].data))
                            .map(|(gv, (av, bv))| -gv * av / (bv * bv))
                            .collect();
                        self.accum(b, &db);
                    }
                }
                Op::Scale(a, c) => {
                    let da: Vec<f64> = g.iter().map(|v| v * c).collect();
                    self.accum(a, &da);
                }
                Op::AddScalar(a) => {
                    self.accum(a, &g);
                }
                Op::Relu(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[a.0].data)
                        .map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 })
                        .collect();
                    self.accum(a, &da);
                }
                Op::Sigmoid(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[i].data)
                        .map(|(gv, &s)| gv * s * (1.0 - s))
                        .collect();
                    self.accum(a, &da);
                }
                Op::Abs(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[a.0].data)
                        .map(|(gv, &x)| {
                            if x > 0.0 {
                                *gv
                            } else if x < 0.0 {
                                -*gv
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    self.accum(a, &da);
                }
                Op::BiasAdd(x, b) => {
                    self.accum(x, &g);
                    if self.needs(b) {
                        let last = self.nodes[b.0].data.len();
                        let mut db = vec![0.0; last];
                        for (j, gv) in g.iter().enumerate() {
                            db[j % last] += gv;
                        }
                        self.accum(b, &db);
                    }
                }
                Op::MatMul(a, b) => {
                    let nd = self.nodes[a.0].shape.len();
                    let m = self.nodes[a.0].shape[nd - 2];
                    let k = self.nodes[a.0].shape[nd - 1];
                    let n = self.nodes[b.0].shape[nd - 1];
                    let batch: usize = self.nodes[a.0].shape[..nd - 2].iter().product();
                    if self.needs(a) {
                        let mut da = vec![0.0; batch * m * k];
                        for bi in 0..batch {
                            matmul_grad_lhs(
                                &g[bi * m * n..(bi + 1) * m * n],
                                &self.nodes[b.0].data[bi * k * n..(bi + 1) * k * n],
                                &mut da[bi * m * k..(bi + 1) * m * k],
                                m,
                                k,
                                n,
                            );
                        }
                        self.accum(a, &da);
                    }
                    if self.needs(b) {
                        let mut db = vec![0.0; batch * k * n];
                        for bi in 0..batch {
                            matmul_grad_rhs(
                                &self.nodes[a.0].data[bi * m * k..(bi + 1) * m * k],
                                &g[bi * m * n..(bi + 1) * m * n],
                                &mut db[bi * k * n..(bi + 1) * k * n],
                                m,
                                k,
                                n,
                            );
                        }
                        self.accum(b, &db);
                    }
                }
                Op::Softmax(a, axis) => {
                    let shape = self.nodes[i].shape.clone();
                    let (outer, mid, inner) = axis_split(&shape, axis);
                    let s = &self.nodes[i].data;
                    let mut da = vec![0.0; s.len()];
                    for o in 0..outer {
                        for ii in 0..inner {
                            let at = |j: usize| o * mid * inner + j * inner + ii;
                            let mut dot = 0.0;
                            for j in 0..mid {
                                dot += g[at(j)] * s[at(j)];
                            }
                            for j in 0..mid {
                                da[at(j)] = s[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                    self.accum(a, &da);
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    let d = *self.nodes[x.0].shape.last().unwrap();
                    let src = &self.nodes[x.0].data;
                    let gm = &self.nodes[gamma.0].data;
                    let mut dx = vec![0.0; src.len()];
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    for v in 0..src.len() / d {
                        let row = &src[v * d..(v + 1) * d];
                        let grow = &g[v * d..(v + 1) * d];
                        let mean = row.iter().sum::<f64>() / d as f64;
                        let var =
                            row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
                        let inv_std = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|&x| (x - mean) * inv_std).collect();
                        let mut dxhat = vec![0.0; d];
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for j in 0..d {
                            dgamma[j] += grow[j] * xhat[j];
                            dbeta[j] += grow[j];
                            dxhat[j] = grow[j] * gm[j];
                            sum_dxhat += dxhat[j];
                            sum_dxhat_xhat += dxhat[j] * xhat[j];
                        }
                        let df = d as f64;
                        for j in 0..d {
                            dx[v * d + j] = inv_std / df
                                * (df * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                        }
                    }
                    self.accum(x, &dx);
                    self.accum(gamma, &dgamma);
                    self.accum(beta, &dbeta);
                }
                Op::Concat { inputs, axis } => {
                    let out_shape = self.nodes[i].shape.clone();
                    let outer: usize = out_shape[..axis].iter().product();
                    let inner: usize = out_shape[axis + 1..].iter().product();
                    let mut read = 0;
                    let mut parts: Vec<Vec<f64>> = inputs
                        .iter()
                        .map(|&id| vec![0.0; self.nodes[id.0].data.len()])
                        .collect();
                    for o in 0..outer {
                        for (pi, &id) in inputs.iter().enumerate() {
                            let block = self.nodes[id.0].shape[axis] * inner;
                            parts[pi][o * block..(o + 1) * block]
                                .copy_from_slice(&g[read..read + block]);
                            read += block;
                        }
                    }
                    for (pi, &id) in inputs.iter().enumerate() {
                        self.accum(id, &parts[pi]);
                    }
                }
                Op::Slice { x, axis, start, len } => {
                    let xshape = self.nodes[x.0].shape.clone();
                    let (outer, mid, inner) = axis_split(&xshape, axis);
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    for o in 0..outer {
                        let dst_off = (o * mid + start) * inner;
                        let src_off = o * len * inner;
                        dx[dst_off..dst_off + len * inner]
                            .copy_from_slice(&g[src_off..src_off + len * inner]);
                    }
                    self.accum(x, &dx);
                }
                Op::Reshape(x) => {
                    self.accum(x, &g);
                }
                Op::Permute { x, perm } => {
                    let mut inv = vec![0usize; perm.len()];
                    for (i, &p) in perm.iter().enumerate() {
                        inv[p] = i;
                    }
                    let dx = permute_data(&g, &self.nodes[i].shape, &inv);
                    self.accum(x, &dx);
                }
                Op::Conv2d { x, kernel, stride, padding } => {
                    let geom = ConvGeom::new(
                        &self.nodes[x.0].shape,
                        &self.nodes[kernel.0].shape,
                        stride,
                        padding,
                    )
                    .expect("geometry validated at forward time");
                    if self.needs(x) {
                        let dx = conv_backward_input(&g, &self.nodes[kernel.0].data, &geom);
                        self.accum(x, &dx);
                    }
                    if self.needs(kernel) {
                        let dk = conv_backward_kernel(&self.nodes[x.0].data, &g, &geom);
                        self.accum(kernel, &dk);
                    }
                }
                Op::ConvTranspose2d { x, kernel, stride } => {
                    let geom =
                        transpose_geom(&self.nodes[x.0].shape, &self.nodes[kernel.0].shape, stride)
                            .expect("geometry validated at forward time");
                    if self.needs(x) {
                        let dx = conv_forward(&g, &self.nodes[kernel.0].data, &geom);
                        self.accum(x, &dx);
                    }
                    if self.needs(kernel) {
                        let dk = conv_backward_kernel(&g, &self.nodes[x.0].data, &geom);
                        self.accum(kernel, &dk);
                    }
                }
                Op::SumAll(a) => {
                    let da = vec![g[0]; self.nodes[a.0].data.len()];
                    self.accum(a, &da);
                }
                Op::MeanAll(a) => {
                    let n = self.nodes[a.0].data.len();
                    let da = vec![g[0] / n as f64; n];
                    self.accum(a, &da);
                }
            }
        }
        Ok(())
    }

    fn accum(&mut self, id: TensorId, contrib: &[f64]) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        if let Some(grad) = &mut self.nodes[id.0].grad {
            for (a, b) in grad.iter_mut().zip(contrib) {
                *a += b;
            }
        }
    }
}

fn sigmoid_stable(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Split a shape at `axis` into (product before, axis dim, product after).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn permute_data(data: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let nd = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let mut out = vec![0.0; data.len()];
    let mut out_coord = vec![0usize; nd];
    for (oi, slot) in out.iter_mut().enumerate() {
        let mut rem = oi;
        for d in (0..nd).rev() {
            out_coord[d] = rem % out_shape[d];
            rem /= out_shape[d];
        }
        let mut src = 0;
        for d in 0..nd {
            src += out_coord[d] * in_strides[perm[d]];
        }
        *slot = data[src];
    }
    out
}

/// C[m,n] = A[m,k] @ B[k,n], accumulating into `out` (must be zeroed).
fn matmul_2d(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// dA[m,k] = G[m,n] @ B^T given B[k,n].
fn matmul_grad_lhs(g: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (gv, bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            da[i * k + p] += acc;
        }
    }
}

/// dB[k,n] = A^T @ G given A[m,k].
fn matmul_grad_rhs(a: &[f64], g: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let drow = &mut db[p * n..(p + 1) * n];
            for (d, gv) in drow.iter_mut().zip(grow) {
                *d += av * gv;
            }
        }
    }
}

pub(crate) struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub ci: usize,
    pub kh: usize,
    pub kw: usize,
    pub co: usize,
    pub stride: usize,
    pub pad_top: isize,
    pub pad_left: isize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn new(x_shape: &[usize], k_shape: &[usize], stride: usize, padding: Padding) -> Result<Self> {
        if x_shape.len() != 4 {
            return Err(Error::shape(format!("conv2d: input must be [N,H,W,C], got {x_shape:?}")));
        }
        if k_shape.len() != 4 {
            return Err(Error::shape(format!(
                "conv2d: kernel must be [kh,kw,Cin,Cout], got {k_shape:?}"
            )));
        }
        let (n, h, w, ci) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
        let (kh, kw, kci, co) = (k_shape[0], k_shape[1], k_shape[2], k_shape[3]);
        if kci != ci {
            return Err(Error::shape(format!(
                "conv2d: input has {ci} channels but kernel expects {kci}"
            )));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::contract(format!("conv2d: kernel dims must be odd, got {kh}x{kw}")));
        }
        if stride == 0 {
            return Err(Error::contract("conv2d: stride must be >= 1"));
        }
        let (oh, ow, pad_top, pad_left) = match padding {
            Padding::Same => {
                let oh = h.div_ceil(stride);
                let ow = w.div_ceil(stride);
                let pad_h = ((oh - 1) * stride + kh).saturating_sub(h) as isize;
                let pad_w = ((ow - 1) * stride + kw).saturating_sub(w) as isize;
                (oh, ow, pad_h / 2, pad_w / 2)
            }
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(Error::shape(format!(
                        "conv2d: valid padding needs input >= kernel ({h}x{w} vs {kh}x{kw})"
                    )));
                }
                ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0)
            }
        };
        Ok(ConvGeom { n, h, w, ci, kh, kw, co, stride, pad_top, pad_left, oh, ow })
    }
}

/// Geometry for a transposed conv whose adjoint is the same-padded conv2d
/// mapping `[N, H*s, W*s, Cout_t] -> [N, H, W, Cin_t]`.
fn transpose_geom(y_shape: &[usize], k_shape: &[usize], stride: usize) -> Result<ConvGeom> {
    if y_shape.len() != 4 {
        return Err(Error::shape(format!(
            "transposed_conv2d: input must be [N,H,W,C], got {y_shape:?}"
        )));
    }
    if k_shape.len() != 4 {
        return Err(Error::shape(format!(
            "transposed_conv2d: kernel must be [kh,kw,Cout,Cin], got {k_shape:?}"
        )));
    }
    if k_shape[3] != y_shape[3] {
        return Err(Error::shape(format!(
            "transposed_conv2d: input has {} channels but kernel expects {}",
            y_shape[3], k_shape[3]
        )));
    }
    let x_shape = [y_shape[0], y_shape[1] * stride, y_shape[2] * stride, k_shape[2]];
    let geom = ConvGeom::new(&x_shape, k_shape, stride, Padding::Same)?;
    debug_assert_eq!(geom.oh, y_shape[1]);
    debug_assert_eq!(geom.ow, y_shape[2]);
    Ok(geom)
}

fn conv_forward(x: &[f64], k: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut out = vec![0.0; g.n * g.oh * g.ow * g.co];
    for n in 0..g.n {
        for oh in 0..g.oh {
            for ow in 0..g.ow {
                let out_off = ((n * g.oh + oh) * g.ow + ow) * g.co;
                for dh in 0..g.kh {
                    let ih = (oh * g.stride + dh) as isize - g.pad_top;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    for dw in 0..g.kw {
                        let iw = (ow * g.stride + dw) as isize - g.pad_left;
                        if iw < 0 || iw >= g.w as isize {
                            continue;
                        }
                        let x_off = ((n * g.h + ih as usize) * g.w + iw as usize) * g.ci;
                        let k_off = (dh * g.kw + dw) * g.ci * g.co;
                        for ci in 0..g.ci {
                            let xv = x[x_off + ci];
                            if xv == 0.0 {
                                continue;
                            }
                            let krow = &k[k_off + ci * g.co..k_off + (ci + 1) * g.co];
                            let orow = &mut out[out_off..out_off + g.co];
                            for (o, kv) in orow.iter_mut().zip(krow) {
                                *o += xv * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward_input(gy: &[f64], k: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut gx = vec![0.0; g.n * g.h * g.w * g.ci];
    for n in 0..g.n {
        for oh in 0..g.oh {
            for ow in 0..g.ow {
                let g_off = ((n * g.oh + oh) * g.ow + ow) * g.co;
                let grow = &gy[g_off..g_off + g.co];
                for dh in 0..g.kh {
                    let ih = (oh * g.stride + dh) as isize - g.pad_top;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    for dw in 0..g.kw {
                        let iw = (ow * g.stride + dw) as isize - g.pad_left;
                        if iw < 0 || iw >= g.w as isize {
                            continue;
                        }
                        let x_off = ((n * g.h + ih as usize) * g.w + iw as usize) * g.ci;
                        let k_off = (dh * g.kw + dw) * g.ci * g.co;
                        for ci in 0..g.ci {
                            let krow = &k[k_off + ci * g.co..k_off + (ci + 1) * g.co];
                            let mut acc = 0.0;
                            for (gv, kv) in grow.iter().zip(krow) {
                                acc += gv * kv;
                            }
                            gx[x_off + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    gx
}

fn conv_backward_kernel(x: &[f64], gy: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut gk = vec![0.0; g.kh * g.kw * g.ci * g.co];
    for n in 0..g.n {
        for oh in 0..g.oh {
            for ow in 0..g.ow {
                let g_off = ((n * g.oh + oh) * g.ow + ow) * g.co;
                let grow = &gy[g_off..g_off + g.co];
                for dh in 0..g.kh {
                    let ih = (oh * g.stride + dh) as isize - g.pad_top;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    for dw in 0..g.kw {
                        let iw = (ow * g.stride + dw) as isize - g.pad_left;
                        if iw < 0 || iw >= g.w as isize {
                            continue;
                        }
                        let x_off = ((n * g.h + ih as usize) * g.w + iw as usize) * g.ci;
                        let k_off = (dh * g.kw + dw) * g.ci * g.co;
                        for ci in 0..g.ci {
                            let xv = x[x_off + ci];
                            if xv == 0.0 {
                                continue;
                            }
                            let krow = &mut gk[k_off + ci * g.co..k_off + (ci + 1) * g.co];
                            for (kv, gv) in krow.iter_mut().zip(grow) {
                                *kv += xv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    gk
}
