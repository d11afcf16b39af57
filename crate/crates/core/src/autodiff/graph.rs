use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Result, VtmError};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(&self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    ConvTranspose1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Softplus {
        x: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale {
        x: Var,
        c: f64,
    },
    ScaleChannels {
        x: Var,
        weights: Vec<f64>,
    },
    Concat {
        inputs: Vec<Var>,
        outer: usize,
        inner: usize,
    },
    Slice {
        x: Var,
        outer: usize,
        inner: usize,
        axis_len: usize,
        start: usize,
        len: usize,
    },
    TimeDiff {
        x: Var,
    },
    MeanLast {
        x: Var,
    },
    Sum {
        x: Var,
    },
    SmoothL1 {
        pred: Var,
        target: Var,
        beta: f64,
    },
    Bmm {
        a: Var,
        b: Var,
    },
    TransposeLast {
        x: Var,
    },
    MaskedSoftmax {
        x: Var,
        window: usize,
    },
    Reshape {
        x: Var,
    },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
    op: Op,
}

/// Define-by-run reverse-mode differentiation graph.
///
/// Build a graph for one forward pass, call [`Graph::backward`] on a scalar
/// output, read gradients, then drop the graph.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn last_dim(shape: &[usize]) -> usize {
    *shape.last().unwrap_or(&1)
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

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is tracked.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            grad: None,
            needs_grad: true,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            grad: None,
            needs_grad: false,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last backward pass, if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0].grad.take()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    // ---- operations -------------------------------------------------------

    /// `x: [B, C_in, T]`, `w: [C_out, C_in, K]`, `b: [C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || stride == 0 {
            return Err(VtmError::shape(format!("conv1d: input {xs:?}, kernel {ws:?}")));
        }
        let (batch, c_in, t_in) = (xs[0], xs[1], xs[2]);
        let (c_out, kernel) = (ws[0], ws[2]);
        if t_in + 2 * pad < kernel {
            return Err(VtmError::shape(format!(
                "conv1d: length {t_in} with padding {pad} is shorter than kernel {kernel}"
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(VtmError::shape("conv1d: bias must be [C_out]"));
            }
        }
        let geom = ConvGeom {
            batch,
            c_in,
            c_out,
            t_in,
            t_out: (t_in + 2 * pad - kernel) / stride + 1,
            kernel,
            stride,
            pad,
        };
        let y = kernels::conv1d_forward(self.data(x), self.data(w), b.map(|b| self.data(b)), &geom);
        let value = Tensor::new(vec![batch, c_out, geom.t_out], y)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::Conv1d { x, w, b, geom }, &inputs))
    }

    /// `x: [B, C_in, T]`, `w: [C_in, C_out, K]`; output length
    /// `(T - 1) * stride - 2 * pad + K`.
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[0] || stride == 0 || xs[2] == 0 {
            return Err(VtmError::shape(format!(
                "conv_transpose1d: input {xs:?}, kernel {ws:?}"
            )));
        }
        let (batch, c_in, t_in) = (xs[0], xs[1], xs[2]);
        let (c_out, kernel) = (ws[1], ws[2]);
        let full = (t_in - 1) * stride + kernel;
        if full < 2 * pad + 1 {
            return Err(VtmError::shape("conv_transpose1d: padding removes every output"));
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(VtmError::shape("conv_transpose1d: bias must be [C_out]"));
            }
        }
        let geom = ConvGeom {
            batch,
            c_in,
            c_out,
            t_in,
            t_out: full - 2 * pad,
            kernel,
            stride,
            pad,
        };
        let y = kernels::conv_transpose1d_forward(self.data(x), self.data(w), b.map(|b| self.data(b)), &geom);
        let value = Tensor::new(vec![batch, c_out, geom.t_out], y)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::ConvTranspose1d { x, w, b, geom }, &inputs))
    }

    /// `x: [B, F]`, `w: [O, F]`, `b: [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(VtmError::shape(format!("linear: input {xs:?}, weight {ws:?}")));
        }
        let (batch, fin, fout) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            if self.shape(b) != [fout] {
                return Err(VtmError::shape("linear: bias must be [O]"));
            }
        }
        let (xd, wd) = (self.data(x), self.data(w));
        let bd = b.map(|b| self.data(b));
        let mut y = vec![0.0; batch * fout];
        for i in 0..batch {
            let xr = &xd[i * fin..(i + 1) * fin];
            for o in 0..fout {
                let wr = &wd[o * fin..(o + 1) * fin];
                let mut acc = bd.map_or(0.0, |b| b[o]);
                for (a, c) in xr.iter().zip(wr) {
                    acc += a * c;
                }
                y[i * fout + o] = acc;
            }
        }
        let value = Tensor::new(vec![batch, fout], y)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::Linear { x, w, b }, &inputs))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let t = self.value(x);
        let y: Vec<f64> = t
            .data()
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        let value = Tensor::new(t.shape().to_vec(), y).expect("same shape");
        self.push(value, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let y: Vec<f64> = t
            .data()
            .iter()
            .map(|&v| if v > 30.0 { v } else { v.exp().ln_1p() })
            .collect();
        let value = Tensor::new(t.shape().to_vec(), y).expect("same shape");
        self.push(value, Op::Softplus { x }, &[x])
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(VtmError::shape(format!(
                "{name}: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let y = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape().to_vec(), y)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let value =
            Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * c).collect()).expect("same shape");
        self.push(value, Op::Scale { x, c }, &[x])
    }

    /// Multiplies channel `c` (axis 1) of `x: [B, C, ...]` by `weights[c]`.
    pub fn scale_channels(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        let t = self.value(x);
        let s = t.shape();
        if s.len() < 2 || s[1] != weights.len() {
            return Err(VtmError::shape(format!(
                "scale_channels: {s:?} with {} weights",
                weights.len()
            )));
        }
        let inner: usize = s[2..].iter().product();
        let mut y = t.data().to_vec();
        for (i, chunk) in y.chunks_mut(inner).enumerate() {
            let w = weights[i % s[1]];
            chunk.iter_mut().for_each(|v| *v *= w);
        }
        let value = Tensor::new(s.to_vec(), y)?;
        Ok(self.push(
            value,
            Op::ScaleChannels {
                x,
                weights: weights.to_vec(),
            },
            &[x],
        ))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(
                *inputs
                    .first()
                    .ok_or_else(|| VtmError::shape("concat: no inputs"))?,
            )
            .to_vec();
        if axis >= first.len() {
            return Err(VtmError::shape("concat: axis out of range"));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != first.len() || s.iter().enumerate().any(|(d, n)| d != axis && *n != first[d]) {
                return Err(VtmError::shape(format!("concat: {first:?} vs {s:?}")));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut y = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let n = self.shape(v)[axis] * inner;
                y.extend_from_slice(&self.data(v)[o * n..(o + 1) * n]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let value = Tensor::new(shape, y)?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                outer,
                inner,
            },
            inputs,
        ))
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start + len > s[axis] {
            return Err(VtmError::shape(format!(
                "slice: {start}..{} of axis {axis} in {s:?}",
                start + len
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let axis_len = s[axis];
        let d = self.data(x);
        let mut y = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * axis_len + start) * inner;
            y.extend_from_slice(&d[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let value = Tensor::new(shape, y)?;
        Ok(self.push(
            value,
            Op::Slice {
                x,
                outer,
                inner,
                axis_len,
                start,
                len,
            },
            &[x],
        ))
    }

    /// First difference along the last axis with a zero first entry.
    pub fn time_diff(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = last_dim(t.shape());
        let mut y = vec![0.0; t.numel()];
        for (yr, xr) in y.chunks_mut(n).zip(t.data().chunks(n)) {
            for i in 1..n {
                yr[i] = xr[i] - xr[i - 1];
            }
        }
        let value = Tensor::new(t.shape().to_vec(), y).expect("same shape");
        self.push(value, Op::TimeDiff { x }, &[x])
    }

    /// Mean over the last axis.
    pub fn mean_last(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = last_dim(t.shape());
        let y: Vec<f64> = t
            .data()
            .chunks(n)
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        let shape = t.shape()[..t.shape().len().saturating_sub(1)].to_vec();
        let value = Tensor::new(shape, y).expect("reduced shape");
        self.push(value, Op::MeanLast { x }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.data(x).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    /// Mean-reduced smooth L1: `0.5 d^2 / beta` for `|d| < beta`, else `|d| - 0.5 beta`.
    pub fn smooth_l1(&mut self, pred: Var, target: Var, beta: f64) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(VtmError::shape(format!(
                "smooth_l1: {:?} vs {:?}",
                p.shape(),
                t.shape()
            )));
        }
        if p.numel() == 0 {
            return Err(VtmError::shape("smooth_l1: empty input"));
        }
        let mut acc = 0.0;
        for (a, b) in p.data().iter().zip(t.data()) {
            acc += smooth_l1_value(a - b, beta);
        }
        let value = Tensor::scalar(acc / p.numel() as f64);
        Ok(self.push(value, Op::SmoothL1 { pred, target, beta }, &[pred, target]))
    }

    /// Batched matrix product `[B, M, K] x [B, K, N]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(VtmError::shape(format!("bmm: {sa:?} x {sb:?}")));
        }
        let y = kernels::bmm(self.data(a), self.data(b), sa[0], sa[1], sa[2], sb[2]);
        let value = Tensor::new(vec![sa[0], sa[1], sb[2]], y)?;
        Ok(self.push(value, Op::Bmm { a, b }, &[a, b]))
    }

    /// Swaps the last two axes of a rank-3 tensor.
    pub fn transpose_last(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(VtmError::shape(format!("transpose_last: {s:?}")));
        }
        let y = transpose3(self.data(x), s[0], s[1], s[2]);
        let value = Tensor::new(vec![s[0], s[2], s[1]], y)?;
        Ok(self.push(value, Op::TransposeLast { x }, &[x]))
    }

    /// Row softmax of `[B, T, T]` scores where row `i` only sees columns
    /// `i + 1 - window ..= i`.
    pub fn masked_softmax(&mut self, x: Var, window: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || s[1] != s[2] || window == 0 {
            return Err(VtmError::shape(format!("masked_softmax: {s:?}")));
        }
        let n = s[2];
        let d = self.data(x);
        let mut y = vec![0.0; d.len()];
        for (r, (yr, xr)) in y.chunks_mut(n).zip(d.chunks(n)).enumerate() {
            let i = r % n;
            let lo = (i + 1).saturating_sub(window);
            let m = xr[lo..=i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in lo..=i {
                yr[j] = (xr[j] - m).exp();
                z += yr[j];
            }
            for v in &mut yr[lo..=i] {
                *v /= z;
            }
        }
        let value = Tensor::new(s, y)?;
        Ok(self.push(value, Op::MaskedSoftmax { x, window }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x }, &[x]))
    }

    // ---- backward ---------------------------------------------------------

    fn accumulate(&mut self, v: Var, g: &[f64]) {
        let node = &mut self.nodes[v.0];
        if !node.needs_grad {
            return;
        }
        match &mut node.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => node.grad = Some(g.to_vec()),
        }
    }

    fn zeros_like(&self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0]
            .needs_grad
            .then(|| vec![0.0; self.nodes[v.0].value.numel()])
    }

    /// Back-propagates from a single-element output; gradients land on every
    /// node that depends on a variable.
    pub fn backward(&mut self, out: Var) -> Result<()> {
        if self.value(out).numel() != 1 {
            return Err(VtmError::shape("backward needs a scalar output"));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        if !self.nodes[out.0].needs_grad {
            return Ok(());
        }
        self.nodes[out.0].grad = Some(vec![1.0]);
        for i in (0..=out.0).rev() {
            let Some(gy) = self.nodes[i].grad.take() else {
                continue;
            };
            self.backward_node(i, &gy);
            self.nodes[i].grad = Some(gy);
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, gy: &[f64]) {
        // Temporarily take the op to release the borrow on self.nodes.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Conv1d { x, w, b, geom } => {
                let mut dx = self.zeros_like(*x);
                let mut dw = self.zeros_like(*w);
                let mut db = b.and_then(|b| self.zeros_like(b));
                kernels::conv1d_backward(
                    self.data(*x),
                    self.data(*w),
                    gy,
                    geom,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                self.accumulate_opt(*x, dx);
                self.accumulate_opt(*w, dw);
                if let Some(b) = b {
                    self.accumulate_opt(*b, db);
                }
            }
            Op::ConvTranspose1d { x, w, b, geom } => {
                let mut dx = self.zeros_like(*x);
                let mut dw = self.zeros_like(*w);
                let mut db = b.and_then(|b| self.zeros_like(b));
                kernels::conv_transpose1d_backward(
                    self.data(*x),
                    self.data(*w),
                    gy,
                    geom,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                self.accumulate_opt(*x, dx);
                self.accumulate_opt(*w, dw);
                if let Some(b) = b {
                    self.accumulate_opt(*b, db);
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (batch, fin) = (xs[0], xs[1]);
                let fout = self.shape(*w)[0];
                let mut dx = self.zeros_like(*x);
                let mut dw = self.zeros_like(*w);
                let mut db = b.and_then(|b| self.zeros_like(b));
                let (xd, wd) = (self.data(*x), self.data(*w));
                for n in 0..batch {
                    for o in 0..fout {
                        let g = gy[n * fout + o];
                        if let Some(db) = db.as_mut() {
                            db[o] += g;
                        }
                        if let Some(dw) = dw.as_mut() {
                            for (d, xv) in dw[o * fin..(o + 1) * fin]
                                .iter_mut()
                                .zip(&xd[n * fin..(n + 1) * fin])
                            {
                                *d += g * xv;
                            }
                        }
                        if let Some(dx) = dx.as_mut() {
                            for (d, wv) in dx[n * fin..(n + 1) * fin]
                                .iter_mut()
                                .zip(&wd[o * fin..(o + 1) * fin])
                            {
                                *d += g * wv;
                            }
                        }
                    }
                }
                self.accumulate_opt(*x, dx);
                self.accumulate_opt(*w, dw);
                if let Some(b) = b {
                    self.accumulate_opt(*b, db);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let d: Vec<f64> = self
                    .data(*x)
                    .iter()
                    .zip(gy)
                    .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
                    .collect();
                self.accumulate(*x, &d);
            }
            Op::Softplus { x } => {
                let d: Vec<f64> = self
                    .data(*x)
                    .iter()
                    .zip(gy)
                    .map(|(&v, &g)| g / (1.0 + (-v).exp()))
                    .collect();
                self.accumulate(*x, &d);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, gy);
                self.accumulate(*b, gy);
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, gy);
                let neg: Vec<f64> = gy.iter().map(|g| -g).collect();
                self.accumulate(*b, &neg);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = self.data(*b).iter().zip(gy).map(|(v, g)| v * g).collect();
                let db: Vec<f64> = self.data(*a).iter().zip(gy).map(|(v, g)| v * g).collect();
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::Scale { x, c } => {
                let d: Vec<f64> = gy.iter().map(|g| g * c).collect();
                self.accumulate(*x, &d);
            }
            Op::ScaleChannels { x, weights } => {
                let s = self.shape(*x);
                let inner: usize = s[2..].iter().product();
                let c = s[1];
                let mut d = gy.to_vec();
                for (k, chunk) in d.chunks_mut(inner).enumerate() {
                    let w = weights[k % c];
                    chunk.iter_mut().for_each(|v| *v *= w);
                }
                self.accumulate(*x, &d);
            }
            Op::Concat { inputs, outer, inner } => {
                let sizes: Vec<usize> = inputs
                    .iter()
                    .map(|v| self.nodes[v.0].value.numel() / outer)
                    .collect();
                let _ = inner;
                let row: usize = sizes.iter().sum();
                for (k, v) in inputs.iter().enumerate() {
                    if !self.nodes[v.0].needs_grad {
                        continue;
                    }
                    let off: usize = sizes[..k].iter().sum();
                    let mut d = Vec::with_capacity(sizes[k] * outer);
                    for o in 0..*outer {
                        d.extend_from_slice(&gy[o * row + off..o * row + off + sizes[k]]);
                    }
                    self.accumulate(*v, &d);
                }
            }
            Op::Slice {
                x,
                outer,
                inner,
                axis_len,
                start,
                len,
            } => {
                if let Some(mut d) = self.zeros_like(*x) {
                    for o in 0..*outer {
                        let base = (o * axis_len + start) * inner;
                        let src = &gy[o * len * inner..(o + 1) * len * inner];
                        d[base..base + len * inner].copy_from_slice(src);
                    }
                    self.accumulate(*x, &d);
                }
            }
            Op::TimeDiff { x } => {
                let n = last_dim(self.shape(*x));
                let mut d = vec![0.0; gy.len()];
                for (dr, gr) in d.chunks_mut(n).zip(gy.chunks(n)) {
                    for t in 1..n {
                        dr[t] += gr[t];
                        dr[t - 1] -= gr[t];
                    }
                }
                self.accumulate(*x, &d);
            }
            Op::MeanLast { x } => {
                let n = last_dim(self.shape(*x));
                let d: Vec<f64> = gy
                    .iter()
                    .flat_map(|g| std::iter::repeat_n(g / n as f64, n))
                    .collect();
                self.accumulate(*x, &d);
            }
            Op::Sum { x } => {
                let d = vec![gy[0]; self.nodes[x.0].value.numel()];
                self.accumulate(*x, &d);
            }
            Op::SmoothL1 { pred, target, beta } => {
                let n = self.nodes[pred.0].value.numel() as f64;
                let g = gy[0] / n;
                let d: Vec<f64> = self
                    .data(*pred)
                    .iter()
                    .zip(self.data(*target))
                    .map(|(p, t)| g * smooth_l1_slope(p - t, *beta))
                    .collect();
                self.accumulate(*pred, &d);
                if self.nodes[target.0].needs_grad {
                    let neg: Vec<f64> = d.iter().map(|v| -v).collect();
                    self.accumulate(*target, &neg);
                }
            }
            Op::Bmm { a, b } => {
                let (sa, sb) = (self.shape(*a).to_vec(), self.shape(*b).to_vec());
                let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                if self.nodes[a.0].needs_grad {
                    // dA = dC @ B^T
                    let bt = transpose3(self.data(*b), batch, k, n);
                    let da = kernels::bmm(gy, &bt, batch, m, n, k);
                    self.accumulate(*a, &da);
                }
                if self.nodes[b.0].needs_grad {
                    // dB = A^T @ dC
                    let at = transpose3(self.data(*a), batch, m, k);
                    let db = kernels::bmm(&at, gy, batch, k, m, n);
                    self.accumulate(*b, &db);
                }
            }
            Op::TransposeLast { x } => {
                let s = self.shape(*x).to_vec();
                let d = transpose3(gy, s[0], s[2], s[1]);
                self.accumulate(*x, &d);
            }
            Op::MaskedSoftmax { x, window } => {
                let n = last_dim(self.shape(*x));
                let y = self.nodes[i].value.data();
                let mut d = vec![0.0; gy.len()];
                for (r, ((dr, yr), gr)) in d.chunks_mut(n).zip(y.chunks(n)).zip(gy.chunks(n)).enumerate() {
                    let row = r % n;
                    let lo = (row + 1).saturating_sub(*window);
                    let dot: f64 = (lo..=row).map(|j| yr[j] * gr[j]).sum();
                    for j in lo..=row {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(*x, &d);
            }
            Op::Reshape { x } => {
                self.accumulate(*x, gy);
            }
        }
        self.nodes[i].op = op;
    }

    fn accumulate_opt(&mut self, v: Var, g: Option<Vec<f64>>) {
        if let Some(g) = g {
            self.accumulate(v, &g);
        }
    }
}

fn transpose3(d: &[f64], batch: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; d.len()];
    for b in 0..batch {
        let base = b * rows * cols;
        for r in 0..rows {
            for c in 0..cols {
                out[base + c * rows + r] = d[base + r * cols + c];
            }
        }
    }
    out
}

pub fn smooth_l1_value(d: f64, beta: f64) -> f64 {
    let a = d.abs();
    if a < beta {
        0.5 * d * d / beta
    } else {
        a - 0.5 * beta
    }
}

fn smooth_l1_slope(d: f64, beta: f64) -> f64 {
    if d.abs() < beta {
        d / beta
    } else {
        d.signum()
    }
}
