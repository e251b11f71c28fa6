use super::gemm::gemm;
use super::{Result, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Reshape(Var),
    BatchedVecMat(Var, Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run tape for reverse-mode differentiation.
///
/// Nodes are appended in creation order, which is already a topological
/// order, so `backward` walks the tape once from the end.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// How a right-hand operand lines up with the left-hand one.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Layout {
    Same,
    RowBroadcast,
}

fn layout(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Layout> {
    if a.shape() == b.shape() {
        return Ok(Layout::Same);
    }
    if b.rows() == 1 && b.cols() == a.cols() && b.numel() > 0 {
        return Ok(Layout::RowBroadcast);
    }
    if a.numel() == b.numel() && a.cols() == b.cols() {
        return Ok(Layout::Same);
    }
    Err(TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    })
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient, `None` if nothing reached the node.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Gradient as a tensor shaped like the node, zeros if untouched.
    pub fn grad_tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor::new(node.value.shape().to_vec(), g.clone()).expect("gradient buffer matches node shape"),
            None => Tensor::zeros(node.value.shape()),
        }
    }

    /// Sign pattern (`x > 0`) of every ReLU input on the tape, in tape order.
    pub fn relu_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(a) = n.op {
                sig.extend(self.nodes[a.0].value.data().iter().map(|&x| x > 0.0));
            }
        }
        sig
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = (av.rows(), av.cols());
        let (k2, n) = (bv.rows(), bv.cols());
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let lay = layout(name, av, bv)?;
        let data: Vec<f64> = match lay {
            Layout::Same => av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect(),
            Layout::RowBroadcast => {
                let c = av.cols();
                av.data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, bv.data()[i % c]))
                    .collect()
            }
        };
        let t = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, op, rg))
    }

    /// Elementwise sum; `b` may also be a single row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product; `b` may also be a single row broadcast over `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    /// `max(0, x)`, with subgradient 0 at exactly 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    /// Clip into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let n = v.numel().max(1) as f64;
        let s = v.data().iter().sum::<f64>() / n;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Sum over the last dimension: `[m, n] -> [m, 1]`.
    pub fn sum_last(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let (m, c) = (v.rows(), v.cols());
        let data: Vec<f64> = (0..m).map(|i| v.row_slice(i).iter().sum()).collect();
        let t = Tensor::new(vec![m, 1], data).expect("row sums");
        let rg = self.rg(a);
        let _ = c;
        self.push(t, Op::SumLast(a), rg)
    }

    /// Concatenate along the last dimension; all parts need equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let m = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != m {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: self.value(*first).shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            cols += v.cols();
        }
        let mut data = Vec::with_capacity(m * cols);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let t = Tensor::new(vec![m, cols], data)?;
        Ok(self.push(t, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..end` of the last dimension.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a);
        let (m, c) = (v.rows(), v.cols());
        if start > end || end > c {
            return Err(TensorError::Invalid {
                op: "slice",
                msg: format!("range {start}..{end} out of bounds for {c} columns"),
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&v.row_slice(i)[start..end]);
        }
        let rg = self.rg(a);
        let t = Tensor::new(vec![m, w], data)?;
        Ok(self.push(t, Op::Slice(a, start), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape.to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Row-wise vector-matrix product with one matrix per row.
    ///
    /// `x` is `[n, d_in]` and `w` is `[n, d_in * d_out]`, where row `r` of
    /// `w` holds a row-major `d_in x d_out` matrix. Returns `[n, d_out]`.
    pub fn batched_vecmat(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, din) = (xv.rows(), xv.cols());
        let mismatch = || TensorError::ShapeMismatch {
            op: "batched_vecmat",
            lhs: xv.shape().to_vec(),
            rhs: wv.shape().to_vec(),
        };
        if wv.rows() != n || din == 0 || wv.cols() % din != 0 {
            return Err(mismatch());
        }
        let dout = wv.cols() / din;
        let mut out = vec![0.0; n * dout];
        for r in 0..n {
            let xr = xv.row_slice(r);
            let wr = wv.row_slice(r);
            let o = &mut out[r * dout..(r + 1) * dout];
            for (i, &xi) in xr.iter().enumerate() {
                let wrow = &wr[i * dout..(i + 1) * dout];
                for (oj, &wij) in o.iter_mut().zip(wrow) {
                    *oj += xi * wij;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w);
        let t = Tensor::new(vec![n, dout], out)?;
        Ok(self.push(t, Op::BatchedVecMat(x, w), rg))
    }

    /// Reverse pass from a single-element loss.
    ///
    /// Leaf gradients accumulate across calls until [`Graph::zero_grad`];
    /// intermediate gradients always reflect the latest call only.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let v = self.value(loss);
        if v.numel() != 1 {
            return Err(TensorError::NonScalarLoss(v.shape().to_vec()));
        }
        self.backward_with_seed(loss, &[1.0])
    }

    /// Reverse pass seeded with an arbitrary output cotangent.
    pub fn backward_with_seed(&mut self, out: Var, seed: &[f64]) -> Result<()> {
        if seed.len() != self.value(out).numel() {
            return Err(TensorError::ShapeMismatch {
                op: "backward_with_seed",
                lhs: self.value(out).shape().to_vec(),
                rhs: vec![seed.len()],
            });
        }
        for n in &mut self.nodes[..=out.0] {
            if !matches!(n.op, Op::Leaf) {
                n.grad = None;
            }
        }
        if !self.rg(out) {
            return Ok(());
        }
        accumulate(&mut self.nodes[out.0].grad, seed);
        for i in (0..=out.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = node.grad.as_deref() else {
                continue;
            };
            propagate(before, node, g);
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    match slot {
        Some(buf) => buf.iter_mut().zip(delta).for_each(|(b, d)| *b += d),
        None => *slot = Some(delta.to_vec()),
    }
}

fn accumulate_with(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    f(buf);
}

/// Pushes `g` (the node's output gradient) into the node's parents.
fn propagate(before: &mut [Node], node: &Node, g: &[f64]) {
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, n) = (out.rows(), out.cols());
            let k = before[a.0].value.cols();
            if before[a.0].requires_grad {
                let bdata = before[b.0].value.data().to_vec();
                accumulate_with(&mut before[a.0].grad, m * k, |ga| {
                    gemm(m, n, k, g, false, &bdata, true, 1.0, ga)
                });
            }
            if before[b.0].requires_grad {
                let adata = before[a.0].value.data().to_vec();
                accumulate_with(&mut before[b.0].grad, k * n, |gb| {
                    gemm(k, m, n, &adata, true, g, false, 1.0, gb)
                });
            }
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if before[a.0].requires_grad {
                accumulate(&mut before[a.0].grad, g);
            }
            if before[b.0].requires_grad {
                let bn = before[b.0].value.numel();
                accumulate_with(&mut before[b.0].grad, bn, |gb| {
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % bn] += sign * gi;
                    }
                });
            }
        }
        Op::Mul(a, b) => {
            let bn = before[b.0].value.numel();
            if before[a.0].requires_grad {
                let bdata = before[b.0].value.data().to_vec();
                accumulate_with(&mut before[a.0].grad, g.len(), |ga| {
                    for (i, gi) in g.iter().enumerate() {
                        ga[i] += gi * bdata[i % bn];
                    }
                });
            }
            if before[b.0].requires_grad {
                let adata = before[a.0].value.data().to_vec();
                accumulate_with(&mut before[b.0].grad, bn, |gb| {
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % bn] += gi * adata[i];
                    }
                });
            }
        }
        Op::Scale(a, c) => {
            if before[a.0].requires_grad {
                accumulate_with(&mut before[a.0].grad, g.len(), |ga| {
                    ga.iter_mut().zip(g).for_each(|(x, gi)| *x += c * gi)
                });
            }
        }
        Op::AddScalar(a) | Op::Reshape(a) => {
            if before[a.0].requires_grad {
                accumulate(&mut before[a.0].grad, g);
            }
        }
        Op::Relu(a) => {
            if before[a.0].requires_grad {
                let x = before[a.0].value.data().to_vec();
                accumulate_with(&mut before[a.0].grad, g.len(), |ga| {
                    for i in 0..g.len() {
                        if x[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                });
            }
        }
        Op::Tanh(a) => {
            if before[a.0].requires_grad {
                let y = out.data();
                accumulate_with(&mut before[a.0].grad, g.len(), |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                });
            }
        }
        Op::Exp(a) => {
            if before[a.0].requires_grad {
                let y = out.data();
                accumulate_with(&mut before[a.0].grad, g.len(), |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i];
                    }
                });
            }
        }
        Op::Log(a) => {
            if before[a.0].requires_grad {
                let x = before[a.0].value.data().to_vec();
                accumulate_with(&mut before[a.0].grad, g.len(), |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] / x[i];
                    }
                });
            }
        }
        Op::Clamp(a, lo, hi) => {
            if before[a.0].requires_grad {
                let x = before[a.0].value.data().to_vec();
                accumulate_with(&mut before[a.0].grad, g.len(), |ga| {
                    for i in 0..g.len() {
                        if x[i] >= *lo && x[i] <= *hi {
                            ga[i] += g[i];
                        }
                    }
                });
            }
        }
        Op::Sum(a) | Op::Mean(a) => {
            if before[a.0].requires_grad {
                let n = before[a.0].value.numel();
                let d = if matches!(node.op, Op::Mean(_)) {
                    g[0] / n.max(1) as f64
                } else {
                    g[0]
                };
                accumulate_with(&mut before[a.0].grad, n, |ga| ga.iter_mut().for_each(|x| *x += d));
            }
        }
        Op::SumLast(a) => {
            if before[a.0].requires_grad {
                let c = before[a.0].value.cols();
                let n = before[a.0].value.numel();
                accumulate_with(&mut before[a.0].grad, n, |ga| {
                    for (i, x) in ga.iter_mut().enumerate() {
                        *x += g[i / c];
                    }
                });
            }
        }
        Op::Concat(parts) => {
            let total = out.cols();
            let mut offset = 0;
            for p in parts {
                let c = before[p.0].value.cols();
                if before[p.0].requires_grad {
                    let n = before[p.0].value.numel();
                    accumulate_with(&mut before[p.0].grad, n, |gp| {
                        for (i, x) in gp.iter_mut().enumerate() {
                            let (r, j) = (i / c, i % c);
                            *x += g[r * total + offset + j];
                        }
                    });
                }
                offset += c;
            }
        }
        Op::Slice(a, start) => {
            if before[a.0].requires_grad {
                let c = before[a.0].value.cols();
                let n = before[a.0].value.numel();
                let w = out.cols();
                accumulate_with(&mut before[a.0].grad, n, |ga| {
                    for (i, gi) in g.iter().enumerate() {
                        let (r, j) = (i / w, i % w);
                        ga[r * c + start + j] += gi;
                    }
                });
            }
        }
        Op::BatchedVecMat(x, w) => {
            let (n, dout) = (out.rows(), out.cols());
            let din = before[x.0].value.cols();
            if before[x.0].requires_grad {
                let wdata = before[w.0].value.data().to_vec();
                accumulate_with(&mut before[x.0].grad, n * din, |gx| {
                    for r in 0..n {
                        let gr = &g[r * dout..(r + 1) * dout];
                        let wr = &wdata[r * din * dout..(r + 1) * din * dout];
                        for i in 0..din {
                            let wrow = &wr[i * dout..(i + 1) * dout];
                            gx[r * din + i] += gr.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                });
            }
            if before[w.0].requires_grad {
                let xdata = before[x.0].value.data().to_vec();
                accumulate_with(&mut before[w.0].grad, n * din * dout, |gw| {
                    for r in 0..n {
                        let gr = &g[r * dout..(r + 1) * dout];
                        for i in 0..din {
                            let xi = xdata[r * din + i];
                            let dst = &mut gw[(r * din + i) * dout..(r * din + i + 1) * dout];
                            for (d, gj) in dst.iter_mut().zip(gr) {
                                *d += xi * gj;
                            }
                        }
                    }
                });
            }
        }
    }
}
