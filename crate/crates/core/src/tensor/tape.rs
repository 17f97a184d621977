//! Reverse-mode automatic differentiation over row-major matrices.
//!
//! A [`Tape`] records every operation in execution order, so node inputs
//! always precede the node itself. [`Tape::backward`] consumes the tape and
//! returns the gradient of a 1x1 loss with respect to every node that
//! depends on a `requires_grad` leaf.

use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean over rows of `-sum(target * ln(prediction))`; predictions are probability rows.
    CrossEntropy,
    /// Mean squared error over all elements.
    Mse,
    /// Mean binary cross-entropy over all elements; predictions must lie in (0, 1).
    Bce,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddConst(Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, inv_std: Vec<f64> },
    BatchNormCols { x: Var, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    SliceRows { x: Var, start: usize },
    MeanRows(Var),
    Sum(Var),
    Gather { table: Var, ids: Vec<usize> },
    SoftmaxCrossEntropy { logits: Var, probs: Vec<f64>, targets: Vec<Option<usize>>, count: usize },
    BceWithLogits { logits: Var, targets: Vec<f64> },
    Loss { kind: LossKind, pred: Var, target: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: (usize, usize), b: (usize, usize)) -> TensorError {
    TensorError::ShapeMismatch { op, left: vec![a.0, a.1], right: vec![b.0, b.1] }
}

/// Large negative logit used to switch attention entries off.
pub const MASKED_LOGIT: f64 = -1e9;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { rows, cols, value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Copies a tensor onto the tape as a leaf, keeping its `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> Result<Var, TensorError> {
        let (r, c) = t.dims2()?;
        Ok(self.push(r, c, t.values().to_vec(), Op::Leaf, t.requires_grad))
    }

    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Var, TensorError> {
        if values.len() != rows * cols {
            return Err(mismatch("constant", (rows, cols), (1, values.len())));
        }
        Ok(self.push(rows, cols, values, Op::Leaf, false))
    }

    fn unary(&mut self, x: Var, value: Vec<f64>, op: Op) -> Var {
        let (r, c) = self.shape(x);
        let g = self.node(x).needs_grad;
        self.push(r, c, value, op, g)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        if k != k2 {
            return Err(mismatch("matmul", (n, k), (k2, m)));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let s = av[i * k + p];
                if s == 0.0 {
                    continue;
                }
                let brow = &bv[p * m..(p + 1) * m];
                for (o, bb) in row.iter_mut().zip(brow) {
                    *o += s * bb;
                }
            }
        }
        let g = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(n, m, out, Op::MatMul(a, b), g))
    }

    /// `a * b^T` for `a: n x k`, `b: m x k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (n, k) = self.shape(a);
        let (m, k2) = self.shape(b);
        if k != k2 {
            return Err(mismatch("matmul_t", (n, k), (m, k2)));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = &av[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &bv[j * k..(j + 1) * k];
                out[i * m + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        let g = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(n, m, out, Op::MatMulT(a, b), g))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let v = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v[i * c + j];
            }
        }
        let g = self.node(x).needs_grad;
        self.push(c, r, out, Op::Transpose(x), g)
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, TensorError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(mismatch(name, sa, sb));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        let g = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(sa.0, sa.1, out, op, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(&mut self, x: Var, row: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, TensorError> {
        let (r, c) = self.shape(x);
        let sb = self.shape(row);
        if sb != (1, c) {
            return Err(mismatch(name, (r, c), sb));
        }
        let bv = self.value(row);
        let out = self.value(x).chunks(c).flat_map(|xr| xr.iter().zip(bv).map(|(a, b)| f(*a, *b))).collect();
        let g = self.node(x).needs_grad || self.node(row).needs_grad;
        Ok(self.push(r, c, out, op, g))
    }

    /// Adds a `1 x c` bias row to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        self.row_broadcast(x, bias, "add_row", |a, b| a + b, Op::AddRow(x, bias))
    }

    /// Multiplies every row of `x` elementwise by a `1 x c` gain row.
    pub fn mul_row(&mut self, x: Var, gain: Var) -> Result<Var, TensorError> {
        self.row_broadcast(x, gain, "mul_row", |a, b| a * b, Op::MulRow(x, gain))
    }

    /// Adds a constant (non-differentiable) matrix, e.g. an attention mask.
    pub fn add_const(&mut self, x: Var, c: &[f64]) -> Result<Var, TensorError> {
        let (r, cols) = self.shape(x);
        if c.len() != r * cols {
            return Err(mismatch("add_const", (r, cols), (1, c.len())));
        }
        let out = self.value(x).iter().zip(c).map(|(a, b)| a + b).collect();
        Ok(self.unary(x, out, Op::AddConst(x)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * s).collect();
        self.unary(x, out, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| v.max(0.0)).collect();
        self.unary(x, out, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| sigmoid(*v)).collect();
        self.unary(x, out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        self.unary(x, out, Op::Tanh(x))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (_, c) = self.shape(x);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(c) {
            softmax_in_place(row);
        }
        self.unary(x, out, Op::SoftmaxRows(x))
    }

    /// Normalises each row to zero mean and unit (biased) variance.
    pub fn layer_norm_rows(&mut self, x: Var, eps: f64) -> Var {
        let (r, c) = self.shape(x);
        let mut out = self.value(x).to_vec();
        let mut inv_std = Vec::with_capacity(r);
        for row in out.chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * s);
            inv_std.push(s);
        }
        self.unary(x, out, Op::LayerNormRows { x, inv_std })
    }

    /// Training-mode batch normalisation: each column is normalised with the
    /// batch mean and biased variance over rows. Returns the normalised values
    /// together with the batch mean and variance for running statistics.
    pub fn batch_norm_cols(&mut self, x: Var, eps: f64) -> (Var, Vec<f64>, Vec<f64>) {
        let (r, c) = self.shape(x);
        let xv = self.value(x);
        let mut mean = vec![0.0; c];
        for row in xv.chunks(c) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / r as f64);
        }
        let mut var = vec![0.0; c];
        for row in xv.chunks(c) {
            for j in 0..c {
                var[j] += (row[j] - mean[j]).powi(2) / r as f64;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = xv
            .chunks(c)
            .flat_map(|row| (0..c).map(|j| (row[j] - mean[j]) * inv_std[j]).collect::<Vec<_>>())
            .collect();
        let v = self.unary(x, out, Op::BatchNormCols { x, inv_std });
        (v, mean, var)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let r = self.shape(parts[0]).0;
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            if s.0 != r {
                return Err(mismatch("concat_cols", (r, total), s));
            }
            total += s.1;
        }
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                let c = self.shape(*p).1;
                out.extend_from_slice(&self.value(*p)[i * c..(i + 1) * c]);
            }
        }
        let g = parts.iter().any(|p| self.node(*p).needs_grad);
        Ok(self.push(r, total, out, Op::ConcatCols(parts.to_vec()), g))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (r, c) = self.shape(x);
        if start + len > c || len == 0 {
            return Err(mismatch("slice_cols", (r, c), (start, len)));
        }
        let v = self.value(x);
        let out = (0..r).flat_map(|i| v[i * c + start..i * c + start + len].to_vec()).collect();
        let g = self.node(x).needs_grad;
        Ok(self.push(r, len, out, Op::SliceCols { x, start }, g))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let c = self.shape(parts[0]).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for p in parts {
            let s = self.shape(*p);
            if s.1 != c {
                return Err(mismatch("concat_rows", (rows, c), s));
            }
            rows += s.0;
            out.extend_from_slice(self.value(*p));
        }
        let g = parts.iter().any(|p| self.node(*p).needs_grad);
        Ok(self.push(rows, c, out, Op::ConcatRows(parts.to_vec()), g))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (r, c) = self.shape(x);
        if start + len > r || len == 0 {
            return Err(mismatch("slice_rows", (r, c), (start, len)));
        }
        let out = self.value(x)[start * c..(start + len) * c].to_vec();
        let g = self.node(x).needs_grad;
        Ok(self.push(len, c, out, Op::SliceRows { x, start }, g))
    }

    /// Column means over all rows, as a `1 x c` row.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let mut out = vec![0.0; c];
        for row in self.value(x).chunks(c) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= r as f64);
        let g = self.node(x).needs_grad;
        self.push(1, c, out, Op::MeanRows(x), g)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let g = self.node(x).needs_grad;
        self.push(1, 1, vec![s], Op::Sum(x), g)
    }

    /// Rows `ids` of `table`, in order (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let (r, c) = self.shape(table);
        if let Some(bad) = ids.iter().find(|i| **i >= r) {
            return Err(mismatch("gather_rows", (r, c), (*bad, 1)));
        }
        if ids.is_empty() {
            return Err(mismatch("gather_rows", (r, c), (0, 0)));
        }
        let v = self.value(table);
        let out = ids.iter().flat_map(|&i| v[i * c..(i + 1) * c].to_vec()).collect();
        let g = self.node(table).needs_grad;
        Ok(self.push(ids.len(), c, out, Op::Gather { table, ids: ids.to_vec() }, g))
    }

    /// Mean cross-entropy of row-wise softmax(`logits`) against class ids.
    /// Rows whose target is `None` are ignored (padding).
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var, TensorError> {
        let (r, c) = self.shape(logits);
        if targets.len() != r {
            return Err(mismatch("softmax_cross_entropy", (r, c), (targets.len(), 1)));
        }
        let mut probs = self.value(logits).to_vec();
        let mut total = 0.0;
        let mut count = 0;
        for (row, (p, t)) in self.value(logits).chunks(c).zip(probs.chunks_mut(c).zip(targets)) {
            softmax_in_place(p);
            if let Some(k) = *t {
                if k >= c {
                    return Err(mismatch("softmax_cross_entropy target", (r, c), (k, 1)));
                }
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += lse - row[k];
                count += 1;
            }
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        let g = self.node(logits).needs_grad;
        Ok(self.push(1, 1, vec![loss], Op::SoftmaxCrossEntropy { logits, probs, targets: targets.to_vec(), count }, g))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`, computed stably.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var, TensorError> {
        let (r, c) = self.shape(logits);
        if targets.len() != r * c {
            return Err(mismatch("bce_with_logits", (r, c), (targets.len(), 1)));
        }
        let n = (r * c) as f64;
        // softplus(z) - t*z == -[t ln s + (1-t) ln(1-s)]
        let loss = self
            .value(logits)
            .iter()
            .zip(targets)
            .map(|(z, t)| z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z)
            .sum::<f64>()
            / n;
        let g = self.node(logits).needs_grad;
        Ok(self.push(1, 1, vec![loss], Op::BceWithLogits { logits, targets: targets.to_vec() }, g))
    }

    /// Mean-per-sample loss of `prediction` against a constant `target`.
    pub fn loss(&mut self, kind: LossKind, prediction: Var, target: &[f64]) -> Result<Var, TensorError> {
        let (r, c) = self.shape(prediction);
        if target.len() != r * c {
            return Err(mismatch("loss", (r, c), (target.len(), 1)));
        }
        let p = self.value(prediction);
        let value = match kind {
            LossKind::CrossEntropy => {
                -p.iter().zip(target).map(|(p, t)| if *t == 0.0 { 0.0 } else { t * p.max(f64::MIN_POSITIVE).ln() }).sum::<f64>()
                    / r as f64
            }
            LossKind::Mse => p.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / (r * c) as f64,
            LossKind::Bce => {
                if let Some(bad) = p.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
                    return Err(TensorError::DomainError(format!("BCE prediction {bad} outside (0, 1)")));
                }
                -p.iter().zip(target).map(|(p, t)| t * p.ln() + (1.0 - t) * (1.0 - p).ln()).sum::<f64>() / (r * c) as f64
            }
        };
        let g = self.node(prediction).needs_grad;
        Ok(self.push(1, 1, vec![value], Op::Loss { kind, pred: prediction, target: target.to_vec() }, g))
    }

    /// Back-propagates from a 1x1 `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, TensorError> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(TensorError::NotScalar(vec![r, c]));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            backprop_node(&nodes, node, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        let grads = grads.into_iter().zip(&nodes).map(|(g, n)| g.filter(|_| n.needs_grad)).collect();
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], v: Var, f: impl FnOnce(&mut [f64])) {
    if !nodes[v.0].needs_grad {
        return;
    }
    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
    f(slot);
}

fn backprop_node(nodes: &[Node], node: &Node, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let (rows, cols) = (node.rows, node.cols);
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (n, k) = (nodes[a.0].rows, nodes[a.0].cols);
            let m = cols;
            let av = &nodes[a.0].value;
            let bv = &nodes[b.0].value;
            accumulate(grads, nodes, *a, |ga| {
                for i in 0..n {
                    let drow = &dy[i * m..(i + 1) * m];
                    for p in 0..k {
                        let brow = &bv[p * m..(p + 1) * m];
                        ga[i * k + p] += drow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            });
            accumulate(grads, nodes, *b, |gb| {
                for i in 0..n {
                    let drow = &dy[i * m..(i + 1) * m];
                    for p in 0..k {
                        let s = av[i * k + p];
                        if s == 0.0 {
                            continue;
                        }
                        for (g, d) in gb[p * m..(p + 1) * m].iter_mut().zip(drow) {
                            *g += s * d;
                        }
                    }
                }
            });
        }
        Op::MatMulT(a, b) => {
            let (n, k) = (nodes[a.0].rows, nodes[a.0].cols);
            let m = cols;
            let av = &nodes[a.0].value;
            let bv = &nodes[b.0].value;
            accumulate(grads, nodes, *a, |ga| {
                for i in 0..n {
                    for j in 0..m {
                        let d = dy[i * m + j];
                        if d == 0.0 {
                            continue;
                        }
                        for (g, bb) in ga[i * k..(i + 1) * k].iter_mut().zip(&bv[j * k..(j + 1) * k]) {
                            *g += d * bb;
                        }
                    }
                }
            });
            accumulate(grads, nodes, *b, |gb| {
                for i in 0..n {
                    for j in 0..m {
                        let d = dy[i * m + j];
                        if d == 0.0 {
                            continue;
                        }
                        for (g, aa) in gb[j * k..(j + 1) * k].iter_mut().zip(&av[i * k..(i + 1) * k]) {
                            *g += d * aa;
                        }
                    }
                }
            });
        }
        Op::Transpose(x) => accumulate(grads, nodes, *x, |gx| {
            // node is cols x rows of x; dy is rows(node) x cols(node)
            for i in 0..rows {
                for j in 0..cols {
                    gx[j * rows + i] += dy[i * cols + j];
                }
            }
        }),
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d));
            accumulate(grads, nodes, *b, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d));
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d));
            accumulate(grads, nodes, *b, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g -= d));
        }
        Op::Mul(a, b) => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            accumulate(grads, nodes, *a, |g| {
                for (i, g) in g.iter_mut().enumerate() {
                    *g += dy[i] * bv[i];
                }
            });
            accumulate(grads, nodes, *b, |g| {
                for (i, g) in g.iter_mut().enumerate() {
                    *g += dy[i] * av[i];
                }
            });
        }
        Op::AddRow(x, bias) => {
            accumulate(grads, nodes, *x, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d));
            accumulate(grads, nodes, *bias, |g| {
                for row in dy.chunks(cols) {
                    g.iter_mut().zip(row).for_each(|(g, d)| *g += d);
                }
            });
        }
        Op::MulRow(x, gain) => {
            let (xv, gv) = (&nodes[x.0].value, &nodes[gain.0].value);
            accumulate(grads, nodes, *x, |g| {
                for (i, g) in g.iter_mut().enumerate() {
                    *g += dy[i] * gv[i % cols];
                }
            });
            accumulate(grads, nodes, *gain, |g| {
                for (i, d) in dy.iter().enumerate() {
                    g[i % cols] += d * xv[i];
                }
            });
        }
        Op::AddConst(x) => accumulate(grads, nodes, *x, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d)),
        Op::Scale(x, s) => accumulate(grads, nodes, *x, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += s * d)),
        Op::Relu(x) => {
            let xv = &nodes[x.0].value;
            accumulate(grads, nodes, *x, |g| {
                for (i, g) in g.iter_mut().enumerate() {
                    if xv[i] > 0.0 {
                        *g += dy[i];
                    }
                }
            });
        }
        Op::Sigmoid(x) => {
            let y = &node.value;
            accumulate(grads, nodes, *x, |g| {
                for (i, g) in g.iter_mut().enumerate() {
                    *g += dy[i] * y[i] * (1.0 - y[i]);
                }
            });
        }
        Op::Tanh(x) => {
            let y = &node.value;
            accumulate(grads, nodes, *x, |g| {
                for (i, g) in g.iter_mut().enumerate() {
                    *g += dy[i] * (1.0 - y[i] * y[i]);
                }
            });
        }
        Op::SoftmaxRows(x) => {
            let y = &node.value;
            accumulate(grads, nodes, *x, |g| {
                for ((gr, yr), dr) in g.chunks_mut(cols).zip(y.chunks(cols)).zip(dy.chunks(cols)) {
                    let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        gr[j] += yr[j] * (dr[j] - dot);
                    }
                }
            });
        }
        Op::LayerNormRows { x, inv_std } => {
            let xhat = &node.value;
            let n = cols as f64;
            accumulate(grads, nodes, *x, |g| {
                for (r, ((gr, xr), dr)) in g.chunks_mut(cols).zip(xhat.chunks(cols)).zip(dy.chunks(cols)).enumerate() {
                    let sum_d: f64 = dr.iter().sum();
                    let sum_dx: f64 = dr.iter().zip(xr).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        gr[j] += inv_std[r] / n * (n * dr[j] - sum_d - xr[j] * sum_dx);
                    }
                }
            });
        }
        Op::BatchNormCols { x, inv_std } => {
            let xhat = &node.value;
            let n = rows as f64;
            accumulate(grads, nodes, *x, |g| {
                for j in 0..cols {
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for i in 0..rows {
                        sum_d += dy[i * cols + j];
                        sum_dx += dy[i * cols + j] * xhat[i * cols + j];
                    }
                    for i in 0..rows {
                        let k = i * cols + j;
                        g[k] += inv_std[j] / n * (n * dy[k] - sum_d - xhat[k] * sum_dx);
                    }
                }
            });
        }
        Op::ConcatCols(parts) => {
            let mut offset = 0;
            for p in parts {
                let pc = nodes[p.0].cols;
                accumulate(grads, nodes, *p, |g| {
                    for i in 0..rows {
                        for j in 0..pc {
                            g[i * pc + j] += dy[i * cols + offset + j];
                        }
                    }
                });
                offset += pc;
            }
        }
        Op::SliceCols { x, start } => {
            let xc = nodes[x.0].cols;
            accumulate(grads, nodes, *x, |g| {
                for i in 0..rows {
                    for j in 0..cols {
                        g[i * xc + start + j] += dy[i * cols + j];
                    }
                }
            });
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let len = nodes[p.0].value.len();
                accumulate(grads, nodes, *p, |g| g.iter_mut().zip(&dy[offset..offset + len]).for_each(|(g, d)| *g += d));
                offset += len;
            }
        }
        Op::SliceRows { x, start } => accumulate(grads, nodes, *x, |g| {
            g[start * cols..(start + rows) * cols].iter_mut().zip(dy).for_each(|(g, d)| *g += d);
        }),
        Op::MeanRows(x) => {
            let xr = nodes[x.0].rows as f64;
            accumulate(grads, nodes, *x, |g| {
                for row in g.chunks_mut(cols) {
                    row.iter_mut().zip(dy).for_each(|(g, d)| *g += d / xr);
                }
            });
        }
        Op::Sum(x) => accumulate(grads, nodes, *x, |g| g.iter_mut().for_each(|g| *g += dy[0])),
        Op::Gather { table, ids } => accumulate(grads, nodes, *table, |g| {
            for (r, &id) in ids.iter().enumerate() {
                for j in 0..cols {
                    g[id * cols + j] += dy[r * cols + j];
                }
            }
        }),
        Op::SoftmaxCrossEntropy { logits, probs, targets, count } => {
            if *count == 0 {
                return;
            }
            let c = nodes[logits.0].cols;
            let scale = dy[0] / *count as f64;
            accumulate(grads, nodes, *logits, |g| {
                for (r, t) in targets.iter().enumerate() {
                    if let Some(k) = t {
                        for j in 0..c {
                            let onehot = if j == *k { 1.0 } else { 0.0 };
                            g[r * c + j] += scale * (probs[r * c + j] - onehot);
                        }
                    }
                }
            });
        }
        Op::BceWithLogits { logits, targets } => {
            let z = &nodes[logits.0].value;
            let scale = dy[0] / z.len() as f64;
            accumulate(grads, nodes, *logits, |g| {
                for i in 0..z.len() {
                    g[i] += scale * (sigmoid(z[i]) - targets[i]);
                }
            });
        }
        Op::Loss { kind, pred, target } => {
            let p = &nodes[pred.0].value;
            let pr = nodes[pred.0].rows as f64;
            let n = p.len() as f64;
            accumulate(grads, nodes, *pred, |g| {
                for i in 0..p.len() {
                    let t = target[i];
                    g[i] += dy[0]
                        * match kind {
                            LossKind::CrossEntropy => {
                                if t == 0.0 {
                                    0.0
                                } else {
                                    -t / (p[i].max(f64::MIN_POSITIVE) * pr)
                                }
                            }
                            LossKind::Mse => 2.0 * (p[i] - t) / n,
                            LossKind::Bce => (-t / p[i] + (1.0 - t) / (1.0 - p[i])) / n,
                        };
                }
            });
        }
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` if `v` does not depend on any parameter.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
