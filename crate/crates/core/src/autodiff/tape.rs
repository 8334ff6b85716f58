use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Lower clamp applied to `log` inputs.
pub const LOG_FLOOR: f64 = 1e-300;
/// Upper clamp applied to `exp` inputs.
pub const EXP_CEIL: f64 = 700.0;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Softmax(Var, Option<Vec<bool>>),
    LogSoftmax(Var, Option<Vec<bool>>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    MeanRows(Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// Append-only record of an eagerly evaluated computation.
///
/// Every op computes its value immediately; inputs always precede outputs, so
/// the node list is already a topological order.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node that the output depends on.
#[derive(Debug, Clone)]
pub struct Gradients {
    adj: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.adj.get(v.0).and_then(|g| g.as_ref())
    }
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch { op, left: a.shape(), right: b.shape() });
    }
    Ok(())
}

fn check_mask(op: &'static str, x: &Matrix, mask: &Option<Vec<bool>>) -> Result<()> {
    if let Some(m) = mask {
        if m.len() != x.cols {
            return Err(Error::ShapeMismatch { op, left: x.shape(), right: (1, m.len()) });
        }
    }
    Ok(())
}

fn allowed(mask: &Option<Vec<bool>>, j: usize) -> bool {
    mask.as_ref().is_none_or(|m| m[j])
}

fn softmax_rows(x: &Matrix, mask: &Option<Vec<bool>>) -> Matrix {
    let mut out = Matrix::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let row = x.row_slice(r);
        let max = (0..x.cols)
            .filter(|&j| allowed(mask, j))
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..x.cols {
            if allowed(mask, j) {
                let e = (row[j] - max).exp();
                out.data[r * x.cols + j] = e;
                z += e;
            }
        }
        for j in 0..x.cols {
            out.data[r * x.cols + j] /= z;
        }
    }
    out
}

fn log_softmax_rows(x: &Matrix, mask: &Option<Vec<bool>>) -> Matrix {
    let mut out = Matrix::filled(x.rows, x.cols, f64::NEG_INFINITY);
    for r in 0..x.rows {
        let row = x.row_slice(r);
        let max = (0..x.cols)
            .filter(|&j| allowed(mask, j))
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + (0..x.cols)
                .filter(|&j| allowed(mask, j))
                .map(|j| (row[j] - max).exp())
                .sum::<f64>()
                .ln();
        for j in 0..x.cols {
            if allowed(mask, j) {
                out.data[r * x.cols + j] = row[j] - lse;
            }
        }
    }
    out
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

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

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), v, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a, b), v, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b), v, rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        let rg = self.rg(a);
        self.push(Op::Scale(a, k), v, rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// `x + b` with the `1 x c` row `b` repeated over every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xs, bs) = (self.shape(x), self.shape(b));
        if bs.0 != 1 || bs.1 != xs.1 {
            return Err(Error::ShapeMismatch { op: "add_row", left: xs, right: bs });
        }
        let mut v = self.value(x).clone();
        let brow = &self.nodes[b.0].value.data;
        for r in 0..xs.0 {
            for (o, bb) in v.data[r * xs.1..(r + 1) * xs.1].iter_mut().zip(brow) {
                *o += bb;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(Op::AddRow(x, b), v, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::ShapeMismatch { op: "matmul", left: sa, right: sb });
        }
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), v, rg))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(Error::ShapeMismatch { op: "matmul_bt", left: sa, right: sb });
        }
        let v = self.value(a).matmul_bt(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMulBt(a, b), v, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(Op::Transpose(a), v, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(Op::Tanh(a), v, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(Op::Sigmoid(a), v, rg)
    }

    /// `exp(min(x, EXP_CEIL))`.
    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.min(EXP_CEIL).exp());
        let rg = self.rg(a);
        self.push(Op::Exp(a), v, rg)
    }

    /// `ln(max(x, LOG_FLOOR))`.
    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(LOG_FLOOR).ln());
        let rg = self.rg(a);
        self.push(Op::Log(a), v, rg)
    }

    /// `ln(1 + exp(x))`, evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        let rg = self.rg(a);
        self.push(Op::Softplus(a), v, rg)
    }

    /// Row-wise softmax. Columns with `mask[j] == false` get probability 0.
    pub fn softmax(&mut self, a: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        check_mask("softmax", self.value(a), &mask)?;
        let v = softmax_rows(self.value(a), &mask);
        let rg = self.rg(a);
        Ok(self.push(Op::Softmax(a, mask), v, rg))
    }

    /// Row-wise log-softmax. Masked columns evaluate to `-inf`.
    pub fn log_softmax(&mut self, a: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        check_mask("log_softmax", self.value(a), &mask)?;
        let v = log_softmax_rows(self.value(a), &mask);
        let rg = self.rg(a);
        Ok(self.push(Op::LogSoftmax(a, mask), v, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0]).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(parts[0]),
                    right: self.shape(p),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pv = self.value(p);
                v.data[r * cols + off..r * cols + off + pv.cols].copy_from_slice(pv.row_slice(r));
                off += pv.cols;
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::ConcatCols(parts.to_vec()), v, rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(parts[0]),
                    right: self.shape(p),
                });
            }
            data.extend_from_slice(&self.value(p).data);
        }
        let v = Matrix::from_vec(data.len() / cols.max(1), cols, data);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::ConcatRows(parts.to_vec()), v, rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        if start + len > s.1 {
            return Err(Error::ShapeMismatch { op: "slice_cols", left: s, right: (start, len) });
        }
        let src = self.value(a);
        let mut v = Matrix::zeros(s.0, len);
        for r in 0..s.0 {
            v.data[r * len..(r + 1) * len].copy_from_slice(&src.row_slice(r)[start..start + len]);
        }
        let rg = self.rg(a);
        Ok(self.push(Op::SliceCols(a, start, len), v, rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        if start + len > s.0 {
            return Err(Error::ShapeMismatch { op: "slice_rows", left: s, right: (start, len) });
        }
        let v = Matrix::from_vec(len, s.1, self.value(a).data[start * s.1..(start + len) * s.1].to_vec());
        let rg = self.rg(a);
        Ok(self.push(Op::SliceRows(a, start, len), v, rg))
    }

    /// Picks a single element as a `1 x 1` node.
    pub fn element(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        let row = self.slice_rows(a, r, 1)?;
        self.slice_cols(row, c, 1)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(Op::Sum(a), v, rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Matrix::scalar(m.sum() / m.len() as f64);
        let rg = self.rg(a);
        self.push(Op::Mean(a), v, rg)
    }

    /// Sum across columns: `r x c -> r x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Matrix::column((0..m.rows).map(|r| m.row_slice(r).iter().sum()).collect());
        let rg = self.rg(a);
        self.push(Op::SumCols(a), v, rg)
    }

    /// Mean across rows: `r x c -> 1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut v = Matrix::zeros(1, m.cols);
        for r in 0..m.rows {
            for (o, x) in v.data.iter_mut().zip(m.row_slice(r)) {
                *o += x;
            }
        }
        let inv = 1.0 / m.rows as f64;
        v.data.iter_mut().for_each(|x| *x *= inv);
        let rg = self.rg(a);
        self.push(Op::MeanRows(a), v, rg)
    }

    /// Reverse sweep from a scalar output.
    ///
    /// The tape is not modified, so repeated calls return identical results.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let shape = self.shape(out);
        if shape != (1, 1) {
            return Err(Error::NonScalarOutput(shape));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; out.0 + 1];
        adj[out.0] = Some(Matrix::scalar(1.0));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(node, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(Gradients { adj })
    }

    fn accumulate(&self, adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.rg(v) {
            return;
        }
        match &mut adj[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(adj, *a, g.clone());
                self.accumulate(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, g.clone());
                self.accumulate(adj, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(adj, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    self.accumulate(adj, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, k) => self.accumulate(adj, *a, g.map(|x| x * k)),
            Op::AddRow(x, b) => {
                self.accumulate(adj, *x, g.clone());
                if self.rg(*b) {
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, v) in gb.data.iter_mut().zip(g.row_slice(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(adj, *b, gb);
                }
            }
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(adj, *a, g.matmul_bt(self.value(*b)));
                }
                if self.rg(*b) {
                    self.accumulate(adj, *b, self.value(*a).matmul_at(g));
                }
            }
            Op::MatMulBt(a, b) => {
                // y = a b^T: da = g b, db = g^T a
                if self.rg(*a) {
                    self.accumulate(adj, *a, g.matmul(self.value(*b)));
                }
                if self.rg(*b) {
                    self.accumulate(adj, *b, g.matmul_at(self.value(*a)));
                }
            }
            Op::Transpose(a) => self.accumulate(adj, *a, g.transpose()),
            Op::Tanh(a) => self.accumulate(adj, *a, g.zip_map(y, |g, y| g * (1.0 - y * y))),
            Op::Sigmoid(a) => self.accumulate(adj, *a, g.zip_map(y, |g, y| g * y * (1.0 - y))),
            Op::Exp(a) => {
                let x = self.value(*a);
                let mut d = g.zip_map(y, |g, y| g * y);
                for (dv, &xv) in d.data.iter_mut().zip(&x.data) {
                    if xv > EXP_CEIL {
                        *dv = 0.0;
                    }
                }
                self.accumulate(adj, *a, d);
            }
            Op::Log(a) => {
                let x = self.value(*a);
                let d = g.zip_map(x, |g, x| if x >= LOG_FLOOR { g / x } else { 0.0 });
                self.accumulate(adj, *a, d);
            }
            Op::Softplus(a) => {
                let x = self.value(*a);
                self.accumulate(adj, *a, g.zip_map(x, |g, x| g * sigmoid(x)));
            }
            Op::Softmax(a, mask) => {
                let mut d = Matrix::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..y.cols {
                        if allowed(mask, j) {
                            d.data[r * y.cols + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                }
                self.accumulate(adj, *a, d);
            }
            Op::LogSoftmax(a, mask) => {
                let mut d = Matrix::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let gsum: f64 = (0..y.cols).filter(|&j| allowed(mask, j)).map(|j| gr[j]).sum();
                    for j in 0..y.cols {
                        if allowed(mask, j) {
                            d.data[r * y.cols + j] = gr[j] - yr[j].exp() * gsum;
                        }
                    }
                }
                self.accumulate(adj, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pc = self.shape(p).1;
                    if self.rg(p) {
                        let mut d = Matrix::zeros(g.rows, pc);
                        for r in 0..g.rows {
                            d.data[r * pc..(r + 1) * pc].copy_from_slice(&g.row_slice(r)[off..off + pc]);
                        }
                        self.accumulate(adj, p, d);
                    }
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (pr, pc) = self.shape(p);
                    if self.rg(p) {
                        let d = Matrix::from_vec(pr, pc, g.data[off * pc..(off + pr) * pc].to_vec());
                        self.accumulate(adj, p, d);
                    }
                    off += pr;
                }
            }
            Op::SliceCols(a, start, len) => {
                let s = self.shape(*a);
                let mut d = Matrix::zeros(s.0, s.1);
                for r in 0..s.0 {
                    d.data[r * s.1 + start..r * s.1 + start + len].copy_from_slice(g.row_slice(r));
                }
                self.accumulate(adj, *a, d);
            }
            Op::SliceRows(a, start, len) => {
                let s = self.shape(*a);
                let mut d = Matrix::zeros(s.0, s.1);
                d.data[start * s.1..(start + len) * s.1].copy_from_slice(&g.data);
                self.accumulate(adj, *a, d);
            }
            Op::Sum(a) => {
                let s = self.shape(*a);
                self.accumulate(adj, *a, Matrix::filled(s.0, s.1, g.data[0]));
            }
            Op::Mean(a) => {
                let s = self.shape(*a);
                let k = g.data[0] / (s.0 * s.1) as f64;
                self.accumulate(adj, *a, Matrix::filled(s.0, s.1, k));
            }
            Op::SumCols(a) => {
                let s = self.shape(*a);
                let mut d = Matrix::zeros(s.0, s.1);
                for r in 0..s.0 {
                    d.data[r * s.1..(r + 1) * s.1].iter_mut().for_each(|x| *x = g.data[r]);
                }
                self.accumulate(adj, *a, d);
            }
            Op::MeanRows(a) => {
                let s = self.shape(*a);
                let inv = 1.0 / s.0 as f64;
                let mut d = Matrix::zeros(s.0, s.1);
                for r in 0..s.0 {
                    for (o, gv) in d.data[r * s.1..(r + 1) * s.1].iter_mut().zip(&g.data) {
                        *o = gv * inv;
                    }
                }
                self.accumulate(adj, *a, d);
            }
        }
    }
}
