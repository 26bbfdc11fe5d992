use std::collections::HashMap;

use super::{GraphError, Gradients, ParamId, ParamStore, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Reduction axis for [`Graph::softmax`] and [`Graph::concat`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Axis 0: down each column.
    Rows,
    /// Axis 1: along each row.
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScaleBy(Var, Var),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var, Axis),
    Concat(Vec<Var>, Axis),
    Embed(Var, usize),
    SliceRows(Var, usize),
    Column(Var, usize),
    Scatter(Var, Vec<usize>),
    Pick(Var, usize),
    Log(Var),
    Sum(Var),
    CrossEntropy(Var, usize),
    Mask(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    needs_grad: bool,
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::ScaleBy(a, b) => vec![*a, *b],
            Op::Concat(parts, _) => parts.clone(),
            Op::Transpose(a)
            | Op::OneMinus(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Softmax(a, _)
            | Op::Embed(a, _)
            | Op::SliceRows(a, _)
            | Op::Column(a, _)
            | Op::Scatter(a, _)
            | Op::Pick(a, _)
            | Op::Log(a)
            | Op::Sum(a)
            | Op::CrossEntropy(a, _)
            | Op::Mask(a, _) => vec![*a],
        }
    }
}

type Result<T> = std::result::Result<T, GraphError>;

/// Append-only tape of operations over a read-only parameter store.
///
/// Node indices are a topological order, so the backward pass is a single
/// reverse sweep.
pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c (m x n) = beta * c + a (m x k) * b (k x n)` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: isize, csa: isize, b: &[f64], rsb: isize, csb: isize, c: &mut [f64], beta: f64) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices whose lengths cover every strided access
    // for the given dimensions.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

fn softmax_in_place(x: &mut [f64], stride: usize, count: usize, offset: usize) {
    let idx = |i: usize| offset + i * stride;
    let max = (0..count).map(|i| x[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for i in 0..count {
        let e = (x[idx(i)] - max).exp();
        x[idx(i)] = e;
        sum += e;
    }
    for i in 0..count {
        x[idx(i)] /= sum;
    }
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self { store, nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        let needs_grad = matches!(op, Op::Param(_)) || op.inputs().iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { op, rows, cols, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.store.get(id).data(),
            _ => &self.nodes[v.0].value,
        }
    }

    /// Whether any parameter feeds into `v`.
    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        [self.nodes[v.0].rows, self.nodes[v.0].cols]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let [r, c] = self.shape(v);
        Tensor::from_vec(r, c, self.value(v).to_vec())
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        match self.shape(v) {
            [1, 1] => Ok(self.value(v)[0]),
            s => Err(GraphError::NotScalar(s)),
        }
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let [r, c] = t.shape();
        self.push(Op::Constant, r, c, t.data().to_vec())
    }

    pub fn column(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(Op::Constant, n, 1, data)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(Op::Constant, rows, cols, vec![0.0; rows * cols])
    }

    /// Leaf node reading a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let [r, c] = self.store.get(id).shape();
        let v = self.push(Op::Param(id), r, c, Vec::new());
        self.params.insert(id, v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<[usize; 2]> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(GraphError::Shape { op, left: sa, right: sb });
        }
        Ok(sa)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([m, k], [k2, n]) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(GraphError::Shape { op: "matmul", left: [m, k], right: [k2, n] });
        }
        let mut out = vec![0.0; m * n];
        let (av, bv) = (self.value(a), self.value(b));
        if n == 1 {
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(&av[i * k..(i + 1) * k], bv);
            }
        } else {
            gemm(m, k, n, av, k as isize, 1, bv, n as isize, 1, &mut out, 0.0);
        }
        Ok(self.push(Op::MatMul(a, b), m, n, out))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let [r, c] = self.shape(a);
        let av = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        self.push(Op::Transpose(a), c, r, out)
    }

    /// Element-wise sum. `b` may also be an `r x 1` column broadcast over
    /// the columns of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([r, c], sb) = (self.shape(a), self.shape(b));
        let out: Vec<f64> = if sb == [r, c] {
            self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect()
        } else if sb == [r, 1] {
            let bv = self.value(b);
            self.value(a).iter().enumerate().map(|(i, x)| x + bv[i / c]).collect()
        } else {
            return Err(GraphError::Shape { op: "add", left: [r, c], right: sb });
        };
        Ok(self.push(Op::Add(a, b), r, c, out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let [r, c] = self.same_shape("sub", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        Ok(self.push(Op::Sub(a, b), r, c, out))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let [r, c] = self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(Op::Mul(a, b), r, c, out))
    }

    /// `a * s` for a 1x1 node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let k = self.scalar(s)?;
        let [r, c] = self.shape(a);
        let out = self.value(a).iter().map(|x| x * k).collect();
        Ok(self.push(Op::ScaleBy(a, s), r, c, out))
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let [r, c] = self.shape(a);
        let out = self.value(a).iter().map(|x| 1.0 - x).collect();
        self.push(Op::OneMinus(a), r, c, out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let [r, c] = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .map(|&x| if x >= 0.0 { 1.0 / (1.0 + (-x).exp()) } else { let e = x.exp(); e / (1.0 + e) })
            .collect();
        self.push(Op::Sigmoid(a), r, c, out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let [r, c] = self.shape(a);
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh(a), r, c, out)
    }

    pub fn softmax(&mut self, a: Var, axis: Axis) -> Var {
        let [r, c] = self.shape(a);
        let mut out = self.value(a).to_vec();
        match axis {
            Axis::Rows => (0..c).for_each(|j| softmax_in_place(&mut out, c, r, j)),
            Axis::Cols => (0..r).for_each(|i| softmax_in_place(&mut out, 1, c, i * c)),
        }
        self.push(Op::Softmax(a, axis), r, c, out)
    }

    /// Stacks nodes vertically (`Rows`) or side by side (`Cols`).
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = *parts.first().ok_or(GraphError::Empty("concat"))?;
        let [r0, c0] = self.shape(first);
        for &p in &parts[1..] {
            let s = self.shape(p);
            let ok = match axis {
                Axis::Rows => s[1] == c0,
                Axis::Cols => s[0] == r0,
            };
            if !ok {
                return Err(GraphError::Shape { op: "concat", left: [r0, c0], right: s });
            }
        }
        let (rows, cols, out) = match axis {
            Axis::Rows => {
                let rows = parts.iter().map(|&p| self.shape(p)[0]).sum();
                let mut out = Vec::with_capacity(rows * c0);
                for &p in parts {
                    out.extend_from_slice(self.value(p));
                }
                (rows, c0, out)
            }
            Axis::Cols => {
                let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
                let mut out = vec![0.0; r0 * cols];
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p)[1];
                    let pv = self.value(p);
                    for i in 0..r0 {
                        out[i * cols + offset..i * cols + offset + pc].copy_from_slice(&pv[i * pc..(i + 1) * pc]);
                    }
                    offset += pc;
                }
                (r0, cols, out)
            }
        };
        Ok(self.push(Op::Concat(parts.to_vec(), axis), rows, cols, out))
    }

    /// Row `row` of an embedding table, returned as a column vector.
    pub fn embed(&mut self, table: Var, row: usize) -> Result<Var> {
        let [n, d] = self.shape(table);
        if row >= n {
            return Err(GraphError::Index { op: "embed", index: row, len: n });
        }
        let out = self.value(table)[row * d..(row + 1) * d].to_vec();
        Ok(self.push(Op::Embed(table, row), d, 1, out))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if start + len > r || len == 0 {
            return Err(GraphError::Index { op: "slice_rows", index: start + len, len: r });
        }
        let out = self.value(a)[start * c..(start + len) * c].to_vec();
        Ok(self.push(Op::SliceRows(a, start), len, c, out))
    }

    /// Column `col` as an `r x 1` vector.
    pub fn col(&mut self, a: Var, col: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if col >= c {
            return Err(GraphError::Index { op: "col", index: col, len: c });
        }
        let av = self.value(a);
        let out = (0..r).map(|i| av[i * c + col]).collect();
        Ok(self.push(Op::Column(a, col), r, 1, out))
    }

    /// Sums entries of the column `a` into an `out_len x 1` column:
    /// `out[index[i]] += a[i]`.
    pub fn scatter_add(&mut self, a: Var, index: &[usize], out_len: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if c != 1 || r != index.len() {
            return Err(GraphError::Shape { op: "scatter_add", left: [r, c], right: [index.len(), 1] });
        }
        let mut out = vec![0.0; out_len];
        for (x, &i) in self.value(a).iter().zip(index) {
            if i >= out_len {
                return Err(GraphError::Index { op: "scatter_add", index: i, len: out_len });
            }
            out[i] += x;
        }
        Ok(self.push(Op::Scatter(a, index.to_vec()), out_len, 1, out))
    }

    /// Element `i` (row-major) as a 1x1 node.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let v = self.value(a);
        if i >= v.len() {
            return Err(GraphError::Index { op: "pick", index: i, len: v.len() });
        }
        let x = v[i];
        Ok(self.push(Op::Pick(a, i), 1, 1, vec![x]))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let [r, c] = self.shape(a);
        let out = self.value(a).iter().map(|x| x.ln()).collect();
        self.push(Op::Log(a), r, c, out)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Op::Sum(a), 1, 1, vec![s])
    }

    /// `-log softmax(logits)[target]` for a column of logits, computed with
    /// a max-shifted log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let [r, c] = self.shape(logits);
        if c != 1 {
            return Err(GraphError::Shape { op: "cross_entropy", left: [r, c], right: [r, 1] });
        }
        if target >= r {
            return Err(GraphError::Index { op: "cross_entropy", index: target, len: r });
        }
        let v = self.value(logits);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - v[target];
        Ok(self.push(Op::CrossEntropy(logits, target), 1, 1, vec![loss]))
    }

    /// `-log p[target]` for a column of probabilities.
    pub fn nll(&mut self, probs: Var, target: usize) -> Result<Var> {
        let p = self.pick(probs, target)?;
        let l = self.log(p);
        let zero = self.zeros(1, 1);
        self.sub(zero, l)
    }

    /// Multiplies by a fixed mask (used for dropout).
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let [r, c] = self.shape(a);
        if mask.len() != r * c {
            return Err(GraphError::Shape { op: "mask", left: [r, c], right: [mask.len(), 1] });
        }
        let out = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        Ok(self.push(Op::Mask(a, mask), r, c, out))
    }

    /// Reverse sweep from the scalar `loss`, accumulating parameter gradients
    /// into `out`.
    pub fn backward_into(&self, loss: Var, out: &mut Gradients) -> Result<()> {
        self.scalar(loss)?;
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        grads[loss.0] = vec![1.0];
        for i in (0..=loss.0).rev() {
            let g = std::mem::take(&mut grads[i]);
            if g.is_empty() || !self.nodes[i].needs_grad {
                continue;
            }
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                // parameter gradients are written straight into `out`
                Op::Constant | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let ([m, k], [_, n]) = (self.shape(*a), self.shape(*b));
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if n == 1 {
                        if self.needs_grad(*a) {
                            let da = self.slot(&mut grads, out, *a);
                            for (row, gi) in g.iter().enumerate() {
                                axpy(*gi, bv, &mut da[row * k..(row + 1) * k]);
                            }
                        }
                        if self.needs_grad(*b) {
                            let db = self.slot(&mut grads, out, *b);
                            for (row, gi) in g.iter().enumerate() {
                                axpy(*gi, &av[row * k..(row + 1) * k], db);
                            }
                        }
                    } else {
                        if self.needs_grad(*a) {
                            // dA (m x k) += G (m x n) * B^T (n x k)
                            let da = self.slot(&mut grads, out, *a);
                            gemm(m, n, k, &g, n as isize, 1, bv, 1, n as isize, da, 1.0);
                        }
                        if self.needs_grad(*b) {
                            // dB (k x n) += A^T (k x m) * G (m x n)
                            let db = self.slot(&mut grads, out, *b);
                            gemm(k, m, n, av, 1, k as isize, &g, n as isize, 1, db, 1.0);
                        }
                    }
                }
                Op::Transpose(a) => {
                    let [r, c] = self.shape(*a);
                    let da = self.slot(&mut grads, out, *a);
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] += g[j * r + i];
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(self.slot(&mut grads, out, *a), &g, 1.0);
                    let cols = node.cols;
                    let db = self.slot(&mut grads, out, *b);
                    if db.len() == g.len() {
                        add_into(db, &g, 1.0);
                    } else {
                        for (i, gi) in g.iter().enumerate() {
                            db[i / cols] += gi;
                        }
                    }
                }
                Op::Sub(a, b) => {
                    add_into(self.slot(&mut grads, out, *a), &g, 1.0);
                    add_into(self.slot(&mut grads, out, *b), &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = self.slot(&mut grads, out, *a);
                    for ((d, gi), bi) in da.iter_mut().zip(&g).zip(bv) {
                        *d += gi * bi;
                    }
                    let db = self.slot(&mut grads, out, *b);
                    for ((d, gi), ai) in db.iter_mut().zip(&g).zip(av) {
                        *d += gi * ai;
                    }
                }
                Op::ScaleBy(a, s) => {
                    let (av, k) = (self.value(*a), self.value(*s)[0]);
                    add_into(self.slot(&mut grads, out, *a), &g, k);
                    let ds: f64 = g.iter().zip(av).map(|(gi, ai)| gi * ai).sum();
                    self.slot(&mut grads, out, *s)[0] += ds;
                }
                Op::OneMinus(a) => add_into(self.slot(&mut grads, out, *a), &g, -1.0),
                Op::Sigmoid(a) => {
                    let da = self.slot(&mut grads, out, *a);
                    for ((d, gi), yi) in da.iter_mut().zip(&g).zip(y) {
                        *d += gi * yi * (1.0 - yi);
                    }
                }
                Op::Tanh(a) => {
                    let da = self.slot(&mut grads, out, *a);
                    for ((d, gi), yi) in da.iter_mut().zip(&g).zip(y) {
                        *d += gi * (1.0 - yi * yi);
                    }
                }
                Op::Softmax(a, axis) => {
                    let (r, c) = (node.rows, node.cols);
                    let da = self.slot(&mut grads, out, *a);
                    let (groups, count, stride, step): (usize, usize, usize, usize) = match axis {
                        Axis::Rows => (c, r, c, 1),
                        Axis::Cols => (r, c, 1, c),
                    };
                    for grp in 0..groups {
                        let base = grp * step;
                        let inner: f64 = (0..count).map(|i| g[base + i * stride] * y[base + i * stride]).sum();
                        for i in 0..count {
                            let k = base + i * stride;
                            da[k] += y[k] * (g[k] - inner);
                        }
                    }
                }
                Op::Concat(parts, axis) => match axis {
                    Axis::Rows => {
                        let mut offset = 0;
                        for p in parts {
                            let n = self.value(*p).len();
                            add_into(self.slot(&mut grads, out, *p), &g[offset..offset + n], 1.0);
                            offset += n;
                        }
                    }
                    Axis::Cols => {
                        let cols = node.cols;
                        let mut offset = 0;
                        for p in parts {
                            let [pr, pc] = self.shape(*p);
                            let dp = self.slot(&mut grads, out, *p);
                            for i in 0..pr {
                                add_into(&mut dp[i * pc..(i + 1) * pc], &g[i * cols + offset..i * cols + offset + pc], 1.0);
                            }
                            offset += pc;
                        }
                    }
                },
                Op::Embed(table, row) => {
                    let d = node.rows;
                    let dt = self.slot(&mut grads, out, *table);
                    add_into(&mut dt[row * d..(row + 1) * d], &g, 1.0);
                }
                Op::SliceRows(a, start) => {
                    let c = node.cols;
                    let da = self.slot(&mut grads, out, *a);
                    add_into(&mut da[start * c..start * c + g.len()], &g, 1.0);
                }
                Op::Column(a, col) => {
                    let c = self.shape(*a)[1];
                    let da = self.slot(&mut grads, out, *a);
                    for (i, gi) in g.iter().enumerate() {
                        da[i * c + col] += gi;
                    }
                }
                Op::Scatter(a, index) => {
                    let da = self.slot(&mut grads, out, *a);
                    for (d, &i) in da.iter_mut().zip(index) {
                        *d += g[i];
                    }
                }
                Op::Pick(a, i) => self.slot(&mut grads, out, *a)[*i] += g[0],
                Op::Log(a) => {
                    let av = self.value(*a);
                    let da = self.slot(&mut grads, out, *a);
                    for ((d, gi), ai) in da.iter_mut().zip(&g).zip(av) {
                        *d += gi / ai;
                    }
                }
                Op::Sum(a) => self.slot(&mut grads, out, *a).iter_mut().for_each(|d| *d += g[0]),
                Op::CrossEntropy(a, target) => {
                    let av = self.value(*a);
                    let max = av.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = av.iter().map(|x| (x - max).exp()).sum();
                    let da = self.slot(&mut grads, out, *a);
                    for (k, (d, x)) in da.iter_mut().zip(av).enumerate() {
                        let p = (x - max).exp() / z;
                        *d += g[0] * (p - if k == *target { 1.0 } else { 0.0 });
                    }
                }
                Op::Mask(a, mask) => {
                    let da = self.slot(&mut grads, out, *a);
                    for ((d, gi), m) in da.iter_mut().zip(&g).zip(mask) {
                        *d += gi * m;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let mut out = Gradients::zeros_like(self.store);
        self.backward_into(loss, &mut out)?;
        Ok(out)
    }

    /// Gradient slot of `v`: parameter buffers live in `out`, everything else
    /// in the per-node `grads`.
    fn slot<'b>(&self, grads: &'b mut [Vec<f64>], out: &'b mut Gradients, v: Var) -> &'b mut [f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => out.slot(id),
            _ => {
                let g = &mut grads[v.0];
                if g.is_empty() {
                    g.resize(self.nodes[v.0].value.len(), 0.0);
                }
                g
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], alpha: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}
