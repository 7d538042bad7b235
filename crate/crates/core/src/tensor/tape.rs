use super::Tensor;
use crate::error::{Error, Result};

/// Floor used by the guarded log, division and norm ops.
pub const EPS: f64 = 1e-12;

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
    Div(Var, Var),
    Affine { x: Var, scale: f64 },
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    AddBias { x: Var, bias: Var },
    Sum(Var),
    Mean(Var),
    SumAxis { x: Var, axis: usize },
    MeanAxis { x: Var, axis: usize },
    SqNorm(Var),
    Norm(Var),
    Log(Var),
    Relu(Var),
    Softmax(Var),
    Reshape(Var),
    Transpose { x: Var, rows: usize, cols: usize },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    StopGradient,
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    tracked: bool,
}

/// Append-only record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when no gradient reached `var` (constants, frozen or stopped paths).
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.adjoints.get(var.0).and_then(|a| a.as_deref())
    }

    pub fn get_or_zeros(&self, var: Var, len: usize) -> Vec<f64> {
        self.get(var).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

fn guard_div(x: f64) -> f64 {
    if x.abs() >= EPS {
        x
    } else if x < 0.0 {
        -EPS
    } else {
        EPS
    }
}

/// Splits `shape` around `axis` into (outer, dim, inner) extents.
fn around_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn last_dim(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1)
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

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        Tensor {
            shape: node.shape.clone(),
            data: node.value.clone(),
            grad: None,
        }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, tracked: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Trainable leaf: receives gradient on backward.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf, true)
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf, false)
    }

    pub fn constant_from(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::from_vec(shape, data)?;
        Ok(self.push(t.shape, t.data, Op::Leaf, false))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    fn zip_with(&mut self, op_name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op_name, a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(self.shape(a).to_vec(), value, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise `a / b`, with `|b|` floored at [`EPS`] (sign kept, 0 counts as positive).
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("div", a, b, Op::Div(a, b), |x, y| x / guard_div(y))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).iter().map(|&v| scale * v + shift).collect();
        let tracked = self.tracked(x);
        self.push(self.shape(x).to_vec(), value, Op::Affine { x, scale }, tracked)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.affine(x, 1.0, c)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                for (o, &bpj) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += aip * bpj;
                }
            }
        }
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b, m, k, n }, tracked))
    }

    /// Adds a `[n]` bias to every length-`n` row along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        let n = last_dim(sx);
        if sx.is_empty() || sb.len() != 1 || sb[0] != n {
            return Err(Error::shape("add_bias", sx, sb));
        }
        let bv = self.value(bias);
        let value = self
            .value(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(bv).map(|(a, b)| a + b))
            .collect();
        let tracked = self.tracked(x) || self.tracked(bias);
        Ok(self.push(sx.to_vec(), value, Op::AddBias { x, bias }, tracked))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let tracked = self.tracked(x);
        self.push(Vec::new(), vec![s], Op::Sum(x), tracked)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let tracked = self.tracked(x);
        self.push(Vec::new(), vec![m], Op::Mean(x), tracked)
    }

    fn reduce_axis(&mut self, x: Var, axis: usize, mean: bool) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::contract(format!("axis {axis} out of range for shape {shape:?}")));
        }
        let (outer, dim, inner) = around_axis(&shape, axis);
        let v = self.value(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let base = (o * dim + d) * inner;
                for i in 0..inner {
                    out[o * inner + i] += v[base + i];
                }
            }
        }
        if mean {
            out.iter_mut().for_each(|s| *s /= dim as f64);
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let op = if mean { Op::MeanAxis { x, axis } } else { Op::SumAxis { x, axis } };
        let tracked = self.tracked(x);
        Ok(self.push(out_shape, out, op, tracked))
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce_axis(x, axis, false)
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce_axis(x, axis, true)
    }

    fn last_axis_shape(&self, x: Var) -> (usize, Vec<usize>) {
        let shape = self.shape(x);
        let d = last_dim(shape);
        let out = if shape.is_empty() {
            Vec::new()
        } else {
            shape[..shape.len() - 1].to_vec()
        };
        (d, out)
    }

    /// Squared L2 norm along the last axis.
    pub fn sq_norm(&mut self, x: Var) -> Var {
        let (d, out_shape) = self.last_axis_shape(x);
        let value = self.value(x).chunks(d).map(|r| r.iter().map(|v| v * v).sum()).collect();
        let tracked = self.tracked(x);
        self.push(out_shape, value, Op::SqNorm(x), tracked)
    }

    /// `max(||x||, EPS)` along the last axis.
    pub fn norm(&mut self, x: Var) -> Var {
        let (d, out_shape) = self.last_axis_shape(x);
        let value = self
            .value(x)
            .chunks(d)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt().max(EPS))
            .collect();
        let tracked = self.tracked(x);
        self.push(out_shape, value, Op::Norm(x), tracked)
    }

    /// `ln(max(x, EPS))`.
    pub fn log(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| v.max(EPS).ln()).collect();
        let tracked = self.tracked(x);
        self.push(self.shape(x).to_vec(), value, Op::Log(x), tracked)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        let tracked = self.tracked(x);
        self.push(self.shape(x).to_vec(), value, Op::Relu(x), tracked)
    }

    /// Softmax along the last axis, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = last_dim(&shape);
        if shape.is_empty() {
            return Err(Error::contract("softmax needs at least one axis"));
        }
        let mut value = Vec::with_capacity(self.value(x).len());
        for row in self.value(x).chunks(d) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = value.len();
            value.extend(row.iter().map(|&v| (v - max).exp()));
            let z: f64 = value[start..].iter().sum();
            value[start..].iter_mut().for_each(|e| *e /= z);
        }
        let tracked = self.tracked(x);
        Ok(self.push(shape, value, Op::Softmax(x), tracked))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).len() || shape.contains(&0) {
            return Err(Error::shape("reshape", self.shape(x), &shape));
        }
        let value = self.value(x).to_vec();
        let tracked = self.tracked(x);
        Ok(self.push(shape, value, Op::Reshape(x), tracked))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x);
        if shape.len() != 2 {
            return Err(Error::shape("transpose", shape, &[]));
        }
        let (rows, cols) = (shape[0], shape[1]);
        let v = self.value(x);
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = v[r * cols + c];
            }
        }
        let tracked = self.tracked(x);
        Ok(self.push(vec![cols, rows], out, Op::Transpose { x, rows, cols }, tracked))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::contract(format!("axis {axis} out of range for shape {base:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = around_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let dim = self.shape(v)[axis];
                let chunk = dim * inner;
                out.extend_from_slice(&self.value(v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let tracked = inputs.iter().any(|&v| self.tracked(v));
        Ok(self.push(
            shape,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            tracked,
        ))
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::contract(format!(
                "slice {start}..{} on axis {axis} out of range for shape {shape:?}",
                start + len
            )));
        }
        let (outer, dim, inner) = around_axis(&shape, axis);
        let v = self.value(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * dim + start) * inner;
            out.extend_from_slice(&v[from..from + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let tracked = self.tracked(x);
        Ok(self.push(out_shape, out, Op::Slice { x, axis, start }, tracked))
    }

    /// Identity forward; the result is untracked so no gradient flows back through it.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.value(x).to_vec();
        self.push(self.shape(x).to_vec(), value, Op::StopGradient, false)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::contract(format!("backward needs a scalar loss, got shape {:?}", root.shape)));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if root.tracked {
            adj[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if node.tracked {
                self.propagate(node, &g, &mut adj);
            }
            adj[i] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn slot<'a>(&self, adj: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.tracked(v) {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(adj[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(s) = self.slot(adj, v) {
                        s.iter_mut().zip(g).for_each(|(s, g)| *s += g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(s) = self.slot(adj, *a) {
                    s.iter_mut().zip(g).for_each(|(s, g)| *s += g);
                }
                if let Some(s) = self.slot(adj, *b) {
                    s.iter_mut().zip(g).for_each(|(s, g)| *s -= g);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(s) = self.slot(adj, *a) {
                    for ((s, g), y) in s.iter_mut().zip(g).zip(bv) {
                        *s += g * y;
                    }
                }
                if let Some(s) = self.slot(adj, *b) {
                    for ((s, g), x) in s.iter_mut().zip(g).zip(av) {
                        *s += g * x;
                    }
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(s) = self.slot(adj, *a) {
                    for ((s, g), y) in s.iter_mut().zip(g).zip(bv) {
                        *s += g / guard_div(*y);
                    }
                }
                if let Some(s) = self.slot(adj, *b) {
                    for (((s, g), x), y) in s.iter_mut().zip(g).zip(av).zip(bv) {
                        if y.abs() >= EPS {
                            *s -= g * x / (y * y);
                        }
                    }
                }
            }
            Op::Affine { x, scale } => {
                if let Some(s) = self.slot(adj, *x) {
                    s.iter_mut().zip(g).for_each(|(s, g)| *s += scale * g);
                }
            }
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(s) = self.slot(adj, *a) {
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let dot: f64 = gi.iter().zip(&bv[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum();
                            s[i * k + p] += dot;
                        }
                    }
                }
                if let Some(s) = self.slot(adj, *b) {
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for (sv, gv) in s[p * n..(p + 1) * n].iter_mut().zip(gi) {
                                *sv += aip * gv;
                            }
                        }
                    }
                }
            }
            Op::AddBias { x, bias } => {
                if let Some(s) = self.slot(adj, *x) {
                    s.iter_mut().zip(g).for_each(|(s, g)| *s += g);
                }
                let n = self.value(*bias).len();
                if let Some(s) = self.slot(adj, *bias) {
                    for row in g.chunks(n) {
                        s.iter_mut().zip(row).for_each(|(s, g)| *s += g);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(s) = self.slot(adj, *x) {
                    s.iter_mut().for_each(|s| *s += g[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(s) = self.slot(adj, *x) {
                    let share = g[0] / s.len() as f64;
                    s.iter_mut().for_each(|s| *s += share);
                }
            }
            Op::SumAxis { x, axis } | Op::MeanAxis { x, axis } => {
                let (outer, dim, inner) = around_axis(self.shape(*x), *axis);
                let factor = match node.op {
                    Op::MeanAxis { .. } => 1.0 / dim as f64,
                    _ => 1.0,
                };
                if let Some(s) = self.slot(adj, *x) {
                    for o in 0..outer {
                        let go = &g[o * inner..(o + 1) * inner];
                        for d in 0..dim {
                            let base = (o * dim + d) * inner;
                            for (sv, gv) in s[base..base + inner].iter_mut().zip(go) {
                                *sv += factor * gv;
                            }
                        }
                    }
                }
            }
            Op::SqNorm(x) => {
                let xv = self.value(*x);
                let d = last_dim(self.shape(*x));
                if let Some(s) = self.slot(adj, *x) {
                    for (r, gr) in g.iter().enumerate() {
                        for j in r * d..(r + 1) * d {
                            s[j] += 2.0 * gr * xv[j];
                        }
                    }
                }
            }
            Op::Norm(x) => {
                let xv = self.value(*x);
                let d = last_dim(self.shape(*x));
                if let Some(s) = self.slot(adj, *x) {
                    for (r, gr) in g.iter().enumerate() {
                        let norm = out[r];
                        let raw: f64 = xv[r * d..(r + 1) * d].iter().map(|v| v * v).sum::<f64>().sqrt();
                        if raw <= EPS {
                            continue;
                        }
                        for j in r * d..(r + 1) * d {
                            s[j] += gr * xv[j] / norm;
                        }
                    }
                }
            }
            Op::Log(x) => {
                let xv = self.value(*x);
                if let Some(s) = self.slot(adj, *x) {
                    for ((s, g), v) in s.iter_mut().zip(g).zip(xv) {
                        if *v > EPS {
                            *s += g / v;
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                if let Some(s) = self.slot(adj, *x) {
                    for ((s, g), v) in s.iter_mut().zip(g).zip(xv) {
                        if *v > 0.0 {
                            *s += g;
                        }
                    }
                }
            }
            Op::Softmax(x) => {
                let d = last_dim(&node.shape);
                if let Some(s) = self.slot(adj, *x) {
                    for ((sr, gr), pr) in s.chunks_mut(d).zip(g.chunks(d)).zip(out.chunks(d)) {
                        let dot: f64 = gr.iter().zip(pr).map(|(a, b)| a * b).sum();
                        for ((sv, gv), pv) in sr.iter_mut().zip(gr).zip(pr) {
                            *sv += pv * (gv - dot);
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(s) = self.slot(adj, *x) {
                    s.iter_mut().zip(g).for_each(|(s, g)| *s += g);
                }
            }
            Op::Transpose { x, rows, cols } => {
                let (rows, cols) = (*rows, *cols);
                if let Some(s) = self.slot(adj, *x) {
                    for r in 0..rows {
                        for c in 0..cols {
                            s[r * cols + c] += g[c * rows + r];
                        }
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = around_axis(&node.shape, *axis);
                let mut offset = 0;
                for &v in inputs {
                    let dim = self.shape(v)[*axis];
                    if let Some(s) = self.slot(adj, v) {
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * dim * inner;
                            for (sv, gv) in s[dst..dst + dim * inner].iter_mut().zip(&g[src..]) {
                                *sv += gv;
                            }
                        }
                    }
                    offset += dim;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, dim, inner) = around_axis(self.shape(*x), *axis);
                let len = node.shape[*axis];
                if let Some(s) = self.slot(adj, *x) {
                    for o in 0..outer {
                        let dst = (o * dim + start) * inner;
                        let src = o * len * inner;
                        for (sv, gv) in s[dst..dst + len * inner].iter_mut().zip(&g[src..src + len * inner]) {
                            *sv += gv;
                        }
                    }
                }
            }
        }
    }
}
