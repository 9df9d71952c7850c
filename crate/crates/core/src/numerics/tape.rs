//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the [`Tape`] and returns a [`Var`] handle.
//! Parameters enter as leaves tagged with a [`ParamId`]; [`Tape::backward`]
//! walks the nodes in reverse and returns one gradient per registered
//! parameter. Nodes that do not depend on any parameter are never visited.

use std::collections::BTreeMap;

use rand::Rng as _;

use super::kernels::{self, gemm};
use super::{NumericsError, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { x: Var, bias: Var },
    Scale(Var, f64),
    Exp(Var),
    Abs(Var),
    Sum(Var),
    MeanRows { x: Var, start: usize, end: usize },
    LayerNorm { x: Var, gain: Var, xhat: Vec<f64>, inv_std: Vec<f64>, bias: Var },
    SoftmaxRows(Var),
    Gelu(Var),
    Mask { x: Var, mask: Vec<f64> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, target: usize, probs: Vec<f64> },
    Linearized { x: Var, jacobian: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<ParamId, Var>,
}

/// Gradients of one scalar with respect to every parameter registered on the tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Result<&Tensor, NumericsError> {
        self.grads.get(&id).ok_or(NumericsError::UnknownParam(id.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<(), NumericsError> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(NumericsError::NonFinite { op, index }),
        None => Ok(()),
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: &'static str, value: Tensor, node_op: Op, requires_grad: bool) -> Result<Var, NumericsError> {
        check_finite(op, value.data())?;
        self.nodes.push(Node {
            value,
            op: node_op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a parameter leaf. Registering the same id twice returns the first handle.
    pub fn param(&mut self, id: ParamId, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: value.clone(),
            op: Op::Leaf,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) · op(b)` where `op` transposes when the flag is set.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var, NumericsError> {
        let (va, vb) = (self.value(a), self.value(b));
        let (ra, ca) = va.dims2()?;
        let (rb, cb) = vb.dims2()?;
        let (m, k) = if ta { (ca, ra) } else { (ra, ca) };
        let (k2, n) = if tb { (cb, rb) } else { (rb, cb) };
        if k != k2 {
            return Err(shape_err("matmul", va, vb));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, va.data(), ta, vb.data(), tb, &mut out, 0.0);
        let rg = self.rg(&[a, b]);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul { a, b, ta, tb }, rg)
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, NumericsError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(va.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        self.push(name, value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`d` vector to every row of an `n×d` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let (_, d) = vx.dims2()?;
        if vb.len() != d {
            return Err(shape_err("add_row", vx, vb));
        }
        let b = vb.data();
        let mut data = vx.data().to_vec();
        for row in data.chunks_exact_mut(d) {
            for (o, bj) in row.iter_mut().zip(b) {
                *o += bj;
            }
        }
        let value = Tensor::from_parts(vx.shape().to_vec(), data);
        let rg = self.rg(&[x, bias]);
        self.push("add_row", value, Op::AddRow { x, bias }, rg)
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, NumericsError> {
        let va = self.value(a);
        let value = Tensor::from_parts(va.shape().to_vec(), va.data().iter().map(|&x| f(x)).collect());
        let rg = self.rg(&[a]);
        self.push(name, value, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NumericsError> {
        self.map("scale", a, |x| x * c, Op::Scale(a, c))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map("abs", a, f64::abs, Op::Abs(a))
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map("gelu", a, kernels::gelu_scalar, Op::Gelu(a))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push("sum", Tensor::from_parts(vec![1], vec![s]), Op::Sum(a), rg)
    }

    /// Column means over rows `start..end`, as a `1×d` matrix.
    pub fn mean_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let vx = self.value(x);
        let (rows, d) = vx.dims2()?;
        if start >= end || end > rows {
            return Err(NumericsError::RowRange { start, end, rows });
        }
        let mut out = vec![0.0; d];
        for r in start..end {
            for (o, v) in out.iter_mut().zip(vx.row(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / (end - start) as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let rg = self.rg(&[x]);
        self.push("mean_rows", Tensor::from_parts(vec![1, d], out), Op::MeanRows { x, start, end }, rg)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, NumericsError> {
        let (vx, vg, vb) = (self.value(x), self.value(gain), self.value(bias));
        let (_, d) = vx.dims2()?;
        if vg.len() != d || vb.len() != d {
            return Err(shape_err("layer_norm", vx, vg));
        }
        let ln = kernels::layer_norm_rows(vx.data(), d, vg.data(), vb.data(), eps);
        let value = Tensor::from_parts(vx.shape().to_vec(), ln.y);
        let rg = self.rg(&[x, gain, bias]);
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            xhat: ln.xhat,
            inv_std: ln.inv_std,
        };
        self.push("layer_norm", value, op, rg)
    }

    /// Softmax over the last axis (each row of a matrix, or the whole vector).
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let vx = self.value(x);
        let (_, d) = vx.dims2()?;
        let value = Tensor::from_parts(vx.shape().to_vec(), kernels::softmax_rows(vx.data(), d));
        let rg = self.rg(&[x]);
        self.push("softmax", value, Op::SoftmaxRows(x), rg)
    }

    /// Inverted dropout. Outside training, or at rate 0, returns `x` itself.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut Rng, training: bool) -> Result<Var, NumericsError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumericsError::DropoutRate(rate));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let vx = self.value(x);
        let mask: Vec<f64> = (0..vx.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = vx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::from_parts(vx.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push("dropout", value, Op::Mask { x, mask }, rg)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let vx = self.value(x);
        let (rows, d) = vx.dims2()?;
        if start >= end || end > d {
            return Err(NumericsError::ColRange { start, end, cols: d });
        }
        let w = end - start;
        let mut out = Vec::with_capacity(rows * w);
        for r in 0..rows {
            out.extend_from_slice(&vx.row(r)[start..end]);
        }
        let rg = self.rg(&[x]);
        self.push("slice_cols", Tensor::from_parts(vec![rows, w], out), Op::SliceCols { x, start }, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts.first().ok_or(NumericsError::EmptyConcat)?;
        let (rows, _) = self.value(*first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(shape_err("concat_cols", self.value(*first), self.value(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = self.rg(parts);
        self.push("concat_cols", Tensor::from_parts(vec![rows, total], out), Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts.first().ok_or(NumericsError::EmptyConcat)?;
        let (_, cols) = self.value(*first).dims2()?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let v = self.value(p);
            let (r, c) = v.dims2()?;
            if c != cols {
                return Err(shape_err("concat_rows", self.value(*first), v));
            }
            rows += r;
            out.extend_from_slice(v.data());
        }
        let rg = self.rg(parts);
        self.push("concat_rows", Tensor::from_parts(vec![rows, cols], out), Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Row lookup into a `V×d` table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let vt = self.value(table);
        let (vocab, d) = vt.dims2()?;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(NumericsError::IndexOutOfRange { index: id, len: vocab });
            }
            out.extend_from_slice(vt.row(id));
        }
        if ids.is_empty() {
            return Err(NumericsError::EmptyConcat);
        }
        let rg = self.rg(&[table]);
        let op = Op::Gather { table, ids: ids.to_vec() };
        self.push("gather_rows", Tensor::from_parts(vec![ids.len(), d], out), op, rg)
    }

    /// `-log softmax(logits)[target]`, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, NumericsError> {
        let z = self.value(logits).data();
        if target >= z.len() {
            return Err(NumericsError::IndexOutOfRange { index: target, len: z.len() });
        }
        let lse = kernels::log_sum_exp(z);
        let loss = lse - z[target];
        let probs = z.iter().map(|v| (v - lse).exp()).collect();
        let rg = self.rg(&[logits]);
        let op = Op::CrossEntropy { logits, target, probs };
        self.push("cross_entropy", Tensor::from_parts(vec![1], vec![loss.max(0.0)]), op, rg)
    }

    /// Records a function evaluated outside the tape by its value and its local
    /// Jacobian (`value.len() × x.len()`, row-major).
    pub fn linearized(&mut self, x: Var, value: Tensor, jacobian: Vec<f64>) -> Result<Var, NumericsError> {
        let n_in = self.value(x).len();
        if jacobian.len() != value.len() * n_in {
            return Err(NumericsError::DataLength {
                shape: vec![value.len(), n_in],
                len: jacobian.len(),
            });
        }
        check_finite("linearized", &jacobian)?;
        let rg = self.rg(&[x]);
        self.push("linearized", value, Op::Linearized { x, jacobian }, rg)
    }

    /// Gradient of a one-element `loss` with respect to every registered parameter.
    ///
    /// Parameters the loss does not depend on get zero gradients of their own shape.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NotScalar(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        let mut out = BTreeMap::new();
        for (&id, &v) in &self.params {
            let shape = self.value(v).shape().to_vec();
            let t = match grads.get_mut(v.0).and_then(Option::take) {
                Some(data) => {
                    check_finite("backward", &data)?;
                    Tensor::from_parts(shape, data)
                }
                None => Tensor::zeros(&shape),
            };
            out.insert(id, t);
        }
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, n) = node.value.dims2().unwrap();
                let (ra, ca) = va.dims2().unwrap();
                let k = if *ta { ra } else { ca };
                if let Some(ga) = slot(nodes, grads, *a) {
                    if *ta {
                        gemm(k, n, m, vb.data(), *tb, g, true, ga, 1.0);
                    } else {
                        gemm(m, n, k, g, false, vb.data(), !*tb, ga, 1.0);
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    if *tb {
                        gemm(n, m, k, g, true, va.data(), *ta, gb, 1.0);
                    } else {
                        gemm(k, m, n, va.data(), !*ta, g, false, gb, 1.0);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(o, v)| *o += v);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(o, v)| *o += v);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(o, v)| *o += v);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(o, v)| *o -= v);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, gi), bi) in ga.iter_mut().zip(g).zip(vb) {
                        *o += gi * bi;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for ((o, gi), ai) in gb.iter_mut().zip(g).zip(va) {
                        *o += gi * ai;
                    }
                }
            }
            Op::AddRow { x, bias } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(o, v)| *o += v);
                }
                if let Some(gb) = slot(nodes, grads, *bias) {
                    let d = gb.len();
                    for row in g.chunks_exact(d) {
                        gb.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(o, v)| *o += v * c);
                }
            }
            Op::Exp(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(node.value.data()) {
                        *o += gi * y;
                    }
                }
            }
            Op::Abs(a) => {
                let va = nodes[a.0].value.data();
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, gi), x) in ga.iter_mut().zip(g).zip(va) {
                        let s = if *x > 0.0 {
                            1.0
                        } else if *x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        *o += gi * s;
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().for_each(|o| *o += g[0]);
                }
            }
            Op::MeanRows { x, start, end } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    let d = g.len();
                    let inv = 1.0 / (end - start) as f64;
                    for r in *start..*end {
                        for (o, v) in gx[r * d..(r + 1) * d].iter_mut().zip(g) {
                            *o += v * inv;
                        }
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let gv = nodes[gain.0].value.data();
                let d = gv.len();
                if let Some(gg) = slot(nodes, grads, *gain) {
                    for (grow, hrow) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            gg[j] += grow[j] * hrow[j];
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *bias) {
                    for grow in g.chunks_exact(d) {
                        gb.iter_mut().zip(grow).for_each(|(o, v)| *o += v);
                    }
                }
                if let Some(gx) = slot(nodes, grads, *x) {
                    let mut gh = vec![0.0; d];
                    for (r, (grow, hrow)) in g.chunks_exact(d).zip(xhat.chunks_exact(d)).enumerate() {
                        for j in 0..d {
                            gh[j] = grow[j] * gv[j];
                        }
                        let mean_gh = gh.iter().sum::<f64>() / d as f64;
                        let mean_ghh = gh.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        let out = &mut gx[r * d..(r + 1) * d];
                        for j in 0..d {
                            out[j] += inv_std[r] * (gh[j] - mean_gh - hrow[j] * mean_ghh);
                        }
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    let (_, d) = node.value.dims2().unwrap();
                    for ((grow, yrow), out) in g.chunks_exact(d).zip(node.value.data().chunks_exact(d)).zip(gx.chunks_exact_mut(d)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            out[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                let va = nodes[a.0].value.data();
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, gi), x) in ga.iter_mut().zip(g).zip(va) {
                        *o += gi * kernels::gelu_grad_scalar(*x);
                    }
                }
            }
            Op::Mask { x, mask } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((o, gi), m) in gx.iter_mut().zip(g).zip(mask) {
                        *o += gi * m;
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let (_, d) = nodes[x.0].value.dims2().unwrap();
                let (rows, w) = node.value.dims2().unwrap();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for r in 0..rows {
                        let dst = &mut gx[r * d + start..r * d + start + w];
                        dst.iter_mut().zip(&g[r * w..(r + 1) * w]).for_each(|(o, v)| *o += v);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.dims2().unwrap();
                let mut offset = 0;
                for p in parts {
                    let (_, w) = nodes[p.0].value.dims2().unwrap();
                    if let Some(gp) = slot(nodes, grads, *p) {
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            gp[r * w..(r + 1) * w].iter_mut().zip(src).for_each(|(o, v)| *o += v);
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    if let Some(gp) = slot(nodes, grads, *p) {
                        gp.iter_mut().zip(&g[offset..offset + len]).for_each(|(o, v)| *o += v);
                    }
                    offset += len;
                }
            }
            Op::Gather { table, ids } => {
                if let Some(gt) = slot(nodes, grads, *table) {
                    let d = g.len() / ids.len();
                    for (r, &id) in ids.iter().enumerate() {
                        gt[id * d..(id + 1) * d]
                            .iter_mut()
                            .zip(&g[r * d..(r + 1) * d])
                            .for_each(|(o, v)| *o += v);
                    }
                }
            }
            Op::CrossEntropy { logits, target, probs } => {
                if let Some(gz) = slot(nodes, grads, *logits) {
                    for (j, (o, p)) in gz.iter_mut().zip(probs).enumerate() {
                        let onehot = if j == *target { 1.0 } else { 0.0 };
                        *o += g[0] * (p - onehot);
                    }
                }
            }
            Op::Linearized { x, jacobian } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    let n_in = gx.len();
                    for (i, gi) in g.iter().enumerate() {
                        for (o, jv) in gx.iter_mut().zip(&jacobian[i * n_in..(i + 1) * n_in]) {
                            *o += gi * jv;
                        }
                    }
                }
            }
        }
    }
}
