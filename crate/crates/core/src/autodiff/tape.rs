use std::sync::Arc;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    /// Trainable value; gradients are reported for it.
    Param,
    /// Placeholder bound at [`Tape::forward`].
    Input,
    Constant,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf(LeafKind),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Powi(NodeId, i32),
    Square(NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    Mean(NodeId),
    Columns(NodeId, Arc<[usize]>),
    Rows(NodeId, Arc<[usize]>),
    ConcatColumns(Vec<NodeId>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MatMul(..) => "matmul",
            Op::Sin(_) => "sin",
            Op::Cos(_) => "cos",
            Op::Powi(..) => "powi",
            Op::Square(_) => "square",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Columns(..) => "columns",
            Op::Rows(..) => "rows",
            Op::ConcatColumns(_) => "concat_columns",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: [usize; 2],
    value: Option<Tensor>,
    /// sin nodes keep cos of their argument and vice versa.
    aux: Option<Vec<f64>>,
}

/// Define-by-run computation graph over rank-2 tensors.
///
/// Nodes are appended in topological order, so a parent index is always
/// smaller than its child's. Shapes are inferred while recording; values are
/// produced by [`Tape::forward`] and gradients by [`Tape::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every leaf reached by a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    leaves: Vec<Option<Tensor>>,
    kinds: Vec<Option<LeafKind>>,
}

impl Gradients {
    /// Gradient with respect to a leaf, `None` if the output does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.leaves.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to a leaf, zeros of `shape` when it was not reached.
    pub fn get_or_zeros(&self, id: NodeId, shape: [usize; 2]) -> Tensor {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape[0], shape[1]))
    }

    /// Iterates `(id, gradient)` over parameter leaves.
    pub fn params(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.leaves.iter().enumerate().filter_map(|(i, g)| {
            match (g, self.kinds[i]) {
                (Some(g), Some(LeafKind::Param)) => Some((NodeId(i), g)),
                _ => None,
            }
        })
    }
}

fn broadcast_shape(a: [usize; 2], b: [usize; 2]) -> Option<[usize; 2]> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    Some([dim(a[0], b[0])?, dim(a[1], b[1])?])
}

/// Applies `f` elementwise with 2-D broadcasting into a buffer of shape `out`.
fn zip_broadcast(
    a: &[f64],
    sa: [usize; 2],
    b: &[f64],
    sb: [usize; 2],
    out: [usize; 2],
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    if sa == sb {
        return a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
    }
    let [rows, cols] = out;
    let mut res = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let ra = if sa[0] == 1 { 0 } else { r };
        let rb = if sb[0] == 1 { 0 } else { r };
        let row_a = &a[ra * sa[1]..(ra + 1) * sa[1]];
        let row_b = &b[rb * sb[1]..(rb + 1) * sb[1]];
        match (sa[1] == cols, sb[1] == cols) {
            (true, true) => res.extend(row_a.iter().zip(row_b).map(|(&x, &y)| f(x, y))),
            (true, false) => res.extend(row_a.iter().map(|&x| f(x, row_b[0]))),
            (false, true) => res.extend(row_b.iter().map(|&y| f(row_a[0], y))),
            (false, false) => res.extend(std::iter::repeat(f(row_a[0], row_b[0])).take(cols)),
        }
    }
    res
}

/// Sums a broadcast gradient back down to `target` shape.
fn reduce_to(g: &[f64], out: [usize; 2], target: [usize; 2]) -> Vec<f64> {
    if out == target {
        return g.to_vec();
    }
    let mut res = vec![0.0; target[0] * target[1]];
    for r in 0..out[0] {
        let tr = if target[0] == 1 { 0 } else { r };
        let row = &g[r * out[1]..(r + 1) * out[1]];
        if target[1] == out[1] {
            for (acc, &v) in res[tr * target[1]..(tr + 1) * target[1]].iter_mut().zip(row) {
                *acc += v;
            }
        } else {
            res[tr] += row.iter().sum::<f64>();
        }
    }
    res
}

fn accumulate(slot: &mut Option<Vec<f64>>, contribution: Vec<f64>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(contribution).for_each(|(a, c)| *a += c),
        None => *slot = Some(contribution),
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

    pub fn shape(&self, id: NodeId) -> [usize; 2] {
        self.nodes[id.0].shape
    }

    /// Primal value of a node after forward, or of a leaf with a stored value.
    pub fn value(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes.get(id.0).and_then(|n| n.value.as_ref())
    }

    fn shape_err(&self, op: &'static str, detail: String) -> Error {
        Error::Shape {
            node: self.nodes.len(),
            op,
            detail,
        }
    }

    fn leaf(&mut self, kind: LeafKind, shape: [usize; 2], value: Option<Tensor>) -> Result<NodeId> {
        if let Some(v) = &value {
            if v.shape() != shape {
                return Err(self.shape_err("leaf", format!("expected rank-2 tensor, got {:?}", v.shape())));
            }
        }
        self.nodes.push(Node {
            op: Op::Leaf(kind),
            shape,
            value,
            aux: None,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn rank2(&self, t: &Tensor) -> Result<[usize; 2]> {
        match t.shape() {
            &[r, c] => Ok([r, c]),
            s => Err(self.shape_err("leaf", format!("expected rank-2 tensor, got {s:?}"))),
        }
    }

    pub fn param(&mut self, value: Tensor) -> Result<NodeId> {
        let s = self.rank2(&value)?;
        self.leaf(LeafKind::Param, s, Some(value))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        let s = self.rank2(&value)?;
        self.leaf(LeafKind::Constant, s, Some(value))
    }

    /// Placeholder of a declared shape, bound later in [`Tape::forward`].
    pub fn input(&mut self, rows: usize, cols: usize) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf(LeafKind::Input),
            shape: [rows, cols],
            value: None,
            aux: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, shape: [usize; 2]) -> NodeId {
        self.nodes.push(Node {
            op,
            shape,
            value: None,
            aux: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, op: Op) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out = broadcast_shape(sa, sb)
            .ok_or_else(|| self.shape_err(op.name(), format!("cannot broadcast {sa:?} with {sb:?}")))?;
        Ok(self.push(op, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Sub(a, b))
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Mul(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(self.shape_err("matmul", format!("inner dimensions differ: {sa:?} x {sb:?}")));
        }
        Ok(self.push(Op::MatMul(a, b), [sa[0], sb[1]]))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        self.push(Op::Sin(a), s)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        self.push(Op::Cos(a), s)
    }

    pub fn powi(&mut self, a: NodeId, exponent: i32) -> NodeId {
        let s = self.shape(a);
        self.push(Op::Powi(a, exponent), s)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        self.push(Op::Square(a), s)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let s = self.shape(a);
        self.push(Op::Scale(a, factor), s)
    }

    /// Sum of all entries, shape `[1, 1]`.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), [1, 1])
    }

    /// Mean of all entries, shape `[1, 1]`.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a), [1, 1])
    }

    /// Selects (and possibly repeats) columns.
    pub fn columns(&mut self, a: NodeId, cols: impl Into<Arc<[usize]>>) -> Result<NodeId> {
        let cols = cols.into();
        let s = self.shape(a);
        if let Some(&bad) = cols.iter().find(|&&c| c >= s[1]) {
            return Err(self.shape_err("columns", format!("column {bad} out of range for {s:?}")));
        }
        let shape = [s[0], cols.len()];
        Ok(self.push(Op::Columns(a, cols), shape))
    }

    pub fn column(&mut self, a: NodeId, col: usize) -> Result<NodeId> {
        self.columns(a, vec![col])
    }

    /// Gathers (and possibly repeats) rows.
    pub fn rows(&mut self, a: NodeId, rows: impl Into<Arc<[usize]>>) -> Result<NodeId> {
        let rows = rows.into();
        let s = self.shape(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= s[0]) {
            return Err(self.shape_err("rows", format!("row {bad} out of range for {s:?}")));
        }
        let shape = [rows.len(), s[1]];
        Ok(self.push(Op::Rows(a, rows), shape))
    }

    pub fn concat_columns(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| self.shape_err("concat_columns", "no inputs".into()))?;
        let rows = self.shape(*first)[0];
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != rows {
                return Err(self.shape_err("concat_columns", format!("row count {} != {rows}", s[0])));
            }
            cols += s[1];
        }
        Ok(self.push(Op::ConcatColumns(parts.to_vec()), [rows, cols]))
    }

    fn val(&self, id: NodeId) -> &Tensor {
        self.nodes[id.0].value.as_ref().expect("parent evaluated before child")
    }

    /// Binds inputs (and optionally overrides params/constants), evaluates every
    /// node in order and returns the value of the last recorded node.
    pub fn forward(&mut self, bindings: &[(NodeId, Tensor)]) -> Result<&Tensor> {
        for (id, t) in bindings {
            let node = self.nodes.get(id.0).ok_or_else(|| Error::invalid(format!("unknown node {}", id.0)))?;
            if !matches!(node.op, Op::Leaf(_)) {
                return Err(Error::invalid(format!("node {} is not a leaf", id.0)));
            }
            if t.shape() != node.shape {
                return Err(Error::Shape {
                    node: id.0,
                    op: "leaf",
                    detail: format!("binding shape {:?} != declared {:?}", t.shape(), node.shape),
                });
            }
        }
        for (id, t) in bindings {
            self.nodes[id.0].value = Some(t.clone());
        }
        for i in 0..self.nodes.len() {
            if let Op::Leaf(_) = self.nodes[i].op {
                if self.nodes[i].value.is_none() {
                    return Err(Error::Unbound(i));
                }
                continue;
            }
            let (value, aux) = self.eval_node(i);
            self.nodes[i].value = Some(value);
            self.nodes[i].aux = aux;
        }
        self.nodes
            .last()
            .and_then(|n| n.value.as_ref())
            .ok_or_else(|| Error::invalid("empty tape"))
    }

    fn eval_node(&self, i: usize) -> (Tensor, Option<Vec<f64>>) {
        let node = &self.nodes[i];
        let [rows, cols] = node.shape;
        let binary = |a: NodeId, b: NodeId, f: fn(f64, f64) -> f64| {
            let (ta, tb) = (self.val(a), self.val(b));
            zip_broadcast(ta.values(), self.shape(a), tb.values(), self.shape(b), node.shape, f)
        };
        let mut aux = None;
        let values = match &node.op {
            Op::Leaf(_) => unreachable!(),
            Op::Add(a, b) => binary(*a, *b, |x, y| x + y),
            Op::Sub(a, b) => binary(*a, *b, |x, y| x - y),
            Op::Mul(a, b) => binary(*a, *b, |x, y| x * y),
            Op::MatMul(a, b) => {
                let k = self.shape(*a)[1];
                let mut out = vec![0.0; rows * cols];
                gemm(rows, k, cols, self.val(*a).values(), (k, 1), self.val(*b).values(), (cols, 1), 0.0, &mut out);
                out
            }
            // cos recorded right after sin of the same node reuses its values
            Op::Cos(a) if i > 0 && matches!(self.nodes[i - 1].op, Op::Sin(p) if p == *a) => {
                let prev = &self.nodes[i - 1];
                aux = Some(prev.value.as_ref().expect("evaluated").values().to_vec());
                prev.aux.clone().expect("sin aux")
            }
            Op::Sin(a) | Op::Cos(a) => {
                let src = self.val(*a).values();
                let mut main = Vec::with_capacity(src.len());
                let mut other = Vec::with_capacity(src.len());
                let is_sin = matches!(node.op, Op::Sin(_));
                for &x in src {
                    let (s, c) = x.sin_cos();
                    if is_sin {
                        main.push(s);
                        other.push(c);
                    } else {
                        main.push(c);
                        other.push(s);
                    }
                }
                aux = Some(other);
                main
            }
            Op::Powi(a, k) => self.val(*a).values().iter().map(|x| x.powi(*k)).collect(),
            Op::Square(a) => self.val(*a).values().iter().map(|x| x * x).collect(),
            Op::Scale(a, c) => self.val(*a).values().iter().map(|x| x * c).collect(),
            Op::Sum(a) => vec![self.val(*a).values().iter().sum()],
            Op::Mean(a) => {
                let v = self.val(*a).values();
                vec![v.iter().sum::<f64>() / v.len() as f64]
            }
            Op::Columns(a, sel) => {
                let src = self.val(*a);
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let row = src.row_slice(r);
                    out.extend(sel.iter().map(|&c| row[c]));
                }
                out
            }
            Op::Rows(a, sel) => {
                let src = self.val(*a);
                let mut out = Vec::with_capacity(rows * cols);
                for &r in sel.iter() {
                    out.extend_from_slice(src.row_slice(r));
                }
                out
            }
            Op::ConcatColumns(parts) => {
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for &p in parts {
                        out.extend_from_slice(self.val(p).row_slice(r));
                    }
                }
                out
            }
        };
        (Tensor::matrix(rows, cols, values), aux)
    }

    /// Reverse sweep from `output` seeded with `seed`.
    pub fn backward(&self, output: NodeId, seed: &Tensor) -> Result<Gradients> {
        let out_node = self
            .nodes
            .get(output.0)
            .ok_or_else(|| Error::invalid(format!("unknown node {}", output.0)))?;
        if out_node.value.is_none() {
            return Err(Error::NotEvaluated);
        }
        if seed.shape() != out_node.shape {
            return Err(Error::Shape {
                node: output.0,
                op: "seed",
                detail: format!("seed shape {:?} != output shape {:?}", seed.shape(), out_node.shape),
            });
        }
        let n = output.0 + 1;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n];
        adj[output.0] = Some(seed.values().to_vec());

        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let out = node.shape;
            match &node.op {
                Op::Leaf(_) => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut adj[a.0], reduce_to(&g, out, self.shape(a)));
                    accumulate(&mut adj[b.0], reduce_to(&g, out, self.shape(b)));
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut adj[a.0], reduce_to(&g, out, self.shape(a)));
                    let neg: Vec<f64> = reduce_to(&g, out, self.shape(b)).into_iter().map(|v| -v).collect();
                    accumulate(&mut adj[b.0], neg);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (sa, sb) = (self.shape(a), self.shape(b));
                    let gb_full = zip_broadcast(&g, out, self.val(a).values(), sa, out, |x, y| x * y);
                    let ga_full = zip_broadcast(&g, out, self.val(b).values(), sb, out, |x, y| x * y);
                    accumulate(&mut adj[a.0], reduce_to(&ga_full, out, sa));
                    accumulate(&mut adj[b.0], reduce_to(&gb_full, out, sb));
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let [m, k] = self.shape(a);
                    let nn = out[1];
                    // dA = G B^T, dB = A^T G
                    let mut ga = vec![0.0; m * k];
                    gemm(m, nn, k, &g, (nn, 1), self.val(b).values(), (1, nn), 0.0, &mut ga);
                    let mut gb = vec![0.0; k * nn];
                    gemm(k, m, nn, self.val(a).values(), (1, k), &g, (nn, 1), 0.0, &mut gb);
                    accumulate(&mut adj[a.0], ga);
                    accumulate(&mut adj[b.0], gb);
                }
                Op::Sin(a) => {
                    let cos = node.aux.as_ref().expect("sin aux");
                    accumulate(&mut adj[a.0], g.iter().zip(cos).map(|(g, c)| g * c).collect());
                }
                Op::Cos(a) => {
                    let sin = node.aux.as_ref().expect("cos aux");
                    accumulate(&mut adj[a.0], g.iter().zip(sin).map(|(g, s)| -g * s).collect());
                }
                Op::Powi(a, k) => {
                    let k = *k;
                    let x = self.val(*a).values();
                    let d: Vec<f64> = if k == 0 {
                        vec![0.0; x.len()]
                    } else {
                        g.iter().zip(x).map(|(g, x)| g * k as f64 * x.powi(k - 1)).collect()
                    };
                    accumulate(&mut adj[a.0], d);
                }
                Op::Square(a) => {
                    let x = self.val(*a).values();
                    accumulate(&mut adj[a.0], g.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect());
                }
                Op::Scale(a, c) => {
                    accumulate(&mut adj[a.0], g.iter().map(|g| g * c).collect());
                }
                Op::Sum(a) => {
                    let len = self.val(*a).len();
                    accumulate(&mut adj[a.0], vec![g[0]; len]);
                }
                Op::Mean(a) => {
                    let len = self.val(*a).len();
                    accumulate(&mut adj[a.0], vec![g[0] / len as f64; len]);
                }
                Op::Columns(a, sel) => {
                    let [r, c] = self.shape(*a);
                    let mut d = vec![0.0; r * c];
                    for row in 0..r {
                        for (j, &col) in sel.iter().enumerate() {
                            d[row * c + col] += g[row * sel.len() + j];
                        }
                    }
                    accumulate(&mut adj[a.0], d);
                }
                Op::Rows(a, sel) => {
                    let [r, c] = self.shape(*a);
                    let mut d = vec![0.0; r * c];
                    for (j, &row) in sel.iter().enumerate() {
                        for col in 0..c {
                            d[row * c + col] += g[j * c + col];
                        }
                    }
                    accumulate(&mut adj[a.0], d);
                }
                Op::ConcatColumns(parts) => {
                    let rows = out[0];
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.shape(p)[1];
                        let mut d = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            d.extend_from_slice(&g[r * out[1] + offset..r * out[1] + offset + pc]);
                        }
                        accumulate(&mut adj[p.0], d);
                        offset += pc;
                    }
                }
            }
        }

        let mut leaves = vec![None; self.nodes.len()];
        let mut kinds = vec![None; self.nodes.len()];
        for (i, slot) in adj.into_iter().enumerate() {
            if let Op::Leaf(kind) = self.nodes[i].op {
                kinds[i] = Some(kind);
                if let Some(g) = slot {
                    let [r, c] = self.nodes[i].shape;
                    leaves[i] = Some(Tensor::matrix(r, c, g));
                }
            }
        }
        Ok(Gradients { leaves, kinds })
    }
}
