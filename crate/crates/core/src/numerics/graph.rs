//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied during a forward pass as a
//! node in a linear tape. Nodes are appended in evaluation order, so the tape
//! is already topologically sorted and [`Graph::backward`] only has to walk it
//! in reverse. Parameters enter the graph by reference ([`Graph::param`]) and
//! are never copied; [`Graph::backward`] consumes the graph and returns the
//! gradients of every tracked leaf as an owned [`Gradients`] table.
//!
//! Tensors of rank 2 are the working currency. Sequences are stored
//! time-major: row `t * batch + b` holds step `t` of sequence `b`.

use std::borrow::Cow;

use super::kernels::{self, gemm, Layout};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
    },
    Sum(Var),
    NarrowCols {
        x: Var,
        start: usize,
    },
    Rows {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Select {
        mask: Vec<bool>,
        on: Var,
        off: Var,
    },
    MaskedMean {
        x: Var,
        mask: Vec<bool>,
        counts: Vec<usize>,
    },
}

struct Node<'p> {
    shape: Vec<usize>,
    value: Cow<'p, [f64]>,
    op: Op,
    tracked: bool,
}

/// A dynamic computation graph.
#[derive(Default)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape {
        [r, c] => (*r, *c),
        [c] => (1, *c),
        [] => (1, 1),
        _ => (shape[..shape.len() - 1].iter().product(), shape[shape.len() - 1]),
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Cow<'p, [f64]>, op: Op, tracked: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<'p> {
        &self.nodes[v.0]
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// Borrows a tensor as a leaf; it is tracked iff it requires grad.
    pub fn param(&mut self, t: &'p Tensor) -> Var {
        self.push(t.shape().to_vec(), Cow::Borrowed(t.data()), Op::Leaf, t.requires_grad())
    }

    /// An owned, untracked leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        let data = t.data().to_vec();
        self.push(shape, Cow::Owned(data), Op::Leaf, false)
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Var {
        let n = shape.iter().product();
        self.push(shape, Cow::Owned(vec![0.0; n]), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.to_vec()).expect("node shape is consistent")
    }

    fn require_rank2(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Shape(format!("{what}: expected rank-2, got {s:?}"))),
        }
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.require_rank2(a, "matmul lhs")?;
        let (k2, n) = self.require_rank2(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul: {m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a),
            Layout::Normal,
            self.value(b),
            Layout::Normal,
            &mut out,
            false,
        );
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(vec![m, n], Cow::Owned(out), Op::MatMul(a, b), tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(shape, Cow::Owned(out), Op::Add(a, b), tracked))
    }

    /// Adds a rank-1 bias to every row of a rank-2 tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.require_rank2(x, "add_bias")?;
        if self.shape(bias) != [c] {
            return Err(Error::Shape(format!(
                "add_bias: bias {:?} for {r}x{c}",
                self.shape(bias)
            )));
        }
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(c) {
            row.iter_mut().zip(b).for_each(|(o, v)| *o += v);
        }
        let tracked = self.tracked(&[x, bias]);
        Ok(self.push(vec![r, c], Cow::Owned(out), Op::AddBias(x, bias), tracked))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(shape, Cow::Owned(out), Op::Mul(a, b), tracked))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out: Vec<f64> = self.value(x).iter().map(|v| v * s).collect();
        let shape = self.shape(x).to_vec();
        let tracked = self.tracked(&[x]);
        self.push(shape, Cow::Owned(out), Op::Scale(x, s), tracked)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out: Vec<f64> = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let tracked = self.tracked(&[x]);
        self.push(shape, Cow::Owned(out), op, tracked)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, kernels::sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Row-wise softmax of a rank-2 tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.require_rank2(x, "softmax")?;
        if c == 0 {
            return Err(Error::Shape("softmax: empty row".into()));
        }
        let mut out = vec![0.0; r * c];
        for (src, dst) in self.value(x).chunks_exact(c).zip(out.chunks_exact_mut(c)) {
            kernels::softmax_row(src, dst);
        }
        let tracked = self.tracked(&[x]);
        Ok(self.push(vec![r, c], Cow::Owned(out), Op::Softmax(x), tracked))
    }

    /// Mean cross-entropy of `batch × classes` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.require_rank2(logits, "cross_entropy")?;
        if r != targets.len() {
            return Err(Error::Shape(format!(
                "cross_entropy: {r} rows, {} targets",
                targets.len()
            )));
        }
        if r == 0 || c == 0 {
            return Err(Error::Shape("cross_entropy: empty batch".into()));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Index(format!("target {bad} out of range for {c} classes")));
        }
        let loss = self
            .value(logits)
            .chunks_exact(c)
            .zip(targets)
            .map(|(row, &t)| kernels::log_sum_exp(row) - row[t])
            .sum::<f64>()
            / r as f64;
        let tracked = self.tracked(&[logits]);
        Ok(self.push(
            vec![],
            Cow::Owned(vec![loss]),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            tracked,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        let tracked = self.tracked(&[x]);
        self.push(vec![], Cow::Owned(vec![total]), Op::Sum(x), tracked)
    }

    /// Columns `start..start + len` of a rank-2 tensor.
    pub fn narrow_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.require_rank2(x, "narrow_cols")?;
        if start + len > c {
            return Err(Error::Shape(format!("narrow_cols: {start}+{len} > {c}")));
        }
        let mut out = Vec::with_capacity(r * len);
        for row in self.value(x).chunks_exact(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let tracked = self.tracked(&[x]);
        Ok(self.push(vec![r, len], Cow::Owned(out), Op::NarrowCols { x, start }, tracked))
    }

    /// Rows `start..start + len` of a rank-2 tensor.
    pub fn rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.require_rank2(x, "rows")?;
        if start + len > r {
            return Err(Error::Shape(format!("rows: {start}+{len} > {r}")));
        }
        let out = self.value(x)[start * c..(start + len) * c].to_vec();
        let tracked = self.tracked(&[x]);
        Ok(self.push(vec![len, c], Cow::Owned(out), Op::Rows { x, start }, tracked))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Shape("concat_cols: no parts".into()))?;
        let (r, _) = self.require_rank2(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.require_rank2(p, "concat_cols")?;
            if pr != r {
                return Err(Error::Shape(format!("concat_cols: {pr} rows vs {r}")));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        let tracked = self.tracked(parts);
        Ok(self.push(vec![r, total], Cow::Owned(out), Op::ConcatCols(parts.to_vec()), tracked))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Shape("concat_rows: no parts".into()))?;
        let (_, c) = self.require_rank2(first, "concat_rows")?;
        let mut rows = 0;
        for &p in parts {
            let (pr, pc) = self.require_rank2(p, "concat_rows")?;
            if pc != c {
                return Err(Error::Shape(format!("concat_rows: {pc} cols vs {c}")));
            }
            rows += pr;
        }
        let mut out = Vec::with_capacity(rows * c);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let tracked = self.tracked(parts);
        Ok(self.push(vec![rows, c], Cow::Owned(out), Op::ConcatRows(parts.to_vec()), tracked))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.require_rank2(table, "gather")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Index(format!("token id {bad} out of range for vocab of {v}")));
        }
        let src = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let tracked = self.tracked(&[table]);
        Ok(self.push(
            vec![ids.len(), d],
            Cow::Owned(out),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            tracked,
        ))
    }

    /// Per-row choice: row `i` comes from `on` where `mask[i]`, else from `off`.
    pub fn select(&mut self, mask: &[bool], on: Var, off: Var) -> Result<Var> {
        self.same_shape(on, off, "select")?;
        let (r, c) = self.require_rank2(on, "select")?;
        if mask.len() != r {
            return Err(Error::Shape(format!("select: mask {} for {r} rows", mask.len())));
        }
        let mut out = Vec::with_capacity(r * c);
        for (i, &m) in mask.iter().enumerate() {
            let src = if m { self.value(on) } else { self.value(off) };
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let tracked = self.tracked(&[on, off]);
        Ok(self.push(
            vec![r, c],
            Cow::Owned(out),
            Op::Select {
                mask: mask.to_vec(),
                on,
                off,
            },
            tracked,
        ))
    }

    /// Mean over unmasked time steps of a time-major `(steps·batch) × D`
    /// tensor, giving `batch × D`.
    pub fn masked_mean(&mut self, x: Var, mask: &[bool], batch: usize) -> Result<Var> {
        let (r, d) = self.require_rank2(x, "masked_mean")?;
        if batch == 0 || r % batch != 0 || mask.len() != r {
            return Err(Error::Shape(format!(
                "masked_mean: {r} rows, batch {batch}, mask {}",
                mask.len()
            )));
        }
        let mut counts = vec![0usize; batch];
        for (i, &m) in mask.iter().enumerate() {
            if m {
                counts[i % batch] += 1;
            }
        }
        if let Some(b) = counts.iter().position(|&c| c == 0) {
            return Err(Error::DegenerateInput(format!("sequence {b} has no unmasked steps")));
        }
        let src = self.value(x);
        let mut out = vec![0.0; batch * d];
        for (i, &m) in mask.iter().enumerate() {
            if m {
                let b = i % batch;
                out[b * d..(b + 1) * d]
                    .iter_mut()
                    .zip(&src[i * d..(i + 1) * d])
                    .for_each(|(o, v)| *o += v);
            }
        }
        for (b, &n) in counts.iter().enumerate() {
            out[b * d..(b + 1) * d].iter_mut().for_each(|o| *o /= n as f64);
        }
        let tracked = self.tracked(&[x]);
        Ok(self.push(
            vec![batch, d],
            Cow::Owned(out),
            Op::MaskedMean {
                x,
                mask: mask.to_vec(),
                counts,
            },
            tracked,
        ))
    }

    /// Reverse sweep from a scalar output. Consumes the graph.
    pub fn backward(self, output: Var) -> Result<Gradients> {
        let out = self.node(output);
        if out.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                out.shape
            )));
        }
        if !out.tracked {
            return Err(Error::Contract(
                "output is not reachable from any tracked parameter".into(),
            ));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &upstream, &mut grads);
        }

        let leaf_grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match node.op {
                Op::Leaf if node.tracked => g,
                _ => None,
            })
            .collect();
        Ok(Gradients { grads: leaf_grads })
    }

    fn propagate(&self, node: &Node<'p>, up: &[f64], grads: &mut [Option<Vec<f64>>]) {
        // Accumulation buffer for an input, allocated on first touch.
        fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node<'_>], v: Var) -> Option<&'g mut Vec<f64>> {
            if !nodes[v.0].tracked {
                return None;
            }
            let len = nodes[v.0].value.len();
            Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
        }
        let nodes = &self.nodes;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims2(&nodes[a.0].shape);
                let n = dims2(&nodes[b.0].shape).1;
                if let Some(ga) = slot(grads, nodes, *a) {
                    gemm(
                        m,
                        n,
                        k,
                        up,
                        Layout::Normal,
                        &nodes[b.0].value,
                        Layout::Transposed,
                        ga,
                        true,
                    );
                }
                if let Some(gb) = slot(grads, nodes, *b) {
                    gemm(
                        k,
                        m,
                        n,
                        &nodes[a.0].value,
                        Layout::Transposed,
                        up,
                        Layout::Normal,
                        gb,
                        true,
                    );
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(g) = slot(grads, nodes, *v) {
                        g.iter_mut().zip(up).for_each(|(g, u)| *g += u);
                    }
                }
            }
            Op::AddBias(x, bias) => {
                if let Some(g) = slot(grads, nodes, *x) {
                    g.iter_mut().zip(up).for_each(|(g, u)| *g += u);
                }
                if let Some(g) = slot(grads, nodes, *bias) {
                    let c = g.len();
                    for row in up.chunks_exact(c) {
                        g.iter_mut().zip(row).for_each(|(g, u)| *g += u);
                    }
                }
            }
            Op::Mul(a, b) => {
                if let Some(g) = slot(grads, nodes, *a) {
                    let other = &nodes[b.0].value;
                    for ((g, u), o) in g.iter_mut().zip(up).zip(other.iter()) {
                        *g += u * o;
                    }
                }
                if let Some(g) = slot(grads, nodes, *b) {
                    let other = &nodes[a.0].value;
                    for ((g, u), o) in g.iter_mut().zip(up).zip(other.iter()) {
                        *g += u * o;
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(g) = slot(grads, nodes, *x) {
                    g.iter_mut().zip(up).for_each(|(g, u)| *g += u * s);
                }
            }
            Op::Sigmoid(x) => {
                if let Some(g) = slot(grads, nodes, *x) {
                    for ((g, u), y) in g.iter_mut().zip(up).zip(node.value.iter()) {
                        *g += u * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(g) = slot(grads, nodes, *x) {
                    for ((g, u), y) in g.iter_mut().zip(up).zip(node.value.iter()) {
                        *g += u * (1.0 - y * y);
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(g) = slot(grads, nodes, *x) {
                    for ((g, u), y) in g.iter_mut().zip(up).zip(node.value.iter()) {
                        if *y > 0.0 {
                            *g += u;
                        }
                    }
                }
            }
            Op::Softmax(x) => {
                if let Some(g) = slot(grads, nodes, *x) {
                    let c = node.shape[1];
                    for ((g, u), y) in g
                        .chunks_exact_mut(c)
                        .zip(up.chunks_exact(c))
                        .zip(node.value.chunks_exact(c))
                    {
                        let dot: f64 = u.iter().zip(y).map(|(u, y)| u * y).sum();
                        for j in 0..c {
                            g[j] += y[j] * (u[j] - dot);
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, targets } => {
                if let Some(g) = slot(grads, nodes, *logits) {
                    let (r, c) = dims2(&nodes[logits.0].shape);
                    let coef = up[0] / r as f64;
                    let mut probs = vec![0.0; c];
                    for ((g, row), &t) in g
                        .chunks_exact_mut(c)
                        .zip(nodes[logits.0].value.chunks_exact(c))
                        .zip(targets)
                    {
                        kernels::softmax_row(row, &mut probs);
                        probs[t] -= 1.0;
                        g.iter_mut().zip(&probs).for_each(|(g, p)| *g += coef * p);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(g) = slot(grads, nodes, *x) {
                    g.iter_mut().for_each(|g| *g += up[0]);
                }
            }
            Op::NarrowCols { x, start } => {
                if let Some(g) = slot(grads, nodes, *x) {
                    let c = nodes[x.0].shape[1];
                    let len = node.shape[1];
                    for (g, u) in g.chunks_exact_mut(c).zip(up.chunks_exact(len)) {
                        g[*start..start + len].iter_mut().zip(u).for_each(|(g, u)| *g += u);
                    }
                }
            }
            Op::Rows { x, start } => {
                if let Some(g) = slot(grads, nodes, *x) {
                    let c = node.shape[1];
                    g[start * c..start * c + up.len()]
                        .iter_mut()
                        .zip(up)
                        .for_each(|(g, u)| *g += u);
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.shape[1];
                let mut offset = 0;
                for p in parts {
                    let w = nodes[p.0].shape[1];
                    if let Some(g) = slot(grads, nodes, *p) {
                        for (g, u) in g.chunks_exact_mut(w).zip(up.chunks_exact(total)) {
                            g.iter_mut().zip(&u[offset..offset + w]).for_each(|(g, u)| *g += u);
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    if let Some(g) = slot(grads, nodes, *p) {
                        g.iter_mut().zip(&up[offset..offset + len]).for_each(|(g, u)| *g += u);
                    }
                    offset += len;
                }
            }
            Op::Gather { table, ids } => {
                if let Some(g) = slot(grads, nodes, *table) {
                    let d = node.shape[1];
                    for (&id, u) in ids.iter().zip(up.chunks_exact(d)) {
                        g[id * d..(id + 1) * d].iter_mut().zip(u).for_each(|(g, u)| *g += u);
                    }
                }
            }
            Op::Select { mask, on, off } => {
                let c = node.shape[1];
                for (v, want) in [(on, true), (off, false)] {
                    if let Some(g) = slot(grads, nodes, *v) {
                        for ((g, u), &m) in g.chunks_exact_mut(c).zip(up.chunks_exact(c)).zip(mask) {
                            if m == want {
                                g.iter_mut().zip(u).for_each(|(g, u)| *g += u);
                            }
                        }
                    }
                }
            }
            Op::MaskedMean { x, mask, counts } => {
                if let Some(g) = slot(grads, nodes, *x) {
                    let d = node.shape[1];
                    let batch = counts.len();
                    for (i, (g, &m)) in g.chunks_exact_mut(d).zip(mask).enumerate() {
                        if m {
                            let b = i % batch;
                            let inv = 1.0 / counts[b] as f64;
                            g.iter_mut()
                                .zip(&up[b * d..(b + 1) * d])
                                .for_each(|(g, u)| *g += u * inv);
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of tracked leaves, produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for a leaf; `None` if the leaf is untracked or unreachable.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the leaf's gradient into `target` (no-op when unreachable).
    pub fn accumulate_into(&self, v: Var, target: &mut Tensor) -> Result<()> {
        match self.get(v) {
            Some(g) => target.accumulate_grad(g),
            None => Ok(()),
        }
    }
}
