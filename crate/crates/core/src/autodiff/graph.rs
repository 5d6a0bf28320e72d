use std::borrow::Cow;
use std::collections::HashMap;

use super::{Grads, ParamStore, Scalar, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("shape mismatch in {op}: {left:?} vs {right:?}")]
pub struct ShapeError {
    pub op: &'static str,
    pub left: (usize, usize),
    pub right: (usize, usize),
}

enum Op<T> {
    Input,
    Param {
        name: String,
        shape: Vec<usize>,
    },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Embedding {
        table: Var,
        ids: Vec<u32>,
    },
    EmbedLinear {
        table: Var,
        weight: Var,
        ids: Vec<u32>,
    },
    MaxPoolSet {
        input: Var,
        set: usize,
        argmax: Vec<u32>,
    },
    /// Output `[h | c]`; `acts` caches the activated gates and `tanh(c)`.
    LstmGates {
        gates: Var,
        cell: Var,
        acts: Vec<T>,
    },
    SoftmaxXent {
        logits: Var,
        targets: Vec<Option<u32>>,
        probs: Vec<T>,
    },
    Sum(Vec<Var>),
    Scale(Var, T),
}

struct Node<'p, T: Scalar> {
    rows: usize,
    cols: usize,
    value: Cow<'p, [T]>,
    op: Op<T>,
    needs_grad: bool,
}

/// A tape of matrix operations. Parameters are borrowed from a [`ParamStore`]
/// for the lifetime `'p`; [`Graph::backward`] returns their gradients by name.
pub struct Graph<'p, T: Scalar> {
    nodes: Vec<Node<'p, T>>,
    params: HashMap<String, Var>,
}

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    fn push(&mut self, rows: usize, cols: usize, value: Cow<'p, [T]>, op: Op<T>) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        let needs_grad = match &op {
            Op::Input => false,
            Op::Param { .. } => true,
            other => inputs(other).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let (r, c) = self.shape(v);
        Tensor::from_vec(&[r, c], self.value(v).to_vec())
    }

    /// A constant; no gradient flows into it.
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Var {
        assert_eq!(rows * cols, data.len(), "input data does not match {rows}x{cols}");
        self.push(rows, cols, Cow::Owned(data), Op::Input)
    }

    /// The named parameter, added once per graph and then reused.
    pub fn param(&mut self, store: &'p ParamStore<T>, name: &str) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let t = store
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        let v = self.push(
            t.rows(),
            t.cols(),
            Cow::Borrowed(&t.data),
            Op::Param {
                name: name.to_string(),
                shape: t.shape.clone(),
            },
        );
        self.params.insert(name.to_string(), v);
        v
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> ShapeError {
        ShapeError {
            op,
            left: self.shape(a),
            right: self.shape(b),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = vec![T::ZERO; m * n];
        T::gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out, false);
        Ok(self.push(m, n, Cow::Owned(out), Op::MatMul(a, b)))
    }

    /// Adds a bias row (any shape with `cols` values) to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, ShapeError> {
        let (m, n) = self.shape(x);
        let b = self.value(bias);
        if b.len() != n {
            return Err(self.mismatch("add_bias", x, bias));
        }
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(n.max(1)) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(self.push(m, n, Cow::Owned(out), Op::AddBias(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("add", a, b));
        }
        let (m, n) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(m, n, Cow::Owned(out), Op::Add(a, b)))
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let (m, n) = self.shape(x);
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        self.push(m, n, Cow::Owned(out), op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| if v > T::ZERO { v } else { T::ZERO }, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, T::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, T::sigmoid, Op::Sigmoid(x))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        self.map(x, |v| v * factor, Op::Scale(x, factor))
    }

    /// Side-by-side concatenation; all parts need the same number of rows.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, ShapeError> {
        let m = self.shape(parts[0]).0;
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).0 != m) {
            return Err(self.mismatch("concat", parts[0], bad));
        }
        let n: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(m, n, Cow::Owned(out), Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks parts vertically; all parts need the same number of columns.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, ShapeError> {
        let n = self.shape(parts[0]).1;
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).1 != n) {
            return Err(self.mismatch("concat_rows", parts[0], bad));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let m = out.len() / n.max(1);
        Ok(self.push(m, n, Cow::Owned(out), Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let (m, n) = self.shape(x);
        assert!(start <= end && end <= n, "column range {start}..{end} outside {n}");
        let w = end - start;
        let v = self.value(x);
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&v[r * n + start..r * n + end]);
        }
        self.push(m, w, Cow::Owned(out), Op::SliceCols(x, start))
    }

    /// Looks up `ids` in `table` and lays every `group` consecutive embeddings
    /// side by side, giving `ids.len() / group` rows.
    pub fn embedding(&mut self, table: Var, ids: &[u32], group: usize) -> Var {
        let (vocab, dim) = self.shape(table);
        assert!(group > 0 && ids.len() % group == 0, "ids not a multiple of group");
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            let id = id as usize;
            assert!(id < vocab, "embedding id {id} outside table of {vocab}");
            out.extend_from_slice(&t[id * dim..(id + 1) * dim]);
        }
        let rows = ids.len() / group;
        self.push(
            rows,
            group * dim,
            Cow::Owned(out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// `embedding(table, ids, group) · weight` without materializing the
    /// embedded rows. For batches larger than the vocabulary it multiplies each
    /// position's block of `weight` by the table once and sums looked-up rows.
    pub fn embed_linear(
        &mut self,
        table: Var,
        weight: Var,
        ids: &[u32],
        group: usize,
    ) -> Result<Var, ShapeError> {
        let (vocab, dim) = self.shape(table);
        let (fan_in, n) = self.shape(weight);
        if fan_in != group * dim {
            return Err(self.mismatch("embed_linear", table, weight));
        }
        assert!(group > 0 && ids.len() % group == 0, "ids not a multiple of group");
        assert!(ids.iter().all(|&id| (id as usize) < vocab), "embedding id outside table");
        let rows = ids.len() / group;
        let t = self.value(table);
        let w = self.value(weight);
        let mut out = vec![T::ZERO; rows * n];
        if rows > vocab {
            let mut proj = vec![T::ZERO; vocab * n];
            for p in 0..group {
                let wp = &w[p * dim * n..(p + 1) * dim * n];
                T::gemm(vocab, dim, n, t, false, wp, false, &mut proj, false);
                for r in 0..rows {
                    let id = ids[r * group + p] as usize;
                    add_into(&mut out[r * n..(r + 1) * n], &proj[id * n..(id + 1) * n]);
                }
            }
        } else {
            let mut x = Vec::with_capacity(rows * fan_in);
            for &id in ids {
                let id = id as usize;
                x.extend_from_slice(&t[id * dim..(id + 1) * dim]);
            }
            T::gemm(rows, fan_in, n, &x, false, w, false, &mut out, false);
        }
        Ok(self.push(
            rows,
            n,
            Cow::Owned(out),
            Op::EmbedLinear {
                table,
                weight,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Elementwise max over consecutive blocks of `set` rows. Ties route the
    /// gradient to the first maximizing row.
    pub fn maxpool_over_set(&mut self, x: Var, set: usize) -> Var {
        let (m, n) = self.shape(x);
        assert!(set > 0 && m % set == 0, "{m} rows do not split into sets of {set}");
        let groups = m / set;
        let v = self.value(x);
        let mut out = Vec::with_capacity(groups * n);
        let mut argmax = Vec::with_capacity(groups * n);
        for g in 0..groups {
            for c in 0..n {
                let mut best = v[g * set * n + c];
                let mut at = 0u32;
                for s in 1..set {
                    let cand = v[(g * set + s) * n + c];
                    if cand > best {
                        best = cand;
                        at = s as u32;
                    }
                }
                out.push(best);
                argmax.push(at);
            }
        }
        self.push(
            groups,
            n,
            Cow::Owned(out),
            Op::MaxPoolSet {
                input: x,
                set,
                argmax,
            },
        )
    }

    /// Gate nonlinearities of an LSTM cell. `gates` holds pre-activations in
    /// `[input | forget | cell | output]` blocks of width `H`; the result is `[h' | c']`.
    pub fn lstm_gates(&mut self, gates: Var, cell: Var) -> Result<Var, ShapeError> {
        let (m, g4) = self.shape(gates);
        let h = g4 / 4;
        if g4 % 4 != 0 || self.shape(cell) != (m, h) {
            return Err(self.mismatch("lstm_gates", gates, cell));
        }
        let gv = self.value(gates);
        let cv = self.value(cell);
        let mut out = vec![T::ZERO; m * 2 * h];
        let mut acts = vec![T::ZERO; m * 5 * h];
        for r in 0..m {
            let g = &gv[r * 4 * h..(r + 1) * 4 * h];
            let a = &mut acts[r * 5 * h..(r + 1) * 5 * h];
            for j in 0..h {
                let i = g[j].sigmoid();
                let f = g[h + j].sigmoid();
                let gg = g[2 * h + j].tanh();
                let o = g[3 * h + j].sigmoid();
                let c = f * cv[r * h + j] + i * gg;
                let tc = c.tanh();
                a[j] = i;
                a[h + j] = f;
                a[2 * h + j] = gg;
                a[3 * h + j] = o;
                a[4 * h + j] = tc;
                out[r * 2 * h + j] = o * tc;
                out[r * 2 * h + h + j] = c;
            }
        }
        Ok(self.push(m, 2 * h, Cow::Owned(out), Op::LstmGates { gates, cell, acts }))
    }

    /// One LSTM step: gates = [x | h] · w + b. Returns `(h', c')`.
    pub fn lstm_cell(
        &mut self,
        x: Var,
        h: Var,
        c: Var,
        w: Var,
        b: Var,
    ) -> Result<(Var, Var), ShapeError> {
        let xh = self.concat(&[x, h])?;
        let pre = self.matmul(xh, w)?;
        let gates = self.add_bias(pre, b)?;
        let state = self.lstm_gates(gates, c)?;
        let hidden = self.shape(h).1;
        let h_next = self.slice_cols(state, 0, hidden);
        let c_next = self.slice_cols(state, hidden, 2 * hidden);
        Ok((h_next, c_next))
    }

    /// Sum over rows of `-log softmax(logits)[target]`; rows with `None` are skipped.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[Option<u32>]) -> Var {
        let (m, n) = self.shape(logits);
        assert_eq!(m, targets.len(), "one target per logits row");
        let v = self.value(logits);
        let mut probs = vec![T::ZERO; m * n];
        let mut loss = T::ZERO;
        for r in 0..m {
            let Some(t) = targets[r] else { continue };
            let row = &v[r * n..(r + 1) * n];
            let lse = softmax_into(row, &mut probs[r * n..(r + 1) * n]);
            loss += lse - row[t as usize];
        }
        self.push(
            1,
            1,
            Cow::Owned(vec![loss]),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Elementwise sum of equally shaped values.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var, ShapeError> {
        let shape = self.shape(parts[0]);
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p) != shape) {
            return Err(self.mismatch("sum", parts[0], bad));
        }
        let mut out = vec![T::ZERO; shape.0 * shape.1];
        for &p in parts {
            for (o, &x) in out.iter_mut().zip(self.value(p)) {
                *o += x;
            }
        }
        Ok(self.push(shape.0, shape.1, Cow::Owned(out), Op::Sum(parts.to_vec())))
    }

    /// Reverse pass from a `1×1` output. Returns gradients of every parameter
    /// that `output` depends on.
    pub fn backward(&self, output: Var) -> Grads<T> {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Vec<T>>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(vec![T::ONE]);
        let mut result = Grads::new();
        for idx in (0..=output.0).rev() {
            let Some(dout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
                let target = &self.nodes[v.0];
                if !target.needs_grad {
                    return;
                }
                let buf = grads[v.0].get_or_insert_with(|| vec![T::ZERO; target.value.len()]);
                f(buf);
            };
            match &node.op {
                Op::Input => {}
                Op::Param { name, shape } => {
                    result.insert(name.clone(), Tensor::from_vec(shape, dout));
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = node.cols;
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    acc(*a, &mut |ga| T::gemm(m, n, k, &dout, false, bv, true, ga, true));
                    acc(*b, &mut |gb| T::gemm(k, m, n, av, true, &dout, false, gb, true));
                }
                Op::AddBias(x, b) => {
                    let n = node.cols;
                    acc(*x, &mut |gx| add_into(gx, &dout));
                    acc(*b, &mut |gb| {
                        for row in dout.chunks_exact(n.max(1)) {
                            add_into(gb, row);
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(*a, &mut |ga| add_into(ga, &dout));
                    acc(*b, &mut |gb| add_into(gb, &dout));
                }
                Op::Relu(x) => acc(*x, &mut |gx| {
                    for ((g, &d), &y) in gx.iter_mut().zip(&dout).zip(node.value.iter()) {
                        if y > T::ZERO {
                            *g += d;
                        }
                    }
                }),
                Op::Tanh(x) => acc(*x, &mut |gx| {
                    for ((g, &d), &y) in gx.iter_mut().zip(&dout).zip(node.value.iter()) {
                        *g += d * (T::ONE - y * y);
                    }
                }),
                Op::Sigmoid(x) => acc(*x, &mut |gx| {
                    for ((g, &d), &y) in gx.iter_mut().zip(&dout).zip(node.value.iter()) {
                        *g += d * y * (T::ONE - y);
                    }
                }),
                Op::Scale(x, factor) => acc(*x, &mut |gx| {
                    for (g, &d) in gx.iter_mut().zip(&dout) {
                        *g += d * *factor;
                    }
                }),
                Op::ConcatCols(parts) => {
                    let n = node.cols;
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.shape(p).1;
                        acc(p, &mut |gp| {
                            for r in 0..node.rows {
                                add_into(
                                    &mut gp[r * c..(r + 1) * c],
                                    &dout[r * n + offset..r * n + offset + c],
                                );
                            }
                        });
                        offset += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        acc(p, &mut |gp| add_into(gp, &dout[offset..offset + len]));
                        offset += len;
                    }
                }
                Op::SliceCols(x, start) => {
                    let n = self.shape(*x).1;
                    let w = node.cols;
                    acc(*x, &mut |gx| {
                        for r in 0..node.rows {
                            add_into(
                                &mut gx[r * n + start..r * n + start + w],
                                &dout[r * w..(r + 1) * w],
                            );
                        }
                    });
                }
                Op::Embedding { table, ids } => {
                    let dim = self.shape(*table).1;
                    acc(*table, &mut |gt| {
                        for (i, &id) in ids.iter().enumerate() {
                            let id = id as usize;
                            add_into(&mut gt[id * dim..(id + 1) * dim], &dout[i * dim..(i + 1) * dim]);
                        }
                    });
                }
                Op::EmbedLinear { table, weight, ids } => {
                    let (vocab, dim) = self.shape(*table);
                    let n = node.cols;
                    let rows = node.rows;
                    let group = ids.len() / rows.max(1);
                    let t = self.value(*table);
                    let w = self.value(*weight);
                    if rows > vocab {
                        // Per position: dproj[c] = sum of dout rows whose id is c.
                        let mut dproj = vec![T::ZERO; vocab * n];
                        for p in 0..group {
                            dproj.fill(T::ZERO);
                            for r in 0..rows {
                                let id = ids[r * group + p] as usize;
                                add_into(&mut dproj[id * n..(id + 1) * n], &dout[r * n..(r + 1) * n]);
                            }
                            let wp = &w[p * dim * n..(p + 1) * dim * n];
                            acc(*weight, &mut |gw| {
                                let gp = &mut gw[p * dim * n..(p + 1) * dim * n];
                                T::gemm(dim, vocab, n, t, true, &dproj, false, gp, true);
                            });
                            acc(*table, &mut |gt| {
                                T::gemm(vocab, n, dim, &dproj, false, wp, true, gt, true);
                            });
                        }
                    } else {
                        let fan_in = group * dim;
                        let mut x = Vec::with_capacity(rows * fan_in);
                        for &id in ids {
                            let id = id as usize;
                            x.extend_from_slice(&t[id * dim..(id + 1) * dim]);
                        }
                        acc(*weight, &mut |gw| T::gemm(fan_in, rows, n, &x, true, &dout, false, gw, true));
                        acc(*table, &mut |gt| {
                            let mut dx = vec![T::ZERO; rows * fan_in];
                            T::gemm(rows, n, fan_in, &dout, false, w, true, &mut dx, false);
                            for (i, &id) in ids.iter().enumerate() {
                                let id = id as usize;
                                add_into(&mut gt[id * dim..(id + 1) * dim], &dx[i * dim..(i + 1) * dim]);
                            }
                        });
                    }
                }
                Op::MaxPoolSet { input, set, argmax } => {
                    let n = node.cols;
                    acc(*input, &mut |gx| {
                        for g in 0..node.rows {
                            for c in 0..n {
                                let s = argmax[g * n + c] as usize;
                                gx[(g * set + s) * n + c] += dout[g * n + c];
                            }
                        }
                    });
                }
                Op::LstmGates { gates, cell, acts } => {
                    let h = node.cols / 2;
                    let m = node.rows;
                    let cv = self.value(*cell);
                    let mut dgates = vec![T::ZERO; m * 4 * h];
                    let mut dcell = vec![T::ZERO; m * h];
                    for r in 0..m {
                        let a = &acts[r * 5 * h..(r + 1) * 5 * h];
                        let d = &dout[r * 2 * h..(r + 1) * 2 * h];
                        let dg = &mut dgates[r * 4 * h..(r + 1) * 4 * h];
                        for j in 0..h {
                            let (i, f, gg, o, tc) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j], a[4 * h + j]);
                            let dh = d[j];
                            let dc = d[h + j] + dh * o * (T::ONE - tc * tc);
                            dg[j] = dc * gg * i * (T::ONE - i);
                            dg[h + j] = dc * cv[r * h + j] * f * (T::ONE - f);
                            dg[2 * h + j] = dc * i * (T::ONE - gg * gg);
                            dg[3 * h + j] = dh * tc * o * (T::ONE - o);
                            dcell[r * h + j] = dc * f;
                        }
                    }
                    acc(*gates, &mut |gx| add_into(gx, &dgates));
                    acc(*cell, &mut |gx| add_into(gx, &dcell));
                }
                Op::SoftmaxXent {
                    logits,
                    targets,
                    probs,
                } => {
                    let n = self.shape(*logits).1;
                    let scale = dout[0];
                    acc(*logits, &mut |gx| {
                        for (r, t) in targets.iter().enumerate() {
                            let Some(t) = t else { continue };
                            let row = &mut gx[r * n..(r + 1) * n];
                            for (g, &p) in row.iter_mut().zip(&probs[r * n..(r + 1) * n]) {
                                *g += scale * p;
                            }
                            row[*t as usize] -= scale;
                        }
                    });
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        acc(p, &mut |gp| add_into(gp, &dout));
                    }
                }
            }
        }
        result
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Writes `softmax(row)` into `out` and returns `log(sum(exp(row)))`.
pub(crate) fn softmax_into<T: Scalar>(row: &[T], out: &mut [T]) -> T {
    let max = row
        .iter()
        .copied()
        .fold(row[0], |a, b| if b > a { b } else { a });
    let mut total = T::ZERO;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
    max + total.ln()
}

/// Log-probabilities of a row of logits, computed in `f64`.
pub fn log_softmax<T: Scalar>(row: &[T]) -> Vec<f64> {
    let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v.to_f64() - lse).collect()
}

fn inputs<T>(op: &Op<T>) -> Vec<Var> {
    match op {
        Op::Input | Op::Param { .. } => vec![],
        Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Add(a, b) => vec![*a, *b],
        Op::Relu(x) | Op::Tanh(x) | Op::Sigmoid(x) | Op::Scale(x, _) | Op::SliceCols(x, _) => {
            vec![*x]
        }
        Op::ConcatCols(p) | Op::ConcatRows(p) | Op::Sum(p) => p.clone(),
        Op::Embedding { table, .. } => vec![*table],
        Op::EmbedLinear { table, weight, .. } => vec![*table, *weight],
        Op::MaxPoolSet { input, .. } => vec![*input],
        Op::LstmGates { gates, cell, .. } => vec![*gates, *cell],
        Op::SoftmaxXent { logits, .. } => vec![*logits],
    }
}
