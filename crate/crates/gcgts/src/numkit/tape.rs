//! Reverse-mode automatic differentiation over a linear tape (Wengert list).
//!
//! A forward pass records each operation with the node ids of its inputs;
//! [`Tape::backward`] walks the list once in reverse, accumulating adjoints.
//! Shape violations are programming errors and panic with both shapes named.
//!
//! The op set is exactly what the grid model needs: matmul, elementwise
//! add/mul/relu, bias rows, last-dim concat, row gather/scatter (which also
//! covers embedding lookup and shifted convolution windows), masked row
//! softmax, blockwise masked max (row/column pooling), attention-weighted
//! aggregation, clamped negative log likelihood, and scalar reductions.

use std::rc::Rc;

use super::{Scalar, Tensor};

/// Probabilities are clamped at this floor inside the negative log
/// likelihood, so a confidently wrong cell costs a large finite loss instead
/// of an infinite one.
pub const NLL_CLAMP: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(usize);

struct Node<S: Scalar> {
    value: Tensor<S>,
    needs_grad: bool,
}

enum Op<S: Scalar> {
    Matmul { a: usize, b: usize, out: usize },
    Add { a: usize, b: usize, out: usize },
    AddBias { a: usize, bias: usize, out: usize },
    Mul { a: usize, b: usize, out: usize },
    Relu { a: usize, out: usize },
    ConcatLast { parts: Vec<usize>, out: usize },
    GatherRows { a: usize, idx: Rc<Vec<isize>>, out: usize },
    MaskedSoftmaxRows { a: usize, out: usize },
    /// `winner[g*cols + c]` is the row that won block `g`, column `c`, or -1
    /// for an empty block; recorded at forward time.
    RowBlockMax { a: usize, winner: Vec<isize>, out: usize },
    NllRows { probs: usize, targets: Rc<Vec<usize>>, out: usize },
    Attend { alpha: usize, msg: usize, out: usize },
    SumAll { a: usize, out: usize },
    Scale { a: usize, c: S, out: usize },
    Reshape { a: usize, out: usize },
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    ops: Vec<Op<S>>,
    grads: Vec<Vec<S>>,
    consumed: bool,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), ops: Vec::new(), grads: Vec::new(), consumed: false }
    }

    fn push(&mut self, value: Tensor<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Records an input tensor. It participates in backward iff the tensor
    /// was built with `Tensor::param` (or otherwise flagged `requires_grad`).
    pub fn leaf(&mut self, t: Tensor<S>) -> Var {
        let needs = t.requires_grad();
        self.push(t, needs)
    }

    /// Records an input that never receives a gradient (masks, index bases).
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target w.r.t. `v`.
    pub fn grad(&self, v: Var) -> &[S] {
        assert!(self.consumed, "grad: backward has not run on this tape");
        &self.grads[v.0]
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    // ── forward ops ──────────────────────────────────────────────────────

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(
            ta.rank() == 2 && tb.rank() == 2 && ta.dim(1) == tb.dim(0),
            "matmul: incompatible shapes {:?} x {:?}",
            ta.shape(),
            tb.shape()
        );
        let (m, k, n) = (ta.dim(0), ta.dim(1), tb.dim(1));
        let mut out = vec![S::ZERO; m * n];
        let (da, db) = (ta.data(), tb.data());
        for i in 0..m {
            let arow = &da[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (kk, &aik) in arow.iter().enumerate() {
                if aik == S::ZERO {
                    continue;
                }
                let brow = &db[kk * n..(kk + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += aik * bv;
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        let v = self.push(Tensor::new(vec![m, n], out), needs);
        self.ops.push(Op::Matmul { a: a.0, b: b.0, out: v.0 });
        v
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(
            ta.shape(),
            tb.shape(),
            "add: shape mismatch {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let needs = self.needs(a) || self.needs(b);
        let v = self.push(t, needs);
        self.ops.push(Op::Add { a: a.0, b: b.0, out: v.0 });
        v
    }

    /// `[r,d] + [d]`, the bias broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        assert!(
            ta.rank() == 2 && tb.rank() == 1 && ta.dim(1) == tb.dim(0),
            "add_bias: shape mismatch {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let d = ta.dim(1);
        let bd = tb.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bd[i % d])
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let needs = self.needs(a) || self.needs(bias);
        let v = self.push(t, needs);
        self.ops.push(Op::AddBias { a: a.0, bias: bias.0, out: v.0 });
        v
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(
            ta.shape(),
            tb.shape(),
            "mul: shape mismatch {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let needs = self.needs(a) || self.needs(b);
        let v = self.push(t, needs);
        self.ops.push(Op::Mul { a: a.0, b: b.0, out: v.0 });
        v
    }

    /// Rectifier; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|&x| x.max_v(S::ZERO)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let needs = self.needs(a);
        let v = self.push(t, needs);
        self.ops.push(Op::Relu { a: a.0, out: v.0 });
        v
    }

    /// Concatenation along the last axis. All parts must agree on rank and on
    /// every leading dimension.
    pub fn concat_last(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_last: no inputs");
        let rank = self.nodes[parts[0].0].value.rank();
        assert!(rank >= 1, "concat_last: rank-0 input");
        let lead: Vec<usize> =
            self.nodes[parts[0].0].value.shape()[..rank - 1].to_vec();
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let t = &self.nodes[p.0].value;
            assert!(
                t.rank() == rank && t.shape()[..rank - 1] == lead[..],
                "concat_last: leading dims differ: {:?} vs {:?}",
                t.shape(),
                self.nodes[parts[0].0].value.shape()
            );
            widths.push(t.dim(rank - 1));
        }
        let d_out: usize = widths.iter().sum();
        let mut data = vec![S::ZERO; rows * d_out];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = self.nodes[p.0].value.data();
            for r in 0..rows {
                data[r * d_out + offset..r * d_out + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut shape = lead;
        shape.push(d_out);
        let needs = parts.iter().any(|p| self.needs(*p));
        let v = self.push(Tensor::new(shape, data), needs);
        self.ops.push(Op::ConcatLast { parts: parts.iter().map(|p| p.0).collect(), out: v.0 });
        v
    }

    /// Row gather from a `[r,d]` tensor: `out[i] = a[idx[i]]`, with `idx[i] = -1`
    /// producing a zero row. Backward scatter-adds, so this op doubles as
    /// embedding lookup and as zero-padded window shifting.
    pub fn gather_rows(&mut self, a: Var, idx: Rc<Vec<isize>>) -> Var {
        let ta = &self.nodes[a.0].value;
        assert!(ta.rank() == 2, "gather_rows: need a matrix, got {:?}", ta.shape());
        let (r, d) = (ta.dim(0), ta.dim(1));
        let mut data = vec![S::ZERO; idx.len() * d];
        let src = ta.data();
        for (i, &row) in idx.iter().enumerate() {
            if row >= 0 {
                let row = row as usize;
                assert!(row < r, "gather_rows: index {row} out of {r} rows");
                data[i * d..(i + 1) * d].copy_from_slice(&src[row * d..(row + 1) * d]);
            }
        }
        let needs = self.needs(a);
        let v = self.push(Tensor::new(vec![idx.len(), d], data), needs);
        self.ops.push(Op::GatherRows { a: a.0, idx, out: v.0 });
        v
    }

    /// Row-wise masked softmax over a `[r,c]` tensor. `mask` is a 0/1 grid of
    /// the same element count (`None` = all ones). Masked-out entries produce
    /// exact zeros; a fully masked row produces a zero row rather than NaN.
    /// Logits are max-shifted over the surviving entries for stability.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: Option<&[u8]>) -> Var {
        let ta = &self.nodes[a.0].value;
        assert!(ta.rank() == 2, "masked_softmax_rows: need a matrix, got {:?}", ta.shape());
        let (r, c) = (ta.dim(0), ta.dim(1));
        if let Some(m) = mask {
            assert_eq!(m.len(), r * c, "masked_softmax_rows: mask has {} entries for {} cells", m.len(), r * c);
        }
        let src = ta.data();
        let mut data = vec![S::ZERO; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let live = |j: usize| mask.map_or(true, |m| m[i * c + j] != 0);
            let mut hi: Option<S> = None;
            for (j, &x) in row.iter().enumerate() {
                if live(j) {
                    hi = Some(match hi {
                        Some(h) => h.max_v(x),
                        None => x,
                    });
                }
            }
            let Some(hi) = hi else { continue }; // fully masked row stays zero
            let mut z = S::ZERO;
            for (j, &x) in row.iter().enumerate() {
                if live(j) {
                    let e = (x - hi).exp();
                    data[i * c + j] = e;
                    z += e;
                }
            }
            for j in 0..c {
                data[i * c + j] = data[i * c + j] / z;
            }
        }
        let needs = self.needs(a);
        let v = self.push(Tensor::new(vec![r, c], data), needs);
        self.ops.push(Op::MaskedSoftmaxRows { a: a.0, out: v.0 });
        v
    }

    /// Max over blocks of `block` consecutive rows of a `[g*block, d]` tensor,
    /// giving `[g, d]`. `mask` (len `g*block`) drops rows from the max; a
    /// fully dropped block yields zeros. Gradient flows to the first maximal
    /// surviving row of each block.
    pub fn row_block_max(&mut self, a: Var, block: usize, mask: Option<&[u8]>) -> Var {
        let ta = &self.nodes[a.0].value;
        assert!(ta.rank() == 2, "row_block_max: need a matrix, got {:?}", ta.shape());
        let (rows, d) = (ta.dim(0), ta.dim(1));
        assert!(block > 0 && rows % block == 0, "row_block_max: {rows} rows not divisible into blocks of {block}");
        if let Some(m) = mask {
            assert_eq!(m.len(), rows, "row_block_max: mask has {} entries for {} rows", m.len(), rows);
        }
        let g = rows / block;
        let src = ta.data();
        let mut data = vec![S::ZERO; g * d];
        let mut winner = vec![-1isize; g * d];
        for gi in 0..g {
            for c in 0..d {
                let mut best: Option<(S, usize)> = None;
                for r in 0..block {
                    let row = gi * block + r;
                    if mask.map_or(true, |m| m[row] != 0) {
                        let x = src[row * d + c];
                        if best.map_or(true, |(b, _)| x > b) {
                            best = Some((x, row));
                        }
                    }
                }
                if let Some((x, row)) = best {
                    data[gi * d + c] = x;
                    winner[gi * d + c] = row as isize;
                }
            }
        }
        let needs = self.needs(a);
        let v = self.push(Tensor::new(vec![g, d], data), needs);
        self.ops.push(Op::RowBlockMax { a: a.0, winner, out: v.0 });
        v
    }

    /// Per-row negative log likelihood of the target class: for probs `[r,C]`
    /// and one target per row, `out[i] = -ln(max(p[i][target], clamp))`.
    pub fn nll_rows(&mut self, probs: Var, targets: Rc<Vec<usize>>) -> Var {
        let tp = &self.nodes[probs.0].value;
        assert!(tp.rank() == 2, "nll_rows: need a matrix, got {:?}", tp.shape());
        let (r, c) = (tp.dim(0), tp.dim(1));
        assert_eq!(targets.len(), r, "nll_rows: {} targets for {} rows", targets.len(), r);
        let clamp = S::from_f64(NLL_CLAMP);
        let src = tp.data();
        let mut data = vec![S::ZERO; r];
        for (i, &t) in targets.iter().enumerate() {
            assert!(t < c, "nll_rows: target {t} out of range for {c} classes");
            data[i] = -(src[i * c + t].max_v(clamp)).ln();
        }
        let needs = self.needs(probs);
        let v = self.push(Tensor::new(vec![r], data), needs);
        self.ops.push(Op::NllRows { probs: probs.0, targets, out: v.0 });
        v
    }

    /// Attention aggregation: `alpha [n,n]`, `msg [n*n,d]` (row-major pair
    /// features) -> `out [n,d]` with `out[i] = sum_j alpha[i][j] * msg[i*n+j]`.
    pub fn attend(&mut self, alpha: Var, msg: Var) -> Var {
        let (taa, tm) = (&self.nodes[alpha.0].value, &self.nodes[msg.0].value);
        assert!(
            taa.rank() == 2 && taa.dim(0) == taa.dim(1),
            "attend: alpha must be square, got {:?}",
            taa.shape()
        );
        let n = taa.dim(0);
        assert!(
            tm.rank() == 2 && tm.dim(0) == n * n,
            "attend: msg shape {:?} does not pair with alpha {:?}",
            tm.shape(),
            taa.shape()
        );
        let d = tm.dim(1);
        let (adata, mdata) = (taa.data(), tm.data());
        let mut data = vec![S::ZERO; n * d];
        for i in 0..n {
            let orow = &mut data[i * d..(i + 1) * d];
            for j in 0..n {
                let w = adata[i * n + j];
                if w == S::ZERO {
                    continue;
                }
                let mrow = &mdata[(i * n + j) * d..(i * n + j + 1) * d];
                for (o, &mv) in orow.iter_mut().zip(mrow) {
                    *o += w * mv;
                }
            }
        }
        let needs = self.needs(alpha) || self.needs(msg);
        let v = self.push(Tensor::new(vec![n, d], data), needs);
        self.ops.push(Op::Attend { alpha: alpha.0, msg: msg.0, out: v.0 });
        v
    }

    /// Sum of all elements, as a 1-element tensor.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let mut s = S::ZERO;
        for &x in ta.data() {
            s += x;
        }
        let needs = self.needs(a);
        let v = self.push(Tensor::scalar(s), needs);
        self.ops.push(Op::SumAll { a: a.0, out: v.0 });
        v
    }

    /// Multiplication by a compile-time constant (batch averaging etc).
    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|&x| x * c).collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let needs = self.needs(a);
        let v = self.push(t, needs);
        self.ops.push(Op::Scale { a: a.0, c, out: v.0 });
        v
    }

    /// Shape change over identical row-major data.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = ta.clone().reshaped(shape.to_vec());
        let needs = self.needs(a);
        let v = self.push(t, needs);
        self.ops.push(Op::Reshape { a: a.0, out: v.0 });
        v
    }

    // ── backward ─────────────────────────────────────────────────────────

    /// Runs reverse accumulation from a scalar loss. Each tape supports one
    /// backward pass; build a fresh tape per training step.
    pub fn backward(&mut self, loss: Var) {
        assert!(!self.consumed, "backward: tape already consumed; build a new tape");
        assert_eq!(
            self.nodes[loss.0].value.len(),
            1,
            "backward: loss must be scalar, got shape {:?}",
            self.nodes[loss.0].value.shape()
        );
        self.consumed = true;
        self.grads = self.nodes.iter().map(|n| vec![S::ZERO; n.value.len()]).collect();
        self.grads[loss.0][0] = S::ONE;

        for op in self.ops.iter().rev() {
            match op {
                Op::Matmul { a, b, out } => {
                    let (m, k) = (self.nodes[*a].value.dim(0), self.nodes[*a].value.dim(1));
                    let n = self.nodes[*b].value.dim(1);
                    // d_a = d_out x b^T
                    if self.nodes[*a].needs_grad {
                        let bdata = self.nodes[*b].value.data();
                        let (gout, ga) = grad_pair(&mut self.grads, *out, *a);
                        for i in 0..m {
                            for kk in 0..k {
                                let mut s = S::ZERO;
                                let grow = &gout[i * n..(i + 1) * n];
                                let brow = &bdata[kk * n..(kk + 1) * n];
                                for (&g, &bv) in grow.iter().zip(brow) {
                                    s += g * bv;
                                }
                                ga[i * k + kk] += s;
                            }
                        }
                    }
                    // d_b = a^T x d_out
                    if self.nodes[*b].needs_grad {
                        let adata = self.nodes[*a].value.data();
                        let (gout, gb) = grad_pair(&mut self.grads, *out, *b);
                        for i in 0..m {
                            let grow = &gout[i * n..(i + 1) * n];
                            for kk in 0..k {
                                let aik = adata[i * k + kk];
                                if aik == S::ZERO {
                                    continue;
                                }
                                let brow = &mut gb[kk * n..(kk + 1) * n];
                                for (bg, &g) in brow.iter_mut().zip(grow) {
                                    *bg += aik * g;
                                }
                            }
                        }
                    }
                }
                Op::Add { a, b, out } => {
                    for src in [*a, *b] {
                        if self.nodes[src].needs_grad {
                            let (gout, gsrc) = grad_pair(&mut self.grads, *out, src);
                            for (gs, &g) in gsrc.iter_mut().zip(gout.iter()) {
                                *gs += g;
                            }
                        }
                    }
                }
                Op::AddBias { a, bias, out } => {
                    if self.nodes[*a].needs_grad {
                        let (gout, ga) = grad_pair(&mut self.grads, *out, *a);
                        for (gs, &g) in ga.iter_mut().zip(gout.iter()) {
                            *gs += g;
                        }
                    }
                    if self.nodes[*bias].needs_grad {
                        let d = self.nodes[*bias].value.len();
                        let (gout, gb) = grad_pair(&mut self.grads, *out, *bias);
                        for (i, &g) in gout.iter().enumerate() {
                            gb[i % d] += g;
                        }
                    }
                }
                Op::Mul { a, b, out } => {
                    if self.nodes[*a].needs_grad {
                        let bdata = self.nodes[*b].value.data();
                        let (gout, ga) = grad_pair(&mut self.grads, *out, *a);
                        for ((gs, &g), &bv) in ga.iter_mut().zip(gout.iter()).zip(bdata) {
                            *gs += g * bv;
                        }
                    }
                    if self.nodes[*b].needs_grad {
                        let adata = self.nodes[*a].value.data();
                        let (gout, gb) = grad_pair(&mut self.grads, *out, *b);
                        for ((gs, &g), &av) in gb.iter_mut().zip(gout.iter()).zip(adata) {
                            *gs += g * av;
                        }
                    }
                }
                Op::Relu { a, out } => {
                    if self.nodes[*a].needs_grad {
                        let adata = self.nodes[*a].value.data();
                        let (gout, ga) = grad_pair(&mut self.grads, *out, *a);
                        for ((gs, &g), &x) in ga.iter_mut().zip(gout.iter()).zip(adata) {
                            if x > S::ZERO {
                                *gs += g;
                            }
                        }
                    }
                }
                Op::ConcatLast { parts, out } => {
                    let d_out = self.nodes[*out].value.dim(self.nodes[*out].value.rank() - 1);
                    let rows = self.nodes[*out].value.len() / d_out;
                    let mut offset = 0;
                    for p in parts {
                        let rank = self.nodes[*p].value.rank();
                        let w = self.nodes[*p].value.dim(rank - 1);
                        if self.nodes[*p].needs_grad {
                            let (gout, gp) = grad_pair(&mut self.grads, *out, *p);
                            for r in 0..rows {
                                let src = &gout[r * d_out + offset..r * d_out + offset + w];
                                let dst = &mut gp[r * w..(r + 1) * w];
                                for (d, &g) in dst.iter_mut().zip(src) {
                                    *d += g;
                                }
                            }
                        }
                        offset += w;
                    }
                }
                Op::GatherRows { a, idx, out } => {
                    if self.nodes[*a].needs_grad {
                        let d = self.nodes[*a].value.dim(1);
                        let (gout, ga) = grad_pair(&mut self.grads, *out, *a);
                        for (i, &row) in idx.iter().enumerate() {
                            if row >= 0 {
                                let dst = &mut ga[row as usize * d..(row as usize + 1) * d];
                                let src = &gout[i * d..(i + 1) * d];
                                for (dv, &g) in dst.iter_mut().zip(src) {
                                    *dv += g;
                                }
                            }
                        }
                    }
                }
                Op::MaskedSoftmaxRows { a, out } => {
                    if self.nodes[*a].needs_grad {
                        // With y = softmax(x) restricted to the mask (zeros
                        // elsewhere): dx = y * (dy - sum(dy * y)), which is
                        // exactly zero at masked entries because y is.
                        let ydata = self.nodes[*out].value.data().to_vec();
                        let c = self.nodes[*out].value.dim(1);
                        let (gout, ga) = grad_pair(&mut self.grads, *out, *a);
                        for (row, yrow) in ydata.chunks(c).enumerate() {
                            let grow = &gout[row * c..(row + 1) * c];
                            let mut dot = S::ZERO;
                            for (&g, &y) in grow.iter().zip(yrow) {
                                dot += g * y;
                            }
                            let arow = &mut ga[row * c..(row + 1) * c];
                            for ((gs, &g), &y) in arow.iter_mut().zip(grow).zip(yrow) {
                                *gs += y * (g - dot);
                            }
                        }
                    }
                }
                Op::RowBlockMax { a, winner, out } => {
                    if self.nodes[*a].needs_grad {
                        let d = self.nodes[*out].value.dim(1);
                        let (gout, ga) = grad_pair(&mut self.grads, *out, *a);
                        for (cell, &row) in winner.iter().enumerate() {
                            if row >= 0 {
                                ga[row as usize * d + cell % d] += gout[cell];
                            }
                        }
                    }
                }
                Op::NllRows { probs, targets, out } => {
                    if self.nodes[*probs].needs_grad {
                        let clamp = S::from_f64(NLL_CLAMP);
                        let pdata = self.nodes[*probs].value.data().to_vec();
                        let c = self.nodes[*probs].value.dim(1);
                        let (gout, gp) = grad_pair(&mut self.grads, *out, *probs);
                        for (i, &t) in targets.iter().enumerate() {
                            let p = pdata[i * c + t];
                            if p > clamp {
                                gp[i * c + t] += gout[i] * (-S::ONE / p);
                            }
                        }
                    }
                }
                Op::Attend { alpha, msg, out } => {
                    let n = self.nodes[*alpha].value.dim(0);
                    let d = self.nodes[*msg].value.dim(1);
                    if self.nodes[*alpha].needs_grad {
                        let mdata = self.nodes[*msg].value.data();
                        let (gout, galpha) = grad_pair(&mut self.grads, *out, *alpha);
                        for i in 0..n {
                            let grow = &gout[i * d..(i + 1) * d];
                            for j in 0..n {
                                let mrow = &mdata[(i * n + j) * d..(i * n + j + 1) * d];
                                let mut s = S::ZERO;
                                for (&g, &mv) in grow.iter().zip(mrow) {
                                    s += g * mv;
                                }
                                galpha[i * n + j] += s;
                            }
                        }
                    }
                    if self.nodes[*msg].needs_grad {
                        let adata = self.nodes[*alpha].value.data();
                        let (gout, gmsg) = grad_pair(&mut self.grads, *out, *msg);
                        for i in 0..n {
                            let grow = &gout[i * d..(i + 1) * d];
                            for j in 0..n {
                                let w = adata[i * n + j];
                                if w == S::ZERO {
                                    continue;
                                }
                                let mrow = &mut gmsg[(i * n + j) * d..(i * n + j + 1) * d];
                                for (mg, &g) in mrow.iter_mut().zip(grow) {
                                    *mg += w * g;
                                }
                            }
                        }
                    }
                }
                Op::SumAll { a, out } => {
                    if self.nodes[*a].needs_grad {
                        let (gout, ga) = grad_pair(&mut self.grads, *out, *a);
                        let g = gout[0];
                        for gs in ga.iter_mut() {
                            *gs += g;
                        }
                    }
                }
                Op::Scale { a, c, out } => {
                    if self.nodes[*a].needs_grad {
                        let (gout, ga) = grad_pair(&mut self.grads, *out, *a);
                        for (gs, &g) in ga.iter_mut().zip(gout.iter()) {
                            *gs += g * *c;
                        }
                    }
                }
                Op::Reshape { a, out } => {
                    if self.nodes[*a].needs_grad {
                        let (gout, ga) = grad_pair(&mut self.grads, *out, *a);
                        for (gs, &g) in ga.iter_mut().zip(gout.iter()) {
                            *gs += g;
                        }
                    }
                }
            }
        }
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Disjoint mutable views of an output gradient and one input gradient.
fn grad_pair<S>(grads: &mut [Vec<S>], out: usize, input: usize) -> (&[S], &mut [S]) {
    assert_ne!(out, input, "op output aliases its input");
    if input < out {
        let (lo, hi) = grads.split_at_mut(out);
        (&hi[0], &mut lo[input])
    } else {
        let (lo, hi) = grads.split_at_mut(input);
        (&lo[out], &mut hi[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf_param(tape: &mut Tape<f64>, shape: Vec<usize>, data: Vec<f64>) -> Var {
        tape.leaf(Tensor::param(shape, data))
    }

    /// Central finite differences against the tape's analytic gradients. The
    /// closure rebuilds the whole computation from leaf tensors so that each
    /// probe gets a fresh tape.
    fn check_grads<F>(inputs: &[Tensor<f64>], build: F, tol: f64)
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Var,
    {
        let run = |tensors: &[Tensor<f64>]| -> f64 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
            let loss = build(&mut tape, &vars);
            tape.value(loss).data()[0]
        };

        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        tape.backward(loss);

        let h = 1e-5;
        for (ti, t) in inputs.iter().enumerate() {
            if !t.requires_grad() {
                continue;
            }
            let analytic = tape.grad(vars[ti]).to_vec();
            for ei in 0..t.len() {
                let mut plus = inputs.to_vec();
                plus[ti].data_mut()[ei] += h;
                let mut minus = inputs.to_vec();
                minus[ti].data_mut()[ei] -= h;
                let fd = (run(&plus) - run(&minus)) / (2.0 * h);
                let a = analytic[ei];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(
                    rel < tol,
                    "input {ti} element {ei}: analytic {a} vs fd {fd} (rel {rel})"
                );
            }
        }
    }

    fn rand_tensor(shape: Vec<usize>, rng: &mut crate::numkit::SplitMix64) -> Tensor<f64> {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor::param(shape, data)
    }

    // ── forward values ───────────────────────────────────────────────────

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::<f64>::new();
        let eye = tape.constant(Tensor::new(
            vec![3, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ));
        let m = tape.constant(Tensor::new(vec![3, 3], (1..=9).map(f64::from).collect()));
        let out = tape.matmul(eye, m);
        assert_eq!(tape.value(out).data(), tape.value(m).data());
    }

    #[test]
    fn matmul_hand_checked() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.constant(Tensor::new(vec![2, 1], vec![1.0, 1.0]));
        let out = tape.matmul(a, b);
        assert_eq!(tape.value(out).data(), &[3.0, 7.0]);
    }

    #[test]
    #[should_panic(expected = "matmul: incompatible shapes")]
    fn matmul_shape_panics() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![2, 3]));
        tape.matmul(a, b);
    }

    #[test]
    fn relu_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_subgradient_zero_at_zero() {
        let mut tape = Tape::<f64>::new();
        let x = leaf_param(&mut tape, vec![3], vec![-1.0, 0.0, 2.0]);
        let y = tape.relu(x);
        let loss = tape.sum_all(y);
        tape.backward(loss);
        assert_eq!(tape.grad(x), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn concat_rank1() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::new(vec![2], vec![1.0, 2.0]));
        let b = tape.constant(Tensor::new(vec![1], vec![3.0]));
        let out = tape.concat_last(&[a, b]);
        assert_eq!(tape.value(out).shape(), &[3]);
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn concat_rank2_layout() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.constant(Tensor::new(vec![2, 1], vec![9.0, 8.0]));
        let out = tape.concat_last(&[a, b]);
        assert_eq!(tape.value(out).shape(), &[2, 3]);
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
    }

    #[test]
    fn masked_softmax_uniform() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![1, 3], vec![0.0; 3]));
        let y = tape.masked_softmax_rows(x, None);
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_softmax_single_survivor() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![1, 2], vec![5.0, 1.0]));
        let y = tape.masked_softmax_rows(x, Some(&[1, 0]));
        assert_eq!(tape.value(y).data(), &[1.0, 0.0]);
    }

    #[test]
    fn masked_softmax_shift_stability() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![1, 2], vec![1000.0, 1000.0]));
        let y = tape.masked_softmax_rows(x, None);
        for &v in tape.value(y).data() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_softmax_empty_row_is_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]));
        let y = tape.masked_softmax_rows(x, Some(&[0, 0, 1, 1]));
        let v = tape.value(y).data();
        assert_eq!(&v[..2], &[0.0, 0.0]);
        assert!((v[2] + v[3] - 1.0).abs() < 1e-12);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn nll_values() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::new(vec![2, 4], vec![1.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25]));
        let out = tape.nll_rows(p, Rc::new(vec![0, 2]));
        let v = tape.value(out).data();
        assert!(v[0].abs() < 1e-12);
        assert!((v[1] - 4.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn nll_clamps_zero_probability() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::new(vec![1, 2], vec![0.0, 1.0]));
        let out = tape.nll_rows(p, Rc::new(vec![0]));
        let v = tape.value(out).data()[0];
        assert!(v.is_finite());
        assert!((v - (-NLL_CLAMP.ln())).abs() < 1e-6);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn nll_target_out_of_range_panics() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::new(vec![1, 2], vec![0.5, 0.5]));
        tape.nll_rows(p, Rc::new(vec![2]));
    }

    #[test]
    fn row_block_max_ties_take_first() {
        let mut tape = Tape::<f64>::new();
        let x = leaf_param(&mut tape, vec![4, 1], vec![2.0, 2.0, 1.0, 2.0]);
        let y = tape.row_block_max(x, 4, None);
        assert_eq!(tape.value(y).data(), &[2.0]);
        let loss = tape.sum_all(y);
        tape.backward(loss);
        assert_eq!(tape.grad(x), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn row_block_max_empty_block_is_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![4, 2], vec![5.0; 8]));
        let y = tape.row_block_max(x, 2, Some(&[0, 0, 1, 1]));
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 5.0, 5.0]);
    }

    #[test]
    fn gather_rows_with_padding() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let idx = Rc::new(vec![1isize, -1, 0]);
        let y = tape.gather_rows(x, idx);
        assert_eq!(tape.value(y).data(), &[3.0, 4.0, 0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn gather_rows_scatter_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = leaf_param(&mut tape, vec![2, 1], vec![1.0, 2.0]);
        let y = tape.gather_rows(x, Rc::new(vec![0, 0, 1]));
        let loss = tape.sum_all(y);
        tape.backward(loss);
        assert_eq!(tape.grad(x), &[2.0, 1.0]);
    }

    // ── backward basics ──────────────────────────────────────────────────

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = leaf_param(&mut tape, vec![3], vec![5.0, -1.0, 0.5]);
        let loss = tape.sum_all(x);
        tape.backward(loss);
        assert_eq!(tape.grad(x), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_square_sum() {
        let mut tape = Tape::<f64>::new();
        let x = leaf_param(&mut tape, vec![2], vec![1.0, 2.0]);
        let sq = tape.mul(x, x);
        let loss = tape.sum_all(sq);
        tape.backward(loss);
        assert_eq!(tape.grad(x), &[2.0, 4.0]);
    }

    #[test]
    #[should_panic(expected = "loss must be scalar")]
    fn backward_nonscalar_panics() {
        let mut tape = Tape::<f64>::new();
        let x = leaf_param(&mut tape, vec![2], vec![1.0, 2.0]);
        tape.backward(x);
    }

    #[test]
    #[should_panic(expected = "already consumed")]
    fn backward_twice_panics() {
        let mut tape = Tape::<f64>::new();
        let x = leaf_param(&mut tape, vec![1], vec![1.0]);
        let loss = tape.sum_all(x);
        tape.backward(loss);
        tape.backward(loss);
    }

    #[test]
    fn replay_produces_identical_grads() {
        let run = || {
            let mut tape = Tape::<f32>::new();
            let x = tape.leaf(Tensor::param(vec![2, 2], vec![0.3, -0.7, 1.1, 0.2]));
            let w = tape.leaf(Tensor::param(vec![2, 2], vec![0.5, 0.25, -0.1, 0.9]));
            let h = tape.matmul(x, w);
            let r = tape.relu(h);
            let p = tape.masked_softmax_rows(r, None);
            let nll = tape.nll_rows(p, Rc::new(vec![0, 1]));
            let loss = tape.sum_all(nll);
            tape.backward(loss);
            (tape.grad(x).to_vec(), tape.grad(w).to_vec())
        };
        let (gx1, gw1) = run();
        let (gx2, gw2) = run();
        // Bitwise identity, not approximate equality.
        assert_eq!(gx1, gx2);
        assert_eq!(gw1, gw2);
    }

    // ── finite-difference checks, one per differentiable op ─────────────

    #[test]
    fn fd_matmul_and_closed_form() {
        let mut rng = crate::numkit::SplitMix64::new(11);
        let a = rand_tensor(vec![4, 5], &mut rng);
        let b = rand_tensor(vec![5, 2], &mut rng);
        // Gradient of sum(a x b) w.r.t. a is ones x b^T.
        let mut tape = Tape::<f64>::new();
        let va = tape.leaf(a.clone());
        let vb = tape.leaf(b.clone());
        let out = tape.matmul(va, vb);
        let loss = tape.sum_all(out);
        tape.backward(loss);
        let ga = tape.grad(va);
        for i in 0..4 {
            for k in 0..5 {
                let want: f64 = (0..2).map(|j| b.data()[k * 2 + j]).sum();
                assert!((ga[i * 5 + k] - want).abs() < 1e-9);
            }
        }
        check_grads(&[a, b], |t, v| {
            let out = t.matmul(v[0], v[1]);
            t.sum_all(out)
        }, 1e-4);
    }

    #[test]
    fn fd_add_mul_bias() {
        let mut rng = crate::numkit::SplitMix64::new(12);
        let a = rand_tensor(vec![3, 4], &mut rng);
        let b = rand_tensor(vec![3, 4], &mut rng);
        let bias = rand_tensor(vec![4], &mut rng);
        check_grads(&[a, b, bias], |t, v| {
            let s = t.add(v[0], v[1]);
            let m = t.mul(s, v[0]);
            let wb = t.add_bias(m, v[2]);
            t.sum_all(wb)
        }, 1e-4);
    }

    #[test]
    fn fd_relu_off_kink() {
        let mut rng = crate::numkit::SplitMix64::new(13);
        // Keep inputs away from 0 so the finite difference is valid.
        let data: Vec<f64> = (0..12)
            .map(|_| {
                let v = rng.uniform(0.2, 1.0);
                if rng.chance(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let a = Tensor::param(vec![3, 4], data);
        check_grads(&[a], |t, v| {
            let r = t.relu(v[0]);
            let sq = t.mul(r, r);
            t.sum_all(sq)
        }, 1e-4);
    }

    #[test]
    fn fd_concat_gather_reshape_scale() {
        let mut rng = crate::numkit::SplitMix64::new(14);
        let a = rand_tensor(vec![3, 2], &mut rng);
        let b = rand_tensor(vec![3, 3], &mut rng);
        check_grads(&[a, b], |t, v| {
            let cat = t.concat_last(&[v[0], v[1]]);
            let picked = t.gather_rows(cat, Rc::new(vec![2, 0, -1, 2]));
            let flat = t.reshape(picked, &[2, 10]);
            let scaled = t.scale(flat, 0.5);
            let sq = t.mul(scaled, scaled);
            t.sum_all(sq)
        }, 1e-4);
    }

    #[test]
    fn fd_masked_softmax_through_nll() {
        let mut rng = crate::numkit::SplitMix64::new(15);
        let logits = rand_tensor(vec![3, 4], &mut rng);
        let mask: &[u8] = &[1, 1, 0, 1, 1, 1, 1, 1, 0, 1, 1, 0];
        check_grads(&[logits], |t, v| {
            let p = t.masked_softmax_rows(v[0], Some(mask));
            let nll = t.nll_rows(p, Rc::new(vec![0, 2, 1]));
            t.sum_all(nll)
        }, 1e-4);
    }

    #[test]
    fn fd_max_over_axis() {
        let mut rng = crate::numkit::SplitMix64::new(16);
        // 3x4 input, max over the row axis (single block of 3 rows).
        let a = rand_tensor(vec![3, 4], &mut rng);
        check_grads(&[a], |t, v| {
            let m = t.row_block_max(v[0], 3, None);
            let sq = t.mul(m, m);
            t.sum_all(sq)
        }, 1e-4);
    }

    #[test]
    fn fd_attend() {
        let mut rng = crate::numkit::SplitMix64::new(17);
        let alpha = rand_tensor(vec![3, 3], &mut rng);
        let msg = rand_tensor(vec![9, 2], &mut rng);
        check_grads(&[alpha, msg], |t, v| {
            let mixed = t.attend(v[0], v[1]);
            let sq = t.mul(mixed, mixed);
            t.sum_all(sq)
        }, 1e-4);
    }

    #[test]
    fn fd_softmax_nll_composite() {
        // Gradient of NLL through a softmax on a random 4-way distribution.
        let mut rng = crate::numkit::SplitMix64::new(18);
        let logits = rand_tensor(vec![1, 4], &mut rng);
        check_grads(&[logits], |t, v| {
            let p = t.masked_softmax_rows(v[0], None);
            let nll = t.nll_rows(p, Rc::new(vec![2]));
            t.sum_all(nll)
        }, 1e-4);
    }

    #[test]
    fn fd_mirror_pooling_composite() {
        // Replicates the model's pooling pattern: mirror-gather a [n*n, d]
        // grid, block-max per position with a mask, broadcast back per cell,
        // concatenate, project, and take an NLL. Catches interactions the
        // single-op tests miss.
        let n = 3usize;
        let mut rng = crate::numkit::SplitMix64::new(19);
        let x = rand_tensor(vec![n * n, 4], &mut rng);
        let w = rand_tensor(vec![12, 4], &mut rng);
        let mirror = |a: usize, b: usize| (a.min(b) * n + a.max(b)) as isize;
        let sup = [true, false, true];
        let mut row_pool = Vec::new();
        let mut col_pool = Vec::new();
        let mut mask = Vec::new();
        for i in 0..n {
            for k in 0..n {
                row_pool.push(mirror(i, k));
                col_pool.push(mirror(k, i));
                mask.push(u8::from(sup[i.min(k)] && sup[i.max(k)]));
            }
        }
        let idx_i: Rc<Vec<isize>> = Rc::new((0..n * n).map(|c| (c / n) as isize).collect());
        let idx_j: Rc<Vec<isize>> = Rc::new((0..n * n).map(|c| (c % n) as isize).collect());
        let row_pool = Rc::new(row_pool);
        let col_pool = Rc::new(col_pool);
        check_grads(&[x, w], |t, v| {
            let row_read = t.gather_rows(v[0], Rc::clone(&row_pool));
            let row_max = t.row_block_max(row_read, n, Some(&mask));
            let col_read = t.gather_rows(v[0], Rc::clone(&col_pool));
            let col_max = t.row_block_max(col_read, n, Some(&mask));
            let row_cell = t.gather_rows(row_max, Rc::clone(&idx_i));
            let col_cell = t.gather_rows(col_max, Rc::clone(&idx_j));
            let z_in = t.concat_last(&[row_cell, col_cell, v[0]]);
            let logits = t.matmul(z_in, v[1]);
            let p = t.masked_softmax_rows(logits, None);
            let nll = t.nll_rows(p, Rc::new(vec![0, 1, 2, 3, 0, 1, 2, 3, 0]));
            t.sum_all(nll)
        }, 1e-4);
    }
}
