//! The grid tagging network. One forward pass per sentence, staged as:
//!
//! 1. character encoding (trainable embedding or frozen file-backed vectors);
//! 2. L label-aware graph fusion layers over the dependency character graph,
//!    producing fused vectors h^D and the relation grid tensor B (final-layer
//!    β), when enabled;
//! 3. grid construction: either unit convolution (two role projections, then
//!    a learned projection of each ordered pair) or a plain pair projection;
//! 4. image convolution: 1×N row and N×1 column kernels, left/top-aligned
//!    with zero padding, combined with the unconvolved grid, when enabled;
//! 5. a 4-way softmax head for the initial prediction p^0, then T inference
//!    rounds mixing each cell's state with row/column max-pooled label
//!    evidence.
//!
//! All grids are `[n*n, d]` tape matrices in row-major cell order; the
//! per-sentence gather indices come from [`GridIndex`].

use std::rc::Rc;

use crate::corpus::{CharGraph, Label, LabelGrid, Sentence, Vocabs, CHAR_PAD};
use crate::decode::{decode_grid, ExtractionResult};
use crate::model::{EncoderKind, GridIndex, ModelConfig};
use crate::numkit::{glorot, param_rng, ParamStore, Scalar, Tape, Tensor, Var};

/// Parameters, vocabularies, and hyperparameters of one model instance.
pub struct Model<S: Scalar> {
    pub config: ModelConfig,
    pub vocabs: Vocabs,
    pub store: ParamStore<S>,
}

/// Tape leaves for every parameter, in registration order. Rebuilt once per
/// tape; gradients are harvested back through it after `backward`.
pub struct TapeBinding {
    pub vars: Vec<Var>,
}

/// Tape handles to everything a forward pass computes. `p_rounds[t]` is the
/// `[n*n, 4]` distribution after round t (index 0 = initial prediction);
/// `z_rounds` holds z^0..z^T when inference rounds run.
pub struct Forward {
    pub h_d: Var,
    pub h_row: Var,
    pub h_col: Var,
    /// Per fusion layer, the `[n, n]` attention matrix.
    pub alphas: Vec<Var>,
    /// Final-layer β as `[n*n, d_beta]`, when fusion is enabled.
    pub beta: Option<Var>,
    /// The grid entering prediction before image convolution: `[n*n, d_g]`.
    pub grid: Var,
    pub grid_ic: Option<Var>,
    pub p_rounds: Vec<Var>,
    pub z_rounds: Vec<Var>,
}

impl Forward {
    pub fn p_final(&self) -> Var {
        *self.p_rounds.last().expect("forward always produces p^0")
    }
}

impl<S: Scalar> Model<S> {
    /// Initializes a model: Glorot-uniform weights (seeded per parameter name,
    /// so adding or removing a component never reshuffles the others), zero
    /// biases, zero padding embedding.
    pub fn new(config: ModelConfig, vocabs: Vocabs, seed: u64) -> Model<S> {
        if let Err(rule) = config.validate() {
            panic!("invalid model config: {rule}");
        }
        let mut store = ParamStore::new();
        let weight = |store: &mut ParamStore<S>, name: &str, fan_in: usize, fan_out: usize| {
            let mut rng = param_rng(seed, name);
            store.register(name, glorot(fan_in, fan_out, &mut rng));
        };
        let bias = |store: &mut ParamStore<S>, name: &str, d: usize| {
            store.register(name, Tensor::param(vec![d], vec![S::ZERO; d]));
        };

        let c = &config;
        let (d_a, d_b, d_c) = c.fusion_split();
        let labels = c.label_count;

        if c.encoder == EncoderKind::TrainableEmbedding {
            weight(&mut store, "embed.char", vocabs.n_chars(), c.d_h);
            let idx = store.index_of("embed.char").expect("just registered");
            let pad = store.tensor_mut(idx);
            let d_h = c.d_h;
            pad.data_mut()[CHAR_PAD as usize * d_h..(CHAR_PAD as usize + 1) * d_h]
                .fill(S::ZERO);
        }
        if c.use_lagcn {
            weight(&mut store, "embed.pos", vocabs.n_pos(), c.d_p);
            weight(&mut store, "embed.rel", vocabs.n_rels(), c.d_r);
            for l in 1..=c.l_layers {
                weight(&mut store, &format!("lagcn.l{l}.w1"), c.d_h, d_a);
                weight(&mut store, &format!("lagcn.l{l}.w2"), c.d_r, d_b);
                weight(&mut store, &format!("lagcn.l{l}.w3"), c.d_p, d_c);
                weight(&mut store, &format!("lagcn.l{l}.w4"), c.d_h + c.d_p + c.d_r, c.d_beta);
            }
        }
        if c.use_uc {
            weight(&mut store, "uc.row.w", c.d_h, c.d_h);
            weight(&mut store, "uc.col.w", c.d_h, c.d_h);
            weight(&mut store, "uc.grid.w", 2 * c.d_h, c.d_g);
            bias(&mut store, "uc.grid.b", c.d_g);
        } else {
            weight(&mut store, "pair.w", 2 * c.d_h, c.d_g);
        }
        if c.use_ic {
            for &len in &c.kernels {
                for t in 0..len {
                    weight(&mut store, &format!("ic.row{len}.k{t}"), c.d_g, c.d_g);
                }
            }
            for &len in &c.kernels {
                for t in 0..len {
                    weight(&mut store, &format!("ic.col{len}.k{t}"), c.d_g, c.d_g);
                }
            }
            weight(&mut store, "ic.out.w", (2 * c.kernels.len() + 1) * c.d_g, c.d_g);
            bias(&mut store, "ic.out.b", c.d_g);
        }
        weight(&mut store, "head.p0.w", c.d_g, labels);
        bias(&mut store, "head.p0.b", labels);
        if c.t_rounds > 0 {
            weight(&mut store, "inference.z0.w_h", 2 * c.d_h, c.d_z());
            if c.use_b_tensor {
                weight(&mut store, "inference.z0.w_beta", c.d_beta, c.d_z());
            }
            weight(&mut store, "inference.step.w", c.d_z() + 3 * labels, c.d_z());
            weight(&mut store, "inference.out.w", c.d_z(), labels);
            bias(&mut store, "inference.out.b", labels);
        }

        Model { config, vocabs, store }
    }

    /// Rebuilds a model around externally supplied parameters (checkpoint
    /// load). The store must hold exactly the tensors `new` would register.
    pub fn from_parts(config: ModelConfig, vocabs: Vocabs, store: ParamStore<S>) -> Model<S> {
        let reference: Model<S> = Model::new(config.clone(), vocabs.clone(), 0);
        assert_eq!(
            reference.store.names(),
            store.names(),
            "parameter set does not match the configuration"
        );
        for (name, t) in store.iter() {
            let expect = reference.store.get(name).expect("name checked above");
            assert_eq!(
                t.shape(),
                expect.shape(),
                "parameter '{name}' has shape {:?}, expected {:?}",
                t.shape(),
                expect.shape()
            );
        }
        Model { config, vocabs, store }
    }

    /// Registers every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape<S>) -> TapeBinding {
        TapeBinding {
            vars: self.store.iter().map(|(_, t)| tape.leaf(t.clone())).collect(),
        }
    }

    fn p(&self, binding: &TapeBinding, name: &str) -> Var {
        let idx = self
            .store
            .index_of(name)
            .unwrap_or_else(|| panic!("parameter '{name}' not registered under this config"));
        binding.vars[idx]
    }

    /// One sentence forward. `vectors` supplies the `[n, d_h]` frozen
    /// character matrix when the encoder is file-backed.
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        binding: &TapeBinding,
        sentence: &Sentence,
        graph: &CharGraph,
        ix: &GridIndex,
        vectors: Option<&Tensor<S>>,
    ) -> Forward {
        let c = &self.config;
        let n = sentence.n_chars();
        assert!(n > 0, "forward: empty sentence");
        assert_eq!(graph.n(), n, "forward: graph built for n={}, sentence has n={n}", graph.n());
        assert_eq!(ix.n, n, "forward: index built for n={}, sentence has n={n}", ix.n);

        // ── Character encoding ───────────────────────────────────────────
        let h0 = match c.encoder {
            EncoderKind::TrainableEmbedding => {
                let ids: Rc<Vec<isize>> = Rc::new(
                    sentence.chars.iter().map(|ch| self.vocabs.char_id(ch) as isize).collect(),
                );
                let table = self.p(binding, "embed.char");
                tape.gather_rows(table, ids)
            }
            EncoderKind::FileBacked => {
                let t = vectors.unwrap_or_else(|| {
                    panic!("file-backed encoder: no vectors supplied for sentence {}", sentence.id)
                });
                assert_eq!(
                    t.shape(),
                    &[n, c.d_h],
                    "file-backed vectors for sentence {} have shape {:?}, expected [{n}, {}]",
                    sentence.id,
                    t.shape(),
                    c.d_h
                );
                tape.constant(t.clone())
            }
        };

        // ── Syntax fusion (LAGCN) ────────────────────────────────────────
        let mut alphas = Vec::new();
        let mut beta = None;
        let h_d = if c.use_lagcn {
            let pos_ids: Rc<Vec<isize>> = Rc::new(
                (0..n)
                    .map(|i| self.vocabs.pos_id(&sentence.pos[sentence.word_of(i)]) as isize)
                    .collect(),
            );
            let rel_ids: Rc<Vec<isize>> =
                Rc::new(graph.rel_ids().iter().map(|&r| r as isize).collect());
            let p_char = tape.gather_rows(self.p(binding, "embed.pos"), pos_ids); // [n, d_p]
            let rel = tape.gather_rows(self.p(binding, "embed.rel"), rel_ids); // [n*n, d_r]
            let ones = tape.constant(Tensor::new(vec![c.d_beta, 1], vec![S::ONE; c.d_beta]));

            let mut h = h0;
            for l in 1..=c.l_layers {
                let w1 = self.p(binding, &format!("lagcn.l{l}.w1"));
                let w2 = self.p(binding, &format!("lagcn.l{l}.w2"));
                let w3 = self.p(binding, &format!("lagcn.l{l}.w3"));
                let w4 = self.p(binding, &format!("lagcn.l{l}.w4"));

                // β_{i,j} = W4 [h_j || p_j || r_{i,j}] over all cells.
                let h_j = tape.gather_rows(h, Rc::clone(&ix.idx_j));
                let p_j = tape.gather_rows(p_char, Rc::clone(&ix.idx_j));
                let beta_in = tape.concat_last(&[h_j, p_j, rel]);
                let beta_l = tape.matmul(beta_in, w4); // [n*n, d_beta]

                // Attention: softmax over the component sums, gated by the
                // adjacency indicator.
                let score_col = tape.matmul(beta_l, ones); // [n*n, 1]
                let scores = tape.reshape(score_col, &[n, n]);
                let alpha = tape.masked_softmax_rows(scores, Some(graph.adjacency()));

                // Message (W1 h_j || W2 r_{i,j} || W3 p_j), aggregated by α.
                let m1 = tape.matmul(h, w1);
                let m1_j = tape.gather_rows(m1, Rc::clone(&ix.idx_j));
                let m2 = tape.matmul(rel, w2);
                let m3 = tape.matmul(p_char, w3);
                let m3_j = tape.gather_rows(m3, Rc::clone(&ix.idx_j));
                let msg = tape.concat_last(&[m1_j, m2, m3_j]); // [n*n, d_h]
                let mixed = tape.attend(alpha, msg);
                h = tape.relu(mixed);

                alphas.push(alpha);
                beta = Some(beta_l);
            }
            h
        } else {
            h0
        };

        // ── Grid construction ────────────────────────────────────────────
        let (h_row, h_col) = if c.use_uc {
            (
                tape.matmul(h_d, self.p(binding, "uc.row.w")),
                tape.matmul(h_d, self.p(binding, "uc.col.w")),
            )
        } else {
            (h_d, h_d)
        };
        let h_i = tape.gather_rows(h_row, Rc::clone(&ix.idx_i));
        let h_j = tape.gather_rows(h_col, Rc::clone(&ix.idx_j));
        let pair = tape.concat_last(&[h_i, h_j]); // [n*n, 2*d_h]
        let grid = if c.use_uc {
            let lin = tape.matmul(pair, self.p(binding, "uc.grid.w"));
            tape.add_bias(lin, self.p(binding, "uc.grid.b"))
        } else {
            tape.matmul(pair, self.p(binding, "pair.w"))
        };

        // ── Image convolution ────────────────────────────────────────────
        let grid_ic = if c.use_ic { Some(self.image_conv(tape, binding, grid, ix)) } else { None };

        // ── Initial prediction ───────────────────────────────────────────
        let feat = grid_ic.unwrap_or(grid);
        let logits0 = tape.matmul(feat, self.p(binding, "head.p0.w"));
        let logits0 = tape.add_bias(logits0, self.p(binding, "head.p0.b"));
        let p0 = tape.masked_softmax_rows(logits0, None);

        // ── Iterative inference ──────────────────────────────────────────
        let mut p_rounds = vec![p0];
        let mut z_rounds = Vec::new();
        if c.t_rounds > 0 {
            let mut z = tape.matmul(pair, self.p(binding, "inference.z0.w_h"));
            if c.use_b_tensor {
                let b = beta.expect("use_b_tensor requires fusion output");
                let zb = tape.matmul(b, self.p(binding, "inference.z0.w_beta"));
                z = tape.add(z, zb);
            }
            z_rounds.push(z);
            for _ in 1..=c.t_rounds {
                let p_prev = *p_rounds.last().expect("p^0 exists");
                let row_read = tape.gather_rows(p_prev, Rc::clone(&ix.row_pool));
                let row_max = tape.row_block_max(row_read, n, Some(&ix.pool_mask_row));
                let col_read = tape.gather_rows(p_prev, Rc::clone(&ix.col_pool));
                let col_max = tape.row_block_max(col_read, n, Some(&ix.pool_mask_col));
                let row_cell = tape.gather_rows(row_max, Rc::clone(&ix.idx_i));
                let col_cell = tape.gather_rows(col_max, Rc::clone(&ix.idx_j));
                let z_in = tape.concat_last(&[z, row_cell, col_cell, p_prev]);
                let z_t = tape.matmul(z_in, self.p(binding, "inference.step.w"));
                let logits = tape.matmul(z_t, self.p(binding, "inference.out.w"));
                let logits = tape.add_bias(logits, self.p(binding, "inference.out.b"));
                let p_t = tape.masked_softmax_rows(logits, None);
                z = z_t;
                z_rounds.push(z_t);
                p_rounds.push(p_t);
            }
        }

        Forward { h_d, h_row, h_col, alphas, beta, grid, grid_ic, p_rounds, z_rounds }
    }

    /// Row and column convolutions over the grid, left/top-aligned with zero
    /// padding, concatenated with the input grid and projected back to d_g.
    fn image_conv(
        &self,
        tape: &mut Tape<S>,
        binding: &TapeBinding,
        grid: Var,
        ix: &GridIndex,
    ) -> Var {
        let c = &self.config;
        let mut maps = Vec::new();
        for (axis, shift) in [
            ("row", &GridIndex::row_shift as &dyn Fn(&GridIndex, usize) -> Rc<Vec<isize>>),
            ("col", &GridIndex::col_shift),
        ] {
            for &len in &c.kernels {
                let mut acc =
                    tape.matmul(grid, self.p(binding, &format!("ic.{axis}{len}.k0")));
                for t in 1..len {
                    let shifted = tape.gather_rows(grid, shift(ix, t));
                    let term =
                        tape.matmul(shifted, self.p(binding, &format!("ic.{axis}{len}.k{t}")));
                    acc = tape.add(acc, term);
                }
                maps.push(acc);
            }
        }
        maps.push(grid);
        let cat = tape.concat_last(&maps);
        let lin = tape.matmul(cat, self.p(binding, "ic.out.w"));
        tape.add_bias(lin, self.p(binding, "ic.out.b"))
    }

    /// Summed cross-entropy over the supervised cells of one sentence.
    pub fn sentence_loss(
        &self,
        tape: &mut Tape<S>,
        fwd: &Forward,
        ix: &GridIndex,
        gold: &LabelGrid,
    ) -> Var {
        let picked = tape.gather_rows(fwd.p_final(), Rc::clone(&ix.masked_cells));
        let nll = tape.nll_rows(picked, ix.targets(gold));
        tape.sum_all(nll)
    }

    /// Moves every parameter's gradient from the tape into the store.
    pub fn harvest_grads(&mut self, tape: &Tape<S>, binding: &TapeBinding) {
        for (k, &var) in binding.vars.iter().enumerate() {
            let g = tape.grad(var).to_vec();
            self.store.tensor_mut(k).accumulate_grad(&g);
        }
    }

    /// Full inference for one sentence: forward, argmax, decode.
    pub fn predict(&self, sentence: &Sentence, vectors: Option<&Tensor<S>>) -> ExtractionResult {
        let graph = CharGraph::build(sentence, &self.vocabs);
        let ix = GridIndex::new(sentence, self.config.mode);
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape);
        let fwd = self.forward(&mut tape, &binding, sentence, &graph, &ix, vectors);
        let labels = argmax_labels(tape.value(fwd.p_final()));
        decode_grid(&labels, sentence, self.config.mode)
    }

    /// The P (pair) channel of the final-round distribution, row-major
    /// `n × n`: entry `i*n + j` is the probability that character `i` (aspect
    /// axis) and character `j` (opinion axis) belong to a pair.
    pub fn pair_probabilities(&self, sentence: &Sentence, vectors: Option<&Tensor<S>>) -> Vec<f64> {
        let graph = CharGraph::build(sentence, &self.vocabs);
        let ix = GridIndex::new(sentence, self.config.mode);
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape);
        let fwd = self.forward(&mut tape, &binding, sentence, &graph, &ix, vectors);
        let p = tape.value(fwd.p_final());
        let n = sentence.n_chars();
        (0..n * n).map(|cell| p.data()[cell * self.config.label_count + Label::P.id()].to_f64()).collect()
    }

    /// Smallest top-two gap over every live max-pooling block the inference
    /// rounds read on this sentence; infinite when nothing is pooled.
    ///
    /// The pooled maximum is not differentiable where two candidates tie, so
    /// gradient checks against finite differences are only meaningful at
    /// parameter points where this margin comfortably exceeds the probe step.
    /// (Ties do occur in practice — freshly initialised biases are zero, and
    /// ReLU can zero whole rows, leaving several cells with identical uniform
    /// distributions.)
    pub fn pooling_margin(
        &self,
        sentence: &Sentence,
        graph: &CharGraph,
        ix: &GridIndex,
        vectors: Option<&Tensor<S>>,
    ) -> f64 {
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape);
        let fwd = self.forward(&mut tape, &binding, sentence, graph, ix, vectors);
        let n = sentence.n_chars();
        let mut margin = f64::INFINITY;
        let pooled = &fwd.p_rounds[..fwd.p_rounds.len() - 1];
        for &p in pooled {
            let p = tape.value(p).data();
            for (pool, mask) in [
                (&ix.row_pool, &ix.pool_mask_row),
                (&ix.col_pool, &ix.pool_mask_col),
            ] {
                for block in 0..n {
                    for channel in 0..self.config.label_count {
                        let mut top = f64::NEG_INFINITY;
                        let mut second = f64::NEG_INFINITY;
                        for k in 0..n {
                            if mask[block * n + k] == 0 {
                                continue;
                            }
                            let v = p[pool[block * n + k] as usize
                                * self.config.label_count
                                + channel]
                                .to_f64();
                            if v > top {
                                second = top;
                                top = v;
                            } else if v > second {
                                second = v;
                            }
                        }
                        if second.is_finite() {
                            margin = margin.min(top - second);
                        }
                    }
                }
            }
        }
        margin
    }
}

/// Per-cell argmax of a `[cells, 4]` distribution grid; ties take the first
/// (lowest-id) label, deterministically.
pub fn argmax_labels<S: Scalar>(p: &Tensor<S>) -> Vec<Label> {
    assert_eq!(p.dim(1), Label::COUNT, "argmax_labels: expected {} columns", Label::COUNT);
    p.data()
        .chunks(Label::COUNT)
        .map(|row| {
            let mut best = 0;
            for (k, &x) in row.iter().enumerate().skip(1) {
                if x > row[best] {
                    best = k;
                }
            }
            Label::from_id(best)
        })
        .collect()
}
