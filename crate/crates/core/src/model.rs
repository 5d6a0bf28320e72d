//! The synthesis network.
//!
//! One encoder maps each (input, output, executed output) triplet through a
//! character embedding and five dense layers, then max-pools over the example
//! set. With the executed slot filled by `DUMMY` it produces the example
//! encoding `z_E`; with a candidate's real outputs it produces `z_fix`. One
//! LSTM decoder, initialized with `h0 = z, c0 = 0`, generates program tokens
//! from either encoding.
//!
//! The training loss is `nll(P* | z_E) + nll(P* | z_fix)`, where `z_fix` comes
//! from executing the greedy decode of `z_E`. Decoding and execution sit
//! outside the graph, so no gradient flows through them.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::autodiff::{log_softmax, Graph, ParamStore, Scalar, ShapeError, Tensor, Var};
use crate::dsl::Program;
use crate::rng::{domain, Rng};
use crate::search::StepModel;
use crate::taskgen::{Example, Task, NUM_EXAMPLES};
use crate::vocab::{
    self, CharId, Executed, TokenId, TokenSeq, BOS, CHAR_VOCAB_SIZE, EOS, PAD, TOKEN_VOCAB_SIZE,
    TRIPLET_WIDTH,
};

pub const ENCODER_LAYERS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `H`: encoder output width and LSTM state size.
    pub hidden: usize,
    pub char_embed: usize,
    pub token_embed: usize,
    /// Examples per task, `N`.
    pub examples: usize,
    pub encoder_layers: usize,
    pub t_max: usize,
    pub char_vocab: usize,
    pub token_vocab: usize,
}

impl ModelConfig {
    pub fn with_hidden(hidden: usize) -> Self {
        ModelConfig {
            hidden,
            char_embed: 16,
            token_embed: 32,
            examples: NUM_EXAMPLES,
            encoder_layers: ENCODER_LAYERS,
            t_max: vocab::T_MAX,
            char_vocab: CHAR_VOCAB_SIZE,
            token_vocab: TOKEN_VOCAB_SIZE,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.encoder_layers != ENCODER_LAYERS {
            return Err(format!("encoder_layers must be {ENCODER_LAYERS}"));
        }
        if self.examples != NUM_EXAMPLES {
            return Err(format!("examples must be {NUM_EXAMPLES}"));
        }
        if self.char_vocab != CHAR_VOCAB_SIZE || self.token_vocab != TOKEN_VOCAB_SIZE {
            return Err("vocabulary sizes do not match this build".into());
        }
        if self.hidden == 0 || self.char_embed == 0 || self.token_embed == 0 {
            return Err("dimensions must be positive".into());
        }
        if self.t_max == 0 || self.t_max > vocab::T_MAX {
            return Err(format!("t_max must be in 1..={}", vocab::T_MAX));
        }
        Ok(())
    }
}

fn layer_name(l: usize, part: &str) -> String {
    format!("enc.l{l}.{part}")
}

const CHAR_EMBED: &str = "enc.char_embed";
const TOK_EMBED: &str = "dec.tok_embed";
const LSTM_W: &str = "dec.lstm.w";
const LSTM_B: &str = "dec.lstm.b";
const OUT_W: &str = "dec.out.w";
const OUT_B: &str = "dec.out.b";

/// Parameter names and shapes, in lexicographic order.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let h = cfg.hidden;
    let mut out = vec![
        (LSTM_B.to_string(), vec![4 * h]),
        (LSTM_W.to_string(), vec![cfg.token_embed + h, 4 * h]),
        (OUT_B.to_string(), vec![cfg.token_vocab]),
        (OUT_W.to_string(), vec![h, cfg.token_vocab]),
        (TOK_EMBED.to_string(), vec![cfg.token_vocab, cfg.token_embed]),
        (CHAR_EMBED.to_string(), vec![cfg.char_vocab, cfg.char_embed]),
    ];
    for l in 1..=cfg.encoder_layers {
        let fan_in = if l == 1 {
            TRIPLET_WIDTH * cfg.char_embed
        } else {
            h
        };
        out.push((layer_name(l, "b"), vec![h]));
        out.push((layer_name(l, "w"), vec![fan_in, h]));
    }
    out.sort();
    out
}

/// Glorot-uniform matrices and embeddings, zero biases, forget-gate bias 1.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> ParamStore<T> {
    let mut rng = Rng::stream(seed, domain::INIT, 0);
    let mut store = ParamStore::new();
    for (name, shape) in param_shapes(cfg) {
        let n: usize = shape.iter().product();
        let data = if shape.len() == 1 {
            let mut b = vec![T::ZERO; n];
            if name == LSTM_B {
                let h = cfg.hidden;
                b[h..2 * h].fill(T::ONE);
            }
            b
        } else {
            let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
            (0..n)
                .map(|_| T::from_f64((rng.unit() * 2.0 - 1.0) * a))
                .collect()
        };
        store.insert(name, Tensor::from_vec(&shape, data));
    }
    store
}

/// Exactly `n` examples, repeating the last one when fewer are given.
pub fn pad_examples(examples: &[Example], n: usize) -> Vec<Example> {
    assert!(!examples.is_empty(), "at least one example is required");
    let mut out: Vec<Example> = examples.iter().take(n).cloned().collect();
    while out.len() < n {
        out.push(examples[examples.len() - 1].clone());
    }
    out
}

/// Encoder rows for a first-round prediction: third slot all `DUMMY`.
pub fn dummy_triplets(examples: &[Example]) -> Vec<CharId> {
    pad_examples(examples, NUM_EXAMPLES)
        .iter()
        .flat_map(|ex| {
            vocab::encode_triplet(&ex.input, &ex.output, Executed::Dummy)
                .expect("example strings are printable and within width")
        })
        .collect()
}

/// What a candidate produced on each example; `None` marks a failure.
pub fn execute_candidate(candidate: Option<&Program>, examples: &[Example]) -> Vec<Option<String>> {
    examples
        .iter()
        .map(|ex| candidate.and_then(|p| p.execute(&ex.input).ok()))
        .collect()
}

/// Encoder rows for a fixer step. `executed` is aligned with `examples`.
pub fn executed_triplets(examples: &[Example], executed: &[Option<String>]) -> Vec<CharId> {
    assert_eq!(examples.len(), executed.len());
    let pairs: Vec<(Example, Option<String>)> = examples
        .iter()
        .cloned()
        .zip(executed.iter().cloned())
        .collect();
    let mut padded = pairs.clone();
    while padded.len() < NUM_EXAMPLES {
        padded.push(pairs[pairs.len() - 1].clone());
    }
    padded
        .iter()
        .take(NUM_EXAMPLES)
        .flat_map(|(ex, out)| {
            let slot = match out {
                Some(s) => Executed::Output(s),
                None => Executed::Fail,
            };
            vocab::encode_triplet(&ex.input, &ex.output, slot)
                .expect("example strings are printable and within width")
        })
        .collect()
}

/// `z` for every group of `N` triplet rows in `triplets`.
pub fn encode<'p, T: Scalar>(
    g: &mut Graph<'p, T>,
    params: &'p ParamStore<T>,
    cfg: &ModelConfig,
    triplets: &[CharId],
) -> Result<Var, ShapeError> {
    let ids: Vec<u32> = triplets.iter().map(|&c| c as u32).collect();
    let table = g.param(params, CHAR_EMBED);
    let mut x = table;
    for l in 1..=cfg.encoder_layers {
        let w = g.param(params, &layer_name(l, "w"));
        let b = g.param(params, &layer_name(l, "b"));
        let y = if l == 1 {
            g.embed_linear(table, w, &ids, TRIPLET_WIDTH)?
        } else {
            g.matmul(x, w)?
        };
        x = g.add_bias(y, b)?;
        if l < cfg.encoder_layers {
            x = g.relu(x);
        }
    }
    Ok(g.maxpool_over_set(x, cfg.examples))
}

struct DecoderVars {
    tok: Var,
    w: Var,
    b: Var,
    ow: Var,
    ob: Var,
}

fn decoder_vars<'p, T: Scalar>(g: &mut Graph<'p, T>, params: &'p ParamStore<T>) -> DecoderVars {
    DecoderVars {
        tok: g.param(params, TOK_EMBED),
        w: g.param(params, LSTM_W),
        b: g.param(params, LSTM_B),
        ow: g.param(params, OUT_W),
        ob: g.param(params, OUT_B),
    }
}

/// Feeds `prev` tokens; returns `(h', c', logits)`.
fn decoder_step<T: Scalar>(
    g: &mut Graph<'_, T>,
    v: &DecoderVars,
    prev: &[u32],
    h: Var,
    c: Var,
) -> Result<(Var, Var, Var), ShapeError> {
    let x = g.embedding(v.tok, prev, 1);
    let (h, c) = g.lstm_cell(x, h, c, v.w, v.b)?;
    let logits = g.matmul(h, v.ow)?;
    let logits = g.add_bias(logits, v.ob)?;
    Ok((h, c, logits))
}

/// Teacher-forced negative log-likelihood, summed over rows and over every
/// target token including `EOS`. Row `r` of `z` decodes `targets[r]`.
pub fn decode_nll_graph<'p, T: Scalar>(
    g: &mut Graph<'p, T>,
    params: &'p ParamStore<T>,
    z: Var,
    targets: &[&TokenSeq],
) -> Result<Var, ShapeError> {
    let rows = targets.len();
    Ok(decode_nll_groups(g, params, z, targets, &[0..rows])?[0])
}

/// Like [`decode_nll_graph`], with one summed loss per row range of `groups`.
pub fn decode_nll_groups<'p, T: Scalar>(
    g: &mut Graph<'p, T>,
    params: &'p ParamStore<T>,
    z: Var,
    targets: &[&TokenSeq],
    groups: &[Range<usize>],
) -> Result<Vec<Var>, ShapeError> {
    let (rows, hidden) = g.shape(z);
    assert_eq!(rows, targets.len(), "one target per encoding");
    let v = decoder_vars(g, params);
    let steps = targets.iter().map(|t| t.len()).max().unwrap_or(0);
    let mut h = z;
    let mut c = g.input(rows, hidden, vec![T::ZERO; rows * hidden]);
    let mut losses: Vec<Vec<Var>> = vec![Vec::with_capacity(steps); groups.len()];
    for t in 0..steps {
        let prev: Vec<u32> = targets
            .iter()
            .map(|s| match t {
                0 => BOS as u32,
                _ => s.ids().get(t - 1).copied().unwrap_or(PAD) as u32,
            })
            .collect();
        let want: Vec<Option<u32>> = targets
            .iter()
            .map(|s| s.ids().get(t).map(|&id| id as u32))
            .collect();
        let (h2, c2, logits) = decoder_step(g, &v, &prev, h, c)?;
        h = h2;
        c = c2;
        for (group, out) in groups.iter().zip(losses.iter_mut()) {
            let masked: Vec<Option<u32>> = want
                .iter()
                .enumerate()
                .map(|(r, w)| if group.contains(&r) { *w } else { None })
                .collect();
            out.push(g.softmax_xent(logits, &masked));
        }
    }
    losses
        .into_iter()
        .map(|l| {
            if l.is_empty() {
                Ok(g.input(1, 1, vec![T::ZERO]))
            } else {
                g.sum(&l)
            }
        })
        .collect()
}

/// The two loss terms and their mean over the batch.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    /// `nll(P* | z_E)`, averaged over tasks.
    pub first: Var,
    /// `nll(P* | z_fix)`, averaged over tasks.
    pub fixed: Var,
    pub total: Var,
}

/// A model: configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let params = init_params(&config, seed);
        Model { config, params }
    }

    /// Encodings of every `N`-row group of triplets, without a gradient tape.
    pub fn encode(&self, triplets: &[CharId]) -> Tensor<T> {
        let mut g = Graph::new();
        let z = encode(&mut g, &self.params, &self.config, triplets).expect("model shapes agree");
        g.tensor(z)
    }

    pub fn encode_examples(&self, examples: &[Example]) -> Vec<T> {
        self.encode(&dummy_triplets(examples)).data
    }

    pub fn decoder<'a>(&'a self, z: &[T]) -> LstmDecoder<'a, T> {
        assert_eq!(z.len(), self.config.hidden);
        LstmDecoder {
            model: self,
            z: z.to_vec(),
        }
    }

    /// Greedy decoding of each row of `z`, batched. Returns each sequence with
    /// its total log-probability. Decoding stops at `EOS` or after `t_max` tokens.
    pub fn decode_greedy_batch(&self, z: &Tensor<T>) -> Vec<(TokenSeq, f64)> {
        let h_dim = self.config.hidden;
        let rows = z.rows();
        let mut out: Vec<(TokenSeq, f64)> = vec![(TokenSeq::default(), 0.0); rows];
        let mut active: Vec<usize> = (0..rows).collect();
        let mut h = z.data.clone();
        let mut c = vec![T::ZERO; rows * h_dim];
        let mut prev = vec![BOS as u32; rows];
        for _ in 0..self.config.t_max {
            if active.is_empty() {
                break;
            }
            let (h2, c2, logits) = self.step_values(&prev, &h, &c, active.len());
            let v = self.config.token_vocab;
            let mut keep = Vec::with_capacity(active.len());
            for (slot, &row) in active.iter().enumerate() {
                let lp = log_softmax(&logits[slot * v..(slot + 1) * v]);
                let best = argmax(&lp);
                out[row].0 .0.push(best as TokenId);
                out[row].1 += lp[best];
                if best as TokenId != EOS {
                    keep.push(slot);
                }
            }
            active = keep.iter().map(|&s| active[s]).collect();
            h = gather_rows(&h2, &keep, h_dim);
            c = gather_rows(&c2, &keep, h_dim);
            prev = active
                .iter()
                .map(|&row| *out[row].0 .0.last().unwrap() as u32)
                .collect();
        }
        out
    }

    pub fn decode_greedy(&self, z: &[T]) -> (TokenSeq, f64) {
        let t = Tensor::from_vec(&[1, z.len()], z.to_vec());
        self.decode_greedy_batch(&t).pop().unwrap()
    }

    /// `(h', c', logits)` for a batch of decoder states, as plain values.
    pub fn step_values(&self, prev: &[u32], h: &[T], c: &[T], rows: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let hd = self.config.hidden;
        let mut g = Graph::new();
        let v = decoder_vars(&mut g, &self.params);
        let hv = g.input(rows, hd, h.to_vec());
        let cv = g.input(rows, hd, c.to_vec());
        let (h2, c2, logits) = decoder_step(&mut g, &v, prev, hv, cv).expect("model shapes agree");
        (g.value(h2).to_vec(), g.value(c2).to_vec(), g.value(logits).to_vec())
    }

    /// Teacher-forced negative log-likelihood of `target` given `z`.
    pub fn decode_nll(&self, z: &[T], target: &TokenSeq) -> f64 {
        let mut g = Graph::new();
        let zv = g.input(1, z.len(), z.to_vec());
        let loss = decode_nll_graph(&mut g, &self.params, zv, &[target]).expect("model shapes agree");
        g.value(loss)[0].to_f64()
    }

    /// Greedy predictions from `z_E` for each task, executed on the task's
    /// examples, as encoder rows for the fixer term. Runs without a tape.
    pub fn fixer_triplets(&self, tasks: &[Task]) -> Vec<CharId> {
        let dummy: Vec<CharId> = tasks.iter().flat_map(|t| dummy_triplets(&t.examples)).collect();
        let z = self.encode(&dummy);
        let decoded = self.decode_greedy_batch(&z);
        tasks
            .iter()
            .zip(decoded)
            .flat_map(|(task, (seq, _))| {
                let program = vocab::tokens_to_program(&seq).ok();
                let executed = execute_candidate(program.as_ref(), &task.examples);
                executed_triplets(&task.examples, &executed)
            })
            .collect()
    }
}

/// Builds the two-term loss for `tasks`. `fix_triplets` holds the encoder rows
/// of the executed intermediate predictions (see [`Model::fixer_triplets`]);
/// passing them in keeps the intermediate program fixed under perturbation.
pub fn task_loss_graph<'p, T: Scalar>(
    g: &mut Graph<'p, T>,
    params: &'p ParamStore<T>,
    cfg: &ModelConfig,
    tasks: &[Task],
    targets: &[TokenSeq],
    fix_triplets: &[CharId],
) -> Result<LossVars, ShapeError> {
    assert_eq!(tasks.len(), targets.len());
    let dummy: Vec<CharId> = tasks.iter().flat_map(|t| dummy_triplets(&t.examples)).collect();
    assert_eq!(dummy.len(), fix_triplets.len(), "one fixer row per example row");
    // Both encodings and both decodes run as one batch of 2B rows.
    let mut rows = dummy;
    rows.extend_from_slice(fix_triplets);
    let z = encode(g, params, cfg, &rows)?;
    let b = targets.len();
    let refs: Vec<&TokenSeq> = targets.iter().chain(targets).collect();
    let terms = decode_nll_groups(g, params, z, &refs, &[0..b, b..2 * b])?;
    let (first, fixed) = (terms[0], terms[1]);
    let inv = T::from_f64(1.0 / tasks.len().max(1) as f64);
    let first = g.scale(first, inv);
    let fixed = g.scale(fixed, inv);
    let total = g.sum(&[first, fixed])?;
    Ok(LossVars {
        first,
        fixed,
        total,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn gather_rows<T: Copy>(data: &[T], rows: &[usize], width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows.len() * width);
    for &r in rows {
        out.extend_from_slice(&data[r * width..(r + 1) * width]);
    }
    out
}

/// The LSTM decoder started from one encoding, for search procedures.
pub struct LstmDecoder<'a, T: Scalar> {
    model: &'a Model<T>,
    z: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct LstmState<T> {
    h: Vec<T>,
    c: Vec<T>,
}

impl<T: Scalar> StepModel for LstmDecoder<'_, T> {
    type State = LstmState<T>;

    fn vocab_size(&self) -> usize {
        self.model.config.token_vocab
    }

    fn initial_state(&self) -> Self::State {
        LstmState {
            h: self.z.clone(),
            c: vec![T::ZERO; self.z.len()],
        }
    }

    fn step(&self, states: &[&Self::State], prev: &[TokenId]) -> Vec<(Self::State, Vec<f64>)> {
        let hd = self.model.config.hidden;
        let rows = states.len();
        let h: Vec<T> = states.iter().flat_map(|s| s.h.iter().copied()).collect();
        let c: Vec<T> = states.iter().flat_map(|s| s.c.iter().copied()).collect();
        let prev: Vec<u32> = prev.iter().map(|&t| t as u32).collect();
        let (h2, c2, logits) = self.model.step_values(&prev, &h, &c, rows);
        let v = self.vocab_size();
        (0..rows)
            .map(|r| {
                (
                    LstmState {
                        h: h2[r * hd..(r + 1) * hd].to_vec(),
                        c: c2[r * hd..(r + 1) * hd].to_vec(),
                    },
                    log_softmax(&logits[r * v..(r + 1) * v]),
                )
            })
            .collect()
    }
}
