//! Finite-difference checks for every differentiable op and for the full
//! training loss, in 64-bit mode.

use crate::autodiff::{grad_check, GradReport, Graph, ParamStore, Tensor, Var};
use crate::model::{task_loss_graph, Model, ModelConfig};
use crate::rng::Rng;
use crate::taskgen::{corpus_task, GenConfig, Task};
use crate::vocab::{program_to_tokens, TokenSeq};

/// Central-difference step.
pub const STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct CaseReport {
    pub name: &'static str,
    pub tolerance: f64,
    pub report: GradReport,
}

impl CaseReport {
    pub fn passes(&self) -> bool {
        self.report.passes(self.tolerance)
    }
}

fn random(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.unit() * 2.0 - 1.0).collect())
}

fn store(seed: u64, entries: &[(&str, &[usize])]) -> ParamStore<f64> {
    let mut rng = Rng::from_key(seed);
    let mut s = ParamStore::new();
    for (name, shape) in entries {
        s.insert(*name, random(&mut rng, shape));
    }
    s
}

/// Reduces any output to a scalar through a fixed random projection.
fn project(g: &mut Graph<'_, f64>, x: Var, seed: u64) -> Var {
    let (m, n) = g.shape(x);
    let mut rng = Rng::from_key(seed);
    let w = g.input(n, 1, (0..n).map(|_| rng.unit() - 0.5).collect());
    let y = g.matmul(x, w).unwrap();
    let ones = g.input(1, m, vec![1.0; m]);
    g.matmul(ones, y).unwrap()
}

type Case = (&'static str, f64, Box<dyn Fn(u64) -> GradReport>);

fn cases() -> Vec<Case> {
    vec![
        ("linear", 1e-6, Box::new(|seed| {
            let s = store(seed, &[("w", &[4, 3]), ("b", &[3]), ("x", &[2, 4])]);
            grad_check(&s, |g, s| {
                let (x, w, b) = (g.param(s, "x"), g.param(s, "w"), g.param(s, "b"));
                let y = g.matmul(x, w).unwrap();
                let y = g.add_bias(y, b).unwrap();
                project(g, y, seed + 100)
            }, STEP)
        })),
        ("elementwise", 1e-6, Box::new(|seed| {
            let s = store(seed, &[("x", &[3, 4]), ("y", &[3, 4])]);
            grad_check(&s, |g, s| {
                let (x, y) = (g.param(s, "x"), g.param(s, "y"));
                let a = g.tanh(x);
                let b = g.sigmoid(y);
                let c = g.relu(x);
                let d = g.add(a, b).unwrap();
                let e = g.sum(&[d, c]).unwrap();
                let e = g.scale(e, 0.7);
                project(g, e, seed + 100)
            }, STEP)
        })),
        ("concat_slice", 1e-6, Box::new(|seed| {
            let s = store(seed, &[("a", &[2, 3]), ("b", &[2, 2]), ("c", &[1, 5])]);
            grad_check(&s, |g, s| {
                let (a, b, c) = (g.param(s, "a"), g.param(s, "b"), g.param(s, "c"));
                let ab = g.concat(&[a, b]).unwrap();
                let abc = g.concat_rows(&[ab, c]).unwrap();
                let mid = g.slice_cols(abc, 1, 4);
                let t = g.tanh(mid);
                project(g, t, seed + 100)
            }, STEP)
        })),
        ("embedding", 1e-6, Box::new(|seed| {
            let s = store(seed, &[("table", &[5, 3])]);
            grad_check(&s, |g, s| {
                let t = g.param(s, "table");
                let e = g.embedding(t, &[0, 3, 3, 1, 4, 0], 2);
                let e = g.tanh(e);
                project(g, e, seed + 100)
            }, STEP)
        })),
        ("embed_linear", 1e-6, Box::new(|seed| {
            // 3 rows take the gathered path, 8 rows the per-position one.
            let long: Vec<u32> = (0..16).map(|i| (i * 7 % 5) as u32).collect();
            let mut worst: Option<GradReport> = None;
            for ids in [vec![0u32, 3, 3, 1, 4, 0], long] {
                let s = store(seed, &[("table", &[5, 3]), ("w", &[6, 4])]);
                let r = grad_check(&s, |g, s| {
                    let (t, w) = (g.param(s, "table"), g.param(s, "w"));
                    let y = g.embed_linear(t, w, &ids, 2).unwrap();
                    let y = g.tanh(y);
                    project(g, y, seed + 100)
                }, STEP);
                if worst.as_ref().is_none_or(|w| r.worst_rel_error > w.worst_rel_error) {
                    worst = Some(r);
                }
            }
            worst.unwrap()
        })),
        ("maxpool", 1e-6, Box::new(|seed| {
            let s = store(seed, &[("x", &[6, 4])]);
            grad_check(&s, |g, s| {
                let x = g.param(s, "x");
                let m = g.maxpool_over_set(x, 3);
                project(g, m, seed + 100)
            }, STEP)
        })),
        ("lstm_cell", 1e-5, Box::new(|seed| {
            let s = store(seed, &[
                ("x", &[2, 3]), ("h", &[2, 4]), ("c", &[2, 4]), ("w", &[7, 16]), ("b", &[16]),
            ]);
            grad_check(&s, |g, s| {
                let (x, h, c) = (g.param(s, "x"), g.param(s, "h"), g.param(s, "c"));
                let (w, b) = (g.param(s, "w"), g.param(s, "b"));
                let (h2, c2) = g.lstm_cell(x, h, c, w, b).unwrap();
                let both = g.concat(&[h2, c2]).unwrap();
                project(g, both, seed + 100)
            }, STEP)
        })),
        ("softmax_xent", 1e-6, Box::new(|seed| {
            let s = store(seed, &[("logits", &[3, 5])]);
            grad_check(&s, |g, s| {
                let l = g.param(s, "logits");
                g.softmax_xent(l, &[Some(1), None, Some(4)])
            }, STEP)
        })),
        ("task_loss", 1e-4, Box::new(task_loss_case)),
    ]
}

/// The two-term loss of a hidden-size-8 model on two generated tasks.
fn task_loss_case(seed: u64) -> GradReport {
    let cfg = ModelConfig {
        char_embed: 4,
        token_embed: 6,
        ..ModelConfig::with_hidden(8)
    };
    let m: Model<f64> = Model::new(cfg.clone(), seed);
    let gen = GenConfig {
        max_expressions: 1,
        max_io_len: 20,
        seed,
        ..GenConfig::default()
    };
    let tasks: Vec<Task> = (0..2).map(|i| corpus_task(&gen, i)).collect();
    let targets: Vec<TokenSeq> = tasks
        .iter()
        .map(|t| program_to_tokens(&t.program).expect("generated programs tokenize"))
        .collect();
    let fix = m.fixer_triplets(&tasks);
    grad_check(
        &m.params,
        |g, p| task_loss_graph(g, p, &cfg, &tasks, &targets, &fix).unwrap().total,
        STEP,
    )
}

/// Names of the checks, in the order [`run_suite`] reports them.
pub fn case_names() -> Vec<&'static str> {
    cases().into_iter().map(|c| c.0).collect()
}

/// Runs every check with data drawn from `seed`.
pub fn run_suite(seed: u64) -> Vec<CaseReport> {
    cases()
        .into_iter()
        .enumerate()
        .map(|(i, (name, tolerance, check))| CaseReport {
            name,
            tolerance,
            report: check(seed.wrapping_mul(31).wrapping_add(i as u64 + 1)),
        })
        .collect()
}
