//! Finite-difference checks in 64-bit mode.

use fixsynth::autodiff::{grad_check, ParamStore, Tensor};
use fixsynth::gradcheck::{case_names, run_suite};
use fixsynth::rng::Rng;

const H: f64 = 1e-5;

fn random(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| (rng.unit() * 2.0 - 1.0) * scale).collect())
}

fn store(seed: u64, entries: &[(&str, &[usize])]) -> ParamStore<f64> {
    let mut rng = Rng::from_key(seed);
    let mut s = ParamStore::new();
    for (name, shape) in entries {
        s.insert(*name, random(&mut rng, shape, 1.0));
    }
    s
}

#[test]
fn every_op_and_the_task_loss_pass_for_two_seeds() {
    for seed in [0, 1] {
        let reports = run_suite(seed);
        assert_eq!(reports.len(), case_names().len());
        for r in reports {
            assert!(r.passes(), "seed {seed}: {} {:?}", r.name, r.report);
            assert!(r.report.checked > 0);
        }
    }
}

#[test]
fn suite_covers_every_differentiable_op() {
    let names = case_names();
    for op in ["linear", "elementwise", "concat_slice", "embedding", "embed_linear", "maxpool", "lstm_cell", "softmax_xent", "task_loss"] {
        assert!(names.contains(&op), "{op}");
    }
}

#[test]
fn fused_embedding_projection_matches_the_unfused_ops() {
    let s = store(17, &[("table", &[5, 3]), ("w", &[6, 4])]);
    let ids: Vec<u32> = (0..16).map(|i| (i * 3 % 5) as u32).collect();
    let mut g = fixsynth::autodiff::Graph::new();
    let t = g.param(&s, "table");
    let w = g.param(&s, "w");
    let fused = g.embed_linear(t, w, &ids, 2).unwrap();
    let e = g.embedding(t, &ids, 2);
    let plain = g.matmul(e, w).unwrap();
    for (a, b) in g.value(fused).iter().zip(g.value(plain)) {
        assert!((a - b).abs() < 1e-12);
    }
}

/// Embedding -> dense -> relu -> maxpool -> two LSTM steps -> cross-entropy.
#[test]
fn random_small_graph() {
    let s = store(
        8,
        &[
            ("emb", &[6, 2]),
            ("w1", &[4, 3]),
            ("b1", &[3]),
            ("tok", &[4, 2]),
            ("lw", &[5, 12]),
            ("lb", &[12]),
            ("ow", &[3, 4]),
            ("ob", &[4]),
        ],
    );
    let r = grad_check(
        &s,
        |g, s| {
            let emb = g.param(s, "emb");
            let x = g.embedding(emb, &[1, 2, 5, 0, 3, 3, 4, 1], 2);
            let (w1, b1) = (g.param(s, "w1"), g.param(s, "b1"));
            let y = g.matmul(x, w1).unwrap();
            let y = g.add_bias(y, b1).unwrap();
            let y = g.relu(y);
            let z = g.maxpool_over_set(y, 2);
            let c0 = g.input(2, 3, vec![0.0; 6]);
            let tok = g.param(s, "tok");
            let (lw, lb) = (g.param(s, "lw"), g.param(s, "lb"));
            let (ow, ob) = (g.param(s, "ow"), g.param(s, "ob"));
            let mut h = z;
            let mut c = c0;
            let mut losses = Vec::new();
            for (inp, tgt) in [([0u32, 1], [2u32, 3]), ([2, 3], [1, 0])] {
                let e = g.embedding(tok, &inp, 1);
                let (h2, c2) = g.lstm_cell(e, h, c, lw, lb).unwrap();
                h = h2;
                c = c2;
                let logits = g.matmul(h, ow).unwrap();
                let logits = g.add_bias(logits, ob).unwrap();
                losses.push(g.softmax_xent(logits, &[Some(tgt[0]), Some(tgt[1])]));
            }
            g.sum(&losses).unwrap()
        },
        H,
    );
    assert!(r.passes(1e-4), "{r:?}");
}
