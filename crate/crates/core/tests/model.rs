use fixsynth::autodiff::{grad_check, Adam, AdamConfig, Graph};
use fixsynth::model::{
    self, dummy_triplets, encode, execute_candidate, executed_triplets, param_shapes,
    task_loss_graph, Model, ModelConfig,
};
use fixsynth::search::{beam_search, greedy_decode};
use fixsynth::taskgen::{corpus_task, GenConfig, Task};
use fixsynth::vocab::{program_to_tokens, TokenSeq, TRIPLET_WIDTH};

fn small_gen(seed: u64, max_expressions: usize) -> GenConfig {
    GenConfig {
        max_expressions,
        max_io_len: 20,
        seed,
        ..GenConfig::default()
    }
}

fn tiny_config(hidden: usize) -> ModelConfig {
    ModelConfig {
        char_embed: 4,
        token_embed: 6,
        ..ModelConfig::with_hidden(hidden)
    }
}

#[test]
fn encoding_ignores_example_order() {
    let m: Model<f32> = Model::new(ModelConfig::with_hidden(32), 3);
    let task = corpus_task(&small_gen(1, 3), 0);
    let rows = dummy_triplets(&task.examples);
    let mut shuffled = Vec::new();
    for i in [2, 0, 3, 1] {
        shuffled.extend_from_slice(&rows[i * TRIPLET_WIDTH..(i + 1) * TRIPLET_WIDTH]);
    }
    assert_eq!(m.encode(&rows).data, m.encode(&shuffled).data);
}

#[test]
fn repeated_triplet_encodes_like_a_single_one() {
    let cfg = ModelConfig::with_hidden(16);
    let m: Model<f64> = Model::new(cfg.clone(), 5);
    let task = corpus_task(&small_gen(2, 2), 0);
    let one = &dummy_triplets(&task.examples)[..TRIPLET_WIDTH];
    let four: Vec<u8> = one.iter().copied().cycle().take(4 * TRIPLET_WIDTH).collect();
    let single_cfg = ModelConfig { examples: 1, ..cfg };
    let mut g = Graph::new();
    let z1 = encode(&mut g, &m.params, &single_cfg, one).unwrap();
    assert_eq!(g.value(z1), m.encode(&four).data.as_slice());
}

#[test]
fn executed_outputs_change_the_encoding() {
    let m: Model<f32> = Model::new(ModelConfig::with_hidden(32), 7);
    let task = corpus_task(&small_gen(3, 2), 4);
    let z_e = m.encode(&dummy_triplets(&task.examples)).data;
    let executed = execute_candidate(Some(&task.program), &task.examples);
    let z_fix = m.encode(&executed_triplets(&task.examples, &executed)).data;
    assert_ne!(z_e, z_fix);
}

#[test]
fn greedy_matches_stepwise_argmax_and_width_one_beam_is_no_worse() {
    let m: Model<f32> = Model::new(ModelConfig::with_hidden(24), 11);
    let gen = small_gen(4, 3);
    for i in 0..20 {
        let task = corpus_task(&gen, i);
        let z = m.encode_examples(&task.examples);
        let greedy = m.decode_greedy(&z);
        let stepwise = greedy_decode(&m.decoder(&z), m.config.t_max);
        assert_eq!(greedy, stepwise);
        let beam = beam_search(&m.decoder(&z), 1, m.config.t_max);
        assert_eq!(beam.len(), 1);
        assert!(beam[0].1 >= greedy.1);
        if beam[0].0 != greedy.0 {
            // The beam's pick ends the greedy path early.
            let n = beam[0].0.len() - 1;
            assert_eq!(beam[0].0.ids()[..n], greedy.0.ids()[..n]);
        }
    }
}

#[test]
fn batched_greedy_agrees_with_single_rows() {
    let m: Model<f32> = Model::new(ModelConfig::with_hidden(24), 12);
    let gen = small_gen(5, 3);
    let tasks: Vec<Task> = (0..6).map(|i| corpus_task(&gen, i)).collect();
    let rows: Vec<u8> = tasks.iter().flat_map(|t| dummy_triplets(&t.examples)).collect();
    let z = m.encode(&rows);
    let batch = m.decode_greedy_batch(&z);
    for (r, (seq, _)) in batch.iter().enumerate() {
        assert_eq!(seq, &m.decode_greedy(z.row(r)).0);
    }
}

#[test]
fn greedy_log_prob_matches_teacher_forcing() {
    let m: Model<f64> = Model::new(ModelConfig::with_hidden(16), 13);
    let gen = small_gen(6, 2);
    for i in 0..5 {
        let task = corpus_task(&gen, i);
        let z = m.encode_examples(&task.examples);
        let (seq, lp) = m.decode_greedy(&z);
        let nll = m.decode_nll(&z, &seq);
        assert!((lp + nll).abs() < 1e-9, "{lp} vs {nll}");
        let truth = program_to_tokens(&task.program).unwrap();
        assert!(m.decode_nll(&z, &truth) >= 0.0);
    }
}

#[test]
fn parameters_are_shared_between_both_encodings() {
    let cfg = ModelConfig::with_hidden(64);
    let m: Model<f32> = Model::new(cfg.clone(), 0);
    let names: Vec<&str> = m.params.names().collect();
    assert_eq!(names.len(), 16);
    let enc: Vec<&&str> = names.iter().filter(|n| n.starts_with("enc.")).collect();
    assert_eq!(enc.len(), 11);
    // 98*16 + 3840*64 + 64 + 4*(64*64 + 64) + 51*32 + 96*256 + 256 + 64*51 + 51
    let expected = 1568 + 245_760 + 64 + 4 * 4160 + 1632 + 24_576 + 256 + 3264 + 51;
    assert_eq!(m.params.num_values(), expected);
    let shapes = param_shapes(&cfg);
    for ((name, t), (sname, shape)) in m.params.iter().zip(&shapes) {
        assert_eq!(name, sname);
        assert_eq!(&t.shape, shape);
    }
}

#[test]
fn forget_gate_bias_starts_at_one() {
    let m: Model<f32> = Model::new(ModelConfig::with_hidden(8), 0);
    let b = &m.params.get("dec.lstm.b").unwrap().data;
    assert!(b[..8].iter().all(|&v| v == 0.0));
    assert!(b[8..16].iter().all(|&v| v == 1.0));
    assert!(b[16..].iter().all(|&v| v == 0.0));
}

#[test]
fn task_loss_gradient_matches_finite_differences() {
    let cfg = tiny_config(8);
    let m: Model<f64> = Model::new(cfg.clone(), 21);
    let gen = small_gen(7, 1);
    let tasks: Vec<Task> = (0..2).map(|i| corpus_task(&gen, i)).collect();
    let targets: Vec<TokenSeq> = tasks
        .iter()
        .map(|t| program_to_tokens(&t.program).unwrap())
        .collect();
    let fix = m.fixer_triplets(&tasks);
    let report = grad_check(
        &m.params,
        |g, p| {
            task_loss_graph(g, p, &cfg, &tasks, &targets, &fix)
                .unwrap()
                .total
        },
        1e-5,
    );
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn executed_slot_only_affects_the_fixer_term() {
    let cfg = ModelConfig::with_hidden(16);
    let m: Model<f64> = Model::new(cfg.clone(), 22);
    let task = corpus_task(&small_gen(8, 2), 1);
    let target = vec![program_to_tokens(&task.program).unwrap()];
    let tasks = vec![task.clone()];
    let fails = executed_triplets(&task.examples, &vec![None; task.examples.len()]);
    let real = executed_triplets(
        &task.examples,
        &model::execute_candidate(Some(&task.program), &task.examples),
    );
    let terms = |fix: &[u8]| {
        let mut g = Graph::new();
        let l = task_loss_graph(&mut g, &m.params, &cfg, &tasks, &target, fix).unwrap();
        (g.value(l.first)[0], g.value(l.fixed)[0])
    };
    let (a1, a2) = terms(&fails);
    let (b1, b2) = terms(&real);
    assert_eq!(a1.to_bits(), b1.to_bits());
    assert_ne!(a2, b2);
}

#[test]
fn one_task_can_be_memorized() {
    let cfg = ModelConfig::with_hidden(32);
    let mut m: Model<f32> = Model::new(cfg.clone(), 23);
    let tasks = vec![corpus_task(&small_gen(9, 2), 0)];
    let targets = vec![program_to_tokens(&tasks[0].program).unwrap()];
    let mut adam = Adam::new(
        AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        &m.params,
    );
    let mut loss = f32::INFINITY;
    for _ in 0..500 {
        let fix = m.fixer_triplets(&tasks);
        let grads = {
            let mut g = Graph::new();
            let l = task_loss_graph(&mut g, &m.params, &cfg, &tasks, &targets, &fix).unwrap();
            loss = g.value(l.total)[0];
            g.backward(l.total)
        };
        adam.step(&mut m.params, &grads).unwrap();
    }
    assert!(loss < 0.01, "loss {loss}");
    let z = m.encode_examples(&tasks[0].examples);
    assert_eq!(m.decode_greedy(&z).0, targets[0]);
}
