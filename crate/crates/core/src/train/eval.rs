use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::model::Model;
use crate::rng::domain;
use crate::search::{run_search, FixTrace, Method, SearchConfig, Synthesizer};
use crate::taskgen::{generate_task, GenConfig, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub length: usize,
    pub tasks: usize,
    pub solved: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub method: Method,
    pub tasks: usize,
    pub solved: usize,
    pub accuracy: f64,
    /// Mean 1-based step of the solving candidate, over solved tasks.
    pub mean_steps_to_solve: Option<f64>,
    /// Ground-truth lengths with at least one task, ascending.
    pub by_length: Vec<LengthBucket>,
}

/// Tasks for evaluation, drawn from a seed domain disjoint from training.
pub fn heldout_task(gen: &GenConfig, seed: u64, index: u64) -> Task {
    let mut rng = crate::rng::Rng::stream(seed, domain::HELDOUT, index);
    generate_task(&mut rng, gen)
}

pub fn heldout_corpus(gen: &GenConfig, seed: u64, count: usize, workers: usize) -> Vec<Task> {
    parallel_map(count, workers, |i| heldout_task(gen, seed, i as u64))
}

/// `f(0..count)` in order, split across `workers` threads.
pub fn parallel_map<R: Send, F: Fn(usize) -> R + Sync>(count: usize, workers: usize, f: F) -> Vec<R> {
    let workers = workers.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(f).collect();
    }
    let chunk = count.div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(count))
                        .map(f)
                        .collect::<Vec<R>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Runs `method` on every task and summarizes. Traces are returned in corpus order.
pub fn evaluate_with<M: Synthesizer + Sync>(
    model: &M,
    corpus: &[Task],
    search: &SearchConfig,
    method: Method,
    workers: usize,
) -> (EvalMetrics, Vec<FixTrace>) {
    let traces = parallel_map(corpus.len(), workers, |i| {
        run_search(model, &corpus[i].examples, search, method)
    });
    (summarize(corpus, &traces, method), traces)
}

pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    corpus: &[Task],
    search: &SearchConfig,
    method: Method,
    workers: usize,
) -> (EvalMetrics, Vec<FixTrace>) {
    evaluate_with(model, corpus, search, method, workers)
}

pub fn summarize(corpus: &[Task], traces: &[FixTrace], method: Method) -> EvalMetrics {
    assert_eq!(corpus.len(), traces.len());
    let max_len = corpus.iter().map(|t| t.program.len()).max().unwrap_or(0);
    let mut buckets = vec![(0usize, 0usize); max_len + 1];
    let mut solved = 0;
    let mut step_sum = 0usize;
    for (task, trace) in corpus.iter().zip(traces) {
        let b = &mut buckets[task.program.len()];
        b.0 += 1;
        if let Some(s) = trace.solved_at {
            b.1 += 1;
            solved += 1;
            step_sum += s;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    EvalMetrics {
        method,
        tasks: corpus.len(),
        solved,
        accuracy: ratio(solved, corpus.len()),
        mean_steps_to_solve: (solved > 0).then(|| step_sum as f64 / solved as f64),
        by_length: buckets
            .iter()
            .enumerate()
            .filter(|(_, b)| b.0 > 0)
            .map(|(length, &(tasks, solved))| LengthBucket {
                length,
                tasks,
                solved,
                accuracy: ratio(solved, tasks),
            })
            .collect(),
    }
}
