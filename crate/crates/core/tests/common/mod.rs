//! Fixtures shared by the analysis tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};

use fixsynth::analyze::{apply_script, diff_lists, step2_study, Histogram, TaskTrace};
use fixsynth::dsl::{Delimiter, Expression, Program};
use fixsynth::rng::Rng;
use fixsynth::search::{FixTrace, Method, StepModel, TraceStep};
use fixsynth::vocab::{TokenId, EOS};

pub fn e(k: usize) -> Expression {
    Expression::ConstStr(Delimiter::from_index(k).unwrap())
}

pub fn prog(ks: &[usize]) -> Program {
    Program::new(ks.iter().map(|&k| e(k)).collect()).unwrap()
}

/// Breadth-first search over single edits gives the true minimum edit count
/// from `start` to every list within `radius` edits.
pub fn edit_distances(start: &[u8], alphabet: u8, radius: usize) -> HashMap<Vec<u8>, usize> {
    let mut dist = HashMap::from([(start.to_vec(), 0)]);
    let mut queue = VecDeque::from([start.to_vec()]);
    while let Some(cur) = queue.pop_front() {
        let d = dist[&cur];
        if d == radius {
            continue;
        }
        let mut next = Vec::new();
        for i in 0..cur.len() {
            let mut del = cur.clone();
            del.remove(i);
            next.push(del);
            for s in 0..alphabet {
                let mut sub = cur.clone();
                sub[i] = s;
                next.push(sub);
            }
        }
        for i in 0..=cur.len() {
            for s in 0..alphabet {
                let mut ins = cur.clone();
                ins.insert(i, s);
                next.push(ins);
            }
        }
        for n in next {
            if !dist.contains_key(&n) {
                dist.insert(n.clone(), d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

pub fn all_lists(alphabet: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for l in &frontier {
            for s in 0..alphabet {
                let mut m: Vec<u8> = l.clone();
                m.push(s);
                next.push(m);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Pairs of lists up to `max_len` over `alphabet` symbols whose diff is not
/// a minimal script that turns one into the other.
pub fn minimality_violations(alphabet: u8, max_len: usize) -> (usize, usize) {
    let lists = all_lists(alphabet, max_len);
    let mut violations = 0;
    let mut pairs = 0;
    for a in &lists {
        let truth = edit_distances(a, alphabet, max_len);
        let ea: Vec<Expression> = a.iter().map(|&k| e(k as usize)).collect();
        for b in &lists {
            let eb: Vec<Expression> = b.iter().map(|&k| e(k as usize)).collect();
            let script = diff_lists(&ea, &eb);
            pairs += 1;
            if script.len() != truth[b] || apply_script(&ea, &script) != eb {
                violations += 1;
            }
        }
    }
    (violations, pairs)
}

pub fn step(program: Option<&Program>, matched: bool) -> TraceStep {
    TraceStep {
        tokens: Vec::new(),
        program: program.map(Program::render),
        decode_error: program.is_none().then(|| "invalid".to_string()),
        outputs: Vec::new(),
        matched,
        log_prob: -1.0,
    }
}

pub fn traced(task: usize, method: Method, steps: Vec<TraceStep>, truth_len: usize) -> TaskTrace {
    let solved_at = steps.iter().position(|s| s.matched).map(|i| i + 1);
    let truth = prog(&vec![7; truth_len]).render();
    (task, Some(truth), FixTrace { method, steps, solved_at })
}

pub fn fixture() -> Vec<TaskTrace> {
    vec![
        traced(0, Method::Beam, vec![step(Some(&prog(&[0, 1, 2])), false), step(Some(&prog(&[0, 1, 3])), true)], 3),
        traced(1, Method::Beam, vec![step(Some(&prog(&[0])), false), step(Some(&prog(&[0, 1])), true)], 2),
        traced(2, Method::Fixer, vec![step(Some(&prog(&[0, 1, 2])), false), step(Some(&prog(&[3, 1, 2, 0])), true)], 4),
        traced(3, Method::Fixer, vec![step(Some(&prog(&[0])), true)], 1),
        traced(4, Method::Fixer, vec![step(Some(&prog(&[0])), false), step(Some(&prog(&[1])), false), step(Some(&prog(&[2])), true)], 1),
        traced(5, Method::Fixer, vec![step(None, false), step(Some(&prog(&[1])), true)], 1),
        traced(6, Method::Fixer, vec![step(Some(&prog(&[0, 1])), false), step(Some(&prog(&[2])), true)], 1),
        traced(7, Method::Beam, vec![step(Some(&prog(&[0])), false), step(Some(&prog(&[1])), false)], 3),
    ]
}

pub fn hist(pairs: &[(usize, usize)]) -> Histogram {
    Histogram { counts: pairs.iter().copied().collect::<BTreeMap<_, _>>() }
}

/// Mismatches between the step-2 study of [`fixture`] and its hand-computed histograms.
pub fn fixture_mismatches() -> Vec<String> {
    let study = step2_study(&fixture(), None);
    let mut bad = Vec::new();
    let mut check = |what: &str, got: &Histogram, want: Histogram| {
        if *got != want {
            bad.push(format!("{what}: {:?} != {:?}", got.counts, want.counts));
        }
    };
    check("beam initial_length", &study[0].initial_length, hist(&[(1, 1), (3, 1)]));
    check("beam expressions_changed", &study[0].expressions_changed, hist(&[(1, 2)]));
    check("beam distance", &study[0].furthest_distance_from_end, hist(&[(0, 1), (1, 1)]));
    check("fixer initial_length", &study[1].initial_length, hist(&[(2, 1), (3, 1)]));
    check("fixer expressions_changed", &study[1].expressions_changed, hist(&[(2, 2)]));
    check("fixer distance", &study[1].furthest_distance_from_end, hist(&[(2, 1), (3, 1)]));
    bad
}

/// Per-step token distributions that ignore the prefix.
pub struct ContextFree(pub Vec<Vec<f64>>);

impl ContextFree {
    pub fn random(seed: u64, vocab: usize, steps: usize) -> Self {
        let mut rng = Rng::from_key(seed);
        ContextFree(
            (0..steps)
                .map(|_| {
                    let w: Vec<f64> = (0..vocab).map(|_| rng.unit() + 1e-3).collect();
                    let total: f64 = w.iter().sum();
                    w.iter().map(|x| (x / total).ln()).collect()
                })
                .collect(),
        )
    }

    /// Every complete sequence, best first (ties by tokens ascending).
    pub fn enumerate(&self) -> Vec<(Vec<TokenId>, f64)> {
        let mut out = Vec::new();
        let mut frontier = vec![(Vec::new(), 0.0)];
        for (t, lp) in self.0.iter().enumerate() {
            let mut next = Vec::new();
            for (seq, score) in &frontier {
                for (tok, l) in lp.iter().enumerate() {
                    let mut s: Vec<TokenId> = seq.clone();
                    s.push(tok as TokenId);
                    if tok as TokenId == EOS || t + 1 == self.0.len() {
                        out.push((s, score + l));
                    } else {
                        next.push((s, score + l));
                    }
                }
            }
            frontier = next;
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

impl StepModel for ContextFree {
    type State = usize;

    fn vocab_size(&self) -> usize {
        self.0[0].len()
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn step(&self, states: &[&usize], _prev: &[TokenId]) -> Vec<(usize, Vec<f64>)> {
        states.iter().map(|&&t| (t + 1, self.0[t].clone())).collect()
    }
}


/// Distributions that depend on the whole prefix, drawn from `seed`.
pub struct PrefixDependent {
    pub seed: u64,
    pub vocab: usize,
}

impl PrefixDependent {
    fn dist(&self, prefix: &[TokenId]) -> Vec<f64> {
        let mut key = self.seed;
        for &t in prefix {
            key = fixsynth::rng::mix(key ^ (t as u64 + 1));
        }
        let mut rng = Rng::from_key(key);
        let w: Vec<f64> = (0..self.vocab).map(|_| rng.unit() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|x| (x / total).ln()).collect()
    }

    /// Every complete sequence up to `t_max` tokens, best first.
    pub fn enumerate(&self, t_max: usize) -> Vec<(Vec<TokenId>, f64)> {
        let mut out = Vec::new();
        let mut frontier: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
        for t in 0..t_max {
            let mut next = Vec::new();
            for (seq, score) in &frontier {
                for (tok, l) in self.dist(seq).iter().enumerate() {
                    let mut s = seq.clone();
                    s.push(tok as TokenId);
                    if tok as TokenId == EOS || t + 1 == t_max {
                        out.push((s, score + l));
                    } else {
                        next.push((s, score + l));
                    }
                }
            }
            frontier = next;
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

impl StepModel for PrefixDependent {
    /// `None` before the first step; afterwards the prefix before `prev`.
    type State = Option<Vec<TokenId>>;

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn initial_state(&self) -> Self::State {
        None
    }

    fn step(&self, states: &[&Self::State], prev: &[TokenId]) -> Vec<(Self::State, Vec<f64>)> {
        states
            .iter()
            .zip(prev)
            .map(|(s, &p)| {
                let prefix = match s {
                    None => Vec::new(),
                    Some(v) => {
                        let mut v = v.clone();
                        v.push(p);
                        v
                    }
                };
                let d = self.dist(&prefix);
                (Some(prefix), d)
            })
            .collect()
    }
}
