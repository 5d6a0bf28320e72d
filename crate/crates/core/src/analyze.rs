//! Post-processing of search traces: expression-level diffs between a failed
//! first candidate and its step-2 correction, correction histograms, and
//! accuracy by ground-truth length.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsl::{parse, Expression, Program};
use crate::search::{FixTrace, Method};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EditOp {
    Substitute { index: usize, expr: Expression },
    Delete { index: usize },
    /// `after: None` inserts before the first expression.
    Insert { after: Option<usize>, expr: Expression },
}

/// Edits in initial-program order.
pub type EditScript = Vec<EditOp>;

/// Minimal unit-cost edit script turning `initial` into `corrected`. Ties in
/// the backtrace prefer match, then substitute, delete, insert.
pub fn expr_diff(initial: &Program, corrected: &Program) -> EditScript {
    diff_lists(initial.expressions(), corrected.expressions())
}

pub fn diff_lists(a: &[Expression], b: &[Expression]) -> EditScript {
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut script = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && a[i - 1] == b[j - 1] && d[i][j] == d[i - 1][j - 1] {
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1 {
            script.push(EditOp::Substitute {
                index: i - 1,
                expr: b[j - 1].clone(),
            });
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            script.push(EditOp::Delete { index: i - 1 });
            i -= 1;
        } else {
            script.push(EditOp::Insert {
                after: i.checked_sub(1),
                expr: b[j - 1].clone(),
            });
            j -= 1;
        }
    }
    script.reverse();
    script
}

/// Applies `script` to `a`; used to check scripts in tests.
pub fn apply_script(a: &[Expression], script: &[EditOp]) -> Vec<Expression> {
    let mut before: Vec<Vec<Expression>> = vec![Vec::new(); a.len() + 1];
    let mut slot: Vec<Option<Expression>> = a.iter().cloned().map(Some).collect();
    for op in script {
        match op {
            EditOp::Substitute { index, expr } => slot[*index] = Some(expr.clone()),
            EditOp::Delete { index } => slot[*index] = None,
            EditOp::Insert { after, expr } => before[after.map_or(0, |k| k + 1)].push(expr.clone()),
        }
    }
    let mut out = Vec::new();
    for k in 0..=a.len() {
        out.extend(before[k].iter().cloned());
        if let Some(Some(e)) = slot.get(k) {
            out.push(e.clone());
        }
    }
    out
}

pub fn expressions_changed(script: &[EditOp]) -> usize {
    script.len()
}

/// Largest `initial_length - index` over substitutions and deletions; 0 when
/// the script only inserts.
pub fn furthest_distance_from_end(script: &[EditOp], initial_length: usize) -> usize {
    script
        .iter()
        .filter_map(|op| match op {
            EditOp::Substitute { index, .. } | EditOp::Delete { index } => {
                Some(initial_length - index)
            }
            EditOp::Insert { .. } => None,
        })
        .max()
        .unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step2Record {
    pub task: usize,
    pub method: Method,
    pub initial: Program,
    pub corrected: Program,
    pub initial_length: usize,
    pub expressions_changed: usize,
    pub furthest_distance_from_end: usize,
}

/// A trace as stored on disk: task index, ground truth text, search trace.
pub type TaskTrace = (usize, Option<String>, FixTrace);

/// Traces whose first candidate failed and whose second solved the task.
/// Returns the records and the number of such traces skipped because the
/// first candidate was not a valid program.
pub fn step2_records(traces: &[TaskTrace]) -> (Vec<Step2Record>, usize) {
    let mut out = Vec::new();
    let mut undecodable = 0;
    for (task, _, trace) in traces {
        if trace.solved_at != Some(2) {
            continue;
        }
        let programs = (&trace.steps[0].program, &trace.steps[1].program);
        let (Some(a), Some(b)) = programs else {
            undecodable += 1;
            continue;
        };
        let (Ok(initial), Ok(corrected)) = (parse(a), parse(b)) else {
            undecodable += 1;
            continue;
        };
        let script = expr_diff(&initial, &corrected);
        out.push(Step2Record {
            task: *task,
            method: trace.method,
            initial_length: initial.len(),
            expressions_changed: expressions_changed(&script),
            furthest_distance_from_end: furthest_distance_from_end(&script, initial.len()),
            initial,
            corrected,
        });
    }
    (out, undecodable)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: BTreeMap<usize, usize>,
}

impl Histogram {
    pub fn from_values(values: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = BTreeMap::new();
        for v in values {
            *counts.entry(v).or_insert(0) += 1;
        }
        Histogram { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Counts divided by the total.
    pub fn normalized(&self) -> BTreeMap<usize, f64> {
        let total = self.total().max(1) as f64;
        self.counts
            .iter()
            .map(|(&k, &c)| (k, c as f64 / total))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step2Histograms {
    pub method: Method,
    pub corrections: usize,
    pub initial_length: Histogram,
    pub expressions_changed: Histogram,
    pub furthest_distance_from_end: Histogram,
}

/// One histogram set per method present in `records`, ordered by method.
/// `length` keeps only tasks whose ground truth has that many expressions.
pub fn step2_study(traces: &[TaskTrace], length: Option<usize>) -> Vec<Step2Histograms> {
    let kept: Vec<TaskTrace> = traces
        .iter()
        .filter(|(_, truth, _)| match length {
            None => true,
            Some(l) => truth.as_deref().and_then(|t| parse(t).ok()).is_some_and(|p| p.len() == l),
        })
        .cloned()
        .collect();
    let (records, _) = step2_records(&kept);
    let mut methods: Vec<Method> = traces.iter().map(|t| t.2.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| {
            let rs: Vec<&Step2Record> = records.iter().filter(|r| r.method == method).collect();
            Step2Histograms {
                method,
                corrections: rs.len(),
                initial_length: Histogram::from_values(rs.iter().map(|r| r.initial_length)),
                expressions_changed: Histogram::from_values(
                    rs.iter().map(|r| r.expressions_changed),
                ),
                furthest_distance_from_end: Histogram::from_values(
                    rs.iter().map(|r| r.furthest_distance_from_end),
                ),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub method: Method,
    pub length: usize,
    pub tasks: usize,
    pub solved: usize,
    pub accuracy: f64,
}

/// Accuracy per method and ground-truth length. Traces without a parseable
/// ground truth are ignored; lengths with no tasks are omitted.
pub fn accuracy_by_length(traces: &[TaskTrace]) -> Vec<LengthRow> {
    let mut buckets: BTreeMap<(Method, usize), (usize, usize)> = BTreeMap::new();
    for (_, truth, trace) in traces {
        let Some(p) = truth.as_deref().and_then(|t| parse(t).ok()) else {
            continue;
        };
        let b = buckets.entry((trace.method, p.len())).or_insert((0, 0));
        b.0 += 1;
        b.1 += usize::from(trace.solved());
    }
    buckets
        .into_iter()
        .map(|((method, length), (tasks, solved))| LengthRow {
            method,
            length,
            tasks,
            solved,
            accuracy: solved as f64 / tasks as f64,
        })
        .collect()
}

/// Average ranks, 1-based, with ties sharing the mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = mean;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` when either side is constant or fewer than two points.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

fn histogram_table(out: &mut String, title: &str, h: &Histogram) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "  {:>6}  {:>7}  {:>10}", "value", "count", "fraction");
    let norm = h.normalized();
    for (k, c) in &h.counts {
        let _ = writeln!(out, "  {k:>6}  {c:>7}  {:>10.4}", norm[k]);
    }
}

/// Text rendering of the step-2 study and the per-length table.
pub fn render_report(study: &[Step2Histograms], lengths: &[LengthRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "accuracy by ground-truth length");
    let _ = writeln!(out, "  {:<7} {:>6} {:>6} {:>6} {:>9}", "method", "length", "tasks", "solved", "accuracy");
    for r in lengths {
        let _ = writeln!(
            out,
            "  {:<7} {:>6} {:>6} {:>6} {:>9.4}",
            r.method.name(),
            r.length,
            r.tasks,
            r.solved,
            r.accuracy
        );
    }
    for s in study {
        let _ = writeln!(out, "\nstep-2 corrections, {}: {}", s.method.name(), s.corrections);
        histogram_table(&mut out, "initial prediction length", &s.initial_length);
        histogram_table(&mut out, "expressions changed", &s.expressions_changed);
        histogram_table(&mut out, "furthest distance from end", &s.furthest_distance_from_end);
    }
    out
}

/// `method,histogram,value,count,fraction` rows.
pub fn study_csv(study: &[Step2Histograms]) -> String {
    let mut out = String::from("method,histogram,value,count,fraction\n");
    for s in study {
        for (name, h) in [
            ("initial_length", &s.initial_length),
            ("expressions_changed", &s.expressions_changed),
            ("furthest_distance_from_end", &s.furthest_distance_from_end),
        ] {
            let norm = h.normalized();
            for (k, c) in &h.counts {
                let _ = writeln!(out, "{},{name},{k},{c},{}", s.method.name(), norm[k]);
            }
        }
    }
    out
}

pub fn lengths_csv(rows: &[LengthRow]) -> String {
    let mut out = String::from("method,length,tasks,solved,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.method.name(), r.length, r.tasks, r.solved, r.accuracy);
    }
    out
}

/// Writes `report.txt`, `step2.json`, `step2.csv` and `by_length.csv` into `dir`.
pub fn write_report(dir: &Path, traces: &[TaskTrace], length: Option<usize>) -> std::io::Result<String> {
    let study = step2_study(traces, length);
    let lengths = accuracy_by_length(traces);
    let text = render_report(&study, &lengths);
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.txt"), &text)?;
    fs::write(
        dir.join("step2.json"),
        serde_json::to_string_pretty(&study).expect("histograms serialize") + "\n",
    )?;
    fs::write(dir.join("step2.csv"), study_csv(&study))?;
    fs::write(dir.join("by_length.csv"), lengths_csv(&lengths))?;
    Ok(text)
}
