//! wasm-bindgen entry points for `www/index.html`. Every function returns a
//! JSON string so the page needs no generated bindings beyond strings.
//!
//! Build with:
//!
//! ```text
//! cargo build -p fixsynth-demo --release --target wasm32-unknown-unknown
//! wasm-bindgen --target web --out-dir crates/demo/www/pkg \
//!     target/wasm32-unknown-unknown/release/fixsynth_demo.wasm
//! ```

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use fixsynth::analyze::{expr_diff, EditOp};
use fixsynth::dsl::{parse, Program};
use fixsynth::rng::Rng;
use fixsynth::taskgen::{generate_task, GenConfig};

fn parse_or_error(text: &str) -> Result<Program, Value> {
    parse(text).map_err(|e| {
        json!({"error": "parse", "offset": e.offset, "expected": e.expected, "found": e.found})
    })
}

/// Runs `program` on each line of `inputs`.
#[wasm_bindgen]
pub fn run_program(program: &str, inputs: &str) -> String {
    let p = match parse_or_error(program) {
        Ok(p) => p,
        Err(e) => return e.to_string(),
    };
    let rows: Vec<Value> = inputs
        .lines()
        .map(|i| match p.execute(i) {
            Ok(o) => json!({"input": i, "output": o}),
            Err(e) => json!({"input": i, "error": e.kind.to_string(), "expression": e.expression}),
        })
        .collect();
    json!({"program": p.render(), "rows": rows}).to_string()
}

/// A random task with at most `max_expressions` expressions.
#[wasm_bindgen]
pub fn sample_task(seed: u32, max_expressions: usize) -> String {
    let cfg = GenConfig {
        max_expressions: max_expressions.clamp(1, fixsynth::dsl::MAX_EXPRESSIONS),
        max_io_len: 30,
        ..GenConfig::default()
    };
    let task = generate_task(&mut Rng::from_key(u64::from(seed)), &cfg);
    let examples: Vec<Value> = task
        .examples
        .iter()
        .map(|e| json!({"input": e.input, "output": e.output}))
        .collect();
    json!({"program": task.program.render(), "examples": examples}).to_string()
}

/// Expression-level edit script from `initial` to `corrected`.
#[wasm_bindgen]
pub fn diff_programs(initial: &str, corrected: &str) -> String {
    let (a, b) = match (parse_or_error(initial), parse_or_error(corrected)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) => return e.to_string(),
        (_, Err(e)) => return e.to_string(),
    };
    let ops: Vec<Value> = expr_diff(&a, &b)
        .iter()
        .map(|op| match op {
            EditOp::Substitute { index, expr } => json!({"op": "substitute", "index": index, "expr": expr.to_string()}),
            EditOp::Delete { index } => json!({"op": "delete", "index": index}),
            EditOp::Insert { after, expr } => json!({"op": "insert", "after": after, "expr": expr.to_string()}),
        })
        .collect();
    json!({"initial_length": a.len(), "ops": ops}).to_string()
}
