//! Browser bindings for the interactive demo page in `www/`.
//!
//! Each entry point returns a JSON string; the page parses it and draws.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mlp_core::harness::{run_experiment, ExperimentSpec, ReferenceMode};
use mlp_core::{
    builtin_problem, default_query, predicted_flow_samples, predicted_uniforms, ExampleName, FixtureTable, Mlp,
    MultiIndexKey,
};

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(js_err)
}

#[derive(Serialize)]
struct Counters {
    gaussian_scalars: u64,
    uniforms: u64,
    f_evals: u64,
    g_evals: u64,
    flow_samples: u64,
    clamp_hits: u64,
}

#[derive(Serialize)]
struct EstimateReport {
    example: String,
    d: usize,
    n: u32,
    m: u32,
    t: f64,
    realizations: Vec<Vec<f64>>,
    mean: Vec<f64>,
    terminal_value: Vec<f64>,
    counters: Counters,
}

/// Independent realizations of `V_{n,M}(t, x)` at the example's default
/// evaluation point.
#[wasm_bindgen]
pub fn estimate(example: &str, d: usize, n: u32, m: u32, t: f64, runs: u32, seed: u32) -> Result<String, JsValue> {
    let name: ExampleName = example.parse().map_err(js_err)?;
    let problem = builtin_problem(name, d).map_err(js_err)?;
    let q = default_query(name, d);
    let mlp = Mlp::new(&problem, m, q.r);
    let mut realizations = Vec::new();
    let mut counters = None;
    for run in 0..runs.max(1) {
        let est = mlp
            .estimate(u64::from(seed), &MultiIndexKey::root(u64::from(run)), n, t, &q.x)
            .map_err(js_err)?;
        counters.get_or_insert(est.counters);
        realizations.push(est.value);
    }
    let mut mean = vec![0.0; problem.k];
    for r in &realizations {
        for (a, b) in mean.iter_mut().zip(r) {
            *a += b / realizations.len() as f64;
        }
    }
    let c = counters.unwrap_or_default();
    to_json(&EstimateReport {
        example: name.to_string(),
        d,
        n,
        m,
        t,
        realizations,
        mean,
        terminal_value: problem.eval_g(&q.x),
        counters: Counters {
            gaussian_scalars: c.gaussian_scalars,
            uniforms: c.uniforms,
            f_evals: c.f_evals,
            g_evals: c.g_evals,
            flow_samples: c.flow_samples,
            clamp_hits: c.clamp_hits,
        },
    })
}

#[derive(Serialize)]
struct ConvergencePoint {
    n: u32,
    value: Vec<f64>,
    reference: Vec<f64>,
    provenance: String,
    rel_l2_error: f64,
    gaussian_scalars: u64,
}

/// Relative L²-error against Gaussian draws for `n = 1..=n_max` (M = n).
/// `reference` is `paper-mlp`, `paper-ds` or `self:N[:RUNS]`.
#[wasm_bindgen]
pub fn convergence(example: &str, d: usize, n_max: u32, runs: usize, seed: u32, reference: &str) -> Result<String, JsValue> {
    let name: ExampleName = example.parse().map_err(js_err)?;
    let mut spec = ExperimentSpec::new(name, vec![d], (1..=n_max).collect());
    spec.runs = runs;
    spec.seed = u64::from(seed);
    spec.timing = false;
    spec.reference = reference.parse::<ReferenceMode>().map_err(js_err)?;
    let rows = run_experiment(&spec, &FixtureTable::builtin()).map_err(js_err)?;
    let points: Vec<ConvergencePoint> = rows
        .into_iter()
        .map(|r| ConvergencePoint {
            n: r.n,
            value: r.value,
            reference: r.reference,
            provenance: r.provenance.to_string(),
            rel_l2_error: r.rel_l2_error,
            gaussian_scalars: r.gaussian_scalars,
        })
        .collect();
    to_json(&points)
}

#[derive(Serialize)]
struct CostRow {
    n: u32,
    m: u32,
    flow_samples: String,
    gaussian_scalars: String,
    uniforms: String,
}

/// Closed-form randomness cost of one `V_{n,M}` evaluation in dimension
/// `d`. `m = 0` means `M = n`. Counts are decimal strings (they exceed the
/// exact range of JS numbers for large n).
#[wasm_bindgen]
pub fn cost_table(d: u32, n_max: u32, m: u32) -> Result<String, JsValue> {
    let rows = (1..=n_max)
        .map(|n| {
            let m = if m == 0 { n } else { m };
            let fs = predicted_flow_samples(n, m).map_err(js_err)?;
            let gs = fs.checked_mul(u128::from(d)).ok_or_else(|| js_err("overflow"))?;
            Ok(CostRow {
                n,
                m,
                flow_samples: fs.to_string(),
                gaussian_scalars: gs.to_string(),
                uniforms: predicted_uniforms(n, m).map_err(js_err)?.to_string(),
            })
        })
        .collect::<Result<Vec<_>, JsValue>>()?;
    to_json(&rows)
}
