//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each export takes and returns plain strings or numbers; JSON is used for
//! structured values. The `*_json` functions hold the logic and are tested
//! natively, the `#[wasm_bindgen]` wrappers only convert errors.

use icpvi_core::prompting::build_prompt_pair;
use icpvi_core::pvi::{accuracy, score_run};
use icpvi_core::stats::{histogram, strata_report, Histogram, StrataReport};
use icpvi_core::synthetic::{SyntheticWorld, WorldSpec};
use icpvi_core::{ExemplarSet, Instance, LabelSpace, PromptTemplate, RunConfig};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Deserialize)]
struct Example {
    text: String,
    label: String,
}

#[derive(Deserialize)]
struct PromptInput {
    /// Template in the `key = value` format.
    template: String,
    labels: Vec<String>,
    exemplars: Vec<Example>,
    query: String,
}

#[derive(Serialize)]
struct PromptOutput {
    input_target: String,
    null_target: String,
    target_token: String,
}

/// Renders the input-target and null-target prompts. The query is given
/// the first label as a placeholder gold label.
pub fn render_prompts_json(input: &str) -> Result<String, String> {
    let input: PromptInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let labels = LabelSpace::new(input.labels.iter().cloned()).map_err(|e| e.to_string())?;
    let template = PromptTemplate::parse(&input.template)
        .and_then(|t| t.resolve(&labels))
        .map_err(|e| e.to_string())?;
    let field = template
        .field_labels
        .keys()
        .next()
        .cloned()
        .ok_or("template has no fields")?;
    let exemplars = input
        .exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| Instance::new(format!("ex{i}"), [(field.clone(), e.text.clone())], e.label.clone()))
        .collect();
    let query = Instance::new("query", [(field, input.query)], labels.labels()[0].clone());
    let pair = build_prompt_pair(&template, &ExemplarSet::new(None, exemplars), &query, &labels)
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&PromptOutput {
        input_target: pair.input_target,
        null_target: pair.null_target,
        target_token: pair.target_token,
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SyntheticOutput {
    accuracy: Option<f64>,
    report: StrataReport,
    histogram: Histogram,
}

/// Generates a synthetic world, scores it against its mock backend and
/// returns the strata report and a correctness-split histogram.
pub fn synthetic_run_json(n_test: usize, noise: f64, seed: u64, bins: usize) -> Result<String, String> {
    let spec = WorldSpec {
        n_test,
        noise,
        seed,
        ..WorldSpec::default()
    };
    let world = SyntheticWorld::generate(&spec).map_err(|e| e.to_string())?;
    let backend = world.backend().map_err(|e| e.to_string())?;
    let mut config = RunConfig::new("synthetic", "mock", &world.exemplars, &world.template);
    // no threads in the browser
    config.max_in_flight = 1;
    let scored = score_run(&world.dataset, &world.exemplars, &world.template, &backend, &config)
        .map_err(|e| e.to_string())?;
    let out = SyntheticOutput {
        accuracy: accuracy(&scored),
        report: strata_report(&scored, &[0.2, 0.5]).map_err(|e| e.to_string())?,
        histogram: histogram(&scored, bins, true).map_err(|e| e.to_string())?,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = renderPrompts)]
pub fn render_prompts(input: &str) -> Result<String, JsError> {
    render_prompts_json(input).map_err(|e| JsError::new(&e))
}

/// PVI in bits for the gold label's probability under the null-target and
/// input-target prompts.
#[wasm_bindgen(js_name = pviFromProbs)]
pub fn pvi_from_probs(p_null: f64, p_input: f64) -> Result<f64, JsError> {
    icpvi_core::pvi::pvi_from_probs(p_null, p_input).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = syntheticRun)]
pub fn synthetic_run(n_test: usize, noise: f64, seed: u64, bins: usize) -> Result<String, JsError> {
    synthetic_run_json(n_test, noise, seed, bins).map_err(|e| JsError::new(&e))
}
