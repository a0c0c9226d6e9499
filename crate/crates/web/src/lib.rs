//! WebAssembly bindings behind `www/index.html`. Every export returns a JSON
//! string so the page needs no generated type glue beyond `wasm-bindgen`.

use std::sync::OnceLock;

use gaze_core::oracle::{salience, SalienceWeights};
use gaze_core::scenario::{
    build_script, render_frames, Rendered, ScenarioConfig, SCREEN_HEIGHT, SCREEN_WIDTH,
};
use gaze_core::stats::welch_ttest_summary;
use gaze_core::types::{Label, Taxonomy};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn canonical() -> &'static Rendered {
    static SCENE: OnceLock<Rendered> = OnceLock::new();
    SCENE.get_or_init(|| {
        let script = build_script(&ScenarioConfig::default(), 0).expect("canonical script");
        render_frames(&script).expect("canonical scenario renders")
    })
}

fn label_name(target: gaze_core::types::Target) -> String {
    Label::project(Taxonomy::Fine13, target).name()
}

/// Number of frames in the canonical scenario.
#[wasm_bindgen]
pub fn frame_count() -> usize {
    canonical().frames.len()
}

/// Persons and AOI rectangles of canonical frame `index` (clamped).
#[wasm_bindgen]
pub fn scene_at(index: usize) -> String {
    let r = canonical();
    let i = index.min(r.frames.len() - 1);
    let regions: Vec<Value> = r.aoi[i]
        .iter()
        .map(|(t, rect)| json!({"label": label_name(t), "x0": rect.x0, "y0": rect.y0, "x1": rect.x1, "y1": rect.y1}))
        .collect();
    json!({
        "frame": i,
        "width": SCREEN_WIDTH,
        "height": SCREEN_HEIGHT,
        "persons": r.frames[i].persons,
        "regions": regions,
    })
    .to_string()
}

/// Stochastic-oracle fixation probabilities at frame `index` under the given
/// cue weights.
#[wasm_bindgen]
pub fn salience_at(
    index: usize,
    talking: f64,
    waving: f64,
    pointing: f64,
    box_weight: f64,
) -> String {
    let r = canonical();
    let i = index.min(r.frames.len() - 1);
    let weights = SalienceWeights {
        talking,
        waving,
        pointing,
        box_weight,
        ..SalienceWeights::default()
    };
    let cands = salience(&r.frames[i], &r.aoi[i], &weights);
    let total: f64 = cands.iter().map(|c| c.1).sum();
    let rows: Vec<Value> = cands
        .iter()
        .map(|&(t, s)| {
            let p = if total > 0.0 {
                s / total
            } else {
                1.0 / cands.len() as f64
            };
            json!({"label": label_name(t), "salience": s, "probability": p})
        })
        .collect();
    Value::Array(rows).to_string()
}

/// Welch two-sample t-test from summary statistics.
#[wasm_bindgen]
pub fn welch(m1: f64, sd1: f64, n1: usize, m2: f64, sd2: f64, n2: usize) -> String {
    match welch_ttest_summary(m1, sd1, n1, m2, sd2, n2) {
        Ok(r) => json!({"t": r.t, "df": r.df, "p": r.p}),
        Err(e) => json!({"error": e.to_string()}),
    }
    .to_string()
}
