//! Browser bindings: Otsu cloud segmentation, optical-flow extrapolation of
//! a drifting scene, and CRPS scoring. Build with
//! `wasm-pack build crates/demo --target web --out-dir www/pkg` and serve
//! `crates/demo/www`.

pub mod ops;

use wasm_bindgen::prelude::*;

pub use ops::{Forecast, Segmentation};

/// Row-major synthetic radiance scene in normalised units, shifted by
/// `(shift_x, shift_y)` pixels.
#[wasm_bindgen(js_name = cloudScene)]
pub fn cloud_scene(size: usize, seed: u32, shift_x: f64, shift_y: f64) -> Vec<f32> {
    ops::cloud_scene(size, seed, shift_x, shift_y)
}

#[wasm_bindgen]
pub fn segment(values: &[f32], width: usize, height: usize) -> Result<Segmentation, JsError> {
    Ok(ops::segment(values, width, height)?)
}

#[wasm_bindgen(js_name = forecastDrift)]
pub fn forecast_drift(
    size: usize,
    seed: u32,
    vx: f64,
    vy: f64,
    steps: usize,
) -> Result<Forecast, JsError> {
    Ok(ops::forecast_drift(size, seed, vx, vy, steps)?)
}

/// CRPS of an ensemble against one observation; `estimator` is `nrg` or
/// `fair`.
#[wasm_bindgen]
pub fn crps(ensemble: &[f64], obs: f64, estimator: &str) -> Result<f64, JsError> {
    Ok(ops::crps(ensemble, obs, estimator)?)
}
