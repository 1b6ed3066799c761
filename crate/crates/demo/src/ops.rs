//! Target-independent implementations behind the wasm exports.

use nowcast_core::eval::{crps_empirical, CrpsEstimator};
use nowcast_core::grid::{Grid2D, GridKind};
use nowcast_core::optflow::{extrapolate_steps, FlowParams};
use nowcast_core::preprocess::{mask_background, otsu_threshold};
use nowcast_core::{synth, Result};
use wasm_bindgen::prelude::*;

/// Input frames shown before the forecast.
pub const INPUT_FRAMES: usize = 4;

pub fn cloud_scene(size: usize, seed: u32, shift_x: f64, shift_y: f64) -> Vec<f32> {
    synth::cloud_scene(size, size, seed as u64, (shift_x, shift_y)).into_values()
}

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    threshold: f32,
    cloud_fraction: f64,
    masked: Vec<f32>,
}

#[wasm_bindgen]
impl Segmentation {
    #[wasm_bindgen(getter)]
    pub fn threshold(&self) -> f32 {
        self.threshold
    }

    /// Share of pixels at or below the threshold.
    #[wasm_bindgen(getter, js_name = cloudFraction)]
    pub fn cloud_fraction(&self) -> f64 {
        self.cloud_fraction
    }

    /// The input with background pixels raised to the frame maximum.
    #[wasm_bindgen(getter)]
    pub fn masked(&self) -> Vec<f32> {
        self.masked.clone()
    }
}

pub fn segment(values: &[f32], width: usize, height: usize) -> Result<Segmentation> {
    let grid = Grid2D::new(height, width, values.to_vec(), GridKind::Radiance)?;
    let threshold = otsu_threshold(&grid, 256)?;
    let cloudy = values.iter().filter(|&&v| v <= threshold).count();
    Ok(Segmentation {
        threshold,
        cloud_fraction: cloudy as f64 / values.len() as f64,
        masked: mask_background(&grid, threshold).into_values(),
    })
}

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    size: usize,
    inputs: Vec<f32>,
    frames: Vec<f32>,
    features: Vec<f64>,
    mean_u: f64,
    mean_v: f64,
    fallback: bool,
}

#[wasm_bindgen]
impl Forecast {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    /// Input frames, concatenated row-major.
    #[wasm_bindgen(getter)]
    pub fn inputs(&self) -> Vec<f32> {
        self.inputs.clone()
    }

    /// Forecast frames, concatenated row-major.
    #[wasm_bindgen(getter)]
    pub fn frames(&self) -> Vec<f32> {
        self.frames.clone()
    }

    /// Tracked features as `x, y, u, v` quadruples.
    #[wasm_bindgen(getter)]
    pub fn features(&self) -> Vec<f64> {
        self.features.clone()
    }

    #[wasm_bindgen(getter, js_name = meanU)]
    pub fn mean_u(&self) -> f64 {
        self.mean_u
    }

    #[wasm_bindgen(getter, js_name = meanV)]
    pub fn mean_v(&self) -> f64 {
        self.mean_v
    }

    /// No motion was tracked and the forecast repeats the last input.
    #[wasm_bindgen(getter)]
    pub fn fallback(&self) -> bool {
        self.fallback
    }
}

/// Renders `INPUT_FRAMES` frames of a scene drifting at `(vx, vy)` pixels
/// per frame and extrapolates `steps` more.
pub fn forecast_drift(size: usize, seed: u32, vx: f64, vy: f64, steps: usize) -> Result<Forecast> {
    let inputs: Vec<Grid2D> = (0..INPUT_FRAMES)
        .map(|t| synth::cloud_scene(size, size, seed as u64, (vx * t as f64, vy * t as f64)))
        .collect();
    let ex = extrapolate_steps(&inputs, steps, &FlowParams::default())?;
    let n = ex.sparse.entries.len().max(1) as f64;
    let (su, sv) = ex
        .sparse
        .entries
        .iter()
        .fold((0.0, 0.0), |(u, v), e| (u + e.u, v + e.v));
    Ok(Forecast {
        size,
        inputs: inputs
            .iter()
            .flat_map(|g| g.values().iter().copied())
            .collect(),
        frames: ex
            .frames
            .iter()
            .flat_map(|g| g.values().iter().copied())
            .collect(),
        features: ex
            .sparse
            .entries
            .iter()
            .flat_map(|e| [e.x, e.y, e.u, e.v])
            .collect(),
        mean_u: su / n,
        mean_v: sv / n,
        fallback: ex.persistence_fallback,
    })
}

pub fn crps(ensemble: &[f64], obs: f64, estimator: &str) -> Result<f64> {
    let est: CrpsEstimator = estimator.parse()?;
    crps_empirical(ensemble, obs, est)
}
