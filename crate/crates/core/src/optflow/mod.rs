//! Radiance extrapolation: blob features, pyramidal Lucas-Kanade motion,
//! RBF densification and semi-Lagrangian advection.
//!
//! Positions are `(x, y) = (column, row)` with pixel centres on integer
//! coordinates. Motion is in pixels per frame.

mod advect;
mod blob;
mod lk;
pub mod plane;
mod rbf;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridKind, GridStack, PipelineConfig};

pub use advect::advect;
pub use blob::{detect_blobs, dog_stack, DogStack};
pub use lk::{lk_flow_at, min_eigenvalue};
pub use rbf::{median_pairwise_distance, rbf_interpolate, RbfModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub response: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowVector {
    /// Index into the feature list the flow was computed for.
    pub feature: usize,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseFlow {
    pub entries: Vec<FlowVector>,
    pub rejected_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != height * width || v.len() != height * width {
            return Err(Error::SizeMismatch(format!(
                "flow components of length {}/{} for {height}x{width}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::SizeMismatch(
                "flow contains non-finite values".into(),
            ));
        }
        Ok(FlowField {
            height,
            width,
            u,
            v,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::uniform(height, width, 0.0, 0.0)
    }

    pub fn uniform(height: usize, width: usize, u: f64, v: f64) -> Self {
        FlowField {
            height,
            width,
            u: vec![u; height * width],
            v: vec![v; height * width],
        }
    }

    /// Two-channel (u, v) stack of kind `Flow`.
    pub fn to_stack(&self, t0: f64, dt: f64) -> GridStack {
        let to_grid = |c: &[f64]| {
            Grid2D::new(
                self.height,
                self.width,
                c.iter().map(|&x| x as f32).collect(),
                GridKind::Flow,
            )
            .expect("flow dimensions are consistent")
        };
        GridStack::new(
            vec![vec![to_grid(&self.u), to_grid(&self.v)]],
            2,
            self.height,
            self.width,
            GridKind::Flow,
            t0,
            dt,
        )
        .expect("flow stack is well formed")
    }

    pub fn from_stack(stack: &GridStack) -> Result<Self> {
        if stack.kind() != GridKind::Flow || stack.channels() != 2 || stack.len() != 1 {
            return Err(Error::WrongKind {
                expected: "single-frame two-channel flow stack",
                found: stack.kind(),
            });
        }
        let comp = |c: usize| {
            stack
                .grid(0, c)
                .values()
                .iter()
                .map(|&x| x as f64)
                .collect()
        };
        FlowField::new(stack.height(), stack.width(), comp(0), comp(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RbfWidth {
    MedianPairwise,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub lk_window: usize,
    /// Minimum eigenvalue of the structure tensor, divided by window area.
    pub min_eigen: f64,
    pub max_iters: usize,
    pub epsilon: f64,
    pub dog_scales: Vec<f64>,
    /// Detection cutoff as a fraction of the frame's dynamic range.
    pub blob_threshold: f64,
    pub rbf_width: RbfWidth,
    pub rbf_ridge: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            pyramid_levels: 3,
            lk_window: 15,
            min_eigen: 1e-3,
            max_iters: 20,
            epsilon: 0.01,
            dog_scales: vec![2.0, 4.0, 8.0],
            blob_threshold: 0.05,
            rbf_width: RbfWidth::MedianPairwise,
            rbf_ridge: 1e-8,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(format!("flow: {m}")));
        if self.lk_window < 3 || self.lk_window.is_multiple_of(2) {
            return err("lk_window must be odd and >= 3");
        }
        if self.pyramid_levels < 1 {
            return err("pyramid_levels must be >= 1");
        }
        if !(self.min_eigen > 0.0 && self.epsilon > 0.0 && self.blob_threshold > 0.0) {
            return err("thresholds must be positive");
        }
        if self.dog_scales.is_empty() || self.dog_scales.iter().any(|&s| !(s > 0.0)) {
            return err("dog_scales must be non-empty and positive");
        }
        if !(self.rbf_ridge >= 0.0) {
            return err("rbf_ridge must be non-negative");
        }
        if let RbfWidth::Fixed(e) = self.rbf_width {
            if !(e > 0.0) {
                return err("fixed rbf width must be positive");
            }
        }
        Ok(())
    }
}

/// Per-feature mean over consecutive frame pairs. Features rejected in any
/// pair are dropped.
pub fn mean_sparse_flow(pairwise: &[SparseFlow]) -> Result<SparseFlow> {
    let Some(first) = pairwise.first() else {
        return Ok(SparseFlow::default());
    };
    let mut acc: BTreeMap<usize, (FlowVector, usize)> = BTreeMap::new();
    for (k, flow) in pairwise.iter().enumerate() {
        for e in &flow.entries {
            match acc.get_mut(&e.feature) {
                Some((sum, n)) => {
                    if sum.x != e.x || sum.y != e.y {
                        return Err(Error::InconsistentFeatures);
                    }
                    sum.u += e.u;
                    sum.v += e.v;
                    *n += 1;
                }
                None if k == 0 => {
                    acc.insert(e.feature, (*e, 1));
                }
                // absent from the first pair, so rejected there
                None => {}
            }
        }
    }
    let total = pairwise.len();
    let mut entries = Vec::new();
    for (_, (sum, n)) in acc {
        if n == total {
            entries.push(FlowVector {
                u: sum.u / total as f64,
                v: sum.v / total as f64,
                ..sum
            });
        }
    }
    let rejected = first.entries.len() + first.rejected_count - entries.len();
    Ok(SparseFlow {
        entries,
        rejected_count: rejected,
    })
}

#[derive(Debug, Clone)]
pub struct Extrapolation {
    pub frames: Vec<Grid2D>,
    pub flow: FlowField,
    pub features: Vec<Feature>,
    pub sparse: SparseFlow,
    /// No usable motion was found; every output repeats the last input.
    pub persistence_fallback: bool,
}

pub fn extrapolate(
    inputs: &[Grid2D],
    cfg: &PipelineConfig,
    params: &FlowParams,
) -> Result<Extrapolation> {
    extrapolate_steps(inputs, cfg.horizon, params)
}

/// Forecasts `steps` frames by advecting the last input with the mean
/// motion over the input window.
pub fn extrapolate_steps(
    inputs: &[Grid2D],
    steps: usize,
    params: &FlowParams,
) -> Result<Extrapolation> {
    params.validate()?;
    let Some(last) = inputs.last() else {
        return Err(Error::SizeMismatch("no input frames".into()));
    };
    if inputs.len() < 2 {
        return Err(Error::SizeMismatch("need at least two input frames".into()));
    }
    if let Some(bad) = inputs.iter().position(|g| !g.same_dims(last)) {
        return Err(Error::SizeMismatch(format!(
            "input frame {bad} is {:?}, last is {:?}",
            inputs[bad].dims(),
            last.dims()
        )));
    }
    let (h, w) = last.dims();
    let features = detect_blobs(last, params);
    let pairwise = inputs
        .windows(2)
        .map(|p| lk_flow_at(&features, &p[0], &p[1], params))
        .collect::<Result<Vec<_>>>()?;
    let sparse = mean_sparse_flow(&pairwise)?;

    if sparse.entries.is_empty() {
        return Ok(Extrapolation {
            frames: vec![last.clone(); steps],
            flow: FlowField::zeros(h, w),
            features,
            sparse,
            persistence_fallback: true,
        });
    }
    let flow = rbf_interpolate(&sparse, h, w, params)?;
    let fill = last.max_value();
    let mut frames = Vec::with_capacity(steps);
    let mut cur = last.clone();
    for _ in 0..steps {
        cur = advect(&cur, &flow, fill)?;
        frames.push(cur.clone());
    }
    Ok(Extrapolation {
        frames,
        flow,
        features,
        sparse,
        persistence_fallback: false,
    })
}
