//! Difference-of-Gaussians blob detection on the inverted radiance image.

use std::collections::BTreeMap;

use super::plane::{gaussian_blur, Plane};
use super::{Feature, FlowParams};
use crate::grid::Grid2D;

/// Scale-space DoG responses: `responses[i]` is `G(s_i) - G(2 s_i)` of the
/// inverted image for `scales[i]`.
pub struct DogStack {
    pub scales: Vec<f64>,
    pub responses: Vec<Plane>,
}

pub fn dog_stack(grid: &Grid2D, scales: &[f64]) -> DogStack {
    let src = Plane::from_grid(grid);
    let (_, top) = src.range();
    let inverted = Plane {
        data: src.data.iter().map(|v| top - v).collect(),
        ..src
    };
    let mut blurred: BTreeMap<u64, Plane> = BTreeMap::new();
    let mut blur = |s: f64| {
        blurred
            .entry(s.to_bits())
            .or_insert_with(|| gaussian_blur(&inverted, s))
            .clone()
    };
    let responses = scales
        .iter()
        .map(|&s| {
            let fine = blur(s);
            let coarse = blur(2.0 * s);
            Plane {
                data: fine
                    .data
                    .iter()
                    .zip(&coarse.data)
                    .map(|(a, b)| a - b)
                    .collect(),
                ..fine
            }
        })
        .collect();
    DogStack {
        scales: scales.to_vec(),
        responses,
    }
}

/// Peak offset of a parabola through three samples, clamped to ±0.5.
fn parabolic_offset(left: f64, centre: f64, right: f64) -> f64 {
    let denom = left - 2.0 * centre + right;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

pub fn detect_blobs(grid: &Grid2D, params: &FlowParams) -> Vec<Feature> {
    let (h, w) = grid.dims();
    let Some((lo, hi)) = grid.finite_range() else {
        return Vec::new();
    };
    if !(hi > lo) || h < 3 || w < 3 {
        return Vec::new();
    }
    let threshold = params.blob_threshold * (hi - lo) as f64;
    let dog = dog_stack(grid, &params.dog_scales);

    // best response over scales at each pixel
    let mut best = vec![f64::NEG_INFINITY; h * w];
    let mut best_scale = vec![0usize; h * w];
    for (si, resp) in dog.responses.iter().enumerate() {
        for (i, &v) in resp.data.iter().enumerate() {
            if v > best[i] {
                best[i] = v;
                best_scale[i] = si;
            }
        }
    }

    let mut candidates = Vec::new();
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let i = r * w + c;
            let v = best[i];
            if v < threshold {
                continue;
            }
            let rad = dog.scales[best_scale[i]].ceil() as isize;
            let mut is_max = true;
            'win: for dr in -rad..=rad {
                let rr = r as isize + dr;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for dc in -rad..=rad {
                    let cc = c as isize + dc;
                    if cc < 0 || cc >= w as isize || (dr == 0 && dc == 0) {
                        continue;
                    }
                    if best[rr as usize * w + cc as usize] > v {
                        is_max = false;
                        break 'win;
                    }
                }
            }
            if is_max {
                candidates.push((v, r, c));
            }
        }
    }

    // strongest first; ties resolved by raster order
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut kept: Vec<Feature> = Vec::new();
    for (v, r, c) in candidates {
        let i = r * w + c;
        let scale = dog.scales[best_scale[i]];
        let resp = &dog.responses[best_scale[i]];
        let dx = parabolic_offset(resp.at(r, c - 1), resp.at(r, c), resp.at(r, c + 1));
        let dy = parabolic_offset(resp.at(r - 1, c), resp.at(r, c), resp.at(r + 1, c));
        let f = Feature {
            x: c as f64 + dx,
            y: r as f64 + dy,
            scale,
            response: v,
        };
        let suppressed = kept.iter().any(|k| {
            let d2 = (k.x - f.x).powi(2) + (k.y - f.y).powi(2);
            d2 <= k.scale.max(f.scale).powi(2)
        });
        if !suppressed {
            kept.push(f);
        }
    }
    kept
}
