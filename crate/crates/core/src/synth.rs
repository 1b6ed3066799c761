//! Deterministic synthetic scenes: smooth cloud fields, moving blobs and a
//! complete radiance/rain fixture for exercising the pipeline end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Grid2D, GridKind, GridStack};

#[derive(Debug, Clone, Copy)]
struct Cloud {
    x: f64,
    y: f64,
    sigma: f64,
    depth: f64,
}

fn clouds(h: usize, w: usize, seed: u64) -> Vec<Cloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ((h * w) as f64 / 700.0).ceil().max(1.0) as usize;
    (0..n)
        .map(|_| Cloud {
            x: rng.gen_range(0.0..w as f64),
            y: rng.gen_range(0.0..h as f64),
            sigma: rng.gen_range(4.0..9.0),
            depth: rng.gen_range(0.5..1.0),
        })
        .collect()
}

fn render(h: usize, w: usize, cs: &[Cloud], shift: (f64, f64)) -> Grid2D {
    Grid2D::from_fn(h, w, GridKind::NormalizedRadiance, |r, c| {
        let (x, y) = (c as f64 - shift.0, r as f64 - shift.1);
        let dark: f64 = cs
            .iter()
            .map(|k| {
                let d2 = (x - k.x).powi(2) + (y - k.y).powi(2);
                k.depth * (-d2 / (2.0 * k.sigma * k.sigma)).exp()
            })
            .sum();
        (0.9 - 1.4 * dark) as f32
    })
}

/// Normalised radiance field of dark Gaussian clouds on a warm background,
/// translated by `shift` pixels. The same seed gives the same clouds, so
/// two shifts of one seed are exact translations of each other.
pub fn cloud_scene(h: usize, w: usize, seed: u64, shift: (f64, f64)) -> Grid2D {
    render(h, w, &clouds(h, w, seed), shift)
}

/// A single dark Gaussian blob of width `sigma` centred at `centre`.
pub fn gaussian_blob(h: usize, w: usize, centre: (f64, f64), sigma: f64) -> Grid2D {
    render(
        h,
        w,
        &[Cloud {
            x: centre.0,
            y: centre.1,
            sigma,
            depth: 1.0,
        }],
        (0.0, 0.0),
    )
}

/// Darkness-weighted centroid `(x, y)`: weights are `max - value`.
pub fn dark_centroid(g: &Grid2D) -> (f64, f64) {
    let top = g.max_value() as f64;
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for r in 0..g.height() {
        for c in 0..g.width() {
            let wgt = top - g.get(r, c) as f64;
            sw += wgt;
            sx += wgt * c as f64;
            sy += wgt * r as f64;
        }
    }
    if sw == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    (sx / sw, sy / sw)
}

/// Rain rate (mm/h) implied by a raw radiance value: zero above 200,
/// rising linearly as cloud tops get colder.
pub fn rain_from_radiance(radiance: f32) -> f32 {
    ((200.0 - radiance) * 0.08).max(0.0)
}

/// A drifting multi-channel radiance stack with a co-registered rain stack.
///
/// Radiance frames are `150 · (scene + 1)` plus a small per-channel offset
/// and gain, so the four channels are strongly but not perfectly
/// correlated. A handful of NaNs are sprinkled in to exercise
/// sanitisation.
pub fn fixture(
    frames: usize,
    channels: usize,
    size: usize,
    velocity: (f64, f64),
    seed: u64,
    t0: f64,
) -> (GridStack, GridStack) {
    let cs = clouds(size, size, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut rad = Vec::with_capacity(frames);
    let mut rain = Vec::with_capacity(frames);
    for t in 0..frames {
        let shift = (velocity.0 * t as f64, velocity.1 * t as f64);
        let scene = render(size, size, &cs, shift);
        let base = scene
            .map(|v| 150.0 * (v + 1.0))
            .with_kind(GridKind::Radiance);
        let chans: Vec<Grid2D> = (0..channels)
            .map(|c| {
                let gain = 1.0 - 0.03 * c as f32;
                let offset = 4.0 * c as f32;
                let mut g = Grid2D::from_fn(size, size, GridKind::Radiance, |r, col| {
                    let ripple = ((r * 7 + col * 3 + c * 11) % 13) as f32 * 0.15;
                    base.get(r, col) * gain + offset + ripple
                });
                let idx = rng.gen_range(0..size * size);
                g.values_mut()[idx] = f32::NAN;
                g
            })
            .collect();
        rad.push(chans);
        rain.push(vec![base
            .map(rain_from_radiance)
            .with_kind(GridKind::RainRate)]);
    }
    let dt = crate::grid::DEFAULT_DT_SECONDS;
    (
        GridStack::new(rad, channels, size, size, GridKind::Radiance, t0, dt)
            .expect("fixture radiance stack"),
        GridStack::new(rain, 1, size, size, GridKind::RainRate, t0, dt)
            .expect("fixture rain stack"),
    )
}
