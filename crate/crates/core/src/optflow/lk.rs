//! Pyramidal Lucas-Kanade tracking of a fixed feature set.

use super::plane::{gradients, pyr_down, Plane};
use super::{Feature, FlowParams, FlowVector, SparseFlow};
use crate::error::{Error, Result};
use crate::grid::Grid2D;

struct Level {
    image: Plane,
    gx: Plane,
    gy: Plane,
}

fn pyramid(base: Plane, levels: usize, with_gradients: bool) -> Vec<Level> {
    let mut out = Vec::with_capacity(levels);
    let mut cur = base;
    for l in 0..levels {
        let next = if l + 1 < levels && cur.height >= 2 && cur.width >= 2 {
            Some(pyr_down(&cur))
        } else {
            None
        };
        let (gx, gy) = if with_gradients {
            gradients(&cur)
        } else {
            (Plane::zeros(0, 0), Plane::zeros(0, 0))
        };
        out.push(Level { image: cur, gx, gy });
        match next {
            Some(n) => cur = n,
            None => break,
        }
    }
    out
}

/// Smaller eigenvalue of the symmetric 2x2 matrix [[a, b], [b, c]].
pub fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    0.5 * (a + c - ((a - c).powi(2) + 4.0 * b * b).sqrt())
}

enum Track {
    Ok(f64, f64),
    Rejected,
}

fn track_one(f: &Feature, pa: &[Level], pb: &[Level], params: &FlowParams) -> Track {
    let half = (params.lk_window / 2) as isize;
    let area = (params.lk_window * params.lk_window) as f64;
    let mut guess = (0.0f64, 0.0f64);
    let n = half as usize * 2 + 1;
    let mut ia = vec![0.0; n * n];
    let mut ix = vec![0.0; n * n];
    let mut iy = vec![0.0; n * n];

    for level in (0..pa.len()).rev() {
        let scale = (1u64 << level) as f64;
        let (px, py) = (f.x / scale, f.y / scale);
        let (a, b) = (&pa[level], &pb[level]);

        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        let mut k = 0;
        for dy in -half..=half {
            for dx in -half..=half {
                let (x, y) = (px + dx as f64, py + dy as f64);
                ia[k] = a.image.sample_clamped(x, y);
                let (gx, gy) = (a.gx.sample_clamped(x, y), a.gy.sample_clamped(x, y));
                ix[k] = gx;
                iy[k] = gy;
                gxx += gx * gx;
                gxy += gx * gy;
                gyy += gy * gy;
                k += 1;
            }
        }
        let det = gxx * gyy - gxy * gxy;
        let norm_eig = min_eigenvalue(gxx, gxy, gyy) / area;
        let conditioned = norm_eig >= params.min_eigen && det > f64::EPSILON;
        if !conditioned {
            if level == 0 {
                return Track::Rejected;
            }
            guess = (2.0 * guess.0, 2.0 * guess.1);
            continue;
        }

        let mut d = (0.0f64, 0.0f64);
        for _ in 0..params.max_iters {
            let (mut bx, mut by) = (0.0, 0.0);
            let mut k = 0;
            for dy in -half..=half {
                for dx in -half..=half {
                    let x = px + dx as f64 + guess.0 + d.0;
                    let y = py + dy as f64 + guess.1 + d.1;
                    let it = b.image.sample_clamped(x, y) - ia[k];
                    bx -= ix[k] * it;
                    by -= iy[k] * it;
                    k += 1;
                }
            }
            let nu_x = (gyy * bx - gxy * by) / det;
            let nu_y = (gxx * by - gxy * bx) / det;
            d.0 += nu_x;
            d.1 += nu_y;
            if !(d.0.is_finite() && d.1.is_finite()) {
                return Track::Rejected;
            }
            if nu_x * nu_x + nu_y * nu_y < params.epsilon * params.epsilon {
                break;
            }
        }
        if level > 0 {
            guess = (2.0 * (guess.0 + d.0), 2.0 * (guess.1 + d.1));
        } else {
            guess = (guess.0 + d.0, guess.1 + d.1);
        }
    }
    let base = &pa[0].image;
    let (x1, y1) = (f.x + guess.0, f.y + guess.1);
    if !window_inside(base, f.x, f.y, half) || !window_inside(base, x1, y1, half) {
        return Track::Rejected;
    }
    Track::Ok(guess.0, guess.1)
}

/// Whether a window of half-width `half` centred at `(x, y)` lies inside
/// the plane; windows that hit the border see clamped samples only.
fn window_inside(p: &Plane, x: f64, y: f64, half: isize) -> bool {
    let h = half as f64;
    x - h >= 0.0 && y - h >= 0.0 && x + h <= (p.width - 1) as f64 && y + h <= (p.height - 1) as f64
}

/// Motion of each feature from `frame_a` to `frame_b`, in pixels per frame.
/// Entries keep the index of the feature they belong to; ill-conditioned
/// features and features whose window leaves the frame (before or after
/// tracking) are dropped and counted.
pub fn lk_flow_at(
    features: &[Feature],
    frame_a: &Grid2D,
    frame_b: &Grid2D,
    params: &FlowParams,
) -> Result<SparseFlow> {
    if !frame_a.same_dims(frame_b) {
        return Err(Error::SizeMismatch(format!(
            "frame_a {:?} vs frame_b {:?}",
            frame_a.dims(),
            frame_b.dims()
        )));
    }
    params.validate()?;
    let a = Plane::from_grid(frame_a);
    let pa = pyramid(a, params.pyramid_levels, true);
    let pb = pyramid(Plane::from_grid(frame_b), params.pyramid_levels, false);

    let mut entries = Vec::with_capacity(features.len());
    let mut rejected = 0;
    for (id, f) in features.iter().enumerate() {
        match track_one(f, &pa, &pb, params) {
            Track::Ok(u, v) => entries.push(FlowVector {
                feature: id,
                x: f.x,
                y: f.y,
                u,
                v,
            }),
            Track::Rejected => rejected += 1,
        }
    }
    Ok(SparseFlow {
        entries,
        rejected_count: rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridKind;
    use crate::synth::cloud_scene;

    #[test]
    fn identical_frames_give_zero_flow() {
        let a = cloud_scene(96, 96, 7, (0.0, 0.0));
        let feats = crate::optflow::detect_blobs(&a, &FlowParams::default());
        assert!(!feats.is_empty());
        let flow = lk_flow_at(&feats, &a, &a, &FlowParams::default()).unwrap();
        assert!(!flow.entries.is_empty());
        for e in &flow.entries {
            assert_eq!((e.u, e.v), (0.0, 0.0));
        }
    }

    #[test]
    fn recovers_translation() {
        let a = cloud_scene(128, 128, 11, (0.0, 0.0));
        let b = cloud_scene(128, 128, 11, (2.0, 0.0));
        let feats = crate::optflow::detect_blobs(&a, &FlowParams::default());
        let flow = lk_flow_at(&feats, &a, &b, &FlowParams::default()).unwrap();
        let interior: Vec<_> = flow
            .entries
            .iter()
            .filter(|e| e.x > 16.0 && e.x < 112.0 && e.y > 16.0 && e.y < 112.0)
            .collect();
        assert!(!interior.is_empty());
        for e in interior {
            assert!((e.u - 2.0).abs() < 0.1 && e.v.abs() < 0.1, "{e:?}");
        }
    }

    #[test]
    fn flat_region_is_rejected() {
        let a = Grid2D::filled(64, 64, 0.5, GridKind::NormalizedRadiance);
        let f = Feature {
            x: 32.0,
            y: 32.0,
            scale: 4.0,
            response: 1.0,
        };
        let flow = lk_flow_at(&[f], &a, &a, &FlowParams::default()).unwrap();
        assert!(flow.entries.is_empty());
        assert_eq!(flow.rejected_count, 1);
    }

    #[test]
    fn border_windows_are_rejected() {
        let a = cloud_scene(96, 96, 7, (0.0, 0.0));
        let b = cloud_scene(96, 96, 7, (3.0, 0.0));
        let at = |x: f64, y: f64| Feature {
            x,
            y,
            scale: 4.0,
            response: 1.0,
        };
        // centred 5 px from the left edge, and 90 px so that the tracked
        // window crosses the right edge
        let feats = [at(5.0, 40.0), at(86.0, 40.0)];
        let flow = lk_flow_at(&feats, &a, &b, &FlowParams::default()).unwrap();
        assert!(flow.entries.is_empty(), "{:?}", flow.entries);
        assert_eq!(flow.rejected_count, 2);
    }

    #[test]
    fn size_mismatch() {
        let a = Grid2D::filled(8, 8, 0.0, GridKind::NormalizedRadiance);
        let b = Grid2D::filled(8, 9, 0.0, GridKind::NormalizedRadiance);
        assert!(matches!(
            lk_flow_at(&[], &a, &b, &FlowParams::default()),
            Err(Error::SizeMismatch(_))
        ));
    }

    #[test]
    fn eigenvalue_of_diagonal() {
        assert_eq!(min_eigenvalue(3.0, 0.0, 1.0), 1.0);
        assert!((min_eigenvalue(2.0, 1.0, 2.0) - 1.0).abs() < 1e-12);
    }
}
