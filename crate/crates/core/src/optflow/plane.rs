//! f64 working image used by the flow stages.

use crate::grid::{Grid2D, GridKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(height: usize, width: usize) -> Self {
        Plane {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_grid(g: &Grid2D) -> Self {
        Plane {
            height: g.height(),
            width: g.width(),
            data: g.values().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_grid(&self, kind: GridKind) -> Grid2D {
        Grid2D::new(
            self.height,
            self.width,
            self.data.iter().map(|&v| v as f32).collect(),
            kind,
        )
        .expect("plane dimensions are consistent")
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn range(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Bilinear sample at (x, y) = (column, row) with edge clamping.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        self.bilinear(x, y)
    }

    /// Bilinear interpolation; the caller guarantees (x, y) lies inside
    /// `[0, W-1] x [0, H-1]`.
    #[inline]
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let c0 = x0 as usize;
        let r0 = y0 as usize;
        let c1 = (c0 + 1).min(self.width - 1);
        let r1 = (r0 + 1).min(self.height - 1);
        let top = if fx == 0.0 {
            self.at(r0, c0)
        } else {
            self.at(r0, c0) * (1.0 - fx) + self.at(r0, c1) * fx
        };
        if fy == 0.0 {
            return top;
        }
        let bottom = if fx == 0.0 {
            self.at(r1, c0)
        } else {
            self.at(r1, c0) * (1.0 - fx) + self.at(r1, c1) * fx
        };
        top * (1.0 - fy) + bottom * fy
    }
}

#[inline]
fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable convolution with a symmetric odd-length kernel, mirrored
/// borders.
pub fn convolve_separable(p: &Plane, kernel: &[f64]) -> Plane {
    let r = (kernel.len() / 2) as isize;
    let (h, w) = (p.height, p.width);
    let mut tmp = Plane::zeros(h, w);
    for row in 0..h {
        let src = &p.data[row * w..(row + 1) * w];
        for col in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let c = reflect101(col as isize + k as isize - r, w);
                acc += kv * src[c];
            }
            tmp.data[row * w + col] = acc;
        }
    }
    let mut out = Plane::zeros(h, w);
    for row in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let sr = reflect101(row as isize + k as isize - r, h);
            let src = &tmp.data[sr * w..(sr + 1) * w];
            let dst = &mut out.data[row * w..(row + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

pub fn gaussian_blur(p: &Plane, sigma: f64) -> Plane {
    convolve_separable(p, &gaussian_kernel(sigma))
}

/// Blur with the 5-tap binomial kernel and keep every other sample.
pub fn pyr_down(p: &Plane) -> Plane {
    let blurred = convolve_separable(
        p,
        &[1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0],
    );
    let (h, w) = (p.height.div_ceil(2), p.width.div_ceil(2));
    let mut out = Plane::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            out.data[r * w + c] = blurred.at(2 * r, 2 * c);
        }
    }
    out
}

/// Central-difference gradients (one-sided at the borders).
pub fn gradients(p: &Plane) -> (Plane, Plane) {
    let (h, w) = (p.height, p.width);
    let mut gx = Plane::zeros(h, w);
    let mut gy = Plane::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let (cl, cr) = (c.saturating_sub(1), (c + 1).min(w - 1));
            let (ru, rd) = (r.saturating_sub(1), (r + 1).min(h - 1));
            if cr > cl {
                gx.data[r * w + c] = (p.at(r, cr) - p.at(r, cl)) / (cr - cl) as f64;
            }
            if rd > ru {
                gy.data[r * w + c] = (p.at(rd, c) - p.at(ru, c)) / (rd - ru) as f64;
            }
        }
    }
    (gx, gy)
}
