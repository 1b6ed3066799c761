use super::plane::Plane;
use super::FlowField;
use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// One backward semi-Lagrangian step: `out(p) = in(p - v(p))`, bilinear,
/// with departure points outside the grid taking `fill`.
pub fn advect(grid: &Grid2D, flow: &FlowField, fill: f32) -> Result<Grid2D> {
    if (flow.height, flow.width) != grid.dims() {
        return Err(Error::SizeMismatch(format!(
            "grid {:?} vs flow {}x{}",
            grid.dims(),
            flow.height,
            flow.width
        )));
    }
    let src = Plane::from_grid(grid);
    let (h, w) = grid.dims();
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let x = c as f64 - flow.u[i];
            let y = r as f64 - flow.v[i];
            if (0.0..=xmax).contains(&x) && (0.0..=ymax).contains(&y) {
                out.push(src.bilinear(x, y) as f32);
            } else {
                out.push(fill);
            }
        }
    }
    Grid2D::new(h, w, out, grid.kind())
}
