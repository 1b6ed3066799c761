//! Single-sample CHW tensors and the im2col / GEMM kernels behind the
//! convolution layers.

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length");
        Tensor { c, h, w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane();
        &self.data[c * n..(c + 1) * n]
    }

    /// Channel-wise concatenation `[a; b]`.
    pub fn concat(a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!((a.h, a.w), (b.h, b.w), "concat spatial mismatch");
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor {
            c: a.c + b.c,
            h: a.h,
            w: a.w,
            data,
        }
    }

    /// Inverse of [`Tensor::concat`]: splits off the first `c` channels.
    pub fn split(self, c: usize) -> (Tensor, Tensor) {
        let n = c * self.plane();
        let mut head = self.data;
        let tail = head.split_off(n);
        (
            Tensor {
                c,
                h: self.h,
                w: self.w,
                data: head,
            },
            Tensor {
                c: self.c - c,
                h: self.h,
                w: self.w,
                data: tail,
            },
        )
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Geometry of a 2-D convolution from an `(h, w)` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvGeom {
    pub fn out_dim(&self, n: usize) -> usize {
        let span = self.dilation * (self.k - 1) + 1;
        (n + 2 * self.pad - span) / self.stride + 1
    }
}

/// Unfolds `(c, h, w)` into a `(c·k·k) x (oh·ow)` row-major matrix.
pub fn im2col(x: &Tensor, g: ConvGeom) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (g.out_dim(x.h), g.out_dim(x.w));
    let cols = oh * ow;
    let mut out = vec![0.0; x.c * g.k * g.k * cols];
    for c in 0..x.c {
        let src = x.channel(c);
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki * g.dilation) as isize - g.pad as isize;
                    if iy < 0 || iy >= x.h as isize {
                        continue;
                    }
                    let srow = &src[iy as usize * x.w..(iy as usize + 1) * x.w];
                    let drow = &mut dst[oy * ow..(oy + 1) * ow];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj * g.dilation) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < x.w {
                            *d = srow[ix as usize];
                        }
                    }
                }
            }
        }
    }
    (out, oh, ow)
}

/// Adjoint of [`im2col`]: scatters a column matrix back into `(c, h, w)`.
pub fn col2im(cols: &[f64], c: usize, h: usize, w: usize, g: ConvGeom) -> Tensor {
    let (oh, ow) = (g.out_dim(h), g.out_dim(w));
    let n = oh * ow;
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ch * g.k + ki) * g.k + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki * g.dilation) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = ch * h * w + iy as usize * w;
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kj * g.dilation) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < w {
                            out.data[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// `C (m x n) = beta·C + op(A) · op(B)`, row-major operands where `op`
/// optionally transposes. `A` is `m x k` after `op`, `B` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_trans {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the asserts above bound every index the kernel touches given
    // these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
