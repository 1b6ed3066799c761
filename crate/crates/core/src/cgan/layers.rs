//! Parameter storage and the layer kit (convolution, transposed
//! convolution, instance norm, activations) with hand-written backward
//! passes. Parameters are stored as `f32`; all arithmetic runs in `f64`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{col2im, gemm, im2col, ConvGeom, Tensor};

pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
}

/// An ordered set of named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    pub list: Vec<Param>,
}

impl Params {
    fn push(&mut self, name: String, shape: Vec<usize>, value: Vec<f32>) -> usize {
        self.list.push(Param { name, shape, value });
        self.list.len() - 1
    }

    pub fn count(&self) -> usize {
        self.list.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            list: self.list.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    fn as_f64(&self, idx: usize) -> Vec<f64> {
        self.list[idx].value.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub list: Vec<Vec<f64>>,
}

impl Grads {
    pub fn scale(&mut self, s: f64) {
        self.list.iter_mut().flatten().for_each(|g| *g *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.list.iter().flatten().all(|g| g.is_finite())
    }
}

/// Weight initialisation for newly created layers.
pub enum Init<'a, R: Rng> {
    /// `N(0, std)`.
    Normal(&'a mut R, f64),
    /// `N(0, 1/fan_in)`: unit-variance draws scaled to preserve activation
    /// variance.
    FanIn(&'a mut R),
}

impl<R: Rng> Init<'_, R> {
    fn draw(&mut self, n: usize, fan_in: usize) -> Vec<f32> {
        match self {
            Init::Normal(rng, std) => {
                let d = Normal::new(0.0, *std).expect("valid std");
                (0..n).map(|_| d.sample(*rng) as f32).collect()
            }
            Init::FanIn(rng) => {
                let d = Normal::new(0.0, 1.0).expect("unit normal");
                let s = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| (d.sample(*rng) * s) as f32).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv {
    pub weight: usize,
    pub bias: usize,
    pub cin: usize,
    pub cout: usize,
    pub geom: ConvGeom,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        params: &mut Params,
        name: &str,
        cin: usize,
        cout: usize,
        geom: ConvGeom,
        init: &mut Init<'_, R>,
    ) -> Self {
        let kk = geom.k * geom.k;
        let w = init.draw(cout * cin * kk, cin * kk);
        let weight = params.push(format!("{name}.weight"), vec![cout, cin, geom.k, geom.k], w);
        let bias = params.push(format!("{name}.bias"), vec![cout], vec![0.0; cout]);
        Conv {
            weight,
            bias,
            cin,
            cout,
            geom,
        }
    }
}

/// Transposed convolution; weight layout `[cin, cout, k, k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvT {
    pub weight: usize,
    pub bias: usize,
    pub cin: usize,
    pub cout: usize,
    pub geom: ConvGeom,
}

impl ConvT {
    pub fn new<R: Rng>(
        params: &mut Params,
        name: &str,
        cin: usize,
        cout: usize,
        geom: ConvGeom,
        init: &mut Init<'_, R>,
    ) -> Self {
        let kk = geom.k * geom.k;
        let w = init.draw(cin * cout * kk, cin * kk);
        let weight = params.push(format!("{name}.weight"), vec![cin, cout, geom.k, geom.k], w);
        let bias = params.push(format!("{name}.bias"), vec![cout], vec![0.0; cout]);
        ConvT {
            weight,
            bias,
            cin,
            cout,
            geom,
        }
    }

    fn out_dim(&self, n: usize) -> usize {
        (n - 1) * self.geom.stride + self.geom.dilation * (self.geom.k - 1) + 1 - 2 * self.geom.pad
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layer {
    Conv(Conv),
    ConvT(ConvT),
    InstanceNorm,
    LeakyRelu(f64),
    Relu,
    Tanh,
}

#[derive(Debug, Clone)]
pub enum Cache {
    Conv {
        cols: Vec<f64>,
        in_shape: (usize, usize, usize),
    },
    ConvT {
        input: Tensor,
    },
    Norm {
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Act {
        input: Tensor,
    },
    Tanh {
        output: Tensor,
    },
}

impl Layer {
    /// Forward pass; returns the cache needed by [`Layer::backward`] when
    /// `keep` is set.
    pub fn forward(&self, params: &Params, x: Tensor, keep: bool) -> (Tensor, Option<Cache>) {
        match *self {
            Layer::Conv(conv) => {
                assert_eq!(x.c, conv.cin, "conv input channels");
                let (cols, oh, ow) = im2col(&x, conv.geom);
                let kdim = conv.cin * conv.geom.k * conv.geom.k;
                let n = oh * ow;
                let w = params.as_f64(conv.weight);
                let b = &params.list[conv.bias].value;
                let mut out = Tensor::zeros(conv.cout, oh, ow);
                for (co, chunk) in out.data.chunks_mut(n).enumerate() {
                    chunk.fill(b[co] as f64);
                }
                gemm(
                    conv.cout,
                    kdim,
                    n,
                    &w,
                    false,
                    &cols,
                    false,
                    1.0,
                    &mut out.data,
                );
                let cache = keep.then(|| Cache::Conv {
                    cols,
                    in_shape: x.shape(),
                });
                (out, cache)
            }
            Layer::ConvT(ct) => {
                assert_eq!(x.c, ct.cin, "transposed conv input channels");
                let (oh, ow) = (ct.out_dim(x.h), ct.out_dim(x.w));
                let rows = ct.cout * ct.geom.k * ct.geom.k;
                let n = x.plane();
                let w = params.as_f64(ct.weight);
                let mut cols = vec![0.0; rows * n];
                gemm(rows, ct.cin, n, &w, true, &x.data, false, 0.0, &mut cols);
                let mut out = col2im(&cols, ct.cout, oh, ow, ct.geom);
                let b = &params.list[ct.bias].value;
                let plane = oh * ow;
                for (co, chunk) in out.data.chunks_mut(plane).enumerate() {
                    let bv = b[co] as f64;
                    chunk.iter_mut().for_each(|v| *v += bv);
                }
                (out, keep.then_some(Cache::ConvT { input: x }))
            }
            Layer::InstanceNorm => {
                let n = x.plane();
                let mut out = x;
                let mut inv = Vec::with_capacity(out.c);
                for chunk in out.data.chunks_mut(n) {
                    let mean = chunk.iter().sum::<f64>() / n as f64;
                    let var = chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                    let is = 1.0 / (var + NORM_EPS).sqrt();
                    chunk.iter_mut().for_each(|v| *v = (*v - mean) * is);
                    inv.push(is);
                }
                let cache = keep.then(|| Cache::Norm {
                    xhat: out.clone(),
                    inv_std: inv,
                });
                (out, cache)
            }
            Layer::LeakyRelu(slope) => {
                let cache = keep.then(|| Cache::Act { input: x.clone() });
                let mut out = x;
                out.data
                    .iter_mut()
                    .for_each(|v| *v = if *v > 0.0 { *v } else { *v * slope });
                (out, cache)
            }
            Layer::Relu => {
                let cache = keep.then(|| Cache::Act { input: x.clone() });
                let mut out = x;
                out.data.iter_mut().for_each(|v| *v = v.max(0.0));
                (out, cache)
            }
            Layer::Tanh => {
                let mut out = x;
                out.data.iter_mut().for_each(|v| *v = v.tanh());
                let cache = keep.then(|| Cache::Tanh {
                    output: out.clone(),
                });
                (out, cache)
            }
        }
    }

    /// Propagates `dy` to the layer input, accumulating parameter
    /// gradients into `grads` when given.
    pub fn backward(
        &self,
        params: &Params,
        cache: Cache,
        dy: Tensor,
        grads: Option<&mut Grads>,
    ) -> Tensor {
        match (*self, cache) {
            (Layer::Conv(conv), Cache::Conv { cols, in_shape }) => {
                let kdim = conv.cin * conv.geom.k * conv.geom.k;
                let n = dy.plane();
                if let Some(g) = grads {
                    gemm(
                        conv.cout,
                        n,
                        kdim,
                        &dy.data,
                        false,
                        &cols,
                        true,
                        1.0,
                        &mut g.list[conv.weight],
                    );
                    for (co, chunk) in dy.data.chunks(n).enumerate() {
                        g.list[conv.bias][co] += chunk.iter().sum::<f64>();
                    }
                }
                let w = params.as_f64(conv.weight);
                let mut dcols = vec![0.0; kdim * n];
                gemm(
                    kdim, conv.cout, n, &w, true, &dy.data, false, 0.0, &mut dcols,
                );
                let (c, h, wd) = in_shape;
                col2im(&dcols, c, h, wd, conv.geom)
            }
            (Layer::ConvT(ct), Cache::ConvT { input }) => {
                let (dcols, _, _) = im2col(&dy, ct.geom);
                let rows = ct.cout * ct.geom.k * ct.geom.k;
                let n = input.plane();
                if let Some(g) = grads {
                    gemm(
                        ct.cin,
                        n,
                        rows,
                        &input.data,
                        false,
                        &dcols,
                        true,
                        1.0,
                        &mut g.list[ct.weight],
                    );
                    for (co, chunk) in dy.data.chunks(dy.plane()).enumerate() {
                        g.list[ct.bias][co] += chunk.iter().sum::<f64>();
                    }
                }
                let w = params.as_f64(ct.weight);
                let mut dx = Tensor::zeros(input.c, input.h, input.w);
                gemm(ct.cin, rows, n, &w, false, &dcols, false, 0.0, &mut dx.data);
                dx
            }
            (Layer::InstanceNorm, Cache::Norm { xhat, inv_std }) => {
                let n = dy.plane();
                let mut dx = dy;
                for (c, chunk) in dx.data.chunks_mut(n).enumerate() {
                    let xh = xhat.channel(c);
                    let mean_dy = chunk.iter().sum::<f64>() / n as f64;
                    let mean_dyx = chunk.iter().zip(xh).map(|(d, x)| d * x).sum::<f64>() / n as f64;
                    for (d, &x) in chunk.iter_mut().zip(xh) {
                        *d = inv_std[c] * (*d - mean_dy - x * mean_dyx);
                    }
                }
                dx
            }
            (Layer::LeakyRelu(slope), Cache::Act { input }) => {
                let mut dx = dy;
                for (d, &x) in dx.data.iter_mut().zip(&input.data) {
                    if x <= 0.0 {
                        *d *= slope;
                    }
                }
                dx
            }
            (Layer::Relu, Cache::Act { input }) => {
                let mut dx = dy;
                for (d, &x) in dx.data.iter_mut().zip(&input.data) {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                }
                dx
            }
            (Layer::Tanh, Cache::Tanh { output }) => {
                let mut dx = dy;
                for (d, &y) in dx.data.iter_mut().zip(&output.data) {
                    *d *= 1.0 - y * y;
                }
                dx
            }
            (layer, _) => panic!("cache does not match layer {layer:?}"),
        }
    }
}

/// A chain of layers applied in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Seq {
    pub layers: Vec<Layer>,
}

pub type SeqCache = Vec<Cache>;

impl Seq {
    pub fn new(layers: Vec<Layer>) -> Self {
        Seq { layers }
    }

    pub fn forward(&self, params: &Params, x: Tensor, keep: bool) -> (Tensor, SeqCache) {
        let mut caches = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        let mut cur = x;
        for layer in &self.layers {
            let (out, cache) = layer.forward(params, cur, keep);
            if let Some(c) = cache {
                caches.push(c);
            }
            cur = out;
        }
        (cur, caches)
    }

    pub fn backward(
        &self,
        params: &Params,
        caches: SeqCache,
        dy: Tensor,
        mut grads: Option<&mut Grads>,
    ) -> Tensor {
        assert_eq!(
            caches.len(),
            self.layers.len(),
            "forward was run without caches"
        );
        let mut cur = dy;
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            cur = layer.backward(params, cache, cur, grads.as_deref_mut());
        }
        cur
    }
}
