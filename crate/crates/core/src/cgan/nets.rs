//! Generator, discriminator and perceptual feature extractor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv, ConvT, Grads, Init, Layer, Params, Seq, SeqCache};
use super::tensor::{ConvGeom, Tensor};
use crate::error::{Error, Result};

const DOWN: ConvGeom = ConvGeom {
    k: 4,
    stride: 2,
    pad: 1,
    dilation: 1,
};

/// Layer widths and activation settings shared by both networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanArchitecture {
    pub encoder_widths: Vec<usize>,
    pub bottleneck_dilations: Vec<usize>,
    pub disc_widths: Vec<usize>,
    pub leaky_slope: f64,
    pub init_std: f64,
}

impl Default for GanArchitecture {
    fn default() -> Self {
        GanArchitecture {
            encoder_widths: vec![64, 128, 256, 512],
            bottleneck_dilations: vec![2, 4],
            disc_widths: vec![64, 128, 256, 512],
            leaky_slope: 0.2,
            init_std: 0.02,
        }
    }
}

impl GanArchitecture {
    /// Reduced widths for CPU-scale runs at 64x64.
    pub fn desk() -> Self {
        GanArchitecture {
            encoder_widths: vec![16, 32, 64, 128],
            disc_widths: vec![16, 32, 64, 128],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_widths.is_empty() || self.disc_widths.is_empty() {
            return Err(Error::Config("network widths must be non-empty".into()));
        }
        if self
            .encoder_widths
            .iter()
            .chain(&self.disc_widths)
            .any(|&w| w == 0)
        {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.bottleneck_dilations.contains(&0) {
            return Err(Error::Config("dilations must be positive".into()));
        }
        if !(self.leaky_slope.is_finite() && self.init_std > 0.0) {
            return Err(Error::Config("bad activation slope or init scale".into()));
        }
        Ok(())
    }

    /// Spatial sizes must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.encoder_widths.len().max(self.disc_widths.len())
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let m = self.size_multiple();
        if h == 0 || w == 0 || !h.is_multiple_of(m) || !w.is_multiple_of(m) {
            return Err(Error::ShapeMismatch(format!(
                "input {h}x{w} is not a positive multiple of {m}"
            )));
        }
        Ok(())
    }
}

/// U-Net with a dilated bottleneck and skip connections.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    encoder: Vec<Seq>,
    bottleneck: Seq,
    decoder: Vec<Seq>,
    widths: Vec<usize>,
}

pub struct GenCache {
    encoder: Vec<SeqCache>,
    bottleneck: SeqCache,
    decoder: Vec<SeqCache>,
}

impl Generator {
    pub fn build(arch: &GanArchitecture, params: &mut Params, rng: &mut ChaCha8Rng) -> Self {
        let mut init = Init::Normal(rng, arch.init_std);
        let lrelu = Layer::LeakyRelu(arch.leaky_slope);
        let w = &arch.encoder_widths;
        let encoder = w
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let cin = if i == 0 { 1 } else { w[i - 1] };
                let conv = Conv::new(params, &format!("enc{i}"), cin, cout, DOWN, &mut init);
                if i == 0 {
                    Seq::new(vec![Layer::Conv(conv), lrelu])
                } else {
                    Seq::new(vec![Layer::Conv(conv), Layer::InstanceNorm, lrelu])
                }
            })
            .collect();
        let deepest = *w.last().expect("validated widths");
        let mut bottle = Vec::new();
        for (j, &d) in arch.bottleneck_dilations.iter().enumerate() {
            let geom = ConvGeom {
                k: 3,
                stride: 1,
                pad: d,
                dilation: d,
            };
            let conv = Conv::new(
                params,
                &format!("mid{j}"),
                deepest,
                deepest,
                geom,
                &mut init,
            );
            bottle.extend([Layer::Conv(conv), Layer::InstanceNorm, lrelu]);
        }
        // decoder[i] consumes cat(previous, enc_i) and restores enc_i's input size
        let mut decoder = Vec::with_capacity(w.len());
        for i in 0..w.len() {
            let cout = if i == 0 { 1 } else { w[i - 1] };
            let ct = ConvT::new(params, &format!("dec{i}"), 2 * w[i], cout, DOWN, &mut init);
            decoder.push(if i == 0 {
                Seq::new(vec![Layer::ConvT(ct), Layer::Tanh])
            } else {
                Seq::new(vec![Layer::ConvT(ct), Layer::InstanceNorm, lrelu])
            });
        }
        Generator {
            encoder,
            bottleneck: Seq::new(bottle),
            decoder,
            widths: w.clone(),
        }
    }

    pub fn forward(&self, params: &Params, x: Tensor, keep: bool) -> (Tensor, GenCache) {
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut enc_caches = Vec::with_capacity(self.encoder.len());
        let mut cur = x;
        for block in &self.encoder {
            let (out, cache) = block.forward(params, cur, keep);
            enc_caches.push(cache);
            skips.push(out.clone());
            cur = out;
        }
        let (mut cur, mid_cache) = self.bottleneck.forward(params, cur, keep);
        let mut dec_caches = Vec::with_capacity(self.decoder.len());
        for i in (0..self.decoder.len()).rev() {
            let joined = Tensor::concat(&cur, &skips[i]);
            let (out, cache) = self.decoder[i].forward(params, joined, keep);
            dec_caches.push(cache);
            cur = out;
        }
        dec_caches.reverse();
        (
            cur,
            GenCache {
                encoder: enc_caches,
                bottleneck: mid_cache,
                decoder: dec_caches,
            },
        )
    }

    /// Backpropagates `dy`, accumulating into `grads`; returns the input
    /// gradient.
    pub fn backward(
        &self,
        params: &Params,
        cache: GenCache,
        dy: Tensor,
        grads: &mut Grads,
    ) -> Tensor {
        let depth = self.widths.len();
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; depth];
        let mut cur = dy;
        for (i, c) in cache.decoder.into_iter().enumerate() {
            let d_joined = self.decoder[i].backward(params, c, cur, Some(grads));
            let (d_prev, d_skip) = d_joined.split(self.widths[i]);
            skip_grads[i] = Some(d_skip);
            cur = d_prev;
        }
        cur = self
            .bottleneck
            .backward(params, cache.bottleneck, cur, Some(grads));
        for (i, c) in cache.encoder.into_iter().enumerate().rev() {
            if let Some(s) = skip_grads[i].take() {
                cur.add_assign(&s);
            }
            cur = self.encoder[i].backward(params, c, cur, Some(grads));
        }
        cur
    }
}

/// PatchGAN discriminator over `cat(condition, candidate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    body: Seq,
}

impl Discriminator {
    pub fn build(arch: &GanArchitecture, params: &mut Params, rng: &mut ChaCha8Rng) -> Self {
        let mut init = Init::Normal(rng, arch.init_std);
        let lrelu = Layer::LeakyRelu(arch.leaky_slope);
        let w = &arch.disc_widths;
        let mut layers = Vec::new();
        for (i, &cout) in w.iter().enumerate() {
            let cin = if i == 0 { 2 } else { w[i - 1] };
            let conv = Conv::new(params, &format!("disc{i}"), cin, cout, DOWN, &mut init);
            layers.push(Layer::Conv(conv));
            if i > 0 {
                layers.push(Layer::InstanceNorm);
            }
            layers.push(lrelu);
        }
        let head = ConvGeom {
            k: 3,
            stride: 1,
            pad: 1,
            dilation: 1,
        };
        let last = *w.last().expect("validated widths");
        let proj = Conv::new(params, "head", last, 1, head, &mut init);
        layers.push(Layer::Conv(proj));
        Discriminator {
            body: Seq::new(layers),
        }
    }

    /// Patch logit map for a condition/candidate pair.
    pub fn forward(
        &self,
        params: &Params,
        cond: &Tensor,
        cand: &Tensor,
        keep: bool,
    ) -> (Tensor, SeqCache) {
        self.body.forward(params, Tensor::concat(cond, cand), keep)
    }

    /// Returns the gradient with respect to the candidate channel.
    pub fn backward(
        &self,
        params: &Params,
        cache: SeqCache,
        dlogits: Tensor,
        grads: Option<&mut Grads>,
    ) -> Tensor {
        let dx = self.body.backward(params, cache, dlogits, grads);
        dx.split(1).1
    }
}

/// Fixed random convolutional features standing in for a pretrained
/// backbone. Weights are drawn once from the seed and never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualExtractor {
    pub seed: u64,
    params: Params,
    stages: Vec<Seq>,
}

pub const PERCEPTUAL_WIDTHS: [usize; 3] = [16, 32, 64];

impl PerceptualExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let mut init = Init::FanIn(&mut rng);
        let mut params = Params::default();
        let mut cin = 1;
        let stages = PERCEPTUAL_WIDTHS
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let conv = Conv::new(&mut params, &format!("feat{i}"), cin, cout, DOWN, &mut init);
                cin = cout;
                Seq::new(vec![Layer::Conv(conv), Layer::Relu])
            })
            .collect();
        PerceptualExtractor {
            seed,
            params,
            stages,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    fn run(&self, x: &Tensor, keep: bool) -> (Vec<Tensor>, Vec<SeqCache>) {
        let mut outs = Vec::with_capacity(self.stages.len());
        let mut caches = Vec::with_capacity(self.stages.len());
        let mut cur = x.clone();
        for s in &self.stages {
            let (o, c) = s.forward(&self.params, cur, keep);
            outs.push(o.clone());
            caches.push(c);
            cur = o;
        }
        (outs, caches)
    }

    /// All stage activations, flattened and concatenated.
    pub fn features(&self, x: &Tensor) -> Vec<f64> {
        self.run(x, false)
            .0
            .into_iter()
            .flat_map(|t| t.data)
            .collect()
    }

    /// `mean |φ(a) − φ(b)|` over the concatenated features.
    pub fn distance(&self, a: &Tensor, b: &Tensor) -> f64 {
        let (fa, fb) = (self.features(a), self.features(b));
        fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum::<f64>() / fa.len() as f64
    }

    /// Distance and its gradient with respect to `a`.
    pub fn distance_grad(&self, a: &Tensor, b: &Tensor) -> (f64, Tensor) {
        let (fa, caches) = self.run(a, true);
        let (fb, _) = self.run(b, false);
        let total: usize = fa.iter().map(|t| t.data.len()).sum();
        let n = total as f64;
        let mut dist = 0.0;
        let mut diffs: Vec<Tensor> = fa
            .iter()
            .zip(&fb)
            .map(|(x, y)| {
                let data = x
                    .data
                    .iter()
                    .zip(&y.data)
                    .map(|(p, q)| {
                        dist += (p - q).abs();
                        sign(p - q) / n
                    })
                    .collect();
                Tensor::from_vec(x.c, x.h, x.w, data)
            })
            .collect();
        let mut upstream: Option<Tensor> = None;
        for (i, cache) in caches.into_iter().enumerate().rev() {
            let mut dy = std::mem::replace(&mut diffs[i], Tensor::zeros(0, 0, 0));
            if let Some(u) = upstream.take() {
                dy.add_assign(&u);
            }
            upstream = Some(self.stages[i].backward(&self.params, cache, dy, None));
        }
        (dist / n, upstream.expect("at least one stage"))
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
