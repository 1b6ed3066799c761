//! Model state, the alternating update step, the epoch loop and inference.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Grads, Params};
use super::loss::{self, GenLoss, LossWeights};
use super::nets::{Discriminator, GanArchitecture, Generator, PerceptualExtractor};
use super::optim::{cyclic_lr, AdamState, TrainConfig};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridKind};
use crate::preprocess::SequenceSample;

/// One conditioning radiance frame with its co-timed rain frame, both
/// normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub radiance: Grid2D,
    pub rain: Grid2D,
}

/// Pairs every input radiance frame with its time-matched rain frame.
pub fn training_pairs(samples: &[SequenceSample]) -> Vec<TrainingPair> {
    samples
        .iter()
        .flat_map(|s| s.inputs.iter().zip(&s.input_rain))
        .map(|(r, y)| TrainingPair {
            radiance: r.clone(),
            rain: y.clone(),
        })
        .collect()
}

pub fn tensor_from_grid(g: &Grid2D) -> Tensor {
    Tensor::from_vec(
        1,
        g.height(),
        g.width(),
        g.values().iter().map(|&v| v as f64).collect(),
    )
}

pub fn grid_from_tensor(t: &Tensor, kind: GridKind) -> Grid2D {
    Grid2D::from_fn(t.h, t.w, kind, |r, c| t.data[r * t.w + c] as f32)
}

/// Generator and discriminator weights, their optimiser moments and the
/// configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GanCheckpoint {
    pub arch: GanArchitecture,
    pub config: TrainConfig,
    pub step: u64,
    pub extractor_seed: u64,
    pub generator: Params,
    pub discriminator: Params,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
    gen_net: Generator,
    disc_net: Discriminator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub lr: f64,
    #[serde(rename = "L_D")]
    pub loss_d: f64,
    #[serde(rename = "L_G")]
    pub loss_g: f64,
    pub pixel: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    pub mae: f64,
}

impl GanCheckpoint {
    /// Freshly initialised networks, step 0.
    pub fn init(arch: GanArchitecture, config: TrainConfig) -> Result<Self> {
        arch.validate()?;
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let mut generator = Params::default();
        let gen_net = Generator::build(&arch, &mut generator, &mut rng);
        rng.set_stream(2);
        let mut discriminator = Params::default();
        let disc_net = Discriminator::build(&arch, &mut discriminator, &mut rng);
        Ok(GanCheckpoint {
            extractor_seed: config.seed,
            gen_opt: AdamState::new(&generator),
            disc_opt: AdamState::new(&discriminator),
            arch,
            config,
            step: 0,
            generator,
            discriminator,
            gen_net,
            disc_net,
        })
    }

    pub fn extractor(&self) -> PerceptualExtractor {
        PerceptualExtractor::new(self.extractor_seed)
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            pixel: self.config.lambda_pixel,
            perceptual: self.config.lambda_perceptual,
        }
    }

    fn check_frame(&self, t: &Tensor) -> Result<()> {
        self.arch.check_input(t.h, t.w)?;
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(
                "input frame has non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Generator output for one normalised radiance frame.
    pub fn generate(&self, radiance: &Grid2D) -> Result<Grid2D> {
        let x = tensor_from_grid(radiance);
        self.check_frame(&x)?;
        let (y, _) = self.gen_net.forward(&self.generator, x, false);
        Ok(grid_from_tensor(&y, GridKind::NormalizedRain))
    }

    /// Patch logit map and its mean.
    pub fn discriminate(&self, cond: &Grid2D, cand: &Grid2D) -> Result<(Grid2D, f64)> {
        if !cond.same_dims(cand) {
            return Err(Error::ShapeMismatch(format!(
                "condition {:?} vs candidate {:?}",
                cond.dims(),
                cand.dims()
            )));
        }
        let (c, y) = (tensor_from_grid(cond), tensor_from_grid(cand));
        self.check_frame(&c)?;
        self.check_frame(&y)?;
        let (map, _) = self.disc_net.forward(&self.discriminator, &c, &y, false);
        let mean = map.mean();
        Ok((grid_from_tensor(&map, GridKind::NormalizedRain), mean))
    }

    pub(crate) fn rebuild(
        arch: GanArchitecture,
        config: TrainConfig,
        step: u64,
        extractor_seed: u64,
    ) -> Result<Self> {
        let mut ck = Self::init(arch, config)?;
        ck.step = step;
        ck.extractor_seed = extractor_seed;
        Ok(ck)
    }
}

fn to_tensors(ck: &GanCheckpoint, batch: &[TrainingPair]) -> Result<Vec<(Tensor, Tensor)>> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dims = batch[0].radiance.dims();
    batch
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.radiance.dims() != dims || p.rain.dims() != dims {
                return Err(Error::ShapeMismatch(format!(
                    "pair {i}: radiance {:?}, rain {:?}, expected {dims:?}",
                    p.radiance.dims(),
                    p.rain.dims()
                )));
            }
            let (x, y) = (tensor_from_grid(&p.radiance), tensor_from_grid(&p.rain));
            ck.check_frame(&x)?;
            ck.check_frame(&y)?;
            Ok((x, y))
        })
        .collect()
}

/// Batch-averaged generator objective and its parameter gradient under the
/// current discriminator, which is left untouched.
pub fn generator_objective(
    ck: &GanCheckpoint,
    batch: &[TrainingPair],
    extractor: &PerceptualExtractor,
) -> Result<(GenLoss, Grads)> {
    let data = to_tensors(ck, batch)?;
    let fakes: Vec<_> = data
        .iter()
        .map(|(x, _)| ck.gen_net.forward(&ck.generator, x.clone(), true))
        .collect();
    Ok(gen_pass(ck, &data, fakes, extractor))
}

fn gen_pass(
    ck: &GanCheckpoint,
    data: &[(Tensor, Tensor)],
    fakes: Vec<(Tensor, super::nets::GenCache)>,
    extractor: &PerceptualExtractor,
) -> (GenLoss, Grads) {
    let w = ck.weights();
    let b = data.len() as f64;
    let mut grads = ck.generator.zero_grads();
    let mut acc = GenLoss::default();
    for ((x, y), (fake, cache)) in data.iter().zip(fakes) {
        let (logits, dcache) = ck.disc_net.forward(&ck.discriminator, x, &fake, true);
        let adversarial = loss::bce_with_logits(&logits.data, 1.0);
        let dl = loss::bce_grad(&logits.data, 1.0);
        let dlogits = Tensor::from_vec(logits.c, logits.h, logits.w, dl);
        let mut dfake = ck
            .disc_net
            .backward(&ck.discriminator, dcache, dlogits, None);
        let (mae, perc, dcontent) = loss::content_grad(&fake, y, extractor, w);
        dfake.add_assign(&dcontent);
        ck.gen_net.backward(&ck.generator, cache, dfake, &mut grads);
        let (pixel, perceptual) = (w.pixel * mae, w.perceptual * perc);
        acc.adversarial += adversarial / b;
        acc.pixel += pixel / b;
        acc.perceptual += perceptual / b;
        acc.mae += mae / b;
        acc.total += (adversarial + pixel + perceptual) / b;
    }
    grads.scale(1.0 / b);
    (acc, grads)
}

/// One discriminator update on detached generator outputs followed by one
/// generator update against the refreshed discriminator.
pub fn train_step(
    ck: &mut GanCheckpoint,
    batch: &[TrainingPair],
    extractor: &PerceptualExtractor,
) -> Result<StepMetrics> {
    let data = to_tensors(ck, batch)?;
    step_on(ck, &data, extractor)
}

fn step_on(
    ck: &mut GanCheckpoint,
    data: &[(Tensor, Tensor)],
    extractor: &PerceptualExtractor,
) -> Result<StepMetrics> {
    let step = ck.step + 1;
    let lr = cyclic_lr(ck.step, &ck.config);
    let b = data.len() as f64;
    let fakes: Vec<_> = data
        .iter()
        .map(|(x, _)| ck.gen_net.forward(&ck.generator, x.clone(), true))
        .collect();

    let mut dgrads = ck.discriminator.zero_grads();
    let mut loss_d = 0.0;
    for ((x, y), (fake, _)) in data.iter().zip(&fakes) {
        for (cand, label) in [(y, 1.0), (fake, 0.0)] {
            let (logits, cache) = ck.disc_net.forward(&ck.discriminator, x, cand, true);
            loss_d += 0.5 * loss::bce_with_logits(&logits.data, label) / b;
            let g: Vec<f64> = loss::bce_grad(&logits.data, label)
                .into_iter()
                .map(|v| 0.5 * v)
                .collect();
            let dl = Tensor::from_vec(logits.c, logits.h, logits.w, g);
            ck.disc_net
                .backward(&ck.discriminator, cache, dl, Some(&mut dgrads));
        }
    }
    dgrads.scale(1.0 / b);
    if !loss_d.is_finite() || !dgrads.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            detail: format!("discriminator loss {loss_d}"),
        });
    }
    let cfg = ck.config.clone();
    ck.disc_opt
        .update(&mut ck.discriminator, &dgrads, lr, step, &cfg);

    let (gl, ggrads) = gen_pass(ck, data, fakes, extractor);
    if !gl.total.is_finite() || !ggrads.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            detail: format!("generator loss {gl:?}"),
        });
    }
    ck.gen_opt
        .update(&mut ck.generator, &ggrads, lr, step, &cfg);
    ck.step = step;
    Ok(StepMetrics {
        step,
        lr,
        loss_d,
        loss_g: gl.total,
        pixel: gl.pixel,
        perceptual: gl.perceptual,
        adversarial: gl.adversarial,
        mae: gl.mae,
    })
}

/// Receives progress from [`train`]; errors abort training.
pub trait TrainObserver {
    fn on_step(&mut self, _metrics: &StepMetrics) -> Result<()> {
        Ok(())
    }

    /// Called after each completed epoch (0-based).
    fn on_epoch(&mut self, _epoch: usize, _ckpt: &GanCheckpoint) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Collects every step's metrics.
impl TrainObserver for Vec<StepMetrics> {
    fn on_step(&mut self, m: &StepMetrics) -> Result<()> {
        self.push(*m);
        Ok(())
    }
}

/// Number of optimiser steps per epoch.
pub fn steps_per_epoch(pairs: usize, batch: usize) -> usize {
    pairs.div_ceil(batch)
}

/// Trains freshly initialised networks on `pairs`. Order within each epoch
/// comes from an RNG seeded by `(seed, epoch)`; the last batch may be
/// partial.
pub fn train(
    pairs: &[TrainingPair],
    arch: GanArchitecture,
    config: TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<GanCheckpoint> {
    let mut ck = GanCheckpoint::init(arch, config)?;
    let data = to_tensors(&ck, pairs)?;
    let extractor = ck.extractor();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..ck.config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(ck.config.seed);
        rng.set_stream(0x100 + epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for chunk in order.chunks(ck.config.batch_size) {
            let batch: Vec<(Tensor, Tensor)> = chunk.iter().map(|&i| data[i].clone()).collect();
            let m = step_on(&mut ck, &batch, &extractor)?;
            observer.on_step(&m)?;
        }
        observer.on_epoch(epoch, &ck)?;
    }
    Ok(ck)
}

/// Applies the generator to each frame independently, preserving order.
pub fn predict(ck: &GanCheckpoint, frames: &[Grid2D]) -> Result<Vec<Grid2D>> {
    frames.iter().map(|f| ck.generate(f)).collect()
}
