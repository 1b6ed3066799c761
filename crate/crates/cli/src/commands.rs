//! Pipeline stages. Every stage validates its configuration and inputs
//! before creating any output, computes in a worker pool, and writes results
//! in sample order.
//!
//! Layout under the output directory:
//!
//! ```text
//! prep/    manifest.json correlation.json observed_cumulative.nwg
//!          sample_NNNN.{inputs,targets,input_rain}.nwg
//! flow/    fallback.json sample_NNNN.{forecast,flow}.nwg
//!          pgm/sample_NNNN_lead_KK.pgm          (--emit-pgm)
//! train/   model.nwck last_epoch.nwck metrics.jsonl
//! predict/ cumulative.nwg sample_NNNN_cumulative.pgm (--emit-pgm)
//! eval/    report.json
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nowcast_core::cgan::{self, GanCheckpoint, StepMetrics, TrainObserver, TrainingPair};
use nowcast_core::eval::{accumulate_rain, bilinear_resample, evaluate_run};
use nowcast_core::grid::{
    crop_center, read_grid_stack, replace_nonfinite, write_grid_stack, write_pgm, Grid2D,
    GridStack, NonFinitePolicy,
};
use nowcast_core::optflow::extrapolate_steps;
use nowcast_core::preprocess::{denormalize, make_sequences, pearson_correlation_matrix};
use nowcast_core::synth;

use crate::config::RunConfig;
use crate::error::{io_err, CliError, Context, Result};

pub const PREP_DIR: &str = "prep";
pub const FLOW_DIR: &str = "flow";
pub const TRAIN_DIR: &str = "train";
pub const PREDICT_DIR: &str = "predict";
pub const EVAL_DIR: &str = "eval";

/// Runs `f(i)` for `i in 0..n` on `workers` threads; results come back in
/// index order whatever the completion order.
pub fn run_pool<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Invalid(format!("worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

fn sample_path(dir: &Path, i: usize, suffix: &str) -> PathBuf {
    dir.join(format!("sample_{i:04}.{suffix}.nwg"))
}

fn require(what: &'static str, path: Option<&PathBuf>) -> Result<PathBuf> {
    let Some(p) = path else {
        return Err(CliError::Invalid(format!("no {what} path configured")));
    };
    if !p.is_file() {
        return Err(CliError::MissingInput {
            what,
            path: p.clone(),
        });
    }
    Ok(p.clone())
}

fn require_file(what: &'static str, p: PathBuf) -> Result<PathBuf> {
    require(what, Some(&p))
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(io_err(p))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(io_err(p))
}

fn read_frames(path: &Path) -> Result<(Vec<Grid2D>, f64, f64)> {
    let s = read_grid_stack(path)?;
    let (t0, dt) = (s.t0, s.dt);
    if s.channels() != 1 {
        return Err(CliError::Invalid(format!(
            "{}: expected 1 channel, found {}",
            path.display(),
            s.channels()
        )));
    }
    let frames = s
        .into_frames()
        .into_iter()
        .map(|mut f| f.remove(0))
        .collect();
    Ok((frames, t0, dt))
}

fn frames_stack(frames: Vec<Grid2D>, t0: f64, dt: f64) -> Result<GridStack> {
    Ok(GridStack::from_grids(frames, t0, dt)?)
}

/// Written by `prep`; tells later stages what the archive holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub samples: usize,
    pub t0: Vec<f64>,
    pub dt_seconds: f64,
    pub input_len: usize,
    pub horizon: usize,
    pub too_short: bool,
    pub unmasked_frames: Vec<usize>,
    pub degenerate_frames: Vec<(usize, usize)>,
}

pub fn read_manifest(out: &Path) -> Result<Manifest> {
    let p = out.join(PREP_DIR).join("manifest.json");
    let p = require_file("sample archive manifest", p)?;
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))
}

/// Writes a deterministic radiance/rain fixture pair.
pub fn cmd_synth(cfg: &RunConfig, frames: usize, size: usize) -> Result<String> {
    if frames == 0 || size < 8 {
        return Err(CliError::Invalid(
            "synth needs frames >= 1 and size >= 8".into(),
        ));
    }
    let (rad, rain) = synth::fixture(frames, 4, size, (1.0, 0.5), cfg.train.seed, 0.0);
    create_dir(&cfg.out)?;
    write_grid_stack(&rad, cfg.out.join("radiance.nwg"))?;
    write_grid_stack(&rain, cfg.out.join("rain.nwg"))?;
    Ok(format!(
        "wrote {frames} frames of {size}x{size} to {}",
        cfg.out.display()
    ))
}

pub fn cmd_prep(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let rad_path = require("radiance stack", cfg.radiance.as_ref())?;
    let rain_path = require("rain stack", cfg.rain.as_ref())?;
    let radiance = read_grid_stack(&rad_path)?;
    let rain = read_grid_stack(&rain_path)?;

    let set = make_sequences(&radiance, &rain, &cfg.channels, &cfg.pipeline, cfg.stride)
        .context(|| format!("preparing {}", rad_path.display()))?;
    let clean = replace_nonfinite(&radiance, NonFinitePolicy::MaxOfFrame).stack;
    let corr = pearson_correlation_matrix(&clean, &cfg.channels)
        .context(|| format!("correlating channels of {}", rad_path.display()))?;

    let p = &cfg.pipeline;
    let observed = run_pool(cfg.workers, set.samples.len(), |i| {
        let frames = set.samples[i]
            .targets
            .iter()
            .map(|g| {
                let mm = denormalize(g, p.rain_scale)?;
                crop_center(&mm, p.native_size, p.native_size)
            })
            .collect::<nowcast_core::Result<Vec<_>>>()
            .context(|| format!("sample {i} targets"))?;
        let cum = accumulate_rain(&frames, p.dt_hours).context(|| format!("sample {i}"))?;
        Ok(bilinear_resample(&cum, p.resample_factor))
    })?;

    let dir = cfg.out.join(PREP_DIR);
    create_dir(&dir)?;
    let dt = radiance.dt;
    for (i, s) in set.samples.iter().enumerate() {
        let later = s.t0 + p.input_len as f64 * dt;
        write_grid_stack(
            &frames_stack(s.inputs.clone(), s.t0, dt)?,
            sample_path(&dir, i, "inputs"),
        )?;
        write_grid_stack(
            &frames_stack(s.targets.clone(), later, dt)?,
            sample_path(&dir, i, "targets"),
        )?;
        write_grid_stack(
            &frames_stack(s.input_rain.clone(), s.t0, dt)?,
            sample_path(&dir, i, "input_rain"),
        )?;
    }
    if !observed.is_empty() {
        let t0 = set.samples[0].t0;
        write_grid_stack(
            &frames_stack(observed, t0, dt)?,
            dir.join("observed_cumulative.nwg"),
        )?;
    }
    write_text(&dir.join("correlation.json"), &corr.to_json())?;
    let manifest = Manifest {
        samples: set.samples.len(),
        t0: set.samples.iter().map(|s| s.t0).collect(),
        dt_seconds: dt,
        input_len: p.input_len,
        horizon: p.horizon,
        too_short: set.too_short,
        unmasked_frames: set.unmasked_frames,
        degenerate_frames: set.degenerate_frames,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_text(&dir.join("manifest.json"), &text)?;
    Ok(format!(
        "prepared {} samples in {}",
        manifest.samples,
        dir.display()
    ))
}

#[derive(Debug, Serialize)]
struct FallbackReport {
    samples: usize,
    persistence_fallback: Vec<usize>,
    features: Vec<usize>,
}

pub fn cmd_flow(cfg: &RunConfig, emit_pgm: bool) -> Result<String> {
    cfg.validate()?;
    if cfg.steps == 0 {
        return Err(CliError::Invalid("--steps must be >= 1".into()));
    }
    let manifest = read_manifest(&cfg.out)?;
    let prep = cfg.out.join(PREP_DIR);
    let results = run_pool(cfg.workers, manifest.samples, |i| {
        let path = sample_path(&prep, i, "inputs");
        let (inputs, t0, dt) = read_frames(&path)?;
        let ex = extrapolate_steps(&inputs, cfg.steps, &cfg.flow)
            .context(|| format!("sample {i} ({})", path.display()))?;
        let start = t0 + inputs.len() as f64 * dt;
        Ok((ex, start, dt))
    })?;

    let dir = cfg.out.join(FLOW_DIR);
    create_dir(&dir)?;
    if emit_pgm {
        create_dir(&dir.join("pgm"))?;
    }
    let mut report = FallbackReport {
        samples: results.len(),
        persistence_fallback: Vec::new(),
        features: Vec::new(),
    };
    for (i, (ex, start, dt)) in results.into_iter().enumerate() {
        if ex.persistence_fallback {
            report.persistence_fallback.push(i);
        }
        report.features.push(ex.features.len());
        write_grid_stack(&ex.flow.to_stack(start, dt), sample_path(&dir, i, "flow"))?;
        if emit_pgm {
            for (k, f) in ex.frames.iter().enumerate() {
                let p = dir
                    .join("pgm")
                    .join(format!("sample_{i:04}_lead_{:02}.pgm", k + 1));
                write_pgm(f, (-1.0, 1.0), p)?;
            }
        }
        write_grid_stack(
            &frames_stack(ex.frames, start, dt)?,
            sample_path(&dir, i, "forecast"),
        )?;
    }
    let text = serde_json::to_string_pretty(&report).expect("report serialises");
    write_text(&dir.join("fallback.json"), &text)?;
    Ok(format!(
        "extrapolated {} samples x {} steps ({} persistence fallbacks)",
        report.samples,
        cfg.steps,
        report.persistence_fallback.len()
    ))
}

pub fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join(TRAIN_DIR).join("model.nwck"))
}

struct FileObserver {
    metrics: BufWriter<fs::File>,
    metrics_path: PathBuf,
    last: PathBuf,
}

impl FileObserver {
    fn io(&self, e: std::io::Error) -> nowcast_core::Error {
        nowcast_core::Error::Io {
            path: self.metrics_path.clone(),
            source: e,
        }
    }
}

impl TrainObserver for FileObserver {
    fn on_step(&mut self, m: &StepMetrics) -> nowcast_core::Result<()> {
        let line = serde_json::to_string(m).expect("metrics serialise");
        writeln!(self.metrics, "{line}").map_err(|e| self.io(e))
    }

    fn on_epoch(&mut self, _epoch: usize, ckpt: &GanCheckpoint) -> nowcast_core::Result<()> {
        self.metrics.flush().map_err(|e| self.io(e))?;
        cgan::write_checkpoint(ckpt, &self.last)
    }
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let manifest = read_manifest(&cfg.out)?;
    let prep = cfg.out.join(PREP_DIR);
    let per_sample = run_pool(cfg.workers, manifest.samples, |i| {
        let (inputs, _, _) = read_frames(&sample_path(&prep, i, "inputs"))?;
        let (rain, _, _) = read_frames(&sample_path(&prep, i, "input_rain"))?;
        Ok(inputs
            .into_iter()
            .zip(rain)
            .map(|(radiance, rain)| TrainingPair { radiance, rain })
            .collect::<Vec<_>>())
    })?;
    let pairs: Vec<TrainingPair> = per_sample.into_iter().flatten().collect();
    if pairs.is_empty() {
        return Err(nowcast_core::Error::EmptyDataset.into());
    }
    let (h, w) = pairs[0].radiance.dims();
    cfg.arch.check_input(h, w)?;

    let dir = cfg.out.join(TRAIN_DIR);
    create_dir(&dir)?;
    let metrics_path = dir.join("metrics.jsonl");
    let file = fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut obs = FileObserver {
        metrics: BufWriter::new(file),
        metrics_path,
        last: dir.join("last_epoch.nwck"),
    };
    let ck = cgan::train(&pairs, cfg.arch.clone(), cfg.train.clone(), &mut obs)?;
    obs.metrics.flush().map_err(io_err(&obs.metrics_path))?;
    let out = checkpoint_path(cfg);
    if let Some(parent) = out.parent() {
        create_dir(parent)?;
    }
    cgan::write_checkpoint(&ck, &out)?;
    Ok(format!(
        "trained on {} pairs for {} steps; checkpoint {}",
        pairs.len(),
        ck.step,
        out.display()
    ))
}

pub fn cmd_predict(cfg: &RunConfig, emit_pgm: bool) -> Result<String> {
    cfg.validate()?;
    let ck_path = require_file("checkpoint", checkpoint_path(cfg))?;
    let ck = cgan::read_checkpoint(&ck_path)?;
    let manifest = read_manifest(&cfg.out)?;
    let flow = cfg.out.join(FLOW_DIR);
    for i in 0..manifest.samples {
        require_file("forecast stack", sample_path(&flow, i, "forecast"))?;
    }
    let p = &cfg.pipeline;
    let results = run_pool(cfg.workers, manifest.samples, |i| {
        let path = sample_path(&flow, i, "forecast");
        let (frames, t0, _) = read_frames(&path)?;
        let mut mm = Vec::with_capacity(frames.len());
        for (k, f) in frames.iter().enumerate() {
            let rain = ck
                .generate(f)
                .and_then(|g| denormalize(&g, p.rain_scale))
                .and_then(|g| crop_center(&g, p.native_size, p.native_size))
                .context(|| format!("sample {i} frame {k} ({})", path.display()))?;
            mm.push(rain);
        }
        let cum = accumulate_rain(&mm, p.dt_hours).context(|| format!("sample {i}"))?;
        Ok((bilinear_resample(&cum, p.resample_factor), t0))
    })?;

    let dir = cfg.out.join(PREDICT_DIR);
    create_dir(&dir)?;
    if emit_pgm {
        for (i, (g, _)) in results.iter().enumerate() {
            let hi = g.max_value().max(1e-6);
            write_pgm(
                g,
                (0.0, hi),
                dir.join(format!("sample_{i:04}_cumulative.pgm")),
            )?;
        }
    }
    let n = results.len();
    if n > 0 {
        let t0 = results[0].1;
        let grids = results.into_iter().map(|(g, _)| g).collect();
        write_grid_stack(
            &frames_stack(grids, t0, manifest.dt_seconds)?,
            dir.join("cumulative.nwg"),
        )?;
    }
    Ok(format!("predicted cumulative rain for {n} samples"))
}

pub fn cmd_eval(cfg: &RunConfig, pred: Option<PathBuf>, obs: Option<PathBuf>) -> Result<String> {
    cfg.validate()?;
    let pred = require_file(
        "prediction stack",
        pred.unwrap_or_else(|| cfg.out.join(PREDICT_DIR).join("cumulative.nwg")),
    )?;
    let obs = require_file(
        "observation stack",
        obs.unwrap_or_else(|| cfg.out.join(PREP_DIR).join("observed_cumulative.nwg")),
    )?;
    let (p, _, _) = read_frames(&pred)?;
    let (o, _, _) = read_frames(&obs)?;
    let report = evaluate_run(&p, &o, &cfg.pipeline, cfg.estimator)
        .context(|| format!("{} vs {}", pred.display(), obs.display()))?;
    let dir = cfg.out.join(EVAL_DIR);
    create_dir(&dir)?;
    write_text(&dir.join("report.json"), &report.to_json())?;
    Ok(format!(
        "mean CRPS {:.6} over {} samples",
        report.mean_crps, report.n_samples
    ))
}
