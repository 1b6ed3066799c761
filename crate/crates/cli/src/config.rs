//! Run configuration: defaults, overridden by a flat `key = value` file,
//! overridden in turn by command-line flags.
//!
//! ```text
//! # comments start with '#'
//! paths.radiance = data/radiance.nwg
//! pipeline.native_size = 252
//! flow.lk_window = 15
//! flow.dog_scales = 2, 4, 8
//! train.epochs = 200
//! model.profile = desk
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nowcast_core::cgan::{GanArchitecture, TrainConfig};
use nowcast_core::eval::CrpsEstimator;
use nowcast_core::grid::PipelineConfig;
use nowcast_core::optflow::{FlowParams, RbfWidth};
use nowcast_core::preprocess::ChannelSelection;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub radiance: Option<PathBuf>,
    pub rain: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub channels: ChannelSelection,
    pub pipeline: PipelineConfig,
    /// Offset in frames between consecutive samples.
    pub stride: usize,
    pub flow: FlowParams,
    pub steps: usize,
    pub train: TrainConfig,
    pub arch: GanArchitecture,
    pub estimator: CrpsEstimator,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            radiance: None,
            rain: None,
            checkpoint: None,
            out: PathBuf::from("nowcast-run"),
            channels: ChannelSelection::infrared(),
            pipeline: PipelineConfig::default(),
            stride: 1,
            flow: FlowParams::default(),
            steps: 16,
            train: TrainConfig::default(),
            arch: GanArchitecture::default(),
            estimator: CrpsEstimator::Nrg,
            workers: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| CliError::ConfigValue {
        key: key.to_string(),
        message: format!("cannot parse {value:?}"),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    /// Defaults overridden by the file at `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, &path.display().to_string(), base)
    }

    pub fn from_text(text: &str, origin: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut labels: Option<Vec<String>> = None;
        let mut indices: Option<Vec<usize>> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::ConfigSyntax {
                    origin: origin.to_string(),
                    line: n + 1,
                    message: format!("expected `key = value`, got {line:?}"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "channels.indices" => indices = Some(parse_list(key, value)?),
                "channels.labels" => {
                    labels = Some(value.split(',').map(|s| s.trim().to_string()).collect())
                }
                _ => cfg.set(key, value, base).map_err(|e| match e {
                    CliError::ConfigValue { key, message } => CliError::ConfigSyntax {
                        origin: origin.to_string(),
                        line: n + 1,
                        message: format!("{key}: {message}"),
                    },
                    other => other,
                })?,
            }
        }
        if indices.is_some() || labels.is_some() {
            let idx = indices.unwrap_or_else(|| cfg.channels.indices.clone());
            let lab = labels.unwrap_or_else(|| idx.iter().map(|i| format!("ch{i}")).collect());
            cfg.channels = ChannelSelection::new(idx, lab)?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || base.join(value);
        let p = &mut self.pipeline;
        let f = &mut self.flow;
        let t = &mut self.train;
        let a = &mut self.arch;
        match key {
            "seed" => t.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "paths.radiance" => self.radiance = Some(path()),
            "paths.rain" => self.rain = Some(path()),
            "paths.checkpoint" => self.checkpoint = Some(path()),
            "paths.out" => self.out = path(),

            "pipeline.radiance_scale" => p.radiance_scale = parse(key, value)?,
            "pipeline.rain_scale" => p.rain_scale = parse(key, value)?,
            "pipeline.input_len" => p.input_len = parse(key, value)?,
            "pipeline.horizon" => p.horizon = parse(key, value)?,
            "pipeline.native_size" => p.native_size = parse(key, value)?,
            "pipeline.padded_size" => p.padded_size = parse(key, value)?,
            "pipeline.resample_factor" => p.resample_factor = parse(key, value)?,
            "pipeline.block_size" | "eval.block" => p.block_size = parse(key, value)?,
            "pipeline.dt_hours" => p.dt_hours = parse(key, value)?,
            "pipeline.stride" => self.stride = parse(key, value)?,

            "flow.steps" => self.steps = parse(key, value)?,
            "flow.pyramid_levels" => f.pyramid_levels = parse(key, value)?,
            "flow.lk_window" => f.lk_window = parse(key, value)?,
            "flow.min_eigen" => f.min_eigen = parse(key, value)?,
            "flow.max_iters" => f.max_iters = parse(key, value)?,
            "flow.epsilon" => f.epsilon = parse(key, value)?,
            "flow.dog_scales" => f.dog_scales = parse_list(key, value)?,
            "flow.blob_threshold" => f.blob_threshold = parse(key, value)?,
            "flow.rbf_width" => {
                f.rbf_width = if value == "median" {
                    RbfWidth::MedianPairwise
                } else {
                    RbfWidth::Fixed(parse(key, value)?)
                }
            }
            "flow.rbf_ridge" => f.rbf_ridge = parse(key, value)?,

            "train.epochs" => t.epochs = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.adam_beta1" => t.adam_beta1 = parse(key, value)?,
            "train.adam_beta2" => t.adam_beta2 = parse(key, value)?,
            "train.adam_eps" => t.adam_eps = parse(key, value)?,
            "train.lr_max" => t.lr_max = parse(key, value)?,
            "train.lr_min" => t.lr_min = parse(key, value)?,
            "train.lr_cycle_steps" => t.lr_cycle_steps = parse(key, value)?,
            "train.lambda_pixel" => t.lambda_pixel = parse(key, value)?,
            "train.lambda_perceptual" => t.lambda_perceptual = parse(key, value)?,

            "model.profile" => match value {
                "full" => *a = GanArchitecture::default(),
                "desk" => *a = GanArchitecture::desk(),
                _ => {
                    return Err(CliError::ConfigValue {
                        key: key.into(),
                        message: format!("unknown profile {value:?} (full|desk)"),
                    })
                }
            },
            "model.encoder_widths" => a.encoder_widths = parse_list(key, value)?,
            "model.bottleneck_dilations" => a.bottleneck_dilations = parse_list(key, value)?,
            "model.disc_widths" => a.disc_widths = parse_list(key, value)?,
            "model.leaky_slope" => a.leaky_slope = parse(key, value)?,
            "model.init_std" => a.init_std = parse(key, value)?,

            "eval.estimator" => {
                self.estimator =
                    value
                        .parse()
                        .map_err(|e: nowcast_core::Error| CliError::ConfigValue {
                            key: key.into(),
                            message: e.to_string(),
                        })?
            }
            _ => {
                return Err(CliError::ConfigValue {
                    key: key.into(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Checks every section; called before any output is written.
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.flow.validate()?;
        self.train.validate()?;
        self.arch.validate()?;
        if self.stride == 0 {
            return Err(CliError::Invalid("pipeline.stride must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Invalid("workers must be >= 1".into()));
        }
        if self.pipeline.block_size == 0 {
            return Err(CliError::Invalid("block size must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults() {
        let text = "\
# run
paths.radiance = in/rad.nwg
flow.lk_window = 21   # wider
flow.dog_scales = 1.5, 3
flow.rbf_width = 12.5
train.epochs = 3
model.profile = desk
eval.estimator = fair
channels.indices = 1, 2
channels.labels = IR_108, IR_120
";
        let c = RunConfig::from_text(text, "run.cfg", Path::new("/base")).unwrap();
        assert_eq!(c.radiance, Some(PathBuf::from("/base/in/rad.nwg")));
        assert_eq!(c.flow.lk_window, 21);
        assert_eq!(c.flow.dog_scales, vec![1.5, 3.0]);
        assert_eq!(c.flow.rbf_width, RbfWidth::Fixed(12.5));
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.arch, GanArchitecture::desk());
        assert_eq!(c.estimator, CrpsEstimator::Fair);
        assert_eq!(c.channels.indices, vec![1, 2]);
        assert_eq!(c.pipeline, PipelineConfig::default());
    }

    #[test]
    fn errors_name_the_line() {
        let err =
            RunConfig::from_text("seed = 1\nflow.lk_window = wide\n", "a.cfg", Path::new("."))
                .unwrap_err();
        assert!(err.to_string().starts_with("a.cfg:2:"), "{err}");
        let err = RunConfig::from_text("bogus.key = 1\n", "a.cfg", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("bogus.key"), "{err}");
        assert!(RunConfig::from_text("no equals sign\n", "a.cfg", Path::new(".")).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.flow.lk_window = 4;
        assert!(c.validate().is_err());
        let c = RunConfig {
            workers: 0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
