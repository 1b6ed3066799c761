//! Raster data model, the NWG1 container, and the small raster utilities
//! (non-finite sanitisation, reflection padding, cropping, PGM output).
//!
//! NWG1 layout, little-endian throughout:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `NWG1`                            |
//! | 4      | 1    | version (1)                             |
//! | 5      | 1    | kind code, see [`GridKind::code`]       |
//! | 6      | 2    | reserved, zero                          |
//! | 8      | 16   | `u32` T, C, H, W                        |
//! | 24     | 8    | `f64` t0, epoch seconds                 |
//! | 32     | 8    | `f64` dt, seconds                       |
//! | 40     | ...  | T·C·H·W `f32`, frame, channel, row-major |

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NWG1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridKind {
    Radiance,
    RainRate,
    NormalizedRadiance,
    NormalizedRain,
    Flow,
}

impl GridKind {
    pub fn code(self) -> u8 {
        match self {
            GridKind::Radiance => 0,
            GridKind::RainRate => 1,
            GridKind::NormalizedRadiance => 2,
            GridKind::NormalizedRain => 3,
            GridKind::Flow => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => GridKind::Radiance,
            1 => GridKind::RainRate,
            2 => GridKind::NormalizedRadiance,
            3 => GridKind::NormalizedRain,
            4 => GridKind::Flow,
            _ => return None,
        })
    }
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GridKind::Radiance => "radiance",
            GridKind::RainRate => "rain-rate",
            GridKind::NormalizedRadiance => "normalized-radiance",
            GridKind::NormalizedRain => "normalized-rain",
            GridKind::Flow => "flow",
        };
        f.write_str(name)
    }
}

/// A single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    height: usize,
    width: usize,
    values: Vec<f32>,
    kind: GridKind,
}

impl Grid2D {
    pub fn new(height: usize, width: usize, values: Vec<f32>, kind: GridKind) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::SizeMismatch(format!(
                "{} values for a {height}x{width} grid",
                values.len()
            )));
        }
        Ok(Grid2D {
            height,
            width,
            values,
            kind,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32, kind: GridKind) -> Self {
        Grid2D {
            height,
            width,
            values: vec![value; height * width],
            kind,
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        kind: GridKind,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Grid2D {
            height,
            width,
            values,
            kind,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: GridKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.values[row * self.width + col] = v;
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Grid2D {
        Grid2D {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| f(v)).collect(),
            kind: self.kind,
        }
    }

    /// Minimum and maximum over finite values; `None` if there are none.
    pub fn finite_range(&self) -> Option<(f32, f32)> {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    pub fn max_value(&self) -> f32 {
        self.values
            .iter()
            .copied()
            .fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_dims(&self, other: &Grid2D) -> bool {
        self.dims() == other.dims()
    }
}

/// T frames of C co-registered channels sharing one size and kind.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStack {
    frames: Vec<Vec<Grid2D>>,
    channels: usize,
    height: usize,
    width: usize,
    kind: GridKind,
    pub t0: f64,
    pub dt: f64,
}

pub const DEFAULT_DT_SECONDS: f64 = 900.0;

impl GridStack {
    /// Builds a stack, checking that every frame carries `channels` grids of
    /// identical size and kind. An empty frame list takes its geometry from
    /// the explicit arguments.
    pub fn new(
        frames: Vec<Vec<Grid2D>>,
        channels: usize,
        height: usize,
        width: usize,
        kind: GridKind,
        t0: f64,
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        for (t, frame) in frames.iter().enumerate() {
            if frame.len() != channels {
                return Err(Error::SizeMismatch(format!(
                    "frame {t} has {} channels, expected {channels}",
                    frame.len()
                )));
            }
            for (c, g) in frame.iter().enumerate() {
                if g.dims() != (height, width) || g.kind != kind {
                    return Err(Error::SizeMismatch(format!(
                        "frame {t} channel {c} is {}x{} {}, expected {height}x{width} {kind}",
                        g.height, g.width, g.kind
                    )));
                }
            }
        }
        Ok(GridStack {
            frames,
            channels,
            height,
            width,
            kind,
            t0,
            dt,
        })
    }

    /// Single-channel stack from a list of grids.
    pub fn from_grids(grids: Vec<Grid2D>, t0: f64, dt: f64) -> Result<Self> {
        let Some(first) = grids.first() else {
            return Err(Error::SizeMismatch("no grids given".into()));
        };
        let (h, w, kind) = (first.height, first.width, first.kind);
        let frames = grids.into_iter().map(|g| vec![g]).collect();
        GridStack::new(frames, 1, h, w, kind, t0, dt)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn frames(&self) -> &[Vec<Grid2D>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[Grid2D] {
        &self.frames[t]
    }

    pub fn grid(&self, t: usize, c: usize) -> &Grid2D {
        &self.frames[t][c]
    }

    /// Channel 0 of every frame, cloned.
    pub fn channel(&self, c: usize) -> Vec<Grid2D> {
        self.frames.iter().map(|f| f[c].clone()).collect()
    }

    pub fn into_frames(self) -> Vec<Vec<Grid2D>> {
        self.frames
    }

    /// Epoch seconds of frame `t`.
    pub fn time_of(&self, t: usize) -> f64 {
        self.t0 + self.dt * t as f64
    }

    pub fn map_grids(&self, mut f: impl FnMut(&Grid2D) -> Grid2D) -> Result<GridStack> {
        let frames: Vec<Vec<Grid2D>> = self
            .frames
            .iter()
            .map(|fr| fr.iter().map(&mut f).collect())
            .collect();
        let (h, w, kind) = match frames.first().and_then(|f| f.first()) {
            Some(g) => (g.height, g.width, g.kind),
            None => (self.height, self.width, self.kind),
        };
        GridStack::new(frames, self.channels, h, w, kind, self.t0, self.dt)
    }

    pub fn payload_len(&self) -> usize {
        self.frames.len() * self.channels * self.height * self.width * 4
    }

    /// Serialises the stack in NWG1 layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload_len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.kind.code());
        out.extend_from_slice(&[0, 0]);
        for n in [self.frames.len(), self.channels, self.height, self.width] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.t0.to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        for frame in &self.frames {
            for g in frame {
                for v in &g.values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    /// Parses NWG1 bytes; `path` is only used for error context.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            let mut found = [0u8; 4];
            let n = bytes.len().min(4);
            found[..n].copy_from_slice(&bytes[..n]);
            return Err(Error::BadMagic {
                path: path.into(),
                found,
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload {
                path: path.into(),
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.into(),
                version: bytes[4],
            });
        }
        let kind = GridKind::from_code(bytes[5]).ok_or(Error::UnknownKind {
            path: path.into(),
            code: bytes[5],
        })?;
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (t, c, h, w) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
        let t0 = f64_at(24);
        let dt = f64_at(32);

        let expected = (t as u64) * (c as u64) * (h as u64) * (w as u64) * 4;
        let found = (bytes.len() - HEADER_LEN) as u64;
        if expected != found {
            return Err(Error::TruncatedPayload {
                path: path.into(),
                expected,
                found,
            });
        }

        let mut floats = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
        let mut frames = Vec::with_capacity(t);
        for _ in 0..t {
            let mut frame = Vec::with_capacity(c);
            for _ in 0..c {
                let values: Vec<f32> = floats.by_ref().take(h * w).collect();
                frame.push(Grid2D {
                    height: h,
                    width: w,
                    values,
                    kind,
                });
            }
            frames.push(frame);
        }
        GridStack::new(frames, c, h, w, kind, t0, dt).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

pub fn read_grid_stack(path: impl AsRef<Path>) -> Result<GridStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    GridStack::from_bytes(&bytes, path)
}

pub fn write_grid_stack(stack: &GridStack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, stack.to_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonFinitePolicy {
    /// Substitute the frame's (per channel) largest finite value.
    MaxOfFrame,
    Zero,
}

#[derive(Debug, Clone)]
pub struct Sanitized {
    pub stack: GridStack,
    /// (frame, channel) pairs that had no finite value under `MaxOfFrame`
    /// and were zero-filled instead.
    pub degenerate: Vec<(usize, usize)>,
    pub replaced: usize,
}

/// Replaces NaN and ±∞ in a single grid. Returns the number replaced and
/// whether the `MaxOfFrame` fallback to zero was needed.
pub fn replace_nonfinite_grid(grid: &Grid2D, policy: NonFinitePolicy) -> (Grid2D, usize, bool) {
    let (fill, degenerate) = match policy {
        NonFinitePolicy::Zero => (0.0, false),
        NonFinitePolicy::MaxOfFrame => match grid.finite_range() {
            Some((_, hi)) => (hi, false),
            None => (0.0, true),
        },
    };
    let replaced = grid.values.iter().filter(|v| !v.is_finite()).count();
    let out = grid.map(|v| if v.is_finite() { v } else { fill });
    (out, replaced, degenerate)
}

pub fn replace_nonfinite(stack: &GridStack, policy: NonFinitePolicy) -> Sanitized {
    let mut degenerate = Vec::new();
    let mut replaced = 0;
    let frames = stack
        .frames
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            frame
                .iter()
                .enumerate()
                .map(|(c, g)| {
                    let (out, n, deg) = replace_nonfinite_grid(g, policy);
                    replaced += n;
                    if deg {
                        degenerate.push((t, c));
                    }
                    out
                })
                .collect()
        })
        .collect();
    Sanitized {
        stack: GridStack {
            frames,
            ..stack.clone_header()
        },
        degenerate,
        replaced,
    }
}

impl GridStack {
    fn clone_header(&self) -> GridStack {
        GridStack {
            frames: Vec::new(),
            channels: self.channels,
            height: self.height,
            width: self.width,
            kind: self.kind,
            t0: self.t0,
            dt: self.dt,
        }
    }
}

/// Mirror index without repeating the edge sample: -1 -> 1, n -> n-2.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

pub fn reflect_pad(grid: &Grid2D, pad: usize) -> Result<Grid2D> {
    if pad == 0 {
        return Ok(grid.clone());
    }
    if pad >= grid.height.min(grid.width) {
        return Err(Error::PadTooLarge {
            pad,
            height: grid.height,
            width: grid.width,
        });
    }
    let (h, w) = (grid.height + 2 * pad, grid.width + 2 * pad);
    let p = pad as isize;
    Ok(Grid2D::from_fn(h, w, grid.kind, |r, c| {
        let sr = mirror(r as isize - p, grid.height);
        let sc = mirror(c as isize - p, grid.width);
        grid.get(sr, sc)
    }))
}

pub fn crop_center(grid: &Grid2D, target_h: usize, target_w: usize) -> Result<Grid2D> {
    let bad = || Error::BadTarget {
        height: grid.height,
        width: grid.width,
        target_h,
        target_w,
    };
    if target_h > grid.height
        || target_w > grid.width
        || !(grid.height - target_h).is_multiple_of(2)
        || !(grid.width - target_w).is_multiple_of(2)
    {
        return Err(bad());
    }
    let (r0, c0) = ((grid.height - target_h) / 2, (grid.width - target_w) / 2);
    Ok(Grid2D::from_fn(target_h, target_w, grid.kind, |r, c| {
        grid.get(r + r0, c + c0)
    }))
}

/// Maps a value to an 8-bit grey level over `[lo, hi]`.
pub fn grey_level(v: f32, lo: f32, hi: f32) -> u8 {
    let t = ((v as f64 - lo as f64) / (hi as f64 - lo as f64)).clamp(0.0, 1.0);
    if t.is_nan() {
        return 0;
    }
    (255.0 * t).round() as u8
}

pub fn pgm_bytes(grid: &Grid2D, lo: f32, hi: f32) -> Result<Vec<u8>> {
    if !(lo < hi) {
        return Err(Error::BadRange { lo, hi });
    }
    let mut out = format!("P5\n{} {}\n255\n", grid.width, grid.height).into_bytes();
    out.extend(grid.values.iter().map(|&v| grey_level(v, lo, hi)));
    Ok(out)
}

pub fn write_pgm(grid: &Grid2D, range: (f32, f32), path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = pgm_bytes(grid, range.0, range.1)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Scalar constants of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub radiance_scale: f32,
    pub rain_scale: f32,
    pub input_len: usize,
    pub horizon: usize,
    pub native_size: usize,
    pub padded_size: usize,
    pub resample_factor: usize,
    pub block_size: usize,
    pub dt_hours: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            radiance_scale: 150.0,
            rain_scale: 5.0,
            input_len: 4,
            horizon: 16,
            native_size: 252,
            padded_size: 256,
            resample_factor: 6,
            block_size: 32,
            dt_hours: 0.25,
        }
    }
}

impl PipelineConfig {
    pub fn pad(&self) -> usize {
        (self.padded_size - self.native_size) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.padded_size < self.native_size + 2
            || !(self.padded_size - self.native_size).is_multiple_of(2)
        {
            return err(format!(
                "padded_size {} - native_size {} must be even and >= 2",
                self.padded_size, self.native_size
            ));
        }
        if self.horizon < 1 {
            return err("horizon must be >= 1".into());
        }
        if self.input_len < 2 {
            return err("input_len must be >= 2".into());
        }
        if !(self.radiance_scale > 0.0 && self.rain_scale > 0.0) {
            return err("normalisation scales must be positive".into());
        }
        if self.resample_factor < 1 || self.block_size < 1 {
            return err("resample_factor and block_size must be >= 1".into());
        }
        if !(self.dt_hours > 0.0) {
            return err("dt_hours must be positive".into());
        }
        Ok(())
    }
}
