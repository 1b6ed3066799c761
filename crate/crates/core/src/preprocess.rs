//! Input preparation: channel averaging, channel correlation, Otsu cloud
//! segmentation, normalisation and sliding-window sequence construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    reflect_pad, replace_nonfinite, Grid2D, GridKind, GridStack, NonFinitePolicy, PipelineConfig,
};

/// Conventional names of the four infrared channels that are averaged.
pub const IR_LABELS: [&str; 4] = ["IR_097", "IR_108", "IR_120", "IR_134"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSelection {
    pub indices: Vec<usize>,
    pub labels: Vec<String>,
}

impl ChannelSelection {
    pub fn new(indices: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::BadSelection("no channels selected".into()));
        }
        if labels.len() != indices.len() {
            return Err(Error::BadSelection(format!(
                "{} labels for {} channels",
                labels.len(),
                indices.len()
            )));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::BadSelection(format!(
                "duplicate channel in {indices:?}"
            )));
        }
        Ok(ChannelSelection { indices, labels })
    }

    /// Channels 0..4 labelled IR_097, IR_108, IR_120, IR_134.
    pub fn infrared() -> Self {
        ChannelSelection {
            indices: (0..4).collect(),
            labels: IR_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn check(&self, channels: usize) -> Result<()> {
        if let Some(&bad) = self.indices.iter().find(|&&i| i >= channels) {
            return Err(Error::BadSelection(format!(
                "channel {bad} out of range for a {channels}-channel stack"
            )));
        }
        Ok(())
    }
}

pub fn channel_mean(stack: &GridStack, sel: &ChannelSelection) -> Result<GridStack> {
    sel.check(stack.channels())?;
    let n = sel.indices.len() as f64;
    let mut frames = Vec::with_capacity(stack.len());
    for frame in stack.frames() {
        let mut acc = vec![0f64; stack.height() * stack.width()];
        for &c in &sel.indices {
            for (a, &v) in acc.iter_mut().zip(frame[c].values()) {
                *a += v as f64;
            }
        }
        let values = acc.into_iter().map(|a| (a / n) as f32).collect();
        frames.push(vec![Grid2D::new(
            stack.height(),
            stack.width(),
            values,
            stack.kind(),
        )?]);
    }
    GridStack::new(
        frames,
        1,
        stack.height(),
        stack.width(),
        stack.kind(),
        stack.t0,
        stack.dt,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("correlation matrix serialises")
    }
}

/// Pearson coefficients between the selected channels, pooling every pixel
/// of every frame. Co-moments are accumulated in a single streaming pass.
pub fn pearson_correlation_matrix(
    stack: &GridStack,
    sel: &ChannelSelection,
) -> Result<CorrelationMatrix> {
    sel.check(stack.channels())?;
    let k = sel.indices.len();
    let n_pix = stack.height() * stack.width();
    if stack.len() * n_pix < 2 {
        return Err(Error::BadSelection(
            "need at least two samples per channel".into(),
        ));
    }
    let mut mean = vec![0f64; k];
    let mut comoment = vec![vec![0f64; k]; k];
    let mut count = 0f64;
    let mut delta = vec![0f64; k];
    for frame in stack.frames() {
        for p in 0..n_pix {
            count += 1.0;
            for (a, &c) in sel.indices.iter().enumerate() {
                delta[a] = frame[c].values()[p] as f64 - mean[a];
                mean[a] += delta[a] / count;
            }
            // second factor uses the updated mean
            for a in 0..k {
                for b in a..k {
                    let post = frame[sel.indices[b]].values()[p] as f64 - mean[b];
                    comoment[a][b] += delta[a] * post;
                }
            }
        }
    }
    for (a, label) in sel.labels.iter().enumerate() {
        if !(comoment[a][a] > 0.0) {
            return Err(Error::ConstantChannel(label.clone()));
        }
    }
    let mut values = vec![vec![0f64; k]; k];
    for a in 0..k {
        values[a][a] = 1.0;
        for b in a + 1..k {
            let r = comoment[a][b] / (comoment[a][a] * comoment[b][b]).sqrt();
            let r = r.clamp(-1.0, 1.0);
            values[a][b] = r;
            values[b][a] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels: sel.labels.clone(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub lo: f64,
    pub hi: f64,
}

impl Histogram {
    /// Uniform bins over `[lo, hi]`; values outside land in the end bins.
    pub fn build(values: &[f32], bins: usize, lo: f64, hi: f64) -> Self {
        let mut counts = vec![0u64; bins];
        let (b, span) = (bins as f64, hi - lo);
        for &v in values {
            // Multiply before dividing so values on a bin edge stay on it.
            let idx = ((v as f64 - lo) * b / span).floor();
            let idx = if idx < 0.0 {
                0
            } else {
                (idx as usize).min(bins - 1)
            };
            counts[idx] += 1;
        }
        Histogram { counts, lo, hi }
    }

    pub fn upper_edge(&self, bin: usize) -> f64 {
        self.lo + (bin + 1) as f64 * (self.hi - self.lo) / self.counts.len() as f64
    }
}

/// Between-class variance (up to the constant factor 1/N²) for a split with
/// `n0` samples of index-sum `s0` below and the rest above. Works on exact
/// integer moments so equal splits give bit-identical scores.
pub fn between_class_variance(n0: u64, s0: u64, n: u64, s: u64) -> f64 {
    let n1 = n - n0;
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let s1 = s - s0;
    let num = s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128;
    let num = num as f64;
    num * num / (n0 as f64 * n1 as f64)
}

/// Bin index of the best Otsu split, taking the floor midpoint of the first
/// contiguous plateau of maximal between-class variance.
pub fn otsu_bin(hist: &Histogram) -> usize {
    let n: u64 = hist.counts.iter().sum();
    let s: u64 = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u64 * c)
        .sum();
    let mut scores = Vec::with_capacity(hist.counts.len());
    let (mut n0, mut s0) = (0u64, 0u64);
    for (i, &c) in hist.counts.iter().enumerate() {
        n0 += c;
        s0 += i as u64 * c;
        scores.push(between_class_variance(n0, s0, n, s));
    }
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = scores.iter().position(|&v| v == best).unwrap_or(0);
    let end = start + scores[start..].iter().take_while(|&&v| v == best).count() - 1;
    (start + end) / 2
}

pub fn otsu_threshold(grid: &Grid2D, bins: usize) -> Result<f32> {
    let (lo, hi) = grid.finite_range().ok_or(Error::DegenerateHistogram)?;
    otsu_threshold_in_range(grid, bins, (lo, hi))
}

/// Otsu over an explicit histogram range instead of the data extent.
pub fn otsu_threshold_in_range(grid: &Grid2D, bins: usize, range: (f32, f32)) -> Result<f32> {
    let (lo, hi) = range;
    if bins < 2 || !(lo < hi) || !grid.is_finite() {
        return Err(Error::DegenerateHistogram);
    }
    if let Some((a, b)) = grid.finite_range() {
        if a == b {
            return Err(Error::DegenerateHistogram);
        }
    }
    let hist = Histogram::build(grid.values(), bins, lo as f64, hi as f64);
    Ok(hist.upper_edge(otsu_bin(&hist)) as f32)
}

/// Warm (cloud-free) pixels above `threshold` take the frame maximum.
pub fn mask_background(grid: &Grid2D, threshold: f32) -> Grid2D {
    let top = grid.max_value();
    grid.map(|v| if v > threshold { top } else { v })
}

pub fn normalize(grid: &Grid2D, scale: f32) -> Result<Grid2D> {
    let kind = match grid.kind() {
        GridKind::Radiance => GridKind::NormalizedRadiance,
        GridKind::RainRate => GridKind::NormalizedRain,
        found => {
            return Err(Error::WrongKind {
                expected: "radiance or rain-rate",
                found,
            })
        }
    };
    Ok(grid.map(|v| v / scale - 1.0).with_kind(kind))
}

pub fn denormalize(grid: &Grid2D, scale: f32) -> Result<Grid2D> {
    match grid.kind() {
        GridKind::NormalizedRadiance => Ok(grid
            .map(|v| (v + 1.0) * scale)
            .with_kind(GridKind::Radiance)),
        GridKind::NormalizedRain => Ok(grid
            .map(|v| ((v + 1.0) * scale).max(0.0))
            .with_kind(GridKind::RainRate)),
        found => Err(Error::WrongKind {
            expected: "normalized radiance or normalized rain",
            found,
        }),
    }
}

/// One training/inference unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    /// `input_len` normalised, masked, padded radiance frames.
    pub inputs: Vec<Grid2D>,
    /// `horizon` normalised, padded rain frames following the inputs.
    pub targets: Vec<Grid2D>,
    /// Rain frames co-timed with `inputs`, used to form training pairs.
    pub input_rain: Vec<Grid2D>,
    pub t0: f64,
}

#[derive(Debug, Clone)]
pub struct SequenceSet {
    pub samples: Vec<SequenceSample>,
    /// Set when the stacks were shorter than one window.
    pub too_short: bool,
    /// Frames whose Otsu histogram was degenerate and were left unmasked.
    pub unmasked_frames: Vec<usize>,
    /// (frame, channel) pairs with no finite radiance at all.
    pub degenerate_frames: Vec<(usize, usize)>,
}

pub fn window_count(frames: usize, input_len: usize, horizon: usize, stride: usize) -> usize {
    let need = input_len + horizon;
    if frames < need || stride == 0 {
        0
    } else {
        (frames - need) / stride + 1
    }
}

/// Radiance chain for one averaged frame: Otsu mask, normalise, pad.
/// Returns the prepared frame and whether masking was skipped.
pub fn prepare_radiance_frame(grid: &Grid2D, cfg: &PipelineConfig) -> Result<(Grid2D, bool)> {
    let (masked, skipped) = match otsu_threshold(grid, 256) {
        Ok(t) => (mask_background(grid, t), false),
        Err(Error::DegenerateHistogram) => (grid.clone(), true),
        Err(e) => return Err(e),
    };
    let norm = normalize(&masked, cfg.radiance_scale)?;
    Ok((reflect_pad(&norm, cfg.pad())?, skipped))
}

pub fn prepare_rain_frame(grid: &Grid2D, cfg: &PipelineConfig) -> Result<Grid2D> {
    let norm = normalize(grid, cfg.rain_scale)?;
    reflect_pad(&norm, cfg.pad())
}

pub fn make_sequences(
    radiance: &GridStack,
    rain: &GridStack,
    sel: &ChannelSelection,
    cfg: &PipelineConfig,
    stride: usize,
) -> Result<SequenceSet> {
    cfg.validate()?;
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    if radiance.t0 != rain.t0 || radiance.dt != rain.dt || radiance.len() != rain.len() {
        return Err(Error::Misaligned(format!(
            "radiance (t0 {}, dt {}, T {}) vs rain (t0 {}, dt {}, T {})",
            radiance.t0,
            radiance.dt,
            radiance.len(),
            rain.t0,
            rain.dt,
            rain.len()
        )));
    }
    for (name, s) in [("radiance", radiance), ("rain", rain)] {
        if (s.height(), s.width()) != (cfg.native_size, cfg.native_size) {
            return Err(Error::Misaligned(format!(
                "{name} frames are {}x{}, expected {n}x{n}",
                s.height(),
                s.width(),
                n = cfg.native_size
            )));
        }
    }
    if rain.channels() != 1 {
        return Err(Error::Misaligned(format!(
            "rain stack has {} channels, expected 1",
            rain.channels()
        )));
    }
    let count = window_count(radiance.len(), cfg.input_len, cfg.horizon, stride);
    if count == 0 {
        return Ok(SequenceSet {
            samples: Vec::new(),
            too_short: true,
            unmasked_frames: Vec::new(),
            degenerate_frames: Vec::new(),
        });
    }

    let rad = replace_nonfinite(radiance, NonFinitePolicy::MaxOfFrame);
    let averaged = channel_mean(&rad.stack, sel)?;
    let mut unmasked = Vec::new();
    let mut rad_frames = Vec::with_capacity(averaged.len());
    for t in 0..averaged.len() {
        let (g, skipped) = prepare_radiance_frame(averaged.grid(t, 0), cfg)?;
        if skipped {
            unmasked.push(t);
        }
        rad_frames.push(g);
    }
    let rain_clean = replace_nonfinite(rain, NonFinitePolicy::Zero).stack;
    let rain_frames = (0..rain_clean.len())
        .map(|t| prepare_rain_frame(rain_clean.grid(t, 0), cfg))
        .collect::<Result<Vec<_>>>()?;

    let samples = (0..count)
        .map(|i| {
            let s = i * stride;
            let mid = s + cfg.input_len;
            SequenceSample {
                inputs: rad_frames[s..mid].to_vec(),
                targets: rain_frames[mid..mid + cfg.horizon].to_vec(),
                input_rain: rain_frames[s..mid].to_vec(),
                t0: radiance.time_of(s),
            }
        })
        .collect();
    Ok(SequenceSet {
        samples,
        too_short: false,
        unmasked_frames: unmasked,
        degenerate_frames: rad.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(h: usize, w: usize, v: &[f32]) -> Grid2D {
        Grid2D::new(h, w, v.to_vec(), GridKind::Radiance).unwrap()
    }

    fn multi(frames: Vec<Vec<Grid2D>>) -> GridStack {
        let (c, h, w) = (frames[0].len(), frames[0][0].height(), frames[0][0].width());
        GridStack::new(frames, c, h, w, GridKind::Radiance, 0.0, 900.0).unwrap()
    }

    #[test]
    fn channel_mean_cases() {
        let s = multi(vec![vec![
            grid(1, 1, &[100.0]),
            grid(1, 1, &[200.0]),
            grid(1, 1, &[300.0]),
            grid(1, 1, &[400.0]),
        ]]);
        let m = channel_mean(&s, &ChannelSelection::infrared()).unwrap();
        assert_eq!(m.channels(), 1);
        assert_eq!(m.grid(0, 0).values(), &[250.0]);

        let same = grid(1, 3, &[1.0, 2.0, 3.0]);
        let s = multi(vec![vec![same.clone(); 4]]);
        let m = channel_mean(&s, &ChannelSelection::infrared()).unwrap();
        assert_eq!(m.grid(0, 0), &same);

        let one = ChannelSelection::new(vec![2], vec!["c".into()]).unwrap();
        let s = multi(vec![vec![
            grid(1, 2, &[1.0, 2.0]),
            grid(1, 2, &[3.0, 4.0]),
            grid(1, 2, &[5.0, 6.0]),
        ]]);
        assert_eq!(
            channel_mean(&s, &one).unwrap().grid(0, 0).values(),
            &[5.0, 6.0]
        );

        let bad = ChannelSelection::new(vec![7], vec!["c".into()]).unwrap();
        assert!(matches!(
            channel_mean(&s, &bad),
            Err(Error::BadSelection(_))
        ));
        assert!(ChannelSelection::new(vec![1, 1], vec!["a".into(), "b".into()]).is_err());
        assert!(ChannelSelection::new(vec![], vec![]).is_err());
    }

    #[test]
    fn correlation_diagonal_and_anticorrelation() {
        let x = [1.0f32, 2.0, 5.0, 3.0];
        let neg: Vec<f32> = x.iter().map(|v| -v).collect();
        let s = multi(vec![vec![grid(1, 4, &x), grid(1, 4, &neg)]]);
        let sel = ChannelSelection::new(vec![0, 1], vec!["x".into(), "-x".into()]).unwrap();
        let m = pearson_correlation_matrix(&s, &sel).unwrap();
        assert_eq!(m.values[0][0], 1.0);
        assert_eq!(m.values[1][1], 1.0);
        assert!((m.values[0][1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_matches_two_pass_formula() {
        // x=[1,2,3,4], y=[2,4,6,8.5]: two-pass Pearson computed by hand.
        // mx=2.5, my=5.125; dx=[-1.5,-.5,.5,1.5]; dy=[-3.125,-1.125,.875,3.375]
        // sxy = 4.6875+.5625+.4375+5.0625 = 10.75; sxx = 5; syy = 9.765625+1.265625+.765625+11.390625 = 23.1875
        let expected = 10.75 / (5.0f64 * 23.1875).sqrt();
        let s = multi(vec![vec![
            grid(1, 4, &[1.0, 2.0, 3.0, 4.0]),
            grid(1, 4, &[2.0, 4.0, 6.0, 8.5]),
        ]]);
        let sel = ChannelSelection::new(vec![0, 1], vec!["x".into(), "y".into()]).unwrap();
        let m = pearson_correlation_matrix(&s, &sel).unwrap();
        assert!(
            (m.values[0][1] - expected).abs() < 1e-12,
            "{}",
            m.values[0][1]
        );
    }

    #[test]
    fn correlation_rejects_constant_channel() {
        let s = multi(vec![vec![
            grid(1, 3, &[1.0, 2.0, 3.0]),
            grid(1, 3, &[4.0; 3]),
        ]]);
        let sel = ChannelSelection::new(vec![0, 1], vec!["a".into(), "flat".into()]).unwrap();
        assert!(matches!(
            pearson_correlation_matrix(&s, &sel),
            Err(Error::ConstantChannel(l)) if l == "flat"
        ));
    }

    #[test]
    fn correlation_json_layout() {
        let m = CorrelationMatrix {
            labels: vec!["a".into(), "b".into()],
            values: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
        };
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["labels"][1], "b");
        assert_eq!(v["values"][0][1], 0.5);
    }

    #[test]
    fn otsu_two_valued_plateau_midpoint() {
        let mut v = vec![0.0f32; 8];
        v.extend([200.0f32; 8]);
        let g = grid(4, 4, &v);
        let t = otsu_threshold_in_range(&g, 256, (0.0, 255.0)).unwrap();
        // bin 99's upper edge: 100 * 255 / 256
        assert_eq!(t, (100.0f64 * 255.0 / 256.0) as f32);
    }

    #[test]
    fn otsu_constant_is_degenerate() {
        let g = grid(2, 2, &[3.0; 4]);
        assert!(matches!(
            otsu_threshold(&g, 256),
            Err(Error::DegenerateHistogram)
        ));
    }

    #[test]
    fn mask_background_cases() {
        let g = grid(1, 4, &[100.0, 250.0, 180.0, 300.0]);
        assert_eq!(
            mask_background(&g, 200.0).values(),
            &[100.0, 300.0, 180.0, 300.0]
        );
        assert_eq!(mask_background(&g, 400.0), g);
        assert_eq!(mask_background(&g, 50.0).values(), &[300.0; 4]);
    }

    #[test]
    fn normalize_values() {
        let r = grid(1, 3, &[0.0, 150.0, 300.0]);
        let n = normalize(&r, 150.0).unwrap();
        assert_eq!(n.values(), &[-1.0, 0.0, 1.0]);
        assert_eq!(n.kind(), GridKind::NormalizedRadiance);
        let rain = Grid2D::new(1, 2, vec![5.0, 0.0], GridKind::RainRate).unwrap();
        let n = normalize(&rain, 5.0).unwrap();
        assert_eq!(n.values(), &[0.0, -1.0]);
        assert!(matches!(normalize(&n, 5.0), Err(Error::WrongKind { .. })));
    }

    #[test]
    fn denormalize_values() {
        let n = Grid2D::new(1, 2, vec![0.0, -1.2], GridKind::NormalizedRain).unwrap();
        assert_eq!(denormalize(&n, 5.0).unwrap().values(), &[5.0, 0.0]);
        let r = Grid2D::new(1, 1, vec![1.0], GridKind::NormalizedRadiance).unwrap();
        assert_eq!(denormalize(&r, 150.0).unwrap().values(), &[300.0]);
        assert!(denormalize(&grid(1, 1, &[0.0]), 150.0).is_err());
    }

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            native_size: 8,
            padded_size: 12,
            ..PipelineConfig::default()
        }
    }

    fn stacks(t: usize, cfg: &PipelineConfig) -> (GridStack, GridStack) {
        let n = cfg.native_size;
        let rad: Vec<Vec<Grid2D>> = (0..t)
            .map(|k| {
                (0..4)
                    .map(|c| {
                        Grid2D::from_fn(n, n, GridKind::Radiance, |r, col| {
                            200.0 + (r * n + col) as f32 + k as f32 + c as f32
                        })
                    })
                    .collect()
            })
            .collect();
        let rain: Vec<Vec<Grid2D>> = (0..t)
            .map(|k| vec![Grid2D::filled(n, n, k as f32, GridKind::RainRate)])
            .collect();
        (
            GridStack::new(rad, 4, n, n, GridKind::Radiance, 0.0, 900.0).unwrap(),
            GridStack::new(rain, 1, n, n, GridKind::RainRate, 0.0, 900.0).unwrap(),
        )
    }

    #[test]
    fn sequence_counts() {
        let cfg = small_cfg();
        for (t, expected) in [(20, 1), (21, 2), (19, 0)] {
            let (rad, rain) = stacks(t, &cfg);
            let set = make_sequences(&rad, &rain, &ChannelSelection::infrared(), &cfg, 1).unwrap();
            assert_eq!(set.samples.len(), expected, "T = {t}");
            assert_eq!(set.too_short, expected == 0);
        }
    }

    #[test]
    fn sequence_contents() {
        let cfg = small_cfg();
        let (rad, rain) = stacks(21, &cfg);
        let set = make_sequences(&rad, &rain, &ChannelSelection::infrared(), &cfg, 1).unwrap();
        let s = &set.samples[1];
        assert_eq!(s.inputs.len(), 4);
        assert_eq!(s.targets.len(), 16);
        assert_eq!(s.t0, 900.0);
        assert!(s.inputs.iter().all(|g| g.dims() == (12, 12)));
        // target 0 of window 1 is frame 5: rain 5 mm/h -> 0.0 normalised
        assert!(s.targets[0].values().iter().all(|&v| v == 0.0));
        assert_eq!(s.input_rain[0].values()[0], 1.0 / 5.0 - 1.0);
        assert_eq!(s.inputs[0].kind(), GridKind::NormalizedRadiance);
    }

    #[test]
    fn sequences_reject_misaligned() {
        let cfg = small_cfg();
        let (rad, mut rain) = stacks(20, &cfg);
        rain.t0 = 60.0;
        assert!(matches!(
            make_sequences(&rad, &rain, &ChannelSelection::infrared(), &cfg, 1),
            Err(Error::Misaligned(_))
        ));
    }

    proptest! {
        #[test]
        fn window_count_formula(t in 0usize..=64, stride in 1usize..=8) {
            let brute = (0..=t).filter(|s| s % stride == 0 && s + 20 <= t).count();
            prop_assert_eq!(window_count(t, 4, 16, stride), brute);
        }

        #[test]
        fn mask_is_idempotent(v in proptest::collection::vec(0f32..300.0, 16), t in 0f32..300.0) {
            let g = grid(4, 4, &v);
            let once = mask_background(&g, t);
            prop_assert_eq!(mask_background(&once, t), once);
        }

        #[test]
        fn normalize_round_trip(v in proptest::collection::vec(0f32..1000.0, 1..32)) {
            let g = Grid2D::new(1, v.len(), v.clone(), GridKind::RainRate).unwrap();
            let back = denormalize(&normalize(&g, 5.0).unwrap(), 5.0).unwrap();
            for (a, b) in v.iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
            }
        }

        #[test]
        fn otsu_shift_moves_threshold(v in proptest::collection::vec(0u8..=200, 64), c in 0u8..50) {
            let a: Vec<f32> = v.iter().map(|&x| x as f32).collect();
            prop_assume!(a.iter().any(|&x| x != a[0]));
            let b: Vec<f32> = a.iter().map(|&x| x + c as f32).collect();
            let ta = otsu_threshold(&grid(8, 8, &a), 256).unwrap();
            let tb = otsu_threshold(&grid(8, 8, &b), 256).unwrap();
            prop_assert!((tb - ta - c as f32).abs() < 1e-3);
        }
    }
}
