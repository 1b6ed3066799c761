//! Scoring: rain accumulation, resampling to the observation grid, block
//! averaging and the empirical CRPS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridKind, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrpsEstimator {
    Nrg,
    Fair,
}

impl std::str::FromStr for CrpsEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nrg" => Ok(CrpsEstimator::Nrg),
            "fair" => Ok(CrpsEstimator::Fair),
            other => Err(Error::Config(format!("unknown CRPS estimator {other:?}"))),
        }
    }
}

/// Cumulative depth (mm) from rain-rate frames (mm/h) spaced `dt_hours`.
pub fn accumulate_rain(frames: &[Grid2D], dt_hours: f64) -> Result<Grid2D> {
    let Some(first) = frames.first() else {
        return Err(Error::SizeMismatch("no frames to accumulate".into()));
    };
    let (h, w) = first.dims();
    let mut acc = vec![0f64; h * w];
    for (i, f) in frames.iter().enumerate() {
        if f.dims() != (h, w) {
            return Err(Error::SizeMismatch(format!(
                "frame {i} is {:?}, expected {:?}",
                f.dims(),
                (h, w)
            )));
        }
        for (a, &v) in acc.iter_mut().zip(f.values()) {
            *a += v as f64 * dt_hours;
        }
    }
    Grid2D::new(
        h,
        w,
        acc.into_iter().map(|v| v as f32).collect(),
        GridKind::RainRate,
    )
}

/// Upsamples by an integer factor. Output pixel `i` samples input
/// coordinate `(i + 0.5) / factor - 0.5`, clamped to the grid.
pub fn bilinear_resample(grid: &Grid2D, factor: usize) -> Grid2D {
    let factor = factor.max(1);
    if factor == 1 {
        return grid.clone();
    }
    let (h, w) = grid.dims();
    let f = factor as f64;
    let src = |o: usize, n: usize| -> (usize, usize, f64) {
        let x = ((o as f64 + 0.5) / f - 0.5).clamp(0.0, (n - 1) as f64);
        let x0 = x.floor() as usize;
        let x1 = (x0 + 1).min(n - 1);
        (x0, x1, x - x0 as f64)
    };
    let cols: Vec<_> = (0..w * factor).map(|c| src(c, w)).collect();
    let mut out = Vec::with_capacity(h * w * factor * factor);
    for r in 0..h * factor {
        let (r0, r1, fy) = src(r, h);
        for &(c0, c1, fx) in &cols {
            let top = grid.get(r0, c0) as f64 * (1.0 - fx) + grid.get(r0, c1) as f64 * fx;
            let bot = grid.get(r1, c0) as f64 * (1.0 - fx) + grid.get(r1, c1) as f64 * fx;
            out.push((top * (1.0 - fy) + bot * fy) as f32);
        }
    }
    Grid2D::new(h * factor, w * factor, out, grid.kind()).expect("resampled size")
}

/// Block means. Non-divisible grids are first extended by edge
/// replication; the returned flag reports that.
pub fn block_average(grid: &Grid2D, block: usize) -> (Grid2D, bool) {
    let block = block.max(1);
    let (h, w) = grid.dims();
    let (bh, bw) = (h.div_ceil(block), w.div_ceil(block));
    let replicated = h % block != 0 || w % block != 0;
    let n = (block * block) as f64;
    let mut out = Vec::with_capacity(bh * bw);
    for br in 0..bh {
        for bc in 0..bw {
            let mut s = 0f64;
            for r in br * block..(br + 1) * block {
                let rr = r.min(h - 1);
                for c in bc * block..(bc + 1) * block {
                    s += grid.get(rr, c.min(w - 1)) as f64;
                }
            }
            out.push((s / n) as f32);
        }
    }
    (
        Grid2D::new(bh, bw, out, grid.kind()).expect("block grid size"),
        replicated,
    )
}

pub fn crps_empirical(ensemble: &[f64], obs: f64, estimator: CrpsEstimator) -> Result<f64> {
    let m = ensemble.len();
    if m == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if estimator == CrpsEstimator::Fair && m < 2 {
        return Err(Error::FairNeedsTwo);
    }
    let mf = m as f64;
    let skill = ensemble.iter().map(|x| (x - obs).abs()).sum::<f64>() / mf;
    let mut spread = 0.0;
    for (i, a) in ensemble.iter().enumerate() {
        for b in &ensemble[i + 1..] {
            spread += 2.0 * (a - b).abs();
        }
    }
    let denom = match estimator {
        CrpsEstimator::Nrg => 2.0 * mf * mf,
        CrpsEstimator::Fair => 2.0 * mf * (mf - 1.0),
    };
    Ok(skill - spread / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_crps: f64,
    pub per_sample_crps: Vec<f64>,
    pub block_size: usize,
    pub n_samples: usize,
    pub estimator: CrpsEstimator,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Scores deterministic cumulative predictions against observations at
/// block level. Each prediction block is a one-member ensemble, so the
/// Fair estimator is not applicable here.
pub fn evaluate_run(
    pred_cum: &[Grid2D],
    obs_cum: &[Grid2D],
    cfg: &PipelineConfig,
    estimator: CrpsEstimator,
) -> Result<EvalReport> {
    if pred_cum.len() != obs_cum.len() {
        return Err(Error::Misaligned(format!(
            "{} predictions vs {} observations",
            pred_cum.len(),
            obs_cum.len()
        )));
    }
    let mut per_sample = Vec::with_capacity(pred_cum.len());
    for (i, (p, o)) in pred_cum.iter().zip(obs_cum).enumerate() {
        if p.dims() != o.dims() {
            return Err(Error::Misaligned(format!(
                "sample {i}: prediction {:?} vs observation {:?}",
                p.dims(),
                o.dims()
            )));
        }
        let (pb, _) = block_average(p, cfg.block_size);
        let (ob, _) = block_average(o, cfg.block_size);
        let mut s = 0.0;
        for (&pv, &ov) in pb.values().iter().zip(ob.values()) {
            s += crps_empirical(&[pv as f64], ov as f64, estimator)?;
        }
        per_sample.push(s / pb.values().len() as f64);
    }
    let mean = if per_sample.is_empty() {
        0.0
    } else {
        per_sample.iter().sum::<f64>() / per_sample.len() as f64
    };
    Ok(EvalReport {
        mean_crps: mean,
        n_samples: per_sample.len(),
        per_sample_crps: per_sample,
        block_size: cfg.block_size,
        estimator,
    })
}
