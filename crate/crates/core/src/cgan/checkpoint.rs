//! Binary checkpoint container.
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `NWCK` |
//! | 4 | u32 LE format version |
//! | 4 | u32 LE header length `n` |
//! | n | UTF-8 JSON header: architecture, training config, step, extractor seed |
//! | 4 | u32 LE tensor count |
//! | … | per tensor: u16 LE name length, name, u8 rank, rank × u32 LE dims, LE f32 values |
//!
//! Tensor names are prefixed `g.` / `d.` for parameters and `g.m.`, `g.v.`,
//! `d.m.`, `d.v.` for Adam moments.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nets::GanArchitecture;
use super::optim::TrainConfig;
use super::train::GanCheckpoint;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"NWCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: GanArchitecture,
    config: TrainConfig,
    step: u64,
    extractor_seed: u64,
}

struct Named<'a> {
    name: String,
    shape: &'a [usize],
    values: &'a [f32],
}

fn tensors(ck: &GanCheckpoint) -> Vec<Named<'_>> {
    let mut out = Vec::new();
    for (tag, params, opt) in [
        ("g", &ck.generator, &ck.gen_opt),
        ("d", &ck.discriminator, &ck.disc_opt),
    ] {
        for p in &params.list {
            out.push(Named {
                name: format!("{tag}.{}", p.name),
                shape: &p.shape,
                values: &p.value,
            });
        }
        for (moment, store) in [("m", &opt.m), ("v", &opt.v)] {
            for (p, vals) in params.list.iter().zip(store) {
                out.push(Named {
                    name: format!("{tag}.{moment}.{}", p.name),
                    shape: &p.shape,
                    values: vals,
                });
            }
        }
    }
    out
}

pub fn checkpoint_to_bytes(ck: &GanCheckpoint) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        architecture: ck.arch.clone(),
        config: ck.config.clone(),
        step: ck.step,
        extractor_seed: ck.extractor_seed,
    })
    .expect("header serialises");
    let list = tensors(ck);
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(list.len() as u32).to_le_bytes());
    for t in list {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<GanCheckpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?)
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let count = r.u32()? as usize;
    let mut found: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::with_capacity(count);
    for _ in 0..count {
        let nlen = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let shape: Vec<usize> = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<_>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
        )?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        found.insert(name, (shape, values));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }

    let mut ck = GanCheckpoint::rebuild(
        header.architecture,
        header.config,
        header.step,
        header.extractor_seed,
    )?;
    let expected: Vec<(String, Vec<usize>)> = tensors(&ck)
        .into_iter()
        .map(|t| (t.name, t.shape.to_vec()))
        .collect();
    if found.len() != expected.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            expected.len(),
            found.len()
        )));
    }
    let mut take = |name: &str, shape: &[usize]| -> Result<Vec<f32>> {
        let (s, v) = found
            .remove(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if s != shape {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {s:?}, architecture needs {shape:?}"
            )));
        }
        Ok(v)
    };
    let mut it = expected.iter();
    for (params, opt) in [
        (&mut ck.generator, &mut ck.gen_opt),
        (&mut ck.discriminator, &mut ck.disc_opt),
    ] {
        for p in params.list.iter_mut() {
            let (name, shape) = it.next().expect("same layout");
            p.value = take(name, shape)?;
        }
        for store in [&mut opt.m, &mut opt.v] {
            for slot in store.iter_mut() {
                let (name, shape) = it.next().expect("same layout");
                *slot = take(name, shape)?;
            }
        }
    }
    Ok(ck)
}

pub fn write_checkpoint(ck: &GanCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_to_bytes(ck)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<GanCheckpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgan::train::{train, TrainingPair};
    use crate::grid::GridKind;
    use crate::synth::cloud_scene;

    fn trained() -> GanCheckpoint {
        let arch = GanArchitecture {
            encoder_widths: vec![2, 4],
            disc_widths: vec![3],
            ..GanArchitecture::default()
        };
        let radiance = cloud_scene(16, 16, 2, (0.0, 0.0));
        let rain = radiance
            .map(|v| v * 0.5)
            .with_kind(GridKind::NormalizedRain);
        let cfg = TrainConfig {
            epochs: 2,
            seed: 4,
            ..TrainConfig::default()
        };
        train(&[TrainingPair { radiance, rain }], arch, cfg, &mut ()).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = trained();
        assert_eq!(ck.step, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.nwck");
        write_checkpoint(&ck, &path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(checkpoint_to_bytes(&back), std::fs::read(&path).unwrap());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = checkpoint_to_bytes(&trained());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            checkpoint_from_bytes(&bad),
            Err(Error::Checkpoint(_))
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            checkpoint_from_bytes(&bad),
            Err(Error::Checkpoint(_))
        ));
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(checkpoint_from_bytes(&long).is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_checkpoint("/nonexistent/model.nwck").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.nwck"));
    }
}
