//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "CBVD"  u32 version
//! u32 snapshot length, snapshot bytes (key=value text)
//! repeated until EOF:
//!   u32 name length, name bytes, u32 rank, rank × u32 extents, f32 payload
//! ```
//!
//! The snapshot holds the training config, the stage marker and the Adam step
//! counts. Adam moments are stored as ordinary entries named
//! `adam{1,2}.{m,v}/<parameter>`.

use std::fmt;
use std::path::Path;

use super::config::{parse_value, TrainConfig};
use crate::networks::ModelParams;
use crate::tensor::{AdamConfig, AdamState, ParamSet, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CBVD";
pub const FORMAT_VERSION: u32 = 1;
const MAX_RANK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    AfterStage1,
    AfterStage2,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::AfterStage1 => "after_stage1",
            Stage::AfterStage2 => "after_stage2",
        })
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "after_stage1" => Ok(Stage::AfterStage1),
            "after_stage2" => Ok(Stage::AfterStage2),
            other => Err(Error::Checkpoint(format!("unknown stage marker '{other}'"))),
        }
    }
}

/// Trained parameters with optimizer state and the config they were fit with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub stage: Stage,
    pub params: ModelParams,
    /// Optimizer over the feature generator and denoiser.
    pub adam_stage1: AdamState,
    /// Optimizer over the refiner, present after stage 2.
    pub adam_stage2: Option<AdamState>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_entry(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len())?;
    for &e in shape {
        put_u32(out, e)?;
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn moment_entries(out: &mut Vec<u8>, tag: &str, state: &AdamState, params: &ParamSet) -> Result<()> {
    for (name, m, v) in state.moments() {
        let shape = params
            .get(name)
            .map(|t| t.shape().to_vec())
            .unwrap_or_else(|| vec![m.len()]);
        put_entry(out, &format!("{tag}.m/{name}"), &shape, m)?;
        put_entry(out, &format!("{tag}.v/{name}"), &shape, v)?;
    }
    Ok(())
}

impl Checkpoint {
    fn snapshot(&self) -> String {
        let mut s = self.config.to_text();
        s.push_str(&format!("stage={}\n", self.stage));
        s.push_str(&format!("adam1_step={}\n", self.adam_stage1.step_count));
        s.push_str(&format!("adam1_lr={}\n", self.adam_stage1.config.lr));
        if let Some(a) = &self.adam_stage2 {
            s.push_str(&format!("adam2_step={}\n", a.step_count));
            s.push_str(&format!("adam2_lr={}\n", a.config.lr));
        }
        s
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let snap = self.snapshot();
        put_u32(&mut out, snap.len())?;
        out.extend_from_slice(snap.as_bytes());
        let p = &self.params;
        for (name, t) in p.feature.iter().chain(p.denoise.iter()).chain(p.refine.iter()) {
            put_entry(&mut out, name, t.shape(), t.data())?;
        }
        let stage1: ParamSet = p
            .feature
            .iter()
            .chain(p.denoise.iter())
            .map(|(n, t)| (n.to_owned(), t.clone()))
            .collect();
        moment_entries(&mut out, "adam1", &self.adam_stage1, &stage1)?;
        if let Some(a) = &self.adam_stage2 {
            moment_entries(&mut out, "adam2", a, &p.refine)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Checkpoint("missing CBVD magic".into()));
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let len = r.u32("snapshot length")? as usize;
        let snap = std::str::from_utf8(r.take(len, "config snapshot")?)
            .map_err(|_| Error::Checkpoint("config snapshot is not UTF-8".into()))?;
        let snap = Snapshot::parse(snap)?;

        let mut entries = Vec::new();
        while !r.done() {
            entries.push(r.entry()?);
        }
        assemble(snap, entries)
    }
}

struct Snapshot {
    config: TrainConfig,
    stage: Stage,
    adam1: (u64, f32),
    adam2: Option<(u64, f32)>,
}

impl Snapshot {
    fn parse(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        let (mut stage, mut adam1_step, mut adam2_step) = (None, None, None);
        let (mut adam1_lr, mut adam2_lr) = (None, None);
        let wrap = |e: Error| Error::Checkpoint(format!("config snapshot: {e}"));
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("config snapshot: malformed line '{line}'")))?;
            match k {
                "stage" => stage = Some(v.parse::<Stage>()?),
                "adam1_step" => adam1_step = Some(parse_value::<u64>(k, v).map_err(wrap)?),
                "adam2_step" => adam2_step = Some(parse_value::<u64>(k, v).map_err(wrap)?),
                "adam1_lr" => adam1_lr = Some(parse_value::<f32>(k, v).map_err(wrap)?),
                "adam2_lr" => adam2_lr = Some(parse_value::<f32>(k, v).map_err(wrap)?),
                _ => {
                    if !config.set(k, v).map_err(wrap)? {
                        return Err(Error::Checkpoint(format!("config snapshot: unknown key '{k}'")));
                    }
                }
            }
        }
        config.validate().map_err(wrap)?;
        if config.c_in == 0 {
            return Err(Error::Checkpoint("config snapshot lacks C_in".into()));
        }
        let stage = stage.ok_or_else(|| Error::Checkpoint("missing stage marker".into()))?;
        let adam2 = match (adam2_step, adam2_lr) {
            (Some(step), Some(lr)) => Some((step, lr)),
            (None, None) => None,
            _ => return Err(Error::Checkpoint("incomplete stage-2 optimizer state".into())),
        };
        if (stage == Stage::AfterStage2) != adam2.is_some() {
            return Err(Error::Checkpoint(format!(
                "stage {stage} inconsistent with stored optimizer state"
            )));
        }
        let missing = |k: &str| Error::Checkpoint(format!("missing {k}"));
        Ok(Self {
            config,
            stage,
            adam1: (
                adam1_step.ok_or_else(|| missing("adam1_step"))?,
                adam1_lr.ok_or_else(|| missing("adam1_lr"))?,
            ),
            adam2,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn entry(&mut self) -> Result<(String, Tensor)> {
        let len = self.u32("name length")? as usize;
        let name = std::str::from_utf8(self.take(len, "parameter name")?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_owned();
        let rank = self.u32("rank")? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::Checkpoint(format!("{name}: implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32("extent")? as usize);
        }
        let bytes = shape
            .iter()
            .try_fold(4usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: extents overflow")))?;
        let raw = self.take(bytes, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        Ok((name, t))
    }
}

fn assemble(snap: Snapshot, entries: Vec<(String, Tensor)>) -> Result<Checkpoint> {
    let arch = snap.config.architecture(snap.config.c_in);
    let expected = arch.expected_shapes();
    let mut model = Vec::new();
    let mut moments: [Vec<(String, Tensor)>; 4] = Default::default();
    for (name, t) in entries {
        let slot = ["adam1.m/", "adam1.v/", "adam2.m/", "adam2.v/"]
            .iter()
            .position(|p| name.starts_with(p));
        match slot {
            Some(i) => moments[i].push((name[8..].to_owned(), t)),
            None => model.push((name, t)),
        }
    }
    if model.len() != expected.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter tensors for the configured architecture, found {}",
            expected.len(),
            model.len()
        )));
    }
    for ((name, shape), (got, t)) in expected.iter().zip(&model) {
        if name != got || shape.as_slice() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {got} {:?} does not match the architecture ({name} {shape:?})",
                t.shape()
            )));
        }
    }
    let mut params = ModelParams {
        arch,
        feature: ParamSet::new(),
        denoise: ParamSet::new(),
        refine: ParamSet::new(),
    };
    for (name, t) in model {
        let set = if name.starts_with("feature.") {
            &mut params.feature
        } else if name.starts_with("denoise.") {
            &mut params.denoise
        } else {
            &mut params.refine
        };
        set.insert(name, t);
    }

    let [m1, v1, m2, v2] = moments;
    let stage1_names: Vec<(&str, usize)> = params
        .feature
        .iter()
        .chain(params.denoise.iter())
        .map(|(n, t)| (n, t.numel()))
        .collect();
    let refine_names: Vec<(&str, usize)> = params.refine.iter().map(|(n, t)| (n, t.numel())).collect();
    let adam_stage1 = rebuild_adam("adam1", snap.adam1, &stage1_names, m1, v1)?;
    let adam_stage2 = match snap.adam2 {
        Some(state) => Some(rebuild_adam("adam2", state, &refine_names, m2, v2)?),
        None if m2.is_empty() && v2.is_empty() => None,
        None => return Err(Error::Checkpoint("stage-2 moments without stage-2 marker".into())),
    };
    let mut config = snap.config;
    config.c_feat = params.arch.c_feat;
    Ok(Checkpoint {
        config,
        stage: snap.stage,
        params,
        adam_stage1,
        adam_stage2,
    })
}

fn rebuild_adam(
    tag: &str,
    (step, lr): (u64, f32),
    names: &[(&str, usize)],
    m: Vec<(String, Tensor)>,
    v: Vec<(String, Tensor)>,
) -> Result<AdamState> {
    if m.len() != names.len() || v.len() != names.len() {
        return Err(Error::Checkpoint(format!(
            "{tag}: expected {} moment pairs, found {}/{}",
            names.len(),
            m.len(),
            v.len()
        )));
    }
    let mut parts = Vec::with_capacity(names.len());
    for ((&(name, numel), (mn, mt)), (vn, vt)) in names.iter().zip(m).zip(v) {
        if mn != name || vn != name || mt.numel() != numel || vt.numel() != numel {
            return Err(Error::Checkpoint(format!(
                "{tag}: moments for {name} missing or misshapen"
            )));
        }
        parts.push((mn, mt.into_data(), vt.into_data()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Checkpoint(format!("{tag}: invalid learning rate {lr}")));
    }
    let config = AdamConfig {
        lr,
        ..AdamConfig::default()
    };
    Ok(AdamState::from_parts(config, step, parts)?)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::init_params;

    fn tiny() -> Checkpoint {
        let config = TrainConfig {
            levels: 2,
            feature_width: 4,
            denoise_widths: vec![3],
            refine_width: 4,
            refine_hidden: 2,
            c_in: 1,
            c_feat: 5,
            height: 4,
            width: 4,
            ..Default::default()
        };
        let params = init_params(&config.architecture(1), 9).unwrap();
        let joint: ParamSet = params
            .feature
            .iter()
            .chain(params.denoise.iter())
            .map(|(n, t)| (n.to_owned(), t.clone()))
            .collect();
        let mut adam_stage1 = AdamState::new(&joint, AdamConfig::default());
        adam_stage1.step_count = 3;
        Checkpoint {
            config,
            stage: Stage::AfterStage1,
            adam_stage2: None,
            adam_stage1,
            params,
        }
    }

    #[test]
    fn bytes_roundtrip_exactly() {
        let c = tiny();
        let bytes = c.to_bytes().unwrap();
        assert_eq!(&bytes[..4], MAGIC);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn every_truncation_is_an_error() {
        let bytes = tiny().to_bytes().unwrap();
        for cut in (0..bytes.len()).step_by(7) {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn version_and_magic_checked() {
        let mut bytes = tiny().to_bytes().unwrap();
        bytes[4] = 2;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("version 2"), "{err}");
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
