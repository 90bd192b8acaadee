//! Checkpoint directories.
//!
//! ```text
//! <dir>/manifest.txt   key=value: format, model config, epoch
//! <dir>/params.bin     named tensors
//! <dir>/optimizer.bin  Adam step counter and moments (optional)
//! <dir>/vocab.tsv      vocabulary (optional)
//! ```
//!
//! A tensor block is `u32` count, then per tensor: `u32` name length, UTF-8
//! name, `u64` rows, `u64` cols, and `rows·cols` little-endian `f64` values in
//! row-major order. All integers are little-endian. Values round-trip bit-exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::adam::AdamState;
use crate::autodiff::Tensor;
use crate::error::{Result, SrbError};
use crate::kv;
use crate::model::{check_params, ModelConfig, ModelParams, NamedTensors};
use crate::text::Vocabulary;

const FORMAT: &str = "srb-checkpoint-1";
const PARAMS_MAGIC: &[u8; 8] = b"SRBPARAM";
const OPTIM_MAGIC: &[u8; 8] = b"SRBADAM1";

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PARAMS_FILE: &str = "params.bin";
pub const OPTIMIZER_FILE: &str = "optimizer.bin";
pub const VOCAB_FILE: &str = "vocab.tsv";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ModelParams,
    pub optimizer: Option<AdamState>,
    /// Completed training epochs.
    pub epoch: usize,
    pub vocab: Option<Vocabulary>,
}

pub fn write_tensors(out: &mut impl Write, tensors: &NamedTensors) -> Result<()> {
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors.iter() {
        let name = t.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&(t.value.rows() as u64).to_le_bytes())?;
        out.write_all(&(t.value.cols() as u64).to_le_bytes())?;
        for v in t.value.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_tensors(r: &mut impl Read) -> Result<NamedTensors> {
    let count = read_u32(r)?;
    let mut out = NamedTensors::new();
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| SrbError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rows = read_u64(r)? as usize;
        let cols = read_u64(r)? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| SrbError::Checkpoint(format!("tensor {name} too large")))?;
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.insert(name, Tensor::new(rows, cols, data)?)?;
    }
    Ok(out)
}

fn read_magic(r: &mut impl Read, magic: &[u8; 8], file: &str) -> Result<()> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(SrbError::Checkpoint(format!("{file} has the wrong header")));
    }
    Ok(())
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = format!(
            "format={FORMAT}\n{}epoch={}\nparams={}\n",
            self.model.to_kv(),
            self.epoch,
            self.params.len()
        );
        fs::write(dir.join(MANIFEST_FILE), manifest)?;

        let mut buf = PARAMS_MAGIC.to_vec();
        write_tensors(&mut buf, &self.params)?;
        fs::write(dir.join(PARAMS_FILE), buf)?;

        let optim_path = dir.join(OPTIMIZER_FILE);
        match &self.optimizer {
            Some(state) => {
                let mut buf = OPTIM_MAGIC.to_vec();
                buf.extend_from_slice(&state.step.to_le_bytes());
                write_tensors(&mut buf, &state.m)?;
                write_tensors(&mut buf, &state.v)?;
                fs::write(optim_path, buf)?;
            }
            None if optim_path.exists() => fs::remove_file(optim_path)?,
            None => {}
        }
        if let Some(vocab) = &self.vocab {
            vocab.save(&dir.join(VOCAB_FILE))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let mut map = kv::parse(&manifest)?;
        match map.remove("format").as_deref() {
            Some(FORMAT) => {}
            other => return Err(SrbError::Checkpoint(format!("unsupported format {other:?}"))),
        }
        let epoch = map
            .remove("epoch")
            .ok_or_else(|| SrbError::Checkpoint("manifest lacks epoch".into()))
            .and_then(|e| kv::value("epoch", &e))?;
        let count: usize = map
            .remove("params")
            .ok_or_else(|| SrbError::Checkpoint("manifest lacks params".into()))
            .and_then(|e| kv::value("params", &e))?;
        let model = ModelConfig::from_map(&map)?;

        let bytes = fs::read(dir.join(PARAMS_FILE))?;
        let mut r = bytes.as_slice();
        read_magic(&mut r, PARAMS_MAGIC, PARAMS_FILE)?;
        let params = read_tensors(&mut r)?;
        if params.len() != count || !r.is_empty() {
            return Err(SrbError::Checkpoint("params.bin disagrees with the manifest".into()));
        }
        check_params(&params, &model)?;

        let optim_path = dir.join(OPTIMIZER_FILE);
        let optimizer = if optim_path.exists() {
            let bytes = fs::read(optim_path)?;
            let mut r = bytes.as_slice();
            read_magic(&mut r, OPTIM_MAGIC, OPTIMIZER_FILE)?;
            let step = read_u64(&mut r)?;
            let m = read_tensors(&mut r)?;
            let v = read_tensors(&mut r)?;
            m.check_same_layout(&params)?;
            v.check_same_layout(&params)?;
            Some(AdamState { step, m, v })
        } else {
            None
        };

        let vocab_path = dir.join(VOCAB_FILE);
        let vocab = if vocab_path.exists() {
            let v = Vocabulary::load(&vocab_path)?;
            if v.len() > model.vocab_size {
                return Err(SrbError::consistency(format!(
                    "vocabulary of {} exceeds model vocab_size {}",
                    v.len(),
                    model.vocab_size
                )));
            }
            Some(v)
        } else {
            None
        };

        Ok(Checkpoint {
            model,
            params,
            optimizer,
            epoch,
            vocab,
        })
    }
}
