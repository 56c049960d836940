//! `BCLM` checkpoint: magic, u32 version, u32-prefixed JSON header, then
//! named f32 tensors until end of file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::EncoderWeights;
use super::{AlignerModel, EncoderConfig};
use crate::embedding::EmbeddingBank;
use crate::error::{Error, Result};
use crate::vocab::vocab_hash;

pub const BCLM_MAGIC: &[u8; 4] = b"BCLM";
pub const BCLM_VERSION: u32 = 1;
const BANK_TENSOR: &str = "keyword_bank";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: EncoderConfig,
    pub vocab_hash: String,
    pub tau: f64,
    pub learn_tau: bool,
    pub vocab: Vec<String>,
}

fn write_tensor<W: Write>(w: &mut W, name: &str, shape: &[usize], data: &[f64]) -> std::io::Result<()> {
    w.write_all(&(name.len() as u16).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(model: &AlignerModel, mut w: W) -> std::io::Result<()> {
    let header = CheckpointHeader {
        config: model.config.clone(),
        vocab_hash: model.vocab_hash(),
        tau: model.tau(),
        learn_tau: model.learn_tau,
        vocab: model.vocab().to_vec(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(BCLM_MAGIC)?;
    w.write_all(&BCLM_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for t in model.weights.tensors() {
        write_tensor(&mut w, &t.name, &t.shape, t.data)?;
    }
    let bank = model.bank();
    write_tensor(&mut w, BANK_TENSOR, bank.shape(), bank.as_slice().expect("standard layout"))?;
    w.flush()
}

fn fmt(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| fmt(format!("checkpoint truncated reading {what}")))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads the next tensor, or `None` at a clean end of file.
fn read_tensor<R: Read>(r: &mut R) -> Result<Option<(String, Vec<usize>, Vec<f64>)>> {
    let mut len = [0u8; 2];
    let mut got = 0;
    while got < 2 {
        let n = r.read(&mut len[got..]).map_err(|e| fmt(e.to_string()))?;
        if n == 0 {
            return if got == 0 { Ok(None) } else { Err(fmt("checkpoint truncated in tensor name")) };
        }
        got += n;
    }
    let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
    read_exact(r, &mut name, "tensor name")?;
    let name = String::from_utf8(name).map_err(|_| fmt("tensor name is not UTF-8"))?;
    let rank = read_u32(r, "tensor rank")? as usize;
    let shape = (0..rank)
        .map(|_| read_u32(r, "tensor dims").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let count: usize = shape.iter().product();
    let mut raw = vec![0u8; count * 4];
    read_exact(r, &mut raw, &name)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Some((name, shape, data)))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<AlignerModel> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != BCLM_MAGIC {
        return Err(fmt("not a BCLM checkpoint"));
    }
    let version = read_u32(&mut r, "version")?;
    if version != BCLM_VERSION {
        return Err(fmt(format!("unsupported checkpoint version {version}")));
    }
    let hlen = read_u32(&mut r, "header length")? as usize;
    let mut json = vec![0u8; hlen];
    read_exact(&mut r, &mut json, "header")?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    header.config.validate()?;
    if vocab_hash(&header.vocab) != header.vocab_hash {
        return Err(fmt("vocabulary hash in header does not match the stored vocabulary"));
    }

    let mut found: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    while let Some((name, shape, data)) = read_tensor(&mut r)? {
        if found.insert(name.clone(), (shape, data)).is_some() {
            return Err(fmt(format!("duplicate tensor {name}")));
        }
    }

    let mut weights = EncoderWeights::init(&header.config, 0);
    let expected: Vec<(String, Vec<usize>)> = weights
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.shape))
        .collect();
    for ((name, shape), dst) in expected.iter().zip(weights.tensors_mut()) {
        let (got_shape, data) = found
            .remove(name)
            .ok_or_else(|| fmt(format!("checkpoint is missing tensor {name}")))?;
        if &got_shape != shape {
            return Err(fmt(format!("tensor {name} has shape {got_shape:?}, expected {shape:?}")));
        }
        dst.copy_from_slice(&data);
    }
    let (bank_shape, bank) = found
        .remove(BANK_TENSOR)
        .ok_or_else(|| fmt("checkpoint is missing the keyword bank"))?;
    if bank_shape != [header.vocab.len(), header.config.output_dim] {
        return Err(fmt(format!("keyword bank has shape {bank_shape:?}")));
    }
    if let Some(extra) = found.keys().next() {
        return Err(fmt(format!("unexpected tensor {extra}")));
    }
    let bank = EmbeddingBank::from_rows(
        header.config.output_dim,
        header
            .vocab
            .iter()
            .zip(bank.chunks(header.config.output_dim))
            .map(|(l, row)| (l.clone(), row.to_vec())),
    )?;
    AlignerModel::from_parts(
        header.config,
        weights,
        header.tau.ln(),
        header.learn_tau,
        header.vocab,
        &bank,
    )
}

impl AlignerModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_checkpoint(self, BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        read_checkpoint(BufReader::new(file))
    }
}
