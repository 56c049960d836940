//! Token → vector tables and the `EMBK` binary file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"EMBK" | u32 version (=1) | u32 count | u32 dim
//! count × ( u16 token byte length | UTF-8 token | dim × f32 )
//! ```
//!
//! A GloVe-style text format (`token v1 v2 ...` per line) is also accepted by
//! [`EmbeddingBank::load`] so that pretrained word vectors can be used as-is.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{validation, Error, Result};

pub const EMBK_MAGIC: &[u8; 4] = b"EMBK";
pub const EMBK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBank {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingBank {
    pub fn new(dim: usize) -> Self {
        EmbeddingBank {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut bank = EmbeddingBank::new(dim);
        for (token, vector) in rows {
            bank.push(token, &vector)?;
        }
        Ok(bank)
    }

    pub fn push(&mut self, token: impl Into<String>, vector: &[f64]) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(validation(format!(
                "embedding for {token:?} has {} entries, bank dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(validation(format!("embedding for {token:?} is not finite")));
        }
        if token.len() > u16::MAX as usize {
            return Err(validation("token longer than 65535 bytes"));
        }
        if self.index.contains_key(&token) {
            return Err(validation(format!("duplicate token {token:?} in embedding bank")));
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.position(token).map(|i| self.row(i))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Flat row-major storage, `len() * dim()` values.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Copy with every row scaled to unit L2 norm. Zero rows are rejected.
    pub fn normalized(&self) -> Result<Self> {
        let mut out = self.clone();
        for (i, row) in out.data.chunks_mut(self.dim).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(validation(format!("zero vector for token {:?}", self.tokens[i])));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(out)
    }

    /// Largest deviation of any row norm from 1.
    pub fn max_norm_deviation(&self) -> f64 {
        self.data
            .chunks(self.dim.max(1))
            .map(|row| (row.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Sub-bank holding exactly `tokens`, in that order.
    pub fn select(&self, tokens: &[String]) -> Result<Self> {
        let mut out = EmbeddingBank::new(self.dim);
        for token in tokens {
            let row = self
                .get(token)
                .ok_or_else(|| validation(format!("token {token:?} missing from embedding bank")))?;
            out.push(token.clone(), row)?;
        }
        Ok(out)
    }

    pub fn write_embk<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(EMBK_MAGIC)?;
        w.write_all(&EMBK_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for (i, token) in self.tokens.iter().enumerate() {
            w.write_all(&(token.len() as u16).to_le_bytes())?;
            w.write_all(token.as_bytes())?;
            for v in self.row(i) {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_embk<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != EMBK_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected EMBK")));
        }
        let version = read_u32(&mut r, "version")?;
        if version != EMBK_VERSION {
            return Err(Error::Format(format!("unsupported EMBK version {version}")));
        }
        let count = read_u32(&mut r, "count")? as usize;
        let dim = read_u32(&mut r, "dim")? as usize;
        let mut bank = EmbeddingBank::new(dim);
        let mut row = vec![0f64; dim];
        let mut buf = vec![0u8; dim * 4];
        for entry in 0..count {
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len, "token length")?;
            let mut token = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut token, "token")?;
            let token = String::from_utf8(token)
                .map_err(|_| Error::Format(format!("entry {entry}: token is not UTF-8")))?;
            read_exact(&mut r, &mut buf, "vector")?;
            for (dst, chunk) in row.iter_mut().zip(buf.chunks_exact(4)) {
                *dst = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
            }
            bank.push(token, &row)
                .map_err(|e| Error::Format(format!("entry {entry}: {e}")))?;
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(|e| Error::io("<embk>", e))? != 0 {
            return Err(Error::Format("trailing bytes after last EMBK entry".into()));
        }
        Ok(bank)
    }

    /// Whitespace-separated `token v1 ... vd` lines; dim taken from the first line.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut bank: Option<EmbeddingBank> = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<embedding text>", e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap();
            let values: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| validation(format!("line {}: {e}", lineno + 1)))?;
            let bank = bank.get_or_insert_with(|| EmbeddingBank::new(values.len()));
            bank.push(token, &values)
                .map_err(|e| validation(format!("line {}: {e}", lineno + 1)))?;
        }
        bank.ok_or_else(|| validation("embedding text file is empty"))
    }

    /// Loads either format, sniffing the `EMBK` magic.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let is_binary = file.fill_buf().map_err(|e| Error::io(path, e))?.starts_with(EMBK_MAGIC);
        if is_binary {
            Self::read_embk(file)
        } else {
            Self::read_text(file)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_embk(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("unexpected end of file reading {what}")))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EmbeddingBank {
        EmbeddingBank::from_rows(
            3,
            vec![("alpha", vec![1.0, 0.0, 0.0]), ("béta", vec![0.0, 0.5, 0.25])],
        )
        .unwrap()
    }

    #[test]
    fn embk_layout_is_bit_exact() {
        let mut bytes = Vec::new();
        toy().write_embk(&mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"EMBK");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(u16::from_le_bytes(bytes[16..18].try_into().unwrap()), 5);
        assert_eq!(&bytes[18..23], b"alpha");
        assert_eq!(f32::from_le_bytes(bytes[23..27].try_into().unwrap()), 1.0);
        // "béta" is 5 UTF-8 bytes
        let second = 23 + 12;
        assert_eq!(u16::from_le_bytes(bytes[second..second + 2].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 16 + 2 * (2 + 5 + 12));
        let back = EmbeddingBank::read_embk(bytes.as_slice()).unwrap();
        assert_eq!(back, toy());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = Vec::new();
        toy().write_embk(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(EmbeddingBank::read_embk(bad.as_slice()), Err(Error::Format(_))));
        let short = &bytes[..bytes.len() - 1];
        assert!(matches!(EmbeddingBank::read_embk(short), Err(Error::Format(_))));
        bytes.push(0);
        assert!(matches!(EmbeddingBank::read_embk(bytes.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn text_format_and_normalization() {
        let text = "a 3 4\nb 0 2\n";
        let bank = EmbeddingBank::read_text(text.as_bytes()).unwrap();
        assert_eq!(bank.dim(), 2);
        let unit = bank.normalized().unwrap();
        assert!(unit.max_norm_deviation() < 1e-12);
        assert_eq!(unit.get("a").unwrap(), &[0.6, 0.8]);
        assert!(EmbeddingBank::read_text("a 1 2\nb 1\n".as_bytes()).is_err());
    }

    #[test]
    fn duplicate_tokens_rejected() {
        let mut bank = toy();
        assert!(bank.push("alpha", &[0.0, 0.0, 1.0]).is_err());
    }
}
