//! Static token embeddings (`PDEM` files): a JSON header line followed by
//! row-major little-endian `f32` values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &str = "PDEM";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    dim_v: usize,
    dim_d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n_rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(n_rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Integrity("embedding dimension must be positive".into()));
        }
        if data.len() != n_rows * dim {
            return Err(Error::Integrity(format!(
                "{} values for a {n_rows} x {dim} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integrity("non-finite embedding entry".into()));
        }
        Ok(Self { n_rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Integrity("ragged embedding rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Mean of the rows of `tokens`.
    pub fn mean_pooled(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::Domain("cannot pool an empty token sequence".into()));
        }
        let mut out = vec![0.0; self.dim];
        for &t in tokens {
            if t as usize >= self.n_rows {
                return Err(Error::Domain(format!(
                    "token {t} has no embedding ({} rows)",
                    self.n_rows
                )));
            }
            for (o, v) in out.iter_mut().zip(self.row(t as usize)) {
                *o += *v as f64;
            }
        }
        let n = tokens.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        Ok(out)
    }
}

pub fn read_embeddings<R: BufRead>(mut reader: R) -> Result<EmbeddingMatrix> {
    let mut line = String::new();
    reader
        .read_line(&mut line)
        .map_err(|e| Error::Format(format!("embedding header: {e}")))?;
    let header: Header =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("embedding header: {e}")))?;
    if header.magic != EMBEDDING_MAGIC {
        return Err(Error::Format(format!("bad embedding magic {:?}", header.magic)));
    }
    if header.version != EMBEDDING_VERSION {
        return Err(Error::Format(format!("unsupported embedding version {}", header.version)));
    }
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("embedding body: {e}")))?;
    let expected = 4 * header.dim_v * header.dim_d;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "embedding body has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingMatrix::new(header.dim_v, header.dim_d, data)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file))
}

pub fn write_embeddings<W: Write>(m: &EmbeddingMatrix, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let header = Header {
        magic: EMBEDDING_MAGIC.into(),
        version: EMBEDDING_VERSION,
        dim_v: m.n_rows,
        dim_d: m.dim,
    };
    let err = |e: std::io::Error| Error::Format(format!("writing embeddings: {e}"));
    let line = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(line.as_bytes()).map_err(err)?;
    w.write_all(b"\n").map_err(err)?;
    for v in &m.data {
        w.write_all(&v.to_le_bytes()).map_err(err)?;
    }
    w.flush().map_err(err)
}
