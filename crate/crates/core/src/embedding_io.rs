//! EMB1 embedding files and the in-memory [`EmbeddingStore`].
//!
//! Layout (little-endian): magic `EMB1`, `u32` version (1), `u32` dim,
//! `u64` count, then `count * dim` `f32` values, row-major.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::segmentation::{read_index, IndexEntry};
use crate::{Error, Result, Side};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

/// Rows whose norm is already this close to one are left bit-for-bit untouched.
const UNIT_TOLERANCE: f64 = 1e-6;

/// A borrowed row-major block of `f32` vectors.
#[derive(Debug, Clone, Copy)]
pub struct Rows<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> Rows<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim), "row data must be a multiple of dim");
        Rows { data, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'a, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &'a [f32] {
        self.data
    }
}

/// Inner product accumulated in `f64`. Callers guarantee equal lengths.
#[inline]
pub fn dot(u: &[f32], v: &[f32]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = [0f64; 8];
    let uc = u.chunks_exact(8);
    let vc = v.chunks_exact(8);
    let (ur, vr) = (uc.remainder(), vc.remainder());
    for (a, b) in uc.zip(vc) {
        for k in 0..8 {
            acc[k] += a[k] as f64 * b[k] as f64;
        }
    }
    let mut tail = 0f64;
    for (a, b) in ur.iter().zip(vr) {
        tail += *a as f64 * *b as f64;
    }
    acc.iter().sum::<f64>() + tail
}

/// Cosine similarity of two unit vectors (their inner product).
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(dot(u, v))
}

/// Scales `row` to unit L2 norm. Fails on zero or non-finite rows.
pub fn normalize_row(row: &mut [f32]) -> std::result::Result<(), &'static str> {
    if row.iter().any(|x| !x.is_finite()) {
        return Err("non-finite value");
    }
    let norm = dot(row, row).sqrt();
    if norm == 0.0 {
        return Err("zero norm");
    }
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        for x in row.iter_mut() {
            *x = (*x as f64 / norm) as f32;
        }
    }
    Ok(())
}

/// Raw contents of an EMB1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct Emb1 {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Emb1 {
    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic, expected EMB1".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported EMB1 version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("header size overflow".into()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(Error::Format(format!(
                "header declares {count}x{dim} floats ({expected} bytes) but body has {} bytes",
                body.len()
            )));
        }
        if dim == 0 && count > 0 {
            return Err(Error::Format("zero dimension".into()));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Emb1 { dim, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Emb1::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocRange {
    pub doc_id: String,
    pub start: usize,
    pub len: usize,
}

/// Unit-normalized segment embeddings of one corpus side, with per-document
/// row ranges.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    side: Side,
    dim: usize,
    data: Vec<f32>,
    ranges: Vec<DocRange>,
    by_id: HashMap<String, usize>,
}

impl EmbeddingStore {
    /// Validates and normalizes `data` against the document index.
    pub fn from_parts(side: Side, dim: usize, mut data: Vec<f32>, index: &[IndexEntry]) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(Error::Consistency("empty embedding file".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Consistency(format!(
                "{} floats is not a multiple of dim {dim}",
                data.len()
            )));
        }
        let count = data.len() / dim;
        let mut ranges = Vec::with_capacity(index.len());
        let mut by_id = HashMap::with_capacity(index.len());
        let mut next = 0;
        for e in index {
            if e.start_line != next {
                return Err(Error::Consistency(format!(
                    "document {} starts at row {} but {next} was expected",
                    e.doc_id, e.start_line
                )));
            }
            if by_id.insert(e.doc_id.clone(), ranges.len()).is_some() {
                return Err(Error::Consistency(format!("duplicate doc_id {} in index", e.doc_id)));
            }
            ranges.push(DocRange {
                doc_id: e.doc_id.clone(),
                start: e.start_line,
                len: e.n_segments,
            });
            next += e.n_segments;
        }
        if next != count {
            return Err(Error::Consistency(format!(
                "index lists {next} segments but embedding file has {count} rows"
            )));
        }
        for (i, row) in data.chunks_exact_mut(dim).enumerate() {
            normalize_row(row).map_err(|why| Error::Data(format!("embedding row {i}: {why}")))?;
        }
        Ok(EmbeddingStore {
            side,
            dim,
            data,
            ranges,
            by_id,
        })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn ranges(&self) -> &[DocRange] {
        &self.ranges
    }

    pub fn all_rows(&self) -> Rows<'_> {
        Rows::new(&self.data, self.dim)
    }

    pub fn doc_rows(&self, doc_id: &str) -> Option<Rows<'_>> {
        let r = &self.ranges[*self.by_id.get(doc_id)?];
        Some(Rows::new(&self.data[r.start * self.dim..(r.start + r.len) * self.dim], self.dim))
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    pub fn to_emb1(&self) -> Emb1 {
        Emb1 {
            dim: self.dim,
            data: self.data.clone(),
        }
    }
}

/// Loads an EMB1 file and cross-checks it against a segmentation sidecar index.
pub fn read_emb1(emb_path: impl AsRef<Path>, index_path: impl AsRef<Path>, side: Side) -> Result<EmbeddingStore> {
    let emb = Emb1::read(emb_path)?;
    let index = read_index(index_path)?;
    EmbeddingStore::from_parts(side, emb.dim, emb.data, &index)
}
