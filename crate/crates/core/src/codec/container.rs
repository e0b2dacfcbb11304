//! Manifest-plus-arrays container shared by the problem and archive files.
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 4     | magic                                     |
//! | 4     | version, u32 LE                           |
//! | 8     | manifest length `m`, u64 LE               |
//! | m     | manifest, UTF-8 JSON                      |
//! | ...   | payload: arrays at manifest offsets       |
//!
//! The manifest is `{"header": ..., "arrays": [...]}`; each array entry names
//! its dtype (`f64` or `u64`), shape and byte offset from the payload start.
//! Values are 8-byte little-endian, row-major.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONTAINER_VERSION: u32 = 1;
const PREFIX_BYTES: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    U64(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub rows: usize,
    pub cols: usize,
    pub data: ArrayData,
}

impl Array {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: ArrayData::F64(data),
        }
    }

    pub fn f64_row(values: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: ArrayData::F64(values),
        }
    }

    pub fn u64_row(values: Vec<u64>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: ArrayData::U64(values),
        }
    }

    fn len(&self) -> usize {
        match &self.data {
            ArrayData::F64(v) => v.len(),
            ArrayData::U64(v) => v.len(),
        }
    }

    fn dtype(&self) -> &'static str {
        match self.data {
            ArrayData::F64(_) => "f64",
            ArrayData::U64(_) => "u64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: String,
    rows: u64,
    cols: u64,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest<H> {
    header: H,
    arrays: Vec<ArrayEntry>,
}

/// Serialized manifest size in bytes, without writing anything.
pub fn manifest_bytes<H: Serialize>(header: &H, arrays: &[(String, Array)]) -> Result<usize> {
    Ok(encode_manifest(header, arrays)?.len())
}

fn encode_manifest<H: Serialize>(header: &H, arrays: &[(String, Array)]) -> Result<Vec<u8>> {
    let mut offset = 0u64;
    let mut entries = Vec::with_capacity(arrays.len());
    for (name, a) in arrays {
        if a.rows * a.cols != a.len() {
            return Err(Error::Invariant(format!(
                "array {name} declares {}x{} but holds {} values",
                a.rows,
                a.cols,
                a.len()
            )));
        }
        entries.push(ArrayEntry {
            name: name.clone(),
            dtype: a.dtype().into(),
            rows: a.rows as u64,
            cols: a.cols as u64,
            offset,
        });
        offset += 8 * a.len() as u64;
    }
    let manifest = Manifest {
        header,
        arrays: entries,
    };
    serde_json::to_vec(&manifest).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_container<W: Write, H: Serialize>(
    w: &mut W,
    magic: &[u8; 4],
    header: &H,
    arrays: &[(String, Array)],
) -> Result<()> {
    let manifest = encode_manifest(header, arrays)?;
    w.write_all(magic)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    w.write_all(&manifest)?;
    let mut buf = Vec::new();
    for (_, a) in arrays {
        buf.clear();
        match &a.data {
            ArrayData::F64(v) => v
                .iter()
                .for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U64(v) => v
                .iter()
                .for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Decoded container: typed header plus named arrays.
#[derive(Debug)]
pub struct Container<H> {
    pub header: H,
    pub manifest_bytes: usize,
    arrays: BTreeMap<String, Array>,
}

impl<H> Container<H> {
    fn take(&mut self, name: &str) -> Result<Array> {
        self.arrays
            .remove(name)
            .ok_or_else(|| Error::Format(format!("missing array {name}")))
    }

    pub fn take_matrix(&mut self, name: &str) -> Result<DMatrix<f64>> {
        let a = self.take(name)?;
        match a.data {
            ArrayData::F64(v) => Ok(DMatrix::from_row_slice(a.rows, a.cols, &v)),
            ArrayData::U64(_) => Err(Error::Format(format!("array {name} is not f64"))),
        }
    }

    pub fn take_f64(&mut self, name: &str) -> Result<Vec<f64>> {
        match self.take(name)?.data {
            ArrayData::F64(v) => Ok(v),
            ArrayData::U64(_) => Err(Error::Format(format!("array {name} is not f64"))),
        }
    }

    pub fn take_u64(&mut self, name: &str) -> Result<Vec<u64>> {
        match self.take(name)?.data {
            ArrayData::U64(v) => Ok(v),
            ArrayData::F64(_) => Err(Error::Format(format!("array {name} is not u64"))),
        }
    }
}

pub fn read_container<R: Read, H: DeserializeOwned>(
    r: &mut R,
    magic: &[u8; 4],
) -> Result<Container<H>> {
    let mut prefix = [0u8; PREFIX_BYTES as usize];
    r.read_exact(&mut prefix)
        .map_err(|_| Error::Format("file too short for a header".into()))?;
    if &prefix[0..4] != magic {
        return Err(Error::Format(format!(
            "bad magic: expected {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(prefix[4..8].try_into().expect("4 bytes"));
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let manifest_len = u64::from_le_bytes(prefix[8..16].try_into().expect("8 bytes"));
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if manifest_len > rest.len() as u64 {
        return Err(Error::Corrupt {
            offset: PREFIX_BYTES,
            message: format!(
                "manifest declares {manifest_len} bytes, {} available",
                rest.len()
            ),
        });
    }
    let (manifest_raw, payload) = rest.split_at(manifest_len as usize);
    let manifest: Manifest<H> = serde_json::from_slice(manifest_raw)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    let payload_start = PREFIX_BYTES + manifest_len;
    let mut arrays = BTreeMap::new();
    for e in manifest.arrays {
        let count = e
            .rows
            .checked_mul(e.cols)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::Format(format!("array {} is too large", e.name)))?;
        let end = e.offset.saturating_add(count);
        if end > payload.len() as u64 {
            return Err(Error::Corrupt {
                offset: payload_start + e.offset,
                message: format!("array {} runs past the end of the file", e.name),
            });
        }
        let bytes = &payload[e.offset as usize..end as usize];
        let words = bytes
            .chunks_exact(8)
            .map(|c| c.try_into().expect("8 bytes"));
        let data = match e.dtype.as_str() {
            "f64" => ArrayData::F64(words.map(f64::from_le_bytes).collect()),
            "u64" => ArrayData::U64(words.map(u64::from_le_bytes).collect()),
            other => return Err(Error::Format(format!("unknown dtype {other}"))),
        };
        let array = Array {
            rows: e.rows as usize,
            cols: e.cols as usize,
            data,
        };
        if arrays.insert(e.name.clone(), array).is_some() {
            return Err(Error::Format(format!("duplicate array {}", e.name)));
        }
    }
    Ok(Container {
        header: manifest.header,
        manifest_bytes: manifest_len as usize,
        arrays,
    })
}
