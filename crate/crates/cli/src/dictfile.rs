//! Binary dictionary files.
//!
//! Layout, all little-endian: the magic bytes `CSSD`, a `u16` version (1),
//! `u32` modality count `N`, `u32` filter count `K`, `u32` filter side `q`,
//! then `N * K * q * q` `f64` values in (modality, filter, row, column) order.

use std::fs;
use std::path::Path;

use cssa::{Dictionary, DictionarySet};

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"CSSD";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 3 * 4;
const NORM_SLACK: f64 = 1e-9;

/// Serializes a dictionary set.
pub fn to_bytes(set: &DictionarySet) -> Vec<u8> {
    let (n, k, q) = (set.modalities(), set.filter_count(), set.side());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * k * q * q);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [n, k, q] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for d in set.dicts() {
        for v in d.to_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> usize {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
}

/// Parses and validates a serialized dictionary set. The error message is the
/// bare reason; [`load_dict`] attaches the path.
pub fn from_bytes(bytes: &[u8]) -> std::result::Result<DictionarySet, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()));
    }
    if bytes[..4] != MAGIC {
        return Err(format!("bad magic {:?}, expected {:?} (\"CSSD\")", &bytes[..4], MAGIC));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format!("unsupported version {version}, expected {VERSION}"));
    }
    let (n, k, q) = (read_u32(bytes, 6), read_u32(bytes, 10), read_u32(bytes, 14));
    if n == 0 || k == 0 || q == 0 {
        return Err(format!("empty dictionary: N = {n}, K = {k}, q = {q}"));
    }
    let per_dict = k * q * q;
    let expected = HEADER_LEN + 8 * n * per_dict;
    if bytes.len() != expected {
        return Err(format!(
            "payload length mismatch: file has {} bytes, header implies {expected}",
            bytes.len()
        ));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut dicts = Vec::with_capacity(n);
    for (m, chunk) in values.chunks_exact(per_dict).enumerate() {
        let d = Dictionary::from_flat(k, q, chunk).map_err(|e| e.to_string())?;
        for (kk, norm) in d.norms().into_iter().enumerate() {
            if !(norm <= 1.0 + NORM_SLACK) {
                return Err(format!("filter {kk} of modality {m} has norm {norm}, exceeding 1"));
            }
        }
        dicts.push(d);
    }
    DictionarySet::new(dicts).map_err(|e| e.to_string())
}

pub fn save_dict(set: &DictionarySet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(set)).map_err(|e| CliError::io(path, e))
}

pub fn load_dict(path: impl AsRef<Path>) -> Result<DictionarySet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    from_bytes(&bytes).map_err(|message| CliError::DictFormat {
        path: path.to_path_buf(),
        message,
    })
}
