//! Tensor directory format.
//!
//! A directory holds one little-endian `f32` file per tensor, named
//! `<name>.f32`, and a `manifest.txt` with one `name, dtype, shape` line per
//! tensor, e.g. `g.stem.weight, f32, [64, 3, 7, 7]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use tch::{Kind, Tensor};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.txt";

pub fn write_tensors(dir: &Path, tensors: &[(String, Tensor)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (name, t) in tensors {
        let shape = t.size();
        let data: Vec<f32> = Vec::try_from(t.detach().to_kind(Kind::Float).reshape([-1]))?;
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(format!("{name}.f32"));
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        manifest.push_str(&format!("{name}, f32, {shape:?}\n"));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub shape: Vec<i64>,
    pub data: Vec<f32>,
}

impl StoredTensor {
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_slice(&self.data).view(self.shape.as_slice())
    }
}

fn parse_line(dir: &Path, line: &str) -> Result<(String, Vec<i64>)> {
    let bad = || Error::checkpoint(dir, format!("malformed manifest line {line:?}"));
    let mut parts = line.splitn(3, ',');
    let name = parts.next().ok_or_else(bad)?.trim().to_string();
    let dtype = parts.next().ok_or_else(bad)?.trim();
    let shape = parts.next().ok_or_else(bad)?.trim();
    if dtype != "f32" {
        return Err(Error::checkpoint(dir, format!("{name}: unsupported dtype {dtype}")));
    }
    let inner = shape
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(bad)?;
    let dims = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<i64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    Ok((name, dims))
}

pub fn read_tensors(dir: &Path) -> Result<BTreeMap<String, StoredTensor>> {
    let path = dir.join(MANIFEST);
    let manifest = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BTreeMap::new();
    for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
        let (name, shape) = parse_line(dir, line)?;
        let path = dir.join(format!("{name}.f32"));
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let numel: i64 = shape.iter().product();
        if bytes.len() as i64 != numel * 4 {
            return Err(Error::checkpoint(
                dir,
                format!("{name}: expected {} bytes, found {}", numel * 4, bytes.len()),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.insert(name, StoredTensor { shape, data });
    }
    Ok(out)
}

/// Loads `dir` into existing tensors after validating that names and shapes
/// match one-to-one.
pub fn read_into(dir: &Path, targets: &[(String, Tensor)]) -> Result<()> {
    let stored = read_tensors(dir)?;
    for (name, _) in targets {
        if !stored.contains_key(name) {
            return Err(Error::checkpoint(dir, format!("missing tensor {name}")));
        }
    }
    if stored.len() != targets.len() {
        let known: Vec<&String> = targets.iter().map(|(n, _)| n).collect();
        let extra = stored.keys().find(|k| !known.contains(k));
        return Err(Error::checkpoint(
            dir,
            format!("unexpected tensor {}", extra.map(String::as_str).unwrap_or("?")),
        ));
    }
    tch::no_grad(|| {
        for (name, t) in targets {
            let s = &stored[name];
            if s.shape != t.size() {
                return Err(Error::checkpoint(
                    dir,
                    format!("{name}: shape {:?} does not match model {:?}", s.shape, t.size()),
                ));
            }
            let mut dst = t.shallow_clone();
            dst.copy_(&s.to_tensor().to_kind(t.kind()));
        }
        Ok(())
    })
}
