//! Raw little-endian mask payloads with a JSON sidecar, and rater manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use consensus_core::{BinaryMask, Grid, Neighborhood, RaterStack, SoftMask};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Binary,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub dims: Vec<usize>,
    pub order: String,
    pub dtype: Dtype,
    pub kind: MaskKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskData {
    Binary(Vec<bool>),
    Soft(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskFile {
    pub dims: Vec<usize>,
    pub data: MaskData,
}

pub fn sidecar_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Format(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

impl MaskFile {
    pub fn from_binary(mask: &BinaryMask) -> Self {
        Self {
            dims: mask.grid().dims().to_vec(),
            data: MaskData::Binary(mask.values().to_vec()),
        }
    }

    pub fn from_soft(mask: &SoftMask) -> Self {
        Self {
            dims: mask.grid().dims().to_vec(),
            data: MaskData::Soft(mask.values().to_vec()),
        }
    }

    pub fn header(&self) -> MaskHeader {
        let (dtype, kind) = match self.data {
            MaskData::Binary(_) => (Dtype::U8, MaskKind::Binary),
            MaskData::Soft(_) => (Dtype::F64, MaskKind::Soft),
        };
        MaskHeader {
            dims: self.dims.clone(),
            order: "row-major".into(),
            dtype,
            kind,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        match &self.data {
            MaskData::Binary(v) => v.iter().map(|&b| b as u8).collect(),
            MaskData::Soft(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let header = serde_json::to_vec_pretty(&self.header()).expect("header serializes");
        write_atomic(path, &self.payload())?;
        write_atomic(&sidecar_path(path), &header)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let side = sidecar_path(path);
        let text = fs::read(&side).map_err(|e| CliError::io(&side, e))?;
        let header: MaskHeader = serde_json::from_slice(&text)
            .map_err(|e| CliError::Format(format!("{}: {e}", side.display())))?;
        if header.order != "row-major" {
            return Err(CliError::Format(format!(
                "{}: unsupported order '{}'",
                side.display(),
                header.order
            )));
        }
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let n = header
            .dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CliError::Format(format!("{}: dims overflow", side.display())))?;
        let data = match (header.dtype, header.kind) {
            (Dtype::U8, MaskKind::Binary) => {
                if bytes.len() != n {
                    return Err(CliError::Format(format!(
                        "{}: payload has {} bytes, expected {n}",
                        path.display(),
                        bytes.len()
                    )));
                }
                if let Some(pos) = bytes.iter().position(|&b| b > 1) {
                    return Err(CliError::Format(format!(
                        "{}: value {} at {pos} is not 0/1",
                        path.display(),
                        bytes[pos]
                    )));
                }
                MaskData::Binary(bytes.iter().map(|&b| b == 1).collect())
            }
            (Dtype::F64, MaskKind::Soft) => {
                if bytes.len() != n * 8 {
                    return Err(CliError::Format(format!(
                        "{}: payload has {} bytes, expected {}",
                        path.display(),
                        bytes.len(),
                        n * 8
                    )));
                }
                MaskData::Soft(
                    bytes
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                        .collect(),
                )
            }
            (dtype, kind) => {
                return Err(CliError::Format(format!(
                    "{}: dtype {dtype:?} does not match kind {kind:?}",
                    side.display()
                )))
            }
        };
        Ok(Self {
            dims: header.dims,
            data,
        })
    }

    pub fn into_binary(self, neighborhood: Neighborhood) -> Result<BinaryMask, CliError> {
        let grid = Grid::new(self.dims, neighborhood)?;
        match self.data {
            MaskData::Binary(v) => Ok(BinaryMask::new(grid, v)?),
            MaskData::Soft(_) => Err(CliError::Format("expected a binary mask".into())),
        }
    }

    /// Soft view of either kind.
    pub fn into_soft(self, neighborhood: Neighborhood) -> Result<SoftMask, CliError> {
        let grid = Grid::new(self.dims, neighborhood)?;
        match self.data {
            MaskData::Binary(v) => Ok(BinaryMask::new(grid, v)?.to_soft()),
            MaskData::Soft(v) => Ok(SoftMask::new(grid, v)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub dims: Vec<usize>,
    pub neighborhood: Neighborhood,
    /// Rater payload paths, relative to the manifest directory.
    pub raters: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub path: PathBuf,
    pub stack: RaterStack,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<LoadedManifest, CliError> {
        let text = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let manifest: Manifest = serde_json::from_slice(&text)
            .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
        if manifest.raters.is_empty() {
            return Err(CliError::Format(format!("{}: no raters", path.display())));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let mut masks = Vec::with_capacity(manifest.raters.len());
        for r in &manifest.raters {
            let file = MaskFile::read(&base.join(r))?;
            if file.dims != manifest.dims {
                return Err(CliError::Format(format!(
                    "{r}: dims {:?} differ from manifest dims {:?}",
                    file.dims, manifest.dims
                )));
            }
            masks.push(file.into_binary(manifest.neighborhood)?);
        }
        let stack = RaterStack::new(masks)?;
        Ok(LoadedManifest {
            manifest,
            path: path.to_path_buf(),
            stack,
        })
    }

    /// Writes every rater as `rater_<k>.u8` next to `manifest.json` in `dir`.
    pub fn write_stack(dir: &Path, name: &str, stack: &RaterStack) -> Result<PathBuf, CliError> {
        let mut raters = Vec::with_capacity(stack.raters());
        for (k, m) in stack.masks().iter().enumerate() {
            let file = format!("rater_{k}.u8");
            MaskFile::from_binary(m).write(&dir.join(&file))?;
            raters.push(file);
        }
        let manifest = Manifest {
            name: name.to_string(),
            dims: stack.grid().dims().to_vec(),
            neighborhood: stack.grid().neighborhood(),
            raters,
        };
        let path = dir.join("manifest.json");
        write_atomic(
            &path,
            &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(vec![2, 3], Neighborhood::N8).unwrap();
        let values = vec![0.0, 1.0 / 3.0, 0.5, 1.0, 1e-300, 0.999_999_999_9];
        let m = SoftMask::new(grid, values.clone()).unwrap();
        let path = dir.path().join("m.f64");
        MaskFile::from_soft(&m).write(&path).unwrap();
        let back = MaskFile::read(&path).unwrap().into_soft(Neighborhood::N8).unwrap();
        assert!(back.values().iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rejects_non_binary_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(vec![3], Neighborhood::N2).unwrap();
        let path = dir.path().join("m.u8");
        MaskFile::from_binary(&BinaryMask::zeros(grid)).write(&path).unwrap();
        fs::write(&path, [0u8, 2, 1]).unwrap();
        assert!(matches!(MaskFile::read(&path), Err(CliError::Format(_))));
    }
}
