//! On-disk formats: the binary tensor file, dataset manifests and model
//! checkpoints.
//!
//! A tensor file is
//!
//! ```text
//! "NOPD" | version u16 | dtype u8 (1 = f32, 2 = f64) | rank u8 | rank × extent u64 | values
//! ```
//!
//! with every number little-endian and values in row-major order. Several
//! tensors may follow each other in one stream.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{parameter_layout, UnoModel, UnoSchedule};
use crate::scalar::Scalar;
use crate::tensorcore::Tensor;
use crate::training::NormStats;

pub const MAGIC: &[u8; 4] = b"NOPD";
pub const FORMAT_VERSION: u16 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            c => Err(Error::Format(format!("unknown dtype code {c}"))),
        }
    }

    pub fn of<T: Scalar>() -> Self {
        Self::from_code(T::DTYPE_CODE).expect("scalar types carry valid codes")
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

/// Writes `t` in its own precision.
pub fn write_tensor<T: Scalar, W: Write>(w: &mut W, t: &Tensor<T>) -> Result<()> {
    let rank = u8::try_from(t.rank()).map_err(|_| Error::Format(format!("rank {} exceeds 255", t.rank())))?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[T::DTYPE_CODE, rank])?;
    for &e in t.shape() {
        w.write_all(&(e as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * Dtype::of::<T>().size());
    match Dtype::of::<T>() {
        Dtype::F32 => t.data().iter().for_each(|v| buf.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes())),
        Dtype::F64 => t.data().iter().for_each(|v| buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes())),
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R) -> Result<TensorHeader> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("bad magic, not a tensor file".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("format version {version}, this build reads {FORMAT_VERSION}")));
    }
    let dtype = Dtype::from_code(head[6])?;
    let mut shape = Vec::with_capacity(head[7] as usize);
    for _ in 0..head[7] {
        let mut e = [0u8; 8];
        r.read_exact(&mut e)?;
        let e = usize::try_from(u64::from_le_bytes(e)).map_err(|_| Error::Format("extent overflows usize".into()))?;
        shape.push(e);
    }
    Ok(TensorHeader { dtype, shape })
}

/// Reads one tensor, converting to `T` if the stored precision differs.
pub fn read_tensor<T: Scalar, R: Read>(r: &mut R) -> Result<Tensor<T>> {
    let header = read_header(r)?;
    let len = header
        .shape
        .iter()
        .try_fold(1usize, |a, &e| a.checked_mul(e))
        .ok_or_else(|| Error::Format("element count overflows".into()))?;
    let mut bytes = vec![0u8; len * header.dtype.size()];
    r.read_exact(&mut bytes)?;
    let data: Vec<T> = match header.dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| T::from_f32(f32::from_le_bytes(c.try_into().expect("4 bytes"))).expect("f32 converts"))
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect(),
    };
    Tensor::new(header.shape, data)
}

pub fn save_tensor<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let mut r = BufReader::new(File::open(path)?);
    let t = read_tensor(&mut r)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format(format!("{}: trailing bytes after the tensor", path.display())));
    }
    Ok(t)
}

pub fn peek_header(path: &Path) -> Result<TensorHeader> {
    read_header(&mut BufReader::new(File::open(path)?))
}

/// One file of a sample, path relative to the dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub role: String,
    pub path: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: usize,
    pub seed: u64,
    pub files: Vec<FileEntry>,
}

impl SampleEntry {
    pub fn file(&self, role: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.role == role)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedSample {
    pub index: usize,
    pub reason: String,
}

/// `manifest.json` of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u16,
    /// `geology`, `simulation` or `prediction`.
    pub kind: String,
    pub root_seed: u64,
    /// Configuration snapshots by name.
    #[serde(default)]
    pub configs: BTreeMap<String, serde_json::Value>,
    /// Units by file role.
    #[serde(default)]
    pub units: BTreeMap<String, String>,
    pub samples: Vec<SampleEntry>,
    #[serde(default)]
    pub failed: Vec<FailedSample>,
    /// Indices into `samples` of the train/validation split, when assigned.
    #[serde(default)]
    pub split: Option<crate::training::Split>,
    /// Free-form extras (recording times, sensor positions, ...).
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(kind: &str, root_seed: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: kind.into(),
            root_seed,
            configs: BTreeMap::new(),
            units: BTreeMap::new(),
            samples: Vec::new(),
            failed: Vec::new(),
            split: None,
            extra: BTreeMap::new(),
        }
    }
}

/// Writes a tensor into `dir` and returns its manifest entry.
pub fn store<T: Scalar>(dir: &Path, role: &str, name: &str, t: &Tensor<T>) -> Result<FileEntry> {
    save_tensor(&dir.join(name), t)?;
    Ok(FileEntry { role: role.into(), path: name.into(), dtype: Dtype::of::<T>(), shape: t.shape().to_vec() })
}

/// Writes the manifest last and atomically, so a crash never leaves a
/// manifest describing missing files.
pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    fs::write(&tmp, serde_json::to_string_pretty(manifest)?)?;
    fs::rename(tmp, dir.join(MANIFEST_FILE))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("manifest version {}, this build reads {FORMAT_VERSION}", m.format_version)));
    }
    Ok(m)
}

/// Checks that every file listed in the manifest exists and that its header
/// matches the entry.
pub fn verify_dataset(dir: &Path, manifest: &Manifest) -> Result<()> {
    for s in &manifest.samples {
        for f in &s.files {
            let h = peek_header(&dir.join(&f.path))?;
            if h.dtype != f.dtype || h.shape != f.shape {
                return Err(Error::Format(format!("{}: header {:?} disagrees with manifest", f.path, h)));
            }
        }
    }
    Ok(())
}

/// Loads the tensor of `role` for a manifest sample.
pub fn load_role<T: Scalar>(dir: &Path, sample: &SampleEntry, role: &str) -> Result<Tensor<T>> {
    let f = sample
        .file(role)
        .ok_or_else(|| Error::Format(format!("sample {} has no `{role}` file", sample.index)))?;
    let t = load_tensor(&dir.join(&f.path))?;
    t.expect_shape("stored tensor", &f.shape)?;
    Ok(t)
}

pub const CHECKPOINT_META: &str = "model.json";
pub const CHECKPOINT_WEIGHTS: &str = "weights.nopd";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u16,
    pub schedule: UnoSchedule,
    pub norm: Option<NormStats>,
    pub seed: u64,
    pub parameter_count: usize,
    /// Tensor names in storage order.
    pub parameters: Vec<String>,
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Writes `model.json` and `weights.nopd` (all tensors, f64, in storage order) into `dir`.
pub fn save_checkpoint<T: Scalar>(dir: &Path, model: &UnoModel<T>, extra: BTreeMap<String, serde_json::Value>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        schedule: model.schedule.clone(),
        norm: model.norm,
        seed: model.seed,
        parameter_count: model.parameter_count(),
        parameters: parameter_layout(&model.schedule).into_iter().map(|(n, _)| n).collect(),
        extra,
    };
    let mut w = BufWriter::new(File::create(dir.join(CHECKPOINT_WEIGHTS))?);
    for p in &model.params {
        write_tensor(&mut w, &p.cast::<f64>())?;
    }
    w.flush()?;
    fs::write(dir.join(CHECKPOINT_META), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(UnoModel<T>, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(dir.join(CHECKPOINT_META))?)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("checkpoint version {}, this build reads {FORMAT_VERSION}", meta.format_version)));
    }
    let mut model = UnoModel::<T>::zeros(meta.schedule.clone())?;
    let mut r = BufReader::new(File::open(dir.join(CHECKPOINT_WEIGHTS))?);
    for (p, (name, shape)) in model.params.iter_mut().zip(parameter_layout(&meta.schedule)) {
        let t = read_tensor::<T, _>(&mut r)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::Format(format!("checkpoint tensor {name} has shape {:?}, schedule wants {shape:?}", t.shape())));
        }
        *p = t;
    }
    model.norm = meta.norm;
    model.seed = meta.seed;
    Ok((model, meta))
}

/// `dir/name`, as a manifest-relative string.
pub fn sample_file_name(prefix: &str, index: usize) -> String {
    format!("{prefix}_{index:06}.nopd")
}

pub fn dataset_path(dir: &Path, entry: &FileEntry) -> PathBuf {
    dir.join(&entry.path)
}
