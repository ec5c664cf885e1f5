//! Featurized dataset files.
//!
//! A table is stored as two files: a little-endian binary blob holding every
//! floating-point array, and a JSON sidecar (`<path>.json`) with the
//! descriptor parameters, column names, ids and the sha256 of the blob.
//! Floats never pass through text, so reloading is bit-exact.
//!
//! Blob layout: the 8-byte magic `MKNNFEAT`, a `u32` version, then four
//! blocks (global matrix, labels, low-level labels, stacked local rows),
//! each written as `rows: u64, cols: u64` followed by `rows·cols` f64
//! values in row-major order. Absent blocks have shape `0×0`.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DescriptorBatch, DescriptorParams, LocalDescriptor};
use crate::dataset::{Composition, Element, LabelKind, LabeledSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAGIC: &[u8; 8] = b"MKNNFEAT";
const VERSION: u32 = 1;

/// A featurized dataset: descriptors plus the metadata needed to use them
/// without the original structures.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub params: DescriptorParams,
    pub ids: Vec<String>,
    pub compositions: Vec<Option<Composition>>,
    pub n_atoms: Vec<usize>,
    pub labels: Vec<f64>,
    pub label_kind: LabelKind,
    pub low_level_labels: Option<Vec<f64>>,
    pub global: Matrix,
    pub local: Option<Vec<LocalDescriptor>>,
}

impl FeatureTable {
    pub fn from_labeled(set: &LabeledSet, params: &DescriptorParams) -> Result<Self> {
        let f = super::featurize(&set.structures, params)?;
        Ok(FeatureTable {
            params: params.clone(),
            ids: set.structures.iter().map(|s| s.id.clone()).collect(),
            compositions: set.structures.iter().map(|s| s.composition.clone()).collect(),
            n_atoms: set.structures.iter().map(|s| s.len()).collect(),
            labels: set.labels.clone(),
            label_kind: set.label_kind,
            low_level_labels: set.low_level_labels.clone(),
            global: f.global,
            local: f.local,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Per-atom descriptors when available, pooled ones otherwise.
    pub fn batch(&self, prefer_local: bool) -> DescriptorBatch {
        match (&self.local, prefer_local) {
            (Some(l), true) => DescriptorBatch::Local(l.clone()),
            _ => DescriptorBatch::Global(self.global.clone()),
        }
    }

    /// Final-property value for item `i` given a prediction of its target.
    pub fn reconstruct(&self, i: usize, predicted_target: f64) -> f64 {
        match &self.low_level_labels {
            Some(low) if self.label_kind == LabelKind::Delta => low[i] + predicted_target,
            _ => predicted_target,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            params: self.params.clone(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            compositions: idx.iter().map(|&i| self.compositions[i].clone()).collect(),
            n_atoms: idx.iter().map(|&i| self.n_atoms[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            label_kind: self.label_kind,
            low_level_labels: self
                .low_level_labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            global: self.global.select_rows(idx),
            local: self
                .local
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i].clone()).collect()),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.ids.len();
        let ok = self.compositions.len() == n
            && self.n_atoms.len() == n
            && self.labels.len() == n
            && self.global.rows() == n
            && self.low_level_labels.as_ref().is_none_or(|l| l.len() == n)
            && self.local.as_ref().is_none_or(|l| l.len() == n);
        if ok {
            Ok(())
        } else {
            Err(Error::shape("feature table columns differ in length"))
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    params: DescriptorParams,
    layout_id: u64,
    columns: Vec<String>,
    ids: Vec<String>,
    compositions: Vec<Option<Composition>>,
    n_atoms: Vec<usize>,
    label_kind: LabelKind,
    has_low_level_labels: bool,
    /// Centre element of every local row, per structure; absent for CM/BoB.
    center_elements: Option<Vec<Vec<Element>>>,
    blob_sha256: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_block(out: &mut Vec<u8>, rows: usize, cols: usize, data: &[f64]) {
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Serialization(format!(
                "{} is truncated",
                self.path.display()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn block(&mut self) -> Result<Matrix> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let len = rows
            .checked_mul(cols)
            .filter(|l| l.checked_mul(8).is_some_and(|b| b <= self.buf.len()))
            .ok_or_else(|| Error::Serialization(format!("{}: corrupt block header", self.path.display())))?;
        let bytes = self.take(len * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

/// Writes `table` to `path` and its sidecar to `<path>.json`.
pub fn save_feature_table(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    table.validate()?;
    let n = table.len();
    let mut blob = Vec::new();
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(&VERSION.to_le_bytes());
    write_block(&mut blob, n, table.global.cols(), table.global.as_slice());
    write_block(&mut blob, n, 1, &table.labels);
    match &table.low_level_labels {
        Some(l) => write_block(&mut blob, n, 1, l),
        None => write_block(&mut blob, 0, 0, &[]),
    }
    match &table.local {
        Some(locals) => {
            let width = locals.first().map_or(0, |d| d.width());
            let total: usize = locals.iter().map(|d| d.n_atoms()).sum();
            let mut data = Vec::with_capacity(total * width);
            for d in locals {
                data.extend_from_slice(d.rows.as_slice());
            }
            write_block(&mut blob, total, width, &data);
        }
        None => write_block(&mut blob, 0, 0, &[]),
    }
    let sidecar = Sidecar {
        version: VERSION,
        params: table.params.clone(),
        layout_id: table.params.layout_id(),
        columns: table.params.column_names(),
        ids: table.ids.clone(),
        compositions: table.compositions.clone(),
        n_atoms: table.n_atoms.clone(),
        label_kind: table.label_kind,
        has_low_level_labels: table.low_level_labels.is_some(),
        center_elements: table
            .local
            .as_ref()
            .map(|l| l.iter().map(|d| d.center_elements.clone()).collect()),
        blob_sha256: hex_digest(&blob),
    };
    fs::write(path, &blob).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let file = fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &sidecar)?;
    w.flush().map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub fn load_feature_table(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let mut blob = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut blob))
        .map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sc: Sidecar = serde_json::from_str(&text)?;
    if sc.blob_sha256 != hex_digest(&blob) {
        return Err(Error::Serialization(format!(
            "{} does not match the checksum in its sidecar",
            path.display()
        )));
    }
    if sc.layout_id != sc.params.layout_id() {
        return Err(Error::Serialization("sidecar layout id does not match its parameters".into()));
    }
    let mut r = Reader { buf: &blob, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::Serialization(format!("{} is not a feature table", path.display())));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Serialization(format!("unsupported feature table version {version}")));
    }
    let global = r.block()?;
    let labels = r.block()?.into_vec();
    let low = r.block()?;
    let stacked = r.block()?;
    let low_level_labels = sc.has_low_level_labels.then(|| low.into_vec());
    let local = match sc.center_elements {
        Some(centers) => {
            let width = stacked.cols();
            let mut out = Vec::with_capacity(centers.len());
            let mut start = 0;
            for elements in centers {
                let end = start + elements.len();
                if end > stacked.rows() {
                    return Err(Error::Serialization("local rows shorter than the sidecar claims".into()));
                }
                let rows = Matrix::from_vec(
                    elements.len(),
                    width,
                    stacked.as_slice()[start * width..end * width].to_vec(),
                )?;
                out.push(LocalDescriptor::new(rows, elements, sc.layout_id)?);
                start = end;
            }
            Some(out)
        }
        None => None,
    };
    let table = FeatureTable {
        params: sc.params,
        ids: sc.ids,
        compositions: sc.compositions,
        n_atoms: sc.n_atoms,
        labels,
        label_kind: sc.label_kind,
        low_level_labels,
        global,
        local,
    };
    table.validate()?;
    Ok(table)
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
