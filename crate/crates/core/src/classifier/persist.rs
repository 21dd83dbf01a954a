//! Model file container.
//!
//! Layout (little endian):
//!
//! ```text
//! b"CLABMODL"  u32 version  u32 header_len  header (JSON)
//! per head:    f64 bias  u32 nnz  nnz x (u32 index, f64 weight)
//! b"END!"
//! ```
//!
//! Weights are stored sparsely and always as `f64`, so an `f64` model round-trips bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, ClassifierModel, HasherConfig, Mode, ProvenanceStage};
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CLABMODL";
const TRAILER: &[u8; 4] = b"END!";

#[derive(Serialize, Deserialize)]
struct Header {
    mode: Mode,
    labels: Vec<String>,
    hasher: HasherConfig,
    decision_threshold: f64,
    scalar: String,
    provenance: Vec<ProvenanceStage>,
}

pub fn save_model<S: Scalar>(model: &ClassifierModel<S>, path: &Path) -> Result<(), ClassifierError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_model(model, &mut out)?;
    out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    Ok(())
}

pub(crate) fn write_model<S: Scalar, W: Write>(model: &ClassifierModel<S>, out: &mut W) -> Result<(), ClassifierError> {
    let header = Header {
        mode: model.mode,
        labels: model.labels.clone(),
        hasher: model.hasher,
        decision_threshold: model.decision_threshold.as_f64(),
        scalar: S::NAME.to_string(),
        provenance: model.provenance.clone(),
    };
    let header = serde_json::to_vec(&header).map_err(std::io::Error::from)?;
    out.write_all(MAGIC)?;
    out.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    for (weights, bias) in model.weights.iter().zip(&model.bias) {
        out.write_all(&bias.as_f64().to_le_bytes())?;
        let nonzero: Vec<(u32, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != S::zero())
            .map(|(i, w)| (i as u32, w.as_f64()))
            .collect();
        out.write_all(&(nonzero.len() as u32).to_le_bytes())?;
        for (i, w) in nonzero {
            out.write_all(&i.to_le_bytes())?;
            out.write_all(&w.to_le_bytes())?;
        }
    }
    out.write_all(TRAILER)?;
    out.flush()?;
    Ok(())
}

fn corrupt(e: std::io::Error) -> ClassifierError {
    if e.kind() == ErrorKind::UnexpectedEof {
        ClassifierError::CorruptModel("file is truncated".into())
    } else {
        ClassifierError::Io(e)
    }
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N], ClassifierError> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(corrupt)?;
    Ok(buf)
}

pub fn load_model<S: Scalar>(path: &Path) -> Result<ClassifierModel<S>, ClassifierError> {
    read_model(&mut BufReader::new(File::open(path)?))
}

pub(crate) fn read_model<S: Scalar, R: Read>(input: &mut R) -> Result<ClassifierModel<S>, ClassifierError> {
    if &read_array::<8, _>(input)? != MAGIC {
        return Err(ClassifierError::CorruptModel("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(read_array(input)?);
    if version != MODEL_FORMAT_VERSION {
        return Err(ClassifierError::VersionMismatch {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let header_len = u32::from_le_bytes(read_array(input)?) as usize;
    if header_len > 1 << 24 {
        return Err(ClassifierError::CorruptModel(format!(
            "implausible header length {header_len}"
        )));
    }
    let mut header = vec![0u8; header_len];
    input.read_exact(&mut header).map_err(corrupt)?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| ClassifierError::CorruptModel(format!("bad header: {e}")))?;
    if !(1..=28).contains(&header.hasher.dim_bits) {
        return Err(ClassifierError::CorruptModel("bad hasher dimension".into()));
    }
    let dim = header.hasher.dim();
    let mut weights = Vec::with_capacity(header.labels.len());
    let mut bias = Vec::with_capacity(header.labels.len());
    for _ in 0..header.labels.len() {
        bias.push(S::of(f64::from_le_bytes(read_array(input)?)));
        let nnz = u32::from_le_bytes(read_array(input)?) as usize;
        if nnz > dim {
            return Err(ClassifierError::CorruptModel(format!(
                "{nnz} weights exceed dimension {dim}"
            )));
        }
        let mut dense = vec![S::zero(); dim];
        for _ in 0..nnz {
            let i = u32::from_le_bytes(read_array(input)?) as usize;
            let w = f64::from_le_bytes(read_array(input)?);
            let slot = dense
                .get_mut(i)
                .ok_or_else(|| ClassifierError::CorruptModel(format!("weight index {i} out of range")))?;
            *slot = S::of(w);
        }
        weights.push(dense);
    }
    if &read_array::<4, _>(input)? != TRAILER {
        return Err(ClassifierError::CorruptModel("missing trailer".into()));
    }
    let model = ClassifierModel {
        mode: header.mode,
        labels: header.labels,
        hasher: header.hasher,
        weights,
        bias,
        decision_threshold: S::of(header.decision_threshold),
        provenance: header.provenance,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ClassifierModel<f64> {
        let mut m = ClassifierModel::zeros(Mode::Transparent, HasherConfig { dim_bits: 10, seed: 3 });
        m.weights[2][17] = 0.1 + 0.2;
        m.weights[6][1023] = -1e-300;
        m.bias[0] = -2.5;
        m.decision_threshold = 0.4;
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let back: ClassifierModel<f64> = read_model(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_is_corrupt() {
        let mut buf = Vec::new();
        write_model(&sample(), &mut buf).unwrap();
        for cut in [3, 20, buf.len() - 1] {
            let r: Result<ClassifierModel<f64>, _> = read_model(&mut &buf[..cut]);
            assert!(matches!(r, Err(ClassifierError::CorruptModel(_))), "cut {cut}");
        }
    }

    #[test]
    fn other_version_is_rejected() {
        let mut buf = Vec::new();
        write_model(&sample(), &mut buf).unwrap();
        buf[8..12].copy_from_slice(&0u32.to_le_bytes());
        let r: Result<ClassifierModel<f64>, _> = read_model(&mut buf.as_slice());
        assert!(matches!(r, Err(ClassifierError::VersionMismatch { found: 0, .. })));
    }
}
