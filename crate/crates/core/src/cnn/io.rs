//! Portable weight files.
//!
//! ```text
//! COGLOAD-WEIGHTS 1\n
//! {"architecture": {...}, "meta": {...}, "tensors": [...], "blob_bytes": N, "checksum": "sha256:..."}\n
//! <N bytes: little-endian f32 tensors in declared order>
//! ```
//!
//! The header is a single JSON line. Each tensor entry lists its name, shape and
//! byte offset into the blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, ModelMeta, ModelWeights, Params};
use crate::error::ModelError;
use crate::seed::sha256_hex;

const MAGIC: &str = "COGLOAD-WEIGHTS 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    flattened_features: usize,
    flatten_order: String,
    meta: ModelMeta,
    tensors: Vec<TensorEntry>,
    blob_bytes: usize,
    checksum: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serialize weights to bytes (header + blob).
pub fn encode(weights: &ModelWeights<f32>) -> Vec<u8> {
    let arch = *weights.arch();
    let mut blob = Vec::with_capacity(weights.params.len() * 4);
    for v in weights.params.as_slice() {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    let mut offset = 0;
    let tensors = arch
        .tensor_shapes()
        .into_iter()
        .map(|(name, shape)| {
            let bytes = shape.iter().product::<usize>() * 4;
            let e = TensorEntry {
                name: name.to_string(),
                shape,
                offset,
                bytes,
            };
            offset += bytes;
            e
        })
        .collect();
    let header = Header {
        architecture: arch,
        flattened_features: arch.flattened(),
        flatten_order: "channel_major".into(),
        meta: weights.meta.clone(),
        tensors,
        blob_bytes: blob.len(),
        checksum: format!("sha256:{}", sha256_hex(&blob)),
    };
    let mut out = Vec::with_capacity(blob.len() + 1024);
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(serde_json::to_string(&header).expect("header serializes").as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&blob);
    out
}

pub fn save_weights(weights: &ModelWeights<f32>, path: &Path) -> Result<(), ModelError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    fs::write(path, encode(weights)).map_err(io_err(path))
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let nl = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..nl], &bytes[nl + 1..]))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ModelWeights<f32>, ModelError> {
    let format = |reason: &str| ModelError::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let (magic, rest) = split_line(bytes).ok_or_else(|| format("missing header"))?;
    if magic != MAGIC.as_bytes() {
        return Err(format("not a weight file"));
    }
    let (header, blob) = split_line(rest).ok_or_else(|| ModelError::Checksum {
        path: path.to_path_buf(),
    })?;
    let header: Header =
        serde_json::from_slice(header).map_err(|e| format(&format!("bad header: {e}")))?;
    let expected = format!("sha256:{}", sha256_hex(blob));
    if blob.len() != header.blob_bytes || expected != header.checksum {
        return Err(ModelError::Checksum {
            path: path.to_path_buf(),
        });
    }
    let arch = header.architecture;
    if header.flattened_features != arch.flattened() {
        return Err(format(&format!(
            "header declares F = {} but the architecture gives {}",
            header.flattened_features,
            arch.flattened()
        )));
    }
    let shapes = arch.tensor_shapes();
    if header.tensors.len() != shapes.len() {
        return Err(format("wrong number of tensors"));
    }
    let mut offset = 0;
    for (entry, (name, shape)) in header.tensors.iter().zip(shapes.iter()) {
        let bytes = shape.iter().product::<usize>() * 4;
        if entry.name != *name || entry.shape != *shape || entry.offset != offset || entry.bytes != bytes {
            return Err(format(&format!(
                "tensor {} has shape {:?} at {}, architecture expects {name} {:?} at {offset}",
                entry.name, entry.shape, entry.offset, shape
            )));
        }
        offset += bytes;
    }
    if offset != blob.len() {
        return Err(format("blob size does not match tensor shapes"));
    }
    let data: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let params = Params::from_vec(arch, data)?;
    if !params.all_finite() {
        return Err(ModelError::NonFinite("weights"));
    }
    Ok(ModelWeights {
        params,
        meta: header.meta,
    })
}

pub fn load_weights(path: &Path) -> Result<ModelWeights<f32>, ModelError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes, path)
}

/// Load weights and require they were trained for `window_len_s` windows.
pub fn load_weights_for(path: &Path, window_len_s: u32) -> Result<ModelWeights<f32>, ModelError> {
    let w = load_weights(path)?;
    if w.meta.window_len_s != window_len_s {
        return Err(ModelError::WindowMismatch {
            path: path.to_path_buf(),
            expected: window_len_s,
            found: w.meta.window_len_s,
        });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{Protocol, Tensor};
    use crate::windowing::Task;

    fn sample(l: usize, window_s: u32) -> ModelWeights<f32> {
        let mut meta = ModelMeta::new(window_s, Task::CognitiveLoad, Protocol::Vanilla);
        meta.run_id = 3;
        meta.fold_id = "7".into();
        let mut w = ModelWeights::init(Architecture::detector(l).unwrap(), 42, meta);
        w.params.tensor_mut(Tensor::OutBias)[0] = -0.0;
        w.params.tensor_mut(Tensor::Fc1Bias)[3] = f32::MIN_POSITIVE / 2.0;
        w
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cgw");
        let w = sample(64, 1);
        save_weights(&w, &p).unwrap();
        let back = load_weights(&p).unwrap();
        assert_eq!(back.meta, w.meta);
        let bits = |m: &ModelWeights<f32>| m.params.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&w));
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cgw");
        save_weights(&sample(64, 1), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_weights(&p), Err(ModelError::Checksum { .. })));
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        fs::write(&p, &flipped).unwrap();
        assert!(matches!(load_weights(&p), Err(ModelError::Checksum { .. })));
    }

    #[test]
    fn window_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cgw");
        save_weights(&sample(1920, 30), &p).unwrap();
        assert!(load_weights_for(&p, 30).is_ok());
        assert!(matches!(
            load_weights_for(&p, 60),
            Err(ModelError::WindowMismatch { expected: 60, found: 30, .. })
        ));
    }

    #[test]
    fn header_shape_tampering_is_rejected() {
        let w = sample(64, 1);
        let bytes = encode(&w);
        let text = String::from_utf8_lossy(&bytes[..200]).into_owned();
        assert!(text.contains("\"input_len\":64"));
        let (magic, rest) = split_line(&bytes).unwrap();
        let (header, blob) = split_line(rest).unwrap();
        let header = String::from_utf8(header.to_vec()).unwrap().replace("\"input_len\":64", "\"input_len\":66");
        let mut forged = magic.to_vec();
        forged.push(b'\n');
        forged.extend_from_slice(header.as_bytes());
        forged.push(b'\n');
        forged.extend_from_slice(blob);
        assert!(matches!(
            decode(&forged, Path::new("x")),
            Err(ModelError::Format { .. })
        ));
    }
}
