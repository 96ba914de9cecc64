//! Model file format: magic + version, a JSON manifest (config, schedule,
//! normalization statistics, training-example metadata, tensor directory),
//! then raw little-endian f64 tensor data in manifest order. Round-trips
//! are bit-exact.

use serde::{Deserialize, Serialize};

use super::config::{GenConfig, PROP_DIM};
use super::model::{ExampleMeta, Model, PropNormalizer};
use super::params::ModelParams;
use super::schedule::NoiseSchedule;
use crate::error::{LatticeError, Result};

const MAGIC: &[u8; 8] = b"LFGENMDL";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderExample {
    props: Vec<f64>,
    n_vertices: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: GenConfig,
    schedule: NoiseSchedule,
    norm_mean: Vec<f64>,
    norm_std: Vec<f64>,
    examples: Vec<HeaderExample>,
    tensors: Vec<TensorInfo>,
}

pub(super) fn save_to_vec(model: &Model) -> Vec<u8> {
    let names = model.params.tensor_names();
    let tensors = names
        .iter()
        .map(|name| {
            let t = model.params.tensor(name).expect("named tensor");
            TensorInfo { name: name.clone(), rows: t.nrows(), cols: t.ncols() }
        })
        .collect();
    let header = Header {
        config: model.config.clone(),
        schedule: model.schedule.clone(),
        norm_mean: model.norm.mean.to_vec(),
        norm_std: model.norm.std.to_vec(),
        examples: model
            .examples
            .iter()
            .map(|e| HeaderExample { props: e.props.to_vec(), n_vertices: e.n_vertices })
            .collect(),
        tensors,
    };
    let header_json = serde_json::to_vec(&header).expect("header serialization");

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for name in &names {
        let t = model.params.tensor(name).expect("named tensor");
        for row in t.rows() {
            for v in row.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

fn corrupt(msg: impl Into<String>) -> LatticeError {
    LatticeError::CorruptModelFile(msg.into())
}

fn props_array(v: &[f64]) -> Result<[f64; PROP_DIM]> {
    if v.len() != PROP_DIM {
        return Err(corrupt(format!("property vector length {} != {PROP_DIM}", v.len())));
    }
    let mut out = [0.0; PROP_DIM];
    out.copy_from_slice(v);
    Ok(out)
}

pub(super) fn load_from_slice(bytes: &[u8]) -> Result<Model> {
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, len: usize| -> Result<&[u8]> {
        if *cursor + len > bytes.len() {
            return Err(corrupt("truncated file"));
        }
        let slice = &bytes[*cursor..*cursor + len];
        *cursor += len;
        Ok(slice)
    };

    let magic = take(&mut cursor, MAGIC.len())?;
    if magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(LatticeError::VersionMismatch { found: version, expected: VERSION });
    }
    let header_len = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
    let header_bytes = take(&mut cursor, header_len)?;
    let header: Header =
        serde_json::from_slice(header_bytes).map_err(|e| corrupt(format!("bad header: {e}")))?;

    header.config.validate()?;
    let mut schedule = header.schedule;
    schedule.rebuild();

    // Expected shapes come from the config, not the directory.
    let mut params = ModelParams::zeros(&header.config);
    let expected_names = params.tensor_names();
    if header.tensors.len() != expected_names.len() {
        return Err(corrupt(format!(
            "tensor directory has {} entries, expected {}",
            header.tensors.len(),
            expected_names.len()
        )));
    }
    for (info, expected_name) in header.tensors.iter().zip(expected_names.iter()) {
        if &info.name != expected_name {
            return Err(corrupt(format!(
                "tensor `{}` out of order (expected `{expected_name}`)",
                info.name
            )));
        }
        let t = params.tensor_mut(&info.name).expect("known tensor");
        if info.rows != t.nrows() || info.cols != t.ncols() {
            return Err(LatticeError::ShapeMismatch {
                name: info.name.clone(),
                expected_rows: t.nrows(),
                expected_cols: t.ncols(),
                rows: info.rows,
                cols: info.cols,
            });
        }
        for r in 0..info.rows {
            for c in 0..info.cols {
                let raw = take(&mut cursor, 8)?;
                t[(r, c)] = f64::from_le_bytes(raw.try_into().unwrap());
            }
        }
    }
    if cursor != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }

    let norm = PropNormalizer {
        mean: props_array(&header.norm_mean)?,
        std: props_array(&header.norm_std)?,
    };
    let examples = header
        .examples
        .iter()
        .map(|e| {
            Ok(ExampleMeta {
                props: props_array(&e.props)?,
                n_vertices: e.n_vertices,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Model { config: header.config, schedule, params, norm, examples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> Model {
        let config = GenConfig {
            n_max: 6,
            token_dim: 16,
            heads: 2,
            blocks: 2,
            edge_hidden: 8,
            ..GenConfig::default()
        };
        let params = ModelParams::init(&config, 33);
        Model {
            config,
            schedule: NoiseSchedule::linear(10, 1e-4, 0.02).unwrap(),
            params,
            norm: PropNormalizer {
                mean: [0.5; PROP_DIM],
                std: [2.0; PROP_DIM],
            },
            examples: vec![ExampleMeta { props: [0.25; PROP_DIM], n_vertices: 5 }],
        }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let model = small_model();
        let bytes = model.save_to_vec();
        let loaded = Model::load_from_slice(&bytes).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded.save_to_vec(), bytes);
        // The rebuilt schedule produces identical derived values.
        for t in 0..=10 {
            assert_eq!(loaded.schedule.alpha_bar(t), model.schedule.alpha_bar(t));
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = small_model().save_to_vec();
        let cut = &bytes[..bytes.len() - 9];
        assert!(matches!(
            Model::load_from_slice(cut),
            Err(LatticeError::CorruptModelFile(_))
        ));
    }

    #[test]
    fn trailing_bytes_are_corrupt() {
        let mut bytes = small_model().save_to_vec();
        bytes.push(0);
        assert!(matches!(
            Model::load_from_slice(&bytes),
            Err(LatticeError::CorruptModelFile(_))
        ));
    }

    #[test]
    fn bad_magic_is_corrupt() {
        let mut bytes = small_model().save_to_vec();
        bytes[0] = b'X';
        assert!(matches!(
            Model::load_from_slice(&bytes),
            Err(LatticeError::CorruptModelFile(_))
        ));
    }

    #[test]
    fn version_mismatch_is_distinct() {
        let mut bytes = small_model().save_to_vec();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            Model::load_from_slice(&bytes),
            Err(LatticeError::VersionMismatch { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn shape_mismatch_is_distinct() {
        // Rewrite the header with a wrong row count for the first tensor
        // while keeping the byte layout self-consistent.
        let model = small_model();
        let bytes = model.save_to_vec();
        let header_len =
            u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_json = &bytes[20..20 + header_len];
        let mut header: Header = serde_json::from_slice(header_json).unwrap();
        header.tensors[0].rows += 1;
        let new_json = serde_json::to_vec(&header).unwrap();
        let mut tampered = Vec::new();
        tampered.extend_from_slice(&bytes[..12]);
        tampered.extend_from_slice(&(new_json.len() as u64).to_le_bytes());
        tampered.extend_from_slice(&new_json);
        tampered.extend_from_slice(&bytes[20 + header_len..]);
        assert!(matches!(
            Model::load_from_slice(&tampered),
            Err(LatticeError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn file_roundtrip_via_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lfm");
        let model = small_model();
        model.save(&path).unwrap();
        let loaded = Model::load(&path).unwrap();
        assert_eq!(loaded, model);
    }
}
