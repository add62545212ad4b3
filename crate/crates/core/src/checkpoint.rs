//! Self-describing binary checkpoint container.
//!
//! One format serves both the backbone and the prompt encoder. Layout
//! (little-endian throughout, documented in `docs/formats.md`):
//!
//! ```text
//! bytes 0..8    magic "SYMPCKPT"
//! bytes 8..12   u32 container version (currently 1)
//! bytes 12..20  u64 header length H
//! bytes 20..20+H  header: canonical JSON (kind, scalar, config echo,
//!                 optional vocab, array manifest with name + length)
//! remainder     arrays as f64 values, concatenated in manifest order
//! ```
//!
//! Values are stored as f64 regardless of the in-memory scalar type, so a
//! checkpoint written from an `f32` run loads into an `f64` run and back.
//! Writes go to a temporary sibling file followed by a rename, so an
//! interrupted run never leaves a truncated checkpoint under the real name.

use crate::error::{Error, Result};
use crate::mlm::{Mlm, MlmConfig, MlmWeights, Vocab};
use crate::prompt::{PromptEncoder, Template};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"SYMPCKPT";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    /// Scalar type of the writer ("f32"/"f64"); informational.
    pub scalar: String,
    /// Echo of the owning config, as JSON.
    pub config: serde_json::Value,
    pub vocab: Option<Vec<String>>,
    pub arrays: Vec<ArrayInfo>,
}

/// Writes a checkpoint atomically (temp file + rename).
pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    kind: &str,
    config: serde_json::Value,
    vocab: Option<&Vocab>,
    arrays: &[(String, &[S])],
) -> Result<()> {
    let header = CheckpointHeader {
        kind: kind.to_string(),
        scalar: if std::mem::size_of::<S>() == 4 { "f32" } else { "f64" }.to_string(),
        config,
        vocab: vocab.map(|v| v.tokens().to_vec()),
        arrays: arrays
            .iter()
            .map(|(name, data)| ArrayInfo {
                name: name.clone(),
                len: data.len() as u64,
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");

    let tmp = path.with_extension("tmp");
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        out.write_all(MAGIC)?;
        out.write_all(&CONTAINER_VERSION.to_le_bytes())?;
        out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        out.write_all(&header_bytes)?;
        for (_, data) in arrays {
            for &v in *data {
                out.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
        out.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint: header plus name-keyed arrays.
pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, BTreeMap<String, Vec<f64>>)> {
    let path_str = path.display().to_string();
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)
        .map_err(|_| Error::format(&path_str, None, "file shorter than magic"))?;
    if &magic != MAGIC {
        return Err(Error::format(&path_str, None, "bad magic"));
    }
    let mut u32buf = [0u8; 4];
    file.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != CONTAINER_VERSION {
        return Err(Error::format(
            &path_str,
            None,
            format!("unsupported container version {version}"),
        ));
    }
    let mut u64buf = [0u8; 8];
    file.read_exact(&mut u64buf)?;
    let header_len = u64::from_le_bytes(u64buf) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|_| Error::format(&path_str, None, "truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::format(&path_str, None, format!("bad header: {e}")))?;

    let mut arrays = BTreeMap::new();
    for info in &header.arrays {
        let mut data = Vec::with_capacity(info.len as usize);
        let mut f64buf = [0u8; 8];
        for _ in 0..info.len {
            file.read_exact(&mut f64buf).map_err(|_| {
                Error::format(&path_str, None, format!("truncated array {}", info.name))
            })?;
            data.push(f64::from_le_bytes(f64buf));
        }
        if arrays.insert(info.name.clone(), data).is_some() {
            return Err(Error::format(
                &path_str,
                None,
                format!("duplicate array {}", info.name),
            ));
        }
    }
    Ok((header, arrays))
}

fn fill_from<S: Scalar>(
    path: &Path,
    target: Vec<(String, &mut [S])>,
    mut arrays: BTreeMap<String, Vec<f64>>,
) -> Result<()> {
    let path_str = path.display().to_string();
    for (name, dst) in target {
        let src = arrays.remove(&name).ok_or_else(|| {
            Error::format(&path_str, None, format!("missing array {name}"))
        })?;
        if src.len() != dst.len() {
            return Err(Error::format(
                &path_str,
                None,
                format!("array {name}: expected {} values, found {}", dst.len(), src.len()),
            ));
        }
        for (d, s) in dst.iter_mut().zip(src) {
            *d = S::from_f64(s);
        }
    }
    if let Some((name, _)) = arrays.into_iter().next() {
        return Err(Error::format(
            &path_str,
            None,
            format!("unexpected extra array {name}"),
        ));
    }
    Ok(())
}

pub fn save_mlm<S: Scalar>(path: &Path, mlm: &Mlm<S>) -> Result<()> {
    save_checkpoint(
        path,
        "mlm",
        serde_json::to_value(&mlm.config).expect("config to json"),
        Some(&mlm.vocab),
        &mlm.weights.named_arrays(),
    )
}

pub fn load_mlm<S: Scalar>(path: &Path) -> Result<Mlm<S>> {
    let path_str = path.display().to_string();
    let (header, arrays) = load_checkpoint(path)?;
    if header.kind != "mlm" {
        return Err(Error::format(
            &path_str,
            None,
            format!("expected mlm checkpoint, found {}", header.kind),
        ));
    }
    let config: MlmConfig = serde_json::from_value(header.config)
        .map_err(|e| Error::format(&path_str, None, format!("bad mlm config: {e}")))?;
    config.validate()?;
    let tokens = header
        .vocab
        .ok_or_else(|| Error::format(&path_str, None, "mlm checkpoint missing vocab"))?;
    let vocab = Vocab::from_ordered(tokens);
    let mut weights = MlmWeights::zeros(&config, vocab.len());
    fill_from(path, weights.named_arrays_mut(), arrays)?;
    Ok(Mlm {
        vocab,
        config,
        weights,
    })
}

/// Prompt-encoder structural metadata carried in the config echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptEncoderMeta {
    pub template: Template,
    pub dim: usize,
    pub relation_ids: Vec<String>,
}

pub fn save_prompt_encoder<S: Scalar>(path: &Path, enc: &PromptEncoder<S>) -> Result<()> {
    let meta = PromptEncoderMeta {
        template: enc.template,
        dim: enc.dim,
        relation_ids: enc.relation_ids.clone(),
    };
    save_checkpoint(
        path,
        "prompt-encoder",
        serde_json::to_value(&meta).expect("meta to json"),
        None,
        &enc.named_arrays(),
    )
}

pub fn load_prompt_encoder<S: Scalar>(path: &Path) -> Result<PromptEncoder<S>> {
    let path_str = path.display().to_string();
    let (header, arrays) = load_checkpoint(path)?;
    if header.kind != "prompt-encoder" {
        return Err(Error::format(
            &path_str,
            None,
            format!("expected prompt-encoder checkpoint, found {}", header.kind),
        ));
    }
    let meta: PromptEncoderMeta = serde_json::from_value(header.config)
        .map_err(|e| Error::format(&path_str, None, format!("bad encoder meta: {e}")))?;
    let mut enc = PromptEncoder::new(meta.template, meta.dim, meta.relation_ids, 0)?;
    fill_from(path, enc.named_arrays_mut(), arrays)?;
    Ok(enc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlm_round_trip_preserves_weights() {
        let vocab = Vocab::build((0..8).map(|i| format!("w{i}")));
        let config = MlmConfig {
            layers: 1,
            heads: 2,
            dim: 8,
            ff_dim: 16,
            max_seq: 8,
            tied_output: false,
        };
        let mlm: Mlm<f64> = Mlm::new(vocab, config, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlm.ckpt");
        save_mlm(&path, &mlm).unwrap();
        let loaded: Mlm<f64> = load_mlm(&path).unwrap();
        assert_eq!(loaded, mlm);
    }

    #[test]
    fn f32_checkpoint_loads_into_f64() {
        let vocab = Vocab::build((0..4).map(|i| format!("w{i}")));
        let mlm: Mlm<f32> = Mlm::new(vocab, MlmConfig::default(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlm.ckpt");
        save_mlm(&path, &mlm).unwrap();
        let loaded: Mlm<f64> = load_mlm(&path).unwrap();
        assert_eq!(loaded.vocab, mlm.vocab);
        let a = loaded.weights.named_arrays();
        let b = mlm.weights.named_arrays();
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            for (xv, yv) in x.iter().zip(*y) {
                assert_eq!(*xv, *yv as f64);
            }
        }
    }

    #[test]
    fn encoder_round_trip() {
        let enc: PromptEncoder<f64> =
            PromptEncoder::new(Template::default(), 8, vec!["a".into(), "b".into()], 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.ckpt");
        save_prompt_encoder(&path, &enc).unwrap();
        let loaded: PromptEncoder<f64> = load_prompt_encoder(&path).unwrap();
        assert_eq!(loaded, enc);
    }

    #[test]
    fn truncated_file_fails_cleanly() {
        let vocab = Vocab::build((0..4).map(|i| format!("w{i}")));
        let mlm: Mlm<f64> = Mlm::new(vocab, MlmConfig::default(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlm.ckpt");
        save_mlm(&path, &mlm).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_mlm::<f64>(&cut).is_err());
    }

    #[test]
    fn same_model_writes_identical_bytes() {
        let vocab = Vocab::build((0..4).map(|i| format!("w{i}")));
        let mlm: Mlm<f64> = Mlm::new(vocab, MlmConfig::default(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_mlm(&a, &mlm).unwrap();
        save_mlm(&b, &mlm).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
