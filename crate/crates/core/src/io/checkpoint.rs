use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_file, write_atomic};
use crate::adam::AdamState;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::head::{Activation, HeadParams};
use crate::matrix::Matrix;

pub const CHECKPOINT_VERSION: &str = "dclr-ckpt-1";
const BLOB_MAGIC: &[u8; 4] = b"DCKP";

/// Head parameters, optimizer state, and run metadata at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: HeadParams,
    pub adam: AdamState,
    pub step: u64,
    pub config: TrainConfig,
    /// NaN when the run has not been evaluated yet.
    pub dev_metric: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeadMeta {
    d_in: usize,
    d_hidden: usize,
    d_out: usize,
    activation: Activation,
    dropout: f64,
    revision: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerMeta {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    format_version: String,
    step: u64,
    // null for an unevaluated checkpoint; JSON has no NaN
    dev_metric: Option<f64>,
    config: TrainConfig,
    head: HeadMeta,
    optimizer: OptimizerMeta,
    blob_bytes: usize,
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the parameter blob to `path` and the JSON sidecar to `<path>.json`.
///
/// Blob layout: `DCKP`, then little-endian f64 values of W1, b1, W2, b2,
/// Adam first moments, Adam second moments.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let p = &ckpt.params;
    if ckpt.adam.m.len() != p.num_params() || ckpt.adam.v.len() != p.num_params() {
        return Err(Error::CheckpointSchema(
            "optimizer moments do not match parameter count".into(),
        ));
    }
    let mut blob = Vec::with_capacity(4 + 8 * 3 * p.num_params());
    blob.extend_from_slice(BLOB_MAGIC);
    for s in p
        .slices()
        .into_iter()
        .chain([ckpt.adam.m.as_slice(), ckpt.adam.v.as_slice()])
    {
        for v in s {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sidecar = Sidecar {
        format_version: CHECKPOINT_VERSION.to_string(),
        step: ckpt.step,
        dev_metric: ckpt.dev_metric.is_finite().then_some(ckpt.dev_metric),
        config: ckpt.config.clone(),
        head: HeadMeta {
            d_in: p.d_in(),
            d_hidden: p.d_hidden(),
            d_out: p.d_out(),
            activation: p.activation,
            dropout: p.dropout,
            revision: p.revision,
        },
        optimizer: OptimizerMeta {
            beta1: ckpt.adam.beta1,
            beta2: ckpt.adam.beta2,
            eps: ckpt.adam.eps,
            step: ckpt.adam.step,
            len: ckpt.adam.m.len(),
        },
        blob_bytes: blob.len(),
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::CheckpointSchema(format!("cannot serialize metadata: {e}")))?;
    write_atomic(path, &blob)?;
    write_atomic(&sidecar_path(path), json.as_bytes())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let meta_path = sidecar_path(path);
    let raw: serde_json::Value = serde_json::from_slice(&read_file(&meta_path)?)
        .map_err(|e| Error::CheckpointSchema(format!("{}: {e}", meta_path.display())))?;
    let found = raw
        .get("format_version")
        .and_then(|v| v.as_str())
        .unwrap_or("<missing>");
    if found != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: found.to_string(),
            expected: CHECKPOINT_VERSION.to_string(),
        });
    }
    let meta: Sidecar =
        serde_json::from_value(raw).map_err(|e| Error::CheckpointSchema(e.to_string()))?;

    let h = &meta.head;
    let num_params = h.d_in * h.d_hidden + h.d_hidden + h.d_hidden * h.d_out + h.d_out;
    if meta.optimizer.len != num_params {
        return Err(Error::CheckpointSchema(format!(
            "optimizer holds {} moments for {num_params} parameters",
            meta.optimizer.len
        )));
    }
    let blob = read_file(path)?;
    let expected = 4 + 8 * 3 * num_params;
    if blob.len() != expected || meta.blob_bytes != expected {
        return Err(Error::CheckpointSchema(format!(
            "parameter blob has {} bytes, metadata says {}, shapes need {expected}",
            blob.len(),
            meta.blob_bytes
        )));
    }
    if &blob[..4] != BLOB_MAGIC {
        return Err(Error::CheckpointSchema(
            "parameter blob has a bad magic".into(),
        ));
    }
    let mut values = blob[4..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
    let params = HeadParams {
        w1: Matrix::from_vec(h.d_in, h.d_hidden, take(h.d_in * h.d_hidden))?,
        b1: take(h.d_hidden),
        w2: Matrix::from_vec(h.d_hidden, h.d_out, take(h.d_hidden * h.d_out))?,
        b2: take(h.d_out),
        activation: h.activation,
        dropout: h.dropout,
        revision: h.revision,
    };
    let adam = AdamState {
        beta1: meta.optimizer.beta1,
        beta2: meta.optimizer.beta2,
        eps: meta.optimizer.eps,
        step: meta.optimizer.step,
        m: take(num_params),
        v: take(num_params),
    };
    params.validate()?;
    Ok(Checkpoint {
        params,
        adam,
        step: meta.step,
        config: meta.config,
        dev_metric: meta.dev_metric.unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;

    fn sample() -> Checkpoint {
        let mut rng = stream_rng(1, Stream::HeadInit, 0);
        let params =
            HeadParams::near_identity(4, 3, 2, Activation::Tanh, 0.1, 0.2, &mut rng).unwrap();
        let mut adam = AdamState::for_head(&params);
        adam.step = 7;
        adam.m
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-1.0..1.0));
        adam.v
            .iter_mut()
            .for_each(|v| *v = rng.random_range(0.0..1.0));
        Checkpoint {
            params,
            adam,
            step: 7,
            config: TrainConfig::default(),
            dev_metric: 0.625,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("best.ckpt");
        let c = sample();
        save_checkpoint(&c, &path).unwrap();
        assert!(sidecar_path(&path).exists());
        assert_eq!(load_checkpoint(&path).unwrap(), c);
    }

    #[test]
    fn unevaluated_checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mid.ckpt");
        let c = Checkpoint {
            dev_metric: f64::NAN,
            ..sample()
        };
        save_checkpoint(&c, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert!(back.dev_metric.is_nan());
        assert_eq!(back.params, c.params);
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        let meta = sidecar_path(&path);
        let text = std::fs::read_to_string(&meta)
            .unwrap()
            .replace(CHECKPOINT_VERSION, "dclr-ckpt-0");
        std::fs::write(&meta, text).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::CheckpointVersion { .. }));
        assert!(
            msg.contains("dclr-ckpt-0") && msg.contains(CHECKPOINT_VERSION),
            "{msg}"
        );
    }

    #[test]
    fn missing_optimizer_state_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        let meta = sidecar_path(&path);
        let mut json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&meta).unwrap()).unwrap();
        json.as_object_mut().unwrap().remove("optimizer");
        std::fs::write(&meta, json.to_string()).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointSchema(_))
        ));
    }

    #[test]
    fn truncated_blob_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        let blob = std::fs::read(&path).unwrap();
        std::fs::write(&path, &blob[..blob.len() - 8]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointSchema(_))
        ));
    }
}
