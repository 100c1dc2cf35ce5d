//! JSON checkpoints. Tensors are base64 little-endian f64 with explicit
//! shapes; no timestamps are written so identical runs give identical files.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::policy::AlignConfig;
use crate::usas::FeatureConfig;

use super::{ModelParams, TaskWeights};

pub const CHECKPOINT_FORMAT: &str = "dualrank-checkpoint/v1";

pub fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(text)
        .map_err(|e| Error::Validation(format!("invalid base64 tensor data: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Validation(format!("tensor byte length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

impl Tensor {
    fn new(name: &str, shape: Vec<usize>, values: &[f64]) -> Self {
        Self { name: name.into(), shape, data: encode_f64s(values) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Aligned,
}

/// Dual solution stored alongside an aligned policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentRecord {
    pub lambda_star: f64,
    pub epsilon: f64,
    pub config: AlignConfig,
    pub steps: usize,
    /// Digest of the stage-1 policy block the alignment started from.
    pub reference_policy_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub stage: Stage,
    pub feature_hash: String,
    pub features: FeatureConfig,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub tensors: Vec<Tensor>,
    pub task_weights: TaskWeights,
    pub pref_only: bool,
    pub encoder_digest: String,
    pub alignment: Option<AlignmentRecord>,
}

impl Checkpoint {
    pub fn stage1(params: &ModelParams, features: &FeatureConfig, weights: TaskWeights, pref_only: bool) -> Result<Self> {
        if features.layout() != *params.feature_layout() {
            return Err(Error::Config("feature configuration does not match the model input layout".into()));
        }
        let l = params.layout();
        let (h, d) = (l.hidden_dim, l.input_dim);
        let p = &params.data;
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            stage: Stage::Stage1,
            feature_hash: features.hash(),
            features: features.clone(),
            input_dim: d,
            hidden_dim: h,
            tensors: vec![
                Tensor::new("encoder.weight", vec![h, d], &p[l.enc_w.clone()]),
                Tensor::new("encoder.bias", vec![h], &p[l.enc_b.clone()]),
                Tensor::new("task_embedding", vec![2, h], &p[l.task_emb.clone()]),
                Tensor::new("pref_head.weight", vec![h], &p[l.pref_w.clone()]),
                Tensor::new("pref_head.bias", vec![1], &p[l.pref_b..l.pref_b + 1]),
                Tensor::new("qual_head.weight", vec![h], &p[l.qual_w.clone()]),
                Tensor::new("qual_head.bias", vec![1], &p[l.qual_b..l.qual_b + 1]),
            ],
            task_weights: weights,
            pref_only,
            encoder_digest: params.encoder_digest(),
            alignment: None,
        })
    }

    pub fn aligned(params: &ModelParams, features: &FeatureConfig, weights: TaskWeights, pref_only: bool, record: AlignmentRecord) -> Result<Self> {
        let mut c = Self::stage1(params, features, weights, pref_only)?;
        c.stage = Stage::Aligned;
        c.alignment = Some(record);
        Ok(c)
    }

    /// Rebuilds the parameters, checking tensor shapes and the encoder digest.
    pub fn params(&self) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Validation(format!("unsupported checkpoint format {:?}", self.format)));
        }
        let layout = self.features.layout();
        if layout.dim_total != self.input_dim {
            return Err(Error::Config(format!(
                "checkpoint input_dim {} does not match its feature configuration ({})",
                self.input_dim, layout.dim_total
            )));
        }
        let (h, d) = (self.hidden_dim, self.input_dim);
        let expected: [(&str, Vec<usize>); 7] = [
            ("encoder.weight", vec![h, d]),
            ("encoder.bias", vec![h]),
            ("task_embedding", vec![2, h]),
            ("pref_head.weight", vec![h]),
            ("pref_head.bias", vec![1]),
            ("qual_head.weight", vec![h]),
            ("qual_head.bias", vec![1]),
        ];
        if self.tensors.len() != expected.len() {
            return Err(Error::Validation(format!("checkpoint has {} tensors, expected 7", self.tensors.len())));
        }
        let mut data = Vec::new();
        for (t, (name, shape)) in self.tensors.iter().zip(expected) {
            if t.name != name || t.shape != shape {
                return Err(Error::Validation(format!(
                    "tensor {:?} {:?} does not match expected {name:?} {shape:?}",
                    t.name, t.shape
                )));
            }
            let values = decode_f64s(&t.data)?;
            if values.len() != shape.iter().product::<usize>() {
                return Err(Error::Validation(format!("tensor {name:?} holds {} values for shape {shape:?}", values.len())));
            }
            data.extend(values);
        }
        let params = ModelParams::from_data(layout, h, data)?;
        if params.encoder_digest() != self.encoder_digest {
            return Err(Error::Validation("encoder digest mismatch: checkpoint is corrupted".into()));
        }
        if !params.is_finite() {
            return Err(Error::Numerical("checkpoint contains non-finite parameters".into()));
        }
        Ok(params)
    }

    /// Fails unless the checkpoint was trained on features built with `features`.
    pub fn ensure_features(&self, features: &FeatureConfig) -> Result<()> {
        let hash = features.hash();
        if hash != self.feature_hash || self.features.hash() != self.feature_hash {
            return Err(Error::Config(format!(
                "feature hash mismatch: checkpoint {} vs dataset {}",
                self.feature_hash, hash
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> (ModelParams, FeatureConfig) {
        let cfg = FeatureConfig { embed_dim: 4, ..Default::default() };
        let mut p = ModelParams::init(cfg.layout(), 6, 5);
        let r = p.layout().policy();
        for (k, i) in r.enumerate() {
            p.data[i] = k as f64 * 0.01 - 0.1;
        }
        (p, cfg)
    }

    #[test]
    fn f64_roundtrip_is_bit_exact() {
        let v = [0.1, -0.0, f64::MIN_POSITIVE, 1e300, -3.25];
        let back = decode_f64s(&encode_f64s(&v)).unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(decode_f64s("AAA=").is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let (p, cfg) = model();
        let w = TaskWeights { w_pref: 0.25, w_qual: -1.5 };
        let ck = Checkpoint::stage1(&p, &cfg, w, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params().unwrap(), p);
        assert_eq!(back.task_weights, w);
        // byte-identical on re-save
        let path2 = dir.path().join("m2.json");
        back.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn feature_hash_mismatch_is_config_error() {
        let (p, cfg) = model();
        let ck = Checkpoint::stage1(&p, &cfg, TaskWeights::default(), false).unwrap();
        assert!(ck.ensure_features(&cfg).is_ok());
        let other = FeatureConfig { embed_seed: 1, ..cfg };
        assert!(matches!(ck.ensure_features(&other), Err(Error::Config(_))));
    }

    #[test]
    fn tampered_encoder_detected() {
        let (p, cfg) = model();
        let mut ck = Checkpoint::stage1(&p, &cfg, TaskWeights::default(), false).unwrap();
        let mut w = decode_f64s(&ck.tensors[0].data).unwrap();
        w[0] += 1.0;
        ck.tensors[0].data = encode_f64s(&w);
        assert!(ck.params().is_err());
        let mut ck2 = Checkpoint::stage1(&p, &cfg, TaskWeights::default(), false).unwrap();
        ck2.tensors[1].shape = vec![7];
        assert!(ck2.params().is_err());
    }
}
