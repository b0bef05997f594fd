//! Trained-policy artifacts and their checkpoint file format.
//!
//! A checkpoint captures everything needed to resume training bit-exactly:
//! the network parameters, the optimizer moments and step counter, the full
//! config, the dataset content hash, and the position of the training random
//! stream. Files carry a trailing SHA-256 of their contents so corruption
//! and truncation surface as structured errors instead of garbage weights.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use crate::data::{dataset_content_hash, ByteReader, Dataset};
use crate::error::{Error, Result};
use crate::nn::{AdamState, HeadSpec, MlpPolicy};

const MAGIC: &[u8; 4] = b"RVSC";
const VERSION: u32 = 1;

/// A trained (or in-training) policy with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArtifact {
    pub policy: MlpPolicy,
    pub config: TrainConfig,
    /// Environment the training dataset came from; fixes the action space
    /// and horizon at evaluation time.
    pub env_id: String,
    pub state_dim: usize,
    /// Width of the condition vector appended to states (0 for plain BC).
    pub condition_dim: usize,
    /// Content hash of the full training dataset (before splitting).
    pub dataset_hash: String,
    /// Min/max average-return bounds from the training split, present when
    /// the outcome is a normalized return target; evaluation conditions
    /// through the same scale.
    pub norm_bounds: Option<(f64, f64)>,
    pub adam: AdamState,
    /// Gradient steps already applied.
    pub steps_done: usize,
    /// Word position of the training random stream after `steps_done`
    /// steps, so resumed runs continue the identical stream.
    pub rng_word_pos: u128,
}

impl PolicyArtifact {
    /// True when `dataset` hashes to the artifact's recorded hash. A
    /// mismatch is how "evaluated/resumed against a different dataset than
    /// trained on" is detected; callers warn rather than fail.
    pub fn dataset_matches(&self, dataset: &Dataset) -> Result<bool> {
        Ok(dataset_content_hash(dataset)? == self.dataset_hash)
    }
}

fn write_u64<W: Write>(out: &mut W, v: u64) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn write_str<W: Write>(out: &mut W, s: &str) -> std::io::Result<()> {
    write_u64(out, s.len() as u64)?;
    out.write_all(s.as_bytes())
}

fn write_f64s<W: Write>(out: &mut W, v: &[f64]) -> std::io::Result<()> {
    write_u64(out, v.len() as u64)?;
    for x in v {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn encode(artifact: &PolicyArtifact) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let config_json = serde_json::to_string(&artifact.config).map_err(Error::from_json)?;
    write_str(&mut out, &config_json)?;
    write_str(&mut out, &artifact.env_id)?;
    write_u64(&mut out, artifact.state_dim as u64)?;
    write_u64(&mut out, artifact.condition_dim as u64)?;
    write_str(&mut out, &artifact.dataset_hash)?;
    match artifact.norm_bounds {
        Some((lo, hi)) => {
            out.push(1);
            out.write_all(&lo.to_le_bytes())?;
            out.write_all(&hi.to_le_bytes())?;
        }
        None => out.push(0),
    }
    write_u64(&mut out, artifact.steps_done as u64)?;
    write_u64(&mut out, artifact.rng_word_pos as u64)?;
    write_u64(&mut out, (artifact.rng_word_pos >> 64) as u64)?;

    let policy = &artifact.policy;
    let head_json = serde_json::to_string(&policy.head_spec).map_err(Error::from_json)?;
    write_str(&mut out, &head_json)?;
    write_u64(&mut out, policy.input_dim as u64)?;
    write_u64(&mut out, policy.hidden_width as u64)?;
    out.write_all(&policy.dropout_p.to_le_bytes())?;
    let blocks = policy.param_blocks();
    write_u64(&mut out, blocks.len() as u64)?;
    for block in &blocks {
        write_f64s(&mut out, block)?;
    }

    let (m, v) = artifact.adam.moments();
    write_u64(&mut out, m.len() as u64)?;
    for block in m {
        write_f64s(&mut out, block)?;
    }
    for block in v {
        write_f64s(&mut out, block)?;
    }
    write_u64(&mut out, artifact.adam.step_count())?;

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn save_checkpoint(artifact: &PolicyArtifact, path: &Path) -> Result<()> {
    let bytes = encode(artifact)?;
    // Write-then-rename so an interrupted save never destroys the previous
    // good checkpoint at `path`.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyArtifact> {
    let bytes = std::fs::read(path)?;
    let parse_err = |location: &str, message: String| Error::Parse {
        path: path.display().to_string(),
        location: location.into(),
        message,
    };
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(parse_err(
            "byte 0",
            format!("file too short ({} bytes) to be a checkpoint", bytes.len()),
        ));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(parse_err(
            &format!("byte {}", body.len()),
            "integrity checksum mismatch: checkpoint is truncated or corrupt".into(),
        ));
    }

    let mut r = ByteReader::new(body, path);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(r.fail(format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(r.fail(format!("unsupported checkpoint version {version}")));
    }
    let f64_of = |r: &mut ByteReader<&[u8]>| -> Result<f64> { Ok(f64::from_bits(r.u64()?)) };

    let config_json = r.string()?;
    let config: TrainConfig =
        serde_json::from_str(&config_json).map_err(|e| r.fail(format!("bad config: {e}")))?;
    let env_id = r.string()?;
    let state_dim = r.u64()? as usize;
    let condition_dim = r.u64()? as usize;
    let dataset_hash = r.string()?;
    let norm_bounds = match r.u8()? {
        0 => None,
        1 => {
            let lo = f64_of(&mut r)?;
            let hi = f64_of(&mut r)?;
            Some((lo, hi))
        }
        other => return Err(r.fail(format!("bad normalization flag {other}"))),
    };
    let steps_done = r.u64()? as usize;
    let rng_word_pos = (r.u64()? as u128) | ((r.u64()? as u128) << 64);

    let head_json = r.string()?;
    let head_spec: HeadSpec =
        serde_json::from_str(&head_json).map_err(|e| r.fail(format!("bad head spec: {e}")))?;
    let input_dim = r.u64()? as usize;
    let hidden_width = r.u64()? as usize;
    let dropout_p = f64_of(&mut r)?;
    if input_dim != state_dim + condition_dim {
        return Err(r.fail(format!(
            "input_dim {input_dim} != state_dim {state_dim} + condition_dim {condition_dim}"
        )));
    }
    if hidden_width != config.hidden_width || dropout_p != config.dropout_p {
        return Err(r.fail("network geometry disagrees with stored config".into()));
    }
    // Rebuild through the normal constructor (validating the geometry),
    // then overwrite every parameter block with the stored values.
    let mut policy = MlpPolicy::init(input_dim, hidden_width, head_spec, dropout_p, 0)?;
    let n_blocks = r.u64()? as usize;
    {
        let mut blocks = policy.param_blocks_mut();
        if n_blocks != blocks.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                location: "parameters".into(),
                message: format!("expected {} parameter blocks, found {n_blocks}", blocks.len()),
            });
        }
        for block in blocks.iter_mut() {
            let values = r.f64_array()?;
            if values.len() != block.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    location: "parameters".into(),
                    message: format!(
                        "parameter block length {} != expected {}",
                        values.len(),
                        block.len()
                    ),
                });
            }
            block.copy_from_slice(&values);
        }
    }

    let n_moment_blocks = r.u64()? as usize;
    let read_blocks = |r: &mut ByteReader<&[u8]>| -> Result<Vec<Vec<f64>>> {
        (0..n_moment_blocks).map(|_| r.f64_array()).collect()
    };
    let m = read_blocks(&mut r)?;
    let v = read_blocks(&mut r)?;
    let adam_step = r.u64()?;
    let adam = AdamState::from_parts(m, v, adam_step)?;
    let expected: Vec<usize> = policy.param_blocks().iter().map(|b| b.len()).collect();
    let (m_check, _) = adam.moments();
    if m_check.iter().map(|b| b.len()).collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            path: path.display().to_string(),
            location: "optimizer state".into(),
            message: "optimizer moment shapes disagree with parameters".into(),
        });
    }

    Ok(PolicyArtifact {
        policy,
        config,
        env_id,
        state_dim,
        condition_dim,
        dataset_hash,
        norm_bounds,
        adam,
        steps_done,
        rng_word_pos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::config::HeadKind;

    fn sample_artifact() -> PolicyArtifact {
        let config = TrainConfig {
            hidden_width: 16,
            head: HeadKind::Gaussian,
            seed: 3,
            ..TrainConfig::default()
        };
        let mut policy = MlpPolicy::init(
            5,
            16,
            HeadSpec::Gaussian { action_dims: 2 },
            config.dropout_p,
            config.seed,
        )
        .unwrap();
        // Perturb so the artifact is not just an init (log-std included).
        for (i, block) in policy.param_blocks_mut().into_iter().enumerate() {
            for (j, w) in block.iter_mut().enumerate() {
                *w += ((i + 1) * (j + 7)) as f64 * 1e-3;
            }
        }
        let mut adam = AdamState::new_for(&policy);
        let grads = crate::nn::Gradients {
            blocks: policy
                .param_blocks()
                .iter()
                .map(|b| b.iter().map(|w| w * 0.5 + 0.01).collect())
                .collect(),
        };
        adam.update(&mut policy.param_blocks_mut(), &grads, 1e-3).unwrap();
        PolicyArtifact {
            policy,
            config,
            env_id: "point-reach".into(),
            state_dim: 2,
            condition_dim: 3,
            dataset_hash: "abc123".into(),
            norm_bounds: Some((-0.25, 1.5)),
            adam,
            steps_done: 1,
            rng_word_pos: (7u128 << 64) | 42,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let artifact = sample_artifact();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.rvsc");
        save_checkpoint(&artifact, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, artifact);
        // Bit-level, not just PartialEq: re-encoding must give identical bytes.
        assert_eq!(encode(&back).unwrap(), encode(&artifact).unwrap());
    }

    #[test]
    fn truncation_at_any_point_is_a_structured_error() {
        let artifact = sample_artifact();
        let bytes = encode(&artifact).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.rvsc");
        let n = bytes.len();
        for keep in [0, 3, 10, n / 4, n / 2, n - 33, n - 1] {
            std::fs::write(&path, &bytes[..keep]).unwrap();
            match load_checkpoint(&path) {
                Err(Error::Parse { .. }) => {}
                other => panic!("truncated to {keep} bytes: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn corruption_fails_the_integrity_check() {
        let artifact = sample_artifact();
        let mut bytes = encode(&artifact).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corrupt.rvsc");
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        match err {
            Error::Parse { message, .. } => {
                assert!(message.contains("integrity"), "unexpected message: {message}")
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_checkpoint(Path::new("/nonexistent/x.rvsc")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn dataset_match_compares_content_hashes() {
        let mut artifact = sample_artifact();
        let dataset = Dataset {
            env_id: "point-reach".into(),
            horizon_h: 50,
            provenance: "test".into(),
            trajectories: vec![crate::data::Trajectory {
                states: vec![vec![0.0, 0.0]],
                actions: vec![vec![0.1, 0.2]],
                rewards: vec![0.0],
                terminated: false,
            }],
        };
        assert!(!artifact.dataset_matches(&dataset).unwrap());
        artifact.dataset_hash = dataset_content_hash(&dataset).unwrap();
        assert!(artifact.dataset_matches(&dataset).unwrap());
    }
}
