//! Dataset persistence in two interchangeable formats.
//!
//! - Line-delimited JSON (`.jsonl`): a prologue record carrying `env_id`,
//!   `horizon_H`, and `provenance`, then one record per trajectory. Numbers
//!   use shortest round-trip decimal form, so text round trips are
//!   value-exact.
//! - Binary (`.rvsd`): magic `RVSD`, a version word, a header, then
//!   per-trajectory length-prefixed little-endian `f64` arrays.
//!
//! [`save_dataset`] picks the format from the extension; [`load_dataset`]
//! sniffs the magic bytes, so either format loads from any path. Malformed
//! input yields a structured parse error naming the line (text) or byte
//! offset (binary), never a panic.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::trajectory::{Dataset, Trajectory};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RVSD";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Prologue {
    env_id: String,
    #[serde(rename = "horizon_H")]
    horizon_h: usize,
    provenance: String,
}

fn parse_error(path: &Path, location: String, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        location,
        message,
    }
}

/// Re-validates a freshly loaded dataset, reporting violations as parse
/// errors: a file that decodes but breaks the data model is malformed.
fn check_loaded(dataset: Dataset, path: &Path) -> Result<Dataset> {
    match dataset.validate() {
        Ok(()) => Ok(dataset),
        Err(e) => Err(parse_error(path, "loaded dataset".into(), e.to_string())),
    }
}

pub fn save_dataset_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let mut out = BufWriter::new(File::create(path)?);
    let prologue = Prologue {
        env_id: dataset.env_id.clone(),
        horizon_h: dataset.horizon_h,
        provenance: dataset.provenance.clone(),
    };
    serde_json::to_writer(&mut out, &prologue).map_err(Error::from_json)?;
    out.write_all(b"\n")?;
    for traj in &dataset.trajectories {
        serde_json::to_writer(&mut out, traj).map_err(Error::from_json)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_dataset_jsonl(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut prologue: Option<Prologue> = None;
    let mut trajectories = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("line {}", idx + 1);
        if prologue.is_none() {
            let p: Prologue = serde_json::from_str(&line)
                .map_err(|e| parse_error(path, location, e.to_string()))?;
            prologue = Some(p);
        } else {
            let traj: Trajectory = serde_json::from_str(&line)
                .map_err(|e| parse_error(path, location, e.to_string()))?;
            trajectories.push(traj);
        }
    }
    let prologue = prologue
        .ok_or_else(|| parse_error(path, "line 1".into(), "missing prologue record".into()))?;
    check_loaded(
        Dataset {
            env_id: prologue.env_id,
            horizon_h: prologue.horizon_h,
            provenance: prologue.provenance,
            trajectories,
        },
        path,
    )
}

/// Serializes the binary form into a writer; shared by file saving and
/// content hashing.
fn write_binary<W: Write>(dataset: &Dataset, out: &mut W) -> Result<()> {
    let write_u64 = |out: &mut W, v: u64| out.write_all(&v.to_le_bytes());
    let write_str = |out: &mut W, s: &str| -> std::io::Result<()> {
        out.write_all(&(s.len() as u64).to_le_bytes())?;
        out.write_all(s.as_bytes())
    };
    let write_f64s = |out: &mut W, v: &[f64]| -> std::io::Result<()> {
        out.write_all(&(v.len() as u64).to_le_bytes())?;
        for x in v {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    };
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    write_str(out, &dataset.env_id)?;
    write_u64(out, dataset.horizon_h as u64)?;
    write_str(out, &dataset.provenance)?;
    write_u64(out, dataset.state_dim() as u64)?;
    write_u64(out, dataset.action_dim() as u64)?;
    write_u64(out, dataset.trajectories.len() as u64)?;
    for traj in &dataset.trajectories {
        out.write_all(&[traj.terminated as u8])?;
        let states: Vec<f64> = traj.states.iter().flatten().copied().collect();
        let actions: Vec<f64> = traj.actions.iter().flatten().copied().collect();
        write_f64s(out, &states)?;
        write_f64s(out, &actions)?;
        write_f64s(out, &traj.rewards)?;
    }
    Ok(())
}

pub fn save_dataset_binary(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let mut out = BufWriter::new(File::create(path)?);
    write_binary(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Byte reader that tracks its offset so truncation and garbage report
/// where decoding stopped. Shared by the dataset and checkpoint codecs.
pub(crate) struct ByteReader<'p, R> {
    inner: R,
    offset: u64,
    path: &'p Path,
}

impl<'p, R: Read> ByteReader<'p, R> {
    pub(crate) fn new(inner: R, path: &'p Path) -> Self {
        ByteReader {
            inner,
            offset: 0,
            path,
        }
    }

    pub(crate) fn fail(&self, message: String) -> Error {
        parse_error(self.path, format!("byte {}", self.offset), message)
    }

    pub(crate) fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(self.fail("unexpected end of file".into()))
            }
            Err(e) => Err(Error::Io(e)),
        }
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact(&mut b)?;
        Ok(b[0])
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let len = self.u64()? as usize;
        if len > 1 << 20 {
            return Err(self.fail(format!("implausible string length {len}")));
        }
        let mut buf = vec![0u8; len];
        self.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|e| self.fail(e.to_string()))
    }

    /// Length-prefixed f64 array, read in bounded chunks so a corrupt
    /// length cannot trigger a huge allocation before hitting EOF.
    pub(crate) fn f64_array(&mut self) -> Result<Vec<f64>> {
        let count = self.u64()? as usize;
        let mut values = Vec::new();
        let mut remaining = count;
        let mut chunk = vec![0u8; 8 * 4096];
        while remaining > 0 {
            let take = remaining.min(4096);
            let buf = &mut chunk[..8 * take];
            self.read_exact(buf)?;
            values.extend(
                buf.chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))),
            );
            remaining -= take;
        }
        Ok(values)
    }
}

pub fn load_dataset_binary(path: &Path) -> Result<Dataset> {
    let file = BufReader::new(File::open(path)?);
    let mut r = ByteReader {
        inner: file,
        offset: 0,
        path,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(r.fail(format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let env_id = r.string()?;
    let horizon_h = r.u64()? as usize;
    let provenance = r.string()?;
    let state_dim = r.u64()? as usize;
    let action_dim = r.u64()? as usize;
    let n_traj = r.u64()? as usize;
    let mut trajectories = Vec::new();
    for i in 0..n_traj {
        let terminated = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(r.fail(format!("trajectory {i}: bad terminated byte {other}"))),
        };
        let states = r.f64_array()?;
        let actions = r.f64_array()?;
        let rewards = r.f64_array()?;
        let t_len = rewards.len();
        if t_len == 0 || states.len() != t_len * state_dim || actions.len() != t_len * action_dim {
            return Err(r.fail(format!(
                "trajectory {i}: array lengths {}/{}/{} violate dims {state_dim}/{action_dim}",
                states.len(),
                actions.len(),
                t_len
            )));
        }
        trajectories.push(Trajectory {
            states: states.chunks_exact(state_dim).map(|c| c.to_vec()).collect(),
            actions: actions
                .chunks_exact(action_dim)
                .map(|c| c.to_vec())
                .collect(),
            rewards,
            terminated,
        });
    }
    check_loaded(
        Dataset {
            env_id,
            horizon_h,
            provenance,
            trajectories,
        },
        path,
    )
}

/// Saves in the format implied by the extension: `.jsonl` text,
/// `.rvsd` binary.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => save_dataset_jsonl(dataset, path),
        Some("rvsd") => save_dataset_binary(dataset, path),
        other => Err(Error::InvalidArgument(format!(
            "dataset path needs a .jsonl or .rvsd extension, got {other:?}"
        ))),
    }
}

/// Loads either format, deciding by the leading magic bytes.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut head = [0u8; 4];
    let n = File::open(path)?.read(&mut head)?;
    if n == 4 && &head == MAGIC {
        load_dataset_binary(path)
    } else {
        load_dataset_jsonl(path)
    }
}

/// Format-independent content digest (SHA-256 of the canonical binary
/// encoding), used to stamp datasets into checkpoints and run manifests.
pub fn dataset_content_hash(dataset: &Dataset) -> Result<String> {
    let mut bytes = Vec::new();
    write_binary(dataset, &mut bytes)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_dataset() -> Dataset {
        // Awkward values: non-dyadic decimals, extremes, subnormals.
        let t1 = Trajectory {
            states: vec![vec![0.1, 0.2], vec![0.30000000000000004, 1e-308]],
            actions: vec![vec![1.0], vec![0.0]],
            rewards: vec![0.0, 1.0],
            terminated: true,
        };
        let t2 = Trajectory {
            states: vec![vec![f64::MAX, -1e-17], vec![5e-324, -0.0], vec![7.0, 8.0]],
            actions: vec![vec![2.0], vec![1.0], vec![0.0]],
            rewards: vec![0.25, -3.5, 0.1],
            terminated: false,
        };
        Dataset {
            env_id: "toy".into(),
            horizon_h: 6,
            provenance: "unit-test".into(),
            trajectories: vec![t1, t2],
        }
    }

    #[test]
    fn jsonl_round_trip_is_value_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let ds = sample_dataset();
        save_dataset_jsonl(&ds, &path).unwrap();
        let loaded = load_dataset_jsonl(&path).unwrap();
        assert_eq!(loaded, ds);
    }

    #[test]
    fn binary_round_trip_is_value_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.rvsd");
        let ds = sample_dataset();
        save_dataset_binary(&ds, &path).unwrap();
        let loaded = load_dataset_binary(&path).unwrap();
        assert_eq!(loaded, ds);
    }

    #[test]
    fn both_formats_load_equal() {
        let dir = tempfile::tempdir().unwrap();
        let text = dir.path().join("data.jsonl");
        let bin = dir.path().join("data.rvsd");
        let ds = sample_dataset();
        save_dataset(&ds, &text).unwrap();
        save_dataset(&ds, &bin).unwrap();
        assert_eq!(load_dataset(&text).unwrap(), load_dataset(&bin).unwrap());
    }

    #[test]
    fn prologue_uses_the_documented_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        save_dataset_jsonl(&sample_dataset(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.contains("\"env_id\""));
        assert!(first.contains("\"horizon_H\""));
        assert!(first.contains("\"provenance\""));
    }

    #[test]
    fn truncated_binary_reports_offset_not_panic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.rvsd");
        save_dataset_binary(&sample_dataset(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut_path = dir.path().join("cut.rvsd");
        // Every prefix shorter than the full file must fail cleanly.
        for cut in [0, 2, 4, 7, 8, 20, bytes.len() / 2, bytes.len() - 1] {
            std::fs::write(&cut_path, &bytes[..cut]).unwrap();
            let err = load_dataset_binary(&cut_path).unwrap_err();
            match err {
                Error::Parse { location, .. } => {
                    assert!(location.starts_with("byte "), "cut={cut}: {location}")
                }
                other => panic!("cut={cut}: expected parse error, got {other}"),
            }
        }
    }

    #[test]
    fn malformed_jsonl_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        save_dataset_jsonl(&sample_dataset(), &path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replacen("\"rewards\"", "\"rew", 1);
        std::fs::write(&path, text).unwrap();
        let err = load_dataset_jsonl(&path).unwrap_err();
        match err {
            Error::Parse { location, .. } => assert_eq!(location, "line 2"),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn wrong_magic_and_version_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.rvsd");
        save_dataset_binary(&sample_dataset(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_dataset_binary(&path).unwrap_err(),
            Error::Parse { .. }
        ));
        bytes[0] = b'R';
        bytes[4] = 99;
        std::fs::write(&path, &bytes).unwrap();
        let err = load_dataset_binary(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn semantically_broken_files_fail_validation_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        // Trajectory longer than the declared horizon.
        let text = concat!(
            "{\"env_id\":\"toy\",\"horizon_H\":1,\"provenance\":\"p\"}\n",
            "{\"states\":[[0.0],[1.0]],\"actions\":[[0.0],[0.0]],",
            "\"rewards\":[0.0,0.0],\"terminated\":false}\n"
        );
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_dataset_jsonl(&path).unwrap_err(),
            Error::Parse { .. }
        ));
    }

    #[test]
    fn extension_dispatch_rejects_unknown_suffixes() {
        let dir = tempfile::tempdir().unwrap();
        let err = save_dataset(&sample_dataset(), &dir.path().join("data.csv")).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit_code::USAGE);
    }

    #[test]
    fn content_hash_tracks_values_not_format() {
        let ds = sample_dataset();
        let h1 = dataset_content_hash(&ds).unwrap();
        assert_eq!(h1.len(), 64);
        assert_eq!(h1, dataset_content_hash(&ds.clone()).unwrap());
        let mut changed = ds.clone();
        changed.trajectories[0].rewards[0] += 1e-9;
        assert_ne!(h1, dataset_content_hash(&changed).unwrap());
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_dataset(Path::new("/nonexistent/nowhere.jsonl")).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit_code::IO);
    }
}
