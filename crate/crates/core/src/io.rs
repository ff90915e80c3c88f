//! Persistence: binary restart snapshots, CSV tables and the run manifest.
//!
//! Snapshot layout (`KDSNAP1`): 8-byte magic, one byte order flag
//! (1 = little, 2 = big), 7 reserved bytes, then `time: f64`,
//! `n_r: u64`, `n_theta: u64`, `phi[n]`, `pi[n]` with `n = n_r·n_theta`.
//! Writers always emit little-endian; readers honour the flag.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::FieldSlice;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"KDSNAP1\0";
const HEADER_LEN: usize = 8 + 8 + 8 + 8 + 8;

/// Slice plus the grid shape it lives on (`n_theta = 1` for the 1+1 engine).
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub slice: FieldSlice,
    pub n_r: u64,
    pub n_theta: u64,
}

pub fn encode_snapshot(s: &Snapshot) -> Result<Vec<u8>> {
    let n = (s.n_r * s.n_theta) as usize;
    if s.slice.phi.len() != n || s.slice.pi.len() != n {
        return Err(Error::Snapshot(format!(
            "shape {}x{} does not match {} values",
            s.n_r,
            s.n_theta,
            s.slice.phi.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * n);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.push(1);
    out.extend_from_slice(&[0; 7]);
    out.extend_from_slice(&s.slice.time.to_le_bytes());
    out.extend_from_slice(&s.n_r.to_le_bytes());
    out.extend_from_slice(&s.n_theta.to_le_bytes());
    for v in s.slice.phi.iter().chain(&s.slice.pi) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Snapshot(format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic: not a KDSNAP1 file".into()));
    }
    let big = match bytes[8] {
        1 => false,
        2 => true,
        b => return Err(Error::Snapshot(format!("unknown byte-order flag {b}"))),
    };
    let word = |i: usize| -> [u8; 8] { bytes[i..i + 8].try_into().expect("8 bytes") };
    let f = |i: usize| if big { f64::from_be_bytes(word(i)) } else { f64::from_le_bytes(word(i)) };
    let u = |i: usize| if big { u64::from_be_bytes(word(i)) } else { u64::from_le_bytes(word(i)) };
    let (time, n_r, n_theta) = (f(16), u(24), u(32));
    let n = n_r
        .checked_mul(n_theta)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::Snapshot("grid shape overflows".into()))?;
    let want = HEADER_LEN + 16 * n;
    if bytes.len() != want {
        return Err(Error::Snapshot(format!("expected {want} bytes for {n_r}x{n_theta}, found {}", bytes.len())));
    }
    let read = |k: usize| -> Vec<f64> { (0..n).map(|j| f(HEADER_LEN + 8 * (k * n + j))).collect() };
    Ok(Snapshot { slice: FieldSlice { time, phi: read(0), pi: read(1) }, n_r, n_theta })
}

pub fn write_snapshot(path: &Path, s: &Snapshot) -> Result<()> {
    write_atomic(path, &encode_snapshot(s)?)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    decode_snapshot(&fs::read(path)?)
}

/// Write to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Parameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// CSV with a header row; floats use the shortest round-trip form.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Reads numeric columns by name from a CSV file.
pub fn read_csv_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let err = |e: csv::Error| Error::Parameter(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let headers = r.headers().map_err(err)?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| Error::Parameter(format!("{}: no column `{n}`", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec.map_err(err)?;
        for (c, &i) in idx.iter().enumerate() {
            let v: f64 = rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::Parameter(format!("{}: bad number `{}`", path.display(), &rec[i])))?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifestOutcome {
    Completed,
    BlowUp,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outcome: ManifestOutcome,
    pub detail: String,
    pub artifacts: Vec<ArtifactEntry>,
}

/// One run's output directory. Files are hashed as they are written; the
/// manifest is written last.
pub struct RunDir {
    root: PathBuf,
    command: String,
    config_sha256: String,
    started: u64,
    artifacts: Vec<ArtifactEntry>,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunDir {
    pub fn create(root: &Path, command: &str, config_text: &str) -> Result<Self> {
        fs::create_dir_all(root)?;
        let stale = root.join(MANIFEST_NAME);
        if stale.exists() {
            fs::remove_file(&stale)?;
        }
        Ok(RunDir {
            root: root.to_path_buf(),
            command: command.into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            started: now_unix(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(name), bytes)?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(ArtifactEntry { path: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let b = csv_bytes(header, rows)?;
        self.write(name, &b)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut b = serde_json::to_vec_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        b.push(b'\n');
        self.write(name, &b)
    }

    pub fn finish(self, outcome: ManifestOutcome, detail: &str) -> Result<RunManifest> {
        let m = RunManifest {
            command: self.command,
            config_sha256: self.config_sha256,
            code_version: env!("CARGO_PKG_VERSION").into(),
            started_unix: self.started,
            finished_unix: now_unix(),
            outcome,
            detail: detail.into(),
            artifacts: self.artifacts,
        };
        let b = serde_json::to_vec_pretty(&m).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        write_atomic(&self.root.join(MANIFEST_NAME), &b)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n_r: u64, n_th: u64) -> Snapshot {
        let n = (n_r * n_th) as usize;
        Snapshot {
            slice: FieldSlice {
                time: 12.5,
                phi: (0..n).map(|i| (i as f64 * 0.37).sin() / 3.0).collect(),
                pi: (0..n).map(|i| -(i as f64).sqrt() * 1e-300).collect(),
            },
            n_r,
            n_theta: n_th,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample(7, 3);
        let back = decode_snapshot(&encode_snapshot(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_and_foreign_files() {
        let b = encode_snapshot(&sample(4, 1)).unwrap();
        assert!(matches!(decode_snapshot(&b[..b.len() - 3]), Err(Error::Snapshot(_))));
        assert!(matches!(decode_snapshot(&b[..10]), Err(Error::Snapshot(_))));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_snapshot(&bad).unwrap_err().to_string().contains("magic"));
        let mut flag = b.clone();
        flag[8] = 9;
        assert!(decode_snapshot(&flag).is_err());
    }

    #[test]
    fn big_endian_payload_honoured() {
        let s = sample(3, 2);
        let le = encode_snapshot(&s).unwrap();
        let mut be = le[..16].to_vec();
        be[8] = 2;
        for chunk in le[16..].chunks(8) {
            let mut w: [u8; 8] = chunk.try_into().unwrap();
            w.reverse();
            be.extend_from_slice(&w);
        }
        assert_eq!(decode_snapshot(&be).unwrap(), s);
    }

    #[test]
    fn shape_mismatch_refused() {
        let mut s = sample(3, 2);
        s.n_r = 4;
        assert!(encode_snapshot(&s).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let rows = vec![vec![1.0, 0.1 + 0.2], vec![2.0, -1e-300]];
        fs::write(&p, csv_bytes(&["t", "phi"], rows.clone()).unwrap()).unwrap();
        let cols = read_csv_columns(&p, &["phi", "t"]).unwrap();
        assert_eq!(cols[0], vec![0.1 + 0.2, -1e-300]);
        assert_eq!(cols[1], vec![1.0, 2.0]);
        assert!(read_csv_columns(&p, &["nope"]).is_err());
    }

    #[test]
    fn manifest_lists_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rd = RunDir::create(dir.path(), "evolve", "x = 1").unwrap();
        rd.write("a.txt", b"hello").unwrap();
        rd.write_csv("b.csv", &["x"], vec![vec![1.0]]).unwrap();
        assert!(!dir.path().join(MANIFEST_NAME).exists());
        let m = rd.finish(ManifestOutcome::Completed, "").unwrap();
        assert_eq!(m.artifacts.len(), 2);
        assert_eq!(m.artifacts[0].sha256, sha256_hex(b"hello"));
        let on_disk: RunManifest = serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_NAME)).unwrap()).unwrap();
        assert_eq!(on_disk, m);
        assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
    }

    proptest! {
        #[test]
        fn random_slices_round_trip(v in proptest::collection::vec(any::<f64>(), 1..40), t in any::<f64>()) {
            let n = v.len() as u64;
            let s = Snapshot { slice: FieldSlice { time: t, phi: v.clone(), pi: v.iter().rev().cloned().collect() }, n_r: n, n_theta: 1 };
            let back = decode_snapshot(&encode_snapshot(&s).unwrap()).unwrap();
            // Bitwise comparison so NaN payloads count too.
            prop_assert_eq!(back.slice.time.to_bits(), t.to_bits());
            for (a, b) in back.slice.phi.iter().zip(&s.slice.phi) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
