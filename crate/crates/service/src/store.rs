//! File-backed persistence: versioned JSON artifacts written atomically and
//! line-delimited JSON event logs.
//!
//! ```text
//! <data>/corpus.jsonl
//! <data>/users/<user>/user.json
//! <data>/users/<user>/questionnaires.jsonl
//! <data>/users/<user>/sessions/<domain>.json        session metadata
//! <data>/users/<user>/sessions/<domain>.log.jsonl   answered queries
//! <data>/users/<user>/models/<domain>.reward.json
//! <data>/users/<user>/models/<domain>.reward.loss.csv
//! <data>/users/<user>/models/<domain>.agent.json
//! <data>/users/<user>/models/<domain>.agent.meta.json
//! <data>/jobs/<job>.json
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use aui_core::ui::Domain;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn invalid_data(e: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("users"))?;
        fs::create_dir_all(root.join("jobs"))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write_atomic(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.path(rel), bytes)
    }

    pub fn write_json<T: Serialize>(&self, rel: impl AsRef<Path>, value: &T) -> io::Result<()> {
        let bytes = serde_json::to_vec_pretty(value).map_err(invalid_data)?;
        self.write_atomic(rel, &bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: impl AsRef<Path>) -> io::Result<Option<T>> {
        match fs::read(self.path(rel)) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(invalid_data),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn append_jsonl<T: Serialize>(&self, rel: impl AsRef<Path>, value: &T) -> io::Result<()> {
        let path = self.path(rel);
        fs::create_dir_all(path.parent().expect("store paths have a parent"))?;
        let mut line = serde_json::to_vec(value).map_err(invalid_data)?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(&line)?;
        f.sync_data()
    }

    /// Reads every complete line. A final line without a newline is the
    /// remains of an interrupted append and is ignored.
    pub fn read_jsonl<T: DeserializeOwned>(&self, rel: impl AsRef<Path>) -> io::Result<Vec<T>> {
        let f = match File::open(self.path(rel)) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut out = Vec::new();
        let mut reader = BufReader::new(f);
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 || !line.ends_with('\n') {
                break;
            }
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(invalid_data)?);
        }
        Ok(out)
    }

    /// Cuts an unterminated final line left by an interrupted append, so that
    /// later appends start on a fresh line.
    pub fn repair_jsonl(&self, rel: impl AsRef<Path>) -> io::Result<()> {
        let path = self.path(rel);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e),
        };
        if bytes.is_empty() || bytes.ends_with(b"\n") {
            return Ok(());
        }
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let f = OpenOptions::new().write(true).open(&path)?;
        f.set_len(keep as u64)?;
        f.sync_data()
    }

    /// Ids of every user directory that holds a record.
    pub fn user_ids(&self) -> io::Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.path("users"))? {
            let entry = entry?;
            if entry.path().join("user.json").exists() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn job_files(&self) -> io::Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.path("jobs"))? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e == "json") {
                out.push(p.strip_prefix(&self.root).expect("under root").to_path_buf());
            }
        }
        out.sort();
        Ok(out)
    }
}

/// Writes to a temporary file in the target directory, syncs it and renames
/// it over `path`, so readers see either the old or the new file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn user_file(user: &str) -> PathBuf {
    PathBuf::from(format!("users/{user}/user.json"))
}

pub fn questionnaire_log(user: &str) -> PathBuf {
    PathBuf::from(format!("users/{user}/questionnaires.jsonl"))
}

pub fn session_meta(user: &str, domain: Domain) -> PathBuf {
    PathBuf::from(format!("users/{user}/sessions/{domain}.json"))
}

pub fn session_log(user: &str, domain: Domain) -> PathBuf {
    PathBuf::from(format!("users/{user}/sessions/{domain}.log.jsonl"))
}

pub fn reward_model(user: &str, domain: Domain) -> PathBuf {
    PathBuf::from(format!("users/{user}/models/{domain}.reward.json"))
}

pub fn reward_loss(user: &str, domain: Domain) -> PathBuf {
    PathBuf::from(format!("users/{user}/models/{domain}.reward.loss.csv"))
}

pub fn agent_file(user: &str, domain: Domain) -> PathBuf {
    PathBuf::from(format!("users/{user}/models/{domain}.agent.json"))
}

pub fn agent_meta(user: &str, domain: Domain) -> PathBuf {
    PathBuf::from(format!("users/{user}/models/{domain}.agent.meta.json"))
}

pub fn job_file(job: &str) -> PathBuf {
    PathBuf::from(format!("jobs/{job}.json"))
}
