//! On-disk project store.
//!
//! One directory per project under the store root:
//!
//! ```text
//! <root>/<project_id>/inputs.json     papers, criteria and test items as accepted
//! <root>/<project_id>/config.json
//! <root>/<project_id>/votes.jsonl     append-only vote log, one JSON record per line
//! <root>/<project_id>/snapshot.json   full project state at some sequence number
//! ```
//!
//! Recovery loads the snapshot and replays every logged vote with a higher
//! sequence number.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crowdscreen_core::config::ProjectConfig;
use crowdscreen_core::domain::ProjectInputs;
use crowdscreen_core::{ScreeningProject, Vote};
use thiserror::Error;

const INPUTS: &str = "inputs.json";
const CONFIG: &str = "config.json";
const VOTES: &str = "votes.jsonl";
const SNAPSHOT: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown project {0}")]
    UnknownProject(String),
    #[error("project {0} already exists")]
    Exists(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// What recovery found in the log.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RecoveryReport {
    pub snapshot_sequence_no: u64,
    pub replayed: u64,
    /// Set when replay stopped early at a corrupt or non-replayable line.
    pub warning: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ProjectStore {
    root: PathBuf,
}

impl ProjectStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn exists(&self, id: &str) -> bool {
        self.dir(id).join(SNAPSHOT).is_file()
    }

    /// Project ids in the store, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            if entry.path().join(SNAPSHOT).is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Next free id of the form `prj-0001`.
    pub fn next_id(&self) -> Result<String, StoreError> {
        let taken = self.list()?;
        let mut n = taken.len() + 1;
        loop {
            let id = format!("prj-{n:04}");
            if !self.dir(&id).exists() {
                return Ok(id);
            }
            n += 1;
        }
    }

    /// Writes a new project: inputs, config, an empty log and the initial snapshot.
    pub fn create(&self, project: &ScreeningProject) -> Result<(), StoreError> {
        let dir = self.dir(project.id());
        if dir.exists() {
            return Err(StoreError::Exists(project.id().to_string()));
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomic(&dir.join(INPUTS), &to_json_pretty(project.inputs()))?;
        write_atomic(&dir.join(CONFIG), &to_json_pretty(project.config()))?;
        let log = dir.join(VOTES);
        File::create(&log).map_err(io_err(&log))?;
        for vote in project.vote_log() {
            self.append_vote(project.id(), vote)?;
        }
        self.write_snapshot(project)
    }

    /// Appends one vote record and flushes it to disk.
    pub fn append_vote(&self, id: &str, vote: &Vote) -> Result<(), StoreError> {
        let path = self.dir(id).join(VOTES);
        let mut file = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
        let mut line = serde_json::to_string(vote).expect("votes serialize");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io_err(&path))?;
        file.sync_data().map_err(io_err(&path))
    }

    pub fn write_snapshot(&self, project: &ScreeningProject) -> Result<(), StoreError> {
        let path = self.dir(project.id()).join(SNAPSHOT);
        let json = serde_json::to_string(project).expect("project state serializes");
        write_atomic(&path, &json)
    }

    /// Snapshot plus replay of the log suffix. A line that does not parse or
    /// does not replay ends recovery there; the log is cut back to the last
    /// good line (the original is kept next to it) so later appends stay
    /// replayable.
    pub fn recover(&self, id: &str) -> Result<(ScreeningProject, RecoveryReport), StoreError> {
        let dir = self.dir(id);
        if !self.exists(id) {
            return Err(StoreError::UnknownProject(id.to_string()));
        }
        let snapshot_path = dir.join(SNAPSHOT);
        let text = fs::read_to_string(&snapshot_path).map_err(io_err(&snapshot_path))?;
        let mut project: ScreeningProject = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: snapshot_path.clone(),
            reason: e.to_string(),
        })?;
        let mut report = RecoveryReport {
            snapshot_sequence_no: project.last_sequence_no(),
            ..RecoveryReport::default()
        };

        let log_path = dir.join(VOTES);
        let file = File::open(&log_path).map_err(io_err(&log_path))?;
        let mut reader = BufReader::new(file);
        let mut good_bytes = 0u64;
        let mut line_no = 0usize;
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(io_err(&log_path))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let problem = if !line.ends_with('\n') {
                Some("truncated line".to_string())
            } else {
                match serde_json::from_str::<Vote>(line.trim_end()) {
                    Err(e) => Some(format!("unparseable record: {e}")),
                    Ok(vote) if vote.sequence_no <= project.last_sequence_no() => None,
                    Ok(vote) => match project.replay_vote(&vote) {
                        Ok(()) => {
                            report.replayed += 1;
                            None
                        }
                        Err(e) => Some(e.to_string()),
                    },
                }
            };
            if let Some(problem) = problem {
                report.warning = Some(format!(
                    "{}: line {line_no}: {problem}; recovered up to sequence {}",
                    log_path.display(),
                    project.last_sequence_no()
                ));
                self.cut_log(&log_path, good_bytes)?;
                break;
            }
            good_bytes += n as u64;
        }
        Ok((project, report))
    }

    fn cut_log(&self, path: &Path, keep: u64) -> Result<(), StoreError> {
        let mut backup = path.as_os_str().to_owned();
        backup.push(".corrupt");
        fs::copy(path, &backup).map_err(io_err(path))?;
        let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        file.set_len(keep).map_err(io_err(path))?;
        file.sync_data().map_err(io_err(path))
    }

    /// The accepted inputs and config, read without touching the log.
    pub fn load_inputs(&self, id: &str) -> Result<(ProjectInputs, ProjectConfig), StoreError> {
        if !self.exists(id) {
            return Err(StoreError::UnknownProject(id.to_string()));
        }
        let dir = self.dir(id);
        Ok((read_json(&dir.join(INPUTS))?, read_json(&dir.join(CONFIG))?))
    }

    /// Raw log records, for inspection.
    pub fn read_log(&self, id: &str) -> Result<Vec<Vote>, StoreError> {
        let path = self.dir(id).join(VOTES);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        text.lines()
            .map(|l| {
                serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.dir(id).join(VOTES)
    }

    pub fn snapshot_path(&self, id: &str) -> PathBuf {
        self.dir(id).join(SNAPSHOT)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn to_json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializes");
    s.push('\n');
    s
}

/// Write-then-rename so readers never see a half-written file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), StoreError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(contents.as_bytes()).map_err(io_err(&tmp))?;
        file.sync_data().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}
