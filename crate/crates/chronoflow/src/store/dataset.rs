//! Hierarchical grouping of stores collected over repeated runs: a dataset
//! holds named sessions, each a list of time-ordered store partitions.

use super::{Result, StoreError, DATASET_FILE};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub name: String,
    /// Store directories, relative to the dataset file's directory (or
    /// absolute).
    pub partitions: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub sessions: Vec<Session>,
}

impl Dataset {
    pub fn new(name: &str) -> Self {
        Dataset {
            name: name.to_string(),
            sessions: Vec::new(),
        }
    }

    /// Session names must be unique within a dataset.
    pub fn add_session(&mut self, name: &str, partitions: Vec<PathBuf>) -> Result<()> {
        if self.sessions.iter().any(|s| s.name == name) {
            return Err(StoreError::SchemaMismatch(format!(
                "session {name:?} already exists"
            )));
        }
        self.sessions.push(Session {
            name: name.to_string(),
            partitions,
        });
        Ok(())
    }

    fn file_path(dir: &Path) -> PathBuf {
        if dir.file_name().map_or(false, |f| f == DATASET_FILE) {
            dir.to_path_buf()
        } else {
            dir.join(DATASET_FILE)
        }
    }

    /// Loads and validates: unique session names, every partition path
    /// exists (resolved against the dataset's directory).
    pub fn load(dir: &Path) -> Result<Self> {
        let path = Self::file_path(dir);
        let text = std::fs::read_to_string(&path)?;
        let dataset: Dataset = serde_json::from_str(&text)
            .map_err(|e| StoreError::InvalidStore(format!("dataset parse error: {e}")))?;
        for session in &dataset.sessions {
            if dataset
                .sessions
                .iter()
                .filter(|s| s.name == session.name)
                .count()
                != 1
            {
                return Err(StoreError::InvalidStore(format!(
                    "duplicate session name {:?}",
                    session.name
                )));
            }
            for partition in dataset.resolved_partitions_at(&path, session) {
                if !partition.is_dir() {
                    return Err(StoreError::InvalidStore(format!(
                        "session {:?}: partition {} does not exist",
                        session.name,
                        partition.display()
                    )));
                }
            }
        }
        Ok(dataset)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = Self::file_path(dir);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let text = serde_json::to_string_pretty(self).expect("dataset serializes");
        std::fs::write(path, text)?;
        Ok(())
    }

    fn resolved_partitions_at(&self, dataset_file: &Path, session: &Session) -> Vec<PathBuf> {
        let base = dataset_file.parent().unwrap_or(Path::new("."));
        session
            .partitions
            .iter()
            .map(|p| {
                if p.is_absolute() {
                    p.clone()
                } else {
                    base.join(p)
                }
            })
            .collect()
    }

    /// Partition paths of a session, resolved against the dataset directory.
    pub fn resolved_partitions(&self, dir: &Path, session: &Session) -> Vec<PathBuf> {
        self.resolved_partitions_at(&Self::file_path(dir), session)
    }
}
