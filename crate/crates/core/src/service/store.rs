use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::Mutex;

use super::ServiceError;
use crate::agent::{ChatTurn, UserProfile};

/// Source of user profiles.
pub trait ProfileClient: Send + Sync {
    fn fetch(&self, user: &str) -> Result<UserProfile, ServiceError>;
}

/// Per-user persisted chat history.
pub trait ConversationStore: Send + Sync {
    fn load(&self, user: &str) -> Result<Vec<ChatTurn>, ServiceError>;
    fn append(&self, user: &str, turns: &[ChatTurn]) -> Result<(), ServiceError>;
}

#[derive(Debug, Default)]
pub struct InMemoryProfiles {
    profiles: BTreeMap<String, UserProfile>,
}

impl InMemoryProfiles {
    pub fn new(profiles: impl IntoIterator<Item = UserProfile>) -> Self {
        InMemoryProfiles {
            profiles: profiles.into_iter().map(|p| (p.user_id.clone(), p)).collect(),
        }
    }
}

impl ProfileClient for InMemoryProfiles {
    fn fetch(&self, user: &str) -> Result<UserProfile, ServiceError> {
        self.profiles
            .get(user)
            .cloned()
            .ok_or_else(|| ServiceError::ProfileNotFound(user.to_string()))
    }
}

/// A JSON array of profiles, re-read on every fetch.
#[derive(Clone, Debug)]
pub struct FileProfiles {
    path: PathBuf,
}

impl FileProfiles {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileProfiles { path: path.into() }
    }
}

impl ProfileClient for FileProfiles {
    fn fetch(&self, user: &str) -> Result<UserProfile, ServiceError> {
        let unavailable =
            |e: &dyn std::fmt::Display| ServiceError::ProfileUnavailable(format!("{}: {e}", self.path.display()));
        let text = fs::read_to_string(&self.path).map_err(|e| unavailable(&e))?;
        let profiles: Vec<UserProfile> = serde_json::from_str(&text).map_err(|e| unavailable(&e))?;
        profiles
            .into_iter()
            .find(|p| p.user_id == user)
            .ok_or_else(|| ServiceError::ProfileNotFound(user.to_string()))
    }
}

#[derive(Debug, Default)]
pub struct InMemoryStore {
    turns: Mutex<BTreeMap<String, Vec<ChatTurn>>>,
}

impl InMemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn seed(&self, user: &str, turns: Vec<ChatTurn>) {
        self.turns.lock().expect("store lock").insert(user.to_string(), turns);
    }
}

impl ConversationStore for InMemoryStore {
    fn load(&self, user: &str) -> Result<Vec<ChatTurn>, ServiceError> {
        Ok(self
            .turns
            .lock()
            .expect("store lock")
            .get(user)
            .cloned()
            .unwrap_or_default())
    }

    fn append(&self, user: &str, turns: &[ChatTurn]) -> Result<(), ServiceError> {
        self.turns
            .lock()
            .expect("store lock")
            .entry(user.to_string())
            .or_default()
            .extend_from_slice(turns);
        Ok(())
    }
}

/// One JSON-lines file per user under a directory. File names are the hex
/// encoding of the user id.
#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
    write: Mutex<()>,
}

impl FileStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FileStore {
            dir: dir.into(),
            write: Mutex::new(()),
        }
    }

    fn path(&self, user: &str) -> PathBuf {
        self.dir.join(format!("{}.jsonl", hex::encode(user)))
    }

    fn unavailable(&self, e: impl std::fmt::Display) -> ServiceError {
        ServiceError::StoreUnavailable(format!("{}: {e}", self.dir.display()))
    }
}

impl ConversationStore for FileStore {
    fn load(&self, user: &str) -> Result<Vec<ChatTurn>, ServiceError> {
        if !self.dir.is_dir() {
            return Err(self.unavailable("not a directory"));
        }
        let file = match fs::File::open(self.path(user)) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.unavailable(e)),
        };
        let mut turns = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| self.unavailable(e))?;
            if !line.is_empty() {
                turns.push(serde_json::from_str(&line).map_err(|e| self.unavailable(e))?);
            }
        }
        Ok(turns)
    }

    fn append(&self, user: &str, turns: &[ChatTurn]) -> Result<(), ServiceError> {
        let _guard = self.write.lock().expect("store lock");
        let mut buf = Vec::new();
        for t in turns {
            serde_json::to_writer(&mut buf, t).map_err(|e| self.unavailable(e))?;
            buf.push(b'\n');
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path(user))
            .map_err(|e| self.unavailable(e))?;
        file.write_all(&buf).map_err(|e| self.unavailable(e))
    }
}
