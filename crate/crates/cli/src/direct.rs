//! Direct store access. Reads work next to a running server; writes take
//! the store lock and are refused while a server holds it.

use std::fs::{self, File, TryLockError};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use chrono::{DateTime, Utc};
use emomap_core::aggregation::experiment_grid;
use emomap_core::clock::SystemClock;
use emomap_core::export::export_csv;
use emomap_core::model::{Experiment, Invitation, Picture};
use emomap_core::platform::{ExperimentDraft, NewParticipant};
use emomap_core::storage::{EntityKind, FileStore, Store};
use emomap_core::{load_snapshot, Platform, PlatformConfig, TagMapDoc};

use crate::backend::Backend;

pub const LOCK_FILE: &str = ".lock";

/// The store is being written by another process.
#[derive(Debug, thiserror::Error)]
#[error("store {0} is locked by a running server; stop it or pass --server")]
pub struct StoreLocked(pub String);

/// Exclusive hold on a store directory, released when dropped.
#[derive(Debug)]
pub struct StoreLock {
    _file: File,
}

impl StoreLock {
    pub fn acquire(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("cannot create store root {}", root.display()))?;
        let file = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(root.join(LOCK_FILE))?;
        match file.try_lock() {
            Ok(()) => Ok(Self { _file: file }),
            Err(TryLockError::WouldBlock) => Err(StoreLocked(root.display().to_string()).into()),
            Err(TryLockError::Error(e)) => Err(e.into()),
        }
    }
}

pub struct Direct {
    root: PathBuf,
    config: PlatformConfig,
}

impl Direct {
    pub fn new(root: PathBuf, config: PlatformConfig) -> Self {
        Self { root, config }
    }

    fn write<T>(&self, f: impl FnOnce(&Platform) -> emomap_core::Result<T>) -> anyhow::Result<T> {
        let _lock = StoreLock::acquire(&self.root)?;
        let store = FileStore::open(&self.root)?;
        let platform = Platform::open(Arc::new(store), Arc::new(SystemClock), self.config.clone())?;
        Ok(f(&platform)?)
    }

    fn reader(&self) -> anyhow::Result<FileStore> {
        Ok(FileStore::open_read_only(&self.root)?)
    }
}

impl Backend for Direct {
    fn create(&self, draft: ExperimentDraft) -> anyhow::Result<Experiment> {
        self.write(|p| p.create_experiment(draft))
    }

    fn list(&self) -> anyhow::Result<Vec<Experiment>> {
        let store = self.reader()?;
        let mut out = Vec::new();
        for doc in store.documents(EntityKind::Experiment)? {
            out.push(serde_json::from_value(doc).context("corrupt experiment document")?);
        }
        Ok(out)
    }

    fn activate(&self, id: &str) -> anyhow::Result<Experiment> {
        self.write(|p| p.activate(id))
    }

    fn finish(&self, id: &str) -> anyhow::Result<Experiment> {
        self.write(|p| p.finish(id))
    }

    fn add_pictures(&self, id: &str, images: Vec<(String, Vec<u8>)>) -> anyhow::Result<Vec<Picture>> {
        self.write(|p| {
            images
                .iter()
                .map(|(_, bytes)| p.add_curated_picture(id, bytes))
                .collect()
        })
    }

    fn invite(
        &self,
        experiment_id: &str,
        participant_id: &str,
        expires_at: Option<DateTime<Utc>>,
    ) -> anyhow::Result<Invitation> {
        self.write(|p| p.create_invitation(experiment_id, participant_id, expires_at))
    }

    fn add_participant(&self, new: NewParticipant) -> anyhow::Result<String> {
        self.write(|p| p.add_participant(new).map(|p| p.id))
    }

    fn import_tag_map(&self, doc: TagMapDoc) -> anyhow::Result<String> {
        self.write(|p| p.put_tag_map(doc).map(|m| m.id().to_string()))
    }

    fn export(&self, id: &str) -> anyhow::Result<String> {
        Ok(export_csv(&load_snapshot(&self.reader()?, id)?))
    }

    fn map(&self, id: &str, cell_size_deg: f64) -> anyhow::Result<String> {
        let snapshot = load_snapshot(&self.reader()?, id)?;
        Ok(experiment_grid(&snapshot, cell_size_deg)?.to_json())
    }
}

pub fn add_researcher(root: &Path, username: &str, password: &str) -> anyhow::Result<()> {
    Direct::new(root.to_path_buf(), PlatformConfig::default())
        .write(|p| p.add_researcher(username, password))
}
