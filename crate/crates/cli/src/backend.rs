//! The administrative operations, against a store or a running server.

use chrono::{DateTime, Utc};
use emomap_core::model::{Experiment, Invitation, Picture};
use emomap_core::platform::{ExperimentDraft, NewParticipant};
use emomap_core::TagMapDoc;

pub trait Backend {
    fn create(&self, draft: ExperimentDraft) -> anyhow::Result<Experiment>;
    fn list(&self) -> anyhow::Result<Vec<Experiment>>;
    fn activate(&self, id: &str) -> anyhow::Result<Experiment>;
    fn finish(&self, id: &str) -> anyhow::Result<Experiment>;
    /// `(file name, bytes)` pairs, added in order.
    fn add_pictures(&self, id: &str, images: Vec<(String, Vec<u8>)>) -> anyhow::Result<Vec<Picture>>;
    fn invite(
        &self,
        experiment_id: &str,
        participant_id: &str,
        expires_at: Option<DateTime<Utc>>,
    ) -> anyhow::Result<Invitation>;
    fn add_participant(&self, new: NewParticipant) -> anyhow::Result<String>;
    fn import_tag_map(&self, doc: TagMapDoc) -> anyhow::Result<String>;
    fn export(&self, id: &str) -> anyhow::Result<String>;
    fn map(&self, id: &str, cell_size_deg: f64) -> anyhow::Result<String>;
}
