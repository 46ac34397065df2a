//! Domain records shared by the platform, storage and export layers.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::{Classification, Placement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExperimentMode {
    /// Researchers supply the pictures.
    Curated,
    /// Participants photograph places themselves.
    Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LifecycleState {
    Draft,
    Active,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PictureOrdering {
    #[default]
    Fixed,
    RandomPerParticipant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PictureSource {
    Curated,
    Participant,
}

impl PictureSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            PictureSource::Curated => "CURATED",
            PictureSource::Participant => "PARTICIPANT",
        }
    }
}

impl fmt::Display for PictureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Handedness {
    #[default]
    Right,
    Left,
}

/// WGS84 coordinates in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub id: String,
    pub mode: ExperimentMode,
    pub state: LifecycleState,
    pub start_time: DateTime<Utc>,
    pub finish_time: DateTime<Utc>,
    pub tag_map_id: String,
    pub picture_ids: Vec<String>,
    pub ordering: PictureOrdering,
    pub participant_ids: BTreeSet<String>,
    pub locale_default: String,
}

impl Experiment {
    /// Accepting tags: activated and inside the schedule window.
    pub fn is_active_at(&self, now: DateTime<Utc>) -> bool {
        self.state == LifecycleState::Active && self.start_time <= now && now < self.finish_time
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub username: String,
    /// PHC-format salted hash.
    pub password_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials: Option<Credentials>,
    #[serde(default)]
    pub handedness: Handedness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Researcher {
    pub username: String,
    pub password_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invitation {
    pub token: String,
    pub experiment_id: String,
    pub participant_id: String,
    /// Link sent by email; also the QR code content.
    pub url_payload: String,
    pub expires_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub participant_id: String,
    pub experiment_id: String,
    pub cursor: usize,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Picture {
    pub id: String,
    pub experiment_id: String,
    /// SHA-256 of the image bytes.
    pub blob_id: String,
    pub media_type: String,
    pub source: PictureSource,
    /// Participant who took the picture (field mode only).
    pub uploaded_by: Option<String>,
    pub location: Option<GeoPoint>,
    pub uploaded_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_time: Option<String>,
}

/// One evaluation: a participant placed a picture on the wheel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagEvent {
    pub event_id: String,
    pub experiment_id: String,
    pub participant_id: String,
    pub picture_id: String,
    pub placement: Placement,
    pub classification: Classification,
    /// Server receive time, authoritative.
    pub tagged_at: DateTime<Utc>,
    /// Whatever the client reported; advisory only.
    pub client_time: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<GeoPoint>,
    pub picture_source: PictureSource,
}

impl TagEvent {
    /// Events sharing this key supersede one another.
    pub fn supersession_key(&self) -> (&str, &str) {
        (&self.participant_id, &self.picture_id)
    }
}
