//! Experiment lifecycle, participant sessions, invitations and tag ingestion.
//!
//! Each experiment's state sits behind its own mutex: mutations of one
//! experiment are serialized (and its event log is appended in that order),
//! while different experiments never wait on each other. The platform-wide
//! tables (participants, tag maps, invitations, sessions) are leaf locks and
//! are never held while an experiment lock is being acquired.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::{self, GridDoc, PictureView, UserViewEntry};
use crate::auth;
use crate::clock::{to_millis, Clock};
use crate::error::{Error, Result};
use crate::export;
use crate::model::*;
use crate::ordering::participant_permutation;
use crate::snapshot::{decode, ExperimentSnapshot};
use crate::storage::{is_valid_id, BlobMeta, EntityKind, Store};
use crate::wheel::{InvalidTagMap, TagMapDoc, PLUTCHIK_ID};
use crate::{Placement, TagMap};

pub const DEFAULT_MAX_IMAGE_BYTES: usize = 20 * 1024 * 1024;

/// Lifetime of a researcher bearer token.
pub const RESEARCHER_TOKEN_TTL: Duration = Duration::hours(24);

#[derive(Debug, Clone)]
pub struct PlatformConfig {
    /// Public base URL used to build invitation links.
    pub base_url: String,
    pub max_image_bytes: usize,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8080".into(),
            max_image_bytes: DEFAULT_MAX_IMAGE_BYTES,
        }
    }
}

fn default_tag_map() -> String {
    PLUTCHIK_ID.to_string()
}

fn default_locale() -> String {
    "en".to_string()
}

/// Researcher input for a new experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDraft {
    #[serde(default)]
    pub id: Option<String>,
    pub mode: ExperimentMode,
    pub start_time: DateTime<Utc>,
    pub finish_time: DateTime<Utc>,
    #[serde(default = "default_tag_map")]
    pub tag_map_id: String,
    #[serde(default)]
    pub picture_ids: Vec<String>,
    #[serde(default)]
    pub ordering: PictureOrdering,
    #[serde(default)]
    pub participant_ids: BTreeSet<String>,
    #[serde(default = "default_locale")]
    pub locale_default: String,
}

/// Partial update of an experiment. Any `mode` value is rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_time: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_time: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picture_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<PictureOrdering>,
    /// Replaces the participant set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant_ids: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub add_participants: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locale_default: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewParticipant {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub display_name: Option<String>,
    #[serde(default)]
    pub username: Option<String>,
    #[serde(default)]
    pub password: Option<String>,
    #[serde(default)]
    pub handedness: Handedness,
}

/// Ways a participant can log into an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LoginRequest {
    /// Invitation link or QR code.
    Invitation { token: String },
    Credentials {
        username: String,
        password: String,
        experiment_id: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagSubmission {
    pub picture_id: String,
    pub placement: Placement,
    pub location: Option<GeoPoint>,
    pub client_time: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NextPicture {
    Picture {
        picture_id: String,
        position: usize,
        total: usize,
    },
    Done {
        done: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearcherLogin {
    pub token: String,
    pub expires_at: DateTime<Utc>,
}

/// The picture sequence a participant sees in a curated experiment.
pub fn picture_order(experiment: &Experiment, participant_id: &str) -> Result<Vec<String>> {
    if experiment.mode != ExperimentMode::Curated {
        return Err(Error::WrongMode(experiment.mode));
    }
    Ok(match experiment.ordering {
        PictureOrdering::Fixed => experiment.picture_ids.clone(),
        PictureOrdering::RandomPerParticipant => {
            participant_permutation(&experiment.id, participant_id, &experiment.picture_ids)
        }
    })
}

/// Media type of a JPEG or PNG that fully decodes.
pub fn sniff_image(bytes: &[u8]) -> Result<&'static str> {
    let (format, media_type) = match image::guess_format(bytes) {
        Ok(image::ImageFormat::Jpeg) => (image::ImageFormat::Jpeg, "image/jpeg"),
        Ok(image::ImageFormat::Png) => (image::ImageFormat::Png, "image/png"),
        _ => return Err(Error::UndecodableImage),
    };
    image::load_from_memory_with_format(bytes, format).map_err(|_| Error::UndecodableImage)?;
    Ok(media_type)
}

struct ExperimentCell {
    snapshot: ExperimentSnapshot,
}

#[derive(Default)]
struct Sessions {
    by_token: HashMap<String, Session>,
    by_participant: HashMap<String, String>,
}

struct IssuedToken {
    username: String,
    expires_at: DateTime<Utc>,
}

pub struct Platform {
    store: Arc<dyn Store>,
    clock: Arc<dyn Clock>,
    config: PlatformConfig,
    tag_maps: RwLock<BTreeMap<String, TagMap>>,
    participants: RwLock<BTreeMap<String, Participant>>,
    researchers: RwLock<BTreeMap<String, Researcher>>,
    invitations: RwLock<HashMap<String, Invitation>>,
    experiments: RwLock<BTreeMap<String, Arc<Mutex<ExperimentCell>>>>,
    /// picture id -> experiment id
    picture_index: RwLock<HashMap<String, String>>,
    sessions: Mutex<Sessions>,
    researcher_tokens: Mutex<HashMap<String, IssuedToken>>,
}

fn read<T>(l: &RwLock<T>) -> std::sync::RwLockReadGuard<'_, T> {
    l.read().unwrap_or_else(|p| p.into_inner())
}

fn write<T>(l: &RwLock<T>) -> std::sync::RwLockWriteGuard<'_, T> {
    l.write().unwrap_or_else(|p| p.into_inner())
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn to_doc<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("domain records serialize")
}

fn check_location(location: Option<GeoPoint>) -> Result<()> {
    match location {
        Some(l) if !l.is_valid() => Err(Error::InvalidLocation),
        _ => Ok(()),
    }
}

impl Platform {
    /// Opens the platform over a store, replaying everything it holds.
    pub fn open(
        store: Arc<dyn Store>,
        clock: Arc<dyn Clock>,
        config: PlatformConfig,
    ) -> Result<Self> {
        let mut tag_maps = BTreeMap::new();
        tag_maps.insert(PLUTCHIK_ID.to_string(), TagMap::plutchik());
        for doc in store.documents(EntityKind::TagMap)? {
            let map: TagMap = decode(EntityKind::TagMap, doc)?;
            tag_maps.insert(map.id().to_string(), map);
        }

        let mut participants = BTreeMap::new();
        for doc in store.documents(EntityKind::Participant)? {
            let p: Participant = decode(EntityKind::Participant, doc)?;
            participants.insert(p.id.clone(), p);
        }
        let mut researchers = BTreeMap::new();
        for doc in store.documents(EntityKind::Researcher)? {
            let r: Researcher = decode(EntityKind::Researcher, doc)?;
            researchers.insert(r.username.clone(), r);
        }
        let mut invitations = HashMap::new();
        for doc in store.documents(EntityKind::Invitation)? {
            let i: Invitation = decode(EntityKind::Invitation, doc)?;
            invitations.insert(i.token.clone(), i);
        }

        let mut pictures: HashMap<String, BTreeMap<String, Picture>> = HashMap::new();
        let mut picture_index = HashMap::new();
        for doc in store.documents(EntityKind::Picture)? {
            let p: Picture = decode(EntityKind::Picture, doc)?;
            picture_index.insert(p.id.clone(), p.experiment_id.clone());
            pictures
                .entry(p.experiment_id.clone())
                .or_default()
                .insert(p.id.clone(), p);
        }

        let mut experiments = BTreeMap::new();
        for doc in store.documents(EntityKind::Experiment)? {
            let experiment: Experiment = decode(EntityKind::Experiment, doc)?;
            let tag_map = tag_maps
                .get(&experiment.tag_map_id)
                .cloned()
                .ok_or_else(|| Error::UnknownTagMap(experiment.tag_map_id.clone()))?;
            let events = store.events(&experiment.id)?;
            let snapshot = ExperimentSnapshot {
                pictures: pictures.remove(&experiment.id).unwrap_or_default(),
                experiment,
                tag_map,
                events,
            };
            experiments.insert(
                snapshot.experiment.id.clone(),
                Arc::new(Mutex::new(ExperimentCell { snapshot })),
            );
        }

        Ok(Self {
            store,
            clock,
            config,
            tag_maps: RwLock::new(tag_maps),
            participants: RwLock::new(participants),
            researchers: RwLock::new(researchers),
            invitations: RwLock::new(invitations),
            experiments: RwLock::new(experiments),
            picture_index: RwLock::new(picture_index),
            sessions: Mutex::new(Sessions::default()),
            researcher_tokens: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<dyn Store> {
        &self.store
    }

    fn now(&self) -> DateTime<Utc> {
        to_millis(self.clock.now())
    }

    fn cell(&self, experiment_id: &str) -> Result<Arc<Mutex<ExperimentCell>>> {
        read(&self.experiments)
            .get(experiment_id)
            .cloned()
            .ok_or_else(|| Error::UnknownExperiment(experiment_id.to_string()))
    }

    // ----- researchers -------------------------------------------------

    pub fn add_researcher(&self, username: &str, password: &str) -> Result<()> {
        if !is_valid_id(username) {
            return Err(Error::InvalidId(username.to_string()));
        }
        if password.is_empty() {
            return Err(Error::InvalidRequest("password must not be empty".into()));
        }
        if read(&self.researchers).contains_key(username) {
            return Err(Error::AlreadyExists(username.to_string()));
        }
        let researcher = Researcher {
            username: username.to_string(),
            password_hash: auth::hash_password(password),
        };
        let mut researchers = write(&self.researchers);
        if researchers.contains_key(username) {
            return Err(Error::AlreadyExists(username.to_string()));
        }
        self.store
            .put_document(EntityKind::Researcher, username, &to_doc(&researcher))?;
        researchers.insert(username.to_string(), researcher);
        Ok(())
    }

    pub fn login_researcher(&self, username: &str, password: &str) -> Result<ResearcherLogin> {
        let hash = read(&self.researchers)
            .get(username)
            .map(|r| r.password_hash.clone());
        match hash {
            Some(h) if auth::verify_password(password, &h) => {}
            _ => return Err(Error::BadCredentials),
        }
        let token = auth::new_token();
        let expires_at = self.now() + RESEARCHER_TOKEN_TTL;
        let mut tokens = lock(&self.researcher_tokens);
        let now = self.now();
        tokens.retain(|_, t| t.expires_at > now);
        tokens.insert(
            token.clone(),
            IssuedToken {
                username: username.to_string(),
                expires_at,
            },
        );
        Ok(ResearcherLogin { token, expires_at })
    }

    /// Username behind a live researcher token.
    pub fn authenticate_researcher(&self, token: &str) -> Result<String> {
        let tokens = lock(&self.researcher_tokens);
        match tokens.get(token) {
            Some(t) if t.expires_at > self.now() => Ok(t.username.clone()),
            _ => Err(Error::BadCredentials),
        }
    }

    // ----- participants and tag maps -----------------------------------

    pub fn add_participant(&self, new: NewParticipant) -> Result<Participant> {
        let id = new.id.unwrap_or_else(|| auth::new_id("par"));
        if !is_valid_id(&id) {
            return Err(Error::InvalidId(id));
        }
        let credentials = match (new.username, new.password) {
            (Some(username), Some(password)) if !username.is_empty() && !password.is_empty() => {
                Some((username, password))
            }
            (None, None) => None,
            _ => {
                return Err(Error::InvalidRequest(
                    "username and password must be given together".into(),
                ))
            }
        };
        if let Some((username, _)) = &credentials {
            let taken = read(&self.participants).values().any(|p| {
                p.credentials.as_ref().map(|c| &c.username) == Some(username)
            });
            if taken {
                return Err(Error::AlreadyExists(username.clone()));
            }
        }
        let participant = Participant {
            display_name: new.display_name.unwrap_or_else(|| id.clone()),
            id,
            credentials: credentials.map(|(username, password)| Credentials {
                username,
                password_hash: auth::hash_password(&password),
            }),
            handedness: new.handedness,
        };
        self.insert_participant(participant.clone())?;
        Ok(participant)
    }

    fn insert_participant(&self, participant: Participant) -> Result<()> {
        let mut participants = write(&self.participants);
        if participants.contains_key(&participant.id) {
            return Err(Error::AlreadyExists(participant.id));
        }
        if let Some(c) = &participant.credentials {
            let taken = participants
                .values()
                .any(|p| p.credentials.as_ref().map(|x| &x.username) == Some(&c.username));
            if taken {
                return Err(Error::AlreadyExists(c.username.clone()));
            }
        }
        self.store
            .put_document(EntityKind::Participant, &participant.id, &to_doc(&participant))?;
        participants.insert(participant.id.clone(), participant);
        Ok(())
    }

    pub fn participant(&self, id: &str) -> Result<Participant> {
        read(&self.participants)
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownParticipant(id.to_string()))
    }

    pub fn participants(&self) -> Vec<Participant> {
        read(&self.participants).values().cloned().collect()
    }

    /// Registers a custom tag map. Existing ids cannot be redefined, since
    /// stored classifications depend on them.
    pub fn put_tag_map(&self, doc: TagMapDoc<f64>) -> Result<TagMap> {
        if !is_valid_id(&doc.id) {
            return Err(Error::InvalidId(doc.id));
        }
        let map = TagMap::new(doc).map_err(|InvalidTagMap(v)| Error::InvalidTagMap(v))?;
        let mut maps = write(&self.tag_maps);
        if maps.contains_key(map.id()) {
            return Err(Error::AlreadyExists(map.id().to_string()));
        }
        self.store
            .put_document(EntityKind::TagMap, map.id(), &to_doc(&map))?;
        maps.insert(map.id().to_string(), map.clone());
        Ok(map)
    }

    pub fn tag_map(&self, id: &str) -> Result<TagMap> {
        read(&self.tag_maps)
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownTagMap(id.to_string()))
    }

    pub fn tag_maps(&self) -> Vec<TagMap> {
        read(&self.tag_maps).values().cloned().collect()
    }

    fn check_participants_exist<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> Result<()> {
        let participants = read(&self.participants);
        for id in ids {
            if !participants.contains_key(id) {
                return Err(Error::UnknownParticipant(id.clone()));
            }
        }
        Ok(())
    }

    // ----- experiments -------------------------------------------------

    pub fn create_experiment(&self, draft: ExperimentDraft) -> Result<Experiment> {
        let id = draft.id.unwrap_or_else(|| auth::new_id("exp"));
        if !is_valid_id(&id) {
            return Err(Error::InvalidId(id));
        }
        if draft.start_time >= draft.finish_time {
            return Err(Error::InvalidSchedule);
        }
        let tag_map = self.tag_map(&draft.tag_map_id)?;
        // a new experiment owns no pictures yet
        if let Some(p) = draft.picture_ids.first() {
            return Err(Error::UnknownPicture(p.clone()));
        }
        self.check_participants_exist(&draft.participant_ids)?;
        let experiment = Experiment {
            id: id.clone(),
            mode: draft.mode,
            state: LifecycleState::Draft,
            start_time: draft.start_time,
            finish_time: draft.finish_time,
            tag_map_id: draft.tag_map_id,
            picture_ids: Vec::new(),
            ordering: draft.ordering,
            participant_ids: draft.participant_ids,
            locale_default: draft.locale_default,
        };

        let mut experiments = write(&self.experiments);
        if experiments.contains_key(&id) {
            return Err(Error::AlreadyExists(id));
        }
        self.store
            .put_document(EntityKind::Experiment, &id, &to_doc(&experiment))?;
        let snapshot = ExperimentSnapshot {
            experiment: experiment.clone(),
            tag_map,
            pictures: BTreeMap::new(),
            events: Vec::new(),
        };
        experiments.insert(id, Arc::new(Mutex::new(ExperimentCell { snapshot })));
        Ok(experiment)
    }

    pub fn experiment(&self, id: &str) -> Result<Experiment> {
        let cell = self.cell(id)?;
        let guard = lock(&cell);
        Ok(guard.snapshot.experiment.clone())
    }

    pub fn experiments(&self) -> Vec<Experiment> {
        let cells: Vec<_> = read(&self.experiments).values().cloned().collect();
        cells
            .iter()
            .map(|c| lock(c).snapshot.experiment.clone())
            .collect()
    }

    /// Persists a modified copy of the experiment, then commits it in memory.
    fn commit(&self, cell: &mut ExperimentCell, experiment: Experiment) -> Result<Experiment> {
        self.store
            .put_document(EntityKind::Experiment, &experiment.id, &to_doc(&experiment))?;
        cell.snapshot.experiment = experiment.clone();
        Ok(experiment)
    }

    pub fn update_experiment(&self, id: &str, patch: ExperimentPatch) -> Result<Experiment> {
        let cell = self.cell(id)?;
        let mut cell = lock(&cell);
        if patch.mode.is_some() {
            return Err(Error::ModeImmutable);
        }
        let mut exp = cell.snapshot.experiment.clone();
        if exp.state == LifecycleState::Finished {
            return Err(Error::ExperimentFinished);
        }

        if let Some(t) = patch.start_time {
            exp.start_time = t;
        }
        if let Some(t) = patch.finish_time {
            exp.finish_time = t;
        }
        if exp.start_time >= exp.finish_time {
            return Err(Error::InvalidSchedule);
        }
        if let Some(pictures) = patch.picture_ids {
            if exp.mode != ExperimentMode::Curated {
                return Err(Error::WrongMode(exp.mode));
            }
            let mut seen = BTreeSet::new();
            for p in &pictures {
                match cell.snapshot.pictures.get(p) {
                    Some(pic) if pic.source == PictureSource::Curated => {}
                    _ => return Err(Error::UnknownPicture(p.clone())),
                }
                if !seen.insert(p) {
                    return Err(Error::InvalidRequest(format!("picture '{p}' listed twice")));
                }
            }
            if exp.state == LifecycleState::Active && pictures.is_empty() {
                return Err(Error::NoPictures);
            }
            exp.picture_ids = pictures;
        }
        if let Some(o) = patch.ordering {
            exp.ordering = o;
        }
        if let Some(set) = patch.participant_ids {
            self.check_participants_exist(&set)?;
            exp.participant_ids = set;
        }
        if let Some(add) = patch.add_participants {
            self.check_participants_exist(&add)?;
            exp.participant_ids.extend(add);
        }
        if let Some(l) = patch.locale_default {
            exp.locale_default = l;
        }
        self.commit(&mut cell, exp)
    }

    pub fn activate(&self, id: &str) -> Result<Experiment> {
        let cell = self.cell(id)?;
        let mut cell = lock(&cell);
        let mut exp = cell.snapshot.experiment.clone();
        if exp.state != LifecycleState::Draft {
            return Err(Error::InvalidTransition {
                from: exp.state,
                to: LifecycleState::Active,
            });
        }
        if exp.mode == ExperimentMode::Curated && exp.picture_ids.is_empty() {
            return Err(Error::NoPictures);
        }
        exp.state = LifecycleState::Active;
        self.commit(&mut cell, exp)
    }

    pub fn finish(&self, id: &str) -> Result<Experiment> {
        let cell = self.cell(id)?;
        let mut cell = lock(&cell);
        let mut exp = cell.snapshot.experiment.clone();
        if exp.state != LifecycleState::Active {
            return Err(Error::InvalidTransition {
                from: exp.state,
                to: LifecycleState::Finished,
            });
        }
        exp.state = LifecycleState::Finished;
        self.commit(&mut cell, exp)
    }

    fn store_picture(
        &self,
        cell: &mut ExperimentCell,
        bytes: &[u8],
        media_type: &str,
        source: PictureSource,
        uploaded_by: Option<String>,
        location: Option<GeoPoint>,
        client_time: Option<String>,
    ) -> Result<Picture> {
        let id = auth::new_id("pic");
        let uploaded_at = self.now();
        let meta = BlobMeta {
            media_type: media_type.to_string(),
            uploader: uploaded_by.clone(),
            experiment_id: cell.snapshot.experiment.id.clone(),
            picture_id: id.clone(),
            location,
            uploaded_at,
        };
        let blob_id = self.store.put_blob(bytes, &meta)?;
        let picture = Picture {
            id: id.clone(),
            experiment_id: cell.snapshot.experiment.id.clone(),
            blob_id,
            media_type: media_type.to_string(),
            source,
            uploaded_by,
            location,
            uploaded_at,
            client_time,
        };
        self.store
            .put_document(EntityKind::Picture, &id, &to_doc(&picture))?;
        cell.snapshot.pictures.insert(id.clone(), picture.clone());
        write(&self.picture_index).insert(id, picture.experiment_id.clone());
        Ok(picture)
    }

    fn check_image(&self, bytes: &[u8]) -> Result<&'static str> {
        if bytes.len() > self.config.max_image_bytes {
            return Err(Error::ImageTooLarge {
                limit: self.config.max_image_bytes,
            });
        }
        sniff_image(bytes)
    }

    /// Uploads a researcher-prepared picture and appends it to the order.
    pub fn add_curated_picture(&self, experiment_id: &str, bytes: &[u8]) -> Result<Picture> {
        let cell = self.cell(experiment_id)?;
        {
            let c = lock(&cell);
            let exp = &c.snapshot.experiment;
            if exp.mode != ExperimentMode::Curated {
                return Err(Error::WrongMode(exp.mode));
            }
            if exp.state == LifecycleState::Finished {
                return Err(Error::ExperimentFinished);
            }
        }
        let media_type = self.check_image(bytes)?;
        let mut c = lock(&cell);
        if c.snapshot.experiment.state == LifecycleState::Finished {
            return Err(Error::ExperimentFinished);
        }
        let picture =
            self.store_picture(&mut c, bytes, media_type, PictureSource::Curated, None, None, None)?;
        let mut exp = c.snapshot.experiment.clone();
        exp.picture_ids.push(picture.id.clone());
        self.commit(&mut c, exp)?;
        Ok(picture)
    }

    /// Mints an invitation link binding a participant to an experiment.
    ///
    /// Unknown participant ids are registered as token-only participants, and
    /// the participant is added to the experiment if not already in it.
    pub fn create_invitation(
        &self,
        experiment_id: &str,
        participant_id: &str,
        expires_at: Option<DateTime<Utc>>,
    ) -> Result<Invitation> {
        if !is_valid_id(participant_id) {
            return Err(Error::InvalidId(participant_id.to_string()));
        }
        let cell = self.cell(experiment_id)?;
        let mut c = lock(&cell);
        if c.snapshot.experiment.state == LifecycleState::Finished {
            return Err(Error::ExperimentFinished);
        }
        if self.participant(participant_id).is_err() {
            let p = Participant {
                id: participant_id.to_string(),
                display_name: participant_id.to_string(),
                credentials: None,
                handedness: Handedness::Right,
            };
            match self.insert_participant(p) {
                Ok(()) | Err(Error::AlreadyExists(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if !c.snapshot.experiment.participant_ids.contains(participant_id) {
            let mut exp = c.snapshot.experiment.clone();
            exp.participant_ids.insert(participant_id.to_string());
            self.commit(&mut c, exp)?;
        }
        let token = auth::new_token();
        let invitation = Invitation {
            url_payload: format!(
                "{}/join?token={token}",
                self.config.base_url.trim_end_matches('/')
            ),
            token: token.clone(),
            experiment_id: experiment_id.to_string(),
            participant_id: participant_id.to_string(),
            expires_at,
        };
        self.store
            .put_document(EntityKind::Invitation, &token, &to_doc(&invitation))?;
        write(&self.invitations).insert(token, invitation.clone());
        Ok(invitation)
    }

    // ----- participant sessions ----------------------------------------

    /// Logs a participant into one experiment, closing any earlier session.
    pub fn open_session(&self, request: LoginRequest) -> Result<Session> {
        let now = self.now();
        let (participant_id, experiment_id) = match request {
            LoginRequest::Invitation { token } => {
                let inv = read(&self.invitations)
                    .get(&token)
                    .cloned()
                    .ok_or(Error::BadCredentials)?;
                if inv.expires_at.is_some_and(|t| t <= now) {
                    return Err(Error::TokenExpired);
                }
                (inv.participant_id, inv.experiment_id)
            }
            LoginRequest::Credentials {
                username,
                password,
                experiment_id,
            } => {
                let found = read(&self.participants).values().find_map(|p| {
                    p.credentials
                        .as_ref()
                        .filter(|c| c.username == username)
                        .map(|c| (p.id.clone(), c.password_hash.clone()))
                });
                match found {
                    Some((pid, hash)) if auth::verify_password(&password, &hash) => {
                        (pid, experiment_id)
                    }
                    _ => return Err(Error::BadCredentials),
                }
            }
        };

        {
            let cell = self.cell(&experiment_id)?;
            let c = lock(&cell);
            let exp = &c.snapshot.experiment;
            if !exp.participant_ids.contains(&participant_id) {
                return Err(Error::NotAParticipant(participant_id));
            }
            if !exp.is_active_at(now) {
                return Err(Error::ExperimentNotActive);
            }
        }

        let session = Session {
            token: auth::new_token(),
            participant_id: participant_id.clone(),
            experiment_id,
            cursor: 0,
            created_at: now,
        };
        let mut sessions = lock(&self.sessions);
        if let Some(old) = sessions
            .by_participant
            .insert(participant_id, session.token.clone())
        {
            sessions.by_token.remove(&old);
        }
        sessions
            .by_token
            .insert(session.token.clone(), session.clone());
        Ok(session)
    }

    /// The live session behind a token.
    pub fn session(&self, token: &str) -> Result<Session> {
        lock(&self.sessions)
            .by_token
            .get(token)
            .cloned()
            .ok_or(Error::SessionClosed)
    }

    pub fn close_session(&self, token: &str) {
        let mut sessions = lock(&self.sessions);
        if let Some(s) = sessions.by_token.remove(token) {
            sessions.by_participant.remove(&s.participant_id);
        }
    }

    pub fn live_session_count(&self, participant_id: &str) -> usize {
        lock(&self.sessions)
            .by_token
            .values()
            .filter(|s| s.participant_id == participant_id)
            .count()
    }

    pub fn next_picture(&self, session_token: &str) -> Result<NextPicture> {
        let session = self.session(session_token)?;
        let cell = self.cell(&session.experiment_id)?;
        let order = picture_order(&lock(&cell).snapshot.experiment, &session.participant_id)?;
        Ok(match order.get(session.cursor) {
            Some(id) => NextPicture::Picture {
                picture_id: id.clone(),
                position: session.cursor,
                total: order.len(),
            },
            None => NextPicture::Done { done: true },
        })
    }

    /// Records one tag. The event is durable before this returns.
    pub fn submit_tag(&self, session_token: &str, tag: TagSubmission) -> Result<TagEvent> {
        let session = self.session(session_token)?;
        let cell = self.cell(&session.experiment_id)?;
        let mut c = lock(&cell);
        let now = self.now();
        let exp = &c.snapshot.experiment;
        if !exp.is_active_at(now) {
            return Err(Error::ExperimentNotActive);
        }
        if !exp.participant_ids.contains(&session.participant_id) {
            return Err(Error::NotAParticipant(session.participant_id));
        }
        let classification = c.snapshot.tag_map.classify(tag.placement, None)?;
        check_location(tag.location)?;

        let picture_source = match exp.mode {
            ExperimentMode::Curated => {
                if !exp.picture_ids.contains(&tag.picture_id) {
                    return Err(Error::UnknownPicture(tag.picture_id));
                }
                PictureSource::Curated
            }
            ExperimentMode::Field => {
                let own = c.snapshot.pictures.get(&tag.picture_id).is_some_and(|p| {
                    p.source == PictureSource::Participant
                        && p.uploaded_by.as_deref() == Some(session.participant_id.as_str())
                });
                if !own {
                    return Err(Error::UnknownPicture(tag.picture_id));
                }
                if tag.location.is_none() {
                    return Err(Error::MissingLocation);
                }
                PictureSource::Participant
            }
        };
        let position = match exp.mode {
            ExperimentMode::Curated => picture_order(exp, &session.participant_id)?
                .iter()
                .position(|p| *p == tag.picture_id),
            ExperimentMode::Field => None,
        };

        let event = TagEvent {
            event_id: auth::new_id("ev"),
            experiment_id: session.experiment_id.clone(),
            participant_id: session.participant_id.clone(),
            picture_id: tag.picture_id,
            placement: tag.placement,
            classification,
            tagged_at: now,
            client_time: tag.client_time,
            location: tag.location,
            picture_source,
        };
        self.store.append_event(&event.experiment_id, &event)?;
        c.snapshot.events.push(event.clone());
        drop(c);

        if let Some(pos) = position {
            if let Some(s) = lock(&self.sessions).by_token.get_mut(session_token) {
                s.cursor = s.cursor.max(pos + 1);
            }
        }
        Ok(event)
    }

    /// Stores a picture a participant took in a field experiment.
    pub fn submit_field_picture(
        &self,
        session_token: &str,
        bytes: &[u8],
        location: Option<GeoPoint>,
        client_time: Option<String>,
    ) -> Result<Picture> {
        let session = self.session(session_token)?;
        let cell = self.cell(&session.experiment_id)?;
        let active = |c: &ExperimentCell| -> Result<()> {
            let exp = &c.snapshot.experiment;
            if exp.mode != ExperimentMode::Field {
                return Err(Error::WrongMode(exp.mode));
            }
            if !exp.is_active_at(self.now()) {
                return Err(Error::ExperimentNotActive);
            }
            Ok(())
        };
        active(&lock(&cell))?;
        let location = location.ok_or(Error::MissingLocation)?;
        check_location(Some(location))?;
        // decoding happens outside the experiment lock
        let media_type = self.check_image(bytes)?;

        let mut c = lock(&cell);
        active(&c)?;
        self.store_picture(
            &mut c,
            bytes,
            media_type,
            PictureSource::Participant,
            Some(session.participant_id),
            Some(location),
            client_time,
        )
    }

    /// A picture record and its image bytes.
    pub fn picture(&self, picture_id: &str) -> Result<(Picture, Vec<u8>)> {
        let experiment_id = read(&self.picture_index)
            .get(picture_id)
            .cloned()
            .ok_or_else(|| Error::UnknownPicture(picture_id.to_string()))?;
        let cell = self.cell(&experiment_id)?;
        let picture = lock(&cell)
            .snapshot
            .pictures
            .get(picture_id)
            .cloned()
            .ok_or_else(|| Error::UnknownPicture(picture_id.to_string()))?;
        let bytes = self.store.get_blob(&picture.blob_id)?;
        Ok((picture, bytes))
    }

    // ----- read side ---------------------------------------------------

    /// A consistent copy of one experiment's state.
    pub fn snapshot(&self, experiment_id: &str) -> Result<ExperimentSnapshot> {
        let cell = self.cell(experiment_id)?;
        let snapshot = lock(&cell).snapshot.clone();
        Ok(snapshot)
    }

    pub fn export_csv(&self, experiment_id: &str) -> Result<String> {
        Ok(export::export_csv(&self.snapshot(experiment_id)?))
    }

    pub fn grid(&self, experiment_id: &str, cell_size_deg: f64) -> Result<GridDoc> {
        aggregation::experiment_grid(&self.snapshot(experiment_id)?, cell_size_deg)
    }

    pub fn per_user_view(
        &self,
        experiment_id: &str,
        participant_id: &str,
    ) -> Result<Vec<UserViewEntry>> {
        aggregation::per_user_view(&self.snapshot(experiment_id)?, participant_id)
    }

    pub fn per_picture_view(&self, experiment_id: &str, picture_id: &str) -> Result<PictureView> {
        aggregation::per_picture_view(&self.snapshot(experiment_id)?, picture_id)
    }
}
