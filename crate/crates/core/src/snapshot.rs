//! Consistent read views of one experiment, rebuilt from the store.

use std::collections::{BTreeMap, HashMap};

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{Experiment, Picture, TagEvent};
use crate::storage::{EntityKind, StorageError, Store};
use crate::wheel::PLUTCHIK_ID;
use crate::TagMap;

/// Everything known about one experiment at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSnapshot {
    pub experiment: Experiment,
    pub tag_map: TagMap,
    pub pictures: BTreeMap<String, Picture>,
    /// The full event log, superseded events included, in append order.
    pub events: Vec<TagEvent>,
}

impl ExperimentSnapshot {
    /// The latest event per (participant, picture), in log order.
    pub fn effective_events(&self) -> Vec<&TagEvent> {
        let mut latest: HashMap<(&str, &str), usize> = HashMap::new();
        for (i, e) in self.events.iter().enumerate() {
            latest.insert(e.supersession_key(), i);
        }
        let mut idx: Vec<usize> = latest.into_values().collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| &self.events[i]).collect()
    }
}

pub(crate) fn decode<T: DeserializeOwned>(kind: EntityKind, doc: Value) -> Result<T> {
    serde_json::from_value(doc).map_err(|e| {
        Error::Storage(StorageError::CorruptRecord {
            path: kind.dir_name().to_string(),
            line: 0,
            message: e.to_string(),
        })
    })
}

/// Loads a tag map document, falling back to the built-in wheel.
pub fn load_tag_map(store: &dyn Store, id: &str) -> Result<TagMap> {
    match store.get_document(EntityKind::TagMap, id)? {
        Some(doc) => decode(EntityKind::TagMap, doc),
        None if id == PLUTCHIK_ID => Ok(TagMap::plutchik()),
        None => Err(Error::UnknownTagMap(id.to_string())),
    }
}

/// Replays entity documents and the event log of one experiment.
pub fn load_snapshot(store: &dyn Store, experiment_id: &str) -> Result<ExperimentSnapshot> {
    let doc = store
        .get_document(EntityKind::Experiment, experiment_id)
        .map_err(|e| match e {
            StorageError::InvalidId(_) => Error::UnknownExperiment(experiment_id.to_string()),
            e => e.into(),
        })?
        .ok_or_else(|| Error::UnknownExperiment(experiment_id.to_string()))?;
    let experiment: Experiment = decode(EntityKind::Experiment, doc)?;
    let tag_map = load_tag_map(store, &experiment.tag_map_id)?;
    let mut pictures = BTreeMap::new();
    for doc in store.documents(EntityKind::Picture)? {
        let picture: Picture = decode(EntityKind::Picture, doc)?;
        if picture.experiment_id == experiment.id {
            pictures.insert(picture.id.clone(), picture);
        }
    }
    let events = store.events(experiment_id)?;
    Ok(ExperimentSnapshot {
        experiment,
        tag_map,
        pictures,
        events,
    })
}
