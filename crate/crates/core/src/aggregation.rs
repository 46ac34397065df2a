//! Researcher-facing aggregates: geographic grid cells and per-user /
//! per-picture result views.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TagEvent;
use crate::snapshot::ExperimentSnapshot;
use crate::stats::summarize;
use crate::{CircularSummary, Classification, Placement, TagMap};

/// Largest accepted grid cell, in degrees.
pub const MAX_CELL_SIZE_DEG: f64 = 10.0;

/// One latitude/longitude bucket of the emotion map.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionMapCell {
    pub cell_lat_index: i64,
    pub cell_lon_index: i64,
    pub cell_size_deg: f64,
    pub summary: CircularSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAggregate {
    pub cell_size_deg: f64,
    pub located: usize,
    /// Events without a location.
    pub skipped: usize,
    /// Non-empty cells ordered by (lat index, lon index).
    pub cells: Vec<EmotionMapCell>,
}

/// Index of the grid row or column containing `deg`.
pub fn cell_index(deg: f64, cell_size_deg: f64) -> i64 {
    (deg / cell_size_deg).floor() as i64
}

/// Buckets located events into `cell_size_deg` cells and summarizes each.
pub fn grid_aggregate<'a>(
    events: impl IntoIterator<Item = &'a TagEvent>,
    cell_size_deg: f64,
    map: &TagMap,
) -> Result<GridAggregate> {
    if !(cell_size_deg > 0.0 && cell_size_deg <= MAX_CELL_SIZE_DEG) {
        return Err(Error::InvalidCellSize);
    }
    let mut buckets: BTreeMap<(i64, i64), Vec<&Classification>> = BTreeMap::new();
    let (mut located, mut skipped) = (0, 0);
    for e in events {
        match e.location {
            Some(loc) => {
                located += 1;
                buckets
                    .entry((
                        cell_index(loc.lat, cell_size_deg),
                        cell_index(loc.lon, cell_size_deg),
                    ))
                    .or_default()
                    .push(&e.classification);
            }
            None => skipped += 1,
        }
    }
    let cells = buckets
        .into_iter()
        .map(|((lat, lon), cs)| {
            Ok(EmotionMapCell {
                cell_lat_index: lat,
                cell_lon_index: lon,
                cell_size_deg,
                summary: summarize(cs, map)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridAggregate {
        cell_size_deg,
        located,
        skipped,
        cells,
    })
}

/// Wire form of a grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDoc {
    pub cell_lat_index: i64,
    pub cell_lon_index: i64,
    pub cell_size_deg: f64,
    pub n: usize,
    pub mean_angle_deg: Option<f64>,
    pub resultant_length: f64,
    pub dominant_sector: Option<usize>,
    pub sector_histogram: Vec<usize>,
}

/// Wire form of a whole grid aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDoc {
    pub experiment_id: String,
    pub cell_size_deg: f64,
    pub located: usize,
    pub skipped: usize,
    pub cells: Vec<CellDoc>,
}

impl GridDoc {
    pub fn new(experiment_id: &str, grid: &GridAggregate) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            cell_size_deg: grid.cell_size_deg,
            located: grid.located,
            skipped: grid.skipped,
            cells: grid
                .cells
                .iter()
                .map(|c| CellDoc {
                    cell_lat_index: c.cell_lat_index,
                    cell_lon_index: c.cell_lon_index,
                    cell_size_deg: c.cell_size_deg,
                    n: c.summary.n,
                    mean_angle_deg: c.summary.mean_angle_deg,
                    resultant_length: c.summary.resultant_length,
                    dominant_sector: c.summary.dominant_sector,
                    sector_histogram: c.summary.sector_histogram.clone(),
                })
                .collect(),
        }
    }

    /// Canonical serialization shared by the API and the CLI.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("grid documents serialize");
        s.push('\n');
        s
    }
}

/// Grid document over an experiment's effective events.
pub fn experiment_grid(snapshot: &ExperimentSnapshot, cell_size_deg: f64) -> Result<GridDoc> {
    let grid = grid_aggregate(
        snapshot.effective_events(),
        cell_size_deg,
        &snapshot.tag_map,
    )?;
    Ok(GridDoc::new(&snapshot.experiment.id, &grid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserViewEntry {
    pub picture_id: String,
    pub placement: Placement,
    pub classification: Classification,
    pub tagged_at: chrono::DateTime<chrono::Utc>,
}

/// A participant's effective tags, oldest first.
pub fn per_user_view(
    snapshot: &ExperimentSnapshot,
    participant_id: &str,
) -> Result<Vec<UserViewEntry>> {
    if !snapshot.experiment.participant_ids.contains(participant_id) {
        return Err(Error::UnknownParticipant(participant_id.to_string()));
    }
    let mut out: Vec<UserViewEntry> = snapshot
        .effective_events()
        .into_iter()
        .filter(|e| e.participant_id == participant_id)
        .map(|e| UserViewEntry {
            picture_id: e.picture_id.clone(),
            placement: e.placement,
            classification: e.classification.clone(),
            tagged_at: e.tagged_at,
        })
        .collect();
    out.sort_by_key(|e| e.tagged_at);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicturePlacement {
    pub participant_id: String,
    pub placement: Placement,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PictureView {
    pub picture_id: String,
    pub summary: CircularSummary,
    pub placements: Vec<PicturePlacement>,
}

/// All effective tags of one picture with their circular summary.
pub fn per_picture_view(snapshot: &ExperimentSnapshot, picture_id: &str) -> Result<PictureView> {
    if !snapshot.pictures.contains_key(picture_id) {
        return Err(Error::UnknownPicture(picture_id.to_string()));
    }
    let events: Vec<&TagEvent> = snapshot
        .effective_events()
        .into_iter()
        .filter(|e| e.picture_id == picture_id)
        .collect();
    let summary = if events.is_empty() {
        CircularSummary::empty(snapshot.tag_map.sector_count())
    } else {
        summarize(events.iter().map(|e| &e.classification), &snapshot.tag_map)?
    };
    Ok(PictureView {
        picture_id: picture_id.to_string(),
        summary,
        placements: events
            .into_iter()
            .map(|e| PicturePlacement {
                participant_id: e.participant_id.clone(),
                placement: e.placement,
                classification: e.classification.clone(),
            })
            .collect(),
    })
}
