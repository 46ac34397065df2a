//! CSV export of effective tag events.
//!
//! The format is byte-stable: fixed header, LF line endings, UTF-8,
//! coordinates and angles with six decimals (round half to even on the exact
//! binary value), timestamps as `YYYY-MM-DDTHH:MM:SS.sssZ`, and minimal
//! quoting. Parsing an export and writing it again reproduces it exactly.

use chrono::{DateTime, NaiveDateTime, Utc};
use thiserror::Error;

use crate::model::{PictureSource, TagEvent};
use crate::snapshot::ExperimentSnapshot;

pub const CSV_HEADER: [&str; 14] = [
    "experiment_id",
    "participant_id",
    "picture_id",
    "picture_source",
    "tagged_at",
    "x",
    "y",
    "angle_deg",
    "radius",
    "sector_index",
    "band_index",
    "label",
    "lat",
    "lon",
];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.3fZ";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("header does not match the export format")]
    BadHeader,
    #[error("row {row}: bad value in column '{column}': {value:?}")]
    BadField {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One exported row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportRow {
    pub experiment_id: String,
    pub participant_id: String,
    pub picture_id: String,
    pub picture_source: PictureSource,
    pub tagged_at: DateTime<Utc>,
    pub x: f64,
    pub y: f64,
    pub angle_deg: f64,
    pub radius: f64,
    pub sector_index: usize,
    pub band_index: usize,
    pub label: String,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

impl From<&TagEvent> for ExportRow {
    fn from(e: &TagEvent) -> Self {
        Self {
            experiment_id: e.experiment_id.clone(),
            participant_id: e.participant_id.clone(),
            picture_id: e.picture_id.clone(),
            picture_source: e.picture_source,
            tagged_at: e.tagged_at,
            x: e.placement.x,
            y: e.placement.y,
            angle_deg: e.classification.angle_deg,
            radius: e.classification.radius,
            sector_index: e.classification.sector_index,
            band_index: e.classification.band_index,
            label: e.classification.label.clone(),
            lat: e.location.map(|l| l.lat),
            lon: e.location.map(|l| l.lon),
        }
    }
}

/// Six decimals, ties to even. Negative zero prints as zero.
pub fn format_decimal6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(buf)
}

/// Serializes rows in the export format.
pub fn write_rows<'a>(rows: impl IntoIterator<Item = &'a ExportRow>) -> String {
    let mut buf = Vec::new();
    {
        let mut w = writer(&mut buf);
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in rows {
            let opt = |v: Option<f64>| v.map(format_decimal6).unwrap_or_default();
            w.write_record([
                r.experiment_id.as_str(),
                &r.participant_id,
                &r.picture_id,
                r.picture_source.as_str(),
                &format_timestamp(&r.tagged_at),
                &format_decimal6(r.x),
                &format_decimal6(r.y),
                &format_decimal6(r.angle_deg),
                &format_decimal6(r.radius),
                &r.sector_index.to_string(),
                &r.band_index.to_string(),
                &r.label,
                &opt(r.lat),
                &opt(r.lon),
            ])
            .expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    String::from_utf8(buf).expect("all fields are UTF-8")
}

/// Exports the effective (latest-wins) events of an experiment.
pub fn export_csv(snapshot: &ExperimentSnapshot) -> String {
    let rows: Vec<ExportRow> = snapshot
        .effective_events()
        .into_iter()
        .map(ExportRow::from)
        .collect();
    write_rows(&rows)
}

/// Parses a document produced by [`write_rows`].
pub fn parse_csv(text: &str) -> Result<Vec<ExportRow>, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    if reader.headers()?.iter().ne(CSV_HEADER) {
        return Err(CsvError::BadHeader);
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let bad = |idx: usize| CsvError::BadField {
            row,
            column: CSV_HEADER[idx],
            value: field(idx).to_string(),
        };
        let num = |idx: usize| field(idx).parse::<f64>().map_err(|_| bad(idx));
        let int = |idx: usize| field(idx).parse::<usize>().map_err(|_| bad(idx));
        let opt = |idx: usize| match field(idx) {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| bad(idx)),
        };
        let picture_source = match field(3) {
            "CURATED" => PictureSource::Curated,
            "PARTICIPANT" => PictureSource::Participant,
            _ => return Err(bad(3)),
        };
        let tagged_at = NaiveDateTime::parse_from_str(field(4), TIMESTAMP_FORMAT)
            .map_err(|_| bad(4))?
            .and_utc();
        rows.push(ExportRow {
            experiment_id: field(0).to_string(),
            participant_id: field(1).to_string(),
            picture_id: field(2).to_string(),
            picture_source,
            tagged_at,
            x: num(5)?,
            y: num(6)?,
            angle_deg: num(7)?,
            radius: num(8)?,
            sector_index: int(9)?,
            band_index: int(10)?,
            label: field(11).to_string(),
            lat: opt(12)?,
            lon: opt(13)?,
        });
    }
    Ok(rows)
}
