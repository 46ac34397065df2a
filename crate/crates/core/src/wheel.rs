//! Tag maps and placement classification.
//!
//! A tag map partitions the unit disc into `N` equal angular sectors and `M`
//! radial bands. Angles are measured in degrees clockwise from the top of the
//! wheel (+y), with +x to the right. Sector `s` is centred on
//! `sector_offset_deg + s * 360 / N`; band 0 is the innermost ring.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{normalize_degrees, Scalar};

/// Placements closer to the hub than this have no meaningful direction.
pub const CENTER_DEAD_ZONE: f64 = 0.02;

/// Radii up to `1 + RIM_TOLERANCE` are clamped onto the rim.
pub const RIM_TOLERANCE: f64 = 1e-9;

/// Identifier of the built-in Plutchik wheel.
pub const PLUTCHIK_ID: &str = "plutchik";

/// Plutchik's eight basic emotions in clockwise order from the top.
pub const PLUTCHIK_EMOTIONS: [&str; 8] = [
    "joy",
    "trust",
    "fear",
    "surprise",
    "sadness",
    "disgust",
    "anger",
    "anticipation",
];

// (intense, basic, mild) per sector
const PLUTCHIK_LABELS_EN: [[&str; 3]; 8] = [
    ["ecstasy", "joy", "serenity"],
    ["admiration", "trust", "acceptance"],
    ["terror", "fear", "apprehension"],
    ["amazement", "surprise", "distraction"],
    ["grief", "sadness", "pensiveness"],
    ["loathing", "disgust", "boredom"],
    ["rage", "anger", "annoyance"],
    ["vigilance", "anticipation", "interest"],
];

const PLUTCHIK_LABELS_PL: [[&str; 3]; 8] = [
    ["ekstaza", "radość", "pogoda ducha"],
    ["podziw", "zaufanie", "akceptacja"],
    ["przerażenie", "strach", "obawa"],
    ["zdumienie", "zaskoczenie", "roztargnienie"],
    ["rozpacz", "smutek", "zamyślenie"],
    ["wstręt", "obrzydzenie", "nuda"],
    ["furia", "złość", "irytacja"],
    ["czujność", "oczekiwanie", "zainteresowanie"],
];

/// An exact position on the wheel, in unit-disc coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Placement<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    /// Builds a placement from a clockwise-from-top angle and a radius.
    pub fn from_polar(angle_deg: T, radius: T) -> Self {
        let theta = angle_deg.to_radians();
        Self {
            x: radius * theta.sin(),
            y: radius * theta.cos(),
        }
    }

    pub fn radius(&self) -> T {
        self.x.hypot(self.y)
    }

    /// Clockwise-from-top angle in `[0, 360)`.
    pub fn angle_deg(&self) -> T {
        normalize_degrees(self.x.atan2(self.y).to_degrees())
    }
}

/// The result of classifying a placement against a tag map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification<T> {
    pub sector_index: usize,
    pub band_index: usize,
    pub label: String,
    pub angle_deg: T,
    pub radius: T,
}

/// Why a placement could not be classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("placement is too close to the wheel center to have a direction")]
    CenterAmbiguous,
    #[error("placement lies outside the unit disc")]
    OutOfDisc,
    #[error("placement coordinates are not finite numbers")]
    NonFinite,
}

impl GeometryError {
    pub fn code(&self) -> &'static str {
        match self {
            GeometryError::CenterAmbiguous => "center_ambiguous",
            GeometryError::OutOfDisc => "out_of_disc",
            GeometryError::NonFinite => "non_finite_placement",
        }
    }
}

/// Machine-readable reason a tag map was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    EmptyId,
    TooFewSectors,
    OffsetOutOfRange,
    BandOutOfRange,
    BandsNotAscending,
    LabelMatrixShape,
    EmptyLabel,
    LocaleMatrixShape,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::EmptyId => "empty_id",
            ViolationCode::TooFewSectors => "too_few_sectors",
            ViolationCode::OffsetOutOfRange => "offset_out_of_range",
            ViolationCode::BandOutOfRange => "band_out_of_range",
            ViolationCode::BandsNotAscending => "bands_not_ascending",
            ViolationCode::LabelMatrixShape => "label_matrix_shape",
            ViolationCode::EmptyLabel => "empty_label",
            ViolationCode::LocaleMatrixShape => "locale_matrix_shape",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid tag map: {}", .0.iter().map(|v| v.code.as_str()).collect::<Vec<_>>().join(", "))]
pub struct InvalidTagMap(pub Vec<Violation>);

/// Serialized form of a [`TagMap`]; validated on conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagMapDoc<T> {
    pub id: String,
    pub sector_count: usize,
    pub sector_offset_deg: T,
    pub band_boundaries: Vec<T>,
    pub labels: Vec<Vec<String>>,
    #[serde(default)]
    pub locale_labels: BTreeMap<String, Vec<Vec<String>>>,
}

/// A labeled sector x band partition of the unit disc.
///
/// Always valid: construction goes through [`validate_tag_map`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TagMapDoc<T>", into = "TagMapDoc<T>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct TagMap<T> {
    doc: TagMapDoc<T>,
}

/// Checks every tag map invariant and reports all violations found.
pub fn validate_tag_map<T: Scalar>(doc: &TagMapDoc<T>) -> Result<(), Vec<Violation>> {
    use ViolationCode::*;

    let mut out = Vec::new();
    if doc.id.trim().is_empty() {
        out.push(Violation::new(EmptyId, "id must be non-empty"));
    }
    if doc.sector_count < 2 {
        out.push(Violation::new(
            TooFewSectors,
            format!("sector_count is {}, need at least 2", doc.sector_count),
        ));
    }
    let offset = doc.sector_offset_deg;
    if !(offset >= T::zero() && offset < T::lit(360.0)) {
        out.push(Violation::new(
            OffsetOutOfRange,
            format!("sector_offset_deg {offset} is outside [0, 360)"),
        ));
    }
    for (i, b) in doc.band_boundaries.iter().enumerate() {
        if !(*b > T::zero() && *b < T::one()) {
            out.push(Violation::new(
                BandOutOfRange,
                format!("band_boundaries[{i}] = {b} is outside (0, 1)"),
            ));
        }
    }
    if doc.band_boundaries.windows(2).any(|w| !(w[0] < w[1])) {
        out.push(Violation::new(
            BandsNotAscending,
            "band_boundaries must be strictly ascending",
        ));
    }

    let bands = doc.band_boundaries.len() + 1;
    let shape_ok = |m: &Vec<Vec<String>>| {
        m.len() == doc.sector_count && m.iter().all(|row| row.len() == bands)
    };
    if !shape_ok(&doc.labels) {
        out.push(Violation::new(
            LabelMatrixShape,
            format!(
                "labels must be {} x {} (sectors x bands)",
                doc.sector_count, bands
            ),
        ));
    }
    if doc.labels.iter().flatten().any(|l| l.is_empty()) {
        out.push(Violation::new(EmptyLabel, "labels must be non-empty"));
    }
    for (locale, m) in &doc.locale_labels {
        if !shape_ok(m) {
            out.push(Violation::new(
                LocaleMatrixShape,
                format!("labels for locale '{locale}' must be {} x {bands}", doc.sector_count),
            ));
        }
        if m.iter().flatten().any(|l| l.is_empty()) {
            out.push(Violation::new(
                EmptyLabel,
                format!("labels for locale '{locale}' must be non-empty"),
            ));
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

impl<T: Scalar> TryFrom<TagMapDoc<T>> for TagMap<T> {
    type Error = InvalidTagMap;

    fn try_from(doc: TagMapDoc<T>) -> Result<Self, Self::Error> {
        validate_tag_map(&doc).map_err(InvalidTagMap)?;
        Ok(Self { doc })
    }
}

impl<T> From<TagMap<T>> for TagMapDoc<T> {
    fn from(map: TagMap<T>) -> Self {
        map.doc
    }
}

impl<T: Scalar> TagMap<T> {
    pub fn new(doc: TagMapDoc<T>) -> Result<Self, InvalidTagMap> {
        Self::try_from(doc)
    }

    /// The canonical Plutchik wheel: 8 sectors, 3 equal bands, joy at the top.
    pub fn plutchik() -> Self {
        let matrix = |table: &[[&str; 3]; 8]| {
            table
                .iter()
                .map(|row| row.iter().map(|s| s.to_string()).collect())
                .collect::<Vec<Vec<String>>>()
        };
        let mut locale_labels = BTreeMap::new();
        locale_labels.insert("pl".to_string(), matrix(&PLUTCHIK_LABELS_PL));
        Self::new(TagMapDoc {
            id: PLUTCHIK_ID.to_string(),
            sector_count: 8,
            sector_offset_deg: T::zero(),
            band_boundaries: vec![T::lit(1.0 / 3.0), T::lit(2.0 / 3.0)],
            labels: matrix(&PLUTCHIK_LABELS_EN),
            locale_labels,
        })
        .expect("built-in wheel is valid")
    }

    pub fn id(&self) -> &str {
        &self.doc.id
    }

    pub fn sector_count(&self) -> usize {
        self.doc.sector_count
    }

    pub fn band_count(&self) -> usize {
        self.doc.band_boundaries.len() + 1
    }

    pub fn sector_offset_deg(&self) -> T {
        self.doc.sector_offset_deg
    }

    pub fn band_boundaries(&self) -> &[T] {
        &self.doc.band_boundaries
    }

    pub fn doc(&self) -> &TagMapDoc<T> {
        &self.doc
    }

    /// Angular width of one sector in degrees.
    pub fn sector_width(&self) -> T {
        T::lit(360.0) / T::from_usize(self.doc.sector_count).unwrap()
    }

    /// Locales with their own label matrix.
    pub fn locales(&self) -> impl Iterator<Item = &str> {
        self.doc.locale_labels.keys().map(String::as_str)
    }

    /// Label matrix for `locale`, falling back to the default labels.
    pub fn labels(&self, locale: Option<&str>) -> &[Vec<String>] {
        locale
            .and_then(|l| self.doc.locale_labels.get(l))
            .unwrap_or(&self.doc.labels)
    }

    /// Resolves a language tag (e.g. `pl-PL`) against the configured locales,
    /// trying the exact tag first and then its primary subtag.
    pub fn match_locale(&self, tag: &str) -> Option<&str> {
        let tag = tag.trim();
        if tag.is_empty() {
            return None;
        }
        let find = |wanted: &str| {
            self.doc
                .locale_labels
                .keys()
                .find(|k| k.eq_ignore_ascii_case(wanted))
                .map(String::as_str)
        };
        find(tag).or_else(|| {
            let primary = tag.split(['-', '_']).next().unwrap_or(tag);
            find(primary)
        })
    }

    /// Sector containing a clockwise-from-top angle. The counterclockwise
    /// edge of each sector belongs to it.
    pub fn sector_of_angle(&self, angle_deg: T) -> usize {
        let width = self.sector_width();
        let half = width / T::lit(2.0);
        let shifted = normalize_degrees(angle_deg - self.doc.sector_offset_deg + half);
        let idx = (shifted / width).floor().to_usize().unwrap_or(0);
        idx.min(self.doc.sector_count - 1)
    }

    /// Band containing a radius. Boundary radii belong to the inner band.
    pub fn band_of_radius(&self, radius: T) -> usize {
        self.doc
            .band_boundaries
            .iter()
            .position(|b| radius <= *b)
            .unwrap_or(self.doc.band_boundaries.len())
    }

    /// Sector diametrically opposite `sector`, for maps with an even sector count.
    pub fn opposite_sector(&self, sector: usize) -> Option<usize> {
        let n = self.doc.sector_count;
        (n % 2 == 0).then(|| (sector + n / 2) % n)
    }

    pub fn classify(
        &self,
        placement: Placement<T>,
        locale: Option<&str>,
    ) -> Result<Classification<T>, GeometryError> {
        if !placement.x.is_finite() || !placement.y.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        self.classify_polar(placement.angle_deg(), placement.radius(), locale)
    }

    /// Classifies a placement given directly in polar form.
    pub fn classify_polar(
        &self,
        angle_deg: T,
        radius: T,
        locale: Option<&str>,
    ) -> Result<Classification<T>, GeometryError> {
        if !angle_deg.is_finite() || !radius.is_finite() || radius < T::zero() {
            return Err(GeometryError::NonFinite);
        }
        if radius > T::one() + T::lit(RIM_TOLERANCE) {
            return Err(GeometryError::OutOfDisc);
        }
        if radius < T::lit(CENTER_DEAD_ZONE) {
            return Err(GeometryError::CenterAmbiguous);
        }
        let radius = radius.min(T::one());
        let angle_deg = normalize_degrees(angle_deg);
        let sector_index = self.sector_of_angle(angle_deg);
        let band_index = self.band_of_radius(radius);
        Ok(Classification {
            sector_index,
            band_index,
            label: self.labels(locale)[sector_index][band_index].clone(),
            angle_deg,
            radius,
        })
    }
}

/// Smallest angle between two classified placements, in `[0, 180]`.
pub fn angular_distance<T: Scalar>(a: &Classification<T>, b: &Classification<T>) -> T {
    angle_between(a.angle_deg, b.angle_deg)
}

pub(crate) fn angle_between<T: Scalar>(a: T, b: T) -> T {
    let d = (a - b).abs() % T::lit(360.0);
    d.min(T::lit(360.0) - d)
}
