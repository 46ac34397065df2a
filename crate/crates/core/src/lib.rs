//! Core of the emomap crowdsensing platform.
//!
//! Participants tag pictures of urban places by placing them on an emotion
//! wheel; researchers configure experiments and aggregate the resulting
//! placements per user, per picture and on a geographic grid.
//!
//! The geometry ([`wheel`]) and statistics ([`stats`]) kernels are generic
//! over the [`Scalar`] type. The rest of the crate works in `f64` through the
//! aliases defined here.

pub mod aggregation;
pub mod auth;
pub mod clock;
pub mod error;
pub mod export;
pub mod model;
pub mod ordering;
pub mod platform;
pub mod scalar;
pub mod snapshot;
pub mod stats;
pub mod storage;
pub mod wheel;

pub use error::{Error, ErrorClass, Result};
pub use platform::{Platform, PlatformConfig};
pub use scalar::Scalar;
pub use snapshot::{load_snapshot, ExperimentSnapshot};
pub use wheel::{GeometryError, PLUTCHIK_ID};

pub type Placement = wheel::Placement<f64>;
pub type Classification = wheel::Classification<f64>;
pub type TagMap = wheel::TagMap<f64>;
pub type TagMapDoc = wheel::TagMapDoc<f64>;
pub type CircularSummary = stats::CircularSummary<f64>;

pub type Placement32 = wheel::Placement<f32>;
pub type Classification32 = wheel::Classification<f32>;
pub type TagMap32 = wheel::TagMap<f32>;
pub type CircularSummary32 = stats::CircularSummary<f32>;
