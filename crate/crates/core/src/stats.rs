//! Circular statistics over classified placements.
//!
//! Each placement contributes a unit vector at its wheel angle; the mean of
//! those vectors gives the mean direction and the resultant length `ρ`.
//! Placement radius (intensity) does not enter the direction and is reported
//! separately as `mean_radius`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{normalize_degrees, Scalar};
use crate::wheel::{Classification, TagMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("cannot summarize an empty set of events")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularSummary<T> {
    pub n: usize,
    /// Clockwise-from-top mean direction; `None` when `ρ` is degenerate.
    pub mean_angle_deg: Option<T>,
    pub resultant_length: T,
    pub dominant_sector: Option<usize>,
    pub sector_histogram: Vec<usize>,
    pub mean_radius: T,
}

impl<T: Scalar> CircularSummary<T> {
    /// The summary of no events: zero counts and no direction.
    pub fn empty(sector_count: usize) -> Self {
        Self {
            n: 0,
            mean_angle_deg: None,
            resultant_length: T::zero(),
            dominant_sector: None,
            sector_histogram: vec![0; sector_count],
            mean_radius: T::zero(),
        }
    }
}

/// Summarizes classifications that all came from `map`.
pub fn summarize<'a, T, I>(
    classifications: I,
    map: &TagMap<T>,
) -> Result<CircularSummary<T>, StatsError>
where
    T: Scalar,
    I: IntoIterator<Item = &'a Classification<T>>,
{
    let mut n = 0usize;
    let (mut sum_x, mut sum_y, mut sum_r) = (T::zero(), T::zero(), T::zero());
    let mut histogram = vec![0usize; map.sector_count()];
    for c in classifications {
        let theta = c.angle_deg.to_radians();
        sum_x = sum_x + theta.sin();
        sum_y = sum_y + theta.cos();
        sum_r = sum_r + c.radius;
        histogram[c.sector_index] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(StatsError::EmptyInput);
    }

    let count = T::from_usize(n).unwrap();
    let (mx, my) = (sum_x / count, sum_y / count);
    // rounding can push a unanimous set a hair above one
    let rho = mx.hypot(my).min(T::one());
    let mean_angle_deg = (rho >= T::degenerate_threshold())
        .then(|| normalize_degrees(mx.atan2(my).to_degrees()));

    Ok(CircularSummary {
        n,
        mean_angle_deg,
        resultant_length: rho,
        dominant_sector: mean_angle_deg.map(|a| map.sector_of_angle(a)),
        sector_histogram: histogram,
        mean_radius: sum_r / count,
    })
}
