//! Floating-point scalar abstraction shared by the geometry and statistics code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

/// A floating-point scalar usable for wheel geometry and circular statistics.
///
/// Implemented for `f32` and `f64`. The domain layer (experiments, storage,
/// export) always uses `f64`; the generic code exists so that the numeric
/// kernels can be exercised at reduced precision as well.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("f64 literal fits the scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }

    /// Resultant lengths below this are treated as "no direction".
    ///
    /// 1e-9 for `f64`; widened to a few ulps of one for types whose
    /// cancellation noise is larger than that.
    fn degenerate_threshold() -> Self {
        let floor = Self::lit(1e-9);
        let noise = Self::epsilon() * Self::lit(16.0);
        if noise > floor {
            noise
        } else {
            floor
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Normalizes an angle in degrees into `[0, 360)`.
pub fn normalize_degrees<T: Scalar>(deg: T) -> T {
    let full = T::lit(360.0);
    let mut a = deg % full;
    if a < T::zero() {
        a = a + full;
    }
    // -tiny + 360 can round up to exactly 360
    if a >= full {
        a = a - full;
    }
    a
}
