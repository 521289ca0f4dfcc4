//! Floating-point abstraction shared by retrieval scoring and metrics.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar usable for vector components and metric values.
///
/// Implemented for `f32` (vector storage, matching common encoder output) and
/// `f64` (metrics and statistics).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts from `f64`, panicking only for types that cannot represent any real.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("scalar conversion from f64")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar conversion to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

const LANES: usize = 8;

/// Inner product with eight independent accumulators.
///
/// The lane layout is fixed so results are bit-reproducible for a given input.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        for lane in 0..LANES {
            acc[lane] = acc[lane] + a[base + lane] * b[base + lane];
        }
    }
    let mut tail = S::zero();
    for i in chunks * LANES..a.len() {
        tail = tail + a[i] * b[i];
    }
    let pairs = [
        acc[0] + acc[4],
        acc[1] + acc[5],
        acc[2] + acc[6],
        acc[3] + acc[7],
    ];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}
