//! Scalar abstraction for the numeric core (embeddings, similarities, metrics).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: f32 or f64.
///
/// Vector math and metric computations are generic over this trait; the
/// pipeline itself runs on the crate-level [`crate::Score`] alias.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough conversion for accumulators and counters.
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(|| Self::from_f64(n as f64).unwrap())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
