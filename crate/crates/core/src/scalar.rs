//! Scalar abstraction shared by every numeric kernel.
//!
//! Component models are generic over `T: Scalar` so the same code runs in
//! `f64` (default, used by the protocol runner) and `f32` (cheaper sweeps).

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + std::fmt::LowerExp
    + ToPrimitive
    + NumAssign
    + FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or physical constant.
    #[inline]
    fn of(x: f64) -> Self {
        // from_f64 never fails for f32/f64; out-of-range values become inf.
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    /// Conversion from a sample or pulse count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
