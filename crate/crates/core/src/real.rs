use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating point scalar used by the wave solver, the normalizations and the
/// 1D transport kernels. Implemented for `f32` and `f64`.
pub trait Real:
    'static
    + Send
    + Sync
    + Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Sum
    + Debug
    + Display
    + LowerExp
    + rustfft::FftNum
{
    /// Converts an `f64` constant. Panics only if the target cannot represent
    /// finite `f64` values, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
