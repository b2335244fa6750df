//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;

/// Floating point type the algorithms are generic over.
///
/// Everything linear-algebraic goes through [`RealField`]; the extra methods
/// cover the handful of conversions and constants the algorithms need.
pub trait Real: RealField + Copy + Default + Send + Sync + 'static {
    const ZERO: Self;
    const ONE: Self;
    const TWO: Self;
    /// Machine epsilon.
    const EPSILON: Self;

    fn cast(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn of_usize(n: usize) -> Self {
        Self::cast(n as f64)
    }

    /// Whether the value is neither NaN nor infinite.
    fn finite(self) -> bool {
        self.to_f64().is_finite()
    }
}

macro_rules! impl_real {
    ($f:ty) => {
        impl Real for $f {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const TWO: Self = 2.0;
            const EPSILON: Self = <$f>::EPSILON;

            #[inline]
            fn cast(v: f64) -> Self {
                v as $f
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn finite(self) -> bool {
                self.is_finite()
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Relative size below which a local approximation error is treated as an
/// exact fit. Roundoff in a `D x D` scatter eigen-decomposition leaves
/// residuals of order `sqrt(eps)` relative to the neighborhood radius.
pub fn flat_tolerance<T: Real>() -> T {
    T::cast(64.0) * T::EPSILON.sqrt()
}

/// Orthonormality tolerance used when validating flat bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
