//! Scalar abstraction shared by every numeric kernel in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Real field the samplers run in: `f32` or `f64`.
///
/// Reductions (dot products, sparse row sums, Gram entries) are carried out
/// in `f64` through [`Real::widen`] / [`Real::narrow`] regardless of `Self`,
/// so an `f32` build loses precision only when values are stored.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Copy
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Short name used in reports.
    const NAME: &'static str;

    fn widen(self) -> f64;
    fn narrow(x: f64) -> Self;

    /// One standard normal draw.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from Gamma in shape-rate form. Callers validate parameters.
    fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, rate: Self) -> Self;

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::narrow(n as f64)
    }
}

macro_rules! impl_real {
    ($t:ty, $name:expr) => {
        impl Real for $t {
            const NAME: &'static str = $name;

            #[inline(always)]
            fn widen(self) -> f64 {
                self as f64
            }

            #[inline(always)]
            fn narrow(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                <StandardNormal as Distribution<$t>>::sample(&StandardNormal, rng)
            }

            #[inline]
            fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, rate: Self) -> Self {
                Gamma::<$t>::new(shape, 1.0 / rate)
                    .expect("gamma parameters validated by caller")
                    .sample(rng)
            }
        }
    };
}

impl_real!(f32, "f32");
impl_real!(f64, "f64");

/// `Σ a_i b_i` accumulated in `f64`.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    T::narrow(dot_wide(a, b))
}

#[inline]
pub(crate) fn dot_wide<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.widen() * y.widen()).sum()
}

#[inline]
pub fn norm2<T: Real>(a: &[T]) -> T {
    T::narrow(dot_wide(a, a).sqrt())
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn all_finite<T: Real>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}
