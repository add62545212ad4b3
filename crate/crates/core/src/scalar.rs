//! Scalar abstraction over the floating-point element type.
//!
//! All model math is generic over [`Scalar`] so the same code runs in `f32`
//! (fast experiment sweeps) and `f64` (finite-difference gradient checks).
//! Concrete aliases live at the crate root.

use rand::Rng;

/// Floating-point scalar usable by every numeric kernel in this crate.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self {
        num_traits::cast(x).expect("f64 -> scalar")
    }

    fn as_f64(self) -> f64 {
        num_traits::cast(self).expect("scalar -> f64")
    }

    fn from_usize(x: usize) -> Self {
        Self::from_f64(x as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// One standard-normal draw via Box-Muller. Consumes exactly two uniforms,
/// so a given rng stream yields the same sequence for every scalar type.
pub fn sample_gaussian<S: Scalar, R: Rng>(rng: &mut R) -> S {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    S::from_f64((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
}
