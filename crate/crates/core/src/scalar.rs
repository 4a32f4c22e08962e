//! Element type abstraction: the whole stack runs in f32 for training and
//! in f64 for gradient verification.

use std::fmt::{Debug, Display};

/// Floating-point element type for tensors.
///
/// Training uses `f32`; the verification paths re-run the same code in `f64`
/// to tighten finite-difference tolerances. Implementations must be
/// deterministic: no fused or reordered arithmetic beyond what the kernels
/// themselves spell out.
pub trait Scalar: num_traits::Float + Debug + Display + Default + Send + Sync + 'static {
    /// Bit width, used to pick mode-dependent tolerances.
    const BITS: u32;

    /// Exact error function (erf), used by the GELU activation.
    fn erf(self) -> Self;

    fn from_f64(x: f64) -> Self;

    fn to_f64_exact(self) -> f64;

    /// Append the little-endian bit pattern to `out` (for digests and files).
    fn append_le_bytes(self, out: &mut Vec<u8>);
}

impl Scalar for f32 {
    const BITS: u32 = 32;

    fn erf(self) -> Self {
        libm::erff(self)
    }

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64_exact(self) -> f64 {
        self as f64
    }

    fn append_le_bytes(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl Scalar for f64 {
    const BITS: u32 = 64;

    fn erf(self) -> Self {
        libm::erf(self)
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64_exact(self) -> f64 {
        self
    }

    fn append_le_bytes(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}
