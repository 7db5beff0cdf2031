use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar usable throughout the tensor engine.
///
/// Implemented for `f32` (production) and `f64` (gradient verification).
/// The only member beyond the `num_traits` bundle is a matrix-multiply
/// hook so convolution and dense layers can dispatch to an optimized
/// GEMM for either precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Send + Sync + Debug + Display + 'static
{
    /// `c = alpha * a @ b + beta * c` over row-major buffers with explicit
    /// strides, `a` being `m x k`, `b` being `k x n`, `c` being `m x n`.
    ///
    /// Strides are in elements. Caller must guarantee every indexed element
    /// of `a`, `b` and `c` is in bounds; this wraps a raw-pointer GEMM.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Lossless-enough conversion from `f64` for constants and config values.
    fn from_config(x: f64) -> Self {
        Self::from_f64(x).expect("finite config value")
    }
}

impl Scalar for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}
