use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of the encoder. Training runs in `f32`;
/// gradient checks instantiate the same code at `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + AddAssign + SubAssign + MulAssign + Send + Sync + 'static
{
    const DTYPE: safetensors::Dtype;
    const NAME: &'static str;

    /// `C ← α·A·B + β·C` over strided views.
    ///
    /// # Safety
    /// All views must be in bounds and `C` must not alias `A` or `B`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
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

    fn to_le_bytes(values: &[Self]) -> Vec<u8>;
    fn from_le_bytes(bytes: &[u8]) -> Vec<Self>;

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

impl Real for f32 {
    const DTYPE: safetensors::Dtype = safetensors::Dtype::F32;
    const NAME: &'static str = "f32";

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn to_le_bytes(values: &[f32]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn from_le_bytes(bytes: &[u8]) -> Vec<f32> {
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }
}

impl Real for f64 {
    const DTYPE: safetensors::Dtype = safetensors::Dtype::F64;
    const NAME: &'static str = "f64";

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn to_le_bytes(values: &[f64]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn from_le_bytes(bytes: &[u8]) -> Vec<f64> {
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }
}

/// A strided 2-D view into a flat buffer: element `(r, c)` lives at
/// `offset + r * rs + c * cs`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct View {
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn new(offset: usize, rs: usize, cs: usize) -> Self {
        View { offset, rs, cs }
    }

    fn last(&self, rows: usize, cols: usize) -> usize {
        self.offset + (rows - 1) * self.rs + (cols - 1) * self.cs
    }
}

/// Bounds-checked `C ← α·A·B + β·C` with `A: m×k`, `B: k×n`, `C: m×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    alpha: F,
    a: &[F],
    av: View,
    b: &[F],
    bv: View,
    beta: F,
    c: &mut [F],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        // matrixmultiply handles k == 0 as C ← β·C.
        assert!(cv.last(m, n) < c.len());
    } else {
        assert!(av.last(m, k) < a.len(), "gemm: A view out of bounds");
        assert!(bv.last(k, n) < b.len(), "gemm: B view out of bounds");
        assert!(cv.last(m, n) < c.len(), "gemm: C view out of bounds");
    }
    // SAFETY: bounds checked above; `c` is a distinct mutable borrow.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.offset),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.offset),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.rs as isize,
            cv.cs as isize,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strided_gemm_matches_naive() {
        // A (2x3) stored transposed, B (3x2) row-major, C (2x2) row-major.
        let a_t = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0]; // columns of A
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [1.0; 4];
        gemm(
            2,
            3,
            2,
            1.0,
            &a_t,
            View::new(0, 1, 2),
            &b,
            View::new(0, 2, 1),
            1.0,
            &mut c,
            View::new(0, 2, 1),
        );
        assert_eq!(c, [59.0, 65.0, 140.0, 155.0]);
    }
}
