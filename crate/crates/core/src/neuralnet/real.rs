//! Floating point abstraction and the dense kernels the recurrent layers are
//! built from.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Element type of tensors: `f32` for training and inference speed, `f64`
/// for gradient checks.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    const DTYPE: DType;

    /// `c = a * b + beta * c` for strided matrices, `a: m x k`, `b: k x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        beta: Self,
        c: &mut [Self],
        rsc: usize,
        csc: usize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: usize, cs: usize, what: &str) {
    if rows > 0 && cols > 0 {
        let last = (rows - 1) * rs + (cols - 1) * cs;
        assert!(last < len, "{what}: strided extent {last} exceeds buffer {len}");
    }
}

macro_rules! impl_real {
    ($t:ty, $dtype:expr, $gemm:path) => {
        impl Real for $t {
            const DTYPE: DType = $dtype;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: usize,
                csa: usize,
                b: &[Self],
                rsb: usize,
                csb: usize,
                beta: Self,
                c: &mut [Self],
                rsc: usize,
                csc: usize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                check_extent(a.len(), m, k, rsa, csa, "gemm a");
                check_extent(b.len(), k, n, rsb, csb, "gemm b");
                check_extent(c.len(), m, n, rsc, csc, "gemm c");
                // SAFETY: extents checked above; c does not alias a or b
                // because it is borrowed mutably.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    );
                }
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element width"))
            }
        }
    };
}

impl_real!(f32, DType::F32, matrixmultiply::sgemm);
impl_real!(f64, DType::F64, matrixmultiply::dgemm);

/// Dot product with independent partial sums so the loop vectorizes.
#[inline(always)]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Whether the wide-vector copies of the matrix-vector kernels can run.
/// Both copies perform the same operations in the same order, so results do
/// not depend on the answer.
#[inline]
fn wide_simd() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

#[inline(always)]
fn vec_mat_acc_body<T: Real>(x: &[T], m: &[T], rs: usize, off: usize, y: &mut [T]) {
    let n = y.len();
    for (k, &xk) in x.iter().enumerate() {
        if xk == T::zero() {
            continue;
        }
        let row = &m[k * rs + off..k * rs + off + n];
        for (yi, &ri) in y.iter_mut().zip(row) {
            *yi += xk * ri;
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn vec_mat_acc_wide<T: Real>(x: &[T], m: &[T], rs: usize, off: usize, y: &mut [T]) {
    vec_mat_acc_body(x, m, rs, off, y)
}

/// `y += x · M[:, off..off + y.len()]` for row-major `M` with row stride `rs`.
#[inline]
pub fn vec_mat_acc<T: Real>(x: &[T], m: &[T], rs: usize, off: usize, y: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if wide_simd() {
        // SAFETY: the CPU supports the enabled feature.
        return unsafe { vec_mat_acc_wide(x, m, rs, off, y) };
    }
    vec_mat_acc_body(x, m, rs, off, y)
}

#[inline(always)]
fn mat_vec_t_acc_body<T: Real>(m: &[T], rs: usize, off: usize, v: &[T], y: &mut [T]) {
    let n = v.len();
    for (k, yk) in y.iter_mut().enumerate() {
        *yk += dot(&m[k * rs + off..k * rs + off + n], v);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn mat_vec_t_acc_wide<T: Real>(m: &[T], rs: usize, off: usize, v: &[T], y: &mut [T]) {
    mat_vec_t_acc_body(m, rs, off, v, y)
}

/// `y[k] += M[k, off..off + v.len()] · v` for every row `k < y.len()`.
#[inline]
pub fn mat_vec_t_acc<T: Real>(m: &[T], rs: usize, off: usize, v: &[T], y: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if wide_simd() {
        // SAFETY: the CPU supports the enabled feature.
        return unsafe { mat_vec_t_acc_wide(m, rs, off, v, y) };
    }
    mat_vec_t_acc_body(m, rs, off, v, y)
}

/// `M[:, off..] += x ⊗ v`, the rank-one update used for weight gradients.
#[inline]
pub fn outer_acc<T: Real>(x: &[T], v: &[T], m: &mut [T], rs: usize, off: usize) {
    let n = v.len();
    for (k, &xk) in x.iter().enumerate() {
        if xk == T::zero() {
            continue;
        }
        axpy(xk, v, &mut m[k * rs + off..k * rs + off + n]);
    }
}

/// `C[m x n] (+)= A[m x k] · B` where `A` is row-major with row stride `rsa`
/// and `B` is a column block `[off..off + n]` of a row-major matrix with row
/// stride `rsb`. Small `m` falls back to row-by-row accumulation, which
/// avoids packing `B`.
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    rsa: usize,
    b: &[T],
    rsb: usize,
    off: usize,
    c: &mut [T],
    rsc: usize,
    accumulate: bool,
) {
    if m < 4 {
        for i in 0..m {
            let row = &mut c[i * rsc..i * rsc + n];
            if !accumulate {
                row.iter_mut().for_each(|v| *v = T::zero());
            }
            vec_mat_acc(&a[i * rsa..i * rsa + k], b, rsb, off, row);
        }
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    T::gemm(m, k, n, a, rsa, 1, &b[off..], rsb, 1, beta, c, rsc, 1);
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable log-softmax over two logits.
pub fn log_softmax2<T: Real>(a: T, b: T) -> [T; 2] {
    let m = a.max(b);
    let lse = m + ((a - m).exp() + (b - m).exp()).ln();
    [a - lse, b - lse]
}

/// Log-softmax over any number of logits.
pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + logits.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
    logits.iter().map(|&x| x - lse).collect()
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    log_softmax(logits).into_iter().map(T::exp).collect()
}

/// Negative log-likelihood of `target` under softmax(`logits`).
pub fn cross_entropy<T: Real>(logits: &[T], target: usize) -> T {
    -log_softmax(logits)[target]
}

/// `ln(exp(a) + exp(b))` for f64 scores.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
