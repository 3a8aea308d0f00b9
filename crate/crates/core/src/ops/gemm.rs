//! Row-major matrix multiply kernels used by the im2col convolution path and
//! the linear layer.
//!
//! All three variants accumulate in the element type `T`; `f64` callers get
//! 64-bit accumulation.

use crate::tensor::Scalar;

const COL_BLOCK: usize = 256;
const DEPTH_BLOCK: usize = 128;

/// `C[m×n] (+)= A[m×k] · B[k×n]`.
pub fn gemm_nn<T: Scalar>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm_nn: A");
    axpy_kernel(m, n, k, a, k, 1, b, c, accumulate);
}

/// `C[m×n] (+)= A[k×m]ᵀ · B[k×n]`.
pub fn gemm_tn<T: Scalar>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm_tn: A");
    axpy_kernel(m, n, k, a, 1, m, b, c, accumulate);
}

/// `C[m×n] (+)= A[m×k] · B[n×k]ᵀ`.
pub fn gemm_nt<T: Scalar>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm_nt: A");
    assert_eq!(b.len(), n * k, "gemm_nt: B");
    assert_eq!(c.len(), m * n, "gemm_nt: C");
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (j, out) in c_row.iter_mut().enumerate() {
            let d = dot(a_row, &b[j * k..(j + 1) * k]);
            if accumulate {
                *out += d;
            } else {
                *out = d;
            }
        }
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
#[inline]
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [T::zero(); 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (xs, ys) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] += xs[l] * ys[l];
        }
    }
    let mut tail = T::zero();
    for (a, b) in xr.iter().zip(yr) {
        tail += *a * *b;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Shared kernel: rows of C are updated with scaled rows of B, where the scale
/// for `(i, kk)` is `a[i * a_row + kk * a_col]`. Four rows of C are advanced
/// together so each loaded row segment of B is reused four times.
#[allow(clippy::too_many_arguments)]
fn axpy_kernel<T: Scalar>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    a_row: usize,
    a_col: usize,
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(b.len(), k * n, "gemm: B");
    assert_eq!(c.len(), m * n, "gemm: C");
    if !accumulate {
        c.fill(T::zero());
    }
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let av = |i: usize, kk: usize| a[i * a_row + kk * a_col];

    for j0 in (0..n).step_by(COL_BLOCK) {
        let jn = COL_BLOCK.min(n - j0);
        for k0 in (0..k).step_by(DEPTH_BLOCK) {
            let kn = DEPTH_BLOCK.min(k - k0);
            let mut i = 0;
            while i + 4 <= m {
                let rows = &mut c[i * n..(i + 4) * n];
                let (r0, rest) = rows.split_at_mut(n);
                let (r1, rest) = rest.split_at_mut(n);
                let (r2, r3) = rest.split_at_mut(n);
                let (c0, c1, c2, c3) = (
                    &mut r0[j0..j0 + jn],
                    &mut r1[j0..j0 + jn],
                    &mut r2[j0..j0 + jn],
                    &mut r3[j0..j0 + jn],
                );
                for kk in k0..k0 + kn {
                    let b_row = &b[kk * n + j0..kk * n + j0 + jn];
                    let (a0, a1, a2, a3) = (av(i, kk), av(i + 1, kk), av(i + 2, kk), av(i + 3, kk));
                    for ((((x0, x1), x2), x3), &bv) in c0
                        .iter_mut()
                        .zip(c1.iter_mut())
                        .zip(c2.iter_mut())
                        .zip(c3.iter_mut())
                        .zip(b_row)
                    {
                        *x0 += a0 * bv;
                        *x1 += a1 * bv;
                        *x2 += a2 * bv;
                        *x3 += a3 * bv;
                    }
                }
                i += 4;
            }
            for i in i..m {
                let c_row = &mut c[i * n + j0..i * n + j0 + jn];
                for kk in k0..k0 + kn {
                    let s = av(i, kk);
                    let b_row = &b[kk * n + j0..kk * n + j0 + jn];
                    for (x, &bv) in c_row.iter_mut().zip(b_row) {
                        *x += s * bv;
                    }
                }
            }
        }
    }
}
