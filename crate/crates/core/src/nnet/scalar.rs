use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Floating-point element type of a network. Production models use `f32`;
/// gradient checks run on `f64` models.
pub trait Real: Float + Debug + Default + Sum + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;

    /// `c = alpha * op(a) * op(b) + beta * c`, all row-major. `op(a)` is
    /// `m`×`k`; when `trans_a` is set `a` is stored `k`×`m`. Likewise for `b`
    /// (`k`×`n`). With `beta == 0` the previous contents of `c` are ignored.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        n: usize,
        k: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );
}

#[inline]
fn strides(trans: bool, cols: usize) -> (isize, isize) {
    // row-major (rows x cols): row stride = cols, col stride = 1
    if trans {
        (1, cols as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $kernel:path) => {
        impl Real for $t {
            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                trans_a: bool,
                trans_b: bool,
                m: usize,
                n: usize,
                k: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k, "gemm: a too short");
                assert!(b.len() >= k * n, "gemm: b too short");
                assert!(c.len() >= m * n, "gemm: c too short");
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = strides(trans_a, if trans_a { m } else { k });
                let (rsb, csb) = strides(trans_b, if trans_b { k } else { n });
                // SAFETY: the asserts above bound every index the kernel touches
                // (max offset (m-1)*rs + (k-1)*cs < m*k for a, etc.).
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);
