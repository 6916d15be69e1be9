//! Dense row-major tensors over f32 (training) or f64 (gradient-check mode).

use std::fmt;

/// Scalar types the network stack can run on. f32 is the storage dtype for
/// training; f64 is used by the shadow mode that backs finite-difference
/// gradient checks.
pub trait Scalar:
    Copy
    + Clone
    + PartialOrd
    + fmt::Debug
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn max(self, o: Self) -> Self;
    fn min(self, o: Self) -> Self;
    fn is_finite(self) -> bool;

    /// C += alpha * A(m,k) * B(k,n), all row-major.
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], c: &mut [Self]);

    /// General strided C = alpha*A*B + beta*C with explicit (row, col)
    /// strides per operand; C is row-major (m, n).
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                self.exp()
            }
            #[inline]
            fn ln(self) -> Self {
                self.ln()
            }
            #[inline]
            fn tanh(self) -> Self {
                self.tanh()
            }
            #[inline]
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            #[inline]
            fn abs(self) -> Self {
                self.abs()
            }
            #[inline]
            fn powi(self, n: i32) -> Self {
                self.powi(n)
            }
            #[inline]
            fn max(self, o: Self) -> Self {
                if self > o {
                    self
                } else {
                    o
                }
            }
            #[inline]
            fn min(self, o: Self) -> Self {
                if self < o {
                    self
                } else {
                    o
                }
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                Self::gemm_strided(
                    m, k, n, alpha, a, k as isize, 1, b, n as isize, 1, 1.0, c,
                );
            }

            fn gemm_strided(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    for x in c[..m * n].iter_mut() {
                        *x *= beta;
                    }
                    return;
                }
                unsafe {
                    $gemm(
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

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Row-major dense tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F: Scalar> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::ZERO; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data mismatch"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn zero(&mut self) {
        self.fill(F::ZERO);
    }

    /// Element-wise a += s * b.
    pub fn axpy(&mut self, s: F, other: &Tensor<F>) {
        assert_eq!(self.shape, other.shape);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += s * *y;
        }
    }

    pub fn scale(&mut self, s: F) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| G::from_f64(x.to_f64())).collect(),
        }
    }
}

/// C(m,n) = A(m,k) * B(k,n), row-major.
pub fn matmul<F: Scalar>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F]) {
    c[..m * n].iter_mut().for_each(|x| *x = F::ZERO);
    F::gemm(m, k, n, F::ONE, a, b, c);
}

/// C(m,n) += A(m,k) * B(k,n).
pub fn matmul_acc<F: Scalar>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F]) {
    F::gemm(m, k, n, F::ONE, a, b, c);
}

/// out(k,m) = transpose of a(m,k).
pub fn transpose<F: Scalar>(m: usize, k: usize, a: &[F], out: &mut [F]) {
    for i in 0..m {
        for j in 0..k {
            out[j * m + i] = a[i * k + j];
        }
    }
}

/// C(k,n) += A(m,k)^T * B(m,n). Used for weight gradients.
pub fn matmul_tn_acc<F: Scalar>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F]) {
    assert!(a.len() >= m * k && b.len() >= m * n && c.len() >= k * n);
    F::gemm_strided(k, m, n, F::ONE, a, 1, k as isize, b, n as isize, 1, F::ONE, c);
}

/// C(m,k) = A(m,n) * B(k,n)^T. Used for input gradients.
pub fn matmul_nt<F: Scalar>(m: usize, n: usize, k: usize, a: &[F], b: &[F], c: &mut [F]) {
    assert!(a.len() >= m * n && b.len() >= k * n && c.len() >= m * k);
    F::gemm_strided(m, n, k, F::ONE, a, n as isize, 1, b, 1, n as isize, F::ZERO, c);
}

/// C(m,k) += A(m,n) * B(k,n)^T.
pub fn matmul_nt_acc<F: Scalar>(m: usize, n: usize, k: usize, a: &[F], b: &[F], c: &mut [F]) {
    assert!(a.len() >= m * n && b.len() >= k * n && c.len() >= m * k);
    F::gemm_strided(m, n, k, F::ONE, a, n as isize, 1, b, 1, n as isize, F::ONE, c);
}
