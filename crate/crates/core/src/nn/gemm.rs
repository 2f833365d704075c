//! Bounds-checked wrapper around `matrixmultiply::dgemm`.

/// A strided matrix view: element `(i, j)` lives at `offset + i * rs + j * cs`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct View {
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn row_major(offset: usize, cols: usize) -> Self {
        View { offset, rs: cols, cs: 1 }
    }

    /// Transpose of a row-major `rows x cols` matrix stored at `offset`.
    pub fn transposed(offset: usize, cols: usize) -> Self {
        View { offset, rs: 1, cs: cols }
    }

    fn check(&self, rows: usize, cols: usize, len: usize) {
        if rows == 0 || cols == 0 {
            return;
        }
        let last = self.offset + (rows - 1) * self.rs + (cols - 1) * self.cs;
        assert!(last < len, "gemm view out of bounds: {last} >= {len}");
    }
}

/// `c = alpha * a · b + beta * c` with `a: m x k`, `b: k x n`, `c: m x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    av: View,
    b: &[f64],
    bv: View,
    beta: f64,
    c: &mut [f64],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    av.check(m, k, a.len());
    bv.check(k, n, b.len());
    cv.check(m, n, c.len());
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[cv.offset + i * cv.rs + j * cv.cs] *= beta;
            }
        }
        return;
    }
    // SAFETY: every element touched lies inside the slices (checked above),
    // and `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
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
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_product() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, 1.0, &a, View::row_major(0, k), &b, View::row_major(0, n), 0.0, &mut c, View::row_major(0, n));
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
                assert!((c[i * n + j] - want).abs() < 1e-12);
            }
        }
        // aᵀ stored as k x m
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c2 = vec![0.0; m * n];
        gemm(m, k, n, 1.0, &at, View::transposed(0, m), &b, View::row_major(0, n), 0.0, &mut c2, View::row_major(0, n));
        assert_eq!(c, c2);
    }
}
