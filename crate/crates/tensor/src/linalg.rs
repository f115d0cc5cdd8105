//! Strided GEMM on top of `matrixmultiply`.

/// A strided matrix view: element `(i, j)` lives at `off + i*rs + j*cs`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn new(data: &'a [f64], off: usize, rs: usize, cs: usize) -> Self {
        Self { data, off, rs, cs }
    }

    /// Row-major `rows × cols` block starting at `off`.
    pub fn rows(data: &'a [f64], off: usize, cols: usize) -> Self {
        Self::new(data, off, cols, 1)
    }

    /// Transpose of a row-major block with `cols` columns.
    pub fn trans(data: &'a [f64], off: usize, cols: usize) -> Self {
        Self::new(data, off, 1, cols)
    }

    fn check(&self, r: usize, c: usize) {
        if r > 0 && c > 0 {
            assert!(self.off + (r - 1) * self.rs + (c - 1) * self.cs < self.data.len(), "gemm view out of bounds");
        }
    }
}

/// `C = alpha·A·B + beta·C` with `A: m×k`, `B: k×n`, `C: m×n` at `c_off` with strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: View,
    b: View,
    beta: f64,
    c: &mut [f64],
    c_off: usize,
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    a.check(m, k);
    b.check(k, n);
    assert!(c_off + (m - 1) * rsc + (n - 1) * csc < c.len(), "gemm output out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let x = &mut c[c_off + i * rsc + j * csc];
                *x = if beta == 0.0 { 0.0 } else { beta * *x };
            }
        }
        return;
    }
    // SAFETY: every index touched is bounds-checked above; A/B are shared
    // borrows and C is an exclusive borrow, so they cannot alias.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.off),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.off),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(c_off),
            rsc as isize,
            csc as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_products() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3×2
        let mut c = [0.0; 4];
        gemm(2, 3, 2, 1.0, View::rows(&a, 0, 3), View::rows(&b, 0, 2), 0.0, &mut c, 0, 2, 1);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // Aᵀ·A via a transposed view: 3×3.
        let mut d = [0.0; 9];
        gemm(3, 2, 3, 1.0, View::trans(&a, 0, 3), View::rows(&a, 0, 3), 0.0, &mut d, 0, 3, 1);
        assert_eq!(d, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        gemm(2, 3, 2, 1.0, View::rows(&a, 0, 3), View::rows(&b, 0, 2), 1.0, &mut c, 0, 2, 1);
        assert_eq!(c, [8.0, 10.0, 20.0, 22.0]);
    }
}
