//! Dense complex matrices sized for small Hilbert spaces, with the few
//! decompositions the toolkit needs: Hermitian eigenvalues (cyclic Jacobi)
//! and a one-sided Jacobi SVD for null-space extraction.

use crate::error::{Error, Result};
use num_complex::Complex64;

pub type C64 = Complex64;

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl std::fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds from a row-major slice of complex entries.
    pub fn from_rows(rows: usize, cols: usize, entries: &[C64]) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count mismatch");
        Self {
            rows,
            cols,
            data: entries.to_vec(),
        }
    }

    /// Builds from a row-major slice of real entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Self {
        let data = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Diagonal matrix from real entries.
    pub fn diag_real(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn check_same_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context,
                left: self.rows,
                right: other.rows,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, z: C64) -> Self {
        let data = self.data.iter().map(|a| a * z).collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale_mut(&mut self, z: C64) {
        for a in &mut self.data {
            *a *= z;
        }
    }

    pub fn add_assign_scaled(&mut self, other: &Self, z: C64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * z;
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let row = k * other.cols;
                let orow = i * other.cols;
                for j in 0..other.cols {
                    out.data[orow + j] += a * other.data[row + j];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        let data = self.data.iter().map(|a| a.conj()).collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn trace(&self) -> C64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// tr(self * other), evaluated without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        debug_assert_eq!(self.cols, other.rows);
        debug_assert_eq!(self.rows, other.cols);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    /// Kronecker (tensor) product.
    pub fn kron(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows * other.rows, self.cols * other.cols);
        for i1 in 0..self.rows {
            for j1 in 0..self.cols {
                let a = self[(i1, j1)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for i2 in 0..other.rows {
                    for j2 in 0..other.cols {
                        out[(i1 * other.rows + i2, j1 * other.cols + j2)] = a * other[(i2, j2)];
                    }
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        debug_assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(v).map(|(a, x)| a * x).sum()
            })
            .collect()
    }

    /// Row-major vectorization.
    pub fn vectorize(&self) -> Vec<C64> {
        self.data.clone()
    }

    /// Inverse of [`CMatrix::vectorize`]: reshapes a length-n^2 vector.
    pub fn from_vectorized(n: usize, v: &[C64]) -> Self {
        assert_eq!(v.len(), n * n);
        Self {
            rows: n,
            cols: n,
            data: v.to_vec(),
        }
    }

    /// Hermiticity defect `‖A − A†‖` (Frobenius).
    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&self.adjoint()).norm()
    }
}

/// `AB − BA`.
pub fn commutator_matrix(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.mul(b).sub(&b.mul(a))
}

/// `AB + BA`.
pub fn anticommutator_matrix(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.mul(b).add(&b.mul(a))
}

/// Matrix exponential by scaling-and-squaring with a Taylor kernel.
///
/// Accurate to machine precision for the moderate norms this crate
/// produces (propagator generators scaled by one time step).
pub fn expm(m: &CMatrix) -> CMatrix {
    assert!(m.is_square(), "expm needs a square matrix");
    let n = m.rows();
    let norm = m.norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scaled = m.scale(C64::new(1.0 / (1u64 << squarings) as f64, 0.0));
    let mut result = CMatrix::identity(n);
    let mut term = CMatrix::identity(n);
    for k in 1..=60u64 {
        term = term.mul(&scaled).scale(C64::new(1.0 / k as f64, 0.0));
        result = result.add(&term);
        if term.norm() <= 1e-18 * result.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.mul(&result);
    }
    result
}

/// 2x2 complex Jacobi rotation that diagonalizes the Hermitian block
/// [[a, d*u], [d*conj(u), b]] with d = |off|, u = off/|off|.
/// Returns (c, s, u) for the unitary [[c, s*u], [-s*conj(u), c]].
fn jacobi_rotation(a: f64, b: f64, off: C64) -> (f64, f64, C64) {
    let d = off.norm();
    let u = off / d;
    let tau = (b - a) / (2.0 * d);
    let t = if tau == 0.0 {
        1.0
    } else {
        tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    (c, s, u)
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi sweeps, ascending.
///
/// The input is symmetrized first, so tiny hermiticity defects are ignored.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    assert!(m.is_square(), "eigenvalues need a square matrix");
    let n = m.rows();
    if n == 0 {
        return vec![];
    }
    if n == 1 {
        return vec![m[(0, 0)].re];
    }
    // Work on (A + A†)/2.
    let mut a = m.add(&m.adjoint()).scale(C64::new(0.5, 0.0));
    let scale = a.norm().max(1.0);
    let tol = 1e-15 * scale;

    for _sweep in 0..60 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.norm() <= tol * 1e-2 {
                    continue;
                }
                let (c, s, u) = jacobi_rotation(a[(p, p)].re, a[(q, q)].re, apq);
                // Column update: A <- A R with R the rotation on (p, q).
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * c - aiq * (s * u.conj());
                    a[(i, q)] = aip * (s * u) + aiq * c;
                }
                // Row update: A <- R† A.
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = apj * c - aqj * (s * u);
                    a[(q, j)] = apj * (s * u.conj()) + aqj * c;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Singular value decomposition of a square complex matrix by one-sided
/// Jacobi: returns (singular values descending, right singular vectors V
/// as columns, in the same order).
pub fn svd_jacobi(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    assert!(m.is_square(), "svd here only handles square input");
    let n = m.rows();
    let mut a = m.clone();
    let mut v = CMatrix::identity(n);
    let scale = a.norm().max(1.0);
    let tol = 1e-15 * scale;

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                // Gram entries for columns p, q.
                let mut alpha = 0.0_f64;
                let mut beta = 0.0_f64;
                let mut g = C64::new(0.0, 0.0);
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    alpha += aip.norm_sqr();
                    beta += aiq.norm_sqr();
                    g += aip.conj() * aiq;
                }
                // Columns already orthogonal to working precision, or one
                // of them is numerically zero.
                if g.norm() <= tol * tol + 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                let (c, s, u) = jacobi_rotation(alpha, beta, g);
                rotated = true;
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * c - aiq * (s * u.conj());
                    a[(i, q)] = aip * (s * u) + aiq * c;
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * c - viq * (s * u.conj());
                    v[(i, q)] = vip * (s * u) + viq * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut cols: Vec<(f64, usize)> = (0..n)
        .map(|j| {
            let norm = (0..n).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt();
            (norm, j)
        })
        .collect();
    cols.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let sigma: Vec<f64> = cols.iter().map(|&(s, _)| s).collect();
    let vs = CMatrix::from_fn(n, n, |i, j| v[(i, cols[j].1)]);
    (sigma, vs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn matmul_and_kron_agree_with_hand_values() {
        let a = CMatrix::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let ab = a.mul(&b);
        assert_eq!(ab[(0, 0)], c(2.0, 0.0));
        assert_eq!(ab[(0, 1)], c(1.0, 0.0));
        assert_eq!(ab[(1, 0)], c(4.0, 0.0));
        assert_eq!(ab[(1, 1)], c(3.0, 0.0));

        let k = a.kron(&b);
        assert_eq!(k.rows(), 4);
        assert_eq!(k[(0, 1)], c(1.0, 0.0));
        assert_eq!(k[(0, 3)], c(2.0, 0.0));
        assert_eq!(k[(3, 2)], c(4.0, 0.0));
    }

    #[test]
    fn vectorization_identity() {
        // vec(A rho B) = (A ⊗ B^T) vec(rho), row-major convention.
        let a = CMatrix::from_rows(2, 2, &[c(1.0, 0.5), c(0.0, 1.0), c(2.0, 0.0), c(0.3, -0.2)]);
        let b = CMatrix::from_rows(2, 2, &[c(0.4, 0.0), c(1.0, -1.0), c(0.0, 0.7), c(1.5, 0.0)]);
        let rho = CMatrix::from_rows(2, 2, &[c(0.6, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.4, 0.0)]);
        let lhs = a.mul(&rho).mul(&b).vectorize();
        let sup = a.kron(&b.transpose());
        let rhs = sup.matvec(&rho.vectorize());
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn hermitian_eigenvalues_match_analytic_2x2() {
        // [[2, 1-i], [1+i, 3]]: eigenvalues (5 ± sqrt(9))/2 = 1, 4.
        let m = CMatrix::from_rows(2, 2, &[c(2.0, 0.0), c(1.0, -1.0), c(1.0, 1.0), c(3.0, 0.0)]);
        let e = hermitian_eigenvalues(&m);
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hermitian_eigenvalues_trace_identities_random() {
        let mut seed = 0x1234_5678_u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64) / (1u64 << 53) as f64 - 0.5
        };
        for n in [2usize, 3, 5, 8] {
            let g = CMatrix::from_fn(n, n, |_, _| c(next(), next()));
            let h = g.add(&g.adjoint());
            let e = hermitian_eigenvalues(&h);
            let tr: f64 = e.iter().sum();
            let tr2: f64 = e.iter().map(|x| x * x).sum();
            assert!((tr - h.trace().re).abs() < 1e-10 * (1.0 + tr.abs()));
            let h2 = h.mul(&h);
            assert!((tr2 - h2.trace().re).abs() < 1e-9 * (1.0 + tr2.abs()));
        }
    }

    #[test]
    fn svd_recovers_rank_and_null_vector() {
        // Rank-2 3x3 matrix: third column = col0 + col1.
        let col = |j: usize, i: usize| -> C64 {
            match (i, j) {
                (0, 0) => c(1.0, 0.0),
                (1, 0) => c(0.0, 1.0),
                (2, 0) => c(0.5, 0.0),
                (0, 1) => c(0.0, -1.0),
                (1, 1) => c(2.0, 0.0),
                (2, 1) => c(1.0, 1.0),
                _ => unreachable!(),
            }
        };
        let m = CMatrix::from_fn(3, 3, |i, j| {
            if j < 2 {
                col(j, i)
            } else {
                col(0, i) + col(1, i)
            }
        });
        let (sigma, v) = svd_jacobi(&m);
        assert!(sigma[0] > 1.0);
        assert!(sigma[2] < 1e-12 * sigma[0]);
        // Null vector satisfies M v = 0.
        let null: Vec<C64> = (0..3).map(|i| v[(i, 2)]).collect();
        let mv = m.matvec(&null);
        let norm: f64 = mv.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(norm < 1e-12);
    }

    #[test]
    fn expm_matches_analytic_cases() {
        // Diagonal exponential.
        let d = CMatrix::diag_real(&[-0.3, 0.7]);
        let e = expm(&d);
        assert!((e[(0, 0)].re - (-0.3_f64).exp()).abs() < 1e-14);
        assert!((e[(1, 1)].re - (0.7_f64).exp()).abs() < 1e-14);
        // exp(i φ σx) = cos φ I + i sin φ σx.
        let phi = 0.83;
        let m = CMatrix::from_rows(
            2,
            2,
            &[
                c(0.0, 0.0),
                c(0.0, phi),
                c(0.0, phi),
                c(0.0, 0.0),
            ],
        );
        let e = expm(&m);
        assert!((e[(0, 0)] - c(phi.cos(), 0.0)).norm() < 1e-14);
        assert!((e[(0, 1)] - c(0.0, phi.sin())).norm() < 1e-14);
        // Group property with scaling-squaring engaged (norm > 0.5).
        let g = CMatrix::from_rows(
            2,
            2,
            &[c(0.4, 0.2), c(1.3, -0.7), c(-0.2, 0.9), c(-1.1, 0.0)],
        );
        let whole = expm(&g);
        let half = expm(&g.scale(c(0.5, 0.0)));
        assert!(half.mul(&half).sub(&whole).norm() < 1e-12);
    }

    #[test]
    fn svd_singular_values_of_unitary_are_ones() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = CMatrix::from_rows(2, 2, &[c(s, 0.0), c(s, 0.0), c(0.0, s), c(0.0, -s)]);
        let (sigma, _) = svd_jacobi(&m);
        for x in sigma {
            assert!((x - 1.0).abs() < 1e-13);
        }
    }
    #[test]
    fn decompositions_handle_zero_and_degenerate_input() {
        let z = CMatrix::zeros(4, 4);
        assert!(hermitian_eigenvalues(&z).iter().all(|&e| e == 0.0));
        let (sigma, _) = svd_jacobi(&z);
        assert!(sigma.iter().all(|&s| s == 0.0));
        // Repeated eigenvalues: 2I plus a rank-one bump.
        let mut m = CMatrix::identity(3).scale(c(2.0, 0.0));
        m[(0, 1)] = c(0.5, 0.0);
        m[(1, 0)] = c(0.5, 0.0);
        let e = hermitian_eigenvalues(&m);
        assert!((e[0] - 1.5).abs() < 1e-13);
        assert!((e[1] - 2.0).abs() < 1e-13);
        assert!((e[2] - 2.5).abs() < 1e-13);
    }

}
