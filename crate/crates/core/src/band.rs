//! Square complex matrices stored by diagonals.
//!
//! Collective-spin operators in the Dicke basis occupy at most three
//! diagonals, so products with a dense density matrix cost O(D^2) per
//! stored diagonal instead of O(D^3).

use nalgebra::DMatrix;
use num_complex::Complex64;

/// A square matrix stored as a sorted list of diagonals.
///
/// Diagonal `k` holds `A[i, i + k]` at position `i` (row-indexed, full
/// length `dim`); slots that fall outside the matrix are kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    dim: usize,
    diags: Vec<(isize, Vec<Complex64>)>,
}

impl BandMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, diags: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(vec![Complex64::new(1.0, 0.0); dim])
    }

    pub fn from_diagonal(values: Vec<Complex64>) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        m.set_diagonal(0, values);
        m
    }

    /// Builds a matrix with a single off-diagonal `offset`; `values[i]` is
    /// the entry at row `i` (entries whose column falls outside are ignored).
    pub fn from_offset(dim: usize, offset: isize, mut values: Vec<Complex64>) -> Self {
        values.resize(dim, Complex64::new(0.0, 0.0));
        let mut m = Self::zeros(dim);
        m.set_diagonal(offset, values);
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Offsets of the stored diagonals, ascending.
    pub fn offsets(&self) -> impl Iterator<Item = isize> + '_ {
        self.diags.iter().map(|(k, _)| *k)
    }

    pub fn diagonals(&self) -> &[(isize, Vec<Complex64>)] {
        &self.diags
    }

    fn row_range(&self, k: isize) -> std::ops::Range<usize> {
        let n = self.dim as isize;
        let lo = (-k).max(0);
        let hi = (n - k).min(n);
        if hi <= lo {
            0..0
        } else {
            lo as usize..hi as usize
        }
    }

    fn set_diagonal(&mut self, k: isize, mut values: Vec<Complex64>) {
        let range = self.row_range(k);
        for (i, v) in values.iter_mut().enumerate() {
            if !range.contains(&i) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        match self.diags.binary_search_by_key(&k, |(o, _)| *o) {
            Ok(pos) => self.diags[pos].1 = values,
            Err(pos) => self.diags.insert(pos, (k, values)),
        }
    }

    fn diagonal_mut(&mut self, k: isize) -> &mut Vec<Complex64> {
        let pos = match self.diags.binary_search_by_key(&k, |(o, _)| *o) {
            Ok(pos) => pos,
            Err(pos) => {
                self.diags.insert(pos, (k, vec![Complex64::new(0.0, 0.0); self.dim]));
                pos
            }
        };
        &mut self.diags[pos].1
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let k = j as isize - i as isize;
        match self.diags.binary_search_by_key(&k, |(o, _)| *o) {
            Ok(pos) => self.diags[pos].1[i],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Drops diagonals whose entries are all exactly zero.
    pub fn pruned(mut self) -> Self {
        self.diags.retain(|(_, d)| d.iter().any(|z| z.re != 0.0 || z.im != 0.0));
        self
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            diags: self
                .diags
                .iter()
                .map(|(k, d)| (*k, d.iter().map(|z| z * s).collect()))
                .collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "band matrix dimension mismatch");
        let mut out = self.clone();
        for (k, d) in &other.diags {
            let target = out.diagonal_mut(*k);
            for (t, v) in target.iter_mut().zip(d) {
                *t += v;
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale_real(-1.0))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for (k, d) in &self.diags {
            // A^dagger[i, i - k] = conj(A[i - k, i])
            let nk = -*k;
            let mut v = vec![Complex64::new(0.0, 0.0); self.dim];
            for i in out.row_range(nk) {
                let src = (i as isize + nk) as usize;
                v[i] = d[src].conj();
            }
            out.set_diagonal(nk, v);
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = self.adjoint();
        for (_, d) in out.diags.iter_mut() {
            for z in d.iter_mut() {
                *z = z.conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "band matrix dimension mismatch");
        let mut out = Self::zeros(self.dim);
        for (p, a) in &self.diags {
            for (q, b) in &other.diags {
                let k = p + q;
                let range = out.row_range(k);
                let inner = self.row_range(*p);
                let target = out.diagonal_mut(k);
                for i in range {
                    if !inner.contains(&i) {
                        continue;
                    }
                    let mid = (i as isize + p) as usize;
                    target[i] += a[i] * b[mid];
                }
            }
        }
        out.pruned()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (k, d) in &self.diags {
            for i in self.row_range(*k) {
                m[(i, (i as isize + k) as usize)] = d[i];
            }
        }
        m
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.diags
            .iter()
            .flat_map(|(_, d)| d.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Largest modulus of `A - A^dagger`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&self.adjoint()).max_abs()
    }

    /// Spectral-norm upper bound from the sum of diagonal maxima.
    pub fn norm_bound(&self) -> f64 {
        self.diags
            .iter()
            .map(|(_, d)| d.iter().map(|z| z.norm()).fold(0.0, f64::max))
            .sum()
    }

    /// `out += A * rho`, with `rho` and `out` dense column-major `dim x dim`.
    pub fn mul_dense_acc(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        for (k, d) in &self.diags {
            let rows = self.row_range(*k);
            for j in 0..n {
                let col = &rho[j * n..(j + 1) * n];
                let dst = &mut out[j * n..(j + 1) * n];
                for i in rows.clone() {
                    dst[i] += d[i] * col[(i as isize + k) as usize];
                }
            }
        }
    }

    /// `out += rho * A`, dense column-major.
    pub fn dense_mul_acc(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        for (k, d) in &self.diags {
            // (rho A)[i, j] = sum_k rho[i, j - k] A[j - k, j]
            for r in self.row_range(*k) {
                let j = (r as isize + k) as usize;
                let a = d[r];
                let src = &rho[r * n..(r + 1) * n];
                let dst = &mut out[j * n..(j + 1) * n];
                for (t, s) in dst.iter_mut().zip(src) {
                    *t += s * a;
                }
            }
        }
    }

    /// `out += A * rho * A^dagger`, dense column-major.
    pub fn sandwich_acc(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        for (p, a) in &self.diags {
            for (q, b) in &self.diags {
                // out[i, j] += A[i, i+p] rho[i+p, j+q] conj(A[j, j+q])
                let rows_i = self.row_range(*p);
                let rows_j = self.row_range(*q);
                for j in rows_j {
                    let bj = b[j].conj();
                    let src_col = (j as isize + q) as usize;
                    let src = &rho[src_col * n..(src_col + 1) * n];
                    let dst = &mut out[j * n..(j + 1) * n];
                    for i in rows_i.clone() {
                        dst[i] += a[i] * src[(i as isize + p) as usize] * bj;
                    }
                }
            }
        }
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for (k, d) in &self.diags {
            for i in self.row_range(*k) {
                out[i] += d[i] * v[(i as isize + k) as usize];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_band(dim: usize, seed: u64) -> BandMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = BandMatrix::zeros(dim);
        for k in [-2isize, -1, 0, 1] {
            let v = (0..dim).map(|_| c(next(), next())).collect();
            m = m.add(&BandMatrix::from_offset(dim, k, v));
        }
        m
    }

    fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn out_of_range_slots_are_zeroed() {
        let m = BandMatrix::from_offset(3, 1, vec![c(1.0, 0.0); 3]);
        assert_eq!(m.diagonals()[0].1[2], c(0.0, 0.0));
        let d = m.to_dense();
        assert_eq!(d[(0, 1)], c(1.0, 0.0));
        assert_eq!(d[(1, 2)], c(1.0, 0.0));
    }

    proptest! {
        #[test]
        fn products_match_dense(dim in 1usize..9, seed in 0u64..1000) {
            let a = random_band(dim, seed);
            let b = random_band(dim, seed + 7);
            let dense = a.to_dense() * b.to_dense();
            prop_assert!(max_diff(&a.matmul(&b).to_dense(), &dense) < 1e-12);
            prop_assert!(max_diff(&a.adjoint().to_dense(), &a.to_dense().adjoint()) < 1e-15);

            let rho = DMatrix::from_fn(dim, dim, |i, j| c((i * 3 + j) as f64 * 0.1, (i as f64) - (j as f64)));
            let mut out = vec![c(0.0, 0.0); dim * dim];
            a.mul_dense_acc(rho.as_slice(), &mut out);
            let expect = a.to_dense() * &rho;
            prop_assert!(max_diff(&DMatrix::from_column_slice(dim, dim, &out), &expect) < 1e-12);

            let mut out = vec![c(0.0, 0.0); dim * dim];
            a.dense_mul_acc(rho.as_slice(), &mut out);
            let expect = &rho * a.to_dense();
            prop_assert!(max_diff(&DMatrix::from_column_slice(dim, dim, &out), &expect) < 1e-12);

            let mut out = vec![c(0.0, 0.0); dim * dim];
            a.sandwich_acc(rho.as_slice(), &mut out);
            let expect = a.to_dense() * &rho * a.to_dense().adjoint();
            prop_assert!(max_diff(&DMatrix::from_column_slice(dim, dim, &out), &expect) < 1e-12);
        }
    }
}
