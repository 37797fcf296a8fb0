//! Banded LU factorization with partial pivoting.
//!
//! Row-wise storage: row `r` keeps columns `r - kl ..= r + kl + ku`, which
//! leaves room for the fill-in that row exchanges produce.

use crate::error::{Error, Result};
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<Complex64>,
    pivots: Vec<usize>,
}

impl BandLu {
    /// Factors the `n x n` matrix with lower bandwidth `kl` and upper
    /// bandwidth `ku`; `entry(i, j)` is queried only inside the band.
    pub fn factor(n: usize, kl: usize, ku: usize, entry: impl Fn(usize, usize) -> Complex64) -> Result<Self> {
        let width = 2 * kl + ku + 1;
        let mut data = vec![ZERO; n * width];
        for r in 0..n {
            let lo = r.saturating_sub(kl);
            let hi = (r + ku).min(n - 1);
            for c in lo..=hi {
                data[r * width + c + kl - r] = entry(r, c);
            }
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data,
            pivots: vec![0; n],
        };
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.width + c + self.kl - r
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + kl + ku).min(n - 1);
            let mut piv = i;
            let mut best = self.data[self.idx(i, i)].norm();
            for r in i + 1..=last_row {
                let v = self.data[self.idx(r, i)].norm();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular(format!("zero pivot in column {i}")));
            }
            self.pivots[i] = piv;
            if piv != i {
                for c in i..=last_col {
                    let (a, b) = (self.idx(i, c), self.idx(piv, c));
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.idx(i, i)];
            let pivot_row = self.idx(i, i);
            for r in i + 1..=last_row {
                let at = self.idx(r, i);
                let f = self.data[at] / d;
                self.data[at] = f;
                if f == ZERO {
                    continue;
                }
                let dst = self.idx(r, i);
                for off in 1..=last_col - i {
                    let v = self.data[pivot_row + off];
                    self.data[dst + off] -= f * v;
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [Complex64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for i in 0..n {
            let p = self.pivots[i];
            if p != i {
                b.swap(i, p);
            }
            let bi = b[i];
            if bi == ZERO {
                continue;
            }
            for r in i + 1..=(i + kl).min(n - 1) {
                b[r] -= self.data[self.idx(r, i)] * bi;
            }
        }
        for i in (0..n).rev() {
            let row = self.idx(i, i);
            let mut s = b[i];
            for off in 1..=((i + kl + ku).min(n - 1) - i) {
                s -= self.data[row + off] * b[i + off];
            }
            b[i] = s / self.data[row];
        }
    }
}
