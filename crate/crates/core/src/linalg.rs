//! Complex banded LU with partial pivoting.
//!
//! Storage follows the layout of LAPACK's `gbtrf`: row `i` keeps columns
//! `i - kl ..= i + kl + ku`, the extra `kl` superdiagonals holding fill
//! created by row interchanges. Multipliers stay in the column where they
//! were produced and pivots are replayed during the solve.

use crate::error::{Error, Result};
use crate::mesh::{C64, ZERO};

#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<C64>,
    piv: Vec<usize>,
}

impl BandLu {
    /// Allocates an `n x n` band with `kl` sub- and `ku` superdiagonals;
    /// entries are filled with [`BandLu::set`] before [`BandLu::factor`].
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandLu {
            n,
            kl,
            ku,
            width,
            data: vec![ZERO; n * width],
            piv: Vec::new(),
        }
    }

    #[inline]
    fn at(&self, i: usize, c: usize) -> usize {
        debug_assert!(c + self.kl >= i && c <= i + self.kl + self.ku);
        i * self.width + (c + self.kl - i)
    }

    /// Sets entry `(i, c)`; `c` must lie within the original band.
    pub fn set(&mut self, i: usize, c: usize, v: C64) {
        assert!(c + self.kl >= i && c <= i + self.ku, "entry outside band");
        let k = self.at(i, c);
        self.data[k] = v;
    }

    pub fn factor(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        self.piv = vec![0; n];
        for r in 0..n {
            let last_row = (r + kl).min(n - 1);
            let last_col = (r + kl + ku).min(n - 1);
            let mut p = r;
            let mut best = self.data[self.at(r, r)].norm();
            for i in r + 1..=last_row {
                let v = self.data[self.at(i, r)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularPivot(r));
            }
            self.piv[r] = p;
            if p != r {
                for c in r..=last_col {
                    let (a, b) = (self.at(r, c), self.at(p, c));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.at(r, r)];
            let row_start = self.at(r, r);
            for i in r + 1..=last_row {
                let li = self.at(i, r);
                let m = self.data[li] / pivot;
                self.data[li] = m;
                if m == ZERO {
                    continue;
                }
                let ri = self.at(i, r + 1);
                for off in 1..=(last_col - r) {
                    let u = self.data[row_start + off];
                    self.data[ri + off - 1] -= m * u;
                }
            }
        }
        Ok(())
    }

    /// Solves in place with the factored matrix.
    pub fn solve(&self, b: &mut [C64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        for r in 0..n {
            let p = self.piv[r];
            if p != r {
                b.swap(r, p);
            }
            let br = b[r];
            if br == ZERO {
                continue;
            }
            let end = (r + kl).min(n - 1);
            for (i, bi) in b.iter_mut().enumerate().take(end + 1).skip(r + 1) {
                *bi -= self.data[self.at(i, r)] * br;
            }
        }
        for r in (0..n).rev() {
            let mut acc = b[r];
            let start = self.at(r, r);
            let end = (r + kl + ku).min(n - 1);
            for (c, bc) in b.iter().enumerate().take(end + 1).skip(r + 1) {
                acc -= self.data[start + (c - r)] * bc;
            }
            b[r] = acc / self.data[start];
        }
    }
}
