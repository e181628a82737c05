//! Direct linear solvers: banded LU with partial pivoting for the grid
//! systems (generators on tensor grids are banded) and a small dense LU for
//! the policy-enumeration oracle.

use crate::{Error, Result};

/// Band storage for an `n x n` matrix with `kl` sub- and `ku`
/// super-diagonals. Partial pivoting fills up to `kl + ku` super-diagonals,
/// so each column holds `2*kl + ku + 1` slots (LAPACK `dgbtrf` layout).
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    /// Column-major: entry (i, j) lives at `data[j * ldab + kl + ku + i - j]`.
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku + self.kl >= j && i <= j + self.kl);
        j * self.ldab + self.kl + self.ku + i - j
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    /// Largest entry magnitude; the natural scale for pivot floors.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Factorizes in place. Fails only if a pivot column is exactly zero.
    pub fn factorize(self) -> Result<BandedLu> {
        self.factorize_with_floor(0.0)
    }

    /// Factorizes, replacing any pivot smaller than `floor` in magnitude by
    /// `floor`. With a tiny positive floor this is the classical
    /// inverse-iteration patch: solves against a (numerically) singular
    /// matrix return a vector dominated by the near-null direction, which
    /// the caller then cleans up by normalization and refinement.
    pub fn factorize_with_floor(mut self, floor: f64) -> Result<BandedLu> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            // Pivot search in column j, rows j..=j+kl.
            let i_max = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.data[self.slot(j, j)].abs();
            for i in (j + 1)..=i_max {
                let v = self.data[self.slot(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < floor {
                let s = self.slot(p, j);
                self.data[s] = floor;
            } else if best == 0.0 {
                return Err(Error::Numerical(format!(
                    "banded LU: exact zero pivot at column {j}"
                )));
            }
            ipiv[j] = p;
            let j_max = (j + kv).min(n - 1);
            if p != j {
                for jj in j..=j_max {
                    let sa = self.slot(j, jj);
                    let sb = self.slot(p, jj);
                    self.data.swap(sa, sb);
                }
            }
            let pivot = self.data[self.slot(j, j)];
            for i in (j + 1)..=i_max {
                let s = self.slot(i, j);
                let m = self.data[s] / pivot;
                self.data[s] = m;
                if m != 0.0 {
                    for jj in (j + 1)..=j_max {
                        let su = self.slot(j, jj);
                        let st = self.slot(i, jj);
                        self.data[st] -= m * self.data[su];
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            ku,
            ldab,
            data: self.data,
            ipiv,
        })
    }
}

/// Factorized banded matrix, ready for repeated solves.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.ldab + self.kl + self.ku + i - j]
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        assert_eq!(b.len(), n);
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let i_max = (j + kl).min(n - 1);
                for i in (j + 1)..=i_max {
                    b[i] -= self.at(i, j) * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let j_max = (j + kv).min(n - 1);
            let mut s = b[j];
            for jj in (j + 1)..=j_max {
                s -= self.at(j, jj) * b[jj];
            }
            b[j] = s / self.at(j, j);
        }
    }

    /// Ratio of the largest to the smallest pivot magnitude, a cheap
    /// ill-conditioning indicator reported on solver failures.
    pub fn pivot_ratio(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for j in 0..self.n {
            let d = self.at(j, j).abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

/// In-place dense LU with partial pivoting on a row-major `n x n` buffer.
/// Returns false on an exactly singular column.
pub fn dense_lu_factor(a: &mut [f64], n: usize, piv: &mut [usize]) -> bool {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut p = j;
        let mut best = a[j * n + j].abs();
        for i in (j + 1)..n {
            let v = a[i * n + j].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            return false;
        }
        piv[j] = p;
        if p != j {
            for jj in 0..n {
                a.swap(j * n + jj, p * n + jj);
            }
        }
        let pivot = a[j * n + j];
        for i in (j + 1)..n {
            let m = a[i * n + j] / pivot;
            a[i * n + j] = m;
            if m != 0.0 {
                for jj in (j + 1)..n {
                    a[i * n + jj] -= m * a[j * n + jj];
                }
            }
        }
    }
    true
}

/// Solves with factors from [`dense_lu_factor`].
pub fn dense_lu_solve(a: &[f64], n: usize, piv: &[usize], b: &mut [f64]) {
    for j in 0..n {
        let p = piv[j];
        if p != j {
            b.swap(j, p);
        }
        let bj = b[j];
        if bj != 0.0 {
            for i in (j + 1)..n {
                b[i] -= a[i * n + j] * bj;
            }
        }
    }
    for j in (0..n).rev() {
        let mut s = b[j];
        for jj in (j + 1)..n {
            s -= a[j * n + jj] * b[jj];
        }
        b[j] = s / a[j * n + j];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn banded_matches_dense_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &(n, kl, ku) in &[(1usize, 0usize, 0usize), (5, 1, 1), (12, 3, 2), (30, 4, 4)] {
            // Random banded matrix, diagonally bumped to stay comfortably
            // nonsingular.
            let mut dense = vec![0.0; n * n];
            let mut banded = BandedMatrix::new(n, kl, ku);
            for i in 0..n {
                for j in 0..n {
                    if j + kl >= i && i + ku >= j {
                        let v = rng.gen_range(-1.0..1.0)
                            + if i == j { 4.0 } else { 0.0 };
                        dense[i * n + j] = v;
                        banded.set(i, j, v);
                    }
                }
            }
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut b = vec![0.0; n];
            for i in 0..n {
                b[i] = (0..n).map(|j| dense[i * n + j] * x_true[j]).sum();
            }
            let lu = banded.factorize().unwrap();
            let mut x = b.clone();
            lu.solve(&mut x);
            for i in 0..n {
                assert!((x[i] - x_true[i]).abs() < 1e-10, "n={n} i={i}");
            }
            // Same system through the dense path.
            let mut piv = vec![0usize; n];
            let mut ad = dense.clone();
            assert!(dense_lu_factor(&mut ad, n, &mut piv));
            let mut xd = b;
            dense_lu_solve(&ad, n, &piv, &mut xd);
            for i in 0..n {
                assert!((xd[i] - x_true[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn banded_needs_pivoting() {
        // Zero on the first diagonal entry forces a row interchange.
        let mut m = BandedMatrix::new(2, 1, 1);
        m.set(0, 0, 0.0);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        m.set(1, 1, 1.0);
        let lu = m.factorize().unwrap();
        let mut b = vec![2.0, 3.0];
        lu.solve(&mut b);
        // x = (1, 2)
        assert!((b[0] - 1.0).abs() < 1e-14);
        assert!((b[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut m = BandedMatrix::new(2, 1, 1);
        m.set(0, 0, 1.0);
        m.set(0, 1, 1.0);
        m.set(1, 0, 0.0);
        m.set(1, 1, 0.0);
        assert!(m.factorize().is_err());
    }
}
