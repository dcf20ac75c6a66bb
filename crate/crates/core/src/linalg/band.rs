use crate::error::{Error, Result};
use crate::linalg::SparseOperator;

const PIVOT_RTOL: f64 = 1e-12;

/// Symmetric band matrix, lower band stored row by row.
///
/// Row `i` holds columns `i - bw ..= i` contiguously; entries left of column
/// zero are padding. Structured-grid operators numbered row-major have a
/// bandwidth of one grid line, which keeps direct factorization cheap.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn from_sparse(op: &SparseOperator) -> Self {
        let mut band = Self::zeros(op.dim(), op.bandwidth());
        for r in 0..op.dim() {
            for (c, v) in op.row(r) {
                if c <= r {
                    band.add(r, c, v);
                }
            }
        }
        band
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + self.bw + j - i
    }

    /// Adds `v` to entry `(i, j)`; only the lower triangle (`j <= i`) is stored.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside bandwidth {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Cholesky factorization `A = L Lᵀ` within the band.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for j in 0..n {
            let row_j = j * w;
            let k0 = j.saturating_sub(bw);
            // diagonal
            let off_j = bw - j.min(bw);
            let a_jj = self.data[row_j + bw];
            let mut s = a_jj;
            for t in 0..(j - k0) {
                let l = self.data[row_j + off_j + t];
                s -= l * l;
            }
            // pivots lost to cancellation signal a numerically singular matrix
            if !(s > PIVOT_RTOL * a_jj) || !s.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: s });
            }
            let d = s.sqrt();
            self.data[row_j + bw] = d;
            let inv = 1.0 / d;
            for i in (j + 1)..n.min(j + bw + 1) {
                let row_i = i * w;
                let k0i = i.saturating_sub(bw);
                // sum over k in max(k0i, k0) .. j of L[i][k] L[j][k]
                let kstart = k0i.max(k0);
                let len = j - kstart;
                let pi = row_i + bw + kstart - i;
                let pj = row_j + bw + kstart - j;
                let mut acc = self.data[row_i + bw + j - i];
                let (ri, rj) = (&self.data[pi..pi + len], &self.data[pj..pj + len]);
                acc -= dot(ri, rj);
                self.data[row_i + bw + j - i] = acc * inv;
            }
        }
        Ok(BandCholesky { n, bw, l: self.data })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = c * 4;
        s[0] += a[k] * b[k];
        s[1] += a[k + 1] * b[k + 1];
        s[2] += a[k + 2] * b[k + 2];
        s[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in chunks * 4..a.len() {
        tail += a[k] * b[k];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

/// Band Cholesky factor; reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let (bw, w) = (self.bw, self.bw + 1);
        // forward: L y = b
        for i in 0..self.n {
            let k0 = i.saturating_sub(bw);
            let p = i * w + bw + k0 - i;
            let s = dot(&self.l[p..p + (i - k0)], &b[k0..i]);
            b[i] = (b[i] - s) / self.l[i * w + bw];
        }
        // backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            let xi = b[i] / self.l[i * w + bw];
            b[i] = xi;
            let k0 = i.saturating_sub(bw);
            let p = i * w + bw + k0 - i;
            for (t, bk) in b[k0..i].iter_mut().enumerate() {
                *bk -= self.l[p + t] * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn random_spd_band(n: usize, bw: usize, seed: u64) -> BandMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                a.add(i, j, rng.random_range(-1.0..1.0));
            }
        }
        for i in 0..n {
            a.add(i, i, 2.0 * (bw as f64 + 1.0));
        }
        a
    }

    #[test]
    fn matches_dense_solve() {
        for &(n, bw) in &[(1usize, 0usize), (5, 1), (30, 4), (57, 11), (20, 25)] {
            let bw = bw.min(n.saturating_sub(1));
            let a = random_spd_band(n, bw, n as u64);
            let mut dense = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    dense[(i, j)] = a.get(i, j);
                }
            }
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 0.1).collect();
            let x = a.clone().cholesky().unwrap().solve(&b);
            let xd = dense.lu().solve(&DVector::from_vec(b.clone())).unwrap();
            for i in 0..n {
                assert!((x[i] - xd[i]).abs() <= 1e-12 * (1.0 + xd[i].abs()), "n={n} bw={bw}");
            }
            let ax = a.matvec(&x);
            for i in 0..n {
                assert!((ax[i] - b[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = BandMatrix::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }
}
