use serde::{Deserialize, Serialize};

/// Dense row-major matrix; batched data stacks samples along the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data does not match its shape");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn scaled(&self, c: f64) -> Tensor {
        Tensor::new(self.rows, self.cols, self.data.iter().map(|v| v * c).collect())
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Tensor::zeros(self.rows, other.cols);
        matmul_acc(&self.data, &other.data, self.rows, self.cols, other.cols, &mut out.data);
        out
    }
}

/// Strided view of a matrix: entry `(r, c)` sits at `r * rs + c * cs`.
#[derive(Clone, Copy)]
struct View<'a> {
    data: &'a [f64],
    rs: usize,
    cs: usize,
}

impl View<'_> {
    #[inline(always)]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.rs + c * self.cs]
    }
}

const TILE: usize = 4;

/// `out (rows×cols, row-major) += A (rows×inner) · B (inner×cols)`.
///
/// `A` is packed row-major and `B` into column panels of width 4, so the 4×4
/// register tiles stream contiguous memory. Every entry is summed over the
/// inner index in increasing order, so results do not depend on the tiling.
fn gemm_acc(a: View, b: View, rows: usize, inner: usize, cols: usize, out: &mut [f64]) {
    if rows == 0 || cols == 0 {
        return;
    }
    let ap: Vec<f64> = if a.cs == 1 && a.rs == inner {
        a.data[..rows * inner].to_vec()
    } else {
        (0..rows * inner).map(|t| a.at(t / inner, t % inner)).collect()
    };
    let arow = |i: usize| &ap[i * inner..(i + 1) * inner];
    let full_c = cols - cols % TILE;
    let mut panel = vec![0.0; inner * TILE];
    for j in (0..full_c).step_by(TILE) {
        for (s, q) in panel.chunks_exact_mut(TILE).enumerate() {
            q.iter_mut().enumerate().for_each(|(c, v)| *v = b.at(s, j + c));
        }
        let mut i = 0;
        while i + TILE <= rows {
            let mut acc = [[0.0; TILE]; TILE];
            let rows4 = [arow(i), arow(i + 1), arow(i + 2), arow(i + 3)];
            for (s, q) in panel.chunks_exact(TILE).enumerate() {
                for (r, accr) in acc.iter_mut().enumerate() {
                    let av = rows4[r][s];
                    for (x, &y) in accr.iter_mut().zip(q) {
                        *x += av * y;
                    }
                }
            }
            for (r, accr) in acc.iter().enumerate() {
                let o = &mut out[(i + r) * cols + j..(i + r) * cols + j + TILE];
                o.iter_mut().zip(accr).for_each(|(o, v)| *o += v);
            }
            i += TILE;
        }
        for i in i..rows {
            let mut acc = [0.0; TILE];
            for (&av, q) in arow(i).iter().zip(panel.chunks_exact(TILE)) {
                acc.iter_mut().zip(q).for_each(|(x, &y)| *x += av * y);
            }
            let o = &mut out[i * cols + j..i * cols + j + TILE];
            o.iter_mut().zip(&acc).for_each(|(o, v)| *o += v);
        }
    }
    // ragged right edge
    for j in full_c..cols {
        let col: Vec<f64> = (0..inner).map(|s| b.at(s, j)).collect();
        for i in 0..rows {
            let mut v = 0.0;
            for (&x, &y) in arow(i).iter().zip(&col) {
                v += x * y;
            }
            out[i * cols + j] += v;
        }
    }
}

/// `out (m×n) += a (m×k) · b (k×n)`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && out.len() >= m * n);
    gemm_acc(View { data: a, rs: k, cs: 1 }, View { data: b, rs: n, cs: 1 }, m, k, n, out);
}

/// `out (k×n) += aᵀ · g` for `a (m×k)`, `g (m×n)`.
pub(crate) fn matmul_at_b_acc(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert!(a.len() >= m * k && g.len() >= m * n && out.len() >= k * n);
    gemm_acc(View { data: a, rs: 1, cs: k }, View { data: g, rs: n, cs: 1 }, k, m, n, out);
}

/// `out (m×k) += g · bᵀ` for `g (m×n)`, `b (k×n)`.
pub(crate) fn matmul_a_bt_acc(g: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    debug_assert!(g.len() >= m * n && b.len() >= k * n && out.len() >= m * k);
    gemm_acc(View { data: g, rs: n, cs: 1 }, View { data: b, rs: 1, cs: n }, m, n, k, out);
}
