use crate::error::{Error, Result};
use crate::nn::tensor::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc};
use crate::nn::{ParamId, ParamStore, Tensor};

/// Layer-norm variance guard.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    /// `x + 1 bᵀ`: a `1 × c` row added to every row.
    AddRow(Var, Var),
    Add(Var, Var),
    Relu(Var),
    Scale(Var, f64),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Attention { q: Var, k: Var, v: Var, batch: usize, seq: usize, heads: usize, probs: Vec<f64> },
    TimeMix { w: Var, b: Var, x: Var, batch: usize },
    Reshape(Var),
    HConcat(Var, Var),
    L1 { x: Var, target: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Tape of tensor operations, recorded in execution order so that a reverse
/// sweep visits every node after all of its consumers.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape(format!("{what}: {a:?} vs {b:?}"))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; receives a gradient but is not a parameter.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, w) = (self.value(a), self.value(b));
        if x.cols != w.rows {
            return Err(shape_err("matmul", x.shape(), w.shape()));
        }
        let out = x.matmul(w);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows != 1 || bv.cols != xv.cols {
            return Err(shape_err("row bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone();
        for row in out.data.chunks_exact_mut(out.cols) {
            for (o, b) in row.iter_mut().zip(&bv.data) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    /// `x W + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("add", av.shape(), bv.shape()));
        }
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.rows, av.cols, data);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = Tensor::new(xv.rows, xv.cols, xv.data.iter().map(|&v| v.max(0.0)).collect());
        self.push(out, Op::Relu(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let xv = self.value(x);
        let out = Tensor::new(xv.rows, xv.cols, xv.data.iter().map(|&v| v * c).collect());
        self.push(out, Op::Scale(x, c))
    }

    /// Per-row normalization followed by the affine map `γ ⊙ x̂ + β`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols;
        for g in [gamma, beta] {
            let gv = self.value(g);
            if gv.shape() != (1, c) {
                return Err(shape_err("layer norm affine", (1, c), gv.shape()));
            }
        }
        let (gv, bv) = (&self.value(gamma).data, &self.value(beta).data);
        let mut out = Tensor::zeros(xv.rows, c);
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; xv.rows];
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[r * c + j] = h;
                out.data[r * c + j] = gv[j] * h + bv[j];
            }
        }
        Ok(self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }))
    }

    /// Multi-head scaled dot-product self-attention.
    ///
    /// `q`, `k`, `v` are `(batch·seq) × d`; head `h` uses columns
    /// `h·d/heads .. (h+1)·d/heads`. Attention never mixes samples.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, batch: usize, seq: usize, heads: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        if qv.shape() != kv.shape() || qv.shape() != vv.shape() {
            return Err(shape_err("attention q/k/v", qv.shape(), kv.shape()));
        }
        let d = qv.cols;
        if qv.rows != batch * seq || heads == 0 || d % heads != 0 {
            return Err(Error::Shape(format!("attention: {} rows, batch {batch}, seq {seq}, width {d}, heads {heads}", qv.rows)));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Tensor::zeros(qv.rows, d);
        let mut probs = vec![0.0; batch * heads * seq * seq];
        for b in 0..batch {
            for h in 0..heads {
                let p = &mut probs[(b * heads + h) * seq * seq..(b * heads + h + 1) * seq * seq];
                for i in 0..seq {
                    let qi = &qv.data[(b * seq + i) * d + h * dh..(b * seq + i) * d + (h + 1) * dh];
                    let prow = &mut p[i * seq..(i + 1) * seq];
                    let mut max = f64::NEG_INFINITY;
                    for (j, pj) in prow.iter_mut().enumerate() {
                        let kj = &kv.data[(b * seq + j) * d + h * dh..(b * seq + j) * d + (h + 1) * dh];
                        *pj = scale * crate::linalg::dot(qi, kj);
                        max = max.max(*pj);
                    }
                    let mut sum = 0.0;
                    for pj in prow.iter_mut() {
                        *pj = (*pj - max).exp();
                        sum += *pj;
                    }
                    for pj in prow.iter_mut() {
                        *pj /= sum;
                    }
                    let orow = &mut out.data[(b * seq + i) * d + h * dh..(b * seq + i) * d + (h + 1) * dh];
                    for (j, &pj) in prow.iter().enumerate() {
                        let vj = &vv.data[(b * seq + j) * d + h * dh..(b * seq + j) * d + (h + 1) * dh];
                        for (o, &x) in orow.iter_mut().zip(vj) {
                            *o += pj * x;
                        }
                    }
                }
            }
        }
        Ok(self.push(out, Op::Attention { q, k, v, batch, seq, heads, probs }))
    }

    /// Attention weights of the most recent [`Graph::attention`] node `a`:
    /// `batch·heads` blocks of `seq × seq`, rows summing to one.
    pub fn attention_probs(&self, a: Var) -> Option<&[f64]> {
        match &self.nodes[a.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Per-sample linear map along the time axis: `y_b = W x_b + b 1ᵀ`, with
    /// `x` stacked as `batch` blocks of `m0 × c`, `W` `m1 × m0` and `b` `m1 × 1`.
    pub fn time_mix(&mut self, w: Var, b: Var, x: Var, batch: usize) -> Result<Var> {
        let (wv, bv, xv) = (self.value(w), self.value(b), self.value(x));
        let (m1, m0) = wv.shape();
        if bv.shape() != (m1, 1) || xv.rows != batch * m0 {
            return Err(Error::Shape(format!(
                "time map: W {:?}, b {:?}, x {:?}, batch {batch}",
                wv.shape(),
                bv.shape(),
                xv.shape()
            )));
        }
        let c = xv.cols;
        let mut out = Tensor::zeros(batch * m1, c);
        for s in 0..batch {
            let xs = &xv.data[s * m0 * c..(s + 1) * m0 * c];
            let os = &mut out.data[s * m1 * c..(s + 1) * m1 * c];
            matmul_acc(&wv.data, xs, m1, m0, c, os);
            for i in 0..m1 {
                for o in &mut os[i * c..(i + 1) * c] {
                    *o += bv.data[i];
                }
            }
        }
        Ok(self.push(out, Op::TimeMix { w, b, x, batch }))
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let xv = self.value(x);
        if rows * cols != xv.len() {
            return Err(shape_err("reshape", xv.shape(), (rows, cols)));
        }
        let out = Tensor::new(rows, cols, xv.data.clone());
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// `[a, b]` side by side.
    pub fn hconcat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows != bv.rows {
            return Err(shape_err("hconcat", av.shape(), bv.shape()));
        }
        let mut out = Tensor::zeros(av.rows, av.cols + bv.cols);
        for r in 0..av.rows {
            out.data[r * out.cols..r * out.cols + av.cols].copy_from_slice(av.row(r));
            out.data[r * out.cols + av.cols..(r + 1) * out.cols].copy_from_slice(bv.row(r));
        }
        Ok(self.push(out, Op::HConcat(a, b)))
    }

    /// Mean over rows of `Σ_j |x_ij − t_ij|`, as a `1 × 1` tensor.
    pub fn l1_loss(&mut self, x: Var, target: Tensor) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != target.shape() {
            return Err(shape_err("l1 loss", xv.shape(), target.shape()));
        }
        let total: f64 = xv.data.iter().zip(&target.data).map(|(a, b)| (a - b).abs()).sum();
        let out = Tensor::new(1, 1, vec![total / xv.rows.max(1) as f64]);
        Ok(self.push(out, Op::L1 { x, target }))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let len = self.nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows, av.cols, bv.cols);
                acc(*a, &mut |ga| matmul_a_bt_acc(g, &bv.data, m, n, k, ga));
                acc(*b, &mut |gb| matmul_at_b_acc(&av.data, g, m, k, n, gb));
            }
            Op::AddRow(x, b) => {
                let c = node.value.cols;
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, v)| *a += v));
                acc(*b, &mut |gb| {
                    for row in g.chunks_exact(c) {
                        gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, v)| *x += v));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, v)| *x += v));
            }
            Op::Relu(x) => {
                let xv = &self.value(*x).data;
                acc(*x, &mut |gx| {
                    for ((a, &v), &xi) in gx.iter_mut().zip(g).zip(xv) {
                        if xi > 0.0 {
                            *a += v;
                        }
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, v)| *a += c * v)),
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let c = node.value.cols;
                let rows = node.value.rows;
                let gam = &self.value(*gamma).data;
                acc(*gamma, &mut |gg| {
                    for r in 0..rows {
                        for j in 0..c {
                            gg[j] += g[r * c + j] * xhat[r * c + j];
                        }
                    }
                });
                acc(*beta, &mut |gb| {
                    for row in g.chunks_exact(c) {
                        gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                });
                acc(*x, &mut |gx| {
                    for r in 0..rows {
                        let gh: Vec<f64> = (0..c).map(|j| g[r * c + j] * gam[j]).collect();
                        let xh = &xhat[r * c..(r + 1) * c];
                        let mean_gh = gh.iter().sum::<f64>() / c as f64;
                        let mean_ghx = gh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                        for j in 0..c {
                            gx[r * c + j] += inv_std[r] * (gh[j] - mean_gh - xh[j] * mean_ghx);
                        }
                    }
                });
            }
            Op::Attention { q, k, v, batch, seq, heads, probs } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let d = qv.cols;
                let (seq, heads) = (*seq, *heads);
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut gq = vec![0.0; qv.len()];
                let mut gk = vec![0.0; kv.len()];
                let mut gv = vec![0.0; vv.len()];
                let mut dp = vec![0.0; seq];
                for b in 0..*batch {
                    for h in 0..heads {
                        let p = &probs[(b * heads + h) * seq * seq..(b * heads + h + 1) * seq * seq];
                        let col = |row: usize| (b * seq + row) * d + h * dh;
                        for i in 0..seq {
                            let go = &g[col(i)..col(i) + dh];
                            let prow = &p[i * seq..(i + 1) * seq];
                            // dV_j += p_ij dO_i ; dP_ij = dO_i · V_j
                            for j in 0..seq {
                                let vj = &vv.data[col(j)..col(j) + dh];
                                dp[j] = crate::linalg::dot(go, vj);
                                let gvj = &mut gv[col(j)..col(j) + dh];
                                for (a, &x) in gvj.iter_mut().zip(go) {
                                    *a += prow[j] * x;
                                }
                            }
                            let s: f64 = prow.iter().zip(&dp).map(|(a, b)| a * b).sum();
                            for j in 0..seq {
                                let ds = prow[j] * (dp[j] - s) * scale;
                                if ds == 0.0 {
                                    continue;
                                }
                                for t in 0..dh {
                                    gq[col(i) + t] += ds * kv.data[col(j) + t];
                                    gk[col(j) + t] += ds * qv.data[col(i) + t];
                                }
                            }
                        }
                    }
                }
                acc(*q, &mut |a| a.iter_mut().zip(&gq).for_each(|(x, v)| *x += v));
                acc(*k, &mut |a| a.iter_mut().zip(&gk).for_each(|(x, v)| *x += v));
                acc(*v, &mut |a| a.iter_mut().zip(&gv).for_each(|(x, v)| *x += v));
            }
            Op::TimeMix { w, b, x, batch } => {
                let (wv, xv) = (self.value(*w), self.value(*x));
                let (m1, m0) = wv.shape();
                let c = xv.cols;
                acc(*w, &mut |gw| {
                    for s in 0..*batch {
                        let gs = &g[s * m1 * c..(s + 1) * m1 * c];
                        let xs = &xv.data[s * m0 * c..(s + 1) * m0 * c];
                        matmul_a_bt_acc(gs, xs, m1, c, m0, gw);
                    }
                });
                acc(*b, &mut |gb| {
                    for s in 0..*batch {
                        for i in 0..m1 {
                            gb[i] += g[(s * m1 + i) * c..(s * m1 + i + 1) * c].iter().sum::<f64>();
                        }
                    }
                });
                acc(*x, &mut |gx| {
                    for s in 0..*batch {
                        let gs = &g[s * m1 * c..(s + 1) * m1 * c];
                        matmul_at_b_acc(&wv.data, gs, m1, m0, c, &mut gx[s * m0 * c..(s + 1) * m0 * c]);
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, v)| *a += v)),
            Op::HConcat(a, b) => {
                let ca = self.value(*a).cols;
                let c = node.value.cols;
                acc(*a, &mut |ga| {
                    for (r, row) in g.chunks_exact(c).enumerate() {
                        ga[r * ca..(r + 1) * ca].iter_mut().zip(&row[..ca]).for_each(|(x, v)| *x += v);
                    }
                });
                let cb = c - ca;
                acc(*b, &mut |gb| {
                    for (r, row) in g.chunks_exact(c).enumerate() {
                        gb[r * cb..(r + 1) * cb].iter_mut().zip(&row[ca..]).for_each(|(x, v)| *x += v);
                    }
                });
            }
            Op::L1 { x, target } => {
                let xv = self.value(*x);
                let w = g[0] / xv.rows.max(1) as f64;
                acc(*x, &mut |gx| {
                    for ((a, &p), &t) in gx.iter_mut().zip(&xv.data).zip(&target.data) {
                        // subgradient 0 at ties
                        *a += w * (p - t).signum() * f64::from(u8::from(p != t));
                    }
                });
            }
        }
    }

    /// Parameters that appear in the graph, with their nodes.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param(id) => Some((id, Var(i))),
            _ => None,
        })
    }
}

/// Gradients of one backward sweep, per node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v` (zeros if `v` does not influence the loss).
    pub fn of(&self, graph: &Graph, v: Var) -> Vec<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| vec![0.0; graph.value(v).len()])
    }

    /// Adds every parameter gradient into `store`.
    pub fn accumulate_into(&self, graph: &Graph, store: &mut ParamStore) {
        for (id, v) in graph.params() {
            if let Some(g) = &self.grads[v.0] {
                store.grad_mut(id).iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn dense_matches_hand_product() {
        let x = random(3, 4, 1);
        let w = random(4, 2, 2);
        let b = Tensor::new(1, 2, vec![0.5, -1.5]);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.input(x.clone()), g.input(w.clone()), g.input(b.clone()));
        let y = g.dense(xv, wv, bv).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut s = b.data[j];
                for k in 0..4 {
                    s += x.get(i, k) * w.get(k, j);
                }
                assert!((g.value(y).get(i, j) - s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dense_trivial_weights() {
        let x = random(2, 3, 3);
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let zero = g.input(Tensor::zeros(3, 3));
        let b = g.input(Tensor::new(1, 3, vec![1.0, 2.0, 3.0]));
        let y = g.dense(xv, zero, b).unwrap();
        assert_eq!(g.value(y).data, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let id = g.input(Tensor::identity(3));
        let zb = g.input(Tensor::zeros(1, 3));
        let y = g.dense(xv, id, zb).unwrap();
        assert_eq!(g.value(y).data, x.data);
        let bad = g.input(Tensor::zeros(2, 3));
        assert!(g.dense(xv, bad, zb).is_err());
    }

    #[test]
    fn uniform_attention_averages_values() {
        // Q = K = 0 gives uniform weights, so each output row is the mean of V
        let v = Tensor::new(2, 2, vec![1.0, 4.0, 3.0, -2.0]);
        let mut g = Graph::new();
        let q = g.input(Tensor::zeros(2, 2));
        let k = g.input(Tensor::zeros(2, 2));
        let vv = g.input(v);
        let a = g.attention(q, k, vv, 1, 2, 1).unwrap();
        assert_eq!(g.value(a).data, vec![2.0, 1.0, 2.0, 1.0]);
        assert_eq!(g.attention_probs(a).unwrap(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let (batch, seq, d, heads) = (3, 7, 12, 6);
        let mut g = Graph::new();
        let q = g.input(random(batch * seq, d, 4).scaled(30.0));
        let k = g.input(random(batch * seq, d, 5));
        let v = g.input(random(batch * seq, d, 6));
        let a = g.attention(q, k, v, batch, seq, heads).unwrap();
        let p = g.attention_probs(a).unwrap();
        assert_eq!(p.len(), batch * heads * seq * seq);
        for row in p.chunks(seq) {
            assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn attention_does_not_mix_samples() {
        let (seq, d) = (3, 6);
        let x = random(2 * seq, d, 7);
        let run = |x: Tensor| {
            let mut g = Graph::new();
            let xv = g.input(x);
            let a = g.attention(xv, xv, xv, 2, seq, 3).unwrap();
            g.value(a).clone()
        };
        let base = run(x.clone());
        let mut changed = x;
        for v in &mut changed.data[seq * d..] {
            *v += 1.0;
        }
        let other = run(changed);
        assert_eq!(&base.data[..seq * d], &other.data[..seq * d]);
    }

    #[test]
    fn l1_loss_values_and_signs() {
        let mut g = Graph::new();
        let p = g.input(Tensor::new(1, 2, vec![1.0, -1.0]));
        let l = g.l1_loss(p, Tensor::zeros(1, 2)).unwrap();
        assert_eq!(g.value(l).data, vec![2.0]);
        let grads = g.backward(l);
        assert_eq!(grads.of(&g, p), vec![1.0, -1.0]);

        let mut g = Graph::new();
        let t = Tensor::new(2, 3, vec![0.5, 1.0, -2.0, 0.0, 3.0, 1.0]);
        let p = g.input(t.clone());
        let l = g.l1_loss(p, t).unwrap();
        assert_eq!(g.value(l).data, vec![0.0]);
        assert_eq!(g.backward(l).of(&g, p), vec![0.0; 6]);
    }

    #[test]
    fn layer_norm_of_zeros_is_finite() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(3, 4));
        let ga = g.input(Tensor::filled(1, 4, 1.0));
        let be = g.input(Tensor::zeros(1, 4));
        let y = g.layer_norm(x, ga, be).unwrap();
        assert!(g.value(y).data.iter().all(|&v| v == 0.0));
    }
}
