use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};

pub const DEFAULT_HEADS: usize = 6;

/// Shape of the attention reduction `m0 × r0 → m1 × r1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub m0: usize,
    pub r0: usize,
    pub m1: usize,
    pub r1: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    #[serde(default)]
    pub positional_encoding: bool,
}

impl AttentionConfig {
    /// Default layer: 6 heads, one encoder layer, width the smallest multiple
    /// of the head count that is at least `r1`.
    pub fn new(m0: usize, r0: usize, m1: usize, r1: usize) -> Result<Self> {
        let heads = DEFAULT_HEADS;
        let d_model = heads * r1.div_ceil(heads).max(1);
        let cfg = Self { m0, r0, m1, r1, heads, layers: 1, d_model, d_ff: 4 * d_model, positional_encoding: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if [self.m0, self.r0, self.m1, self.r1, self.heads, self.d_model, self.d_ff].contains(&0) {
            return bad(format!("attention dimensions must be positive: {self:?}"));
        }
        if self.m1 > self.m0 || self.r1 > self.r0 {
            return bad(format!("attention must reduce: ({}, {}) -> ({}, {})", self.m0, self.r0, self.m1, self.r1));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return bad(format!("model width {} not divisible by {} heads", self.d_model, self.heads));
        }
        Ok(())
    }
}

/// Feature extractor in front of the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Backbone {
    /// Attention over the time axis, then a one-layer generator `m1·r1 → l`.
    Attention(AttentionConfig),
    /// Two dense layers with a rectifier in between, `input → hidden → l`.
    Dense { input: usize, hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    /// `[prev, cur] W + b` with `W` of shape `2l × l`.
    Linear,
    /// `relu([prev, cur] W₁ + b₁) W₂ + b₂` with hidden width `2l`.
    TwoLayer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageModelConfig {
    pub backbone: Backbone,
    /// Length `l` of the predicted coefficient vector.
    pub output: usize,
    /// Absent for the first stage.
    pub combination: Option<Combination>,
}

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let (w, b) = store.add_dense(name, fan_in, fan_out);
        Self { w, b }
    }

    fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.dense(x, w, b)
    }
}

#[derive(Debug, Clone)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

impl Norm {
    fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        let gamma = store.add(&format!("{name}.gamma"), Tensor::filled(1, d, 1.0));
        let beta = store.add(&format!("{name}.beta"), Tensor::zeros(1, d));
        Self { gamma, beta }
    }

    fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    q: Dense,
    k: Dense,
    v: Dense,
    o: Dense,
    norm1: Norm,
    ff1: Dense,
    ff2: Dense,
    norm2: Norm,
}

#[derive(Debug, Clone)]
struct AttentionBackbone {
    cfg: AttentionConfig,
    input: Dense,
    layers: Vec<EncoderLayer>,
    post: Dense,
    time_w: ParamId,
    time_b: ParamId,
    generator: Dense,
}

#[derive(Debug, Clone)]
enum Body {
    Attention(Box<AttentionBackbone>),
    Dense { hidden: Dense, out: Dense },
}

#[derive(Debug, Clone)]
enum Combiner {
    Linear(Dense),
    TwoLayer(Dense, Dense),
}

/// One stage network: backbone, generator and optional combination.
#[derive(Debug, Clone)]
pub struct StageModel {
    pub config: StageModelConfig,
    pub store: ParamStore,
    body: Body,
    combiner: Option<Combiner>,
}

/// Sinusoidal position code, `seq × d`.
pub fn sinusoidal_encoding(seq: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(seq, d);
    for p in 0..seq {
        for i in 0..d {
            let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = p as f64 * freq;
            t.set(p, i, if i % 2 == 0 { a.sin() } else { a.cos() });
        }
    }
    t
}

impl StageModel {
    pub fn new(config: StageModelConfig, seed: u64) -> Result<Self> {
        let l = config.output;
        if l == 0 {
            return Err(Error::InvalidArgument("stage output length must be positive".into()));
        }
        let mut store = ParamStore::new(seed);
        let body = match &config.backbone {
            Backbone::Attention(cfg) => {
                cfg.validate()?;
                let d = cfg.d_model;
                let input = Dense::new(&mut store, "input", cfg.r0, d);
                let layers = (0..cfg.layers)
                    .map(|i| EncoderLayer {
                        q: Dense::new(&mut store, &format!("enc{i}.q"), d, d),
                        k: Dense::new(&mut store, &format!("enc{i}.k"), d, d),
                        v: Dense::new(&mut store, &format!("enc{i}.v"), d, d),
                        o: Dense::new(&mut store, &format!("enc{i}.o"), d, d),
                        norm1: Norm::new(&mut store, &format!("enc{i}.norm1"), d),
                        ff1: Dense::new(&mut store, &format!("enc{i}.ff1"), d, cfg.d_ff),
                        ff2: Dense::new(&mut store, &format!("enc{i}.ff2"), cfg.d_ff, d),
                        norm2: Norm::new(&mut store, &format!("enc{i}.norm2"), d),
                    })
                    .collect();
                let post = Dense::new(&mut store, "post", d, cfg.r1);
                let time_w = store.add_uniform("time.w", cfg.m1, cfg.m0, cfg.m0);
                let time_b = store.add("time.b", Tensor::zeros(cfg.m1, 1));
                let generator = Dense::new(&mut store, "generator", cfg.m1 * cfg.r1, l);
                Body::Attention(Box::new(AttentionBackbone { cfg: cfg.clone(), input, layers, post, time_w, time_b, generator }))
            }
            Backbone::Dense { input, hidden } => {
                if *input == 0 || *hidden == 0 {
                    return Err(Error::InvalidArgument("dense widths must be positive".into()));
                }
                Body::Dense {
                    hidden: Dense::new(&mut store, "generator.hidden", *input, *hidden),
                    out: Dense::new(&mut store, "generator", *hidden, l),
                }
            }
        };
        let combiner = config.combination.map(|kind| match kind {
            Combination::Linear => {
                let c = Dense::new(&mut store, "combine", 2 * l, l);
                // pass-through: output = prev
                let w = store.value_mut(c.w);
                w.data.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..l {
                    w.set(i, i, 1.0);
                }
                Combiner::Linear(c)
            }
            Combination::TwoLayer => {
                let c1 = Dense::new(&mut store, "combine.hidden", 2 * l, 2 * l);
                let c2 = Dense::new(&mut store, "combine", 2 * l, l);
                // relu(p) - relu(-p) = p, so the stage starts as a pass-through
                let w1 = store.value_mut(c1.w);
                w1.data.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..l {
                    w1.set(i, i, 1.0);
                    w1.set(i, l + i, -1.0);
                }
                let w2 = store.value_mut(c2.w);
                w2.data.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..l {
                    w2.set(i, i, 1.0);
                    w2.set(l + i, i, -1.0);
                }
                Combiner::TwoLayer(c1, c2)
            }
        });
        Ok(Self { config, store, body, combiner })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.count()
    }

    /// Rows one sample occupies in the input tensor.
    pub fn rows_per_sample(&self) -> usize {
        match &self.body {
            Body::Attention(a) => a.cfg.m0,
            Body::Dense { .. } => 1,
        }
    }

    pub fn input_width(&self) -> usize {
        match &self.config.backbone {
            Backbone::Attention(cfg) => cfg.r0,
            Backbone::Dense { input, .. } => *input,
        }
    }

    /// Bias of the last generator layer; the trainer seeds it with the target mean.
    pub fn generator_bias(&self) -> ParamId {
        match &self.body {
            Body::Attention(a) => a.generator.b,
            Body::Dense { out, .. } => out.b,
        }
    }

    /// Output of the backbone and generator alone, `batch × l`.
    pub fn forward_generator(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let xv = g.value(x);
        let rps = self.rows_per_sample();
        if xv.cols != self.input_width() || !xv.rows.is_multiple_of(rps) {
            return Err(Error::Shape(format!(
                "stage input {:?}, expected blocks of {rps} rows by {}",
                xv.shape(),
                self.input_width()
            )));
        }
        let batch = xv.rows / rps;
        match &self.body {
            Body::Dense { hidden, out } => {
                let h = hidden.apply(g, store, x)?;
                let h = g.relu(h);
                out.apply(g, store, h)
            }
            Body::Attention(a) => {
                let cfg = &a.cfg;
                let mut h = a.input.apply(g, store, x)?;
                if cfg.positional_encoding {
                    let pe = sinusoidal_encoding(cfg.m0, cfg.d_model);
                    let mut tiled = Tensor::zeros(batch * cfg.m0, cfg.d_model);
                    for s in 0..batch {
                        tiled.data[s * pe.len()..(s + 1) * pe.len()].copy_from_slice(&pe.data);
                    }
                    let pe = g.input(tiled);
                    h = g.add(h, pe)?;
                }
                for layer in &a.layers {
                    let q = layer.q.apply(g, store, h)?;
                    let k = layer.k.apply(g, store, h)?;
                    let v = layer.v.apply(g, store, h)?;
                    let att = g.attention(q, k, v, batch, cfg.m0, cfg.heads)?;
                    let att = layer.o.apply(g, store, att)?;
                    let r = g.add(h, att)?;
                    let h1 = layer.norm1.apply(g, store, r)?;
                    let f = layer.ff1.apply(g, store, h1)?;
                    let f = g.relu(f);
                    let f = layer.ff2.apply(g, store, f)?;
                    let r = g.add(h1, f)?;
                    h = layer.norm2.apply(g, store, r)?;
                }
                let z = a.post.apply(g, store, h)?;
                let tw = g.param(store, a.time_w);
                let tb = g.param(store, a.time_b);
                let z = g.time_mix(tw, tb, z, batch)?;
                let z = g.reshape(z, batch, cfg.m1 * cfg.r1)?;
                a.generator.apply(g, store, z)
            }
        }
    }

    /// Stage prediction `batch × l`; `prev` is required exactly when the
    /// stage has a combination network.
    pub fn forward_with(&self, g: &mut Graph, store: &ParamStore, x: Var, prev: Option<Var>) -> Result<Var> {
        let cur = self.forward_generator(g, store, x)?;
        match (&self.combiner, prev) {
            (None, None) => Ok(cur),
            (Some(c), Some(p)) => {
                let cat = g.hconcat(p, cur)?;
                match c {
                    Combiner::Linear(d) => d.apply(g, store, cat),
                    Combiner::TwoLayer(d1, d2) => {
                        let h = d1.apply(g, store, cat)?;
                        let h = g.relu(h);
                        d2.apply(g, store, h)
                    }
                }
            }
            (None, Some(_)) => Err(Error::InvalidArgument("first-stage model given a previous prediction".into())),
            (Some(_), None) => Err(Error::InvalidArgument("combination stage needs the previous prediction".into())),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, prev: Option<Var>) -> Result<Var> {
        self.forward_with(g, &self.store, x, prev)
    }

    /// Inference without keeping the graph; rejects non-finite output.
    pub fn predict(&self, x: &Tensor, prev: Option<&Tensor>) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let pv = prev.map(|p| g.input(p.clone()));
        let y = self.forward(&mut g, xv, pv)?;
        let out = g.value(y).clone();
        if out.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stage model output".into()));
        }
        Ok(out)
    }
}
