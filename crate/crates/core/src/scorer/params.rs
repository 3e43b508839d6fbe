use ndarray::{Array, Array1, Array2, Array3, Dimension};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanScorer {
    /// Biaffine form over separate left and right boundary projections.
    #[default]
    Biaffine,
    /// An MLP over the difference of two boundary states.
    Minus,
}

impl std::str::FromStr for SpanScorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biaffine" => Ok(SpanScorer::Biaffine),
            "minus" => Ok(SpanScorer::Minus),
            _ => Err(Error::Config(format!("unknown span scorer `{s}`"))),
        }
    }
}

/// Layer sizes of the scorer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    /// Size of the character encoder output (both directions together).
    pub char_out: usize,
    /// Hidden size of one direction of the context encoder.
    pub lstm_hidden: usize,
    /// Stacked bidirectional layers; 0 feeds the embeddings straight to the
    /// boundary projections.
    pub lstm_layers: usize,
    pub bracket_dim: usize,
    pub label_dim: usize,
    pub dropout: f64,
    pub span_scorer: SpanScorer,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 100,
            char_dim: 50,
            char_out: 100,
            lstm_hidden: 400,
            lstm_layers: 3,
            bracket_dim: 500,
            label_dim: 100,
            dropout: 0.33,
            span_scorer: SpanScorer::Biaffine,
        }
    }
}

impl ModelConfig {
    /// Dimensions small enough for tests and quick experiments.
    pub fn tiny() -> Self {
        ModelConfig {
            word_dim: 8,
            char_dim: 4,
            char_out: 6,
            lstm_hidden: 6,
            lstm_layers: 1,
            bracket_dim: 8,
            label_dim: 5,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("char_out", self.char_out),
            ("bracket_dim", self.bracket_dim),
            ("label_dim", self.label_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.char_out.is_multiple_of(2) {
            return Err(Error::Config(format!("char_out must be even, got {}", self.char_out)));
        }
        if self.lstm_layers > 0 && self.lstm_hidden == 0 {
            return Err(Error::Config("lstm_hidden must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.word_dim + self.char_out
    }

    /// Size of the boundary states `h_i`.
    pub fn state_dim(&self) -> usize {
        if self.lstm_layers == 0 {
            self.input_dim()
        } else {
            2 * self.lstm_hidden
        }
    }
}

/// One direction of a recurrent layer; gates are stacked `i, f, g, o`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    fn init(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = LstmParams::zeros(input, hidden);
        fill_uniform(p.w_ih.as_slice_mut().expect("standard layout"), input, rng);
        for g in 0..4 {
            let q = orthogonal(hidden, rng);
            p.w_hh
                .slice_mut(ndarray::s![g * hidden..(g + 1) * hidden, ..])
                .assign(&q);
        }
        // forget gate bias 1 so early gradients pass through time
        p.b.slice_mut(ndarray::s![hidden..2 * hidden]).fill(1.0);
        p
    }
}

/// Single-layer projection `act(W x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Mlp {
    pub fn zeros(input: usize, output: usize) -> Self {
        Mlp {
            w: Array2::zeros((output, input)),
            b: Array1::zeros(output),
        }
    }

    fn init(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut m = Mlp::zeros(input, output);
        fill_uniform(m.w.as_slice_mut().expect("standard layout"), input, rng);
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BracketHead {
    pub left: Mlp,
    pub right: Mlp,
    /// `(d + 1) x d`; the last row pairs with the constant 1 appended to the
    /// left representation.
    pub w: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinusHead {
    pub hidden: Mlp,
    pub out_w: Array1<f64>,
    pub out_b: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelHead {
    pub left: Mlp,
    pub right: Mlp,
    /// `L x (d + 1) x d`.
    pub w: Array3<f64>,
}

/// Calls `$push(out, name, &[mut] tensor)` for every tensor in order.
macro_rules! each_tensor {
    ($p:ident, $out:ident, $push:ident, $iter:ident, $($m:tt)?) => {{
        $push(&mut $out, "word_emb".into(), &$($m)? $p.word_emb);
        $push(&mut $out, "char_emb".into(), &$($m)? $p.char_emb);
        for (dir, l) in ["fwd", "bwd"].iter().zip(&$($m)? $p.char_lstm) {
            $push(&mut $out, format!("char.{dir}.w_ih"), &$($m)? l.w_ih);
            $push(&mut $out, format!("char.{dir}.w_hh"), &$($m)? l.w_hh);
            $push(&mut $out, format!("char.{dir}.b"), &$($m)? l.b);
        }
        for (k, layer) in $p.context.$iter().enumerate() {
            for (dir, l) in ["fwd", "bwd"].iter().zip(layer) {
                $push(&mut $out, format!("context.{k}.{dir}.w_ih"), &$($m)? l.w_ih);
                $push(&mut $out, format!("context.{k}.{dir}.w_hh"), &$($m)? l.w_hh);
                $push(&mut $out, format!("context.{k}.{dir}.b"), &$($m)? l.b);
            }
        }
        if let Some(b) = &$($m)? $p.bracket {
            $push(&mut $out, "bracket.left.w".into(), &$($m)? b.left.w);
            $push(&mut $out, "bracket.left.b".into(), &$($m)? b.left.b);
            $push(&mut $out, "bracket.right.w".into(), &$($m)? b.right.w);
            $push(&mut $out, "bracket.right.b".into(), &$($m)? b.right.b);
            $push(&mut $out, "bracket.biaffine".into(), &$($m)? b.w);
        }
        if let Some(h) = &$($m)? $p.minus {
            $push(&mut $out, "minus.hidden.w".into(), &$($m)? h.hidden.w);
            $push(&mut $out, "minus.hidden.b".into(), &$($m)? h.hidden.b);
            $push(&mut $out, "minus.out.w".into(), &$($m)? h.out_w);
            $push(&mut $out, "minus.out.b".into(), &$($m)? h.out_b);
        }
        $push(&mut $out, "label.left.w".into(), &$($m)? $p.label.left.w);
        $push(&mut $out, "label.left.b".into(), &$($m)? $p.label.left.b);
        $push(&mut $out, "label.right.w".into(), &$($m)? $p.label.right.w);
        $push(&mut $out, "label.right.b".into(), &$($m)? $p.label.right.b);
        $push(&mut $out, "label.biaffine".into(), &$($m)? $p.label.w);
    }};
}

/// Every trainable tensor of the scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub word_emb: Array2<f64>,
    pub char_emb: Array2<f64>,
    pub char_lstm: [LstmParams; 2],
    /// Per layer, forward and backward direction.
    pub context: Vec<[LstmParams; 2]>,
    pub bracket: Option<BracketHead>,
    pub minus: Option<MinusHead>,
    pub label: LabelHead,
}

impl ModelParams {
    /// All-zero parameters of the right shapes.
    pub fn zeros(cfg: &ModelConfig, words: usize, chars: usize, labels: usize) -> Self {
        let ch = cfg.char_out / 2;
        let mut context = Vec::with_capacity(cfg.lstm_layers);
        let mut input = cfg.input_dim();
        for _ in 0..cfg.lstm_layers {
            context.push([
                LstmParams::zeros(input, cfg.lstm_hidden),
                LstmParams::zeros(input, cfg.lstm_hidden),
            ]);
            input = 2 * cfg.lstm_hidden;
        }
        let h = cfg.state_dim();
        let (d, dl) = (cfg.bracket_dim, cfg.label_dim);
        ModelParams {
            word_emb: Array2::zeros((words, cfg.word_dim)),
            char_emb: Array2::zeros((chars, cfg.char_dim)),
            char_lstm: [LstmParams::zeros(cfg.char_dim, ch), LstmParams::zeros(cfg.char_dim, ch)],
            context,
            bracket: (cfg.span_scorer == SpanScorer::Biaffine).then(|| BracketHead {
                left: Mlp::zeros(h, d),
                right: Mlp::zeros(h, d),
                w: Array2::zeros((d + 1, d)),
            }),
            minus: (cfg.span_scorer == SpanScorer::Minus).then(|| MinusHead {
                hidden: Mlp::zeros(h, d),
                out_w: Array1::zeros(d),
                out_b: Array1::zeros(1),
            }),
            label: LabelHead {
                left: Mlp::zeros(h, dl),
                right: Mlp::zeros(h, dl),
                w: Array3::zeros((labels, dl + 1, dl)),
            },
        }
    }

    /// Random initialization: uniform scaled by fan-in for embeddings and
    /// projections, orthogonal recurrent matrices, zero biaffine forms.
    pub fn init(cfg: &ModelConfig, words: usize, chars: usize, labels: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = ModelParams::zeros(cfg, words, chars, labels);
        fill_uniform(p.word_emb.as_slice_mut().expect("standard layout"), cfg.word_dim, rng);
        fill_uniform(p.char_emb.as_slice_mut().expect("standard layout"), cfg.char_dim, rng);
        let ch = cfg.char_out / 2;
        p.char_lstm = [
            LstmParams::init(cfg.char_dim, ch, rng),
            LstmParams::init(cfg.char_dim, ch, rng),
        ];
        let mut input = cfg.input_dim();
        for layer in p.context.iter_mut() {
            *layer = [
                LstmParams::init(input, cfg.lstm_hidden, rng),
                LstmParams::init(input, cfg.lstm_hidden, rng),
            ];
            input = 2 * cfg.lstm_hidden;
        }
        let h = cfg.state_dim();
        if let Some(b) = p.bracket.as_mut() {
            b.left = Mlp::init(h, cfg.bracket_dim, rng);
            b.right = Mlp::init(h, cfg.bracket_dim, rng);
        }
        if let Some(m) = p.minus.as_mut() {
            m.hidden = Mlp::init(h, cfg.bracket_dim, rng);
            fill_uniform(m.out_w.as_slice_mut().expect("standard layout"), cfg.bracket_dim, rng);
        }
        p.label.left = Mlp::init(h, cfg.label_dim, rng);
        p.label.right = Mlp::init(h, cfg.label_dim, rng);
        p
    }

    /// Same shapes, all zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn fill(&mut self, v: f64) {
        for (_, t) in self.tensors_mut() {
            t.fill(v);
        }
    }

    /// Named views of every tensor with their shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64], Vec<usize>)> {
        fn push<'a, D: Dimension>(out: &mut Vec<(String, &'a [f64], Vec<usize>)>, name: String, a: &'a Array<f64, D>) {
            out.push((name, a.as_slice().expect("standard layout"), a.shape().to_vec()));
        }
        let mut out = Vec::new();
        each_tensor!(self, out, push, iter,);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        fn push<'a, D: Dimension>(out: &mut Vec<(String, &'a mut [f64])>, name: String, a: &'a mut Array<f64, D>) {
            out.push((name, a.as_slice_mut().expect("standard layout")));
        }
        let mut out = Vec::new();
        each_tensor!(self, out, push, iter_mut, mut);
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t, _)| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, a), (_, b, _)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

fn fill_uniform(xs: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng) {
    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
    for x in xs {
        *x = rng.gen_range(-bound..bound);
    }
}

/// A random `k x k` orthogonal matrix: Gram-Schmidt on Gaussian columns.
fn orthogonal(k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((k, k));
    for c in 0..k {
        let mut v: Array1<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for prev in 0..c {
            let u = q.column(prev);
            let proj = u.dot(&v);
            v.scaled_add(-proj, &u);
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(c).assign(&(v / norm));
    }
    q
}
