//! The neural scorer: words to span scores `s(i, j)` and label scores
//! `s(i, j, l)`, with hand-written reverse-mode gradients.
//!
//! Pipeline per sentence: word embedding and a character encoder per token,
//! stacked bidirectional recurrent layers, boundary states
//! `h_i = f_i ⊕ b_{i+1}`, four boundary projections, then a biaffine form
//! for bracketing and one biaffine per label.

pub(crate) mod file;
mod gradcheck;
mod heads;
mod lstm;
mod params;
mod vocab;

pub use file::FORMAT_VERSION;
pub use gradcheck::{check_gradients, GroupCheck};
pub use heads::LEAKY_SLOPE;
pub use params::{BracketHead, LabelHead, LstmParams, MinusHead, Mlp, ModelConfig, ModelParams, SpanScorer};
pub use vocab::{TokenVocab, PAD, UNK};

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::treebank::{LabelVocab, Sentence};

use heads::{MinusTape, MlpTape};
use lstm::LstmTape;

/// Whether dropout is active. Training draws every mask from the given
/// generator, so a seeded generator makes a training pass reproducible.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    /// Inverted-dropout mask over `n` units, or `None` when nothing drops.
    fn mask(&mut self, n: usize, p: f64) -> Option<Array1<f64>> {
        match self {
            Mode::Train(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                Some((0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect())
            }
            _ => None,
        }
    }

    /// Scale factors `(word, char)` of one input row.
    fn pair(&mut self, p: f64) -> (f64, f64) {
        match self {
            Mode::Train(rng) if p > 0.0 => {
                let w = rng.gen::<f64>() >= p;
                let c = rng.gen::<f64>() >= p;
                match (w, c) {
                    (true, true) => (1.0, 1.0),
                    (true, false) => (2.0, 0.0),
                    (false, true) => (0.0, 2.0),
                    (false, false) => (0.0, 0.0),
                }
            }
            _ => (1.0, 1.0),
        }
    }
}

/// A sentence mapped to vocabulary indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Scores of one sentence: `spans` is `n x n` (upper triangle meaningful),
/// `labels` is `n x n x L`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scores {
    pub spans: Array2<f64>,
    pub labels: Array3<f64>,
}

/// Left and right boundary representations. The bracketing pair is absent
/// under the minus scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryReps {
    pub left: Option<Array2<f64>>,
    pub right: Option<Array2<f64>>,
    pub left_lab: Array2<f64>,
    pub right_lab: Array2<f64>,
}

struct CharTape {
    ids: Vec<usize>,
    fwd: LstmTape,
    bwd: LstmTape,
}

struct LayerTape {
    fwd: LstmTape,
    bwd: LstmTape,
}

/// Embedded input rows, the character tape of each word and the dropout
/// scales of each word's two halves.
type EmbedRun = (Array2<f64>, Vec<CharTape>, Vec<(f64, f64)>);

/// Encoder output, per-layer input masks, layer tapes and the output mask.
type ContextRun = (
    Array2<f64>,
    Vec<Option<Array1<f64>>>,
    Vec<LayerTape>,
    Option<Array1<f64>>,
);

struct HeadTape {
    left: MlpTape,
    right: MlpTape,
    l: Array2<f64>,
    r: Array2<f64>,
}

/// Activations and dropout masks of one recorded forward pass.
pub struct Tape {
    words: Vec<usize>,
    chars: Vec<CharTape>,
    pair: Vec<(f64, f64)>,
    /// Input mask of every context layer after the first.
    in_masks: Vec<Option<Array1<f64>>>,
    layers: Vec<LayerTape>,
    out_mask: Option<Array1<f64>>,
    h: Array2<f64>,
    bracket: Option<HeadTape>,
    minus: Option<MinusTape>,
    label: HeadTape,
}

/// Output of [`Model::forward`].
pub struct Scored {
    pub scores: Scores,
    tape: Option<Tape>,
}

impl Scored {
    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }
}

/// A scorer with its vocabularies.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub words: TokenVocab,
    pub chars: TokenVocab,
    pub labels: LabelVocab,
    /// Seed the parameters were initialized from, kept for provenance.
    pub init_seed: u64,
    pub params: ModelParams,
}

impl Model {
    pub fn new(
        config: ModelConfig,
        words: TokenVocab,
        chars: TokenVocab,
        labels: LabelVocab,
        seed: u64,
    ) -> Result<Self> {
        use rand::SeedableRng;
        config.validate()?;
        if labels.is_empty() {
            return Err(Error::EmptyLabelSet);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&config, words.len(), chars.len(), labels.len(), &mut rng);
        Ok(Model {
            config,
            words,
            chars,
            labels,
            init_seed: seed,
            params,
        })
    }

    /// Vocabularies from the training sentences, then [`Model::new`].
    pub fn for_corpus<'a>(
        config: ModelConfig,
        sentences: impl IntoIterator<Item = &'a Sentence> + Clone,
        labels: LabelVocab,
        seed: u64,
    ) -> Result<Self> {
        let words = TokenVocab::words(sentences.clone().into_iter().map(|s| s.tokens()));
        let chars = TokenVocab::chars(sentences.into_iter().map(|s| s.tokens()));
        Model::new(config, words, chars, labels, seed)
    }

    pub fn encode(&self, sentence: &Sentence) -> Encoded {
        Encoded {
            words: sentence.tokens().iter().map(|w| self.words.lookup(w)).collect(),
            chars: sentence.tokens().iter().map(|w| self.chars.encode_chars(w)).collect(),
        }
    }

    fn char_run(&self, ids: &[usize]) -> Result<(Array1<f64>, CharTape)> {
        if ids.is_empty() {
            return Err(Error::EmptyWord);
        }
        let x = self.params.char_emb.select(Axis(0), ids);
        let fwd = lstm::forward(&self.params.char_lstm[0], x.view(), None);
        let bwd = lstm::forward(&self.params.char_lstm[1], lstm::reversed(x.view()).view(), None);
        let last = ids.len() - 1;
        let out = concatenate![Axis(0), fwd.h.row(last), bwd.h.row(last)];
        Ok((
            out,
            CharTape {
                ids: ids.to_vec(),
                fwd,
                bwd,
            },
        ))
    }

    /// Final forward state and final backward state of the character
    /// encoder, concatenated.
    pub fn char_encode(&self, word: &str) -> Result<Array1<f64>> {
        Ok(self.char_run(&self.chars.encode_chars(word))?.0)
    }

    fn embed_run(&self, enc: &Encoded, mode: &mut Mode) -> Result<EmbedRun> {
        let n = enc.len();
        let dw = self.config.word_dim;
        let mut x = Array2::zeros((n, self.config.input_dim()));
        let mut tapes = Vec::with_capacity(n);
        let mut pair = Vec::with_capacity(n);
        for t in 0..n {
            let (c, tape) = self.char_run(&enc.chars[t])?;
            let (ws, cs) = mode.pair(self.config.dropout);
            x.slice_mut(s![t, ..dw])
                .assign(&(&self.params.word_emb.row(enc.words[t]) * ws));
            x.slice_mut(s![t, dw..]).assign(&(c * cs));
            tapes.push(tape);
            pair.push((ws, cs));
        }
        Ok((x, tapes, pair))
    }

    /// Word embedding ⊕ character encoding per token. In training each half
    /// of a row is dropped as a whole; a lone survivor is doubled.
    pub fn embed(&self, sentence: &Sentence, mode: &mut Mode) -> Result<Array2<f64>> {
        Ok(self.embed_run(&self.encode(sentence), mode)?.0)
    }

    fn context_run(&self, x: Array2<f64>, mode: &mut Mode) -> ContextRun {
        let p = self.config.dropout;
        let hd = self.config.lstm_hidden;
        let n = x.nrows();
        let mut input = x;
        let mut in_masks = Vec::new();
        let mut layers = Vec::new();
        for (k, lp) in self.params.context.iter().enumerate() {
            if k > 0 {
                let m = mode.mask(input.ncols(), p);
                if let Some(m) = &m {
                    input *= m;
                }
                in_masks.push(m);
            }
            let (mf, mb) = (mode.mask(hd, p), mode.mask(hd, p));
            let fwd = lstm::forward(&lp[0], input.view(), mf);
            let bwd = lstm::forward(&lp[1], lstm::reversed(input.view()).view(), mb);
            input = concatenate![Axis(1), fwd.h, lstm::reversed(bwd.h.view())];
            layers.push(LayerTape { fwd, bwd });
        }
        let Some(last) = layers.last() else {
            return (input, in_masks, layers, None);
        };
        // h_i = f_i ⊕ b_{i+1}; b_n is the zero initial state
        let mut h = Array2::zeros((n, 2 * hd));
        h.slice_mut(s![.., ..hd]).assign(&last.fwd.h);
        for i in 0..n - 1 {
            h.slice_mut(s![i, hd..]).assign(&last.bwd.h.row(n - 2 - i));
        }
        let out_mask = mode.mask(2 * hd, p);
        if let Some(m) = &out_mask {
            h *= m;
        }
        (h, in_masks, layers, out_mask)
    }

    /// Boundary states `h_i = f_i ⊕ b_{i+1}` of the top recurrent layer, or
    /// the inputs themselves when there are no recurrent layers.
    pub fn encode_context(&self, inputs: Array2<f64>, mode: &mut Mode) -> Array2<f64> {
        self.context_run(inputs, mode).0
    }

    fn head_run(left: &Mlp, right: &Mlp, h: &Array2<f64>, p: f64, mode: &mut Mode) -> HeadTape {
        let (l, lt) = heads::mlp_forward(left, h.view(), mode.mask(left.b.len(), p));
        let (r, rt) = heads::mlp_forward(right, h.view(), mode.mask(right.b.len(), p));
        HeadTape {
            left: lt,
            right: rt,
            l,
            r,
        }
    }

    pub fn boundary_project(&self, h: &Array2<f64>) -> BoundaryReps {
        let mut eval = Mode::Eval;
        let b = self
            .params
            .bracket
            .as_ref()
            .map(|b| Self::head_run(&b.left, &b.right, h, 0.0, &mut eval));
        let lab = Self::head_run(&self.params.label.left, &self.params.label.right, h, 0.0, &mut eval);
        let (left, right) = match b {
            Some(t) => (Some(t.l), Some(t.r)),
            None => (None, None),
        };
        BoundaryReps {
            left,
            right,
            left_lab: lab.l,
            right_lab: lab.r,
        }
    }

    /// `s(i, j) = [r_i^l; 1]^T W r_j^r`. Needs the biaffine scorer.
    pub fn span_scores(&self, reps: &BoundaryReps) -> Result<Array2<f64>> {
        match (&self.params.bracket, &reps.left, &reps.right) {
            (Some(b), Some(l), Some(r)) => Ok(heads::biaffine(l, b.w.view(), r)),
            _ => Err(Error::Config("span_scores needs the biaffine span scorer".into())),
        }
    }

    /// `s(i, j, l)` with one biaffine per label.
    pub fn label_scores(&self, reps: &BoundaryReps) -> Array3<f64> {
        heads::label_biaffine(&reps.left_lab, &self.params.label.w, &reps.right_lab)
    }

    /// `s(i, j) = MLP(h_i - h_j)`. Needs the minus scorer.
    pub fn minus_span_scores(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        let m = self
            .params
            .minus
            .as_ref()
            .ok_or_else(|| Error::Config("minus_span_scores needs the minus span scorer".into()))?;
        Ok(heads::minus_forward(m, h.view()).0)
    }

    /// Eval-mode scores of one sentence.
    pub fn score(&self, sentence: &Sentence) -> Result<Scores> {
        Ok(self.forward(&self.encode(sentence), &mut Mode::Eval, false)?.scores)
    }

    /// Scores `enc`; with `record` the activations are kept for
    /// [`Model::backward`].
    pub fn forward(&self, enc: &Encoded, mode: &mut Mode, record: bool) -> Result<Scored> {
        if enc.is_empty() {
            return Err(Error::EmptySentence);
        }
        let p = self.config.dropout;
        let (x, chars, pair) = self.embed_run(enc, mode)?;
        let (h, in_masks, layers, out_mask) = self.context_run(x, mode);
        let bracket = self
            .params
            .bracket
            .as_ref()
            .map(|b| Self::head_run(&b.left, &b.right, &h, p, mode));
        let label = Self::head_run(&self.params.label.left, &self.params.label.right, &h, p, mode);
        let (spans, minus) = match (&bracket, &self.params.bracket, &self.params.minus) {
            (Some(t), Some(b), _) => (heads::biaffine(&t.l, b.w.view(), &t.r), None),
            (_, _, Some(m)) => {
                let (s, t) = heads::minus_forward(m, h.view());
                (s, Some(t))
            }
            _ => unreachable!("a span scorer is always present"),
        };
        let labels = heads::label_biaffine(&label.l, &self.params.label.w, &label.r);
        let tape = record.then(|| Tape {
            words: enc.words.clone(),
            chars,
            pair,
            in_masks,
            layers,
            out_mask,
            h,
            bracket,
            minus,
            label,
        });
        Ok(Scored {
            scores: Scores { spans, labels },
            tape,
        })
    }

    /// Accumulates into `grad` the parameter gradients of a loss whose
    /// derivatives w.r.t. the span and label scores are `d_spans` and
    /// `d_labels`.
    pub fn backward(
        &self,
        scored: &Scored,
        d_spans: ArrayView2<f64>,
        d_labels: ArrayView3<f64>,
        grad: &mut ModelParams,
    ) -> Result<()> {
        let tape = scored.tape.as_ref().ok_or(Error::NoTape)?;
        if d_spans.dim() != scored.scores.spans.dim() || d_labels.dim() != scored.scores.labels.dim() {
            return Err(Error::Shape(format!(
                "adjoints {:?} and {:?} for scores {:?} and {:?}",
                d_spans.dim(),
                d_labels.dim(),
                scored.scores.spans.dim(),
                scored.scores.labels.dim()
            )));
        }
        let p = &self.params;
        let h = &tape.h;
        let mut dh = Array2::zeros(h.raw_dim());

        if let (Some(t), Some(b), Some(gb)) = (&tape.bracket, &p.bracket, grad.bracket.as_mut()) {
            let (dl, dr) = heads::biaffine_backward(&t.l, b.w.view(), &t.r, d_spans, gb.w.view_mut());
            dh += &heads::mlp_backward(&b.left, h.view(), &t.left, &dl, &mut gb.left);
            dh += &heads::mlp_backward(&b.right, h.view(), &t.right, &dr, &mut gb.right);
        }
        if let (Some(t), Some(m), Some(gm)) = (&tape.minus, &p.minus, grad.minus.as_mut()) {
            dh += &heads::minus_backward(m, h.view(), t, d_spans, gm);
        }
        let t = &tape.label;
        let (dl, dr) = heads::label_biaffine_backward(&t.l, &p.label.w, &t.r, &d_labels.to_owned(), &mut grad.label.w);
        dh += &heads::mlp_backward(&p.label.left, h.view(), &t.left, &dl, &mut grad.label.left);
        dh += &heads::mlp_backward(&p.label.right, h.view(), &t.right, &dr, &mut grad.label.right);

        let dx = self.context_backward(tape, dh, grad);
        self.embed_backward(tape, dx, grad);
        Ok(())
    }

    fn context_backward(&self, tape: &Tape, mut dh: Array2<f64>, grad: &mut ModelParams) -> Array2<f64> {
        let Some(top) = tape.layers.len().checked_sub(1) else {
            return dh;
        };
        let hd = self.config.lstm_hidden;
        let n = dh.nrows();
        if let Some(m) = &tape.out_mask {
            dh *= m;
        }
        // undo the fencepost composition into per-token outputs [f_t; b_t]
        let mut dy = Array2::zeros((n, 2 * hd));
        dy.slice_mut(s![.., ..hd]).assign(&dh.slice(s![.., ..hd]));
        dy.slice_mut(s![1.., hd..]).assign(&dh.slice(s![..n - 1, hd..]));
        for k in (0..=top).rev() {
            let lt = &tape.layers[k];
            let lp = &self.params.context[k];
            let gl = &mut grad.context[k];
            let dxf = lstm::backward(&lp[0], &lt.fwd, dy.slice(s![.., ..hd]), &mut gl[0]);
            let db = lstm::reversed(dy.slice(s![.., hd..]));
            let dxb = lstm::backward(&lp[1], &lt.bwd, db.view(), &mut gl[1]);
            dy = dxf + lstm::reversed(dxb.view());
            if k > 0 {
                if let Some(m) = &tape.in_masks[k - 1] {
                    dy *= m;
                }
            }
        }
        dy
    }

    fn embed_backward(&self, tape: &Tape, dx: Array2<f64>, grad: &mut ModelParams) {
        let dw = self.config.word_dim;
        let ch = self.config.char_out / 2;
        for (t, ct) in tape.chars.iter().enumerate() {
            let (ws, cs) = tape.pair[t];
            if ws != 0.0 {
                grad.word_emb
                    .row_mut(tape.words[t])
                    .scaled_add(ws, &dx.slice(s![t, ..dw]));
            }
            if cs == 0.0 {
                continue;
            }
            let dc = dx.slice(s![t, dw..]);
            let len = ct.ids.len();
            let mut dhf = Array2::zeros((len, ch));
            dhf.row_mut(len - 1).assign(&(&dc.slice(s![..ch]) * cs));
            let mut dhb = Array2::zeros((len, ch));
            dhb.row_mut(len - 1).assign(&(&dc.slice(s![ch..]) * cs));
            let dxf = lstm::backward(&self.params.char_lstm[0], &ct.fwd, dhf.view(), &mut grad.char_lstm[0]);
            let dxb = lstm::backward(&self.params.char_lstm[1], &ct.bwd, dhb.view(), &mut grad.char_lstm[1]);
            for (k, &id) in ct.ids.iter().enumerate() {
                let mut row = grad.char_emb.row_mut(id);
                row += &dxf.row(k);
                row += &dxb.row(len - 1 - k);
            }
        }
    }
}
