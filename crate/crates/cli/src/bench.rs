//! Throughput of the full parser and of the decoding kernels, with a
//! one-sentence-at-a-time CKY loop as the baseline for batching.

use std::time::Instant;

use anyhow::Result;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecrf::chart::reference::cky_unbatched;
use treecrf::chart::{cky, mbr_decode, LANES};
use treecrf::parser::{self, Decode, ParseOptions, Stage};
use treecrf::scorer::{Model, ModelConfig};
use treecrf::{LabelVocab, Sentence, SpanChart};

/// Sentences per second; 0 when there was nothing to time.
fn rate(count: usize, seconds: f64) -> f64 {
    if count == 0 || seconds <= 0.0 {
        0.0
    } else {
        count as f64 / seconds
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

/// Decoder throughput over fixed span scores, medians of interleaved runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KernelRates {
    /// Packing plus batched CKY.
    pub viterbi: f64,
    /// Packing plus marginals plus CKY over them.
    pub mbr: f64,
    /// The per-sentence reference loop.
    pub unbatched: f64,
}

impl KernelRates {
    /// Batched over unbatched Viterbi throughput.
    pub fn speedup(&self) -> Option<f64> {
        (self.unbatched > 0.0).then(|| self.viterbi / self.unbatched)
    }
}

/// Times the three decoders `repeats` times each, round-robin, so drift in
/// machine load hits all of them alike.
pub fn kernel_rates(mats: &[Array2<f64>], repeats: usize) -> Result<KernelRates> {
    let n = mats.len();
    if n == 0 {
        return Ok(KernelRates::default());
    }
    let (mut vit, mut mbr, mut unb) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..repeats.max(1) {
        let (r, s) = timed(|| -> Result<usize> {
            let chart = SpanChart::from_matrices(mats)?;
            Ok(cky(&chart)?.trees.len())
        });
        std::hint::black_box(r?);
        vit.push(s);
        let (r, s) = timed(|| -> Result<usize> {
            let chart = SpanChart::from_matrices(mats)?;
            Ok(mbr_decode(&chart)?.trees.len())
        });
        std::hint::black_box(r?);
        mbr.push(s);
        let (r, s) = timed(|| mats.iter().map(|m| cky_unbatched(m).1).sum::<f64>());
        std::hint::black_box(r);
        unb.push(s);
    }
    Ok(KernelRates {
        viterbi: rate(n, median(vit)),
        mbr: rate(n, median(mbr)),
        unbatched: rate(n, median(unb)),
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub sentences: usize,
    pub tokens: usize,
    pub tiles: usize,
    pub max_len: usize,
    /// Scoring, decoding and labeling, sentences per second.
    pub pipeline_viterbi: f64,
    pub pipeline_mbr: f64,
    pub kernel: KernelRates,
    /// Share of sentences whose Viterbi and MBR trees coincide.
    pub agreement: f64,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mean = if self.sentences == 0 {
            0.0
        } else {
            self.tokens as f64 / self.sentences as f64
        };
        writeln!(
            f,
            "sentences {} tokens {} mean length {mean:.1} max length {} tiles {} ({LANES} sentences per tile)",
            self.sentences, self.tokens, self.max_len, self.tiles
        )?;
        writeln!(f, "pipeline viterbi {:.1} sent/s", self.pipeline_viterbi)?;
        writeln!(f, "pipeline mbr {:.1} sent/s", self.pipeline_mbr)?;
        writeln!(f, "kernel viterbi {:.1} sent/s", self.kernel.viterbi)?;
        writeln!(f, "kernel mbr {:.1} sent/s", self.kernel.mbr)?;
        writeln!(f, "kernel unbatched viterbi {:.1} sent/s", self.kernel.unbatched)?;
        match self.kernel.speedup() {
            Some(r) => writeln!(f, "batched/unbatched {r:.2}x")?,
            None => writeln!(f, "batched/unbatched n/a")?,
        }
        write!(f, "viterbi/mbr agreement {:.2}%", 100.0 * self.agreement)
    }
}

/// Benchmarks `model` on `sentences` in two-stage mode.
pub fn run(model: &Model, sentences: &[Sentence], repeats: usize) -> Result<BenchReport> {
    let mut report = BenchReport {
        sentences: sentences.len(),
        tokens: sentences.iter().map(Sentence::len).sum(),
        tiles: sentences.len().div_ceil(LANES),
        max_len: sentences.iter().map(Sentence::len).max().unwrap_or(0),
        ..Default::default()
    };
    if sentences.is_empty() {
        return Ok(report);
    }
    let opts = |decode| ParseOptions {
        decode,
        stage: Stage::Two,
    };
    let (mut pv, mut pm) = (Vec::new(), Vec::new());
    for _ in 0..repeats.max(1) {
        let (r, s) = timed(|| parser::parse(model, sentences, opts(Decode::Viterbi)));
        std::hint::black_box(r?);
        pv.push(s);
        let (r, s) = timed(|| parser::parse(model, sentences, opts(Decode::Mbr)));
        std::hint::black_box(r?);
        pm.push(s);
    }
    report.pipeline_viterbi = rate(sentences.len(), median(pv));
    report.pipeline_mbr = rate(sentences.len(), median(pm));

    let scores = parser::score_all(model, sentences)?;
    let mats: Vec<Array2<f64>> = scores.iter().map(|s| s.spans.clone()).collect();
    report.kernel = kernel_rates(&mats, repeats)?;
    let chart = SpanChart::from_matrices(&mats)?;
    let v = cky(&chart)?.trees;
    let m = mbr_decode(&chart)?.trees;
    report.agreement = v.iter().zip(&m).filter(|(a, b)| a == b).count() as f64 / v.len() as f64;
    Ok(report)
}

/// An untrained model over `sentences` whose biaffine weights are drawn at
/// random too, so that span scores are not all equal.
pub fn random_model(config: ModelConfig, sentences: &[Sentence], labels: LabelVocab, seed: u64) -> Result<Model> {
    let mut model = Model::for_corpus(config, sentences, labels, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1af);
    if let Some(b) = model.params.bracket.as_mut() {
        b.w.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    }
    model.params.label.w.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    Ok(model)
}
