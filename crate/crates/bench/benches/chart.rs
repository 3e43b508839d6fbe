use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use treecrf::chart::reference::{cky_unbatched, inside_unbatched};
use treecrf::chart::{cky, inside, marginals, mbr_decode};
use treecrf::parser::{self, Decode, ParseOptions, Stage};
use treecrf::scorer::ModelConfig;
use treecrf::SpanChart;
use treecrf_bench::{random_model, score_matrices, sentences};

const BATCH: usize = 512;

fn kernels(c: &mut Criterion) {
    for len in [10, 20, 40] {
        let mats = score_matrices(BATCH, len, 1);
        let chart = SpanChart::from_matrices(&mats).unwrap();
        let mut g = c.benchmark_group(format!("chart/n{len}"));
        g.throughput(Throughput::Elements(BATCH as u64));
        g.bench_function("pack", |b| {
            b.iter(|| SpanChart::from_matrices(black_box(&mats)).unwrap())
        });
        g.bench_function("inside", |b| b.iter(|| inside(black_box(&chart)).unwrap()));
        g.bench_function("inside_unbatched", |b| {
            b.iter(|| mats.iter().map(inside_unbatched).sum::<f64>())
        });
        g.bench_function("marginals", |b| b.iter(|| marginals(black_box(&chart)).unwrap()));
        g.bench_function("cky", |b| b.iter(|| cky(black_box(&chart)).unwrap()));
        g.bench_function("cky_unbatched", |b| {
            b.iter(|| mats.iter().map(|m| cky_unbatched(m).1).sum::<f64>())
        });
        g.bench_function("mbr", |b| b.iter(|| mbr_decode(black_box(&chart)).unwrap()));
        g.finish();
    }
}

fn batch_size(c: &mut Criterion) {
    let mut g = c.benchmark_group("cky/batch");
    for count in [1, 8, 64, 512] {
        let chart = SpanChart::from_matrices(&score_matrices(count, 20, 2)).unwrap();
        g.throughput(Throughput::Elements(count as u64));
        g.bench_with_input(BenchmarkId::from_parameter(count), &chart, |b, chart| {
            b.iter(|| cky(black_box(chart)).unwrap())
        });
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let sents = sentences(64, 20, 3);
    let model = random_model(ModelConfig::default(), &sents, 3);
    let mut g = c.benchmark_group("parse");
    g.sample_size(10);
    g.throughput(Throughput::Elements(sents.len() as u64));
    g.bench_function("score", |b| {
        b.iter(|| parser::score_all(&model, black_box(&sents)).unwrap())
    });
    for decode in [Decode::Viterbi, Decode::Mbr] {
        let opts = ParseOptions {
            decode,
            stage: Stage::Two,
        };
        g.bench_function(format!("end_to_end/{decode}"), |b| {
            b.iter(|| parser::parse(&model, black_box(&sents), opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, kernels, batch_size, pipeline);
criterion_main!(benches);
