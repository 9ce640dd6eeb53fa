use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use chipforge::pipeline::{label_records, mine_corpus};
use chipforge::positive::mine_positive;
use chipforge::MiningConfig;
use chipforge_bench::{workload, SEED};

const IMAGES: usize = 200;

fn positive(c: &mut Criterion) {
    let (ds, _) = workload(IMAGES);
    let cfg = MiningConfig::default();
    let gts: Vec<_> = ds.images.iter().map(|i| ds.ground_truth_of(i.id)).collect();
    let mut g = c.benchmark_group("positive");
    g.throughput(Throughput::Elements(IMAGES as u64));
    g.bench_function("mine_positive", |b| {
        b.iter(|| {
            for (img, gt) in ds.images.iter().zip(&gts) {
                std::hint::black_box(mine_positive(img, gt, &cfg.pyramid).unwrap());
            }
        })
    });
    g.finish();
}

fn corpus(c: &mut Criterion) {
    let (ds, props) = workload(IMAGES);
    let cfg = MiningConfig::default();
    let mut g = c.benchmark_group("corpus");
    g.throughput(Throughput::Elements(IMAGES as u64));
    g.bench_function("positive_and_negative", |b| {
        b.iter(|| mine_corpus(&ds, Some(&props), &cfg, SEED, 0).unwrap())
    });
    let chips = mine_corpus(&ds, Some(&props), &cfg, SEED, 0).unwrap();
    g.bench_function("labels", |b| {
        b.iter_batched(
            || chips.positives.clone(),
            |mut records| label_records(&mut records, &props, &cfg.pyramid, 0.5).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = positive, corpus
}
criterion_main!(benches);
