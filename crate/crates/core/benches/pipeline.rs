//! Feature extraction and training, run on a one-thread rayon pool and on the
//! default pool. Build with `--no-default-features` for the plain sequential
//! code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kinship_core::dataset::{sample_negatives_for, synth_family, SynthSpec};
use kinship_core::gabor::{BankConfig, BlockGrid, FeatureExtractor, GaborBank};
use kinship_core::preprocess::{preprocess_image, GrayImage, Method, PreprocConfig};
use kinship_core::txqda::{train_txqda, TrainTensors, TxqdaConfig};

fn faces(n: usize) -> (Vec<GrayImage>, Vec<u64>) {
    let spec = SynthSpec {
        n_families: n,
        ..SynthSpec::default()
    };
    let pcfg = PreprocConfig::default().with_method(Method::RetinexMask);
    let mut images = Vec::new();
    for fam in 0..n as u64 {
        let (p, c) = synth_family(&spec, fam);
        images.push(preprocess_image(&p, &pcfg).unwrap());
        images.push(preprocess_image(&c, &pcfg).unwrap());
    }
    (images, (0..n as u64).collect())
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn bench_pipeline(c: &mut Criterion) {
    let cfg = BankConfig::default();
    let (h, w) = PreprocConfig::default().crop_size();
    let bank = GaborBank::from_config(&cfg).unwrap();
    let grid = BlockGrid::for_counts(h, w, cfg.blocks.0, cfg.blocks.1).unwrap();
    let extractor = FeatureExtractor::new(&bank, grid, h, w).unwrap();
    let (images, families) = faces(16);

    let tensors = extractor.extract_batch(&images).unwrap();
    let (parents, children): (Vec<_>, Vec<_>) = tensors
        .chunks(2)
        .map(|pc| (pc[0].to_tensor(), pc[1].to_tensor()))
        .unzip();
    let data = TrainTensors::new(parents, children, families.clone(), families.clone()).unwrap();
    let pairs = sample_negatives_for(&families, 1, 1).unwrap();
    let txqda = TxqdaConfig::default();

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("extract_32_images", name), |b| {
            b.iter(|| pool.install(|| extractor.extract_batch(&images).unwrap()))
        });
        group.bench_function(BenchmarkId::new("train_16_families", name), |b| {
            b.iter(|| pool.install(|| train_txqda(&data, &pairs, &txqda).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
