use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ftb_core::cluster::{gmm_em, kmeans, silhouette_score, ClusterAlgo, CnKind};
use ftb_core::embed::{tfidf_fit_transform, EmbedderConfig, EmbeddingMatrix};
use ftb_core::ingest::ArtifactLibrary;
use ftb_core::tree::{build_tree, SolutionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(n: usize, d: usize, k: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
    let rows = (0..n)
        .map(|i| centers[i % k].iter().map(|c| c + rng.random_range(-0.5..0.5)).collect())
        .collect();
    EmbeddingMatrix::from_rows(rows).unwrap()
}

fn fixture_library() -> ArtifactLibrary {
    ArtifactLibrary::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/library.json").as_ref()).unwrap()
}

fn clustering(c: &mut Criterion) {
    let mut group = c.benchmark_group("cluster");
    for n in [200, 1000] {
        let x = blobs(n, 8, 5, 1);
        group.bench_with_input(BenchmarkId::new("kmeans_k5", n), &x, |b, x| b.iter(|| kmeans(black_box(x), 5, 42, 300, 1e-6).unwrap()));
        group.bench_with_input(BenchmarkId::new("gmm_k5", n), &x, |b, x| b.iter(|| gmm_em(black_box(x), 5, 42, 300, 1e-6).unwrap()));
        let (_, labels) = kmeans(&x, 5, 42, 300, 1e-6).unwrap();
        group.bench_with_input(BenchmarkId::new("silhouette", n), &x, |b, x| b.iter(|| silhouette_score(black_box(x), &labels).unwrap()));
    }
    group.finish();
}

fn text(c: &mut Criterion) {
    let library = fixture_library();
    let texts: Vec<String> = library.artifacts().iter().map(|a| a.description.clone()).collect();
    let many: Vec<String> = (0..20).flat_map(|_| texts.iter().cloned()).collect();
    c.bench_function("tfidf_fit_transform_600", |b| b.iter(|| tfidf_fit_transform(black_box(&many)).unwrap()));
}

fn trees(c: &mut Criterion) {
    let library = fixture_library();
    let mut group = c.benchmark_group("build_tree");
    for (algo, cn) in [(ClusterAlgo::Kmeans, CnKind::Silhouette), (ClusterAlgo::Gmm, CnKind::Bic), (ClusterAlgo::Hierarchical, CnKind::None)] {
        let config = SolutionConfig::new(EmbedderConfig::tfidf(), algo, cn);
        group.bench_function(config.label(), |b| b.iter(|| build_tree(black_box(&library), &config).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, clustering, text, trees);
criterion_main!(benches);
