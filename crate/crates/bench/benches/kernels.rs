use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use readerprop::agents::CandidatePool;
use readerprop::classifier::{FusionHead, FusionSwitches};
use readerprop::graph::{propagate, ViewGraph, ViewId};
use readerprop::tape::{ParamStore, Tape};

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
}

fn propagation(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagate");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in [500, 3500] {
        let edges: Vec<(usize, usize)> = (0..n * 20).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let view = ViewGraph::new(ViewId::Repost, n, edges, random(&mut rng, n, 64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &view, |b, v| b.iter(|| propagate(v, 1)));
    }
    group.finish();
}

fn tfidf(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut sentence = |len: usize| (0..len).map(|_| format!("w{}", rng.random_range(0..2000))).collect::<Vec<_>>().join(" ");
    let docs: Vec<(String, String, String)> = (0..5000).map(|i| (format!("p{i}"), format!("u{}", i % 300), sentence(30))).collect();
    let history = vec![sentence(60), sentence(60)];
    let pool = CandidatePool::new(docs.iter().map(|(a, b, t)| (a.as_str(), b.as_str(), t.as_str())));
    c.bench_function("tfidf rank 5000 docs, k=100", |b| b.iter(|| pool.rank(&history, Some("u7"), 100).unwrap()));
}

fn fusion(c: &mut Criterion) {
    let (n, d1, d2) = (16, 64, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let head = FusionHead::new(&mut store, n, d1, d2, 4, 7, &mut rng);
    let (h_s, h_rf, h_role) = (random(&mut rng, n, d1), random(&mut rng, 3, d1), random(&mut rng, 4, d1));
    let forward = |store: &ParamStore| {
        let mut t = Tape::new();
        let (s, r, e) = (t.constant(h_s.clone()), t.constant(h_rf.clone()), t.constant(h_role.clone()));
        let fused = head.fuse(&mut t, store, s, r, e, FusionSwitches::default());
        let probs = head.predict(&mut t, store, fused.g_o);
        let loss = t.nll(probs, &[3]);
        (t, loss)
    };
    c.bench_function("fusion forward", |b| b.iter(|| forward(&store).1));
    c.bench_function("fusion forward+backward", |b| {
        b.iter(|| {
            let (t, loss) = forward(&store);
            t.backward(loss)
        })
    });
}

criterion_group!(benches, propagation, tfidf, fusion);
criterion_main!(benches);
