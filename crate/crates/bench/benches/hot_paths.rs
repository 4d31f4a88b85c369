use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;

use polarsim_core::analysis::{coincidences, DetectionOrigin, DetectionRecord};
use polarsim_core::components::SpdcSource;
use polarsim_core::fiber::{self, BirefringenceModel, FiberLink, FiberSection};
use polarsim_core::kernel::EntanglementRegistry;
use polarsim_core::quantum::MeasurementBasis;
use polarsim_core::Timestamp;

fn fiber_link(n_sections: usize) -> FiberLink {
    let sections = (0..n_sections)
        .map(|i| FiberSection {
            length_m: 25_000.0 / n_sections as f64,
            delta_beta_ellip: 0.1 + 0.01 * i as f64,
            twist_rate: 0.05,
            birefringence_model: BirefringenceModel::ConstantDeltaN { delta_n: 1e-7 },
            ..FiberSection::default()
        })
        .collect();
    FiberLink::new(sections, 1550.0)
}

fn bench_fiber(c: &mut Criterion) {
    let mut group = c.benchmark_group("fiber");
    for n in [1usize, 8, 64] {
        let link = fiber_link(n);
        group.bench_with_input(BenchmarkId::new("total_jones", n), &link, |b, link| {
            b.iter(|| fiber::total_jones(black_box(link), 1550.0))
        });
        group.bench_with_input(BenchmarkId::new("dgd", n), &link, |b, link| {
            b.iter(|| fiber::dgd(black_box(link), 1550.0, fiber::DEFAULT_DGD_STEP_NM))
        });
    }
    group.finish();
}

fn bench_measurement(c: &mut Criterion) {
    let source = SpdcSource::new(Default::default());
    c.bench_function("pair_emit_and_measure", |b| {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let basis = MeasurementBasis::x();
        b.iter(|| {
            let mut registry = EntanglementRegistry::new();
            let pairs = source.emit_pairs(Timestamp(0), 64, &mut registry, &mut rng);
            let mut acc = 0u32;
            for (s, i) in pairs {
                for p in [s, i] {
                    if let polarsim_core::kernel::Polarization::Entangled { pair, slot } =
                        p.polarization
                    {
                        acc += registry.measure(pair, slot, &basis, &mut rng) as u32;
                    }
                }
            }
            black_box(acc)
        })
    });
}

fn bench_coincidences(c: &mut Criterion) {
    use rand::Rng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
    let mut stream = |id: u32, n: usize| {
        let mut times: Vec<u64> = (0..n).map(|_| rng.gen_range(0..10_000_000_000u64)).collect();
        times.sort_unstable();
        times
            .into_iter()
            .map(|t| DetectionRecord {
                detector_id: id,
                time: Timestamp(t),
                origin: DetectionOrigin::Photon,
            })
            .collect::<Vec<_>>()
    };
    let a = stream(0, 50_000);
    let b = stream(2, 50_000);
    c.bench_function("coincidences_50k", |bench| {
        bench.iter(|| coincidences(black_box(&a), black_box(&b), 1_000))
    });
}

criterion_group!(benches, bench_fiber, bench_measurement, bench_coincidences);
criterion_main!(benches);
