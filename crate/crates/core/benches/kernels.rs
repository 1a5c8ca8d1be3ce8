//! Kernel and end-to-end timings.
//!
//! With the default `parallel` feature every benchmark runs twice: inside a
//! one-thread rayon pool and on the global pool. Build with
//! `--no-default-features` for the sequential code path.

use std::hint::black_box;

use contrastseg::amcp::{AmcpConfig, Engine, PromptKind};
use contrastseg::eval::{evaluate, gen_scenes, Backends, EvalItem, EvalOptions, SuiteOptions};
use contrastseg::morphology::{dilate, rings};
use contrastseg::par;
use contrastseg::{BitMask, IdentityProjector, OraclePainter, PatchStatsProjector, Projector};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn modes() -> Vec<(String, Option<rayon::ThreadPool>)> {
    if !par::is_parallel() {
        return vec![("sequential".into(), None)];
    }
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool");
    vec![
        ("rayon-1".into(), Some(one)),
        (
            format!("rayon-global-{}", rayon::current_num_threads()),
            None,
        ),
    ]
}

fn within<R>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R
where
    R: Send,
{
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn disk(w: usize, h: usize) -> BitMask {
    let (cx, cy, r) = (w as f64 / 2.0, h as f64 / 2.0, w.min(h) as f64 / 3.0);
    BitMask::from_fn(w, h, |x, y| {
        (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r
    })
}

fn kernels(c: &mut Criterion) {
    let mask = disk(512, 512);
    let scene = &gen_scenes(&SuiteOptions {
        n: 1,
        width: 256,
        height: 256,
        ..Default::default()
    })
    .unwrap()[0];
    let projector = PatchStatsProjector::new(8).unwrap();
    let mut g = c.benchmark_group("kernels");
    for (label, pool) in modes() {
        g.bench_function(BenchmarkId::new("dilate_r32_512", &label), |b| {
            b.iter(|| within(&pool, || dilate(black_box(&mask), 32)))
        });
        g.bench_function(BenchmarkId::new("rings_32_512", &label), |b| {
            b.iter(|| within(&pool, || rings(black_box(&mask), 32)))
        });
        g.bench_function(BenchmarkId::new("patchstats_256", &label), |b| {
            b.iter(|| {
                within(&pool, || {
                    projector.project(black_box(&scene.image)).unwrap()
                })
            })
        });
    }
    g.finish();
}

fn engine(c: &mut Criterion) {
    let scenes = gen_scenes(&SuiteOptions {
        n: 4,
        noise_sigma: 0.05,
        ..Default::default()
    })
    .unwrap();
    let items: Vec<EvalItem> = scenes.iter().map(EvalItem::from).collect();
    let cfg = AmcpConfig {
        objective: false,
        ..Default::default()
    };
    let painter = OraclePainter::new(scenes[0].spec.clone());
    let prompt = scenes[0].prompts.get(PromptKind::Box);
    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    for (label, pool) in modes() {
        g.bench_function(BenchmarkId::new("run_box_128", &label), |b| {
            b.iter(|| {
                within(&pool, || {
                    Engine::new(cfg.clone(), &painter, &IdentityProjector)
                        .unwrap()
                        .run(&scenes[0].image, &prompt)
                        .unwrap()
                })
            })
        });
        g.bench_function(BenchmarkId::new("evaluate_4_scenes", &label), |b| {
            b.iter(|| {
                within(&pool, || {
                    evaluate(
                        &items,
                        &cfg,
                        &Backends::default(),
                        &EvalOptions::new(PromptKind::Box),
                    )
                    .unwrap()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, kernels, engine);
criterion_main!(benches);
