use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use hyperdyn_core::blender_verify::{monte_carlo_blender, BlenderChart};
use hyperdyn_core::circle_cover::{cover_circle, parse_rational};
use hyperdyn_core::ifs_blender::search_recurrent_compact;
use hyperdyn_core::katok::{select_return_set, ReturnParams, SymbolicSystem, TestFunction};
use hyperdyn_core::seed::rng_for;
use hyperdyn_core::shadowing::{random_affine_instance, shadow_affine, solve_dense, Boundary};
use hyperdyn_core::subshift::{extract_full_shift, top_entropy};
use hyperdyn_core::{CenterIfs, Sft, StandardAffineHorseshoe};

fn entropy(c: &mut Criterion) {
    let mut g = c.benchmark_group("top_entropy");
    for k in [2usize, 16, 64] {
        let s = Sft::full_shift(k);
        g.bench_with_input(BenchmarkId::from_parameter(k), &s, |b, s| b.iter(|| top_entropy(black_box(s)).unwrap()));
    }
    g.finish();
    c.bench_function("extract_full_shift/full2_eps0.3", |b| {
        let s = Sft::full_shift(2);
        b.iter(|| extract_full_shift(black_box(&s), 0.3, 24).unwrap())
    });
}

fn circle(c: &mut Criterion) {
    let pts: Vec<_> = ["0", "1/1000", "3/1000", "1/3", "2/3", "6667/10000"].iter().map(|s| parse_rational(s).unwrap()).collect();
    let a = parse_rational("1/5").unwrap();
    c.bench_function("cover_circle/d6", |b| b.iter(|| cover_circle(black_box(&pts), &a).unwrap()));
}

fn shadowing(c: &mut Criterion) {
    let mut g = c.benchmark_group("shadow");
    for steps in [100usize, 1000] {
        let mut rng = rng_for(0, "bench-shadow", steps as u64);
        let (seq, po) = random_affine_instance(&mut rng, 1.0, 2, 2, steps, 1e-3);
        g.bench_with_input(BenchmarkId::new("affine", steps), &steps, |b, _| b.iter(|| shadow_affine(&seq, &po, &Boundary::ZeroClamp).unwrap()));
        if steps <= 100 {
            g.bench_with_input(BenchmarkId::new("dense", steps), &steps, |b, _| b.iter(|| solve_dense(&seq, &po, &Boundary::ZeroClamp).unwrap()));
        }
    }
    g.finish();
}

fn blender(c: &mut Criterion) {
    let ifs = CenterIfs::scalar(2.0 / 3.0, &[-1.0 / 6.0, 1.0 / 6.0]);
    c.bench_function("search_recurrent_compact/1000", |b| b.iter(|| search_recurrent_compact(black_box(&ifs), 1000)));
    let h = StandardAffineHorseshoe::overlap_model();
    let k = search_recurrent_compact(&ifs, 1000).set.unwrap();
    let chart = BlenderChart::for_model(&h, Some(&k)).unwrap();
    let mut g = c.benchmark_group("monte_carlo_blender");
    g.sample_size(10);
    g.bench_function("20_graphs", |b| b.iter(|| monte_carlo_blender(&h, &chart, 20, 60, 1e-9, 0).unwrap()));
    g.finish();
}

fn katok(c: &mut Criterion) {
    let sys = SymbolicSystem::with_mme(Sft::full_shift(2), vec![TestFunction::indicator(&[0])]).unwrap();
    let params = ReturnParams { delta: 1.0, xi: 0.2, ..ReturnParams::default() };
    let mut g = c.benchmark_group("katok");
    g.sample_size(10);
    g.bench_function("select_return_set/delta1", |b| b.iter(|| select_return_set(&sys, &params).unwrap()));
    g.finish();
}

criterion_group!(benches, entropy, circle, shadowing, blender, katok);
criterion_main!(benches);
