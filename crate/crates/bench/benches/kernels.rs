use criterion::{criterion_group, criterion_main, Criterion};
use skyrmap_core::euler_lagrange::residual_grid;
use skyrmap_core::stability::{random_field_rule, FieldQuadrature, VariationField};
use skyrmap_core::*;

fn pointwise(c: &mut Criterion) {
    let analytic = make_map("alpha_join(arccos_cos2, 2, 1)").unwrap();
    let fd = make_map("henon(1.4, 0.3)").unwrap();
    let x = [0.4, 1.1, 2.3];
    c.bench_function("analyze_point/analytic", |b| b.iter(|| analyze_point(&analytic, &x).unwrap()));
    c.bench_function("analyze_point/finite_difference", |b| b.iter(|| analyze_point(&fd, &x[..2]).unwrap()));
}

fn integrals(c: &mut Criterion) {
    let map = make_map("gamma_hopf(affine(pi/2, -2), 2)").unwrap();
    let rule = QuadratureRule::product(&map.domain, 16);
    c.bench_function("integrate_energy/gamma_hopf_16", |b| b.iter(|| integrate_energy(&map, &rule, KAPPA_CAL).unwrap()));

    let join = make_map("alpha_join(arccos_cos2, 2, 1)").unwrap();
    let grid = residual_grid(&join, 16);
    c.bench_function("residual_3target/16", |b| b.iter(|| residual_3target(&join, &grid).unwrap()));
}

fn fields(c: &mut Criterion) {
    let chart = make_chart_str("s3_suspension(1)").unwrap();
    let fq = FieldQuadrature::new(&chart, &random_field_rule(&chart)).unwrap();
    let field = VariationField::fourier_random(&chart, 3, 1);
    let mut g = c.benchmark_group("field_integrals");
    g.sample_size(10);
    g.bench_function("fourier_random", |b| b.iter(|| fq.integrals(&field).unwrap()));
    g.finish();
}

criterion_group!(benches, pointwise, integrals, fields);
criterion_main!(benches);
