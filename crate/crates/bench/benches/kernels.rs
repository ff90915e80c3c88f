use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use kerrwave::evolution::e1::{E1Solver, Grid1D};
use kerrwave::evolution::e2::{E2Solver, Grid2D};
use kerrwave::evolution::InitialDataSpec;
use kerrwave::geometry::{build_radial_maps, KerrParams};
use kerrwave::kernel_oracle::{rect_solution, WeightedSource};
use kerrwave::operators::Nonlinearity;

fn rhs_1d(c: &mut Criterion) {
    let g = Grid1D::with_spacing(-1400.0, 2600.0, 0.1).unwrap();
    let sol = E1Solver::new(1.0, g, 0, Some(Nonlinearity::defocusing(3).unwrap()), 0.02).unwrap();
    let s = sol.init_data(&InitialDataSpec::default()).unwrap();
    let n = s.phi.len();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    c.bench_function("rhs_1d_40k", |bch| bch.iter(|| sol.rhs(black_box(&s.phi), black_box(&s.pi), &mut a, &mut b)));
}

fn rhs_2d(c: &mut Criterion) {
    let p = KerrParams::new(1.0, 0.3).unwrap();
    let maps = build_radial_maps(&p, 8.0).unwrap();
    let g = Grid2D::with_spacing(p.r_e, 140.0, 0.1, 16).unwrap();
    let sol = E2Solver::new(p, &maps, g, None, 0.02).unwrap();
    let s = sol.init_data(&InitialDataSpec::default()).unwrap();
    let n = s.phi.len();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    c.bench_function("rhs_2d_kerr_a03", |bch| bch.iter(|| sol.rhs(black_box(&s.phi), black_box(&s.pi), &mut a, &mut b)));
}

fn duhamel(c: &mut Criterion) {
    let src = WeightedSource::new(3.0, 1.0, 2.05);
    let h = move |s: f64, rho: f64| src.eval(s, rho);
    c.bench_function("rect_solution_t100", |bch| bch.iter(|| rect_solution(black_box(100.0), black_box(50.0), &h).unwrap()));
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(20);
    targets = rhs_1d, rhs_2d, duhamel
}
criterion_main!(kernels);
