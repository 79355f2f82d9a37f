use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use topopt_core::fem::assemble_stiffness;
use topopt_core::fixtures::example_spec;
use topopt_core::grad::{descent_direction, DirectionKind};
use topopt_core::TraceOptions;

fn pipeline(c: &mut Criterion) {
    let setup = example_spec(2).unwrap().build(60, TraceOptions::default()).unwrap();
    let p = &setup.problem;
    let eval = p.evaluate(&setup.g0, &setup.u0).unwrap();

    c.bench_function("assemble_stiffness_60", |b| b.iter(|| assemble_stiffness(&p.mesh)));
    c.bench_function("trace_orbits_60", |b| {
        let fields = p.ops.derivative_fields(&setup.g0);
        b.iter(|| p.trace(&setup.g0, &fields).unwrap())
    });
    c.bench_function("evaluate_60", |b| b.iter(|| p.evaluate(&setup.g0, &setup.u0).unwrap()));
    for kind in [DirectionKind::Adjoint41, DirectionKind::Full42] {
        c.bench_function(&format!("direction_{}_60", kind.name()), |b| {
            b.iter_batched(|| eval.clone(), |ev| descent_direction(p, &ev, kind).unwrap(), BatchSize::LargeInput)
        });
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = pipeline
}
criterion_main!(benches);
