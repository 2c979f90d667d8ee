use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use erz_core::cts::{randomized_zero_test, trial_rng, CtsPlan, ZeroTestTarget};
use erz_core::divfree::{compile_divfree, gadget_network};
use erz_core::geometry::{cells_enumerate, CellExperiment, ConstructibleDesc, SetExpr};
use erz_core::network::{net_eval, random_network, random_rational_activation, Instantiation, NetworkSpec, RandomShape};
use erz_core::{Field, FieldElement, GridSpec, NodeId, SparsePoly};

const P: u64 = 2147483647;

fn network(seed: u64) -> NetworkSpec {
    let k = Field::prime(P).unwrap();
    let mut rng = trial_rng(seed, 0);
    let act = random_rational_activation(k, 3, &mut rng);
    let shape = RandomShape { num_inputs: 2, depth: 4, max_width: 3, max_fan_in: 4 };
    random_network(k, act, shape, &mut rng).unwrap()
}

fn gadget(c: &mut Criterion) {
    let k = Field::prime(31).unwrap();
    let (spec, inst) = gadget_network(k, 2, NodeId::input(1), NodeId::input(2)).unwrap();
    c.bench_function("gadget/all_pairs_f31", |b| {
        b.iter(|| {
            for x in 0..31 {
                for y in 0..31 {
                    black_box(net_eval(&spec, &inst, &[k.from_u64(x), k.from_u64(y)]).unwrap());
                }
            }
        })
    });
}

fn compile(c: &mut Criterion) {
    let spec = network(1);
    c.bench_function("divfree/compile_depth4", |b| b.iter(|| compile_divfree(black_box(&spec)).unwrap()));

    let r = compile_divfree(&spec).unwrap();
    let k = spec.field();
    let mut rng = trial_rng(2, 0);
    let inst = Instantiation::random(&spec, &mut rng);
    let ci = r.instantiate(&inst);
    let x: Vec<FieldElement> = vec![k.sample(&mut rng), k.sample(&mut rng)];
    let mut g = c.benchmark_group("eval");
    g.bench_function("source", |b| b.iter(|| net_eval(&spec, &inst, black_box(&x)).unwrap()));
    g.bench_function("compiled", |b| b.iter(|| net_eval(&r.compiled, &ci, black_box(&x)).unwrap()));
    g.finish();
}

fn zero_test(c: &mut Criterion) {
    let k = Field::prime(P).unwrap();
    let f = SparsePoly::parse(k, 3, "x1*x2*x3 - x1^2 + 7").unwrap();
    let plan = CtsPlan { grid: GridSpec::new(k, 3, 1 << 12).unwrap(), length: 16 };
    let mut seed = 0;
    c.bench_function("cts/randomized_zero_test", |b| {
        b.iter_batched(
            || {
                seed += 1;
                seed
            },
            |s| randomized_zero_test(ZeroTestTarget::Poly(&f), &plan, s).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn cells(c: &mut Criterion) {
    let k = Field::prime(7).unwrap();
    let z = |s: &str| SetExpr::Zero(SparsePoly::parse(k, 3, s).unwrap());
    let exp = CellExperiment::new(
        ConstructibleDesc::affine_space(k, 3),
        vec![z("x1*x2 - x3"), z("x1 + x2 + x3"), z("x3^2 - 2"), z("x1")],
        5,
    )
    .unwrap();
    c.bench_function("geometry/cells_f7_cube", |b| b.iter(|| cells_enumerate(black_box(&exp), 1_000_000).unwrap()));
}

criterion_group!(benches, gadget, compile, zero_test, cells);
criterion_main!(benches);
