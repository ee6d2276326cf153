use std::hint::black_box;

use balsam::diagnostics::monte_carlo_inclusion;
use balsam::frame::{grid_frame, GridAux};
use balsam::replicate::draw_replicates;
use balsam::{AuxSelector, DesignConfig, DesignKind, Execution};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn designs(c: &mut Criterion) {
    let frame = grid_frame(30, GridAux::CoordsAndOne).unwrap();
    let coords = vec![AuxSelector::One, AuxSelector::Column("x".into()), AuxSelector::Column("y".into())];
    let cases = [
        ("srs", DesignConfig::new(DesignKind::Srs, 40)),
        ("cps", DesignConfig::new(DesignKind::Cps, 40)),
        ("cube", DesignConfig::new(DesignKind::Cube, 40).with_aux(coords.clone())),
        ("local_pivotal", DesignConfig::new(DesignKind::LocalPivotal, 40)),
        ("grts", DesignConfig::new(DesignKind::Grts, 40)),
        ("local_cube", DesignConfig::new(DesignKind::LocalCube, 40).with_aux(coords)),
    ];
    let mut group = c.benchmark_group("draw_200");
    group.sample_size(10);
    for (name, cfg) in cases {
        let design = cfg.prepare(&frame).unwrap();
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, mode), &exec, |b, &exec| {
                b.iter(|| black_box(draw_replicates(&design, 200, 1, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn inclusion_check(c: &mut Criterion) {
    let frame = grid_frame(10, GridAux::CoordsAndOne).unwrap();
    let design = DesignConfig::new(DesignKind::LocalPivotal, 10).prepare(&frame).unwrap();
    let pi = design.inclusion_probabilities();
    let mut group = c.benchmark_group("inclusion_check_20000");
    group.sample_size(10);
    for (mode, exec) in MODES {
        group.bench_function(mode, |b| {
            b.iter(|| black_box(monte_carlo_inclusion(&design, &pi, 20_000, 2, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, designs, inclusion_check);
criterion_main!(benches);
