use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dentsim::exec::Execution;
use dentsim::field::{build_field, sample_field, GridSpec, REFERENCE_DIMS};
use dentsim::fixture::{reference_tooth, synthetic_grid, synthetic_outcomes, AccessCavity, ToothShape};
use dentsim::scoring::score_outcomes;
use dentsim::voxel::VoxelGrid;

const MODES: [(&str, Execution); 2] = [("serial", Execution::Serial), ("parallel", Execution::Parallel)];

fn sample_and_mesh(c: &mut Criterion) {
    let tooth = reference_tooth();
    let field = build_field(&tooth).unwrap();
    let grid = GridSpec::fitted(&tooth, &field.kernel(), REFERENCE_DIMS).unwrap();
    let mut group = c.benchmark_group("sample_and_mesh");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                let s = sample_field(&field, &grid, exec);
                (s.voxel_grid(), s.mesh(exec))
            })
        });
    }
    group.finish();
}

fn score_batch(c: &mut Criterion) {
    let grid = synthetic_grid([45, 68, 45]).unwrap();
    let pristine = ToothShape::reference().voxelize(&grid);
    let ideal = AccessCavity::reference().carve(&pristine);
    let outcomes: Vec<(String, VoxelGrid)> = synthetic_outcomes(&pristine, 240, 1)
        .into_iter()
        .enumerate()
        .map(|(i, g)| (format!("o{i:03}"), g))
        .collect();
    let mut group = c.benchmark_group("score_240_outcomes");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| score_outcomes(&outcomes, &ideal, &pristine, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sample_and_mesh, score_batch);
criterion_main!(benches);
