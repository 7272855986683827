use cpsim_bench::scenario;
use cpsim_core::desim::{EventKind, EventQueue};
use cpsim_core::gridsim::{init_steady_state, integrate, GridEvent, GridEventKind};
use cpsim_core::orchestrate::network_run;
use cpsim_core::pmustack::ControlPolicy;
use cpsim_core::SimTime;
use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

struct Tick;

impl EventKind for Tick {
    fn label(&self) -> &'static str {
        "tick"
    }
}

fn event_queue(c: &mut Criterion) {
    c.bench_function("desim/schedule_and_drain_10k", |b| {
        b.iter(|| {
            let mut q = EventQueue::new();
            for i in 0..10_000u64 {
                q.schedule(SimTime::from_nanos((i * 7919) % 100_000), Tick).unwrap();
            }
            let stats = q.run_until(SimTime::from_millis(1), |_, _| Ok::<_, std::io::Error>(())).unwrap();
            black_box(stats.processed)
        })
    });
}

fn monitoring_network(c: &mut Criterion) {
    let mut sc = scenario("c1");
    sc.t_end = SimTime::from_secs(1);
    c.bench_function("netsim/c1_monitoring_1s", |b| {
        b.iter(|| black_box(network_run(&sc, ControlPolicy::Off).unwrap().receipts.len()))
    });
}

fn grid_dynamics(c: &mut Criterion) {
    let sc = scenario("c1");
    let trip = [GridEvent { at: SimTime::from_millis(100), kind: GridEventKind::GeneratorTrip { gen_id: 3 } }];
    let mut group = c.benchmark_group("gridsim");
    group.sample_size(20);
    group.bench_function("ieee39_trip_1s", |b| {
        b.iter_batched(
            || init_steady_state(&sc.model).unwrap(),
            |state| black_box(integrate(&sc.model, state, SimTime::from_secs(1), &trip, 30, |_| {}).unwrap()),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, event_queue, monitoring_network, grid_dynamics);
criterion_main!(benches);
