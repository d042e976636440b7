use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gcmac_core::{run, ControlChannel, ControlModel, Scenario, Scheme, SimConfig};

fn config(scheme: Scheme, contended: bool) -> SimConfig {
    let mut cfg = SimConfig::new(Scenario::reference(), scheme, 1, 1e12);
    cfg.max_cycles = Some(1000);
    if contended {
        cfg.control = ControlChannel {
            model: ControlModel::Contended {
                window: 16,
                max_window: 1024,
                loss: 0.0,
            },
            ..ControlChannel::default()
        };
    }
    cfg
}

fn cycles(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_1000_cycles");
    group.sample_size(20);
    for scheme in Scheme::ALL {
        for contended in [false, true] {
            let cfg = config(scheme, contended);
            let name = format!("{scheme}/{}", if contended { "contended" } else { "ideal" });
            group.bench_function(name, |b| b.iter(|| run(black_box(&cfg)).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, cycles);
criterion_main!(benches);
