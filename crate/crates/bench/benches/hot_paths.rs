use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use telehaptic::haptics::{render_frame, HapticConfig};
use telehaptic::kinematics::{forward_kinematics, solve_ik, ArmModel, IkParams, JointVector};
use telehaptic::protocol::{decode, encode, Packet};
use telehaptic::retargeting::Side;
use telehaptic::sessions::policy::{build_policy, PolicyContext, PolicyKind, PolicySpec, Task};
use telehaptic::sessions::{Loopback, SessionLog};
use telehaptic::simworld::taxelize;
use telehaptic_bench::{control_packet, loaded_frame, one_second_session};

fn wire(c: &mut Criterion) {
    let haptic = Packet::haptic(Side::Left, loaded_frame(7));
    let control = control_packet(7);
    let haptic_bytes = encode(&haptic).unwrap();
    let control_bytes = encode(&control).unwrap();
    c.bench_function("encode_haptic", |b| b.iter(|| encode(black_box(&haptic)).unwrap()));
    c.bench_function("decode_haptic", |b| b.iter(|| decode(black_box(&haptic_bytes)).unwrap()));
    c.bench_function("encode_control", |b| b.iter(|| encode(black_box(&control)).unwrap()));
    c.bench_function("decode_control", |b| b.iter(|| decode(black_box(&control_bytes)).unwrap()));
}

fn haptics(c: &mut Criterion) {
    let cfg = HapticConfig::default();
    let frame = loaded_frame(3);
    c.bench_function("taxelize", |b| b.iter(|| taxelize(black_box(6.3), 11).unwrap()));
    c.bench_function("render_frame", |b| b.iter(|| render_frame(black_box(&frame), &cfg).unwrap()));
}

fn ik(c: &mut Criterion) {
    let arm = ArmModel::default_for(Side::Right);
    let goal = JointVector([0.3, -0.5, 0.2, 1.1, -0.4, 0.6, 0.1]);
    let target = forward_kinematics(&arm, &goal);
    let params = IkParams::default();
    let q0 = JointVector::zeros();
    c.bench_function("forward_kinematics", |b| b.iter(|| forward_kinematics(&arm, black_box(&goal))));
    c.bench_function("solve_ik", |b| b.iter(|| solve_ik(&arm, black_box(&target), &q0, &params)));
}

fn loopback(c: &mut Criterion) {
    let cfg = one_second_session();
    let scene = cfg.scene.resolve().unwrap();
    let ctx = PolicyContext {
        side: Side::Right,
        retarget: cfg.retarget,
        haptic: cfg.haptic,
        scene: scene.clone(),
        control_hz: cfg.rates.control_hz,
    };
    let spec = PolicySpec::new(PolicyKind::HapticClosedLoop, Task::Grasp);
    let mut group = c.benchmark_group("loopback");
    group.sample_size(10);
    group.bench_function("one_second", |b| {
        b.iter_batched(
            || {
                let policy = build_policy(&spec, &ctx).unwrap();
                Loopback::new(&cfg, &scene, policy, SessionLog::disabled(), SessionLog::disabled()).unwrap()
            },
            |l| l.run().unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, wire, haptics, ik, loopback);
criterion_main!(benches);
