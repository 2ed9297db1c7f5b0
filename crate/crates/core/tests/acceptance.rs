//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use telehaptic::experiments::{emit_report, run_experiment, ExperimentOptions, ExperimentResult, TrialRecord, EXPERIMENTS};
use telehaptic::haptics::{aggregate_force, render_frame, GloveCommand, HapticConfig, HapticFrame, TaxelMatrix, FINGER_COUNT};
use telehaptic::kinematics::{forward_kinematics, jacobian, solve_ik, ArmModel, IkParams, JointVector, JOINT_COUNT};
use telehaptic::protocol::{
    decode, encode, Message, ObjectKindCode, ObjectSnapshot, Packet, PenSnapshot, ProtocolError, RateSpec, Role,
    SceneSnapshot, SideSnapshot, HEADER_LEN,
};
use telehaptic::retargeting::{
    apply_to_robot, calibrate, relative_pose, EndEffectorTarget, HandPose, RelativePose, RetargetConfig, RobotHome,
    Side, WristSample,
};
use telehaptic::sessions::policy::{build_policy, PolicyContext, PolicyKind, PolicySpec, Task};
use telehaptic::sessions::{Loopback, SceneSpec, SessionConfig, SessionLog};
use telehaptic::{Rot3, Vec3};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rotation(rng: &mut ChaCha8Rng) -> Rot3 {
    let v = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    Rot3::from_quaternion(&UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(v)))
}

fn vector(rng: &mut ChaCha8Rng, half: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-half..half))
}

fn haptics_equations() -> Outcome {
    let full = TaxelMatrix::filled(3000);
    let f = aggregate_force(&full);
    ensure(f == 16.0, || format!("all-3000 matrix gives {f} N"))?;

    let cfg = HapticConfig::default();
    let mut r = rng(101);
    let mut violations = 0;
    let mut clamped = 0;
    for _ in 0..10_000 {
        let mut frame = HapticFrame::default();
        for t in frame.fingers.iter_mut() {
            let cap: u16 = if r.random_bool(0.5) { u16::MAX } else { 2000 };
            for c in t.0.iter_mut().flatten() {
                *c = r.random_range(0..=cap);
            }
        }
        let cmd = render_frame(&frame, &cfg).map_err(|e| e.to_string())?;
        for i in 0..FINGER_COUNT {
            let sum: u64 = frame.fingers[i].0.iter().flatten().map(|&c| u64::from(c)).sum();
            let expected = (sum as f64 / 3000.0 * cfg.force_arm[i]).min(0.5);
            if cmd.tau[i] > 0.5 || (cmd.tau[i] - expected).abs() > 1e-12 {
                violations += 1;
            }
            clamped += usize::from(cmd.tau[i] == 0.5);
        }
    }
    ensure(violations == 0, || format!("{violations} torque violations"))?;
    ensure(clamped > 0, || "no frame reached the clamp".into())?;
    Ok(format!("16.0 N exact; 10000 frames, {clamped} clamped fingers, 0 violations"))
}

fn homogeneous(p: &Vec3, r: &Rot3) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(p);
    m
}

fn retargeting_oracle() -> Outcome {
    let mut r = rng(202);
    let (mut worst_p, mut worst_r) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let calib_sample = WristSample {
            p_now: vector(&mut r, 1.0),
            r_gn: rotation(&mut r),
            t_us: 0,
        };
        let sample = WristSample {
            p_now: vector(&mut r, 1.0),
            r_gn: rotation(&mut r),
            t_us: 1,
        };
        let home = RobotHome {
            k_init: vector(&mut r, 0.5),
            q_gl: rotation(&mut r),
        };
        let cfg = RetargetConfig {
            scale: if i % 2 == 0 { 1.0 } else { r.random_range(0.5..2.0) },
            left_home: home,
            right_home: home,
        };
        let calib = calibrate(&calib_sample);
        let rel = relative_pose(&calib, &sample).map_err(|e| e.to_string())?;
        let got = apply_to_robot(&home, &rel, &cfg);

        // Oracle: T_target = T_home · S · T_calib⁻¹ · T_now with S scaling translation only.
        let t_calib = homogeneous(&calib_sample.p_now, &calib_sample.r_gn);
        let t_now = homogeneous(&sample.p_now, &sample.r_gn);
        let mut local = t_calib.try_inverse().ok_or("singular calibration")? * t_now;
        for k in 0..3 {
            local[(k, 3)] *= cfg.scale;
        }
        let want = homogeneous(&home.k_init, &home.q_gl) * local;
        let dp = (got.k_now - want.fixed_view::<3, 1>(0, 3)).norm();
        let dr = (got.q_gn.matrix() - want.fixed_view::<3, 3>(0, 0)).norm();
        worst_p = worst_p.max(dp);
        worst_r = worst_r.max(dr);

        let still = apply_to_robot(&home, &relative_pose(&calib, &calib_sample).map_err(|e| e.to_string())?, &cfg);
        ensure(still.k_now == home.k_init, || format!("stationary wrist moved the target: {:?}", still.k_now - home.k_init))?;
        let dq = (still.q_gn.matrix() - home.q_gl.matrix()).norm();
        ensure(dq < 1e-14, || format!("stationary wrist rotated the target by {dq:.2e}"))?;
    }
    ensure(worst_p < 1e-9 && worst_r < 1e-9, || format!("max error {worst_p:.2e} m, {worst_r:.2e}"))?;
    Ok(format!("1000 triples, max error {worst_p:.1e} m / {worst_r:.1e}"))
}

fn random_q(model: &ArmModel, r: &mut ChaCha8Rng, fraction: f64) -> JointVector {
    JointVector(std::array::from_fn(|i| {
        let [lo, hi] = model.joints[i].limits;
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo) * fraction);
        r.random_range(mid - half..mid + half)
    }))
}

fn rotation_log(m: &Matrix3<f64>) -> Vec3 {
    let q = UnitQuaternion::from_matrix(m);
    q.scaled_axis()
}

fn kinematics() -> Outcome {
    let arm = ArmModel::default_for(Side::Right);
    let mut r = rng(303);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let q = random_q(&arm, &mut r, 1.0);
        let jac = jacobian(&arm, &q);
        let mut fd = jac;
        for j in 0..JOINT_COUNT {
            let (mut qp, mut qm) = (q, q);
            qp.0[j] += h;
            qm.0[j] -= h;
            let (a, b) = (forward_kinematics(&arm, &qp), forward_kinematics(&arm, &qm));
            let dp = (a.position - b.position) / (2.0 * h);
            let w = rotation_log(&(a.orientation.matrix() * b.orientation.matrix().transpose())) / (2.0 * h);
            for k in 0..3 {
                fd[(k, j)] = dp[k];
                fd[(k + 3, j)] = w[k];
            }
        }
        worst = worst.max((jac - fd).norm() / jac.norm());
    }
    ensure(worst < 1e-5, || format!("Jacobian relative error {worst:.2e}"))?;

    let params = IkParams::default();
    let mut ok = 0;
    for _ in 0..100 {
        let q_true = random_q(&arm, &mut r, 0.8);
        let target = forward_kinematics(&arm, &q_true);
        let mut seed = q_true;
        for v in seed.0.iter_mut() {
            *v += r.random_range(-0.1..0.1);
        }
        if let Ok(sol) = solve_ik(&arm, &target, &seed, &params) {
            let pose = forward_kinematics(&arm, &sol.q);
            let dp = (pose.position - target.position).norm();
            let dr = pose.orientation.angle_to(&target.orientation);
            ok += usize::from(dp < 1e-4 && dr < 1e-3);
        }
    }
    ensure(ok >= 95, || format!("FK∘IK round trips {ok}/100"))?;
    Ok(format!("Jacobian rel error {worst:.1e}; FK∘IK {ok}/100"))
}

fn side(r: &mut ChaCha8Rng) -> Side {
    if r.random_bool(0.5) {
        Side::Left
    } else {
        Side::Right
    }
}

fn hand(r: &mut ChaCha8Rng) -> HandPose {
    HandPose {
        bend: std::array::from_fn(|_| r.random_range(0.0..=1.0)),
        thumb_split: r.random_range(0.0..=1.0),
    }
}

fn target(r: &mut ChaCha8Rng) -> EndEffectorTarget {
    EndEffectorTarget {
        k_now: vector(r, 1.0),
        q_gn: rotation(r),
    }
}

fn scene(r: &mut ChaCha8Rng) -> SceneSnapshot {
    SceneSnapshot {
        sides: (0..r.random_range(0..=2))
            .map(|_| SideSnapshot {
                side: side(r),
                hand: hand(r),
                target: target(r),
                achieved_position: vector(r, 1.0),
                achieved_orientation: rotation(r),
                ik_ok: r.random_bool(0.5),
                contact_mask: r.random_range(0..32),
            })
            .collect(),
        objects: (0..r.random_range(0..4))
            .map(|i| ObjectSnapshot {
                name: format!("o{i}_{}", r.random_range(0..10_000)),
                kind: [ObjectKindCode::Rigid, ObjectKindCode::Deformable, ObjectKindCode::Pen][r.random_range(0..3)],
                indentation_mm: r.random_range(0.0..10.0),
                position: vector(r, 1.0),
                held: r.random_bool(0.5),
            })
            .collect(),
        pen: r.random_bool(0.5).then(|| PenSnapshot {
            theta: r.random_range(-3.0..3.0),
            omega: r.random_range(-10.0..10.0),
            dropped: r.random_bool(0.1),
        }),
        box_present: r.random_bool(0.3),
        deformation_total_mm: r.random_range(0.0..20.0),
        deformation_entries: r.random_range(0..100),
    }
}

fn packet(r: &mut ChaCha8Rng) -> Packet {
    let seq: u32 = r.random();
    let t_us = r.random_range(0..u64::MAX / 2);
    let message = match r.random_range(0..8) {
        0 => Message::Hello {
            role: [Role::Robot, Role::Operator, Role::Bridge][r.random_range(0..3)],
            rates: RateSpec {
                control_hz: r.random_range(1.0..1000.0),
                haptic_hz: r.random_range(1.0..1000.0),
                scene_hz: r.random_range(1.0..1000.0),
            },
        },
        1 => Message::Control {
            side: side(r),
            pose: RelativePose {
                p_l: vector(r, 1.0),
                r_ln: rotation(r),
            },
            hand: hand(r),
        },
        2 => {
            let mut frame = HapticFrame {
                seq,
                t_us,
                ..Default::default()
            };
            for c in frame.fingers.iter_mut().flat_map(|t| t.0.iter_mut().flatten()) {
                *c = r.random();
            }
            return Packet::haptic(side(r), frame);
        }
        3 => Message::Scene(scene(r)),
        4 => Message::Glove {
            side: side(r),
            command: GloveCommand {
                tau: std::array::from_fn(|_| r.random_range(0.0..0.5)),
            },
        },
        5 => Message::Wrist {
            side: side(r),
            sample: WristSample {
                p_now: vector(r, 2.0),
                r_gn: rotation(r),
                t_us,
            },
        },
        6 => Message::Target {
            side: side(r),
            target: target(r),
        },
        _ => Message::HandState { side: side(r), hand: hand(r) },
    };
    Packet::new(seq, t_us, message)
}

fn session_config(duration: f64) -> SessionConfig {
    SessionConfig {
        scene: SceneSpec::Named("soft_bottle".into()),
        duration_s: duration,
        ..Default::default()
    }
}

fn protocol() -> Outcome {
    let mut r = rng(404);
    let mut frames = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let p = packet(&mut r);
        let bytes = encode(&p).map_err(|e| e.to_string())?;
        let (back, used) = decode(&bytes).map_err(|e| e.to_string())?;
        ensure(used == bytes.len() && back == p, || format!("round trip changed {p:?}"))?;
        frames.push(bytes);
    }

    // Truncation must report a short frame; corruption may decode or fail,
    // but only with a ProtocolError.
    let mut errors = [0usize; 8];
    let mut tally = |e: &ProtocolError| {
        errors[match e {
            ProtocolError::BadMagic => 0,
            ProtocolError::BadVersion(_) => 1,
            ProtocolError::TruncatedFrame { .. } => 2,
            ProtocolError::UnknownType(_) => 3,
            ProtocolError::LengthMismatch { .. } => 4,
            ProtocolError::InvalidField(_) => 5,
            ProtocolError::PayloadTooLarge(_) => 6,
            ProtocolError::InconsistentHeader => 7,
        }] += 1
    };
    for bytes in frames.iter().take(2000) {
        let cut = r.random_range(0..bytes.len());
        match catch_unwind(|| decode(&bytes[..cut])) {
            Ok(Err(e @ ProtocolError::TruncatedFrame { .. })) => tally(&e),
            Ok(other) => return Err(format!("truncated at {cut}/{}: {other:?}", bytes.len())),
            Err(_) => return Err("decode panicked on a truncated frame".into()),
        }
        for _ in 0..4 {
            let mut bad = bytes.clone();
            for _ in 0..r.random_range(1..4) {
                let i = r.random_range(0..bad.len());
                bad[i] ^= r.random_range(1..=255u8);
            }
            match catch_unwind(AssertUnwindSafe(|| decode(&bad))) {
                Ok(Ok(_)) => {}
                Ok(Err(e)) => tally(&e),
                Err(_) => return Err("decode panicked on a corrupted frame".into()),
            }
        }
    }
    for _ in 0..2000 {
        let junk: Vec<u8> = (0..r.random_range(0..HEADER_LEN * 4)).map(|_| r.random()).collect();
        match catch_unwind(|| decode(&junk)) {
            Ok(Ok(_)) => {}
            Ok(Err(e)) => tally(&e),
            Err(_) => return Err("decode panicked on random bytes".into()),
        }
    }

    let cfg = session_config(10.0);
    let scene = cfg.scene.resolve().map_err(|e| e.to_string())?;
    let ctx = PolicyContext {
        side: Side::Right,
        retarget: cfg.retarget,
        haptic: cfg.haptic,
        scene: scene.clone(),
        control_hz: cfg.rates.control_hz,
    };
    let spec = PolicySpec {
        closure_rate: 0.1,
        max_bend: 0.6,
        ..PolicySpec::new(PolicyKind::ScriptedTrajectory, Task::Closure)
    };
    let policy = build_policy(&spec, &ctx).map_err(|e| e.to_string())?;
    let out = Loopback::new(&cfg, &scene, policy, SessionLog::disabled(), SessionLog::disabled())
        .and_then(|l| l.run())
        .map_err(|e| e.to_string())?;
    let (control, haptic) = (out.robot.controls_received, out.operator.haptic_received);
    ensure(control.abs_diff(5001) <= 1 && haptic.abs_diff(621) <= 1, || {
        format!("10 s loopback: {control} control, {haptic} haptic")
    })?;
    Ok(format!("10000 round trips; fuzz errors {errors:?}; 10 s loopback {control} control / {haptic} haptic"))
}

fn report(result: &ExperimentResult, dir: &Path) -> Result<Vec<TrialRecord>, String> {
    emit_report(std::slice::from_ref(result), dir).map_err(|e| e.to_string())?;
    let mut r = csv::Reader::from_path(dir.join(format!("{}.csv", result.name))).map_err(|e| e.to_string())?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| e.to_string())
}

fn run(name: &str, trials: Option<u32>, seed: u64) -> Result<ExperimentResult, String> {
    run_experiment(name, &ExperimentOptions { trials, seed }).map_err(|e| e.to_string())
}

fn least_squares(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy, sxx, sxy) = points
        .iter()
        .fold((0.0, 0.0, 0.0, 0.0), |a, &(x, y)| (a.0 + x, a.1 + y, a.2 + x * x, a.3 + x * y));
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn stiffness() -> Outcome {
    let result = run("stiffness_curves", None, 1)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    emit_report(std::slice::from_ref(&result), dir.path()).map_err(|e| e.to_string())?;
    let mut r = csv::Reader::from_path(dir.path().join("stiffness_curves_points.csv")).map_err(|e| e.to_string())?;
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let col = |n: &str| headers.iter().position(|h| h == n).ok_or(format!("no column {n}"));
    let (ci, ki, fi, bi, ni) = (col("condition")?, col("stiffness")?, col("finger")?, col("bend")?, col("force_n")?);
    let mut curves: std::collections::BTreeMap<String, (f64, Vec<(f64, f64)>)> = Default::default();
    for row in r.records() {
        let row = row.map_err(|e| e.to_string())?;
        // Index finger, while touching.
        let force: f64 = row[ni].parse().map_err(|_| "bad force")?;
        if &row[fi] != "1" || force <= 0.0 {
            continue;
        }
        let e = curves.entry(row[ci].to_string()).or_insert((row[ki].parse().map_err(|_| "bad k")?, Vec::new()));
        e.1.push((row[bi].parse().map_err(|_| "bad bend")?, force));
    }
    let mut fits: Vec<(f64, f64, String)> = curves.iter().map(|(n, (k, pts))| (*k, least_squares(pts), n.clone())).collect();
    fits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ks: Vec<f64> = fits.iter().map(|f| f.0).collect();
    ensure(ks == [200.0, 800.0, 3000.0], || format!("objects with stiffness {ks:?}"))?;
    ensure(fits.windows(2).all(|w| w[0].1 < w[1].1), || format!("slopes not increasing: {fits:?}"))?;
    ensure(result.passed(), || format!("{:?}", result.verdicts))?;
    let slopes: Vec<String> = fits.iter().map(|f| format!("{}={:.0}", f.2, f.1)).collect();
    Ok(format!("slopes {}", slopes.join(" < ")))
}

fn rate(rows: &[TrialRecord], c: &str) -> f64 {
    let sel: Vec<_> = rows.iter().filter(|r| r.condition == c).collect();
    sel.iter().filter(|r| r.success).count() as f64 / sel.len() as f64
}

fn mean(rows: &[TrialRecord], c: &str, f: impl Fn(&TrialRecord) -> f64) -> f64 {
    let v: Vec<f64> = rows.iter().filter(|r| r.condition == c).map(f).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// One-sided exact sign test that `a` is lower than `b`, pairing by trial.
fn sign_test(rows: &[TrialRecord], a: &str, b: &str, f: impl Fn(&TrialRecord) -> f64) -> (u32, u32, f64) {
    let (mut w, mut l) = (0u32, 0u32);
    for x in rows.iter().filter(|r| r.condition == a) {
        let y = rows.iter().find(|r| r.condition == b && r.trial == x.trial).expect("paired trial");
        if f(x) < f(y) {
            w += 1;
        } else if f(x) > f(y) {
            l += 1;
        }
    }
    let n = w + l;
    let mut p = 0.0;
    for j in w..=n {
        let mut c = 1.0f64;
        for i in 0..j {
            c = c * f64::from(n - i) / f64::from(i + 1);
        }
        p += c * 0.5f64.powi(n as i32);
    }
    (w, l, p)
}

fn blind_grasp() -> Outcome {
    let result = run("blind_grasp", Some(200), 1)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rows = report(&result, dir.path())?;
    let (h, b) = (rate(&rows, "haptic_probe"), rate(&rows, "visual_nominal"));
    ensure(rows.len() == 400, || format!("{} rows", rows.len()))?;
    ensure(h >= 0.4 && h >= 4.0 * b, || format!("haptic {h:.3}, baseline {b:.3}"))?;
    Ok(format!("200 scenes: haptic {h:.3}, baseline {b:.3}"))
}

fn active_slide() -> Outcome {
    let result = run("active_slide", Some(25), 1)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rows = report(&result, dir.path())?;
    let t = |r: &TrialRecord| r.time_s;
    let (th, tv) = (mean(&rows, "haptic", t), mean(&rows, "visual", t));
    let (sh, sv) = (rate(&rows, "haptic"), rate(&rows, "visual"));
    let (w, l, p) = sign_test(&rows, "haptic", "visual", t);
    ensure(th < tv && sh >= sv && p < 0.05, || {
        format!("time {th:.2} vs {tv:.2} s, success {sh:.2} vs {sv:.2}, {w}:{l} p={p:.3}")
    })?;
    Ok(format!("time {th:.2} < {tv:.2} s, success {sh:.2} >= {sv:.2}, sign test {w}:{l} p={p:.1e}"))
}

fn deform_grasp() -> Outcome {
    let result = run("deform_grasp", Some(25), 1)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rows = report(&result, dir.path())?;
    let d = |r: &TrialRecord| r.deformation_mm.unwrap_or(f64::NAN);
    let t = |r: &TrialRecord| r.time_s;
    let mut detail = Vec::new();
    for s in ["aggressive", "conservative"] {
        let (h, v) = (format!("haptic_{s}"), format!("visual_{s}"));
        let (mh, mv) = (mean(&rows, &h, d), mean(&rows, &v, d));
        let (w, l, p) = sign_test(&rows, &h, &v, d);
        ensure(mh < mv && p < 0.05, || format!("{s}: {mh:.2} vs {mv:.2} mm, {w}:{l} p={p:.3}"))?;
        detail.push(format!("{s} {mh:.2} < {mv:.2} mm"));
    }
    for m in ["haptic", "visual"] {
        let (a, c) = (format!("{m}_aggressive"), format!("{m}_conservative"));
        let (ta, tc) = (mean(&rows, &a, t), mean(&rows, &c, t));
        let (w, l, p) = sign_test(&rows, &a, &c, t);
        ensure(tc > ta && p < 0.05, || format!("{m}: conservative {tc:.3} vs {ta:.3} s, {w}:{l} p={p:.3}"))?;
        detail.push(format!("{m} {tc:.2} > {ta:.2} s"));
    }
    Ok(detail.join(", "))
}

fn determinism() -> Outcome {
    let snapshot = |name: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let trials = if name == "blind_grasp" { Some(100) } else { Some(4) };
        let result = run(name, trials, 9)?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        emit_report(std::slice::from_ref(&result), dir.path()).map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        for e in std::fs::read_dir(dir.path()).map_err(|e| e.to_string())? {
            let e = e.map_err(|e| e.to_string())?;
            files.push((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).map_err(|e| e.to_string())?));
        }
        files.sort();
        Ok(files)
    };
    let mut count = 0;
    for name in EXPERIMENTS {
        let (a, b) = (snapshot(name)?, snapshot(name)?);
        ensure(a == b, || format!("{name} outputs differ between runs"))?;
        count += a.iter().filter(|f| f.0.ends_with(".csv")).count();
    }
    Ok(format!("{count} CSV files byte-identical across reruns"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<u64>); 9] = [
        ("haptics_equations", haptics_equations, Some(1)),
        ("retargeting_oracle", retargeting_oracle, Some(1)),
        ("kinematics", kinematics, Some(10)),
        ("protocol", protocol, Some(30)),
        ("stiffness_slopes", stiffness, Some(10)),
        ("blind_grasp", blind_grasp, Some(60)),
        ("active_slide", active_slide, Some(60)),
        ("deform_grasp", deform_grasp, Some(60)),
        ("determinism", determinism, None),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(s)) if elapsed > Duration::from_secs(s) => Err(format!("took {elapsed:.2?}, limit {s} s")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
