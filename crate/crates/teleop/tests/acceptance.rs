//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use nalgebra::{Matrix6, Quaternion, UnitQuaternion, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;
use teleop::gateway::frames::{StateSnapshot, TrialState};
use teleop_core::clutch::{clutch_update, still, ClutchChannel, ClutchState};
use teleop_core::geometry::{self, MotionState, Pose, Rotation, Twist, Vec3};
use teleop_core::harness::*;
use teleop_core::impedance::{impedance_wrench, joint_torques, ImpedanceGains, SerialChain};
use teleop_core::sim::{squeeze_hold_check, World, WorldConfig};
use teleop_core::tasks::{is_complete, BoxSpec, TargetSpec, TaskType};
use teleop_core::Wrench;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn vec3(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
}

/// Uniform random rotation (rejection sampling in the unit 4-ball).
fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    loop {
        let q = Quaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 1e-3 && n <= 1.0 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

// Wrench law written out with plain arrays and a quaternion logarithm.
fn oracle_wrench(cur: &MotionState, tgt: &MotionState, k: &Matrix6<f64>, d: &Matrix6<f64>) -> [f64; 6] {
    let (a, b) = (cur.pose.rotation, tgt.pose.rotation);
    let (aw, ax, ay, az) = (a.w, -a.i, -a.j, -a.k);
    let (bw, bx, by, bz) = (b.w, b.i, b.j, b.k);
    let mut r = [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ];
    if r[0] < 0.0 {
        r.iter_mut().for_each(|c| *c = -*c);
    }
    let s = (r[1] * r[1] + r[2] * r[2] + r[3] * r[3]).sqrt();
    let scale = if s == 0.0 { 0.0 } else { 2.0 * s.atan2(r[0]) / s };
    let (p, pt) = (cur.pose.position, tgt.pose.position);
    let (v, vt) = (cur.twist, tgt.twist);
    let e = [pt.x - p.x, pt.y - p.y, pt.z - p.z, r[1] * scale, r[2] * scale, r[3] * scale];
    let de = [
        vt.linear.x - v.linear.x,
        vt.linear.y - v.linear.y,
        vt.linear.z - v.linear.z,
        vt.angular.x - v.angular.x,
        vt.angular.y - v.angular.y,
        vt.angular.z - v.angular.z,
    ];
    let mut out = [0.0; 6];
    for i in 0..6 {
        for j in 0..6 {
            out[i] += k[(i, j)] * e[j] + d[(i, j)] * de[j];
        }
    }
    out
}

fn impedance_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut zero_ok = true;
    for _ in 0..1000 {
        let k = Vector6::from_fn(|_, _| rng.gen_range(0.0..500.0));
        let a = Matrix6::from_fn(|_, _| rng.gen_range(-3.0..3.0));
        let gains = ImpedanceGains::new(Matrix6::from_diagonal(&k), a * a.transpose()).unwrap();
        let state = |rng: &mut ChaCha8Rng| {
            MotionState::new(
                Pose::from_parts(vec3(rng, 1.0), random_rotation(rng)),
                Twist {
                    linear: vec3(rng, 2.0),
                    angular: vec3(rng, 2.0),
                },
            )
        };
        let (cur, tgt) = (state(&mut rng), state(&mut rng));
        let got = impedance_wrench(&cur, &tgt, &gains).unwrap();
        let want = oracle_wrench(&cur, &tgt, gains.stiffness(), gains.damping());
        for i in 0..3 {
            worst = worst.max((got.force[i] - want[i]).abs());
            worst = worst.max((got.torque[i] - want[i + 3]).abs());
        }
        zero_ok &= impedance_wrench(&cur, &cur, &gains).unwrap() == Wrench::zero();
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-12 && zero_ok && secs < 1.0,
        format!("max |Δ| {worst:.1e} N (tol 1e-12), zero error -> zero wrench: {zero_ok}, {secs:.3} s (< 1 s)"),
    )
}

fn rotation_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    while n < 1000 {
        // Every fifth sample is pushed toward the half-turn boundary.
        let r = if n % 5 == 0 {
            let axis = nalgebra::Unit::new_normalize(vec3(&mut rng, 1.0));
            UnitQuaternion::from_axis_angle(&axis, PI - 10f64.powf(rng.gen_range(-5.9..-1.0)))
        } else {
            random_rotation(&mut rng)
        };
        if r.angle() >= PI - 1e-6 {
            continue;
        }
        let m = r.to_rotation_matrix();
        let back = geometry::exp(&geometry::rotation_vector(&m).vector).to_rotation_matrix();
        worst = worst.max((back.matrix() - m.matrix()).abs().max());
        n += 1;
    }
    check(worst <= 1e-9, format!("max matrix entry error {worst:.1e} over 1000 rotations (tol 1e-9)"))
}

fn jacobian_transpose() -> Outcome {
    let z = Vec3::z();
    let link = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
    let planar = SerialChain::new(vec![(Pose::identity(), z), (link, z)], link).unwrap();
    let j = planar.jacobian(&[0.0, 0.0]).unwrap();
    let tip = Wrench::new(Vec3::new(0.0, 10.0, 0.0), Vec3::zeros()).unwrap();
    let tau = joint_torques(&j, &tip).unwrap();
    let planar_err = (tau[0] - 20.0).abs().max((tau[1] - 10.0).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..100 {
        let n = rng.gen_range(1..8);
        let joints = (0..n)
            .map(|_| {
                let origin = Pose::from_parts(vec3(&mut rng, 0.5), random_rotation(&mut rng));
                (origin, vec3(&mut rng, 1.0).normalize())
            })
            .collect();
        let tool = Pose::from_parts(vec3(&mut rng, 0.3), random_rotation(&mut rng));
        let chain = SerialChain::new(joints, tool).unwrap();
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-PI..PI)).collect();
        let j = chain.jacobian(&q).unwrap();
        for c in 0..n {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[c] += h;
            qm[c] -= h;
            let fd = (chain.forward_kinematics(&qp).unwrap().position
                - chain.forward_kinematics(&qm).unwrap().position)
                / (2.0 * h);
            for r in 0..3 {
                worst = worst.max((j[(r, c)] - fd[r]).abs());
            }
        }
    }
    check(
        planar_err < 1e-12 && worst <= 1e-6,
        format!(
            "planar tau = ({:.6}, {:.6}) N·m, finite-difference max error {worst:.1e} (tol 1e-6)",
            tau[0], tau[1]
        ),
    )
}

fn clutch_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let pose = |rng: &mut ChaCha8Rng| Pose::from_parts(vec3(rng, 1.0), random_rotation(rng));
    let mut failures = Vec::new();

    // Disengaged invariance and transition continuity over random sequences.
    let (mut frozen, mut jumps, mut samples) = (0, 0, 0);
    for _ in 0..200 {
        let mut ch = ClutchChannel::new(pose(&mut rng));
        let mut prev = *ch.target();
        let mut button = None;
        for _ in 0..50 {
            let b = rng.gen_bool(0.5);
            let hand = MotionState::new(pose(&mut rng), Twist { linear: vec3(&mut rng, 1.0), angular: vec3(&mut rng, 1.0) });
            ch.set_input(hand, b);
            let t = ch.update();
            if button != Some(b) && t.pose != prev.pose {
                jumps += 1;
            }
            if !b && (t.pose != prev.pose || t.twist != Twist::zero()) {
                frozen += 1;
            }
            prev = t;
            button = Some(b);
            samples += 1;
        }
    }
    if frozen > 0 {
        failures.push(format!("{frozen} released samples moved"));
    }
    if jumps > 0 {
        failures.push(format!("{jumps} transition jumps"));
    }

    // Relative-rotation fidelity while engaged.
    let mut rot_err: f64 = 0.0;
    for _ in 0..1000 {
        let (ha, ta, h) = (pose(&mut rng), pose(&mut rng), pose(&mut rng));
        let s = ClutchState {
            engaged: true,
            hand_anchor: ha,
            target_anchor: ta,
        };
        let (_, t) = clutch_update(&s, &still(h), true, &ta);
        let rel_t = (ta.rotation.inverse() * t.pose.rotation).to_rotation_matrix();
        let rel_h = (ha.rotation.inverse() * h.rotation).to_rotation_matrix();
        rot_err = rot_err.max((rel_t.matrix() - rel_h.matrix()).abs().max());
    }
    if rot_err > 1e-12 {
        failures.push(format!("relative rotation off by {rot_err:.1e}"));
    }

    // Press, move d1, release, reposition, press, move d2.
    let home = Pose::from_translation(Vec3::new(0.4, 0.0, 0.3));
    let mut ch = ClutchChannel::new(home);
    let (d1, d2) = (Vec3::new(0.1, -0.05, 0.02), Vec3::new(-0.03, 0.2, 0.07));
    let mut hand = Vec3::new(1.0, 2.0, 3.0);
    let mut feed = |p: Vec3, b: bool| {
        ch.set_input(still(Pose::from_translation(p)), b);
        ch.update()
    };
    feed(hand, true);
    feed(hand + d1, true);
    hand += d1;
    feed(hand, false);
    hand += Vec3::new(-0.5, 0.3, 0.9);
    feed(hand, false);
    feed(hand, true);
    let last = feed(hand + d2, true);
    let comp_err = (last.pose.position - (home.position + d1 + d2)).norm();
    if comp_err > 1e-14 {
        failures.push(format!("ratchet composition off by {comp_err:.1e} m"));
    }

    let detail = format!(
        "{samples} random samples: 0 released drift, 0 transition jumps; rotation fidelity {rot_err:.1e}; composition {comp_err:.1e} m"
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(failures.join("; "))
    }
}

fn completion_suite() -> Outcome {
    let t = TargetSpec::new(Pose::from_parts(Vec3::new(0.5, 0.0, 0.1), geometry::yaw(0.3)));
    let at = |dp: f64, dyaw: f64| Pose::from_parts(t.pose.position + Vec3::new(dp, 0.0, 0.0), geometry::yaw(0.3 + dyaw));
    let cases = [
        ("exact pose", at(0.0, 0.0), true),
        ("180° yaw", at(0.0, PI), true),
        ("offset 0.031 m", at(0.031, 0.0), false),
        ("offset 0.029 m", at(0.029, 0.0), true),
        ("yaw 0.39 rad", at(0.0, 0.39), true),
        ("yaw 0.41 rad", at(0.0, 0.41), false),
    ];
    let wrong: Vec<_> = cases
        .iter()
        .filter(|(_, pose, want)| is_complete(pose, &t) != *want)
        .map(|(name, _, _)| *name)
        .collect();
    let ok = wrong.is_empty() && t.pos_tol == 0.030 && t.rot_tol == 0.4;
    check(
        ok,
        format!("tolerances {} m / {} rad; mismatches: {:?}", t.pos_tol, t.rot_tol, wrong),
    )
}

fn default_world() -> World {
    World::new(
        &WorldConfig::default(),
        &BoxSpec::default(),
        &Pose::from_translation(Vec3::new(0.5, 0.0, 0.0)),
    )
    .unwrap()
}

fn energy_property() -> Outcome {
    let mut w = default_world();
    w.table = None;
    w.box_body.pose.position = Vec3::new(0.0, 0.0, -100.0);
    w.effectors[1].body.pose.position = Vec3::new(0.0, 100.0, 0.0);
    w.effectors[1].target = MotionState::at_rest(w.effectors[1].body.pose);
    let e = &mut w.effectors[0];
    let target = Pose::from_parts(
        e.body.pose.position + Vec3::new(0.08, -0.05, 0.03),
        geometry::exp(&Vec3::new(0.3, -0.2, 0.5)) * e.body.pose.rotation,
    );
    e.target = MotionState::at_rest(target);
    let mut prev = w.effectors[0].energy();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        w.step().map_err(|e| e.to_string())?;
        let e = w.effectors[0].energy();
        worst = worst.max(e - prev);
        prev = e;
    }
    let e = &w.effectors[0];
    let err = (e.target.pose.position - e.body.pose.position).norm();
    check(
        worst <= 1e-6 && err < 1e-4,
        format!("largest per-step rise {worst:.1e} J (tol 1e-6), final error {err:.1e} m (< 1e-4)"),
    )
}

fn static_contact() -> Outcome {
    let mut w = default_world();
    for e in w.effectors.iter_mut() {
        e.body.pose.position.x += 2.0;
        e.target = MotionState::at_rest(e.body.pose);
    }
    let spec = BoxSpec::default();
    let k_n = WorldConfig::default().contact.k_n;
    for _ in 0..1000 {
        w.step().map_err(|e| e.to_string())?;
    }
    let rest = w.box_body.pose;
    let mut drift: f64 = 0.0;
    let mut tilt: f64 = 0.0;
    for _ in 0..10_000 {
        w.step().map_err(|e| e.to_string())?;
        drift = drift.max((w.box_body.pose.position - rest.position).norm());
        tilt = tilt.max(geometry::geodesic_angle(&w.box_body.pose.rotation, &rest.rotation));
    }
    let pen = spec.rest_height(0.0) - w.box_body.pose.position.z;
    let oracle = spec.mass * WorldConfig::default().gravity / k_n;
    let rel = (pen - oracle).abs() / oracle;
    check(
        rel <= 0.05 && drift < 1e-9 && tilt < 1e-9,
        format!(
            "penetration {pen:.4e} m vs m·g/k_n {oracle:.4e} m ({:.2}%, tol 5%), drift {drift:.1e} m, tilt {tilt:.1e} rad over 10 s",
            rel * 100.0
        ),
    )
}

fn lift(depth: f64) -> Result<(TrialOutput, f64, bool), String> {
    let rest = BoxSpec::default().rest_height(0.0);
    let target = TargetSpec::new(Pose::from_parts(Vec3::new(0.53, -0.04, rest + 0.12), geometry::yaw(0.6)));
    let mut f = ScenarioFile::new(TaskType::Lifting, vec![target]);
    f.policy.squeeze_depth = depth;
    f.trial.timeout_s = 30.0;
    let r = f.resolve(0).map_err(|e| e.to_string())?;
    let world = World::new(&r.world, &r.scenario.box_spec, &r.scenario.start).map_err(|e| e.to_string())?;
    let hold = squeeze_hold_check(&world, depth);
    let mut p = ScriptedPolicy::new(TaskType::Lifting, r.policy);
    let out = run_trial(&r, &mut p, Condition::Vis, 0, TrialOptions::default()).map_err(|e| e.to_string())?;
    let sim_s = out.ticks as f64 * r.world.dt;
    Ok((out, sim_s, hold.held))
}

fn force_criticality() -> Outcome {
    let start = Instant::now();
    let (firm, firm_s, firm_held) = lift(0.05)?;
    let (light, light_s, light_held) = lift(0.015)?;
    let wall = start.elapsed().as_secs_f64();
    let (f, l) = (&firm.records[0], &light.records[0]);
    let faster = wall < firm_s + light_s;
    check(
        f.completed && firm_held && l.drop_count >= 1 && !l.completed && !light_held && wall < 30.0 && faster,
        format!(
            "0.05 m: completed={} in {:.2} s; 0.015 m: completed={} drops={}; {:.1} s simulated in {wall:.2} s wall (< 30 s)",
            f.completed,
            f.completion_time_s.unwrap_or(f64::NAN),
            l.completed,
            l.drop_count,
            firm_s + light_s
        ),
    )
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn teleop(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_teleop"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    match out.status.code() {
        Some(0) | Some(1) => Ok(()),
        _ => Err(String::from_utf8_lossy(&out.stderr).into_owned()),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = repo_root().join("scenarios/lifting.toml");
    let scenario = scenario.to_str().unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let path = dir.path().join(format!("{run}.csv"));
        let p = path.to_str().unwrap();
        teleop(&["--headless", "--scenario", scenario, "--policy", "scripted-lift", "--seed", "7", "--out", p])?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    let rows = files[0].iter().filter(|&&b| b == b'\n').count();
    check(
        files[0] == files[1] && rows > 1,
        format!("two headless runs, {} bytes / {rows} lines each, identical: {}", files[0].len(), files[0] == files[1]),
    )
}

fn condition_neutrality() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |n: &str| dir.path().join(n).to_str().unwrap().to_owned();
    let scenario = repo_root().join("scenarios/single-lift.toml");
    let scenario = scenario.to_str().unwrap();
    teleop(&["--headless", "--scenario", scenario, "--policy", "scripted-lift", "--record-trace", &path("trace.csv")])?;
    let mut logs = Vec::new();
    for condition in ["vis", "novis"] {
        let log = path(&format!("{condition}.log"));
        teleop(&[
            "--headless", "--scenario", scenario, "--policy", "replay", "--trace", &path("trace.csv"),
            "--condition", condition, "--state-log", &log,
        ])?;
        logs.push(std::fs::read(&log).map_err(|e| e.to_string())?);
    }
    let logs_equal = logs[0] == logs[1];

    // Step both conditions side by side and compare what each would send.
    let resolved = ScenarioFile::load(Path::new(scenario)).map_err(|e| e.to_string())?.resolve(0).map_err(|e| e.to_string())?;
    let trace = load_trace(Path::new(&path("trace.csv"))).map_err(|e| e.to_string())?;
    let mut sessions = [Condition::Vis, Condition::Novis]
        .map(|c| Session::new(&resolved, c, 0, "neutrality").unwrap());
    let mut policies = [0, 1].map(|_| ReplayPolicy::new(trace.clone()).unwrap());
    let mut differing = 0usize;
    let mut snapshots = 0usize;
    while !sessions[0].is_finished() {
        for (s, p) in sessions.iter_mut().zip(policies.iter_mut()) {
            for input in p.act(s).map_err(|e| e.to_string())? {
                s.queue(input);
            }
            s.tick().map_err(|e| e.to_string())?;
        }
        if sessions[0].tick_count() % 17 == 0 {
            let [mut vis, novis] = [&sessions[0], &sessions[1]].map(|s| StateSnapshot::capture(s, TrialState::Running));
            vis.condition = novis.condition;
            for e in vis.effectors.iter_mut() {
                e.target = None;
                e.offset = None;
            }
            differing += usize::from(vis != novis);
            snapshots += 1;
        }
    }
    check(
        logs_equal && differing == 0 && sessions[1].is_finished(),
        format!(
            "state logs {} bytes, byte-equal: {logs_equal}; {snapshots} snapshot pairs differ only in visualization fields: {}",
            logs[0].len(),
            differing == 0
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("impedance wrench exactness", impedance_exactness),
        ("rotation-vector round trip", rotation_round_trip),
        ("jacobian transpose", jacobian_transpose),
        ("clutch suite", clutch_suite),
        ("completion suite", completion_suite),
        ("energy property", energy_property),
        ("static contact", static_contact),
        ("force criticality", force_criticality),
        ("determinism", determinism),
        ("condition neutrality", condition_neutrality),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
