//! Fast in-process checks of the numerical building blocks. The full oracle
//! and property suites live in the test targets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sfcomp::dynamics::{quaternion_step, thruster_wrench, ThrusterTable, NUM_THRUSTERS};
use sfcomp::math::{body_to_ref, Quat, Vec3};
use sfcomp::pcm::{gradient_check, InitConfig, Segment, SegmentStart};
use sfcomp::seeker::angles_of;
use sfcomp::stabilization::{stabilize, StabilizerState};
use sfcomp::{run_episode, EngagementConfig, EpisodeOptions, Estimator, PcmParams};

use crate::commands::CliError;

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn quaternion_norm() -> Check {
    let mut q = Quat::new(1.0, 0.0, 0.0, 0.0);
    let w = Vec3::new(3.0, -7.0, 11.0);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        q = quaternion_step(&q, &w, 1e-3);
        worst = worst.max((q.norm() - 1.0).abs());
    }
    Check {
        name: "quaternion norm drift",
        passed: worst < 1e-9,
        detail: format!("max |‖q‖ − 1| = {worst:.2e}"),
    }
}

fn quaternion_closed_form() -> Check {
    let w = Vec3::new(0.3, -0.4, 1.2);
    let (t, n) = (1.0, 1000);
    let mut q = Quat::new(1.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        q = quaternion_step(&q, &w, t / n as f64);
    }
    let angle = w.norm() * t;
    let axis = w / w.norm();
    let s = (0.5 * angle).sin();
    let exact = Quat::new((0.5 * angle).cos(), s * axis.x, s * axis.y, s * axis.z);
    let err = (q - exact).norm();
    Check {
        name: "attitude step vs axis-angle",
        passed: err < 1e-6,
        detail: format!("‖q − q_exact‖ = {err:.2e}"),
    }
}

fn roll_pair_torque() -> Check {
    let mut cmd = [false; NUM_THRUSTERS];
    cmd[4] = true;
    cmd[5] = true;
    let w = thruster_wrench(&cmd, &ThrusterTable::default(), &Vec3::zeros());
    let expected = Vec3::new(-62.5, 0.0, 0.0);
    Check {
        name: "roll pair torque",
        passed: w.torque == expected && w.force == Vec3::zeros(),
        detail: format!("torque = ({}, {}, {}) N·m", w.torque.x, w.torque.y, w.torque.z),
    }
}

fn stabilization_identity() -> Check {
    let los_ref = Vec3::new(0.95, 0.2, -0.24).normalize();
    let mut st = StabilizerState::default();
    let mut q = Quat::new(1.0, 0.0, 0.0, 0.0);
    let w = Vec3::new(0.2, -0.05, 0.08);
    let dt = 0.04;
    for _ in 0..250 {
        st = st.propagate(&w, &w, dt, 2);
        q = quaternion_step(&q, &w, dt);
    }
    let body = body_to_ref(&q).transpose() * los_ref;
    let (bu, bv) = angles_of(&body);
    let s = stabilize(bu, bv, &st.dq);
    let (u, v) = angles_of(&los_ref);
    let err = (s.theta_u - u).abs().max((s.theta_v - v).abs());
    Check {
        name: "stabilization identity after 10 s",
        passed: err < 1e-4,
        detail: format!("max angle error = {err:.2e} rad"),
    }
}

fn gradients() -> Result<Check, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = PcmParams::init(
        8,
        &InitConfig {
            obs_head_scale: 1.0,
            eps_head_scale: 1.0,
        },
        &mut rng,
    );
    let out = run_episode(
        &EngagementConfig::default(),
        Estimator::Pcm(&params),
        5,
        &EpisodeOptions {
            rollout: true,
            ..EpisodeOptions::default()
        },
    )?;
    let r = out.rollout.expect("rollout requested");
    let n = r.len().min(20);
    let seg = Segment {
        start: SegmentStart::Episode(&r.first_obs),
        errors: &r.errors[..n],
        actions: &r.actions[..n],
        next_obs: &r.next_obs[..n],
        eps: &r.eps[..n],
    };
    let total = params.num_params();
    let indices: Vec<usize> = (0..100).map(|k| (k * 7919) % total).collect();
    let samples = gradient_check(&seg, &params, &indices, 1e-5)?;
    let bad = samples.iter().filter(|s| s.relative_error >= 1e-4).count();
    Ok(Check {
        name: "analytic vs finite-difference gradient",
        passed: bad <= 1,
        detail: format!("{bad} of {} sampled parameters above 1e-4", samples.len()),
    })
}

fn determinism() -> Result<Check, CliError> {
    let cfg = EngagementConfig::default();
    let a = run_episode(&cfg, Estimator::Off, 42, &EpisodeOptions::default())?;
    let b = run_episode(&cfg, Estimator::Off, 42, &EpisodeOptions::default())?;
    Ok(Check {
        name: "episode determinism",
        passed: a.record == b.record,
        detail: format!("miss = {} m", a.record.miss_m),
    })
}

pub fn run() -> Result<(), CliError> {
    let checks = [
        quaternion_norm(),
        quaternion_closed_form(),
        roll_pair_torque(),
        stabilization_identity(),
        gradients()?,
        determinism()?,
    ];
    let mut failed = 0;
    for c in &checks {
        println!("{} {:<40} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += !c.passed as usize;
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} self-check(s) failed")));
    }
    Ok(())
}
