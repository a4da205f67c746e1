//! One closed-loop engagement: seeker, estimator, compensation,
//! stabilization, guidance and dynamics advanced at the agent cadence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MissileModel, MissileState, TargetState, ThrusterCommand, target_step};
use crate::error::{Result, SimError};
use crate::guidance::{
    closing_speed_estimate, guidance_step, time_to_go_estimate, Allocation, GuidanceConfig, GuidanceInput, GuidanceState, LagInverse,
    TorqueModel,
};
use crate::math::Vec3;
use crate::pcm::{PcmParams, PcmState};
use crate::scenario::{init_episode, sample_draw, target_accel_command, Maneuver, ScenarioConfig, ScenarioDraw};
use crate::seeker::{observe, AngleFilter, ScaleFactorConfig, SeekerConfig, SeekerSample, OBS_DIM};
use crate::stabilization::{compensate, stabilize, RateProfile, StabilizerState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    /// Guidance and observation period, s.
    pub agent_dt_s: f64,
    pub coarse_dt_s: f64,
    pub fine_dt_s: f64,
    /// Range below which the fine step is used, m.
    pub fine_range_m: f64,
    pub max_time_s: f64,
    pub omega_limit_rad_s: f64,
    /// RK4 substeps for the attitude-change quaternion per agent step.
    pub dq_substeps: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            agent_dt_s: 0.04,
            coarse_dt_s: 0.02,
            fine_dt_s: 0.067e-3,
            fine_range_m: 1000.0,
            max_time_s: 20.0,
            omega_limit_rad_s: 12.0,
            dq_substeps: 2,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.agent_dt_s,
            self.coarse_dt_s,
            self.fine_dt_s,
            self.fine_range_m,
            self.max_time_s,
            self.omega_limit_rad_s,
        ];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.dq_substeps == 0 {
            return Err(SimError::Config("timing values must be positive".into()));
        }
        if self.coarse_dt_s > self.agent_dt_s || self.fine_dt_s > self.coarse_dt_s {
            return Err(SimError::Config("integration steps must not exceed the agent step".into()));
        }
        Ok(())
    }

    fn substeps(&self, fine: bool) -> usize {
        let h = if fine { self.fine_dt_s } else { self.coarse_dt_s };
        ((self.agent_dt_s / h).round() as usize).max(1)
    }

    /// Steps in the final-second window used for estimator statistics.
    pub fn steps_per_second(&self) -> usize {
        ((1.0 / self.agent_dt_s).round() as usize).max(1)
    }
}

/// Everything that defines the simulated engagement apart from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EngagementConfig {
    pub missile: MissileModel,
    pub seeker: SeekerConfig,
    pub scale_factors: ScaleFactorConfig,
    pub guidance: GuidanceConfig,
    pub scenario: ScenarioConfig,
    pub timing: TimingConfig,
}

impl Default for EngagementConfig {
    fn default() -> Self {
        EngagementConfig {
            missile: MissileModel::default(),
            seeker: SeekerConfig::default(),
            scale_factors: ScaleFactorConfig::case(3).expect("case 3 exists"),
            guidance: GuidanceConfig::default(),
            scenario: ScenarioConfig::default(),
            timing: TimingConfig::default(),
        }
    }
}

impl EngagementConfig {
    pub fn validate(&self) -> Result<()> {
        self.missile.validate()?;
        self.seeker.validate()?;
        self.scale_factors.validate()?;
        self.guidance.validate()?;
        self.scenario.validate()?;
        self.timing.validate()
    }

    /// Noise-free, error-free, non-maneuvering variant.
    pub fn ideal(&self) -> Self {
        EngagementConfig {
            seeker: SeekerConfig {
                sigma_theta: 0.0,
                sigma_omega: 0.0,
                ..self.seeker
            },
            scale_factors: ScaleFactorConfig::none(),
            scenario: ScenarioConfig {
                maneuvers: false,
                ..self.scenario
            },
            ..self.clone()
        }
    }
}

/// Source of the scale-factor estimates used for compensation.
#[derive(Debug, Clone, Copy)]
pub enum Estimator<'a> {
    /// No compensation.
    Off,
    /// The learned estimator.
    Pcm(&'a PcmParams),
    /// Ground-truth errors, for reference runs.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Closest approach passed.
    Completed,
    FieldOfView,
    RateLimit,
    FuelExhausted,
    Timeout,
    /// Non-finite state or estimator output.
    Fault,
}

impl Termination {
    /// Premature ends caused by a physical constraint.
    pub fn is_violation(self) -> bool {
        matches!(self, Termination::FieldOfView | Termination::RateLimit | Termination::FuelExhausted)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::FieldOfView => "fov",
            Termination::RateLimit => "rate_limit",
            Termination::FuelExhausted => "fuel",
            Termination::Timeout => "timeout",
            Termination::Fault => "fault",
        }
    }
}

/// Estimator quality over one episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimatorStats {
    /// `Σ‖ŏ − o‖²` over the episode.
    pub loss_obs: f64,
    /// `Σ‖ε̆ − ε‖²`.
    pub loss_eps: f64,
    /// `Σ‖ε‖²`, the loss of always predicting zero.
    pub zero_loss_eps: f64,
    /// Mean `|ε̆_ω − ε_ω|` per axis over the final second.
    pub final_omega_abs_err: [f64; 3],
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub case_id: Option<u8>,
    /// Closest approach for completed episodes, smallest range so far
    /// otherwise, m.
    pub miss_m: f64,
    pub fuel_kg: f64,
    pub termination: Termination,
    pub steps: usize,
    pub time_s: f64,
    /// Steps where an estimate had to be clamped.
    pub clamped_steps: usize,
    pub draw: ScenarioDraw,
    pub estimator: Option<EstimatorStats>,
}

impl EpisodeRecord {
    pub fn hit(&self, threshold_m: f64) -> bool {
        self.termination == Termination::Completed && self.miss_m < threshold_m
    }
}

/// Step-aligned training data from one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRollout {
    pub first_obs: [f64; OBS_DIM],
    /// `e_t`, the prediction error fed with the action.
    pub errors: Vec<[f64; OBS_DIM]>,
    pub actions: Vec<ThrusterCommand>,
    /// `h_t` before each step, row-major `steps × width`.
    pub hidden: Vec<f64>,
    pub hidden_width: usize,
    pub next_obs: Vec<[f64; OBS_DIM]>,
    pub eps: Vec<[f64; OBS_DIM]>,
}

impl EpisodeRollout {
    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn hidden_at(&self, step: usize) -> &[f64] {
        &self.hidden[step * self.hidden_width..(step + 1) * self.hidden_width]
    }
}

/// One row of the per-step trajectory log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub theta_meas: (f64, f64),
    pub theta_stab: (f64, f64),
    pub eps_true: [f64; OBS_DIM],
    pub eps_hat: [f64; OBS_DIM],
    pub omega: Vec3,
    pub fuel_kg: f64,
    pub thrusters: ThrusterCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeOptions {
    pub rollout: bool,
    pub trajectory: bool,
    /// Integrate at the fine step throughout.
    pub force_fine: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutput {
    pub record: EpisodeRecord,
    pub rollout: Option<EpisodeRollout>,
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

/// Independent streams for the scenario draw, the scale-factor draw and the
/// measurement noise, so runs that differ only in compensation see the same
/// engagement and the same noise.
pub fn episode_rngs(seed: u64) -> [ChaCha8Rng; 3] {
    std::array::from_fn(|k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        rng
    })
}

const MAX_RESAMPLES: usize = 100;

/// Sample the scenario and the initial states, redrawing geometry that has
/// no collision-triangle solution.
pub fn draw_initial_states(
    cfg: &EngagementConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ScenarioDraw, MissileState, TargetState)> {
    for _ in 0..MAX_RESAMPLES {
        let draw = sample_draw(&cfg.scenario, rng);
        if let Ok((m, t)) = init_episode(&draw, &cfg.scenario, &cfg.missile.props, &cfg.missile.gravity) {
            return Ok((draw, m, t));
        }
    }
    Err(SimError::Config("scenario bounds admit no collision-triangle solution".into()))
}

/// Closest approach over three equally spaced samples of `|r|²`, the middle
/// one being the smallest.
pub fn parabolic_miss(a: f64, b: f64, c: f64) -> f64 {
    let curvature = a - 2.0 * b + c;
    let min = if curvature > 0.0 {
        b - (c - a) * (c - a) / (8.0 * curvature)
    } else {
        b
    };
    min.clamp(0.0, b).sqrt()
}

enum Advance {
    Continue,
    Completed(f64),
    Fault,
}

struct Sim<'a> {
    cfg: &'a EngagementConfig,
    maneuver: Maneuver,
    missile: MissileState,
    target: TargetState,
    t: f64,
    min_range: f64,
    /// Last two `|r|²` samples, oldest first.
    recent: [f64; 2],
}

impl Sim<'_> {
    fn range(&self) -> f64 {
        (self.target.position - self.missile.position).norm()
    }

    fn advance(&mut self, cmd: &ThrusterCommand, fine: bool) -> Advance {
        let n = self.cfg.timing.substeps(fine);
        let h = self.cfg.timing.agent_dt_s / n as f64;
        let gravity = &self.cfg.missile.gravity;
        for _ in 0..n {
            let a_t = target_accel_command(&self.maneuver, self.t, &self.target.velocity);
            self.target = target_step(&self.target, &a_t, gravity, h);
            self.missile = self.cfg.missile.step(&self.missile, cmd, h);
            self.t += h;
            if !self.missile.is_finite() {
                return Advance::Fault;
            }
            let r2 = (self.target.position - self.missile.position).norm_squared();
            self.min_range = self.min_range.min(r2.sqrt());
            let [older, prev] = self.recent;
            if r2 > prev {
                let miss = if older.is_finite() { parabolic_miss(older, prev, r2) } else { prev.sqrt() };
                return Advance::Completed(miss);
            }
            self.recent = [prev, r2];
        }
        Advance::Continue
    }
}

struct Stats {
    s: EstimatorStats,
    window: Vec<[f64; 3]>,
}

/// Run one episode.
pub fn run_episode(cfg: &EngagementConfig, estimator: Estimator, seed: u64, opts: &EpisodeOptions) -> Result<EpisodeOutput> {
    let alloc = Allocation::from_table(&cfg.missile.thrusters)?;
    let [mut rng_scenario, mut rng_sf, mut rng_noise] = episode_rngs(seed);
    let (draw, missile, target) = draw_initial_states(cfg, &mut rng_scenario)?;
    let sf = cfg.scale_factors.sample(&mut rng_sf);
    let timing = &cfg.timing;
    let dt = timing.agent_dt_s;
    let fov = cfg.seeker.fov_half_angle_deg.to_radians();
    let vc = closing_speed_estimate(cfg.scenario.missile_speed_mps, cfg.scenario.target_speed_mps, &cfg.guidance);
    let nominal_range = cfg
        .guidance
        .nominal_range_m
        .unwrap_or(0.5 * (cfg.scenario.range_m[0] + cfg.scenario.range_m[1]));
    let props = &cfg.missile.props;
    let divert_thrust = cfg.missile.thrusters.thrusters[alloc.divert[0]].thrust;

    let r0 = (target.position - missile.position).norm_squared();
    let mut sim = Sim {
        cfg,
        maneuver: draw.maneuver,
        missile,
        target,
        t: 0.0,
        min_range: r0.sqrt(),
        recent: [f64::NAN, r0],
    };
    let mut filter = AngleFilter::default();
    let sense = |sim: &Sim, filter: &mut AngleFilter, rng: &mut ChaCha8Rng| -> Result<SeekerSample> {
        observe(
            &sim.missile.position,
            &sim.missile.attitude,
            &sim.missile.omega,
            &sim.target.position,
            &sf,
            &cfg.seeker,
            filter,
            dt,
            rng,
        )
    };
    let mut sample = sense(&sim, &mut filter, &mut rng_noise)?;
    let first_obs = sample.obs.to_array();

    let mut pcm = match estimator {
        Estimator::Pcm(p) => Some((PcmState::start(&first_obs, p), p)),
        _ => None,
    };
    let mut eps_hat = match estimator {
        Estimator::Truth => sample.epsilon,
        _ => [0.0; OBS_DIM],
    };
    let mut stats = pcm.as_ref().map(|_| Stats {
        s: EstimatorStats::default(),
        window: Vec::new(),
    });
    let mut rollout = opts.rollout.then(|| EpisodeRollout {
        first_obs,
        errors: Vec::new(),
        actions: Vec::new(),
        hidden: Vec::new(),
        hidden_width: pcm.as_ref().map_or(0, |(s, _)| s.hidden.len()),
        next_obs: Vec::new(),
        eps: Vec::new(),
    });
    let mut trajectory = opts.trajectory.then(Vec::new);

    let mut stab = StabilizerState::default();
    let mut guidance = GuidanceState::default();
    let mut lag_inverse = LagInverse::default();
    let mut torque_model = TorqueModel::new(&cfg.missile);
    let mut profile = RateProfile::Linear;
    let mut prev_omega: Option<Vec3> = None;
    let mut clamped_steps = 0;
    let mut steps = 0;
    let mut miss = None;

    let termination = loop {
        if let Some(reason) = check_termination(&sim.missile, &sample, fov, timing.omega_limit_rad_s, props, sim.t, timing) {
            break reason;
        }

        let comp = compensate(&sample.obs, &eps_hat);
        clamped_steps += comp.clamped as usize;
        let obs_bar = comp.obs;
        if let Some(w0) = prev_omega {
            stab = stab.propagate_with(&w0, &obs_bar.omega, dt, timing.dq_substeps, &profile);
        }
        prev_omega = Some(obs_bar.omega);
        let (bu, bv) = if cfg.guidance.invert_seeker_lag {
            lag_inverse.update(obs_bar.theta_u, obs_bar.theta_v, cfg.seeker.tau_theta_s, dt)
        } else {
            (obs_bar.theta_u, obs_bar.theta_v)
        };
        let s = stabilize(bu, bv, &stab.dq);
        let input = GuidanceInput {
            body_angles: (bu, bv),
            stabilized: (s.theta_u, s.theta_v),
            omega: obs_bar.omega,
            dq: stab.dq,
            time_to_go: time_to_go_estimate(nominal_range, vc, sim.t, &cfg.guidance),
            divert_accel: divert_thrust / torque_model.mass(),
        };
        let cmd = guidance_step(&input, vc, &cfg.guidance, &alloc, &mut guidance, dt);
        let modeled = torque_model.step(&cmd, dt);
        if cfg.guidance.shaped_rate_interpolation {
            profile = modeled;
        }

        if let Some(tr) = trajectory.as_mut() {
            tr.push(TrajectoryRow {
                t: sim.t,
                theta_meas: (sample.obs.theta_u, sample.obs.theta_v),
                theta_stab: (s.theta_u, s.theta_v),
                eps_true: sample.epsilon,
                eps_hat,
                omega: sim.missile.omega,
                fuel_kg: sim.missile.fuel_used(props),
                thrusters: cmd,
            });
        }

        let mut step_input = None;
        if let Some((state, params)) = pcm.as_mut() {
            let e_t = state.error;
            let h_t = state.hidden.clone();
            if state.advance(&cmd, params).is_err() || state.eps_hat.iter().any(|x| !x.is_finite()) {
                break Termination::Fault;
            }
            step_input = Some((e_t, h_t));
        }

        let fine = opts.force_fine || sim.range() < timing.fine_range_m;
        match sim.advance(&cmd, fine) {
            Advance::Continue => {}
            Advance::Completed(m) => {
                steps += 1;
                miss = Some(m);
                break Termination::Completed;
            }
            Advance::Fault => break Termination::Fault,
        }
        steps += 1;

        sample = match sense(&sim, &mut filter, &mut rng_noise) {
            Ok(s) if s.obs.is_finite() => s,
            _ => break Termination::Fault,
        };
        let o_next = sample.obs.to_array();

        if let (Some((state, _)), Some((e_t, h_t))) = (pcm.as_mut(), step_input) {
            if let Some(st) = stats.as_mut() {
                let d_obs: f64 = (0..OBS_DIM).map(|i| (state.predicted_obs[i] - o_next[i]).powi(2)).sum();
                let d_eps: f64 = (0..OBS_DIM).map(|i| (state.eps_hat[i] - sample.epsilon[i]).powi(2)).sum();
                st.s.loss_obs += d_obs;
                st.s.loss_eps += d_eps;
                st.s.zero_loss_eps += sample.epsilon.iter().map(|x| x * x).sum::<f64>();
                st.s.steps += 1;
                st.window.push(std::array::from_fn(|k| (state.eps_hat[2 + k] - sample.epsilon[2 + k]).abs()));
            }
            if let Some(r) = rollout.as_mut() {
                r.errors.push(e_t);
                r.actions.push(cmd);
                r.hidden.extend(h_t.iter());
                r.next_obs.push(o_next);
                r.eps.push(sample.epsilon);
            }
            state.observe(&o_next);
            eps_hat = state.eps_hat;
        } else if let Estimator::Truth = estimator {
            eps_hat = sample.epsilon;
        }
    };

    let estimator_stats = stats.map(|mut st| {
        let n = timing.steps_per_second().min(st.window.len());
        if n > 0 {
            let tail = &st.window[st.window.len() - n..];
            st.s.final_omega_abs_err = std::array::from_fn(|k| tail.iter().map(|w| w[k]).sum::<f64>() / n as f64);
        }
        st.s
    });

    let record = EpisodeRecord {
        seed,
        case_id: cfg.scale_factors.case_id,
        miss_m: miss.unwrap_or(sim.min_range),
        fuel_kg: sim.missile.fuel_used(props),
        termination,
        steps,
        time_s: sim.t,
        clamped_steps,
        draw,
        estimator: estimator_stats,
    };
    Ok(EpisodeOutput {
        record,
        rollout,
        trajectory,
    })
}

/// First triggered end condition at an observation instant.
pub fn check_termination(
    missile: &MissileState,
    sample: &SeekerSample,
    fov_half_angle: f64,
    omega_limit: f64,
    props: &crate::dynamics::MassProperties,
    t: f64,
    timing: &TimingConfig,
) -> Option<Termination> {
    let (tu, tv) = sample.true_angles;
    if tu.abs() > fov_half_angle || tv.abs() > fov_half_angle {
        return Some(Termination::FieldOfView);
    }
    if missile.omega.amax() > omega_limit {
        return Some(Termination::RateLimit);
    }
    if missile.mass <= props.dry_mass_kg {
        return Some(Termination::FuelExhausted);
    }
    if t >= timing.max_time_s {
        return Some(Termination::Timeout);
    }
    None
}
