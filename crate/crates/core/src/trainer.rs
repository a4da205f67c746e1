//! Online training of the estimator: rollout collection with frozen
//! weights, a ring of recent episodes, and periodic BPTT updates.

use std::collections::VecDeque;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PcmConfig;
use crate::episode::{EngagementConfig, EpisodeOptions, EpisodeRecord, EpisodeRollout, Estimator};
use crate::error::{Result, SimError};
use crate::montecarlo::{episode_seed, run_batch, splitmix64, CsvMeta, HIT100_M, HIT50_M};
use crate::pcm::{adam_update, backward, segment_loss, AdamState, LossParts, PcmParams, Segment, SegmentStart};

/// Full-length run and its success-rate window.
const REFERENCE_EPISODES: usize = 20000;
const REFERENCE_WINDOW: usize = 1200;

const TRAIN_STREAM: u64 = 0x7472_6169_6e00_0001;
const INIT_STREAM: u64 = 0x696e_6974_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub update_every: usize,
    /// Ring capacity in episodes.
    pub buffer_episodes: usize,
    pub segment_len: usize,
    /// Passes over the buffer per update.
    pub passes: usize,
    /// Accumulate the whole buffer into one step per pass instead of
    /// stepping after every segment.
    pub whole_buffer: bool,
    /// Success-rate window; defaults to 1200 episodes scaled by
    /// `episodes / 20000`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_episodes: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 4000,
            update_every: 120,
            buffer_episodes: 360,
            segment_len: 60,
            passes: 1,
            whole_buffer: false,
            window_episodes: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.update_every == 0 || self.segment_len == 0 || self.passes == 0 {
            return Err(SimError::Config("training counts must be at least 1".into()));
        }
        if self.update_every > self.buffer_episodes {
            return Err(SimError::Config("update_every must not exceed buffer_episodes".into()));
        }
        if self.window_episodes == Some(0) {
            return Err(SimError::Config("window_episodes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> usize {
        self.window_episodes.unwrap_or_else(|| {
            let scaled = (REFERENCE_WINDOW as f64 * self.episodes as f64 / REFERENCE_EPISODES as f64).round() as usize;
            scaled.max(self.update_every)
        })
    }
}

/// Seed of training episode `index`, drawn from a stream separate from the
/// evaluation seeds of the same master seed.
pub fn training_seed(master: u64, index: u64) -> u64 {
    episode_seed(splitmix64(master ^ TRAIN_STREAM), index)
}

/// Freshly initialized weights and optimizer.
pub fn initial_params(pcm: &PcmConfig, master: u64) -> (PcmParams, AdamState) {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master ^ INIT_STREAM));
    let params = PcmParams::init(pcm.hidden, &pcm.init, &mut rng);
    let adam = AdamState::new(&params, pcm.adam);
    (params, adam)
}

/// The most recent episodes' per-step actions, prediction errors, hidden
/// states, next observations and true errors. Each stored episode keeps the
/// five sequences step-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffers {
    capacity: usize,
    episodes: VecDeque<EpisodeRollout>,
}

impl RolloutBuffers {
    pub fn new(capacity: usize) -> Self {
        RolloutBuffers {
            capacity,
            episodes: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, r: EpisodeRollout) {
        if self.capacity == 0 {
            return;
        }
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(r);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeRollout> {
        self.episodes.iter()
    }

    pub fn steps(&self) -> usize {
        self.episodes.iter().map(EpisodeRollout::len).sum()
    }
}

/// Consecutive non-overlapping segments of one episode. The first starts
/// from the episode's first observation, later ones from the stored hidden
/// state.
pub fn segments(r: &EpisodeRollout, len: usize) -> impl Iterator<Item = Segment<'_>> {
    (0..r.len()).step_by(len.max(1)).map(move |a| {
        let b = (a + len).min(r.len());
        Segment {
            start: if a == 0 {
                SegmentStart::Episode(&r.first_obs)
            } else {
                SegmentStart::Stored(r.hidden_at(a))
            },
            errors: &r.errors[a..b],
            actions: &r.actions[a..b],
            next_obs: &r.next_obs[a..b],
            eps: &r.eps[a..b],
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateMetrics {
    /// Buffer losses summed over every stored step.
    pub before: LossParts,
    pub after: LossParts,
    pub steps: usize,
    pub adam_steps: usize,
    /// Segments or passes dropped for a non-finite loss or gradient.
    pub skipped: usize,
}

fn buffer_loss(buffers: &RolloutBuffers, params: &PcmParams, segment_len: usize) -> Result<LossParts> {
    let mut total = LossParts::default();
    for r in buffers.episodes() {
        for seg in segments(r, segment_len) {
            total += segment_loss(&seg, params)?;
        }
    }
    Ok(total)
}

fn finite(l: &LossParts) -> bool {
    l.total.is_finite() && l.obs.is_finite() && l.eps.is_finite()
}

/// One update: `passes` sweeps over the buffer in episode order.
pub fn update_params(
    buffers: &RolloutBuffers,
    params: &mut PcmParams,
    adam: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<UpdateMetrics> {
    let mut m = UpdateMetrics {
        before: buffer_loss(buffers, params, cfg.segment_len)?,
        steps: buffers.steps(),
        ..UpdateMetrics::default()
    };
    let mut grads = params.zeros_like();
    for _ in 0..cfg.passes {
        if cfg.whole_buffer {
            grads.fill(0.0);
            let mut ok = true;
            for r in buffers.episodes() {
                for seg in segments(r, cfg.segment_len) {
                    ok &= finite(&backward(&seg, params, &mut grads)?);
                }
            }
            if ok && grads.is_finite() && m.steps > 0 {
                adam_update(params, &grads, adam)?;
                m.adam_steps += 1;
            } else if m.steps > 0 {
                m.skipped += 1;
            }
            continue;
        }
        for r in buffers.episodes() {
            for seg in segments(r, cfg.segment_len) {
                grads.fill(0.0);
                let l = backward(&seg, params, &mut grads)?;
                if finite(&l) && grads.is_finite() {
                    adam_update(params, &grads, adam)?;
                    m.adam_steps += 1;
                } else {
                    m.skipped += 1;
                }
            }
        }
    }
    m.after = buffer_loss(buffers, params, cfg.segment_len)?;
    Ok(m)
}

/// One row of the training curve. Losses are per-step means of the online
/// estimator over the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub episode: u64,
    pub window_hit50_pct: f64,
    pub window_hit100_pct: f64,
    pub l: f64,
    pub l_o: f64,
    pub l_eps: f64,
    pub mean_fuel_kg: f64,
    /// `L_eps` of an estimator that always predicts zero.
    pub l_eps_zero: f64,
    /// Median over the window of the final-second mean `|ε̆_ω − ε_ω|`.
    pub final_omega_err: f64,
}

pub const CURVE_HEADER: &str =
    "episode,window_hit50_pct,window_hit100_pct,L,L_o,L_eps,mean_fuel_kg,L_eps_zero,final_omega_err";

pub fn window_row(episode: u64, window: &VecDeque<EpisodeRecord>) -> CurveRow {
    let n = window.len().max(1) as f64;
    let (mut lo, mut le, mut lz, mut steps) = (0.0, 0.0, 0.0, 0usize);
    let mut omega_err = Vec::new();
    for s in window.iter().filter_map(|r| r.estimator.as_ref()) {
        lo += s.loss_obs;
        le += s.loss_eps;
        lz += s.zero_loss_eps;
        steps += s.steps;
        omega_err.extend(s.final_omega_abs_err);
    }
    omega_err.sort_by(f64::total_cmp);
    let per = |x: f64| if steps > 0 { x / steps as f64 } else { 0.0 };
    CurveRow {
        episode,
        window_hit50_pct: 100.0 * window.iter().filter(|r| r.hit(HIT50_M)).count() as f64 / n,
        window_hit100_pct: 100.0 * window.iter().filter(|r| r.hit(HIT100_M)).count() as f64 / n,
        l: per(lo + le),
        l_o: per(lo),
        l_eps: per(le),
        mean_fuel_kg: window.iter().map(|r| r.fuel_kg).sum::<f64>() / n,
        l_eps_zero: per(lz),
        final_omega_err: omega_err.get(omega_err.len() / 2).copied().unwrap_or(0.0),
    }
}

pub fn write_curve_csv(w: &mut impl Write, meta: &CsvMeta, rows: &[CurveRow]) -> Result<()> {
    meta.write(w, "training curve")?;
    writeln!(w, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.episode,
            r.window_hit50_pct,
            r.window_hit100_pct,
            r.l,
            r.l_o,
            r.l_eps,
            r.mean_fuel_kg,
            r.l_eps_zero,
            r.final_omega_err
        )?;
    }
    Ok(())
}

/// Weights, optimizer and progress of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: PcmParams,
    pub adam: AdamState,
    pub episodes_done: u64,
}

/// Collect and update until `cfg.episodes` episodes have been run in total.
/// Collection runs `update_every` episodes in parallel against a frozen copy
/// of the weights; the update follows each batch.
pub fn train(
    eng: &EngagementConfig,
    cfg: &TrainConfig,
    state: &mut TrainState,
    master_seed: u64,
    pool: &rayon::ThreadPool,
    mut on_update: impl FnMut(&CurveRow, &UpdateMetrics),
) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    let window_len = cfg.window();
    let mut buffers = RolloutBuffers::new(cfg.buffer_episodes);
    let mut window: VecDeque<EpisodeRecord> = VecDeque::with_capacity(window_len);
    let mut curve = Vec::new();
    let opts = EpisodeOptions {
        rollout: true,
        ..EpisodeOptions::default()
    };
    while (state.episodes_done as usize) < cfg.episodes {
        let first = state.episodes_done;
        let batch = cfg.update_every.min(cfg.episodes - first as usize);
        let seeds: Vec<u64> = (0..batch as u64).map(|i| training_seed(master_seed, first + i)).collect();
        let outputs = run_batch(eng, Estimator::Pcm(&state.params), &seeds, pool, |_| opts).map_err(|e| match e {
            SimError::Episode { index, seed, source } => SimError::Episode {
                index: index + first as usize,
                seed,
                source,
            },
            other => other,
        })?;
        for out in outputs {
            if let Some(r) = out.rollout {
                buffers.push(r);
            }
            if window.len() == window_len {
                window.pop_front();
            }
            window.push_back(out.record);
        }
        state.episodes_done += batch as u64;
        let metrics = update_params(&buffers, &mut state.params, &mut state.adam, cfg)?;
        let row = window_row(state.episodes_done, &window);
        on_update(&row, &metrics);
        curve.push(row);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::run_episode;
    use crate::montecarlo::thread_pool;
    use crate::pcm::{AdamConfig, InitConfig};
    use crate::seeker::OBS_DIM;

    fn rollout(steps: usize, tag: f64) -> EpisodeRollout {
        EpisodeRollout {
            first_obs: [tag; OBS_DIM],
            errors: vec![[0.0; OBS_DIM]; steps],
            actions: vec![Default::default(); steps],
            hidden: vec![0.0; steps * 4],
            hidden_width: 4,
            next_obs: vec![[0.0; OBS_DIM]; steps],
            eps: vec![[0.0; OBS_DIM]; steps],
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut b = RolloutBuffers::new(360);
        for i in 0..361 {
            b.push(rollout(1, i as f64));
        }
        assert_eq!(b.len(), 360);
        assert_eq!(b.episodes().next().unwrap().first_obs[0], 1.0);
        assert_eq!(b.episodes().last().unwrap().first_obs[0], 360.0);
    }

    #[test]
    fn segments_tile_the_episode() {
        let r = rollout(130, 0.0);
        let segs: Vec<_> = segments(&r, 60).collect();
        assert_eq!(segs.iter().map(|s| s.len()).collect::<Vec<_>>(), [60, 60, 10]);
        assert!(matches!(segs[0].start, SegmentStart::Episode(_)));
        assert!(matches!(segs[1].start, SegmentStart::Stored(h) if h.len() == 4));
        assert_eq!(segments(&rollout(0, 0.0), 60).count(), 0);
    }

    #[test]
    fn zero_data_and_zero_params_do_not_move() {
        let mut b = RolloutBuffers::new(4);
        b.push(rollout(70, 0.0));
        let mut p = PcmParams::zeros(4);
        let mut adam = AdamState::new(&p, AdamConfig::default());
        let m = update_params(&b, &mut p, &mut adam, &TrainConfig::default()).unwrap();
        assert_eq!(m.before.total, 0.0);
        assert_eq!(m.after.total, 0.0);
        assert_eq!(m.adam_steps, 2);
        assert_eq!(p, PcmParams::zeros(4));
    }

    #[test]
    fn window_scales_with_run_length() {
        let full = TrainConfig {
            episodes: 20000,
            ..TrainConfig::default()
        };
        assert_eq!(full.window(), 1200);
        assert_eq!(TrainConfig::default().window(), 240);
        let bad = TrainConfig {
            update_every: 400,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn recorded_episode(hidden: usize) -> (EpisodeRollout, PcmParams) {
        let eng = EngagementConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = PcmParams::init(hidden, &InitConfig::default(), &mut rng);
        let opts = EpisodeOptions {
            rollout: true,
            ..EpisodeOptions::default()
        };
        let out = run_episode(&eng, Estimator::Pcm(&params), 11, &opts).unwrap();
        (out.rollout.unwrap(), params)
    }

    #[test]
    fn overfits_one_recorded_episode() {
        let (r, mut params) = recorded_episode(16);
        assert!(r.len() > 60);
        let mut b = RolloutBuffers::new(1);
        b.push(r);
        let cfg = TrainConfig::default();
        let mut adam = AdamState::new(
            &params,
            AdamConfig {
                learning_rate: 1e-3,
                ..AdamConfig::default()
            },
        );
        let mut first = None;
        let mut last = LossParts::default();
        for _ in 0..200 {
            let m = update_params(&b, &mut params, &mut adam, &cfg).unwrap();
            first.get_or_insert(m.before.total);
            last = m.after;
            assert_eq!(m.skipped, 0);
        }
        let first = first.unwrap();
        assert!(last.total < 0.1 * first, "loss {first} -> {}", last.total);
    }

    #[test]
    fn replayed_errors_match_the_recording() {
        // Running the frozen weights over the stored inputs regenerates the
        // stored prediction errors step for step.
        let (r, params) = recorded_episode(8);
        let mut state = crate::pcm::PcmState::start(&r.first_obs, &params);
        for t in 0..r.len() {
            assert_eq!(state.error, r.errors[t], "step {t}");
            assert_eq!(state.hidden.as_slice(), r.hidden_at(t));
            state.advance(&r.actions[t], &params).unwrap();
            state.observe(&r.next_obs[t]);
        }
    }

    #[test]
    fn one_update_when_total_equals_schedule() {
        let eng = EngagementConfig::default();
        let cfg = TrainConfig {
            episodes: 4,
            update_every: 4,
            buffer_episodes: 4,
            ..TrainConfig::default()
        };
        let (params, adam) = initial_params(
            &PcmConfig {
                hidden: 8,
                ..PcmConfig::default()
            },
            1,
        );
        let mut state = TrainState {
            params,
            adam,
            episodes_done: 0,
        };
        let pool = thread_pool(2).unwrap();
        let mut updates = 0;
        let curve = train(&eng, &cfg, &mut state, 1, &pool, |_, _| updates += 1).unwrap();
        assert_eq!((updates, curve.len(), state.episodes_done), (1, 1, 4));
        assert_eq!(curve[0].episode, 4);
        assert!(state.adam.step > 0);
    }
}
