use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sfcomp::pcm::{backward, InitConfig, Segment, SegmentStart};
use sfcomp::{run_episode, EngagementConfig, EpisodeOptions, EpisodeRollout, Estimator, PcmParams};

fn params() -> PcmParams {
    let init = InitConfig {
        obs_head_scale: 1.0,
        eps_head_scale: 1.0,
    };
    PcmParams::init(64, &init, &mut ChaCha8Rng::seed_from_u64(3))
}

fn rollout(p: &PcmParams) -> EpisodeRollout {
    let opts = EpisodeOptions {
        rollout: true,
        ..EpisodeOptions::default()
    };
    run_episode(&EngagementConfig::default(), Estimator::Pcm(p), 3, &opts)
        .unwrap()
        .rollout
        .unwrap()
}

fn episodes(c: &mut Criterion) {
    let cfg = EngagementConfig::default();
    let p = params();
    let mut g = c.benchmark_group("episode");
    g.sample_size(20);
    g.bench_function("uncompensated", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            run_episode(&cfg, Estimator::Off, seed, &EpisodeOptions::default()).unwrap()
        })
    });
    g.bench_function("compensated_with_rollout", |b| {
        let opts = EpisodeOptions {
            rollout: true,
            ..EpisodeOptions::default()
        };
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            run_episode(&cfg, Estimator::Pcm(&p), seed, &opts).unwrap()
        })
    });
    g.finish();
}

fn gradients(c: &mut Criterion) {
    let p = params();
    let r = rollout(&p);
    let n = r.len().min(60);
    let seg = Segment {
        start: SegmentStart::Stored(r.hidden_at(0)),
        errors: &r.errors[..n],
        actions: &r.actions[..n],
        next_obs: &r.next_obs[..n],
        eps: &r.eps[..n],
    };
    c.bench_function("bptt_60_steps", |b| {
        b.iter_batched_ref(
            || p.zeros_like(),
            |g| backward(&seg, &p, g).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, episodes, gradients);
criterion_main!(benches);
