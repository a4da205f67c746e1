use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfcomp::pcm::{backward, gradient_check, segment_loss, InitConfig, PcmParams, Segment, SegmentStart};

struct Data {
    first_obs: [f64; 5],
    stored_h: Vec<f64>,
    errors: Vec<[f64; 5]>,
    actions: Vec<[bool; 16]>,
    next_obs: Vec<[f64; 5]>,
    eps: Vec<[f64; 5]>,
}

fn data(seed: u64, hidden: usize, steps: usize) -> Data {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v5 = |rng: &mut ChaCha8Rng, s: f64| std::array::from_fn(|_| rng.random_range(-s..s));
    Data {
        first_obs: v5(&mut rng, 0.3),
        stored_h: (0..hidden).map(|_| rng.random_range(-0.8..0.8)).collect(),
        errors: (0..steps).map(|_| v5(&mut rng, 0.2)).collect(),
        actions: (0..steps).map(|_| std::array::from_fn(|_| rng.random_bool(0.3))).collect(),
        next_obs: (0..steps).map(|_| v5(&mut rng, 0.5)).collect(),
        eps: (0..steps).map(|_| v5(&mut rng, 0.05)).collect(),
    }
}

fn params(seed: u64, hidden: usize) -> PcmParams {
    let init = InitConfig {
        obs_head_scale: 1.0,
        eps_head_scale: 1.0,
    };
    PcmParams::init(hidden, &init, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn every_parameter_matches_central_difference() {
    let h = 8;
    let p = params(11, h);
    let d = data(12, h, 10);
    let seg = Segment {
        start: SegmentStart::Episode(&d.first_obs),
        errors: &d.errors,
        actions: &d.actions,
        next_obs: &d.next_obs,
        eps: &d.eps,
    };
    let all: Vec<usize> = (0..p.num_params()).collect();
    let samples = gradient_check(&seg, &p, &all, 1e-5).unwrap();
    let worst = samples
        .iter()
        .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
        .unwrap();
    assert!(worst.relative_error < 1e-4, "{worst:?}");
}

#[test]
fn stored_start_gives_initializer_no_gradient() {
    let h = 5;
    let p = params(1, h);
    let d = data(2, h, 7);
    let seg = Segment {
        start: SegmentStart::Stored(&d.stored_h),
        errors: &d.errors,
        actions: &d.actions,
        next_obs: &d.next_obs,
        eps: &d.eps,
    };
    let mut g = p.zeros_like();
    backward(&seg, &p, &mut g).unwrap();
    assert!(g.fch1.w.iter().chain(g.fch2.b.iter()).all(|&x| x == 0.0));
    assert!(g.gru.w_hn.iter().any(|&x| x != 0.0));
    let all: Vec<usize> = (0..p.num_params()).collect();
    let samples = gradient_check(&seg, &p, &all, 1e-5).unwrap();
    assert!(samples.iter().all(|s| s.relative_error < 1e-4));
}

#[test]
fn doubling_residuals_quadruples_loss() {
    // Zero recurrent/head weights keep head outputs at their biases, so the
    // residuals are bias − target and scale exactly.
    let h = 4;
    let mut p = PcmParams::zeros(h);
    p.fc3.b.fill(0.0);
    p.fc4.b.fill(0.0);
    let d = data(5, h, 6);
    let doubled_obs: Vec<[f64; 5]> = d.next_obs.iter().map(|o| o.map(|x| 2.0 * x)).collect();
    let doubled_eps: Vec<[f64; 5]> = d.eps.iter().map(|o| o.map(|x| 2.0 * x)).collect();
    let seg = |n: &[[f64; 5]], e: &[[f64; 5]]| {
        segment_loss(
            &Segment {
                start: SegmentStart::Stored(&d.stored_h),
                errors: &d.errors,
                actions: &d.actions,
                next_obs: n,
                eps: e,
            },
            &p,
        )
        .unwrap()
        .total
    };
    let base = seg(&d.next_obs, &d.eps);
    let doubled = seg(&doubled_obs, &doubled_eps);
    assert!((doubled - 4.0 * base).abs() < 1e-12 * doubled);
}

#[test]
fn sixty_step_segment_spot_check() {
    let h = 16;
    let p = params(21, h);
    let d = data(22, h, 60);
    let seg = Segment {
        start: SegmentStart::Episode(&d.first_obs),
        errors: &d.errors,
        actions: &d.actions,
        next_obs: &d.next_obs,
        eps: &d.eps,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let idx: Vec<usize> = (0..100).map(|_| rng.random_range(0..p.num_params())).collect();
    let samples = gradient_check(&seg, &p, &idx, 1e-5).unwrap();
    let ok = samples.iter().filter(|s| s.relative_error < 1e-4).count();
    assert!(ok >= 99, "{ok}/100");
}
