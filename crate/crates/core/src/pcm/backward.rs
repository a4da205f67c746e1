//! Exact gradients of the segment loss by backpropagation through time.
//!
//! A segment is up to `segment_len` consecutive steps of one stored episode.
//! Inputs are the recorded prediction errors and actions; the recurrence
//! starts either from the stored hidden state at the segment's first step or,
//! for the first segment of an episode, from the learned initializer applied
//! to the first observation. Only in the latter case do the initializer layers
//! receive gradient.

use nalgebra::DVector;

use super::forward::{gru_trace, init_hidden, obs_vector, pcm_input, GruTrace, LossParts};
use super::params::PcmParams;
use crate::dynamics::ThrusterCommand;
use crate::error::{Result, SimError};
use crate::seeker::OBS_DIM;

#[derive(Debug, Clone, Copy)]
pub enum SegmentStart<'a> {
    /// Hidden state recorded when the step was originally run.
    Stored(&'a [f64]),
    /// Start of an episode: `h₀` from the first observation.
    Episode(&'a [f64; OBS_DIM]),
}

#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub start: SegmentStart<'a>,
    pub errors: &'a [[f64; OBS_DIM]],
    pub actions: &'a [ThrusterCommand],
    pub next_obs: &'a [[f64; OBS_DIM]],
    pub eps: &'a [[f64; OBS_DIM]],
}

impl Segment<'_> {
    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    fn check(&self, hidden: usize) -> Result<()> {
        let n = self.errors.len();
        if self.actions.len() != n || self.next_obs.len() != n || self.eps.len() != n {
            return Err(SimError::Shape("segment sequences differ in length".into()));
        }
        if let SegmentStart::Stored(h) = self.start {
            if h.len() != hidden {
                return Err(SimError::Shape(format!("stored hidden state has {} entries, expected {hidden}", h.len())));
            }
        }
        Ok(())
    }
}

struct StepCache {
    input: DVector<f64>,
    x: DVector<f64>,
    gru: GruTrace,
    pred_obs: DVector<f64>,
    pred_eps: DVector<f64>,
}

fn initial_hidden(seg: &Segment, params: &PcmParams) -> DVector<f64> {
    match seg.start {
        SegmentStart::Stored(h) => DVector::from_column_slice(h),
        SegmentStart::Episode(o0) => init_hidden(o0, params),
    }
}

fn run_forward(seg: &Segment, params: &PcmParams, h0: &DVector<f64>) -> Vec<StepCache> {
    let mut caches: Vec<StepCache> = Vec::with_capacity(seg.len());
    for t in 0..seg.len() {
        let input = DVector::from_column_slice(&pcm_input(&seg.errors[t], &seg.actions[t]));
        let x = params.fc1.apply(&input).map(f64::tanh);
        let h_prev = caches.last().map(|c| &c.gru.h).unwrap_or(h0);
        let gru = gru_trace(&x, h_prev, &params.gru);
        let pred_obs = params.fc3.apply(&gru.h);
        let pred_eps = params.fc4.apply(&gru.h);
        caches.push(StepCache {
            input,
            x,
            gru,
            pred_obs,
            pred_eps,
        });
    }
    caches
}

fn residual(pred: &DVector<f64>, target: &[f64; OBS_DIM]) -> DVector<f64> {
    DVector::from_fn(OBS_DIM, |i, _| pred[i] - target[i])
}

fn step_loss(c: &StepCache, next_obs: &[f64; OBS_DIM], eps: &[f64; OBS_DIM]) -> LossParts {
    let lo = residual(&c.pred_obs, next_obs).norm_squared();
    let le = residual(&c.pred_eps, eps).norm_squared();
    LossParts {
        total: lo + le,
        obs: lo,
        eps: le,
    }
}

/// Loss of a segment without gradients.
pub fn segment_loss(seg: &Segment, params: &PcmParams) -> Result<LossParts> {
    seg.check(params.hidden())?;
    let h0 = initial_hidden(seg, params);
    let caches = run_forward(seg, params, &h0);
    let mut total = LossParts::default();
    for (t, c) in caches.iter().enumerate() {
        total += step_loss(c, &seg.next_obs[t], &seg.eps[t]);
    }
    Ok(total)
}

/// Accumulate the gradient of the segment loss into `grads` and return the
/// loss.
pub fn backward(seg: &Segment, params: &PcmParams, grads: &mut PcmParams) -> Result<LossParts> {
    seg.check(params.hidden())?;
    if grads.hidden() != params.hidden() {
        return Err(SimError::Shape("gradient buffer has the wrong width".into()));
    }
    let h0 = initial_hidden(seg, params);
    let caches = run_forward(seg, params, &h0);
    let p = params;
    let g = grads;
    let hidden = p.hidden();
    let mut total = LossParts::default();
    let mut dh_next = DVector::<f64>::zeros(hidden);

    for t in (0..caches.len()).rev() {
        let c = &caches[t];
        total += step_loss(c, &seg.next_obs[t], &seg.eps[t]);
        let d_obs = residual(&c.pred_obs, &seg.next_obs[t]) * 2.0;
        let d_eps = residual(&c.pred_eps, &seg.eps[t]) * 2.0;
        let h = &c.gru.h;
        let h_prev = if t == 0 { &h0 } else { &caches[t - 1].gru.h };

        g.fc3.w.ger(1.0, &d_obs, h, 1.0);
        g.fc3.b += &d_obs;
        g.fc4.w.ger(1.0, &d_eps, h, 1.0);
        g.fc4.b += &d_eps;

        let mut dh = dh_next.clone();
        dh.gemv_tr(1.0, &p.fc3.w, &d_obs, 1.0);
        dh.gemv_tr(1.0, &p.fc4.w, &d_eps, 1.0);

        let GruTrace { r, z, n, hn, .. } = &c.gru;
        let mut da_n = DVector::zeros(hidden);
        let mut da_z = DVector::zeros(hidden);
        let mut da_r = DVector::zeros(hidden);
        let mut d_hn = DVector::zeros(hidden);
        let mut dh_prev = DVector::zeros(hidden);
        for i in 0..hidden {
            let dn = dh[i] * (1.0 - z[i]);
            let dz = dh[i] * (h_prev[i] - n[i]);
            dh_prev[i] = dh[i] * z[i];
            da_n[i] = dn * (1.0 - n[i] * n[i]);
            let dr = da_n[i] * hn[i];
            d_hn[i] = da_n[i] * r[i];
            da_z[i] = dz * z[i] * (1.0 - z[i]);
            da_r[i] = dr * r[i] * (1.0 - r[i]);
        }

        let gg = &mut g.gru;
        let x = &c.x;
        gg.w_xn.ger(1.0, &da_n, x, 1.0);
        gg.b_xn += &da_n;
        gg.w_hn.ger(1.0, &d_hn, h_prev, 1.0);
        gg.b_hn += &d_hn;
        gg.w_xz.ger(1.0, &da_z, x, 1.0);
        gg.b_xz += &da_z;
        gg.w_hz.ger(1.0, &da_z, h_prev, 1.0);
        gg.b_hz += &da_z;
        gg.w_xr.ger(1.0, &da_r, x, 1.0);
        gg.b_xr += &da_r;
        gg.w_hr.ger(1.0, &da_r, h_prev, 1.0);
        gg.b_hr += &da_r;

        dh_prev.gemv_tr(1.0, &p.gru.w_hn, &d_hn, 1.0);
        dh_prev.gemv_tr(1.0, &p.gru.w_hz, &da_z, 1.0);
        dh_prev.gemv_tr(1.0, &p.gru.w_hr, &da_r, 1.0);

        let mut dx = DVector::zeros(hidden);
        dx.gemv_tr(1.0, &p.gru.w_xn, &da_n, 0.0);
        dx.gemv_tr(1.0, &p.gru.w_xz, &da_z, 1.0);
        dx.gemv_tr(1.0, &p.gru.w_xr, &da_r, 1.0);
        let da1 = DVector::from_fn(hidden, |i, _| dx[i] * (1.0 - x[i] * x[i]));
        g.fc1.w.ger(1.0, &da1, &c.input, 1.0);
        g.fc1.b += &da1;

        dh_next = dh_prev;
    }

    if let SegmentStart::Episode(o0) = seg.start {
        let o = obs_vector(o0);
        let a1 = p.fch1.apply(&o).map(f64::tanh);
        let da2 = DVector::from_fn(hidden, |i, _| dh_next[i] * (1.0 - h0[i] * h0[i]));
        g.fch2.w.ger(1.0, &da2, &a1, 1.0);
        g.fch2.b += &da2;
        let mut d_a1 = DVector::zeros(hidden);
        d_a1.gemv_tr(1.0, &p.fch2.w, &da2, 0.0);
        let d_pre1 = DVector::from_fn(hidden, |i, _| d_a1[i] * (1.0 - a1[i] * a1[i]));
        g.fch1.w.ger(1.0, &d_pre1, &o, 1.0);
        g.fch1.b += &d_pre1;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_loss_segment_has_zero_gradient() {
        let p = PcmParams::zeros(4);
        let errors = [[0.1; 5]; 3];
        let actions = [[true; 16]; 3];
        let zeros = [[0.0; 5]; 3];
        let seg = Segment {
            start: SegmentStart::Episode(&[0.2; 5]),
            errors: &errors,
            actions: &actions,
            next_obs: &zeros,
            eps: &zeros,
        };
        let mut g = PcmParams::zeros(4);
        let l = backward(&seg, &p, &mut g).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(g.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let p = PcmParams::zeros(2);
        let seg = Segment {
            start: SegmentStart::Stored(&[0.0, 0.0]),
            errors: &[[0.0; 5]; 2],
            actions: &[[false; 16]; 1],
            next_obs: &[[0.0; 5]; 2],
            eps: &[[0.0; 5]; 2],
        };
        assert!(segment_loss(&seg, &p).is_err());
    }
}
