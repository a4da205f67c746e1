use nalgebra::DVector;

use super::params::{GruParams, PcmParams};
use super::INPUT_DIM;
use crate::dynamics::ThrusterCommand;
use crate::error::{Result, SimError};
use crate::seeker::OBS_DIM;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn obs_vector(o: &[f64; OBS_DIM]) -> DVector<f64> {
    DVector::from_column_slice(o)
}

/// Concatenated network input `[e; u]` with thruster flags as 0/1.
pub fn pcm_input(error: &[f64; OBS_DIM], action: &ThrusterCommand) -> [f64; INPUT_DIM] {
    let mut x = [0.0; INPUT_DIM];
    x[..OBS_DIM].copy_from_slice(error);
    for (dst, &on) in x[OBS_DIM..].iter_mut().zip(action) {
        *dst = if on { 1.0 } else { 0.0 };
    }
    x
}

/// Hidden state learned from the first observation of an episode.
pub fn init_hidden(first_obs: &[f64; OBS_DIM], params: &PcmParams) -> DVector<f64> {
    let g = params.fch1.apply(&obs_vector(first_obs)).map(f64::tanh);
    params.fch2.apply(&g).map(f64::tanh)
}

/// Intermediate values of one GRU update, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct GruTrace {
    pub r: DVector<f64>,
    pub z: DVector<f64>,
    pub n: DVector<f64>,
    /// `W_hn h + b_hn`, the recurrent candidate term before reset gating.
    pub hn: DVector<f64>,
    pub h: DVector<f64>,
}

pub(crate) fn gru_trace(x: &DVector<f64>, h_prev: &DVector<f64>, g: &GruParams) -> GruTrace {
    let mut r = &g.b_xr + &g.b_hr;
    r.gemv(1.0, &g.w_xr, x, 1.0);
    r.gemv(1.0, &g.w_hr, h_prev, 1.0);
    r.apply(|v| *v = sigmoid(*v));

    let mut z = &g.b_xz + &g.b_hz;
    z.gemv(1.0, &g.w_xz, x, 1.0);
    z.gemv(1.0, &g.w_hz, h_prev, 1.0);
    z.apply(|v| *v = sigmoid(*v));

    let mut hn = g.b_hn.clone();
    hn.gemv(1.0, &g.w_hn, h_prev, 1.0);

    let mut n = g.b_xn.clone();
    n.gemv(1.0, &g.w_xn, x, 1.0);
    n += r.component_mul(&hn);
    n.apply(|v| *v = v.tanh());

    let h = DVector::from_fn(h_prev.len(), |i, _| (1.0 - z[i]) * n[i] + z[i] * h_prev[i]);
    GruTrace { r, z, n, hn, h }
}

/// `h = (1 − z)∘n + z∘h_prev`.
pub fn gru_step(x: &DVector<f64>, h_prev: &DVector<f64>, gru: &GruParams) -> DVector<f64> {
    gru_trace(x, h_prev, gru).h
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub predicted_obs: [f64; OBS_DIM],
    pub eps_hat: [f64; OBS_DIM],
    pub hidden: DVector<f64>,
}

fn head(layer: &super::params::Dense, h: &DVector<f64>) -> [f64; OBS_DIM] {
    let y = layer.apply(h);
    std::array::from_fn(|i| y[i])
}

/// One network step from the previous prediction error and the action.
pub fn forward_step(
    error: &[f64; OBS_DIM],
    action: &ThrusterCommand,
    hidden: &DVector<f64>,
    params: &PcmParams,
) -> Result<StepOutput> {
    if !error.iter().all(|x| x.is_finite()) {
        return Err(SimError::NonFinite("prediction error input".into()));
    }
    let input = DVector::from_column_slice(&pcm_input(error, action));
    let x = params.fc1.apply(&input).map(f64::tanh);
    let h = gru_step(&x, hidden, &params.gru);
    Ok(StepOutput {
        predicted_obs: head(&params.fc3, &h),
        eps_hat: head(&params.fc4, &h),
        hidden: h,
    })
}

/// Per-episode estimator state.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmState {
    pub hidden: DVector<f64>,
    /// Latest prediction error `e_t = ŏ_t − o_t`.
    pub error: [f64; OBS_DIM],
    pub predicted_obs: [f64; OBS_DIM],
    pub eps_hat: [f64; OBS_DIM],
}

impl PcmState {
    /// `e₀ = 0`, `ε̆₀ = 0`, `h₀` from the first observation.
    pub fn start(first_obs: &[f64; OBS_DIM], params: &PcmParams) -> Self {
        PcmState {
            hidden: init_hidden(first_obs, params),
            error: [0.0; OBS_DIM],
            predicted_obs: [0.0; OBS_DIM],
            eps_hat: [0.0; OBS_DIM],
        }
    }

    /// Run the network on `(e_t, u_t)`, replacing the hidden state and the
    /// prediction for the next observation.
    pub fn advance(&mut self, action: &ThrusterCommand, params: &PcmParams) -> Result<()> {
        let out = forward_step(&self.error, action, &self.hidden, params)?;
        self.hidden = out.hidden;
        self.predicted_obs = out.predicted_obs;
        self.eps_hat = out.eps_hat;
        Ok(())
    }

    /// Record the prediction error against the observation that arrived.
    pub fn observe(&mut self, obs: &[f64; OBS_DIM]) {
        self.error = std::array::from_fn(|i| self.predicted_obs[i] - obs[i]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub obs: f64,
    pub eps: f64,
}

impl std::ops::AddAssign for LossParts {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.obs += o.obs;
        self.eps += o.eps;
    }
}

/// Sum-of-squares losses on both heads.
pub fn loss(
    pred_obs: &[[f64; OBS_DIM]],
    obs: &[[f64; OBS_DIM]],
    pred_eps: &[[f64; OBS_DIM]],
    eps: &[[f64; OBS_DIM]],
) -> Result<LossParts> {
    if pred_obs.len() != obs.len() || pred_eps.len() != eps.len() {
        return Err(SimError::Shape("loss batches differ in length".into()));
    }
    let sq = |a: &[[f64; OBS_DIM]], b: &[[f64; OBS_DIM]]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
            .sum()
    };
    let lo = sq(pred_obs, obs);
    let le = sq(pred_eps, eps);
    Ok(LossParts {
        total: lo + le,
        obs: lo,
        eps: le,
    })
}
