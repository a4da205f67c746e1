use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::INPUT_DIM;
use crate::error::{Result, SimError};
use crate::seeker::OBS_DIM;

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Dense {
            w: DMatrix::zeros(out, inp),
            b: DVector::zeros(out),
        }
    }

    fn uniform(out: usize, inp: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let mut sample = || bound * (2.0 * rng.random::<f64>() - 1.0);
        let w = DMatrix::from_fn(out, inp, |_, _| sample());
        let b = DVector::from_fn(out, |_, _| sample());
        Dense { w, b }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = self.b.clone();
        y.gemv(1.0, &self.w, x, 1.0);
        y
    }
}

/// Gated recurrent layer. `x` weights act on the layer input, `h` weights on
/// the previous hidden state; `r`, `z`, `n` are the reset gate, update gate
/// and candidate state.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_xr: DMatrix<f64>,
    pub w_hr: DMatrix<f64>,
    pub w_xz: DMatrix<f64>,
    pub w_hz: DMatrix<f64>,
    pub w_xn: DMatrix<f64>,
    pub w_hn: DMatrix<f64>,
    pub b_xr: DVector<f64>,
    pub b_hr: DVector<f64>,
    pub b_xz: DVector<f64>,
    pub b_hz: DVector<f64>,
    pub b_xn: DVector<f64>,
    pub b_hn: DVector<f64>,
}

impl GruParams {
    pub fn zeros(h: usize) -> Self {
        GruParams {
            w_xr: DMatrix::zeros(h, h),
            w_hr: DMatrix::zeros(h, h),
            w_xz: DMatrix::zeros(h, h),
            w_hz: DMatrix::zeros(h, h),
            w_xn: DMatrix::zeros(h, h),
            w_hn: DMatrix::zeros(h, h),
            b_xr: DVector::zeros(h),
            b_hr: DVector::zeros(h),
            b_xz: DVector::zeros(h),
            b_hz: DVector::zeros(h),
            b_xn: DVector::zeros(h),
            b_hn: DVector::zeros(h),
        }
    }
}

/// All trainable parameters of the predictive-coding network.
///
/// * `fch1`, `fch2`: first observation to initial hidden state (tanh, tanh)
/// * `fc1`: `[e; u]` to GRU input (tanh)
/// * `gru`: recurrent layer
/// * `fc3`: hidden state to predicted next observation (linear)
/// * `fc4`: hidden state to estimated scale-factor errors (linear)
#[derive(Debug, Clone, PartialEq)]
pub struct PcmParams {
    pub fch1: Dense,
    pub fch2: Dense,
    pub fc1: Dense,
    pub gru: GruParams,
    pub fc3: Dense,
    pub fc4: Dense,
}

/// Weight initialization choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    /// Multiplier on the default `±1/√fan_in` bound for the observation head.
    pub obs_head_scale: f64,
    /// Multiplier for the error head; zero starts training from the
    /// uncompensated system.
    pub eps_head_scale: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            obs_head_scale: 1.0,
            eps_head_scale: 0.0,
        }
    }
}

pub const TENSOR_COUNT: usize = 22;

impl PcmParams {
    pub fn zeros(hidden: usize) -> Self {
        PcmParams {
            fch1: Dense::zeros(hidden, OBS_DIM),
            fch2: Dense::zeros(hidden, hidden),
            fc1: Dense::zeros(hidden, INPUT_DIM),
            gru: GruParams::zeros(hidden),
            fc3: Dense::zeros(OBS_DIM, hidden),
            fc4: Dense::zeros(OBS_DIM, hidden),
        }
    }

    /// Uniform `±1/√fan_in` initialization (the recurrent layer uses
    /// `1/√hidden` throughout).
    pub fn init(hidden: usize, init: &InitConfig, rng: &mut impl Rng) -> Self {
        let k = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let kh = k(hidden);
        let mut m = |rows, cols| Dense::uniform(rows, cols, kh, rng);
        let (xr, hr, xz, hz, xn, hn) = (
            m(hidden, hidden),
            m(hidden, hidden),
            m(hidden, hidden),
            m(hidden, hidden),
            m(hidden, hidden),
            m(hidden, hidden),
        );
        let gru = GruParams {
            w_xr: xr.w,
            w_hr: hr.w,
            w_xz: xz.w,
            w_hz: hz.w,
            w_xn: xn.w,
            w_hn: hn.w,
            b_xr: xr.b,
            b_hr: hr.b,
            b_xz: xz.b,
            b_hz: hz.b,
            b_xn: xn.b,
            b_hn: hn.b,
        };
        PcmParams {
            fch1: Dense::uniform(hidden, OBS_DIM, k(OBS_DIM), rng),
            fch2: Dense::uniform(hidden, hidden, kh, rng),
            fc1: Dense::uniform(hidden, INPUT_DIM, k(INPUT_DIM), rng),
            gru,
            fc3: Dense::uniform(OBS_DIM, hidden, kh * init.obs_head_scale, rng),
            fc4: Dense::uniform(OBS_DIM, hidden, kh * init.eps_head_scale, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fc1.b.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.hidden())
    }

    /// Stable tensor names, in serialization order.
    pub fn tensor_names() -> [&'static str; TENSOR_COUNT] {
        [
            "fch1.w", "fch1.b", "fch2.w", "fch2.b", "fc1.w", "fc1.b", "gru.w_xr", "gru.w_hr", "gru.w_xz",
            "gru.w_hz", "gru.w_xn", "gru.w_hn", "gru.b_xr", "gru.b_hr", "gru.b_xz", "gru.b_hz", "gru.b_xn",
            "gru.b_hn", "fc3.w", "fc3.b", "fc4.w", "fc4.b",
        ]
    }

    /// `(rows, cols)` per tensor; vectors are `(n, 1)`.
    pub fn shapes(&self) -> [(usize, usize); TENSOR_COUNT] {
        let h = self.hidden();
        let hh = (h, h);
        let hv = (h, 1);
        [
            (h, OBS_DIM),
            hv,
            hh,
            hv,
            (h, INPUT_DIM),
            hv,
            hh,
            hh,
            hh,
            hh,
            hh,
            hh,
            hv,
            hv,
            hv,
            hv,
            hv,
            hv,
            (OBS_DIM, h),
            (OBS_DIM, 1),
            (OBS_DIM, h),
            (OBS_DIM, 1),
        ]
    }

    /// Column-major views of every tensor.
    pub fn tensors(&self) -> [&[f64]; TENSOR_COUNT] {
        let g = &self.gru;
        [
            self.fch1.w.as_slice(),
            self.fch1.b.as_slice(),
            self.fch2.w.as_slice(),
            self.fch2.b.as_slice(),
            self.fc1.w.as_slice(),
            self.fc1.b.as_slice(),
            g.w_xr.as_slice(),
            g.w_hr.as_slice(),
            g.w_xz.as_slice(),
            g.w_hz.as_slice(),
            g.w_xn.as_slice(),
            g.w_hn.as_slice(),
            g.b_xr.as_slice(),
            g.b_hr.as_slice(),
            g.b_xz.as_slice(),
            g.b_hz.as_slice(),
            g.b_xn.as_slice(),
            g.b_hn.as_slice(),
            self.fc3.w.as_slice(),
            self.fc3.b.as_slice(),
            self.fc4.w.as_slice(),
            self.fc4.b.as_slice(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; TENSOR_COUNT] {
        let g = &mut self.gru;
        [
            self.fch1.w.as_mut_slice(),
            self.fch1.b.as_mut_slice(),
            self.fch2.w.as_mut_slice(),
            self.fch2.b.as_mut_slice(),
            self.fc1.w.as_mut_slice(),
            self.fc1.b.as_mut_slice(),
            g.w_xr.as_mut_slice(),
            g.w_hr.as_mut_slice(),
            g.w_xz.as_mut_slice(),
            g.w_hz.as_mut_slice(),
            g.w_xn.as_mut_slice(),
            g.w_hn.as_mut_slice(),
            g.b_xr.as_mut_slice(),
            g.b_hr.as_mut_slice(),
            g.b_xz.as_mut_slice(),
            g.b_hz.as_mut_slice(),
            g.b_xn.as_mut_slice(),
            g.b_hn.as_mut_slice(),
            self.fc3.w.as_mut_slice(),
            self.fc3.b.as_mut_slice(),
            self.fc4.w.as_mut_slice(),
            self.fc4.b.as_mut_slice(),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameter `index` in the flattened (tensor order, column-major) view.
    pub fn get_flat(&self, mut index: usize) -> f64 {
        for t in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for t in self.tensors_mut() {
            if index < t.len() {
                t[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("parameter index out of range")
    }

    /// Name of the tensor holding flat parameter `index`.
    pub fn tensor_of(&self, mut index: usize) -> &'static str {
        for (name, t) in Self::tensor_names().into_iter().zip(self.tensors()) {
            if index < t.len() {
                return name;
            }
            index -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &PcmParams, scale: f64) -> Result<()> {
        if self.hidden() != other.hidden() {
            return Err(SimError::Shape("hidden widths differ".into()));
        }
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        Ok(())
    }
}
