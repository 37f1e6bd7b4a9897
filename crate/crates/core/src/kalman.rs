//! Constant-velocity Kalman filter over (cx, cy, aspect, height).
//!
//! Noise is scaled by the box height, the usual parameterization of
//! SORT-family trackers. The four observed dimensions are independent, so each
//! behaves as its own position/velocity filter.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub type StateVec = SVector<f64, 8>;
pub type StateCov = SMatrix<f64, 8, 8>;
type Obs = SVector<f64, 4>;
type ObsMat = SMatrix<f64, 4, 8>;

/// Noise weights relative to the box height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        KalmanParams { std_weight_position: 1.0 / 20.0, std_weight_velocity: 1.0 / 160.0 }
    }
}

/// Mean is (cx, cy, a, h, vcx, vcy, va, vh).
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVec,
    pub covariance: StateCov,
}

impl KalmanState {
    /// Box at the current mean. Height and aspect are floored so the box stays valid.
    pub fn to_bbox(&self) -> BBox {
        let m = &self.mean;
        BBox::from_cxcyah(m[0], m[1], m[2].max(1e-6), m[3].max(1e-6))
    }
}

fn transition() -> StateCov {
    let mut f = StateCov::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> ObsMat {
    let mut h = ObsMat::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn diag_sq(std: [f64; 8]) -> StateCov {
    StateCov::from_diagonal(&StateVec::from_iterator(std.iter().map(|s| s * s)))
}

pub fn kf_init(bbox: &BBox, params: &KalmanParams) -> KalmanState {
    let [cx, cy, a, h] = bbox.to_cxcyah();
    let mean = StateVec::from_column_slice(&[cx, cy, a, h, 0.0, 0.0, 0.0, 0.0]);
    let p = params.std_weight_position;
    let v = params.std_weight_velocity;
    let covariance = diag_sq([
        2.0 * p * h,
        2.0 * p * h,
        1e-2,
        2.0 * p * h,
        10.0 * v * h,
        10.0 * v * h,
        1e-5,
        10.0 * v * h,
    ]);
    KalmanState { mean, covariance }
}

pub fn kf_predict(state: &KalmanState, params: &KalmanParams) -> KalmanState {
    let h = state.mean[3].abs().max(1e-6);
    let p = params.std_weight_position;
    let v = params.std_weight_velocity;
    let q = diag_sq([p * h, p * h, 1e-2, p * h, v * h, v * h, 1e-5, v * h]);
    let f = transition();
    let mean = f * state.mean;
    let covariance = symmetrize(f * state.covariance * f.transpose() + q);
    KalmanState { mean, covariance }
}

pub fn kf_update(state: &KalmanState, observation_box: &BBox, params: &KalmanParams) -> Result<KalmanState> {
    if !observation_box.is_valid() {
        return Err(Error::InvalidInput(format!("invalid observation {observation_box:?}")));
    }
    let z = Obs::from_column_slice(&observation_box.to_cxcyah());
    let h_ref = state.mean[3].abs().max(1e-6);
    let p = params.std_weight_position;
    let r = SMatrix::<f64, 4, 4>::from_diagonal(&Obs::from_iterator(
        [p * h_ref, p * h_ref, 1e-1, p * h_ref].iter().map(|s| s * s),
    ));

    let hm = observation();
    let s = hm * state.covariance * hm.transpose() + r;
    let s_inv =
        s.try_inverse().ok_or_else(|| Error::InvalidInput("singular innovation covariance".into()))?;
    let gain = state.covariance * hm.transpose() * s_inv;
    let innovation = z - hm * state.mean;
    let mean = state.mean + gain * innovation;

    // Joseph form keeps the posterior symmetric PSD under rounding.
    let i_kh = StateCov::identity() - gain * hm;
    let covariance = symmetrize(i_kh * state.covariance * i_kh.transpose() + gain * r * gain.transpose());
    Ok(KalmanState { mean, covariance })
}

fn symmetrize(m: StateCov) -> StateCov {
    (m + m.transpose()) * 0.5
}
