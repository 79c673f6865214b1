use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::{Beacon, Pseudonym};
use crate::error::{Error, Result};
use crate::trace::Step;

pub type TrackId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Active,
    Inactive,
}

/// Kalman state of one tracked target: `(x, y, ẋ, ẏ)` in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub id: TrackId,
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    /// Step the state and covariance refer to.
    pub state_step: Step,
    pub last_update_step: Step,
    pub pseudonym: Pseudonym,
    pub status: TrackStatus,
}

impl KalmanTrack {
    pub fn position(&self) -> (f64, f64) {
        (self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.state[2], self.state[3])
    }

    /// Steps since the last measurement update, as seen at `step`.
    pub fn idle(&self, step: Step) -> i64 {
        step - self.last_update_step
    }
}

/// Innovation of a measurement against a predicted track.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub z_tilde: Vector4<f64>,
    pub s: Matrix4<f64>,
    pub d2: f64,
}

/// `zᵀ S⁻¹ z` through a Cholesky factorisation of `S`.
pub fn mahalanobis2<const D: usize>(
    z: &nalgebra::SVector<f64, D>,
    s: &nalgebra::SMatrix<f64, D, D>,
) -> Result<f64> {
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numeric("innovation covariance is not positive definite".into()))?;
    let y = chol.solve(z);
    Ok(z.dot(&y).max(0.0))
}

/// Constant-velocity motion with piecewise-constant white acceleration, and a
/// direct measurement of position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanModel {
    /// m/s² standard deviation
    pub process_noise_accel: f64,
    /// m standard deviation
    pub meas_noise_pos: f64,
    /// m/s standard deviation
    pub meas_noise_vel: f64,
}

impl Default for KalmanModel {
    fn default() -> Self {
        KalmanModel {
            process_noise_accel: 2.0,
            meas_noise_pos: 0.5,
            meas_noise_vel: 0.25,
        }
    }
}

impl KalmanModel {
    pub fn transition(dt: f64) -> Matrix4<f64> {
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        f
    }

    pub fn process_noise(&self, dt: f64) -> Matrix4<f64> {
        let q = self.process_noise_accel * self.process_noise_accel;
        let (p, c, v) = (dt.powi(4) / 4.0 * q, dt.powi(3) / 2.0 * q, dt * dt * q);
        Matrix4::new(
            p, 0.0, c, 0.0, //
            0.0, p, 0.0, c, //
            c, 0.0, v, 0.0, //
            0.0, c, 0.0, v,
        )
    }

    pub fn measurement_noise(&self) -> Matrix4<f64> {
        let (p, v) = (
            self.meas_noise_pos * self.meas_noise_pos,
            self.meas_noise_vel * self.meas_noise_vel,
        );
        Matrix4::from_diagonal(&Vector4::new(p, p, v, v))
    }

    /// Starts a track at `b`, velocity taken from its speed and heading.
    pub fn initiate(&self, id: TrackId, b: &Beacon) -> KalmanTrack {
        let r = self.measurement_noise();
        let cov = Matrix4::from_diagonal(&Vector4::new(
            r[(0, 0)],
            r[(1, 1)],
            10.0 * r[(2, 2)],
            10.0 * r[(3, 3)],
        ));
        KalmanTrack {
            id,
            state: b.measurement(),
            covariance: cov,
            state_step: b.step,
            last_update_step: b.step,
            pseudonym: b.pseudonym,
            status: TrackStatus::Active,
        }
    }

    /// Applies `steps` single-step predictions of length `dt`.
    pub fn predict(&self, t: &KalmanTrack, steps: u32, dt: f64) -> KalmanTrack {
        let mut out = t.clone();
        if steps == 0 {
            return out;
        }
        let f = Self::transition(dt);
        let q = self.process_noise(dt);
        for _ in 0..steps {
            out.state = f * out.state;
            out.covariance = symmetrize(f * out.covariance * f.transpose() + q);
        }
        out.state_step += steps as Step;
        out
    }

    /// Predicts `t` forward to `step` (no-op when already there or past it).
    pub fn predict_to(&self, t: &KalmanTrack, step: Step, dt: f64) -> KalmanTrack {
        let steps = (step - t.state_step).max(0) as u32;
        self.predict(t, steps, dt)
    }

    /// Innovation of `b` against `t` (which should already be predicted to `b.step`).
    pub fn gate_distance(&self, t: &KalmanTrack, b: &Beacon) -> Result<Residual> {
        let z_tilde = b.measurement() - t.state;
        let s = t.covariance + self.measurement_noise();
        let d2 = mahalanobis2(&z_tilde, &s)?;
        Ok(Residual { z_tilde, s, d2 })
    }

    /// Kalman correction with `b`. The track adopts the beacon's pseudonym
    /// and becomes active.
    pub fn update(&self, t: &KalmanTrack, b: &Beacon) -> Result<KalmanTrack> {
        let r = self.measurement_noise();
        let s = t.covariance + r;
        let s_inv = s
            .cholesky()
            .ok_or_else(|| Error::Numeric("innovation covariance is not positive definite".into()))?
            .inverse();
        let gain = t.covariance * s_inv;
        let z_tilde = b.measurement() - t.state;
        let i_k = Matrix4::identity() - gain;
        let mut out = t.clone();
        out.state = t.state + gain * z_tilde;
        // Joseph form keeps the covariance symmetric positive definite
        out.covariance = symmetrize(i_k * t.covariance * i_k.transpose() + gain * r * gain.transpose());
        out.state_step = b.step;
        out.last_update_step = b.step;
        out.pseudonym = b.pseudonym;
        out.status = TrackStatus::Active;
        Ok(out)
    }
}

fn symmetrize(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}
