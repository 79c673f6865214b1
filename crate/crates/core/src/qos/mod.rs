//! Forward-collision-warning quality of service: neighbor estimation errors
//! pooled from a run, then Monte Carlo estimates of lane identification and
//! time-to-collision accuracy.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtt::KalmanTrack;
use crate::rng::{self, SimRng, DOMAIN_MONTE_CARLO};
use crate::trace::TraceSample;

/// Estimation errors in the observed vehicle's frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSamples {
    /// Lateral position error, positive to the left of the heading.
    pub dy: Vec<f64>,
    /// Longitudinal position error.
    pub dx: Vec<f64>,
    /// Longitudinal speed error.
    pub dxdot: Vec<f64>,
}

impl ErrorSamples {
    pub fn len(&self) -> usize {
        self.dy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dy.is_empty()
    }

    pub fn push(&mut self, e: FrameError) {
        self.dx.push(e.dx);
        self.dy.push(e.dy);
        self.dxdot.push(e.dxdot);
    }

    /// `n` copies of the same error.
    pub fn constant(dx: f64, dy: f64, dxdot: f64, n: usize) -> Self {
        ErrorSamples { dy: vec![dy; n], dx: vec![dx; n], dxdot: vec![dxdot; n] }
    }

    pub fn get(&self, i: usize) -> FrameError {
        FrameError { dx: self.dx[i], dy: self.dy[i], dxdot: self.dxdot[i] }
    }

    pub fn scale_dy(&self, factor: f64) -> Self {
        ErrorSamples {
            dy: self.dy.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Validation(format!("csv output: {e}"));
        w.write_record(["dx", "dy", "dxdot"]).map_err(err)?;
        for i in 0..self.len() {
            let e = self.get(i);
            w.write_record([e.dx.to_string(), e.dy.to_string(), e.dxdot.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptySamples);
        }
        if self.dy.len() != self.dx.len() || self.dy.len() != self.dxdot.len() {
            return Err(Error::Validation("error sample columns differ in length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub dx: f64,
    pub dy: f64,
    pub dxdot: f64,
}

/// Rotates a world-frame error (estimate − truth) into the frame of a
/// vehicle heading `heading`: longitudinal along the heading, lateral along
/// its left normal.
pub fn rotate_error(ex: f64, ey: f64, evx: f64, evy: f64, heading: f64) -> FrameError {
    let (s, c) = heading.sin_cos();
    FrameError { dx: ex * c + ey * s, dy: -ex * s + ey * c, dxdot: evx * c + evy * s }
}

/// Error of a track estimate against the true sample of the vehicle it
/// follows. Both must refer to the same step.
pub fn track_error(track: &KalmanTrack, truth: &TraceSample) -> FrameError {
    let (x, y) = track.position();
    let (vx, vy) = track.velocity();
    let (tvx, tvy) = truth.velocity();
    rotate_error(x - truth.x, y - truth.y, vx - tvx, vy - tvy, truth.heading)
}

/// Bounded uniform sample of a stream of errors (reservoir sampling).
#[derive(Debug, Clone)]
pub struct ErrorReservoir {
    capacity: usize,
    seen: u64,
    samples: ErrorSamples,
    rng: SimRng,
}

impl ErrorReservoir {
    pub fn new(capacity: usize, rng: SimRng) -> Self {
        ErrorReservoir { capacity, seen: 0, samples: ErrorSamples::default(), rng }
    }

    pub fn offer(&mut self, e: FrameError) {
        self.seen += 1;
        if self.samples.len() < self.capacity {
            self.samples.push(e);
            return;
        }
        let j = self.rng.random_range(0..self.seen);
        if (j as usize) < self.capacity {
            let j = j as usize;
            self.samples.dx[j] = e.dx;
            self.samples.dy[j] = e.dy;
            self.samples.dxdot[j] = e.dxdot;
        }
    }

    /// Errors offered so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn into_samples(self) -> ErrorSamples {
        self.samples
    }
}

/// FCW geometry and sensor noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcwScenario {
    pub lane_half_width_m: f64,
    /// Lateral offset of the vehicle in the adjacent lane.
    pub ov2_offset_m: f64,
    pub true_ttc_s: f64,
    /// Speed differences evaluated; the QoS uses `qos_delta_s`.
    pub delta_s: Vec<f64>,
    pub qos_delta_s: f64,
    /// True speed of the vehicle ahead.
    pub ov1_speed: f64,
    pub sv_pos_noise_std: f64,
    pub sv_speed_noise_factor: f64,
    pub ttc_tolerance_s: f64,
    /// Additional tolerance reported alongside, not used for the QoS.
    pub strict_ttc_tolerance_s: Option<f64>,
}

impl Default for FcwScenario {
    fn default() -> Self {
        FcwScenario {
            lane_half_width_m: 1.8,
            ov2_offset_m: 5.4,
            true_ttc_s: 3.0,
            delta_s: vec![5.0, 15.0],
            qos_delta_s: 5.0,
            ov1_speed: 10.0,
            sv_pos_noise_std: 0.5,
            sv_speed_noise_factor: 0.02,
            ttc_tolerance_s: 0.5,
            strict_ttc_tolerance_s: None,
        }
    }
}

impl FcwScenario {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            ("lane_half_width_m", self.lane_half_width_m),
            ("ov2_offset_m", self.ov2_offset_m),
            ("true_ttc_s", self.true_ttc_s),
            ("qos_delta_s", self.qos_delta_s),
            ("ov1_speed", self.ov1_speed),
            ("ttc_tolerance_s", self.ttc_tolerance_s),
        ];
        for (name, v) in vals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("fcw: {name} must be positive")));
            }
        }
        for (name, v) in [
            ("sv_pos_noise_std", self.sv_pos_noise_std),
            ("sv_speed_noise_factor", self.sv_speed_noise_factor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("fcw: {name} must be >= 0")));
            }
        }
        if self.delta_s.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Config("fcw: delta_s entries must be positive".into()));
        }
        if !self.delta_s.contains(&self.qos_delta_s) {
            return Err(Error::Config("fcw: qos_delta_s must be listed in delta_s".into()));
        }
        Ok(())
    }
}

/// Monte Carlo sizing. Draws are split into `shards` independently seeded
/// chunks; the result depends on `(seed, draws, shards)` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub draws: u64,
    pub shards: u32,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { draws: 100_000, shards: 16 }
    }
}

const LANE_STREAM: u64 = 0;
const TTC_STREAM: u64 = 1 << 32;

fn sharded<F>(mc: McConfig, seed: u64, stream: u64, f: F) -> f64
where
    F: Fn(&mut SimRng, u64) -> u64 + Sync,
{
    let shards = mc.shards.max(1) as u64;
    let hits: u64 = (0..shards)
        .into_par_iter()
        .map(|i| {
            let n = mc.draws / shards + u64::from(i < mc.draws % shards);
            let mut rng = rng::stream(seed, DOMAIN_MONTE_CARLO, stream + i);
            f(&mut rng, n)
        })
        .sum();
    hits as f64 / mc.draws.max(1) as f64
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("finite non-negative std")
}

/// `(P_true+, P_false+)` for lane identification, resampling `δy`.
pub fn mc_lane_probabilities(
    s: &ErrorSamples,
    scenario: &FcwScenario,
    mc: McConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    s.check()?;
    if mc.draws == 0 {
        return Err(Error::Config("monte carlo: draws must be positive".into()));
    }
    let noise = normal(scenario.sv_pos_noise_std);
    let w = scenario.lane_half_width_m;
    let counts = |rng: &mut SimRng, n: u64, adjacent: bool| {
        let mut hit = 0;
        for _ in 0..n {
            let dy = s.dy[rng.random_range(0..s.len())];
            let y_sv = w + noise.sample(rng);
            let y_ov = if adjacent { scenario.ov2_offset_m } else { w } + dy;
            hit += u64::from((y_ov - y_sv).abs() <= w);
        }
        hit
    };
    let p_true = sharded(mc, seed, LANE_STREAM, |r, n| counts(r, n, false));
    let p_false = sharded(mc, seed, LANE_STREAM + (1 << 16), |r, n| counts(r, n, true));
    Ok((p_true, p_false))
}

/// Time to collision, or `None` when the gap is not closing.
pub fn compute_ttc(x_sv: f64, x_ov1: f64, v_sv: f64, v_ov1: f64) -> Option<f64> {
    let closing = v_sv - v_ov1;
    (closing > 0.0).then(|| (x_ov1 - x_sv) / closing)
}

/// Fraction of draws whose TTC lies within `tolerance` of the true value,
/// resampling `(δx, δẋ)` jointly.
pub fn mc_ttc_probability(
    s: &ErrorSamples,
    delta_s: f64,
    tolerance: f64,
    scenario: &FcwScenario,
    mc: McConfig,
    seed: u64,
) -> Result<f64> {
    s.check()?;
    if !(delta_s > 0.0) || mc.draws == 0 {
        return Err(Error::Config("monte carlo: delta_s and draws must be positive".into()));
    }
    let pos = normal(scenario.sv_pos_noise_std);
    let vhat = scenario.ov1_speed;
    let speed = normal(scenario.sv_speed_noise_factor * (vhat + delta_s));
    let stream = TTC_STREAM + ((delta_s * 1000.0).round() as u64) * (1 << 16);
    Ok(sharded(mc, seed, stream, |rng, n| {
        let mut hit = 0;
        for _ in 0..n {
            let i = rng.random_range(0..s.len());
            let x_sv = pos.sample(rng);
            let x_ov1 = scenario.true_ttc_s * delta_s + s.dx[i];
            let v_sv = vhat + delta_s + speed.sample(rng);
            let v_ov1 = vhat + s.dxdot[i];
            if let Some(ttc) = compute_ttc(x_sv, x_ov1, v_sv, v_ov1) {
                hit += u64::from((ttc - scenario.true_ttc_s).abs() <= tolerance);
            }
        }
        hit
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtcResult {
    pub delta_s: f64,
    pub p_ttc: f64,
    pub p_fcw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_ttc_strict: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosReport {
    pub p_true_pos: f64,
    pub p_false_pos: f64,
    pub ttc: Vec<TtcResult>,
    /// `100 · P_FCW` at the QoS speed difference.
    pub qos: f64,
    pub ov1_speed: f64,
    pub draws: u64,
    pub samples: usize,
}

/// `P_FCW` from its three factors.
pub fn p_fcw(p_true_pos: f64, p_false_pos: f64, p_ttc: f64) -> f64 {
    p_true_pos * (1.0 - p_false_pos) * p_ttc
}

/// QoS percentage from the three probabilities at the QoS speed
/// difference.
pub fn qos_fcw(p_true_pos: f64, p_false_pos: f64, p_ttc: f64) -> f64 {
    100.0 * p_fcw(p_true_pos, p_false_pos, p_ttc)
}

/// Full evaluation over an error pool.
pub fn evaluate(s: &ErrorSamples, scenario: &FcwScenario, mc: McConfig, seed: u64) -> Result<QosReport> {
    scenario.validate()?;
    let (p_true_pos, p_false_pos) = mc_lane_probabilities(s, scenario, mc, seed)?;
    let mut ttc = Vec::new();
    let mut qos = 0.0;
    for &d in &scenario.delta_s {
        let p_ttc = mc_ttc_probability(s, d, scenario.ttc_tolerance_s, scenario, mc, seed)?;
        let p_ttc_strict = scenario
            .strict_ttc_tolerance_s
            .map(|tol| mc_ttc_probability(s, d, tol, scenario, mc, seed))
            .transpose()?;
        let p = p_fcw(p_true_pos, p_false_pos, p_ttc);
        if d == scenario.qos_delta_s {
            qos = 100.0 * p;
        }
        ttc.push(TtcResult { delta_s: d, p_ttc, p_fcw: p, p_ttc_strict });
    }
    Ok(QosReport {
        p_true_pos,
        p_false_pos,
        ttc,
        qos,
        ov1_speed: scenario.ov1_speed,
        draws: mc.draws,
        samples: s.len(),
    })
}
