//! Noisy radar observations at the matched-filter output, and the scalar
//! pilot observation of the feedback-based baseline.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array::{delay_of, doppler_of, measurement_variances, ArrayConfig, MeasurementVariances, NoiseModel};
use crate::kinematics::VehicleTruth;
use crate::{Error, Result};

/// One epoch's radar observation of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Angle measurement, one entry per receive antenna.
    pub r_tilde: DVector<Complex64>,
    /// Round-trip delay (s).
    pub tau: f64,
    /// Doppler shift (Hz).
    pub mu: f64,
}

impl Measurement {
    /// Real stacking `(Re r̃, Im r̃, τ, μ)`.
    pub fn to_real(&self) -> DVector<f64> {
        let n = self.r_tilde.len();
        let mut y = DVector::zeros(2 * n + 2);
        for (i, z) in self.r_tilde.iter().enumerate() {
            y[i] = z.re;
            y[n + i] = z.im;
        }
        y[2 * n] = self.tau;
        y[2 * n + 1] = self.mu;
        y
    }
}

/// Observation of the feedback-based baseline: the receive-combined pilot
/// plus delay and Doppler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotMeasurement {
    pub pilot: Complex64,
    pub tau: f64,
    pub mu: f64,
}

impl PilotMeasurement {
    pub fn to_real(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.pilot.re, self.pilot.im, self.tau, self.mu])
    }
}

/// Noiseless observation of a vehicle at `(theta, d, v, beta)` illuminated by
/// a beam steered at `theta_pred`.
pub fn h_of(theta: f64, d: f64, v: f64, beta: Complex64, theta_pred: f64, array: &ArrayConfig) -> Result<Measurement> {
    if !(d > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {d}")));
    }
    let scale = array.kappa() * beta * array.beam_gain(theta, theta_pred);
    Ok(Measurement {
        r_tilde: array.receive_steering(theta) * scale,
        tau: delay_of(d, array.light_speed),
        mu: doppler_of(v, theta, array.carrier_hz, array.light_speed),
    })
}

/// Noiseless receive-combined pilot `κ̃ √p α uᴴ(θ̂₂) u(θ) aᴴ(θ) a(θ̂₁)`.
pub fn pilot_of(theta: f64, pred_1step: f64, pred_2step: f64, alpha: Complex64, p: f64, array: &ArrayConfig) -> Complex64 {
    array.kappa_tilde()
        * p.sqrt()
        * alpha
        * array.vehicle_gain(pred_2step, theta)
        * array.beam_gain(theta, pred_1step)
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Circularly-symmetric complex Gaussian with total variance `var`.
fn complex_gauss<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    Complex64::new(s * gauss(rng), s * gauss(rng))
}

/// Add measurement noise to a noiseless observation.
pub fn perturb<R: Rng + ?Sized>(clean: &Measurement, var: &MeasurementVariances, rng: &mut R) -> Measurement {
    Measurement {
        r_tilde: clean.r_tilde.map(|z| z + complex_gauss(rng, var.angle)),
        tau: clean.tau + var.delay.sqrt() * gauss(rng),
        mu: clean.mu + var.doppler.sqrt() * gauss(rng),
    }
}

/// Noisy radar observation of `state` at transmit power `p`. The noise
/// variances use the true reflection coefficient and beamforming factor.
pub fn sample<R: Rng + ?Sized>(
    state: &VehicleTruth,
    theta_pred: f64,
    p: f64,
    noise: &NoiseModel,
    array: &ArrayConfig,
    rng: &mut R,
) -> Result<Measurement> {
    let clean = h_of(state.theta, state.d, state.v, state.beta, theta_pred, array)?;
    let delta = array.beam_gain(state.theta, theta_pred);
    let var = measurement_variances(p, state.beta, delta, noise, array)?;
    Ok(perturb(&clean, &var, rng))
}

/// Variances of the feedback baseline at power `p`: the pilot noise is not
/// scaled by `p` (the pilot amplitude carries `√p`), delay and Doppler follow
/// the radar model with `α` in place of `β`.
pub fn pilot_variances(p: f64, alpha: Complex64, delta: Complex64, noise: &NoiseModel, array: &ArrayConfig) -> Result<MeasurementVariances> {
    let mut var = measurement_variances(p, alpha, delta, noise, array)?;
    var.angle = noise.a1 * noise.a1 * noise.sigma2 / noise.g_mf;
    Ok(var)
}

/// Noisy feedback-baseline observation. Pass the noise model with the
/// baseline's matched-filtering gain (1 for a single pilot).
#[allow(clippy::too_many_arguments)]
pub fn feedback_pilot_sample<R: Rng + ?Sized>(
    state: &VehicleTruth,
    pred_1step: f64,
    pred_2step: f64,
    alpha: Complex64,
    p: f64,
    noise: &NoiseModel,
    array: &ArrayConfig,
    rng: &mut R,
) -> Result<PilotMeasurement> {
    let delta = array.beam_gain(state.theta, pred_1step);
    let var = pilot_variances(p, alpha, delta, noise, array)?;
    let clean = pilot_of(state.theta, pred_1step, pred_2step, alpha, p, array);
    Ok(PilotMeasurement {
        pilot: clean + complex_gauss(rng, var.angle),
        tau: delay_of(state.d, array.light_speed) + var.delay.sqrt() * gauss(rng),
        mu: doppler_of(state.v, state.theta, array.carrier_hz, array.light_speed) + var.doppler.sqrt() * gauss(rng),
    })
}

/// Independent reproducible stream for one (trial, vehicle, epoch) triple.
pub fn stream_rng(master_seed: u64, trial: u64, vehicle: u32, epoch: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream((u64::from(vehicle) << 32) | u64::from(epoch));
    rng
}

/// Prior-free estimate of one vehicle's state from a single observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEstimate {
    pub theta: f64,
    pub d: f64,
    pub v: f64,
    pub beta: Complex64,
}

/// Direct estimate of `(θ, d, v, β)` from one observation.
///
/// The angle comes from the phase progression across the receive array, so
/// it needs `N_r ≥ 2`; with one antenna the beam angle is returned. β is the
/// matched projection of `r̃` onto the estimated receive steering vector.
pub fn raw_estimate(y: &Measurement, theta_pred: f64, array: &ArrayConfig) -> RawEstimate {
    let r = &y.r_tilde;
    let lag: Complex64 = (1..r.len()).map(|m| r[m] * r[m - 1].conj()).sum();
    let theta = if r.len() >= 2 && lag.norm() > 0.0 {
        // The phase fixes cos ψ only modulo 2; near endfire the wrap is
        // resolved toward the beam direction.
        let wrapped = -lag.arg() / std::f64::consts::PI;
        let beam = array.array_angle(theta_pred).cos();
        let cos_psi = [wrapped - 2.0, wrapped, wrapped + 2.0]
            .into_iter()
            .min_by(|a, b| (a - beam).abs().total_cmp(&(b - beam).abs()))
            .unwrap_or(wrapped)
            .clamp(-1.0, 1.0);
        cos_psi.acos() - array.orientation_offset
    } else {
        theta_pred
    };
    let d = 0.5 * y.tau * array.light_speed;
    let cos_t = theta.cos();
    let v = if cos_t.abs() > 1e-3 {
        (y.mu * array.light_speed / (2.0 * array.carrier_hz * cos_t)).clamp(0.0, 100.0)
    } else {
        0.0
    };
    let gain = array.kappa() * array.beam_gain(theta, theta_pred);
    let beta = if gain.norm() > 0.0 {
        array.receive_steering(theta).dotc(r) / gain
    } else {
        Complex64::new(0.0, 0.0)
    };
    RawEstimate { theta, d, v, beta }
}
