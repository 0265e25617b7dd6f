//! Uniform linear array models at the RSU and the vehicles.
//!
//! Steering vectors use half-wavelength spacing and unit norm:
//! element `i` of `a(θ)` is `exp(-jπ i cosθ) / √n`. Angles are radians
//! everywhere in this module.

use std::f64::consts::{LN_2, PI};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Antenna counts and carrier of the RSU/vehicle link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    /// RSU transmit antennas.
    pub n_tx: usize,
    /// RSU receive antennas.
    pub n_rx: usize,
    /// Antennas per vehicle.
    pub m_veh: usize,
    pub carrier_hz: f64,
    pub light_speed: f64,
    /// Fixed offset between the array axis and the road, added to every
    /// angle before it reaches a steering vector. Zero for a parallel array.
    pub orientation_offset: f64,
}

impl ArrayConfig {
    pub fn new(n_tx: usize, n_rx: usize, m_veh: usize, carrier_hz: f64) -> Result<Self> {
        let cfg = Self {
            n_tx,
            n_rx,
            m_veh,
            carrier_hz,
            light_speed: SPEED_OF_LIGHT,
            orientation_offset: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 || self.m_veh == 0 {
            return Err(Error::domain("antenna counts must be at least 1"));
        }
        if !(self.carrier_hz > 0.0) || !self.carrier_hz.is_finite() {
            return Err(Error::domain("carrier frequency must be positive"));
        }
        if !(self.light_speed > 0.0) {
            return Err(Error::domain("speed of light must be positive"));
        }
        if !self.orientation_offset.is_finite() {
            return Err(Error::domain("orientation offset must be finite"));
        }
        Ok(())
    }

    /// Radar array gain `√(N_t N_r)`.
    pub fn kappa(&self) -> f64 {
        ((self.n_tx * self.n_rx) as f64).sqrt()
    }

    /// Communication array gain `√(N_t M)`.
    pub fn kappa_tilde(&self) -> f64 {
        ((self.n_tx * self.m_veh) as f64).sqrt()
    }

    #[inline]
    pub(crate) fn array_angle(&self, theta: f64) -> f64 {
        theta + self.orientation_offset
    }

    pub fn steering_tx(&self, theta: f64) -> DVector<Complex64> {
        steering(self.array_angle(theta), self.n_tx)
    }

    pub fn receive_steering(&self, theta: f64) -> DVector<Complex64> {
        steering(self.array_angle(theta), self.n_rx)
    }

    pub fn vehicle_steering(&self, theta: f64) -> DVector<Complex64> {
        steering(self.array_angle(theta), self.m_veh)
    }

    /// Transmit beamforming factor `δ = aᴴ(θ) a(θ̂)`.
    pub fn beam_gain(&self, theta: f64, theta_pred: f64) -> Complex64 {
        steering_inner(self.array_angle(theta), self.array_angle(theta_pred), self.n_tx)
    }

    /// Vehicle-side combining factor `uᴴ(θ̂) u(θ)`.
    pub fn vehicle_gain(&self, theta_pred: f64, theta: f64) -> Complex64 {
        steering_inner(self.array_angle(theta_pred), self.array_angle(theta), self.m_veh)
    }
}

/// Noise constants of the radar and communication links and of the state model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Radar receiver noise variance σ².
    pub sigma2: f64,
    /// Communication receiver noise variance σ_C².
    pub sigma2_c: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Matched-filtering gain G.
    pub g_mf: f64,
    /// State-noise standard deviations, in radians, m, m/s and (dimensionless) β.
    pub sigma_theta: f64,
    pub sigma_d: f64,
    pub sigma_v: f64,
    pub sigma_beta: f64,
}

impl NoiseModel {
    /// Constants of the reference vehicular scenario.
    pub fn reference() -> Self {
        Self {
            sigma2: 1.0,
            sigma2_c: 1.0,
            a1: 1.0,
            a2: 6.7e-7,
            a3: 2.0e4,
            g_mf: 10.0,
            sigma_theta: 0.02f64.to_radians(),
            sigma_d: 0.2,
            sigma_v: 0.5,
            sigma_beta: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma2", self.sigma2),
            ("sigma2_c", self.sigma2_c),
            ("a1", self.a1),
            ("a2", self.a2),
            ("a3", self.a3),
            ("sigma_theta", self.sigma_theta),
            ("sigma_d", self.sigma_d),
            ("sigma_v", self.sigma_v),
            ("sigma_beta", self.sigma_beta),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::domain(format!("{name} must be strictly positive, got {value}")));
            }
        }
        if !(self.g_mf >= 1.0) || !self.g_mf.is_finite() {
            return Err(Error::domain(format!(
                "matched-filtering gain must be >= 1, got {}",
                self.g_mf
            )));
        }
        Ok(())
    }

    /// Same model with a different matched-filtering gain.
    pub fn with_gain(mut self, g_mf: f64) -> Self {
        self.g_mf = g_mf;
        self
    }
}

/// ULA steering vector with `n` elements.
pub fn steering(theta: f64, n: usize) -> DVector<Complex64> {
    let scale = (1.0 / n as f64).sqrt();
    let phase_step = -PI * theta.cos();
    DVector::from_fn(n, |i, _| Complex64::from_polar(scale, phase_step * i as f64))
}

/// `sᴴ(θ) s(φ)` for `n`-element steering vectors, without materializing them.
pub fn steering_inner(theta: f64, phi: f64, n: usize) -> Complex64 {
    let step = PI * (theta.cos() - phi.cos());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        acc += Complex64::from_polar(1.0, step * i as f64);
    }
    acc / n as f64
}

/// `sᴴ(θ) s(φ)` together with its partial derivatives in `θ` and `φ`.
pub(crate) fn steering_inner_grad(theta: f64, phi: f64, n: usize) -> (Complex64, Complex64, Complex64) {
    let step = PI * (theta.cos() - phi.cos());
    let (mut val, mut weighted) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for i in 0..n {
        let z = Complex64::from_polar(1.0, step * i as f64);
        val += z;
        weighted += z * i as f64;
    }
    let jpi = Complex64::new(0.0, PI) * weighted / n as f64;
    (val / n as f64, -jpi * theta.sin(), jpi * phi.sin())
}

/// Reflection coefficient `β = ε / (2d)` of a target with complex RCS `ε`.
pub fn reflection_coeff(rcs: Complex64, d: f64) -> Result<Complex64> {
    if !(d > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {d}")));
    }
    Ok(rcs / (2.0 * d))
}

/// Round-trip delay `2d/c`.
pub fn delay_of(d: f64, light_speed: f64) -> f64 {
    2.0 * d / light_speed
}

/// Doppler shift `2 v cosθ f_c / c`.
pub fn doppler_of(v: f64, theta: f64, carrier_hz: f64, light_speed: f64) -> f64 {
    2.0 * v * theta.cos() * carrier_hz / light_speed
}

/// Measurement-noise variances of one radar observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementVariances {
    /// Total variance of each complex angle-measurement entry.
    pub angle: f64,
    /// Delay variance (s²).
    pub delay: f64,
    /// Doppler variance (Hz²).
    pub doppler: f64,
}

impl MeasurementVariances {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            angle: self.angle * factor,
            delay: self.delay * factor,
            doppler: self.doppler * factor,
        }
    }
}

/// Noise variances for transmit power `p`, reflection coefficient `beta` and
/// beamforming factor `delta`, using the matched-filtering gain of `noise`.
pub fn measurement_variances(
    p: f64,
    beta: Complex64,
    delta: Complex64,
    noise: &NoiseModel,
    array: &ArrayConfig,
) -> Result<MeasurementVariances> {
    if !(p > 0.0) {
        return Err(Error::domain(format!("transmit power must be positive, got {p}")));
    }
    let echo = beta.norm_sqr() * delta.norm_sqr();
    if !(echo > 0.0) {
        return Err(Error::domain("zero echo strength (beta or delta vanishes)"));
    }
    let g = noise.g_mf;
    let kappa2 = (array.n_tx * array.n_rx) as f64;
    let common = noise.sigma2 / (g * kappa2 * echo * p);
    Ok(MeasurementVariances {
        angle: noise.a1 * noise.a1 * noise.sigma2 / (g * p),
        delay: noise.a2 * noise.a2 * common,
        doppler: noise.a3 * noise.a3 * common,
    })
}

/// Variances the RSU can predict before the echo arrives: the beamforming
/// factor is unknown and taken as 1, `beta_pred` is the predicted coefficient.
pub fn predicted_measurement_variances(
    p: f64,
    beta_pred: Complex64,
    noise: &NoiseModel,
    array: &ArrayConfig,
) -> Result<MeasurementVariances> {
    measurement_variances(p, beta_pred, Complex64::new(1.0, 0.0), noise, array)
}

/// Effective downlink gain ρ: receive SNR per unit transmit power.
///
/// `theta_pred_1step` steers the RSU beam, `theta_pred_2step` the vehicle's
/// receive beam.
pub fn comm_gain_rho(
    theta_true: f64,
    theta_pred_1step: f64,
    theta_pred_2step: f64,
    alpha: Complex64,
    array: &ArrayConfig,
    sigma2_c: f64,
) -> f64 {
    let rx = array.vehicle_gain(theta_pred_2step, theta_true);
    let tx = array.beam_gain(theta_true, theta_pred_1step);
    (array.kappa_tilde() * alpha * rx * tx).norm_sqr() / sigma2_c
}

/// Sum-rate `Σ log₂(1 + p_k ρ_k)` in bits/s/Hz.
pub fn sum_rate(p: &[f64], rho: &[f64]) -> Result<f64> {
    if p.len() != rho.len() {
        return Err(Error::usage(format!(
            "power vector has {} entries but gain vector has {}",
            p.len(),
            rho.len()
        )));
    }
    Ok(p.iter().zip(rho).map(|(&pk, &rk)| link_rate(pk, rk)).sum())
}

#[inline]
pub(crate) fn link_rate(p: f64, rho: f64) -> f64 {
    (p * rho).ln_1p() / LN_2
}

/// Line-of-sight channel `α = (α̃/d) exp(j 2π f_c d / c)`.
pub fn los_channel(d: f64, tilde_alpha: f64, carrier_hz: f64, light_speed: f64) -> Result<Complex64> {
    if !(d > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {d}")));
    }
    // Reduce the phase in cycles first; f_c d / c is large and the fractional
    // part is all that matters.
    let cycles = carrier_hz * d / light_speed;
    let phase = 2.0 * PI * (cycles - cycles.round());
    Ok(Complex64::from_polar(tilde_alpha / d, phase))
}
