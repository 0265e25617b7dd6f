//! Posterior Fisher information of one vehicle and its power-separable form.
//!
//! With transmit power `p` the posterior information is `J = p A + B`, where
//! `A` is the measurement information at unit power and `B = M_{n|n−1}⁻¹`
//! the prior information. Writing `B^{-1/2} A B^{-1/2} = U Λ Uᵀ` and
//! `B̃ = B^{-1/2} U` gives `J⁻¹ = B̃ (pΛ + I)⁻¹ B̃ᵀ`, so every diagonal entry
//! of the bound is a sum of terms `|b̃|² / (pλ + 1)`.

use nalgebra::DVector;

use crate::array::{predicted_measurement_variances, ArrayConfig, NoiseModel};
use crate::ekf::{
    beta_of, h_real, invert_spd, jacobian_h, radar_noise_diag, update_observation, Observation, PredictedBelief,
    StateMat, StateVec, DIST, THETA,
};
use crate::{Error, Result};

/// Eigen-form of the posterior information of one vehicle at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FimDecomposition {
    pub lambdas: StateVec,
    /// `B̃ = B^{-1/2} U`.
    pub b_tilde: StateMat,
}

impl FimDecomposition {
    /// `(pA + B)⁻¹`.
    pub fn covariance(&self, p: f64) -> StateMat {
        let scale = self.lambdas.map(|l| 1.0 / (p * l + 1.0));
        let scaled = self.b_tilde * StateMat::from_diagonal(&scale);
        scaled * self.b_tilde.transpose()
    }

    /// Weight of each mode in the angle-plus-distance bound,
    /// `|b̃_{θm}|² + |b̃_{dm}|²`.
    pub fn mode_weights(&self) -> StateVec {
        StateVec::from_fn(|m, _| self.b_tilde[(THETA, m)].powi(2) + self.b_tilde[(DIST, m)].powi(2))
    }
}

/// Unit-power measurement information `A = Hᵀ Q̃⁻¹ H` and prior information
/// `B = M_{n|n−1}⁻¹`.
///
/// `Q̃` is the measurement covariance at unit power, evaluated with the
/// predicted reflection coefficient and unit beamforming factor.
pub fn fim_parts(pred: &PredictedBelief, noise: &NoiseModel, array: &ArrayConfig) -> Result<(StateMat, StateMat)> {
    let obs = unit_power_observation(pred, noise, array)?;
    Ok((obs.information(), invert_spd(&pred.m_pred)?))
}

fn unit_power_observation(pred: &PredictedBelief, noise: &NoiseModel, array: &ArrayConfig) -> Result<Observation> {
    let x = &pred.x_pred_1;
    let var = predicted_measurement_variances(1.0, beta_of(x), noise, array)?;
    let h = h_real(x, x[THETA], array)?;
    Observation::new(h.clone(), h, jacobian_h(x, x[THETA], array)?, radar_noise_diag(&var, array.n_rx))
}

/// Symmetric inverse square root of a positive-definite matrix.
fn inv_sqrt(b: &StateMat) -> Result<StateMat> {
    let eig = b.symmetric_eigen();
    let floor = eig.eigenvalues.max() * f64::EPSILON;
    if eig.eigenvalues.iter().any(|&l| !(l > floor)) {
        return Err(Error::numerical(format!(
            "prior information is not positive definite (eigenvalues {:?})",
            eig.eigenvalues.as_slice()
        )));
    }
    let d = eig.eigenvalues.map(|l| l.sqrt().recip());
    Ok(eig.eigenvectors * StateMat::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Eigen-form of `pA + B` with a symmetric square root of `B`.
pub fn decompose(a: &StateMat, b: &StateMat) -> Result<FimDecomposition> {
    let root = inv_sqrt(b)?;
    let s = root * a * root;
    let eig = ((s + s.transpose()) * 0.5).symmetric_eigen();
    Ok(FimDecomposition {
        lambdas: eig.eigenvalues,
        b_tilde: root * eig.eigenvectors,
    })
}

/// Decomposition at the predicted state of one vehicle.
pub fn decompose_prediction(pred: &PredictedBelief, noise: &NoiseModel, array: &ArrayConfig) -> Result<FimDecomposition> {
    let (a, b) = fim_parts(pred, noise, array)?;
    decompose(&a, &b)
}

/// Angle and distance bounds `(c11, c22)` at power `p`.
pub fn pcrb_theta_d(decomp: &FimDecomposition, p: f64) -> (f64, f64) {
    let mut c = (0.0, 0.0);
    for m in 0..5 {
        let s = 1.0 / (p * decomp.lambdas[m] + 1.0);
        c.0 += decomp.b_tilde[(THETA, m)].powi(2) * s;
        c.1 += decomp.b_tilde[(DIST, m)].powi(2) * s;
    }
    c
}

/// Relative Frobenius distance between the predicted bound at power `p` and
/// the MSE matrix of a Kalman update with measurement covariance `Q̃ / p`.
pub fn decomposition_gap(pred: &PredictedBelief, p: f64, noise: &NoiseModel, array: &ArrayConfig) -> Result<f64> {
    let (a, b) = fim_parts(pred, noise, array)?;
    let bound = decompose(&a, &b)?.covariance(p);
    let m_n = if p > 0.0 {
        let unit = unit_power_observation(pred, noise, array)?;
        let obs = Observation {
            q_diag: unit.q_diag / p,
            ..unit
        };
        update_observation(pred, &obs)?.m
    } else {
        // No transmission: the update leaves the prediction untouched.
        pred.m_pred
    };
    Ok((bound - m_n).norm() / m_n.norm())
}

/// Summed `c11 + c22` over vehicles, each at its own power.
pub fn total_objective(decomps: &[FimDecomposition], p: &[f64]) -> f64 {
    decomps
        .iter()
        .zip(p)
        .map(|(d, &pk)| {
            let (c11, c22) = pcrb_theta_d(d, pk);
            c11 + c22
        })
        .sum()
}

/// Dimension check for `A`: the rank cannot exceed the measurement length.
pub fn information_rank(a: &StateMat, tol: f64) -> usize {
    let eig = a.symmetric_eigenvalues();
    let top = eig.amax();
    eig.iter().filter(|&&l| l > tol * top).count()
}

/// Power grid helper for monotonicity checks.
pub fn bound_on_grid(decomp: &FimDecomposition, powers: &[f64]) -> DVector<f64> {
    DVector::from_iterator(powers.len(), powers.iter().map(|&p| {
        let (c11, c22) = pcrb_theta_d(decomp, p);
        c11 + c22
    }))
}
