//! Extended Kalman filter over the real state `(θ, d, v, Re β, Im β)`.
//!
//! The radar observation is stacked as `(Re r̃, Im r̃, τ, μ)`, so every
//! filter matrix is real. Measurement noise covariances are diagonal and
//! passed as their diagonal.

use log::debug;
use nalgebra::{DMatrix, DVector, Matrix5, Vector5};
use num_complex::Complex64;

use crate::array::{
    predicted_measurement_variances, steering_inner_grad, ArrayConfig, MeasurementVariances, NoiseModel,
};
use crate::kinematics::approx_step;
use crate::measurement::{h_of, pilot_of, pilot_variances, Measurement, PilotMeasurement};
use crate::{Error, Result};

pub type StateVec = Vector5<f64>;
pub type StateMat = Matrix5<f64>;

pub const THETA: usize = 0;
pub const DIST: usize = 1;
pub const SPEED: usize = 2;
pub const BETA_RE: usize = 3;
pub const BETA_IM: usize = 4;

const THETA_MIN: f64 = 0.1 * std::f64::consts::PI / 180.0;
const THETA_MAX: f64 = 179.9 * std::f64::consts::PI / 180.0;
const D_MIN: f64 = 0.1;

/// Filter estimate and its MSE matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub x_hat: StateVec,
    pub m: StateMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedBelief {
    /// One-step prediction `x̂_{n|n−1}`.
    pub x_pred_1: StateVec,
    /// Two-step prediction `x̂_{n+1|n−1}`.
    pub x_pred_2: StateVec,
    /// Predicted MSE matrix `M_{n|n−1}`.
    pub m_pred: StateMat,
}

impl Belief {
    pub fn new(theta: f64, d: f64, v: f64, beta: Complex64, m: StateMat) -> Self {
        Self {
            x_hat: state(theta, d, v, beta),
            m,
        }
    }

    pub fn beta(&self) -> Complex64 {
        beta_of(&self.x_hat)
    }
}

pub fn state(theta: f64, d: f64, v: f64, beta: Complex64) -> StateVec {
    StateVec::new(theta, d, v, beta.re, beta.im)
}

pub fn beta_of(x: &StateVec) -> Complex64 {
    Complex64::new(x[BETA_RE], x[BETA_IM])
}

fn check_distance(x: &StateVec) -> Result<()> {
    if !(x[DIST] > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {}", x[DIST])));
    }
    Ok(())
}

/// State model `g`.
pub fn g(x: &StateVec, dt: f64) -> Result<StateVec> {
    check_distance(x)?;
    let (theta, d, v, beta) = approx_step(x[THETA], x[DIST], x[SPEED], beta_of(x), dt);
    Ok(state(theta, d, v, beta))
}

/// Jacobian of `g`; the β rows of the complex model are split into the
/// real and imaginary part, which share the scale factor.
pub fn jacobian_g(x: &StateVec, dt: f64) -> Result<StateMat> {
    check_distance(x)?;
    let (theta, d, v) = (x[THETA], x[DIST], x[SPEED]);
    let (s, c) = theta.sin_cos();
    let scale = 1.0 + v * dt * c / d;
    let mut jac = StateMat::identity();
    jac[(THETA, THETA)] = 1.0 + v * dt * c / d;
    jac[(THETA, DIST)] = -v * dt * s / (d * d);
    jac[(THETA, SPEED)] = dt * s / d;
    jac[(DIST, THETA)] = v * dt * s;
    jac[(DIST, SPEED)] = -dt * c;
    for row in [BETA_RE, BETA_IM] {
        let b = x[row];
        jac[(row, THETA)] = -b * v * dt * s / d;
        jac[(row, DIST)] = -b * v * dt * c / (d * d);
        jac[(row, SPEED)] = b * dt * c / d;
        jac[(row, row)] = scale;
    }
    Ok(jac)
}

/// Real stacked radar observation of state `x` with the beam at `theta_pred`.
pub fn h_real(x: &StateVec, theta_pred: f64, array: &ArrayConfig) -> Result<DVector<f64>> {
    Ok(h_of(x[THETA], x[DIST], x[SPEED], beta_of(x), theta_pred, array)?.to_real())
}

/// Jacobian of [`h_real`], `(2 N_r + 2) × 5`.
pub fn jacobian_h(x: &StateVec, theta_pred: f64, array: &ArrayConfig) -> Result<DMatrix<f64>> {
    check_distance(x)?;
    let n = array.n_rx;
    let (theta, v) = (x[THETA], x[SPEED]);
    let psi = array.array_angle(theta);
    let (delta, d_delta, _) = steering_inner_grad(psi, array.array_angle(theta_pred), array.n_tx);
    let b = array.receive_steering(theta);
    let kb = array.kappa() * beta_of(x);
    let jpi_sin = Complex64::new(0.0, std::f64::consts::PI * psi.sin());

    let mut jac = DMatrix::zeros(2 * n + 2, 5);
    for m in 0..n {
        let db = jpi_sin * m as f64 * b[m];
        let dtheta = kb * (d_delta * b[m] + delta * db);
        let dre = array.kappa() * delta * b[m];
        let dim = Complex64::i() * dre;
        for (col, z) in [(THETA, dtheta), (BETA_RE, dre), (BETA_IM, dim)] {
            jac[(m, col)] = z.re;
            jac[(n + m, col)] = z.im;
        }
    }
    let (s, c) = theta.sin_cos();
    let doppler_scale = 2.0 * array.carrier_hz / array.light_speed;
    jac[(2 * n, DIST)] = 2.0 / array.light_speed;
    jac[(2 * n + 1, THETA)] = -doppler_scale * v * s;
    jac[(2 * n + 1, SPEED)] = doppler_scale * c;
    Ok(jac)
}

/// State-noise covariance; the complex β variance is split over its parts.
pub fn process_noise_matrix(noise: &NoiseModel) -> StateMat {
    let vb = 0.5 * noise.sigma_beta * noise.sigma_beta;
    StateMat::from_diagonal(&StateVec::new(
        noise.sigma_theta.powi(2),
        noise.sigma_d.powi(2),
        noise.sigma_v.powi(2),
        vb,
        vb,
    ))
}

/// Diagonal of the real radar measurement covariance: each complex angle
/// entry contributes half its variance to the real and imaginary rows.
pub fn radar_noise_diag(var: &MeasurementVariances, n_rx: usize) -> DVector<f64> {
    let mut q = DVector::from_element(2 * n_rx + 2, 0.5 * var.angle);
    q[2 * n_rx] = var.delay;
    q[2 * n_rx + 1] = var.doppler;
    q
}

fn symmetrize(m: &StateMat) -> StateMat {
    (m + m.transpose()) * 0.5
}

fn clamp_state(x: &mut StateVec, stage: &str) {
    let theta = x[THETA].clamp(THETA_MIN, THETA_MAX);
    if theta != x[THETA] {
        debug!("{stage}: angle estimate {} clamped to {theta}", x[THETA]);
        x[THETA] = theta;
    }
    if x[DIST] < D_MIN {
        debug!("{stage}: distance estimate {} clamped to {D_MIN}", x[DIST]);
        x[DIST] = D_MIN;
    }
}

/// One- and two-step prediction with `M_pred = G M Gᵀ + Q_s`.
pub fn predict(belief: &Belief, dt: f64, q_s: &StateMat) -> Result<PredictedBelief> {
    let jac = jacobian_g(&belief.x_hat, dt)?;
    let mut x_pred_1 = g(&belief.x_hat, dt)?;
    clamp_state(&mut x_pred_1, "prediction");
    let mut x_pred_2 = g(&x_pred_1, dt)?;
    clamp_state(&mut x_pred_2, "prediction");
    let m_pred = symmetrize(&(jac * belief.m * jac.transpose() + q_s));
    Ok(PredictedBelief {
        x_pred_1,
        x_pred_2,
        m_pred,
    })
}

/// A linearized observation at the one-step prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: DVector<f64>,
    /// `h(x̂_{n|n−1})`.
    pub h_pred: DVector<f64>,
    pub jac: DMatrix<f64>,
    /// Diagonal of the measurement covariance.
    pub q_diag: DVector<f64>,
}

impl Observation {
    pub fn new(y: DVector<f64>, h_pred: DVector<f64>, jac: DMatrix<f64>, q_diag: DVector<f64>) -> Result<Self> {
        let m = y.len();
        if h_pred.len() != m || jac.nrows() != m || jac.ncols() != 5 || q_diag.len() != m {
            return Err(Error::usage(format!(
                "observation shapes disagree: y {}, h {}, H {}x{}, Q {}",
                m,
                h_pred.len(),
                jac.nrows(),
                jac.ncols(),
                q_diag.len()
            )));
        }
        if q_diag.iter().any(|&q| !(q > 0.0) || !q.is_finite()) {
            return Err(Error::domain("measurement covariance must be positive definite"));
        }
        Ok(Self { y, h_pred, jac, q_diag })
    }

    /// Radar observation with the beam at `θ̂_{n|n−1}` and a given
    /// measurement covariance diagonal.
    pub fn radar(pred: &PredictedBelief, y: &Measurement, q_diag: DVector<f64>, array: &ArrayConfig) -> Result<Self> {
        let x = &pred.x_pred_1;
        let theta_pred = x[THETA];
        Self::new(
            y.to_real(),
            h_real(x, theta_pred, array)?,
            jacobian_h(x, theta_pred, array)?,
            q_diag,
        )
    }

    /// Radar observation with the covariance the RSU can predict: power `p`,
    /// predicted reflection coefficient, unit beamforming factor.
    pub fn radar_predicted(
        pred: &PredictedBelief,
        y: &Measurement,
        p: f64,
        noise: &NoiseModel,
        array: &ArrayConfig,
    ) -> Result<Self> {
        let var = predicted_measurement_variances(p, beta_of(&pred.x_pred_1), noise, array)?;
        Self::radar(pred, y, radar_noise_diag(&var, array.n_rx), array)
    }

    /// Feedback-baseline observation. The channel coefficient `alpha` is
    /// known; the vehicle combines with its beam at `theta_rx`. `noise`
    /// carries the baseline's matched-filtering gain.
    pub fn pilot(
        pred: &PredictedBelief,
        y: &PilotMeasurement,
        theta_rx: f64,
        alpha: Complex64,
        p: f64,
        noise: &NoiseModel,
        array: &ArrayConfig,
    ) -> Result<Self> {
        let x = &pred.x_pred_1;
        check_distance(x)?;
        let (theta, d, v) = (x[THETA], x[DIST], x[SPEED]);
        let beam = theta;
        let psi = array.array_angle(theta);
        let (tx, d_tx, _) = steering_inner_grad(psi, array.array_angle(beam), array.n_tx);
        let (rx, _, d_rx) = steering_inner_grad(array.array_angle(theta_rx), psi, array.m_veh);
        let amp = array.kappa_tilde() * p.sqrt() * alpha;
        let c = pilot_of(theta, beam, theta_rx, alpha, p, array);
        let dc = amp * (d_rx * tx + rx * d_tx);
        let h_pred = PilotMeasurement {
            pilot: c,
            tau: 2.0 * d / array.light_speed,
            mu: 2.0 * v * theta.cos() * array.carrier_hz / array.light_speed,
        }
        .to_real();

        let mut jac = DMatrix::zeros(4, 5);
        jac[(0, THETA)] = dc.re;
        jac[(1, THETA)] = dc.im;
        let doppler_scale = 2.0 * array.carrier_hz / array.light_speed;
        jac[(2, DIST)] = 2.0 / array.light_speed;
        jac[(3, THETA)] = -doppler_scale * v * theta.sin();
        jac[(3, SPEED)] = doppler_scale * theta.cos();

        let var = pilot_variances(p, alpha, Complex64::new(1.0, 0.0), noise, array)?;
        let q = DVector::from_vec(vec![0.5 * var.angle, 0.5 * var.angle, var.delay, var.doppler]);
        Self::new(y.to_real(), h_pred, jac, q)
    }

    /// Whitened Jacobian `Q^{-1/2} H` and innovation `Q^{-1/2} (y − h)`.
    fn whitened(&self) -> (DMatrix<f64>, DVector<f64>) {
        let w = self.q_diag.map(|q| q.sqrt().recip());
        let mut jac = self.jac.clone();
        for (mut row, &wi) in jac.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let e = (&self.y - &self.h_pred).component_mul(&w);
        (jac, e)
    }

    /// Measurement information `Hᵀ Q⁻¹ H`.
    pub fn information(&self) -> StateMat {
        let (jac, _) = self.whitened();
        let info = jac.transpose() * &jac;
        StateMat::from_fn(|i, j| info[(i, j)])
    }
}

fn finish(pred: &PredictedBelief, dx: StateVec, m: StateMat) -> Belief {
    let mut x_hat = pred.x_pred_1 + dx;
    clamp_state(&mut x_hat, "update");
    Belief {
        x_hat,
        m: symmetrize(&m),
    }
}

/// Kalman update in gain form:
/// `K = M Hᵀ (Q + H M Hᵀ)⁻¹`, `x̂ = x̂_{n|n−1} + K (y − h)`, `M_n = (I − K H) M`.
///
/// The innovation covariance is whitened by `Q^{-1/2}` and solved by
/// Cholesky.
pub fn update_observation(pred: &PredictedBelief, obs: &Observation) -> Result<Belief> {
    let (jac, e) = obs.whitened();
    let m = &pred.m_pred;
    let hm = &jac * DMatrix::from_fn(5, 5, |i, j| m[(i, j)]);
    let mut s = &hm * jac.transpose();
    for i in 0..s.nrows() {
        s[(i, i)] += 1.0;
    }
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::numerical("innovation covariance is not positive definite"))?;
    // X = S⁻¹ H M, so K = Xᵀ and K H M = Xᵀ H M.
    let x = chol.solve(&hm);
    let dx = x.transpose() * e;
    let khm = x.transpose() * &hm;
    let m_new = m - StateMat::from_fn(|i, j| khm[(i, j)]);
    Ok(finish(pred, StateVec::from_iterator(dx.iter().copied()), m_new))
}

/// Radar update with a given measurement covariance diagonal.
pub fn update(pred: &PredictedBelief, y: &Measurement, q_diag: DVector<f64>, array: &ArrayConfig) -> Result<Belief> {
    update_observation(pred, &Observation::radar(pred, y, q_diag, array)?)
}

/// The same update in information form:
/// `M_n = (M⁻¹ + Hᵀ Q⁻¹ H)⁻¹`, `x̂ = x̂_{n|n−1} + M_n Hᵀ Q⁻¹ (y − h)`.
///
/// Costs `O(m)` in the measurement length instead of `O(m³)`.
pub fn update_information(pred: &PredictedBelief, obs: &Observation) -> Result<Belief> {
    let (jac, e) = obs.whitened();
    let prior_info = invert_spd(&pred.m_pred)?;
    let info = prior_info + obs.information();
    let chol = info
        .cholesky()
        .ok_or_else(|| Error::numerical("posterior information is not positive definite"))?;
    let m_new = chol.inverse();
    let score = jac.transpose() * e;
    let dx = m_new * StateVec::from_iterator(score.iter().copied());
    Ok(finish(pred, dx, m_new))
}

/// Inverse of a symmetric positive-definite 5×5 matrix.
pub fn invert_spd(m: &StateMat) -> Result<StateMat> {
    m.cholesky()
        .map(|c| symmetrize(&c.inverse()))
        .ok_or_else(|| Error::numerical("matrix is not positive definite"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deg;
    use approx::assert_relative_eq;

    fn array(n: usize) -> ArrayConfig {
        ArrayConfig::new(n, n, n, 30e9).unwrap()
    }

    fn x0() -> StateVec {
        state(deg(9.2), 25.0, 20.0, Complex64::new(0.5, 0.5))
    }

    fn prior(noise: &NoiseModel) -> StateMat {
        process_noise_matrix(noise) * 4.0
    }

    /// Central differences of `f` at `x`, step `h` relative to each entry.
    fn numeric_jacobian(f: impl Fn(&StateVec) -> DVector<f64>, x: &StateVec, h: f64) -> DMatrix<f64> {
        let rows = f(x).len();
        let mut out = DMatrix::zeros(rows, 5);
        for j in 0..5 {
            let step = h * x[j].abs().max(1.0);
            let mut xp = *x;
            let mut xm = *x;
            xp[j] += step;
            xm[j] -= step;
            let col = (f(&xp) - f(&xm)) / (2.0 * step);
            out.set_column(j, &col);
        }
        out
    }

    #[test]
    fn jacobian_g_entry_example() {
        let jac = jacobian_g(&x0(), 0.02).unwrap();
        assert_relative_eq!(jac[(THETA, SPEED)], 0.02 * deg(9.2).sin() / 25.0, max_relative = 1e-14);
        assert_relative_eq!(jac[(THETA, SPEED)], 1.279e-4, max_relative = 1e-3);
    }

    #[test]
    fn jacobian_g_matches_differences() {
        let x = x0();
        let num = numeric_jacobian(|z| DVector::from_iterator(5, g(z, 0.02).unwrap().iter().copied()), &x, 1e-6);
        let ana = jacobian_g(&x, 0.02).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let err = (num[(i, j)] - ana[(i, j)]).abs() / ana[(i, j)].abs().max(1e-6);
                assert!(err < 1e-5, "entry ({i},{j}): {} vs {}", num[(i, j)], ana[(i, j)]);
            }
        }
    }

    #[test]
    fn jacobian_g_for_standing_vehicle() {
        // Only the speed column differs from the identity.
        let x = state(deg(50.0), 30.0, 0.0, Complex64::new(0.2, -0.1));
        let jac = jacobian_g(&x, 0.02).unwrap();
        let mut off = jac - StateMat::identity();
        assert!(off.column(SPEED).norm() > 0.0);
        off.set_column(SPEED, &StateVec::zeros());
        assert_eq!(off, StateMat::zeros());
    }

    #[test]
    fn jacobian_h_matches_differences() {
        let a = array(16);
        let x = x0();
        let pred = x[THETA] + deg(0.3);
        let num = numeric_jacobian(|z| h_real(z, pred, &a).unwrap(), &x, 1e-6);
        let ana = jacobian_h(&x, pred, &a).unwrap();
        let err = (&num - &ana).abs().max() / ana.abs().max();
        assert!(err < 1e-6, "relative error {err}");
        assert_relative_eq!(ana[(32, DIST)], 2.0 / 3e8);
    }

    #[test]
    fn jacobian_h_with_unequal_arrays_and_offset() {
        let mut a = ArrayConfig::new(12, 5, 3, 28e9).unwrap();
        a.orientation_offset = deg(4.0);
        let x = state(deg(70.0), 18.0, 11.0, Complex64::new(-0.3, 0.4));
        let pred = deg(69.2);
        let num = numeric_jacobian(|z| h_real(z, pred, &a).unwrap(), &x, 1e-6);
        let ana = jacobian_h(&x, pred, &a).unwrap();
        assert!((&num - &ana).abs().max() / ana.abs().max() < 1e-6);
        let broadside = jacobian_h(&state(deg(90.0), 18.0, 11.0, Complex64::new(0.1, 0.0)), pred, &a).unwrap();
        assert!(broadside[(11, SPEED)].abs() < 1e-12);
    }

    #[test]
    fn pilot_jacobian_matches_differences() {
        let a = array(16);
        let noise = NoiseModel::reference().with_gain(1.0);
        let alpha = Complex64::from_polar(1.0, 0.3);
        let rx = deg(9.5);
        let obs_at = |x: &StateVec| {
            let pred = PredictedBelief {
                x_pred_1: *x,
                x_pred_2: *x,
                m_pred: StateMat::identity(),
            };
            let dummy = PilotMeasurement {
                pilot: Complex64::new(0.0, 0.0),
                tau: 0.0,
                mu: 0.0,
            };
            Observation::pilot(&pred, &dummy, rx, alpha, 2.0, &noise, &a).unwrap()
        };
        // The beam follows the state's own angle, so differentiate with the
        // beam frozen by comparing against the explicit formula instead.
        let x = x0();
        let ana = obs_at(&x).jac;
        let beam = x[THETA];
        let f = |z: &StateVec| {
            let c = pilot_of(z[THETA], beam, rx, alpha, 2.0, &a);
            DVector::from_vec(vec![
                c.re,
                c.im,
                2.0 * z[DIST] / 3e8,
                2.0 * z[SPEED] * z[THETA].cos() * 30e9 / 3e8,
            ])
        };
        let num = numeric_jacobian(f, &x, 1e-6);
        assert!((&num - &ana).abs().max() / ana.abs().max() < 1e-6);
    }

    #[test]
    fn predict_matches_state_model() {
        use crate::kinematics::{evolve_approx, VehicleTruth};
        let noise = NoiseModel::reference();
        let b = Belief {
            x_hat: x0(),
            m: prior(&noise),
        };
        let p = predict(&b, 0.02, &process_noise_matrix(&noise)).unwrap();
        let truth = VehicleTruth::from_initial(deg(9.2), 25.0, 20.0, Complex64::new(0.5, 0.5)).unwrap();
        let s1 = evolve_approx(&truth, 0.02, None).unwrap();
        let s2 = evolve_approx(&s1, 0.02, None).unwrap();
        assert_relative_eq!(p.x_pred_1, state(s1.theta, s1.d, s1.v, s1.beta), max_relative = 1e-14);
        assert_relative_eq!(p.x_pred_2, state(s2.theta, s2.d, s2.v, s2.beta), max_relative = 1e-14);

        let zero = predict(
            &Belief {
                x_hat: x0(),
                m: StateMat::zeros(),
            },
            0.02,
            &StateMat::zeros(),
        )
        .unwrap();
        assert_eq!(zero.m_pred, StateMat::zeros());
    }

    #[test]
    fn standing_vehicle_keeps_prior_without_speed_uncertainty() {
        let mut m = StateMat::from_diagonal(&StateVec::new(1e-4, 0.3, 0.0, 0.01, 0.02));
        m[(0, 1)] = 1e-3;
        m[(1, 0)] = 1e-3;
        let b = Belief {
            x_hat: state(deg(40.0), 30.0, 0.0, Complex64::new(0.1, 0.1)),
            m,
        };
        let p = predict(&b, 0.02, &StateMat::zeros()).unwrap();
        assert_relative_eq!(p.m_pred, m, epsilon = 1e-18);
    }

    fn predicted(noise: &NoiseModel) -> PredictedBelief {
        predict(
            &Belief {
                x_hat: x0(),
                m: prior(noise),
            },
            0.02,
            &process_noise_matrix(noise),
        )
        .unwrap()
    }

    #[test]
    fn zero_innovation_keeps_prediction() {
        let a = array(16);
        let noise = NoiseModel::reference();
        let pred = predicted(&noise);
        let x = pred.x_pred_1;
        let y = h_of(x[THETA], x[DIST], x[SPEED], beta_of(&x), x[THETA], &a).unwrap();
        let obs = Observation::radar_predicted(&pred, &y, 10.0, &noise, &a).unwrap();
        let post = update_observation(&pred, &obs).unwrap();
        assert_relative_eq!(post.x_hat, x, max_relative = 1e-14);
        let post = update_information(&pred, &obs).unwrap();
        assert_relative_eq!(post.x_hat, x, max_relative = 1e-14);
    }

    #[test]
    fn huge_noise_leaves_prior() {
        let a = array(16);
        let noise = NoiseModel::reference();
        let pred = predicted(&noise);
        let x = pred.x_pred_1;
        let y = h_of(x[THETA] + 1e-3, x[DIST], x[SPEED], beta_of(&x), x[THETA], &a).unwrap();
        let obs = Observation::radar_predicted(&pred, &y, 1e-30, &noise, &a).unwrap();
        let post = update_observation(&pred, &obs).unwrap();
        assert!((post.m - pred.m_pred).norm() / pred.m_pred.norm() < 1e-9);
        assert!((post.x_hat - x).norm() < 1e-9);
    }

    #[test]
    fn scalar_update_matches_textbook_kalman() {
        let mut m = StateMat::zeros();
        m[(0, 0)] = 0.4;
        m[(1, 1)] = 2.0;
        let pred = PredictedBelief {
            x_pred_1: state(1.0, 10.0, 3.0, Complex64::new(0.0, 0.0)),
            x_pred_2: state(1.0, 10.0, 3.0, Complex64::new(0.0, 0.0)),
            m_pred: m,
        };
        let mut jac = DMatrix::zeros(1, 5);
        jac[(0, 0)] = 1.0;
        let r = 0.1;
        let obs = Observation::new(
            DVector::from_element(1, 1.5),
            DVector::from_element(1, 1.0),
            jac,
            DVector::from_element(1, r),
        )
        .unwrap();
        let post = update_observation(&pred, &obs).unwrap();
        let k = 0.4 / (0.4 + r);
        assert_relative_eq!(post.x_hat[0], 1.0 + k * 0.5, max_relative = 1e-14);
        assert_relative_eq!(post.m[(0, 0)], 0.4 * r / (0.4 + r), max_relative = 1e-14);
        assert_eq!(post.m[(1, 1)], 2.0);
        assert_eq!(post.x_hat[1], 10.0);
    }

    #[test]
    fn information_identity_and_forms_agree() {
        let a = array(16);
        let noise = NoiseModel::reference();
        let pred = predicted(&noise);
        let x = pred.x_pred_1;
        let y = h_of(x[THETA] + 2e-4, x[DIST] + 0.1, x[SPEED] - 0.2, beta_of(&x), x[THETA], &a).unwrap();
        let obs = Observation::radar_predicted(&pred, &y, 10.0, &noise, &a).unwrap();
        let gain = update_observation(&pred, &obs).unwrap();
        let info = update_information(&pred, &obs).unwrap();
        let lhs = invert_spd(&gain.m).unwrap();
        let rhs = invert_spd(&pred.m_pred).unwrap() + obs.information();
        assert!((lhs - rhs).norm() / lhs.norm() < 1e-8);
        assert!((gain.m - info.m).norm() / gain.m.norm() < 1e-8);
        for i in 0..5 {
            assert_relative_eq!(gain.x_hat[i], info.x_hat[i], max_relative = 1e-8, epsilon = 1e-12);
        }
        assert!(gain.m.symmetric_eigenvalues().min() > -1e-10);
    }

    #[test]
    fn rejects_malformed_observations() {
        let err = Observation::new(
            DVector::zeros(3),
            DVector::zeros(3),
            DMatrix::zeros(3, 5),
            DVector::from_vec(vec![1.0, 0.0, 1.0]),
        );
        assert!(matches!(err, Err(Error::Domain(_))));
        let err = Observation::new(DVector::zeros(3), DVector::zeros(2), DMatrix::zeros(3, 5), DVector::zeros(3));
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn update_clamps_angle() {
        let mut m = StateMat::identity() * 1e-6;
        m[(0, 0)] = 1.0;
        let x = state(deg(0.5), 30.0, 5.0, Complex64::new(0.1, 0.0));
        let pred = PredictedBelief {
            x_pred_1: x,
            x_pred_2: x,
            m_pred: m,
        };
        let mut jac = DMatrix::zeros(1, 5);
        jac[(0, 0)] = 1.0;
        let obs = Observation::new(
            DVector::from_element(1, -1.0),
            DVector::from_element(1, x[THETA]),
            jac,
            DVector::from_element(1, 1e-6),
        )
        .unwrap();
        let post = update_observation(&pred, &obs).unwrap();
        assert_relative_eq!(post.x_hat[THETA], deg(0.1), max_relative = 1e-12);
    }
}
