//! Vehicle state evolution.
//!
//! The vehicle drives parallel to the RSU array on a straight road. `θ` is
//! measured from the array axis, so an approaching vehicle has `cosθ > 0`,
//! passes broadside (`θ = 90°`) at its closest point and leaves with
//! `θ → 180°`.
//!
//! Two evolutions are provided: the exact law-of-cosines / law-of-sines
//! recursion used for ground truth, and the first-order approximation used
//! as the filter's state model.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array::{reflection_coeff, NoiseModel};
use crate::{Error, Result};

/// Ground-truth kinematic state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleTruth {
    pub theta: f64,
    pub d: f64,
    pub v: f64,
    pub beta: Complex64,
    /// Constant complex radar cross-section ε (Swerling I).
    pub rcs: Complex64,
}

impl VehicleTruth {
    /// State with the RCS implied by an initial reflection coefficient.
    pub fn from_initial(theta: f64, d: f64, v: f64, beta: Complex64) -> Result<Self> {
        let s = Self {
            theta,
            d,
            v,
            beta,
            rcs: beta * 2.0 * d,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0) {
            return Err(Error::domain(format!("distance must be positive, got {}", self.d)));
        }
        if !(self.v >= 0.0) {
            return Err(Error::domain(format!("speed must be non-negative, got {}", self.v)));
        }
        if !(self.theta > 0.0 && self.theta < std::f64::consts::PI) {
            return Err(Error::domain(format!(
                "angle must lie in (0, pi), got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Zero-mean perturbation added to one approximate step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProcessNoise {
    pub theta: f64,
    pub d: f64,
    pub v: f64,
    pub beta: Complex64,
}

impl ProcessNoise {
    /// Draw from the state-noise model; the complex β noise has total
    /// variance σ_β².
    pub fn sample<R: Rng + ?Sized>(noise: &NoiseModel, rng: &mut R) -> Self {
        let mut n = || -> f64 { StandardNormal.sample(rng) };
        let half = noise.sigma_beta / 2f64.sqrt();
        Self {
            theta: noise.sigma_theta * n(),
            d: noise.sigma_d * n(),
            v: noise.sigma_v * n(),
            beta: Complex64::new(half * n(), half * n()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub n_slots: usize,
    pub initial: VehicleTruth,
    pub process_noise_on: bool,
}

/// One slot of the exact geometric recursion.
pub fn evolve_exact(state: &VehicleTruth, dt: f64) -> Result<VehicleTruth> {
    state.validate()?;
    if !(dt > 0.0) {
        return Err(Error::domain(format!("slot length must be positive, got {dt}")));
    }
    let step = state.v * dt;
    if step >= state.d {
        return Err(Error::domain(format!(
            "vehicle would pass through the RSU in one slot (v*dt = {step}, d = {})",
            state.d
        )));
    }
    if step == 0.0 {
        return Ok(*state);
    }
    let d_next = (state.d * state.d + step * step - 2.0 * state.d * step * state.theta.cos()).sqrt();
    // The turn angle seen from the RSU is small, so the acute asin branch applies.
    let dtheta = (step * state.theta.sin() / d_next).clamp(-1.0, 1.0).asin();
    Ok(VehicleTruth {
        theta: state.theta + dtheta,
        d: d_next,
        v: state.v,
        beta: reflection_coeff(state.rcs, d_next)?,
        rcs: state.rcs,
    })
}

/// Scalar core of the approximate state model, shared with the filter.
#[inline]
pub(crate) fn approx_step(theta: f64, d: f64, v: f64, beta: Complex64, dt: f64) -> (f64, f64, f64, Complex64) {
    let (s, c) = theta.sin_cos();
    let rate = v * dt / d;
    (theta + rate * s, d - v * dt * c, v, beta * (1.0 + rate * c))
}

/// One slot of the first-order state model, with optional additive noise.
pub fn evolve_approx(state: &VehicleTruth, dt: f64, noise: Option<ProcessNoise>) -> Result<VehicleTruth> {
    if !(state.d > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {}", state.d)));
    }
    let (theta, d, v, beta) = approx_step(state.theta, state.d, state.v, state.beta, dt);
    let w = noise.unwrap_or_default();
    Ok(VehicleTruth {
        theta: theta + w.theta,
        d: d + w.d,
        v: v + w.v,
        beta: beta + w.beta,
        rcs: state.rcs,
    })
}

/// Ground-truth trajectory of `cfg.n_slots` slots after the initial state
/// (the initial state itself is not included).
///
/// With process noise on, each exact step is perturbed by a draw from the
/// state-noise model; β then no longer equals `ε/(2d)` exactly.
pub fn generate_trajectory<R: Rng + ?Sized>(
    cfg: &TrajectoryConfig,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<VehicleTruth>> {
    let mut out = Vec::with_capacity(cfg.n_slots);
    let mut state = cfg.initial;
    for _ in 0..cfg.n_slots {
        state = evolve_exact(&state, cfg.dt)?;
        if cfg.process_noise_on {
            let w = ProcessNoise::sample(noise, rng);
            state.theta += w.theta;
            state.d += w.d;
            state.v = (state.v + w.v).max(0.0);
            state.beta += w.beta;
        }
        out.push(state);
    }
    Ok(out)
}

/// Per-slot `(|d_exact − d_approx|, |θ_exact − θ_approx|)` of two noiseless
/// trajectories started from the same state and each fed its own output.
pub fn approximation_error(initial: &VehicleTruth, dt: f64, n_slots: usize) -> Result<Vec<(f64, f64)>> {
    let mut exact = *initial;
    let mut approx = *initial;
    let mut out = Vec::with_capacity(n_slots);
    for _ in 0..n_slots {
        exact = evolve_exact(&exact, dt)?;
        approx = evolve_approx(&approx, dt, None)?;
        out.push(((exact.d - approx.d).abs(), (exact.theta - approx.theta).abs()));
    }
    Ok(out)
}

/// Per-slot error of a single approximate step taken from the exact state.
pub fn one_step_error(initial: &VehicleTruth, dt: f64, n_slots: usize) -> Result<Vec<(f64, f64)>> {
    let mut exact = *initial;
    let mut out = Vec::with_capacity(n_slots);
    for _ in 0..n_slots {
        let approx = evolve_approx(&exact, dt, None)?;
        exact = evolve_exact(&exact, dt)?;
        out.push(((exact.d - approx.d).abs(), (exact.theta - approx.theta).abs()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn truth(theta_deg: f64, d: f64, v: f64) -> VehicleTruth {
        VehicleTruth::from_initial(theta_deg.to_radians(), d, v, Complex64::new(0.5, 0.5)).unwrap()
    }

    #[test]
    fn exact_step_at_broadside() {
        let s = evolve_exact(&truth(90.0, 25.0, 20.0), 0.02).unwrap();
        assert_relative_eq!(s.d, 625.16f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(s.d, 25.003_199_795_226_21, max_relative = 1e-12);
    }

    #[test]
    fn standing_vehicle_does_not_move() {
        let s0 = truth(40.0, 30.0, 0.0);
        assert_eq!(evolve_exact(&s0, 0.1).unwrap(), s0);
        assert_eq!(evolve_approx(&s0, 0.1, None).unwrap(), s0);
        assert!(approximation_error(&s0, 0.1, 5)
            .unwrap()
            .iter()
            .all(|&(a, b)| a == 0.0 && b == 0.0));
    }

    #[test]
    fn approximate_step_example() {
        let s0 = truth(9.2, 25.0, 20.0);
        let s1 = evolve_approx(&s0, 0.02, None).unwrap();
        assert_relative_eq!(s1.d, 24.605_145_493_970_806, max_relative = 1e-12);
        assert_relative_eq!(s1.theta.to_degrees(), 9.346_568_276_452_498, max_relative = 1e-12);
        assert_relative_eq!((s1.beta / s0.beta).re, 1.015_794_180_241_167_9, max_relative = 1e-12);
    }

    #[test]
    fn approximate_step_at_broadside() {
        let s0 = truth(90.0, 25.0, 20.0);
        let s1 = evolve_approx(&s0, 0.02, None).unwrap();
        assert!((s1.d - 25.0).abs() < 1e-12);
        assert_relative_eq!(s1.theta - s0.theta, 20.0 * 0.02 / 25.0, max_relative = 1e-12);
    }

    #[test]
    fn exact_step_rejects_bad_input() {
        assert!(evolve_exact(&truth(30.0, 1.0, 20.0), 0.1).is_err());
        let mut bad = truth(30.0, 10.0, 1.0);
        bad.d = -1.0;
        assert!(evolve_exact(&bad, 0.1).is_err());
        assert!(evolve_approx(&bad, 0.1, None).is_err());
    }

    #[test]
    fn one_step_error_is_second_order() {
        let s0 = truth(18.0, 40.0, 15.0);
        let e = |dt: f64| one_step_error(&s0, dt, 1).unwrap()[0];
        let (full, half) = (e(0.1), e(0.05));
        let rd = full.0 / half.0;
        let rt = full.1 / half.1;
        assert!((3.6..4.4).contains(&rd), "distance ratio {rd}");
        assert!((3.6..4.4).contains(&rt), "angle ratio {rt}");
    }

    #[test]
    fn noisy_trajectory_is_reproducible() {
        use rand::SeedableRng;
        let cfg = TrajectoryConfig {
            dt: 0.02,
            n_slots: 50,
            initial: truth(9.2, 25.0, 20.0),
            process_noise_on: true,
        };
        let noise = NoiseModel::reference();
        let a = generate_trajectory(&cfg, &noise, &mut rand_chacha::ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = generate_trajectory(&cfg, &noise, &mut rand_chacha::ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    /// Independent oracle: move the vehicle in Cartesian coordinates.
    fn cartesian_step(s: &VehicleTruth, dt: f64) -> (f64, f64) {
        let (x, y) = (s.d * s.theta.cos(), s.d * s.theta.sin());
        let x = x - s.v * dt;
        (y.atan2(x), x.hypot(y))
    }

    proptest! {
        #[test]
        fn exact_matches_cartesian_motion(
            theta in 0.02f64..3.12, d in 2.0f64..400.0, v in 0.0f64..45.0, dt in 0.001f64..0.1,
        ) {
            prop_assume!(v * dt < 0.5 * d);
            let s0 = VehicleTruth::from_initial(theta, d, v, Complex64::new(0.3, -0.2)).unwrap();
            let s1 = evolve_exact(&s0, dt).unwrap();
            let (theta_c, d_c) = cartesian_step(&s0, dt);
            prop_assert!((s1.theta - theta_c).abs() < 1e-9);
            prop_assert!((s1.d - d_c).abs() < 1e-9 * d.max(1.0));
            // Reflection coefficient tracks the constant RCS.
            prop_assert!((s1.beta.norm() * 2.0 * s1.d - s0.rcs.norm()).abs() < 1e-9 * s0.rcs.norm());
        }

        #[test]
        fn approximation_is_first_order_accurate(
            theta in 0.05f64..3.09, d in 5.0f64..200.0, step in 0.001f64..0.5,
        ) {
            // Constants from an oracle sweep: distance error <= 0.5 d r^2 and
            // angle error <= 0.553 r^2 with r = v dt / d (for r <= 0.5).
            let step = step * d * 0.5;
            let s0 = VehicleTruth::from_initial(theta, d, step, Complex64::new(1.0, 0.0)).unwrap();
            let e = one_step_error(&s0, 1.0, 1).unwrap()[0];
            let r2 = (step / d).powi(2);
            prop_assert!(e.0 <= 0.55 * d * r2 + 1e-12);
            prop_assert!(e.1 <= 0.6 * r2 + 1e-12);
        }
    }
}
