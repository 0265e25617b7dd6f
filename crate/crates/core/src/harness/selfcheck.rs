//! Invariant suite behind the `check` command.

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::allocation::{max_rate, pcrb_allocate, verify_kkt, water_fill, AllocationProblem, VehicleCoeffs};
use crate::array::{link_rate, ArrayConfig, NoiseModel};
use crate::ekf::{
    g, h_real, jacobian_g, jacobian_h, predict, process_noise_matrix, state, update_observation, Belief, Observation,
    StateVec,
};
use crate::kinematics::{approximation_error, VehicleTruth};
use crate::measurement::{sample, stream_rng};
use crate::pcrb::decomposition_gap;
use crate::{deg, Complex64, Result};

/// Frozen free-running approximation errors for v = 15 m/s, ΔT = 0.1 s,
/// d₀ = 40 m, θ₀ = 18°, 20 slots, from an independent double-precision run.
pub const KINEMATIC_ORACLE_D: f64 = 0.522_318_194_396_174_1;
pub const KINEMATIC_ORACLE_THETA_DEG: f64 = 2.489_735_740_170_568_4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub limit: f64,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} (value {:.3e}, limit {:.3e}, {:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.value,
            self.limit,
            self.seconds
        )
    }
}

fn timed(
    name: &'static str,
    limit: f64,
    f: impl FnOnce() -> Result<(bool, f64, String)>,
) -> Result<CheckResult> {
    let start = Instant::now();
    let (passed, value, detail) = f()?;
    Ok(CheckResult {
        name,
        passed,
        value,
        limit,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// The bound from the decomposition equals the gain-form covariance at
/// every epoch of a tracked single-vehicle pass.
pub fn decomposition_identity(epochs: usize, p: f64, n: usize) -> Result<CheckResult> {
    let limit = 1e-8;
    timed("decomposition_identity", limit, || {
        let array = ArrayConfig::new(n, n, 32, 30e9)?;
        let noise = NoiseModel::reference();
        let q_s = process_noise_matrix(&noise);
        let mut truth = VehicleTruth::from_initial(deg(9.2), 25.0, 20.0, Complex64::new(0.5, 0.5))?;
        let mut belief = Belief {
            x_hat: state(truth.theta, truth.d, truth.v, truth.beta),
            m: q_s,
        };
        let mut worst: f64 = 0.0;
        for epoch in 0..epochs {
            let pred = predict(&belief, 0.02, &q_s)?;
            worst = worst.max(decomposition_gap(&pred, p, &noise, &array)?);
            truth = crate::kinematics::evolve_exact(&truth, 0.02)?;
            let mut rng = stream_rng(7, 0, 0, epoch as u32);
            let y = sample(&truth, pred.x_pred_1[0], p, &noise, &array, &mut rng)?;
            let obs = Observation::radar_predicted(&pred, &y, p, &noise, &array)?;
            belief = update_observation(&pred, &obs)?;
        }
        Ok((worst < limit, worst, format!("{epochs} epochs, N = {n}, p = {p}")))
    })
}

/// Largest per-row relative gap between an analytic Jacobian and central
/// differences.
fn jacobian_gap(analytic: &DMatrix<f64>, f: impl Fn(&StateVec) -> Result<Vec<f64>>, x: &StateVec, step: f64) -> Result<f64> {
    let mut numeric = DMatrix::zeros(analytic.nrows(), analytic.ncols());
    for j in 0..x.len() {
        let h = step * x[j].abs().max(1.0);
        let (mut hi, mut lo) = (*x, *x);
        hi[j] += h;
        lo[j] -= h;
        let (fh, fl) = (f(&hi)?, f(&lo)?);
        for i in 0..numeric.nrows() {
            numeric[(i, j)] = (fh[i] - fl[i]) / (2.0 * h);
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..numeric.nrows() {
        let scale = numeric.row(i).amax().max(analytic.row(i).amax());
        if scale > 0.0 {
            worst = worst.max((analytic.row(i) - numeric.row(i)).amax() / scale);
        }
    }
    Ok(worst)
}

/// Analytic Jacobians of the state and measurement models against central
/// differences at random states.
pub fn jacobians(states: usize, n: usize, seed: u64) -> Result<CheckResult> {
    let limit = 1e-4;
    timed("jacobians", limit, || {
        let array = ArrayConfig::new(n, n, n, 30e9)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut worst_g, mut worst_h): (f64, f64) = (0.0, 0.0);
        for _ in 0..states {
            let x = state(
                deg(rng.random_range(5.0..175.0)),
                rng.random_range(5.0..100.0),
                rng.random_range(0.0..30.0),
                Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
            );
            let dt = rng.random_range(0.01..0.1);
            let theta_pred = x[0] + deg(rng.random_range(-1.0..1.0));
            let jg = DMatrix::from_column_slice(5, 5, jacobian_g(&x, dt)?.as_slice());
            worst_g = worst_g.max(jacobian_gap(&jg, |y| Ok(g(y, dt)?.as_slice().to_vec()), &x, 1e-6)?);
            let jh = jacobian_h(&x, theta_pred, &array)?;
            worst_h = worst_h.max(jacobian_gap(
                &jh,
                |y| Ok(h_real(y, theta_pred, &array)?.as_slice().to_vec()),
                &x,
                1e-6,
            )?);
        }
        let worst = worst_g.max(worst_h);
        Ok((
            worst < limit,
            worst,
            format!("{states} states, N = {n}: g {worst_g:.2e}, h {worst_h:.2e}"),
        ))
    })
}

/// Free-running approximate trajectory against the exact geometry.
pub fn kinematic_approximation() -> Result<CheckResult> {
    let tol = 1e-9;
    timed("kinematic_approximation", tol, || {
        let start = VehicleTruth::from_initial(deg(18.0), 40.0, 15.0, Complex64::new(1.0, 0.0))?;
        let errs = approximation_error(&start, 0.1, 20)?;
        let max_d = errs.iter().map(|e| e.0).fold(0.0, f64::max);
        let max_theta = errs.iter().map(|e| e.1).fold(0.0, f64::max).to_degrees();
        let gap = (max_d - KINEMATIC_ORACLE_D)
            .abs()
            .max((max_theta - KINEMATIC_ORACLE_THETA_DEG).abs());
        Ok((
            gap < tol,
            gap,
            format!("max distance error {max_d:.6} m, max angle error {max_theta:.6} deg"),
        ))
    })
}

/// Uniform draw from the simplex scaled to `total`.
pub fn random_split(rng: &mut impl Rng, k: usize, total: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| total * x / s).collect()
}

/// Water-filling spends the budget and beats random splits.
pub fn water_filling(instances: usize, rivals: usize, seed: u64) -> Result<CheckResult> {
    let limit = 1e-10;
    timed("water_filling", limit, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst_budget: f64 = 0.0;
        let mut beaten = 0usize;
        let mut negative = 0usize;
        for _ in 0..instances {
            let k = rng.random_range(1..=8);
            let rho: Vec<f64> = (0..k).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
            let pt = 10f64.powf(rng.random_range(-1.0..2.0));
            let wf = water_fill(&rho, pt)?;
            worst_budget = worst_budget.max((wf.p.iter().sum::<f64>() - pt).abs() / pt);
            negative += wf.p.iter().filter(|&&x| x < 0.0).count();
            let best: f64 = wf.p.iter().zip(&rho).map(|(&p, &r)| link_rate(p, r)).sum();
            for _ in 0..rivals {
                let p = random_split(&mut rng, k, pt);
                let r: f64 = p.iter().zip(&rho).map(|(&p, &r)| link_rate(p, r)).sum();
                if r > best * (1.0 + 1e-12) {
                    beaten += 1;
                }
            }
        }
        Ok((
            worst_budget < limit && beaten == 0 && negative == 0,
            worst_budget,
            format!("{instances} instances: {beaten} random splits beat it, {negative} negative powers"),
        ))
    })
}

/// Random allocation problem with nonnegative coefficients.
pub fn random_problem(rng: &mut impl Rng, k: usize, frac: f64) -> Result<AllocationProblem> {
    let vehicles: Vec<VehicleCoeffs> = (0..k)
        .map(|_| VehicleCoeffs {
            lambdas: std::array::from_fn(|_| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    10f64.powf(rng.random_range(-2.0..3.0))
                }
            }),
            weights: std::array::from_fn(|_| 10f64.powf(rng.random_range(-3.0..0.0))),
            rho: 10f64.powf(rng.random_range(-1.0..2.0)),
        })
        .collect();
    let p_total = 10f64.powf(rng.random_range(-1.0..1.5));
    let rhos: Vec<f64> = vehicles.iter().map(|v| v.rho).collect();
    let r_max = max_rate(&rhos, p_total)?;
    Ok(AllocationProblem {
        vehicles,
        p_total,
        rate_threshold: frac * r_max,
    })
}

/// Random point that spends the budget and clears the rate threshold by a
/// relative margin of 1e-9: a random split pulled toward the water-filling
/// point until feasible. Without the margin, points on the flat top of the
/// rate near `R_t = R_max` would pass as feasible by round-off.
pub fn random_feasible(rng: &mut impl Rng, problem: &AllocationProblem, wf: &[f64]) -> Vec<f64> {
    let k = wf.len();
    let start = random_split(rng, k, problem.p_total);
    let target = problem.rate_threshold * (1.0 + 1e-9);
    if problem.rate(wf) < target {
        return wf.to_vec();
    }
    let mix = |t: f64| -> Vec<f64> { start.iter().zip(wf).map(|(a, b)| (1.0 - t) * a + t * b).collect() };
    if problem.rate(&start) >= target {
        return start;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if problem.rate(&mix(mid)) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    mix(hi)
}

/// The PCRB allocator meets its constraints, certifies KKT, and is no worse
/// than water-filling or random feasible points.
pub fn allocator_optimality(instances: usize, rivals: usize, seed: u64) -> Result<CheckResult> {
    let limit = 1e-6;
    timed("allocator_optimality", limit, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst_kkt: f64 = 0.0;
        let (mut infeasible, mut above_wf, mut beaten) = (0usize, 0usize, 0usize);
        for _ in 0..instances {
            let k = rng.random_range(1..=8);
            let frac = if rng.random_bool(0.1) { 1.0 } else { rng.random_range(0.0..1.0) };
            let problem = random_problem(&mut rng, k, frac)?;
            let sol = pcrb_allocate(&problem)?;
            let kkt = verify_kkt(&problem, &sol.p);
            worst_kkt = worst_kkt.max(kkt.residual);
            let pt = problem.p_total;
            let spent = (sol.p.iter().sum::<f64>() - pt).abs() <= 1e-8 * pt;
            let rate_ok = sol.achieved_rate >= problem.rate_threshold - 1e-8;
            if !spent || !rate_ok || sol.p.iter().any(|&x| x < -1e-12) {
                infeasible += 1;
            }
            let wf = water_fill(&problem.rhos(), pt)?.p;
            let tol = 1e-9 * sol.objective.abs().max(1.0);
            if problem.rate(&wf) >= problem.rate_threshold && sol.objective > problem.objective(&wf) + tol {
                above_wf += 1;
            }
            for _ in 0..rivals {
                let p = random_feasible(&mut rng, &problem, &wf);
                if problem.objective(&p) < sol.objective - tol {
                    beaten += 1;
                }
            }
        }
        Ok((
            worst_kkt < limit && infeasible == 0 && above_wf == 0 && beaten == 0,
            worst_kkt,
            format!(
                "{instances} instances: {infeasible} constraint violations, {above_wf} worse than water-filling, \
                 {beaten} random points better"
            ),
        ))
    })
}

/// Second differences of every objective term are nonnegative.
pub fn convexity(rows: usize, grid: usize, seed: u64) -> Result<CheckResult> {
    let limit = -1e-10;
    timed("convexity", limit, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        for _ in 0..rows {
            let v = random_problem(&mut rng, 1, 0.0)?;
            let pt = v.p_total;
            let h = pt / grid as f64;
            for (&w, &l) in v.vehicles[0].weights.iter().zip(&v.vehicles[0].lambdas) {
                let f = |p: f64| w / (p * l + 1.0);
                for i in 1..=grid {
                    let p = i as f64 * h;
                    worst = worst.min((f(p + h) - 2.0 * f(p) + f(p - h)) / (h * h));
                }
            }
        }
        Ok((worst >= limit, worst, format!("{rows} rows x 5 terms on {grid} points")))
    })
}

/// Every check at its full size.
pub fn run_all() -> Result<Vec<CheckResult>> {
    Ok(vec![
        decomposition_identity(1000, 10.0, 64)?,
        jacobians(100, 16, 11)?,
        kinematic_approximation()?,
        water_filling(1000, 100, 13)?,
        allocator_optimality(200, 100, 17)?,
        convexity(100, 100, 19)?,
    ])
}
