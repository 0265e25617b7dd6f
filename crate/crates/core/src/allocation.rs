//! Power allocation across vehicle beams.
//!
//! Two allocators share the total budget `P_T`:
//! - water-filling, which maximizes the sum-rate;
//! - PCRB minimization, which minimizes the summed angle-plus-distance bound
//!   subject to the sum-rate staying above a threshold `R_t`.
//!
//! The PCRB problem is separable per vehicle once the multipliers of the rate
//! constraint (ν) and of the budget (η) are fixed. Each vehicle's power then
//! solves a monotone scalar equation; η is found so the budget is met and ν
//! so the rate constraint is met or slack.

use std::f64::consts::LN_2;

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::array::{link_rate, sum_rate};
use crate::pcrb::FimDecomposition;
use crate::{Error, Result};

/// Objective and rate coefficients of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleCoeffs {
    /// Mode eigenvalues λ_m (nonnegative).
    pub lambdas: [f64; 5],
    /// Mode weights `|b̃_{θm}|² + |b̃_{dm}|²`.
    pub weights: [f64; 5],
    /// Rate gain ρ.
    pub rho: f64,
}

impl VehicleCoeffs {
    /// Coefficients from a bound decomposition; round-off negative
    /// eigenvalues are clipped to zero.
    pub fn from_decomposition(decomp: &FimDecomposition, rho: f64) -> Self {
        let w = decomp.mode_weights();
        Self {
            lambdas: std::array::from_fn(|m| decomp.lambdas[m].max(0.0)),
            weights: std::array::from_fn(|m| w[m]),
            rho,
        }
    }

    /// `Σ w/(pλ + 1)`.
    pub fn objective(&self, p: f64) -> f64 {
        self.terms().map(|(w, l)| w / (p * l + 1.0)).sum()
    }

    fn d_objective(&self, p: f64) -> f64 {
        self.terms().map(|(w, l)| -w * l / (p * l + 1.0).powi(2)).sum()
    }

    fn d2_objective(&self, p: f64) -> f64 {
        self.terms().map(|(w, l)| 2.0 * w * l * l / (p * l + 1.0).powi(3)).sum()
    }

    fn d_rate(&self, p: f64) -> f64 {
        self.rho / ((1.0 + self.rho * p) * LN_2)
    }

    fn d2_rate(&self, p: f64) -> f64 {
        -self.rho * self.rho / ((1.0 + self.rho * p).powi(2) * LN_2)
    }

    fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights.iter().copied().zip(self.lambdas.iter().copied())
    }

    /// The objective does not depend on the power.
    fn is_flat(&self) -> bool {
        self.terms().all(|(w, l)| w * l == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub vehicles: Vec<VehicleCoeffs>,
    /// Power budget `P_T`.
    pub p_total: f64,
    /// Sum-rate threshold `R_t`.
    pub rate_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
    /// Summed bound `Σ_k (c11 + c22)`; NaN when no bound coefficients were
    /// involved (plain water-filling).
    pub objective: f64,
    pub achieved_rate: f64,
    pub kkt_residual: f64,
}

impl AllocationProblem {
    pub fn rhos(&self) -> Vec<f64> {
        self.vehicles.iter().map(|v| v.rho).collect()
    }

    pub fn objective(&self, p: &[f64]) -> f64 {
        self.vehicles.iter().zip(p).map(|(v, &pk)| v.objective(pk)).sum()
    }

    pub fn rate(&self, p: &[f64]) -> f64 {
        self.vehicles.iter().zip(p).map(|(v, &pk)| link_rate(pk, v.rho)).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.vehicles.is_empty() {
            return Err(Error::usage("allocation needs at least one vehicle"));
        }
        if !(self.p_total > 0.0) || !self.p_total.is_finite() {
            return Err(Error::domain(format!("power budget must be positive, got {}", self.p_total)));
        }
        if !(self.rate_threshold >= 0.0) {
            return Err(Error::domain(format!(
                "rate threshold must be nonnegative, got {}",
                self.rate_threshold
            )));
        }
        for (k, v) in self.vehicles.iter().enumerate() {
            let ok = v.rho > 0.0
                && v.rho.is_finite()
                && v.lambdas.iter().chain(&v.weights).all(|&c| c >= 0.0 && c.is_finite());
            if !ok {
                return Err(Error::domain(format!("vehicle {k} has invalid coefficients {v:?}")));
            }
        }
        Ok(())
    }

    /// Evaluate a given allocation.
    pub fn evaluate(&self, p: Vec<f64>) -> PowerAllocation {
        let kkt_residual = verify_kkt(self, &p).residual;
        PowerAllocation {
            objective: self.objective(&p),
            achieved_rate: self.rate(&p),
            kkt_residual,
            p,
        }
    }
}

/// Sum-rate-maximizing split `p_k = (γ − 1/ρ_k)⁺` with `Σ p_k = P_T`.
pub fn water_fill(rho: &[f64], p_total: f64) -> Result<PowerAllocation> {
    if rho.is_empty() {
        return Err(Error::usage("water-filling needs at least one channel"));
    }
    if let Some(r) = rho.iter().find(|&&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::domain(format!("channel gains must be positive, got {r}")));
    }
    if !(p_total > 0.0) || !p_total.is_finite() {
        return Err(Error::domain(format!("power budget must be positive, got {p_total}")));
    }
    let level = water_level(rho, p_total);
    let mut p: Vec<f64> = rho.iter().map(|&r| (level - r.recip()).max(0.0)).collect();
    // Put the round-off of the level into the strongest channel.
    let residual = p_total - p.iter().sum::<f64>();
    let strongest = (0..p.len()).max_by(|&a, &b| rho[a].total_cmp(&rho[b])).unwrap_or(0);
    p[strongest] += residual;
    let achieved_rate = sum_rate(&p, rho)?;
    Ok(PowerAllocation {
        p,
        objective: f64::NAN,
        achieved_rate,
        kkt_residual: 0.0,
    })
}

/// Water level γ: with the inverse gains sorted ascending, the first `k`
/// channels are active when `γ = (P_T + Σ_{i<k} 1/ρ_i)/k` lies between the
/// `k`-th and `(k+1)`-th inverse gain.
fn water_level(rho: &[f64], p_total: f64) -> f64 {
    let mut floors: Vec<f64> = rho.iter().map(|r| r.recip()).collect();
    floors.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    let mut level = floors[0] + p_total;
    for (k, &f) in floors.iter().enumerate() {
        acc += f;
        let candidate = (p_total + acc) / (k + 1) as f64;
        if candidate <= f {
            break;
        }
        level = candidate;
        if floors.get(k + 1).is_none_or(|&next| candidate <= next) {
            break;
        }
    }
    level
}

/// Largest achievable sum-rate under the budget.
pub fn max_rate(rho: &[f64], p_total: f64) -> Result<f64> {
    Ok(water_fill(rho, p_total)?.achieved_rate)
}

const MAX_ITER: usize = 200;
/// Relative margin within which the threshold counts as the maximum rate.
const RATE_TOL: f64 = 1e-12;

/// Power of one vehicle for multipliers `(ν, η)`: the root in `[0, P_T]` of
/// the increasing function `f'(p) − ν r'(p) + η`.
fn vehicle_power(v: &VehicleCoeffs, nu: f64, eta: f64, p_total: f64) -> f64 {
    let phi = |p: f64| v.d_objective(p) - nu * v.d_rate(p) + eta;
    if phi(0.0) >= 0.0 {
        return 0.0;
    }
    if phi(p_total) <= 0.0 {
        return p_total;
    }
    let (mut lo, mut hi) = (0.0, p_total);
    let mut p = 0.5 * p_total;
    for _ in 0..MAX_ITER {
        let f = phi(p);
        if f == 0.0 {
            return p;
        }
        if f > 0.0 {
            hi = p;
        } else {
            lo = p;
        }
        if hi - lo <= 1e-15 * p_total {
            break;
        }
        let slope = v.d2_objective(p) - nu * v.d2_rate(p);
        let newton = p - f / slope;
        if slope > 0.0 && newton > lo && newton < hi {
            let step = (newton - p).abs();
            p = newton;
            if step <= 1e-15 * p.max(1e-300) {
                break;
            }
        } else {
            p = 0.5 * (lo + hi);
        }
    }
    p
}

/// Regula falsi with the Illinois modification for a decreasing or
/// increasing scalar function with a sign change on `[lo, hi]`.
fn illinois(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, x_tol: f64, f_tol: f64) -> f64 {
    let (mut f_lo, mut f_hi) = (f(lo), f(hi));
    if f_lo == 0.0 {
        return lo;
    }
    if f_hi == 0.0 {
        return hi;
    }
    let mut side = 0i8;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx.abs() <= f_tol || (hi - lo) <= x_tol {
            return x;
        }
        if (fx > 0.0) == (f_hi > 0.0) {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        }
    }
    x
}

/// Allocation for a given rate multiplier: η chosen so the budget is spent.
fn allocate_for_nu(problem: &AllocationProblem, nu: f64) -> Vec<f64> {
    let pt = problem.p_total;
    let vs = &problem.vehicles;
    if nu == 0.0 && vs.iter().all(VehicleCoeffs::is_flat) {
        // Every split has the same bound; take the rate-maximizing one.
        return water_fill(&problem.rhos(), pt).map(|w| w.p).unwrap_or_default();
    }
    let spend = |eta: f64| vs.iter().map(|v| vehicle_power(v, nu, eta, pt)).sum::<f64>() - pt;
    let eta_hi = vs
        .iter()
        .map(|v| -v.d_objective(0.0) + nu * v.d_rate(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let eta_lo = vs
        .iter()
        .map(|v| -v.d_objective(pt) + nu * v.d_rate(pt))
        .fold(f64::NEG_INFINITY, f64::max);
    let eta = illinois(spend, eta_lo, eta_hi, 1e-15 * eta_hi.abs().max(1e-300), 1e-13 * pt);
    let mut p: Vec<f64> = vs.iter().map(|v| vehicle_power(v, nu, eta, pt)).collect();
    // Flat vehicles and the bracket ends can leave a sliver of the budget.
    let gap = pt - p.iter().sum::<f64>();
    if gap != 0.0 {
        let active: Vec<usize> = (0..p.len()).filter(|&k| p[k] > 0.0).collect();
        let target = if active.is_empty() { (0..p.len()).collect() } else { active };
        let share = gap / target.len() as f64;
        for k in target {
            p[k] = (p[k] + share).max(0.0);
        }
    }
    p
}

/// Minimize the summed bound subject to `Σ p = P_T`, `p ≥ 0` and
/// sum-rate `≥ R_t`.
pub fn pcrb_allocate(problem: &AllocationProblem) -> Result<PowerAllocation> {
    problem.validate()?;
    let pt = problem.p_total;
    let rhos = problem.rhos();
    let wf = water_fill(&rhos, pt)?;
    let r_max = wf.achieved_rate;
    let r_t = problem.rate_threshold;
    let rate_tol = RATE_TOL * r_max.max(1.0);
    if r_t > r_max + rate_tol {
        return Err(Error::Infeasible {
            required: r_t,
            max_rate: r_max,
        });
    }
    if r_t >= r_max - rate_tol {
        debug!("rate threshold at the maximum rate; returning the water-filling split");
        return Ok(problem.evaluate(wf.p));
    }

    let free = allocate_for_nu(problem, 0.0);
    if problem.rate(&free) >= r_t {
        return Ok(problem.evaluate(free));
    }

    // The rate of the multiplier-ν solution increases with ν toward R_max.
    let rate_gap = |nu: f64| problem.rate(&allocate_for_nu(problem, nu)) - r_t;
    let scale = problem
        .vehicles
        .iter()
        .map(|v| -v.d_objective(0.0) / v.d_rate(0.0))
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut nu_lo = 0.0;
    let mut nu_hi = scale;
    let mut found = false;
    for _ in 0..MAX_ITER {
        if rate_gap(nu_hi) >= 0.0 {
            found = true;
            break;
        }
        nu_lo = nu_hi;
        nu_hi *= 2.0;
    }
    if !found {
        debug!("rate multiplier did not reach the threshold; returning the water-filling split");
        return Ok(problem.evaluate(wf.p));
    }
    let nu = illinois(rate_gap, nu_lo, nu_hi, 1e-13 * nu_hi, 1e-12 * r_t.max(1.0));
    let mut p = allocate_for_nu(problem, nu);
    if problem.rate(&p) < r_t {
        // Step toward the feasible side of the bracket.
        let mut hi = nu;
        for _ in 0..64 {
            hi *= 1.0 + 1e-9;
            p = allocate_for_nu(problem, hi);
            if problem.rate(&p) >= r_t - 1e-10 * r_t.max(1.0) {
                break;
            }
        }
    }
    Ok(problem.evaluate(p))
}

/// Karush-Kuhn-Tucker certificate of an allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Fitted multiplier of the rate constraint.
    pub nu: f64,
    /// Fitted multiplier of the budget.
    pub eta: f64,
    /// Largest stationarity violation, relative to the gradient scale.
    pub stationarity: f64,
    /// Largest violation of sign and complementary-slackness conditions.
    pub complementarity: f64,
    /// Largest violation of the constraints themselves.
    pub feasibility: f64,
    /// Maximum of the three.
    pub residual: f64,
}

/// Fit the multipliers by least squares and report how far `p` is from a
/// KKT point of the PCRB problem.
pub fn verify_kkt(problem: &AllocationProblem, p: &[f64]) -> KktReport {
    let pt = problem.p_total;
    let vs = &problem.vehicles;
    let g: Vec<f64> = vs.iter().zip(p).map(|(v, &pk)| v.d_objective(pk)).collect();
    let r: Vec<f64> = vs.iter().zip(p).map(|(v, &pk)| v.d_rate(pk)).collect();
    let active: Vec<usize> = (0..p.len()).filter(|&k| p[k] > 1e-9 * pt).collect();

    let rate = problem.rate(p);
    let rhos = problem.rhos();
    if let (Ok(r_max), Ok(wf)) = (max_rate(&rhos, pt), water_fill(&rhos, pt)) {
        if problem.rate_threshold >= r_max - RATE_TOL * r_max.max(1.0) {
            // The feasible set is the water-filling point alone and the rate
            // and budget gradients are parallel there, so multipliers need
            // not exist; optimality is distance to that point.
            let gap = p.iter().zip(&wf.p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / pt;
            return KktReport {
                nu: 0.0,
                eta: 0.0,
                stationarity: gap,
                complementarity: 0.0,
                feasibility: 0.0,
                residual: gap,
            };
        }
    }
    let rate_slack = rate - problem.rate_threshold;
    let rate_tight = rate_slack <= 1e-8 * problem.rate_threshold.max(1.0);

    let fit_eta = |nu: f64| {
        if active.is_empty() {
            0.0
        } else {
            -active.iter().map(|&k| g[k] - nu * r[k]).sum::<f64>() / active.len() as f64
        }
    };
    let (mut nu, mut eta) = (0.0, fit_eta(0.0));
    if rate_tight && active.len() >= 2 {
        // g_k − ν r_k + η = 0 over the active set, min-norm least squares.
        let a = DMatrix::from_fn(active.len(), 2, |i, j| if j == 0 { -r[active[i]] } else { 1.0 });
        let b = DVector::from_iterator(active.len(), active.iter().map(|&k| -g[k]));
        if let Ok(sol) = a.svd(true, true).solve(&b, 1e-14) {
            if sol[0] >= 0.0 {
                nu = sol[0];
                eta = sol[1];
            }
        }
    }

    let scale = g
        .iter()
        .zip(&r)
        .map(|(gk, rk)| gk.abs().max(nu * rk.abs()))
        .fold(eta.abs(), f64::max)
        .max(f64::MIN_POSITIVE);
    let mut stationarity: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    for k in 0..p.len() {
        let grad = g[k] - nu * r[k] + eta;
        if active.contains(&k) {
            stationarity = stationarity.max(grad.abs() / scale);
        } else {
            // Inactive: the multiplier of p_k ≥ 0 must be nonnegative.
            complementarity = complementarity.max((-grad).max(0.0) / scale);
        }
    }
    if rate_slack > 0.0 {
        complementarity = complementarity.max(nu * rate_slack / scale);
    }
    let budget = (p.iter().sum::<f64>() - pt).abs() / pt;
    let negative = p.iter().fold(0.0f64, |m, &x| m.max(-x)) / pt;
    let short = (-rate_slack).max(0.0) / problem.rate_threshold.max(1.0);
    let feasibility = budget.max(negative).max(short);
    KktReport {
        nu,
        eta,
        stationarity,
        complementarity,
        feasibility,
        residual: stationarity.max(complementarity).max(feasibility),
    }
}

/// Uniform split of the budget.
pub fn uniform(problem: &AllocationProblem) -> PowerAllocation {
    let k = problem.vehicles.len();
    problem.evaluate(vec![problem.p_total / k as f64; k])
}
