//! The epoch loop: predict, beamform, allocate, move, measure, associate,
//! update, and score the downlink.

use log::{debug, warn};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::config::{Allocator, Baseline, ScenarioConfig};
use crate::allocation::{max_rate, pcrb_allocate, water_fill, AllocationProblem, VehicleCoeffs};
use crate::array::{comm_gain_rho, link_rate, los_channel, ArrayConfig, NoiseModel};
use crate::association::{associate, AssociationWeights};
use crate::ekf::{
    predict, process_noise_matrix, state, update_information, update_observation, Belief, Observation, PredictedBelief, StateMat,
    StateVec, BETA_IM, BETA_RE, DIST, SPEED, THETA,
};
use crate::kinematics::{evolve_exact, ProcessNoise, VehicleTruth};
use crate::measurement::{feedback_pilot_sample, raw_estimate, sample, stream_rng, Measurement};
use crate::pcrb::{decompose_prediction, pcrb_theta_d, FimDecomposition};
use crate::{Error, Result};

/// Stream ids reserved next to the per-vehicle measurement streams.
const INIT_EPOCH: u32 = u32::MAX;
const SHUFFLE_VEHICLE: u32 = u32::MAX;
const TRUTH_NOISE_BIT: u32 = 1 << 31;

/// One vehicle at one epoch of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleRecord {
    pub vehicle: usize,
    pub theta_true: f64,
    pub d_true: f64,
    pub v_true: f64,
    /// One-step predicted angle, where the RSU beam points.
    pub theta_pred: f64,
    pub d_pred: f64,
    /// Angle the vehicle's receive beam points at.
    pub theta_rx: f64,
    pub theta_est: f64,
    pub d_est: f64,
    pub v_est: f64,
    pub p_alloc: f64,
    /// Realized rate with the true angles and channel.
    pub rate: f64,
    /// Rate the RSU predicts with unit beamforming gain.
    pub rate_pred: f64,
    pub sq_err_theta: f64,
    pub sq_err_d: f64,
    /// Predicted angle and distance bounds at the allocated power.
    pub c11: f64,
    pub c22: f64,
    pub measured: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub trial: usize,
    /// Zero-based; the truth has advanced `epoch + 1` slots.
    pub epoch: usize,
    pub vehicles: Vec<VehicleRecord>,
    pub sum_rate: f64,
    /// Water-filling rate under the predicted channels.
    pub max_rate_pred: f64,
    /// Rate threshold handed to the allocator (0 when none).
    pub rate_threshold: f64,
    /// `mapping[j]` is the vehicle whose echo arrived in slot `j`, as
    /// decided by association; empty when no association ran.
    pub mapping: Vec<usize>,
    pub association_correct: bool,
    pub association_ambiguous: bool,
    /// The PCRB allocator was infeasible and water-filling was used.
    pub fallback: bool,
}

impl EpochRecord {
    /// Summed predicted bound `Σ (c11 + c22)`.
    pub fn predicted_objective(&self) -> f64 {
        self.vehicles.iter().map(|v| v.c11 + v.c22).sum()
    }
}

/// All epochs of all trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub trials: Vec<Vec<EpochRecord>>,
}

struct Track {
    truth: VehicleTruth,
    belief: Belief,
    /// Two-step prediction made one epoch earlier, `θ̂_{n|n−2}`.
    theta_rx: Option<f64>,
}

/// Models shared by every epoch of a scenario.
struct Setup {
    array: ArrayConfig,
    noise: NoiseModel,
    feedback_noise: NoiseModel,
    q_s: StateMat,
    weights: AssociationWeights,
    p_total: f64,
}

impl Setup {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let noise = cfg.noise_model()?;
        Ok(Self {
            array: cfg.array_config()?,
            noise,
            feedback_noise: noise.with_gain(cfg.feedback_gain),
            q_s: process_noise_matrix(&noise),
            weights: AssociationWeights::from_noise(&noise),
            p_total: cfg.power_budget(),
        })
    }

    /// Channel gain the RSU expects for a vehicle predicted at distance `d`.
    fn predicted_rho(&self, cfg: &ScenarioConfig, d: f64) -> f64 {
        let a = &self.array;
        (a.n_tx * a.m_veh) as f64 * (cfg.tilde_alpha / d).powi(2) / self.noise.sigma2_c
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trace> {
    let trials = (0..cfg.monte_carlo).map(|t| run_trial(cfg, t)).collect::<Result<_>>()?;
    Ok(Trace { trials })
}

fn initial_tracks(cfg: &ScenarioConfig, setup: &Setup, trial: usize) -> Result<Vec<Track>> {
    let n = &setup.noise;
    cfg.vehicles
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let truth = spec.truth()?;
            let mut rng = stream_rng(cfg.master_seed, trial as u64, k as u32, INIT_EPOCH);
            let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
            let half = n.sigma_beta / 2f64.sqrt();
            let x_hat = state(
                truth.theta + n.sigma_theta * gauss(),
                truth.d + n.sigma_d * gauss(),
                (truth.v + n.sigma_v * gauss()).max(0.0),
                truth.beta + Complex64::new(half * gauss(), half * gauss()),
            );
            Ok(Track {
                truth,
                belief: Belief { x_hat, m: setup.q_s },
                theta_rx: None,
            })
        })
        .collect()
}

/// Power split for one epoch: `(p, threshold, max predicted rate, fallback)`.
fn allocate(
    cfg: &ScenarioConfig,
    setup: &Setup,
    rho_pred: &[f64],
    decomps: &[FimDecomposition],
) -> Result<(Vec<f64>, f64, f64, bool)> {
    let k = rho_pred.len();
    let pt = setup.p_total;
    let r_max = max_rate(rho_pred, pt)?;
    match cfg.allocator {
        Allocator::Uniform => Ok((vec![pt / k as f64; k], 0.0, r_max, false)),
        Allocator::WaterFill => {
            let r_t = cfg.rate_threshold_frac * r_max;
            Ok((water_fill(rho_pred, pt)?.p, r_t, r_max, false))
        }
        Allocator::PcrbMin => {
            let r_t = cfg.rate_threshold_frac * r_max;
            let problem = AllocationProblem {
                vehicles: decomps
                    .iter()
                    .zip(rho_pred)
                    .map(|(d, &rho)| VehicleCoeffs::from_decomposition(d, rho))
                    .collect(),
                p_total: pt,
                rate_threshold: r_t,
            };
            match pcrb_allocate(&problem) {
                Ok(a) => Ok((a.p, r_t, r_max, false)),
                Err(e @ Error::Infeasible { .. }) => {
                    warn!("{e}; falling back to water-filling");
                    Ok((water_fill(rho_pred, pt)?.p, r_t, r_max, true))
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// The pilot carries no information on β and the kinematic rows of the
/// state model do not depend on it, so the β block is held at its prior
/// instead of drifting without bound.
fn hold_beta(post: &mut Belief, prior: &Belief, q_s: &StateMat) {
    for b in [BETA_RE, BETA_IM] {
        post.x_hat[b] = prior.x_hat[b];
        for j in 0..5 {
            post.m[(b, j)] = 0.0;
            post.m[(j, b)] = 0.0;
        }
        post.m[(b, b)] = q_s[(b, b)];
    }
}

/// Run one Monte-Carlo trial.
pub fn run_trial(cfg: &ScenarioConfig, trial: usize) -> Result<Vec<EpochRecord>> {
    let setup = Setup::new(cfg)?;
    let array = &setup.array;
    let noise = &setup.noise;
    let seed = cfg.master_seed;
    let mut tracks = initial_tracks(cfg, &setup, trial)?;
    let k_total = tracks.len();
    let mut out = Vec::with_capacity(cfg.n_slots);

    for epoch in 0..cfg.n_slots {
        let e32 = epoch as u32;
        let preds: Vec<PredictedBelief> = tracks
            .iter()
            .map(|t| predict(&t.belief, cfg.dt, &setup.q_s))
            .collect::<Result<_>>()?;
        let beams: Vec<f64> = preds.iter().map(|p| p.x_pred_1[THETA]).collect();
        let rx: Vec<f64> = tracks
            .iter()
            .zip(&beams)
            .map(|(t, &b)| t.theta_rx.unwrap_or(b))
            .collect();
        let rho_pred: Vec<f64> = preds.iter().map(|p| setup.predicted_rho(cfg, p.x_pred_1[DIST])).collect();
        let decomps: Vec<FimDecomposition> = if cfg.baseline == Baseline::Dfrc {
            preds
                .iter()
                .map(|p| decompose_prediction(p, noise, array))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let (p_alloc, rate_threshold, max_rate_pred, fallback) = allocate(cfg, &setup, &rho_pred, &decomps)?;

        for (k, t) in tracks.iter_mut().enumerate() {
            t.truth = evolve_exact(&t.truth, cfg.dt)?;
            if cfg.process_noise {
                let mut rng = stream_rng(seed, trial as u64, k as u32 | TRUTH_NOISE_BIT, e32);
                let w = ProcessNoise::sample(noise, &mut rng);
                t.truth.theta += w.theta;
                t.truth.d += w.d;
                t.truth.v = (t.truth.v + w.v).max(0.0);
                t.truth.beta += w.beta;
            }
        }

        let mut records: Vec<VehicleRecord> = Vec::with_capacity(k_total);
        let mut measured = vec![false; k_total];
        let mut bounds = vec![(0.0, 0.0); k_total];
        let mut posteriors: Vec<Option<Belief>> = vec![None; k_total];
        let (mut mapping, mut assoc_ok, mut ambiguous) = (Vec::new(), true, false);

        match cfg.baseline {
            Baseline::Dfrc => {
                // Echoes of the beams that carried power, in arrival order.
                let mut echoes: Vec<(usize, Measurement)> = Vec::new();
                for (k, t) in tracks.iter().enumerate() {
                    if p_alloc[k] > 0.0 {
                        let mut rng = stream_rng(seed, trial as u64, k as u32, e32);
                        echoes.push((k, sample(&t.truth, beams[k], p_alloc[k], noise, array, &mut rng)?));
                    }
                }
                let mut rng = stream_rng(seed, trial as u64, SHUFFLE_VEHICLE, e32);
                echoes.shuffle(&mut rng);
                let owners: Vec<usize> = echoes.iter().map(|(k, _)| *k).collect();
                let assigned = if echoes.len() > 1 {
                    let fresh: Vec<StateVec> = echoes
                        .iter()
                        .map(|(k, y)| {
                            let r = raw_estimate(y, beams[*k], array);
                            state(r.theta, r.d, r.v, r.beta)
                        })
                        .collect();
                    let mut sorted = owners.clone();
                    sorted.sort_unstable();
                    let prev_sorted: Vec<StateVec> = sorted.iter().map(|&k| tracks[k].belief.x_hat).collect();
                    let res = associate(&prev_sorted, &fresh, &setup.weights, cfg.distance_mode)?;
                    ambiguous = res.ambiguous;
                    res.mapping.iter().map(|&j| sorted[j]).collect::<Vec<_>>()
                } else {
                    owners.clone()
                };
                assoc_ok = assigned == owners;
                if !assoc_ok {
                    debug!("trial {trial} epoch {epoch}: association swapped echoes");
                }
                for ((_, y), &k) in echoes.iter().zip(&assigned) {
                    let obs = Observation::radar_predicted(&preds[k], y, p_alloc[k], noise, array)?;
                    posteriors[k] = Some(update_information(&preds[k], &obs)?);
                    measured[k] = true;
                }
                mapping = assigned;
                for k in 0..k_total {
                    let (c11, c22) = pcrb_theta_d(&decomps[k], p_alloc[k]);
                    bounds[k] = (c11, c22);
                }
            }
            Baseline::Feedback => {
                for (k, t) in tracks.iter().enumerate() {
                    if p_alloc[k] > 0.0 {
                        let alpha = los_channel(t.truth.d, cfg.tilde_alpha, array.carrier_hz, array.light_speed)?;
                        let mut rng = stream_rng(seed, trial as u64, k as u32, e32);
                        let y = feedback_pilot_sample(
                            &t.truth,
                            beams[k],
                            rx[k],
                            alpha,
                            p_alloc[k],
                            &setup.feedback_noise,
                            array,
                            &mut rng,
                        )?;
                        let obs = Observation::pilot(&preds[k], &y, rx[k], alpha, p_alloc[k], &setup.feedback_noise, array)?;
                        let mut post = update_observation(&preds[k], &obs)?;
                        hold_beta(&mut post, &t.belief, &setup.q_s);
                        bounds[k] = (post.m[(THETA, THETA)], post.m[(DIST, DIST)]);
                        posteriors[k] = Some(post);
                        measured[k] = true;
                    } else {
                        bounds[k] = (preds[k].m_pred[(THETA, THETA)], preds[k].m_pred[(DIST, DIST)]);
                    }
                }
            }
        }

        let mut sum_rate = 0.0;
        for (k, t) in tracks.iter_mut().enumerate() {
            let pred = &preds[k];
            t.belief = posteriors[k].take().unwrap_or(Belief {
                x_hat: pred.x_pred_1,
                m: pred.m_pred,
            });
            let truth = t.truth;
            let alpha = los_channel(truth.d, cfg.tilde_alpha, array.carrier_hz, array.light_speed)?;
            let rho = comm_gain_rho(truth.theta, beams[k], rx[k], alpha, array, noise.sigma2_c);
            let rate = link_rate(p_alloc[k], rho);
            sum_rate += rate;
            let x = &t.belief.x_hat;
            records.push(VehicleRecord {
                vehicle: k,
                theta_true: truth.theta,
                d_true: truth.d,
                v_true: truth.v,
                theta_pred: beams[k],
                d_pred: pred.x_pred_1[DIST],
                theta_rx: rx[k],
                theta_est: x[THETA],
                d_est: x[DIST],
                v_est: x[SPEED],
                p_alloc: p_alloc[k],
                rate,
                rate_pred: link_rate(p_alloc[k], rho_pred[k]),
                sq_err_theta: (x[THETA] - truth.theta).powi(2),
                sq_err_d: (x[DIST] - truth.d).powi(2),
                c11: bounds[k].0,
                c22: bounds[k].1,
                measured: measured[k],
            });
            t.theta_rx = Some(pred.x_pred_2[THETA]);
        }

        out.push(EpochRecord {
            trial,
            epoch,
            vehicles: records,
            sum_rate,
            max_rate_pred,
            rate_threshold,
            mapping,
            association_correct: assoc_ok,
            association_ambiguous: ambiguous,
            fallback,
        });
    }
    Ok(out)
}
