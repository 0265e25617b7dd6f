//! Monte-Carlo statistics over a trace.

use serde::Serialize;

use super::sim::{EpochRecord, Trace};

/// Per-epoch averages over trials and vehicles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub time_s: f64,
    pub theta_true_deg: f64,
    pub rmse_theta_deg: f64,
    pub rmse_d_m: f64,
    pub pcrb_theta_deg: f64,
    pub pcrb_d_m: f64,
    pub mean_sum_rate: f64,
    pub mean_rate_threshold: f64,
    pub mean_objective: f64,
}

/// Per-epoch, per-vehicle averages over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleMetrics {
    pub epoch: usize,
    pub vehicle: usize,
    pub rmse_theta_deg: f64,
    pub rmse_d_m: f64,
    pub pcrb_theta_deg: f64,
    pub pcrb_d_m: f64,
    pub mean_p: f64,
    pub mean_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub epochs: usize,
    pub vehicles: usize,
    pub median_rmse_theta_deg: f64,
    pub median_rmse_d_m: f64,
    pub mean_sum_rate: f64,
    /// Mean sum-rate over epochs whose mean true angle is in [60°, 120°].
    pub mean_sum_rate_mid: f64,
    /// Epoch of the highest trial-averaged sum-rate.
    pub peak_rate_epoch: usize,
    pub peak_rate: f64,
    /// First epoch whose true angle reaches 90°, if any.
    pub broadside_epoch: Option<usize>,
    /// 5th percentile of per-vehicle rates over all epochs and trials.
    pub rate_p5: f64,
    pub mean_objective: f64,
    /// Share of epochs whose sum-rate is at least 95% of the threshold.
    pub rate_ok_fraction: f64,
    pub association_error_rate: f64,
    pub ambiguous_fraction: f64,
    pub fallback_epochs: usize,
    #[serde(skip)]
    pub per_epoch: Vec<EpochMetrics>,
    #[serde(skip)]
    pub per_vehicle: Vec<VehicleMetrics>,
    /// Sorted per-vehicle rates, for the empirical CDF.
    #[serde(skip)]
    pub rates: Vec<f64>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 0.5)
}

/// Empirical CDF of a sorted sample, thinned to at most `points` rows.
pub fn cdf(sorted: &[f64], points: usize) -> Vec<(f64, f64)> {
    let n = sorted.len();
    if n == 0 || points == 0 {
        return Vec::new();
    }
    let step = n.div_ceil(points).max(1);
    let mut out: Vec<(f64, f64)> = (0..n)
        .step_by(step)
        .map(|i| (sorted[i], (i + 1) as f64 / n as f64))
        .collect();
    if out.last().map(|&(_, f)| f) != Some(1.0) {
        out.push((sorted[n - 1], 1.0));
    }
    out
}

pub fn summarize(trace: &Trace, dt: f64) -> Summary {
    let trials = trace.trials.len();
    let epochs = trace.trials.first().map_or(0, Vec::len);
    let vehicles = trace.trials.first().and_then(|t| t.first()).map_or(0, |e| e.vehicles.len());
    let nt = trials as f64;
    let deg = 180.0 / std::f64::consts::PI;

    let mut per_epoch = Vec::with_capacity(epochs);
    let mut per_vehicle = Vec::with_capacity(epochs * vehicles);
    for n in 0..epochs {
        let at: Vec<&EpochRecord> = trace.trials.iter().map(|t| &t[n]).collect();
        let nv = (trials * vehicles) as f64;
        let all = || at.iter().flat_map(|e| e.vehicles.iter());
        per_epoch.push(EpochMetrics {
            epoch: n,
            time_s: (n + 1) as f64 * dt,
            theta_true_deg: all().map(|v| v.theta_true).sum::<f64>() / nv * deg,
            rmse_theta_deg: (all().map(|v| v.sq_err_theta).sum::<f64>() / nv).sqrt() * deg,
            rmse_d_m: (all().map(|v| v.sq_err_d).sum::<f64>() / nv).sqrt(),
            pcrb_theta_deg: (all().map(|v| v.c11).sum::<f64>() / nv).sqrt() * deg,
            pcrb_d_m: (all().map(|v| v.c22).sum::<f64>() / nv).sqrt(),
            mean_sum_rate: at.iter().map(|e| e.sum_rate).sum::<f64>() / nt,
            mean_rate_threshold: at.iter().map(|e| e.rate_threshold).sum::<f64>() / nt,
            mean_objective: at.iter().map(|e| e.predicted_objective()).sum::<f64>() / nt,
        });
        for k in 0..vehicles {
            let of = || at.iter().map(|e| &e.vehicles[k]);
            per_vehicle.push(VehicleMetrics {
                epoch: n,
                vehicle: k,
                rmse_theta_deg: (of().map(|v| v.sq_err_theta).sum::<f64>() / nt).sqrt() * deg,
                rmse_d_m: (of().map(|v| v.sq_err_d).sum::<f64>() / nt).sqrt(),
                pcrb_theta_deg: (of().map(|v| v.c11).sum::<f64>() / nt).sqrt() * deg,
                pcrb_d_m: (of().map(|v| v.c22).sum::<f64>() / nt).sqrt(),
                mean_p: of().map(|v| v.p_alloc).sum::<f64>() / nt,
                mean_rate: of().map(|v| v.rate).sum::<f64>() / nt,
            });
        }
    }

    let all_epochs = || trace.trials.iter().flatten();
    let total = (trials * epochs).max(1) as f64;
    let mut rates: Vec<f64> = all_epochs().flat_map(|e| e.vehicles.iter().map(|v| v.rate)).collect();
    rates.sort_by(f64::total_cmp);

    let mid: Vec<f64> = per_epoch
        .iter()
        .filter(|m| (60.0..=120.0).contains(&m.theta_true_deg))
        .map(|m| m.mean_sum_rate)
        .collect();
    let (peak_rate_epoch, peak_rate) = per_epoch
        .iter()
        .map(|m| (m.epoch, m.mean_sum_rate))
        .fold((0, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best });

    let count = |f: &dyn Fn(&EpochRecord) -> bool| all_epochs().filter(|e| f(e)).count();
    let associated = count(&|e| !e.mapping.is_empty()).max(1) as f64;

    Summary {
        trials,
        epochs,
        vehicles,
        median_rmse_theta_deg: median(&per_epoch.iter().map(|m| m.rmse_theta_deg).collect::<Vec<_>>()),
        median_rmse_d_m: median(&per_epoch.iter().map(|m| m.rmse_d_m).collect::<Vec<_>>()),
        mean_sum_rate: all_epochs().map(|e| e.sum_rate).sum::<f64>() / total,
        mean_sum_rate_mid: if mid.is_empty() {
            f64::NAN
        } else {
            mid.iter().sum::<f64>() / mid.len() as f64
        },
        peak_rate_epoch,
        peak_rate,
        broadside_epoch: per_epoch.iter().find(|m| m.theta_true_deg >= 90.0).map(|m| m.epoch),
        rate_p5: percentile(&rates, 0.05),
        mean_objective: all_epochs().map(|e| e.predicted_objective()).sum::<f64>() / total,
        rate_ok_fraction: count(&|e| e.sum_rate >= 0.95 * e.rate_threshold) as f64 / total,
        association_error_rate: count(&|e| !e.mapping.is_empty() && !e.association_correct) as f64 / associated,
        ambiguous_fraction: count(&|e| e.association_ambiguous) as f64 / associated,
        fallback_epochs: count(&|e| e.fallback),
        per_epoch,
        per_vehicle,
        rates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert!((percentile(&v, 0.05) - 0.2).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn cdf_ends_at_one_and_is_monotone() {
        let v: Vec<f64> = (0..1003).map(f64::from).collect();
        let c = cdf(&v, 100);
        assert!(c.len() <= 102);
        assert_eq!(c.last().unwrap().1, 1.0);
        assert!(c.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }
}
