//! Data behind each figure, from built-in scenarios.

use std::fs;
use std::path::Path;

use log::info;

use super::config::{Allocator, Baseline, ScenarioConfig};
use super::sim::run_scenario;
use super::summary::{cdf, summarize, Summary};
use crate::kinematics::{evolve_approx, evolve_exact, VehicleTruth};
use crate::{deg, Complex64, Error, Result};

pub const DEFAULT_TRIALS: usize = 50;

/// Array sizes swept in the single-vehicle figures.
pub const ANTENNAS: [usize; 4] = [16, 32, 64, 128];

/// Column-oriented table.
struct Table {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Table {
    fn new() -> Self {
        Self {
            names: Vec::new(),
            columns: Vec::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, column: Vec<f64>) {
        self.names.push(name.into());
        self.columns.push(column);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let rows = self.columns.iter().map(Vec::len).min().unwrap_or(0);
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.names).map_err(|e| csv_err(path, e))?;
        for i in 0..rows {
            w.write_record(self.columns.iter().map(|c| c[i].to_string()))
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn run(cfg: &ScenarioConfig, label: &str) -> Result<Summary> {
    info!("running {label} ({} trials)", cfg.monte_carlo);
    Ok(summarize(&run_scenario(cfg)?, cfg.dt))
}

fn epoch_columns(table: &mut Table, s: &Summary) {
    table.push("epoch", s.per_epoch.iter().map(|m| m.epoch as f64).collect());
    table.push("time_s", s.per_epoch.iter().map(|m| m.time_s).collect());
    table.push("theta_true_deg", s.per_epoch.iter().map(|m| m.theta_true_deg).collect());
}

fn column(s: &Summary, f: impl Fn(&super::summary::EpochMetrics) -> f64) -> Vec<f64> {
    s.per_epoch.iter().map(f).collect()
}

/// Free-running exact and approximate trajectories.
pub fn fig3(dir: &Path) -> Result<()> {
    let (dt, slots) = (0.1, 20);
    let mut exact = VehicleTruth::from_initial(deg(18.0), 40.0, 15.0, Complex64::new(1.0, 0.0))?;
    let mut approx = exact;
    let mut t = Table::new();
    let mut cols: [Vec<f64>; 8] = Default::default();
    for n in 0..=slots {
        if n > 0 {
            exact = evolve_exact(&exact, dt)?;
            approx = evolve_approx(&approx, dt, None)?;
        }
        let row = [
            n as f64,
            n as f64 * dt,
            exact.d,
            approx.d,
            exact.theta.to_degrees(),
            approx.theta.to_degrees(),
            (exact.d - approx.d).abs(),
            (exact.theta - approx.theta).abs().to_degrees(),
        ];
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    let names = [
        "slot",
        "time_s",
        "d_exact_m",
        "d_approx_m",
        "theta_exact_deg",
        "theta_approx_deg",
        "err_d_m",
        "err_theta_deg",
    ];
    for (name, c) in names.into_iter().zip(cols) {
        t.push(name, c);
    }
    t.write(&dir.join("fig3.csv"))
}

/// Single-vehicle rate, angle and distance tracking versus array size.
pub fn fig4_5_6(dir: &Path, trials: usize) -> Result<()> {
    let mut runs = Vec::new();
    for n in ANTENNAS {
        let mut cfg = ScenarioConfig::single_vehicle();
        cfg.array.n_tx = n;
        cfg.array.n_rx = n;
        cfg.monte_carlo = trials;
        runs.push((n, run(&cfg, &format!("single vehicle, N = {n}"))?));
    }
    let mut rate = Table::new();
    let mut track = Table::new();
    epoch_columns(&mut rate, &runs[0].1);
    epoch_columns(&mut track, &runs[0].1);
    for (n, s) in &runs {
        rate.push(format!("rate_n{n}"), column(s, |m| m.mean_sum_rate));
        track.push(format!("rmse_theta_deg_n{n}"), column(s, |m| m.rmse_theta_deg));
        track.push(format!("pcrb_theta_deg_n{n}"), column(s, |m| m.pcrb_theta_deg));
        track.push(format!("rmse_d_m_n{n}"), column(s, |m| m.rmse_d_m));
        track.push(format!("pcrb_d_m_n{n}"), column(s, |m| m.pcrb_d_m));
    }
    rate.write(&dir.join("fig4.csv"))?;
    track.write(&dir.join("fig5_6.csv"))
}

/// Radar-assisted tracking against the feedback baseline.
pub fn fig7_8(dir: &Path, trials: usize) -> Result<()> {
    let mut t = Table::new();
    let mut first = true;
    for n in [64, 128] {
        for (baseline, tag) in [(Baseline::Dfrc, "dfrc"), (Baseline::Feedback, "feedback")] {
            let mut cfg = ScenarioConfig::feedback_comparison(n, baseline);
            cfg.monte_carlo = trials;
            let s = run(&cfg, &format!("{tag}, N = {n}"))?;
            if first {
                epoch_columns(&mut t, &s);
                first = false;
            }
            t.push(format!("rmse_theta_deg_{tag}_n{n}"), column(&s, |m| m.rmse_theta_deg));
            t.push(format!("rmse_d_m_{tag}_n{n}"), column(&s, |m| m.rmse_d_m));
            t.push(format!("rate_{tag}_n{n}"), column(&s, |m| m.mean_sum_rate));
        }
    }
    t.write(&dir.join("fig7_8.csv"))
}

/// Multi-vehicle sum-rate, rate distribution and tracking per allocator.
pub fn fig9_10_11(dir: &Path, trials: usize) -> Result<()> {
    let mut rate = Table::new();
    let mut track = Table::new();
    let mut dist = csv::Writer::from_path(dir.join("fig10.csv")).map_err(|e| csv_err(&dir.join("fig10.csv"), e))?;
    let fig10 = dir.join("fig10.csv");
    dist.write_record(["snr_db", "allocator", "rate_bpshz", "cdf"])
        .map_err(|e| csv_err(&fig10, e))?;
    let mut first = true;
    for snr in [-3.0, 10.0] {
        for (allocator, tag) in [(Allocator::WaterFill, "water_fill"), (Allocator::PcrbMin, "pcrb_min")] {
            let mut cfg = ScenarioConfig::multi_vehicle(snr, allocator);
            cfg.monte_carlo = trials;
            let s = run(&cfg, &format!("five vehicles, {tag}, {snr} dB"))?;
            if first {
                for t in [&mut rate, &mut track] {
                    t.push("epoch", column(&s, |m| m.epoch as f64));
                    t.push("time_s", column(&s, |m| m.time_s));
                }
                first = false;
            }
            let suffix = format!("{tag}_snr{snr}");
            rate.push(format!("sum_rate_{suffix}"), column(&s, |m| m.mean_sum_rate));
            rate.push(format!("rate_threshold_{suffix}"), column(&s, |m| m.mean_rate_threshold));
            track.push(format!("rmse_theta_deg_{suffix}"), column(&s, |m| m.rmse_theta_deg));
            track.push(format!("pcrb_theta_deg_{suffix}"), column(&s, |m| m.pcrb_theta_deg));
            track.push(format!("rmse_d_m_{suffix}"), column(&s, |m| m.rmse_d_m));
            track.push(format!("pcrb_d_m_{suffix}"), column(&s, |m| m.pcrb_d_m));
            track.push(format!("objective_{suffix}"), column(&s, |m| m.mean_objective));
            for (r, f) in cdf(&s.rates, 500) {
                dist.write_record([snr.to_string(), tag.to_string(), r.to_string(), f.to_string()])
                    .map_err(|e| csv_err(&fig10, e))?;
            }
        }
    }
    dist.flush().map_err(|e| Error::io(&fig10, e))?;
    rate.write(&dir.join("fig9.csv"))?;
    track.write(&dir.join("fig11.csv"))
}

pub fn write_all(dir: &Path, trials: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    fig3(dir)?;
    fig4_5_6(dir, trials)?;
    fig7_8(dir, trials)?;
    fig9_10_11(dir, trials)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig3_has_header_and_all_slots() {
        let dir = tempfile::tempdir().unwrap();
        fig3(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("fig3.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("slot,time_s,d_exact_m"));
        assert_eq!(lines.len(), 22);
        assert!(lines[1].starts_with("0,0,40,40,"));
    }
}
