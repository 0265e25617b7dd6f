//! Files written by a run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::config::ScenarioConfig;
use super::sim::Trace;
use super::summary::{cdf, Summary};
use crate::{Error, Result};

pub const TRACE_COLUMNS: [&str; 24] = [
    "trial",
    "epoch",
    "time_s",
    "vehicle_id",
    "theta_true_deg",
    "theta_pred_deg",
    "theta_rx_deg",
    "theta_est_deg",
    "d_true_m",
    "d_pred_m",
    "d_est_m",
    "v_true_mps",
    "v_est_mps",
    "p_alloc",
    "rate_bpshz",
    "rate_pred_bpshz",
    "sq_err_theta_deg2",
    "sq_err_d_m2",
    "c11",
    "c22",
    "measured",
    "assoc_ok",
    "fallback",
    "sum_rate_bpshz",
];

pub const METRICS_COLUMNS: [&str; 10] = [
    "epoch",
    "time_s",
    "vehicle_id",
    "rmse_theta_deg",
    "rmse_d_m",
    "pcrb_theta_deg",
    "pcrb_d_m",
    "mean_p",
    "mean_rate_bpshz",
    "mean_sum_rate_bpshz",
];

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// A CSV writer whose first line is a `#` comment listing the columns.
fn csv_writer(path: &Path, columns: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = create(path)?;
    writeln!(file, "# columns: {}", columns.join(",")).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(columns).map_err(|e| csv_err(path, e))?;
    Ok(w)
}

fn finish(path: &Path, mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trace(path: &Path, trace: &Trace, dt: f64) -> Result<()> {
    let deg = 180.0 / std::f64::consts::PI;
    let mut w = csv_writer(path, &TRACE_COLUMNS)?;
    for e in trace.trials.iter().flatten() {
        for v in &e.vehicles {
            let row = [
                e.trial.to_string(),
                e.epoch.to_string(),
                ((e.epoch + 1) as f64 * dt).to_string(),
                v.vehicle.to_string(),
                (v.theta_true * deg).to_string(),
                (v.theta_pred * deg).to_string(),
                (v.theta_rx * deg).to_string(),
                (v.theta_est * deg).to_string(),
                v.d_true.to_string(),
                v.d_pred.to_string(),
                v.d_est.to_string(),
                v.v_true.to_string(),
                v.v_est.to_string(),
                v.p_alloc.to_string(),
                v.rate.to_string(),
                v.rate_pred.to_string(),
                (v.sq_err_theta * deg * deg).to_string(),
                v.sq_err_d.to_string(),
                v.c11.to_string(),
                v.c22.to_string(),
                u8::from(v.measured).to_string(),
                u8::from(e.association_correct).to_string(),
                u8::from(e.fallback).to_string(),
                e.sum_rate.to_string(),
            ];
            w.write_record(&row).map_err(|err| csv_err(path, err))?;
        }
    }
    finish(path, w)
}

pub fn write_metrics(path: &Path, summary: &Summary) -> Result<()> {
    let mut w = csv_writer(path, &METRICS_COLUMNS)?;
    let k = summary.vehicles.max(1);
    for (i, m) in summary.per_vehicle.iter().enumerate() {
        let e = &summary.per_epoch[i / k];
        let row = [
            m.epoch.to_string(),
            e.time_s.to_string(),
            m.vehicle.to_string(),
            m.rmse_theta_deg.to_string(),
            m.rmse_d_m.to_string(),
            m.pcrb_theta_deg.to_string(),
            m.pcrb_d_m.to_string(),
            m.mean_p.to_string(),
            m.mean_rate.to_string(),
            e.mean_sum_rate.to_string(),
        ];
        w.write_record(&row).map_err(|err| csv_err(path, err))?;
    }
    finish(path, w)
}

pub fn write_rate_cdf(path: &Path, summary: &Summary) -> Result<()> {
    let mut w = csv_writer(path, &["rate_bpshz", "cdf"])?;
    for (r, f) in cdf(&summary.rates, 500) {
        w.write_record([r.to_string(), f.to_string()]).map_err(|err| csv_err(path, err))?;
    }
    finish(path, w)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| Error::io(path, e.into()))?;
    writeln!(file).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

/// Write every output of a run into `dir`.
pub fn write_run(dir: &Path, cfg: &ScenarioConfig, trace: &Trace, summary: &Summary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_trace(&dir.join("trace.csv"), trace, cfg.dt)?;
    write_metrics(&dir.join("metrics.csv"), summary)?;
    write_rate_cdf(&dir.join("rate_cdf.csv"), summary)?;
    write_json(&dir.join("config_echo.json"), cfg)?;
    write_json(&dir.join("summary.json"), summary)
}
