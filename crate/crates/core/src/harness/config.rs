//! Scenario configuration. Angles are given in degrees here and converted
//! to radians when the simulation models are built.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayConfig, NoiseModel, SPEED_OF_LIGHT};
use crate::association::DistanceMode;
use crate::kinematics::VehicleTruth;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub n_tx: usize,
    pub n_rx: usize,
    pub m_veh: usize,
    pub carrier_hz: f64,
    #[serde(default)]
    pub orientation_offset_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma2: f64,
    pub sigma2_c: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub g_mf: f64,
    pub sigma_theta_deg: f64,
    pub sigma_d: f64,
    pub sigma_v: f64,
    pub sigma_beta: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        let n = NoiseModel::reference();
        Self {
            sigma2: n.sigma2,
            sigma2_c: n.sigma2_c,
            a1: n.a1,
            a2: n.a2,
            a3: n.a3,
            g_mf: n.g_mf,
            sigma_theta_deg: n.sigma_theta.to_degrees(),
            sigma_d: n.sigma_d,
            sigma_v: n.sigma_v,
            sigma_beta: n.sigma_beta,
        }
    }
}

/// Initial state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub theta_deg: f64,
    pub d_m: f64,
    pub v_mps: f64,
    pub beta_re: f64,
    pub beta_im: f64,
}

impl VehicleSpec {
    pub fn new(theta_deg: f64, d_m: f64, v_mps: f64, beta: Complex64) -> Self {
        Self {
            theta_deg,
            d_m,
            v_mps,
            beta_re: beta.re,
            beta_im: beta.im,
        }
    }

    pub fn truth(&self) -> Result<VehicleTruth> {
        VehicleTruth::from_initial(
            self.theta_deg.to_radians(),
            self.d_m,
            self.v_mps,
            Complex64::new(self.beta_re, self.beta_im),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocator {
    Uniform,
    WaterFill,
    PcrbMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Tracking from radar echoes of the downlink signal.
    Dfrc,
    /// Tracking from a single downlink pilot per epoch.
    Feedback,
}

/// How `snr_db` sets the transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrMode {
    /// `snr_db` is `p/σ²` for every beam; the budget is `K p`.
    PerBeam,
    /// `snr_db` is `P_T/σ²` for the whole budget.
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub array: ArraySpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub dt: f64,
    pub n_slots: usize,
    pub vehicles: Vec<VehicleSpec>,
    pub tilde_alpha: f64,
    pub snr_db: f64,
    pub snr_mode: SnrMode,
    pub allocator: Allocator,
    pub rate_threshold_frac: f64,
    pub baseline: Baseline,
    pub monte_carlo: usize,
    pub master_seed: u64,
    /// Matched-filtering gain of the feedback baseline's single pilot.
    #[serde(default = "default_feedback_gain")]
    pub feedback_gain: f64,
    #[serde(default)]
    pub distance_mode: DistanceMode,
    /// Perturb the ground truth with the state noise as well.
    #[serde(default)]
    pub process_noise: bool,
}

fn default_feedback_gain() -> f64 {
    1.0
}

impl ScenarioConfig {
    /// One vehicle passing the RSU, fixed power per beam.
    pub fn single_vehicle() -> Self {
        Self {
            array: ArraySpec {
                n_tx: 64,
                n_rx: 64,
                m_veh: 32,
                carrier_hz: 30e9,
                orientation_offset_deg: 0.0,
            },
            noise: NoiseSpec::default(),
            dt: 0.02,
            n_slots: 1000,
            vehicles: vec![VehicleSpec::new(9.2, 25.0, 20.0, Complex64::new(0.5, 0.5))],
            tilde_alpha: 1.0,
            snr_db: 10.0,
            snr_mode: SnrMode::PerBeam,
            allocator: Allocator::Uniform,
            rate_threshold_frac: 0.0,
            baseline: Baseline::Dfrc,
            monte_carlo: 50,
            master_seed: 2024,
            feedback_gain: 1.0,
            distance_mode: DistanceMode::Weighted,
            process_noise: false,
        }
    }

    /// Radar-based versus pilot-based tracking with equal-size arrays.
    pub fn feedback_comparison(n: usize, baseline: Baseline) -> Self {
        let mut cfg = Self::single_vehicle();
        cfg.array.n_tx = n;
        cfg.array.n_rx = n;
        cfg.array.m_veh = n;
        let b = std::f64::consts::FRAC_1_SQRT_2;
        cfg.vehicles = vec![VehicleSpec::new(9.2, 25.0, 18.0, Complex64::new(b, b))];
        cfg.tilde_alpha = 25.0;
        cfg.baseline = baseline;
        cfg
    }

    /// Five vehicles on one lane sharing a power budget.
    pub fn multi_vehicle(snr_db: f64, allocator: Allocator) -> Self {
        let table = [
            (7.66, 30.0, 20.0, 2.0),
            (6.56, 35.0, 18.0, 1.0),
            (5.74, 40.0, 16.0, 0.5),
            (5.10, 45.0, 12.0, 0.3),
            (4.59, 50.0, 10.0, 0.2),
        ];
        let mut cfg = Self::single_vehicle();
        cfg.array.n_tx = 128;
        cfg.array.n_rx = 128;
        cfg.array.m_veh = 32;
        cfg.vehicles = table
            .iter()
            .map(|&(t, d, v, b)| VehicleSpec::new(t, d, v, Complex64::new(b, b)))
            .collect();
        cfg.snr_db = snr_db;
        cfg.snr_mode = SnrMode::Total;
        cfg.allocator = allocator;
        cfg.rate_threshold_frac = 0.9;
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_slots < 1 {
            return fail("n_slots must be at least 1".into());
        }
        if self.vehicles.is_empty() {
            return fail("at least one vehicle is required".into());
        }
        if !(0.0..=1.0).contains(&self.rate_threshold_frac) {
            return fail(format!("rate_threshold_frac must lie in [0, 1], got {}", self.rate_threshold_frac));
        }
        if !(self.dt > 0.0) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if self.monte_carlo < 1 {
            return fail("monte_carlo must be at least 1".into());
        }
        if !(self.tilde_alpha > 0.0) {
            return fail(format!("tilde_alpha must be positive, got {}", self.tilde_alpha));
        }
        if !self.snr_db.is_finite() {
            return fail("snr_db must be finite".into());
        }
        if !(self.feedback_gain >= 1.0) {
            return fail(format!("feedback_gain must be >= 1, got {}", self.feedback_gain));
        }
        if self.baseline == Baseline::Feedback && self.vehicles.len() != 1 {
            return fail("the feedback baseline supports a single vehicle".into());
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.array_config().map_err(wrap)?;
        self.noise_model().map_err(wrap)?;
        for (k, v) in self.vehicles.iter().enumerate() {
            v.truth().map_err(|e| Error::Config(format!("vehicle {k}: {e}")))?;
            if v.beta_re == 0.0 && v.beta_im == 0.0 {
                return fail(format!("vehicle {k}: reflection coefficient must be nonzero"));
            }
        }
        Ok(())
    }

    pub fn array_config(&self) -> Result<ArrayConfig> {
        let cfg = ArrayConfig {
            n_tx: self.array.n_tx,
            n_rx: self.array.n_rx,
            m_veh: self.array.m_veh,
            carrier_hz: self.array.carrier_hz,
            light_speed: SPEED_OF_LIGHT,
            orientation_offset: self.array.orientation_offset_deg.to_radians(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let n = &self.noise;
        let model = NoiseModel {
            sigma2: n.sigma2,
            sigma2_c: n.sigma2_c,
            a1: n.a1,
            a2: n.a2,
            a3: n.a3,
            g_mf: n.g_mf,
            sigma_theta: n.sigma_theta_deg.to_radians(),
            sigma_d: n.sigma_d,
            sigma_v: n.sigma_v,
            sigma_beta: n.sigma_beta,
        };
        model.validate()?;
        Ok(model)
    }

    /// Total transmit power budget `P_T`.
    pub fn power_budget(&self) -> f64 {
        let level = self.noise.sigma2 * 10f64.powf(self.snr_db / 10.0);
        match self.snr_mode {
            SnrMode::PerBeam => level * self.vehicles.len() as f64,
            SnrMode::Total => level,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for cfg in [
            ScenarioConfig::single_vehicle(),
            ScenarioConfig::feedback_comparison(128, Baseline::Feedback),
            ScenarioConfig::multi_vehicle(-3.0, Allocator::PcrbMin),
        ] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn json_round_trip() {
        let cfg = ScenarioConfig::multi_vehicle(10.0, Allocator::WaterFill);
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut value: serde_json::Value = serde_json::from_str(&ScenarioConfig::single_vehicle().to_json()).unwrap();
        value["surprise"] = serde_json::json!(1);
        assert!(matches!(
            ScenarioConfig::from_json(&value.to_string()),
            Err(Error::Config(_))
        ));
        let mut value: serde_json::Value = serde_json::from_str(&ScenarioConfig::single_vehicle().to_json()).unwrap();
        value["vehicles"][0]["rcs"] = serde_json::json!(1);
        assert!(ScenarioConfig::from_json(&value.to_string()).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = ScenarioConfig::single_vehicle();
        cfg.rate_threshold_frac = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::single_vehicle();
        cfg.vehicles.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::single_vehicle();
        cfg.vehicles[0].d_m = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::single_vehicle();
        cfg.noise.g_mf = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn power_budget_modes() {
        let single = ScenarioConfig::single_vehicle();
        assert!((single.power_budget() - 10.0).abs() < 1e-12);
        let multi = ScenarioConfig::multi_vehicle(10.0, Allocator::PcrbMin);
        assert!((multi.power_budget() - 10.0).abs() < 1e-12);
        let mut per_beam = multi.clone();
        per_beam.snr_mode = SnrMode::PerBeam;
        assert!((per_beam.power_budget() - 50.0).abs() < 1e-12);
    }
}
