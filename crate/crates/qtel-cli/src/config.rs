//! Configuration: JSON file, CLI overrides, and the resolved run settings.
//!
//! Precedence is defaults < config file < command-line flags. Frequencies are
//! entered in MHz as nu/2pi; the resolved [`qtel::model::PhysicalParams`]
//! carries angular frequencies in rad/us.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qtel::model::PhysicalParams;
use qtel::protocol::InputQubit;
use qtel::C64;

use crate::CliError;

/// On-disk JSON config. The five core frequencies are required whenever a
/// file is supplied; everything else falls back to defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    g_mhz: f64,
    omega_mhz: f64,
    kappa_mhz: f64,
    gamma_mhz: f64,
    delta_mhz: f64,
    delta_e_mhz: Option<f64>,
    eta: Option<f64>,
    t_d_us: Option<f64>,
    trajectories: Option<u64>,
    seed: Option<u64>,
    /// (re a, im a, re b, im b); renormalized after parse.
    input_qubit: Option<[f64; 4]>,
    t_d_grid_us: Option<Vec<f64>>,
    eta_grid: Option<Vec<f64>>,
}

/// Command-line overrides; every field beats the config file.
#[derive(Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file (defaults apply when omitted)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Detection window t_D in microseconds
    #[arg(long = "td-us", global = true, value_name = "US")]
    pub td_us: Option<f64>,
    /// Detector efficiency in [0, 1]
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Monte Carlo trajectories per ensemble
    #[arg(long, global = true)]
    pub trajectories: Option<u64>,
    /// Master seed for the trajectory ensembles
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for summary.json, CSV, and SVG files
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Fully resolved settings for one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub g_mhz: f64,
    pub omega_mhz: f64,
    pub kappa_mhz: f64,
    pub gamma_mhz: f64,
    pub delta_mhz: f64,
    pub delta_e_mhz: f64,
    pub eta: f64,
    pub t_d_us: f64,
    pub trajectories: u64,
    pub seed: u64,
    pub input_qubit: [f64; 4],
    pub t_d_grid_us: Vec<f64>,
    pub eta_grid: Vec<f64>,
    pub out: PathBuf,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        RunConfig {
            g_mhz: 10.0,
            omega_mhz: 10.0,
            kappa_mhz: 0.01,
            gamma_mhz: 1.0,
            delta_mhz: 100.0,
            delta_e_mhz: 1.0,
            eta: 1.0,
            t_d_us: 50.0,
            trajectories: 10_000,
            seed: 1,
            input_qubit: [r, 0.0, r, 0.0],
            t_d_grid_us: linspace(0.0, 50.0, 50),
            eta_grid: linspace(0.05, 1.0, 20),
            out: PathBuf::from("qtel_out"),
        }
    }
}

impl RunConfig {
    /// Merge defaults, optional file, and flags; validate the result. Returns
    /// the settings plus any non-fatal warnings (currently: input qubit
    /// renormalization).
    pub fn resolve(overrides: &Overrides) -> Result<(RunConfig, Vec<String>), CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &overrides.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = overrides.td_us {
            cfg.t_d_us = v;
        }
        if let Some(v) = overrides.eta {
            cfg.eta = v;
        }
        if let Some(v) = overrides.trajectories {
            cfg.trajectories = v;
        }
        if let Some(v) = overrides.seed {
            cfg.seed = v;
        }
        if let Some(v) = &overrides.out {
            cfg.out = v.clone();
        }
        let warnings = cfg.validate()?;
        Ok((cfg, warnings))
    }

    fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let file: FileConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        self.g_mhz = file.g_mhz;
        self.omega_mhz = file.omega_mhz;
        self.kappa_mhz = file.kappa_mhz;
        self.gamma_mhz = file.gamma_mhz;
        self.delta_mhz = file.delta_mhz;
        if let Some(v) = file.delta_e_mhz {
            self.delta_e_mhz = v;
        }
        if let Some(v) = file.eta {
            self.eta = v;
        }
        if let Some(v) = file.t_d_us {
            self.t_d_us = v;
        }
        if let Some(v) = file.trajectories {
            self.trajectories = v;
        }
        if let Some(v) = file.seed {
            self.seed = v;
        }
        if let Some(v) = file.input_qubit {
            self.input_qubit = v;
        }
        if let Some(v) = file.t_d_grid_us {
            self.t_d_grid_us = v;
        }
        if let Some(v) = file.eta_grid {
            self.eta_grid = v;
        }
        Ok(())
    }

    fn validate(&mut self) -> Result<Vec<String>, CliError> {
        let mut warnings = Vec::new();
        if self.trajectories < 1 {
            return Err(CliError::Config("trajectories must be at least 1".into()));
        }
        if !self.t_d_us.is_finite() || self.t_d_us < 0.0 {
            return Err(CliError::Config(format!(
                "t_d_us must be finite and nonnegative, got {}",
                self.t_d_us
            )));
        }
        check_grid("t_d_grid_us", &self.t_d_grid_us, 0.0, f64::INFINITY)?;
        check_grid("eta_grid", &self.eta_grid, 0.0, 1.0)?;
        let norm_sqr: f64 = self.input_qubit.iter().map(|v| v * v).sum();
        if !norm_sqr.is_finite() || norm_sqr < 1e-12 {
            return Err(CliError::Config(format!(
                "input_qubit must have nonzero finite norm, got |q|^2 = {norm_sqr}"
            )));
        }
        let norm = norm_sqr.sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            warnings.push(format!("input_qubit renormalized: |q| = {norm:.9} was off by more than 1e-6"));
        }
        for v in &mut self.input_qubit {
            *v /= norm;
        }
        Ok(warnings)
    }

    pub fn params(&self) -> PhysicalParams {
        PhysicalParams::from_mhz(
            self.g_mhz,
            self.omega_mhz,
            self.kappa_mhz,
            self.gamma_mhz,
            self.delta_mhz,
            self.delta_e_mhz,
            self.eta,
        )
    }

    pub fn qubit(&self) -> InputQubit {
        let [ra, ia, rb, ib] = self.input_qubit;
        InputQubit::new(C64::new(ra, ia), C64::new(rb, ib))
    }
}

fn check_grid(name: &str, grid: &[f64], lo: f64, hi: f64) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::Config(format!("{name} must not be empty")));
    }
    for &v in grid {
        if !v.is_finite() || v < lo || v > hi {
            return Err(CliError::Config(format!("{name} entry {v} lies outside [{lo}, {hi}]")));
        }
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(CliError::Config(format!(
                "{name} must be strictly increasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_without_warnings() {
        let (cfg, warnings) = RunConfig::resolve(&Overrides::default()).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(cfg.trajectories, 10_000);
        assert_eq!(cfg.t_d_grid_us.len(), 50);
        assert_eq!(cfg.eta_grid.len(), 20);
        assert!(cfg.params().check().is_ok());
    }

    #[test]
    fn flags_override_defaults() {
        let over = Overrides {
            td_us: Some(12.0),
            eta: Some(0.6),
            trajectories: Some(5),
            seed: Some(99),
            ..Overrides::default()
        };
        let (cfg, _) = RunConfig::resolve(&over).unwrap();
        assert_eq!(cfg.t_d_us, 12.0);
        assert_eq!(cfg.eta, 0.6);
        assert_eq!(cfg.trajectories, 5);
        assert_eq!(cfg.seed, 99);
    }

    #[test]
    fn off_normal_qubit_warns_and_renormalizes() {
        let mut cfg = RunConfig { input_qubit: [3.0, 0.0, 4.0, 0.0], ..RunConfig::default() };
        let warnings = cfg.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        let n: f64 = cfg.input_qubit.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!((cfg.input_qubit[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn bad_grids_are_rejected() {
        let mut cfg = RunConfig { t_d_grid_us: vec![], ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig { t_d_grid_us: vec![1.0, 1.0], ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig { eta_grid: vec![0.5, 1.5], ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
