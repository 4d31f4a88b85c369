//! Run configuration: one TOML file per run, strict field checking, and
//! validation that collects every problem instead of stopping at the first.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::components::{AnalyzerConfig, SpdcConfig};
use crate::error::Error;
use crate::fiber::{ClassicalChannel, FiberLink, RamanCoefficientTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Fringe,
    Tomography,
    CdTiming,
    DgdReport,
    RamanSweep,
    Jsi,
    TwistScan,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub source: SpdcConfig,
    #[serde(default)]
    pub analyzer_a: AnalyzerConfig,
    #[serde(default)]
    pub analyzer_b: AnalyzerConfig,
    /// Fiber on the signal (A) arm; absent means a lossless direct path.
    #[serde(default)]
    pub fiber_a: Option<FiberLink>,
    #[serde(default)]
    pub fiber_b: Option<FiberLink>,
    #[serde(default)]
    pub classical_channel: Option<ClassicalChannel>,
    /// Raman coefficient table file (whitespace-separated columns); the
    /// built-in table is used when absent.
    #[serde(default)]
    pub raman_table_path: Option<String>,
    #[serde(default = "default_window_ps")]
    pub coincidence_window_ps: u64,
    #[serde(default = "default_bin_width_ps")]
    pub bin_width_ps: f64,
    /// Run sweep grid points on a thread pool. Results are identical either
    /// way; each grid point draws from its own derived seed.
    #[serde(default = "default_true")]
    pub parallel: bool,

    #[serde(default)]
    pub fringe: FringeParams,
    #[serde(default)]
    pub tomography: TomographyParams,
    #[serde(default)]
    pub cd_timing: CdTimingParams,
    #[serde(default)]
    pub dgd_report: DgdReportParams,
    #[serde(default)]
    pub raman_sweep: RamanSweepParams,
    #[serde(default)]
    pub jsi: JsiParams,
    #[serde(default)]
    pub twist_scan: TwistScanParams,
}

fn default_window_ps() -> u64 {
    1_000
}

fn default_bin_width_ps() -> f64 {
    10.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FringeParams {
    /// Fixed polarizer angles on arm A, degrees.
    pub fixed_angles_deg: Vec<f64>,
    pub scan_start_deg: f64,
    pub scan_end_deg: f64,
    pub scan_points: usize,
    pub pairs_per_angle: u64,
}

impl Default for FringeParams {
    fn default() -> Self {
        Self {
            fixed_angles_deg: vec![-45.0, 0.0, 45.0, 90.0],
            scan_start_deg: 0.0,
            scan_end_deg: 168.75,
            scan_points: 16,
            pairs_per_angle: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographyParams {
    pub pairs_per_setting: u64,
}

impl Default for TomographyParams {
    fn default() -> Self {
        Self {
            pairs_per_setting: 100_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdTimingParams {
    /// Fiber lengths for the dispersive arm, km. The arm-A link from the
    /// main config supplies everything except the section length, which is
    /// overridden per grid point.
    pub lengths_km: Vec<f64>,
    pub pairs_per_length: u64,
    /// Insert a matching group delay on the reference arm so the
    /// coincidence peak stays near zero.
    pub compensate_base_delay: bool,
}

impl Default for CdTimingParams {
    fn default() -> Self {
        Self {
            lengths_km: vec![1.0, 10.0, 25.0, 50.0],
            pairs_per_length: 20_000,
            compensate_base_delay: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgdReportParams {
    pub wavelengths_nm: Vec<f64>,
    pub probe_step_nm: f64,
}

impl Default for DgdReportParams {
    fn default() -> Self {
        Self {
            wavelengths_nm: vec![1550.0],
            probe_step_nm: crate::fiber::DEFAULT_DGD_STEP_NM,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamanSweepParams {
    /// Classical channel wavelengths to sweep, nm.
    pub classical_wavelengths_nm: Vec<f64>,
    pub lengths_km: Vec<f64>,
    /// Classical launch powers, photons/s.
    pub launch_powers: Vec<f64>,
    /// Counting window for the Monte Carlo arrival check, seconds.
    pub duration_s: f64,
    /// Cap on expected arrivals per grid point; the window shrinks below
    /// `duration_s` when the model rate would exceed this, keeping high-power
    /// points affordable without losing statistical power.
    pub target_counts: u64,
}

impl Default for RamanSweepParams {
    fn default() -> Self {
        Self {
            classical_wavelengths_nm: vec![1270.0, 1310.0, 1330.0, 1490.0],
            lengths_km: vec![1.0, 5.0, 10.0, 25.0],
            launch_powers: vec![1e13, 1e14, 1e15],
            duration_s: 1.0,
            target_counts: 200_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JsiParams {
    pub pairs: u64,
    pub bins: usize,
}

impl Default for JsiParams {
    fn default() -> Self {
        Self {
            pairs: 100_000,
            bins: 41,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwistScanParams {
    pub twist_rates_rad_per_m: Vec<f64>,
    pub fiber_length_m: f64,
    pub scan_points: usize,
    pub pairs_per_angle: u64,
}

impl Default for TwistScanParams {
    fn default() -> Self {
        Self {
            twist_rates_rad_per_m: (0..10).map(|i| i as f64 * 0.5 / 9.0).collect(),
            fiber_length_m: 2.0,
            scan_points: 16,
            pairs_per_angle: 20_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Collect every validation problem before reporting.
    pub fn validate(&self) -> Result<(), Error> {
        let mut problems = Vec::new();
        self.source.validate(&mut problems);
        for (name, link) in [("fiber_a", &self.fiber_a), ("fiber_b", &self.fiber_b)] {
            if let Some(link) = link {
                link.validate(name, &mut problems);
            }
        }
        if let Some(channel) = &self.classical_channel {
            channel.validate(&mut problems);
        }
        if self.coincidence_window_ps == 0 {
            problems.push("coincidence_window_ps must be > 0".into());
        }
        if self.bin_width_ps <= 0.0 {
            problems.push("bin_width_ps must be > 0".into());
        }
        match self.kind {
            ExperimentKind::Fringe => {
                if self.fringe.scan_points < 3 {
                    problems.push("fringe.scan_points must be >= 3".into());
                }
                if self.fringe.pairs_per_angle == 0 {
                    problems.push("fringe.pairs_per_angle must be > 0".into());
                }
                if self.fringe.fixed_angles_deg.is_empty() {
                    problems.push("fringe.fixed_angles_deg must not be empty".into());
                }
            }
            ExperimentKind::Tomography => {
                if self.tomography.pairs_per_setting == 0 {
                    problems.push("tomography.pairs_per_setting must be > 0".into());
                }
            }
            ExperimentKind::CdTiming => {
                if self.cd_timing.lengths_km.is_empty() {
                    problems.push("cd_timing.lengths_km must not be empty".into());
                }
                if self.cd_timing.lengths_km.iter().any(|l| *l <= 0.0) {
                    problems.push("cd_timing.lengths_km entries must be > 0".into());
                }
                if self.cd_timing.pairs_per_length < 10 {
                    problems.push("cd_timing.pairs_per_length must be >= 10".into());
                }
                if self.fiber_a.is_none() {
                    problems.push("cd_timing requires fiber_a".into());
                }
            }
            ExperimentKind::DgdReport => {
                if self.fiber_a.is_none() {
                    problems.push("dgd_report requires fiber_a".into());
                }
                if self.dgd_report.wavelengths_nm.is_empty() {
                    problems.push("dgd_report.wavelengths_nm must not be empty".into());
                }
                if self.dgd_report.probe_step_nm <= 0.0 {
                    problems.push("dgd_report.probe_step_nm must be > 0".into());
                }
            }
            ExperimentKind::RamanSweep => {
                let p = &self.raman_sweep;
                if p.classical_wavelengths_nm.is_empty()
                    || p.lengths_km.is_empty()
                    || p.launch_powers.is_empty()
                {
                    problems.push("raman_sweep grid axes must not be empty".into());
                }
                if p.duration_s <= 0.0 {
                    problems.push("raman_sweep.duration_s must be > 0".into());
                }
                if p.target_counts == 0 {
                    problems.push("raman_sweep.target_counts must be > 0".into());
                }
                if self.classical_channel.is_none() {
                    problems.push("raman_sweep requires classical_channel".into());
                }
                if self.fiber_a.is_none() {
                    problems.push("raman_sweep requires fiber_a".into());
                }
            }
            ExperimentKind::Jsi => {
                if self.jsi.pairs == 0 {
                    problems.push("jsi.pairs must be > 0".into());
                }
                if self.jsi.bins < 2 {
                    problems.push("jsi.bins must be >= 2".into());
                }
            }
            ExperimentKind::TwistScan => {
                let p = &self.twist_scan;
                if p.twist_rates_rad_per_m.is_empty() {
                    problems.push("twist_scan.twist_rates_rad_per_m must not be empty".into());
                }
                if p.fiber_length_m <= 0.0 {
                    problems.push("twist_scan.fiber_length_m must be > 0".into());
                }
                if p.scan_points < 3 {
                    problems.push("twist_scan.scan_points must be >= 3".into());
                }
                if p.pairs_per_angle == 0 {
                    problems.push("twist_scan.pairs_per_angle must be > 0".into());
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn raman_table(&self) -> Result<RamanCoefficientTable, Error> {
        match &self.raman_table_path {
            Some(path) => RamanCoefficientTable::load(Path::new(path)),
            None => Ok(RamanCoefficientTable::default()),
        }
    }
}
