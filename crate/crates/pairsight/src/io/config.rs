//! Configuration file: TOML with sections `source`, `camera`,
//! `calibration`, `sweep` and `estimators`. Unknown keys are errors, so a
//! typo never silently falls back to a default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certify::{CameraKind, EprOptions, SweepConfig, SweepOptions};
use crate::error::{Error, Result};
use crate::estimators::{EntropyOptions, FitOptions};
use crate::hist::Axis;
use crate::model::{ArmSplit, Calibration, CameraGeometry};
use crate::spdc::{DoubleGaussianState, StrayProfile};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub source: SourceSection,
    pub camera: CameraSection,
    pub calibration: CalibrationSection,
    pub sweep: SweepSection,
    pub estimators: EstimatorsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub sigma_minus_um: f64,
    pub sigma_kplus_rad_per_um: f64,
    pub pair_rate_per_s: f64,
    pub dark_rate_per_arm_per_s: f64,
    /// "uniform", "spdc-marginal" or "mixture".
    pub stray_profile: String,
    /// Marginal-profile fraction when `stray_profile = "mixture"`.
    pub stray_spdc_weight: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            sigma_minus_um: 13.0,
            sigma_kplus_rad_per_um: 0.01,
            pair_rate_per_s: 1e6,
            dark_rate_per_arm_per_s: 0.0,
            stray_profile: "uniform".into(),
            stray_spdc_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSection {
    /// "event" or "frame".
    pub kind: String,
    pub width_px: u16,
    pub height_px: u16,
    pub pitch_um: f64,
    /// "vertical" (signal left) or "horizontal" (signal top).
    pub arm_split: String,
    pub time_quantum_ns: f64,
    pub jitter_fwhm_ns: f64,
    pub dead_time_ns: f64,
    pub quantum_efficiency: f64,
    pub readout_gap_ns: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        let geom = CameraGeometry::tpx3cam();
        CameraSection {
            kind: "event".into(),
            width_px: geom.width,
            height_px: geom.height,
            pitch_um: geom.pitch_um,
            arm_split: "vertical".into(),
            time_quantum_ns: geom.time_quantum_ns,
            jitter_fwhm_ns: geom.jitter_fwhm_ns,
            dead_time_ns: geom.dead_time_ns,
            quantum_efficiency: geom.quantum_efficiency,
            readout_gap_ns: geom.readout_gap_ns,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub magnification: f64,
    pub f_eff_mm: f64,
    pub wavelength_nm: f64,
    /// Explicit arm centers; when absent the arm-region centers are used.
    pub center_signal_px: Option<f64>,
    pub center_signal_py: Option<f64>,
    pub center_idler_px: Option<f64>,
    pub center_idler_py: Option<f64>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            magnification: 6.0,
            f_eff_mm: 50.0,
            wavelength_nm: 810.0,
            center_signal_px: None,
            center_signal_py: None,
            center_idler_px: None,
            center_idler_py: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub delta_t_ns: Vec<f64>,
    pub duration_s: f64,
    pub accidental_shift_factor: f64,
    pub shard_s: f64,
    /// Transverse axis the verdicts use: "x" or "y".
    pub axis: String,
    /// Diagnostic flag: also report same-arm pairs in `coincide`.
    pub include_same_arm_pairs: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            delta_t_ns: vec![6.0, 100.0, 1000.0, 4000.0],
            duration_s: 0.1,
            accidental_shift_factor: 10.0,
            shard_s: 0.05,
            axis: "x".into(),
            include_same_arm_pairs: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorsSection {
    pub projection_bin_px: f64,
    pub entropy_bin_px: f64,
    pub fit_with_offset: bool,
    pub fit_anisotropic: bool,
    pub fit_min_total: f64,
    pub fit_max_iterations: usize,
    pub fit_tolerance: f64,
    pub background_exclusion_factor: f64,
    pub miller_madow: bool,
    /// Sigmas of headroom required by the conservative verdict rule.
    pub sigma_multiplier: f64,
}

impl Default for EstimatorsSection {
    fn default() -> Self {
        EstimatorsSection {
            projection_bin_px: 1.0,
            entropy_bin_px: 1.0,
            fit_with_offset: false,
            fit_anisotropic: false,
            fit_min_total: 100.0,
            fit_max_iterations: 200,
            fit_tolerance: 1e-8,
            background_exclusion_factor: 3.0,
            miller_madow: false,
            sigma_multiplier: 1.0,
        }
    }
}

impl Config {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Config::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn camera_kind(&self) -> Result<CameraKind> {
        match self.camera.kind.as_str() {
            "event" => Ok(CameraKind::Event),
            "frame" => Ok(CameraKind::Frame),
            other => Err(Error::Config(format!(
                "camera.kind must be `event` or `frame`, got `{other}`"
            ))),
        }
    }

    pub fn geometry(&self) -> Result<CameraGeometry> {
        let arm_split = match self.camera.arm_split.as_str() {
            "vertical" => ArmSplit::Vertical,
            "horizontal" => ArmSplit::Horizontal,
            other => {
                return Err(Error::Config(format!(
                    "camera.arm_split must be `vertical` or `horizontal`, got `{other}`"
                )))
            }
        };
        let geom = CameraGeometry {
            width: self.camera.width_px,
            height: self.camera.height_px,
            pitch_um: self.camera.pitch_um,
            arm_split,
            time_quantum_ns: self.camera.time_quantum_ns,
            jitter_fwhm_ns: self.camera.jitter_fwhm_ns,
            dead_time_ns: self.camera.dead_time_ns,
            quantum_efficiency: self.camera.quantum_efficiency,
            readout_gap_ns: self.camera.readout_gap_ns,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn calibration(&self, geom: &CameraGeometry) -> Result<Calibration> {
        let mut cal = Calibration::centered(
            geom,
            self.calibration.magnification,
            self.calibration.f_eff_mm,
            self.calibration.wavelength_nm,
        );
        let explicit = [
            (
                self.calibration.center_signal_px,
                self.calibration.center_signal_py,
            ),
            (
                self.calibration.center_idler_px,
                self.calibration.center_idler_py,
            ),
        ];
        for (i, (px, py)) in explicit.into_iter().enumerate() {
            match (px, py) {
                (Some(px), Some(py)) => cal.centers[i] = (px, py),
                (None, None) => {}
                _ => {
                    return Err(Error::Config(
                        "arm centers need both px and py when overridden".into(),
                    ))
                }
            }
        }
        cal.validate()?;
        Ok(cal)
    }

    pub fn state(&self) -> Result<DoubleGaussianState> {
        let stray_profile = match self.source.stray_profile.as_str() {
            "uniform" => StrayProfile::Uniform,
            "spdc-marginal" => StrayProfile::SpdcMarginal,
            "mixture" => StrayProfile::Mixture {
                spdc_weight: self.source.stray_spdc_weight,
            },
            other => {
                return Err(Error::Config(format!(
                    "source.stray_profile must be `uniform`, `spdc-marginal` or `mixture`, got `{other}`"
                )))
            }
        };
        let state = DoubleGaussianState {
            sigma_minus: self.source.sigma_minus_um,
            sigma_kplus: self.source.sigma_kplus_rad_per_um,
            pair_rate: self.source.pair_rate_per_s,
            dark_rate_per_arm: self.source.dark_rate_per_arm_per_s,
            stray_profile,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn axis(&self) -> Result<Axis> {
        match self.sweep.axis.as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            other => Err(Error::Config(format!(
                "sweep.axis must be `x` or `y`, got `{other}`"
            ))),
        }
    }

    pub fn sweep_options(&self) -> Result<SweepOptions> {
        Ok(SweepOptions {
            projection_bin_px: self.estimators.projection_bin_px,
            entropy_bin_px: self.estimators.entropy_bin_px,
            accidental_shift_factor: self.sweep.accidental_shift_factor,
            background_exclusion_factor: self.estimators.background_exclusion_factor,
            fit: FitOptions {
                with_offset: self.estimators.fit_with_offset,
                anisotropic: self.estimators.fit_anisotropic,
                min_total: self.estimators.fit_min_total,
                max_iterations: self.estimators.fit_max_iterations,
                tolerance: self.estimators.fit_tolerance,
                initial: None,
            },
            entropy: EntropyOptions {
                miller_madow: self.estimators.miller_madow,
            },
            epr: EprOptions {
                sigma_multiplier: self.estimators.sigma_multiplier,
            },
            axis: self.axis()?,
            shard_s: self.sweep.shard_s,
        })
    }

    pub fn sweep_config(&self, seed: u64) -> Result<SweepConfig> {
        let geometry = self.geometry()?;
        let calibration = self.calibration(&geometry)?;
        Ok(SweepConfig {
            camera_kind: self.camera_kind()?,
            geometry,
            calibration,
            state: self.state()?,
            delta_t_ns: self.sweep.delta_t_ns.clone(),
            duration_s: self.sweep.duration_s,
            seed,
            options: self.sweep_options()?,
        })
    }
}
