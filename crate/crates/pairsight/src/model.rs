//! Domain types shared by every stage: events, frames, camera geometry and
//! the pixel-to-physical-coordinate calibration.

use crate::error::{Error, Result};

/// Which arm of the pair source a detection belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Signal,
    Idler,
}

impl Arm {
    pub fn index(self) -> usize {
        match self {
            Arm::Signal => 0,
            Arm::Idler => 1,
        }
    }
}

/// Measurement basis selected by the imaging configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Crystal plane imaged onto the camera; coordinates in micrometers.
    Position,
    /// Fourier plane imaged onto the camera; coordinates in rad/um.
    Momentum,
}

/// One timestamped detection.
///
/// `t` is an integer tick count; physical time is `t * time_quantum_ns`.
/// Integer ticks keep coincidence-window comparisons exact and reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhotonEvent {
    pub t: i64,
    pub px: u16,
    pub py: u16,
    pub arm: Arm,
}

/// One exposure of a frame camera. Pixels are binary per frame per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub hits_signal: Vec<(u16, u16)>,
    pub hits_idler: Vec<(u16, u16)>,
    /// Exposure in nanoseconds.
    pub exposure_ns: f64,
}

impl Frame {
    pub fn empty(index: u64, exposure_ns: f64) -> Self {
        Frame {
            index,
            hits_signal: Vec::new(),
            hits_idler: Vec::new(),
            exposure_ns,
        }
    }

    pub fn hits(&self, arm: Arm) -> &[(u16, u16)] {
        match arm {
            Arm::Signal => &self.hits_signal,
            Arm::Idler => &self.hits_idler,
        }
    }
}

/// How the sensor is partitioned into the two arm regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmSplit {
    /// Signal on the left half, idler on the right half.
    Vertical,
    /// Signal on the top half, idler on the bottom half.
    Horizontal,
}

/// Rectangular pixel region, half-open in both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArmRegion {
    pub x0: u16,
    pub y0: u16,
    pub width: u16,
    pub height: u16,
}

impl ArmRegion {
    pub fn contains(&self, px: u16, py: u16) -> bool {
        px >= self.x0 && px < self.x0 + self.width && py >= self.y0 && py < self.y0 + self.height
    }

    /// Sub-pixel center of the region (half-integer on even sizes).
    pub fn center(&self) -> (f64, f64) {
        (
            self.x0 as f64 + (self.width as f64 - 1.0) / 2.0,
            self.y0 as f64 + (self.height as f64 - 1.0) / 2.0,
        )
    }
}

/// Sensor layout and detector response parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraGeometry {
    pub width: u16,
    pub height: u16,
    /// Pixel pitch in micrometers.
    pub pitch_um: f64,
    pub arm_split: ArmSplit,
    /// Timestamp granularity in nanoseconds.
    pub time_quantum_ns: f64,
    /// Effective temporal resolution in nanoseconds (FWHM).
    pub jitter_fwhm_ns: f64,
    /// Per-pixel dead time in nanoseconds.
    pub dead_time_ns: f64,
    pub quantum_efficiency: f64,
    /// Gap between successive frame exposures (frame cameras only).
    pub readout_gap_ns: f64,
}

impl CameraGeometry {
    /// Intensified time-stamping camera: 256x256 pixels of 55 um, 1.56 ns
    /// ticks, 6 ns FWHM effective resolution, ~1 us dead time, 0.2 total
    /// transmission.
    pub fn tpx3cam() -> Self {
        CameraGeometry {
            width: 256,
            height: 256,
            pitch_um: 55.0,
            arm_split: ArmSplit::Vertical,
            time_quantum_ns: 1.56,
            jitter_fwhm_ns: 6.0,
            dead_time_ns: 1000.0,
            quantum_efficiency: 0.2,
            readout_gap_ns: 0.0,
        }
    }

    /// Frame-based SPAD array: 64x32 pixels of 150 um, ~5% detection
    /// efficiency, binary pixels per frame.
    pub fn spad_spc3() -> Self {
        CameraGeometry {
            width: 64,
            height: 32,
            pitch_um: 150.0,
            arm_split: ArmSplit::Vertical,
            time_quantum_ns: 1.0,
            jitter_fwhm_ns: 0.0,
            dead_time_ns: 0.0,
            quantum_efficiency: 0.05,
            readout_gap_ns: 0.0,
        }
    }

    pub fn arm_region(&self, arm: Arm) -> ArmRegion {
        match self.arm_split {
            ArmSplit::Vertical => {
                let half = self.width / 2;
                match arm {
                    Arm::Signal => ArmRegion {
                        x0: 0,
                        y0: 0,
                        width: half,
                        height: self.height,
                    },
                    Arm::Idler => ArmRegion {
                        x0: half,
                        y0: 0,
                        width: self.width - half,
                        height: self.height,
                    },
                }
            }
            ArmSplit::Horizontal => {
                let half = self.height / 2;
                match arm {
                    Arm::Signal => ArmRegion {
                        x0: 0,
                        y0: 0,
                        width: self.width,
                        height: half,
                    },
                    Arm::Idler => ArmRegion {
                        x0: 0,
                        y0: half,
                        width: self.width,
                        height: self.height - half,
                    },
                }
            }
        }
    }

    /// Arm owning the pixel, or an error for pixels outside the sensor.
    pub fn arm_of(&self, px: u16, py: u16) -> Result<Arm> {
        for arm in [Arm::Signal, Arm::Idler] {
            if self.arm_region(arm).contains(px, py) {
                return Ok(arm);
            }
        }
        Err(Error::PixelOutsideArm {
            px,
            py,
            context: format!("{}x{} sensor", self.width, self.height),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("sensor dimensions must be nonzero".into()));
        }
        if self.pitch_um <= 0.0 {
            return Err(Error::Config("pixel pitch must be positive".into()));
        }
        if self.time_quantum_ns <= 0.0 {
            return Err(Error::Config("time quantum must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(Error::Config(format!(
                "quantum efficiency {} outside [0, 1]",
                self.quantum_efficiency
            )));
        }
        if self.jitter_fwhm_ns < 0.0 || self.dead_time_ns < 0.0 || self.readout_gap_ns < 0.0 {
            return Err(Error::Config(
                "temporal parameters must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Optical constants mapping pixels to physical coordinates, with the
/// sub-pixel center of each arm region as the per-arm origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub magnification: f64,
    /// Effective focal length in millimeters.
    pub f_eff_mm: f64,
    /// Wavelength in nanometers.
    pub wavelength_nm: f64,
    /// Sub-pixel origin of each arm region, indexed by [`Arm::index`].
    pub centers: [(f64, f64); 2],
}

impl Calibration {
    /// Calibration with per-arm origins at the arm-region centers.
    pub fn centered(
        geom: &CameraGeometry,
        magnification: f64,
        f_eff_mm: f64,
        wavelength_nm: f64,
    ) -> Self {
        Calibration {
            magnification,
            f_eff_mm,
            wavelength_nm,
            centers: [
                geom.arm_region(Arm::Signal).center(),
                geom.arm_region(Arm::Idler).center(),
            ],
        }
    }

    /// M = 6, f_eff = 50 mm, 810 nm pairs.
    pub fn tpx3cam(geom: &CameraGeometry) -> Self {
        Calibration::centered(geom, 6.0, 50.0, 810.0)
    }

    /// M = 9, f_eff = 75 mm, 810 nm pairs.
    pub fn spad_spc3(geom: &CameraGeometry) -> Self {
        Calibration::centered(geom, 9.0, 75.0, 810.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.magnification <= 0.0 || self.f_eff_mm <= 0.0 || self.wavelength_nm <= 0.0 {
            return Err(Error::Config(
                "magnification, focal length and wavelength must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Micrometers per pixel in the crystal plane (position basis).
    pub fn position_scale_um(&self, geom: &CameraGeometry) -> f64 {
        geom.pitch_um / self.magnification
    }

    /// rad/um per pixel in the crystal plane (momentum basis).
    pub fn momentum_scale(&self, geom: &CameraGeometry) -> f64 {
        let wavelength_um = self.wavelength_nm * 1e-3;
        let f_eff_um = self.f_eff_mm * 1e3;
        (2.0 * std::f64::consts::PI / wavelength_um) * geom.pitch_um / f_eff_um
    }

    pub fn scale(&self, geom: &CameraGeometry, basis: Basis) -> f64 {
        match basis {
            Basis::Position => self.position_scale_um(geom),
            Basis::Momentum => self.momentum_scale(geom),
        }
    }
}

/// Crystal-plane position of a pixel, in micrometers relative to the
/// center of the pixel's arm region.
pub fn pixel_to_position(
    px: u16,
    py: u16,
    cal: &Calibration,
    geom: &CameraGeometry,
) -> Result<(f64, f64)> {
    let arm = geom.arm_of(px, py)?;
    let (cx, cy) = cal.centers[arm.index()];
    let s = cal.position_scale_um(geom);
    Ok(((px as f64 - cx) * s, (py as f64 - cy) * s))
}

/// Crystal-plane transverse momentum of a pixel, in rad/um.
pub fn pixel_to_momentum(
    px: u16,
    py: u16,
    cal: &Calibration,
    geom: &CameraGeometry,
) -> Result<(f64, f64)> {
    let arm = geom.arm_of(px, py)?;
    let (cx, cy) = cal.centers[arm.index()];
    let s = cal.momentum_scale(geom);
    Ok(((px as f64 - cx) * s, (py as f64 - cy) * s))
}

/// Precomputed per-arm linear map between pixels and calibrated coordinates
/// for one basis. Used on the hot paths so the per-event cost is one
/// multiply-add per axis.
#[derive(Debug, Clone)]
pub struct CoordinateMapper {
    pub basis: Basis,
    scale: f64,
    centers: [(f64, f64); 2],
    regions: [ArmRegion; 2],
}

impl CoordinateMapper {
    pub fn new(geom: &CameraGeometry, cal: &Calibration, basis: Basis) -> Self {
        CoordinateMapper {
            basis,
            scale: cal.scale(geom, basis),
            centers: cal.centers,
            regions: [geom.arm_region(Arm::Signal), geom.arm_region(Arm::Idler)],
        }
    }

    /// Calibrated units per pixel.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn to_coord(&self, arm: Arm, px: u16, py: u16) -> (f64, f64) {
        let (cx, cy) = self.centers[arm.index()];
        ((px as f64 - cx) * self.scale, (py as f64 - cy) * self.scale)
    }

    /// Nearest pixel for a calibrated coordinate, or `None` when the
    /// coordinate falls outside the arm region.
    #[inline]
    pub fn to_pixel(&self, arm: Arm, x: f64, y: f64) -> Option<(u16, u16)> {
        let (cx, cy) = self.centers[arm.index()];
        let px = (x / self.scale + cx).round();
        let py = (y / self.scale + cy).round();
        if !px.is_finite() || !py.is_finite() || px < 0.0 || py < 0.0 {
            return None;
        }
        let (px, py) = (px as u16, py as u16);
        if self.regions[arm.index()].contains(px, py) {
            Some((px, py))
        } else {
            None
        }
    }

    /// Half-extent of the arm field of view around its center, in
    /// calibrated units, for the narrower of the two arms.
    pub fn fov_half_extent(&self) -> (f64, f64) {
        let mut half_w = f64::INFINITY;
        let mut half_h = f64::INFINITY;
        for region in &self.regions {
            half_w = half_w.min(region.width as f64 / 2.0 * self.scale);
            half_h = half_h.min(region.height as f64 / 2.0 * self.scale);
        }
        (half_w, half_h)
    }
}

/// Two detections judged coincident, in calibrated coordinates.
/// Photon 1 is the signal-arm member, photon 2 the idler-arm member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidencePair {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    /// Signal minus idler detection time, nanoseconds. Zero for frames.
    pub dt_ns: f64,
    pub basis: Basis,
}
