//! Mergeable 2D histogram accumulators for coincidence projections and
//! joint single-axis distributions.
//!
//! Bin `(0, 0)` is centered on `origin`; bin `i` along an axis covers
//! `[origin + (i - 0.5) w, origin + (i + 0.5) w)`. Keeping lattice-valued
//! data on bin centers makes binning robust to rounding.

use crate::error::{Error, Result};
use crate::model::{Basis, Calibration, CameraGeometry, CoincidencePair};

/// Projection axis of the joint probability distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    /// (x1 - x2, y1 - y2): correlation peak in the position basis.
    MinusCoordinate,
    /// (x1 + x2, y1 + y2): anti-correlation peak in the momentum basis.
    SumCoordinate,
}

/// Transverse axis selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Bin layout shared by the histogram types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub bin_width_u: f64,
    pub bin_width_v: f64,
    /// Coordinate of the center of bin (0, 0).
    pub origin_u: f64,
    pub origin_v: f64,
    pub n_u: usize,
    pub n_v: usize,
}

impl GridGeometry {
    pub fn new(
        bin_width_u: f64,
        bin_width_v: f64,
        origin_u: f64,
        origin_v: f64,
        n_u: usize,
        n_v: usize,
    ) -> Result<Self> {
        if bin_width_u <= 0.0 || bin_width_v <= 0.0 {
            return Err(Error::InvalidBinWidth {
                bin_u: bin_width_u,
                bin_v: bin_width_v,
            });
        }
        if n_u == 0 || n_v == 0 {
            return Err(Error::Config(
                "grid must have at least one bin per axis".into(),
            ));
        }
        Ok(GridGeometry {
            bin_width_u,
            bin_width_v,
            origin_u,
            origin_v,
            n_u,
            n_v,
        })
    }

    /// Grid symmetric around (0, 0) with an odd number of bins per axis so
    /// zero is a bin center.
    pub fn centered(bin_width_u: f64, bin_width_v: f64, n_u: usize, n_v: usize) -> Result<Self> {
        let n_u = if n_u.is_multiple_of(2) { n_u + 1 } else { n_u };
        let n_v = if n_v.is_multiple_of(2) { n_v + 1 } else { n_v };
        GridGeometry::new(
            bin_width_u,
            bin_width_v,
            -((n_u as f64 - 1.0) / 2.0) * bin_width_u,
            -((n_v as f64 - 1.0) / 2.0) * bin_width_v,
            n_u,
            n_v,
        )
    }

    #[inline]
    pub fn bin_of(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let iu = ((u - self.origin_u) / self.bin_width_u).round();
        let iv = ((v - self.origin_v) / self.bin_width_v).round();
        if iu >= 0.0 && iu < self.n_u as f64 && iv >= 0.0 && iv < self.n_v as f64 {
            Some((iu as usize, iv as usize))
        } else {
            None
        }
    }

    #[inline]
    pub fn center_u(&self, iu: usize) -> f64 {
        self.origin_u + iu as f64 * self.bin_width_u
    }

    #[inline]
    pub fn center_v(&self, iv: usize) -> f64 {
        self.origin_v + iv as f64 * self.bin_width_v
    }

    pub fn len(&self) -> usize {
        self.n_u * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_matches(&self, other: &GridGeometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Counts over sum- or minus-coordinates of coincidence pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHist {
    pub axis_kind: AxisKind,
    pub basis: Basis,
    pub grid: GridGeometry,
    counts: Vec<u64>,
    total: u64,
    overflow: u64,
}

impl ProjectionHist {
    pub fn new(axis_kind: AxisKind, basis: Basis, grid: GridGeometry) -> Self {
        ProjectionHist {
            axis_kind,
            basis,
            grid,
            counts: vec![0; grid.len()],
            total: 0,
            overflow: 0,
        }
    }

    /// Projection grid at `bin_px` calibrated pixels per bin covering every
    /// reachable pair of arm pixels.
    pub fn for_camera(
        axis_kind: AxisKind,
        geom: &CameraGeometry,
        cal: &Calibration,
        basis: Basis,
        bin_px: f64,
    ) -> Result<Self> {
        let scale = cal.scale(geom, basis);
        let region = geom.arm_region(crate::model::Arm::Signal);
        let span_u = 2 * region.width as usize - 1;
        let span_v = 2 * region.height as usize - 1;
        let n_u = (span_u as f64 / bin_px).ceil() as usize;
        let n_v = (span_v as f64 / bin_px).ceil() as usize;
        let grid = GridGeometry::centered(scale * bin_px, scale * bin_px, n_u, n_v)?;
        Ok(ProjectionHist::new(axis_kind, basis, grid))
    }

    #[inline]
    pub fn record_pair(&mut self, pair: &CoincidencePair) {
        let (u, v) = match self.axis_kind {
            AxisKind::MinusCoordinate => (pair.x1 - pair.x2, pair.y1 - pair.y2),
            AxisKind::SumCoordinate => (pair.x1 + pair.x2, pair.y1 + pair.y2),
        };
        self.record(u, v);
    }

    #[inline]
    pub fn record(&mut self, u: f64, v: f64) {
        match self.grid.bin_of(u, v) {
            Some((iu, iv)) => {
                self.counts[iv * self.grid.n_u + iu] += 1;
                self.total += 1;
            }
            None => self.overflow += 1,
        }
    }

    pub fn accumulate<I: IntoIterator<Item = CoincidencePair>>(&mut self, pairs: I) {
        for pair in pairs {
            self.record_pair(&pair);
        }
    }

    pub fn merge(&mut self, other: &ProjectionHist) -> Result<()> {
        self.grid.check_matches(&other.grid)?;
        if self.axis_kind != other.axis_kind || self.basis != other.basis {
            return Err(Error::GeometryMismatch(
                "projection axis kind or basis differs".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.overflow += other.overflow;
        Ok(())
    }

    #[inline]
    pub fn count(&self, iu: usize, iv: usize) -> u64 {
        self.counts[iv * self.grid.n_u + iu]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Counts accumulated inside the grid.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Pairs that fell outside the grid.
    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    /// Real-valued copy for fitting and subtraction.
    pub fn to_grid(&self) -> ProjectionGrid {
        ProjectionGrid {
            axis_kind: self.axis_kind,
            basis: self.basis,
            grid: self.grid,
            values: self.counts.iter().map(|&c| c as f64).collect(),
        }
    }
}

/// Real-valued projection, e.g. after accidental subtraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGrid {
    pub axis_kind: AxisKind,
    pub basis: Basis,
    pub grid: GridGeometry,
    pub values: Vec<f64>,
}

impl ProjectionGrid {
    #[inline]
    pub fn value(&self, iu: usize, iv: usize) -> f64 {
        self.values[iv * self.grid.n_u + iu]
    }

    pub fn total_weight(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Counts over (photon-1 bin, photon-2 bin) along one transverse axis;
/// the discretized joint distribution behind the conditional entropies.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAxisHist {
    pub axis: Axis,
    pub basis: Basis,
    /// u indexes photon 1 (signal), v indexes photon 2 (idler).
    pub grid: GridGeometry,
    counts: Vec<u64>,
    total: u64,
    overflow: u64,
}

impl JointAxisHist {
    pub fn new(axis: Axis, basis: Basis, grid: GridGeometry) -> Result<Self> {
        if (grid.bin_width_u - grid.bin_width_v).abs() > 1e-12 * grid.bin_width_u.abs() {
            return Err(Error::Config(
                "joint-axis histogram needs equal bin widths for both photons".into(),
            ));
        }
        Ok(JointAxisHist {
            axis,
            basis,
            grid,
            counts: vec![0; grid.len()],
            total: 0,
            overflow: 0,
        })
    }

    /// Joint grid covering both arm fields of view at `bin_px` calibrated
    /// pixels per bin.
    pub fn for_camera(
        axis: Axis,
        geom: &CameraGeometry,
        cal: &Calibration,
        basis: Basis,
        bin_px: f64,
    ) -> Result<Self> {
        let scale = cal.scale(geom, basis);
        let region = geom.arm_region(crate::model::Arm::Signal);
        let span = match axis {
            Axis::X => region.width as usize,
            Axis::Y => region.height as usize,
        };
        let n = (span as f64 / bin_px).ceil() as usize;
        let w = scale * bin_px;
        let grid = GridGeometry::centered(w, w, n, n)?;
        JointAxisHist::new(axis, basis, grid)
    }

    #[inline]
    pub fn record_pair(&mut self, pair: &CoincidencePair) {
        let (c1, c2) = match self.axis {
            Axis::X => (pair.x1, pair.x2),
            Axis::Y => (pair.y1, pair.y2),
        };
        self.record(c1, c2);
    }

    #[inline]
    pub fn record(&mut self, coord1: f64, coord2: f64) {
        match self.grid.bin_of(coord1, coord2) {
            Some((i1, i2)) => {
                self.counts[i2 * self.grid.n_u + i1] += 1;
                self.total += 1;
            }
            None => self.overflow += 1,
        }
    }

    pub fn merge(&mut self, other: &JointAxisHist) -> Result<()> {
        self.grid.check_matches(&other.grid)?;
        if self.axis != other.axis || self.basis != other.basis {
            return Err(Error::GeometryMismatch(
                "joint-axis histograms differ".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.overflow += other.overflow;
        Ok(())
    }

    #[inline]
    pub fn count(&self, i1: usize, i2: usize) -> u64 {
        self.counts[i2 * self.grid.n_u + i1]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn bin_width(&self) -> f64 {
        self.grid.bin_width_u
    }

    /// Marginal counts of photon 1 (sums over photon-2 bins).
    pub fn marginal_photon1(&self) -> Vec<u64> {
        let mut m = vec![0u64; self.grid.n_u];
        for i2 in 0..self.grid.n_v {
            for (i1, entry) in m.iter_mut().enumerate() {
                *entry += self.count(i1, i2);
            }
        }
        m
    }
}
