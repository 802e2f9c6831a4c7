//! Entanglement criteria and the coincidence-window sweep that drives them:
//! EPR-Reid products from fitted or formal-variance widths, the entropic
//! criterion, and per-window rows combining raw, subtracted and variance
//! verdicts.

use crate::acquisition::{derive_seed, simulate_event_run, simulate_frame_run, EventRun, FrameRun};
use crate::coincidence::{
    estimate_accidentals_frames, estimate_accidentals_stream, find_coincidences_frames,
    find_coincidences_stream, subtract_projection,
};
use crate::error::{Error, Result};
use crate::estimators::{
    background_sigma, conditional_entropy, fit_gaussian_2d, variance_width, width_uncertainty,
    EntropyOptions, FitOptions, GaussianFitResult, GridAxis, PeakExclusion, WidthEstimate,
    WidthMethod,
};
use crate::hist::{Axis, AxisKind, JointAxisHist, ProjectionGrid, ProjectionHist};
use crate::model::{Basis, Calibration, CameraGeometry, CoincidencePair, CoordinateMapper};
use crate::spdc::DoubleGaussianState;

/// Separable states satisfy `dx_minus * dk_plus >= 1/2`.
pub const EPR_THRESHOLD: f64 = 0.5;

/// Separable states satisfy `h(x2|x1) + h(k2|k1) >= ln(2 pi e)`.
pub fn entropic_threshold() -> f64 {
    (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
}

/// Certification policy: how many sigmas of headroom a verdict needs.
#[derive(Debug, Clone, Copy)]
pub struct EprOptions {
    pub sigma_multiplier: f64,
}

impl Default for EprOptions {
    fn default() -> Self {
        EprOptions {
            sigma_multiplier: 1.0,
        }
    }
}

/// Outcome of the EPR-Reid criterion for one axis and method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EprVerdict {
    pub product: f64,
    pub uncertainty: f64,
    pub threshold: f64,
    pub certified: bool,
    pub axis: Axis,
    pub method: WidthMethod,
    pub subtracted: bool,
}

/// EPR-Reid criterion from a position-difference width and a momentum-sum
/// width sharing one axis and estimation method. Certification is
/// conservative: `product + k * uncertainty` must fall below 1/2.
pub fn epr_reid(
    dxm: &WidthEstimate,
    dkp: &WidthEstimate,
    axis: Axis,
    subtracted: bool,
    options: &EprOptions,
) -> Result<EprVerdict> {
    if dxm.method != dkp.method {
        return Err(Error::MixedMethods(dxm.method, dkp.method));
    }
    let product = dxm.value * dkp.value;
    let uncertainty = if dxm.value > 0.0 && dkp.value > 0.0 {
        product
            * ((dxm.uncertainty / dxm.value).powi(2) + (dkp.uncertainty / dkp.value).powi(2)).sqrt()
    } else {
        0.0
    };
    Ok(EprVerdict {
        product,
        uncertainty,
        threshold: EPR_THRESHOLD,
        certified: product + options.sigma_multiplier * uncertainty < EPR_THRESHOLD,
        axis,
        method: dxm.method,
        subtracted,
    })
}

/// Outcome of the entropic criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicVerdict {
    pub hx: f64,
    pub hk: f64,
    pub sum: f64,
    pub threshold: f64,
    pub certified: bool,
}

/// Entropic criterion from the two conditional entropies (nats).
pub fn entropic_criterion(hx: f64, hk: f64) -> EntropicVerdict {
    let sum = hx + hk;
    let threshold = entropic_threshold();
    EntropicVerdict {
        hx,
        hk,
        sum,
        threshold,
        certified: sum < threshold,
    }
}

/// Event-based or frame-based coincidence counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraKind {
    Event,
    Frame,
}

/// Everything the sweep driver needs.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub camera_kind: CameraKind,
    pub geometry: CameraGeometry,
    pub calibration: Calibration,
    pub state: DoubleGaussianState,
    /// Coincidence windows (event cameras) or frame exposures (frame
    /// cameras), nanoseconds.
    pub delta_t_ns: Vec<f64>,
    pub duration_s: f64,
    pub seed: u64,
    pub options: SweepOptions,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Projection bin width in calibrated pixels.
    pub projection_bin_px: f64,
    /// Joint-axis (entropy) bin width in calibrated pixels.
    pub entropy_bin_px: f64,
    /// Accidental shift as a multiple of the window.
    pub accidental_shift_factor: f64,
    /// Exclusion radius around the fitted peak, in fitted widths, for the
    /// background noise estimate.
    pub background_exclusion_factor: f64,
    pub fit: FitOptions,
    pub entropy: EntropyOptions,
    pub epr: EprOptions,
    pub axis: Axis,
    /// Simulation shard length in seconds.
    pub shard_s: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            projection_bin_px: 1.0,
            entropy_bin_px: 1.0,
            accidental_shift_factor: 10.0,
            background_exclusion_factor: 3.0,
            fit: FitOptions::default(),
            entropy: EntropyOptions::default(),
            epr: EprOptions::default(),
            axis: Axis::X,
            shard_s: 0.05,
        }
    }
}

/// Everything measured at one coincidence window.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepData {
    /// Raw Gaussian-fit position-difference width.
    pub dxm: WidthEstimate,
    /// Raw Gaussian-fit momentum-sum width.
    pub dkp: WidthEstimate,
    pub epr_raw: EprVerdict,
    pub epr_subtracted: EprVerdict,
    pub epr_variance: EprVerdict,
    pub entropy: EntropicVerdict,
    pub raw_pairs_position: u64,
    pub raw_pairs_momentum: u64,
    pub accidental_pairs_position: u64,
    pub accidental_pairs_momentum: u64,
}

/// One sweep row; a failed window keeps its error and the sweep continues.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta_t_ns: f64,
    pub data: Option<SweepData>,
    pub error: Option<String>,
}

const POSITION_RUN_TAG: u64 = 0x7051;
const MOMENTUM_RUN_TAG: u64 = 0x307E;

/// Accumulators filled in one pass over a pair stream.
struct BasisAccumulators {
    projection: ProjectionHist,
    joint: JointAxisHist,
}

impl BasisAccumulators {
    fn new(
        axis_kind: AxisKind,
        geom: &CameraGeometry,
        cal: &Calibration,
        basis: Basis,
        options: &SweepOptions,
    ) -> Result<Self> {
        Ok(BasisAccumulators {
            projection: ProjectionHist::for_camera(
                axis_kind,
                geom,
                cal,
                basis,
                options.projection_bin_px,
            )?,
            joint: JointAxisHist::for_camera(
                options.axis,
                geom,
                cal,
                basis,
                options.entropy_bin_px,
            )?,
        })
    }

    fn fill<I: Iterator<Item = CoincidencePair>>(&mut self, pairs: I) {
        for pair in pairs {
            self.projection.record_pair(&pair);
            self.joint.record_pair(&pair);
        }
    }
}

fn fit_width_estimate(
    grid: &ProjectionGrid,
    scale: f64,
    options: &SweepOptions,
) -> Result<(WidthEstimate, GaussianFitResult)> {
    let fit = fit_gaussian_2d(grid, &options.fit)?;
    if !fit.converged {
        return Err(Error::Config(format!(
            "gaussian fit did not converge after {} iterations",
            fit.iterations
        )));
    }
    let mut exclusion = PeakExclusion::around(&fit, options.background_exclusion_factor);
    // Never let the exclusion swallow the grid; shrink until enough bins
    // remain to measure the noise.
    let sigma = loop {
        match background_sigma(grid, &exclusion) {
            Ok(sigma) => break sigma,
            Err(Error::BackgroundRegionTooSmall { .. }) if exclusion.radius > scale => {
                exclusion.radius /= 2.0;
            }
            Err(e) => return Err(e),
        }
    };
    let uncertainty = width_uncertainty(fit.width, fit.amplitude, sigma)?;
    Ok((
        WidthEstimate {
            value: fit.width,
            uncertainty,
            method: WidthMethod::GaussianFit,
        },
        fit,
    ))
}

struct BasisMeasurement {
    raw_fit: WidthEstimate,
    subtracted_fit: WidthEstimate,
    variance: WidthEstimate,
    entropy_nats: f64,
    raw_pairs: u64,
    accidental_pairs: u64,
}

fn measure_basis(
    raw: &BasisAccumulators,
    accidental: &ProjectionHist,
    scale: f64,
    options: &SweepOptions,
) -> Result<BasisMeasurement> {
    let raw_grid = raw.projection.to_grid();
    let (raw_fit, _) = fit_width_estimate(&raw_grid, scale, options)?;
    let corrected = subtract_projection(&raw.projection, accidental, 1.0)?;
    let (subtracted_fit, _) = fit_width_estimate(&corrected, scale, options)?;
    let variance = variance_width(&raw.projection, GridAxis::U)?;
    let entropy_nats = conditional_entropy(&raw.joint, &options.entropy)?;
    Ok(BasisMeasurement {
        raw_fit,
        subtracted_fit,
        variance,
        entropy_nats,
        raw_pairs: raw.projection.total() + raw.projection.overflow(),
        accidental_pairs: accidental.total() + accidental.overflow(),
    })
}

fn assemble_row(
    position: BasisMeasurement,
    momentum: BasisMeasurement,
    options: &SweepOptions,
) -> Result<SweepData> {
    let epr_raw = epr_reid(
        &position.raw_fit,
        &momentum.raw_fit,
        options.axis,
        false,
        &options.epr,
    )?;
    let epr_subtracted = epr_reid(
        &position.subtracted_fit,
        &momentum.subtracted_fit,
        options.axis,
        true,
        &options.epr,
    )?;
    let epr_variance = epr_reid(
        &position.variance,
        &momentum.variance,
        options.axis,
        false,
        &options.epr,
    )?;
    let entropy = entropic_criterion(position.entropy_nats, momentum.entropy_nats);
    Ok(SweepData {
        dxm: position.raw_fit,
        dkp: momentum.raw_fit,
        epr_raw,
        epr_subtracted,
        epr_variance,
        entropy,
        raw_pairs_position: position.raw_pairs,
        raw_pairs_momentum: momentum.raw_pairs,
        accidental_pairs_position: position.accidental_pairs,
        accidental_pairs_momentum: momentum.accidental_pairs,
    })
}

fn event_basis_measurement(
    run: &EventRun,
    axis_kind: AxisKind,
    delta_t_ns: f64,
    geom: &CameraGeometry,
    cal: &Calibration,
    options: &SweepOptions,
) -> Result<BasisMeasurement> {
    let mapper = CoordinateMapper::new(geom, cal, run.basis);
    let mut raw = BasisAccumulators::new(axis_kind, geom, cal, run.basis, options)?;
    raw.fill(find_coincidences_stream(
        &run.events,
        delta_t_ns,
        geom.time_quantum_ns,
        &mapper,
    )?);
    let shift_ns = options.accidental_shift_factor * delta_t_ns;
    let mut accidental =
        ProjectionHist::for_camera(axis_kind, geom, cal, run.basis, options.projection_bin_px)?;
    accidental.accumulate(estimate_accidentals_stream(
        &run.events,
        delta_t_ns,
        shift_ns,
        geom.time_quantum_ns,
        &mapper,
    )?);
    measure_basis(&raw, &accidental, mapper.scale(), options)
}

fn frame_basis_measurement(
    run: &FrameRun,
    axis_kind: AxisKind,
    geom: &CameraGeometry,
    cal: &Calibration,
    options: &SweepOptions,
) -> Result<BasisMeasurement> {
    let mapper = CoordinateMapper::new(geom, cal, run.basis);
    let mut raw = BasisAccumulators::new(axis_kind, geom, cal, run.basis, options)?;
    raw.fill(find_coincidences_frames(&run.frames, &mapper));
    let mut accidental =
        ProjectionHist::for_camera(axis_kind, geom, cal, run.basis, options.projection_bin_px)?;
    accidental.accumulate(estimate_accidentals_frames(&run.frames, &mapper)?);
    measure_basis(&raw, &accidental, mapper.scale(), options)
}

/// One row for an already-acquired pair of frame runs, at their recorded
/// exposure. Frame cameras fix the window at acquisition time, so a
/// recorded sequence yields exactly one sweep row.
pub fn sweep_row_from_frame_runs(
    position_run: &FrameRun,
    momentum_run: &FrameRun,
    geom: &CameraGeometry,
    cal: &Calibration,
    options: &SweepOptions,
) -> SweepRow {
    let delta_t_ns = position_run.exposure_ns;
    let data = (|| {
        if (position_run.exposure_ns - momentum_run.exposure_ns).abs()
            > 1e-9 * position_run.exposure_ns.abs()
        {
            return Err(Error::Config(format!(
                "frame runs have different exposures: {} vs {} ns",
                position_run.exposure_ns, momentum_run.exposure_ns
            )));
        }
        let position =
            frame_basis_measurement(position_run, AxisKind::MinusCoordinate, geom, cal, options)?;
        let momentum =
            frame_basis_measurement(momentum_run, AxisKind::SumCoordinate, geom, cal, options)?;
        assemble_row(position, momentum, options)
    })();
    to_row(delta_t_ns, data)
}

/// Rows for already-acquired event runs, one per window. Used both by the
/// simulation sweep and by the CLI when replaying recorded event files.
pub fn sweep_rows_from_event_runs(
    position_run: &EventRun,
    momentum_run: &EventRun,
    windows: &[f64],
    geom: &CameraGeometry,
    cal: &Calibration,
    options: &SweepOptions,
) -> Vec<SweepRow> {
    let mut windows = windows.to_vec();
    windows.sort_by(f64::total_cmp);
    windows
        .iter()
        .map(|&delta_t_ns| {
            let data = event_basis_measurement(
                position_run,
                AxisKind::MinusCoordinate,
                delta_t_ns,
                geom,
                cal,
                options,
            )
            .and_then(|position| {
                let momentum = event_basis_measurement(
                    momentum_run,
                    AxisKind::SumCoordinate,
                    delta_t_ns,
                    geom,
                    cal,
                    options,
                )?;
                assemble_row(position, momentum, options)
            });
            to_row(delta_t_ns, data)
        })
        .collect()
}

/// Run the full two-basis pipeline over every requested window and collect
/// one row per window, ordered by window size. Event cameras reuse one
/// simulated acquisition per basis across windows; frame cameras expose
/// once per window since the window is the exposure.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.state.validate()?;
    config.geometry.validate()?;
    config.calibration.validate()?;
    let mut windows = config.delta_t_ns.clone();
    windows.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(windows.len());
    if windows.is_empty() {
        return Ok(rows);
    }

    match config.camera_kind {
        CameraKind::Event => {
            let position_run = simulate_event_run(
                &config.state,
                Basis::Position,
                &config.geometry,
                &config.calibration,
                config.duration_s,
                derive_seed(config.seed, POSITION_RUN_TAG),
                config.options.shard_s,
            )?;
            let momentum_run = simulate_event_run(
                &config.state,
                Basis::Momentum,
                &config.geometry,
                &config.calibration,
                config.duration_s,
                derive_seed(config.seed, MOMENTUM_RUN_TAG),
                config.options.shard_s,
            )?;
            rows = sweep_rows_from_event_runs(
                &position_run,
                &momentum_run,
                &windows,
                &config.geometry,
                &config.calibration,
                &config.options,
            );
        }
        CameraKind::Frame => {
            for &delta_t_ns in &windows {
                let runs = simulate_frame_run(
                    &config.state,
                    Basis::Position,
                    &config.geometry,
                    &config.calibration,
                    delta_t_ns,
                    config.duration_s,
                    derive_seed(config.seed, POSITION_RUN_TAG),
                    config.options.shard_s,
                )
                .and_then(|position_run| {
                    let momentum_run = simulate_frame_run(
                        &config.state,
                        Basis::Momentum,
                        &config.geometry,
                        &config.calibration,
                        delta_t_ns,
                        config.duration_s,
                        derive_seed(config.seed, MOMENTUM_RUN_TAG),
                        config.options.shard_s,
                    )?;
                    Ok((position_run, momentum_run))
                });
                rows.push(match runs {
                    Ok((position_run, momentum_run)) => sweep_row_from_frame_runs(
                        &position_run,
                        &momentum_run,
                        &config.geometry,
                        &config.calibration,
                        &config.options,
                    ),
                    Err(e) => to_row(delta_t_ns, Err(e)),
                });
            }
        }
    }
    Ok(rows)
}

/// Least-squares slope of the entropy sum against ln(window), in nats per
/// e-fold. Quantifies how fast the entropic criterion degrades with the
/// coincidence window; extrapolating it below the simulated windows is
/// informational only and never a certification claim.
pub fn entropy_trend_slope(rows: &[SweepRow]) -> Option<f64> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.data.as_ref().map(|d| (r.delta_t_ns.ln(), d.entropy.sum)))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let den: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    (den > 0.0).then(|| num / den)
}

fn to_row(delta_t_ns: f64, data: Result<SweepData>) -> SweepRow {
    match data {
        Ok(data) => SweepRow {
            delta_t_ns,
            data: Some(data),
            error: None,
        },
        Err(e) => SweepRow {
            delta_t_ns,
            data: None,
            error: Some(e.to_string()),
        },
    }
}
