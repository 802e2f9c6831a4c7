//! Full simulated acquisitions: source emission plus detector response,
//! processed in time shards so desk-scale runs at 1e7 pairs/s never hold
//! the whole truth stream in memory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::{detect_frames_range, DetectionStats, EventDetector};
use crate::error::Result;
use crate::model::{Basis, Calibration, CameraGeometry, CoordinateMapper, Frame, PhotonEvent};
use crate::spdc::{emit_truth_stream, DoubleGaussianState, FieldOfView, TruthStream};

/// Deterministic seed derivation (splitmix64 over seed xor tag).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const DETECTOR_TAG: u64 = 0x00DE_7EC7_00DE_7EC7;

/// One simulated event-camera acquisition.
#[derive(Debug, Clone)]
pub struct EventRun {
    pub basis: Basis,
    pub duration_s: f64,
    pub events: Vec<PhotonEvent>,
    pub stats: DetectionStats,
    pub truth_pairs: u64,
    pub truth_noise: u64,
}

/// One simulated frame-camera acquisition.
#[derive(Debug, Clone)]
pub struct FrameRun {
    pub basis: Basis,
    pub exposure_ns: f64,
    pub frames: Vec<Frame>,
    pub truth_pairs: u64,
    pub truth_noise: u64,
}

fn fov_of(geom: &CameraGeometry, cal: &Calibration, basis: Basis) -> FieldOfView {
    let mapper = CoordinateMapper::new(geom, cal, basis);
    let (half_width, half_height) = mapper.fov_half_extent();
    FieldOfView {
        half_width,
        half_height,
    }
}

fn shift_times(truth: &mut TruthStream, offset_ns: f64) {
    for event in &mut truth.events {
        event.t_ns += offset_ns;
    }
}

fn validate_durations(duration_s: f64, shard_s: f64) -> Result<()> {
    if !duration_s.is_finite() || duration_s < 0.0 {
        return Err(crate::error::Error::Config(format!(
            "acquisition duration must be finite and non-negative, got {duration_s} s"
        )));
    }
    if !shard_s.is_finite() || shard_s <= 0.0 {
        return Err(crate::error::Error::Config(format!(
            "shard duration must be positive, got {shard_s} s"
        )));
    }
    Ok(())
}

/// Simulate an event-camera acquisition of `duration_s`, sharded into
/// `shard_s` slices. Poisson emission restarts at each shard boundary,
/// which leaves the process law unchanged; detector dead-time state carries
/// across shards.
pub fn simulate_event_run(
    state: &DoubleGaussianState,
    basis: Basis,
    geom: &CameraGeometry,
    cal: &Calibration,
    duration_s: f64,
    seed: u64,
    shard_s: f64,
) -> Result<EventRun> {
    validate_durations(duration_s, shard_s)?;
    let fov = fov_of(geom, cal, basis);
    let mut detector = EventDetector::new(geom, cal, basis, derive_seed(seed, DETECTOR_TAG))?;
    // Shards no shorter than 1/10000 of the run keep the shard count sane.
    let shard_s = shard_s.min(duration_s).max(duration_s / 10_000.0);
    let n_shards = (duration_s / shard_s).ceil() as u64;
    let mut events = Vec::new();
    let mut truth_pairs = 0;
    let mut truth_noise = 0;
    for shard in 0..n_shards {
        let start_s = shard as f64 * shard_s;
        let len_s = shard_s.min(duration_s - start_s);
        if len_s <= 0.0 {
            break;
        }
        let mut truth = emit_truth_stream(state, basis, len_s, fov, derive_seed(seed, shard))?;
        truth_pairs += truth.pair_count;
        truth_noise += truth.noise_count;
        shift_times(&mut truth, start_s * 1e9);
        events.extend(detector.process(&truth.events));
    }
    // Jitter lets events cross shard boundaries; restore global order.
    events.sort_by_key(|e| (e.t, e.arm.index(), e.px, e.py));
    Ok(EventRun {
        basis,
        duration_s,
        events,
        stats: detector.stats(),
        truth_pairs,
        truth_noise,
    })
}

/// Simulate a frame-camera acquisition covering `duration_s` at the given
/// exposure (plus the geometry's readout gap between frames).
#[allow(clippy::too_many_arguments)]
pub fn simulate_frame_run(
    state: &DoubleGaussianState,
    basis: Basis,
    geom: &CameraGeometry,
    cal: &Calibration,
    exposure_ns: f64,
    duration_s: f64,
    seed: u64,
    shard_s: f64,
) -> Result<FrameRun> {
    validate_durations(duration_s, shard_s)?;
    if !exposure_ns.is_finite() || exposure_ns <= 0.0 {
        return Err(crate::error::Error::Config(format!(
            "frame exposure must be positive, got {exposure_ns} ns"
        )));
    }
    let fov = fov_of(geom, cal, basis);
    let period_ns = exposure_ns + geom.readout_gap_ns;
    let total_frames = (duration_s * 1e9 / period_ns).floor() as u64;
    let frames_per_shard =
        ((shard_s * 1e9 / period_ns).round() as u64).clamp(1, total_frames.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DETECTOR_TAG));
    let mut frames = Vec::with_capacity(total_frames as usize);
    let mut truth_pairs = 0;
    let mut truth_noise = 0;
    let mut first = 0u64;
    let mut shard = 0u64;
    while first < total_frames {
        let n = frames_per_shard.min(total_frames - first);
        let len_s = n as f64 * period_ns * 1e-9;
        let mut truth = emit_truth_stream(state, basis, len_s, fov, derive_seed(seed, shard))?;
        truth_pairs += truth.pair_count;
        truth_noise += truth.noise_count;
        shift_times(&mut truth, first as f64 * period_ns);
        frames.extend(detect_frames_range(
            &truth,
            geom,
            cal,
            exposure_ns,
            first,
            n,
            &mut rng,
        )?);
        first += n;
        shard += 1;
    }
    Ok(FrameRun {
        basis,
        exposure_ns,
        frames,
        truth_pairs,
        truth_noise,
    })
}
