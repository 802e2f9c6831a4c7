//! Camera response: converts truth streams into event-camera streams
//! (efficiency, jitter, time quantization, per-pixel dead time) or
//! frame-camera sequences (binary per-pixel hits per exposure).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::{Arm, Calibration, CameraGeometry, CoordinateMapper, Frame, PhotonEvent};
use crate::spdc::{TruthEvent, TruthStream};

/// Gaussian sigma per the stated FWHM figure of merit.
const FWHM_TO_SIGMA: f64 = 1.0 / 2.355;

/// Losses of one detection pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectionStats {
    pub detected: u64,
    /// Lost to quantum efficiency thinning.
    pub thinned: u64,
    /// Quantized coordinate fell outside the arm region, or the jittered
    /// time fell before the acquisition start.
    pub clipped: u64,
    pub dead_time_dropped: u64,
}

/// Detected events plus loss counters.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDetection {
    pub events: Vec<PhotonEvent>,
    pub stats: DetectionStats,
}

/// Smallest tick count whose physical duration reaches `interval_ns`.
///
/// Robust against rounding in the division: the result `m` is exactly the
/// smallest integer with `m * quantum_ns >= interval_ns`, so tick-space
/// comparisons reproduce the real-valued rule bit for bit.
pub fn ticks_reaching(interval_ns: f64, quantum_ns: f64) -> i64 {
    if interval_ns <= 0.0 {
        return 0;
    }
    let mut m = (interval_ns / quantum_ns).ceil() as i64;
    while m > 0 && (m - 1) as f64 * quantum_ns >= interval_ns {
        m -= 1;
    }
    while (m as f64) * quantum_ns < interval_ns {
        m += 1;
    }
    m
}

/// Per-pixel dead-time bookkeeping, carried across batches when a long run
/// is processed in time shards.
#[derive(Debug, Clone)]
pub struct DeadTimeFilter {
    last_accept: Vec<i64>,
    width: usize,
    dead_ticks: i64,
}

impl DeadTimeFilter {
    pub fn new(geom: &CameraGeometry) -> Self {
        DeadTimeFilter {
            last_accept: vec![i64::MIN / 2; geom.width as usize * geom.height as usize],
            width: geom.width as usize,
            dead_ticks: ticks_reaching(geom.dead_time_ns, geom.time_quantum_ns),
        }
    }

    #[inline]
    fn accept(&mut self, px: u16, py: u16, t: i64) -> bool {
        let idx = py as usize * self.width + px as usize;
        if t - self.last_accept[idx] < self.dead_ticks {
            false
        } else {
            self.last_accept[idx] = t;
            true
        }
    }
}

/// Stateful event-camera pipeline. `process` may be called repeatedly on
/// consecutive time shards; dead-time state carries across calls, so shard
/// boundaries only reorder events that jitter across them.
pub struct EventDetector {
    mapper: CoordinateMapper,
    quantum_efficiency: f64,
    jitter_sigma_ns: f64,
    time_quantum_ns: f64,
    dead: DeadTimeFilter,
    rng: ChaCha8Rng,
    stats: DetectionStats,
}

impl EventDetector {
    pub fn new(
        geom: &CameraGeometry,
        cal: &Calibration,
        basis: crate::model::Basis,
        seed: u64,
    ) -> Result<Self> {
        geom.validate()?;
        cal.validate()?;
        Ok(EventDetector {
            mapper: CoordinateMapper::new(geom, cal, basis),
            quantum_efficiency: geom.quantum_efficiency,
            jitter_sigma_ns: geom.jitter_fwhm_ns * FWHM_TO_SIGMA,
            time_quantum_ns: geom.time_quantum_ns,
            dead: DeadTimeFilter::new(geom),
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: DetectionStats::default(),
        })
    }

    pub fn process(&mut self, truth: &[TruthEvent]) -> Vec<PhotonEvent> {
        let jitter = if self.jitter_sigma_ns > 0.0 {
            Some(Normal::new(0.0, self.jitter_sigma_ns).expect("positive sigma"))
        } else {
            None
        };
        let mut batch =
            Vec::with_capacity((truth.len() as f64 * self.quantum_efficiency) as usize + 16);
        for event in truth {
            if self.quantum_efficiency < 1.0 && self.rng.random::<f64>() >= self.quantum_efficiency
            {
                self.stats.thinned += 1;
                continue;
            }
            let t_ns = match &jitter {
                Some(j) => event.t_ns + j.sample(&mut self.rng),
                None => event.t_ns,
            };
            if t_ns < 0.0 {
                self.stats.clipped += 1;
                continue;
            }
            let Some((px, py)) = self.mapper.to_pixel(event.arm, event.x, event.y) else {
                self.stats.clipped += 1;
                continue;
            };
            let t = (t_ns / self.time_quantum_ns).floor() as i64;
            batch.push(PhotonEvent {
                t,
                px,
                py,
                arm: event.arm,
            });
        }
        batch.sort_by_key(|e| (e.t, e.arm.index(), e.px, e.py));
        let mut out = Vec::with_capacity(batch.len());
        for event in batch {
            if self.dead.accept(event.px, event.py, event.t) {
                self.stats.detected += 1;
                out.push(event);
            } else {
                self.stats.dead_time_dropped += 1;
            }
        }
        out
    }

    pub fn stats(&self) -> DetectionStats {
        self.stats
    }
}

/// Full event-camera pass over a truth stream.
pub fn detect_events(
    truth: &TruthStream,
    geom: &CameraGeometry,
    cal: &Calibration,
    seed: u64,
) -> Result<EventDetection> {
    let mut detector = EventDetector::new(geom, cal, truth.basis, seed)?;
    let events = detector.process(&truth.events);
    Ok(EventDetection {
        events,
        stats: detector.stats(),
    })
}

/// Frame-camera pass: consecutive exposures of `exposure_ns` separated by
/// the geometry's readout gap. A pixel hit more than once within a frame
/// records a single hit.
pub fn detect_frames(
    truth: &TruthStream,
    geom: &CameraGeometry,
    cal: &Calibration,
    exposure_ns: f64,
    n_frames: u64,
    seed: u64,
) -> Result<Vec<Frame>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    detect_frames_range(truth, geom, cal, exposure_ns, 0, n_frames, &mut rng)
}

/// Sharded variant: collects frames `first_frame .. first_frame + n_frames`
/// with frame windows positioned on the global time axis.
pub fn detect_frames_range(
    truth: &TruthStream,
    geom: &CameraGeometry,
    cal: &Calibration,
    exposure_ns: f64,
    first_frame: u64,
    n_frames: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Frame>> {
    geom.validate()?;
    cal.validate()?;
    if exposure_ns <= 0.0 {
        return Err(crate::error::Error::Config(
            "frame exposure must be positive".into(),
        ));
    }
    let mapper = CoordinateMapper::new(geom, cal, truth.basis);
    let period_ns = exposure_ns + geom.readout_gap_ns;
    let mut frames: Vec<Frame> = (0..n_frames)
        .map(|k| Frame::empty(first_frame + k, exposure_ns))
        .collect();

    for event in &truth.events {
        let k = (event.t_ns / period_ns).floor();
        if k < first_frame as f64 || k >= (first_frame + n_frames) as f64 {
            continue;
        }
        let k = k as u64;
        if event.t_ns - k as f64 * period_ns >= exposure_ns {
            continue; // fell in the readout gap
        }
        if geom.quantum_efficiency < 1.0 && rng.random::<f64>() >= geom.quantum_efficiency {
            continue;
        }
        let Some((px, py)) = mapper.to_pixel(event.arm, event.x, event.y) else {
            continue;
        };
        let frame = &mut frames[(k - first_frame) as usize];
        let hits = match event.arm {
            Arm::Signal => &mut frame.hits_signal,
            Arm::Idler => &mut frame.hits_idler,
        };
        hits.push((px, py));
    }

    for frame in &mut frames {
        frame.hits_signal.sort_unstable();
        frame.hits_signal.dedup();
        frame.hits_idler.sort_unstable();
        frame.hits_idler.dedup();
    }
    Ok(frames)
}
