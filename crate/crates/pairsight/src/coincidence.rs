//! Coincidence finding: windowed cross-arm join over event streams,
//! same-frame pairing for frame cameras, accidental estimators, and the
//! brute-force oracle the streaming join is verified against.

use crate::detector::ticks_reaching;
use crate::error::{Error, Result};
use crate::hist::{Axis, AxisKind, GridGeometry, JointAxisHist, ProjectionGrid, ProjectionHist};
use crate::model::{Arm, CoincidencePair, CoordinateMapper, Frame, PhotonEvent};

#[derive(Debug, Clone, Copy)]
struct Lite {
    t: i64,
    px: u16,
    py: u16,
}

fn partition_sorted(events: &[PhotonEvent]) -> Result<(Vec<Lite>, Vec<Lite>)> {
    let mut signal = Vec::new();
    let mut idler = Vec::new();
    let mut prev = i64::MIN;
    for (index, e) in events.iter().enumerate() {
        if e.t < prev {
            return Err(Error::UnsortedEvents { index });
        }
        prev = e.t;
        let lite = Lite {
            t: e.t,
            px: e.px,
            py: e.py,
        };
        match e.arm {
            Arm::Signal => signal.push(lite),
            Arm::Idler => idler.push(lite),
        }
    }
    Ok((signal, idler))
}

/// Streaming all-pairs coincidence join.
///
/// Two-cursor sort-merge over the time-sorted arms: every signal-idler
/// combination with `|t_i - t_j| < delta_t` is emitted, without consuming
/// events, so one event may appear in several pairs. Runs in
/// O(events + pairs).
pub struct PairStream {
    signal: Vec<Lite>,
    idler: Vec<Lite>,
    mapper: CoordinateMapper,
    max_dt_ticks: i64,
    quantum_ns: f64,
    si: usize,
    lo: usize,
    scan: usize,
}

impl PairStream {
    pub fn signal_count(&self) -> usize {
        self.signal.len()
    }

    pub fn idler_count(&self) -> usize {
        self.idler.len()
    }

    #[inline]
    fn make_pair(&self, s: Lite, i: Lite) -> CoincidencePair {
        let (x1, y1) = self.mapper.to_coord(Arm::Signal, s.px, s.py);
        let (x2, y2) = self.mapper.to_coord(Arm::Idler, i.px, i.py);
        CoincidencePair {
            x1,
            y1,
            x2,
            y2,
            dt_ns: (s.t - i.t) as f64 * self.quantum_ns,
            basis: self.mapper.basis,
        }
    }
}

impl Iterator for PairStream {
    type Item = CoincidencePair;

    #[inline]
    fn next(&mut self) -> Option<CoincidencePair> {
        while self.si < self.signal.len() {
            let s = self.signal[self.si];
            let lo_bound = s.t - self.max_dt_ticks;
            while self.lo < self.idler.len() && self.idler[self.lo].t < lo_bound {
                self.lo += 1;
            }
            if self.scan < self.lo {
                self.scan = self.lo;
            }
            if self.scan < self.idler.len() {
                let i = self.idler[self.scan];
                if i.t <= s.t + self.max_dt_ticks {
                    self.scan += 1;
                    return Some(self.make_pair(s, i));
                }
            }
            self.si += 1;
            self.scan = self.lo;
        }
        None
    }
}

/// All signal-idler pairs with `|t_i - t_j| < delta_t_ns` (strict), with
/// coordinates calibrated through `mapper`. Input must be time-sorted.
pub fn find_coincidences_stream(
    events: &[PhotonEvent],
    delta_t_ns: f64,
    time_quantum_ns: f64,
    mapper: &CoordinateMapper,
) -> Result<PairStream> {
    if delta_t_ns <= 0.0 {
        return Err(Error::Config(format!(
            "coincidence window must be positive, got {delta_t_ns} ns"
        )));
    }
    let (signal, idler) = partition_sorted(events)?;
    Ok(PairStream {
        signal,
        idler,
        mapper: mapper.clone(),
        max_dt_ticks: ticks_reaching(delta_t_ns, time_quantum_ns) - 1,
        quantum_ns: time_quantum_ns,
        si: 0,
        lo: 0,
        scan: 0,
    })
}

/// Accidental-coincidence estimator for event streams: pairs signal events
/// against idler events time-shifted by `shift_ns`, under the same window
/// rule. The shift must be at least ten windows so genuine correlations
/// cannot leak into the estimate.
pub fn estimate_accidentals_stream(
    events: &[PhotonEvent],
    delta_t_ns: f64,
    shift_ns: f64,
    time_quantum_ns: f64,
    mapper: &CoordinateMapper,
) -> Result<PairStream> {
    if shift_ns < 10.0 * delta_t_ns {
        return Err(Error::ShiftTooSmall {
            shift_ns,
            delta_t_ns,
        });
    }
    let mut stream = find_coincidences_stream(events, delta_t_ns, time_quantum_ns, mapper)?;
    let shift_ticks = ticks_reaching(shift_ns, time_quantum_ns);
    for i in &mut stream.idler {
        i.t += shift_ticks;
    }
    Ok(stream)
}

/// Literal double loop over all signal-idler combinations, applying the
/// window rule on physical times. Test oracle for the streaming join.
pub fn brute_force_pairs(
    events: &[PhotonEvent],
    delta_t_ns: f64,
    time_quantum_ns: f64,
    mapper: &CoordinateMapper,
) -> Vec<CoincidencePair> {
    let mut pairs = Vec::new();
    for s in events.iter().filter(|e| e.arm == Arm::Signal) {
        for i in events.iter().filter(|e| e.arm == Arm::Idler) {
            let dt_ns = (s.t - i.t) as f64 * time_quantum_ns;
            if dt_ns.abs() < delta_t_ns {
                let (x1, y1) = mapper.to_coord(Arm::Signal, s.px, s.py);
                let (x2, y2) = mapper.to_coord(Arm::Idler, i.px, i.py);
                pairs.push(CoincidencePair {
                    x1,
                    y1,
                    x2,
                    y2,
                    dt_ns,
                    basis: mapper.basis,
                });
            }
        }
    }
    pairs
}

/// Same-arm pairs within the window, for diagnostics only. The earlier
/// event takes the photon-1 slot.
pub fn find_same_arm_pairs(
    events: &[PhotonEvent],
    arm: Arm,
    delta_t_ns: f64,
    time_quantum_ns: f64,
    mapper: &CoordinateMapper,
) -> Result<Vec<CoincidencePair>> {
    let (signal, idler) = partition_sorted(events)?;
    let own = match arm {
        Arm::Signal => signal,
        Arm::Idler => idler,
    };
    let max_dt = ticks_reaching(delta_t_ns, time_quantum_ns) - 1;
    let mut pairs = Vec::new();
    for (i, a) in own.iter().enumerate() {
        for b in own[i + 1..].iter() {
            if b.t - a.t > max_dt {
                break;
            }
            let (x1, y1) = mapper.to_coord(arm, a.px, a.py);
            let (x2, y2) = mapper.to_coord(arm, b.px, b.py);
            pairs.push(CoincidencePair {
                x1,
                y1,
                x2,
                y2,
                dt_ns: (a.t - b.t) as f64 * time_quantum_ns,
                basis: mapper.basis,
            });
        }
    }
    Ok(pairs)
}

/// Same-frame pairing: every signal hit of a frame combines with every
/// idler hit of the same frame, at dt = 0.
pub struct FramePairStream<'a> {
    frames: &'a [Frame],
    mapper: CoordinateMapper,
    /// Pair idler hits of frame k+offset with signal hits of frame k.
    idler_frame_offset: usize,
    fi: usize,
    i: usize,
    j: usize,
}

impl Iterator for FramePairStream<'_> {
    type Item = CoincidencePair;

    fn next(&mut self) -> Option<CoincidencePair> {
        loop {
            if self.fi + self.idler_frame_offset >= self.frames.len() {
                return None;
            }
            let signal_hits = &self.frames[self.fi].hits_signal;
            let idler_hits = &self.frames[self.fi + self.idler_frame_offset].hits_idler;
            if self.i < signal_hits.len() && self.j < idler_hits.len() {
                let (spx, spy) = signal_hits[self.i];
                let (ipx, ipy) = idler_hits[self.j];
                self.j += 1;
                if self.j == idler_hits.len() {
                    self.j = 0;
                    self.i += 1;
                }
                let (x1, y1) = self.mapper.to_coord(Arm::Signal, spx, spy);
                let (x2, y2) = self.mapper.to_coord(Arm::Idler, ipx, ipy);
                return Some(CoincidencePair {
                    x1,
                    y1,
                    x2,
                    y2,
                    dt_ns: 0.0,
                    basis: self.mapper.basis,
                });
            }
            self.fi += 1;
            self.i = 0;
            self.j = 0;
        }
    }
}

/// Every pair of photons appearing on the same frame becomes a coincidence.
pub fn find_coincidences_frames<'a>(
    frames: &'a [Frame],
    mapper: &CoordinateMapper,
) -> FramePairStream<'a> {
    FramePairStream {
        frames,
        mapper: mapper.clone(),
        idler_frame_offset: 0,
        fi: 0,
        i: 0,
        j: 0,
    }
}

/// Accidental-coincidence estimator for frame cameras: pairs the signal
/// hits of frame k with the idler hits of frame k+1.
pub fn estimate_accidentals_frames<'a>(
    frames: &'a [Frame],
    mapper: &CoordinateMapper,
) -> Result<FramePairStream<'a>> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames(frames.len()));
    }
    Ok(FramePairStream {
        frames,
        mapper: mapper.clone(),
        idler_frame_offset: 1,
        fi: 0,
        i: 0,
        j: 0,
    })
}

/// Histogram pairs over the chosen projection axis.
pub fn accumulate_projection<I>(
    pairs: I,
    axis_kind: AxisKind,
    basis: crate::model::Basis,
    grid: GridGeometry,
) -> ProjectionHist
where
    I: IntoIterator<Item = CoincidencePair>,
{
    let mut hist = ProjectionHist::new(axis_kind, basis, grid);
    hist.accumulate(pairs);
    hist
}

/// Histogram pairs over (photon-1 bin, photon-2 bin) along one axis.
pub fn accumulate_joint_axis<I>(
    pairs: I,
    axis: Axis,
    basis: crate::model::Basis,
    grid: GridGeometry,
) -> Result<JointAxisHist>
where
    I: IntoIterator<Item = CoincidencePair>,
{
    let mut hist = JointAxisHist::new(axis, basis, grid)?;
    for pair in pairs {
        hist.record_pair(&pair);
    }
    Ok(hist)
}

/// Bin-wise `raw - normalization * accidental`. Values may go negative.
/// The default normalization of 1 matches the time-shift and
/// adjacent-frame estimators, which observe the same live time as the raw
/// pass.
pub fn subtract_projection(
    raw: &ProjectionHist,
    accidental: &ProjectionHist,
    normalization: f64,
) -> Result<ProjectionGrid> {
    if raw.grid != accidental.grid {
        return Err(Error::GeometryMismatch(format!(
            "{:?} vs {:?}",
            raw.grid, accidental.grid
        )));
    }
    if raw.axis_kind != accidental.axis_kind || raw.basis != accidental.basis {
        return Err(Error::GeometryMismatch(
            "projection axis kind or basis differs".into(),
        ));
    }
    let values = raw
        .counts()
        .iter()
        .zip(accidental.counts())
        .map(|(&r, &a)| r as f64 - normalization * a as f64)
        .collect();
    Ok(ProjectionGrid {
        axis_kind: raw.axis_kind,
        basis: raw.basis,
        grid: raw.grid,
        values,
    })
}
