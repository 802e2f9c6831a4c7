//! Ground-truth photon-pair source: double-Gaussian transverse correlations
//! with Poissonian pair timing and configurable per-arm noise.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};
use crate::model::{Arm, Basis};

/// Spatial distribution of noise events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrayProfile {
    /// Uniform over the arm field of view (dark counts, stray light).
    Uniform,
    /// Gaussian matching the single-photon marginal of the source; models
    /// photons whose partner was lost.
    SpdcMarginal,
    /// Mixture of the two; `spdc_weight` is the marginal-profile fraction.
    Mixture { spdc_weight: f64 },
}

/// Source parameters of the double-Gaussian two-photon state.
///
/// `sigma_minus` is the position-difference width in micrometers and
/// `sigma_kplus` the momentum-sum width in rad/um; their product is the
/// ground-truth EPR figure the estimators should recover.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleGaussianState {
    /// Width of x1 - x2 in the position basis, micrometers.
    pub sigma_minus: f64,
    /// Width of k1 + k2 in the momentum basis, rad/um.
    pub sigma_kplus: f64,
    /// Emitted pairs per second.
    pub pair_rate: f64,
    /// Noise events per second per arm.
    pub dark_rate_per_arm: f64,
    pub stray_profile: StrayProfile,
}

impl DoubleGaussianState {
    pub fn new(sigma_minus: f64, sigma_kplus: f64, pair_rate: f64) -> Result<Self> {
        let state = DoubleGaussianState {
            sigma_minus,
            sigma_kplus,
            pair_rate,
            dark_rate_per_arm: 0.0,
            stray_profile: StrayProfile::Uniform,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_minus <= 0.0 || self.sigma_kplus <= 0.0 {
            return Err(Error::Config("correlation widths must be positive".into()));
        }
        if self.pair_rate < 0.0 || self.dark_rate_per_arm < 0.0 {
            return Err(Error::Config("rates must be non-negative".into()));
        }
        if let StrayProfile::Mixture { spdc_weight } = self.stray_profile {
            if !(0.0..=1.0).contains(&spdc_weight) {
                return Err(Error::Config("stray mixture weight outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Std of the difference coordinate in the given basis.
    pub fn diff_sigma(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Position => self.sigma_minus,
            Basis::Momentum => 1.0 / self.sigma_minus,
        }
    }

    /// Std of the sum coordinate in the given basis.
    pub fn sum_sigma(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Position => 1.0 / self.sigma_kplus,
            Basis::Momentum => self.sigma_kplus,
        }
    }

    /// Std of one photon's coordinate alone.
    pub fn marginal_sigma(&self, basis: Basis) -> f64 {
        let d = self.diff_sigma(basis);
        let s = self.sum_sigma(basis);
        0.5 * (d * d + s * s).sqrt()
    }

    /// Std of one photon's coordinate conditioned on its partner.
    pub fn conditional_sigma(&self, basis: Basis) -> f64 {
        let d = self.diff_sigma(basis);
        let s = self.sum_sigma(basis);
        1.0 / (1.0 / (d * d) + 1.0 / (s * s)).sqrt()
    }

    /// Ground-truth EPR product `sigma_minus * sigma_kplus`.
    pub fn epr_product(&self) -> f64 {
        self.sigma_minus * self.sigma_kplus
    }
}

/// Where a truth event came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Pair(u64),
    Noise,
}

/// One emission before any detector response, in exact coordinates of the
/// chosen basis and real-valued nanosecond time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthEvent {
    pub t_ns: f64,
    pub x: f64,
    pub y: f64,
    pub arm: Arm,
    pub origin: Origin,
}

/// Truth events of one simulated acquisition, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthStream {
    pub basis: Basis,
    pub duration_ns: f64,
    pub events: Vec<TruthEvent>,
    pub pair_count: u64,
    pub noise_count: u64,
}

/// Emission times of a homogeneous Poisson pair process, in nanoseconds,
/// strictly increasing over `[0, duration)`.
pub fn sample_pair_times(rate_per_s: f64, duration_s: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_poisson_times(rate_per_s, duration_s * 1e9, &mut rng)
}

fn sample_poisson_times(rate_per_s: f64, duration_ns: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rate_per_s <= 0.0 || duration_ns <= 0.0 {
        return Vec::new();
    }
    let rate_per_ns = rate_per_s * 1e-9;
    let exp = Exp::new(rate_per_ns).expect("positive rate");
    let mut times = Vec::with_capacity((rate_per_ns * duration_ns * 1.05) as usize + 16);
    let mut t = 0.0f64;
    loop {
        let mut gap = exp.sample(rng);
        while gap <= 0.0 {
            gap = exp.sample(rng);
        }
        t += gap;
        if t >= duration_ns {
            break;
        }
        times.push(t);
    }
    times
}

/// Transverse coordinates of `n` pairs as (x1, y1, x2, y2) quadruples.
///
/// Sum and difference coordinates are independent zero-mean Gaussians whose
/// widths follow from the double-Gaussian state in the chosen basis; the
/// members are reconstructed as half sum plus/minus half difference.
pub fn sample_pair_coords(
    state: &DoubleGaussianState,
    basis: Basis,
    n: usize,
    seed: u64,
) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(n);
    let mut sampler = PairCoordSampler::new(state, basis);
    for _ in 0..n {
        coords.push(sampler.sample(&mut rng));
    }
    coords
}

struct PairCoordSampler {
    diff: Normal<f64>,
    sum: Normal<f64>,
}

impl PairCoordSampler {
    fn new(state: &DoubleGaussianState, basis: Basis) -> Self {
        PairCoordSampler {
            diff: Normal::new(0.0, state.diff_sigma(basis)).expect("positive width"),
            sum: Normal::new(0.0, state.sum_sigma(basis)).expect("positive width"),
        }
    }

    #[inline]
    fn sample(&mut self, rng: &mut ChaCha8Rng) -> [f64; 4] {
        let dx = self.diff.sample(rng);
        let sx = self.sum.sample(rng);
        let dy = self.diff.sample(rng);
        let sy = self.sum.sample(rng);
        [
            0.5 * (sx + dx),
            0.5 * (sy + dy),
            0.5 * (sx - dx),
            0.5 * (sy - dy),
        ]
    }
}

/// Half-extents of the simulated field of view per arm, used to place
/// uniform stray events. Calibrated units of the active basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOfView {
    pub half_width: f64,
    pub half_height: f64,
}

/// Pair emissions plus per-arm noise, merged and sorted by emission time.
pub fn emit_truth_stream(
    state: &DoubleGaussianState,
    basis: Basis,
    duration_s: f64,
    fov: FieldOfView,
    seed: u64,
) -> Result<TruthStream> {
    state.validate()?;
    let duration_ns = duration_s * 1e9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pair_times = sample_poisson_times(state.pair_rate, duration_ns, &mut rng);
    let mut events = Vec::with_capacity(pair_times.len() * 2);
    let mut coord_sampler = PairCoordSampler::new(state, basis);
    for (pair_id, &t_ns) in pair_times.iter().enumerate() {
        let [x1, y1, x2, y2] = coord_sampler.sample(&mut rng);
        let origin = Origin::Pair(pair_id as u64);
        events.push(TruthEvent {
            t_ns,
            x: x1,
            y: y1,
            arm: Arm::Signal,
            origin,
        });
        events.push(TruthEvent {
            t_ns,
            x: x2,
            y: y2,
            arm: Arm::Idler,
            origin,
        });
    }
    let pair_count = pair_times.len() as u64;

    let mut noise_count = 0u64;
    let marginal = state.marginal_sigma(basis);
    for arm in [Arm::Signal, Arm::Idler] {
        let times = sample_poisson_times(state.dark_rate_per_arm, duration_ns, &mut rng);
        noise_count += times.len() as u64;
        for t_ns in times {
            let (x, y) = sample_stray(state.stray_profile, marginal, fov, &mut rng);
            events.push(TruthEvent {
                t_ns,
                x,
                y,
                arm,
                origin: Origin::Noise,
            });
        }
    }

    events.sort_by(|a, b| {
        a.t_ns
            .total_cmp(&b.t_ns)
            .then_with(|| a.arm.index().cmp(&b.arm.index()))
    });
    Ok(TruthStream {
        basis,
        duration_ns,
        events,
        pair_count,
        noise_count,
    })
}

fn sample_stray(
    profile: StrayProfile,
    marginal_sigma: f64,
    fov: FieldOfView,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let use_marginal = match profile {
        StrayProfile::Uniform => false,
        StrayProfile::SpdcMarginal => true,
        StrayProfile::Mixture { spdc_weight } => rng.random::<f64>() < spdc_weight,
    };
    if use_marginal {
        let normal = Normal::new(0.0, marginal_sigma).expect("positive width");
        (normal.sample(rng), normal.sample(rng))
    } else {
        (
            rng.random_range(-fov.half_width..fov.half_width),
            rng.random_range(-fov.half_height..fov.half_height),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_state() -> DoubleGaussianState {
        DoubleGaussianState::new(10.0, 0.01, 1e6).unwrap()
    }

    fn std_dev(samples: impl Iterator<Item = f64> + Clone) -> f64 {
        let n = samples.clone().count() as f64;
        let mean = samples.clone().sum::<f64>() / n;
        (samples.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn zero_rate_yields_empty_list() {
        assert!(sample_pair_times(0.0, 1.0, 7).is_empty());
    }

    #[test]
    fn pair_counts_follow_poisson_statistics() {
        // rate 1e7/s over 1 ms: each seeded run within 5 sigma of 1e4 and
        // the 100-run mean well inside the single-run band.
        let mut counts = Vec::new();
        for seed in 0..100 {
            let times = sample_pair_times(1e7, 1e-3, seed);
            let n = times.len() as f64;
            assert!((n - 1e4).abs() < 500.0, "seed {seed}: count {n}");
            counts.push(n);
        }
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        assert!((mean - 1e4).abs() < 50.0, "mean {mean}");
    }

    #[test]
    fn times_strictly_increase() {
        let times = sample_pair_times(1e8, 1e-4, 3);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert!(times.iter().all(|&t| (0.0..1e5).contains(&t)));
    }

    #[test]
    fn interarrival_times_pass_exponential_ks_test() {
        // Kolmogorov-Smirnov against Exp(rate) at the 1% level for 1e5 gaps.
        let rate_per_s = 2e6;
        let times = sample_pair_times(rate_per_s, 0.0505, 11);
        let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(
            gaps.len() >= 100_000,
            "need 1e5 samples, got {}",
            gaps.len()
        );
        let gaps = &gaps[..100_000];
        let mut sorted = gaps.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lambda_per_ns = rate_per_s * 1e-9;
        let n = sorted.len() as f64;
        let mut d = 0.0f64;
        for (i, &g) in sorted.iter().enumerate() {
            let cdf = 1.0 - (-lambda_per_ns * g).exp();
            let hi = (i as f64 + 1.0) / n - cdf;
            let lo = cdf - i as f64 / n;
            d = d.max(hi).max(lo);
        }
        // Asymptotic critical value at alpha = 0.01.
        let critical = 1.628 / n.sqrt();
        assert!(d < critical, "KS statistic {d} exceeds {critical}");
    }

    /// Weighted std of a density sampled on a uniform grid.
    fn grid_std(xs: &[f64], density: &[f64]) -> f64 {
        let w: f64 = density.iter().sum();
        let mean: f64 = xs.iter().zip(density).map(|(x, p)| x * p).sum::<f64>() / w;
        let var: f64 = xs
            .iter()
            .zip(density)
            .map(|(x, p)| p * (x - mean) * (x - mean))
            .sum::<f64>()
            / w;
        var.sqrt()
    }

    #[test]
    fn position_difference_width_matches_state() {
        let state = test_state();
        let coords = sample_pair_coords(&state, Basis::Position, 1_000_000, 42);
        let sd = std_dev(
            coords
                .iter()
                .map(|q| q[0] - q[2])
                .collect::<Vec<_>>()
                .into_iter(),
        );
        assert!((sd - 10.0).abs() < 0.05, "std(x1-x2) = {sd}");
    }

    #[test]
    fn position_sum_width_matches_quadratic_form_oracle() {
        // The sum-coordinate density from the squared wavefunction is
        // exp(-sigma_kplus^2 v^2 / 2); integrate it numerically and compare
        // the Monte-Carlo sum width against that oracle.
        let state = test_state();
        let expected = 1.0 / state.sigma_kplus;
        let n_grid = 8001;
        let span = 8.0 * expected;
        let xs: Vec<f64> = (0..n_grid)
            .map(|i| -span + 2.0 * span * i as f64 / (n_grid - 1) as f64)
            .collect();
        let density: Vec<f64> = xs
            .iter()
            .map(|v| (-state.sigma_kplus * state.sigma_kplus * v * v / 2.0).exp())
            .collect();
        let oracle = grid_std(&xs, &density);
        assert!(
            (oracle - expected).abs() / expected < 1e-6,
            "quadrature oracle {oracle} vs analytic {expected}"
        );

        let coords = sample_pair_coords(&state, Basis::Position, 1_000_000, 43);
        let sd = std_dev(
            coords
                .iter()
                .map(|q| q[0] + q[2])
                .collect::<Vec<_>>()
                .into_iter(),
        );
        assert!((sd - oracle).abs() < 0.5, "std(x1+x2) = {sd} vs {oracle}");
    }

    #[test]
    fn momentum_difference_width_matches_fourier_oracle() {
        // Numerical Fourier transform of the difference-coordinate factor
        // exp(-u^2 / (4 sigma_minus^2)): the momentum-space density of
        // q = k1 - k2 is |F(q/2)|^2. Its width must equal 1/sigma_minus.
        let state = test_state();
        let sigma_u = 2.0f64.sqrt() * state.sigma_minus;
        let span_u = 10.0 * sigma_u;
        let n_u = 4001;
        let us: Vec<f64> = (0..n_u)
            .map(|i| -span_u + 2.0 * span_u * i as f64 / (n_u - 1) as f64)
            .collect();
        let qs: Vec<f64> = (0..2001).map(|i| -0.8 + 1.6 * i as f64 / 2000.0).collect();
        let density: Vec<f64> = qs
            .iter()
            .map(|q| {
                let s = q / 2.0;
                let ft: f64 = us
                    .iter()
                    .map(|u| {
                        (-u * u / (4.0 * state.sigma_minus * state.sigma_minus)).exp()
                            * (s * u).cos()
                    })
                    .sum();
                ft * ft
            })
            .collect();
        let oracle = grid_std(&qs, &density);
        let analytic = 1.0 / state.sigma_minus;
        assert!(
            (oracle - analytic).abs() / analytic < 1e-4,
            "Fourier oracle {oracle} vs analytic {analytic}"
        );

        let coords = sample_pair_coords(&state, Basis::Momentum, 1_000_000, 44);
        let sd = std_dev(
            coords
                .iter()
                .map(|q| q[0] - q[2])
                .collect::<Vec<_>>()
                .into_iter(),
        );
        assert!(
            (sd - oracle).abs() < 0.0005,
            "std(k1-k2) = {sd} vs {oracle}"
        );
    }

    #[test]
    fn single_photon_marginal_matches_squared_wavefunction() {
        // Marginal variance of x1 via 2D quadrature of the squared
        // wavefunction, compared against Monte Carlo within 1%.
        let state = test_state();
        let sd_diff = state.diff_sigma(Basis::Position);
        let sd_sum = state.sum_sigma(Basis::Position);
        let span = 5.0 * sd_sum.max(sd_diff);
        let n = 1201;
        let axis: Vec<f64> = (0..n)
            .map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64)
            .collect();
        let mut w_total = 0.0;
        let mut var = 0.0;
        for &x1 in &axis {
            for &x2 in &axis {
                let d = x1 - x2;
                let s = x1 + x2;
                let w =
                    (-d * d / (2.0 * sd_diff * sd_diff) - s * s / (2.0 * sd_sum * sd_sum)).exp();
                w_total += w;
                var += w * x1 * x1;
            }
        }
        let oracle_sd = (var / w_total).sqrt();
        let analytic = state.marginal_sigma(Basis::Position);
        assert!((oracle_sd - analytic).abs() / analytic < 1e-4);

        let coords = sample_pair_coords(&state, Basis::Position, 1_000_000, 45);
        let sd = std_dev(coords.iter().map(|q| q[0]).collect::<Vec<_>>().into_iter());
        assert!(
            (sd - oracle_sd).abs() / oracle_sd < 0.01,
            "marginal {sd} vs {oracle_sd}"
        );
    }

    fn fov() -> FieldOfView {
        FieldOfView {
            half_width: 500.0,
            half_height: 500.0,
        }
    }

    #[test]
    fn silent_source_emits_nothing() {
        let mut state = test_state();
        state.pair_rate = 0.0;
        let stream = emit_truth_stream(&state, Basis::Position, 1e-3, fov(), 1).unwrap();
        assert!(stream.events.is_empty());
        assert_eq!((stream.pair_count, stream.noise_count), (0, 0));
    }

    #[test]
    fn pairs_share_time_and_id() {
        let state = test_state();
        let stream = emit_truth_stream(&state, Basis::Position, 1e-3, fov(), 2).unwrap();
        let signals = stream
            .events
            .iter()
            .filter(|e| e.arm == Arm::Signal)
            .count();
        let idlers = stream.events.iter().filter(|e| e.arm == Arm::Idler).count();
        assert_eq!(signals as u64, stream.pair_count);
        assert_eq!(idlers as u64, stream.pair_count);

        let mut by_id: std::collections::HashMap<u64, Vec<&TruthEvent>> = Default::default();
        for e in &stream.events {
            if let Origin::Pair(id) = e.origin {
                by_id.entry(id).or_default().push(e);
            }
        }
        for (_, members) in by_id {
            assert_eq!(members.len(), 2);
            assert_eq!(members[0].t_ns, members[1].t_ns);
            assert_ne!(members[0].arm, members[1].arm);
        }
    }

    #[test]
    fn dark_counts_follow_poisson_statistics() {
        let mut state = test_state();
        state.pair_rate = 0.0;
        state.dark_rate_per_arm = 1e5;
        let stream = emit_truth_stream(&state, Basis::Position, 10e-3, fov(), 3).unwrap();
        for arm in [Arm::Signal, Arm::Idler] {
            let n = stream
                .events
                .iter()
                .filter(|e| e.arm == arm && e.origin == Origin::Noise)
                .count() as f64;
            // 5 sigma around the expected 1e3.
            assert!((n - 1e3).abs() < 5.0 * 1e3f64.sqrt(), "{arm:?}: {n}");
        }
    }

    #[test]
    fn stream_is_sorted_and_deterministic() {
        let mut state = test_state();
        state.dark_rate_per_arm = 5e4;
        state.stray_profile = StrayProfile::Mixture { spdc_weight: 0.5 };
        let a = emit_truth_stream(&state, Basis::Momentum, 2e-3, fov(), 9).unwrap();
        let b = emit_truth_stream(&state, Basis::Momentum, 2e-3, fov(), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.events.windows(2).all(|w| w[0].t_ns <= w[1].t_ns));
    }
}
