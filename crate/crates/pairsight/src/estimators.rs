//! Correlation-width and entropy estimators operating on the accumulated
//! histograms: isotropic 2D Gaussian fits, formal variance widths, the
//! fit-noise uncertainty relation, and plug-in conditional entropies.

use crate::error::{Error, Result};
use crate::hist::{JointAxisHist, ProjectionGrid, ProjectionHist};

/// How a width was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthMethod {
    GaussianFit,
    FormalVariance,
}

/// A correlation width with its one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthEstimate {
    pub value: f64,
    pub uncertainty: f64,
    pub method: WidthMethod,
}

/// Histogram axis selector for the variance width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAxis {
    U,
    V,
}

/// Result of the isotropic 2D Gaussian fit
/// `f(u, v) = A exp(-((u-u0)^2 + (v-v0)^2) / (2 width^2)) [+ offset]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFitResult {
    pub amplitude: f64,
    pub center_u: f64,
    pub center_v: f64,
    pub width: f64,
    /// Second width when the anisotropic option is active.
    pub width_v: Option<f64>,
    /// Constant offset when the offset option is active.
    pub offset: Option<f64>,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Gaussian fit configuration.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Include a constant offset term. Off by default: the pure-Gaussian
    /// model absorbs none of the background, which is exactly what makes
    /// raw fits drift upward as accidentals pile up.
    pub with_offset: bool,
    /// Fit separate widths along u and v.
    pub anisotropic: bool,
    /// Minimum total weight in the grid before fitting is attempted.
    pub min_total: f64,
    pub max_iterations: usize,
    /// Relative parameter-change threshold declaring convergence.
    pub tolerance: f64,
    /// Override the moment-based initialization (tests).
    pub initial: Option<FitInit>,
}

#[derive(Debug, Clone, Copy)]
pub struct FitInit {
    pub amplitude: f64,
    pub center_u: f64,
    pub center_v: f64,
    pub width: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            with_offset: false,
            anisotropic: false,
            min_total: 100.0,
            max_iterations: 200,
            tolerance: 1e-8,
            initial: None,
        }
    }
}

struct FitModel {
    with_offset: bool,
    anisotropic: bool,
}

impl FitModel {
    fn n_params(&self) -> usize {
        4 + usize::from(self.anisotropic) + usize::from(self.with_offset)
    }

    /// Parameter layout: [A, u0, v0, wu, (wv), (offset)].
    #[inline]
    fn eval(&self, p: &[f64], u: f64, v: f64) -> f64 {
        let du = u - p[1];
        let dv = v - p[2];
        let wu = p[3];
        let wv = if self.anisotropic { p[4] } else { p[3] };
        let e = (-0.5 * (du * du / (wu * wu) + dv * dv / (wv * wv))).exp();
        let offset = if self.with_offset {
            p[self.n_params() - 1]
        } else {
            0.0
        };
        p[0] * e + offset
    }

    #[inline]
    fn jacobian(&self, p: &[f64], u: f64, v: f64, row: &mut [f64]) {
        let du = u - p[1];
        let dv = v - p[2];
        let wu = p[3];
        let wv = if self.anisotropic { p[4] } else { p[3] };
        let e = (-0.5 * (du * du / (wu * wu) + dv * dv / (wv * wv))).exp();
        let ae = p[0] * e;
        row[0] = e;
        row[1] = ae * du / (wu * wu);
        row[2] = ae * dv / (wv * wv);
        if self.anisotropic {
            row[3] = ae * du * du / (wu * wu * wu);
            row[4] = ae * dv * dv / (wv * wv * wv);
        } else {
            row[3] = ae * (du * du + dv * dv) / (wu * wu * wu);
        }
        if self.with_offset {
            row[self.n_params() - 1] = 1.0;
        }
    }

    fn constrain(&self, p: &mut [f64], min_width: f64) {
        p[3] = p[3].abs().max(min_width);
        if self.anisotropic {
            p[4] = p[4].abs().max(min_width);
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut sum = b[row];
        for k in row + 1..n {
            sum -= a[row][k] * x[k];
        }
        x[row] = sum / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Least-squares fit of the isotropic 2D Gaussian peak model to a
/// projection grid, by damped Gauss-Newton iteration initialized from the
/// histogram moments.
#[allow(clippy::needless_range_loop)]
pub fn fit_gaussian_2d(grid: &ProjectionGrid, options: &FitOptions) -> Result<GaussianFitResult> {
    let total = grid.total_weight();
    if total < options.min_total {
        return Err(Error::InsufficientData {
            total,
            floor: options.min_total,
        });
    }
    let g = &grid.grid;
    let model = FitModel {
        with_offset: options.with_offset,
        anisotropic: options.anisotropic,
    };
    let n_params = model.n_params();
    let min_width = 1e-6 * g.bin_width_u.min(g.bin_width_v);

    // Moment initialization over the positive part.
    let mut params = vec![0.0; n_params];
    {
        let (mut w, mut mu, mut mv, mut peak) = (0.0, 0.0, 0.0, f64::MIN);
        for iv in 0..g.n_v {
            for iu in 0..g.n_u {
                let y = grid.value(iu, iv);
                peak = peak.max(y);
                if y > 0.0 {
                    w += y;
                    mu += y * g.center_u(iu);
                    mv += y * g.center_v(iv);
                }
            }
        }
        let (mu, mv) = if w > 0.0 {
            (mu / w, mv / w)
        } else {
            (0.0, 0.0)
        };
        let mut var = 0.0;
        if w > 0.0 {
            for iv in 0..g.n_v {
                for iu in 0..g.n_u {
                    let y = grid.value(iu, iv);
                    if y > 0.0 {
                        let du = g.center_u(iu) - mu;
                        let dv = g.center_v(iv) - mv;
                        var += y * (du * du + dv * dv);
                    }
                }
            }
            var /= 2.0 * w;
        }
        params[0] = peak.max(min_width);
        params[1] = mu;
        params[2] = mv;
        params[3] = var.sqrt().max(g.bin_width_u / 2.0);
        if options.anisotropic {
            params[4] = params[3];
        }
        if let Some(init) = options.initial {
            params[0] = init.amplitude;
            params[1] = init.center_u;
            params[2] = init.center_v;
            params[3] = init.width;
            if options.anisotropic {
                params[4] = init.width;
            }
        }
    }
    model.constrain(&mut params, min_width);

    let sse = |p: &[f64]| -> f64 {
        let mut cost = 0.0;
        for iv in 0..g.n_v {
            let v = g.center_v(iv);
            for iu in 0..g.n_u {
                let r = model.eval(p, g.center_u(iu), v) - grid.value(iu, iv);
                cost += r * r;
            }
        }
        cost
    };

    let mut cost = sse(&params);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut row = vec![0.0; n_params];

    for _ in 0..options.max_iterations {
        iterations += 1;
        let mut jtj = vec![vec![0.0; n_params]; n_params];
        let mut jtr = vec![0.0; n_params];
        for iv in 0..g.n_v {
            let v = g.center_v(iv);
            for iu in 0..g.n_u {
                let u = g.center_u(iu);
                let r = model.eval(&params, u, v) - grid.value(iu, iv);
                model.jacobian(&params, u, v, &mut row);
                for a in 0..n_params {
                    jtr[a] += row[a] * r;
                    for b in a..n_params {
                        jtj[a][b] += row[a] * row[b];
                    }
                }
            }
        }
        for a in 0..n_params {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }

        let mut accepted = false;
        for _ in 0..25 {
            let mut damped = jtj.clone();
            for (i, d) in damped.iter_mut().enumerate() {
                d[i] += lambda * jtj[i][i].max(1e-12);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = solve_linear(damped, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + s).collect();
            model.constrain(&mut trial, min_width);
            let trial_cost = sse(&trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let max_change = params
                    .iter()
                    .zip(&trial)
                    .map(|(old, new)| (new - old).abs() / old.abs().max(1e-12))
                    .fold(0.0f64, f64::max);
                params = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-14);
                accepted = true;
                if max_change < options.tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || converged {
            break;
        }
    }

    let n_bins = g.len() as f64;
    Ok(GaussianFitResult {
        amplitude: params[0],
        center_u: params[1],
        center_v: params[2],
        width: params[3].abs(),
        width_v: options.anisotropic.then(|| params[4].abs()),
        offset: options.with_offset.then(|| params[n_params - 1]),
        residual_rms: (cost / n_bins).sqrt(),
        converged,
        iterations,
    })
}

/// Count-weighted standard deviation of bin centers along one axis over
/// the full histogram support. No fit model, no background exclusion, so
/// residual accidentals weigh in with the square of their distance.
pub fn variance_width(hist: &ProjectionHist, axis: GridAxis) -> Result<WidthEstimate> {
    let total = hist.total();
    if total < 2 {
        return Err(Error::InsufficientData {
            total: total as f64,
            floor: 2.0,
        });
    }
    let g = &hist.grid;
    let center = |iu: usize, iv: usize| match axis {
        GridAxis::U => g.center_u(iu),
        GridAxis::V => g.center_v(iv),
    };
    let mut mean = 0.0;
    for iv in 0..g.n_v {
        for iu in 0..g.n_u {
            mean += hist.count(iu, iv) as f64 * center(iu, iv);
        }
    }
    mean /= total as f64;
    let mut var = 0.0;
    for iv in 0..g.n_v {
        for iu in 0..g.n_u {
            let d = center(iu, iv) - mean;
            var += hist.count(iu, iv) as f64 * d * d;
        }
    }
    var /= total as f64;
    let value = var.sqrt();
    Ok(WidthEstimate {
        value,
        // Standard error of a Gaussian sample std.
        uncertainty: value / (2.0 * total as f64).sqrt(),
        method: WidthMethod::FormalVariance,
    })
}

/// Circular region around the fitted peak excluded from the noise estimate.
#[derive(Debug, Clone, Copy)]
pub struct PeakExclusion {
    pub center_u: f64,
    pub center_v: f64,
    pub radius: f64,
    /// Bins that must remain outside the exclusion.
    pub min_bins: usize,
}

impl PeakExclusion {
    pub fn around(fit: &GaussianFitResult, radius_factor: f64) -> Self {
        PeakExclusion {
            center_u: fit.center_u,
            center_v: fit.center_v,
            radius: radius_factor * fit.width,
            min_bins: 100,
        }
    }
}

/// Standard deviation of bin values outside the exclusion region; the
/// noise figure entering the width uncertainty.
pub fn background_sigma(grid: &ProjectionGrid, exclusion: &PeakExclusion) -> Result<f64> {
    let g = &grid.grid;
    let r2 = exclusion.radius * exclusion.radius;
    let mut values = Vec::new();
    for iv in 0..g.n_v {
        for iu in 0..g.n_u {
            let du = g.center_u(iu) - exclusion.center_u;
            let dv = g.center_v(iv) - exclusion.center_v;
            if du * du + dv * dv > r2 {
                values.push(grid.value(iu, iv));
            }
        }
    }
    if values.len() < exclusion.min_bins {
        return Err(Error::BackgroundRegionTooSmall {
            kept: values.len(),
            needed: exclusion.min_bins,
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// Uncertainty of a fitted Gaussian width from the background noise level:
/// `sqrt(e) * delta * sigma / amplitude`. With `delta` already in physical
/// units the result carries the same calibration.
pub fn width_uncertainty(delta: f64, amplitude: f64, sigma: f64) -> Result<f64> {
    if amplitude <= 0.0 {
        return Err(Error::NonPositiveAmplitude(amplitude));
    }
    Ok(std::f64::consts::E.sqrt() * delta * sigma / amplitude)
}

/// Plug-in conditional entropy options.
#[derive(Debug, Clone, Copy, Default)]
pub struct EntropyOptions {
    /// Apply the Miller-Madow small-sample bias correction.
    pub miller_madow: bool,
}

/// Differential conditional entropy h(c2 | c1) in nats, estimated from the
/// discretized joint distribution as the discrete conditional entropy plus
/// `ln(bin_width)`. Rows with zero marginal contribute nothing; 0 ln 0 = 0.
pub fn conditional_entropy(joint: &JointAxisHist, options: &EntropyOptions) -> Result<f64> {
    let total = joint.total();
    if total == 0 {
        return Err(Error::InsufficientData {
            total: 0.0,
            floor: 1.0,
        });
    }
    let n = total as f64;
    let g = &joint.grid;
    let marginal = joint.marginal_photon1();
    let mut h = 0.0;
    let mut occupied_joint = 0usize;
    for (i1, &row_total) in marginal.iter().enumerate() {
        if row_total == 0 {
            continue;
        }
        for i2 in 0..g.n_v {
            let c = joint.count(i1, i2);
            if c == 0 {
                continue;
            }
            occupied_joint += 1;
            let p = c as f64 / n;
            h += p * (row_total as f64 / c as f64).ln();
        }
    }
    if options.miller_madow {
        let occupied_rows = marginal.iter().filter(|&&c| c > 0).count();
        h += (occupied_joint as f64 - occupied_rows as f64) / (2.0 * n);
    }
    Ok(h + joint.bin_width().ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hist::{Axis, AxisKind, GridGeometry};
    use crate::model::Basis;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    fn synthetic_grid(
        n_u: usize,
        n_v: usize,
        amplitude: f64,
        center: (f64, f64),
        width: f64,
        background: f64,
    ) -> ProjectionGrid {
        let grid = GridGeometry::centered(1.0, 1.0, n_u, n_v).unwrap();
        let mut values = vec![0.0; grid.len()];
        for iv in 0..grid.n_v {
            for iu in 0..grid.n_u {
                let du = grid.center_u(iu) - center.0;
                let dv = grid.center_v(iv) - center.1;
                values[iv * grid.n_u + iu] =
                    amplitude * (-(du * du + dv * dv) / (2.0 * width * width)).exp() + background;
            }
        }
        ProjectionGrid {
            axis_kind: AxisKind::MinusCoordinate,
            basis: Basis::Position,
            grid,
            values,
        }
    }

    #[test]
    fn fit_recovers_exact_model() {
        let grid = synthetic_grid(41, 41, 1000.0, (1.2, -0.7), 3.0, 0.0);
        let fit = fit_gaussian_2d(&grid, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.width - 3.0).abs() / 3.0 < 1e-6, "width {}", fit.width);
        assert!((fit.amplitude - 1000.0).abs() / 1000.0 < 1e-6);
        assert!((fit.center_u - 1.2).abs() < 1e-5);
        assert!((fit.center_v + 0.7).abs() < 1e-5);
    }

    #[test]
    fn fit_insensitive_to_initialization() {
        let grid = synthetic_grid(41, 41, 1000.0, (0.0, 0.0), 3.0, 0.0);
        for scale in [0.5, 0.75, 1.25, 1.5] {
            let options = FitOptions {
                initial: Some(FitInit {
                    amplitude: 1000.0 * scale,
                    center_u: 1.0,
                    center_v: -1.0,
                    width: 3.0 * scale,
                }),
                ..FitOptions::default()
            };
            let fit = fit_gaussian_2d(&grid, &options).unwrap();
            assert!(
                (fit.width - 3.0).abs() / 3.0 < 1e-6,
                "init scale {scale}: width {}",
                fit.width
            );
        }
    }

    /// Independent oracle for the no-offset isotropic fit on centered
    /// symmetric data: profile the amplitude analytically and minimize over
    /// the width by golden-section search.
    fn oracle_width_centered(grid: &ProjectionGrid) -> f64 {
        let g = &grid.grid;
        let cost_profiled = |w: f64| -> f64 {
            let mut ee = 0.0;
            let mut ey = 0.0;
            for iv in 0..g.n_v {
                for iu in 0..g.n_u {
                    let u = g.center_u(iu);
                    let v = g.center_v(iv);
                    let e = (-(u * u + v * v) / (2.0 * w * w)).exp();
                    ee += e * e;
                    ey += e * grid.value(iu, iv);
                }
            }
            let a = ey / ee;
            let mut cost = 0.0;
            for iv in 0..g.n_v {
                for iu in 0..g.n_u {
                    let u = g.center_u(iu);
                    let v = g.center_v(iv);
                    let e = (-(u * u + v * v) / (2.0 * w * w)).exp();
                    let r = a * e - grid.value(iu, iv);
                    cost += r * r;
                }
            }
            cost
        };
        let (mut lo, mut hi) = (0.5, 20.0);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        while hi - lo > 1e-12 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if cost_profiled(m1) < cost_profiled(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        (lo + hi) / 2.0
    }

    #[test]
    fn no_offset_fit_bias_on_uniform_background_matches_oracle() {
        // Gaussian of width 3 bins plus a flat 50/bin pedestal over a
        // 25 x 50 field: the no-offset model must come out wider than 3,
        // and must agree with the independent profiled minimizer.
        let grid = synthetic_grid(25, 50, 1000.0, (0.0, 0.0), 3.0, 50.0);
        let fit = fit_gaussian_2d(&grid, &FitOptions::default()).unwrap();
        assert!(
            fit.width > 3.0,
            "bias should widen the fit, got {}",
            fit.width
        );
        let oracle = oracle_width_centered(&grid);
        assert!(
            (fit.width - oracle).abs() / oracle < 1e-6,
            "fit {} vs oracle {oracle}",
            fit.width
        );
    }

    #[test]
    fn offset_model_recovers_background() {
        let grid = synthetic_grid(25, 50, 1000.0, (0.0, 0.0), 3.0, 50.0);
        let options = FitOptions {
            with_offset: true,
            ..FitOptions::default()
        };
        let fit = fit_gaussian_2d(&grid, &options).unwrap();
        assert!((fit.width - 3.0).abs() / 3.0 < 1e-6);
        assert!((fit.offset.unwrap() - 50.0).abs() < 1e-3);
    }

    #[test]
    fn anisotropic_fit_separates_axes() {
        let grid = GridGeometry::centered(1.0, 1.0, 41, 41).unwrap();
        let mut values = vec![0.0; grid.len()];
        for iv in 0..grid.n_v {
            for iu in 0..grid.n_u {
                let u = grid.center_u(iu);
                let v = grid.center_v(iv);
                values[iv * grid.n_u + iu] =
                    500.0 * (-(u * u / (2.0 * 4.0) + v * v / (2.0 * 9.0))).exp();
            }
        }
        let pg = ProjectionGrid {
            axis_kind: AxisKind::MinusCoordinate,
            basis: Basis::Position,
            grid,
            values,
        };
        let options = FitOptions {
            anisotropic: true,
            ..FitOptions::default()
        };
        let fit = fit_gaussian_2d(&pg, &options).unwrap();
        assert!((fit.width - 2.0).abs() < 1e-5);
        assert!((fit.width_v.unwrap() - 3.0).abs() < 1e-5);
    }

    #[test]
    fn single_bin_is_degenerate_but_handled() {
        let grid = GridGeometry::centered(1.0, 1.0, 21, 21).unwrap();
        let mut values = vec![0.0; grid.len()];
        values[10 * 21 + 10] = 500.0;
        let pg = ProjectionGrid {
            axis_kind: AxisKind::MinusCoordinate,
            basis: Basis::Position,
            grid,
            values,
        };
        let fit = fit_gaussian_2d(&pg, &FitOptions::default()).unwrap();
        assert!(
            !fit.converged || fit.width <= 1.0,
            "degenerate input: width {} converged {}",
            fit.width,
            fit.converged
        );
    }

    #[test]
    fn fit_requires_minimum_counts() {
        let grid = synthetic_grid(11, 11, 1.0, (0.0, 0.0), 2.0, 0.0);
        assert!(matches!(
            fit_gaussian_2d(&grid, &FitOptions::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    fn hist_from_samples(samples: &[f64], bin: f64, half_span: f64) -> ProjectionHist {
        let n = (2.0 * half_span / bin).ceil() as usize | 1;
        let grid = GridGeometry::centered(bin, bin, n, 1).unwrap();
        let mut hist = ProjectionHist::new(AxisKind::MinusCoordinate, Basis::Position, grid);
        for &s in samples {
            hist.record(s, 0.0);
        }
        hist
    }

    #[test]
    fn variance_width_of_point_mass_is_zero() {
        let grid = GridGeometry::centered(1.0, 1.0, 11, 11).unwrap();
        let mut hist = ProjectionHist::new(AxisKind::MinusCoordinate, Basis::Position, grid);
        hist.record(0.0, 0.0);
        hist.record(0.0, 0.0);
        let w = variance_width(&hist, GridAxis::U).unwrap();
        assert_eq!(w.value, 0.0);
        assert_eq!(w.method, WidthMethod::FormalVariance);
    }

    #[test]
    fn variance_width_needs_two_counts() {
        let grid = GridGeometry::centered(1.0, 1.0, 11, 11).unwrap();
        let mut hist = ProjectionHist::new(AxisKind::MinusCoordinate, Basis::Position, grid);
        hist.record(0.0, 0.0);
        assert!(matches!(
            variance_width(&hist, GridAxis::U),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn variance_width_of_uniform_support() {
        // Uniform over [-L, L] has std L/sqrt(3).
        let l = 10.0;
        let grid = GridGeometry::centered(1.0, 1.0, 21, 1).unwrap();
        let mut hist = ProjectionHist::new(AxisKind::MinusCoordinate, Basis::Position, grid);
        for k in -10..=10 {
            for _ in 0..7 {
                hist.record(k as f64, 0.0);
            }
        }
        let w = variance_width(&hist, GridAxis::U).unwrap();
        assert!((w.value - l / 3f64.sqrt()).abs() < 0.5, "width {}", w.value);
    }

    #[test]
    fn variance_width_includes_quantization_inflation() {
        // 1e6 Gaussian samples of std 5, binned at unit width: the binned
        // width carries the bin^2/12 inflation. Oracle: the sample std of
        // the raw values before binning.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let normal = Normal::new(0.0, 5.0).unwrap();
        let samples: Vec<f64> = (0..1_000_000).map(|_| normal.sample(&mut rng)).collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let raw_std = (samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();

        let hist = hist_from_samples(&samples, 1.0, 40.0);
        let w = variance_width(&hist, GridAxis::U).unwrap();
        let oracle = (raw_std * raw_std + 1.0 / 12.0).sqrt();
        assert!(
            (w.value - oracle).abs() < 0.005,
            "{} vs oracle {oracle}",
            w.value
        );
        assert!((w.value - 5.0).abs() < 0.02, "width {}", w.value);
    }

    #[test]
    fn background_sigma_fixtures() {
        let grid = GridGeometry::centered(1.0, 1.0, 21, 21).unwrap();
        let flat = ProjectionGrid {
            axis_kind: AxisKind::MinusCoordinate,
            basis: Basis::Position,
            grid,
            values: vec![3.0; grid.len()],
        };
        let exclusion = PeakExclusion {
            center_u: 0.0,
            center_v: 0.0,
            radius: 3.0,
            min_bins: 100,
        };
        assert_eq!(background_sigma(&flat, &exclusion).unwrap(), 0.0);

        // Alternating 0 and 2 has mean 1, population std 1.
        let mut values = vec![0.0; grid.len()];
        for (i, v) in values.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 0.0 } else { 2.0 };
        }
        let alternating = ProjectionGrid {
            axis_kind: AxisKind::MinusCoordinate,
            basis: Basis::Position,
            grid,
            values,
        };
        let exclusion_zero = PeakExclusion {
            radius: 0.0,
            ..exclusion
        };
        let sigma = background_sigma(&alternating, &exclusion_zero).unwrap();
        assert!((sigma - 1.0).abs() < 0.01, "sigma {sigma}");
    }

    #[test]
    fn background_sigma_of_poisson_noise() {
        let grid = GridGeometry::centered(1.0, 1.0, 41, 41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let poisson = Poisson::new(100.0).unwrap();
        let values: Vec<f64> = (0..grid.len()).map(|_| poisson.sample(&mut rng)).collect();
        let pg = ProjectionGrid {
            axis_kind: AxisKind::MinusCoordinate,
            basis: Basis::Position,
            grid,
            values,
        };
        let exclusion = PeakExclusion {
            center_u: 0.0,
            center_v: 0.0,
            radius: 5.0,
            min_bins: 1000,
        };
        let sigma = background_sigma(&pg, &exclusion).unwrap();
        assert!((sigma - 10.0).abs() < 0.5, "sigma {sigma}");
    }

    #[test]
    fn background_region_must_keep_enough_bins() {
        let grid = synthetic_grid(11, 11, 1000.0, (0.0, 0.0), 2.0, 0.0);
        let exclusion = PeakExclusion {
            center_u: 0.0,
            center_v: 0.0,
            radius: 100.0,
            min_bins: 100,
        };
        assert!(matches!(
            background_sigma(&grid, &exclusion),
            Err(Error::BackgroundRegionTooSmall { .. })
        ));
    }

    #[test]
    fn width_uncertainty_formula() {
        let u = width_uncertainty(3.0, 100.0, 1.0).unwrap();
        assert!((u - std::f64::consts::E.sqrt() * 3.0 / 100.0).abs() < 1e-15);
        assert!((u - 0.04946).abs() < 1e-5);
        assert_eq!(width_uncertainty(3.0, 100.0, 0.0).unwrap(), 0.0);
        let half = width_uncertainty(3.0, 200.0, 1.0).unwrap();
        assert!((u / half - 2.0).abs() < 1e-12);
        assert!(width_uncertainty(3.0, 0.0, 1.0).is_err());
        assert!(width_uncertainty(3.0, -5.0, 1.0).is_err());
    }

    fn joint_from_counts(
        n: usize,
        bin: f64,
        counts: impl Fn(usize, usize) -> u64,
    ) -> JointAxisHist {
        let grid = GridGeometry::centered(bin, bin, n, n).unwrap();
        let mut joint = JointAxisHist::new(Axis::X, Basis::Position, grid).unwrap();
        for i1 in 0..n {
            for i2 in 0..n {
                for _ in 0..counts(i1, i2) {
                    joint.record(grid.center_u(i1), grid.center_v(i2));
                }
            }
        }
        joint
    }

    #[test]
    fn perfectly_correlated_joint_has_zero_discrete_entropy() {
        let bin = 0.25;
        let joint = joint_from_counts(9, bin, |i1, i2| u64::from(i1 == i2) * 3);
        let h = conditional_entropy(&joint, &EntropyOptions::default()).unwrap();
        assert!((h - bin.ln()).abs() < 1e-12, "h = {h}");
    }

    #[test]
    fn independent_uniform_joint_entropy_is_exact() {
        for n in [4usize, 9, 16] {
            let bin = 0.5;
            let joint = joint_from_counts(n, bin, |_, _| 2);
            let h = conditional_entropy(&joint, &EntropyOptions::default()).unwrap();
            assert!(
                (h - (n as f64 * bin).ln()).abs() < 1e-12,
                "n = {n}: h = {h}"
            );
        }
    }

    #[test]
    fn empty_joint_is_insufficient() {
        let grid = GridGeometry::centered(1.0, 1.0, 5, 5).unwrap();
        let joint = JointAxisHist::new(Axis::X, Basis::Position, grid).unwrap();
        assert!(matches!(
            conditional_entropy(&joint, &EntropyOptions::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn gaussian_conditional_entropy_matches_quadrature_oracle() {
        // x2 = x1 + N(0, 4): h(x2|x1) = ln(4 sqrt(2 pi e)) ~ 2.805 nats.
        // Oracle: 1D quadrature of -p ln p for the conditional density.
        let sigma_c = 4.0f64;
        let oracle = {
            let n = 20_001;
            let span = 10.0 * sigma_c;
            let step = 2.0 * span / (n - 1) as f64;
            let norm = 1.0 / (sigma_c * (2.0 * std::f64::consts::PI).sqrt());
            let mut h = 0.0;
            for i in 0..n {
                let x = -span + i as f64 * step;
                let p = norm * (-x * x / (2.0 * sigma_c * sigma_c)).exp();
                if p > 0.0 {
                    h -= p * p.ln() * step;
                }
            }
            h
        };
        let analytic = (sigma_c * (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt()).ln();
        assert!((oracle - analytic).abs() < 1e-6);
        assert!((analytic - 2.805).abs() < 5e-4);

        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let wide = Normal::new(0.0, 20.0).unwrap();
        let cond = Normal::new(0.0, sigma_c).unwrap();
        let bin = 0.5;
        let grid = GridGeometry::centered(bin, bin, 481, 481).unwrap();
        let mut joint = JointAxisHist::new(Axis::X, Basis::Position, grid).unwrap();
        for _ in 0..10_000_000 {
            let x1 = wide.sample(&mut rng);
            let x2 = x1 + cond.sample(&mut rng);
            joint.record(x1, x2);
        }
        let h = conditional_entropy(&joint, &EntropyOptions::default()).unwrap();
        assert!((h - oracle).abs() < 0.03, "h = {h} vs oracle {oracle}");
    }

    #[test]
    fn entropy_respects_discrete_bounds() {
        let joint = joint_from_counts(8, 2.0, |i1, i2| ((i1 * 3 + i2 * 7) % 5) as u64);
        let h = conditional_entropy(&joint, &EntropyOptions::default()).unwrap();
        let discrete = h - 2.0f64.ln();
        assert!(discrete >= 0.0);
        assert!(discrete <= 8.0f64.ln() + 1e-12);
    }

    #[test]
    fn entropy_decreases_as_correlations_sharpen() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let wide = Normal::new(0.0, 20.0).unwrap();
        let mut previous = f64::INFINITY;
        for sigma_c in [8.0, 4.0, 2.0] {
            let cond = Normal::new(0.0, sigma_c).unwrap();
            let grid = GridGeometry::centered(0.5, 0.5, 481, 481).unwrap();
            let mut joint = JointAxisHist::new(Axis::X, Basis::Position, grid).unwrap();
            for _ in 0..200_000 {
                let x1 = wide.sample(&mut rng);
                joint.record(x1, x1 + cond.sample(&mut rng));
            }
            let h = conditional_entropy(&joint, &EntropyOptions::default()).unwrap();
            assert!(h < previous, "h = {h} did not drop below {previous}");
            previous = h;
        }
    }

    #[test]
    fn entropy_stable_under_grid_refinement() {
        // Halving the bin width moves h by < 0.02 nats on a smooth
        // high-count Gaussian fixture.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let wide = Normal::new(0.0, 20.0).unwrap();
        let cond = Normal::new(0.0, 4.0).unwrap();
        let samples: Vec<(f64, f64)> = (0..10_000_000)
            .map(|_| {
                let x1 = wide.sample(&mut rng);
                (x1, x1 + cond.sample(&mut rng))
            })
            .collect();
        let mut estimates = Vec::new();
        for bin in [0.5, 0.25] {
            let n = (240.0 / bin) as usize * 2 + 1;
            let grid = GridGeometry::centered(bin, bin, n, n).unwrap();
            let mut joint = JointAxisHist::new(Axis::X, Basis::Position, grid).unwrap();
            for &(x1, x2) in &samples {
                joint.record(x1, x2);
            }
            estimates.push(conditional_entropy(&joint, &EntropyOptions::default()).unwrap());
        }
        assert!(
            (estimates[0] - estimates[1]).abs() < 0.02,
            "refinement moved h from {} to {}",
            estimates[0],
            estimates[1]
        );
    }

    #[test]
    fn miller_madow_correction_is_additive() {
        let joint = joint_from_counts(6, 1.0, |i1, i2| ((i1 + i2) % 3) as u64);
        let plain = conditional_entropy(&joint, &EntropyOptions::default()).unwrap();
        let corrected =
            conditional_entropy(&joint, &EntropyOptions { miller_madow: true }).unwrap();
        assert!(corrected > plain);
    }

    #[test]
    fn variance_width_dominates_fit_width_on_peak_plus_background() {
        // A narrow peak over a nonzero pedestal: the formal variance must
        // exceed the fitted width, strictly, once background counts sit
        // outside the peak.
        let grid = GridGeometry::centered(1.0, 1.0, 61, 61).unwrap();
        let mut hist = ProjectionHist::new(AxisKind::MinusCoordinate, Basis::Position, grid);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let peak = Normal::new(0.0, 2.0).unwrap();
        for _ in 0..20_000 {
            hist.record(peak.sample(&mut rng), peak.sample(&mut rng));
        }
        for _ in 0..2_000 {
            let u: f64 = rand::Rng::random_range(&mut rng, -30.0..30.0);
            let v: f64 = rand::Rng::random_range(&mut rng, -30.0..30.0);
            hist.record(u, v);
        }
        let variance = variance_width(&hist, GridAxis::U).unwrap();
        let fit = fit_gaussian_2d(&hist.to_grid(), &FitOptions::default()).unwrap();
        assert!(
            variance.value > fit.width * 1.05,
            "variance {} vs fit {}",
            variance.value,
            fit.width
        );
    }
}
