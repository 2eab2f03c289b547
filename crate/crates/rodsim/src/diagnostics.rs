//! Ensemble measurements: planar orientation angles, the lattice-nematic
//! order parameter, moving averages, and orientation histograms.

use crate::math::{dot, norm, Vec3};

/// In-plane orientation angle of `v` measured from `axis_a` toward `axis_b`
/// (the plane's orthonormal basis), in (-pi, pi]. `None` when `v` is
/// (numerically) perpendicular to the plane, where the angle is undefined.
pub fn planar_angle(v: Vec3, axis_a: Vec3, axis_b: Vec3) -> Option<f64> {
    let x = dot(v, axis_a);
    let y = dot(v, axis_b);
    if x.hypot(y) <= 1e-12 * norm(v).max(f64::MIN_POSITIVE) {
        None
    } else {
        Some(y.atan2(x))
    }
}

/// Axis-alignment order parameter: the mean of `|cos(2 theta)|`.
///
/// 1 when every body lies along one of the two basis axes (either one — the
/// measure is head-tail and axis symmetric), `2 / pi` for isotropically
/// distributed orientations, 0 when everything sits on the diagonals.
///
/// Panics on an empty slice: the mean of nothing is a caller bug.
pub fn alignment_order(angles: &[f64]) -> f64 {
    assert!(!angles.is_empty(), "order parameter of zero bodies");
    angles.iter().map(|t| (2.0 * t).cos().abs()).sum::<f64>() / angles.len() as f64
}

/// Trailing moving average by trapezoidal quadrature: for every sample time
/// `t_i` at least `window` past the first sample, the average of the linearly
/// interpolated signal over `[t_i - window, t_i]`. Earlier samples are
/// omitted rather than averaged over a truncated window.
///
/// `times` must be strictly increasing and aligned with `values`.
pub fn trailing_average(times: &[f64], values: &[f64], window: f64) -> Vec<(f64, f64)> {
    assert_eq!(times.len(), values.len());
    assert!(window > 0.0, "window must be positive");
    assert!(
        times.windows(2).all(|w| w[0] < w[1]),
        "sample times must be strictly increasing"
    );
    let mut out = Vec::new();
    if times.is_empty() {
        return out;
    }
    // `lo` tracks the first sample at or past the window start; the partial
    // segment before it is handled by interpolation.
    let mut lo = 0;
    for i in 0..times.len() {
        let start = times[i] - window;
        if start < times[0] {
            continue;
        }
        while times[lo] < start {
            lo += 1;
        }
        let mut integral = 0.0;
        if lo > 0 && times[lo] > start {
            // Partial segment from `start` to `times[lo]`.
            let (t0, t1) = (times[lo - 1], times[lo]);
            let w = (start - t0) / (t1 - t0);
            let v_start = values[lo - 1] * (1.0 - w) + values[lo] * w;
            integral += 0.5 * (v_start + values[lo]) * (t1 - start);
        }
        for k in lo..i {
            integral += 0.5 * (values[k] + values[k + 1]) * (times[k + 1] - times[k]);
        }
        out.push((times[i], integral / window));
    }
    out
}

/// Centered moving average over `[t - window/2, t + window/2]`: the trailing
/// average with its timestamps shifted back half a window, so records within
/// half a window of either end of the series are omitted, never extrapolated.
pub fn centered_average(times: &[f64], values: &[f64], window: f64) -> Vec<(f64, f64)> {
    trailing_average(times, values, window)
        .into_iter()
        .map(|(t, v)| (t - 0.5 * window, v))
        .collect()
}

/// Histogram of angles over `[0, 2 pi)` as a probability density: the bin
/// values integrate to one (`sum * bin_width == 1`). Angles outside the
/// base interval are wrapped. At least 4 bins (one per quadrant).
pub fn orientation_histogram(angles: &[f64], n_bins: usize) -> Vec<f64> {
    assert!(n_bins >= 4, "need at least one bin per quadrant");
    assert!(!angles.is_empty(), "histogram of zero bodies");
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut counts = vec![0usize; n_bins];
    for &a in angles {
        let wrapped = a.rem_euclid(two_pi);
        // Guard against rem_euclid returning exactly 2 pi for tiny negatives.
        let bin = ((wrapped / two_pi * n_bins as f64) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let bin_width = two_pi / n_bins as f64;
    let total = angles.len() as f64;
    counts
        .into_iter()
        .map(|c| c as f64 / (total * bin_width))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// A constant signal averages to itself, stamps are centered, and both
    /// ends are trimmed by half a window.
    #[test]
    fn centered_average_trims_both_ends() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let constant = vec![3.25; times.len()];
        let out = centered_average(&times, &constant, 2.0);
        assert_eq!(out.len(), times.len() - 20);
        assert!((out[0].0 - 1.0).abs() < 1e-12, "first stamp {}", out[0].0);
        assert!((out.last().unwrap().0 - 9.0).abs() < 1e-12);
        assert!(out.iter().all(|&(_, v)| (v - 3.25).abs() < 1e-12));

        // A zero-mean periodic signal averaged over its own period vanishes.
        let wave: Vec<f64> = times.iter().map(|&t| (PI * t).sin()).collect();
        let out = centered_average(&times, &wave, 2.0);
        assert!(out.iter().all(|&(_, v)| v.abs() < 1e-3), "{out:?}");
    }

    /// Exact values at the symmetry points.
    #[test]
    fn order_parameter_extremes() {
        assert_eq!(alignment_order(&[0.0]), 1.0);
        assert!((alignment_order(&[PI / 2.0]) - 1.0).abs() <= 1e-15);
        assert!((alignment_order(&[PI]) - 1.0).abs() <= 1e-15);
        assert!(alignment_order(&[PI / 4.0]).abs() <= 1e-15);
        assert!(alignment_order(&[-PI / 4.0, 3.0 * PI / 4.0]).abs() <= 1e-15);
        // Mixed x- and y-aligned bodies still count as ordered.
        assert!((alignment_order(&[0.0, PI / 2.0, 0.0, -PI / 2.0]) - 1.0).abs() <= 1e-15);
    }

    /// Monte Carlo oracle: isotropic angles give 2 / pi.
    #[test]
    fn order_parameter_isotropic_is_two_over_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let angles: Vec<f64> = (0..1_000_000).map(|_| rng.gen_range(-PI..PI)).collect();
        let s = alignment_order(&angles);
        assert!(
            (s - 2.0 / PI).abs() <= 0.01,
            "isotropic order {s} vs {}",
            2.0 / PI
        );
    }

    /// The angle is measured in the given basis and rejects out-of-plane
    /// vectors.
    #[test]
    fn planar_angle_basis_and_degeneracy() {
        let x = [1.0, 0.0, 0.0];
        let y = [0.0, 1.0, 0.0];
        assert_eq!(planar_angle([2.0, 0.0, 0.3], x, y), Some(0.0));
        let a = planar_angle([0.0, 5.0, -1.0], x, y).unwrap();
        assert!((a - PI / 2.0).abs() <= 1e-15);
        let a = planar_angle([-1.0, -1.0, 0.0], x, y).unwrap();
        assert!((a + 3.0 * PI / 4.0).abs() <= 1e-15);
        // Perpendicular to the plane: undefined.
        assert_eq!(planar_angle([0.0, 0.0, 4.0], x, y), None);
        assert_eq!(planar_angle([0.0; 3], x, y), None);
        // A different basis measures in that basis.
        let a = planar_angle([0.0, 0.0, 2.0], y, [0.0, 0.0, 1.0]).unwrap();
        assert!((a - PI / 2.0).abs() <= 1e-15);
    }

    /// Quadrature oracle: trapezoid averages linear signals exactly, and a
    /// full-period cosine window averages to ~0.
    #[test]
    fn trailing_average_quadrature() {
        // Linear signal on uneven sample times.
        let times: Vec<f64> = vec![0.0, 0.3, 0.55, 1.0, 1.3, 1.9, 2.5, 2.8, 3.0];
        let values: Vec<f64> = times.iter().map(|t| 2.0 + 3.0 * t).collect();
        let window = 1.0;
        let averaged = trailing_average(&times, &values, window);
        // Exactly those samples with t >= t0 + window survive.
        let expected_times: Vec<f64> =
            times.iter().copied().filter(|&t| t >= 1.0).collect();
        assert_eq!(
            averaged.iter().map(|(t, _)| *t).collect::<Vec<_>>(),
            expected_times
        );
        for &(t, avg) in &averaged {
            // Mean of a linear function over [t - w, t] is its midpoint value.
            let exact = 2.0 + 3.0 * (t - 0.5 * window);
            assert!((avg - exact).abs() <= 1e-13, "at {t}: {avg} vs {exact}");
        }

        // Cosine averaged over one period: zero up to O(h^2) quadrature error.
        let n = 400;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * 4.0 / n as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| (2.0 * PI * t).cos()).collect();
        let averaged = trailing_average(&times, &values, 1.0);
        for &(t, avg) in averaged.iter() {
            assert!(avg.abs() <= 1e-3, "cosine window at {t}: {avg}");
        }
    }

    /// Ends are omitted, not averaged over short windows.
    #[test]
    fn trailing_average_omits_warmup() {
        let times = [0.0, 1.0, 2.0];
        let values = [5.0, 5.0, 5.0];
        let averaged = trailing_average(&times, &values, 1.5);
        assert_eq!(averaged.len(), 1);
        assert_eq!(averaged[0].0, 2.0);
        assert!((averaged[0].1 - 5.0).abs() <= 1e-15);
    }

    /// Histogram integrates to one, finds clusters, and is flat for uniform
    /// angles.
    #[test]
    fn histogram_normalization_and_shape() {
        let two_pi = 2.0 * PI;

        // Four tight clusters at the axis directions, 16 bins: the four
        // peak bins carry everything.
        let mut angles = Vec::new();
        for k in 0..4 {
            let center = k as f64 * PI / 2.0;
            for i in 0..250 {
                angles.push(center + 0.01 * ((i % 21) as f64 - 10.0) / 10.0);
            }
        }
        let hist = orientation_histogram(&angles, 16);
        let bin_width = two_pi / 16.0;
        let integral: f64 = hist.iter().map(|d| d * bin_width).sum();
        assert!((integral - 1.0).abs() <= 1e-12);
        for k in 0..4 {
            let peak_bin = (k * 16) / 4; // bins 0, 4, 8, 12 contain the axes
            assert!(
                hist[peak_bin] > 0.0,
                "cluster {k} missing from bin {peak_bin}"
            );
        }
        // Clusters sit inside the peak bins and their wrap-around neighbors;
        // everything else is empty.
        let occupied: usize = hist.iter().filter(|&&d| d > 0.0).count();
        assert!(occupied <= 8, "clusters should stay tight, got {occupied} occupied bins");

        // Uniform angles: every bin density within 5% of 1 / (2 pi).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let angles: Vec<f64> = (0..1_000_000).map(|_| rng.gen_range(0.0..two_pi)).collect();
        let hist = orientation_histogram(&angles, 8);
        for (k, d) in hist.iter().enumerate() {
            let ratio = d * two_pi;
            assert!(
                (ratio - 1.0).abs() <= 0.05,
                "bin {k} density ratio {ratio}"
            );
        }

        // Negative angles wrap into range.
        let hist = orientation_histogram(&[-0.1], 4);
        assert!(hist[3] > 0.0);
        let integral: f64 = hist.iter().map(|d| d * (two_pi / 4.0)).sum();
        assert!((integral - 1.0).abs() <= 1e-12);
    }
}
