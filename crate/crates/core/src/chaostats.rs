//! Series characterization: FFT mean period, autocorrelation lag and the
//! Rosenstein largest-Lyapunov-exponent estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::chaosdata::TimeSeries;
use crate::error::{Error, Result};

/// Rosenstein repetitions averaged per dimension.
pub const LYAPUNOV_RUNS: usize = 100;
const RANSAC_TRIALS: usize = 100;

/// Inlier count, R² and inlier points of a candidate line.
type Consensus = (usize, f64, Vec<(f64, f64)>);
const RANSAC_STOP_PROBABILITY: f64 = 0.99;

fn check_len(series: &[f64], min: usize) -> Result<()> {
    if series.len() < min {
        return Err(Error::Estimation(format!(
            "series of length {} is shorter than {min}",
            series.len()
        )));
    }
    Ok(())
}

/// Inverse of the amplitude-weighted mean of the positive DFT frequencies
/// (cycles per sample, zero frequency excluded).
pub fn mean_period(series: &[f64]) -> Result<f64> {
    check_len(series, 4)?;
    let n = series.len();
    let mut buf: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut weighted, mut total) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let a = c.norm();
        weighted += a * k as f64 / n as f64;
        total += a;
    }
    if total == 0.0 || weighted == 0.0 {
        return Err(Error::DegenerateData(
            "signal has no positive-frequency content".into(),
        ));
    }
    Ok(total / weighted)
}

/// Smallest positive lag at which the autocorrelation of the mean-removed
/// series drops below `1 - 1/e` of its lag-0 value.
pub fn autocorr_lag(series: &[f64]) -> Result<usize> {
    check_len(series, 4)?;
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let r0: f64 = x.iter().map(|v| v * v).sum();
    if r0 == 0.0 {
        return Err(Error::DegenerateData(
            "constant series has no autocorrelation".into(),
        ));
    }
    let threshold = 1.0 - (-1.0f64).exp();
    (1..n)
        .find(|&lag| {
            x[..n - lag]
                .iter()
                .zip(&x[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / r0
                < threshold
        })
        .ok_or_else(|| Error::Estimation("autocorrelation never fell below 1 - 1/e".into()))
}

/// Mean log distance between each embedded point and its nearest temporally
/// separated neighbor, followed for `trajectory_len` steps.
pub fn divergence_curve(
    series: &[f64],
    emb_dim: usize,
    lag: usize,
    min_tsep: usize,
    trajectory_len: usize,
) -> Result<Vec<f64>> {
    if emb_dim == 0 || lag == 0 || trajectory_len == 0 {
        return Err(Error::Estimation(
            "embedding dimension, lag and trajectory length must be positive".into(),
        ));
    }
    let span = (emb_dim - 1) * lag;
    if series.len() <= span {
        return Err(Error::Estimation(
            "series too short for the embedding".into(),
        ));
    }
    let m = series.len() - span;
    let point = |i: usize| (0..emb_dim).map(move |e| series[i + e * lag]);
    let dist = |i: usize, j: usize| {
        point(i)
            .zip(point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let ntraj = (m + 1).saturating_sub(trajectory_len);
    if ntraj < 2 * min_tsep + 2 {
        return Err(Error::Estimation(format!(
            "{ntraj} trajectories are too few for min_tsep {min_tsep}"
        )));
    }
    let neighbors: Vec<usize> = (0..ntraj)
        .map(|i| {
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..ntraj {
                if i.abs_diff(j) > min_tsep {
                    let d = dist(i, j);
                    if d < best.0 {
                        best = (d, j);
                    }
                }
            }
            best.1
        })
        .collect();
    Ok((0..trajectory_len)
        .map(|k| {
            let logs: Vec<f64> = (0..ntraj)
                .map(|i| dist(i + k, neighbors[i] + k))
                .filter(|&d| d > 0.0)
                .map(f64::ln)
                .collect();
            if logs.is_empty() {
                f64::NEG_INFINITY
            } else {
                logs.iter().sum::<f64>() / logs.len() as f64
            }
        })
        .collect())
}

fn least_squares(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn r_squared(points: &[(f64, f64)], slope: f64, intercept: f64) -> f64 {
    let my = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Robust line fit: random two-point hypotheses, inliers within the median
/// absolute deviation of `y`, least-squares refit on the best consensus set.
pub fn ransac_slope<R: Rng + ?Sized>(points: &[(f64, f64)], rng: &mut R) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let med = median(&mut ys);
    let mut dev: Vec<f64> = points.iter().map(|p| (p.1 - med).abs()).collect();
    let threshold = median(&mut dev);
    let mut best: Option<Consensus> = None;
    let mut max_trials = RANSAC_TRIALS;
    let mut trial = 0;
    while trial < max_trials {
        trial += 1;
        let a = rng.gen_range(0..points.len());
        let mut b = rng.gen_range(0..points.len() - 1);
        if b >= a {
            b += 1;
        }
        let Some((slope, icpt)) = least_squares(&[points[a], points[b]]) else {
            continue;
        };
        let inliers: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .filter(|p| (p.1 - slope * p.0 - icpt).abs() <= threshold)
            .collect();
        if inliers.is_empty() {
            continue;
        }
        let score = r_squared(&inliers, slope, icpt);
        let better = match &best {
            None => true,
            Some((count, s, _)) => {
                inliers.len() > *count || (inliers.len() == *count && score > *s)
            }
        };
        if better {
            let w = inliers.len() as f64 / points.len() as f64;
            best = Some((inliers.len(), score, inliers));
            let needed = dynamic_trials(w);
            max_trials = max_trials.min(needed);
        }
    }
    let (_, _, inliers) = best?;
    least_squares(&inliers).map(|(s, _)| s)
}

fn dynamic_trials(inlier_ratio: f64) -> usize {
    let denom = (1.0 - inlier_ratio * inlier_ratio).ln();
    if denom == 0.0 {
        return 0;
    }
    if !denom.is_finite() {
        return RANSAC_TRIALS;
    }
    ((1.0 - RANSAC_STOP_PROBABILITY).ln() / denom).ceil() as usize
}

fn fit_curve<R: Rng + ?Sized>(curve: &[f64], rng: &mut R) -> Result<f64> {
    let points: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite())
        .map(|(k, &y)| (k as f64, y))
        .collect();
    ransac_slope(&points, rng)
        .ok_or_else(|| Error::Estimation("divergence curve too short to fit".into()))
}

/// Rosenstein estimate of the largest Lyapunov exponent per time step.
///
/// The embedding dimension and fit window are supplied by the caller; the
/// randomness is that of the robust slope fit.
pub fn rosenstein_lyapunov<R: Rng + ?Sized>(
    series: &[f64],
    emb_dim: usize,
    min_tsep: usize,
    lag: usize,
    trajectory_len: usize,
    rng: &mut R,
) -> Result<f64> {
    let curve = divergence_curve(series, emb_dim, lag, min_tsep, trajectory_len)?;
    fit_curve(&curve, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionStats {
    pub mean_period: f64,
    pub lag: usize,
    pub lyapunov_exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    /// Mean over dimensions.
    pub mean_period: f64,
    /// Largest per-dimension lag.
    pub lag: usize,
    pub lyapunov_exponent: f64,
    pub lyapunov_time: f64,
    pub dimensions: Vec<DimensionStats>,
}

/// Characterizes every dimension and averages. Each dimension is embedded in
/// `2·d + 1` dimensions with its own autocorrelation lag, neighbors are kept
/// at least the rounded mean period apart, and the slope is fitted over the
/// first `⌈mean period⌉` divergence steps. The robust fit is repeated
/// [`LYAPUNOV_RUNS`] times with sub-seeds of `seed` and averaged.
pub fn dataset_stats(series: &TimeSeries, seed: u64) -> Result<SeriesStats> {
    let d = series.dim;
    let emb_dim = 2 * d + 1;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = Vec::with_capacity(d);
    for j in 0..d {
        let x = series.column(j);
        let mp = mean_period(&x)?;
        let lag = autocorr_lag(&x)?;
        let curve = divergence_curve(&x, emb_dim, lag, mp.round() as usize, mp.ceil() as usize)?;
        let mut total = 0.0;
        for _ in 0..LYAPUNOV_RUNS {
            let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
            total += fit_curve(&curve, &mut rng)?;
        }
        dims.push(DimensionStats {
            mean_period: mp,
            lag,
            lyapunov_exponent: total / LYAPUNOV_RUNS as f64,
        });
    }
    let exponent = dims.iter().map(|s| s.lyapunov_exponent).sum::<f64>() / d as f64;
    if exponent.is_nan() || exponent <= 0.0 {
        return Err(Error::Estimation(format!(
            "non-positive Lyapunov exponent {exponent}"
        )));
    }
    Ok(SeriesStats {
        mean_period: dims.iter().map(|s| s.mean_period).sum::<f64>() / d as f64,
        lag: dims.iter().map(|s| s.lag).max().unwrap_or(1),
        lyapunov_exponent: exponent,
        lyapunov_time: 1.0 / exponent,
        dimensions: dims,
    })
}
