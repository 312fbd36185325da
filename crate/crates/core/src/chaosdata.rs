//! Chaotic benchmark series, min-max scaling and sliding-window tasks.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// Length of every benchmark series.
pub const BENCHMARK_POINTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Mackey,
    Henon,
    Lorenz,
}

impl Generator {
    pub const ALL: [Generator; 3] = [Generator::Mackey, Generator::Henon, Generator::Lorenz];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Mackey => "mackey",
            Generator::Henon => "henon",
            Generator::Lorenz => "lorenz",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Generator::Mackey => 1,
            Generator::Henon => 2,
            Generator::Lorenz => 3,
        }
    }

    /// Default prediction horizons: one step, half and one Lyapunov time.
    pub fn default_steps(self) -> [usize; 3] {
        match self {
            Generator::Mackey => [1, 70, 140],
            Generator::Henon => [1, 2, 4],
            Generator::Lorenz => [1, 13, 25],
        }
    }

    pub fn generate(self, n_points: usize) -> TimeSeries {
        match self {
            Generator::Mackey => gen_mackey_glass(n_points),
            Generator::Henon => gen_henon(n_points),
            Generator::Lorenz => gen_lorenz(n_points),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mackey" | "mackey-glass" | "mackey_glass" => Ok(Generator::Mackey),
            "henon" => Ok(Generator::Henon),
            "lorenz" => Ok(Generator::Lorenz),
            _ => Err(config_err!("unknown dataset '{s}'")),
        }
    }
}

/// Row-major `n_points × dim` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub generator: Option<Generator>,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl TimeSeries {
    pub fn new(generator: Option<Generator>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(config_err!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData(
                "series contains non-finite values".into(),
            ));
        }
        Ok(TimeSeries {
            generator,
            dim,
            data,
        })
    }

    pub fn n_points(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(j)
            .step_by(self.dim)
            .copied()
            .collect()
    }
}

const MG_TAU: f64 = 17.0;
const MG_X0: f64 = 1.2;

fn mackey_rhs(x: f64, delayed: f64) -> f64 {
    0.2 * delayed / (1.0 + delayed.powi(10)) - 0.1 * x
}

/// Delay history on the unit grid; linear interpolation between samples,
/// constant `x0` before the start.
fn mackey_history(xs: &[f64], t: f64) -> f64 {
    if t < 0.0 {
        return MG_X0;
    }
    let i = t.floor() as usize;
    let frac = t - i as f64;
    if frac == 0.0 || i + 1 >= xs.len() {
        xs[i]
    } else {
        xs[i] * (1.0 - frac) + xs[i + 1] * frac
    }
}

/// Mackey-Glass delay equation, RK4 with unit step from `x(0) = 1.2`.
pub fn gen_mackey_glass(n_points: usize) -> TimeSeries {
    let mut xs = Vec::with_capacity(n_points);
    if n_points > 0 {
        xs.push(MG_X0);
    }
    while xs.len() < n_points {
        let t = (xs.len() - 1) as f64;
        let x = xs[xs.len() - 1];
        let d0 = mackey_history(&xs, t - MG_TAU);
        let dh = mackey_history(&xs, t + 0.5 - MG_TAU);
        let d1 = mackey_history(&xs, t + 1.0 - MG_TAU);
        xs.push(rk4_delay_step(x, d0, dh, d1));
    }
    TimeSeries {
        generator: Some(Generator::Mackey),
        dim: 1,
        data: xs,
    }
}

fn rk4_delay_step(x: f64, d0: f64, dh: f64, d1: f64) -> f64 {
    let k1 = mackey_rhs(x, d0);
    let k2 = mackey_rhs(x + 0.5 * k1, dh);
    let k3 = mackey_rhs(x + 0.5 * k2, dh);
    let k4 = mackey_rhs(x + k3, d1);
    x + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
}

/// Hénon map from the origin, no transient removed.
pub fn gen_henon(n_points: usize) -> TimeSeries {
    let (mut x, mut y) = (0.0f64, 0.0f64);
    let mut data = Vec::with_capacity(2 * n_points);
    for _ in 0..n_points {
        data.push(x);
        data.push(y);
        (x, y) = (1.0 - 1.4 * x * x + y, 0.3 * x);
    }
    TimeSeries {
        generator: Some(Generator::Henon),
        dim: 2,
        data,
    }
}

const LORENZ_STEP: f64 = 0.03;
const LORENZ_DISCARD: usize = 500;

pub fn lorenz_rhs(s: [f64; 3]) -> [f64; 3] {
    [
        10.0 * (s[1] - s[0]),
        s[0] * (28.0 - s[2]) - s[1],
        s[0] * s[1] - 8.0 / 3.0 * s[2],
    ]
}

fn lorenz_step(s: [f64; 3], h: f64) -> [f64; 3] {
    let add =
        |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    let k1 = lorenz_rhs(s);
    let k2 = lorenz_rhs(add(s, k1, h / 2.0));
    let k3 = lorenz_rhs(add(s, k2, h / 2.0));
    let k4 = lorenz_rhs(add(s, k3, h));
    std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Lorenz system, RK4 with step 0.03 from `(1, 1, 1)`; the first 500 samples
/// are dropped.
pub fn gen_lorenz(n_points: usize) -> TimeSeries {
    let mut s = [1.0, 1.0, 1.0];
    let mut data = Vec::with_capacity(3 * n_points);
    for i in 0..LORENZ_DISCARD + n_points {
        if i >= LORENZ_DISCARD {
            data.extend_from_slice(&s);
        }
        s = lorenz_step(s, LORENZ_STEP);
    }
    TimeSeries {
        generator: Some(Generator::Lorenz),
        dim: 3,
        data,
    }
}

/// Per-dimension min-max scaling, invertible.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Scaling {
    pub fn inverse(&self, scaled: &TimeSeries) -> TimeSeries {
        let d = self.mins.len();
        let data = scaled
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let j = i % d;
                v * (self.maxs[j] - self.mins[j]) + self.mins[j]
            })
            .collect();
        TimeSeries {
            generator: scaled.generator,
            dim: scaled.dim,
            data,
        }
    }
}

pub fn minmax_scale(series: &TimeSeries) -> Result<(TimeSeries, Scaling)> {
    let d = series.dim;
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for row in series.data.chunks(d) {
        for j in 0..d {
            mins[j] = mins[j].min(row[j]);
            maxs[j] = maxs[j].max(row[j]);
        }
    }
    if let Some(j) =
        (0..d).find(|&j| maxs[j].partial_cmp(&mins[j]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::DegenerateData(format!("dimension {j} is constant")));
    }
    let data = series
        .data
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let j = i % d;
            (v - mins[j]) / (maxs[j] - mins[j])
        })
        .collect();
    Ok((
        TimeSeries {
            generator: series.generator,
            dim: d,
            data,
        },
        Scaling { mins, maxs },
    ))
}

/// Sliding-window `(sequence, label)` tuples with chronological splits.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub seq_len: usize,
    pub steps: usize,
    pub dim: usize,
    /// Each sequence flattened time-major, `seq_len · dim` values.
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Time index of the label of tuple `i`.
    pub fn label_time(&self, i: usize) -> usize {
        i + self.seq_len - 1 + self.steps
    }
}

/// Tuple `i` pairs samples `i .. i+l` with the sample `k` steps after the
/// last one. Splits are 60/20/20 over tuple indices.
pub fn make_windows(series: &TimeSeries, seq_len: usize, steps: usize) -> Result<WindowedDataset> {
    if seq_len == 0 {
        return Err(config_err!("sequence length must be positive"));
    }
    if steps == 0 {
        return Err(config_err!("prediction steps must be positive"));
    }
    let n = series.n_points();
    if n <= seq_len + steps {
        return Err(config_err!(
            "{n} points are too few for l = {seq_len}, k = {steps}"
        ));
    }
    let count = n - steps - seq_len + 1;
    let d = series.dim;
    let inputs = (0..count)
        .map(|i| series.data[i * d..(i + seq_len) * d].to_vec())
        .collect();
    let labels = (0..count)
        .map(|i| series.row(i + seq_len - 1 + steps).to_vec())
        .collect();
    let a = count * 6 / 10;
    let b = count * 8 / 10;
    Ok(WindowedDataset {
        seq_len,
        steps,
        dim: d,
        inputs,
        labels,
        train: 0..a,
        val: a..b,
        test: b..count,
    })
}

/// Benchmark task data: generated, scaled and windowed.
pub fn benchmark_dataset(
    generator: Generator,
    seq_len: usize,
    steps: usize,
) -> Result<WindowedDataset> {
    let (scaled, _) = minmax_scale(&generator.generate(BENCHMARK_POINTS))?;
    make_windows(&scaled, seq_len, steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mackey_shape_and_start() {
        let s = gen_mackey_glass(1000);
        assert_eq!((s.dim, s.n_points()), (1, 1000));
        assert_eq!(s.data[0], 1.2);
    }

    #[test]
    fn mackey_first_step_against_hand_rk4() {
        // the delayed term is frozen at 1.2 for the first 17 steps
        let f = |x: f64| 0.2 * 1.2 / (1.0 + 1.2f64.powi(10)) - 0.1 * x;
        let x = 1.2;
        let k1 = f(x);
        let k2 = f(x + k1 / 2.0);
        let k3 = f(x + k2 / 2.0);
        let k4 = f(x + k3);
        let want = x + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        assert!((gen_mackey_glass(2).data[1] - want).abs() < 1e-12);
    }

    #[test]
    fn henon_first_iterates() {
        let s = gen_henon(3);
        assert_eq!(s.row(0), &[0.0, 0.0]);
        assert_eq!(s.row(1), &[1.0, 0.0]);
        assert!((s.row(2)[0] + 0.4).abs() < 1e-15 && (s.row(2)[1] - 0.3).abs() < 1e-15);
        let s = gen_henon(1000);
        for r in s.data.chunks(2) {
            assert!(r[0].abs() < 2.0 && r[1].abs() < 1.0);
        }
    }

    #[test]
    fn lorenz_rhs_and_step() {
        let d = lorenz_rhs([1.0, 1.0, 1.0]);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 26.0);
        assert!((d[2] - (1.0 - 8.0 / 3.0)).abs() < 1e-15);
        let s = gen_lorenz(10);
        assert_eq!((s.dim, s.n_points()), (3, 10));
    }

    #[test]
    fn generators_are_deterministic() {
        for g in Generator::ALL {
            assert_eq!(g.generate(300), g.generate(300));
        }
    }

    #[test]
    fn scaling_examples() {
        let s = TimeSeries::new(None, 1, vec![2.0, 4.0, 6.0]).unwrap();
        let (sc, meta) = minmax_scale(&s).unwrap();
        assert_eq!(sc.data, vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_scale(&sc).unwrap().0, sc);
        let back = meta.inverse(&sc);
        for (a, b) in back.data.iter().zip(&s.data) {
            assert!((a - b).abs() < 1e-12);
        }
        let flat = TimeSeries::new(None, 2, vec![1.0, 3.0, 1.0, 4.0]).unwrap();
        assert!(matches!(minmax_scale(&flat), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn window_examples() {
        let s = TimeSeries::new(None, 1, (1..=10).map(f64::from).collect()).unwrap();
        let w = make_windows(&s, 4, 1).unwrap();
        assert_eq!(w.len(), 6);
        assert_eq!(w.inputs[0], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(w.labels[0], vec![5.0]);
        assert!(make_windows(&s, 4, 0).is_err());
        assert!(make_windows(&s, 5, 5).is_err());
        let long = gen_mackey_glass(1000);
        assert_eq!(make_windows(&long, 16, 140).unwrap().len(), 845);
    }

    #[test]
    fn splits_are_chronological() {
        let w = benchmark_dataset(Generator::Henon, 8, 4).unwrap();
        assert_eq!(w.train.end, w.val.start);
        assert_eq!(w.val.end, w.test.start);
        assert_eq!(w.test.end, w.len());
        assert_eq!(w.train.len(), w.len() * 6 / 10);
        assert!(w.label_time(w.train.end - 1) < w.label_time(w.test.start));
    }
}
