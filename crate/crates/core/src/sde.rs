//! The four limit diffusions of the scaled three-type process, their
//! analytic means, and the kernel forms of the twice-integrated coordinate.
//!
//! Squared Bessel coordinates `dX = b dt + sqrt(v X^+) dW` use Euler-Maruyama
//! with the positive part inside the square root and a clamp to zero after
//! each step. Integral coordinates accumulate by the trapezoidal rule on the
//! same grid.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};
use thiserror::Error;

use crate::model::{detect_case, Case, GwiModel, ModelError};
use crate::rng::{self, StreamRng};

/// Grid times closer than this to a requested time are treated as equal.
pub const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("time grid must start at 0 and be strictly increasing (step {index} is not positive)")]
    NonpositiveStep { index: usize },
    #[error("time grid must start at 0")]
    GridStart,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parameters do not match case {case}: a21 = {a21}, a31 = {a31}, a32 = {a32}")]
    CaseMismatch { case: Case, a21: f64, a31: f64, a32: f64 },
    #[error("time {0} is not a grid point")]
    TimeNotOnGrid(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self, SdeError> {
        if times.first() != Some(&0.0) {
            return Err(SdeError::GridStart);
        }
        if let Some(index) = times.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(SdeError::NonpositiveStep { index: index + 1 });
        }
        Ok(TimeGrid { times })
    }

    /// `0, h/M, ..., h` with `M = round(h / dt)` steps.
    pub fn uniform(horizon: f64, dt: f64) -> Result<Self, SdeError> {
        if !(dt > 0.0) || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(SdeError::NonpositiveStep { index: 1 });
        }
        let steps = (horizon / dt).round().max(1.0) as usize;
        TimeGrid::new((0..=steps).map(|m| horizon * m as f64 / steps as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("grid is nonempty")
    }

    /// Index of grid point `t`.
    pub fn index_of(&self, t: f64) -> Result<usize, SdeError> {
        let i = self.times.partition_point(|&s| s < t - GRID_TOLERANCE);
        match self.times.get(i) {
            Some(&s) if (s - t).abs() <= GRID_TOLERANCE => Ok(i),
            _ => Err(SdeError::TimeNotOnGrid(t)),
        }
    }
}

fn check_nonnegative(name: &str, x: f64) -> Result<(), SdeError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(SdeError::InvalidParameter(format!("{name} = {x} must be finite and nonnegative")))
    }
}

/// Fills `out` with a squared Bessel path on `grid` started at 0.
fn squared_bessel_into<R: Rng + ?Sized>(b: f64, v: f64, grid: &TimeGrid, rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    if b == 0.0 {
        // Zero drift from zero: the exact solution stays at 0.
        out.resize(grid.len(), 0.0);
        return;
    }
    let mut x: f64 = 0.0;
    for w in grid.times.windows(2) {
        let dt = w[1] - w[0];
        let z: f64 = rng.sample(StandardNormal);
        x = (x + b * dt + (v * x.max(0.0) * dt).sqrt() * z).max(0.0);
        out.push(x);
    }
}

/// One squared Bessel path `dX = b dt + sqrt(v X^+) dW`, `X_0 = 0`, on stream 0 of `seed`.
pub fn simulate_squared_bessel(b: f64, v: f64, grid: &TimeGrid, seed: u64) -> Result<Vec<f64>, SdeError> {
    check_nonnegative("b", b)?;
    check_nonnegative("v", v)?;
    let mut out = Vec::with_capacity(grid.len());
    squared_bessel_into(b, v, grid, &mut rng::stream(seed, 0), &mut out);
    Ok(out)
}

/// Parameters of one of the four limit systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSystem {
    pub case: Case,
    /// Immigration means `b_1, b_2, b_3`.
    pub b: [f64; 3],
    /// Offspring variances `v^(i)_{i,i}`.
    pub v: [f64; 3],
    pub a21: f64,
    pub a31: f64,
    pub a32: f64,
}

impl LimitSystem {
    pub fn new(case: Case, b: [f64; 3], v: [f64; 3], a21: f64, a31: f64, a32: f64) -> Result<Self, SdeError> {
        for (name, x) in [("b1", b[0]), ("b2", b[1]), ("b3", b[2]), ("v1", v[0]), ("v2", v[1]), ("v3", v[2])] {
            check_nonnegative(name, x)?;
        }
        for (name, x) in [("a21", a21), ("a31", a31), ("a32", a32)] {
            check_nonnegative(name, x)?;
        }
        if Case::from_pattern(a21, a31, a32) != Some(case) {
            return Err(SdeError::CaseMismatch { case, a21, a31, a32 });
        }
        Ok(LimitSystem { case, b, v, a21, a31, a32 })
    }

    /// Limit system of a three-type model, after relabelling types into the
    /// lower-unipotent form reported by case detection.
    pub fn from_model(model: &GwiModel) -> Result<Self, SdeError> {
        let id = detect_case(model.mean_matrix())?;
        let model = model.permuted(&id.permutation)?;
        let a = model.mean_matrix();
        let b = model.immigration_mean();
        let v = |i: usize| model.variances()[i + 1][(i, i)];
        LimitSystem::new(id.case, [b[0], b[1], b[2]], [v(0), v(1), v(2)], a[(1, 0)], a[(2, 0)], a[(2, 1)])
    }

    /// Scaling exponents of the three coordinates.
    pub fn exponents(&self) -> [u32; 3] {
        match self.case {
            Case::One => [1, 1, 1],
            Case::Two => [1, 1, 2],
            Case::Three => [1, 2, 2],
            Case::Four => [1, 2, 3],
        }
    }
}

/// A limit-system path on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub values: Vec<[f64; 3]>,
    pub seed: u64,
    pub path: u64,
}

impl SdePath {
    /// Values at grid time `t`.
    pub fn at(&self, t: f64) -> Result<[f64; 3], SdeError> {
        let i = self.times.partition_point(|&s| s < t - GRID_TOLERANCE);
        match self.times.get(i) {
            Some(&s) if (s - t).abs() <= GRID_TOLERANCE => Ok(self.values[i]),
            _ => Err(SdeError::TimeNotOnGrid(t)),
        }
    }

    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|x| x[i]).collect()
    }
}

/// `int_0^t f` by the trapezoidal rule, at every grid point.
fn trapezoid(times: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    out.push(0.0);
    for m in 1..f.len() {
        let prev = out[m - 1];
        out.push(prev + 0.5 * (f[m - 1] + f[m]) * (times[m] - times[m - 1]));
    }
    out
}

fn limit_path_with_rng(system: &LimitSystem, grid: &TimeGrid, rng: &mut StreamRng) -> Vec<[f64; 3]> {
    let t = grid.times();
    let mut x1 = Vec::with_capacity(t.len());
    squared_bessel_into(system.b[0], system.v[0], grid, rng, &mut x1);
    let (x2, x3) = match system.case {
        Case::One => {
            let mut x2 = Vec::with_capacity(t.len());
            let mut x3 = Vec::with_capacity(t.len());
            squared_bessel_into(system.b[1], system.v[1], grid, rng, &mut x2);
            squared_bessel_into(system.b[2], system.v[2], grid, rng, &mut x3);
            (x2, x3)
        }
        Case::Two => {
            let mut x2 = Vec::with_capacity(t.len());
            squared_bessel_into(system.b[1], system.v[1], grid, rng, &mut x2);
            let drift: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| system.a31 * a + system.a32 * b).collect();
            let x3 = trapezoid(t, &drift);
            (x2, x3)
        }
        Case::Three => {
            let i1 = trapezoid(t, &x1);
            (i1.iter().map(|y| system.a21 * y).collect(), i1.iter().map(|y| system.a31 * y).collect())
        }
        Case::Four => {
            let i1 = trapezoid(t, &x1);
            let i2 = trapezoid(t, &i1);
            let c = system.a32 * system.a21;
            (i1.iter().map(|y| system.a21 * y).collect(), i2.iter().map(|y| c * y).collect())
        }
    };
    (0..t.len()).map(|m| [x1[m], x2[m], x3[m]]).collect()
}

/// Path `path` of the stream family `seed`.
pub fn simulate_limit_path(system: &LimitSystem, grid: &TimeGrid, seed: u64, path: u64) -> SdePath {
    let values = limit_path_with_rng(system, grid, &mut rng::stream(seed, path));
    SdePath { times: grid.times().to_vec(), values, seed, path }
}

pub fn simulate_limit_system(system: &LimitSystem, grid: &TimeGrid, seed: u64) -> SdePath {
    simulate_limit_path(system, grid, seed, 0)
}

/// Simulates paths `0..paths` in parallel and applies `f` to each, in path order.
pub fn map_limit_paths<T, F>(system: &LimitSystem, grid: &TimeGrid, seed: u64, paths: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&SdePath) -> T + Sync,
{
    (0..paths).into_par_iter().map(|p| f(&simulate_limit_path(system, grid, seed, p))).collect()
}

/// `E X_t` of the limit system.
pub fn limit_mean_vector(system: &LimitSystem, t: f64) -> [f64; 3] {
    let [b1, b2, b3] = system.b;
    let (a21, a31, a32) = (system.a21, system.a31, system.a32);
    let t2 = t * t / 2.0;
    match system.case {
        Case::One => [b1 * t, b2 * t, b3 * t],
        Case::Two => [b1 * t, b2 * t, (a31 * b1 + a32 * b2) * t2],
        Case::Three => [b1 * t, a21 * b1 * t2, a31 * b1 * t2],
        Case::Four => [b1 * t, a21 * b1 * t2, a32 * a21 * b1 * t * t * t / 6.0],
    }
}

/// Marginal law of a squared Bessel process started at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FirstCoordinateLaw {
    Gamma { shape: f64, scale: f64 },
    /// Point mass, for `b = 0`, `v = 0` or `t = 0`.
    Deterministic { value: f64 },
}

impl FirstCoordinateLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            FirstCoordinateLaw::Gamma { shape, scale } => shape * scale,
            FirstCoordinateLaw::Deterministic { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            FirstCoordinateLaw::Gamma { shape, scale } => shape * scale * scale,
            FirstCoordinateLaw::Deterministic { .. } => 0.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            FirstCoordinateLaw::Gamma { shape, scale } => {
                Gamma::new(shape, 1.0 / scale).expect("validated parameters").cdf(x)
            }
            FirstCoordinateLaw::Deterministic { value } => f64::from(u8::from(x >= value)),
        }
    }
}

/// `X_t ~ Gamma(shape 2b/v, scale v t / 2)`; degenerate parameters give a point mass.
pub fn exact_first_coordinate_law(b: f64, v: f64, t: f64) -> Result<FirstCoordinateLaw, SdeError> {
    check_nonnegative("b", b)?;
    check_nonnegative("v", v)?;
    check_nonnegative("t", t)?;
    Ok(if b == 0.0 || t == 0.0 {
        FirstCoordinateLaw::Deterministic { value: 0.0 }
    } else if v == 0.0 {
        FirstCoordinateLaw::Deterministic { value: b * t }
    } else {
        FirstCoordinateLaw::Gamma { shape: 2.0 * b / v, scale: v * t / 2.0 }
    })
}

/// The representations of the integrated coordinates at time `t` and their
/// pairwise absolute differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelResiduals {
    /// `a21 int_0^t X ds`.
    pub single_integral: f64,
    /// `a21 int_0^t (t - s) dX`, left-point Stieltjes sum.
    pub single_stieltjes: f64,
    /// `a32 a21 int_0^t int_0^r X ds dr`.
    pub iterated_integral: f64,
    /// `a32 a21 int_0^t (t - s) X ds`.
    pub kernel_integral: f64,
    /// `(a32 a21 / 2) int_0^t (t - s)^2 dX`, left-point Stieltjes sum.
    pub kernel_stieltjes: f64,
    /// `sup_{s <= t} |X_s|`.
    pub path_sup: f64,
}

impl KernelResiduals {
    /// Pairwise residuals: single pair, then iterated-kernel, iterated-Stieltjes, kernel-Stieltjes.
    pub fn residuals(&self) -> [f64; 4] {
        [
            (self.single_integral - self.single_stieltjes).abs(),
            (self.iterated_integral - self.kernel_integral).abs(),
            (self.iterated_integral - self.kernel_stieltjes).abs(),
            (self.kernel_integral - self.kernel_stieltjes).abs(),
        ]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().into_iter().fold(0.0, f64::max)
    }
}

pub fn kernel_representation_check(
    path: &[f64],
    grid: &TimeGrid,
    t: f64,
    a21: f64,
    a32: f64,
) -> Result<KernelResiduals, SdeError> {
    if path.len() != grid.len() {
        return Err(SdeError::InvalidParameter(format!(
            "path has {} points, grid has {}",
            path.len(),
            grid.len()
        )));
    }
    let end = grid.index_of(t)?;
    let s = &grid.times()[..=end];
    let x = &path[..=end];
    let inner = trapezoid(s, x);
    let iterated = trapezoid(s, &inner)[end];
    let weighted: Vec<f64> = s.iter().zip(x).map(|(si, xi)| (t - si) * xi).collect();
    let kernel = trapezoid(s, &weighted)[end];
    let (mut lin, mut quad) = (0.0, 0.0);
    for m in 0..end {
        let dx = x[m + 1] - x[m];
        lin += (t - s[m]) * dx;
        quad += (t - s[m]) * (t - s[m]) * dx;
    }
    let c = a32 * a21;
    Ok(KernelResiduals {
        single_integral: a21 * inner[end],
        single_stieltjes: a21 * lin,
        iterated_integral: c * iterated,
        kernel_integral: c * kernel,
        kernel_stieltjes: 0.5 * c * quad,
        path_sup: x.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
    })
}
