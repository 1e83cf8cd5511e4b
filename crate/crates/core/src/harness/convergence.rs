//! Monte Carlo comparison of scaled GWI marginals with the limit diffusion.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::stats::{ks_one_sample, ks_two_sample, wasserstein1, KsResult, Summary};
use super::{exponents_for_case, step_index, HarnessError, ScaledStepProcess};
use crate::model::{detect_case, Case, GwiModel};
use crate::moments::mean_vector;
use crate::rng::derive_seed;
use crate::sde::{exact_first_coordinate_law, limit_mean_vector, map_limit_paths, FirstCoordinateLaw, LimitSystem, TimeGrid};
use crate::simulate::{map_replicas, SimOptions};

/// Fewest GWI replicas an experiment accepts.
pub const MIN_REPLICAS: u64 = 1000;
/// Family-wise significance level of the KS tests, split over the (coordinate, t) grid.
pub const FAMILY_ALPHA: f64 = 0.01;
const SDE_SEED_TAG: u64 = 0x5DE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub n_list: Vec<u64>,
    pub t_points: Vec<f64>,
    pub replicas: u64,
    pub sde_paths: u64,
    pub dt: f64,
    pub seed: u64,
    pub ci_level: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            n_list: vec![125, 250, 500, 1000, 2000],
            t_points: vec![0.25, 0.5, 1.0],
            replicas: 2000,
            sde_paths: 2000,
            dt: 1e-3,
            seed: 0,
            ci_level: 0.95,
        }
    }
}

/// Statistics of one coordinate at one `(n, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub t: f64,
    /// 1-based coordinate.
    pub coordinate: usize,
    /// `floor(n t)`.
    pub k: u64,
    pub gwi: Summary,
    pub sde: Summary,
    /// Mean of the limit law at `t`.
    pub limit_mean: f64,
    /// Exact `E X_{k,i} / n^{e_i}`.
    pub exact_scaled_mean: f64,
    pub ks: KsResult,
    /// One-sample KS against the exact Gamma marginal (first coordinate only).
    pub ks_gamma: Option<KsResult>,
    pub wasserstein1: f64,
    pub gwi_seed: u64,
}

/// Wasserstein-1 distances across `n_list` for one coordinate and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceTrend {
    pub coordinate: usize,
    pub t: f64,
    pub n_list: Vec<u64>,
    pub wasserstein1: Vec<f64>,
    /// Distance at the largest `n` is below the distance at the smallest.
    pub decreased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub case: Case,
    /// Relabelling applied to the model: new type `r` is original type `permutation[r]`.
    pub permutation: [usize; 3],
    pub exponents: [u32; 3],
    pub system: LimitSystem,
    pub config: ConvergenceConfig,
    pub sde_seed: u64,
    /// Per-test KS threshold after Bonferroni correction.
    pub ks_threshold: f64,
    pub rows: Vec<ConvergenceRow>,
    pub trends: Vec<DistanceTrend>,
}

impl ConvergenceReport {
    pub fn row(&self, n: u64, t: f64, coordinate: usize) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.n == n && (r.t - t).abs() < 1e-12 && r.coordinate == coordinate)
    }

    pub fn trend(&self, t: f64, coordinate: usize) -> Option<&DistanceTrend> {
        self.trends.iter().find(|r| (r.t - t).abs() < 1e-12 && r.coordinate == coordinate)
    }

    /// Flat per-`(n, t, coordinate)` CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "n,t,coordinate,k,gwi_mean,gwi_variance,gwi_std_error,gwi_ci_low,gwi_ci_high,\
             sde_mean,sde_variance,sde_std_error,limit_mean,exact_scaled_mean,ks_statistic,ks_p_value,\
             gamma_ks_statistic,gamma_ks_p_value,wasserstein1"
        )?;
        for r in &self.rows {
            let (gs, gp) = match r.ks_gamma {
                Some(k) => (k.statistic.to_string(), k.p_value.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.t,
                r.coordinate,
                r.k,
                r.gwi.mean,
                r.gwi.variance,
                r.gwi.std_error,
                r.gwi.ci_low,
                r.gwi.ci_high,
                r.sde.mean,
                r.sde.variance,
                r.sde.std_error,
                r.limit_mean,
                r.exact_scaled_mean,
                r.ks.statistic,
                r.ks.p_value,
                gs,
                gp,
                r.wasserstein1
            )?;
        }
        Ok(())
    }
}

fn validate(config: &ConvergenceConfig) -> Result<(), HarnessError> {
    if config.replicas < MIN_REPLICAS {
        return Err(HarnessError::InsufficientReplicas { minimum: MIN_REPLICAS, got: config.replicas });
    }
    if config.sde_paths == 0 {
        return Err(HarnessError::InvalidConfig("sde_paths must be positive".into()));
    }
    if config.n_list.is_empty() || config.n_list.contains(&0) {
        return Err(HarnessError::InvalidConfig("n_list must be nonempty with positive entries".into()));
    }
    if config.t_points.is_empty() || config.t_points.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(HarnessError::InvalidConfig("t_points must be nonempty and positive".into()));
    }
    if !(config.dt > 0.0) {
        return Err(HarnessError::InvalidConfig("dt must be positive".into()));
    }
    Ok(())
}

/// Runs the scaled GWI process for every `n` and compares its marginals at
/// `t_points` with an ensemble of limit-diffusion paths.
///
/// The model is relabelled into lower-unipotent form first when case
/// detection requires it. GWI replicas for scale `n` use the stream family
/// `derive_seed(seed, n)`; the diffusion ensemble is shared across `n`.
pub fn run_convergence_experiment(
    model: &GwiModel,
    case: Case,
    config: &ConvergenceConfig,
) -> Result<ConvergenceReport, HarnessError> {
    validate(config)?;
    let id = detect_case(model.mean_matrix())?;
    if id.case != case {
        return Err(HarnessError::CaseMismatch { expected: case, detected: id.case });
    }
    let model = model.permuted(&id.permutation)?;
    let system = LimitSystem::from_model(&model)?;
    let exponents = exponents_for_case(case);
    let t_max = config.t_points.iter().cloned().fold(0.0, f64::max);

    let grid = TimeGrid::uniform(t_max, config.dt)?;
    let grid_index: Vec<usize> = config.t_points.iter().map(|&t| grid.index_of(t)).collect::<Result<_, _>>()?;
    let sde_seed = derive_seed(config.seed, SDE_SEED_TAG);
    let sde_samples: Vec<Vec<[f64; 3]>> = map_limit_paths(&system, &grid, sde_seed, config.sde_paths, |p| {
        grid_index.iter().map(|&m| p.values[m]).collect()
    });

    let mut rows = Vec::new();
    for &n in &config.n_list {
        let horizon = step_index(n, t_max).max((n as f64 * t_max).ceil() as u64);
        let gwi_seed = derive_seed(config.seed, n);
        let samples: Vec<Vec<[f64; 3]>> =
            map_replicas(&model, horizon, gwi_seed, config.replicas, &SimOptions::default(), |traj| {
                let s = ScaledStepProcess { n, exponents, trajectory: traj };
                config.t_points.iter().map(|&t| s.evaluate(t).expect("horizon covers t_points")).collect()
            })?;
        for (ti, &t) in config.t_points.iter().enumerate() {
            let k = step_index(n, t);
            let exact = mean_vector(&model, k);
            let limit = limit_mean_vector(&system, t);
            for i in 0..3 {
                let gwi: Vec<f64> = samples.iter().map(|s| s[ti][i]).collect();
                let sde: Vec<f64> = sde_samples.iter().map(|s| s[ti][i]).collect();
                let ks_gamma = if i == 0 {
                    match exact_first_coordinate_law(system.b[0], system.v[0], t)? {
                        law @ FirstCoordinateLaw::Gamma { .. } => Some(ks_one_sample(&gwi, |x| law.cdf(x))?),
                        FirstCoordinateLaw::Deterministic { .. } => None,
                    }
                } else {
                    None
                };
                rows.push(ConvergenceRow {
                    n,
                    t,
                    coordinate: i + 1,
                    k,
                    gwi: Summary::new(&gwi, config.ci_level)?,
                    sde: Summary::new(&sde, config.ci_level)?,
                    limit_mean: limit[i],
                    exact_scaled_mean: exact[i] / (n as f64).powi(exponents[i] as i32),
                    ks: ks_two_sample(&gwi, &sde)?,
                    ks_gamma,
                    wasserstein1: wasserstein1(&gwi, &sde)?,
                    gwi_seed,
                });
            }
        }
    }

    let mut trends = Vec::new();
    for &t in &config.t_points {
        for coordinate in 1..=3 {
            let w: Vec<f64> = config
                .n_list
                .iter()
                .map(|&n| {
                    rows.iter()
                        .find(|r| r.n == n && r.t == t && r.coordinate == coordinate)
                        .expect("row exists")
                        .wasserstein1
                })
                .collect();
            let (smallest, largest) = smallest_and_largest(&config.n_list);
            trends.push(DistanceTrend {
                coordinate,
                t,
                n_list: config.n_list.clone(),
                decreased: w[largest] < w[smallest],
                wasserstein1: w,
            });
        }
    }

    Ok(ConvergenceReport {
        case,
        permutation: id.permutation,
        exponents,
        system,
        config: config.clone(),
        sde_seed,
        ks_threshold: FAMILY_ALPHA / (3 * config.t_points.len()) as f64,
        rows,
        trends,
    })
}

/// Positions of the smallest and largest entries.
fn smallest_and_largest(n_list: &[u64]) -> (usize, usize) {
    let idx = |better: fn(u64, u64) -> bool| {
        (0..n_list.len()).fold(0, |best, i| if better(n_list[i], n_list[best]) { i } else { best })
    };
    (idx(|a, b| a < b), idx(|a, b| a > b))
}
