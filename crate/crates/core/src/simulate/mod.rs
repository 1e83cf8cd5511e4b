//! Trajectory simulation of the branching recursion, martingale differences,
//! the three-type decomposition of the state into weighted sums, and exact
//! weighted-sum identities.

mod decomposition;
mod identities;

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

pub use decomposition::{decomposition_components, DecompositionComponents, RECONSTRUCTION_TOLERANCE};
pub use identities::{
    step_integral, weighted_sum_identity_1, weighted_sum_identity_2, weighted_sum_identity_3,
};

use crate::model::{GwiModel, SumMode};
use crate::rng::{self, StreamRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("population overflow in generation {generation}: a coordinate exceeds 2^63 - 1")]
    PopulationOverflow { generation: u64 },
    #[error("initial state has {got} coordinates, model has {expected} types")]
    InitialDimension { expected: usize, got: usize },
    #[error("decomposition needs a 3-type model with lower-unipotent mean matrix")]
    NotThreeTypeUnipotent,
    #[error("decomposition needs X_0 = 0")]
    NonzeroInitialState,
    #[error("reconstruction of coordinate {coordinate} failed at k = {generation}: relative residual {residual:e}")]
    Reconstruction { generation: u64, coordinate: usize, residual: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOptions {
    /// `X_0`; zero when `None`.
    pub initial: Option<Vec<u64>>,
    pub sum_mode: SumMode,
}

/// One-generation stepper over a model and an owned random stream.
pub struct Simulator<'m> {
    model: &'m GwiModel,
    sum_mode: SumMode,
    rng: StreamRng,
    state: Vec<u64>,
    generation: u64,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m GwiModel, options: &SimOptions, rng: StreamRng) -> Result<Self, SimulationError> {
        let p = model.p();
        let state = match &options.initial {
            Some(x) if x.len() != p => return Err(SimulationError::InitialDimension { expected: p, got: x.len() }),
            Some(x) => x.clone(),
            None => vec![0; p],
        };
        Ok(Simulator { model, sum_mode: options.sum_mode, rng, state, generation: 0 })
    }

    pub fn state(&self) -> &[u64] {
        &self.state
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Advances to the next generation and returns the new state.
    pub fn step(&mut self) -> Result<&[u64], SimulationError> {
        self.generation += 1;
        let overflow = |_| SimulationError::PopulationOverflow { generation: self.generation };
        let mut next = vec![0u64; self.state.len()];
        for (law, &count) in self.model.offspring().iter().zip(&self.state) {
            law.add_sum(count, self.sum_mode, &mut self.rng, &mut next).map_err(overflow)?;
        }
        self.model.immigration().add_sum(1, self.sum_mode, &mut self.rng, &mut next).map_err(overflow)?;
        self.state = next;
        Ok(&self.state)
    }
}

/// A simulated path `X_0, ..., X_K` with the seed and replica index that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<'m> {
    pub model: &'m GwiModel,
    pub states: Vec<Vec<u64>>,
    pub seed: u64,
    pub replica: u64,
}

impl Trajectory<'_> {
    /// Number of generations `K`.
    pub fn horizon(&self) -> u64 {
        self.states.len() as u64 - 1
    }

    /// CSV with header `k,X_1,...,X_p`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,{}", state_header(self.model.p()))?;
        for (k, x) in self.states.iter().enumerate() {
            writeln!(out, "{k},{}", join(x))?;
        }
        Ok(())
    }
}

/// Long-format CSV with header `replica,k,X_1,...,X_p`.
pub fn write_long_csv<W: Write>(trajectories: &[Trajectory<'_>], mut out: W) -> io::Result<()> {
    let Some(first) = trajectories.first() else { return Ok(()) };
    writeln!(out, "replica,k,{}", state_header(first.model.p()))?;
    for t in trajectories {
        for (k, x) in t.states.iter().enumerate() {
            writeln!(out, "{},{k},{}", t.replica, join(x))?;
        }
    }
    Ok(())
}

fn state_header(p: usize) -> String {
    (1..=p).map(|i| format!("X_{i}")).collect::<Vec<_>>().join(",")
}

fn join(x: &[u64]) -> String {
    x.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

/// Simulates replica 0 of the stream family `seed` with `X_0 = 0`.
pub fn simulate_trajectory(model: &GwiModel, horizon: u64, seed: u64) -> Result<Trajectory<'_>, SimulationError> {
    simulate_replica(model, horizon, seed, 0, &SimOptions::default())
}

pub fn simulate_replica<'m>(
    model: &'m GwiModel,
    horizon: u64,
    seed: u64,
    replica: u64,
    options: &SimOptions,
) -> Result<Trajectory<'m>, SimulationError> {
    let mut sim = Simulator::new(model, options, rng::stream(seed, replica))?;
    let mut states = Vec::with_capacity(horizon as usize + 1);
    states.push(sim.state().to_vec());
    for _ in 0..horizon {
        states.push(sim.step()?.to_vec());
    }
    Ok(Trajectory { model, states, seed, replica })
}

/// Simulates replicas `0..replicas` in parallel and applies `f` to each path.
///
/// The output is ordered by replica and depends only on `seed`, not on the
/// number of worker threads.
pub fn map_replicas<T, F>(
    model: &GwiModel,
    horizon: u64,
    seed: u64,
    replicas: u64,
    options: &SimOptions,
    f: F,
) -> Result<Vec<T>, SimulationError>
where
    T: Send,
    F: Fn(&Trajectory<'_>) -> T + Sync,
{
    (0..replicas)
        .into_par_iter()
        .map(|r| simulate_replica(model, horizon, seed, r, options).map(|t| f(&t)))
        .collect()
}

pub fn simulate_batch<'m>(
    model: &'m GwiModel,
    horizon: u64,
    seed: u64,
    replicas: u64,
    options: &SimOptions,
) -> Result<Vec<Trajectory<'m>>, SimulationError> {
    (0..replicas).into_par_iter().map(|r| simulate_replica(model, horizon, seed, r, options)).collect()
}

/// `M_1, ..., M_K` with `M_k = X_k - A X_{k-1} - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePath {
    pub increments: Vec<Vec<f64>>,
}

impl MartingalePath {
    /// Largest relative error of `A X_{k-1} + b + M_k` against `X_k`.
    pub fn reconstruction_residual(&self, trajectory: &Trajectory<'_>) -> f64 {
        let model = trajectory.model;
        let mut worst: f64 = 0.0;
        for (k, m) in self.increments.iter().enumerate() {
            let predicted = conditional_mean(model, &trajectory.states[k]);
            for (&x, (&mu, &mi)) in trajectory.states[k + 1].iter().zip(predicted.iter().zip(m)) {
                let x = x as f64;
                worst = worst.max((mu + mi - x).abs() / x.abs().max(1.0));
            }
        }
        worst
    }
}

/// `A x + b`.
fn conditional_mean(model: &GwiModel, x: &[u64]) -> Vec<f64> {
    let a = model.mean_matrix();
    let b = model.immigration_mean();
    (0..model.p()).map(|i| b[i] + (0..model.p()).map(|j| a[(i, j)] * x[j] as f64).sum::<f64>()).collect()
}

pub fn martingale_increments(trajectory: &Trajectory<'_>) -> MartingalePath {
    let increments = trajectory
        .states
        .windows(2)
        .map(|w| {
            let mean = conditional_mean(trajectory.model, &w[0]);
            w[1].iter().zip(mean).map(|(&x, m)| x as f64 - m).collect()
        })
        .collect();
    MartingalePath { increments }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DistributionSpec;

    fn unit(p: usize, i: usize) -> Vec<u64> {
        (0..p).map(|j| u64::from(i == j)).collect()
    }

    fn deterministic(b: Vec<u64>) -> GwiModel {
        let p = b.len();
        let offspring = (0..p).map(|i| DistributionSpec::Deterministic { value: unit(p, i) }).collect();
        GwiModel::new(offspring, DistributionSpec::Deterministic { value: b }).unwrap()
    }

    fn single_type_poisson() -> GwiModel {
        GwiModel::new(
            vec![DistributionSpec::Poisson { means: vec![1.0] }],
            DistributionSpec::Poisson { means: vec![1.0] },
        )
        .unwrap()
    }

    #[test]
    fn no_immigration_stays_at_zero() {
        let model = GwiModel::new(
            vec![DistributionSpec::Poisson { means: vec![1.0] }],
            DistributionSpec::Deterministic { value: vec![0] },
        )
        .unwrap();
        let t = simulate_trajectory(&model, 30, 7).unwrap();
        assert!(t.states.iter().all(|x| x == &[0]));
    }

    #[test]
    fn deterministic_model_grows_linearly() {
        let model = deterministic(vec![1, 2, 3]);
        let t = simulate_trajectory(&model, 12, 1).unwrap();
        for (k, x) in t.states.iter().enumerate() {
            let k = k as u64;
            assert_eq!(x, &vec![k, 2 * k, 3 * k]);
        }
        let m = martingale_increments(&t);
        assert!(m.increments.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_path() {
        let model = single_type_poisson();
        let a = simulate_trajectory(&model, 200, 99).unwrap();
        let b = simulate_trajectory(&model, 200, 99).unwrap();
        assert_eq!(a.states, b.states);
        let c = simulate_trajectory(&model, 200, 100).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn batch_is_ordered_by_replica() {
        let model = single_type_poisson();
        let batch = simulate_batch(&model, 20, 5, 16, &SimOptions::default()).unwrap();
        for (r, t) in batch.iter().enumerate() {
            let single = simulate_replica(&model, 20, 5, r as u64, &SimOptions::default()).unwrap();
            assert_eq!(t.states, single.states);
        }
    }

    #[test]
    fn martingale_arithmetic_example() {
        let model = single_type_poisson();
        let t = Trajectory { model: &model, states: vec![vec![0], vec![2], vec![1]], seed: 0, replica: 0 };
        let m = martingale_increments(&t);
        assert_eq!(m.increments, vec![vec![1.0], vec![-2.0]]);
        assert_eq!(m.reconstruction_residual(&t), 0.0);
    }

    #[test]
    fn single_type_mean_at_twenty() {
        // E X_k = k for A = 1, b = 1.
        let model = single_type_poisson();
        let finals = map_replicas(&model, 20, 2024, 100_000, &SimOptions::default(), |t| t.states[20][0] as f64).unwrap();
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 20.0).abs() < 4.0 * (var / n).sqrt(), "mean {mean}");
    }

    #[test]
    fn martingale_differences_center_on_zero() {
        let model = GwiModel::new(
            vec![
                DistributionSpec::Poisson { means: vec![1.0, 0.5] },
                DistributionSpec::Geometric { probs: vec![1.0, 0.5] },
            ],
            DistributionSpec::Bernoulli { probs: vec![0.5, 0.25] },
        )
        .unwrap();
        let k = 8;
        let draws = map_replicas(&model, k, 11, 100_000, &SimOptions::default(), |t| {
            martingale_increments(t).increments[k as usize - 1].clone()
        })
        .unwrap();
        let n = draws.len() as f64;
        for i in 0..2 {
            let mean = draws.iter().map(|m| m[i]).sum::<f64>() / n;
            let var = draws.iter().map(|m| (m[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 4.0 * (var / n).sqrt(), "coordinate {i}: {mean}");
        }
    }

    #[test]
    fn martingale_differences_center_on_zero_within_history_buckets() {
        let model = single_type_poisson();
        let k = 10usize;
        let pairs = map_replicas(&model, k as u64, 12, 100_000, &SimOptions::default(), |t| {
            (t.states[k - 1][0], martingale_increments(t).increments[k - 1][0])
        })
        .unwrap();
        for bucket in [0..8u64, 8..12, 12..u64::MAX] {
            let m: Vec<f64> = pairs.iter().filter(|(x, _)| bucket.contains(x)).map(|&(_, m)| m).collect();
            let n = m.len() as f64;
            assert!(n > 1000.0);
            let mean = m.iter().sum::<f64>() / n;
            let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 4.0 * (var / n).sqrt(), "bucket {bucket:?}: {mean}");
        }
    }

    #[test]
    fn initial_state_is_respected_and_checked() {
        let model = deterministic(vec![0, 0]);
        let opts = SimOptions { initial: Some(vec![3, 4]), ..Default::default() };
        let t = simulate_replica(&model, 3, 0, 0, &opts).unwrap();
        assert!(t.states.iter().all(|x| x == &[3, 4]));
        let bad = SimOptions { initial: Some(vec![1]), ..Default::default() };
        assert!(matches!(simulate_replica(&model, 3, 0, 0, &bad), Err(SimulationError::InitialDimension { .. })));
    }

    #[test]
    fn overflow_is_reported() {
        let model = GwiModel::new(
            vec![DistributionSpec::Deterministic { value: vec![1 << 40] }],
            DistributionSpec::Deterministic { value: vec![1] },
        )
        .unwrap();
        let err = simulate_trajectory(&model, 5, 0).unwrap_err();
        assert_eq!(err, SimulationError::PopulationOverflow { generation: 3 });
    }

    #[test]
    fn csv_layouts() {
        let model = deterministic(vec![1, 0]);
        let t = simulate_trajectory(&model, 2, 0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,X_1,X_2\n0,0,0\n1,1,0\n2,2,0\n");
        let mut long = Vec::new();
        write_long_csv(&[t.clone(), Trajectory { replica: 1, ..t }], &mut long).unwrap();
        let text = String::from_utf8(long).unwrap();
        assert!(text.starts_with("replica,k,X_1,X_2\n0,0,0,0\n"));
        assert!(text.ends_with("1,2,2,0\n"));
    }
}
