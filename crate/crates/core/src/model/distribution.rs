//! Laws over nonnegative integer vectors: offspring of one type, or immigration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Tolerance on the total mass of a [`DistributionSpec::JointTable`].
pub const TABLE_MASS_TOLERANCE: f64 = 1e-12;

/// Parametric law of a random vector in `Z_+^p`.
///
/// Parametric kinds have independent coordinates. Correlated vectors are
/// expressed with `JointTable`.
///
/// JSON form: `{"kind": "poisson", "params": {"means": [1.0, 0.5, 0.0]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum DistributionSpec {
    Deterministic { value: Vec<u64> },
    Poisson { means: Vec<f64> },
    Bernoulli { probs: Vec<f64> },
    /// Per coordinate, number of failures before the first success: P(k) = (1-p)^k p.
    Geometric { probs: Vec<f64> },
    JointTable { support: Vec<Vec<u64>>, probs: Vec<f64> },
}

/// How sums of i.i.d. draws are produced.
///
/// `Aggregated` draws the sum from its exact law (Poisson with scaled mean,
/// Binomial, negative binomial, multinomial counts). `Individual` draws one
/// vector per individual and adds them up. Both give the same distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumMode {
    #[default]
    Aggregated,
    Individual,
}

/// A coordinate exceeded `i64::MAX` while accumulating a generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PopulationOverflow;

pub(crate) const POPULATION_LIMIT: u64 = i64::MAX as u64;

impl DistributionSpec {
    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::Deterministic { value } => value.len(),
            DistributionSpec::Poisson { means } => means.len(),
            DistributionSpec::Bernoulli { probs } | DistributionSpec::Geometric { probs } => {
                probs.len()
            }
            DistributionSpec::JointTable { support, .. } => {
                support.first().map(Vec::len).unwrap_or(0)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidParameter(msg));
        match self {
            DistributionSpec::Deterministic { .. } => Ok(()),
            DistributionSpec::Poisson { means } => {
                for (i, &m) in means.iter().enumerate() {
                    if !(m.is_finite() && m >= 0.0) {
                        return bad(format!("poisson mean {i} = {m} is not a finite nonnegative number"));
                    }
                }
                Ok(())
            }
            DistributionSpec::Bernoulli { probs } => {
                for (i, &q) in probs.iter().enumerate() {
                    if !(0.0..=1.0).contains(&q) {
                        return bad(format!("bernoulli probability {i} = {q} outside [0, 1]"));
                    }
                }
                Ok(())
            }
            DistributionSpec::Geometric { probs } => {
                for (i, &q) in probs.iter().enumerate() {
                    if !(q > 0.0 && q <= 1.0) {
                        return bad(format!("geometric success probability {i} = {q} outside (0, 1]"));
                    }
                }
                Ok(())
            }
            DistributionSpec::JointTable { support, probs } => {
                if support.is_empty() {
                    return bad("joint table has an empty support".into());
                }
                if support.len() != probs.len() {
                    return bad(format!(
                        "joint table has {} support points but {} probabilities",
                        support.len(),
                        probs.len()
                    ));
                }
                let dim = support[0].len();
                if support.iter().any(|s| s.len() != dim) {
                    return Err(ModelError::DimensionMismatch(
                        "joint table support vectors have differing lengths".into(),
                    ));
                }
                if let Some(q) = probs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
                    return bad(format!("joint table probability {q} outside [0, 1]"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > TABLE_MASS_TOLERANCE {
                    return Err(ModelError::WeightsNotNormalized(total));
                }
                Ok(())
            }
        }
    }

    /// Closed-form mean vector.
    pub fn mean(&self) -> DVector<f64> {
        match self {
            DistributionSpec::Deterministic { value } => {
                DVector::from_iterator(value.len(), value.iter().map(|&v| v as f64))
            }
            DistributionSpec::Poisson { means } => DVector::from_column_slice(means),
            DistributionSpec::Bernoulli { probs } => DVector::from_column_slice(probs),
            DistributionSpec::Geometric { probs } => {
                DVector::from_iterator(probs.len(), probs.iter().map(|&q| (1.0 - q) / q))
            }
            DistributionSpec::JointTable { support, probs } => {
                let mut mean = DVector::zeros(self.dim());
                for (s, &w) in support.iter().zip(probs) {
                    for (m, &x) in mean.iter_mut().zip(s) {
                        *m += w * x as f64;
                    }
                }
                mean
            }
        }
    }

    /// Closed-form covariance matrix.
    pub fn covariance(&self) -> DMatrix<f64> {
        let diag = |v: Vec<f64>| DMatrix::from_diagonal(&DVector::from_vec(v));
        match self {
            DistributionSpec::Deterministic { value } => DMatrix::zeros(value.len(), value.len()),
            DistributionSpec::Poisson { means } => diag(means.clone()),
            DistributionSpec::Bernoulli { probs } => diag(probs.iter().map(|q| q * (1.0 - q)).collect()),
            DistributionSpec::Geometric { probs } => {
                diag(probs.iter().map(|q| (1.0 - q) / (q * q)).collect())
            }
            DistributionSpec::JointTable { support, probs } => {
                let mean = self.mean();
                let p = self.dim();
                let mut cov = DMatrix::zeros(p, p);
                for (s, &w) in support.iter().zip(probs) {
                    let d = DVector::from_iterator(p, s.iter().zip(mean.iter()).map(|(&x, m)| x as f64 - m));
                    cov += w * &d * d.transpose();
                }
                cov
            }
        }
    }

    /// Whether coordinate `i` can take a positive value with positive probability.
    pub fn can_be_positive(&self, i: usize) -> bool {
        match self {
            DistributionSpec::Deterministic { value } => value[i] > 0,
            DistributionSpec::Poisson { means } => means[i] > 0.0,
            DistributionSpec::Bernoulli { probs } => probs[i] > 0.0,
            DistributionSpec::Geometric { probs } => probs[i] < 1.0,
            DistributionSpec::JointTable { support, probs } => {
                support.iter().zip(probs).any(|(s, &w)| w > 0.0 && s[i] > 0)
            }
        }
    }

    /// Reorders coordinates so that new coordinate `j` is old coordinate `perm[j]`.
    pub fn permute_coords(&self, perm: &[usize]) -> DistributionSpec {
        fn pick<T: Copy>(v: &[T], perm: &[usize]) -> Vec<T> {
            perm.iter().map(|&j| v[j]).collect()
        }
        match self {
            DistributionSpec::Deterministic { value } => {
                DistributionSpec::Deterministic { value: pick(value, perm) }
            }
            DistributionSpec::Poisson { means } => DistributionSpec::Poisson { means: pick(means, perm) },
            DistributionSpec::Bernoulli { probs } => DistributionSpec::Bernoulli { probs: pick(probs, perm) },
            DistributionSpec::Geometric { probs } => DistributionSpec::Geometric { probs: pick(probs, perm) },
            DistributionSpec::JointTable { support, probs } => DistributionSpec::JointTable {
                support: support.iter().map(|s| pick(s, perm)).collect(),
                probs: probs.clone(),
            },
        }
    }

    /// One draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        let mut out = vec![0; self.dim()];
        self.add_one(rng, &mut out).expect("single draw cannot overflow");
        out
    }

    /// Adds the sum of `count` i.i.d. draws to `out`.
    pub fn add_sum<R: Rng + ?Sized>(
        &self,
        count: u64,
        mode: SumMode,
        rng: &mut R,
        out: &mut [u64],
    ) -> Result<(), PopulationOverflow> {
        if count == 0 {
            return Ok(());
        }
        match mode {
            SumMode::Individual => {
                for _ in 0..count {
                    self.add_one(rng, out)?;
                }
                Ok(())
            }
            SumMode::Aggregated => self.add_aggregated(count, rng, out),
        }
    }

    fn add_one<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u64]) -> Result<(), PopulationOverflow> {
        match self {
            DistributionSpec::Deterministic { value } => {
                for (o, &v) in out.iter_mut().zip(value) {
                    accumulate(o, v)?;
                }
            }
            DistributionSpec::Poisson { means } => {
                for (o, &m) in out.iter_mut().zip(means) {
                    accumulate(o, poisson(m, rng))?;
                }
            }
            DistributionSpec::Bernoulli { probs } => {
                for (o, &q) in out.iter_mut().zip(probs) {
                    accumulate(o, u64::from(rng.random_bool(q)))?;
                }
            }
            DistributionSpec::Geometric { probs } => {
                for (o, &q) in out.iter_mut().zip(probs) {
                    let x = if q >= 1.0 { 0 } else { Geometric::new(q).expect("validated").sample(rng) };
                    accumulate(o, x)?;
                }
            }
            DistributionSpec::JointTable { support, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = support.len() - 1;
                for (idx, &w) in probs.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        chosen = idx;
                        break;
                    }
                }
                for (o, &v) in out.iter_mut().zip(&support[chosen]) {
                    accumulate(o, v)?;
                }
            }
        }
        Ok(())
    }

    fn add_aggregated<R: Rng + ?Sized>(
        &self,
        count: u64,
        rng: &mut R,
        out: &mut [u64],
    ) -> Result<(), PopulationOverflow> {
        match self {
            DistributionSpec::Deterministic { value } => {
                for (o, &v) in out.iter_mut().zip(value) {
                    accumulate(o, v.checked_mul(count).ok_or(PopulationOverflow)?)?;
                }
            }
            DistributionSpec::Poisson { means } => {
                for (o, &m) in out.iter_mut().zip(means) {
                    accumulate(o, poisson(m * count as f64, rng))?;
                }
            }
            DistributionSpec::Bernoulli { probs } => {
                for (o, &q) in out.iter_mut().zip(probs) {
                    accumulate(o, binomial(count, q, rng))?;
                }
            }
            DistributionSpec::Geometric { probs } => {
                // Negative binomial as a gamma-mixed Poisson.
                for (o, &q) in out.iter_mut().zip(probs) {
                    if q >= 1.0 {
                        continue;
                    }
                    let rate = Gamma::new(count as f64, (1.0 - q) / q).expect("validated").sample(rng);
                    accumulate(o, poisson(rate, rng))?;
                }
            }
            DistributionSpec::JointTable { support, probs } => {
                // Multinomial counts via conditional binomials.
                let mut remaining = count;
                let mut mass_left = 1.0;
                for (s, &w) in support.iter().zip(probs) {
                    if remaining == 0 {
                        break;
                    }
                    let hits = if mass_left <= w {
                        remaining
                    } else {
                        binomial(remaining, (w / mass_left).clamp(0.0, 1.0), rng)
                    };
                    remaining -= hits;
                    mass_left -= w;
                    if hits > 0 {
                        for (o, &v) in out.iter_mut().zip(s) {
                            accumulate(o, v.checked_mul(hits).ok_or(PopulationOverflow)?)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut u64, add: u64) -> Result<(), PopulationOverflow> {
    match slot.checked_add(add) {
        Some(v) if v <= POPULATION_LIMIT => {
            *slot = v;
            Ok(())
        }
        _ => Err(PopulationOverflow),
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let x: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    x as u64
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn table() -> DistributionSpec {
        DistributionSpec::JointTable { support: vec![vec![0, 0], vec![2, 1]], probs: vec![0.5, 0.5] }
    }

    #[test]
    fn joint_table_moments_match_pmf_summation() {
        // Direct enumeration: E = 0.5*(0,0) + 0.5*(2,1); E[xy] = 0.5*2*1 = 1.
        let pmf = [(0.5, [0.0, 0.0]), (0.5, [2.0, 1.0])];
        let m: Vec<f64> = (0..2).map(|i| pmf.iter().map(|(w, x)| w * x[i]).sum()).collect();
        let second = |i: usize, j: usize| pmf.iter().map(|(w, x)| w * x[i] * x[j]).sum::<f64>();
        let spec = table();
        assert_eq!(spec.mean().as_slice(), &m[..]);
        let cov = spec.covariance();
        for i in 0..2 {
            for j in 0..2 {
                assert!((cov[(i, j)] - (second(i, j) - m[i] * m[j])).abs() < 1e-15);
            }
        }
        assert_eq!(m, vec![1.0, 0.5]);
        assert!((cov[(0, 1)] - 0.5).abs() < 1e-15 && (cov[(1, 1)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DistributionSpec::Bernoulli { probs: vec![1.5] }.validate().is_err());
        assert!(DistributionSpec::Geometric { probs: vec![0.0] }.validate().is_err());
        assert!(DistributionSpec::Poisson { means: vec![f64::NAN] }.validate().is_err());
        let bad = DistributionSpec::JointTable { support: vec![vec![0], vec![1]], probs: vec![0.5, 0.4] };
        assert!(matches!(bad.validate(), Err(ModelError::WeightsNotNormalized(_))));
        let ragged = DistributionSpec::JointTable { support: vec![vec![0], vec![1, 2]], probs: vec![0.5, 0.5] };
        assert!(matches!(ragged.validate(), Err(ModelError::DimensionMismatch(_))));
    }

    #[test]
    fn json_shape() {
        let spec: DistributionSpec =
            serde_json::from_str(r#"{"kind":"poisson","params":{"means":[1.0,0.5]}}"#).unwrap();
        assert_eq!(spec, DistributionSpec::Poisson { means: vec![1.0, 0.5] });
        let text = serde_json::to_string(&table()).unwrap();
        assert!(text.starts_with(r#"{"kind":"joint_table","params":"#));
    }

    fn check_sample_mean(spec: &DistributionSpec, draws: usize, seed: u64) {
        let mut rng = rng::stream(seed, 0);
        let p = spec.dim();
        let mut sum = vec![0.0; p];
        for _ in 0..draws {
            for (s, x) in sum.iter_mut().zip(spec.sample(&mut rng)) {
                *s += x as f64;
            }
        }
        let mean = spec.mean();
        let var = spec.covariance();
        for i in 0..p {
            let se = (var[(i, i)] / draws as f64).sqrt();
            let got = sum[i] / draws as f64;
            assert!(
                (got - mean[i]).abs() <= 4.0 * se + 1e-12,
                "{spec:?} coord {i}: sample mean {got} vs {}",
                mean[i]
            );
        }
    }

    #[test]
    fn sample_means_within_four_standard_errors() {
        let specs = [
            DistributionSpec::Deterministic { value: vec![3, 0] },
            DistributionSpec::Poisson { means: vec![1.0, 0.3, 0.0] },
            DistributionSpec::Bernoulli { probs: vec![0.2, 0.9] },
            DistributionSpec::Geometric { probs: vec![0.5, 0.25, 1.0] },
            table(),
        ];
        for (i, spec) in specs.iter().enumerate() {
            check_sample_mean(spec, 1_000_000, 100 + i as u64);
        }
    }

    #[test]
    fn aggregated_and_individual_sums_agree_in_mean() {
        let specs = [
            DistributionSpec::Poisson { means: vec![1.0, 0.5] },
            DistributionSpec::Bernoulli { probs: vec![0.3, 0.7] },
            DistributionSpec::Geometric { probs: vec![0.5, 0.8] },
            table(),
        ];
        let count = 25;
        let reps = 20_000;
        for spec in &specs {
            let mean = spec.mean();
            let var = spec.covariance();
            for mode in [SumMode::Aggregated, SumMode::Individual] {
                let mut rng = rng::stream(42, mode as u64);
                let mut acc = vec![0.0; spec.dim()];
                for _ in 0..reps {
                    let mut out = vec![0; spec.dim()];
                    spec.add_sum(count, mode, &mut rng, &mut out).unwrap();
                    for (a, x) in acc.iter_mut().zip(out) {
                        *a += x as f64;
                    }
                }
                for i in 0..spec.dim() {
                    let target = count as f64 * mean[i];
                    let se = (count as f64 * var[(i, i)] / reps as f64).sqrt();
                    let got = acc[i] / reps as f64;
                    assert!((got - target).abs() <= 4.0 * se + 1e-12, "{spec:?} {mode:?} coord {i}");
                }
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        let spec = DistributionSpec::Deterministic { value: vec![u64::MAX / 2] };
        let mut out = vec![0];
        let mut rng = rng::stream(0, 0);
        assert_eq!(spec.add_sum(4, SumMode::Aggregated, &mut rng, &mut out), Err(PopulationOverflow));
    }
}
