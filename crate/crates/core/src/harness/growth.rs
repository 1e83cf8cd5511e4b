//! Log-log growth-rate fits of martingale moment quantities.

use serde::{Deserialize, Serialize};

use super::stats::{mean, ols_slope};
use super::HarnessError;
use crate::model::GwiModel;
use crate::moments::moment_growth_targets;
use crate::simulate::{map_replicas, martingale_increments, SimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthQuantity {
    /// `E M_{k,i}^4` against `k`.
    FourthMoment,
    /// `E sup_{k <= n} (sum_{l <= k} (M_{l,i} + b_i))^2` against `n`.
    SupSumSq,
    /// `E sup_{k <= n} (sum_{l <= k} (k - l)(M_{l,i} + b_i))^2` against `n`.
    WeightedSupSumSq,
}

impl std::str::FromStr for GrowthQuantity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fourth_moment" => Ok(GrowthQuantity::FourthMoment),
            "sup_sum_sq" => Ok(GrowthQuantity::SupSumSq),
            "weighted_sup_sum_sq" => Ok(GrowthQuantity::WeightedSupSumSq),
            other => Err(format!("unknown growth quantity {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub quantity: GrowthQuantity,
    /// 0-based coordinate.
    pub coordinate: usize,
    pub n_list: Vec<u64>,
    pub estimates: Vec<f64>,
    /// Least-squares slope of `ln estimate` on `ln n`; `None` when degenerate.
    pub slope: Option<f64>,
    /// Growth exponent bound; `None` when no bound applies to this coordinate.
    pub target: Option<u32>,
    /// Some estimate is not positive, so no slope is fitted.
    pub degenerate: bool,
}

/// Monte Carlo estimates of `quantity` for coordinate `coordinate` at every
/// `n` in `n_list`, from `replicas` paths simulated to `max(n_list)`.
pub fn growth_fit(
    model: &GwiModel,
    quantity: GrowthQuantity,
    coordinate: usize,
    n_list: &[u64],
    replicas: u64,
    seed: u64,
) -> Result<GrowthFit, HarnessError> {
    if coordinate >= model.p() {
        return Err(HarnessError::InvalidConfig(format!("coordinate {} out of range", coordinate + 1)));
    }
    if n_list.len() < 2 || n_list.contains(&0) || replicas == 0 {
        return Err(HarnessError::InvalidConfig("need at least two positive n and one replica".into()));
    }
    let targets = moment_growth_targets(model)?;
    let target = match quantity {
        GrowthQuantity::FourthMoment => targets.fourth[coordinate],
        GrowthQuantity::SupSumSq => Some(targets.sum_sup[coordinate]),
        GrowthQuantity::WeightedSupSumSq => Some(targets.weighted_sum_sup[coordinate]),
    };
    let horizon = *n_list.iter().max().expect("nonempty");
    let b = model.immigration_mean()[coordinate];
    let per_replica: Vec<Vec<f64>> = map_replicas(model, horizon, seed, replicas, &SimOptions::default(), |t| {
        let m = martingale_increments(t);
        match quantity {
            GrowthQuantity::FourthMoment => n_list.iter().map(|&k| m.increments[k as usize - 1][coordinate].powi(4)).collect(),
            GrowthQuantity::SupSumSq | GrowthQuantity::WeightedSupSumSq => {
                // Running sup of the squared (weighted) partial sums, read off at each n.
                let mut sups = vec![0.0; horizon as usize + 1];
                let (mut plain, mut weighted, mut best) = (0.0f64, 0.0f64, 0.0f64);
                for (k, mk) in m.increments.iter().enumerate() {
                    weighted += plain;
                    plain += mk[coordinate] + b;
                    let v = if quantity == GrowthQuantity::SupSumSq { plain } else { weighted };
                    best = best.max(v * v);
                    sups[k + 1] = best;
                }
                n_list.iter().map(|&n| sups[n as usize]).collect()
            }
        }
    })?;
    let estimates: Vec<f64> = (0..n_list.len())
        .map(|j| mean(&per_replica.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let degenerate = estimates.iter().any(|&e| !(e > 0.0));
    let slope = (!degenerate).then(|| {
        let x: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = estimates.iter().map(|e| e.ln()).collect();
        ols_slope(&x, &y)
    });
    Ok(GrowthFit { quantity, coordinate, n_list: n_list.to_vec(), estimates, slope, target, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DistributionSpec;

    #[test]
    fn deterministic_model_is_degenerate() {
        let model = GwiModel::new(
            vec![DistributionSpec::Deterministic { value: vec![1] }],
            DistributionSpec::Deterministic { value: vec![0] },
        )
        .unwrap();
        for q in [GrowthQuantity::FourthMoment, GrowthQuantity::SupSumSq, GrowthQuantity::WeightedSupSumSq] {
            let fit = growth_fit(&model, q, 0, &[4, 8, 16], 10, 0).unwrap();
            assert!(fit.degenerate);
            assert_eq!(fit.slope, None);
            assert!(fit.estimates.iter().all(|&e| e == 0.0));
        }
    }

    #[test]
    fn deterministic_immigration_gives_exact_power_laws() {
        // Sums are k b and k(k-1)/2 b exactly, so the sups are n^2 b^2 and (n(n-1)/2)^2 b^2.
        let model = GwiModel::new(
            vec![DistributionSpec::Deterministic { value: vec![1] }],
            DistributionSpec::Deterministic { value: vec![2] },
        )
        .unwrap();
        let fit = growth_fit(&model, GrowthQuantity::SupSumSq, 0, &[4, 8, 16], 3, 0).unwrap();
        assert_eq!(fit.estimates, vec![64.0, 256.0, 1024.0]);
        assert!((fit.slope.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fit.target, Some(2));
        let w = growth_fit(&model, GrowthQuantity::WeightedSupSumSq, 0, &[4, 8], 3, 0).unwrap();
        assert_eq!(w.estimates, vec![144.0, 3136.0]);
        assert_eq!(w.target, Some(4));
    }

    #[test]
    fn rejects_bad_arguments() {
        let model = GwiModel::new(
            vec![DistributionSpec::Poisson { means: vec![1.0] }],
            DistributionSpec::Poisson { means: vec![1.0] },
        )
        .unwrap();
        assert!(growth_fit(&model, GrowthQuantity::SupSumSq, 1, &[4, 8], 3, 0).is_err());
        assert!(growth_fit(&model, GrowthQuantity::SupSumSq, 0, &[4], 3, 0).is_err());
        assert_eq!("sup_sum_sq".parse::<GrowthQuantity>(), Ok(GrowthQuantity::SupSumSq));
    }
}
