//! Three-type decomposition of `X_k` into plain, linearly weighted and
//! binomially weighted sums of `M_l + b`.

use super::{martingale_increments, SimulationError, Trajectory};
use crate::model::is_lower_unipotent;

/// Largest relative reconstruction residual accepted.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-9;

/// Components indexed by `k = 0..=K`. With `y_l = M_l + b`:
///
/// * `x1_1 = sum y_{l,1}`, `x2_2 = sum y_{l,2}`, `x4_3 = sum y_{l,3}`
/// * `x1_2 = x2_3 = sum (k - l) y_{l,1}`, `x3_3 = sum (k - l) y_{l,2}`
/// * `x1_3 = sum C(k - l, 2) y_{l,1}`
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionComponents {
    pub x1_1: Vec<f64>,
    pub x1_2: Vec<f64>,
    pub x2_2: Vec<f64>,
    pub x1_3: Vec<f64>,
    pub x2_3: Vec<f64>,
    pub x3_3: Vec<f64>,
    pub x4_3: Vec<f64>,
}

/// Running plain, linear and binomial weighted sums of one input sequence.
struct WeightedSums {
    plain: Vec<f64>,
    linear: Vec<f64>,
    binomial: Vec<f64>,
}

impl WeightedSums {
    fn new(y: impl Iterator<Item = f64>) -> Self {
        let mut out = WeightedSums { plain: vec![0.0], linear: vec![0.0], binomial: vec![0.0] };
        for v in y {
            let (s, w, b) = (*out.plain.last().unwrap(), *out.linear.last().unwrap(), *out.binomial.last().unwrap());
            // C(k-l, 2) - C(k-1-l, 2) = k-1-l and (k-l) - (k-1-l) = 1.
            out.binomial.push(b + w);
            out.linear.push(w + s);
            out.plain.push(s + v);
        }
        out
    }
}

pub fn decomposition_components(trajectory: &Trajectory<'_>) -> Result<DecompositionComponents, SimulationError> {
    let model = trajectory.model;
    let a = model.mean_matrix();
    if model.p() != 3 || !is_lower_unipotent(a) {
        return Err(SimulationError::NotThreeTypeUnipotent);
    }
    if trajectory.states[0].iter().any(|&x| x != 0) {
        return Err(SimulationError::NonzeroInitialState);
    }
    let b = model.immigration_mean();
    let m = martingale_increments(trajectory);
    let sums: Vec<WeightedSums> =
        (0..3).map(|i| WeightedSums::new(m.increments.iter().map(|mk| mk[i] + b[i]))).collect();
    let [s1, s2, s3] = <[WeightedSums; 3]>::try_from(sums).ok().expect("three coordinates");
    let out = DecompositionComponents {
        x1_1: s1.plain,
        x2_3: s1.linear.clone(),
        x1_2: s1.linear,
        x1_3: s1.binomial,
        x2_2: s2.plain,
        x3_3: s2.linear,
        x4_3: s3.plain,
    };

    let (a21, a31, a32) = (a[(1, 0)], a[(2, 0)], a[(2, 1)]);
    for (k, x) in trajectory.states.iter().enumerate() {
        let terms: [&[f64]; 3] = [
            &[out.x1_1[k]],
            &[a21 * out.x1_2[k], out.x2_2[k]],
            &[a32 * a21 * out.x1_3[k], a31 * out.x2_3[k], a32 * out.x3_3[k], out.x4_3[k]],
        ];
        for (i, parts) in terms.iter().enumerate() {
            let total: f64 = parts.iter().sum();
            let scale = parts.iter().map(|v| v.abs()).sum::<f64>().max(x[i] as f64).max(1.0);
            let residual = (total - x[i] as f64).abs() / scale;
            if residual > RECONSTRUCTION_TOLERANCE {
                return Err(SimulationError::Reconstruction { generation: k as u64, coordinate: i + 1, residual });
            }
        }
    }
    Ok(out)
}
