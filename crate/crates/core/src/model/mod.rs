//! GWI model definitions and the structural analysis of offspring mean matrices.

mod distribution;
mod structure;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distribution::{DistributionSpec, PopulationOverflow, SumMode, TABLE_MASS_TOLERANCE};
pub use structure::{
    accessible, classify_criticality, detect_case, is_lower_unipotent, is_strongly_critical,
    reducible_normal_form, spectral_radius, Case, CaseId, Criticality, NormalForm,
    CRITICALITY_TOLERANCE, ZERO_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("joint table weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix has a negative or non-finite entry at ({0}, {1})")]
    NegativeEntry(usize, usize),
    #[error("type index {index} out of range for {p} types")]
    IndexOutOfRange { index: usize, p: usize },
    #[error("structural zero violated: a[{row}][{col}] = 0 but the law can put mass on coordinate {row}")]
    StructuralZero { row: usize, col: usize },
    #[error("matrix is not a 3x3 lower-unipotent matrix under any relabelling of types")]
    NotUnipotent,
    #[error("model file: {0}")]
    Io(String),
}

/// On-disk model description: `{"p": 3, "offspring": [...], "immigration": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub p: usize,
    pub offspring: Vec<DistributionSpec>,
    pub immigration: DistributionSpec,
}

/// A p-type Galton-Watson process with immigration together with its exact
/// first and second moment parameters.
///
/// Column `i` of `mean_matrix` is the offspring mean of a type-`i` individual,
/// `variances[0]` is the immigration covariance and `variances[i]` the
/// covariance of a type-`i` (1-based) offspring vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GwiModel {
    offspring: Vec<DistributionSpec>,
    immigration: DistributionSpec,
    mean_matrix: DMatrix<f64>,
    immigration_mean: DVector<f64>,
    variances: Vec<DMatrix<f64>>,
}

impl GwiModel {
    /// Builds a model and derives A, b and V^(0..p) in closed form.
    pub fn new(offspring: Vec<DistributionSpec>, immigration: DistributionSpec) -> Result<Self, ModelError> {
        let p = offspring.len();
        if p == 0 {
            return Err(ModelError::DimensionMismatch("a model needs at least one type".into()));
        }
        for (i, spec) in offspring.iter().enumerate() {
            spec.validate()?;
            if spec.dim() != p {
                return Err(ModelError::DimensionMismatch(format!(
                    "offspring law of type {} has dimension {}, expected {p}",
                    i + 1,
                    spec.dim()
                )));
            }
        }
        immigration.validate()?;
        if immigration.dim() != p {
            return Err(ModelError::DimensionMismatch(format!(
                "immigration law has dimension {}, expected {p}",
                immigration.dim()
            )));
        }

        let mut mean_matrix = DMatrix::zeros(p, p);
        for (j, spec) in offspring.iter().enumerate() {
            mean_matrix.set_column(j, &spec.mean());
        }
        // a[i][j] = 0 must mean type j never begets type i.
        for (j, spec) in offspring.iter().enumerate() {
            for i in 0..p {
                if mean_matrix[(i, j)] == 0.0 && spec.can_be_positive(i) {
                    return Err(ModelError::StructuralZero { row: i, col: j });
                }
            }
        }
        let mut variances = Vec::with_capacity(p + 1);
        variances.push(immigration.covariance());
        variances.extend(offspring.iter().map(DistributionSpec::covariance));
        let immigration_mean = immigration.mean();

        Ok(GwiModel { offspring, immigration, mean_matrix, immigration_mean, variances })
    }

    pub fn from_file_spec(file: ModelFile) -> Result<Self, ModelError> {
        if file.offspring.len() != file.p {
            return Err(ModelError::DimensionMismatch(format!(
                "p = {} but {} offspring laws given",
                file.p,
                file.offspring.len()
            )));
        }
        GwiModel::new(file.offspring, file.immigration)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Io(e.to_string()))?;
        GwiModel::from_file_spec(file)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        GwiModel::from_json(&text)
    }

    pub fn to_file_spec(&self) -> ModelFile {
        ModelFile { p: self.p(), offspring: self.offspring.clone(), immigration: self.immigration.clone() }
    }

    /// Number of types.
    pub fn p(&self) -> usize {
        self.offspring.len()
    }

    pub fn offspring(&self) -> &[DistributionSpec] {
        &self.offspring
    }

    pub fn immigration(&self) -> &DistributionSpec {
        &self.immigration
    }

    /// Offspring mean matrix A.
    pub fn mean_matrix(&self) -> &DMatrix<f64> {
        &self.mean_matrix
    }

    /// Immigration mean vector b.
    pub fn immigration_mean(&self) -> &DVector<f64> {
        &self.immigration_mean
    }

    /// V^(0) (immigration) followed by V^(1..p) (offspring of each type).
    pub fn variances(&self) -> &[DMatrix<f64>] {
        &self.variances
    }

    /// Relabels types so that new type `i` is old type `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self, ModelError> {
        let p = self.p();
        let mut seen = vec![false; p];
        if order.len() != p || order.iter().any(|&o| o >= p || std::mem::replace(&mut seen[o], true)) {
            return Err(ModelError::InvalidParameter(format!("{order:?} is not a permutation of 0..{p}")));
        }
        let offspring = order.iter().map(|&o| self.offspring[o].permute_coords(order)).collect();
        GwiModel::new(offspring, self.immigration.permute_coords(order))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(p: usize, i: usize) -> Vec<u64> {
        (0..p).map(|j| u64::from(i == j)).collect()
    }

    #[test]
    fn deterministic_self_replacement_gives_identity() {
        let offspring = (0..3).map(|i| DistributionSpec::Deterministic { value: unit(3, i) }).collect();
        let model = GwiModel::new(offspring, DistributionSpec::Deterministic { value: vec![1, 2, 3] }).unwrap();
        assert_eq!(model.mean_matrix(), &DMatrix::identity(3, 3));
        assert_eq!(model.immigration_mean().as_slice(), &[1.0, 2.0, 3.0]);
        assert!(model.variances().iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn poisson_model_parameters() {
        let offspring = vec![
            DistributionSpec::Poisson { means: vec![1.0, 0.5, 0.0] },
            DistributionSpec::Poisson { means: vec![0.0, 1.0, 0.0] },
            DistributionSpec::Poisson { means: vec![0.0, 0.0, 1.0] },
        ];
        let model = GwiModel::new(offspring, DistributionSpec::Poisson { means: vec![1.0; 3] }).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(model.mean_matrix(), &a);
        assert_eq!(model.immigration_mean().as_slice(), &[1.0, 1.0, 1.0]);
        let v1 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 0.0]));
        assert_eq!(model.variances()[1], v1);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let offspring = vec![DistributionSpec::Poisson { means: vec![1.0, 0.0] }];
        let err = GwiModel::new(offspring, DistributionSpec::Poisson { means: vec![1.0] }).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch(_)));
    }

    #[test]
    fn json_round_trip_and_p_check() {
        let text = r#"{"p":2,"offspring":[
            {"kind":"poisson","params":{"means":[1.0,0.3]}},
            {"kind":"deterministic","params":{"value":[0,1]}}],
            "immigration":{"kind":"bernoulli","params":{"probs":[0.5,0.5]}}}"#;
        let model = GwiModel::from_json(text).unwrap();
        assert_eq!(model.mean_matrix()[(1, 0)], 0.3);
        let again = GwiModel::from_file_spec(model.to_file_spec()).unwrap();
        assert_eq!(again, model);
        let wrong = text.replace("\"p\":2", "\"p\":3");
        assert!(GwiModel::from_json(&wrong).is_err());
    }

    #[test]
    fn permuting_relabels_types() {
        let offspring = vec![
            DistributionSpec::Poisson { means: vec![1.0, 0.0, 0.0] },
            DistributionSpec::Poisson { means: vec![0.0, 1.0, 0.5] },
            DistributionSpec::Poisson { means: vec![0.0, 0.0, 1.0] },
        ];
        let model = GwiModel::new(offspring, DistributionSpec::Poisson { means: vec![1.0, 2.0, 3.0] }).unwrap();
        let swapped = model.permuted(&[1, 0, 2]).unwrap();
        assert_eq!(swapped.mean_matrix()[(2, 0)], 0.5);
        assert_eq!(swapped.mean_matrix()[(2, 1)], 0.0);
        assert_eq!(swapped.immigration_mean().as_slice(), &[2.0, 1.0, 3.0]);
        assert!(model.permuted(&[0, 0, 1]).is_err());
    }
}
