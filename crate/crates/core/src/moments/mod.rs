//! Exact moment engine: means, covariances, growth exponents and the
//! leading asymptotics of the mean for lower-unipotent offspring mean matrices.

mod binomial;
mod unipotent;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binomial::{binomial, binomial_f64};
pub use unipotent::{unipotent_power, unipotent_power_exact, UnipotentMatrix};

use crate::model::{is_lower_unipotent, GwiModel};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MomentError {
    #[error("matrix is not lower triangular with unit diagonal")]
    NotUnipotent,
    #[error("integer overflow in exact arithmetic")]
    Overflow,
    #[error("coordinate {index} out of range for {p} types")]
    IndexOutOfRange { index: usize, p: usize },
}

/// `E X_k` for `X_0 = 0`, i.e. `sum_{j<k} A^j b`.
///
/// Uses the binomial expansion of `A^j` when `A` is lower unipotent and the
/// recursion `E X_k = A E X_{k-1} + b` otherwise.
pub fn mean_vector(model: &GwiModel, k: u64) -> DVector<f64> {
    let b = model.immigration_mean();
    match UnipotentMatrix::new(model.mean_matrix()) {
        Ok(u) => (0..k).fold(DVector::zeros(model.p()), |acc, j| acc + u.power(j) * b),
        Err(_) => (0..k).fold(DVector::zeros(model.p()), |acc, _| model.mean_matrix() * acc + b),
    }
}

/// `V^(0) + sum_i x_i V^(i)`: covariance of the next generation given the current state `x`.
pub fn conditional_covariance(model: &GwiModel, state: &[f64]) -> DMatrix<f64> {
    let v = model.variances();
    state.iter().zip(&v[1..]).fold(v[0].clone(), |acc, (&x, vi)| acc + x * vi)
}

/// `E(M_k M_k^T) = V^(0) + sum_i E(X_{k-1,i}) V^(i)` for `k >= 1`.
pub fn martingale_second_moment(model: &GwiModel, k: u64) -> DMatrix<f64> {
    let prev = mean_vector(model, k.saturating_sub(1));
    conditional_covariance(model, prev.as_slice())
}

/// `Var(X_k) = sum_{j<k} A^j E(M_{k-j} M_{k-j}^T) (A^T)^j`.
pub fn variance_matrix(model: &GwiModel, k: u64) -> DMatrix<f64> {
    let p = model.p();
    let a = model.mean_matrix();
    let increments = martingale_moments_up_to(model, k);
    match UnipotentMatrix::new(a) {
        Ok(u) => (0..k).fold(DMatrix::zeros(p, p), |acc, j| {
            let aj = u.power(j);
            acc + &aj * &increments[(k - j - 1) as usize] * aj.transpose()
        }),
        Err(_) => increments.iter().fold(DMatrix::zeros(p, p), |acc, inc| a * acc * a.transpose() + inc),
    }
}

/// `E(M_m M_m^T)` for `m = 1..=k`, from the mean recursion.
fn martingale_moments_up_to(model: &GwiModel, k: u64) -> Vec<DMatrix<f64>> {
    let mut mean = DVector::zeros(model.p());
    let mut out = Vec::with_capacity(k as usize);
    for _ in 0..k {
        out.push(conditional_covariance(model, mean.as_slice()));
        mean = model.mean_matrix() * mean + model.immigration_mean();
    }
    out
}

/// One row of a moment table.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub k: u64,
    pub mean: DVector<f64>,
    pub variance: DMatrix<f64>,
}

/// Means and covariances for `k = 0..=k_max` by the one-step recursions
/// `E X_k = A E X_{k-1} + b`, `Var X_k = A Var X_{k-1} A^T + E(M_k M_k^T)`.
pub fn moment_table(model: &GwiModel, k_max: u64) -> Vec<MomentRow> {
    let p = model.p();
    let a = model.mean_matrix();
    let mut mean = DVector::zeros(p);
    let mut variance = DMatrix::zeros(p, p);
    let mut rows = vec![MomentRow { k: 0, mean: mean.clone(), variance: variance.clone() }];
    for k in 1..=k_max {
        let increment = conditional_covariance(model, mean.as_slice());
        variance = a * variance * a.transpose() + increment;
        mean = a * mean + model.immigration_mean();
        rows.push(MomentRow { k, mean: mean.clone(), variance: variance.clone() });
    }
    rows
}

/// Coefficients of `E X_{k,i} = sum_{m=1}^p gamma_m C(k, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPolynomial {
    /// `coefficients[m - 1] = gamma_m`.
    pub coefficients: Vec<f64>,
}

impl MeanPolynomial {
    pub fn evaluate(&self, k: u64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(m, &g)| if g == 0.0 { 0.0 } else { g * binomial_f64(k, m as u64 + 1) })
            .sum()
    }

    /// Largest `m` with `gamma_m > 0`, or 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.coefficients.iter().rposition(|&g| g > 0.0).map_or(0, |m| m as u32 + 1)
    }
}

/// Binomial-basis mean polynomial of coordinate `i` (0-based):
/// `gamma_m = sum_r c^{[m-1]}_{i,r} b_r`.
pub fn mean_polynomial(model: &GwiModel, i: usize) -> Result<MeanPolynomial, MomentError> {
    check_index(model.p(), i)?;
    let u = UnipotentMatrix::new(model.mean_matrix())?;
    let b = model.immigration_mean();
    let coefficients = (0..model.p()).map(|m| (u.c_power(m) * b)[i]).collect();
    Ok(MeanPolynomial { coefficients })
}

fn check_index(p: usize, i: usize) -> Result<(), MomentError> {
    if i < p {
        Ok(())
    } else {
        Err(MomentError::IndexOutOfRange { index: i, p })
    }
}

/// Growth exponents `eta_i` and first-positive-immigration indices `r_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthExponents {
    pub eta: Vec<u32>,
    /// 0-based `r_i = min{r <= i : b_r > 0}`, or 0 when no such `r` exists.
    pub first_immigrant: Vec<usize>,
}

/// `eta_i = max{m : c^{[m-1]}_{i,j} > 0 for some j}` and the `r_i` indices.
pub fn growth_exponents(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<GrowthExponents, MomentError> {
    let u = UnipotentMatrix::new(a)?;
    let p = u.p();
    let eta = (0..p)
        .map(|i| {
            (1..=p)
                .rev()
                .find(|&m| (0..p).any(|j| u.c_entry(m - 1, i, j) > 0.0))
                .expect("c^[0] = I has a positive diagonal") as u32
        })
        .collect();
    let first_immigrant = (0..p).map(|i| (0..=i).find(|&r| b[r] > 0.0).unwrap_or(0)).collect();
    Ok(GrowthExponents { eta, first_immigrant })
}

/// Dominant binomial term `coefficient * C(k, degree)` of `E X_{k,i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingTerm {
    pub degree: u32,
    pub coefficient: f64,
}

/// Leading term of `E X_{k,i}` (0-based `i`).
///
/// Equals `b_{r_i} c^{[i-r_i]}_{i,r_i} C(k, i - r_i + 1)` whenever that
/// coefficient is positive (always so when the subdiagonal of `A` is
/// positive). When it vanishes the top nonzero binomial coefficient of the
/// mean polynomial is returned instead; `(0, 0)` when `E X_{k,i} = 0`.
pub fn leading_asymptotic(model: &GwiModel, i: usize) -> Result<LeadingTerm, MomentError> {
    let poly = mean_polynomial(model, i)?;
    let exps = growth_exponents(model.mean_matrix(), model.immigration_mean())?;
    let b = model.immigration_mean();
    let r = exps.first_immigrant[i];
    let u = UnipotentMatrix::new(model.mean_matrix())?;
    let coefficient = b[r] * u.c_entry(i - r, i, r);
    if coefficient > 0.0 {
        return Ok(LeadingTerm { degree: (i - r + 1) as u32, coefficient });
    }
    let degree = poly.degree();
    let coefficient = if degree == 0 { 0.0 } else { poly.coefficients[degree as usize - 1] };
    Ok(LeadingTerm { degree, coefficient })
}

/// Exponent table for the moment growth bounds used by the harness fits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthTargets {
    /// `E X_{k,i} = O(k^eta_i)`.
    pub mean: Vec<u32>,
    /// `|E M_{k,i} M_{k,j}| = O(k^(eta_i min eta_j))`.
    pub cross: Vec<Vec<u32>>,
    /// `E M_{k,i}^4 = O(k^2)`, stated only for rows of `A` equal to a unit vector.
    pub fourth: Vec<Option<u32>>,
    /// `E sup (sum (M + b))^2 = O(n^(eta_i + 1))`.
    pub sum_sup: Vec<u32>,
    /// `E sup (sum (k - l)(M + b))^2 = O(n^(eta_i + 3))`.
    pub weighted_sum_sup: Vec<u32>,
}

pub fn moment_growth_targets(model: &GwiModel) -> Result<GrowthTargets, MomentError> {
    let a = model.mean_matrix();
    if !is_lower_unipotent(a) {
        return Err(MomentError::NotUnipotent);
    }
    let eta = growth_exponents(a, model.immigration_mean())?.eta;
    let p = eta.len();
    let fourth = (0..p)
        .map(|i| (0..p).all(|r| a[(i, r)] == if i == r { 1.0 } else { 0.0 }).then_some(2))
        .collect();
    Ok(GrowthTargets {
        cross: (0..p).map(|i| (0..p).map(|j| eta[i].min(eta[j])).collect()).collect(),
        fourth,
        sum_sup: eta.iter().map(|e| e + 1).collect(),
        weighted_sum_sup: eta.iter().map(|e| e + 3).collect(),
        mean: eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DistributionSpec;
    use proptest::prelude::*;

    fn poisson3(a21: f64, a31: f64, a32: f64, b: [f64; 3]) -> GwiModel {
        GwiModel::new(
            vec![
                DistributionSpec::Poisson { means: vec![1.0, a21, a31] },
                DistributionSpec::Poisson { means: vec![0.0, 1.0, a32] },
                DistributionSpec::Poisson { means: vec![0.0, 0.0, 1.0] },
            ],
            DistributionSpec::Poisson { means: b.to_vec() },
        )
        .unwrap()
    }

    fn deterministic3(b: [u64; 3]) -> GwiModel {
        let unit = |i: usize| (0..3).map(|j| u64::from(i == j)).collect();
        GwiModel::new(
            (0..3).map(|i| DistributionSpec::Deterministic { value: unit(i) }).collect(),
            DistributionSpec::Deterministic { value: b.to_vec() },
        )
        .unwrap()
    }

    /// Oracle: E X_k = A E X_{k-1} + b.
    fn mean_by_recursion(model: &GwiModel, k: u64) -> DVector<f64> {
        (0..k).fold(DVector::zeros(model.p()), |m, _| model.mean_matrix() * m + model.immigration_mean())
    }

    #[test]
    fn mean_examples() {
        let id = poisson3(0.0, 0.0, 0.0, [1.0, 2.0, 3.0]);
        assert_eq!(mean_vector(&id, 5).as_slice(), &[5.0, 10.0, 15.0]);
        assert_eq!(mean_vector(&id, 0).as_slice(), &[0.0, 0.0, 0.0]);
        // Hockey stick: sum_{j<4} C(j,2) = C(4,3) = 4.
        let c4 = poisson3(1.0, 0.0, 1.0, [1.0, 0.0, 0.0]);
        let m = mean_vector(&c4, 4);
        assert_eq!(m[2], 4.0);
        assert_eq!(m, mean_by_recursion(&c4, 4));
    }

    #[test]
    fn mean_polynomial_examples() {
        let id = poisson3(0.0, 0.0, 0.0, [1.0, 2.0, 3.0]);
        for i in 0..3 {
            let poly = mean_polynomial(&id, i).unwrap();
            assert_eq!(poly.coefficients, vec![(i + 1) as f64, 0.0, 0.0]);
        }
        let c4 = poisson3(1.0, 0.0, 1.0, [1.0, 0.0, 0.0]);
        let poly = mean_polynomial(&c4, 2).unwrap();
        assert_eq!(poly.coefficients, vec![0.0, 0.0, 1.0]);
        for k in 1..=10 {
            assert_eq!(poly.evaluate(k), mean_vector(&c4, k)[2]);
            assert_eq!(poly.evaluate(k), binomial_f64(k, 3));
        }
        assert!(mean_polynomial(&c4, 3).is_err());
    }

    #[test]
    fn mean_polynomial_agrees_with_mean_vector() {
        let model = poisson3(0.7, 0.3, 1.2, [0.5, 1.5, 0.25]);
        for k in 1..=50u64 {
            let m = mean_vector(&model, k);
            let r = mean_by_recursion(&model, k);
            for i in 0..3 {
                let poly = mean_polynomial(&model, i).unwrap().evaluate(k);
                assert!((poly - m[i]).abs() <= 1e-9 * m[i].abs().max(1.0));
                assert!((r[i] - m[i]).abs() <= 1e-9 * m[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn variance_of_deterministic_model_is_zero() {
        let model = deterministic3([1, 2, 3]);
        assert!(variance_matrix(&model, 7).iter().all(|&x| x == 0.0));
    }

    fn single_type_poisson() -> GwiModel {
        GwiModel::new(
            vec![DistributionSpec::Poisson { means: vec![1.0] }],
            DistributionSpec::Poisson { means: vec![1.0] },
        )
        .unwrap()
    }

    #[test]
    fn single_type_poisson_variance() {
        // Scalar oracle: E M_j^2 = 1 + E X_{j-1} = j, Var X_k = sum_j j = k(k+1)/2.
        let model = single_type_poisson();
        for k in 1..=30u64 {
            let expected = (k * (k + 1) / 2) as f64;
            assert_eq!(variance_matrix(&model, k)[(0, 0)], expected);
            assert_eq!(martingale_second_moment(&model, k)[(0, 0)], k as f64);
        }
    }

    #[test]
    fn unipotent_and_recursive_variances_agree() {
        let model = poisson3(0.7, 0.3, 1.2, [0.5, 1.5, 0.25]);
        let table = moment_table(&model, 25);
        for row in &table {
            let v = variance_matrix(&model, row.k);
            assert!((&v - &row.variance).abs().max() <= 1e-9 * v.abs().max().max(1.0));
            assert!((mean_vector(&model, row.k) - &row.mean).abs().max() <= 1e-9 * row.mean.abs().max().max(1.0));
        }
    }

    #[test]
    fn eta_table_rows() {
        let cases = [
            ((0.0, 0.0, 0.0), vec![1, 1, 1]),
            ((0.0, 0.5, 0.3), vec![1, 1, 2]),
            ((0.0, 0.5, 0.0), vec![1, 1, 2]),
            ((0.4, 0.5, 0.0), vec![1, 2, 2]),
            ((0.4, 0.0, 0.3), vec![1, 2, 3]),
            ((0.4, 0.2, 0.3), vec![1, 2, 3]),
        ];
        for ((a21, a31, a32), eta) in cases {
            let model = poisson3(a21, a31, a32, [1.0, 0.0, 0.0]);
            let exps = growth_exponents(model.mean_matrix(), model.immigration_mean()).unwrap();
            assert_eq!(exps.eta, eta);
        }
    }

    #[test]
    fn first_immigrant_indices() {
        let model = poisson3(1.0, 0.0, 1.0, [0.0, 2.0, 0.0]);
        let exps = growth_exponents(model.mean_matrix(), model.immigration_mean()).unwrap();
        assert_eq!(exps.first_immigrant, vec![0, 1, 1]);
    }

    #[test]
    fn leading_term_examples() {
        let zero = poisson3(1.0, 0.0, 1.0, [0.0, 0.0, 0.0]);
        for i in 0..3 {
            assert_eq!(leading_asymptotic(&zero, i).unwrap(), LeadingTerm { degree: 0, coefficient: 0.0 });
            assert_eq!(mean_vector(&zero, 9)[i], 0.0);
        }
        let c4 = poisson3(1.0, 0.0, 1.0, [1.0, 0.0, 0.0]);
        assert_eq!(leading_asymptotic(&c4, 2).unwrap(), LeadingTerm { degree: 3, coefficient: 1.0 });
        let ratio = mean_vector(&c4, 500)[2] / binomial_f64(500, 3);
        assert!((ratio - 1.0).abs() < 0.01);
        let single = poisson3(0.0, 0.0, 0.0, [2.5, 1.0, 1.0]);
        assert_eq!(leading_asymptotic(&single, 0).unwrap(), LeadingTerm { degree: 1, coefficient: 2.5 });
        // Case 3 has a32 = 0, so the b1 C(k,3) term vanishes and C(k,2) leads.
        let c3 = poisson3(0.5, 0.7, 0.0, [1.0, 0.0, 0.0]);
        assert_eq!(leading_asymptotic(&c3, 2).unwrap(), LeadingTerm { degree: 2, coefficient: 0.7 });
        // b1 = 0 shifts the degree down by r_i.
        let shifted = poisson3(0.5, 0.0, 2.0, [0.0, 3.0, 0.0]);
        assert_eq!(leading_asymptotic(&shifted, 2).unwrap(), LeadingTerm { degree: 2, coefficient: 6.0 });
    }

    #[test]
    fn growth_targets() {
        let c4 = poisson3(1.0, 0.0, 1.0, [1.0, 0.0, 0.0]);
        let t = moment_growth_targets(&c4).unwrap();
        assert_eq!(t.mean, vec![1, 2, 3]);
        assert_eq!(t.sum_sup[0], 2);
        assert_eq!(t.weighted_sum_sup, vec![4, 5, 6]);
        assert_eq!(t.fourth, vec![Some(2), None, None]);
        let c1 = poisson3(0.0, 0.0, 0.0, [1.0, 1.0, 1.0]);
        let t = moment_growth_targets(&c1).unwrap();
        assert_eq!(t.cross[0][0], 1);
        assert_eq!(t.fourth, vec![Some(2); 3]);
    }

    fn unipotent_nonneg(p: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..2.0], p * p).prop_map(move |v| {
            DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else if i > j { v[i * p + j] } else { 0.0 })
        })
    }

    proptest! {
        #[test]
        fn eta_inequality(a in (1usize..7).prop_flat_map(unipotent_nonneg)) {
            let p = a.nrows();
            let u = UnipotentMatrix::new(&a).unwrap();
            let eta = growth_exponents(&a, &DVector::from_element(p, 1.0)).unwrap().eta;
            for m in 0..p {
                for i in 0..p {
                    for j in 0..p {
                        if u.c_entry(m, i, j) > 0.0 {
                            prop_assert!(eta[i] >= eta[j] + m as u32);
                        }
                    }
                }
            }
        }

        #[test]
        fn leading_term_matches_product_formula_with_positive_subdiagonal(
            sub in proptest::collection::vec(0.1f64..2.0, 5),
            extra in proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..2.0], 36),
            b in proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..3.0], 6),
        ) {
            let p = 6;
            let a = DMatrix::from_fn(p, p, |i, j| {
                if i == j { 1.0 } else if i == j + 1 { sub[j] } else if i > j { extra[i * p + j] } else { 0.0 }
            });
            let offspring = (0..p).map(|j| DistributionSpec::Poisson { means: a.column(j).iter().cloned().collect() }).collect();
            let model = GwiModel::new(offspring, DistributionSpec::Poisson { means: b.clone() }).unwrap();
            for i in 0..p {
                let term = leading_asymptotic(&model, i).unwrap();
                match (0..=i).find(|&r| b[r] > 0.0) {
                    None => prop_assert_eq!(term.degree, 0),
                    Some(r) => {
                        let prod: f64 = (r..i).map(|q| sub[q]).product();
                        prop_assert_eq!(term.degree as usize, i - r + 1);
                        prop_assert!((term.coefficient - b[r] * prod).abs() <= 1e-12 * (b[r] * prod).max(1.0));
                        prop_assert_eq!(mean_polynomial(&model, i).unwrap().degree(), term.degree);
                    }
                }
            }
        }
    }
}
