use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Assignment of estimated factor columns to population factors.
///
/// `permutation[k]` is the estimated column matched to population factor
/// `k`, and `signs[k]` the reflection that makes their congruence positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatching {
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    /// Tucker congruence of each matched pair after reflection.
    pub congruences: Vec<f64>,
}

impl FactorMatching {
    pub fn identity(q: usize) -> Self {
        Self {
            permutation: (0..q).collect(),
            signs: vec![1.0; q],
            congruences: vec![1.0; q],
        }
    }

    /// Reorders and reflects the columns of `lambda_hat` into population order.
    pub fn apply(&self, lambda_hat: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(lambda_hat.nrows(), self.permutation.len(), |i, k| {
            self.signs[k] * lambda_hat[(i, self.permutation[k])]
        })
    }

    /// The same reordering as a signed permutation matrix `P`, so that
    /// `apply(L) = L · P`.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let q = self.permutation.len();
        let mut m = DMatrix::zeros(q, q);
        for (k, (&j, &s)) in self.permutation.iter().zip(&self.signs).enumerate() {
            m[(j, k)] = s;
        }
        m
    }
}

/// Tucker's congruence coefficient; zero when either column vanishes.
pub fn tucker_congruence(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy matching on absolute Tucker congruence: repeatedly pairs the
/// unassigned (estimated, population) columns with the largest |φ|.
pub fn match_factors(lambda_hat: &DMatrix<f64>, lambda_pop: &DMatrix<f64>) -> Result<FactorMatching> {
    if lambda_hat.shape() != lambda_pop.shape() {
        return Err(Error::dims(
            format!("{:?}", lambda_pop.shape()),
            format!("{:?}", lambda_hat.shape()),
        ));
    }
    let q = lambda_pop.ncols();
    let cols_hat: Vec<Vec<f64>> = lambda_hat.column_iter().map(|c| c.iter().copied().collect()).collect();
    let cols_pop: Vec<Vec<f64>> = lambda_pop.column_iter().map(|c| c.iter().copied().collect()).collect();
    let congruence = DMatrix::from_fn(q, q, |j, k| tucker_congruence(&cols_hat[j], &cols_pop[k]));

    let mut used_hat = vec![false; q];
    let mut permutation = vec![usize::MAX; q];
    let mut signs = vec![1.0; q];
    let mut congruences = vec![0.0; q];
    for _ in 0..q {
        let mut best: Option<(usize, usize, f64)> = None;
        for j in (0..q).filter(|&j| !used_hat[j]) {
            for k in (0..q).filter(|&k| permutation[k] == usize::MAX) {
                let c = congruence[(j, k)];
                if best.is_none_or(|(_, _, b)| c.abs() > b.abs()) {
                    best = Some((j, k, c));
                }
            }
        }
        let (j, k, c) = best.expect("an unassigned pair remains");
        used_hat[j] = true;
        permutation[k] = j;
        signs[k] = if c < 0.0 { -1.0 } else { 1.0 };
        congruences[k] = c.abs();
    }
    Ok(FactorMatching {
        permutation,
        signs,
        congruences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PopulationModel;

    #[test]
    fn identical_loadings_match_identically() {
        let m = PopulationModel::simple_structure(3, 0.4, 5).unwrap();
        let matching = match_factors(m.lambda(), m.lambda()).unwrap();
        assert_eq!(matching, FactorMatching::identity(3));
    }

    #[test]
    fn recovers_swap_and_reflection() {
        let m = PopulationModel::simple_structure(3, 0.6, 5).unwrap();
        let pop = m.lambda();
        let mut est = pop.clone();
        est.swap_columns(0, 2);
        est.column_mut(1).neg_mut();
        let matching = match_factors(&est, pop).unwrap();
        assert_eq!(matching.permutation, vec![2, 1, 0]);
        assert_eq!(matching.signs, vec![1.0, -1.0, 1.0]);
        assert_eq!(&matching.apply(&est), pop);
        assert_eq!(&est * matching.as_matrix(), *pop);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = DMatrix::zeros(5, 2);
        let b = DMatrix::zeros(5, 3);
        assert!(match_factors(&a, &b).is_err());
    }

    #[test]
    fn congruence_of_zero_column() {
        assert_eq!(tucker_congruence(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert!((tucker_congruence(&[1.0, 2.0], &[-2.0, -4.0]) + 1.0).abs() < 1e-15);
    }
}
