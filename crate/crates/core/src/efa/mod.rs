//! Maximum-likelihood exploratory factor analysis, Varimax rotation and
//! matching of estimated factors to known population factors.

mod matching;
mod ml;
mod varimax;

use nalgebra::{DMatrix, DVector};

pub use matching::{match_factors, tucker_congruence, FactorMatching};
pub use ml::{fit_ml, ml_discrepancy};
pub use varimax::{varimax, varimax_criterion};

/// Stopping rules for [`fit_ml`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Stop when one outer iteration lowers the discrepancy by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Lower bound on each uniqueness; estimates at the bound are Heywood-flagged.
    pub psi_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 500,
            psi_floor: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfaSolution {
    pub lambda_hat: DMatrix<f64>,
    pub psi2_hat: DVector<f64>,
    /// ML discrepancy at the returned estimates.
    pub fit: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per-variable flag: uniqueness held at the lower bound.
    pub heywood: Vec<bool>,
    /// Orthogonal matrix applied to the canonical loadings (identity if unrotated).
    pub rotation: DMatrix<f64>,
    /// Discrepancy after the start and after every accepted outer step.
    pub objective_trace: Vec<f64>,
}

impl EfaSolution {
    pub fn heywood_count(&self) -> usize {
        self.heywood.iter().filter(|&&h| h).count()
    }

    /// Applies Varimax to the current loadings and accumulates the rotation.
    pub fn rotated_varimax(&self, kaiser_normalize: bool) -> Self {
        let (lambda_hat, t) = varimax(&self.lambda_hat, kaiser_normalize);
        Self {
            lambda_hat,
            rotation: &self.rotation * t,
            ..self.clone()
        }
    }

    /// Reorders/reflects factors into population order.
    pub fn aligned(&self, matching: &FactorMatching) -> Self {
        Self {
            lambda_hat: matching.apply(&self.lambda_hat),
            rotation: &self.rotation * matching.as_matrix(),
            ..self.clone()
        }
    }

    /// `Λ̂Λ̂ᵀ`, unchanged by any orthogonal rotation.
    pub fn common_covariance(&self) -> DMatrix<f64> {
        &self.lambda_hat * self.lambda_hat.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_sample, sample_correlation};
    use crate::linalg::max_abs_diff;
    use crate::model::PopulationModel;

    #[test]
    fn rotation_preserves_common_part() {
        let m = PopulationModel::simple_structure(3, 0.6, 5).unwrap();
        let s = generate_sample(&m, 300, 21).unwrap();
        let r = sample_correlation(&s).unwrap();
        let sol = fit_ml(&r, 3, &FitOptions::default()).unwrap();
        let rot = sol.rotated_varimax(true);
        assert!(max_abs_diff(&sol.common_covariance(), &rot.common_covariance()) < 1e-10);
        let q = rot.rotation.ncols();
        assert!(max_abs_diff(&(rot.rotation.transpose() * &rot.rotation), &DMatrix::identity(q, q)) < 1e-10);
        assert!(max_abs_diff(&(&sol.lambda_hat * &rot.rotation), &rot.lambda_hat) < 1e-12);

        let matching = match_factors(&rot.lambda_hat, m.lambda()).unwrap();
        let aligned = rot.aligned(&matching);
        assert!(max_abs_diff(&(&sol.lambda_hat * &aligned.rotation), &aligned.lambda_hat) < 1e-12);
        assert!(matching.congruences.iter().all(|&c| c > 0.9));
    }
}
