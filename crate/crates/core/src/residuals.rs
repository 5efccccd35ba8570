//! Principal components of the residual covariance matrix, their scores and
//! their correlations with common factors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::datagen::{standardize, Sample};
use crate::error::{Error, Result};
use crate::linalg::{asymmetry, sym_eigen_desc};
use crate::model::CovarianceMatrix;

/// Eigenvalues at or below this are not treated as positive.
pub const POSITIVE_EIGENVALUE_THRESHOLD: f64 = 1e-12;
const INPUT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualDecomposition {
    pub omega: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal columns `K`, in eigenvalue order.
    pub eigenvectors: DMatrix<f64>,
    /// Number of positive eigenvalues.
    pub m: usize,
    /// `N = K* V*^{1/2}`, `p x m`.
    pub n_loadings: DMatrix<f64>,
}

impl ResidualDecomposition {
    /// Largest eigenvalue of `Ω` (0 for an empty matrix).
    pub fn first_eigenvalue(&self) -> f64 {
        self.eigenvalues.get(0).copied().unwrap_or(0.0)
    }

    pub fn eigenvalue_sum(&self) -> f64 {
        self.eigenvalues.sum()
    }

    /// `K* V* K*ᵀ` computed from the eigenpairs directly.
    pub fn positive_part(&self) -> DMatrix<f64> {
        let p = self.omega.nrows();
        let mut out = DMatrix::zeros(p, p);
        for j in 0..self.m {
            let k = self.eigenvectors.column(j);
            out += k * k.transpose() * self.eigenvalues[j];
        }
        out
    }

    /// `N`'s first `m` columns.
    pub fn leading_loadings(&self, m: usize) -> DMatrix<f64> {
        self.n_loadings.columns(0, m.min(self.m)).into_owned()
    }
}

/// Full eigendecomposition of a zero-diagonal symmetric residual matrix.
pub fn decompose_residuals(omega: &CovarianceMatrix) -> Result<ResidualDecomposition> {
    let om = omega.values();
    let asym = asymmetry(om);
    if asym > INPUT_TOL {
        return Err(Error::Asymmetric(asym));
    }
    let diag = om.diagonal().amax();
    if diag > INPUT_TOL {
        return Err(Error::NonZeroDiagonal(diag));
    }
    let p = om.nrows();
    let (eigenvalues, eigenvectors) = sym_eigen_desc(om);
    let m = eigenvalues.iter().filter(|&&v| v > POSITIVE_EIGENVALUE_THRESHOLD).count();
    let n_loadings = DMatrix::from_fn(p, m, |i, j| eigenvectors[(i, j)] * eigenvalues[j].sqrt());
    Ok(ResidualDecomposition {
        omega: om.clone(),
        eigenvalues,
        eigenvectors,
        m,
        n_loadings,
    })
}

/// How residual component scores are computed from case-level data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoringStrategy {
    /// `u = (NᵀN)⁻¹Nᵀ(z − Λ̂f − e)` with the true factor and error scores.
    Eq12TrueScores,
    /// `u = (NᵀN)⁻¹Nᵀz`; usable when true scores are unknown.
    DirectProjection,
}

impl ScoringStrategy {
    pub const ALL: [ScoringStrategy; 2] = [ScoringStrategy::Eq12TrueScores, ScoringStrategy::DirectProjection];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoringStrategy::Eq12TrueScores => "eq12-true-scores",
            ScoringStrategy::DirectProjection => "direct-projection",
        }
    }
}

impl fmt::Display for ScoringStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoringStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eq12-true-scores" | "eq12" => Ok(ScoringStrategy::Eq12TrueScores),
            "direct-projection" | "direct" => Ok(ScoringStrategy::DirectProjection),
            other => Err(Error::Parse(format!("unknown scoring strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentScores {
    /// `n x m`.
    pub u: DMatrix<f64>,
    pub strategy: ScoringStrategy,
}

/// Least-squares component scores for observations `obs` (`n x p`).
///
/// With `Eq12TrueScores` the residual `obs − fΛᵀ − e` is projected, which
/// requires `factors` (`n x q`) and `errors` (`n x p`).
pub fn project_components(
    n_loadings: &DMatrix<f64>,
    obs: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    factors: Option<&DMatrix<f64>>,
    errors: Option<&DMatrix<f64>>,
    strategy: ScoringStrategy,
) -> Result<ComponentScores> {
    let (p, m) = n_loadings.shape();
    if m == 0 {
        return Err(Error::NoComponents);
    }
    if obs.ncols() != p {
        return Err(Error::dims(format!("{p} observed columns"), obs.ncols()));
    }
    let target = match strategy {
        ScoringStrategy::DirectProjection => obs.clone(),
        ScoringStrategy::Eq12TrueScores => {
            let (Some(f), Some(e)) = (factors, errors) else {
                return Err(Error::Domain("eq12-true-scores needs true factor and error scores".into()));
            };
            if lambda.nrows() != p || f.ncols() != lambda.ncols() || e.shape() != obs.shape() || f.nrows() != obs.nrows() {
                return Err(Error::dims(
                    format!("obs {:?}, lambda {p}x{}", obs.shape(), f.ncols()),
                    format!("lambda {:?}, f {:?}, e {:?}", lambda.shape(), f.shape(), e.shape()),
                ));
            }
            obs - f * lambda.transpose() - e
        }
    };
    let gram = n_loadings.tr_mul(n_loadings);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("NᵀN is not invertible".into()))?;
    // Rows of u solve (NᵀN) uᵢ = Nᵀ dᵢ.
    let rhs = n_loadings.tr_mul(&target.transpose());
    let u = chol.solve(&rhs).transpose();
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite component scores".into()));
    }
    Ok(ComponentScores { u, strategy })
}

/// Component scores for a simulated sample, after standardizing the observed
/// variables with `n − 1` standard deviations.
///
/// `lambda_hat` must be aligned with the columns of `sample.f`.
pub fn component_scores(
    decomp: &ResidualDecomposition,
    sample: &Sample,
    lambda_hat: &DMatrix<f64>,
    strategy: ScoringStrategy,
) -> Result<ComponentScores> {
    if decomp.m == 0 {
        return Err(Error::NoComponents);
    }
    let z = standardize(&sample.x)?;
    project_components(&decomp.n_loadings, &z, lambda_hat, Some(&sample.f), Some(&sample.e), strategy)
}

/// Case-level residuals `d = z − fΛ̂ᵀ − e` of the standardized observations,
/// with `lambda_hat` aligned to the columns of `sample.f`.
pub fn residual_scores(sample: &Sample, lambda_hat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if lambda_hat.shape() != (sample.p(), sample.q()) {
        return Err(Error::dims(
            format!("{}x{}", sample.p(), sample.q()),
            format!("{:?}", lambda_hat.shape()),
        ));
    }
    let z = standardize(&sample.x)?;
    Ok(z - &sample.f * lambda_hat.transpose() - &sample.e)
}

/// Covariance (`n − 1` divisor) of residual scores and its eigenvalues in
/// descending order. The largest one is the variance of the first principal
/// component of the residual variables.
pub fn residual_score_spectrum(d: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = d.nrows();
    if n < 2 {
        return Err(Error::DegenerateData("need at least two cases".into()));
    }
    let mut centred = d.clone();
    crate::linalg::center_columns(&mut centred);
    let cov = centred.tr_mul(&centred) / (n - 1) as f64;
    Ok(sym_eigen_desc(&cov).0)
}

/// Pearson correlations between each score column and each factor: `m x q`.
pub fn component_factor_correlations(scores: &ComponentScores, factors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let u = &scores.u;
    if u.nrows() != factors.nrows() {
        return Err(Error::dims(format!("{} cases", u.nrows()), factors.nrows()));
    }
    let zu = standardize(u)?;
    let zf = standardize(factors)?;
    let n = u.nrows() as f64;
    Ok((zu.tr_mul(&zf) / (n - 1.0)).map(|v| v.clamp(-1.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, symmetrize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_diag(values: &[f64], p: usize) -> CovarianceMatrix {
        CovarianceMatrix::new(DMatrix::from_row_slice(p, p, values)).unwrap()
    }

    #[test]
    fn zero_matrix_has_no_components() {
        let d = decompose_residuals(&CovarianceMatrix::new(DMatrix::zeros(4, 4)).unwrap()).unwrap();
        assert_eq!(d.m, 0);
        assert_eq!(d.n_loadings.ncols(), 0);
        assert_eq!(d.first_eigenvalue(), 0.0);
    }

    #[test]
    fn two_by_two_closed_form() {
        let c = 0.3;
        let d = decompose_residuals(&zero_diag(&[0.0, c, c, 0.0], 2)).unwrap();
        assert!((d.eigenvalues[0] - c).abs() < 1e-12);
        assert!((d.eigenvalues[1] + c).abs() < 1e-12);
        assert_eq!(d.m, 1);
        let expected = c.sqrt() / 2f64.sqrt();
        assert!((d.n_loadings[(0, 0)] - expected).abs() < 1e-12);
        assert!((d.n_loadings[(1, 0)] - expected).abs() < 1e-12);
        let nnt = &d.n_loadings * d.n_loadings.transpose();
        assert!(max_abs_diff(&nnt, &DMatrix::from_element(2, 2, c / 2.0)) < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let asym = CovarianceMatrix::from_parts(DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.2, 0.0]), false);
        assert!(matches!(decompose_residuals(&asym), Err(Error::Asymmetric(_))));
        let diag = zero_diag(&[0.1, 0.2, 0.2, 0.0], 2);
        assert!(matches!(decompose_residuals(&diag), Err(Error::NonZeroDiagonal(_))));
    }

    #[test]
    fn random_zero_diagonal_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [3usize, 5, 15, 30] {
            let mut a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-0.2..0.2));
            a = symmetrize(&a);
            a.fill_diagonal(0.0);
            let d = decompose_residuals(&CovarianceMatrix::new(a).unwrap()).unwrap();
            assert!(d.eigenvalue_sum().abs() < 1e-10);
            assert!(d.m >= 1 && d.eigenvalues[p - 1] < 0.0);
            assert!(d.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
            let ktk = d.eigenvectors.tr_mul(&d.eigenvectors);
            assert!(max_abs_diff(&ktk, &DMatrix::identity(p, p)) < 1e-10);
            let nnt = &d.n_loadings * d.n_loadings.transpose();
            assert!(max_abs_diff(&nnt, &d.positive_part()) < 1e-10);
        }
    }

    #[test]
    fn single_column_scores_are_scalar_projections() {
        let n_load = DMatrix::from_column_slice(3, 1, &[0.2, -0.1, 0.4]);
        let obs = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let s = project_components(&n_load, &obs, &DMatrix::zeros(3, 1), None, None, ScoringStrategy::DirectProjection)
            .unwrap();
        let ntn = 0.04 + 0.01 + 0.16;
        assert!((s.u[(0, 0)] - (0.2 - 0.2 + 1.2) / ntn).abs() < 1e-12);
        assert!((s.u[(1, 0)] - (-0.2 - 0.05) / ntn).abs() < 1e-12);
    }

    #[test]
    fn eq12_inverts_constructed_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (n, p, q, m) = (50, 6, 2, 2);
        let lambda = DMatrix::from_fn(p, q, |_, _| rng.random_range(-0.6..0.6));
        let n_load = DMatrix::from_fn(p, m, |_, _| rng.random_range(-0.3..0.3));
        let f = DMatrix::from_fn(n, q, |_, _| rng.random_range(-2.0..2.0));
        let e = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let u = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.5..1.5));
        let x = &f * lambda.transpose() + &e + &u * n_load.transpose();
        let s = project_components(&n_load, &x, &lambda, Some(&f), Some(&e), ScoringStrategy::Eq12TrueScores).unwrap();
        assert!(max_abs_diff(&s.u, &u) < 1e-10);
        assert!(project_components(&n_load, &x, &lambda, None, None, ScoringStrategy::Eq12TrueScores).is_err());
    }

    #[test]
    fn no_components_is_an_error() {
        let empty = DMatrix::zeros(3, 0);
        let obs = DMatrix::zeros(4, 3);
        let res = project_components(&empty, &obs, &DMatrix::zeros(3, 1), None, None, ScoringStrategy::DirectProjection);
        assert!(matches!(res, Err(Error::NoComponents)));
    }

    #[test]
    fn correlation_with_copy_and_orthogonal_columns() {
        let f = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, -1.0]);
        let copy = ComponentScores {
            u: f.columns(0, 1).into_owned(),
            strategy: ScoringStrategy::DirectProjection,
        };
        let r = component_factor_correlations(&copy, &f).unwrap();
        assert!((r[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(r[(0, 1)].abs() < 1e-15);
        let constant = ComponentScores {
            u: DMatrix::from_element(4, 1, 2.0),
            strategy: ScoringStrategy::DirectProjection,
        };
        assert!(matches!(component_factor_correlations(&constant, &f), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn residual_scores_vanish_for_exact_loadings_without_sampling_noise() {
        // Two cases mirrored about zero standardize to themselves up to scale;
        // use the identity d = z − fΛᵀ − e on hand-built data instead.
        let f = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let e = DMatrix::from_row_slice(4, 2, &[0.5, -0.5, 0.5, 0.5, -0.5, -0.5, -0.5, 0.5]);
        let lambda = DMatrix::from_row_slice(2, 1, &[0.6, 0.8]);
        let x = &f * lambda.transpose() + &e;
        let sample = Sample { x, f, e, seed: 0 };
        let z = standardize(&sample.x).unwrap();
        let d = residual_scores(&sample, &lambda).unwrap();
        let expected = &z - &sample.f * lambda.transpose() - &sample.e;
        assert!(max_abs_diff(&d, &expected) < 1e-15);
        let spectrum = residual_score_spectrum(&d).unwrap();
        assert!(spectrum.iter().all(|&v| v >= -1e-12));
        assert!(residual_scores(&sample, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn strategy_names_roundtrip() {
        for s in ScoringStrategy::ALL {
            assert_eq!(s.as_str().parse::<ScoringStrategy>().unwrap(), s);
        }
        assert!("pca".parse::<ScoringStrategy>().is_err());
    }
}
