//! Population objects of the common factor model `x = Λf + e` and the
//! covariance algebra built on them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, max_abs, min_eigenvalue};

const SYMMETRY_TOL: f64 = 1e-12;
const UNIT_VARIANCE_TOL: f64 = 1e-12;

/// Loadings, factor correlations and uniquenesses of a unit-variance
/// population.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    lambda: DMatrix<f64>,
    phi: DMatrix<f64>,
    psi2: DVector<f64>,
}

impl PopulationModel {
    /// Validates and wraps `(Λ, Φ, Ψ²)`.
    ///
    /// `Φ` must be a symmetric PSD correlation matrix, every uniqueness
    /// strictly positive, and the implied variances all equal to one.
    pub fn new(lambda: DMatrix<f64>, phi: DMatrix<f64>, psi2: DVector<f64>) -> Result<Self> {
        let (p, q) = lambda.shape();
        if p == 0 || q == 0 {
            return Err(Error::Domain("loading matrix must be non-empty".into()));
        }
        if q >= p {
            return Err(Error::Domain(format!("need fewer factors than variables (p = {p}, q = {q})")));
        }
        if phi.shape() != (q, q) {
            return Err(Error::dims(format!("phi {q}x{q}"), format!("{:?}", phi.shape())));
        }
        if psi2.len() != p {
            return Err(Error::dims(format!("psi2 of length {p}"), psi2.len()));
        }
        let asym = asymmetry(&phi);
        if asym > SYMMETRY_TOL {
            return Err(Error::Asymmetric(asym));
        }
        if phi.diagonal().iter().any(|d| (d - 1.0).abs() > SYMMETRY_TOL) {
            return Err(Error::Domain("phi must have a unit diagonal".into()));
        }
        if min_eigenvalue(&phi) < -1e-12 {
            return Err(Error::NotPositiveDefinite("phi".into()));
        }
        if let Some(bad) = psi2.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain(format!("uniquenesses must be positive, found {bad}")));
        }
        let common = (&lambda * &phi * lambda.transpose()).diagonal();
        let worst = (common + &psi2).iter().fold(0.0_f64, |acc, v| acc.max((v - 1.0).abs()));
        if worst > UNIT_VARIANCE_TOL {
            return Err(Error::Domain(format!(
                "implied variances must equal 1 (max deviation {worst:e})"
            )));
        }
        Ok(Self { lambda, phi, psi2 })
    }

    /// Builds a model whose uniquenesses complete each variance to one.
    pub fn from_loadings(lambda: DMatrix<f64>, phi: DMatrix<f64>) -> Result<Self> {
        if phi.nrows() != lambda.ncols() {
            return Err(Error::dims(format!("phi {}x{}", lambda.ncols(), lambda.ncols()), phi.nrows()));
        }
        let common = (&lambda * &phi * lambda.transpose()).diagonal();
        let psi2 = common.map(|h| 1.0 - h);
        Self::new(lambda, phi, psi2)
    }

    /// Orthogonal simple-structure model: variable `i` loads `salient` on
    /// factor `i / vars_per_factor` and zero elsewhere.
    pub fn simple_structure(q: usize, salient: f64, vars_per_factor: usize) -> Result<Self> {
        if q == 0 || vars_per_factor == 0 {
            return Err(Error::Domain("factor and variable counts must be positive".into()));
        }
        if !(salient > 0.0 && salient < 1.0) {
            return Err(Error::Domain(format!("salient loading must lie in (0, 1), got {salient}")));
        }
        let p = q * vars_per_factor;
        if q >= p {
            return Err(Error::Domain(format!(
                "need more variables than factors (q = {q}, vars_per_factor = {vars_per_factor})"
            )));
        }
        let lambda = DMatrix::from_fn(p, q, |i, k| if i / vars_per_factor == k { salient } else { 0.0 });
        let psi2 = DVector::from_element(p, 1.0 - salient * salient);
        Self::new(lambda, DMatrix::identity(q, q), psi2)
    }

    pub fn p(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn q(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn psi2(&self) -> &DVector<f64> {
        &self.psi2
    }

    /// `ΛΦΛᵀ`, the common part of the implied covariance.
    pub fn common_covariance(&self) -> DMatrix<f64> {
        &self.lambda * &self.phi * self.lambda.transpose()
    }

    /// `Σ = ΛΦΛᵀ + diag(Ψ²)`.
    pub fn implied_covariance(&self) -> CovarianceMatrix {
        let mut sigma = self.common_covariance();
        for (i, v) in self.psi2.iter().enumerate() {
            sigma[(i, i)] += v;
        }
        // Symmetric by construction up to rounding in the triple product.
        CovarianceMatrix::from_parts(crate::linalg::symmetrize(&sigma), false)
    }
}

/// A symmetric covariance or correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    values: DMatrix<f64>,
    correlation: bool,
}

impl CovarianceMatrix {
    /// Wraps a square matrix, rejecting asymmetry above `1e-12`.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::dims("square matrix", format!("{:?}", values.shape())));
        }
        let asym = asymmetry(&values);
        if asym > SYMMETRY_TOL {
            return Err(Error::Asymmetric(asym));
        }
        Ok(Self { values, correlation: false })
    }

    /// Wraps a correlation matrix; the diagonal must be exactly one.
    pub fn correlation(values: DMatrix<f64>) -> Result<Self> {
        let mut m = Self::new(values)?;
        if m.values.diagonal().iter().any(|d| (d - 1.0).abs() > SYMMETRY_TOL) {
            return Err(Error::Domain("correlation matrix must have a unit diagonal".into()));
        }
        m.values.fill_diagonal(1.0);
        m.correlation = true;
        Ok(m)
    }

    pub(crate) fn from_parts(values: DMatrix<f64>, correlation: bool) -> Self {
        Self { values, correlation }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_correlation(&self) -> bool {
        self.correlation
    }

    /// Reinterprets a unit-diagonal covariance as a correlation matrix.
    pub fn as_correlation(&self) -> Result<Self> {
        Self::correlation(self.values.clone())
    }
}

/// `Ω = target − ΛΦΛᵀ − diag(Ψ²)` with the diagonal set to exactly zero.
pub fn residual_covariance(target: &CovarianceMatrix, model: &PopulationModel) -> Result<CovarianceMatrix> {
    residual_from_parts(target, &model.common_covariance())
}

/// Zero-diagonal residual of `target` against a common part `ΛΦΛᵀ`.
///
/// Uniquenesses only touch the diagonal, which is zeroed anyway, so they
/// do not enter.
pub(crate) fn residual_from_parts(target: &CovarianceMatrix, common: &DMatrix<f64>) -> Result<CovarianceMatrix> {
    if target.dim() != common.nrows() {
        return Err(Error::dims(format!("{0}x{0}", common.nrows()), format!("{0}x{0}", target.dim())));
    }
    let mut omega = crate::linalg::symmetrize(&(target.values() - common));
    omega.fill_diagonal(0.0);
    Ok(CovarianceMatrix::from_parts(omega, false))
}

/// True when every entry of `m` is exactly zero.
pub fn is_zero(m: &CovarianceMatrix) -> bool {
    max_abs(m.values()) == 0.0
}
