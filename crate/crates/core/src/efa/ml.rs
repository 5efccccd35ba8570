//! Maximum-likelihood factor extraction.
//!
//! The loadings are concentrated out of the Wishart discrepancy: for fixed
//! uniquenesses `Ψ²` the optimal `Λ` comes from the leading eigenpairs of
//! `Ψ⁻¹ R Ψ⁻¹`, and the remaining function of `Ψ²` is
//! `Σ (θ − ln θ − 1)` over the eigenvalues not absorbed by a factor.
//! The outer problem is solved in `ln ψ²` by a projected Newton iteration
//! using the squared-projector approximation to the Hessian, with a
//! backtracking line search so the discrepancy never increases.

use nalgebra::{DMatrix, DVector};

use super::{EfaSolution, FitOptions};
use crate::error::{Error, Result};
use crate::linalg::{spd_logdet_inverse, sym_eigen_desc};
use crate::model::CovarianceMatrix;

/// `F_ML = ln|Σ̂| + tr(R Σ̂⁻¹) − ln|R| − p` with `Σ̂ = ΛΛᵀ + diag(Ψ²)`.
pub fn ml_discrepancy(r: &CovarianceMatrix, lambda: &DMatrix<f64>, psi2: &DVector<f64>) -> Result<f64> {
    let p = r.dim();
    if lambda.nrows() != p || psi2.len() != p {
        return Err(Error::dims(
            format!("{p} rows"),
            format!("lambda {:?}, psi2 {}", lambda.shape(), psi2.len()),
        ));
    }
    let mut sigma = lambda * lambda.transpose();
    for i in 0..p {
        sigma[(i, i)] += psi2[i];
    }
    let (logdet_sigma, sigma_inv) = spd_logdet_inverse(&sigma, "model covariance")?;
    let (logdet_r, _) = spd_logdet_inverse(r.values(), "R")?;
    let trace = r.values().component_mul(&sigma_inv).sum();
    Ok(logdet_sigma + trace - logdet_r - p as f64)
}

/// State of the concentrated problem at one value of `ln ψ²`.
struct Concentrated {
    value: f64,
    gradient: DVector<f64>,
    /// Projector onto the eigenvectors not absorbed by a factor.
    projector: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

fn evaluate(r: &DMatrix<f64>, log_psi2: &DVector<f64>, q: usize) -> Concentrated {
    let p = r.nrows();
    let inv_psi = log_psi2.map(|v| (-0.5 * v).exp());
    let scaled = DMatrix::from_fn(p, p, |i, j| inv_psi[i] * r[(i, j)] * inv_psi[j]);
    let (theta, omega) = sym_eigen_desc(&scaled);

    let mut value = 0.0;
    let mut gradient = DVector::zeros(p);
    let mut projector = DMatrix::zeros(p, p);
    for m in 0..p {
        let th = theta[m];
        if m < q && th > 1.0 {
            continue;
        }
        value += th - th.ln() - 1.0;
        let w = omega.column(m);
        for j in 0..p {
            gradient[j] += (1.0 - th) * w[j] * w[j];
        }
        projector += w * w.transpose();
    }
    Concentrated {
        value,
        gradient,
        projector,
        eigenvalues: theta,
        eigenvectors: omega,
    }
}

fn loadings_from(state: &Concentrated, psi2: &DVector<f64>, q: usize) -> DMatrix<f64> {
    let p = psi2.len();
    DMatrix::from_fn(p, q, |i, k| {
        let excess = (state.eigenvalues[k] - 1.0).max(0.0);
        psi2[i].sqrt() * state.eigenvectors[(i, k)] * excess.sqrt()
    })
}

/// Newton direction on the free coordinates; bound-blocked coordinates get 0.
fn newton_direction(state: &Concentrated, free: &[bool]) -> DVector<f64> {
    let p = free.len();
    let idx: Vec<usize> = (0..p).filter(|&j| free[j]).collect();
    let mut direction = DVector::zeros(p);
    if idx.is_empty() {
        return direction;
    }
    let k = idx.len();
    let hess = DMatrix::from_fn(k, k, |a, b| state.projector[(idx[a], idx[b])].powi(2));
    let grad = DVector::from_iterator(k, idx.iter().map(|&j| state.gradient[j]));
    let scale = hess.diagonal().max().max(1e-12);
    let mut damping = 1e-10 * scale;
    let step = loop {
        let mut h = hess.clone();
        for a in 0..k {
            h[(a, a)] += damping;
        }
        if let Some(chol) = h.cholesky() {
            break -chol.solve(&grad);
        }
        damping *= 100.0;
        if damping > 1e6 * scale {
            break -grad.clone();
        }
    };
    // Fall back to steepest descent when the model Hessian misleads.
    let step = if step.dot(&grad) < 0.0 { step } else { -grad };
    for (a, &j) in idx.iter().enumerate() {
        direction[j] = step[a];
    }
    direction
}

/// Fits `q` common factors to the correlation matrix `r` by maximum likelihood.
///
/// Returns the unrotated canonical solution. Non-convergence is reported in
/// the solution flags, not as an error.
pub fn fit_ml(r: &CovarianceMatrix, q: usize, opts: &FitOptions) -> Result<EfaSolution> {
    let p = r.dim();
    if !r.is_correlation() {
        return Err(Error::Domain("maximum-likelihood extraction expects a correlation matrix".into()));
    }
    if q == 0 || q >= p {
        return Err(Error::Domain(format!("need 1 <= q < p, got q = {q}, p = {p}")));
    }
    let rv = r.values();
    let (_, r_inv) = spd_logdet_inverse(rv, "R")?;

    let lower = opts.psi_floor.ln();
    let upper = 0.0_f64;
    let clamp = |v: f64| v.clamp(lower, upper);

    // Start at 1 − SMC = 1 / diag(R⁻¹).
    let mut log_psi2 = DVector::from_iterator(p, (0..p).map(|j| clamp((1.0 / r_inv[(j, j)]).ln())));
    let mut state = evaluate(rv, &log_psi2, q);
    let mut trace = vec![state.value];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let bound_eps = 1e-12;
        let free: Vec<bool> = (0..p)
            .map(|j| {
                let at_lower = log_psi2[j] <= lower + bound_eps && state.gradient[j] > 0.0;
                let at_upper = log_psi2[j] >= upper - bound_eps && state.gradient[j] < 0.0;
                !(at_lower || at_upper)
            })
            .collect();
        let direction = newton_direction(&state, &free);
        if direction.iter().all(|&d| d == 0.0) {
            converged = true;
            break;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = DVector::from_iterator(p, (0..p).map(|j| clamp(log_psi2[j] + step * direction[j])));
            let next = evaluate(rv, &candidate, q);
            if next.value.is_finite() && next.value <= state.value {
                accepted = Some((candidate, next));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, next)) = accepted else {
            // No descent along the direction: stationary to working precision.
            converged = state.gradient.amax() < opts.tol.sqrt();
            break;
        };
        let change = state.value - next.value;
        log_psi2 = candidate;
        state = next;
        trace.push(state.value);
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let psi2 = log_psi2.map(f64::exp);
    let lambda_hat = loadings_from(&state, &psi2, q);
    let heywood = log_psi2.iter().map(|&v| v <= lower + 1e-9).collect();
    Ok(EfaSolution {
        lambda_hat,
        psi2_hat: psi2,
        fit: state.value,
        iterations,
        converged,
        heywood,
        rotation: DMatrix::identity(q, q),
        objective_trace: trace,
    })
}
