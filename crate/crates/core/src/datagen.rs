//! Case-level score generation for the factor model and sample correlations.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::model::{CovarianceMatrix, PopulationModel};
use crate::seed;

/// Observed scores together with the true factor and error scores that
/// produced them (`X = F Λᵀ + E` row by row).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub seed: u64,
}

impl Sample {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.f.ncols()
    }

    /// Writes `x1..xp,f1..fq,e1..ep` with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (1..=self.p())
            .map(|j| format!("x{j}"))
            .chain((1..=self.q()).map(|k| format!("f{k}")))
            .chain((1..=self.p()).map(|j| format!("e{j}")))
            .collect();
        w.write_record(&header)?;
        for i in 0..self.n() {
            let row = self
                .x
                .row(i)
                .iter()
                .chain(self.f.row(i).iter())
                .chain(self.e.row(i).iter())
                .map(|v| v.to_string())
                .collect::<Vec<_>>();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `n` independent cases from the multivariate-normal factor model.
///
/// Per case the generator emits `q` factor deviates followed by `p` error
/// deviates from a ChaCha8 stream seeded with `seed`.
pub fn generate_sample(model: &PopulationModel, n: usize, seed: u64) -> Result<Sample> {
    let p = model.p();
    if n < p + 1 {
        return Err(Error::Domain(format!(
            "need at least p + 1 = {} cases for a nonsingular correlation matrix, got {n}",
            p + 1
        )));
    }
    let q = model.q();
    let phi = model.phi();
    let phi_root = if *phi == DMatrix::identity(q, q) {
        None
    } else {
        Some(psd_sqrt(phi))
    };
    let psi: DVector<f64> = model.psi2().map(f64::sqrt);

    let mut rng = seed::rng(seed);
    let mut f = DMatrix::zeros(n, q);
    let mut e = DMatrix::zeros(n, p);
    for i in 0..n {
        for k in 0..q {
            f[(i, k)] = StandardNormal.sample(&mut rng);
        }
        for j in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            e[(i, j)] = psi[j] * z;
        }
    }
    if let Some(root) = phi_root {
        f *= root.transpose();
    }
    let x = &f * model.lambda().transpose() + &e;
    Ok(Sample { x, f, e, seed })
}

/// One fixed finite population from which subsamples are later drawn.
pub fn generate_fixed_population(model: &PopulationModel, n_pop: usize, seed: u64) -> Result<Sample> {
    generate_sample(model, n_pop, seed)
}

/// Draws `n` rows without replacement, keeping `X`, `F` and `E` aligned.
/// Selected rows keep their population order.
pub fn subsample(population: &Sample, n: usize, seed: u64) -> Result<Sample> {
    if n > population.n() {
        return Err(Error::Domain(format!(
            "subsample of {n} cases requested from a population of {}",
            population.n()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut rows = index::sample(&mut rng, population.n(), n).into_vec();
    rows.sort_unstable();
    Ok(Sample {
        x: population.x.select_rows(rows.iter()),
        f: population.f.select_rows(rows.iter()),
        e: population.e.select_rows(rows.iter()),
        seed,
    })
}

/// Column-standardizes `x` (means zero, `n − 1` standard deviations one).
pub fn standardize(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::DegenerateData("need at least two cases".into()));
    }
    let mut z = x.clone();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1) as f64).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::DegenerateData(format!("column {} has zero variance", j + 1)));
        }
        col /= sd;
    }
    Ok(z)
}

/// Pearson correlation matrix of `x` with an exact unit diagonal.
pub fn correlation_of(x: &DMatrix<f64>) -> Result<CovarianceMatrix> {
    let z = standardize(x)?;
    let n = z.nrows() as f64;
    let mut r = z.tr_mul(&z) / (n - 1.0);
    r = crate::linalg::symmetrize(&r);
    r.fill_diagonal(1.0);
    Ok(CovarianceMatrix::from_parts(r, true))
}

/// Pearson correlation of the observed scores.
pub fn sample_correlation(sample: &Sample) -> Result<CovarianceMatrix> {
    correlation_of(&sample.x)
}
