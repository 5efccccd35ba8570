//! Monte Carlo study: condition grid, per-replication pipeline and the
//! aggregate statistics computed from replication records.
//!
//! Each replication draws a sample, fits an ML factor model to its
//! correlation matrix, rotates by Varimax, aligns the factors with the
//! population factors, decomposes the residual correlations and correlates
//! the first residual component with every true common factor.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::datagen::{generate_fixed_population, generate_sample, sample_correlation, subsample, Sample};
use crate::efa::{fit_ml, match_factors, FitOptions};
use crate::error::{Error, Result};
use crate::model::{residual_from_parts, PopulationModel};
use crate::residuals::{
    component_factor_correlations, component_scores, decompose_residuals, residual_score_spectrum, residual_scores,
    ComponentScores, ScoringStrategy,
};
use crate::seed;

/// Replacement draws allowed per replication before it counts as failed.
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopulationMode {
    /// Every replication samples the generative model directly.
    Generative,
    /// One finite population per model; replications subsample it.
    FixedPopulation,
}

impl std::str::FromStr for PopulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generative" => Ok(PopulationMode::Generative),
            "fixed-population" | "fixed" => Ok(PopulationMode::FixedPopulation),
            other => Err(Error::Parse(format!("unknown population mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for PopulationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PopulationMode::Generative => "generative",
            PopulationMode::FixedPopulation => "fixed-population",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub sample_sizes: Vec<usize>,
    pub loadings: Vec<f64>,
    pub factor_counts: Vec<usize>,
    pub reps: usize,
    pub base_seed: u64,
    pub population_mode: PopulationMode,
    pub fixed_population_size: usize,
    pub scoring_strategy: ScoringStrategy,
    pub vars_per_factor: usize,
    pub kaiser_normalize: bool,
    pub fit: FitOptions,
    /// Worker threads; `None` uses rayon's default, `Some(1)` runs serially.
    pub threads: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SimulationConfig {
    /// Reduced replication count for routine runs.
    pub fn desk() -> Self {
        Self {
            sample_sizes: vec![150, 300, 900],
            loadings: vec![0.40, 0.60, 0.80],
            factor_counts: vec![3, 6],
            reps: 300,
            base_seed: 1,
            population_mode: PopulationMode::Generative,
            fixed_population_size: 900_000,
            scoring_strategy: ScoringStrategy::Eq12TrueScores,
            vars_per_factor: 5,
            kaiser_normalize: true,
            fit: FitOptions::default(),
            threads: None,
        }
    }

    /// 1,000 replications per condition.
    pub fn full() -> Self {
        Self {
            reps: 1000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() || self.loadings.is_empty() || self.factor_counts.is_empty() {
            return Err(Error::Domain("condition lists must be nonempty".into()));
        }
        if self.reps == 0 {
            return Err(Error::Domain("reps must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Domain("threads must be at least 1".into()));
        }
        for &q in &self.factor_counts {
            for &l in &self.loadings {
                let model = PopulationModel::simple_structure(q, l, self.vars_per_factor)?;
                for &n in &self.sample_sizes {
                    if n < model.p() + 1 {
                        return Err(Error::Domain(format!("sample size {n} too small for p = {}", model.p())));
                    }
                    if self.population_mode == PopulationMode::FixedPopulation && n > self.fixed_population_size {
                        return Err(Error::Domain(format!(
                            "sample size {n} exceeds the fixed population size {}",
                            self.fixed_population_size
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Conditions in table order: loading, then sample size, then factor count.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &loading in &self.loadings {
            for &n in &self.sample_sizes {
                for &q in &self.factor_counts {
                    out.push(Cell { loading, n, q });
                }
            }
        }
        out
    }

    fn model_for(&self, cell: &Cell) -> Result<PopulationModel> {
        PopulationModel::simple_structure(cell.q, cell.loading, self.vars_per_factor)
    }

    fn replication_options(&self) -> ReplicationOptions {
        ReplicationOptions {
            fit: self.fit.clone(),
            kaiser_normalize: self.kaiser_normalize,
        }
    }
}

/// One simulation condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub loading: f64,
    pub n: usize,
    pub q: usize,
}

impl Cell {
    fn key(&self) -> (u64, usize, usize) {
        (self.loading.to_bits(), self.n, self.q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOptions {
    pub fit: FitOptions,
    pub kaiser_normalize: bool,
}

impl Default for ReplicationOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            kaiser_normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    pub cell: Cell,
    pub rep: usize,
    pub seed: u64,
    /// Replacement draws needed before a usable sample was obtained.
    pub retries: usize,
    pub converged: bool,
    pub heywood_count: usize,
    /// Variance of the first principal component of the case-level
    /// residuals `z − fΛ̂ᵀ − e` (the quantity tabulated per cell).
    pub eig1: f64,
    /// Largest eigenvalue of the zero-diagonal residual correlation matrix
    /// `R − Λ̂Λ̂ᵀ − Ψ̂²`.
    pub eig1_omega: f64,
    /// `r(u₁, f_k)` for k = 1..q, eq12-true-scores.
    pub r_eq12: Vec<f64>,
    /// `r(u₁, f_k)` for k = 1..q, direct projection.
    pub r_direct: Vec<f64>,
    /// Tucker congruence of each matched factor; not written to CSV.
    pub congruences: Vec<f64>,
    /// Sum of residual eigenvalues; not written to CSV.
    pub eigenvalue_sum: f64,
}

impl SimulationRecord {
    pub fn correlations(&self, strategy: ScoringStrategy) -> &[f64] {
        match strategy {
            ScoringStrategy::Eq12TrueScores => &self.r_eq12,
            ScoringStrategy::DirectProjection => &self.r_direct,
        }
    }
}

/// Per-replication outcome before it is tagged with cell and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub converged: bool,
    pub heywood_count: usize,
    pub eig1: f64,
    pub eig1_omega: f64,
    pub eigenvalue_sum: f64,
    pub r_eq12: Vec<f64>,
    pub r_direct: Vec<f64>,
    pub congruences: Vec<f64>,
}

/// Runs the full analysis pipeline on one sample.
pub fn analyze_sample(model: &PopulationModel, sample: &Sample, opts: &ReplicationOptions) -> Result<ReplicationOutcome> {
    let q = model.q();
    let r = sample_correlation(sample)?;
    let sol = fit_ml(&r, q, &opts.fit)?;
    let rotated = sol.rotated_varimax(opts.kaiser_normalize);
    let matching = match_factors(&rotated.lambda_hat, model.lambda())?;
    let aligned = rotated.aligned(&matching);

    let omega = residual_from_parts(&r, &aligned.common_covariance())?;
    let decomp = decompose_residuals(&omega)?;
    let mut per_strategy = Vec::with_capacity(2);
    for strategy in ScoringStrategy::ALL {
        let scores = component_scores(&decomp, sample, &aligned.lambda_hat, strategy)?;
        let first = ComponentScores {
            u: scores.u.columns(0, 1).into_owned(),
            strategy,
        };
        let corr = component_factor_correlations(&first, &sample.f)?;
        per_strategy.push(corr.row(0).iter().copied().collect::<Vec<_>>());
    }
    let spectrum = residual_score_spectrum(&residual_scores(sample, &aligned.lambda_hat)?)?;
    let r_direct = per_strategy.pop().unwrap_or_default();
    let r_eq12 = per_strategy.pop().unwrap_or_default();
    Ok(ReplicationOutcome {
        converged: sol.converged,
        heywood_count: sol.heywood_count(),
        eig1: spectrum[0],
        eig1_omega: decomp.first_eigenvalue(),
        eigenvalue_sum: decomp.eigenvalue_sum(),
        r_eq12,
        r_direct,
        congruences: matching.congruences,
    })
}

/// Draws a sample of size `n` from the generative model and analyzes it.
pub fn run_replication(model: &PopulationModel, n: usize, seed: u64, opts: &ReplicationOptions) -> Result<ReplicationOutcome> {
    let sample = generate_sample(model, n, seed)?;
    analyze_sample(model, &sample, opts)
}

fn tag(cell: Cell, rep: usize, seed: u64, retries: usize, o: ReplicationOutcome) -> SimulationRecord {
    SimulationRecord {
        cell,
        rep,
        seed,
        retries,
        converged: o.converged,
        heywood_count: o.heywood_count,
        eig1: o.eig1,
        eig1_omega: o.eig1_omega,
        r_eq12: o.r_eq12,
        r_direct: o.r_direct,
        congruences: o.congruences,
        eigenvalue_sum: o.eigenvalue_sum,
    }
}

/// Runs one (cell, rep) work unit, drawing replacement seeds from the
/// reserved attempt stream when a draw is degenerate.
fn run_unit(
    model: &PopulationModel,
    cell: Cell,
    cell_index: usize,
    rep: usize,
    base_seed: u64,
    population: Option<&Sample>,
    opts: &ReplicationOptions,
) -> Result<SimulationRecord> {
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let s = seed::replication_seed(base_seed, cell_index, rep, attempt);
        let outcome = match population {
            Some(pop) => subsample(pop, cell.n, s).and_then(|smp| analyze_sample(model, &smp, opts)),
            None => run_replication(model, cell.n, s, opts),
        };
        match outcome {
            Ok(o) => return Ok(tag(cell, rep, s, attempt, o)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::DegenerateData("no attempts made".into())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResults {
    pub config: SimulationConfig,
    /// Ordered by cell index, then replication.
    pub records: Vec<SimulationRecord>,
}

fn run_units(units: Vec<(usize, Cell, usize)>, job: impl Fn(usize, Cell, usize) -> Result<SimulationRecord> + Sync + Send, threads: Option<usize>) -> Result<Vec<SimulationRecord>> {
    match threads {
        Some(1) => units.into_iter().map(|(ci, c, r)| job(ci, c, r)).collect(),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
            pool.install(|| units.into_par_iter().map(|(ci, c, r)| job(ci, c, r)).collect())
        }
        None => units.into_par_iter().map(|(ci, c, r)| job(ci, c, r)).collect(),
    }
}

/// Runs every (cell, replication) pair. The output depends only on `config`,
/// not on the number of worker threads.
pub fn run_grid(config: &SimulationConfig) -> Result<SimulationResults> {
    config.validate()?;
    let cells = config.cells();
    let opts = config.replication_options();
    let mut records = Vec::with_capacity(cells.len() * config.reps);

    match config.population_mode {
        PopulationMode::Generative => {
            let models = cells.iter().map(|c| config.model_for(c)).collect::<Result<Vec<_>>>()?;
            let units: Vec<_> = cells
                .iter()
                .enumerate()
                .flat_map(|(ci, &c)| (0..config.reps).map(move |r| (ci, c, r)))
                .collect();
            records = run_units(
                units,
                |ci, c, r| run_unit(&models[ci], c, ci, r, config.base_seed, None, &opts),
                config.threads,
            )?;
        }
        PopulationMode::FixedPopulation => {
            // One population per (loading, q), built once and shared by its cells.
            let mut models: Vec<(f64, usize)> = Vec::new();
            for c in &cells {
                if !models.iter().any(|&(l, q)| l == c.loading && q == c.q) {
                    models.push((c.loading, c.q));
                }
            }
            for (mi, &(loading, q)) in models.iter().enumerate() {
                let model = PopulationModel::simple_structure(q, loading, config.vars_per_factor)?;
                let population =
                    generate_fixed_population(&model, config.fixed_population_size, seed::population_seed(config.base_seed, mi))?;
                let units: Vec<_> = cells
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.loading == loading && c.q == q)
                    .flat_map(|(ci, &c)| (0..config.reps).map(move |r| (ci, c, r)))
                    .collect();
                let batch = run_units(
                    units,
                    |ci, c, r| run_unit(&model, c, ci, r, config.base_seed, Some(&population), &opts),
                    config.threads,
                )?;
                records.extend(batch);
            }
            let index_of = |c: &Cell| cells.iter().position(|x| x == c).unwrap_or(usize::MAX);
            records.sort_by_key(|rec| (index_of(&rec.cell), rec.rep));
        }
    }
    Ok(SimulationResults {
        config: config.clone(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSummary {
    pub cell: Cell,
    pub count: usize,
    pub mean: f64,
    /// Sample SD (n − 1 divisor); absent for a single record.
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellDiagnostics {
    pub cell: Cell,
    pub count: usize,
    pub nonconverged: usize,
    pub heywood_solutions: usize,
    pub retries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

fn group_by_cell(records: &[SimulationRecord]) -> Vec<(Cell, Vec<&SimulationRecord>)> {
    let mut order: Vec<Cell> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&SimulationRecord>> = BTreeMap::new();
    for rec in records {
        let idx = match order.iter().position(|c| c.key() == rec.cell.key()) {
            Some(i) => i,
            None => {
                order.push(rec.cell);
                order.len() - 1
            }
        };
        groups.entry(idx).or_default().push(rec);
    }
    groups.into_iter().map(|(i, g)| (order[i], g)).collect()
}

/// Which first-eigenvalue statistic a table aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenStatistic {
    /// Variance of the first principal component of the residual scores.
    ResidualScores,
    /// Largest eigenvalue of the residual correlation matrix.
    ResidualCorrelation,
}

impl EigenStatistic {
    fn of(self, rec: &SimulationRecord) -> f64 {
        match self {
            EigenStatistic::ResidualScores => rec.eig1,
            EigenStatistic::ResidualCorrelation => rec.eig1_omega,
        }
    }
}

/// Mean and SD of the first residual-score eigenvalue for every cell in
/// `records`, in first-appearance order.
pub fn aggregate_table2(records: &[SimulationRecord]) -> Vec<EigenSummary> {
    aggregate_eigenvalues(records, EigenStatistic::ResidualScores)
}

pub fn aggregate_eigenvalues(records: &[SimulationRecord], stat: EigenStatistic) -> Vec<EigenSummary> {
    group_by_cell(records)
        .into_iter()
        .map(|(cell, recs)| {
            let count = recs.len();
            let mean = recs.iter().map(|r| stat.of(r)).sum::<f64>() / count as f64;
            let sd = (count > 1).then(|| {
                let ss: f64 = recs.iter().map(|r| (stat.of(r) - mean).powi(2)).sum();
                (ss / (count - 1) as f64).sqrt()
            });
            EigenSummary { cell, count, mean, sd }
        })
        .collect()
}

/// Root mean squared `r(u₁, f_k)` over replications and all q factors.
pub fn rmsc_of<'a>(recs: impl IntoIterator<Item = &'a SimulationRecord>, strategy: ScoringStrategy) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for rec in recs {
        for r in rec.correlations(strategy) {
            sum += r * r;
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        (sum / count as f64).sqrt()
    }
}

pub fn aggregate_rmsc(records: &[SimulationRecord], strategy: ScoringStrategy) -> Vec<(Cell, f64)> {
    group_by_cell(records)
        .into_iter()
        .map(|(cell, recs)| (cell, rmsc_of(recs, strategy)))
        .collect()
}

pub fn cell_diagnostics(records: &[SimulationRecord]) -> Vec<CellDiagnostics> {
    group_by_cell(records)
        .into_iter()
        .map(|(cell, recs)| CellDiagnostics {
            cell,
            count: recs.len(),
            nonconverged: recs.iter().filter(|r| !r.converged).count(),
            heywood_solutions: recs.iter().filter(|r| r.heywood_count > 0).count(),
            retries: recs.iter().map(|r| r.retries).sum(),
        })
        .collect()
}

fn first_factor_correlations(records: &[SimulationRecord], q: usize, strategy: ScoringStrategy) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.cell.q == q)
        .filter_map(|r| r.correlations(strategy).first().copied())
        .collect()
}

/// Equal-width bins over [−1, 1]; the last bin is closed on the right.
pub fn histogram_values(values: &[f64], bin_width: f64) -> Vec<HistogramBin> {
    let bins = (2.0 / bin_width).round().max(1.0) as usize;
    let width = 2.0 / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            low: -1.0 + b as f64 * width,
            high: if b + 1 == bins { 1.0 } else { -1.0 + (b + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &v in values {
        let idx = (((v + 1.0) / width).floor().max(0.0) as usize).min(bins - 1);
        out[idx].count += 1;
    }
    out
}

/// Histogram of `r(u₁, f₁)` pooled over all cells with `q` factors.
pub fn histogram_r(records: &[SimulationRecord], q: usize, bin_width: f64, strategy: ScoringStrategy) -> Vec<HistogramBin> {
    histogram_values(&first_factor_correlations(records, q, strategy), bin_width)
}

/// Fraction of pooled `|r(u₁, f₁)|` above `threshold` for `q` factors.
pub fn tail_fraction(records: &[SimulationRecord], q: usize, threshold: f64, strategy: ScoringStrategy) -> f64 {
    let values = first_factor_correlations(records, q, strategy);
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|r| r.abs() > threshold).count() as f64 / values.len() as f64
}

/// Excess kurtosis of pooled `r(u₁, f₁)` for `q` factors.
pub fn excess_kurtosis(records: &[SimulationRecord], q: usize, strategy: ScoringStrategy) -> f64 {
    let v = first_factor_correlations(records, q, strategy);
    let n = v.len() as f64;
    if v.len() < 2 {
        return f64::NAN;
    }
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Factor counts present in `records`, ascending.
pub fn factor_counts(records: &[SimulationRecord]) -> Vec<usize> {
    let mut qs: Vec<usize> = records.iter().map(|r| r.cell.q).collect();
    qs.sort_unstable();
    qs.dedup();
    qs
}

impl SimulationResults {
    pub fn table2(&self) -> Vec<EigenSummary> {
        aggregate_table2(&self.records)
    }

    pub fn eigenvalues(&self, stat: EigenStatistic) -> Vec<EigenSummary> {
        aggregate_eigenvalues(&self.records, stat)
    }

    pub fn rmsc(&self, strategy: ScoringStrategy) -> Vec<(Cell, f64)> {
        aggregate_rmsc(&self.records, strategy)
    }

    pub fn histogram(&self, q: usize, bin_width: f64, strategy: ScoringStrategy) -> Vec<HistogramBin> {
        histogram_r(&self.records, q, bin_width, strategy)
    }

    pub fn tail_fraction(&self, q: usize, threshold: f64, strategy: ScoringStrategy) -> f64 {
        tail_fraction(&self.records, q, threshold, strategy)
    }

    pub fn diagnostics(&self) -> Vec<CellDiagnostics> {
        cell_diagnostics(&self.records)
    }

    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<()> {
        crate::report::write_runs_csv(&self.records, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(cell: Cell, eig1: f64, r: Vec<f64>) -> SimulationRecord {
        SimulationRecord {
            cell,
            rep: 0,
            seed: 0,
            retries: 0,
            converged: true,
            heywood_count: 0,
            eig1,
            eig1_omega: eig1,
            r_eq12: r.clone(),
            r_direct: r,
            congruences: vec![],
            eigenvalue_sum: 0.0,
        }
    }

    #[test]
    fn default_grid_has_eighteen_cells() {
        let cfg = SimulationConfig::full();
        assert_eq!(cfg.cells().len(), 18);
        assert_eq!(cfg.reps, 1000);
        assert_eq!(SimulationConfig::desk().reps, 300);
    }

    #[test]
    fn validation() {
        let mut cfg = SimulationConfig::desk();
        cfg.reps = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SimulationConfig::desk();
        cfg.loadings.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = SimulationConfig::desk();
        cfg.sample_sizes = vec![20];
        assert!(cfg.validate().is_err());
        assert!(SimulationConfig::desk().validate().is_ok());
    }

    #[test]
    fn rmsc_edge_cases() {
        let c = Cell { loading: 0.4, n: 150, q: 3 };
        let zeros = vec![record(c, 0.1, vec![0.0; 3]); 4];
        assert_eq!(rmsc_of(&zeros, ScoringStrategy::Eq12TrueScores), 0.0);
        let ones = vec![record(c, 0.1, vec![1.0, -1.0, 1.0]); 4];
        assert!((rmsc_of(&ones, ScoringStrategy::Eq12TrueScores) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn table2_single_record_has_no_sd() {
        let c = Cell { loading: 0.4, n: 150, q: 3 };
        let t = aggregate_table2(&[record(c, 0.5, vec![0.0; 3])]);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].sd, None);
        assert_eq!(t[0].mean, 0.5);
        let t = aggregate_table2(&[record(c, 1.0, vec![0.0; 3]), record(c, 3.0, vec![0.0; 3])]);
        assert_eq!(t[0].mean, 2.0);
        assert!((t[0].sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn histogram_bins() {
        let bins = histogram_values(&[0.0, 0.0, 0.0], 0.05);
        assert_eq!(bins.len(), 40);
        let nonempty: Vec<_> = bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(nonempty.len(), 1);
        assert!(nonempty[0].low <= 0.0 && 0.0 < nonempty[0].high);
        let bins = histogram_values(&[-1.0, 1.0, 0.999, -0.2], 0.05);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 4);
        assert_eq!(bins[0].count, 1);
        assert_eq!(bins[39].count, 2);
        assert_eq!(bins[39].high, 1.0);
    }

    #[test]
    fn tail_fraction_threshold_one_is_zero() {
        let c = Cell { loading: 0.4, n: 150, q: 3 };
        let recs = vec![record(c, 0.1, vec![0.9, 0.0, 0.0]), record(c, 0.1, vec![-0.5, 0.0, 0.0])];
        assert_eq!(tail_fraction(&recs, 3, 1.0, ScoringStrategy::Eq12TrueScores), 0.0);
        assert_eq!(tail_fraction(&recs, 3, 0.8, ScoringStrategy::Eq12TrueScores), 0.5);
        assert_eq!(tail_fraction(&recs, 6, 0.8, ScoringStrategy::Eq12TrueScores), 0.0);
    }

    #[test]
    fn replication_is_deterministic_and_bounded() {
        let m = PopulationModel::simple_structure(3, 0.6, 5).unwrap();
        let opts = ReplicationOptions::default();
        let a = run_replication(&m, 150, 77, &opts).unwrap();
        let b = run_replication(&m, 150, 77, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.r_eq12.iter().chain(&a.r_direct).all(|r| r.abs() <= 1.0));
        assert!(a.eig1 > 0.0);
        assert!(a.eigenvalue_sum.abs() < 1e-10);
    }

    #[test]
    fn large_sample_residual_is_small() {
        let m = PopulationModel::simple_structure(3, 0.4, 5).unwrap();
        let o = run_replication(&m, 100_000, 5, &ReplicationOptions::default()).unwrap();
        assert!(o.eig1 < 0.01, "{}", o.eig1);
    }

    #[test]
    fn one_rep_grid() {
        let cfg = SimulationConfig {
            reps: 1,
            ..SimulationConfig::desk()
        };
        let res = run_grid(&cfg).unwrap();
        assert_eq!(res.records.len(), 18);
        assert_eq!(res.table2().len(), 18);
    }

    #[test]
    fn fixed_population_mode_is_deterministic_across_threads() {
        let cfg = SimulationConfig {
            reps: 3,
            sample_sizes: vec![150, 300],
            loadings: vec![0.6],
            factor_counts: vec![3],
            population_mode: PopulationMode::FixedPopulation,
            fixed_population_size: 5_000,
            threads: Some(1),
            ..SimulationConfig::desk()
        };
        let a = run_grid(&cfg).unwrap();
        let b = run_grid(&SimulationConfig { threads: Some(3), ..cfg.clone() }).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 6);
        assert_eq!(a.records[0].cell.n, 150);
        assert_eq!(a.records[3].cell.n, 300);

        let too_big = SimulationConfig {
            fixed_population_size: 200,
            ..cfg
        };
        assert!(run_grid(&too_big).is_err());
    }
}
