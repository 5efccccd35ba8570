//! CSV emission and parsing for simulation outputs.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::residuals::ScoringStrategy;
use crate::sim::{
    aggregate_eigenvalues, aggregate_rmsc, aggregate_table2, cell_diagnostics, excess_kurtosis, factor_counts,
    histogram_r, tail_fraction, Cell, EigenStatistic, EigenSummary, SimulationRecord,
};

/// Widest factor count present, used to size the correlation columns.
fn max_q(records: &[SimulationRecord]) -> usize {
    records.iter().map(|r| r.cell.q).max().unwrap_or(0)
}

fn strategy_prefix(s: ScoringStrategy) -> &'static str {
    match s {
        ScoringStrategy::Eq12TrueScores => "eq12",
        ScoringStrategy::DirectProjection => "direct",
    }
}

/// One row per record: `n,loading,q,rep,seed,converged,heywood_count,eig1`,
/// then `eq12_r_f1..` and `direct_r_f1..` (blank past the record's q), then
/// `eig1_omega,retries`.
pub fn write_runs_csv<W: Write>(records: &[SimulationRecord], out: W) -> Result<()> {
    let width = max_q(records);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["n", "loading", "q", "rep", "seed", "converged", "heywood_count", "eig1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for s in ScoringStrategy::ALL {
        header.extend((1..=width).map(|k| format!("{}_r_f{k}", strategy_prefix(s))));
    }
    header.push("eig1_omega".into());
    header.push("retries".into());
    w.write_record(&header)?;
    for rec in records {
        let mut row = vec![
            rec.cell.n.to_string(),
            rec.cell.loading.to_string(),
            rec.cell.q.to_string(),
            rec.rep.to_string(),
            rec.seed.to_string(),
            u8::from(rec.converged).to_string(),
            rec.heywood_count.to_string(),
            rec.eig1.to_string(),
        ];
        for s in ScoringStrategy::ALL {
            let rs = rec.correlations(s);
            row.extend((0..width).map(|k| rs.get(k).map(|v| v.to_string()).unwrap_or_default()));
        }
        row.push(rec.eig1_omega.to_string());
        row.push(rec.retries.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    rec.get(idx)
        .ok_or_else(|| Error::Parse(format!("missing column {name}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("invalid {name}: '{}'", rec.get(idx).unwrap_or(""))))
}

/// Parses a `runs.csv` written by [`write_runs_csv`].
pub fn read_runs_csv<R: Read>(input: R) -> Result<Vec<SimulationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("runs.csv lacks column '{name}'")))
    };
    let fixed = ["n", "loading", "q", "rep", "seed", "converged", "heywood_count", "eig1", "retries", "eig1_omega"]
        .iter()
        .map(|n| col(n))
        .collect::<Result<Vec<_>>>()?;
    let width = header.iter().filter(|h| h.starts_with("eq12_r_f")).count();

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let q: usize = field(&row, fixed[2], "q")?;
        if q > width {
            return Err(Error::Parse(format!("row has q = {q} but only {width} correlation columns")));
        }
        let mut rs = [Vec::new(), Vec::new()];
        for (si, s) in ScoringStrategy::ALL.iter().enumerate() {
            for k in 1..=q {
                let name = format!("{}_r_f{k}", strategy_prefix(*s));
                rs[si].push(field::<f64>(&row, col(&name)?, &name)?);
            }
        }
        let [r_eq12, r_direct] = rs;
        let converged: u8 = field(&row, fixed[5], "converged")?;
        out.push(SimulationRecord {
            cell: Cell {
                n: field(&row, fixed[0], "n")?,
                loading: field(&row, fixed[1], "loading")?,
                q,
            },
            rep: field(&row, fixed[3], "rep")?,
            seed: field(&row, fixed[4], "seed")?,
            converged: converged != 0,
            heywood_count: field(&row, fixed[6], "heywood_count")?,
            eig1: field(&row, fixed[7], "eig1")?,
            eig1_omega: field(&row, fixed[9], "eig1_omega")?,
            r_eq12,
            r_direct,
            retries: field(&row, fixed[8], "retries")?,
            congruences: Vec::new(),
            eigenvalue_sum: f64::NAN,
        });
    }
    Ok(out)
}

/// Published means and SDs of the first residual eigenvalue, keyed by
/// (loading, n) and listing (3-factor mean, SD, 6-factor mean, SD).
pub const REFERENCE_TABLE2: [((f64, usize), [f64; 4]); 9] = [
    ((0.40, 150), [0.66, 0.67, 2.02, 1.02]),
    ((0.40, 300), [0.17, 0.13, 0.54, 0.51]),
    ((0.40, 900), [0.05, 0.01, 0.11, 0.02]),
    ((0.60, 150), [0.16, 0.04, 0.36, 0.07]),
    ((0.60, 300), [0.08, 0.02, 0.17, 0.03]),
    ((0.60, 900), [0.02, 0.01, 0.05, 0.01]),
    ((0.80, 150), [0.08, 0.03, 0.20, 0.04]),
    ((0.80, 300), [0.04, 0.01, 0.10, 0.02]),
    ((0.80, 900), [0.01, 0.00, 0.03, 0.01]),
];

/// Published (mean, SD) for a cell, if it is part of the reference grid.
pub fn reference_table2(cell: &Cell) -> Option<(f64, f64)> {
    let (_, v) = REFERENCE_TABLE2
        .iter()
        .find(|((l, n), _)| (l - cell.loading).abs() < 1e-9 && *n == cell.n)?;
    match cell.q {
        3 => Some((v[0], v[1])),
        6 => Some((v[2], v[3])),
        _ => None,
    }
}

/// Spot-check targets: (cell, lower bound, upper bound).
pub const TABLE2_SPOT_CHECKS: [((f64, usize, usize), f64, f64); 5] = [
    ((0.40, 900, 3), 0.04, 0.06),
    ((0.60, 150, 3), 0.13, 0.19),
    ((0.80, 900, 6), 0.02, 0.04),
    ((0.60, 300, 6), 0.13, 0.21),
    ((0.40, 150, 6), 1.3, 2.7),
];

/// RMSC band for three-factor cells (exclusive lower bound).
pub const RMSC_BAND_Q3: f64 = 0.45;
/// RMSC band for six-factor cells (inclusive).
pub const RMSC_BAND_Q6: (f64, f64) = (0.30, 0.50);
/// Published pooled tail fractions `|r(u₁, f₁)| > .80`: (q, fraction, tolerance).
pub const REFERENCE_TAILS: [(usize, f64, f64); 2] = [(3, 0.171, 0.04), (6, 0.029, 0.02)];
pub const TAIL_THRESHOLD: f64 = 0.80;
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// `loading,n,q,count,mean_eig1,sd_eig1,mean_eig1_omega,sd_eig1_omega`.
pub fn write_table2_csv<W: Write>(records: &[SimulationRecord], out: W) -> Result<()> {
    let scores = aggregate_eigenvalues(records, EigenStatistic::ResidualScores);
    let omega = aggregate_eigenvalues(records, EigenStatistic::ResidualCorrelation);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["loading", "n", "q", "count", "mean_eig1", "sd_eig1", "mean_eig1_omega", "sd_eig1_omega"])?;
    for (s, o) in scores.iter().zip(&omega) {
        w.write_record([
            format!("{:.2}", s.cell.loading),
            s.cell.n.to_string(),
            s.cell.q.to_string(),
            s.count.to_string(),
            format!("{:.6}", s.mean),
            fmt_opt(s.sd),
            format!("{:.6}", o.mean),
            fmt_opt(o.sd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `loading,n,q,strategy,rmsc`, both strategies per cell.
pub fn write_figure2_csv<W: Write>(records: &[SimulationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["loading", "n", "q", "strategy", "rmsc"])?;
    let per_strategy: Vec<_> = ScoringStrategy::ALL.iter().map(|&s| aggregate_rmsc(records, s)).collect();
    for i in 0..per_strategy[0].len() {
        for (s, rows) in ScoringStrategy::ALL.iter().zip(&per_strategy) {
            let (cell, rmsc) = rows[i];
            w.write_record([
                format!("{:.2}", cell.loading),
                cell.n.to_string(),
                cell.q.to_string(),
                s.as_str().to_string(),
                format!("{rmsc:.6}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `q,strategy,bin_low,bin_high,count` for `r(u₁, f₁)` pooled by factor count.
pub fn write_histogram_csv<W: Write>(records: &[SimulationRecord], bin_width: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["q", "strategy", "bin_low", "bin_high", "count"])?;
    for q in factor_counts(records) {
        for s in ScoringStrategy::ALL {
            for bin in histogram_r(records, q, bin_width, s) {
                w.write_record([
                    q.to_string(),
                    s.as_str().to_string(),
                    format!("{:.4}", bin.low),
                    format!("{:.4}", bin.high),
                    bin.count.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `q,strategy,threshold,fraction,excess_kurtosis` pooled by factor count.
pub fn write_tails_csv<W: Write>(records: &[SimulationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["q", "strategy", "threshold", "fraction", "excess_kurtosis"])?;
    for q in factor_counts(records) {
        for s in ScoringStrategy::ALL {
            w.write_record([
                q.to_string(),
                s.as_str().to_string(),
                format!("{TAIL_THRESHOLD:.2}"),
                format!("{:.6}", tail_fraction(records, q, TAIL_THRESHOLD, s)),
                format!("{:.6}", excess_kurtosis(records, q, s)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn same_cell(cell: &Cell, key: (f64, usize, usize)) -> bool {
    (cell.loading - key.0).abs() < 1e-9 && cell.n == key.1 && cell.q == key.2
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "MISS"
    }
}

/// Cells violating the expected ordering: eigenvalue falls with n within
/// (loading, q) and with loading within (n, q).
pub fn monotonicity_violations(summaries: &[EigenSummary]) -> Vec<String> {
    let mut out = Vec::new();
    for a in summaries {
        for b in summaries {
            if a.cell.q != b.cell.q {
                continue;
            }
            let by_n = a.cell.loading == b.cell.loading && a.cell.n < b.cell.n;
            let by_loading = a.cell.n == b.cell.n && a.cell.loading < b.cell.loading;
            if (by_n || by_loading) && a.mean <= b.mean {
                out.push(format!(
                    "({:.2}, {}, {}) = {:.4} <= ({:.2}, {}, {}) = {:.4}",
                    a.cell.loading, a.cell.n, a.cell.q, a.mean, b.cell.loading, b.cell.n, b.cell.q, b.mean
                ));
            }
        }
    }
    out
}

/// Whether every cell of `strategy` lies in its factor-count RMSC band.
pub fn rmsc_bands_met(rows: &[(Cell, f64)]) -> bool {
    rows.iter().all(|(c, r)| match c.q {
        3 => *r > RMSC_BAND_Q3,
        6 => (RMSC_BAND_Q6.0..=RMSC_BAND_Q6.1).contains(r),
        _ => true,
    })
}

/// Plain-text comparison of the aggregates with the published values.
pub fn summary_text(records: &[SimulationRecord], strategy: ScoringStrategy) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let table = aggregate_table2(records);
    let omega = aggregate_eigenvalues(records, EigenStatistic::ResidualCorrelation);
    let _ = writeln!(s, "records: {}  cells: {}  strategy: {strategy}", records.len(), table.len());
    let _ = writeln!(s);
    let _ = writeln!(s, "First residual eigenvalue");
    let _ = writeln!(
        s,
        "{:>7} {:>5} {:>2} {:>6} {:>9} {:>9} {:>9} {:>9} {:>11}",
        "loading", "n", "q", "count", "mean", "sd", "ref.mean", "ref.sd", "omega.mean"
    );
    for (t, o) in table.iter().zip(&omega) {
        let reference = reference_table2(&t.cell);
        let _ = writeln!(
            s,
            "{:>7.2} {:>5} {:>2} {:>6} {:>9.4} {:>9} {:>9} {:>9} {:>11.4}",
            t.cell.loading,
            t.cell.n,
            t.cell.q,
            t.count,
            t.mean,
            t.sd.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            reference.map(|r| format!("{:.2}", r.0)).unwrap_or_else(|| "-".into()),
            reference.map(|r| format!("{:.2}", r.1)).unwrap_or_else(|| "-".into()),
            o.mean
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Spot checks");
    for (key, lo, hi) in TABLE2_SPOT_CHECKS {
        if let Some(t) = table.iter().find(|t| same_cell(&t.cell, key)) {
            let ok = t.mean >= lo && t.mean <= hi;
            let _ = writeln!(
                s,
                "  ({:.2}, {}, {})  mean {:.4}  target [{lo:.2}, {hi:.2}]  {}",
                key.0,
                key.1,
                key.2,
                t.mean,
                mark(ok)
            );
        }
    }
    let violations = monotonicity_violations(&table);
    let _ = writeln!(s, "Monotonicity: {}", if violations.is_empty() { "ok" } else { "MISS" });
    for v in &violations {
        let _ = writeln!(s, "  {v}");
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "RMSC of r(u1, f_k)");
    let rows: Vec<_> = ScoringStrategy::ALL.iter().map(|&st| aggregate_rmsc(records, st)).collect();
    let _ = writeln!(s, "{:>7} {:>5} {:>2} {:>18} {:>18}", "loading", "n", "q", ScoringStrategy::ALL[0], ScoringStrategy::ALL[1]);
    for i in 0..rows[0].len() {
        let c = rows[0][i].0;
        let _ = writeln!(s, "{:>7.2} {:>5} {:>2} {:>18.4} {:>18.4}", c.loading, c.n, c.q, rows[0][i].1, rows[1][i].1);
    }
    for (st, r) in ScoringStrategy::ALL.iter().zip(&rows) {
        let _ = writeln!(
            s,
            "  bands (q=3 > {RMSC_BAND_Q3:.2}, q=6 in [{:.2}, {:.2}]) under {st}: {}",
            RMSC_BAND_Q6.0,
            RMSC_BAND_Q6.1,
            mark(rmsc_bands_met(r))
        );
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "Pooled |r(u1, f1)| > {TAIL_THRESHOLD:.2} under {strategy}");
    for q in factor_counts(records) {
        let frac = tail_fraction(records, q, TAIL_THRESHOLD, strategy);
        let kurt = excess_kurtosis(records, q, strategy);
        match REFERENCE_TAILS.iter().find(|t| t.0 == q) {
            Some(&(_, target, tol)) => {
                let _ = writeln!(
                    s,
                    "  q={q}: {frac:.4}  target {target:.3} +/- {tol:.2}  {}  excess kurtosis {kurt:.3}",
                    mark((frac - target).abs() <= tol)
                );
            }
            None => {
                let _ = writeln!(s, "  q={q}: {frac:.4}  excess kurtosis {kurt:.3}");
            }
        }
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "Diagnostics (nonconverged / with Heywood cases / replacement draws)");
    for d in cell_diagnostics(records) {
        let _ = writeln!(
            s,
            "  ({:.2}, {}, {})  {} / {} / {}",
            d.cell.loading, d.cell.n, d.cell.q, d.nonconverged, d.heywood_solutions, d.retries
        );
    }
    s
}
