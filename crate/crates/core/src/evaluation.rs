//! Forecast error metrics and the Friedman / Nemenyi comparison of several
//! methods over a `tests x methods` loss matrix.
//!
//! Nemenyi `q_alpha` (studentized range with infinite degrees of freedom,
//! divided by `sqrt(2)`):
//!
//! | k          | 2     | 3     | 4     | 5     | 6     | 7     | 8     | 9     | 10    |
//! |------------|-------|-------|-------|-------|-------|-------|-------|-------|-------|
//! | alpha 0.05 | 1.960 | 2.343 | 2.569 | 2.728 | 2.850 | 2.949 | 3.031 | 3.102 | 3.164 |
//! | alpha 0.10 | 1.645 | 2.052 | 2.291 | 2.459 | 2.589 | 2.693 | 2.780 | 2.855 | 2.920 |

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {predicted} predictions for {actual} observations")]
    Length { predicted: usize, actual: usize },
    #[error("no observations")]
    Empty,
    #[error("actual series is constant, R-squared is undefined")]
    DegenerateVariance,
    #[error("score at test {test}, method {method} is not a finite number")]
    NonFinite { test: usize, method: usize },
    #[error("need at least 2 tests and 2 methods, got {tests} x {methods}")]
    TooFew { tests: usize, methods: usize },
    #[error("row {row} has {found} scores, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("no Nemenyi q value for k = {k} (table covers 2..=10)")]
    UnsupportedK { k: usize },
    #[error("no table for alpha = {0} (supported: 0.05, 0.10)")]
    UnsupportedAlpha(f64),
    #[error("{0} method names for {1} score columns")]
    Names(usize, usize),
    #[error("score CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

fn check_pair(predicted: &[f64], actual: &[f64]) -> Result<()> {
    if predicted.len() != actual.len() {
        return Err(EvalError::Length {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual)?;
    Ok(predicted.iter().zip(actual).map(|(y, x)| (y - x).abs()).sum::<f64>() / actual.len() as f64)
}

pub fn mse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual)?;
    Ok(predicted.iter().zip(actual).map(|(y, x)| (y - x) * (y - x)).sum::<f64>() / actual.len() as f64)
}

/// `1 - SS_res / SS_tot`, with `SS_tot` taken about the mean of `actual`.
pub fn r_squared(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|x| (x - mean) * (x - mean)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::DegenerateVariance);
    }
    let ss_res: f64 = predicted.iter().zip(actual).map(|(y, x)| (y - x) * (y - x)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub mse: f64,
    /// `None` when the actual series is constant.
    pub r_squared: Option<f64>,
    pub n: usize,
}

impl MetricReport {
    pub fn compute(predicted: &[f64], actual: &[f64]) -> Result<MetricReport> {
        let r_squared = match r_squared(predicted, actual) {
            Ok(r) => Some(r),
            Err(EvalError::DegenerateVariance) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricReport {
            mae: mae(predicted, actual)?,
            mse: mse(predicted, actual)?,
            r_squared,
            n: actual.len(),
        })
    }
}

/// Naive baseline: every one of the `steps` forecasts repeats the last value.
pub fn persistence_forecast(history: &[f64], steps: usize) -> Result<Vec<f64>> {
    let last = *history.last().ok_or(EvalError::Empty)?;
    Ok(vec![last; steps])
}

/// Ranks of one row, 1 for the lowest score, ties sharing the mean position.
pub fn average_ranks(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean(i+1 ..= j+1)
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = shared;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMatrix {
    pub methods: Vec<String>,
    pub tests: Vec<String>,
    /// `scores[test][method]`, lower is better.
    pub scores: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
}

impl RankMatrix {
    pub fn n_tests(&self) -> usize {
        self.scores.len()
    }

    pub fn n_methods(&self) -> usize {
        self.methods.len()
    }

    /// Column sums of the rank matrix.
    pub fn rank_sums(&self) -> Vec<f64> {
        (0..self.n_methods())
            .map(|m| self.ranks.iter().map(|r| r[m]).sum())
            .collect()
    }

    pub fn average_ranks(&self) -> Vec<f64> {
        let n = self.n_tests() as f64;
        self.rank_sums().into_iter().map(|s| s / n).collect()
    }
}

fn default_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Ranks every test row. Names default to `M1..` and `T1..` when empty.
pub fn rank_methods(scores: &[Vec<f64>], methods: &[String], tests: &[String]) -> Result<RankMatrix> {
    let n = scores.len();
    let k = scores.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(EvalError::TooFew { tests: n, methods: k });
    }
    for (t, row) in scores.iter().enumerate() {
        if row.len() != k {
            return Err(EvalError::Ragged {
                row: t,
                found: row.len(),
                expected: k,
            });
        }
        if let Some(m) = row.iter().position(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite { test: t, method: m });
        }
    }
    let methods = if methods.is_empty() { default_names("M", k) } else { methods.to_vec() };
    if methods.len() != k {
        return Err(EvalError::Names(methods.len(), k));
    }
    let tests = if tests.is_empty() { default_names("T", n) } else { tests.to_vec() };
    if tests.len() != n {
        return Err(EvalError::Names(tests.len(), n));
    }
    Ok(RankMatrix {
        methods,
        tests,
        scores: scores.to_vec(),
        ranks: scores.iter().map(|r| average_ranks(r)).collect(),
    })
}

/// Upper 0.05 and 0.10 quantiles of chi-squared for 1..=9 degrees of freedom.
const CHI2_05: [f64; 9] = [3.841, 5.991, 7.815, 9.488, 11.070, 12.592, 14.067, 15.507, 16.919];
const CHI2_10: [f64; 9] = [2.706, 4.605, 6.251, 7.779, 9.236, 10.645, 12.017, 13.362, 14.684];

const Q_05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_10: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

fn alpha_table<'t>(alpha: f64, at_05: &'t [f64; 9], at_10: &'t [f64; 9]) -> Result<&'t [f64; 9]> {
    if (alpha - 0.05).abs() < 1e-12 {
        Ok(at_05)
    } else if (alpha - 0.10).abs() < 1e-12 {
        Ok(at_10)
    } else {
        Err(EvalError::UnsupportedAlpha(alpha))
    }
}

/// Chi-squared critical value for `df` degrees of freedom at level `alpha`.
pub fn chi2_critical(df: usize, alpha: f64) -> Result<f64> {
    let table = alpha_table(alpha, &CHI2_05, &CHI2_10)?;
    table
        .get(df.wrapping_sub(1))
        .copied()
        .ok_or(EvalError::UnsupportedK { k: df + 1 })
}

/// Nemenyi `q_alpha` for `k` methods.
pub fn nemenyi_q(k: usize, alpha: f64) -> Result<f64> {
    let table = alpha_table(alpha, &Q_05, &Q_10)?;
    if !(2..=10).contains(&k) {
        return Err(EvalError::UnsupportedK { k });
    }
    Ok(table[k - 2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub alpha: f64,
    pub critical_value: f64,
    pub rejected: bool,
}

/// `12 / (n k (k + 1)) * sum R_i^2 - 3 n (k + 1)` with `R_i` the rank sums.
pub fn friedman_statistic(ranks: &RankMatrix) -> f64 {
    let n = ranks.n_tests() as f64;
    let k = ranks.n_methods() as f64;
    let sum_sq: f64 = ranks.rank_sums().iter().map(|r| r * r).sum();
    12.0 / (n * k * (k + 1.0)) * sum_sq - 3.0 * n * (k + 1.0)
}

/// Statistic plus the chi-squared decision with `k - 1` degrees of freedom.
pub fn friedman_test(ranks: &RankMatrix, alpha: f64) -> Result<FriedmanResult> {
    let statistic = friedman_statistic(ranks);
    let df = ranks.n_methods() - 1;
    let critical_value = chi2_critical(df, alpha)?;
    Ok(FriedmanResult {
        statistic,
        degrees_of_freedom: df,
        alpha,
        critical_value,
        rejected: statistic > critical_value,
    })
}

/// `q sqrt(k (k + 1) / (6 n))` for an explicit `q`.
pub fn critical_difference(q: f64, k: usize, n: usize) -> f64 {
    q * (k as f64 * (k as f64 + 1.0) / (6.0 * n as f64)).sqrt()
}

/// Critical difference with `q` taken from the embedded table.
pub fn nemenyi_cd(k: usize, n: usize, alpha: f64) -> Result<f64> {
    Ok(critical_difference(nemenyi_q(k, alpha)?, k, n))
}

/// `|a_i - a_j| > cd` for every pair of average ranks.
pub fn pairwise_significance(average_ranks: &[f64], cd: f64) -> Vec<Vec<bool>> {
    average_ranks
        .iter()
        .map(|a| average_ranks.iter().map(|b| (a - b).abs() > cd).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub methods: Vec<String>,
    pub n_tests: usize,
    pub average_ranks: Vec<f64>,
    pub friedman: FriedmanResult,
    pub q: f64,
    pub critical_difference: f64,
    /// `significant[i][j]` iff the average ranks of `i` and `j` differ by more than the CD.
    pub significant: Vec<Vec<bool>>,
}

impl ComparisonResult {
    /// `method,average_rank,cd` rows for drawing a critical-difference diagram.
    pub fn write_cd_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "method,average_rank,cd")?;
        for (m, r) in self.methods.iter().zip(&self.average_ranks) {
            writeln!(out, "{},{},{}", csv_field(m), r, self.critical_difference)?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Ranks, Friedman test and Nemenyi post-hoc in one pass. The CD and the
/// pairwise matrix are reported whether or not the Friedman test rejects.
/// `q_override` replaces the tabulated `q_alpha`.
pub fn compare_methods(matrix: &ScoreMatrix, alpha: f64, q_override: Option<f64>) -> Result<ComparisonResult> {
    let ranks = rank_methods(&matrix.scores, &matrix.methods, &matrix.tests)?;
    let friedman = friedman_test(&ranks, alpha)?;
    let k = ranks.n_methods();
    let q = match q_override {
        Some(q) => q,
        None => nemenyi_q(k, alpha)?,
    };
    let cd = critical_difference(q, k, ranks.n_tests());
    let average_ranks = ranks.average_ranks();
    Ok(ComparisonResult {
        significant: pairwise_significance(&average_ranks, cd),
        methods: ranks.methods,
        n_tests: ranks.scores.len(),
        average_ranks,
        friedman,
        q,
        critical_difference: cd,
    })
}

/// Losses of several methods on several tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub methods: Vec<String>,
    pub tests: Vec<String>,
    /// `scores[test][method]`.
    pub scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    /// Header `test,<method>...`, then one row per test.
    pub fn read_csv<R: Read>(reader: R) -> Result<ScoreMatrix> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| EvalError::Csv {
            line: 1,
            message: e.to_string(),
        })?;
        let methods: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut tests = Vec::new();
        let mut scores = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| EvalError::Csv {
                line,
                message: e.to_string(),
            })?;
            let mut fields = rec.iter();
            tests.push(fields.next().unwrap_or_default().trim().to_string());
            let row = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| EvalError::Csv {
                        line,
                        message: format!("`{f}` is not a number"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            scores.push(row);
        }
        Ok(ScoreMatrix { methods, tests, scores })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScoreMatrix> {
        ScoreMatrix::read_csv(std::fs::File::open(path)?)
    }
}
