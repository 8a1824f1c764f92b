//! Statistical kernels shared by every pattern metric.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Column, ColumnKind, TransactionTable, MISSING_CODE};

/// Number of equal-frequency bins used to discretize numeric columns for JS.
pub const NUMERIC_JS_BINS: usize = 32;

/// A non-empty multiset of finite values, stored sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample(Vec<f64>);

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample("empirical sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sample contains NaN or infinity".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalSample(values))
    }

    pub fn sorted(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

impl TryFrom<Vec<f64>> for EmpiricalSample {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        EmpiricalSample::new(v)
    }
}

/// Exact 1-D Wasserstein-1 distance, `∫₀¹ |F_a⁻¹(q) − F_b⁻¹(q)| dq`.
///
/// The quantile functions are step functions with breakpoints at `i/n` and
/// `j/m`. Segment lengths are tracked in integer units of `1/(n·m)` so the
/// breakpoint merge is exact; equal sizes reduce to the mean absolute
/// difference of the sorted samples.
pub fn wasserstein1(a: &EmpiricalSample, b: &EmpiricalSample) -> f64 {
    let (xa, xb) = (a.sorted(), b.sorted());
    let (n, m) = (xa.len() as u64, xb.len() as u64);
    if n == m {
        let total: f64 = xa.iter().zip(xb).map(|(x, y)| (x - y).abs()).sum();
        return total / n as f64;
    }
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev: u64 = 0;
    let mut total = 0.0;
    while i < xa.len() && j < xb.len() {
        let next_a = (i as u64 + 1) * m;
        let next_b = (j as u64 + 1) * n;
        let next = next_a.min(next_b);
        total += (next - prev) as f64 * (xa[i] - xb[j]).abs();
        prev = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    total / (n * m) as f64
}

/// Convenience wrapper building both samples from raw values.
pub fn wasserstein1_values(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(wasserstein1(
        &EmpiricalSample::new(a.to_vec())?,
        &EmpiricalSample::new(b.to_vec())?,
    ))
}

fn all_equal(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

/// Pearson correlation; `None` when either side has zero variance or fewer
/// than two points.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    if x.len() < 2 || all_equal(x) || all_equal(y) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Lag-1 autocorrelation: Pearson of `iets[..k-1]` against `iets[1..]`.
/// Undefined (`None`) for fewer than three gaps or a constant shifted vector.
pub fn lag1_autocorr(iets: &[f64]) -> Option<f64> {
    let k = iets.len();
    if k < 3 {
        return None;
    }
    pearson(&iets[..k - 1], &iets[1..])
}

/// Base-2 Jensen-Shannon divergence between two frequency maps (normalized
/// here). Bounded in `[0, 1]`.
pub fn js_divergence<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> Result<f64> {
    let total = |m: &BTreeMap<K, f64>| -> Result<f64> {
        if m.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("frequencies must be finite and >= 0".into()));
        }
        let t: f64 = m.values().sum();
        if t <= 0.0 {
            return Err(Error::EmptySample("frequency map"));
        }
        Ok(t)
    };
    let (tp, tq) = (total(p)?, total(q)?);

    let mut keys: Vec<&K> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut js = 0.0;
    for k in keys {
        let pi = p.get(k).copied().unwrap_or(0.0) / tp;
        let qi = q.get(k).copied().unwrap_or(0.0) / tq;
        let mi = 0.5 * (pi + qi);
        if pi > 0.0 {
            js += 0.5 * pi * (pi / mi).log2();
        }
        if qi > 0.0 {
            js += 0.5 * qi * (qi / mi).log2();
        }
    }
    Ok(js.clamp(0.0, 1.0))
}

/// Pearson correlation matrix over named numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    pub columns: Vec<String>,
    values: Vec<f64>,
}

impl CorrMatrix {
    pub fn from_rows(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = columns.len();
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("correlation matrix must be square".into()));
        }
        Ok(CorrMatrix {
            columns,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.columns.len() + j]
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }
}

/// Mean of `|a_ij − b_ij|` over the strict upper triangle.
pub fn mean_upper_abs_diff(a: &CorrMatrix, b: &CorrMatrix) -> Result<f64> {
    let k = a.dim();
    if k != b.dim() || a.columns != b.columns {
        return Err(Error::InvalidArgument("matrices cover different columns".into()));
    }
    if k < 2 {
        return Err(Error::InsufficientData("need at least 2 columns".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..k {
        for j in (i + 1)..k {
            sum += (a.get(i, j) - b.get(i, j)).abs();
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Pairwise-complete Pearson matrix; pairs without a defined correlation
/// contribute 0.
pub fn correlation_matrix(table: &TransactionTable, columns: &[String]) -> Result<CorrMatrix> {
    let cols: Vec<&[f64]> = columns
        .iter()
        .map(|c| table.numeric(c))
        .collect::<Result<_>>()?;
    let k = cols.len();
    let mut rows = vec![vec![0.0; k]; k];
    for i in 0..k {
        rows[i][i] = 1.0;
        for j in (i + 1)..k {
            let (x, y): (Vec<f64>, Vec<f64>) = cols[i]
                .iter()
                .zip(cols[j])
                .filter(|(a, b)| !a.is_nan() && !b.is_nan())
                .map(|(a, b)| (*a, *b))
                .unzip();
            let r = pearson(&x, &y).unwrap_or(0.0);
            rows[i][j] = r;
            rows[j][i] = r;
        }
    }
    CorrMatrix::from_rows(columns.to_vec(), rows)
}

fn has_variance(values: &[f64]) -> bool {
    let mut it = values.iter().filter(|v| !v.is_nan());
    match it.next() {
        Some(first) => it.any(|v| v != first),
        None => false,
    }
}

/// Numeric columns present in both tables with nonzero variance in each.
pub fn shared_numeric_columns(a: &TransactionTable, b: &TransactionTable) -> Vec<String> {
    let skip = a.schema().entity_col.as_deref();
    a.columns()
        .filter(|(name, _)| Some(*name) != skip)
        .filter_map(|(name, col)| {
            let va = col.as_numeric()?;
            let vb = b.column(name)?.as_numeric()?;
            (has_variance(va) && has_variance(vb)).then(|| name.to_string())
        })
        .collect()
}

/// Mean absolute difference between the two tables' correlation matrices.
pub fn corr_matrix_delta(a: &TransactionTable, b: &TransactionTable) -> Result<f64> {
    let cols = shared_numeric_columns(a, b);
    if cols.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation delta needs 2 usable shared numeric columns, found {}",
            cols.len()
        )));
    }
    mean_upper_abs_diff(&correlation_matrix(a, &cols)?, &correlation_matrix(b, &cols)?)
}

/// Bin edges for `bins` equal-frequency bins fit on `sorted` values.
pub fn quantile_edges(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    if n == 0 || bins < 2 {
        return Vec::new();
    }
    let mut edges: Vec<f64> = (1..bins).map(|k| sorted[(k * n / bins).min(n - 1)]).collect();
    edges.dedup();
    edges
}

fn bin_counts(values: &[f64], edges: &[f64]) -> BTreeMap<usize, f64> {
    let mut counts = BTreeMap::new();
    for v in values.iter().filter(|v| !v.is_nan()) {
        let bin = edges.partition_point(|e| *e <= *v);
        *counts.entry(bin).or_insert(0.0) += 1.0;
    }
    counts
}

fn level_counts(table: &TransactionTable, name: &str) -> BTreeMap<String, f64> {
    let col = table.categorical(name).expect("categorical");
    let mut counts = BTreeMap::new();
    for &c in col.codes() {
        if c != MISSING_CODE {
            *counts.entry(col.levels()[c as usize].clone()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnFidelity {
    pub name: String,
    pub kind: ColumnKind,
    /// JS divergence; numeric columns use equal-frequency bins fit on the
    /// real table.
    pub js: Option<f64>,
    pub w1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FraudRateCheck {
    pub real: f64,
    pub synthetic: f64,
    /// `max(real, syn) / min(real, syn)`; `None` if either rate is zero.
    pub fold_change: Option<f64>,
    pub flagged: bool,
}

/// Fold change above which the fraud-rate check is flagged.
pub const FRAUD_RATE_FLAG_FOLD: f64 = 2.0;

impl FraudRateCheck {
    pub fn new(real: f64, synthetic: f64) -> Self {
        let fold_change = (real > 0.0 && synthetic > 0.0)
            .then(|| real.max(synthetic) / real.min(synthetic));
        let flagged = match fold_change {
            Some(f) => f > FRAUD_RATE_FLAG_FOLD,
            None => real != synthetic,
        };
        FraudRateCheck {
            real,
            synthetic,
            fold_change,
            flagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer1Report {
    pub columns: Vec<ColumnFidelity>,
    /// Mean JS over every compared column.
    pub mean_js_all: Option<f64>,
    /// Mean JS over categorical columns only.
    pub mean_js_categorical: Option<f64>,
    pub corr_delta: Option<f64>,
    pub corr_columns: usize,
    pub fraud_rate: FraudRateCheck,
    /// Columns not compared, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Column-wise marginal similarity, correlation delta and fraud rates.
pub fn layer1_report(real: &TransactionTable, syn: &TransactionTable) -> Result<Layer1Report> {
    let entity = real.schema().entity_col.clone();
    let mut columns = Vec::new();
    let mut skipped = Vec::new();
    for (name, rcol) in real.columns() {
        if Some(name) == entity.as_deref() || Some(name) == syn.schema().entity_col.as_deref() {
            continue;
        }
        let Some(scol) = syn.column(name) else {
            skipped.push((name.to_string(), "absent from synthetic".into()));
            continue;
        };
        if rcol.kind() != scol.kind() {
            skipped.push((name.to_string(), "column kinds differ".into()));
            continue;
        }
        let entry = match (rcol, scol) {
            (Column::Categorical(_), Column::Categorical(_)) => {
                let (p, q) = (level_counts(real, name), level_counts(syn, name));
                ColumnFidelity {
                    name: name.to_string(),
                    kind: ColumnKind::Categorical,
                    js: js_divergence(&p, &q).ok(),
                    w1: None,
                }
            }
            (Column::Numeric(rv), Column::Numeric(sv)) => {
                let rs: Vec<f64> = rv.iter().copied().filter(|v| !v.is_nan()).collect();
                let ss: Vec<f64> = sv.iter().copied().filter(|v| !v.is_nan()).collect();
                let (js, w1) = if rs.is_empty() || ss.is_empty() {
                    (None, None)
                } else {
                    let real_sample = EmpiricalSample::new(rs)?;
                    let edges = quantile_edges(real_sample.sorted(), NUMERIC_JS_BINS);
                    let js = js_divergence(&bin_counts(rv, &edges), &bin_counts(sv, &edges)).ok();
                    let w1 = wasserstein1(&real_sample, &EmpiricalSample::new(ss)?);
                    (js, Some(w1))
                };
                ColumnFidelity {
                    name: name.to_string(),
                    kind: ColumnKind::Numeric,
                    js,
                    w1,
                }
            }
            _ => unreachable!("kinds checked above"),
        };
        if entry.js.is_none() && entry.w1.is_none() {
            skipped.push((name.to_string(), "no non-missing values".into()));
        }
        columns.push(entry);
    }

    let js_all: Vec<f64> = columns.iter().filter_map(|c| c.js).collect();
    let js_cat: Vec<f64> = columns
        .iter()
        .filter(|c| c.kind == ColumnKind::Categorical)
        .filter_map(|c| c.js)
        .collect();
    let corr_cols = shared_numeric_columns(real, syn);
    let corr_delta = corr_matrix_delta(real, syn).ok();
    Ok(Layer1Report {
        mean_js_all: mean(&js_all),
        mean_js_categorical: mean(&js_cat),
        corr_delta,
        corr_columns: corr_cols.len(),
        fraud_rate: FraudRateCheck::new(real.fraud_rate(), syn.fraud_rate()),
        columns,
        skipped,
    })
}
