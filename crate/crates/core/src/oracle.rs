//! Row-independent reference generator and Monte Carlo checks of the two
//! impossibility propositions for such generators.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CategoricalColumn, Column, Fingerprint, TransactionTable, MISSING_CODE};
use crate::stats::lag1_autocorr;

/// Empirical marginal of one column: the observed cells, drawn from by
/// bootstrap. Missing cells are part of the pool.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl Marginal {
    fn len(&self) -> usize {
        match self {
            Marginal::Numeric(v) => v.len(),
            Marginal::Categorical { codes, .. } => codes.len(),
        }
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Column {
        let len = self.len();
        match self {
            Marginal::Numeric(pool) => Column::Numeric((0..n).map(|_| pool[rng.gen_range(0..len)]).collect()),
            Marginal::Categorical { levels, codes } => {
                let drawn = (0..n).map(|_| codes[rng.gen_range(0..len)]).collect();
                Column::Categorical(CategoricalColumn::from_codes(drawn, levels.clone()).expect("codes from pool"))
            }
        }
    }

    /// Relative frequency of each distinct value; `None` is the missing cell.
    pub fn frequencies(&self) -> BTreeMap<Option<String>, f64> {
        let n = self.len() as f64;
        let mut out: BTreeMap<Option<String>, f64> = BTreeMap::new();
        match self {
            Marginal::Numeric(v) => {
                for x in v {
                    let key = (!x.is_nan()).then(|| format!("{x}"));
                    *out.entry(key).or_insert(0.0) += 1.0 / n;
                }
            }
            Marginal::Categorical { levels, codes } => {
                for &c in codes {
                    let key = (c != MISSING_CODE).then(|| levels[c as usize].clone());
                    *out.entry(key).or_insert(0.0) += 1.0 / n;
                }
            }
        }
        out
    }
}

/// Column-wise empirical marginals of a table. The entity column is not
/// modelled: a row-independent generator has no notion of entities.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalModel {
    schema: crate::ingest::SchemaConfig,
    columns: IndexMap<String, Marginal>,
    fingerprint: Fingerprint,
}

impl MarginalModel {
    pub fn columns(&self) -> impl Iterator<Item = (&str, &Marginal)> {
        self.columns.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn marginal(&self, column: &str) -> Option<&Marginal> {
        self.columns.get(column)
    }

    /// Fingerprint of the table the model was fitted on.
    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn class_rate(&self) -> f64 {
        match &self.columns[&self.schema.class_col] {
            Marginal::Numeric(v) => v.iter().filter(|&&x| x == 1.0).count() as f64 / v.len() as f64,
            Marginal::Categorical { .. } => unreachable!("class column is numeric"),
        }
    }

    /// Probability that one generated row holds `value` in `column`.
    pub fn value_probability(&self, column: &str, value: &str) -> Result<f64> {
        let m = self
            .columns
            .get(column)
            .ok_or_else(|| Error::MissingColumn(column.to_string()))?;
        Ok(m.frequencies().get(&Some(value.to_string())).copied().unwrap_or(0.0))
    }
}

pub fn fit_marginals(table: &TransactionTable) -> Result<MarginalModel> {
    if table.n_rows() == 0 {
        return Err(Error::EmptySample("cannot fit marginals on an empty table"));
    }
    let entity = table.schema().entity_col.clone();
    let columns = table
        .columns()
        .filter(|(name, _)| Some(*name) != entity.as_deref())
        .map(|(name, col)| {
            let m = match col {
                Column::Numeric(v) => Marginal::Numeric(v.clone()),
                Column::Categorical(c) => Marginal::Categorical {
                    levels: c.levels().to_vec(),
                    codes: c.codes().to_vec(),
                },
            };
            (name.to_string(), m)
        })
        .collect();
    let mut schema = table.schema().clone();
    schema.entity_col = None;
    Ok(MarginalModel {
        schema,
        columns,
        fingerprint: table.fingerprint(),
    })
}

/// `n_rows` rows, every cell drawn independently from its column marginal.
/// Column `k` uses stream `k` of the seeded generator.
pub fn generate_rowindep(model: &MarginalModel, n_rows: usize, seed: u64) -> Result<TransactionTable> {
    if n_rows == 0 {
        return Err(Error::InvalidArgument("row count must be >= 1".into()));
    }
    let names: Vec<&String> = model.columns.keys().collect();
    let cols: Vec<Column> = model
        .columns
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            m.draw(n_rows, &mut rng)
        })
        .collect();
    let columns = names.into_iter().cloned().zip(cols).collect();
    TransactionTable::from_columns(model.schema.clone(), columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// `|observed − predicted| <= tolerance`
    Within,
    /// `observed <= predicted + tolerance`
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub predicted: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl CheckItem {
    pub fn new(name: &str, predicted: f64, observed: f64, tolerance: f64, bound: Bound) -> Self {
        let pass = match bound {
            Bound::Within => (observed - predicted).abs() <= tolerance,
            Bound::AtMost => observed <= predicted + tolerance,
        };
        CheckItem {
            name: name.to_string(),
            predicted,
            observed,
            tolerance,
            bound,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionCheck {
    pub proposition: u8,
    pub label: String,
    pub items: Vec<CheckItem>,
    pub pass: bool,
}

impl PropositionCheck {
    fn new(proposition: u8, label: String, items: Vec<CheckItem>) -> Self {
        let pass = items.iter().all(|i| i.pass);
        PropositionCheck {
            proposition,
            label,
            items,
            pass,
        }
    }

    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "proposition {} [{}]: {}\n",
            self.proposition,
            self.label,
            if self.pass { "PASS" } else { "FAIL" }
        );
        for i in &self.items {
            let op = match i.bound {
                Bound::Within => "±",
                Bound::AtMost => "<= +",
            };
            out.push_str(&format!(
                "  {:<24} predicted {:>12.6}  observed {:>12.6}  ({op}{:.6})  {}\n",
                i.name,
                i.predicted,
                i.observed,
                i.tolerance,
                if i.pass { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Exact mean and variance of the fan-out of a value with row probability
/// `p` over entities of the given sizes: a sum of independent Bernoulli
/// variables with success probability `1 − (1 − p)^n_i`.
pub fn pb_fanout_stats(p: f64, sizes: &[usize]) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability must lie in [0, 1], got {p}")));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument("entity sizes must be >= 1".into()));
    }
    let mut mean = 0.0;
    let mut var = 0.0;
    for &n in sizes {
        let q = 1.0 - (1.0 - p).powi(n as i32);
        mean += q;
        var += q * (1.0 - q);
    }
    Ok((mean, var))
}

const TRIAL_BLOCK: usize = 256;

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

/// Sample mean, unbiased variance, and the standard errors of both.
fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se_mean = (var / n).sqrt();
    let se_var = ((m4 - m2 * m2).max(0.0) / n).sqrt();
    (mean, var, se_mean, se_var)
}

/// Monte Carlo fan-out of one value under row-independent generation: each
/// row of each entity holds the value independently with probability `p`,
/// and the fan-out counts entities with at least one such row.
pub fn simulate_fanouts(p: f64, sizes: &[usize], seed: u64, n_trials: usize) -> Vec<f64> {
    let blocks = n_trials.div_ceil(TRIAL_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let trials = TRIAL_BLOCK.min(n_trials - b * TRIAL_BLOCK);
            (0..trials)
                .map(|_| {
                    sizes
                        .iter()
                        .filter(|&&n| (0..n).fold(false, |hit, _| rng.gen::<f64>() < p || hit))
                        .count() as f64
                })
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

const SE_MULTIPLE: f64 = 3.0;
// floor for tolerances whose standard error is exactly zero
const EXACT_TOL: f64 = 1e-12;

pub fn verify_prop1(p: f64, sizes: &[usize], seed: u64, n_trials: usize) -> Result<PropositionCheck> {
    if n_trials < 1000 {
        return Err(Error::InvalidArgument("proposition 1 needs at least 1000 trials".into()));
    }
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("proposition 1 needs at least one entity size".into()));
    }
    let (mu, sigma2) = pb_fanout_stats(p, sizes)?;
    let fanouts = simulate_fanouts(p, sizes, seed, n_trials);
    let (mean, var, se_mean, se_var) = moments(&fanouts);
    let items = vec![
        CheckItem::new("fanout_mean", mu, mean, (SE_MULTIPLE * se_mean).max(EXACT_TOL), Bound::Within),
        CheckItem::new("fanout_variance", sigma2, var, (SE_MULTIPLE * se_var).max(EXACT_TOL), Bound::Within),
        // observed variance against observed mean
        CheckItem::new("variance_at_most_mean", mean, var, 0.0, Bound::AtMost),
    ];
    Ok(PropositionCheck::new(
        1,
        format!("p={p} sizes={} trials={n_trials}", sizes.len()),
        items,
    ))
}

/// Whether an observed fan-out distribution is within reach of any
/// row-independent generator, which cannot produce variance above the mean.
/// A failing check is a structural mismatch in the target data.
pub fn fanout_dispersion_check(fanouts: &[usize]) -> Result<PropositionCheck> {
    if fanouts.len() < 2 {
        return Err(Error::EmptySample("fan-out dispersion needs at least two attributes"));
    }
    let xs: Vec<f64> = fanouts.iter().map(|&f| f as f64).collect();
    let (mean, var, _, _) = moments(&xs);
    Ok(PropositionCheck::new(
        1,
        format!("target fan-out dispersion, {} attributes", fanouts.len()),
        vec![CheckItem::new("variance_at_most_mean", mean, var, 0.0, Bound::AtMost)],
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpacingSource {
    /// `n_u` i.i.d. U(0, 1) timestamps per entity.
    Uniform,
    /// `n_u − 1` i.i.d. Exp(1) gaps per entity.
    Exponential,
    /// A large bootstrap sample from the pool is sorted and cut into
    /// consecutive blocks of `n_u`, the way post-hoc entity assignment
    /// groups independently generated rows.
    EmpiricalPool(Vec<f64>),
}

impl SpacingSource {
    pub fn name(&self) -> &'static str {
        match self {
            SpacingSource::Uniform => "uniform",
            SpacingSource::Exponential => "exponential",
            SpacingSource::EmpiricalPool(_) => "empirical",
        }
    }
}

const ENTITY_BATCHES: usize = 100;

#[derive(Default, Clone, Copy)]
struct PairSums {
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl PairSums {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    fn merge(&mut self, o: &PairSums) {
        self.n += o.n;
        self.sx += o.sx;
        self.sy += o.sy;
        self.sxx += o.sxx;
        self.syy += o.syy;
        self.sxy += o.sxy;
    }

    fn cov(&self) -> f64 {
        (self.sxy - self.sx * self.sy / self.n) / (self.n - 1.0)
    }

    fn corr(&self) -> f64 {
        let vx = self.sxx - self.sx * self.sx / self.n;
        let vy = self.syy - self.sy * self.sy / self.n;
        (self.sxy - self.sx * self.sy / self.n) / (vx * vy).sqrt()
    }
}

struct BatchResult {
    pairs: PairSums,
    rhos: Vec<f64>,
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln()
}

fn entity_spacings(source: &SpacingSource, n_u: usize, n_entities: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let spacings = |ts: &[f64]| ts.windows(2).map(|w| w[1] - w[0]).collect::<Vec<f64>>();
    match source {
        SpacingSource::Uniform => (0..n_entities)
            .map(|_| {
                let mut ts: Vec<f64> = (0..n_u).map(|_| rng.gen::<f64>()).collect();
                ts.sort_by(f64::total_cmp);
                spacings(&ts)
            })
            .collect(),
        SpacingSource::Exponential => (0..n_entities)
            .map(|_| (1..n_u).map(|_| exp1(rng)).collect())
            .collect(),
        SpacingSource::EmpiricalPool(pool) => {
            let mut ts: Vec<f64> = (0..n_u * n_entities).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
            ts.sort_by(f64::total_cmp);
            ts.chunks(n_u).map(spacings).collect()
        }
    }
}

/// Lag-1 spacing autocorrelation of row-independent timestamps grouped into
/// entities of `n_u`. The mean per-entity sample autocorrelation must be
/// non-positive within 3 standard errors. For uniform timestamps the
/// correlation and covariance of adjacent spacings pooled over all entities
/// are also compared with their exact values.
pub fn verify_prop2(n_u: usize, source: &SpacingSource, seed: u64, n_entities: usize) -> Result<PropositionCheck> {
    if n_u < 4 {
        return Err(Error::InvalidArgument(format!("n_u must be >= 4, got {n_u}")));
    }
    if n_entities < ENTITY_BATCHES {
        return Err(Error::InvalidArgument(format!(
            "at least {ENTITY_BATCHES} entities are required"
        )));
    }
    if let SpacingSource::EmpiricalPool(pool) = source {
        if pool.is_empty() || pool.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("empirical pool must be non-empty and finite".into()));
        }
    }
    let batches: Vec<BatchResult> = (0..ENTITY_BATCHES)
        .into_par_iter()
        .map(|b| {
            let lo = b * n_entities / ENTITY_BATCHES;
            let hi = (b + 1) * n_entities / ENTITY_BATCHES;
            let mut rng = block_rng(seed, b);
            let mut pairs = PairSums::default();
            let mut rhos = Vec::new();
            for d in entity_spacings(source, n_u, hi - lo, &mut rng) {
                for w in d.windows(2) {
                    pairs.push(w[0], w[1]);
                }
                rhos.extend(lag1_autocorr(&d));
            }
            BatchResult { pairs, rhos }
        })
        .collect();

    let mut total = PairSums::default();
    for b in &batches {
        total.merge(&b.pairs);
    }
    let batch_se = |f: &dyn Fn(&PairSums) -> f64| {
        let vals: Vec<f64> = batches.iter().map(|b| f(&b.pairs)).collect();
        let (_, var, _, _) = moments(&vals);
        (var / vals.len() as f64).sqrt()
    };
    let pooled = total.corr();
    let se_pooled = batch_se(&|p| p.corr());

    let rhos: Vec<f64> = batches.iter().flat_map(|b| b.rhos.iter().copied()).collect();
    let mut items = Vec::new();
    if rhos.len() >= 2 {
        let (mean_rho, _, se_rho, _) = moments(&rhos);
        items.push(CheckItem::new("mean_entity_lag1", 0.0, mean_rho, SE_MULTIPLE * se_rho, Bound::AtMost));
    }
    if items.is_empty() {
        return Err(Error::InsufficientData(
            "spacing autocorrelation is undefined for every simulated entity".into(),
        ));
    }
    // Pooling pairs across entities is only meaningful when entities are
    // exchangeable; blocks of a sorted pool share local density, which makes
    // adjacent spacings co-vary between blocks.
    if *source == SpacingSource::Uniform {
        let n = n_u as f64;
        items.push(CheckItem::new("pooled_lag1_exact", -1.0 / n, pooled, SE_MULTIPLE * se_pooled, Bound::Within));
        let cov_pred = -1.0 / ((n + 1.0).powi(2) * (n + 2.0));
        items.push(CheckItem::new(
            "pooled_cov_exact",
            cov_pred,
            total.cov(),
            SE_MULTIPLE * batch_se(&|p| p.cov()),
            Bound::Within,
        ));
    }
    Ok(PropositionCheck::new(
        2,
        format!("{} n_u={n_u} entities={n_entities}", source.name()),
        items,
    ))
}
