//! Velocity-rule engine and class-conditioned trigger rates (P4).
//!
//! Every windowed aggregate uses the trailing half-open window `(t − w, t]`
//! anchored at a transaction time `t`. Transactions sharing the anchor's
//! timestamp are inside the window regardless of their order in the
//! sequence.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    CategoricalColumn, EntitySequence, SchemaConfig, TransactionTable, FIRST_SEEN, MISSING_CODE,
};

const HOUR: f64 = 3600.0;
const DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    TxnCount,
    DistinctMerchants,
    AmountSum,
    TxnCountYoungAccount,
    DistinctPaymentMethods,
    AmountSpikeRatio,
    FailedCount,
    DistinctIps,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::TxnCount => "txn_count",
            Feature::DistinctMerchants => "distinct_merchants",
            Feature::AmountSum => "amount_sum",
            Feature::TxnCountYoungAccount => "txn_count_young_account",
            Feature::DistinctPaymentMethods => "distinct_payment_methods",
            Feature::AmountSpikeRatio => "amount_spike_ratio",
            Feature::FailedCount => "failed_count",
            Feature::DistinctIps => "distinct_ips",
        }
    }

    /// Schema role the feature reads besides timestamps.
    pub fn required_role(self) -> Option<Role> {
        match self {
            Feature::TxnCount => None,
            Feature::DistinctMerchants => Some(Role::Merchant),
            Feature::AmountSum | Feature::AmountSpikeRatio => Some(Role::Amount),
            Feature::TxnCountYoungAccount => Some(Role::AccountAge),
            Feature::DistinctPaymentMethods => Some(Role::PaymentMethod),
            Feature::FailedCount => Some(Role::Status),
            Feature::DistinctIps => Some(Role::Ip),
        }
    }
}

impl std::str::FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Feature::*;
        [
            TxnCount,
            DistinctMerchants,
            AmountSum,
            TxnCountYoungAccount,
            DistinctPaymentMethods,
            AmountSpikeRatio,
            FailedCount,
            DistinctIps,
        ]
        .into_iter()
        .find(|f| f.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown rule feature {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Amount,
    Merchant,
    PaymentMethod,
    AccountAge,
    Status,
    Ip,
}

impl Role {
    fn mapped(self, schema: &SchemaConfig) -> bool {
        match self {
            Role::Amount => schema.amount_col.is_some(),
            Role::Merchant => schema.merchant_col.is_some(),
            Role::PaymentMethod => schema.payment_method_col.is_some(),
            Role::AccountAge => schema.account_age_col.is_some(),
            Role::Status => schema.status_col.is_some(),
            Role::Ip => schema.ip_col.is_some(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = ">")]
    Gt,
}

/// One `(feature, op, threshold, window)` rule. For
/// [`Feature::TxnCountYoungAccount`] the window is the account-age limit;
/// for [`Feature::AmountSpikeRatio`] it is the history length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityRule {
    pub id: String,
    pub feature: Feature,
    pub op: Comparison,
    pub threshold: f64,
    /// Seconds.
    pub window: f64,
}

impl VelocityRule {
    pub fn new(id: &str, feature: Feature, threshold: f64, window: f64) -> Result<Self> {
        if !(threshold > 0.0) || !(window > 0.0) {
            return Err(Error::Config(format!(
                "rule {id}: threshold and window must be positive"
            )));
        }
        Ok(VelocityRule {
            id: id.to_string(),
            feature,
            op: Comparison::Gt,
            threshold,
            window,
        })
    }

    pub fn required_roles(&self) -> Vec<Role> {
        self.feature.required_role().into_iter().collect()
    }
}

impl fmt::Display for VelocityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} > {} over {}s",
            self.id,
            self.feature.name(),
            self.threshold,
            self.window
        )
    }
}

/// The eight canonical rules R1..R8.
pub fn canonical_ruleset() -> Vec<VelocityRule> {
    let r = |id, f, th, w| VelocityRule::new(id, f, th, w).expect("valid canonical rule");
    vec![
        r("R1", Feature::TxnCount, 3.0, HOUR),
        r("R2", Feature::DistinctMerchants, 5.0, 24.0 * HOUR),
        r("R3", Feature::AmountSum, 1000.0, 24.0 * HOUR),
        r("R4", Feature::TxnCountYoungAccount, 1.0, 7.0 * DAY),
        r("R5", Feature::DistinctPaymentMethods, 2.0, 7.0 * DAY),
        r("R6", Feature::AmountSpikeRatio, 3.0, 30.0 * DAY),
        r("R7", Feature::FailedCount, 2.0, HOUR),
        r("R8", Feature::DistinctIps, 3.0, 24.0 * HOUR),
    ]
}

/// Rules whose required roles are all mapped in `schema`.
pub fn rule_applicability(ruleset: &[VelocityRule], schema: &SchemaConfig) -> Vec<VelocityRule> {
    ruleset
        .iter()
        .filter(|r| r.required_roles().iter().all(|role| role.mapped(schema)))
        .cloned()
        .collect()
}

/// Parse `30`, `90s`, `15m`, `1h`, `7d` into seconds.
pub fn parse_duration(s: &str) -> Result<f64> {
    let s = s.trim();
    let (num, mult) = match s.char_indices().last() {
        Some((i, 's')) => (&s[..i], 1.0),
        Some((i, 'm')) => (&s[..i], 60.0),
        Some((i, 'h')) => (&s[..i], HOUR),
        Some((i, 'd')) => (&s[..i], DAY),
        _ => (s, 1.0),
    };
    num.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(|v| v * mult)
        .ok_or_else(|| Error::Config(format!("bad duration {s:?}")))
}

/// Parse a rule file: `key = value` lines with keys `id`, `feature`, `op`,
/// `threshold`, `window`. Each `id` line starts a new rule.
pub fn parse_ruleset(text: &str) -> Result<Vec<VelocityRule>> {
    let mut blocks: Vec<BTreeMap<String, String>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("rules line {}: expected `key = value`", lineno + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k == "id" {
            blocks.push(BTreeMap::new());
        }
        let block = blocks
            .last_mut()
            .ok_or_else(|| Error::Config("rules file must start with an `id` line".into()))?;
        if block.insert(k.clone(), v).is_some() {
            return Err(Error::Config(format!("duplicate key {k:?} in a rule")));
        }
    }
    let mut rules = Vec::new();
    for mut b in blocks {
        let mut take = |k: &str| {
            b.remove(k)
                .ok_or_else(|| Error::Config(format!("rule is missing {k:?}")))
        };
        let id = take("id")?;
        let feature: Feature = take("feature")?.parse()?;
        let op = take("op")?;
        if op != ">" {
            return Err(Error::Config(format!("rule {id}: unsupported op {op:?}")));
        }
        let threshold = take("threshold")?
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("rule {id}: bad threshold")))?;
        let window = parse_duration(&take("window")?)?;
        if let Some(k) = b.keys().next() {
            return Err(Error::Config(format!("rule {id}: unknown key {k:?}")));
        }
        rules.push(VelocityRule::new(&id, feature, threshold, window)?);
    }
    if rules.is_empty() {
        return Err(Error::Config("rules file defines no rules".into()));
    }
    let mut ids: Vec<&str> = rules.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("duplicate rule id".into()));
    }
    Ok(rules)
}

pub fn load_ruleset(path: impl AsRef<Path>) -> Result<Vec<VelocityRule>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ruleset(&text)
}

enum AccountAge<'a> {
    FirstSeen,
    Column(&'a [f64], f64),
}

/// Columns a rule may read, resolved once per table.
pub struct RuleContext<'a> {
    amounts: Option<&'a [f64]>,
    merchants: Option<&'a CategoricalColumn>,
    payment_methods: Option<&'a CategoricalColumn>,
    ips: Option<&'a CategoricalColumn>,
    failed: Option<Vec<bool>>,
    account_age: Option<AccountAge<'a>>,
}

impl<'a> RuleContext<'a> {
    pub fn new(table: &'a TransactionTable) -> Result<Self> {
        let s = table.schema();
        let cat = |c: &Option<String>| c.as_deref().map(|c| table.categorical(c)).transpose();
        let failed = match &s.status_col {
            Some(c) => {
                let col = table.categorical(c)?;
                let bad: Vec<bool> = col
                    .levels()
                    .iter()
                    .map(|l| s.failed_status_values.iter().any(|f| f.eq_ignore_ascii_case(l)))
                    .collect();
                Some(
                    col.codes()
                        .iter()
                        .map(|&code| code != MISSING_CODE && bad[code as usize])
                        .collect(),
                )
            }
            None => None,
        };
        let account_age = match s.account_age_col.as_deref() {
            None => None,
            Some(FIRST_SEEN) => Some(AccountAge::FirstSeen),
            Some(c) => Some(AccountAge::Column(table.numeric(c)?, s.account_age_unit.seconds())),
        };
        Ok(RuleContext {
            amounts: s.amount_col.as_deref().map(|c| table.numeric(c)).transpose()?,
            merchants: cat(&s.merchant_col)?,
            payment_methods: cat(&s.payment_method_col)?,
            ips: cat(&s.ip_col)?,
            failed,
            account_age,
        })
    }

    fn missing(rule: &VelocityRule) -> Error {
        Error::Incompatible(format!(
            "rule {} needs an unmapped schema role {:?}",
            rule.id,
            rule.feature.required_role()
        ))
    }

    /// Account age in seconds of each transaction of `seq` (`NaN` if unknown).
    fn ages(&self, seq: &EntitySequence) -> Option<Vec<f64>> {
        match self.account_age.as_ref()? {
            AccountAge::FirstSeen => {
                let t0 = seq.timestamps.first().copied().unwrap_or(0.0);
                Some(seq.timestamps.iter().map(|t| t - t0).collect())
            }
            AccountAge::Column(v, unit) => {
                Some(seq.row_indices.iter().map(|&r| v[r] * unit).collect())
            }
        }
    }
}

trait WindowAgg {
    fn add(&mut self, i: usize);
    fn remove(&mut self, i: usize);
    fn fires(&self) -> bool;
}

struct Count<'a> {
    weights: &'a [bool],
    n: usize,
    threshold: f64,
}

impl WindowAgg for Count<'_> {
    fn add(&mut self, i: usize) {
        self.n += usize::from(self.weights[i]);
    }
    fn remove(&mut self, i: usize) {
        self.n -= usize::from(self.weights[i]);
    }
    fn fires(&self) -> bool {
        self.n as f64 > self.threshold
    }
}

struct Sum<'a> {
    values: &'a [f64],
    sum: f64,
    live: usize,
    threshold: f64,
}

impl WindowAgg for Sum<'_> {
    fn add(&mut self, i: usize) {
        if !self.values[i].is_nan() {
            self.sum += self.values[i];
            self.live += 1;
        }
    }
    fn remove(&mut self, i: usize) {
        if !self.values[i].is_nan() {
            self.sum -= self.values[i];
            self.live -= 1;
            if self.live == 0 {
                self.sum = 0.0;
            }
        }
    }
    fn fires(&self) -> bool {
        self.sum > self.threshold
    }
}

struct Distinct<'a> {
    codes: &'a [u32],
    counts: HashMap<u32, u32>,
    threshold: f64,
}

impl WindowAgg for Distinct<'_> {
    fn add(&mut self, i: usize) {
        let c = self.codes[i];
        if c != MISSING_CODE {
            *self.counts.entry(c).or_insert(0) += 1;
        }
    }
    fn remove(&mut self, i: usize) {
        let c = self.codes[i];
        if c != MISSING_CODE {
            let e = self.counts.get_mut(&c).expect("added before");
            *e -= 1;
            if *e == 0 {
                self.counts.remove(&c);
            }
        }
    }
    fn fires(&self) -> bool {
        self.counts.len() as f64 > self.threshold
    }
}

/// Max/median of the window's amounts; needs two amounts and a positive median.
struct Spike<'a> {
    values: &'a [f64],
    sorted: Vec<f64>,
    threshold: f64,
}

impl WindowAgg for Spike<'_> {
    fn add(&mut self, i: usize) {
        let v = self.values[i];
        if !v.is_nan() {
            let at = self.sorted.partition_point(|x| *x < v);
            self.sorted.insert(at, v);
        }
    }
    fn remove(&mut self, i: usize) {
        let v = self.values[i];
        if !v.is_nan() {
            let at = self.sorted.partition_point(|x| *x < v);
            self.sorted.remove(at);
        }
    }
    fn fires(&self) -> bool {
        spike_fires(&self.sorted, self.threshold)
    }
}

pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn spike_fires(sorted: &[f64], threshold: f64) -> bool {
    if sorted.len() < 2 {
        return false;
    }
    let median = median_sorted(sorted);
    median > 0.0 && sorted[sorted.len() - 1] / median > threshold
}

/// Two-pointer sweep; anchors are the last transaction of each timestamp.
fn sweep(ts: &[f64], window: f64, agg: &mut dyn WindowAgg) -> bool {
    let n = ts.len();
    let (mut left, mut right) = (0usize, 0usize);
    while right < n {
        let anchor = ts[right];
        while right < n && ts[right] == anchor {
            agg.add(right);
            right += 1;
        }
        while left < right && ts[left] <= anchor - window {
            agg.remove(left);
            left += 1;
        }
        if agg.fires() {
            return true;
        }
    }
    false
}

fn gather<T: Copy>(rows: &[usize], values: &[T]) -> Vec<T> {
    rows.iter().map(|&r| values[r]).collect()
}

/// Whether `seq` fires `rule` at any of its transactions.
pub fn evaluate_rule(seq: &EntitySequence, ctx: &RuleContext<'_>, rule: &VelocityRule) -> Result<bool> {
    let ts = &seq.timestamps;
    let th = rule.threshold;
    let fired = match rule.feature {
        Feature::TxnCount => {
            let ones = vec![true; ts.len()];
            sweep(ts, rule.window, &mut Count { weights: &ones, n: 0, threshold: th })
        }
        Feature::FailedCount => {
            let failed = ctx.failed.as_ref().ok_or_else(|| RuleContext::missing(rule))?;
            let w = gather(&seq.row_indices, failed);
            sweep(ts, rule.window, &mut Count { weights: &w, n: 0, threshold: th })
        }
        Feature::AmountSum => {
            let amounts = ctx.amounts.ok_or_else(|| RuleContext::missing(rule))?;
            let v = gather(&seq.row_indices, amounts);
            sweep(ts, rule.window, &mut Sum { values: &v, sum: 0.0, live: 0, threshold: th })
        }
        Feature::AmountSpikeRatio => {
            let amounts = ctx.amounts.ok_or_else(|| RuleContext::missing(rule))?;
            let v = gather(&seq.row_indices, amounts);
            sweep(ts, rule.window, &mut Spike { values: &v, sorted: Vec::new(), threshold: th })
        }
        Feature::DistinctMerchants | Feature::DistinctPaymentMethods | Feature::DistinctIps => {
            let col = match rule.feature {
                Feature::DistinctMerchants => ctx.merchants,
                Feature::DistinctPaymentMethods => ctx.payment_methods,
                _ => ctx.ips,
            }
            .ok_or_else(|| RuleContext::missing(rule))?;
            let codes = gather(&seq.row_indices, col.codes());
            sweep(ts, rule.window, &mut Distinct { codes: &codes, counts: HashMap::new(), threshold: th })
        }
        Feature::TxnCountYoungAccount => {
            let ages = ctx.ages(seq).ok_or_else(|| RuleContext::missing(rule))?;
            young_account_fires(ts, &ages, rule.window, th)
        }
    };
    Ok(fired)
}

/// At an anchor whose account age is below `limit`, count the transactions
/// up to the anchor time that were also made below the age limit.
fn young_account_fires(ts: &[f64], ages: &[f64], limit: f64, threshold: f64) -> bool {
    let n = ts.len();
    let young = |i: usize| ages[i] < limit;
    let mut count = 0usize;
    let mut right = 0usize;
    while right < n {
        let anchor = ts[right];
        let start = right;
        while right < n && ts[right] == anchor {
            count += usize::from(young(right));
            right += 1;
        }
        if (start..right).any(young) && count as f64 > threshold {
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRates {
    pub rates: BTreeMap<String, f64>,
    pub active_rules: Vec<String>,
    pub n_fraud_entities: usize,
}

/// Fraction of fraud entities triggering each active rule at least once.
pub fn trigger_rates(
    seqs: &[EntitySequence],
    table: &TransactionTable,
    ruleset: &[VelocityRule],
) -> Result<TriggerRates> {
    let active = rule_applicability(ruleset, table.schema());
    let ctx = RuleContext::new(table)?;
    let fraud: Vec<&EntitySequence> = seqs.iter().filter(|s| s.is_fraud()).collect();
    if fraud.is_empty() {
        return Err(Error::InsufficientData("trigger rates need at least one fraud entity".into()));
    }
    let fired: Vec<Vec<bool>> = fraud
        .par_iter()
        .map(|s| active.iter().map(|r| evaluate_rule(s, &ctx, r)).collect::<Result<Vec<bool>>>())
        .collect::<Result<_>>()?;
    let n = fraud.len() as f64;
    let rates = active
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let hits = fired.iter().filter(|f| f[k]).count();
            (r.id.clone(), hits as f64 / n)
        })
        .collect();
    Ok(TriggerRates {
        rates,
        active_rules: active.iter().map(|r| r.id.clone()).collect(),
        n_fraud_entities: fraud.len(),
    })
}

/// Mean absolute trigger-rate gap over the active rules.
pub fn p4_metric(real: &TriggerRates, syn: &TriggerRates) -> Result<f64> {
    let mut a = real.active_rules.clone();
    let mut b = syn.active_rules.clone();
    a.sort();
    b.sort();
    if a != b {
        return Err(Error::Incompatible(format!(
            "active rule sets differ: {:?} vs {:?}",
            real.active_rules, syn.active_rules
        )));
    }
    if a.is_empty() {
        return Err(Error::Incompatible("no active velocity rules".into()));
    }
    let total: f64 = a.iter().map(|id| (real.rates[id] - syn.rates[id]).abs()).sum();
    Ok(total / a.len() as f64)
}
