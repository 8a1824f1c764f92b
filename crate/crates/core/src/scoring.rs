//! Noise floor, degradation ratios and the composite behavioral fidelity
//! score.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entity::AssignmentSummary;
use crate::error::{Error, Result};
use crate::graph::{build_bipartite_for, p3_metrics, P3Result};
use crate::ingest::{
    build_entity_sequences, entity_units, ClassMode, EntitySequence, Fingerprint, TransactionTable,
};
use crate::stats::{layer1_report, Layer1Report};
use crate::temporal::{p1_metrics, p2_metrics, P1Result, P2Result, DEFAULT_BURST_DELTAS};
use crate::velocity::{canonical_ruleset, p4_metric, trigger_rates, TriggerRates, VelocityRule};

pub const BASELINE_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SPLIT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pattern {
    P1,
    P2,
    P3,
    P4,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [Pattern::P1, Pattern::P2, Pattern::P3, Pattern::P4];

    fn needs_entities(self) -> bool {
        self != Pattern::P3
    }
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "P1" => Ok(Pattern::P1),
            "P2" => Ok(Pattern::P2),
            "P3" => Ok(Pattern::P3),
            "P4" => Ok(Pattern::P4),
            _ => Err(Error::Config(format!("unknown pattern {s:?} (expected P1..P4)"))),
        }
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Parse a comma-separated pattern list such as `p1,p3`.
pub fn parse_patterns(s: &str) -> Result<BTreeSet<Pattern>> {
    let set: BTreeSet<Pattern> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if set.is_empty() {
        return Err(Error::Config("pattern list is empty".into()));
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    P1IetdW1,
    P1AutocorrGap,
    P2ActiveLifetimeW1,
    P2BurstLenW1,
    P3FanoutW1,
    P3CcGap,
    P3TriangleLogGap,
    P4TriggerGap,
}

impl MetricId {
    pub const ALL: [MetricId; 8] = [
        MetricId::P1IetdW1,
        MetricId::P1AutocorrGap,
        MetricId::P2ActiveLifetimeW1,
        MetricId::P2BurstLenW1,
        MetricId::P3FanoutW1,
        MetricId::P3CcGap,
        MetricId::P3TriangleLogGap,
        MetricId::P4TriggerGap,
    ];

    pub fn id(self) -> &'static str {
        match self {
            MetricId::P1IetdW1 => "p1_ietd_w1",
            MetricId::P1AutocorrGap => "p1_autocorr_gap",
            MetricId::P2ActiveLifetimeW1 => "p2_active_lifetime_w1",
            MetricId::P2BurstLenW1 => "p2_burst_len_w1",
            MetricId::P3FanoutW1 => "p3_fanout_w1",
            MetricId::P3CcGap => "p3_cc_gap",
            MetricId::P3TriangleLogGap => "p3_triangle_log_gap",
            MetricId::P4TriggerGap => "p4_trigger_gap",
        }
    }

    /// Short column header.
    pub fn label(self) -> &'static str {
        match self {
            MetricId::P1IetdW1 => "P1 IETD",
            MetricId::P1AutocorrGap => "P1 AutoCorr",
            MetricId::P2ActiveLifetimeW1 => "P2 AL",
            MetricId::P2BurstLenW1 => "P2 BurstLen",
            MetricId::P3FanoutW1 => "P3 Fanout",
            MetricId::P3CcGap => "P3 CC",
            MetricId::P3TriangleLogGap => "P3 Triangles",
            MetricId::P4TriggerGap => "P4 VR-TR",
        }
    }

    pub fn pattern(self) -> Pattern {
        match self {
            MetricId::P1IetdW1 | MetricId::P1AutocorrGap => Pattern::P1,
            MetricId::P2ActiveLifetimeW1 | MetricId::P2BurstLenW1 => Pattern::P2,
            MetricId::P3FanoutW1 | MetricId::P3CcGap | MetricId::P3TriangleLogGap => Pattern::P3,
            MetricId::P4TriggerGap => Pattern::P4,
        }
    }

    fn is_graph_gap(self) -> bool {
        matches!(self, MetricId::P3CcGap | MetricId::P3TriangleLogGap)
    }
}

impl std::str::FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.id() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown metric id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Whole entities go to one half; sequences stay intact.
    #[default]
    Entity,
    /// Individual rows go to one half.
    Row,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entity" => Ok(SplitMode::Entity),
            "row" => Ok(SplitMode::Row),
            other => Err(Error::Config(format!("unknown split mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FanoutScale {
    /// Fan-out as a raw entity count.
    #[default]
    Raw,
    /// Fan-out divided by the side's entity count.
    Normalized,
}

impl std::str::FromStr for FanoutScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(FanoutScale::Raw),
            "normalized" => Ok(FanoutScale::Normalized),
            other => Err(Error::Config(format!("unknown fan-out scale {other:?}"))),
        }
    }
}

/// Everything that changes a raw metric value. A baseline is only valid
/// for evaluations that use the same settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    pub class_mode: ClassMode,
    pub burst_deltas: Vec<f64>,
    pub ruleset: Vec<VelocityRule>,
    pub clique_limit: Option<usize>,
    pub fanout_scale: FanoutScale,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            class_mode: ClassMode::default(),
            burst_deltas: DEFAULT_BURST_DELTAS.to_vec(),
            ruleset: canonical_ruleset(),
            clique_limit: None,
            fanout_scale: FanoutScale::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalConfig {
    /// `None` means every pattern the schema supports.
    pub patterns: Option<BTreeSet<Pattern>>,
    pub settings: MetricSettings,
    pub split_mode: SplitMode,
    /// Include the clustering and triangle gaps in the composite.
    pub include_graph_gaps: bool,
    /// Relative composite weights; unlisted metrics weigh 0.
    pub weights: Option<BTreeMap<MetricId, f64>>,
}

impl EvalConfig {
    /// The patterns to compute for `table`, checked against its schema.
    pub fn resolve_patterns(&self, table: &TransactionTable) -> Result<BTreeSet<Pattern>> {
        let has_attrs = !table.schema().attribute_cols.is_empty();
        let has_entity = table.entity_column().is_some();
        match &self.patterns {
            Some(p) => {
                if p.contains(&Pattern::P3) && !has_attrs {
                    return Err(Error::Incompatible(
                        "pattern P3 needs shared-infrastructure columns: set attribute_cols in the schema".into(),
                    ));
                }
                if !has_entity && p.iter().any(|p| p.needs_entities()) {
                    return Err(Error::Incompatible(
                        "patterns P1, P2 and P4 need an entity column (entity_col) in the real data".into(),
                    ));
                }
                Ok(p.clone())
            }
            None => {
                let mut p = BTreeSet::new();
                if has_entity {
                    p.extend([Pattern::P1, Pattern::P2, Pattern::P4]);
                }
                if has_attrs {
                    p.insert(Pattern::P3);
                }
                if p.is_empty() {
                    return Err(Error::Incompatible(
                        "no pattern applies: the schema has neither entity_col nor attribute_cols".into(),
                    ));
                }
                Ok(p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRatePair {
    pub real: TriggerRates,
    pub syn: TriggerRates,
}

/// Raw sub-metric values between two tables, plus per-pattern detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMetrics {
    pub values: BTreeMap<MetricId, f64>,
    pub p1: Option<P1Result>,
    pub p2: Option<P2Result>,
    pub p3: Option<P3Result>,
    pub p4: Option<TriggerRatePair>,
}

impl RawMetrics {
    pub fn active_rules(&self) -> Vec<String> {
        self.p4.as_ref().map(|p| p.real.active_rules.clone()).unwrap_or_default()
    }
}

/// Raw metrics of `b` against reference `a`.
pub fn raw_metrics(
    a: &TransactionTable,
    b: &TransactionTable,
    patterns: &BTreeSet<Pattern>,
    settings: &MetricSettings,
) -> Result<RawMetrics> {
    let need_seqs = patterns.iter().any(|p| p.needs_entities());
    let (sa, sb) = if need_seqs {
        for t in [a, b] {
            if t.entity_column().is_none() {
                return Err(Error::MissingEntityColumn);
            }
        }
        (
            build_entity_sequences(a, settings.class_mode)?,
            build_entity_sequences(b, settings.class_mode)?,
        )
    } else {
        (Vec::new(), Vec::new())
    };
    let has = |p| patterns.contains(&p);

    let ((p1, p2), (p3, p4)) = rayon::join(
        || {
            rayon::join(
                || has(Pattern::P1).then(|| p1_metrics(&sa, &sb)).transpose(),
                || has(Pattern::P2).then(|| p2_metrics(&sa, &sb, &settings.burst_deltas)).transpose(),
            )
        },
        || {
            rayon::join(
                || has(Pattern::P3).then(|| graph_metrics(a, b, settings)).transpose(),
                || {
                    has(Pattern::P4)
                        .then(|| -> Result<TriggerRatePair> {
                            Ok(TriggerRatePair {
                                real: trigger_rates(&sa, a, &settings.ruleset)?,
                                syn: trigger_rates(&sb, b, &settings.ruleset)?,
                            })
                        })
                        .transpose()
                },
            )
        },
    );
    let (p1, p2, p3, p4) = (p1?, p2?, p3?, p4?);

    let mut values = BTreeMap::new();
    if let Some(r) = &p1 {
        values.insert(MetricId::P1IetdW1, r.ietd_w1_fraud);
        values.insert(MetricId::P1AutocorrGap, r.autocorr_gap);
    }
    if let Some(r) = &p2 {
        values.insert(MetricId::P2ActiveLifetimeW1, r.active_lifetime_w1);
        values.insert(MetricId::P2BurstLenW1, r.burst_len_w1_mean);
    }
    if let Some(r) = &p3 {
        let fan = match settings.fanout_scale {
            FanoutScale::Raw => r.fanout_w1,
            FanoutScale::Normalized => r.fanout_w1_normalized,
        };
        values.insert(MetricId::P3FanoutW1, fan);
        values.insert(MetricId::P3CcGap, r.cc_gap);
        values.insert(MetricId::P3TriangleLogGap, r.triangle_log_gap);
    }
    if let Some(r) = &p4 {
        values.insert(MetricId::P4TriggerGap, p4_metric(&r.real, &r.syn)?);
    }
    Ok(RawMetrics { values, p1, p2, p3, p4 })
}

fn graph_metrics(a: &TransactionTable, b: &TransactionTable, settings: &MetricSettings) -> Result<P3Result> {
    let attrs = &a.schema().attribute_cols;
    let ua = entity_units(a, settings.class_mode)?;
    let ub = entity_units(b, settings.class_mode)?;
    let ga = build_bipartite_for(a, &ua, attrs)?;
    let gb = build_bipartite_for(b, &ub, attrs)?;
    p3_metrics(&ga, &gb, settings.clique_limit)
}

fn units_for_split(table: &TransactionTable, mode: SplitMode, class_mode: ClassMode) -> Result<Vec<EntitySequence>> {
    match mode {
        SplitMode::Entity => entity_units(table, class_mode),
        SplitMode::Row => entity_units(&table.without_entity_role(), class_mode),
    }
}

/// Row indices of `parts` disjoint subsets of `table`. Units (entities, or
/// rows in row mode) of each class are shuffled with the seed and dealt into
/// contiguous, near-equal chunks. Indices are ascending within each part.
pub fn split_row_indices(
    table: &TransactionTable,
    seed: u64,
    parts: usize,
    mode: SplitMode,
    class_mode: ClassMode,
) -> Result<Vec<Vec<usize>>> {
    if parts < 2 {
        return Err(Error::InvalidArgument("a split needs at least two parts".into()));
    }
    let units = units_for_split(table, mode, class_mode)?;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); parts];
    for class in [0u8, 1] {
        let mut members: Vec<&EntitySequence> = units.iter().filter(|u| u.class.label() == class).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(class));
        members.shuffle(&mut rng);
        let n = members.len();
        for (k, out) in rows.iter_mut().enumerate() {
            for u in &members[k * n / parts..(k + 1) * n / parts] {
                out.extend(&u.row_indices);
            }
        }
    }
    for r in &mut rows {
        r.sort_unstable();
    }
    Ok(rows)
}

/// [`split_row_indices`] materialized as tables.
pub fn split_parts(
    table: &TransactionTable,
    seed: u64,
    parts: usize,
    mode: SplitMode,
    class_mode: ClassMode,
) -> Result<Vec<TransactionTable>> {
    Ok(split_row_indices(table, seed, parts, mode, class_mode)?
        .iter()
        .map(|r| table.select_rows(r))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideSummary {
    pub rows: usize,
    pub entities: usize,
    pub fraud_entities: usize,
    pub time_span: (f64, f64),
}

fn side_summary(t: &TransactionTable, class_mode: ClassMode) -> Result<SideSummary> {
    let units = entity_units(t, class_mode)?;
    let ts = t.timestamps();
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SideSummary {
        rows: t.n_rows(),
        entities: units.len(),
        fraud_entities: units.iter().filter(|u| u.is_fraud()).count(),
        time_span: if t.n_rows() == 0 { (0.0, 0.0) } else { (lo, hi) },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub schema_version: u32,
    pub tool_version: String,
    pub fingerprint: Fingerprint,
    pub schema_hash: String,
    pub split_seed: u64,
    pub split_mode: SplitMode,
    pub patterns: Vec<Pattern>,
    pub settings: MetricSettings,
    pub active_rules: Vec<String>,
    pub values: BTreeMap<MetricId, f64>,
    /// Burst-length W1 per delta (seconds as key).
    pub burst_len_w1_by_delta: BTreeMap<String, f64>,
    /// Metrics with a zero noise floor; they cannot be normalized.
    pub non_normalizable: Vec<MetricId>,
    pub halves: (SideSummary, SideSummary),
}

impl BaselineScores {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        check_version(&v, BASELINE_SCHEMA_VERSION, "baseline")?;
        Ok(serde_json::from_value(v)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_json()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "noise floor: {} split, seed {}, data {}\n",
            match self.split_mode {
                SplitMode::Entity => "entity-level 50/50",
                SplitMode::Row => "row-level 50/50",
            },
            self.split_seed,
            self.fingerprint
        );
        let (a, b) = &self.halves;
        let _ = writeln!(
            out,
            "halves: {} / {} rows, {} / {} fraud entities",
            a.rows, b.rows, a.fraud_entities, b.fraud_entities
        );
        for (m, v) in &self.values {
            let flag = if self.non_normalizable.contains(m) { "  (zero: non-normalizable)" } else { "" };
            let _ = writeln!(out, "  {:<24} {:>16}{flag}", m.id(), fmt_value(*v));
        }
        for (d, v) in &self.burst_len_w1_by_delta {
            let _ = writeln!(out, "  {:<24} {:>16}", format!("  burst_len_w1@{d}s"), fmt_value(*v));
        }
        if !self.active_rules.is_empty() {
            let _ = writeln!(out, "active velocity rules: {}", self.active_rules.join(", "));
        }
        out
    }
}

fn check_version(v: &serde_json::Value, want: u32, what: &str) -> Result<()> {
    match v.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(n) if n == u64::from(want) => Ok(()),
        Some(n) => Err(Error::Incompatible(format!(
            "{what} file has schema_version {n}, this build reads {want}"
        ))),
        None => Err(Error::Incompatible(format!("{what} file has no schema_version"))),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn fmt_value(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e6 || v.abs() < 1e-3) {
        format!("{v:.4e}")
    } else {
        format!("{v:.4}")
    }
}

/// Raw metrics between the two halves of a seeded 50/50 split of `real`.
pub fn noise_floor(real: &TransactionTable, seed: u64, config: &EvalConfig) -> Result<BaselineScores> {
    let patterns = config.resolve_patterns(real)?;
    let cm = config.settings.class_mode;
    let mut halves = split_parts(real, seed, 2, config.split_mode, cm)?;
    let b = halves.pop().expect("two parts");
    let a = halves.pop().expect("two parts");
    let (sa, sb) = (side_summary(&a, cm)?, side_summary(&b, cm)?);
    if patterns.iter().any(|p| p.needs_entities()) && (sa.fraud_entities == 0 || sb.fraud_entities == 0) {
        return Err(Error::InsufficientData(format!(
            "dataset too small to split: halves hold {} and {} fraud entities, each needs at least one",
            sa.fraud_entities, sb.fraud_entities
        )));
    }
    let raw = raw_metrics(&a, &b, &patterns, &config.settings)?;
    let non_normalizable = raw.values.iter().filter(|(_, v)| **v == 0.0).map(|(m, _)| *m).collect();
    Ok(BaselineScores {
        schema_version: BASELINE_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        fingerprint: real.fingerprint(),
        schema_hash: real.schema().hash_hex(),
        split_seed: seed,
        split_mode: config.split_mode,
        patterns: patterns.into_iter().collect(),
        settings: config.settings.clone(),
        active_rules: raw.active_rules(),
        burst_len_w1_by_delta: raw.p2.as_ref().map(|p| p.burst_len_w1.clone()).unwrap_or_default(),
        values: raw.values,
        non_normalizable,
        halves: (sa, sb),
    })
}

/// `raw / baseline`. A zero baseline cannot be normalized.
pub fn degradation_ratio(raw: f64, baseline: f64) -> Result<f64> {
    if !raw.is_finite() || raw < 0.0 {
        return Err(Error::InvalidArgument(format!("raw metric must be finite and >= 0, got {raw}")));
    }
    if !baseline.is_finite() || baseline <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "baseline {baseline} is not positive; the metric is non-normalizable"
        )));
    }
    Ok(raw / baseline)
}

/// Mean of `ratios`, or their weighted mean with weights normalized to sum 1.
pub fn composite(ratios: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if ratios.is_empty() {
        return Err(Error::EmptySample("composite needs at least one ratio"));
    }
    match weights {
        None => Ok(ratios.iter().sum::<f64>() / ratios.len() as f64),
        Some(w) => {
            if w.len() != ratios.len() {
                return Err(Error::InvalidArgument("one weight per ratio is required".into()));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidArgument("weights must be finite and >= 0".into()));
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidArgument("weights sum to zero".into()));
            }
            Ok(ratios.iter().zip(w).map(|(r, w)| r * w).sum::<f64>() / total)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: MetricId,
    pub raw: f64,
    pub baseline: f64,
    /// `None` when the baseline is zero.
    pub ratio: Option<f64>,
    pub in_composite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub split_seed: u64,
    pub split_mode: SplitMode,
    pub real_fingerprint: Fingerprint,
    pub syn_fingerprint: Fingerprint,
    pub schema_hash: String,
    pub settings: MetricSettings,
    pub active_rules: Vec<String>,
    pub assignment: Option<AssignmentSummary>,
    pub real: SideSummary,
    pub syn: SideSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub schema_version: u32,
    pub patterns: Vec<Pattern>,
    pub metrics: Vec<MetricRow>,
    pub composite: Option<f64>,
    pub pattern_composites: BTreeMap<Pattern, f64>,
    pub weights: Option<BTreeMap<MetricId, f64>>,
    pub burst_len_w1_by_delta: BTreeMap<String, f64>,
    pub layer1: Layer1Report,
    pub details: RawMetrics,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

/// Compare `syn` with `real` and normalize by the noise floor of `real`.
pub fn evaluate(
    real: &TransactionTable,
    syn: &TransactionTable,
    baseline: &BaselineScores,
    config: &EvalConfig,
    assignment: Option<AssignmentSummary>,
) -> Result<DegradationReport> {
    let fp = real.fingerprint();
    if fp != baseline.fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: baseline.fingerprint.to_string(),
            actual: fp.to_string(),
        });
    }
    if config.settings != baseline.settings {
        return Err(Error::Incompatible(
            "metric settings (class mode, burst deltas, rules, clique limit, fan-out scale) differ from the baseline's".into(),
        ));
    }
    let patterns = match &config.patterns {
        Some(_) => config.resolve_patterns(real)?,
        None => baseline.patterns.iter().copied().collect(),
    };
    if let Some(p) = patterns.iter().find(|p| !baseline.patterns.contains(p)) {
        return Err(Error::Incompatible(format!("the baseline was computed without pattern {p}")));
    }
    if patterns.iter().any(|p| p.needs_entities()) && syn.entity_column().is_none() {
        return Err(Error::MissingEntityColumn);
    }
    let cm = config.settings.class_mode;

    let (layer1, raw) = rayon::join(|| layer1_report(real, syn), || raw_metrics(real, syn, &patterns, &config.settings));
    let (layer1, raw) = (layer1?, raw?);

    let mut warnings = Vec::new();
    if layer1.fraud_rate.flagged {
        warnings.push(format!(
            "fraud rate differs: real {:.4}, synthetic {:.4}; check the generator's class balance before reading behavioral ratios",
            layer1.fraud_rate.real, layer1.fraud_rate.synthetic
        ));
    }
    let mut rows = Vec::new();
    for (&m, &value) in &raw.values {
        let b = baseline.values[&m];
        let ratio = degradation_ratio(value, b).ok();
        if ratio.is_none() {
            warnings.push(format!("{}: noise floor is zero, metric is non-normalizable and excluded", m.id()));
        }
        let weighted_out = config.weights.as_ref().is_some_and(|w| w.get(&m).copied().unwrap_or(0.0) == 0.0);
        rows.push(MetricRow {
            metric: m,
            raw: value,
            baseline: b,
            ratio,
            in_composite: ratio.is_some() && (!m.is_graph_gap() || config.include_graph_gaps) && !weighted_out,
        });
    }
    let composite_of = |rows: &[&MetricRow]| -> Option<f64> {
        let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
        let weights: Option<Vec<f64>> = config
            .weights
            .as_ref()
            .map(|w| rows.iter().map(|r| w.get(&r.metric).copied().unwrap_or(0.0)).collect());
        composite(&ratios, weights.as_deref()).ok()
    };
    let included: Vec<&MetricRow> = rows.iter().filter(|r| r.in_composite).collect();
    let total = composite_of(&included);
    if total.is_none() {
        warnings.push("no normalizable sub-metric: composite is undefined".into());
    }
    let pattern_composites = patterns
        .iter()
        .filter_map(|&p| {
            let sub: Vec<&MetricRow> = included.iter().copied().filter(|r| r.metric.pattern() == p).collect();
            composite_of(&sub).map(|c| (p, c))
        })
        .collect();

    Ok(DegradationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        patterns: patterns.iter().copied().collect(),
        metrics: rows,
        composite: total,
        pattern_composites,
        weights: config.weights.clone(),
        burst_len_w1_by_delta: raw.p2.as_ref().map(|p| p.burst_len_w1.clone()).unwrap_or_default(),
        layer1,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            split_seed: baseline.split_seed,
            split_mode: baseline.split_mode,
            real_fingerprint: fp,
            syn_fingerprint: syn.fingerprint(),
            schema_hash: real.schema().hash_hex(),
            settings: config.settings.clone(),
            active_rules: raw.active_rules(),
            assignment,
            real: side_summary(real, cm)?,
            syn: side_summary(syn, cm)?,
        },
        details: raw,
        warnings,
    })
}

impl DegradationReport {
    pub fn metric(&self, m: MetricId) -> Option<&MetricRow> {
        self.metrics.iter().find(|r| r.metric == m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        check_version(&v, REPORT_SCHEMA_VERSION, "report")?;
        Ok(serde_json::from_value(v)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_json()?)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let included: Vec<&MetricRow> = self.metrics.iter().filter(|r| r.in_composite).collect();
        // one-row summary, one column per included sub-metric
        let mut head = format!("{:<12}", "");
        let mut line = format!("{:<12}", "DR");
        for r in &included {
            let _ = write!(head, "{:>13}", r.metric.label());
            let _ = write!(line, "{:>13.1}", r.ratio.unwrap_or(f64::NAN));
        }
        let _ = write!(head, "{:>13}", "Composite");
        match self.composite {
            Some(c) => {
                let _ = write!(line, "{c:>13.1}");
            }
            None => {
                let _ = write!(line, "{:>13}", "n/a");
            }
        }
        let _ = writeln!(out, "{head}\n{line}\n");

        let _ = writeln!(out, "{:<24} {:>14} {:>14} {:>10}", "metric", "raw", "noise floor", "DR");
        for r in &self.metrics {
            let ratio = r.ratio.map_or("n/a".to_string(), |x| format!("{x:.2}"));
            let mark = if r.in_composite { "" } else { "  (not in composite)" };
            let _ = writeln!(
                out,
                "{:<24} {:>14} {:>14} {:>10}{mark}",
                r.metric.id(),
                fmt_value(r.raw),
                fmt_value(r.baseline),
                ratio
            );
        }
        for (p, c) in &self.pattern_composites {
            let _ = writeln!(out, "{p} composite: {c:.2}");
        }
        let l1 = &self.layer1;
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        let _ = writeln!(
            out,
            "\nlayer 1: mean JS {} (categorical {}), corr |Δ| {} over {} columns, fraud rate real {:.4} / syn {:.4}",
            opt(l1.mean_js_all),
            opt(l1.mean_js_categorical),
            opt(l1.corr_delta),
            l1.corr_columns,
            l1.fraud_rate.real,
            l1.fraud_rate.synthetic
        );
        if !self.provenance.active_rules.is_empty() {
            let _ = writeln!(out, "active velocity rules: {}", self.provenance.active_rules.join(", "));
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{generate_ground_truth, GroundTruthConfig};
    use crate::ingest::{CategoricalColumn, Column, SchemaConfig};
    use indexmap::IndexMap;
    use proptest::prelude::*;

    #[test]
    fn ratio_examples() {
        assert_eq!(degradation_ratio(0.5, 0.5).unwrap(), 1.0);
        // ratio × baseline, inverted
        assert!((degradation_ratio(0.2211, 0.0110).unwrap() - 20.1).abs() < 1e-9);
        assert!((degradation_ratio(287_457.0, 9_581.9).unwrap() - 30.0).abs() < 5e-3);
        assert!(degradation_ratio(1.0, 0.0).is_err());
        assert!(degradation_ratio(-1.0, 1.0).is_err());
    }

    #[test]
    fn composite_examples() {
        assert!((composite(&[30.0, 40.5, 35.5, 32.2, 22.9], None).unwrap() - 32.22).abs() < 1e-9);
        assert!((composite(&[25.9, 5.9, 38.0, 31.5, 20.6], None).unwrap() - 24.38).abs() < 1e-9);
        assert_eq!(composite(&[7.5], None).unwrap(), 7.5);
        assert!(composite(&[], None).is_err());
        assert_eq!(composite(&[1.0, 3.0], Some(&[3.0, 1.0])).unwrap(), 1.5);
        assert!(composite(&[1.0], Some(&[0.0])).is_err());
    }

    proptest! {
        #[test]
        fn composite_is_bounded_and_order_free(mut r in prop::collection::vec(0.0f64..100.0, 1..12), seed in any::<u64>()) {
            let c = composite(&r, None).unwrap();
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(c >= lo - 1e-9 && c <= hi + 1e-9);
            r.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!((composite(&r, None).unwrap() - c).abs() < 1e-9);
        }
    }

    #[test]
    fn patterns_parse() {
        let p = parse_patterns("p1, P3").unwrap();
        assert_eq!(p.into_iter().collect::<Vec<_>>(), vec![Pattern::P1, Pattern::P3]);
        assert!(parse_patterns("p5").is_err());
        assert!(parse_patterns("").is_err());
    }

    fn small_gt(seed: u64) -> TransactionTable {
        generate_ground_truth(&GroundTruthConfig { n_entities: 400, ..GroundTruthConfig::default() }, seed).unwrap()
    }

    #[test]
    fn split_parts_partition_entities() {
        let t = small_gt(1);
        let parts = split_parts(&t, 9, 3, SplitMode::Entity, ClassMode::Strict).unwrap();
        assert_eq!(parts.iter().map(TransactionTable::n_rows).sum::<usize>(), t.n_rows());
        let labels = |p: &TransactionTable| -> BTreeSet<String> {
            let e = p.entity_column().unwrap();
            (0..p.n_rows()).map(|r| e.get(r).unwrap().to_string()).collect()
        };
        let (a, b, c) = (labels(&parts[0]), labels(&parts[1]), labels(&parts[2]));
        assert!(a.is_disjoint(&b) && b.is_disjoint(&c) && a.is_disjoint(&c));
        let again = split_parts(&t, 9, 3, SplitMode::Entity, ClassMode::Strict).unwrap();
        assert_eq!(parts, again);
    }

    #[test]
    fn noise_floor_is_positive_and_deterministic() {
        let t = small_gt(2);
        let cfg = EvalConfig::default();
        let a = noise_floor(&t, 42, &cfg).unwrap();
        let b = noise_floor(&t, 42, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.patterns, Pattern::ALL.to_vec());
        for (m, v) in &a.values {
            assert!(v.is_finite() && *v > 0.0, "{} = {v}", m.id());
        }
        assert_eq!(a.active_rules.len(), 8);
        let parsed = BaselineScores::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(parsed, a);
    }

    #[test]
    fn too_small_to_split() {
        let mut cols = IndexMap::new();
        cols.insert("ts".to_string(), Column::Numeric(vec![0.0, 5.0, 9.0]));
        cols.insert("cls".to_string(), Column::Numeric(vec![1.0, 1.0, 0.0]));
        cols.insert(
            "e".to_string(),
            Column::Categorical(CategoricalColumn::from_values(&[Some("a"), Some("a"), Some("b")])),
        );
        let t = TransactionTable::from_columns(SchemaConfig::new("ts", "cls").with_entity("e"), cols).unwrap();
        assert!(matches!(noise_floor(&t, 1, &EvalConfig::default()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn evaluate_checks_inputs() {
        let t = small_gt(3);
        let cfg = EvalConfig::default();
        let base = noise_floor(&t, 42, &cfg).unwrap();
        let other = small_gt(4);
        assert!(matches!(evaluate(&other, &t, &base, &cfg, None), Err(Error::FingerprintMismatch { .. })));
        let no_entity = t.without_entity_role();
        assert!(matches!(evaluate(&t, &no_entity, &base, &cfg, None), Err(Error::MissingEntityColumn)));
        let mut deltas = cfg.clone();
        deltas.settings.burst_deltas = vec![60.0];
        assert!(matches!(evaluate(&t, &other, &base, &deltas, None), Err(Error::Incompatible(_))));

        let mut no_attrs = t.schema().clone();
        no_attrs.attribute_cols.clear();
        let cols: IndexMap<String, Column> = t.columns().map(|(k, c)| (k.to_string(), c.clone())).collect();
        let plain = TransactionTable::from_columns(no_attrs, cols).unwrap();
        let p3 = EvalConfig { patterns: Some([Pattern::P3].into()), ..EvalConfig::default() };
        assert!(matches!(noise_floor(&plain, 1, &p3), Err(Error::Incompatible(_))));
    }

    #[test]
    fn report_round_trips_and_self_ratio() {
        let t = small_gt(5);
        let cfg = EvalConfig::default();
        let base = noise_floor(&t, 42, &cfg).unwrap();
        let syn = small_gt(6);
        let r = evaluate(&t, &syn, &base, &cfg, None).unwrap();
        let back = DegradationReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), r.to_json().unwrap());
        for row in &r.metrics {
            if let Some(ratio) = row.ratio {
                assert_eq!(ratio, row.raw / row.baseline);
            }
        }
        // graph gaps are reported but not averaged in by default
        assert!(!r.metric(MetricId::P3CcGap).unwrap().in_composite);
        let included: Vec<f64> = r.metrics.iter().filter(|m| m.in_composite).filter_map(|m| m.ratio).collect();
        assert_eq!(r.composite.unwrap(), composite(&included, None).unwrap());
        assert!(r.render_text().contains("Composite"));
    }

    #[test]
    fn zero_baseline_is_excluded() {
        let t = small_gt(7);
        let cfg = EvalConfig::default();
        let mut base = noise_floor(&t, 42, &cfg).unwrap();
        base.values.insert(MetricId::P1AutocorrGap, 0.0);
        let r = evaluate(&t, &small_gt(8), &base, &cfg, None).unwrap();
        let row = r.metric(MetricId::P1AutocorrGap).unwrap();
        assert!(row.ratio.is_none() && !row.in_composite);
        assert!(r.warnings.iter().any(|w| w.contains("non-normalizable")));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let t = small_gt(9);
        let base = noise_floor(&t, 1, &EvalConfig::default()).unwrap();
        let text = base.to_json().unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(matches!(BaselineScores::from_json(&text), Err(Error::Incompatible(_))));
    }

    fn scaled(t: &TransactionTable, c: f64) -> TransactionTable {
        let ts = t.schema().timestamp_col.clone();
        let cols: IndexMap<String, Column> = t
            .columns()
            .map(|(k, col)| {
                let col = match col {
                    Column::Numeric(v) if k == ts => Column::Numeric(v.iter().map(|x| x * c).collect()),
                    other => other.clone(),
                };
                (k.to_string(), col)
            })
            .collect();
        TransactionTable::from_columns(t.schema().clone(), cols).unwrap()
    }

    #[test]
    fn ratios_are_invariant_to_time_scale() {
        let mut real = small_gt(10);
        let mut syn = small_gt(11);
        // account ages are in days and would not scale with the timestamps
        for t in [&mut real, &mut syn] {
            let mut s = t.schema().clone();
            s.account_age_col = Some(crate::ingest::FIRST_SEEN.into());
            let cols: IndexMap<String, Column> = t.columns().map(|(k, c)| (k.to_string(), c.clone())).collect();
            *t = TransactionTable::from_columns(s, cols).unwrap();
        }
        let ratios = |c: f64| -> BTreeMap<MetricId, f64> {
            let mut cfg = EvalConfig::default();
            cfg.settings.burst_deltas = DEFAULT_BURST_DELTAS.iter().map(|d| d * c).collect();
            for r in &mut cfg.settings.ruleset {
                r.window *= c;
            }
            let (r, s) = (scaled(&real, c), scaled(&syn, c));
            let base = noise_floor(&r, 42, &cfg).unwrap();
            let rep = evaluate(&r, &s, &base, &cfg, None).unwrap();
            rep.metrics.iter().map(|m| (m.metric, m.ratio.unwrap())).collect()
        };
        let one = ratios(1.0);
        for c in [0.25, 4.0, 8.0] {
            for (m, v) in ratios(c) {
                assert!((v - one[&m]).abs() <= 1e-9 * one[&m].max(1.0), "{} at scale {c}: {v} vs {}", m.id(), one[&m]);
            }
        }
    }
}
