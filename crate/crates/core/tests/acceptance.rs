//! Acceptance suite. One line per criterion; `harness = false` so the lines
//! show up in plain `cargo test` output.
//!
//! A criterion is either asserted (a FAIL makes the process exit non-zero)
//! or reported only. Reported-only lines are readings that cannot hold for
//! any correct implementation; README.md explains each.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use txfidelity::entity::{assign_entities, size_distribution, AssignMode};
use txfidelity::graph::{build_bipartite, clustering_coefficient, triangle_count, ProjectionGraph};
use txfidelity::groundtruth::{generate_ground_truth_rows, ground_truth_schema};
use txfidelity::ingest::{
    build_entity_sequences, load_table, CategoricalColumn, ClassMode, Column, EntityClass,
    EntitySequence, SchemaConfig, TransactionTable, FIRST_SEEN,
};
use txfidelity::oracle::{
    fanout_dispersion_check, fit_marginals, generate_rowindep, verify_prop1, verify_prop2,
    SpacingSource,
};
use txfidelity::scoring::{
    composite, evaluate, noise_floor, split_row_indices, EvalConfig, MetricId, Pattern, SplitMode,
};
use txfidelity::stats::wasserstein1_values;
use txfidelity::temporal::{mean_fraud_autocorr, segment_bursts};
use txfidelity::velocity::{canonical_ruleset, evaluate_rule, Feature, RuleContext, VelocityRule};

// tolerances and sizes
const COMPOSITE_TOL: f64 = 0.005;
const PROP2_TOL: f64 = 0.01;
const PROP2_ENTITIES: usize = 100_000;
const PROP1_TRIALS: usize = 10_000;
const SELF_ROWS: usize = 50_000;
const SELF_REPS: u64 = 20;
const SELF_BAND: (f64, f64) = (0.3, 3.0);
const NEG_MIN_DR: f64 = 10.0;
const NEG_MIN_RHO: f64 = 0.3;
const KERNEL_INSTANCES: usize = 1_000;
const KERNEL_TOL: f64 = 1e-9;
const TABLE6_REL_TOL: f64 = 0.10;
const RUNTIME_LIMIT: Duration = Duration::from_secs(60);

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: &'static str,
    title: &'static str,
    status: Status,
    asserted: bool,
    detail: String,
}

impl Line {
    fn new(id: &'static str, title: &'static str, pass: bool, detail: String) -> Self {
        Line {
            id,
            title,
            status: if pass { Status::Pass } else { Status::Fail },
            asserted: true,
            detail,
        }
    }

    fn reported(mut self) -> Self {
        self.asserted = false;
        self
    }

    fn print(&self) {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail if self.asserted => "FAIL",
            Status::Fail => "FAIL (reported, not asserted)",
            Status::Skip => "SKIP",
        };
        println!("[{tag}] criterion {} {}: {}", self.id, self.title, self.detail);
    }
}

fn main() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let suites: [fn() -> Vec<Line>; 8] = [
        c1_composite,
        c2_spacing,
        c3_fanout,
        c4_self_consistency,
        c5_negative_control,
        c6_kernels,
        c7_table6,
        c8_determinism,
    ];
    for suite in suites {
        for line in suite() {
            line.print();
            lines.push(line);
        }
    }
    let failed: Vec<&str> = lines
        .iter()
        .filter(|l| l.asserted && l.status == Status::Fail)
        .map(|l| l.id)
        .collect();
    println!(
        "acceptance: {} lines, {} pass, {} asserted failures, {} reported-only failures, {} skipped ({:.1?})",
        lines.len(),
        lines.iter().filter(|l| l.status == Status::Pass).count(),
        failed.len(),
        lines.iter().filter(|l| !l.asserted && l.status == Status::Fail).count(),
        lines.iter().filter(|l| l.status == Status::Skip).count(),
        start.elapsed()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}

// 1 ------------------------------------------------------------------------

fn c1_composite() -> Vec<Line> {
    let cases = [
        ([30.0, 40.5, 35.5, 32.2, 22.9], 32.22),
        ([25.9, 5.9, 38.0, 31.5, 20.6], 24.38),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (ratios, want) in cases {
        let got = composite(&ratios, None).expect("composite");
        ok &= (got - want).abs() <= COMPOSITE_TOL;
        parts.push(format!("{got:.4} vs {want}"));
    }
    vec![Line::new("1", "composite arithmetic", ok, format!("{} (tol {COMPOSITE_TOL})", parts.join(", ")))]
}

// 2 ------------------------------------------------------------------------

fn c2_spacing() -> Vec<Line> {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for n_u in [4usize, 10] {
        let check = verify_prop2(n_u, &SpacingSource::Uniform, 2024, PROP2_ENTITIES).expect("prop2");
        let pooled = check.item("pooled_lag1_exact").expect("pooled item").observed;
        let mean = check.item("mean_entity_lag1").expect("mean item").observed;
        let want = -1.0 / n_u as f64;
        ok &= (pooled - want).abs() <= PROP2_TOL && check.pass;
        parts.push(format!(
            "n_u={n_u}: pooled {pooled:.4} vs {want:.4}, per-entity mean {mean:.4} <= 0"
        ));
    }
    vec![Line::new(
        "2",
        "uniform spacing lag-1 correlation = -1/n_u",
        ok,
        format!("{} (tol {PROP2_TOL}, {PROP2_ENTITIES} entities, {:.1?})", parts.join("; "), t.elapsed()),
    )]
}

// 3 ------------------------------------------------------------------------

fn c3_fanout() -> Vec<Line> {
    let t = Instant::now();
    let grids: Vec<Vec<usize>> = vec![
        vec![1, 1],
        vec![1, 2, 5, 10],
        vec![3; 20],
        (1..=50).collect(),
        vec![4, 4, 4, 4, 14_932],
    ];
    let mut cells = 0;
    let mut passed = 0;
    let mut worst = String::new();
    for (gi, sizes) in grids.iter().enumerate() {
        for (pi, p) in [0.01, 0.1, 0.5].into_iter().enumerate() {
            let check = verify_prop1(p, sizes, 100 + (gi * 3 + pi) as u64, PROP1_TRIALS).expect("prop1");
            cells += 1;
            if check.pass {
                passed += 1;
            } else if worst.is_empty() {
                worst = check.render();
            }
        }
    }
    vec![Line::new(
        "3",
        "fan-out mean/variance = Poisson-Binomial, var <= mean",
        passed == cells,
        format!(
            "{passed}/{cells} cells within 3 SE with var <= mean ({PROP1_TRIALS} trials, p in {{0.01, 0.1, 0.5}}, {:.1?}){}",
            t.elapsed(),
            if worst.is_empty() { String::new() } else { format!("\n{worst}") }
        ),
    )]
}

// 4 ------------------------------------------------------------------------

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn in_band(x: f64) -> bool {
    (SELF_BAND.0..=SELF_BAND.1).contains(&x)
}

fn c4_self_consistency() -> Vec<Line> {
    let t = Instant::now();
    let data = generate_ground_truth_rows(SELF_ROWS, 7).expect("ground truth");
    let config = EvalConfig::default();
    let mut ratios: BTreeMap<MetricId, Vec<f64>> = BTreeMap::new();
    for rep in 0..SELF_REPS {
        let parts = split_row_indices(&data, 1000 + rep, 3, SplitMode::Entity, ClassMode::AnyFraud).expect("thirds");
        let mut ref_rows: Vec<usize> = parts[0].iter().chain(&parts[1]).copied().collect();
        ref_rows.sort_unstable();
        let real = data.select_rows(&ref_rows);
        let syn = data.select_rows(&parts[2]);
        let base = noise_floor(&real, rep, &config).expect("noise floor");
        let report = evaluate(&real, &syn, &base, &config, None).expect("evaluate");
        for row in &report.metrics {
            ratios.entry(row.metric).or_default().push(row.ratio.unwrap_or(f64::NAN));
        }
    }
    let elapsed = t.elapsed();

    let describe = |ms: &[MetricId]| -> String {
        ms.iter()
            .map(|m| {
                let v = &ratios[m];
                let outside = v.iter().filter(|x| !in_band(**x)).count();
                format!("{} median {:.2} ({outside}/{} outside)", m.id(), median(v), v.len())
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    let intensive = [
        MetricId::P1IetdW1,
        MetricId::P1AutocorrGap,
        MetricId::P2ActiveLifetimeW1,
        MetricId::P2BurstLenW1,
        MetricId::P3CcGap,
        MetricId::P4TriggerGap,
    ];
    let extensive = [MetricId::P3FanoutW1, MetricId::P3TriangleLogGap];
    let all: Vec<MetricId> = ratios.keys().copied().collect();

    let median_ok = intensive.iter().all(|m| in_band(median(&ratios[m])));
    let strict_ok = all.iter().all(|m| ratios[m].iter().all(|x| in_band(*x)));
    let extensive_ok = extensive.iter().all(|m| in_band(median(&ratios[m])));
    let rows = data.n_rows();
    vec![
        Line::new(
            "4a",
            "self-consistency, median DR over 20 repetitions in [0.3, 3]",
            median_ok,
            format!("{rows} rows; {}", describe(&intensive)),
        ),
        Line::new(
            "4b",
            "self-consistency, every repetition of every sub-metric in [0.3, 3]",
            strict_ok,
            format!(
                "gap-metric DR is a ratio of two independent |noise| draws; {}",
                describe(&[MetricId::P1AutocorrGap, MetricId::P1IetdW1, MetricId::P2BurstLenW1])
            ),
        )
        .reported(),
        Line::new(
            "4c",
            "self-consistency, size-extensive graph sub-metrics",
            extensive_ok,
            format!(
                "2/3 reference vs 1/3 synthetic while the noise floor compares equal halves; {}",
                describe(&extensive)
            ),
        )
        .reported(),
        Line::new(
            "4d",
            "self-consistency runtime",
            elapsed < RUNTIME_LIMIT,
            format!("{SELF_REPS} repetitions in {elapsed:.1?} (limit {RUNTIME_LIMIT:?})"),
        ),
    ]
}

// 5 ------------------------------------------------------------------------

fn c5_negative_control() -> Vec<Line> {
    let t = Instant::now();
    let data = generate_ground_truth_rows(SELF_ROWS, 7).expect("ground truth");
    let seqs = build_entity_sequences(&data, ClassMode::AnyFraud).expect("sequences");
    let (rho, _) = mean_fraud_autocorr(&seqs).expect("fraud entities");
    let graph = build_bipartite(&data, &data.schema().attribute_cols).expect("graph");
    let fanouts = graph.fanouts();
    let max_fanout = fanouts.iter().copied().max().unwrap_or(0);
    let overdispersed = !fanout_dispersion_check(&fanouts).expect("dispersion").pass;
    let fixture_ok = rho >= NEG_MIN_RHO && overdispersed;

    let config = EvalConfig::default();
    let base = noise_floor(&data, 42, &config).expect("noise floor");
    let model = fit_marginals(&data).expect("marginals");
    let dist = size_distribution(&build_entity_sequences(&data, ClassMode::SplitByClass).expect("sequences"))
        .expect("size distribution");
    let mut lines = vec![Line::new(
        "5a",
        "ground-truth fixture is bursty and heavy-tailed",
        fixture_ok,
        format!("fraud lag-1 autocorrelation {rho:.3} (>= {NEG_MIN_RHO}), max fan-out {max_fanout}, fan-out variance > mean: {overdispersed}"),
    )];
    for (id, mode) in [("5b", AssignMode::Consecutive), ("5c", AssignMode::Permuted)] {
        let syn = generate_rowindep(&model, data.n_rows(), 9).expect("oracle rows");
        let (syn, summary) = assign_entities(&syn, &dist, 42, mode, "card").expect("assign");
        let report = evaluate(&data, &syn, &base, &config, Some(summary)).expect("evaluate");
        let ac = report.metric(MetricId::P1AutocorrGap).and_then(|r| r.ratio).unwrap_or(f64::NAN);
        let fo = report.metric(MetricId::P3FanoutW1).and_then(|r| r.ratio).unwrap_or(f64::NAN);
        let pair = 0.5 * (ac + fo);
        lines.push(Line::new(
            id,
            if id == "5b" {
                "negative control, consecutive assignment"
            } else {
                "negative control, permuted assignment"
            },
            ac >= NEG_MIN_DR && fo >= NEG_MIN_DR,
            format!(
                "autocorr gap DR {ac:.1}, fan-out DR {fo:.1}, their mean {pair:.1}, full composite {:.1} (each >= {NEG_MIN_DR})",
                report.composite.unwrap_or(f64::NAN)
            ),
        ));
    }
    let elapsed = t.elapsed();
    lines.push(Line::new(
        "5d",
        "negative control runtime",
        elapsed < RUNTIME_LIMIT,
        format!("{elapsed:.1?} (limit {RUNTIME_LIMIT:?})"),
    ));
    lines
}

// 6 ------------------------------------------------------------------------

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= KERNEL_TOL * a.abs().max(b.abs()).max(1.0)
}

/// W1 of two empirical distributions via an equal-size matching: every
/// value of `a` is repeated |b| times and every value of `b` |a| times.
fn brute_w1(a: &[f64], b: &[f64]) -> f64 {
    let mut x: Vec<f64> = a.iter().flat_map(|&v| std::iter::repeat(v).take(b.len())).collect();
    let mut y: Vec<f64> = b.iter().flat_map(|&v| std::iter::repeat(v).take(a.len())).collect();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64
}

fn random_graph(rng: &mut ChaCha8Rng) -> (usize, Vec<Vec<bool>>, ProjectionGraph) {
    let n = rng.gen_range(1..=8);
    let density: f64 = rng.gen();
    let mut adj = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < density {
                adj[u][v] = true;
                adj[v][u] = true;
                edges.push((u as u32, v as u32));
            }
        }
    }
    (n, adj, ProjectionGraph::from_edges(n, &edges).expect("graph"))
}

fn brute_triangles(n: usize, adj: &[Vec<bool>]) -> u64 {
    let mut t = 0;
    for u in 0..n {
        for v in u + 1..n {
            for w in v + 1..n {
                if adj[u][v] && adj[v][w] && adj[u][w] {
                    t += 1;
                }
            }
        }
    }
    t
}

/// Closed triples over all triples, counted by centre vertex.
fn brute_transitivity(n: usize, adj: &[Vec<bool>]) -> f64 {
    let (mut triples, mut closed) = (0u64, 0u64);
    for c in 0..n {
        for v in 0..n {
            for w in v + 1..n {
                if v != c && w != c && adj[c][v] && adj[c][w] {
                    triples += 1;
                    closed += u64::from(adj[v][w]);
                }
            }
        }
    }
    if triples == 0 {
        0.0
    } else {
        closed as f64 / triples as f64
    }
}

fn seq_of(ts: &[f64]) -> EntitySequence {
    let mut rows: Vec<usize> = (0..ts.len()).collect();
    rows.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    EntitySequence {
        entity_id: 0,
        class: EntityClass::Fraud,
        timestamps: rows.iter().map(|&r| ts[r]).collect(),
        row_indices: rows,
    }
}

/// Burst lengths from the pairwise definition: i and j share a burst iff
/// every gap between them is <= delta.
fn brute_bursts(ts: &[f64], delta: f64) -> Vec<usize> {
    let n = ts.len();
    let together = |i: usize, j: usize| (i.min(j)..i.max(j)).all(|k| ts[k + 1] - ts[k] <= delta);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let len = (i..n).filter(|&j| together(i, j)).count();
        out.push(len);
        i += len;
    }
    out
}

struct RuleRows {
    ts: Vec<f64>,
    amt: Vec<f64>,
    merchant: Vec<u32>,
    pm: Vec<u32>,
    status: Vec<u32>,
    ip: Vec<u32>,
}

fn rule_table(r: &RuleRows) -> TransactionTable {
    let n = r.ts.len();
    let cat = |codes: &[u32], levels: Vec<String>| {
        Column::Categorical(CategoricalColumn::from_codes(codes.to_vec(), levels).expect("codes"))
    };
    let names = |k: u32| (0..k).map(|i| format!("v{i}")).collect::<Vec<_>>();
    let mut cols: IndexMap<String, Column> = IndexMap::new();
    cols.insert("ts".into(), Column::Numeric(r.ts.clone()));
    cols.insert("cls".into(), Column::Numeric(vec![1.0; n]));
    cols.insert("amt".into(), Column::Numeric(r.amt.clone()));
    cols.insert("merchant".into(), cat(&r.merchant, names(8)));
    cols.insert("pm".into(), cat(&r.pm, names(4)));
    cols.insert("status".into(), cat(&r.status, vec!["ok".into(), "failed".into()]));
    cols.insert("ip".into(), cat(&r.ip, names(6)));
    let mut s = SchemaConfig::new("ts", "cls");
    s.amount_col = Some("amt".into());
    s.merchant_col = Some("merchant".into());
    s.payment_method_col = Some("pm".into());
    s.account_age_col = Some(FIRST_SEEN.into());
    s.status_col = Some("status".into());
    s.ip_col = Some("ip".into());
    TransactionTable::from_columns(s, cols).expect("table")
}

fn brute_rule(r: &RuleRows, rule: &VelocityRule) -> bool {
    let ts = &r.ts;
    let n = ts.len();
    let first = ts.iter().copied().fold(f64::INFINITY, f64::min);
    (0..n).any(|i| {
        let win: Vec<usize> = (0..n).filter(|&j| ts[j] > ts[i] - rule.window && ts[j] <= ts[i]).collect();
        let distinct = |codes: &[u32]| {
            let mut v: Vec<u32> = win.iter().map(|&j| codes[j]).collect();
            v.sort_unstable();
            v.dedup();
            v.len() as f64
        };
        let value = match rule.feature {
            Feature::TxnCount => win.len() as f64,
            Feature::FailedCount => win.iter().filter(|&&j| r.status[j] == 1).count() as f64,
            Feature::AmountSum => win.iter().map(|&j| r.amt[j]).sum(),
            Feature::DistinctMerchants => distinct(&r.merchant),
            Feature::DistinctPaymentMethods => distinct(&r.pm),
            Feature::DistinctIps => distinct(&r.ip),
            Feature::AmountSpikeRatio => {
                let mut v: Vec<f64> = win.iter().map(|&j| r.amt[j]).collect();
                v.sort_by(f64::total_cmp);
                let k = v.len();
                if k < 2 {
                    return false;
                }
                let med = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
                if med <= 0.0 {
                    return false;
                }
                v[k - 1] / med
            }
            Feature::TxnCountYoungAccount => {
                let young = |j: usize| ts[j] - first < rule.window;
                if !young(i) {
                    return false;
                }
                (0..n).filter(|&j| ts[j] <= ts[i] && young(j)).count() as f64
            }
        };
        value > rule.threshold
    })
}

fn kernel_rules() -> Vec<VelocityRule> {
    let r = |id, f, th, w| VelocityRule::new(id, f, th, w).expect("rule");
    let mut rules = canonical_ruleset();
    rules.extend([
        r("c2", Feature::TxnCount, 2.0, 900.0),
        r("s300", Feature::AmountSum, 300.0, 1800.0),
        r("d2", Feature::DistinctMerchants, 2.0, 3600.0),
        r("sp2", Feature::AmountSpikeRatio, 1.5, 3600.0),
        r("y1", Feature::TxnCountYoungAccount, 2.0, 1500.0),
        r("f1", Feature::FailedCount, 1.0, 1200.0),
        r("i2", Feature::DistinctIps, 2.0, 2400.0),
        r("p1", Feature::DistinctPaymentMethods, 1.0, 600.0),
    ]);
    rules
}

fn c6_kernels() -> Vec<Line> {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches: BTreeMap<&str, usize> = BTreeMap::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut bump = |name: &'static str, ok: bool, counts: &mut BTreeMap<&str, usize>| {
        *counts.entry(name).or_default() += 1;
        if !ok {
            *mismatches.entry(name).or_default() += 1;
        }
    };

    for _ in 0..KERNEL_INSTANCES {
        // integer grid values so ties are common
        let na = rng.gen_range(1..=12);
        let nb = rng.gen_range(1..=12);
        let a: Vec<f64> = (0..na).map(|_| f64::from(rng.gen_range(0..20u32))).collect();
        let b: Vec<f64> = (0..nb).map(|_| f64::from(rng.gen_range(0..20u32)) * 0.5).collect();
        let got = wasserstein1_values(&a, &b).expect("w1");
        bump("wasserstein1", close(got, brute_w1(&a, &b)), &mut counts);

        let (n, adj, g) = random_graph(&mut rng);
        bump("triangle_count", triangle_count(&g) == brute_triangles(n, &adj), &mut counts);
        bump("clustering_coefficient", close(clustering_coefficient(&g), brute_transitivity(n, &adj)), &mut counts);

        let k = rng.gen_range(1..=12);
        let ts: Vec<f64> = (0..k).map(|_| f64::from(rng.gen_range(0..40u32)) * 15.0).collect();
        let delta = f64::from(rng.gen_range(1..=6u32)) * 15.0;
        let seq = seq_of(&ts);
        let got: Vec<usize> = segment_bursts(&seq, delta).expect("bursts").iter().map(|b| b.length).collect();
        bump("segment_bursts", got == brute_bursts(&seq.timestamps, delta), &mut counts);

        let k = rng.gen_range(1..=12);
        let mut tt = 0.0;
        let mut rows = RuleRows { ts: vec![], amt: vec![], merchant: vec![], pm: vec![], status: vec![], ip: vec![] };
        for _ in 0..k {
            tt += f64::from(rng.gen_range(0..12u32)) * 300.0;
            rows.ts.push(tt);
            rows.amt.push(f64::from(rng.gen_range(0..200u32)));
            rows.merchant.push(rng.gen_range(0..8));
            rows.pm.push(rng.gen_range(0..4));
            rows.status.push(rng.gen_range(0..2));
            rows.ip.push(rng.gen_range(0..6));
        }
        let table = rule_table(&rows);
        let ctx = RuleContext::new(&table).expect("context");
        let seq = seq_of(&rows.ts);
        let ok = kernel_rules()
            .iter()
            .all(|rule| evaluate_rule(&seq, &ctx, rule).expect("rule") == brute_rule(&rows, rule));
        bump("evaluate_rule", ok, &mut counts);
    }

    counts
        .iter()
        .map(|(name, n)| {
            let bad = mismatches.get(name).copied().unwrap_or(0);
            Line::new(
                "6",
                "kernel equals brute force",
                bad == 0 && *n >= KERNEL_INSTANCES,
                format!("{name}: {} / {n} instances agree ({:.1?} total)", n - bad, t.elapsed()),
            )
        })
        .collect()
}

// 7 ------------------------------------------------------------------------

/// Dataset-gated. Set TXFID_IEEE_CIS to the IEEE-CIS train_transaction.csv.
fn c7_table6() -> Vec<Line> {
    let title = "IEEE-CIS noise floor within 10% of published baselines";
    let Ok(path) = std::env::var("TXFID_IEEE_CIS") else {
        return vec![Line {
            id: "7",
            title,
            status: Status::Skip,
            asserted: false,
            detail: "set TXFID_IEEE_CIS=/path/to/train_transaction.csv to run".into(),
        }];
    };
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ieee_cis.schema");
    let schema = SchemaConfig::load(&schema_path).expect("ieee schema");
    let full = load_table(&path, &schema).expect("load IEEE-CIS");
    // temporal 80/20 split at the 80th percentile of TransactionDT
    let mut sorted = full.timestamps().to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[((sorted.len() as f64) * 0.8) as usize - 1];
    let train_rows: Vec<usize> = (0..full.n_rows()).filter(|&r| full.timestamps()[r] <= cut).collect();
    let train = full.select_rows(&train_rows);
    let config = EvalConfig {
        patterns: Some([Pattern::P1, Pattern::P2, Pattern::P4].into_iter().collect()),
        ..EvalConfig::default()
    };
    let base = noise_floor(&train, 42, &config).expect("noise floor");
    let published = [
        ("p1_ietd_w1", base.values[&MetricId::P1IetdW1], 9_581.9),
        ("p1_autocorr_gap", base.values[&MetricId::P1AutocorrGap], 0.0027),
        ("p2_active_lifetime_w1", base.values[&MetricId::P2ActiveLifetimeW1], 195_109.9),
        ("p2_burst_len_w1@300s", base.burst_len_w1_by_delta.get("300").copied().unwrap_or(f64::NAN), 0.0408),
        ("p4_trigger_gap", base.values[&MetricId::P4TriggerGap], 0.0110),
    ];
    published
        .iter()
        .map(|(name, got, want)| {
            let rel = (got - want).abs() / want;
            Line::new(
                "7",
                title,
                rel <= TABLE6_REL_TOL,
                format!("{name}: {got:.4} vs {want} ({:.1}% off, {} train rows)", rel * 100.0, train.n_rows()),
            )
        })
        .collect()
}

// 8 ------------------------------------------------------------------------

fn run_in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("pool")
        .install(f)
}

fn txfid(args: &[&str], seed_env: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_txfid"));
    cmd.args(args).env_remove("TXFID_SEED");
    if let Some(s) = seed_env {
        cmd.env("TXFID_SEED", s);
    }
    cmd.output().expect("run txfid")
}

fn c8_determinism() -> Vec<Line> {
    let t = Instant::now();
    let data = generate_ground_truth_rows(20_000, 3).expect("ground truth");
    let config = EvalConfig::default();
    let model = fit_marginals(&data).expect("marginals");
    let dist = size_distribution(&build_entity_sequences(&data, ClassMode::SplitByClass).expect("sequences"))
        .expect("sizes");

    let outputs: Vec<(String, String)> = [1usize, 2, 8, 8]
        .into_iter()
        .map(|threads| {
            run_in_pool(threads, || {
                let base = noise_floor(&data, 42, &config).expect("noise floor");
                let syn = generate_rowindep(&model, data.n_rows(), 5).expect("oracle");
                let (syn, s) = assign_entities(&syn, &dist, 42, AssignMode::Permuted, "card").expect("assign");
                let report = evaluate(&data, &syn, &base, &config, Some(s)).expect("evaluate");
                (base.to_json().expect("json"), report.to_json().expect("json"))
            })
        })
        .collect();
    let lib_ok = outputs.windows(2).all(|w| w[0] == w[1]);

    // CLI: same files from --threads 1 and --threads 4, seed from flag or env
    let dir = tempfile::tempdir().expect("tempdir");
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let (real, schema, syn) = (p("real.csv"), p("real.schema"), p("syn.csv"));
    data.write_csv(&real, &[]).expect("write real");
    std::fs::write(&schema, ground_truth_schema().to_config_string()).expect("schema");
    let mut cli_ok = txfid(&["oracle", "gen", "--fit", &real, "--schema", &schema, "-o", &syn], None)
        .status
        .success();
    let mut files = Vec::new();
    for (run, threads, env) in [(0, "1", None), (1, "4", None), (2, "3", Some("42"))] {
        let base = p(&format!("base{run}.json"));
        let rep = p(&format!("rep{run}.json"));
        let mut seed_args = vec!["--threads", threads];
        if env.is_none() {
            seed_args.extend(["--seed", "42"]);
        }
        let mut a = seed_args.clone();
        a.extend(["baseline", "--real", &real, "--schema", &schema, "-o", &base]);
        cli_ok &= txfid(&a, env).status.success();
        let mut a = seed_args.clone();
        a.extend(["evaluate", "--real", &real, "--syn", &syn, "--schema", &schema]);
        a.extend(["--baseline", &base, "--assign", "-o", &rep]);
        cli_ok &= txfid(&a, env).status.success();
        files.push((
            std::fs::read(&base).unwrap_or_default(),
            std::fs::read(&rep).unwrap_or_default(),
        ));
    }
    cli_ok &= files.windows(2).all(|w| w[0] == w[1]) && !files[0].0.is_empty();

    vec![
        Line::new(
            "8a",
            "byte-identical baseline and report across runs and thread counts (library)",
            lib_ok,
            format!("threads 1, 2, 8, 8; baseline {} bytes, report {} bytes", outputs[0].0.len(), outputs[0].1.len()),
        ),
        Line::new(
            "8b",
            "byte-identical baseline and report files across runs and thread counts (CLI)",
            cli_ok,
            format!("--threads 1 / 4 / 3 (seed via TXFID_SEED) ({:.1?})", t.elapsed()),
        ),
    ]
}
