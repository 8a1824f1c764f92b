//! Bursty ground-truth transaction generator with persistent entities.
//!
//! Entities alternate between a burst regime and a dormant regime (a
//! two-state Markov chain over inter-event times), so consecutive gaps are
//! positively autocorrelated. Devices and IPs are shared through a
//! Pitman-Yor process, which gives power-law fan-out.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AgeUnit, CategoricalColumn, Column, SchemaConfig, TransactionTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthConfig {
    pub n_entities: usize,
    pub fraud_fraction: f64,
    /// Length of the observation period in days.
    pub span_days: f64,
    /// Mean inter-event time inside a burst, seconds.
    pub burst_gap: f64,
    /// Mean inter-event time between bursts, seconds.
    pub dormant_gap: f64,
    /// Probability of staying in the current regime after each event.
    pub regime_persistence: f64,
    /// Pitman-Yor discount for device/IP sharing (0 = Chinese restaurant).
    pub sharing_discount: f64,
    /// Pitman-Yor concentration for non-fraud entities; fraud uses a tenth.
    pub sharing_concentration: f64,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        GroundTruthConfig {
            n_entities: 2000,
            fraud_fraction: 0.2,
            span_days: 180.0,
            burst_gap: 90.0,
            dormant_gap: 2.0 * 86_400.0,
            regime_persistence: 0.85,
            sharing_discount: 0.5,
            sharing_concentration: 20.0,
        }
    }
}

pub const TS: &str = "ts";
pub const ENTITY: &str = "card";
pub const CLASS: &str = "isFraud";
pub const AMOUNT: &str = "amount";
pub const MERCHANT: &str = "merchant";
pub const PAYMENT: &str = "payment_method";
pub const AGE: &str = "account_age_days";
pub const STATUS: &str = "status";
pub const DEVICE: &str = "device";
pub const IP: &str = "ip";

/// Schema binding every role of the generated table.
pub fn ground_truth_schema() -> SchemaConfig {
    let mut s = SchemaConfig::new(TS, CLASS).with_entity(ENTITY);
    s.amount_col = Some(AMOUNT.into());
    s.merchant_col = Some(MERCHANT.into());
    s.payment_method_col = Some(PAYMENT.into());
    s.account_age_col = Some(AGE.into());
    s.account_age_unit = AgeUnit::Days;
    s.status_col = Some(STATUS.into());
    s.ip_col = Some(IP.into());
    s.attribute_cols = vec![DEVICE.into(), IP.into()];
    s
}

struct PitmanYor {
    discount: f64,
    concentration: f64,
    counts: Vec<usize>,
    total: usize,
}

impl PitmanYor {
    fn new(discount: f64, concentration: f64) -> Self {
        PitmanYor { discount, concentration, counts: Vec::new(), total: 0 }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> usize {
        let k = self.counts.len() as f64;
        let p_new = (self.concentration + self.discount * k) / (self.concentration + self.total as f64);
        let table = if self.counts.is_empty() || rng.gen::<f64>() < p_new {
            self.counts.push(0);
            self.counts.len() - 1
        } else {
            let mut u = rng.gen::<f64>() * (self.total as f64 - self.discount * k);
            let mut pick = self.counts.len() - 1;
            for (i, &c) in self.counts.iter().enumerate() {
                u -= c as f64 - self.discount;
                if u < 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        self.counts[table] += 1;
        self.total += 1;
        table
    }
}

// log-normal spread of gaps within one regime
const REGIME_SPREAD: f64 = 0.35;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Pareto-tailed entity size, at least `min`.
fn entity_size(rng: &mut ChaCha8Rng, min: usize, cap: usize) -> usize {
    let u = 1.0 - rng.gen::<f64>();
    ((min as f64 * u.powf(-1.0 / 1.6)) as usize).clamp(min, cap)
}

const PAYMENT_METHODS: [&str; 4] = ["visa", "mastercard", "amex", "discover"];
const N_MERCHANTS: usize = 60;

#[derive(Default)]
struct Rows {
    ts: Vec<f64>,
    entity: Vec<String>,
    class: Vec<f64>,
    amount: Vec<f64>,
    merchant: Vec<String>,
    payment: Vec<String>,
    age: Vec<f64>,
    status: Vec<String>,
    device: Vec<String>,
    ip: Vec<String>,
}

pub fn generate_ground_truth(config: &GroundTruthConfig, seed: u64) -> Result<TransactionTable> {
    if config.n_entities == 0 {
        return Err(Error::InvalidArgument("ground truth needs at least one entity".into()));
    }
    if !(0.0..=1.0).contains(&config.fraud_fraction) || !(0.0..1.0).contains(&config.regime_persistence) {
        return Err(Error::InvalidArgument("fractions must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = config.span_days * 86_400.0;
    let mut devices = [
        PitmanYor::new(config.sharing_discount, config.sharing_concentration),
        PitmanYor::new(config.sharing_discount, config.sharing_concentration / 10.0),
    ];
    let mut ips = [
        PitmanYor::new(config.sharing_discount, config.sharing_concentration),
        PitmanYor::new(config.sharing_discount, config.sharing_concentration / 10.0),
    ];
    let mut rows = Rows::default();

    for e in 0..config.n_entities {
        let fraud = rng.gen::<f64>() < config.fraud_fraction;
        let c = usize::from(fraud);
        let n = if fraud { entity_size(&mut rng, 15, 400) } else { entity_size(&mut rng, 2, 400) };
        let own_devices: Vec<String> = (0..1 + usize::from(rng.gen::<f64>() < 0.2))
            .map(|_| format!("d{c}_{}", devices[c].draw(&mut rng)))
            .collect();
        let own_ips: Vec<String> = (0..1 + usize::from(rng.gen::<f64>() < 0.3))
            .map(|_| format!("ip{c}_{}", ips[c].draw(&mut rng)))
            .collect();
        let methods: Vec<&str> = (0..rng.gen_range(1..=3)).map(|_| PAYMENT_METHODS[rng.gen_range(0..4)]).collect();
        let age0 = if fraud { rng.gen::<f64>() * 20.0 } else { rng.gen::<f64>() * 1500.0 };
        let (mu, sigma, fail) = if fraud { (4.6, 1.1, 0.15) } else { (3.6, 0.9, 0.03) };

        let mut t = rng.gen::<f64>() * span * 0.8;
        let t0 = t;
        let mut burst = rng.gen::<f64>() < 0.5;
        for i in 0..n {
            if i > 0 {
                if rng.gen::<f64>() >= config.regime_persistence {
                    burst = !burst;
                }
                let mean = if burst { config.burst_gap } else { config.dormant_gap };
                t += mean * (REGIME_SPREAD * normal(&mut rng) - REGIME_SPREAD * REGIME_SPREAD / 2.0).exp();
            }
            rows.ts.push(t.round());
            rows.entity.push(format!("c{e}"));
            rows.class.push(c as f64);
            rows.amount.push(((mu + sigma * normal(&mut rng)).exp() * 100.0).round() / 100.0);
            // Zipf-like merchant popularity
            let m = ((N_MERCHANTS as f64).powf(rng.gen::<f64>()) as usize).min(N_MERCHANTS - 1);
            rows.merchant.push(format!("m{m}"));
            rows.payment.push(methods[rng.gen_range(0..methods.len())].to_string());
            rows.age.push(age0 + (t - t0) / 86_400.0);
            rows.status.push(if rng.gen::<f64>() < fail { "declined" } else { "ok" }.to_string());
            rows.device.push(own_devices[rng.gen_range(0..own_devices.len())].clone());
            rows.ip.push(own_ips[rng.gen_range(0..own_ips.len())].clone());
        }
    }

    // global chronological order, ties by generation order
    let mut order: Vec<usize> = (0..rows.ts.len()).collect();
    order.sort_by(|&a, &b| rows.ts[a].total_cmp(&rows.ts[b]));
    let num = |v: &[f64]| Column::Numeric(order.iter().map(|&i| v[i]).collect());
    let cat = |v: &[String]| {
        Column::Categorical(CategoricalColumn::from_values(
            &order.iter().map(|&i| Some(v[i].as_str())).collect::<Vec<_>>(),
        ))
    };
    let mut cols = IndexMap::new();
    cols.insert(TS.to_string(), num(&rows.ts));
    cols.insert(ENTITY.to_string(), cat(&rows.entity));
    cols.insert(CLASS.to_string(), num(&rows.class));
    cols.insert(AMOUNT.to_string(), num(&rows.amount));
    cols.insert(MERCHANT.to_string(), cat(&rows.merchant));
    cols.insert(PAYMENT.to_string(), cat(&rows.payment));
    cols.insert(AGE.to_string(), num(&rows.age));
    cols.insert(STATUS.to_string(), cat(&rows.status));
    cols.insert(DEVICE.to_string(), cat(&rows.device));
    cols.insert(IP.to_string(), cat(&rows.ip));
    TransactionTable::from_columns(ground_truth_schema(), cols)
}

/// Ground truth with roughly `n_rows` rows (whole entities, so the count is
/// approximate).
pub fn generate_ground_truth_rows(n_rows: usize, seed: u64) -> Result<TransactionTable> {
    // mean entity size under the default config is about 11.5 rows
    let config = GroundTruthConfig {
        n_entities: (n_rows * 2 / 23).max(1),
        ..GroundTruthConfig::default()
    };
    generate_ground_truth(&config, seed)
}
