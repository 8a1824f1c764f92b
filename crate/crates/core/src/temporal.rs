//! Inter-event time and burst metrics (P1, P2).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EntityClass, EntitySequence};
use crate::stats::{lag1_autocorr, wasserstein1_values};

/// Default burst gap thresholds in seconds.
pub const DEFAULT_BURST_DELTAS: [f64; 3] = [60.0, 300.0, 1800.0];

#[derive(Debug, Clone, PartialEq)]
pub struct IetSequence {
    pub entity_id: u32,
    pub class: EntityClass,
    pub deltas: Vec<f64>,
}

/// Consecutive gaps; empty for entities with fewer than two transactions.
pub fn iet_sequence(seq: &EntitySequence) -> IetSequence {
    IetSequence {
        entity_id: seq.entity_id,
        class: seq.class,
        deltas: seq.timestamps.windows(2).map(|w| w[1] - w[0]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Burst {
    pub entity_id: u32,
    pub start_index: usize,
    pub length: usize,
}

/// Split a sequence into maximal runs whose consecutive gaps are all `<= delta`.
pub fn segment_bursts(seq: &EntitySequence, delta: f64) -> Result<Vec<Burst>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("burst delta must be > 0, got {delta}")));
    }
    Ok(burst_lengths(&seq.timestamps, delta)
        .scan(0usize, |start, len| {
            let b = Burst {
                entity_id: seq.entity_id,
                start_index: *start,
                length: len,
            };
            *start += len;
            Some(b)
        })
        .collect())
}

fn burst_lengths(ts: &[f64], delta: f64) -> impl Iterator<Item = usize> + '_ {
    let mut start = 0usize;
    let n = ts.len();
    std::iter::from_fn(move || {
        if start >= n {
            return None;
        }
        let mut end = start + 1;
        while end < n && ts[end] - ts[end - 1] <= delta {
            end += 1;
        }
        let len = end - start;
        start = end;
        Some(len)
    })
}

/// Time between first and last transaction; 0 for singletons.
pub fn active_lifetime(seq: &EntitySequence) -> f64 {
    match (seq.timestamps.first(), seq.timestamps.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Result {
    /// W1 between pooled fraud IETs, seconds.
    pub ietd_w1_fraud: f64,
    /// |mean ρ_real − mean ρ_syn| over fraud entities with a defined ρ.
    pub autocorr_gap: f64,
    pub mean_autocorr_real: f64,
    pub mean_autocorr_syn: f64,
    /// Fraud entities with at least one IET, per side.
    pub ietd_entities: (usize, usize),
    /// Fraud entities with a defined autocorrelation, per side.
    pub autocorr_entities: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P2Result {
    pub active_lifetime_w1: f64,
    /// Keyed by delta in whole seconds.
    pub burst_len_w1: BTreeMap<String, f64>,
    /// Unweighted mean of `burst_len_w1` over the deltas.
    pub burst_len_w1_mean: f64,
    pub fraud_entities: (usize, usize),
}

fn fraud(seqs: &[EntitySequence]) -> impl Iterator<Item = &EntitySequence> {
    seqs.iter().filter(|s| s.is_fraud())
}

/// Pooled IETs of all fraud entities.
pub fn pooled_fraud_iets(seqs: &[EntitySequence]) -> (Vec<f64>, usize) {
    let mut pooled = Vec::new();
    let mut n = 0;
    for s in fraud(seqs).filter(|s| s.len() >= 2) {
        pooled.extend(iet_sequence(s).deltas);
        n += 1;
    }
    (pooled, n)
}

/// Mean lag-1 IET autocorrelation over fraud entities where it is defined.
pub fn mean_fraud_autocorr(seqs: &[EntitySequence]) -> Option<(f64, usize)> {
    let rhos: Vec<f64> = fraud(seqs)
        .filter_map(|s| lag1_autocorr(&iet_sequence(s).deltas))
        .collect();
    (!rhos.is_empty()).then(|| (rhos.iter().sum::<f64>() / rhos.len() as f64, rhos.len()))
}

pub fn ietd_w1_fraud(real: &[EntitySequence], syn: &[EntitySequence]) -> Result<(f64, (usize, usize))> {
    let (r, nr) = pooled_fraud_iets(real);
    let (s, ns) = pooled_fraud_iets(syn);
    if r.is_empty() || s.is_empty() {
        return Err(Error::InsufficientData(
            "IET distribution needs a fraud entity with at least 2 transactions on each side".into(),
        ));
    }
    Ok((wasserstein1_values(&r, &s)?, (nr, ns)))
}

pub fn autocorr_gap(real: &[EntitySequence], syn: &[EntitySequence]) -> Result<(f64, f64, f64, (usize, usize))> {
    let need = || {
        Error::InsufficientData(
            "autocorrelation needs a fraud entity with a defined lag-1 correlation on each side".into(),
        )
    };
    let (mr, nr) = mean_fraud_autocorr(real).ok_or_else(need)?;
    let (ms, ns) = mean_fraud_autocorr(syn).ok_or_else(need)?;
    Ok(((mr - ms).abs(), mr, ms, (nr, ns)))
}

pub fn p1_metrics(real: &[EntitySequence], syn: &[EntitySequence]) -> Result<P1Result> {
    let (ietd, ietd_entities) = ietd_w1_fraud(real, syn)?;
    let (gap, mr, ms, autocorr_entities) = autocorr_gap(real, syn)?;
    Ok(P1Result {
        ietd_w1_fraud: ietd,
        autocorr_gap: gap,
        mean_autocorr_real: mr,
        mean_autocorr_syn: ms,
        ietd_entities,
        autocorr_entities,
    })
}

/// Key used for a delta in result maps.
pub fn delta_key(delta: f64) -> String {
    if delta.fract() == 0.0 {
        format!("{}", delta as i64)
    } else {
        format!("{delta}")
    }
}

fn pooled_burst_lengths(seqs: &[EntitySequence], delta: f64) -> Vec<f64> {
    fraud(seqs)
        .flat_map(|s| burst_lengths(&s.timestamps, delta).map(|l| l as f64))
        .collect()
}

pub fn p2_metrics(real: &[EntitySequence], syn: &[EntitySequence], deltas: &[f64]) -> Result<P2Result> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("at least one burst delta is required".into()));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::InvalidArgument(format!("burst delta must be > 0, got {d}")));
    }
    let lifetimes = |seqs: &[EntitySequence]| -> Vec<f64> { fraud(seqs).map(active_lifetime).collect() };
    let (lr, ls) = (lifetimes(real), lifetimes(syn));
    if lr.is_empty() || ls.is_empty() {
        return Err(Error::InsufficientData("burst metrics need fraud entities on each side".into()));
    }
    let active_lifetime_w1 = wasserstein1_values(&lr, &ls)?;
    let mut burst_len_w1 = BTreeMap::new();
    let mut sum = 0.0;
    for &d in deltas {
        let w = wasserstein1_values(&pooled_burst_lengths(real, d), &pooled_burst_lengths(syn, d))?;
        sum += w;
        burst_len_w1.insert(delta_key(d), w);
    }
    Ok(P2Result {
        active_lifetime_w1,
        burst_len_w1,
        burst_len_w1_mean: sum / deltas.len() as f64,
        fraud_entities: (lr.len(), ls.len()),
    })
}
