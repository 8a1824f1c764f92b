//! Pseudo-entity assignment for synthetic rows from the real entity-size
//! distribution.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CategoricalColumn, EntitySequence, TransactionTable};

pub const DEFAULT_ASSIGN_SEED: u64 = 42;
pub const DEFAULT_ENTITY_COLUMN: &str = "entity_id";

/// Per-class multiset of entity sizes, keyed by class label (0 or 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySizeDistribution {
    sizes: BTreeMap<u8, Vec<usize>>,
}

impl EntitySizeDistribution {
    pub fn from_sizes(sizes: BTreeMap<u8, Vec<usize>>) -> Result<Self> {
        let mut sizes = sizes;
        sizes.retain(|_, v| !v.is_empty());
        if sizes.is_empty() {
            return Err(Error::EmptySample("entity-size distribution"));
        }
        if sizes.values().flatten().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("entity sizes must be >= 1".into()));
        }
        for v in sizes.values_mut() {
            v.sort_unstable();
        }
        Ok(EntitySizeDistribution { sizes })
    }

    /// Sorted sizes of one class.
    pub fn class_sizes(&self, class: u8) -> Option<&[usize]> {
        self.sizes.get(&class).map(Vec::as_slice)
    }

    pub fn classes(&self) -> impl Iterator<Item = u8> + '_ {
        self.sizes.keys().copied()
    }

    pub fn median(&self, class: u8) -> Option<f64> {
        let s = self.class_sizes(class)?;
        let n = s.len();
        Some(if n % 2 == 1 {
            s[n / 2] as f64
        } else {
            (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
        })
    }

    /// Median and maximum over all classes pooled.
    pub fn pooled_median_max(&self) -> (f64, usize) {
        let mut all: Vec<usize> = self.sizes.values().flatten().copied().collect();
        all.sort_unstable();
        let n = all.len();
        let med = if n % 2 == 1 {
            all[n / 2] as f64
        } else {
            (all[n / 2 - 1] + all[n / 2]) as f64 / 2.0
        };
        (med, all[n - 1])
    }
}

pub fn size_distribution(seqs: &[EntitySequence]) -> Result<EntitySizeDistribution> {
    let mut sizes: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for s in seqs {
        sizes.entry(s.class.label()).or_default().push(s.len());
    }
    EntitySizeDistribution::from_sizes(sizes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignMode {
    /// Each group is a run of consecutive rows in timestamp order.
    #[default]
    Consecutive,
    /// As `Consecutive`, then the row-to-label mapping is shuffled within class.
    Permuted,
}

impl std::str::FromStr for AssignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consecutive" => Ok(AssignMode::Consecutive),
            "permuted" => Ok(AssignMode::Permuted),
            other => Err(Error::Config(format!("unknown assignment mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for AssignMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AssignMode::Consecutive => "consecutive",
            AssignMode::Permuted => "permuted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSummary {
    pub seed: u64,
    pub mode: AssignMode,
    pub column: String,
    /// Number of groups created per class label.
    pub groups: BTreeMap<u8, usize>,
}

fn class_rng(seed: u64, class: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(class));
    rng
}

/// Group sizes for `n_rows` rows: i.i.d. draws from `sizes`, the last one
/// truncated to what is left.
fn draw_groups(sizes: &[usize], n_rows: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut groups = Vec::new();
    let mut left = n_rows;
    while left > 0 {
        let s = sizes[rng.gen_range(0..sizes.len())];
        groups.push(s.min(left));
        left -= s.min(left);
    }
    groups
}

/// Raw size draws the assignment of `n_rows` rows of `class` consumes.
#[cfg(test)]
pub(crate) fn replay_draws(dist: &EntitySizeDistribution, class: u8, n_rows: usize, seed: u64) -> Vec<usize> {
    let sizes = dist.class_sizes(class).expect("class present");
    let mut rng = class_rng(seed, class);
    let mut out = Vec::new();
    let mut left = n_rows;
    while left > 0 {
        let s = sizes[rng.gen_range(0..sizes.len())];
        out.push(s);
        left -= s.min(left);
    }
    out
}

/// Label every synthetic row with a pseudo-entity `syn_<c>_<k>` and bind
/// the new column to the entity role.
pub fn assign_entities(
    syn: &TransactionTable,
    dist: &EntitySizeDistribution,
    seed: u64,
    mode: AssignMode,
    column: &str,
) -> Result<(TransactionTable, AssignmentSummary)> {
    let ts = syn.timestamps();
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for row in 0..syn.n_rows() {
        by_class.entry(u8::from(syn.is_fraud(row))).or_default().push(row);
    }
    let mut labels: Vec<Option<String>> = vec![None; syn.n_rows()];
    let mut groups_per_class = BTreeMap::new();
    for (class, mut rows) in by_class {
        let sizes = dist.class_sizes(class).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "synthetic data has class {class} rows but the real data has no class-{class} entities"
            ))
        })?;
        rows.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
        let mut rng = class_rng(seed, class);
        let groups = draw_groups(sizes, rows.len(), &mut rng);
        let mut class_labels: Vec<String> = Vec::with_capacity(rows.len());
        for (k, &g) in groups.iter().enumerate() {
            class_labels.extend(std::iter::repeat_n(format!("syn_{class}_{k}"), g));
        }
        if mode == AssignMode::Permuted {
            class_labels.shuffle(&mut rng);
        }
        for (row, label) in rows.into_iter().zip(class_labels) {
            labels[row] = Some(label);
        }
        groups_per_class.insert(class, groups.len());
    }
    let col = CategoricalColumn::from_values(&labels);
    let table = syn.with_entity_column(column, col)?;
    Ok((
        table,
        AssignmentSummary {
            seed,
            mode,
            column: column.to_string(),
            groups: groups_per_class,
        },
    ))
}
