//! Shared-infrastructure graph metrics (P3).
//!
//! Attribute nodes are qualified by their source column, so a device and an
//! IP with the same string value are distinct nodes.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{entity_units, ClassMode, EntitySequence, TransactionTable, MISSING_CODE};
use crate::stats::{wasserstein1_values, EmpiricalSample};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeNode {
    pub column: String,
    pub value: String,
}

/// Entity–attribute incidence structure; `members[a]` holds the sorted,
/// deduplicated entity indices linked to attribute `a`.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    entity_labels: Vec<String>,
    attributes: Vec<AttributeNode>,
    members: Vec<Vec<u32>>,
}

impl BipartiteGraph {
    /// Build directly from an edge list of `(entity, attribute)` indices.
    pub fn from_edges(n_entities: usize, n_attributes: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut members = vec![Vec::new(); n_attributes];
        for &(u, a) in edges {
            if u as usize >= n_entities || a as usize >= n_attributes {
                return Err(Error::InvalidArgument("edge references a missing node".into()));
            }
            members[a as usize].push(u);
        }
        for m in &mut members {
            m.sort_unstable();
            m.dedup();
        }
        Ok(BipartiteGraph {
            entity_labels: (0..n_entities).map(|i| i.to_string()).collect(),
            attributes: (0..n_attributes)
                .map(|i| AttributeNode {
                    column: "attr".into(),
                    value: i.to_string(),
                })
                .collect(),
            members,
        })
    }

    pub fn n_entities(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    pub fn attributes(&self) -> &[AttributeNode] {
        &self.attributes
    }

    /// Entities linked to attribute `a`.
    pub fn members(&self, a: usize) -> &[u32] {
        &self.members[a]
    }

    pub fn fanouts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Write `entity,attribute` rows; attributes are rendered `column=value`.
    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["entity", "attribute"]).map_err(csv_err)?;
        for (a, node) in self.attributes.iter().enumerate() {
            let label = format!("{}={}", node.column, node.value);
            for &u in &self.members[a] {
                w.write_record([self.entity_labels[u as usize].as_str(), label.as_str()])
                    .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Bipartite graph over the table's entities (or rows, without an entity
/// column).
pub fn build_bipartite(table: &TransactionTable, attribute_cols: &[String]) -> Result<BipartiteGraph> {
    let units = entity_units(table, ClassMode::AnyFraud)?;
    build_bipartite_for(table, &units, attribute_cols)
}

/// Bipartite graph restricted to the given entity units.
pub fn build_bipartite_for(
    table: &TransactionTable,
    units: &[EntitySequence],
    attribute_cols: &[String],
) -> Result<BipartiteGraph> {
    if attribute_cols.is_empty() {
        return Err(Error::Incompatible(
            "graph metrics need at least one attribute column (attribute_cols)".into(),
        ));
    }
    let cols = attribute_cols
        .iter()
        .map(|c| table.categorical(c))
        .collect::<Result<Vec<_>>>()?;

    let entity_col = table.entity_column();
    let entity_labels: Vec<String> = units
        .iter()
        .map(|u| match entity_col {
            Some(c) => c.levels()[u.entity_id as usize].clone(),
            None => format!("row{}", u.entity_id),
        })
        .collect();

    let mut index: HashMap<(usize, u32), u32> = HashMap::new();
    let mut attributes = Vec::new();
    let mut members: Vec<Vec<u32>> = Vec::new();
    for (ui, unit) in units.iter().enumerate() {
        for &row in &unit.row_indices {
            for (ci, col) in cols.iter().enumerate() {
                let code = col.codes()[row];
                if code == MISSING_CODE {
                    continue;
                }
                let a = *index.entry((ci, code)).or_insert_with(|| {
                    attributes.push(AttributeNode {
                        column: attribute_cols[ci].clone(),
                        value: col.levels()[code as usize].clone(),
                    });
                    members.push(Vec::new());
                    (members.len() - 1) as u32
                });
                members[a as usize].push(ui as u32);
            }
        }
    }
    for m in &mut members {
        m.sort_unstable();
        m.dedup();
    }
    Ok(BipartiteGraph {
        entity_labels,
        attributes,
        members,
    })
}

/// Multiset of attribute fan-outs.
pub fn fanout_distribution(g: &BipartiteGraph) -> Result<EmpiricalSample> {
    if g.n_attributes() == 0 {
        return Err(Error::EmptySample("graph has no attribute nodes"));
    }
    EmpiricalSample::new(g.fanouts().into_iter().map(|f| f as f64).collect())
}

/// Entity projection: simple undirected graph in adjacency-list form.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGraph {
    adjacency: Vec<Vec<u32>>,
    /// Attributes whose clique expansion was skipped by the limit.
    pub skipped_attributes: usize,
}

impl ProjectionGraph {
    pub fn from_edges(n_nodes: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n_nodes];
        for &(u, v) in edges {
            if u as usize >= n_nodes || v as usize >= n_nodes {
                return Err(Error::InvalidArgument("edge references a missing node".into()));
            }
            if u != v {
                adjacency[u as usize].push(v);
                adjacency[v as usize].push(u);
            }
        }
        for a in &mut adjacency {
            a.sort_unstable();
            a.dedup();
        }
        Ok(ProjectionGraph {
            adjacency,
            skipped_attributes: 0,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&(v as u32)).is_ok()
    }

    /// Number of paths of length two (connected triples).
    pub fn connected_triples(&self) -> u64 {
        self.adjacency
            .iter()
            .map(|a| {
                let d = a.len() as u64;
                d * d.saturating_sub(1) / 2
            })
            .sum()
    }
}

/// Project onto entities. Attributes with fan-out above `clique_limit` are
/// not expanded; each expanded attribute of fan-out k adds up to k(k-1)/2
/// edges before deduplication.
pub fn entity_projection(g: &BipartiteGraph, clique_limit: Option<usize>) -> ProjectionGraph {
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut skipped = 0;
    for m in &g.members {
        if clique_limit.is_some_and(|lim| m.len() > lim) {
            skipped += 1;
            continue;
        }
        for (i, &u) in m.iter().enumerate() {
            for &v in &m[i + 1..] {
                pairs.push((u, v));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let mut p = ProjectionGraph::from_edges(g.n_entities(), &pairs).expect("indices in range");
    p.skipped_attributes = skipped;
    p
}

/// Exact triangle count. Edges are oriented from lower to higher
/// (degree, id) rank so every triangle is found once from its lowest vertex.
pub fn triangle_count(g: &ProjectionGraph) -> u64 {
    let n = g.n_nodes();
    let rank = |u: usize| (g.degree(u), u);
    let out: Vec<Vec<u32>> = (0..n)
        .map(|u| {
            g.neighbors(u)
                .iter()
                .copied()
                .filter(|&v| rank(v as usize) > rank(u))
                .collect()
        })
        .collect();
    (0..n)
        .into_par_iter()
        .map_init(
            || vec![false; n],
            |mark, u| {
                let outs = &out[u];
                for &v in outs {
                    mark[v as usize] = true;
                }
                let mut t = 0u64;
                for &v in outs {
                    t += out[v as usize].iter().filter(|&&w| mark[w as usize]).count() as u64;
                }
                for &v in outs {
                    mark[v as usize] = false;
                }
                t
            },
        )
        .sum()
}

/// Global clustering coefficient (transitivity); 0 without connected triples.
pub fn clustering_coefficient(g: &ProjectionGraph) -> f64 {
    transitivity(triangle_count(g), g.connected_triples())
}

fn transitivity(triangles: u64, triples: u64) -> f64 {
    if triples == 0 {
        0.0
    } else {
        3.0 * triangles as f64 / triples as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub entities: usize,
    pub attributes: usize,
    pub projection_edges: usize,
    pub triangles: u64,
    pub clustering: f64,
    pub skipped_attributes: usize,
}

pub fn summarize(g: &BipartiteGraph, clique_limit: Option<usize>) -> GraphSummary {
    let p = entity_projection(g, clique_limit);
    let triangles = triangle_count(&p);
    GraphSummary {
        entities: g.n_entities(),
        attributes: g.n_attributes(),
        projection_edges: p.n_edges(),
        triangles,
        clustering: transitivity(triangles, p.connected_triples()),
        skipped_attributes: p.skipped_attributes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P3Result {
    /// W1 between raw fan-out counts.
    pub fanout_w1: f64,
    /// W1 between fan-outs divided by each side's entity count.
    pub fanout_w1_normalized: f64,
    pub cc_gap: f64,
    pub triangle_log_gap: f64,
    pub real: GraphSummary,
    pub syn: GraphSummary,
}

pub fn p3_metrics(real: &BipartiteGraph, syn: &BipartiteGraph, clique_limit: Option<usize>) -> Result<P3Result> {
    if real.n_attributes() == 0 || syn.n_attributes() == 0 {
        return Err(Error::InsufficientData("graph metrics need attribute nodes on both sides".into()));
    }
    let fr = fanout_distribution(real)?;
    let fs = fanout_distribution(syn)?;
    let fanout_w1 = crate::stats::wasserstein1(&fr, &fs);
    let norm = |s: &EmpiricalSample, n: usize| -> Vec<f64> {
        s.sorted().iter().map(|f| f / n.max(1) as f64).collect()
    };
    let fanout_w1_normalized =
        wasserstein1_values(&norm(&fr, real.n_entities()), &norm(&fs, syn.n_entities()))?;
    let (sr, ss) = rayon::join(|| summarize(real, clique_limit), || summarize(syn, clique_limit));
    Ok(P3Result {
        fanout_w1,
        fanout_w1_normalized,
        cc_gap: (sr.clustering - ss.clustering).abs(),
        triangle_log_gap: triangle_log_gap(sr.triangles, ss.triangles),
        real: sr,
        syn: ss,
    })
}

/// `|ln((T_real + 1) / (T_syn + 1))|`.
pub fn triangle_log_gap(real: u64, syn: u64) -> f64 {
    ((real as f64 + 1.0) / (syn as f64 + 1.0)).ln().abs()
}
